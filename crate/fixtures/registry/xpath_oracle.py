#!/usr/bin/env python3
"""Extract the indexed fields of a registry record with ElementTree paths.

Independent of the Rust parser; its output is frozen next to the record
and compared against parse_trial_document in the corpus tests.

    python3 fixtures/registry/xpath_oracle.py NCT01234567.xml > NCT01234567.expected.json
"""

import json
import re
import sys
import xml.etree.ElementTree as ET


def norm(s):
    return re.sub(r"\s+", " ", s or "").strip()


def text(root, path):
    el = root.find(path)
    return norm("".join(el.itertext())) if el is not None else ""


def main(path):
    root = ET.parse(path).getroot()
    out = {
        "docno": text(root, "./id_info/nct_id"),
        "title": text(root, "./brief_title") or text(root, "./official_title"),
        "conditions": [norm(c.text) for c in root.findall("./condition") if norm(c.text)],
        "brief_summary": text(root, "./brief_summary/textblock"),
        "detailed_description": text(root, "./detailed_description/textblock"),
        "eligibility_text": text(root, "./eligibility/criteria/textblock"),
        "gender": text(root, "./eligibility/gender") or None,
        "min_age": text(root, "./eligibility/minimum_age") or None,
        "max_age": text(root, "./eligibility/maximum_age") or None,
    }
    json.dump(out, sys.stdout, indent=2, ensure_ascii=False)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
