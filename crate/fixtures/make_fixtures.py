#!/usr/bin/env python3
"""Regenerate the synthetic fixture collection.

Writes 100 trial records (legacy ClinicalTrials.gov XML layout), 10 patient
topics in three formats, and graded qrels. Output is fully determined by
SEED, so rerunning reproduces the committed files byte for byte.

    python3 fixtures/make_fixtures.py
"""

import json
import random
from pathlib import Path
from xml.sax.saxutils import escape

SEED = 20240611
ROOT = Path(__file__).resolve().parent

# condition, keywords, drugs, patient note
AREAS = [
    (
        "Type 2 Diabetes Mellitus",
        ["glycemic", "hba1c", "insulin", "glucose", "metabolic"],
        ["metformin", "sitagliptin", "empagliflozin", "liraglutide"],
        "A 58-year-old man presents with polyuria, polydipsia and fatigue. He has a "
        "long history of type 2 diabetes treated with metformin, and his HbA1c is 9.1%. "
        "Fasting glucose is elevated. He is obese and has mild hypertension. His father "
        "had a stroke.",
    ),
    (
        "Asthma",
        ["bronchial", "wheezing", "inhaler", "airway", "exacerbation"],
        ["budesonide", "albuterol", "montelukast", "mepolizumab"],
        "A 24-year-old woman comes to the emergency department with wheezing and shortness "
        "of breath after exercise. She uses an albuterol inhaler several times a week and "
        "has had two asthma exacerbations this year requiring oral steroids.",
    ),
    (
        "Breast Cancer",
        ["tumor", "mastectomy", "her2", "metastatic", "oncology"],
        ["tamoxifen", "trastuzumab", "letrozole", "paclitaxel"],
        "A 47-year-old woman found a painless lump in her left breast. Biopsy shows invasive "
        "ductal carcinoma, HER2 positive, with one positive axillary lymph node. She has not "
        "yet started chemotherapy.",
    ),
    (
        "Heart Failure",
        ["cardiac", "ejection", "dyspnea", "edema", "ventricular"],
        ["sacubitril", "carvedilol", "spironolactone", "furosemide"],
        "A 71-year-old man reports progressive dyspnea on exertion, orthopnea and bilateral "
        "ankle edema. Echocardiography shows a left ventricular ejection fraction of 30%. "
        "He takes furosemide and carvedilol.",
    ),
    (
        "Hypertension",
        ["blood", "pressure", "systolic", "antihypertensive", "vascular"],
        ["amlodipine", "lisinopril", "chlorthalidone", "losartan"],
        "A 52-year-old woman has had elevated blood pressure readings of 165/100 on three "
        "visits despite lifestyle changes. She reports headaches. Kidney function is normal. "
        "She is not taking any antihypertensive medication.",
    ),
    (
        "Rheumatoid Arthritis",
        ["joint", "synovitis", "autoimmune", "inflammatory", "erosion"],
        ["methotrexate", "adalimumab", "tofacitinib", "etanercept"],
        "A 39-year-old woman complains of morning stiffness lasting two hours and swelling of "
        "the small joints of both hands. Rheumatoid factor and anti-CCP antibodies are "
        "positive. She has been on methotrexate for six months with partial response.",
    ),
    (
        "Chronic Obstructive Pulmonary Disease",
        ["copd", "emphysema", "spirometry", "smoker", "bronchodilator"],
        ["tiotropium", "salmeterol", "roflumilast", "azithromycin"],
        "A 66-year-old man with a 45 pack-year smoking history has chronic cough and sputum "
        "production. Spirometry shows FEV1 of 48% predicted, consistent with COPD. He uses "
        "tiotropium daily and had one hospital admission last winter.",
    ),
    (
        "Major Depressive Disorder",
        ["depression", "mood", "psychiatric", "anhedonia", "antidepressant"],
        ["sertraline", "escitalopram", "bupropion", "esketamine"],
        "A 33-year-old man reports low mood, loss of interest, poor sleep and difficulty "
        "concentrating for the past four months. He has tried sertraline without benefit. "
        "There is no history of psychosis.",
    ),
    (
        "Parkinson Disease",
        ["tremor", "dopaminergic", "bradykinesia", "motor", "neurodegenerative"],
        ["levodopa", "pramipexole", "rasagiline", "amantadine"],
        "A 68-year-old man has a resting tremor of the right hand, slowed movements and "
        "shuffling gait that began two years ago. Symptoms improve with levodopa. He has "
        "mild constipation and reduced sense of smell.",
    ),
    (
        "Chronic Kidney Disease",
        ["renal", "egfr", "proteinuria", "dialysis", "nephropathy"],
        ["dapagliflozin", "finerenone", "losartan", "erythropoietin"],
        "A 61-year-old woman with diabetic nephropathy has an eGFR of 38 and persistent "
        "proteinuria. She is on losartan. Her hemoglobin is 10.2 and she reports fatigue. "
        "She is not on dialysis.",
    ),
]

FILLER = (
    "study participants will be randomized to receive treatment or placebo and followed "
    "for safety efficacy outcomes quality of life hospital visits adverse events laboratory "
    "measurements at baseline week twelve and month six with standard care"
).split()

PHASES = ["Phase 1", "Phase 2", "Phase 3", "Phase 4"]
DESIGNS = ["randomized", "open-label", "double-blind", "single-arm", "crossover"]


def words(rng, pool, n):
    return " ".join(rng.choice(pool) for _ in range(n))


def trial(rng, area_idx, j):
    condition, keys, drugs, _ = AREAS[area_idx]
    nct = f"NCT{(area_idx * 10 + j + 1) * 7919 % 100000000:08d}"
    drug = drugs[j % len(drugs)]
    design = rng.choice(DESIGNS)
    phase = rng.choice(PHASES)
    gender = rng.choice(["All", "All", "Female", "Male"])
    min_age = rng.choice([18, 18, 21, 40, 50])
    max_age = rng.choice([65, 75, 80, None])
    # a few records borrow a neighbouring area's vocabulary
    other = AREAS[(area_idx + 1) % len(AREAS)]
    extra = rng.choice(other[1]) if j % 4 == 3 else ""
    title = f"A {design.capitalize()} Study of {drug.capitalize()} in {condition}"
    summary = (
        f"This {phase} trial evaluates {drug} for adults with {condition.lower()}. "
        f"The primary outcome is change in {keys[j % len(keys)]} measures. "
        + words(rng, FILLER + keys, 12)
    )
    description = (
        f"Participants with {condition.lower()} will receive {drug} "
        f"{rng.choice(['once daily', 'twice daily', 'weekly'])}. "
        + words(rng, FILLER + keys + [extra] * bool(extra), 25)
    )
    inclusion = [
        f"Diagnosis of {condition.lower()}",
        f"Age {min_age} years or older",
        f"Stable {rng.choice(keys)} status for at least 3 months",
    ]
    exclusion = [
        f"Prior treatment with {drugs[(j + 1) % len(drugs)]}",
        "Pregnancy or breastfeeding",
        rng.choice(["Active malignancy", "Severe hepatic impairment", "Recent myocardial infarction"]),
    ]
    criteria = (
        "\n        Inclusion Criteria:\n\n"
        + "".join(f"          -  {c}\n\n" for c in inclusion)
        + "        Exclusion Criteria:\n\n"
        + "".join(f"          -  {c}\n\n" for c in exclusion)
        + "      "
    )
    has_description = j % 5 != 4
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        "<clinical_study>",
        "  <id_info>",
        f"    <org_study_id>FX-{area_idx:02d}-{j:02d}</org_study_id>",
        f"    <nct_id>{nct}</nct_id>",
        "  </id_info>",
        f"  <brief_title>{escape(title)}</brief_title>",
        f"  <official_title>{escape(title)} ({phase})</official_title>",
        "  <brief_summary>",
        "    <textblock>",
        f"      {escape(summary)}",
        "    </textblock>",
        "  </brief_summary>",
    ]
    if has_description:
        lines += [
            "  <detailed_description>",
            "    <textblock>",
            f"      {escape(description)}",
            "    </textblock>",
            "  </detailed_description>",
        ]
    lines += [
        f"  <phase>{phase}</phase>",
        f"  <condition>{escape(condition)}</condition>",
    ]
    if extra:
        lines.append(f"  <condition>{escape(other[0])}</condition>")
    lines += [
        "  <eligibility>",
        "    <criteria>",
        f"      <textblock>{escape(criteria)}</textblock>",
        "    </criteria>",
        f"    <gender>{gender}</gender>",
        f"    <minimum_age>{min_age} Years</minimum_age>",
        f"    <maximum_age>{'N/A' if max_age is None else f'{max_age} Years'}</maximum_age>",
        "  </eligibility>",
        "</clinical_study>",
        "",
    ]
    return nct, gender, min_age, max_age, "\n".join(lines)


PATIENT_SEX = ["Male", "Female", "Female", "Male", "Female", "Female", "Male", "Male", "Male", "Female"]
PATIENT_AGE = [58, 24, 47, 71, 52, 39, 66, 33, 68, 61]


def grade(trial_info, area_idx, topic_idx):
    _, gender, min_age, max_age = trial_info
    if area_idx != topic_idx:
        return 0
    age = PATIENT_AGE[topic_idx]
    sex = PATIENT_SEX[topic_idx]
    if gender not in ("All", sex) or age < min_age or (max_age is not None and age > max_age):
        return 1
    return 2


def main():
    rng = random.Random(SEED)
    docs_dir = ROOT / "trials"
    docs_dir.mkdir(exist_ok=True)
    infos = {}
    for a in range(len(AREAS)):
        for j in range(10):
            nct, gender, lo, hi, xml = trial(rng, a, j)
            sub = docs_dir / nct[:7]
            sub.mkdir(exist_ok=True)
            (sub / f"{nct}.xml").write_text(xml, encoding="utf-8")
            infos.setdefault(a, []).append((nct, gender, lo, hi))

    topics = [(str(i + 1), area[3]) for i, area in enumerate(AREAS)]
    xml = ["<topics task=\"fixture\">"]
    xml += [f"  <topic number=\"{tid}\">\n{escape(note)}\n  </topic>" for tid, note in topics]
    xml.append("</topics>\n")
    (ROOT / "topics.xml").write_text("\n".join(xml), encoding="utf-8")
    (ROOT / "topics.jsonl").write_text(
        "".join(json.dumps({"id": tid, "text": note}) + "\n" for tid, note in topics), encoding="utf-8"
    )
    (ROOT / "topics.tsv").write_text("".join(f"{tid}\t{note}\n" for tid, note in topics), encoding="utf-8")

    qrels = []
    for t in range(len(AREAS)):
        # same-area trials, two left unjudged
        own = infos[t]
        unjudged = set(rng.sample(range(10), 2))
        for j, info in enumerate(own):
            if j not in unjudged:
                qrels.append((t + 1, info[0], grade(info, t, t)))
        # a few off-topic trials judged not relevant
        for a in rng.sample([x for x in range(len(AREAS)) if x != t], 3):
            info = infos[a][rng.randrange(10)]
            qrels.append((t + 1, info[0], 0))
    (ROOT / "qrels.txt").write_text("".join(f"{t} 0 {d} {g}\n" for t, d, g in qrels), encoding="utf-8")


if __name__ == "__main__":
    main()
