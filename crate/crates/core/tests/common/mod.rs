#![allow(dead_code)]

pub mod mock_llm;
pub mod oracle;
