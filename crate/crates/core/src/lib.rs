//! Synthetic patient records generated from disease knowledge, and patient
//! agents whose replies are checked against an atomic-fact memory.

pub mod dialogue;
pub mod gateway;
pub mod judge;
pub mod kb;
pub mod llm_text;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod samples;
pub mod store;
