//! Evidence-ranking benchmark for diagnostic reasoning, plus the data
//! factory that turns monologue records into doctor-patient dialogues.

pub mod backend;
pub mod corpus;
pub mod dialoguegen;
pub mod infotheory;
pub mod jsonl;
pub mod metrics;
pub mod prompting;
pub mod protocol;
pub mod runner;
pub mod segment;
pub mod seeding;
pub mod taskgen;
