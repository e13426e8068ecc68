//! Multi-agent visual geo-localization.
//!
//! A weighted collaboration network over vision-language agents drives a
//! three-stage protocol — answer-agent election, random-walk reviewer
//! selection with review/summarize, and bounded free discussion with a
//! minority-majority conclusion — while a small attention network learns
//! per-image agent elections and link weights from simulated discussion
//! rounds.

pub mod agents;
pub mod consensus;
pub mod discussion;
pub mod geo;
pub mod graph;
pub mod harness;
pub mod learn;
pub mod seeding;
