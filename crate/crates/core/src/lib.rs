//! Benchmark construction and evaluation for GUI toggle-control agents.
//!
//! The crate covers the whole loop: an annotation pipeline that turns widget
//! boxes into agreed toggle records, a builder that expands those records
//! into positive/negative instruction samples, reasoning-chain synthesis for
//! training data, exact step matching and metric aggregation for static
//! predictions, and a deterministic simulated device for live agents.

pub mod action;
pub mod annotation;
pub mod builder;
pub mod domain;
pub mod jsonl;
pub mod matching;
pub mod metrics;
pub mod report;
pub mod star;
pub mod world;
