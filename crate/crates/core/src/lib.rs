//! Multi-turn table reasoning agent runtime.
//!
//! The agent reads a table through a chosen modality (serialized text, a
//! rendered image, or both), transforms it with tools, predicts the
//! metadata of the resulting table state, and replans when the prediction
//! does not hold. The [`bench`] module scores episodes for accuracy, text
//! overlap, turns, latency and throughput.

pub mod agent;
pub mod bench;
pub mod llm;
pub mod observation;
pub mod state;
pub mod table;
