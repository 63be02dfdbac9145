//! Design and validation of pipelined multi-accelerator systems that run
//! several DNN tasks under soft real-time (bounded tardiness) requirements.

pub mod analysis;
pub mod dse;
pub mod fixtures;
pub mod model;
pub mod schedulability;
pub mod sim;
