pub mod agc_model;
pub mod attack_space;
pub mod config;
pub mod dae;
pub mod discretization;
pub mod error;
pub mod filter_design;
pub mod lp;
pub mod numerics;
pub mod pipeline;
pub mod report;
pub mod residual;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
