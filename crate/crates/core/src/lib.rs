pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod mixture;
pub mod model;
pub mod special;
pub mod quad;
pub mod ladder;
pub mod spectral;
pub mod kernel;
pub mod renewal;
pub mod simulator;
pub mod cli;
