pub mod data;
mod fsutil;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;
pub mod analysis;
pub mod cli;
