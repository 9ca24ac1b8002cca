pub mod characterize;
pub mod cli;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod energy;
pub mod limc;
pub mod magic;
