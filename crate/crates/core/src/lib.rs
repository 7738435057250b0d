pub mod classifier;
pub mod cli;
pub mod codec;
pub mod config;
pub mod distribution;
pub mod edges;
pub mod embedding;
pub mod eval;
pub mod extract;
pub mod gram;
pub mod graph;
pub mod kernel;
pub mod parsers;
pub mod synth;
