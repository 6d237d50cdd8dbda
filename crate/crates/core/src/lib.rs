pub mod baseline;
pub mod cli;
pub mod collapse;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod numerics;
pub mod pipeline;
pub mod reranker;
pub mod synth;
