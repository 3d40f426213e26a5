pub mod dp;
pub mod gcn;
pub mod generate;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod server;
pub mod attack;
pub mod metrics;
pub mod baselines;
pub mod harness;
