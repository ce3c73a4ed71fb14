pub mod network;
pub mod rates;
pub mod rng;
pub mod subproblem;
pub mod spca;
pub mod oracles;
pub mod harness;
