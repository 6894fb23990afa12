//! Money exchange between individuals on a graph, each attached to a bank
//! that lends coins to broke customers.
//!
//! - [`graph`]: graphs and bank partitions
//! - [`dynamics`]: the Markov chain and its Monte Carlo driver
//! - [`combinatorics`]: exact state counts and finite-size money distributions
//! - [`laplace`]: the asymmetric Laplace large-population limit
//! - [`meanfield`]: the mean-field ODE
//! - [`analysis`]: transition matrices and distribution comparisons
//! - [`io`]: CSV and JSON writers shared with the plotting scripts
//! - [`verify`]: self-checks at fixed tolerances

pub mod analysis;
pub mod combinatorics;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod laplace;
pub mod meanfield;
pub mod rng;
pub mod verify;

pub use combinatorics::{lambda_count, money_distribution_exact, money_pmf_exact, ExactInstance, ExactPMF};
pub use dynamics::{run, run_replicas, Configuration, InitMode, SimParams, SimReport};
pub use graph::{assign_banks, build_graph, BankPartition, Graph, GraphSpec, PartitionSpec};
pub use laplace::{laplace_params, laplace_pdf, LaplaceParams};
