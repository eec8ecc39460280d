//! Self-organized authentication for mobile ad-hoc networks.
//!
//! Every legitimate node holds a replica of a public graph together with a
//! secret Hamiltonian cycle through it. Knowing the cycle is what makes a
//! node a member:
//!
//! - [`graph`] holds the shared graph, the secret cycle, vertex permutations
//!   and the splice rules that keep the cycle valid as members come and go.
//! - [`zkp`] is the interactive cut-and-choose proof a returning member runs
//!   to show it still knows the cycle without revealing it.
//! - [`protocol`] wires insertion, access control, proof of life, deletion
//!   and termination into a per-node state machine.
//! - [`sim`] is a deterministic discrete-event engine that drives whole
//!   networks through churn and mobility, producing traces and traffic
//!   metrics.
//!
//! ```
//! use gasman::graph::{build_initial_graph, is_hamiltonian_cycle};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let (graph, cycle) = build_initial_graph(11, 22, &mut rng).unwrap();
//! assert!(is_hamiltonian_cycle(&graph, &cycle));
//! ```

pub mod graph;
pub mod protocol;
pub mod sim;
mod time;
pub mod zkp;

pub use time::SimTime;
