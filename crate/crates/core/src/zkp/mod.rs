//! Interactive zero-knowledge proof of knowledge of the secret cycle.
//!
//! Each round the prover relabels the graph with a fresh random permutation
//! and commits to digests of the relabeled graph and cycle. The verifier
//! flips a coin: on `0` the prover opens the relabeled graph and cycle and
//! the verifier checks the cycle; on `1` the prover opens the permutation
//! and the verifier checks it maps the public graph onto the commitment.
//! A prover without the cycle can prepare for only one of the two branches,
//! so each round halves its chance of being accepted.

mod prover;
mod transcript;

use rand::{Rng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::graph::{
    apply_permutation, encode_cycle, encode_graph, is_hamiltonian_cycle, Graph, HamiltonianCycle, Permutation,
};

pub use prover::{ChannelClosed, HonestProver, OneBranchCheater, Prover, Recorder};
pub use transcript::{Transcript, TranscriptRound};

/// SHA-256 output.
pub type Digest = [u8; 32];

/// SHA-256 over `bytes`.
pub fn digest(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

pub fn graph_digest(g: &Graph) -> Digest {
    digest(&encode_graph(g))
}

pub fn cycle_digest(c: &HamiltonianCycle) -> Digest {
    digest(&encode_cycle(c))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZkpError {
    #[error("prover lacks valid cycle")]
    InvalidWitness,
    #[error("a proof needs at least one round")]
    NoRounds,
}

/// Digests the prover sends before seeing the challenge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub graph_digest: Digest,
    pub cycle_digest: Digest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Challenge {
    /// Open the relabeled graph and cycle.
    RevealCycle,
    /// Open the permutation.
    RevealPermutation,
}

impl Challenge {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.gen::<bool>() {
            Challenge::RevealPermutation
        } else {
            Challenge::RevealCycle
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Challenge::RevealCycle),
            1 => Some(Challenge::RevealPermutation),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Challenge::RevealCycle => 0,
            Challenge::RevealPermutation => 1,
        }
    }
}

/// The prover's private state for one round. Consumed by
/// [`prover_respond`], so a single commitment can never be opened both ways.
#[derive(Debug)]
#[cfg_attr(test, derive(Clone))]
pub struct RoundSecret {
    permutation: Permutation,
    permuted_graph: Graph,
    permuted_cycle: HamiltonianCycle,
}

impl RoundSecret {
    pub fn permutation(&self) -> &Permutation {
        &self.permutation
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response {
    RevealCycle {
        permuted_graph: Graph,
        permuted_cycle: HamiltonianCycle,
    },
    RevealPermutation {
        permutation: Permutation,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
pub enum RejectReason {
    #[error("digest mismatch")]
    DigestMismatch,
    #[error("not a Hamiltonian cycle")]
    NotHamiltonianCycle,
    #[error("variant/challenge mismatch")]
    VariantMismatch,
    #[error("permutation domain mismatch")]
    PermutationDomainMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}

/// Honest first move: relabel with a uniformly random permutation and
/// commit to the relabeled graph and cycle.
pub fn prover_commit<R: Rng + ?Sized>(
    g: &Graph,
    hc: &HamiltonianCycle,
    rng: &mut R,
) -> Result<(RoundSecret, Commitment), ZkpError> {
    if !is_hamiltonian_cycle(g, hc) {
        return Err(ZkpError::InvalidWitness);
    }
    let permutation = Permutation::random(g.vertices(), rng);
    Ok(commit_with(g, hc, permutation))
}

pub(crate) fn commit_with(g: &Graph, hc: &HamiltonianCycle, permutation: Permutation) -> (RoundSecret, Commitment) {
    let (permuted_graph, permuted_cycle) =
        apply_permutation(g, hc, &permutation).expect("permutation drawn over the vertex set");
    let commitment = Commitment {
        graph_digest: graph_digest(&permuted_graph),
        cycle_digest: cycle_digest(&permuted_cycle),
    };
    let secret = RoundSecret {
        permutation,
        permuted_graph,
        permuted_cycle,
    };
    (secret, commitment)
}

pub fn prover_respond(secret: RoundSecret, c: Challenge) -> Response {
    match c {
        Challenge::RevealCycle => Response::RevealCycle {
            permuted_graph: secret.permuted_graph,
            permuted_cycle: secret.permuted_cycle,
        },
        Challenge::RevealPermutation => Response::RevealPermutation {
            permutation: secret.permutation,
        },
    }
}

/// Checks one opened round against its commitment. Total: every input gets
/// a verdict.
pub fn verifier_check(public_graph: &Graph, com: &Commitment, c: Challenge, r: &Response) -> Verdict {
    use RejectReason::*;
    match (c, r) {
        (
            Challenge::RevealCycle,
            Response::RevealCycle {
                permuted_graph,
                permuted_cycle,
            },
        ) => {
            if graph_digest(permuted_graph) != com.graph_digest || cycle_digest(permuted_cycle) != com.cycle_digest {
                Verdict::Reject(DigestMismatch)
            } else if !is_hamiltonian_cycle(permuted_graph, permuted_cycle) {
                Verdict::Reject(NotHamiltonianCycle)
            } else {
                Verdict::Accept
            }
        }
        (Challenge::RevealPermutation, Response::RevealPermutation { permutation }) => {
            match public_graph.permuted(permutation) {
                Err(_) => Verdict::Reject(PermutationDomainMismatch),
                Ok(g) if graph_digest(&g) != com.graph_digest => Verdict::Reject(DigestMismatch),
                Ok(_) => Verdict::Accept,
            }
        }
        _ => Verdict::Reject(VariantMismatch),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProofOutcome {
    Accepted {
        rounds: u32,
    },
    /// `round` is 1-based.
    Rejected {
        round: u32,
        reason: RejectReason,
    },
    /// The prover's channel closed during `round`.
    Aborted {
        round: u32,
    },
}

impl ProofOutcome {
    pub fn is_accepted(self) -> bool {
        matches!(self, ProofOutcome::Accepted { .. })
    }
}

/// Runs `rounds` sequential commit/challenge/respond/check rounds, drawing
/// independent fair challenges from `challenger`. Stops at the first round
/// that does not accept.
pub fn run_proof(
    public_graph: &Graph,
    prover: &mut dyn Prover,
    rounds: u32,
    challenger: &mut dyn RngCore,
) -> Result<ProofOutcome, ZkpError> {
    if rounds == 0 {
        return Err(ZkpError::NoRounds);
    }
    for round in 1..=rounds {
        let Ok(com) = prover.commit() else {
            return Ok(ProofOutcome::Aborted { round });
        };
        let c = Challenge::random(challenger);
        let Ok(response) = prover.respond(c) else {
            return Ok(ProofOutcome::Aborted { round });
        };
        if let Verdict::Reject(reason) = verifier_check(public_graph, &com, c, &response) {
            return Ok(ProofOutcome::Rejected { round, reason });
        }
    }
    Ok(ProofOutcome::Accepted { rounds })
}
