use rand::{Rng, RngCore};
use thiserror::Error;

use super::{
    cycle_digest, graph_digest, prover_commit, prover_respond, Challenge, Commitment, Response, RoundSecret,
    Transcript, TranscriptRound, ZkpError,
};
use crate::graph::{is_hamiltonian_cycle, Graph, HamiltonianCycle, Permutation};

/// The link to the prover went away mid-proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("prover channel closed")]
pub struct ChannelClosed;

/// The prover side of [`run_proof`](super::run_proof), seen from the
/// verifier: something that commits and then answers a challenge.
pub trait Prover {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed>;
    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed>;
}

impl<P: Prover + ?Sized> Prover for &mut P {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
        (**self).commit()
    }

    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed> {
        (**self).respond(challenge)
    }
}

/// Knows the cycle and follows the protocol.
pub struct HonestProver<R> {
    graph: Graph,
    cycle: HamiltonianCycle,
    rng: R,
    pending: Option<RoundSecret>,
}

impl<R: RngCore> HonestProver<R> {
    pub fn new(graph: Graph, cycle: HamiltonianCycle, rng: R) -> Result<Self, ZkpError> {
        if !is_hamiltonian_cycle(&graph, &cycle) {
            return Err(ZkpError::InvalidWitness);
        }
        Ok(HonestProver {
            graph,
            cycle,
            rng,
            pending: None,
        })
    }
}

impl<R: RngCore> Prover for HonestProver<R> {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
        let (secret, com) =
            prover_commit(&self.graph, &self.cycle, &mut self.rng).expect("witness checked at construction");
        self.pending = Some(secret);
        Ok(com)
    }

    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed> {
        let secret = self.pending.take().ok_or(ChannelClosed)?;
        Ok(prover_respond(secret, challenge))
    }
}

enum Prepared {
    /// Committed to a stand-in graph whose cycle it knows.
    Cycle { graph: Graph, cycle: HamiltonianCycle },
    /// Committed to an honest relabeling of the public graph, with no cycle.
    Permutation { permutation: Permutation, relabeled: Graph },
}

/// A prover without the cycle. Each round it guesses the challenge and
/// prepares only the branch it guessed.
pub struct OneBranchCheater<R> {
    graph: Graph,
    rng: R,
    prepared: Option<Prepared>,
}

impl<R: RngCore> OneBranchCheater<R> {
    pub fn new(public_graph: Graph, rng: R) -> Self {
        OneBranchCheater {
            graph: public_graph,
            rng,
            prepared: None,
        }
    }

    fn random_ordering(&mut self) -> HamiltonianCycle {
        let p = Permutation::random(self.graph.vertices(), &mut self.rng);
        HamiltonianCycle::new(p.images().collect()).expect("at least three vertices")
    }
}

impl<R: RngCore> Prover for OneBranchCheater<R> {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
        let (prepared, com) = match Challenge::random(&mut self.rng) {
            Challenge::RevealCycle => {
                let cycle = self.random_ordering();
                let graph = Graph::cycle_graph(cycle.as_slice()).expect("distinct vertices");
                let com = Commitment {
                    graph_digest: graph_digest(&graph),
                    cycle_digest: cycle_digest(&cycle),
                };
                (Prepared::Cycle { graph, cycle }, com)
            }
            Challenge::RevealPermutation => {
                let permutation = Permutation::random(self.graph.vertices(), &mut self.rng);
                let relabeled = self.graph.permuted(&permutation).expect("same vertex set");
                let mut junk = [0u8; 32];
                self.rng.fill(&mut junk);
                let com = Commitment {
                    graph_digest: graph_digest(&relabeled),
                    cycle_digest: junk,
                };
                (Prepared::Permutation { permutation, relabeled }, com)
            }
        };
        self.prepared = Some(prepared);
        Ok(com)
    }

    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed> {
        let prepared = self.prepared.take().ok_or(ChannelClosed)?;
        Ok(match (prepared, challenge) {
            (Prepared::Cycle { graph, cycle }, Challenge::RevealCycle) => Response::RevealCycle {
                permuted_graph: graph,
                permuted_cycle: cycle,
            },
            (Prepared::Permutation { permutation, .. }, Challenge::RevealPermutation) => {
                Response::RevealPermutation { permutation }
            }
            // Wrong guess: the best it can do is bluff.
            (Prepared::Cycle { .. }, Challenge::RevealPermutation) => Response::RevealPermutation {
                permutation: Permutation::random(self.graph.vertices(), &mut self.rng),
            },
            (Prepared::Permutation { relabeled, .. }, Challenge::RevealCycle) => Response::RevealCycle {
                permuted_cycle: self.random_ordering(),
                permuted_graph: relabeled,
            },
        })
    }
}

/// Records every completed round of the wrapped prover.
pub struct Recorder<P> {
    inner: P,
    pending: Option<Commitment>,
    transcript: Transcript,
}

impl<P: Prover> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Recorder {
            inner,
            pending: None,
            transcript: Transcript::default(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (P, Transcript) {
        (self.inner, self.transcript)
    }
}

impl<P: Prover> Prover for Recorder<P> {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
        let com = self.inner.commit()?;
        self.pending = Some(com);
        Ok(com)
    }

    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed> {
        let response = self.inner.respond(challenge)?;
        if let Some(commitment) = self.pending.take() {
            self.transcript.rounds.push(TranscriptRound {
                commitment,
                challenge,
                response: response.clone(),
            });
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_initial_graph;
    use crate::zkp::{run_proof, verifier_check, ProofOutcome, Verdict};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cheater_wins_exactly_when_it_guesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (g, _) = build_initial_graph(10, 20, &mut rng).unwrap();
        let mut cheater = OneBranchCheater::new(g.clone(), ChaCha8Rng::seed_from_u64(11));
        let mut wins = [0u32; 2];
        for _ in 0..200 {
            let com = cheater.commit().unwrap();
            let guessed_cycle = matches!(cheater.prepared, Some(Prepared::Cycle { .. }));
            let c = Challenge::random(&mut rng);
            let verdict = verifier_check(&g, &com, c, &cheater.respond(c).unwrap());
            let guessed_right = guessed_cycle == (c == Challenge::RevealCycle);
            assert_eq!(verdict.is_accept(), guessed_right);
            wins[verdict.is_accept() as usize] += 1;
        }
        assert!(wins[0] > 0 && wins[1] > 0);
    }

    #[test]
    fn respond_without_commit_closes_the_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, c) = build_initial_graph(6, 6, &mut rng).unwrap();
        let mut p = HonestProver::new(g, c, rng).unwrap();
        assert_eq!(p.respond(Challenge::RevealCycle), Err(ChannelClosed));
    }

    #[test]
    fn recorder_keeps_completed_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, c) = build_initial_graph(8, 16, &mut rng).unwrap();
        let mut rec = Recorder::new(HonestProver::new(g.clone(), c, ChaCha8Rng::seed_from_u64(3)).unwrap());
        let out = run_proof(&g, &mut rec, 6, &mut rng).unwrap();
        assert_eq!(out, ProofOutcome::Accepted { rounds: 6 });
        assert_eq!(rec.transcript().rounds.len(), 6);
        for r in &rec.transcript().rounds {
            assert_eq!(
                verifier_check(&g, &r.commitment, r.challenge, &r.response),
                Verdict::Accept
            );
        }
    }
}
