use crate::graph::{codec_write, DecodeError, Graph, Reader};

use super::{verifier_check, Challenge, Commitment, RejectReason, Response, Verdict};

const TAG_REVEAL_CYCLE: u8 = 0x00;
const TAG_REVEAL_PERMUTATION: u8 = 0x01;

/// One completed round as seen on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptRound {
    pub commitment: Commitment,
    pub challenge: Challenge,
    pub response: Response,
}

/// A recorded proof, serializable for fixtures.
///
/// Byte layout: `u32` round count, then per round the two 32-byte digests,
/// the challenge byte and the tagged response (`0x00` graph then cycle,
/// `0x01` permutation), all in the canonical graph encodings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub rounds: Vec<TranscriptRound>,
}

impl Response {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Response::RevealCycle {
                permuted_graph,
                permuted_cycle,
            } => {
                out.push(TAG_REVEAL_CYCLE);
                codec_write::graph(out, permuted_graph);
                codec_write::cycle(out, permuted_cycle);
            }
            Response::RevealPermutation { permutation } => {
                out.push(TAG_REVEAL_PERMUTATION);
                codec_write::permutation(out, permutation);
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            TAG_REVEAL_CYCLE => Ok(Response::RevealCycle {
                permuted_graph: r.graph()?,
                permuted_cycle: r.cycle()?,
            }),
            TAG_REVEAL_PERMUTATION => Ok(Response::RevealPermutation {
                permutation: r.permutation()?,
            }),
            t => Err(DecodeError::Tag(t)),
        }
    }
}

impl Commitment {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.graph_digest);
        out.extend_from_slice(&self.cycle_digest);
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Commitment {
            graph_digest: r.bytes(32)?.try_into().unwrap(),
            cycle_digest: r.bytes(32)?.try_into().unwrap(),
        })
    }
}

impl Transcript {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.rounds.len() as u32).to_be_bytes());
        for round in &self.rounds {
            round.commitment.encode_into(&mut out);
            out.push(round.challenge.bit());
            round.response.encode_into(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        let mut rounds = Vec::with_capacity(n.min(r.remaining() / 66));
        for _ in 0..n {
            let commitment = Commitment::decode_from(&mut r)?;
            let bit = r.u8()?;
            let challenge = Challenge::from_bit(bit).ok_or(DecodeError::Tag(bit))?;
            let response = Response::decode_from(&mut r)?;
            rounds.push(TranscriptRound {
                commitment,
                challenge,
                response,
            });
        }
        r.finish()?;
        Ok(Transcript { rounds })
    }

    /// Re-checks every round against `public_graph`. On failure returns the
    /// 1-based round index and the reason.
    pub fn verify(&self, public_graph: &Graph) -> Result<(), (usize, RejectReason)> {
        for (i, round) in self.rounds.iter().enumerate() {
            if let Verdict::Reject(reason) =
                verifier_check(public_graph, &round.commitment, round.challenge, &round.response)
            {
                return Err((i + 1, reason));
            }
        }
        Ok(())
    }
}
