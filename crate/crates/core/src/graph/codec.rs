//! Canonical byte encodings, the input to every commitment digest.
//!
//! All integers are big-endian `u32`. Each object starts with the one-byte
//! version prefix and carries explicit element counts:
//!
//! ```text
//! graph:       0x01 | n | v_1 .. v_n (ascending) | m | (a_1,b_1) .. (a_m,b_m) (ascending, a < b)
//! cycle:       0x01 | n | canonical vertex sequence
//! permutation: 0x01 | n | images of the ascending domain
//! ```

use thiserror::Error;

use super::{Graph, GraphError, HamiltonianCycle, NodeId, Permutation};

pub const ENCODING_VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unsupported encoding version {0:#04x}")]
    Version(u8),
    #[error("unknown tag {0:#04x}")]
    Tag(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("non-canonical encoding: {0}")]
    NonCanonical(&'static str),
    #[error(transparent)]
    Invalid(#[from] GraphError),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_len(out: &mut Vec<u8>, n: usize) {
    put_u32(out, u32::try_from(n).expect("collection larger than u32::MAX"));
}

pub fn encode_graph(g: &Graph) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 4 * g.order() + 8 * g.size());
    write_graph(&mut out, g);
    out
}

pub fn encode_cycle(c: &HamiltonianCycle) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 4 * c.len());
    write_cycle(&mut out, c);
    out
}

pub fn encode_permutation(p: &Permutation) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 4 * p.len());
    write_permutation(&mut out, p);
    out
}

pub(crate) fn write_graph(out: &mut Vec<u8>, g: &Graph) {
    out.push(ENCODING_VERSION);
    put_len(out, g.order());
    for v in g.vertices() {
        put_u32(out, v.0);
    }
    put_len(out, g.size());
    for (a, b) in g.edges() {
        put_u32(out, a.0);
        put_u32(out, b.0);
    }
}

pub(crate) fn write_cycle(out: &mut Vec<u8>, c: &HamiltonianCycle) {
    out.push(ENCODING_VERSION);
    put_len(out, c.len());
    for v in c.as_slice() {
        put_u32(out, v.0);
    }
}

pub(crate) fn write_permutation(out: &mut Vec<u8>, p: &Permutation) {
    out.push(ENCODING_VERSION);
    put_len(out, p.len());
    for v in p.images() {
        put_u32(out, v.0);
    }
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn node(&mut self) -> Result<NodeId, DecodeError> {
        self.u32().map(NodeId)
    }

    /// Reads a count and sanity-checks it against the bytes left, so a
    /// hostile length cannot trigger a huge allocation.
    fn count(&mut self, elem_size: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() {
            return Err(DecodeError::Truncated);
        }
        Ok(n)
    }

    fn version(&mut self) -> Result<(), DecodeError> {
        match self.u8()? {
            ENCODING_VERSION => Ok(()),
            v => Err(DecodeError::Version(v)),
        }
    }

    pub fn graph(&mut self) -> Result<Graph, DecodeError> {
        self.version()?;
        let n = self.count(4)?;
        let mut vertices = Vec::with_capacity(n);
        for _ in 0..n {
            vertices.push(self.node()?);
        }
        if vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError::NonCanonical("vertices not strictly ascending"));
        }
        let m = self.count(8)?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (a, b) = (self.node()?, self.node()?);
            if a >= b {
                return Err(DecodeError::NonCanonical("edge endpoints not ascending"));
            }
            edges.push((a, b));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError::NonCanonical("edges not strictly ascending"));
        }
        Ok(Graph::from_parts(vertices, edges)?)
    }

    pub fn cycle(&mut self) -> Result<HamiltonianCycle, DecodeError> {
        self.version()?;
        let n = self.count(4)?;
        let order = (0..n).map(|_| self.node()).collect::<Result<Vec<_>, _>>()?;
        let cycle = HamiltonianCycle::new(order.clone())?;
        if cycle.as_slice() != order.as_slice() {
            return Err(DecodeError::NonCanonical("cycle not in canonical form"));
        }
        Ok(cycle)
    }

    pub fn permutation(&mut self) -> Result<Permutation, DecodeError> {
        self.version()?;
        let n = self.count(4)?;
        let images = (0..n).map(|_| self.node()).collect::<Result<Vec<_>, _>>()?;
        Ok(Permutation::from_images(images)?)
    }
}

pub fn decode_graph(bytes: &[u8]) -> Result<Graph, DecodeError> {
    let mut r = Reader::new(bytes);
    let g = r.graph()?;
    r.finish()?;
    Ok(g)
}

pub fn decode_cycle(bytes: &[u8]) -> Result<HamiltonianCycle, DecodeError> {
    let mut r = Reader::new(bytes);
    let c = r.cycle()?;
    r.finish()?;
    Ok(c)
}

pub fn decode_permutation(bytes: &[u8]) -> Result<Permutation, DecodeError> {
    let mut r = Reader::new(bytes);
    let p = r.permutation()?;
    r.finish()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangle_graph_bytes() {
        let g = Graph::cycle_graph(&[NodeId(2), NodeId(0), NodeId(1)]).unwrap();
        let expected: Vec<u8> = [
            vec![0x01],
            3u32.to_be_bytes().to_vec(),
            [0u32, 1, 2].iter().flat_map(|v| v.to_be_bytes()).collect(),
            3u32.to_be_bytes().to_vec(),
            [0u32, 1, 0, 2, 1, 2].iter().flat_map(|v| v.to_be_bytes()).collect(),
        ]
        .concat();
        assert_eq!(encode_graph(&g), expected);
    }

    #[test]
    fn cycle_bytes_use_canonical_order() {
        let c = HamiltonianCycle::from_ids(&[7, 3, 5]).unwrap();
        let bytes = encode_cycle(&c);
        assert_eq!(bytes[0], ENCODING_VERSION);
        assert_eq!(&bytes[1..5], &3u32.to_be_bytes());
        let ids: Vec<u32> = bytes[5..]
            .chunks(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(ids, vec![3, 5, 7]);
    }

    #[test]
    fn rejects_bad_version_and_trailing_bytes() {
        let c = HamiltonianCycle::from_ids(&[0, 1, 2]).unwrap();
        let mut bytes = encode_cycle(&c);
        bytes.push(0);
        assert_eq!(decode_cycle(&bytes), Err(DecodeError::Trailing(1)));
        bytes.pop();
        bytes[0] = 0x02;
        assert_eq!(decode_cycle(&bytes), Err(DecodeError::Version(0x02)));
    }

    #[test]
    fn hostile_length_is_truncation_not_allocation() {
        let mut bytes = vec![0x01];
        bytes.extend_from_slice(&u32::MAX.to_be_bytes());
        assert_eq!(decode_graph(&bytes), Err(DecodeError::Truncated));
    }

    proptest! {
        #[test]
        fn encodings_round_trip(seed in any::<u64>(), half_degree in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let (g, c) = crate::graph::build_initial_graph(n, n * half_degree, &mut rng).unwrap();
            let p = Permutation::random(g.vertices(), &mut rng);
            prop_assert_eq!(decode_graph(&encode_graph(&g)).unwrap(), g);
            prop_assert_eq!(decode_cycle(&encode_cycle(&c)).unwrap(), c);
            prop_assert_eq!(decode_permutation(&encode_permutation(&p)).unwrap(), p);
        }

        #[test]
        fn decoding_garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_graph(&bytes);
            let _ = decode_cycle(&bytes);
            let _ = decode_permutation(&bytes);
        }
    }
}
