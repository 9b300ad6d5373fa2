use super::{BaseGraph, Error, ParityCheckMatrix};

/// Lifting size of the configured code.
pub const Z_C: usize = 24;
/// Information bits per codeword (22 systematic blocks).
pub const MESSAGE_BITS: usize = 22 * Z_C;
/// Generated codeword length (46 blocks).
pub const CODEWORD_BITS: usize = 46 * Z_C;
/// Leading systematic bits that are never transmitted.
pub const PUNCTURED_BITS: usize = 2 * Z_C;
/// Transmitted frame length.
pub const FRAME_BITS: usize = CODEWORD_BITS - PUNCTURED_BITS;

const CORE: usize = 22;

/// Generated codeword bits (0/1), systematic part first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword(Vec<u8>);

impl Codeword {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn message(&self) -> &[u8] {
        &self.0[..MESSAGE_BITS]
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.0
    }
}

/// Per-bit log-likelihood ratios `ln P(0)/P(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame(Vec<f64>);

impl LlrFrame {
    pub fn new(llrs: Vec<f64>) -> Result<Self, Error> {
        if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("LLR {i} is not finite")));
        }
        Ok(LlrFrame(llrs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The rate-1/2 5G-NR code built from the top-left 24×46 part of BG1 lifted
/// by `Z_c = 24`: 528 message bits, 1104 generated bits, 1056 transmitted.
#[derive(Debug, Clone)]
pub struct Nr5gCode {
    graph: BaseGraph,
    h: ParityCheckMatrix,
    z: usize,
    /// Unpaired shift of the first parity column in the core rows.
    core_shift: usize,
}

fn rotate(v: &[u8], e: usize, out: &mut [u8]) {
    // (P^e v)[r] = v[(r + e) mod z]
    let z = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o ^= v[(r + e) % z];
    }
}

impl Nr5gCode {
    pub fn new() -> Result<Self, Error> {
        let graph = BaseGraph::bg1_set1()?.truncate(24, 46)?;
        Nr5gCode::from_graph(graph, Z_C)
    }

    /// Builds the encoder for a BG1-structured graph: rows 0..4 hold the
    /// double-diagonal core over parity columns 22..26 and every later row
    /// closes with a single identity block on its own parity column.
    pub fn from_graph(graph: BaseGraph, z: usize) -> Result<Self, Error> {
        let h = graph.expand(z)?;
        if graph.systematic_cols() != CORE || graph.rows() < 4 {
            return Err(Error::Contract("graph lacks the BG1 parity structure".into()));
        }
        let s = |r, c| graph.lifted_shift(r, c, z);
        let zero_block = |r, c| s(r, c) == Some(0);
        let core_ok = zero_block(0, 23)
            && zero_block(1, 23)
            && zero_block(1, 24)
            && zero_block(2, 24)
            && zero_block(2, 25)
            && zero_block(3, 25)
            && s(2, 22).is_none()
            && s(0, 24).is_none()
            && s(0, 25).is_none()
            && s(1, 25).is_none()
            && s(2, 23).is_none()
            && s(3, 23).is_none()
            && s(3, 24).is_none();
        let (a0, a1, a3) = match (s(0, 22), s(1, 22), s(3, 22)) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Contract("core column 22 must have three entries".into())),
        };
        let core_shift = if a0 == a1 {
            a3
        } else if a0 == a3 {
            a1
        } else if a1 == a3 {
            a0
        } else {
            return Err(Error::Contract("core column 22 shifts do not pair up".into()));
        };
        if !core_ok {
            return Err(Error::Contract("unexpected core parity blocks".into()));
        }
        if (0..4).any(|r| (26..graph.cols()).any(|c| s(r, c).is_some())) {
            return Err(Error::Contract("core rows touch extension parity".into()));
        }
        for r in 4..graph.rows() {
            for c in 26..graph.cols() {
                let expect_diag = c == CORE + r;
                if expect_diag != zero_block(r, c) || (!expect_diag && s(r, c).is_some()) {
                    return Err(Error::Contract(format!(
                        "row {r} is not a single-diagonal extension row"
                    )));
                }
            }
        }
        Ok(Nr5gCode {
            graph,
            h,
            z,
            core_shift,
        })
    }

    pub fn parity_check(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn base_graph(&self) -> &BaseGraph {
        &self.graph
    }

    pub fn message_len(&self) -> usize {
        CORE * self.z
    }

    pub fn codeword_len(&self) -> usize {
        self.graph.cols() * self.z
    }

    pub fn punctured_len(&self) -> usize {
        2 * self.z
    }

    pub fn frame_len(&self) -> usize {
        self.codeword_len() - self.punctured_len()
    }

    /// Systematic encoding: the four core parity blocks by back-substitution
    /// through the double diagonal, then each extension block as the sum of
    /// the blocks its row already touches.
    pub fn encode(&self, msg: &[u8]) -> Result<Codeword, Error> {
        let z = self.z;
        if msg.len() != self.message_len() {
            return Err(Error::Length {
                expected: self.message_len(),
                got: msg.len(),
            });
        }
        if msg.iter().any(|&b| b > 1) {
            return Err(Error::Contract("message bits must be 0 or 1".into()));
        }
        let mut cw = vec![0u8; self.codeword_len()];
        cw[..msg.len()].copy_from_slice(msg);
        let block = |cw: &[u8], j: usize| cw[j * z..(j + 1) * z].to_vec();

        // λ_i: contribution of the systematic blocks to core rows.
        let mut lambda = vec![vec![0u8; z]; 4];
        for (i, lam) in lambda.iter_mut().enumerate() {
            for j in 0..CORE {
                if let Some(e) = self.graph.lifted_shift(i, j, z) {
                    rotate(&cw[j * z..(j + 1) * z], e, lam);
                }
            }
        }
        // Σλ = P^d p0
        let total: Vec<u8> = (0..z)
            .map(|r| lambda.iter().fold(0, |a, l| a ^ l[r]))
            .collect();
        let d = self.core_shift;
        let p0: Vec<u8> = (0..z).map(|k| total[(k + z - d) % z]).collect();
        let shift = |r: usize| self.graph.lifted_shift(r, CORE, z).unwrap();

        let mut p1 = lambda[0].clone();
        rotate(&p0, shift(0), &mut p1);
        let mut p2 = lambda[1].clone();
        rotate(&p0, shift(1), &mut p2);
        p2.iter_mut().zip(&p1).for_each(|(a, b)| *a ^= b);
        let mut p3 = lambda[2].clone();
        p3.iter_mut().zip(&p2).for_each(|(a, b)| *a ^= b);
        for (k, p) in [p0, p1, p2, p3].into_iter().enumerate() {
            cw[(CORE + k) * z..(CORE + k + 1) * z].copy_from_slice(&p);
        }

        for r in 4..self.graph.rows() {
            let mut acc = vec![0u8; z];
            for j in 0..CORE + 4 {
                if let Some(e) = self.graph.lifted_shift(r, j, z) {
                    rotate(&block(&cw, j), e, &mut acc);
                }
            }
            let c = CORE + r;
            cw[c * z..(c + 1) * z].copy_from_slice(&acc);
        }
        Ok(Codeword(cw))
    }

    /// Drops the first `2·Z_c` generated bits.
    pub fn rate_match(&self, cw: &Codeword) -> Result<Vec<u8>, Error> {
        if cw.0.len() != self.codeword_len() {
            return Err(Error::Length {
                expected: self.codeword_len(),
                got: cw.0.len(),
            });
        }
        Ok(cw.0[self.punctured_len()..].to_vec())
    }

    /// Re-inserts the punctured positions with zero ("no information") LLRs.
    pub fn depuncture(&self, llrs: &[f64]) -> Result<LlrFrame, Error> {
        if llrs.len() != self.frame_len() {
            return Err(Error::Length {
                expected: self.frame_len(),
                got: llrs.len(),
            });
        }
        let mut out = vec![0.0; self.punctured_len()];
        out.extend_from_slice(llrs);
        LlrFrame::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_msg(rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..MESSAGE_BITS).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn dimensions() {
        let code = Nr5gCode::new().unwrap();
        assert_eq!(code.message_len(), 528);
        assert_eq!(code.codeword_len(), 1104);
        assert_eq!(code.frame_len(), 1056);
        assert_eq!(code.message_len() * 2, code.frame_len());
    }

    #[test]
    fn zero_message() {
        let code = Nr5gCode::new().unwrap();
        let cw = code.encode(&[0; MESSAGE_BITS]).unwrap();
        assert!(cw.bits().iter().all(|&b| b == 0));
    }

    #[test]
    fn random_messages_have_zero_syndrome() {
        let code = Nr5gCode::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let msg = random_msg(&mut rng);
            let cw = code.encode(&msg).unwrap();
            assert_eq!(cw.message(), &msg[..]);
            assert!(code.parity_check().is_codeword(cw.bits()).unwrap());
        }
    }

    #[test]
    fn encoding_is_linear() {
        let code = Nr5gCode::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let (a, b) = (random_msg(&mut rng), random_msg(&mut rng));
            let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let (ca, cb, cab) = (
                code.encode(&a).unwrap(),
                code.encode(&b).unwrap(),
                code.encode(&ab).unwrap(),
            );
            let sum: Vec<u8> = ca.bits().iter().zip(cb.bits()).map(|(x, y)| x ^ y).collect();
            assert_eq!(sum, cab.bits());
        }
    }

    #[test]
    fn wrong_message_length() {
        let code = Nr5gCode::new().unwrap();
        assert!(matches!(
            code.encode(&[0; 527]),
            Err(Error::Length { expected: 528, got: 527 })
        ));
    }

    #[test]
    fn flipped_bit_syndrome_weight_is_column_degree() {
        let code = Nr5gCode::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = code.parity_check();
        let mut bits = code.encode(&random_msg(&mut rng)).unwrap().into_bits();
        for pos in [0, 100, 527, 528, 700, 1103] {
            bits[pos] ^= 1;
            let w = h.syndrome(&bits).unwrap().iter().filter(|&&s| s == 1).count();
            assert_eq!(w, h.col(pos).len(), "bit {pos}");
            bits[pos] ^= 1;
        }
    }

    #[test]
    fn puncture_and_depuncture() {
        let code = Nr5gCode::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cw = code.encode(&random_msg(&mut rng)).unwrap();
        let tx = code.rate_match(&cw).unwrap();
        assert_eq!(tx.len(), 1056);
        assert_eq!(tx[0], cw.bits()[48]);
        assert_eq!(&tx[..], &cw.bits()[48..]);

        let llrs: Vec<f64> = tx.iter().map(|&b| if b == 0 { 3.5 } else { -3.5 }).collect();
        let full = code.depuncture(&llrs).unwrap();
        assert_eq!(full.len(), 1104);
        assert!(full.as_slice()[..48].iter().all(|&v| v == 0.0));
        assert_eq!(full.as_slice()[48], llrs[0]);
        let abs_in: f64 = llrs.iter().map(|v| v.abs()).sum();
        let abs_out: f64 = full.as_slice().iter().map(|v| v.abs()).sum();
        assert_eq!(abs_in, abs_out);
        assert!(code.depuncture(&llrs[1..]).is_err());

        let zeros = code.depuncture(&[0.0; 1056]).unwrap();
        assert!(zeros.as_slice().iter().all(|&v| v == 0.0));
    }
}
