//! Phenomenological phase-flip noise with equally likely measurement errors.
//!
//! A phase flip is a fault on a space-like edge and a measurement error is a
//! fault on a time-like edge, so one error configuration is simply a set of
//! edges. Its syndrome history marks every vertex with an odd number of
//! faulty incident edges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::lattice::CodeLattice;

/// Per-trial random stream.
pub type TrialRng = ChaCha8Rng;

/// Stream for trial `index` under `master_seed`. Streams for different
/// indices are independent, so trials can run in any order on any worker.
pub fn trial_rng(master_seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    p: f64,
}

impl NoiseParams {
    /// Phase flips and measurement errors both occur with probability `p`.
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "error rate must lie in [0, 1], got {p}"
            )));
        }
        Ok(NoiseParams { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn p_measurement(&self) -> f64 {
        self.p
    }
}

/// One bit per edge of the decoding lattice; set bits are faults.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorConfig(Bits);

impl ErrorConfig {
    pub fn empty(lattice: &CodeLattice) -> Self {
        ErrorConfig(Bits::zeros(lattice.n_edges()))
    }

    pub fn from_edges(lattice: &CodeLattice, edges: impl IntoIterator<Item = usize>) -> Self {
        ErrorConfig(Bits::from_indices(lattice.n_edges(), edges))
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.none()
    }

    /// Number of faults, `|E|`.
    pub fn weight(&self) -> usize {
        self.0.count_ones()
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.0.get(edge)
    }

    pub fn toggle(&mut self, edge: usize) {
        self.0.toggle(edge);
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter_ones()
    }

    pub fn xor(&self, other: &ErrorConfig) -> ErrorConfig {
        ErrorConfig(self.0.xor(&other.0))
    }

    pub fn xor_with(&mut self, other: &ErrorConfig) {
        self.0.xor_with(&other.0);
    }

    /// Parity over rounds of the faults on each qubit.
    pub fn qubit_parity(&self, lattice: &CodeLattice) -> Bits {
        let mut flips = Bits::zeros(lattice.n_qubits());
        for e in self.0.iter_ones() {
            if let Some(q) = lattice.edge_qubit(e) {
                flips.toggle(q);
            }
        }
        flips
    }
}

/// One bit per spacetime vertex (`s_v(t)`); set bits are defects.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyndromeHistory(Bits);

impl SyndromeHistory {
    pub fn empty(lattice: &CodeLattice) -> Self {
        SyndromeHistory(Bits::zeros(lattice.volume()))
    }

    pub fn from_defects(lattice: &CodeLattice, defects: impl IntoIterator<Item = usize>) -> Self {
        SyndromeHistory(Bits::from_indices(lattice.volume(), defects))
    }

    pub(crate) fn from_bits(bits: Bits) -> Self {
        SyndromeHistory(bits)
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn volume(&self) -> usize {
        self.0.len()
    }

    pub fn is_defect(&self, a: usize) -> bool {
        self.0.get(a)
    }

    pub fn toggle(&mut self, a: usize) {
        self.0.toggle(a);
    }

    /// Defect addresses in ascending order.
    pub fn defects(&self) -> Vec<usize> {
        self.0.iter_ones().collect()
    }

    pub fn defect_count(&self) -> usize {
        self.0.count_ones()
    }

    pub fn is_clear(&self) -> bool {
        self.0.none()
    }

    pub fn xor(&self, other: &SyndromeHistory) -> SyndromeHistory {
        SyndromeHistory(self.0.xor(&other.0))
    }
}

/// Draws every edge independently with probability `p`.
///
/// Gaps between faults are sampled from the geometric distribution, which
/// costs one uniform draw per fault instead of one per edge.
pub fn sample_error<R: Rng + ?Sized>(
    lattice: &CodeLattice,
    params: NoiseParams,
    rng: &mut R,
) -> ErrorConfig {
    let n = lattice.n_edges();
    let p = params.p();
    if p <= 0.0 {
        return ErrorConfig::empty(lattice);
    }
    if p >= 1.0 {
        return ErrorConfig(Bits::ones(n));
    }
    let mut error = ErrorConfig::empty(lattice);
    let log_q = (-p).ln_1p();
    let mut i = 0usize;
    loop {
        // u in (0, 1] keeps the logarithm finite.
        let u = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if gap >= (n - i) as f64 {
            break;
        }
        i += gap as usize;
        error.0.set(i, true);
        i += 1;
        if i >= n {
            break;
        }
    }
    error
}

pub fn syndrome_of(lattice: &CodeLattice, error: &ErrorConfig) -> SyndromeHistory {
    let mut s = SyndromeHistory::empty(lattice);
    for e in error.edges() {
        let [a, b] = lattice.edge_endpoints(e);
        s.0.toggle(a);
        s.0.toggle(b);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_one_rates() {
        let lat = CodeLattice::build(4).unwrap();
        let mut rng = trial_rng(1, 0);
        assert!(sample_error(&lat, NoiseParams::new(0.0).unwrap(), &mut rng).is_empty());
        let all = sample_error(&lat, NoiseParams::new(1.0).unwrap(), &mut rng);
        assert_eq!(all.weight(), lat.n_edges());
    }

    #[test]
    fn rejects_invalid_rates() {
        assert!(NoiseParams::new(-0.1).is_err());
        assert!(NoiseParams::new(1.5).is_err());
        assert!(NoiseParams::new(f64::NAN).is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let lat = CodeLattice::build(6).unwrap();
        let params = NoiseParams::new(0.05).unwrap();
        let a = sample_error(&lat, params, &mut trial_rng(7, 3));
        let b = sample_error(&lat, params, &mut trial_rng(7, 3));
        let c = sample_error(&lat, params, &mut trial_rng(7, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_edge_makes_a_defect_pair() {
        let lat = CodeLattice::build(6).unwrap();
        for e in [0, 17, lat.n_space_edges() + 5] {
            let s = syndrome_of(&lat, &ErrorConfig::from_edges(&lat, [e]));
            assert_eq!(s.defects(), {
                let mut ends = lat.edge_endpoints(e).to_vec();
                ends.sort();
                ends
            });
        }
    }

    #[test]
    fn shared_vertex_cancels() {
        let lat = CodeLattice::build(6).unwrap();
        let a = 40;
        let [e1, e2, ..] = lat.vertex_edges(a);
        let s = syndrome_of(&lat, &ErrorConfig::from_edges(&lat, [e1, e2]));
        let mut expected = vec![lat.other_end(e1, a), lat.other_end(e2, a)];
        expected.sort();
        assert_eq!(s.defects(), expected);
    }

    #[test]
    fn elementary_loops_have_no_syndrome() {
        let lat = CodeLattice::build(6).unwrap();
        // Space-like 4-cycle around the Z-plaquette whose corner is (1, 0):
        // its four qubits join the four X-stabilizers around it.
        let q = |x: usize, y: usize| y * 6 + x;
        let t = 2 * lat.n_qubits();
        let loop_edges = [q(1, 0), q(2, 0), q(1, 1), q(2, 1)].map(|i| t + i);
        assert!(syndrome_of(&lat, &ErrorConfig::from_edges(&lat, loop_edges)).is_clear());

        // Mixed cycle: a space edge in rounds t and t+1 with the two time
        // edges joining its endpoints.
        let e = lat.edge_index(crate::lattice::EdgeId::Space { qx: 3, qy: 1, t: 1 }).unwrap();
        let e_next = lat.edge_index(crate::lattice::EdgeId::Space { qx: 3, qy: 1, t: 2 }).unwrap();
        let [a, b] = lat.edge_endpoints(e);
        let ta = lat.vertex_edges(a)[4];
        let tb = lat.vertex_edges(b)[4];
        let mixed = ErrorConfig::from_edges(&lat, [e, e_next, ta, tb]);
        assert!(syndrome_of(&lat, &mixed).is_clear());
    }
}
