//! Local greedy pre-decoder and its isolation-radius family.
//!
//! An edge is matched when both of its endpoints are defects that survive the
//! isolation mask. All matches are decided from the input syndrome in one
//! concurrent step. A matched defect is removed when it has an odd number of
//! matched edges, so the modified syndrome is
//!
//! ```text
//! s'_v(t) = s_v(t) + m_v(t) * ( sum_{u ~ v} m_u(t) + m_v(t+1) + m_v(t-1) )   (mod 2)
//! ```
//!
//! where `m` is the masked syndrome. With radius `r`, a defect is kept in `m`
//! only if the taxicab ball of radius `r` around it holds at most two
//! defects (itself included). Radius 0 keeps every defect. A disabled
//! pre-decoder (infinite radius) passes the syndrome through unchanged.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::lattice::{CodeLattice, EdgeId};
use crate::noise::{syndrome_of, ErrorConfig, SyndromeHistory};

/// Isolation radius of the pre-decoder; `None` disables pre-decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PredecoderParams {
    radius: Option<usize>,
}

impl PredecoderParams {
    /// Pure matching, no pre-decoding.
    pub const DISABLED: PredecoderParams = PredecoderParams { radius: None };

    pub const fn with_radius(r: usize) -> Self {
        PredecoderParams { radius: Some(r) }
    }

    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    pub fn is_enabled(&self) -> bool {
        self.radius.is_some()
    }

    /// `max(r, 1)`, the radius entering the volume and weight formulas.
    pub fn effective_radius(&self) -> Option<usize> {
        self.radius.map(|r| r.max(1))
    }
}

impl fmt::Display for PredecoderParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.radius {
            Some(r) => write!(f, "{r}"),
            None => f.write_str("none"),
        }
    }
}

impl FromStr for PredecoderParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "inf" | "infinity" => Ok(PredecoderParams::DISABLED),
            other => other
                .parse::<usize>()
                .map(PredecoderParams::with_radius)
                .map_err(|_| Error::InvalidParameter(format!("bad pre-decoder radius `{s}`"))),
        }
    }
}

impl From<PredecoderParams> for String {
    fn from(p: PredecoderParams) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PredecoderParams {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Defects that are isolated enough to be matched greedily.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationMask(Bits);

impl IsolationMask {
    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn is_set(&self, a: usize) -> bool {
        self.0.get(a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredecodeOutcome {
    /// Edges matched by the pre-decoder, both kinds.
    pub matched_edges: ErrorConfig,
    /// Syndrome left for the global decoder.
    pub modified_syndrome: SyndromeHistory,
    /// Per qubit, the parity over rounds of matched space-like edges.
    pub qubit_correction: Bits,
}

/// Closed-form isolation volume `4 (r~ + 1)^3 + 6 (r~ + 1)^2 + 1` with
/// `r~ = max(r, 1)`.
pub fn isolation_volume(r: usize) -> usize {
    let k = r.max(1) + 1;
    4 * k * k * k + 6 * k * k + 1
}

/// Displacements `(dx, dy, dt)` of all vertices within taxicab distance `r`
/// of a vertex, one representative per distinct vertex of the lattice.
fn ball_offsets(d: usize, r: usize) -> Vec<(isize, isize, isize)> {
    let r = r as isize;
    let di = d as isize;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for dt in -r..=r {
        let rs = r - dt.abs();
        for dy in -rs..=rs {
            for dx in -rs..=rs {
                if (dx + dy).rem_euclid(2) != 0 {
                    continue;
                }
                let key = (dx.rem_euclid(di), dy.rem_euclid(di), dt.rem_euclid(di));
                if seen.insert(key) {
                    out.push((dx, dy, dt));
                }
            }
        }
    }
    out
}

/// Pre-decoder bound to a lattice, with the isolation ball precomputed.
#[derive(Debug, Clone)]
pub struct Predecoder<'a> {
    lattice: &'a CodeLattice,
    params: PredecoderParams,
    ball: Vec<(isize, isize, isize)>,
}

impl<'a> Predecoder<'a> {
    pub fn new(lattice: &'a CodeLattice, params: PredecoderParams) -> Self {
        let ball = match params.radius {
            Some(r) if r > 0 => ball_offsets(lattice.d(), r),
            _ => Vec::new(),
        };
        Predecoder {
            lattice,
            params,
            ball,
        }
    }

    pub fn params(&self) -> PredecoderParams {
        self.params
    }

    /// Masks out every defect whose ball holds more than two defects.
    /// A disabled pre-decoder masks out everything.
    pub fn isolation_mask(&self, s: &SyndromeHistory) -> IsolationMask {
        match self.params.radius {
            None => IsolationMask(Bits::zeros(s.volume())),
            Some(0) => IsolationMask(s.bits().clone()),
            Some(_) => {
                let mut mask = Bits::zeros(s.volume());
                for a in s.bits().iter_ones() {
                    let mut count = 0;
                    for &(dx, dy, dt) in &self.ball {
                        if s.is_defect(self.lattice.translate(a, dx, dy, dt)) {
                            count += 1;
                            if count > 2 {
                                break;
                            }
                        }
                    }
                    if count <= 2 {
                        mask.set(a, true);
                    }
                }
                IsolationMask(mask)
            }
        }
    }

    pub fn predecode(&self, s: &SyndromeHistory) -> PredecodeOutcome {
        let lat = self.lattice;
        let mask = self.isolation_mask(s);
        let mut matched = ErrorConfig::empty(lat);
        let mut modified = s.bits().clone();
        let mut correction = Bits::zeros(lat.n_qubits());
        for a in mask.0.iter_ones() {
            let mut parity = false;
            for e in lat.vertex_edges(a) {
                let b = lat.other_end(e, a);
                if !mask.0.get(b) {
                    continue;
                }
                parity = !parity;
                if a < b {
                    matched.toggle(e);
                    if let Some(q) = lat.edge_qubit(e) {
                        correction.toggle(q);
                    }
                }
            }
            if parity {
                modified.toggle(a);
            }
        }
        PredecodeOutcome {
            matched_edges: matched,
            modified_syndrome: SyndromeHistory::from_bits(modified),
            qubit_correction: correction,
        }
    }
}

pub fn isolation_mask(lattice: &CodeLattice, s: &SyndromeHistory, r: usize) -> IsolationMask {
    Predecoder::new(lattice, PredecoderParams::with_radius(r)).isolation_mask(s)
}

pub fn predecode(
    lattice: &CodeLattice,
    s: &SyndromeHistory,
    params: PredecoderParams,
) -> PredecodeOutcome {
    Predecoder::new(lattice, params).predecode(s)
}

/// All edges `e1 != e0` such that the pre-decoder leaves a non-empty
/// syndrome behind on the two-fault error `{e0, e1}`.
///
/// Together with `e0` itself these are the fault locations counted by
/// [`isolation_volume`], so `isolation_volume(r) == 1 + disruptors.len()`.
/// The lattice must be large enough that no ball of radius `2r + 4` wraps
/// onto itself.
pub fn enumerate_disruptors(
    lattice: &CodeLattice,
    e0: EdgeId,
    r: usize,
) -> Result<BTreeSet<usize>> {
    let needed = 4 * r + 10;
    if lattice.d() < needed {
        return Err(Error::LatticeTooSmall {
            d: lattice.d(),
            radius: r,
            needed,
        });
    }
    let e0 = lattice.edge_index(e0)?;
    let pre = Predecoder::new(lattice, PredecoderParams::with_radius(r));
    let mut out = BTreeSet::new();
    for e1 in (0..lattice.n_edges()).filter(|&e| e != e0) {
        let s = syndrome_of(lattice, &ErrorConfig::from_edges(lattice, [e0, e1]));
        if !pre.predecode(&s).modified_syndrome.is_clear() {
            out.insert(e1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::VertexId;
    use crate::noise::{sample_error, trial_rng, NoiseParams};

    fn lat(d: usize) -> CodeLattice {
        CodeLattice::build(d).unwrap()
    }

    fn addr(l: &CodeLattice, x: usize, y: usize, t: usize) -> usize {
        l.vertex_address(VertexId::new(x, y, t)).unwrap()
    }

    #[test]
    fn volume_formula() {
        assert_eq!(isolation_volume(0), 57);
        assert_eq!(isolation_volume(1), 57);
        assert_eq!(isolation_volume(2), 163);
        assert_eq!(isolation_volume(3), 353);
    }

    #[test]
    fn radius_zero_mask_is_identity() {
        let l = lat(6);
        let mut rng = trial_rng(3, 0);
        let s = syndrome_of(&l, &sample_error(&l, NoiseParams::new(0.1).unwrap(), &mut rng));
        assert_eq!(isolation_mask(&l, &s, 0).bits(), s.bits());
    }

    #[test]
    fn isolated_pair_survives_mask() {
        let l = lat(12);
        // Pair at distance 1; a third defect at distance 3 from both.
        let a = addr(&l, 0, 0, 0);
        let b = addr(&l, 1, 1, 0);
        let c = addr(&l, 4, 4, 0);
        assert_eq!(l.distance_addr(b, c), 3);
        let s = SyndromeHistory::from_defects(&l, [a, b, c]);
        let m = isolation_mask(&l, &s, 2);
        assert!(m.is_set(a) && m.is_set(b));
        assert!(m.is_set(c));
    }

    #[test]
    fn crowded_triple_is_masked() {
        let l = lat(12);
        let a = addr(&l, 0, 0, 0);
        let b = addr(&l, 1, 1, 0);
        let c = addr(&l, 2, 0, 0);
        let s = SyndromeHistory::from_defects(&l, [a, b, c]);
        let m = isolation_mask(&l, &s, 2);
        assert!(m.bits().none());
    }

    #[test]
    fn isolated_space_pair_is_corrected() {
        let l = lat(8);
        let e = l.edge_index(EdgeId::Space { qx: 3, qy: 2, t: 4 }).unwrap();
        let s = syndrome_of(&l, &ErrorConfig::from_edges(&l, [e]));
        let out = predecode(&l, &s, PredecoderParams::with_radius(0));
        assert_eq!(out.matched_edges.edges().collect::<Vec<_>>(), vec![e]);
        assert!(out.modified_syndrome.is_clear());
        assert_eq!(out.qubit_correction.iter_ones().collect::<Vec<_>>(), vec![2 * 8 + 3]);
    }

    #[test]
    fn time_like_match_has_no_qubit_correction() {
        let l = lat(8);
        let e = l.edge_index(EdgeId::Time { x: 2, y: 2, t: 7 }).unwrap();
        let s = syndrome_of(&l, &ErrorConfig::from_edges(&l, [e]));
        let out = predecode(&l, &s, PredecoderParams::with_radius(0));
        assert!(out.modified_syndrome.is_clear());
        assert!(out.qubit_correction.none());
    }

    #[test]
    fn empty_syndrome() {
        let l = lat(4);
        let out = predecode(&l, &SyndromeHistory::empty(&l), PredecoderParams::with_radius(0));
        assert!(out.matched_edges.is_empty());
        assert!(out.modified_syndrome.is_clear());
    }

    #[test]
    fn four_cycle_matches_loop_without_effect() {
        let l = lat(6);
        let a = addr(&l, 2, 2, 1);
        let b = addr(&l, 3, 3, 1);
        let c = addr(&l, 2, 2, 2);
        let d = addr(&l, 3, 3, 2);
        let s = SyndromeHistory::from_defects(&l, [a, b, c, d]);
        let out = predecode(&l, &s, PredecoderParams::with_radius(0));
        assert_eq!(out.matched_edges.weight(), 4);
        assert_eq!(out.modified_syndrome, s);
        // The space-like edges ab (round 1) and cd (round 2) are the same qubit.
        assert!(out.qubit_correction.none());
    }

    #[test]
    fn colinear_chain() {
        // Defects a-b-c-e along a diagonal, from faults on ab and ce.
        let l = lat(10);
        let a = addr(&l, 0, 0, 0);
        let b = addr(&l, 1, 1, 0);
        let c = addr(&l, 2, 2, 0);
        let e = addr(&l, 3, 3, 0);
        let s = SyndromeHistory::from_defects(&l, [a, b, c, e]);
        let out = predecode(&l, &s, PredecoderParams::with_radius(0));
        assert_eq!(out.matched_edges.weight(), 3);
        assert_eq!(out.modified_syndrome.defects(), vec![b, c]);
        let consistency = s.xor(&syndrome_of(&l, &out.matched_edges));
        assert_eq!(consistency, out.modified_syndrome);
    }

    #[test]
    fn disabled_passes_through() {
        let l = lat(6);
        let s = SyndromeHistory::from_defects(&l, [0, 5]);
        let out = predecode(&l, &s, PredecoderParams::DISABLED);
        assert_eq!(out.modified_syndrome, s);
        assert!(out.matched_edges.is_empty());
    }

    #[test]
    fn ball_dedupes_wraps() {
        // At d = 4 a radius-2 ball covers distinct vertices only.
        let l = lat(4);
        let ball = ball_offsets(4, 2);
        let hit: HashSet<usize> = ball.iter().map(|&(x, y, t)| l.translate(0, x, y, t)).collect();
        assert_eq!(hit.len(), ball.len());
        for v in 0..l.volume() {
            assert_eq!(hit.contains(&v), l.distance_addr(0, v) <= 2);
        }
    }

    #[test]
    fn disruptors_need_room() {
        let l = lat(8);
        let e0 = EdgeId::Time { x: 0, y: 0, t: 0 };
        assert!(matches!(
            enumerate_disruptors(&l, e0, 0),
            Err(Error::LatticeTooSmall { .. })
        ));
    }

    #[test]
    fn radius_param_parsing() {
        assert_eq!("none".parse::<PredecoderParams>().unwrap(), PredecoderParams::DISABLED);
        assert_eq!("2".parse::<PredecoderParams>().unwrap().radius(), Some(2));
        assert!("-1".parse::<PredecoderParams>().is_err());
        assert_eq!(PredecoderParams::with_radius(0).effective_radius(), Some(1));
    }
}
