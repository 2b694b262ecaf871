//! Minimum-weight perfect matching of defects under the taxicab metric, and
//! the correction it implies.
//!
//! The solver computes the full pairwise distance matrix of the defect set,
//! as a matching decoder on the complete defect graph must. It then runs the
//! blossom algorithm on a nearest-neighbour subgraph and certifies the result
//! against every pair of the complete graph through the final dual solution.
//! Pairs with negative reduced cost are added and the subgraph is re-solved,
//! so the returned matching is always an exact optimum of the complete graph.

mod blossom;

use std::time::Instant;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::lattice::{CodeLattice, VertexId};
use crate::noise::{ErrorConfig, SyndromeHistory};

/// Largest defect count accepted by [`brute_force_match`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Defect sets up to this size are solved on the complete graph directly.
const DENSE_LIMIT: usize = 24;

/// Initial neighbour count of the sparse subgraph.
const INITIAL_NEIGHBOURS: usize = 10;

/// Complete graph on a defect set, weighted by lattice distance.
#[derive(Debug, Clone)]
pub struct DefectGraph<'a> {
    lattice: &'a CodeLattice,
    defects: Vec<usize>,
}

impl<'a> DefectGraph<'a> {
    /// Defects are vertex addresses; they are sorted and must be distinct.
    pub fn new(lattice: &'a CodeLattice, mut defects: Vec<usize>) -> Result<Self> {
        defects.sort_unstable();
        if let Some(&a) = defects.iter().find(|&&a| a >= lattice.volume()) {
            return Err(Error::AddressOutOfRange {
                address: a,
                volume: lattice.volume(),
            });
        }
        if defects.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate defect address".into()));
        }
        Ok(DefectGraph { lattice, defects })
    }

    pub fn from_syndrome(lattice: &'a CodeLattice, s: &SyndromeHistory) -> Self {
        DefectGraph {
            lattice,
            defects: s.defects(),
        }
    }

    pub fn lattice(&self) -> &'a CodeLattice {
        self.lattice
    }

    /// Defect addresses in ascending order.
    pub fn defects(&self) -> &[usize] {
        &self.defects
    }

    pub fn vertices(&self) -> Vec<VertexId> {
        self.defects
            .iter()
            .map(|&a| self.lattice.address_vertex(a).expect("address checked at construction"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    /// Distance between the `i`-th and `j`-th defect.
    pub fn weight(&self, i: usize, j: usize) -> usize {
        self.lattice.distance_addr(self.defects[i], self.defects[j])
    }

    fn check_even(&self) -> Result<()> {
        if self.defects.len() % 2 == 1 {
            return Err(Error::OddDefectCount(self.defects.len()));
        }
        Ok(())
    }
}

/// Perfect matching of a defect set; pairs hold addresses, lower first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: usize,
}

impl Matching {
    /// True when every defect of `g` appears in exactly one pair and the
    /// stored weight is the sum of pair distances.
    pub fn is_perfect_for(&self, g: &DefectGraph<'_>) -> bool {
        let mut seen: Vec<usize> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort_unstable();
        let weight: usize = self
            .pairs
            .iter()
            .map(|&(a, b)| g.lattice.distance_addr(a, b))
            .sum();
        seen == g.defects && weight == self.total_weight
    }

    fn from_mates(g: &DefectGraph<'_>, mate: &[usize]) -> Matching {
        let mut pairs = Vec::with_capacity(mate.len() / 2);
        let mut total = 0;
        for (i, &j) in mate.iter().enumerate() {
            if i < j {
                pairs.push((g.defects[i], g.defects[j]));
                total += g.weight(i, j);
            }
        }
        Matching {
            pairs,
            total_weight: total,
        }
    }
}

/// Exact minimum-weight perfect matching.
pub fn mwpm(g: &DefectGraph<'_>) -> Result<Matching> {
    g.check_even()?;
    let n = g.len();
    if n == 0 {
        return Ok(Matching::default());
    }
    let dist: Vec<u32> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| g.weight(i, j) as u32)
        .collect();
    let mate = solve_dense(n, &dist)?;
    Ok(Matching::from_mates(g, &mate))
}

/// [`mwpm`] plus the wall time of the solve in nanoseconds, including the
/// construction of the complete distance matrix. No solver runs for an
/// empty defect set.
pub fn timed_mwpm(g: &DefectGraph<'_>) -> Result<(Matching, u64)> {
    let start = Instant::now();
    let m = mwpm(g)?;
    let ns = start.elapsed().as_nanos().max(1) as u64;
    Ok((m, ns))
}

fn solve_dense(n: usize, dist: &[u32]) -> Result<Vec<usize>> {
    let max_dist = dist.iter().copied().max().unwrap_or(0) as i64;
    let w = |i: usize, j: usize| max_dist + 1 - dist[i * n + j] as i64;

    let mut in_graph = vec![false; n * n];
    let mut edges: Vec<(usize, usize, i64)> = Vec::new();
    let mut add = |i: usize, j: usize, edges: &mut Vec<(usize, usize, i64)>| {
        let (i, j) = (i.min(j), i.max(j));
        if !in_graph[i * n + j] {
            in_graph[i * n + j] = true;
            edges.push((i, j, w(i, j)));
        }
    };

    let mut k = if n <= DENSE_LIMIT { n - 1 } else { INITIAL_NEIGHBOURS.min(n - 1) };
    add_neighbours(n, dist, k, &mut edges, &mut add);
    loop {
        let sol = blossom::max_weight_matching(n, &edges, true);
        if sol.mate.iter().any(Option::is_none) {
            if k >= n - 1 {
                return Err(Error::InvariantViolation(
                    "complete defect graph has no perfect matching".into(),
                ));
            }
            k = (2 * k).min(n - 1);
            add_neighbours(n, dist, k, &mut edges, &mut add);
            continue;
        }
        let chains = sol.chains();
        let before = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                if sol.slack_with(&chains, i, j, w(i, j)) < 0 {
                    add(i, j, &mut edges);
                }
            }
        }
        if edges.len() == before {
            return Ok(sol.mate.into_iter().map(|m| m.unwrap()).collect());
        }
    }
}

fn add_neighbours(
    n: usize,
    dist: &[u32],
    k: usize,
    edges: &mut Vec<(usize, usize, i64)>,
    add: &mut impl FnMut(usize, usize, &mut Vec<(usize, usize, i64)>),
) {
    let mut row: Vec<(u32, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| (dist[i * n + j], j)));
        if k < row.len() {
            row.select_nth_unstable(k - 1);
            row.truncate(k);
        }
        for &(_, j) in &row {
            add(i, j, edges);
        }
    }
}

/// Exhaustive minimum over all perfect matchings; the test oracle.
pub fn brute_force_match(g: &DefectGraph<'_>) -> Result<Matching> {
    g.check_even()?;
    let n = g.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyDefects(n));
    }
    fn search(
        g: &DefectGraph<'_>,
        used: &mut [bool],
        current: &mut Vec<usize>,
        cost: usize,
        best: &mut (usize, Vec<usize>),
    ) {
        if cost >= best.0 {
            return;
        }
        let Some(i) = used.iter().position(|&u| !u) else {
            *best = (cost, current.clone());
            return;
        };
        used[i] = true;
        for j in i + 1..used.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            current.extend([i, j]);
            search(g, used, current, cost + g.weight(i, j), best);
            current.truncate(current.len() - 2);
            used[j] = false;
        }
        used[i] = false;
    }
    let mut best = (usize::MAX, Vec::new());
    search(g, &mut vec![false; n], &mut Vec::new(), 0, &mut best);
    if n == 0 {
        return Ok(Matching::default());
    }
    let mut mate = vec![0; n];
    for pair in best.1.chunks(2) {
        mate[pair[0]] = pair[1];
        mate[pair[1]] = pair[0];
    }
    Ok(Matching::from_mates(g, &mate))
}

/// Correction implied by a matching: every edge on the canonical paths,
/// and its per-qubit parity over rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correction {
    pub qubits: Bits,
    pub edges: ErrorConfig,
}

/// Lays the canonical shortest path between the two defects of every pair.
///
/// Paths run from the lower address to the higher one. The time offset is
/// resolved first, then the space offset by diagonal steps toward the
/// target; once one space axis is resolved the path zigzags along the
/// other, starting in the positive direction. Every offset takes the
/// shorter way round the torus, and the positive way on a tie at `d/2`.
pub fn correction_from_matching(m: &Matching, lattice: &CodeLattice) -> Correction {
    let mut edges = ErrorConfig::empty(lattice);
    for &(a, b) in &m.pairs {
        for e in canonical_path(lattice, a.min(b), a.max(b)) {
            edges.toggle(e);
        }
    }
    Correction {
        qubits: edges.qubit_parity(lattice),
        edges,
    }
}

/// Edges of the canonical path from `a` to `b`.
pub fn canonical_path(lattice: &CodeLattice, a: usize, b: usize) -> Vec<usize> {
    let d = lattice.d();
    let [xa, ya, ta] = lattice.coords(a);
    let [xb, yb, tb] = lattice.coords(b);
    let mut path = Vec::with_capacity(lattice.distance_addr(a, b));
    let mut cur = a;

    let dt = CodeLattice::wrap_delta(ta, tb, d);
    for _ in 0..dt.unsigned_abs() {
        let e = if dt > 0 {
            lattice.vertex_edges(cur)[4]
        } else {
            lattice.vertex_edges(cur)[5]
        };
        path.push(e);
        cur = lattice.other_end(e, cur);
    }

    let mut dx = CodeLattice::wrap_delta(xa, xb, d);
    let mut dy = CodeLattice::wrap_delta(ya, yb, d);
    let mut zig = 1isize;
    while dx != 0 || dy != 0 {
        let step = match (dx.signum(), dy.signum()) {
            (0, sy) => {
                zig = -zig;
                (-zig, sy)
            }
            (sx, 0) => {
                zig = -zig;
                (sx, -zig)
            }
            (sx, sy) => (sx, sy),
        };
        let e = lattice.space_step_edge(cur, step);
        path.push(e);
        cur = lattice.other_end(e, cur);
        dx -= step.0;
        dy -= step.1;
    }
    debug_assert_eq!(cur, b);
    path
}
