//! Geometry of the distance-`d` rotated surface code on a torus and of its
//! (2+1)-dimensional decoding lattice.
//!
//! Qubits sit on the integer points `(qx, qy)` of a `d x d` torus. The square
//! with lower-left corner `(x, y)` holds the four qubits `(x, y)`, `(x+1, y)`,
//! `(x, y+1)` and `(x+1, y+1)`; it is an X-stabilizer when `x + y` is even.
//! Every qubit lies in exactly two X-stabilizers, so a phase flip joins two
//! stabilizers that differ by a diagonal step `(+-1, +-1)`.
//!
//! The decoding lattice stacks `d` copies of the stabilizer graph, one per
//! measurement round, and links consecutive copies with time-like edges. The
//! time direction is periodic: round `d - 1` is linked back to round `0`.
//!
//! Addressing is time-major and row-major in space. The X-stabilizer at
//! `(x, y)` has rank `y * d/2 + x/2`, and vertex `(x, y, t)` has address
//! `t * n_stab + rank`. Space-like edge `(qx, qy, t)` has index
//! `t * d^2 + qy * d + qx`; time-like edges follow, indexed by the address of
//! their earlier endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spacetime vertex: the X-stabilizer at `(x, y)` in round `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

impl VertexId {
    pub const fn new(x: usize, y: usize, t: usize) -> Self {
        VertexId { x, y, t }
    }
}

/// A fault location of the decoding lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeId {
    /// Phase flip on qubit `(qx, qy)` showing up in round `t`.
    Space { qx: usize, qy: usize, t: usize },
    /// Measurement error joining `(x, y, t)` and `(x, y, t + 1 mod d)`.
    Time { x: usize, y: usize, t: usize },
}

impl EdgeId {
    pub fn is_time_like(&self) -> bool {
        matches!(self, EdgeId::Time { .. })
    }
}

/// Diagonal displacements of the four space-like neighbours, in the order
/// used by [`CodeLattice::vertex_edges`].
const SPACE_STEPS: [(isize, isize); 4] = [(-1, -1), (1, 1), (1, -1), (-1, 1)];

#[derive(Debug, Clone)]
pub struct CodeLattice {
    d: usize,
    n_stab: usize,
    volume: usize,
    // Per-address coordinates, so metric queries avoid divisions.
    coords: Vec<[u16; 3]>,
    edge_ends: Vec<[u32; 2]>,
    incident: Vec<[u32; 6]>,
}

impl CodeLattice {
    pub fn build(d: usize) -> Result<Self> {
        if d < 4 || d % 2 != 0 || d > u16::MAX as usize {
            return Err(Error::InvalidDistance(d));
        }
        let n_stab = d * d / 2;
        let volume = n_stab * d;
        let n_qubits = d * d;
        let n_space = n_qubits * d;

        let mut coords = Vec::with_capacity(volume);
        for t in 0..d {
            for y in 0..d {
                for x in (y % 2..d).step_by(2) {
                    coords.push([x as u16, y as u16, t as u16]);
                }
            }
        }

        let mut lattice = CodeLattice {
            d,
            n_stab,
            volume,
            coords,
            edge_ends: Vec::with_capacity(n_space + volume),
            incident: vec![[u32::MAX; 6]; volume],
        };

        for t in 0..d {
            for qy in 0..d {
                for qx in 0..d {
                    let [a, b] = lattice.qubit_stabilizers(qx, qy);
                    let ea = lattice.address_of(a.0, a.1, t);
                    let eb = lattice.address_of(b.0, b.1, t);
                    lattice.edge_ends.push([ea as u32, eb as u32]);
                }
            }
        }
        for a in 0..volume {
            let [x, y, t] = lattice.coords[a].map(usize::from);
            let b = lattice.address_of(x, y, (t + 1) % d);
            lattice.edge_ends.push([a as u32, b as u32]);
        }

        // Space edges are listed in SPACE_STEPS order, then the time edge to
        // round t+1, then the one from round t-1.
        for a in 0..volume {
            let [x, y, t] = lattice.coords[a].map(usize::from);
            let qubits = [
                (x, y),
                (x + 1, y + 1),
                (x + 1, y),
                (x, y + 1),
            ];
            let mut slots = [0u32; 6];
            for (slot, (qx, qy)) in slots.iter_mut().zip(qubits) {
                let (qx, qy) = (qx % d, qy % d);
                *slot = (t * n_qubits + qy * d + qx) as u32;
            }
            slots[4] = (n_space + a) as u32;
            let prev = lattice.address_of(x, y, (t + d - 1) % d);
            slots[5] = (n_space + prev) as u32;
            lattice.incident[a] = slots;
        }
        debug_assert!(lattice.check_incidence());
        Ok(lattice)
    }

    fn check_incidence(&self) -> bool {
        (0..self.volume).all(|a| {
            self.incident[a]
                .iter()
                .all(|&e| self.edge_ends[e as usize].contains(&(a as u32)))
        })
    }

    /// The two X-stabilizer corners `(x, y)` containing qubit `(qx, qy)`.
    fn qubit_stabilizers(&self, qx: usize, qy: usize) -> [(usize, usize); 2] {
        let d = self.d;
        if (qx + qy) % 2 == 0 {
            [(qx, qy), ((qx + d - 1) % d, (qy + d - 1) % d)]
        } else {
            [((qx + d - 1) % d, qy), (qx, (qy + d - 1) % d)]
        }
    }

    #[inline]
    fn address_of(&self, x: usize, y: usize, t: usize) -> usize {
        t * self.n_stab + y * (self.d / 2) + x / 2
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_qubits(&self) -> usize {
        self.d * self.d
    }

    /// Number of X-stabilizers.
    pub fn n_stab(&self) -> usize {
        self.n_stab
    }

    pub fn n_rounds(&self) -> usize {
        self.d
    }

    /// Number of spacetime vertices, `n_stab * n_rounds`.
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn n_space_edges(&self) -> usize {
        self.n_qubits() * self.d
    }

    pub fn n_time_edges(&self) -> usize {
        self.volume
    }

    pub fn n_edges(&self) -> usize {
        self.edge_ends.len()
    }

    /// Number of fault locations (space-like plus time-like edges). Defect
    /// densities are quoted per fault location; isolation volumes count
    /// edges as well, so the two are directly comparable.
    pub fn fault_volume(&self) -> usize {
        self.n_edges()
    }

    pub fn vertex_address(&self, v: VertexId) -> Result<usize> {
        let d = self.d;
        if v.x >= d || v.y >= d || v.t >= d || (v.x + v.y) % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "{v:?} is not an X-stabilizer vertex of the distance-{d} lattice"
            )));
        }
        Ok(self.address_of(v.x, v.y, v.t))
    }

    pub fn address_vertex(&self, a: usize) -> Result<VertexId> {
        let c = self.coords.get(a).ok_or(Error::AddressOutOfRange {
            address: a,
            volume: self.volume,
        })?;
        Ok(VertexId::new(c[0] as usize, c[1] as usize, c[2] as usize))
    }

    /// Coordinates of an address known to be in range.
    #[inline]
    pub(crate) fn coords(&self, a: usize) -> [usize; 3] {
        self.coords[a].map(usize::from)
    }

    /// Address reached from `a` by the displacement `(dx, dy, dt)`, wrapping
    /// in all three directions. `dx + dy` must be even.
    #[inline]
    pub(crate) fn translate(&self, a: usize, dx: isize, dy: isize, dt: isize) -> usize {
        debug_assert!((dx + dy).rem_euclid(2) == 0);
        let d = self.d as isize;
        let [x, y, t] = self.coords(a).map(|c| c as isize);
        self.address_of(
            (x + dx).rem_euclid(d) as usize,
            (y + dy).rem_euclid(d) as usize,
            (t + dt).rem_euclid(d) as usize,
        )
    }

    pub fn edge_index(&self, e: EdgeId) -> Result<usize> {
        let d = self.d;
        match e {
            EdgeId::Space { qx, qy, t } if qx < d && qy < d && t < d => {
                Ok(t * d * d + qy * d + qx)
            }
            EdgeId::Time { x, y, t } => {
                let a = self.vertex_address(VertexId::new(x, y, t))?;
                Ok(self.n_space_edges() + a)
            }
            _ => Err(Error::InvalidParameter(format!("{e:?} is outside the lattice"))),
        }
    }

    pub fn edge_id(&self, index: usize) -> Result<EdgeId> {
        let d = self.d;
        let n_space = self.n_space_edges();
        if index < n_space {
            let t = index / (d * d);
            let q = index % (d * d);
            Ok(EdgeId::Space { qx: q % d, qy: q / d, t })
        } else if index < self.n_edges() {
            let [x, y, t] = self.coords(index - n_space);
            Ok(EdgeId::Time { x, y, t })
        } else {
            Err(Error::InvalidParameter(format!(
                "edge index {index} out of range ({} edges)",
                self.n_edges()
            )))
        }
    }

    #[inline]
    pub fn is_time_like(&self, edge: usize) -> bool {
        edge >= self.n_space_edges()
    }

    /// Qubit index `qy * d + qx` carried by a space-like edge.
    #[inline]
    pub fn edge_qubit(&self, edge: usize) -> Option<usize> {
        (edge < self.n_space_edges()).then(|| edge % (self.d * self.d))
    }

    /// Addresses of the two boundary vertices of an edge.
    #[inline]
    pub fn edge_endpoints(&self, edge: usize) -> [usize; 2] {
        self.edge_ends[edge].map(|a| a as usize)
    }

    /// The six edges incident to a vertex: four space-like, then the
    /// time-like edge to the next round and the one from the previous round.
    #[inline]
    pub fn vertex_edges(&self, a: usize) -> [usize; 6] {
        self.incident[a].map(|e| e as usize)
    }

    #[inline]
    pub fn other_end(&self, edge: usize, a: usize) -> usize {
        let [u, v] = self.edge_endpoints(edge);
        if u == a {
            v
        } else {
            u
        }
    }

    /// Neighbouring vertices in the same order as [`Self::vertex_edges`].
    pub fn neighbors(&self, a: usize) -> [usize; 6] {
        self.vertex_edges(a).map(|e| self.other_end(e, a))
    }

    /// The space-like edge between `a` and its neighbour one diagonal step
    /// away, in the same round.
    pub(crate) fn space_step_edge(&self, a: usize, step: (isize, isize)) -> usize {
        let slot = SPACE_STEPS
            .iter()
            .position(|&s| s == step)
            .expect("space step must be diagonal");
        self.incident[a][slot] as usize
    }

    /// Signed minimal displacement from `from` to `to` on a cycle of length
    /// `n`; a tie at `n/2` resolves to the positive direction.
    #[inline]
    pub(crate) fn wrap_delta(from: usize, to: usize, n: usize) -> isize {
        let raw = (to + n - from) % n;
        if raw <= n / 2 {
            raw as isize
        } else {
            raw as isize - n as isize
        }
    }

    /// Taxicab distance between two addresses: the larger of the wrapped
    /// space offsets plus the wrapped time offset. Equal to the shortest-path
    /// length on the decoding lattice.
    #[inline]
    pub fn distance_addr(&self, a: usize, b: usize) -> usize {
        let d = self.d;
        let ca = self.coords[a];
        let cb = self.coords[b];
        let dx = Self::wrap_delta(ca[0] as usize, cb[0] as usize, d).unsigned_abs();
        let dy = Self::wrap_delta(ca[1] as usize, cb[1] as usize, d).unsigned_abs();
        let dt = Self::wrap_delta(ca[2] as usize, cb[2] as usize, d).unsigned_abs();
        dx.max(dy) + dt
    }

    pub fn distance(&self, u: VertexId, v: VertexId) -> Result<usize> {
        Ok(self.distance_addr(self.vertex_address(u)?, self.vertex_address(v)?))
    }

    /// Whether the qubit `(qx, qy)` lies on the vertical cut `qx = 0` and on
    /// the horizontal cut `qy = 0`.
    pub(crate) fn qubit_on_cuts(&self, qubit: usize) -> (bool, bool) {
        (qubit % self.d == 0, qubit / self.d == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn bfs(lat: &CodeLattice, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; lat.volume()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(a) = queue.pop_front() {
            for b in lat.neighbors(a) {
                if dist[b] == usize::MAX {
                    dist[b] = dist[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        dist
    }

    #[test]
    fn counts() {
        let l4 = CodeLattice::build(4).unwrap();
        assert_eq!((l4.n_qubits(), l4.n_stab(), l4.volume()), (16, 8, 32));
        assert_eq!(l4.n_space_edges(), 64);
        assert_eq!(l4.n_time_edges(), 32);
        assert_eq!(CodeLattice::build(6).unwrap().volume(), 108);
    }

    #[test]
    fn rejects_bad_distances() {
        for d in [0, 2, 3, 5, 7] {
            assert_eq!(CodeLattice::build(d).unwrap_err(), Error::InvalidDistance(d));
        }
    }

    #[test]
    fn six_distinct_neighbours_everywhere() {
        let lat = CodeLattice::build(4).unwrap();
        for a in 0..lat.volume() {
            let n = lat.neighbors(a);
            let space: HashSet<_> = n[..4].iter().collect();
            let time: HashSet<_> = n[4..].iter().collect();
            assert_eq!(space.len(), 4);
            assert_eq!(time.len(), 2);
            let [x, y, t] = lat.coords(a);
            for &b in &n[..4] {
                assert_eq!(lat.coords(b)[2], t);
                assert_ne!(lat.coords(b)[..2], [x, y]);
            }
        }
    }

    #[test]
    fn each_qubit_in_two_stabilizers() {
        let lat = CodeLattice::build(6).unwrap();
        let mut hits = vec![0; lat.n_qubits()];
        for a in 0..lat.n_stab() {
            for e in &lat.vertex_edges(a)[..4] {
                hits[lat.edge_qubit(*e).unwrap()] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 2));
    }

    #[test]
    fn addresses() {
        let lat = CodeLattice::build(4).unwrap();
        assert_eq!(lat.vertex_address(VertexId::new(0, 0, 0)).unwrap(), 0);
        assert_eq!(lat.vertex_address(VertexId::new(0, 0, 1)).unwrap(), 8);
        for a in 0..lat.volume() {
            let v = lat.address_vertex(a).unwrap();
            assert_eq!(lat.vertex_address(v).unwrap(), a);
        }
        assert!(lat.address_vertex(lat.volume()).is_err());
        assert!(lat.vertex_address(VertexId::new(1, 0, 0)).is_err());
    }

    #[test]
    fn edge_ids_round_trip() {
        let lat = CodeLattice::build(6).unwrap();
        for e in 0..lat.n_edges() {
            let id = lat.edge_id(e).unwrap();
            assert_eq!(lat.edge_index(id).unwrap(), e);
            assert_eq!(id.is_time_like(), lat.is_time_like(e));
        }
    }

    #[test]
    fn distance_examples() {
        let lat = CodeLattice::build(6).unwrap();
        let v = VertexId::new;
        assert_eq!(lat.distance(v(0, 0, 0), v(0, 0, 0)).unwrap(), 0);
        assert_eq!(lat.distance(v(0, 0, 0), v(1, 1, 0)).unwrap(), 1);
        assert_eq!(lat.distance(v(0, 0, 0), v(5, 5, 0)).unwrap(), 1);
        assert_eq!(lat.distance(v(0, 0, 0), v(3, 1, 2)).unwrap(), 5);
    }

    #[test]
    fn distance_matches_bfs_small() {
        let lat = CodeLattice::build(4).unwrap();
        for a in 0..lat.volume() {
            let dist = bfs(&lat, a);
            for (b, &db) in dist.iter().enumerate() {
                assert_eq!(lat.distance_addr(a, b), db);
            }
        }
    }
}
