//! Quadric-error edge-collapse simplification.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::Result;
use crate::geom::{self, Point3};
use crate::mesh::{self, Mesh};

/// Symmetric 4x4 quadric stored as its upper triangle.
#[derive(Clone, Copy, Debug, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: Point3, d: f64, w: f64) -> Self {
        let [a, b, c] = n;
        Quadric([
            w * a * a,
            w * a * b,
            w * a * c,
            w * a * d,
            w * b * b,
            w * b * c,
            w * b * d,
            w * c * c,
            w * c * d,
            w * d * d,
        ])
    }

    fn add(&self, o: &Quadric) -> Quadric {
        Quadric(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    fn eval(&self, p: Point3) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric when the system is well conditioned.
    fn optimum(&self) -> Option<Point3> {
        let q = &self.0;
        let m = [[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]];
        let rhs = [-q[3], -q[6], -q[8]];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let scale = (q[0] + q[4] + q[7]).powi(3);
        if !(det.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return None;
        }
        let solve = |col: usize| {
            let mut a = m;
            for r in 0..3 {
                a[r][col] = rhs[r];
            }
            (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
                / det
        };
        Some([solve(0), solve(1), solve(2)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamp_u: u32,
    stamp_v: u32,
    target: Point3,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, u, v).
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.u.cmp(&self.u))
            .then(other.v.cmp(&self.v))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct State {
    pos: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<Vec<usize>>,
    quadric: Vec<Quadric>,
    stamp: Vec<u32>,
    alive: Vec<bool>,
    boundary: Vec<bool>,
    alive_count: usize,
}

impl State {
    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vert_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    fn candidate(&self, u: usize, v: usize) -> Candidate {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let q = self.quadric[a].add(&self.quadric[b]);
        let mid = geom::scale(geom::add(self.pos[a], self.pos[b]), 0.5);
        let mut options = vec![mid, self.pos[a], self.pos[b]];
        if let Some(p) = q.optimum() {
            // Reject far-away optima from near-singular systems.
            let len = geom::dist(self.pos[a], self.pos[b]);
            if geom::dist(p, mid) <= 2.0 * len {
                options.insert(0, p);
            }
        }
        let (target, cost) = options
            .into_iter()
            .map(|p| (p, q.eval(p)))
            .fold((mid, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        Candidate {
            cost: cost.max(0.0),
            u: a,
            v: b,
            stamp_u: self.stamp[a],
            stamp_v: self.stamp[b],
            target,
        }
    }

    /// Link condition plus a normal-flip guard.
    fn legal(&self, c: &Candidate) -> bool {
        let (u, v) = (c.u, c.v);
        if self.boundary[u] || self.boundary[v] {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        let shared_faces = self.vert_faces[u]
            .iter()
            .filter(|f| self.faces[**f].contains(&v))
            .count();
        if common != 2 || shared_faces != 2 {
            return false;
        }
        if self.alive_count <= 4 {
            return false;
        }
        for &w in [u, v].iter() {
            for &f in &self.vert_faces[w] {
                let tri = self.faces[f];
                if tri.contains(&u) && tri.contains(&v) {
                    continue;
                }
                let before = geom::triangle_normal(self.pos[tri[0]], self.pos[tri[1]], self.pos[tri[2]]);
                let moved = tri.map(|x| if x == u || x == v { c.target } else { self.pos[x] });
                let after = geom::triangle_normal(moved[0], moved[1], moved[2]);
                let (lb, la) = (geom::norm(before), geom::norm(after));
                if la <= 1e-14 * lb.max(f64::MIN_POSITIVE) || geom::dot(before, after) <= 0.05 * lb * la {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, c: &Candidate) {
        let (u, v) = (c.u, c.v);
        let vf = std::mem::take(&mut self.vert_faces[v]);
        for &f in &vf {
            if self.faces[f].contains(&u) {
                self.face_alive[f] = false;
                for x in self.faces[f] {
                    if x != v {
                        self.vert_faces[x].retain(|&g| g != f);
                    }
                }
            } else {
                for x in self.faces[f].iter_mut() {
                    if *x == v {
                        *x = u;
                    }
                }
                self.vert_faces[u].push(f);
            }
        }
        self.pos[u] = c.target;
        self.quadric[u] = self.quadric[u].add(&self.quadric[v]);
        self.alive[v] = false;
        self.alive_count -= 1;
        self.stamp[u] += 1;
        self.stamp[v] += 1;
    }
}

/// Collapses edges in order of increasing quadric error until the face count
/// reaches `target_faces`. Collapses that break the link condition or flip a
/// face are skipped. Edges on open boundaries are never collapsed. When no
/// legal collapse remains the mesh is returned as is, with a warning.
pub fn simplify(mesh: &Mesh, target_faces: usize) -> Result<Mesh> {
    let target_faces = target_faces.max(4);
    if mesh.face_count() <= target_faces {
        return Ok(mesh.clone());
    }
    let nv = mesh.vertex_count();
    let mut st = State {
        pos: mesh.vertices().to_vec(),
        faces: mesh.faces().to_vec(),
        face_alive: vec![true; mesh.face_count()],
        vert_faces: vec![Vec::new(); nv],
        quadric: vec![Quadric::default(); nv],
        stamp: vec![0; nv],
        alive: vec![true; nv],
        boundary: vec![false; nv],
        alive_count: nv,
    };
    for (f, tri) in st.faces.iter().enumerate() {
        let [a, b, c] = tri.map(|x| st.pos[x]);
        let n = geom::triangle_normal(a, b, c);
        let area = 0.5 * geom::norm(n);
        if let Some(unit) = geom::normalize(n) {
            let q = Quadric::plane(unit, -geom::dot(unit, a), area);
            for &x in tri {
                st.quadric[x] = st.quadric[x].add(&q);
            }
        }
        for &x in tri {
            st.vert_faces[x].push(f);
        }
    }
    for (e, ef) in mesh.edge_faces().iter().enumerate() {
        if ef.count() == 1 {
            let [a, b] = mesh.edges()[e];
            st.boundary[a] = true;
            st.boundary[b] = true;
        }
    }

    let mut heap: BinaryHeap<Candidate> = mesh.edges().iter().map(|&[a, b]| st.candidate(a, b)).collect();
    let mut faces_left = mesh.face_count();
    while faces_left > target_faces {
        let Some(c) = heap.pop() else {
            log::warn!("simplify stopped at {faces_left} faces: no legal collapse left (target {target_faces})");
            break;
        };
        if !st.alive[c.u] || !st.alive[c.v] || c.stamp_u != st.stamp[c.u] || c.stamp_v != st.stamp[c.v] {
            continue;
        }
        if !st.legal(&c) {
            continue;
        }
        st.collapse(&c);
        faces_left -= 2;
        for w in st.neighbors(c.u) {
            heap.push(st.candidate(c.u, w));
        }
    }

    let faces: Vec<[usize; 3]> = st
        .faces
        .iter()
        .zip(&st.face_alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| *f)
        .collect();
    mesh::compact(&st.pos, &faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identity_at_target() {
        let m = fixtures::icosphere(2);
        assert_eq!(simplify(&m, m.face_count()).unwrap(), m);
    }

    #[test]
    fn sphere_to_500() {
        let m = fixtures::icosphere(4);
        let s = simplify(&m, 500).unwrap();
        assert!((490..=510).contains(&s.face_count()), "{}", s.face_count());
        assert!(s.is_watertight());
        assert_eq!(s.genus(), 0);
        assert!(s.signed_volume() > 0.0);
    }

    #[test]
    fn torus_keeps_genus() {
        let m = fixtures::torus(1.0, 0.4, 48, 24);
        let s = simplify(&m, 300).unwrap();
        assert!(s.is_watertight());
        assert_eq!(s.genus(), 1);
    }

    #[test]
    fn tetrahedron_cannot_shrink() {
        let m = fixtures::cube();
        let s = simplify(&m, 4).unwrap();
        assert!(s.is_watertight());
        assert!(s.face_count() >= 4);
    }
}
