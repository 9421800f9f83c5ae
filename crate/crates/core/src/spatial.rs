//! Exact nearest-neighbor queries over 3D point sets and triangle soups.
//!
//! All queries return the same answer as a linear scan: distances are
//! compared as `(squared distance, index)` pairs, so ties go to the lowest
//! index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
struct KdNode {
    bounds: Aabb,
    /// Range into `order` for leaves; children for inner nodes.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Balanced kd-tree over a fixed point set.
#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PointIndex {
    pub fn new(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut index = PointIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build(0, points.len());
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let bounds = Aabb::from_points(self.order[start..end].iter().map(|&i| &self.points[i]));
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            bounds,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = bounds.axes_by_extent()[0];
            let mid = (start + end) / 2;
            let pts = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
            });
            let l = self.build(start, mid);
            let r = self.build(mid, end);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Closest stored point and its Euclidean distance.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_rec(0, query, &mut best);
        (best.index, best.d2.sqrt())
    }

    fn nearest_rec(&self, node: usize, q: Point3, best: &mut Candidate) {
        let n = &self.nodes[node];
        if n.bounds.dist2(q) > best.d2 {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let c = Candidate {
                        d2: geom::dist2(self.points[i], q),
                        index: i,
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(q), self.nodes[r].bounds.dist2(q));
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.nearest_rec(first, q, best);
                self.nearest_rec(second, q, best);
            }
        }
    }

    /// The `k` closest points in ascending `(distance, index)` order.
    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k > self.points.len() {
            return Err(Error::TooManyNeighbors {
                k,
                n: self.points.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        Ok(out.into_iter().map(|c| (c.index, c.d2.sqrt())).collect())
    }

    fn knn_rec(&self, node: usize, q: Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let n = &self.nodes[node];
        if heap.len() == k && n.bounds.dist2(q) > heap.peek().unwrap().d2 {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let c = Candidate {
                        d2: geom::dist2(self.points[i], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(q), self.nodes[r].bounds.dist2(q));
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.knn_rec(first, q, k, heap);
                self.knn_rec(second, q, k, heap);
            }
        }
    }

    /// Nearest neighbor for each query, in query order.
    pub fn nearest_many(&self, queries: &[Point3]) -> Vec<(usize, f64)> {
        queries.iter().map(|&q| self.nearest(q)).collect()
    }

    /// First point hit by a beam of radius `epsilon` from `origin` along unit
    /// `direction`: among points with positive projection onto the ray and
    /// perpendicular distance at most `epsilon`, the one with the smallest
    /// projection (ties to the lowest index).
    pub fn beam_intersect(&self, origin: Point3, direction: Point3, epsilon: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        self.beam_rec(0, origin, direction, epsilon, &mut best);
        best.map(|(_, i)| i)
    }

    fn beam_rec(&self, node: usize, o: Point3, d: Point3, eps: f64, best: &mut Option<(f64, usize)>) {
        let n = &self.nodes[node];
        // Smallest projection any point of the box can have, and whether
        // the box comes within eps of the ray line at all.
        let mut tmin = 0.0;
        for k in 0..3 {
            tmin += if d[k] >= 0.0 {
                (n.bounds.min[k] - o[k]) * d[k]
            } else {
                (n.bounds.max[k] - o[k]) * d[k]
            };
        }
        if let Some((bt, _)) = *best {
            if tmin > bt {
                return;
            }
        }
        if !ray_hits_box(o, d, &n.bounds, eps) {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let v = geom::sub(self.points[i], o);
                    let t = geom::dot(v, d);
                    if t <= 0.0 {
                        continue;
                    }
                    let perp2 = (geom::dot(v, v) - t * t).max(0.0);
                    if perp2 > eps * eps {
                        continue;
                    }
                    let better = match *best {
                        None => true,
                        Some((bt, bi)) => t < bt || (t == bt && i < bi),
                    };
                    if better {
                        *best = Some((t, i));
                    }
                }
            }
            Some((l, r)) => {
                self.beam_rec(l, o, d, eps, best);
                self.beam_rec(r, o, d, eps, best);
            }
        }
    }
}

/// Conservative test: does the ray `o + t d, t > 0` pass within the box
/// dilated by `eps` on every side?
fn ray_hits_box(o: Point3, d: Point3, b: &Aabb, eps: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let lo = b.min[k] - eps;
        let hi = b.max[k] + eps;
        if d[k].abs() < 1e-300 {
            if o[k] < lo || o[k] > hi {
                return false;
            }
        } else {
            let inv = 1.0 / d[k];
            let (mut a, mut c) = ((lo - o[k]) * inv, (hi - o[k]) * inv);
            if a > c {
                std::mem::swap(&mut a, &mut c);
            }
            t0 = t0.max(a);
            t1 = t1.min(c);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Good-fit mask: `mask[i]` is true when some target among the `k` nearest
/// targets of sample `i` has sample `i` among its own `k` nearest samples.
/// Neighbors tied with the `k`-th distance count as members, so the test
/// does not depend on point order. `k` is clamped to the smaller set size.
pub fn mutual_knn_mask(samples: &[Point3], targets: &PointIndex, k: usize) -> Result<Vec<bool>> {
    if samples.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let sample_index = PointIndex::new(samples)?;
    let k = k.min(samples.len()).min(targets.len()).max(1);
    // k-th nearest sample distance of each target, computed on demand.
    let mut reach: Vec<Option<f64>> = vec![None; targets.len()];
    samples
        .iter()
        .map(|&s| {
            for (t, d) in knn_with_ties(targets, s, k)? {
                let r = match reach[t] {
                    Some(r) => r,
                    None => {
                        let r = sample_index.knn(targets.points()[t], k)?[k - 1].1;
                        reach[t] = Some(r);
                        r
                    }
                };
                if d <= r {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect()
}

/// The `k` nearest points plus any further points tied with the `k`-th.
fn knn_with_ties(index: &PointIndex, q: Point3, k: usize) -> Result<Vec<(usize, f64)>> {
    let mut m = k;
    loop {
        let mut near = index.knn(q, m)?;
        let r = near[k - 1].1;
        if m == index.len() || near[m - 1].1 > r {
            near.retain(|&(_, d)| d <= r);
            return Ok(near);
        }
        m = (2 * m).min(index.len());
    }
}

#[derive(Clone, Debug)]
struct BvhNode {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Bounding-volume hierarchy over triangles for exact point-to-surface distance.
#[derive(Clone, Debug)]
pub struct TriangleIndex {
    triangles: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl TriangleIndex {
    pub fn new(triangles: Vec<[Point3; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n = triangles.len();
        let mut idx = TriangleIndex {
            triangles,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        let centroids: Vec<Point3> = idx
            .triangles
            .iter()
            .map(|t| geom::scale(geom::add(geom::add(t[0], t[1]), t[2]), 1.0 / 3.0))
            .collect();
        idx.build(0, n, &centroids);
        Ok(idx)
    }

    pub fn from_mesh(mesh: &crate::mesh::Mesh) -> Result<Self> {
        Self::new((0..mesh.face_count()).map(|f| mesh.triangle(f)).collect())
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Point3]) -> usize {
        let mut bounds = Aabb::empty();
        for &i in &self.order[start..end] {
            for p in &self.triangles[i] {
                bounds.grow(*p);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds,
            start,
            end,
            children: None,
        });
        if end - start > 4 {
            let cb = Aabb::from_points(self.order[start..end].iter().map(|&i| &centroids[i]));
            let axis = cb.axes_by_extent()[0];
            let mid = (start + end) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
            });
            let l = self.build(start, mid, centroids);
            let r = self.build(mid, end, centroids);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    /// Closest point on the surface: `(triangle, point, distance)`.
    pub fn closest(&self, q: Point3) -> (usize, Point3, f64) {
        let mut best = (usize::MAX, q, f64::INFINITY);
        self.closest_rec(0, q, &mut best);
        (best.0, best.1, best.2.sqrt())
    }

    fn closest_rec(&self, node: usize, q: Point3, best: &mut (usize, Point3, f64)) {
        let n = &self.nodes[node];
        if n.bounds.dist2(q) > best.2 {
            return;
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    let [a, b, c] = self.triangles[i];
                    let p = geom::closest_point_on_triangle(q, a, b, c);
                    let d2 = geom::dist2(p, q);
                    if d2 < best.2 || (d2 == best.2 && i < best.0) {
                        *best = (i, p, d2);
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(q), self.nodes[r].bounds.dist2(q));
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.closest_rec(first, q, best);
                self.closest_rec(second, q, best);
            }
        }
    }

    pub fn distance(&self, q: Point3) -> f64 {
        self.closest(q).2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(points: &[Point3], q: Point3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, &p)| (geom::dist2(p, q), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn brute_beam(points: &[Point3], o: Point3, d: Point3, eps: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in points.iter().enumerate() {
            let v = geom::sub(p, o);
            let t = geom::dot(v, d);
            let perp = geom::norm(geom::sub(v, geom::scale(d, t)));
            if t > 0.0 && perp <= eps && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        best.map(|b| b.1)
    }

    #[test]
    fn nearest_trivial() {
        let idx = PointIndex::new(&[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(idx.nearest([1.0, 0.0, 0.0]), (0, 1.0));
        let idx = PointIndex::new(&[[0.0, 0.0, 0.0], [0.3, 0.2, 0.1]]).unwrap();
        assert_eq!(idx.nearest([0.3, 0.2, 0.1]), (1, 0.0));
    }

    #[test]
    fn nearest_ties_go_to_lowest_index() {
        let pts = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let idx = PointIndex::new(&pts).unwrap();
        assert_eq!(idx.nearest([0.0, 0.0, 0.0]).0, 0);
        // Many duplicates straddling leaves.
        let dup = vec![[0.5, 0.5, 0.5]; 40];
        let idx = PointIndex::new(&dup).unwrap();
        assert_eq!(idx.nearest([0.0; 3]).0, 0);
        assert_eq!(
            idx.knn([0.0; 3], 3).unwrap().iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..1000).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let idx = PointIndex::new(&pts).unwrap();
        for _ in 0..100 {
            let q = [rng.gen(), rng.gen(), rng.gen()];
            assert_eq!(vec![idx.nearest(q)], brute_knn(&pts, q, 1));
        }
    }

    #[test]
    fn knn_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3> = (0..300).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let idx = PointIndex::new(&pts).unwrap();
        let q = [0.5, 0.5, 0.5];
        assert_eq!(idx.knn(q, 300).unwrap(), brute_knn(&pts, q, 300));
        assert_eq!(idx.knn(q, 1).unwrap()[0], idx.nearest(q));
        for _ in 0..50 {
            let q = [rng.gen(), rng.gen(), rng.gen()];
            assert_eq!(idx.knn(q, 7).unwrap(), brute_knn(&pts, q, 7));
        }
        assert!(matches!(idx.knn(q, 301), Err(Error::TooManyNeighbors { .. })));
    }

    #[test]
    fn beam_examples() {
        let idx = PointIndex::new(&[[0.0, 0.0, 5.0]]).unwrap();
        assert_eq!(idx.beam_intersect([0.0; 3], [0.0, 0.0, 1.0], 0.99), Some(0));
        assert_eq!(idx.beam_intersect([0.0; 3], [0.0, 0.0, -1.0], 0.99), None);
        let idx = PointIndex::new(&[[0.5, 0.0, 2.0], [0.0, 0.5, 7.0]]).unwrap();
        assert_eq!(idx.beam_intersect([0.0; 3], [0.0, 0.0, 1.0], 0.99), Some(0));
        let idx = PointIndex::new(&[[0.0, 0.5, 7.0], [0.5, 0.0, 2.0]]).unwrap();
        assert_eq!(idx.beam_intersect([0.0; 3], [0.0, 0.0, 1.0], 0.99), Some(1));
    }

    #[test]
    fn beam_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..800).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let idx = PointIndex::new(&pts).unwrap();
        for _ in 0..200 {
            let o = [rng.gen(), rng.gen(), rng.gen()];
            let d = geom::normalize([rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5]).unwrap();
            let eps = rng.gen_range(0.01..0.2);
            assert_eq!(idx.beam_intersect(o, d, eps), brute_beam(&pts, o, d, eps));
        }
    }

    #[test]
    fn mutual_knn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..200).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let idx = PointIndex::new(&pts).unwrap();
        assert!(mutual_knn_mask(&pts, &idx, 1).unwrap().iter().all(|&m| m));

        let mut samples = pts[..50].to_vec();
        samples.push([10.0, 10.0, 10.0]);
        let mask = mutual_knn_mask(&samples, &idx, 3).unwrap();
        assert!(!mask[50]);

        // Interleaved lattices offset by half a spacing.
        let a: Vec<Point3> = (0..20).map(|i| [i as f64, 0.0, 0.0]).collect();
        let b: Vec<Point3> = (0..20).map(|i| [i as f64 + 0.5, 0.0, 0.0]).collect();
        let idx = PointIndex::new(&b).unwrap();
        assert!(mutual_knn_mask(&a, &idx, 1).unwrap().iter().all(|&m| m));
    }

    #[test]
    fn triangle_index_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tris: Vec<[Point3; 3]> = (0..200)
            .map(|_| {
                let c: Point3 = [rng.gen(), rng.gen(), rng.gen()];
                let j = |r: &mut ChaCha8Rng| {
                    geom::add(
                        c,
                        [r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1)],
                    )
                };
                [j(&mut rng), j(&mut rng), j(&mut rng)]
            })
            .collect();
        let idx = TriangleIndex::new(tris.clone()).unwrap();
        for _ in 0..100 {
            let q: Point3 = [rng.gen(), rng.gen(), rng.gen()];
            let brute = tris
                .iter()
                .map(|t| geom::dist(geom::closest_point_on_triangle(q, t[0], t[1], t[2]), q))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(idx.distance(q), brute);
        }
    }
}
