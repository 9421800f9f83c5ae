//! Incremental 3D convex hull.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};
use crate::mesh::{self, Mesh};

struct Face {
    v: [usize; 3],
    normal: Point3,
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(pts: &[Point3], v: [usize; 3]) -> Self {
        let n = geom::normalize(geom::triangle_normal(pts[v[0]], pts[v[1]], pts[v[2]])).unwrap_or([0.0; 3]);
        Face {
            v,
            normal: n,
            offset: geom::dot(n, pts[v[0]]),
            alive: true,
        }
    }

    fn height(&self, p: Point3) -> f64 {
        geom::dot(self.normal, p) - self.offset
    }
}

/// Outward-wound convex hull of `points`. Errors when the points are
/// (numerically) coplanar or fewer than four.
pub fn convex_hull(points: &[Point3]) -> Result<Mesh> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "convex hull needs 4 points, got {}",
            points.len()
        )));
    }
    let diag = Aabb::from_points(points).diagonal();
    let eps = 1e-10 * diag.max(f64::MIN_POSITIVE);

    // Initial tetrahedron from extreme points.
    let i0 = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .unwrap();
    let i1 = (0..points.len())
        .max_by(|&a, &b| geom::dist2(points[a], points[i0]).total_cmp(&geom::dist2(points[b], points[i0])))
        .unwrap();
    let dir = geom::sub(points[i1], points[i0]);
    let line_dist = |p: Point3| geom::norm(geom::cross(geom::sub(p, points[i0]), dir)) / geom::norm(dir).max(1e-300);
    let i2 = (0..points.len())
        .max_by(|&a, &b| line_dist(points[a]).total_cmp(&line_dist(points[b])))
        .unwrap();
    if geom::norm(dir) <= eps || line_dist(points[i2]) <= eps {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let n = geom::normalize(geom::triangle_normal(points[i0], points[i1], points[i2])).unwrap();
    let plane_dist = |p: Point3| geom::dot(n, geom::sub(p, points[i0]));
    let i3 = (0..points.len())
        .max_by(|&a, &b| plane_dist(points[a]).abs().total_cmp(&plane_dist(points[b]).abs()))
        .unwrap();
    if plane_dist(points[i3]).abs() <= eps {
        return Err(Error::Degenerate("points are coplanar".into()));
    }

    let mut faces: Vec<Face> = Vec::new();
    let (a, b, c, d) = if plane_dist(points[i3]) < 0.0 {
        (i0, i1, i2, i3)
    } else {
        (i0, i2, i1, i3)
    };
    for v in [[a, b, c], [a, d, b], [b, d, c], [c, d, a]] {
        faces.push(Face::new(points, v));
    }

    let tol = 1e-9 * diag;
    for (p, &pt) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&p) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&f| faces[f].alive && faces[f].height(pt) > tol)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for &f in &visible {
            let v = faces[f].v;
            for k in 0..3 {
                directed.insert((v[k], v[(k + 1) % 3]));
            }
        }
        let mut horizon = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for k in 0..3 {
                let e = (v[k], v[(k + 1) % 3]);
                if !directed.contains(&(e.1, e.0)) {
                    horizon.push(e);
                }
            }
            faces[f].alive = false;
        }
        for (x, y) in horizon {
            faces.push(Face::new(points, [x, y, p]));
        }
        // Periodically drop dead faces to keep the scan short.
        if faces.len() > 64 && faces.iter().filter(|f| f.alive).count() * 2 < faces.len() {
            faces.retain(|f| f.alive);
        }
    }

    let tris: Vec<[usize; 3]> = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let hull = mesh::compact(points, &tris)?;
    if !hull.is_watertight() {
        return Err(Error::Degenerate(
            "hull construction lost closure (near-degenerate input)".into(),
        ));
    }
    Ok(hull)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tetrahedron_corners() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.face_count(), 4);
        assert!(h.signed_volume() > 0.0);
    }

    #[test]
    fn cube_with_interior_points() {
        let mut pts: Vec<Point3> = (0..8)
            .map(|c| [(c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64])
            .collect();
        pts.extend([[0.5, 0.5, 0.5], [0.2, 0.3, 0.7], [0.9, 0.1, 0.5]]);
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.face_count(), 12);
        assert_eq!(h.vertex_count(), 8);
        assert!((h.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_rejected() {
        let pts: Vec<Point3> = (0..10).map(|i| [i as f64, (i * i) as f64, 0.0]).collect();
        assert!(matches!(convex_hull(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sphere_samples_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| {
                let p = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
                geom::normalize(p).unwrap()
            })
            .collect();
        let h = convex_hull(&pts).unwrap();
        assert!(h.is_watertight());
        assert_eq!(h.genus(), 0);
        for f in 0..h.face_count() {
            let [a, b, c] = h.triangle(f);
            let n = geom::normalize(geom::triangle_normal(a, b, c)).unwrap();
            for p in &pts {
                assert!(geom::dot(n, geom::sub(*p, a)) <= 1e-9);
            }
        }
    }
}
