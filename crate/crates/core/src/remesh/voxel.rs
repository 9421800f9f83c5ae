//! Regular node grids, distance-field dilation and isosurface extraction.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};
use crate::mesh::{self, Mesh};

/// Largest grid the voxel routines will allocate.
pub const MAX_GRID_NODES: usize = 60_000_000;

/// A lattice of `dims[0] x dims[1] x dims[2]` nodes spaced `spacing` apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub origin: Point3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Grid {
    /// Grid covering `bounds` padded by `pad` nodes on every side.
    pub fn covering(bounds: &Aabb, spacing: f64, pad: usize) -> Self {
        let ext = bounds.extent();
        let dims = ext.map(|e| (e / spacing).ceil() as usize + 1 + 2 * pad);
        let origin = geom::sub(bounds.min, [spacing * pad as f64; 3]);
        Grid { origin, spacing, dims }
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, n: usize) -> [usize; 3] {
        let i = n % self.dims[0];
        let j = (n / self.dims[0]) % self.dims[1];
        let k = n / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3 {
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2] + k as f64 * self.spacing,
        ]
    }

    /// Node positions in index order (x fastest).
    pub fn nodes(&self) -> impl Iterator<Item = Point3> + '_ {
        (0..self.node_count()).map(|n| {
            let [i, j, k] = self.coords(n);
            self.position(i, j, k)
        })
    }

    fn on_border(&self, c: [usize; 3]) -> bool {
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// 6-connected neighbors of node `n`.
    fn neighbors6(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(n);
        let dims = self.dims;
        (0..6).filter_map(move |d| {
            let axis = d / 2;
            let mut q = c;
            if d % 2 == 0 {
                if q[axis] == 0 {
                    return None;
                }
                q[axis] -= 1;
            } else {
                if q[axis] + 1 >= dims[axis] {
                    return None;
                }
                q[axis] += 1;
            }
            Some(self.index(q[0], q[1], q[2]))
        })
    }
}

/// Marks nodes reachable from the grid border through non-blocked nodes.
pub(crate) fn flood_exterior(grid: &Grid, blocked: &[bool]) -> Vec<bool> {
    let mut outside = vec![false; grid.node_count()];
    let mut queue = VecDeque::new();
    for n in 0..grid.node_count() {
        if !blocked[n] && grid.on_border(grid.coords(n)) {
            outside[n] = true;
            queue.push_back(n);
        }
    }
    while let Some(n) = queue.pop_front() {
        for m in grid.neighbors6(n) {
            if !blocked[m] && !outside[m] {
                outside[m] = true;
                queue.push_back(m);
            }
        }
    }
    outside
}

// Kuhn subdivision of the unit cube into 6 tetrahedra sharing the 0-7 diagonal.
// Corner c has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Triangulates `{values < 0}` by marching tetrahedra. Triangles are wound
/// so normals point toward increasing values. The negative region must not
/// touch the grid border.
pub fn extract_isosurface(grid: &Grid, values: &[f64]) -> Result<Mesh> {
    if values.len() != grid.node_count() {
        return Err(Error::ShapeMismatch {
            op: "extract_isosurface",
            left: grid.dims.to_vec(),
            right: vec![values.len()],
        });
    }
    // Keep exact zeros off the surface so every crossing is strict.
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = scale * 1e-9;
    let val = |n: usize| {
        let v = values[n];
        if v >= 0.0 {
            v.max(floor).max(f64::MIN_POSITIVE)
        } else {
            v
        }
    };

    let mut verts: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let [nx, ny, nz] = grid.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::EmptyMesh);
    }

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut ids = [0usize; 8];
                let mut vs = [0.0f64; 8];
                let mut ps = [[0.0; 3]; 8];
                let mut any_neg = false;
                let mut any_pos = false;
                for c in 0..8 {
                    let (di, dj, dk) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
                    ids[c] = grid.index(i + di, j + dj, k + dk);
                    vs[c] = val(ids[c]);
                    ps[c] = grid.position(i + di, j + dj, k + dk);
                    if vs[c] < 0.0 {
                        any_neg = true;
                    } else {
                        any_pos = true;
                    }
                }
                if !(any_neg && any_pos) {
                    continue;
                }
                for tet in TETS {
                    let neg: Vec<usize> = tet.iter().copied().filter(|&c| vs[c] < 0.0).collect();
                    let pos: Vec<usize> = tet.iter().copied().filter(|&c| vs[c] >= 0.0).collect();
                    if neg.is_empty() || pos.is_empty() {
                        continue;
                    }
                    let mut x = |a: usize, b: usize| {
                        cross_vertex(
                            &mut edge_vertex,
                            &mut verts,
                            (ids[a], ids[b]),
                            (ps[a], ps[b]),
                            (vs[a], vs[b]),
                        )
                    };
                    let tris: Vec<[usize; 3]> = match (neg.len(), pos.len()) {
                        (1, 3) => vec![[x(neg[0], pos[0]), x(neg[0], pos[1]), x(neg[0], pos[2])]],
                        (3, 1) => vec![[x(neg[0], pos[0]), x(neg[1], pos[0]), x(neg[2], pos[0])]],
                        _ => {
                            let (a, b, c, d) = (
                                x(neg[0], pos[0]),
                                x(neg[0], pos[1]),
                                x(neg[1], pos[1]),
                                x(neg[1], pos[0]),
                            );
                            vec![[a, b, c], [a, c, d]]
                        }
                    };
                    let centroid = |cs: &[usize]| {
                        let s = cs.iter().fold([0.0; 3], |acc, &c| geom::add(acc, ps[c]));
                        geom::scale(s, 1.0 / cs.len() as f64)
                    };
                    let outward = geom::sub(centroid(&pos), centroid(&neg));
                    for t in tris {
                        let n = geom::triangle_normal(verts[t[0]], verts[t[1]], verts[t[2]]);
                        if geom::dot(n, outward) < 0.0 {
                            faces.push([t[0], t[2], t[1]]);
                        } else {
                            faces.push(t);
                        }
                    }
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Mesh::new(verts, faces)
}

fn cross_vertex(
    cache: &mut HashMap<(usize, usize), usize>,
    verts: &mut Vec<Point3>,
    (a, b): (usize, usize),
    (pa, pb): (Point3, Point3),
    (va, vb): (f64, f64),
) -> usize {
    let key = if a < b { (a, b) } else { (b, a) };
    *cache.entry(key).or_insert_with(|| {
        // Interpolate from the lower-index node so the result is independent of visiting order.
        let (p0, p1, v0, v1) = if a < b { (pa, pb, va, vb) } else { (pb, pa, vb, va) };
        let t = v0 / (v0 - v1);
        verts.push(geom::add(p0, geom::scale(geom::sub(p1, p0), t)));
        verts.len() - 1
    })
}

/// Keeps only the connected component with the most faces.
pub(crate) fn largest_component(m: Mesh) -> Result<Mesh> {
    let conn = m.topology();
    let nf = m.face_count();
    let mut label = vec![usize::MAX; nf];
    let mut sizes = Vec::new();
    let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); m.vertex_count()];
    for (f, tri) in conn.faces().iter().enumerate() {
        for &v in tri {
            vertex_faces[v].push(f);
        }
    }
    for start in 0..nf {
        if label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut count = 0;
        let mut stack = vec![start];
        label[start] = id;
        while let Some(f) = stack.pop() {
            count += 1;
            for &v in &conn.faces()[f] {
                for &g in &vertex_faces[v] {
                    if label[g] == usize::MAX {
                        label[g] = id;
                        stack.push(g);
                    }
                }
            }
        }
        sizes.push(count);
    }
    if sizes.len() == 1 {
        return Ok(m);
    }
    let best = (0..sizes.len())
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .unwrap();
    log::debug!("dropping {} small components", sizes.len() - 1);
    let faces: Vec<[usize; 3]> = (0..nf).filter(|&f| label[f] == best).map(|f| conn.faces()[f]).collect();
    mesh::compact(m.vertices(), &faces)
}

/// Unsigned distance to `mesh` at every grid node, computed exactly for
/// nodes within `reach` of some triangle; other nodes get `f64::INFINITY`.
fn banded_distance(grid: &Grid, mesh: &Mesh, reach: f64) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; grid.node_count()];
    let h = grid.spacing;
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let mut bb = Aabb::from_points(&[a, b, c]);
        bb.min = geom::sub(bb.min, [reach; 3]);
        bb.max = geom::add(bb.max, [reach; 3]);
        let lo: [usize; 3] = std::array::from_fn(|k| {
            (((bb.min[k] - grid.origin[k]) / h).ceil().max(0.0) as usize).min(grid.dims[k] - 1)
        });
        let hi: [usize; 3] = std::array::from_fn(|k| {
            (((bb.max[k] - grid.origin[k]) / h).floor().max(0.0) as usize).min(grid.dims[k] - 1)
        });
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let p = grid.position(i, j, k);
                    let d = geom::dist(geom::closest_point_on_triangle(p, a, b, c), p);
                    let n = grid.index(i, j, k);
                    if d < dist[n] {
                        dist[n] = d;
                    }
                }
            }
        }
    }
    dist
}

/// Grid spacing giving roughly `leaf_budget` surface voxels for `area`.
pub fn spacing_for_budget(area: f64, leaf_budget: usize) -> f64 {
    (area / leaf_budget.max(1) as f64).sqrt()
}

/// Rebuilds `mesh` as the outer boundary of its `0.6 h` offset on a grid of
/// spacing `h`, where `h` gives about `leaf_budget` voxels on the surface.
/// The result is a closed, consistently oriented manifold; inner cavities
/// and self-intersections are absorbed.
pub fn watertight_remesh(mesh: &Mesh, leaf_budget: usize) -> Result<Mesh> {
    let area = mesh.area();
    if !(area > 0.0) {
        return Err(Error::ZeroArea);
    }
    let h = spacing_for_budget(area, leaf_budget);
    let bounds = mesh.bounds();
    let ext = bounds.extent();
    if ext.iter().fold(0.0f64, |m, &e| m.max(e)) < 2.0 * h {
        return Err(Error::BudgetTooSmall(format!(
            "voxel size {h:.3e} does not resolve a surface of extent {:.3e}; increase the leaf budget",
            bounds.diagonal()
        )));
    }
    let grid = Grid::covering(&bounds, h, 3);
    if grid.node_count() > MAX_GRID_NODES {
        return Err(Error::BudgetTooSmall(format!(
            "grid of {:?} nodes is too large for the bounding box; the mesh is too thin for this budget",
            grid.dims
        )));
    }
    let r = 0.6 * h;
    let dist = banded_distance(&grid, mesh, r + 1.01 * h);
    let blocked: Vec<bool> = dist.iter().map(|&d| d < r).collect();
    let outside = flood_exterior(&grid, &blocked);
    let values: Vec<f64> = (0..grid.node_count())
        .map(|n| {
            if blocked[n] {
                dist[n] - r
            } else if outside[n] {
                (dist[n] - r).min(h)
            } else {
                -h
            }
        })
        .collect();
    let out = largest_component(extract_isosurface(&grid, &values)?)?;
    if !out.is_watertight() {
        return Err(Error::Degenerate("remeshed surface is not watertight".into()));
    }
    Ok(out)
}

/// Closed shell around a point set: cells containing points are occupied,
/// dilated by `dilation` cells (Chebyshev), interior cavities filled, and
/// the boundary extracted. `spacing` is the cell size.
pub fn occupancy_shell(points: &[Point3], spacing: f64, dilation: usize) -> Result<Mesh> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let bounds = Aabb::from_points(points);
    let grid = Grid::covering(&bounds, spacing, dilation + 2);
    if grid.node_count() > MAX_GRID_NODES {
        return Err(Error::BudgetTooSmall(format!(
            "occupancy grid of {:?} nodes is too large; use a coarser spacing",
            grid.dims
        )));
    }
    let occupied = occupancy(&grid, points, dilation);
    let outside = flood_exterior(&grid, &occupied);
    if outside.iter().all(|&o| o) {
        return Err(Error::Degenerate("empty occupancy".into()));
    }
    let values: Vec<f64> = outside.iter().map(|&o| if o { 1.0 } else { -1.0 }).collect();
    largest_component(extract_isosurface(&grid, &values)?)
}

fn occupancy(grid: &Grid, points: &[Point3], dilation: usize) -> Vec<bool> {
    let mut occ = vec![false; grid.node_count()];
    let h = grid.spacing;
    let dl = dilation as isize;
    for p in points {
        let c: [isize; 3] = std::array::from_fn(|k| ((p[k] - grid.origin[k]) / h).round() as isize);
        for dk in -dl..=dl {
            for dj in -dl..=dl {
                for di in -dl..=dl {
                    let q = [c[0] + di, c[1] + dj, c[2] + dk];
                    if (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < grid.dims[a]) {
                        occ[grid.index(q[0] as usize, q[1] as usize, q[2] as usize)] = true;
                    }
                }
            }
        }
    }
    occ
}

/// Number of distinct cells of size `spacing` that contain points.
pub(crate) fn occupied_cells(points: &[Point3], spacing: f64) -> usize {
    let origin = Grid::covering(&Aabb::from_points(points), spacing, 1).origin;
    let cells: HashSet<[i64; 3]> = points
        .iter()
        .map(|p| std::array::from_fn(|k| ((p[k] - origin[k]) / spacing).round() as i64))
        .collect();
    cells.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn sphere_field_gives_closed_surface() {
        let grid = Grid {
            origin: [-1.5; 3],
            spacing: 0.1,
            dims: [31; 3],
        };
        let values: Vec<f64> = grid.nodes().map(|p| geom::norm(p) - 1.0).collect();
        let m = extract_isosurface(&grid, &values).unwrap();
        assert!(m.is_watertight());
        assert_eq!(m.genus(), 0);
        assert!(m.signed_volume() > 0.0);
        let vol = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((m.signed_volume() - vol).abs() / vol < 0.03);
    }

    #[test]
    fn remesh_keeps_genus() {
        let t = fixtures::torus(1.0, 0.4, 32, 16);
        let r = watertight_remesh(&t, 4000).unwrap();
        assert!(r.is_watertight());
        assert_eq!(r.genus(), 1);
        let s = watertight_remesh(&fixtures::icosphere(3), 4000).unwrap();
        assert!(s.is_watertight());
        assert_eq!(s.genus(), 0);
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let err = watertight_remesh(&fixtures::icosphere(2), 0).unwrap_err();
        assert!(matches!(err, Error::BudgetTooSmall(_)), "{err}");
    }
}
