//! Procedural meshes and point clouds used by tests, examples and the
//! benchmark harness.

use rand::Rng;
use std::collections::HashMap;

use crate::geom::{self, Point3};
use crate::loss::sample_surface_points;
use crate::mesh::{Mesh, PointCloud};
use crate::remesh::voxel::{extract_isosurface, Grid};

pub fn tetrahedron() -> Mesh {
    let v = vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    let f = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::new(v, f).expect("valid tetrahedron")
}

/// Axis-aligned cube `[0,1]^3`, 12 outward-facing triangles.
pub fn cube() -> Mesh {
    let v = (0..8)
        .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
        .collect();
    let f = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    Mesh::new(v, f).expect("valid cube")
}

pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let v = v.into_iter().map(|p| geom::normalize(p).unwrap()).collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh::new(v, f).expect("valid icosahedron")
}

/// Unit sphere by repeated 4:1 subdivision of the icosahedron (20 * 4^level faces).
pub fn icosphere(level: usize) -> Mesh {
    let base = icosahedron();
    let mut verts = base.vertices().to_vec();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let p = geom::normalize(geom::add(verts[a], verts[b])).unwrap();
                    verts.push(p);
                    verts.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    Mesh::new(verts, faces).expect("valid icosphere")
}

/// Torus around the z axis with `nu x nv` quads split into triangles.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> Mesh {
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            verts.push([r * u.cos(), r * u.sin(), minor * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(verts, faces).expect("valid torus")
}

/// Flat unit square in the xy plane, `n x n` cells, two triangles each.
pub fn grid_square(n: usize) -> Mesh {
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            verts.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
    }
    let id = |i: usize, j: usize| i * (n + 1) + j;
    let mut faces = Vec::new();
    for i in 0..n {
        for j in 0..n {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(verts, faces).expect("valid grid")
}

/// An implicit solid: negative inside.
pub trait Implicit {
    fn value(&self, p: Point3) -> f64;
    fn bounds(&self) -> ([f64; 3], [f64; 3]);
}

/// Cassini oval `(x^2+y^2)^2 - 2c^2(x^2-y^2) = a^4 - c^4` revolved about
/// the x axis. A waist forms for `c < a < sqrt(2) c`.
#[derive(Clone, Copy, Debug)]
pub struct Peanut {
    pub a: f64,
    pub c: f64,
}

impl Default for Peanut {
    fn default() -> Self {
        Peanut { a: 1.03, c: 1.0 }
    }
}

impl Implicit for Peanut {
    fn value(&self, p: Point3) -> f64 {
        let rho2 = p[1] * p[1] + p[2] * p[2];
        let x2 = p[0] * p[0];
        let s = x2 + rho2;
        let c2 = self.c * self.c;
        // Divided by a rough gradient scale so the field is close to a distance near the surface.
        (s * s - 2.0 * c2 * (x2 - rho2) - (self.a.powi(4) - c2 * c2)) / (4.0 * self.a.powi(3))
    }
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let xm = (self.a * self.a + self.c * self.c).sqrt() + 0.05;
        let ym = self.a * self.a / (2.0 * self.c) + 0.05;
        ([-xm, -ym, -ym], [xm, ym, ym])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sphere {
    pub radius: f64,
}

impl Implicit for Sphere {
    fn value(&self, p: Point3) -> f64 {
        geom::norm(p) - self.radius
    }
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let r = self.radius * 1.05 + 0.02;
        ([-r; 3], [r; 3])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TorusShape {
    pub major: f64,
    pub minor: f64,
}

impl Implicit for TorusShape {
    fn value(&self, p: Point3) -> f64 {
        let q = (p[0] * p[0] + p[1] * p[1]).sqrt() - self.major;
        (q * q + p[2] * p[2]).sqrt() - self.minor
    }
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let r = self.major + self.minor + 0.05;
        let h = self.minor + 0.05;
        ([-r, -r, -h], [r, r, h])
    }
}

/// A rounded block with a deep, narrow slot cut from the top: a genus-0
/// solid whose cavity a shrinking hull cannot reach by nearest-point pulls alone.
#[derive(Clone, Copy, Debug)]
pub struct SlottedBlock {
    pub half: [f64; 3],
    pub slot_half_width: f64,
    pub slot_depth: f64,
    pub rounding: f64,
}

impl Default for SlottedBlock {
    fn default() -> Self {
        SlottedBlock {
            half: [1.0, 0.6, 0.8],
            slot_half_width: 0.22,
            slot_depth: 1.1,
            rounding: 0.08,
        }
    }
}

fn box_sdf(p: Point3, center: Point3, half: Point3) -> f64 {
    let q = [
        (p[0] - center[0]).abs() - half[0],
        (p[1] - center[1]).abs() - half[1],
        (p[2] - center[2]).abs() - half[2],
    ];
    let outside = geom::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
    outside + q[0].max(q[1]).max(q[2]).min(0.0)
}

impl Implicit for SlottedBlock {
    fn value(&self, p: Point3) -> f64 {
        let r = self.rounding;
        let outer = box_sdf(p, [0.0; 3], [self.half[0] - r, self.half[1] - r, self.half[2] - r]) - r;
        let top = self.half[2];
        let slot_center = [0.0, 0.0, top - self.slot_depth / 2.0 + 0.5];
        let slot = box_sdf(
            p,
            slot_center,
            [
                self.slot_half_width - r,
                self.half[1] + 1.0,
                self.slot_depth / 2.0 + 0.5 - r,
            ],
        ) - r;
        outer.max(-slot)
    }
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let h = self.half.map(|x| x + 0.05);
        ([-h[0], -h[1], -h[2]], h)
    }
}

/// Triangulates the zero level set of `shape` on a grid with `cells` cells
/// along the longest axis.
pub fn mesh_implicit(shape: &dyn Implicit, cells: usize) -> Mesh {
    let (lo, hi) = shape.bounds();
    let ext = geom::sub(hi, lo);
    let longest = ext[0].max(ext[1]).max(ext[2]);
    let h = longest / cells as f64;
    let dims = ext.map(|e| (e / h).ceil() as usize + 3);
    let origin = geom::sub(lo, [h; 3]);
    let grid = Grid {
        origin,
        spacing: h,
        dims,
    };
    let values: Vec<f64> = grid.nodes().map(|p| shape.value(p)).collect();
    extract_isosurface(&grid, &values).expect("implicit fixture produces a surface")
}

/// Area-uniform samples from a mesh with their (outward) face normals.
pub fn sample_cloud<R: Rng>(mesh: &Mesh, count: usize, rng: &mut R) -> PointCloud {
    let (points, faces) = sample_surface_points(mesh, count, rng).expect("mesh has area");
    let normals = mesh.face_normals();
    let n: Vec<Point3> = faces.iter().map(|&f| normals[f]).collect();
    PointCloud::new(points)
        .and_then(|c| c.with_normals(n, false))
        .expect("non-empty cloud with unit normals")
}
