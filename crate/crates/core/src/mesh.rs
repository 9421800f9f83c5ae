//! Triangle meshes with an edge-centric adjacency stencil.
//!
//! Every edge stores the four edges that surround it in its two incident
//! triangles. Convolutions in [`crate::net`] read features through this
//! stencil, so the ordering is fixed and reproducible: edges are sorted
//! lexicographically by `(lo, hi)` vertex pair, and the neighbor slots are
//! `(next, prev)` of the first incident face followed by `(next, prev)` of the
//! second, each taken in that face's own winding.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};

/// Faces, edges and the 4-neighbor edge stencil. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connectivity {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_neighbors: Vec<[usize; 4]>,
    edge_faces: Vec<EdgeFaces>,
    face_edges: Vec<[usize; 3]>,
}

/// The one or two faces incident to an edge, in increasing face order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeFaces {
    Boundary(usize),
    Interior(usize, usize),
}

impl EdgeFaces {
    pub fn count(&self) -> usize {
        match self {
            EdgeFaces::Boundary(_) => 1,
            EdgeFaces::Interior(..) => 2,
        }
    }

    pub fn first(&self) -> usize {
        match *self {
            EdgeFaces::Boundary(f) | EdgeFaces::Interior(f, _) => f,
        }
    }

    pub fn second(&self) -> Option<usize> {
        match *self {
            EdgeFaces::Boundary(_) => None,
            EdgeFaces::Interior(_, g) => Some(g),
        }
    }
}

/// Builds the sorted edge list, per-edge incident faces and the 4-neighbor stencil.
///
/// Boundary edges repeat their two in-face neighbors to fill all four slots.
pub fn build_edge_adjacency(faces: &[[usize; 3]], vertex_count: usize) -> Result<Connectivity> {
    for (fi, f) in faces.iter().enumerate() {
        for &v in f {
            if v >= vertex_count {
                return Err(Error::VertexOutOfRange {
                    face: fi,
                    vertex: v,
                    count: vertex_count,
                });
            }
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(Error::DegenerateFace { face: fi, vertices: *f });
        }
    }

    // (lo, hi, face, slot)
    let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(faces.len() * 3);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            half.push((a.min(b), a.max(b), fi, k));
        }
    }
    half.sort_unstable();

    let mut edges = Vec::with_capacity(half.len() / 2 + 1);
    let mut edge_faces = Vec::with_capacity(half.len() / 2 + 1);
    let mut face_edges = vec![[usize::MAX; 3]; faces.len()];
    let mut i = 0;
    while i < half.len() {
        let (lo, hi, _, _) = half[i];
        let mut j = i;
        while j < half.len() && half[j].0 == lo && half[j].1 == hi {
            j += 1;
        }
        let count = j - i;
        if count > 2 {
            return Err(Error::NonManifoldEdge(lo, hi, count));
        }
        let e = edges.len();
        edges.push([lo, hi]);
        for &(_, _, f, k) in &half[i..j] {
            face_edges[f][k] = e;
        }
        edge_faces.push(if count == 1 {
            EdgeFaces::Boundary(half[i].2)
        } else {
            EdgeFaces::Interior(half[i].2, half[i + 1].2)
        });
        i = j;
    }

    let slot_of = |f: usize, e: usize| -> usize {
        face_edges[f]
            .iter()
            .position(|&x| x == e)
            .expect("edge belongs to face")
    };
    let edge_neighbors = edge_faces
        .iter()
        .enumerate()
        .map(|(e, ef)| {
            let f1 = ef.first();
            let k1 = slot_of(f1, e);
            let a = face_edges[f1][(k1 + 1) % 3];
            let b = face_edges[f1][(k1 + 2) % 3];
            match ef.second() {
                Some(f2) => {
                    let k2 = slot_of(f2, e);
                    [a, b, face_edges[f2][(k2 + 1) % 3], face_edges[f2][(k2 + 2) % 3]]
                }
                None => [a, b, a, b],
            }
        })
        .collect();

    Ok(Connectivity {
        vertex_count,
        faces: faces.to_vec(),
        edges,
        edge_neighbors,
        edge_faces,
        face_edges,
    })
}

impl Connectivity {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn edge_neighbors(&self) -> &[[usize; 4]] {
        &self.edge_neighbors
    }
    pub fn edge_faces(&self) -> &[EdgeFaces] {
        &self.edge_faces
    }
    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// V - E + F over all vertex slots.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Every edge has exactly two incident faces and the faces admit a
    /// consistent orientation.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        if self.edge_faces.iter().any(|ef| ef.count() != 2) {
            return false;
        }
        self.is_orientable()
    }

    /// True when the stored winding already agrees across every interior edge.
    pub fn is_consistently_oriented(&self) -> bool {
        self.edge_faces.iter().enumerate().all(|(e, ef)| match ef.second() {
            None => true,
            Some(g) => self.traverses_forward(ef.first(), e) != self.traverses_forward(g, e),
        })
    }

    fn traverses_forward(&self, f: usize, e: usize) -> bool {
        let face = self.faces[f];
        let k = self.face_edges[f].iter().position(|&x| x == e).unwrap();
        face[k] == self.edges[e][0]
    }

    /// Propagates a flip bit across face adjacency; a conflict means the
    /// surface is non-orientable.
    pub fn is_orientable(&self) -> bool {
        let nf = self.faces.len();
        let mut flip: Vec<Option<bool>> = vec![None; nf];
        let mut queue = VecDeque::new();
        for seed in 0..nf {
            if flip[seed].is_some() {
                continue;
            }
            flip[seed] = Some(false);
            queue.push_back(seed);
            while let Some(f) = queue.pop_front() {
                let ff = flip[f].unwrap();
                for &e in &self.face_edges[f] {
                    let ef = self.edge_faces[e];
                    let g = match ef.second() {
                        Some(g) if g == f => ef.first(),
                        Some(g) => g,
                        None => continue,
                    };
                    // Consistent iff the two faces traverse e in opposite directions.
                    let same_dir = self.traverses_forward(f, e) == self.traverses_forward(g, e);
                    let want = ff ^ same_dir;
                    match flip[g] {
                        None => {
                            flip[g] = Some(want);
                            queue.push_back(g);
                        }
                        Some(have) if have != want => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Number of connected components over face adjacency.
    pub fn component_count(&self) -> usize {
        let nf = self.faces.len();
        let mut seen = vec![false; nf];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..nf {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(f) = stack.pop() {
                for &e in &self.face_edges[f] {
                    let ef = self.edge_faces[e];
                    for g in [Some(ef.first()), ef.second()].into_iter().flatten() {
                        if !seen[g] {
                            seen[g] = true;
                            stack.push(g);
                        }
                    }
                }
            }
        }
        count
    }

    /// Per-vertex count of incident edges.
    pub fn valences(&self) -> Vec<usize> {
        let mut v = vec![0; self.vertex_count];
        for e in &self.edges {
            v[e[0]] += 1;
            v[e[1]] += 1;
        }
        v
    }
}

/// A triangle mesh: vertex positions plus shared, immutable connectivity.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3>,
    topology: Arc<Connectivity>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() || vertices.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let topology = Arc::new(build_edge_adjacency(&faces, vertices.len())?);
        Ok(Mesh { vertices, topology })
    }

    /// Reuses existing connectivity with new positions.
    pub fn with_topology(vertices: Vec<Point3>, topology: Arc<Connectivity>) -> Result<Self> {
        if vertices.len() != topology.vertex_count() {
            return Err(Error::ShapeMismatch {
                op: "Mesh::with_topology",
                left: vec![vertices.len(), 3],
                right: vec![topology.vertex_count(), 3],
            });
        }
        Ok(Mesh { vertices, topology })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }
    pub fn vertices_mut(&mut self) -> &mut [Point3] {
        &mut self.vertices
    }
    pub fn topology(&self) -> &Arc<Connectivity> {
        &self.topology
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        self.topology.edges()
    }
    pub fn edge_neighbors(&self) -> &[[usize; 4]] {
        self.topology.edge_neighbors()
    }
    pub fn edge_faces(&self) -> &[EdgeFaces] {
        self.topology.edge_faces()
    }
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }
    pub fn face_count(&self) -> usize {
        self.topology.face_count()
    }
    pub fn edge_count(&self) -> usize {
        self.topology.edge_count()
    }
    pub fn euler_characteristic(&self) -> i64 {
        self.topology.euler_characteristic()
    }

    /// Genus of a closed connected surface, from V - E + F = 2 - 2g.
    pub fn genus(&self) -> i64 {
        (2 * self.topology.component_count() as i64 - self.euler_characteristic()) / 2
    }

    pub fn is_watertight(&self) -> bool {
        is_watertight(self)
    }

    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces()[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                geom::triangle_area(a, b, c)
            })
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Signed volume enclosed by the stored winding (positive for outward faces).
    pub fn signed_volume(&self) -> f64 {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                geom::dot(a, geom::cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Unit face normals following the stored winding.
    pub fn face_normals(&self) -> Vec<Point3> {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                geom::normalize(geom::triangle_normal(a, b, c)).unwrap_or([0.0, 0.0, 0.0])
            })
            .collect()
    }

    /// Reverses every face; used to make closed meshes outward-facing.
    pub fn flipped(&self) -> Result<Mesh> {
        let faces = self.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        Mesh::new(self.vertices.clone(), faces)
    }

    /// Drops vertices not referenced by any face.
    pub fn compacted(&self) -> Result<Mesh> {
        compact(&self.vertices, self.faces())
    }

    /// Applies `p -> (p - center) * scale`.
    pub fn transformed(&self, f: impl Fn(Point3) -> Point3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
            topology: self.topology.clone(),
        }
    }
}

/// Builds a mesh from a face list, keeping only referenced vertices.
pub fn compact(vertices: &[Point3], faces: &[[usize; 3]]) -> Result<Mesh> {
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut verts = Vec::new();
    let mut out = Vec::with_capacity(faces.len());
    for f in faces {
        let mut g = [0; 3];
        for k in 0..3 {
            let v = f[k];
            if v >= vertices.len() {
                return Err(Error::VertexOutOfRange {
                    face: out.len(),
                    vertex: v,
                    count: vertices.len(),
                });
            }
            if remap[v] == usize::MAX {
                remap[v] = verts.len();
                verts.push(vertices[v]);
            }
            g[k] = remap[v];
        }
        out.push(g);
    }
    Mesh::new(verts, out)
}

pub fn is_watertight(mesh: &Mesh) -> bool {
    mesh.topology.is_watertight()
}

/// Target point set with optional unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
    oriented: bool,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        Ok(PointCloud {
            points,
            normals: None,
            oriented: false,
        })
    }

    /// Attaches normals, normalizing each to unit length. Zero-length
    /// normals are rejected.
    pub fn with_normals(mut self, normals: Vec<Point3>, oriented: bool) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::ShapeMismatch {
                op: "PointCloud::with_normals",
                left: vec![self.points.len(), 3],
                right: vec![normals.len(), 3],
            });
        }
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| geom::normalize(n).ok_or_else(|| Error::Degenerate(format!("normal {i} has zero length"))))
            .collect::<Result<Vec<_>>>()?;
        self.normals = Some(normals);
        self.oriented = oriented;
        Ok(self)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }
    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }
    pub fn is_oriented(&self) -> bool {
        self.oriented
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }

    pub fn without_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
            oriented: false,
        }
    }

    /// Applies an affine map to points; normals are transformed by the linear part
    /// only when `rotate_normals` is supplied.
    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| f(p)).collect(),
            normals: self.normals.clone(),
            oriented: self.oriented,
        }
    }

    pub(crate) fn from_parts(points: Vec<Point3>, normals: Option<Vec<Point3>>, oriented: bool) -> Self {
        PointCloud {
            points,
            normals,
            oriented,
        }
    }
}

/// One overlapping piece of a [`PartMesh`].
#[derive(Clone, Debug)]
pub struct Part {
    pub mesh: Mesh,
    /// `vertex_map[local] = parent vertex index`.
    pub vertex_map: Vec<usize>,
    /// Parent face indices in this part.
    pub face_ids: Vec<usize>,
    /// Dilated bin bounds over `(axis_u, axis_v)`.
    pub bin_min: [f64; 2],
    pub bin_max: [f64; 2],
}

/// A mesh split into overlapping sub-meshes on an `n x n` grid.
#[derive(Clone, Debug)]
pub struct PartMesh {
    pub parent: Mesh,
    pub parts: Vec<Part>,
    /// The two bounding-box axes the grid spans, longest first.
    pub axes: [usize; 2],
    pub warnings: Vec<String>,
}

impl Part {
    /// True when `p` falls in this part's dilated bin.
    pub fn bin_contains(&self, p: Point3, axes: [usize; 2]) -> bool {
        (0..2).all(|k| p[axes[k]] >= self.bin_min[k] && p[axes[k]] <= self.bin_max[k])
    }
}

/// Bins vertices on an `grid_n x grid_n` grid over the two longest bounding-box
/// axes. Each bin is dilated by `overlap_margin` times the bounding-box
/// diagonal, and a part takes every face with a vertex inside its dilated bin.
pub fn split_into_parts(mesh: &Mesh, grid_n: usize, overlap_margin: f64) -> Result<PartMesh> {
    if grid_n == 0 {
        return Err(Error::Config("grid_n must be at least 1".into()));
    }
    let bounds = mesh.bounds();
    let order = bounds.axes_by_extent();
    let axes = [order[0], order[1]];
    if grid_n == 1 {
        let part = Part {
            mesh: mesh.clone(),
            vertex_map: (0..mesh.vertex_count()).collect(),
            face_ids: (0..mesh.face_count()).collect(),
            bin_min: [f64::NEG_INFINITY; 2],
            bin_max: [f64::INFINITY; 2],
        };
        return Ok(PartMesh {
            parent: mesh.clone(),
            parts: vec![part],
            axes,
            warnings: Vec::new(),
        });
    }

    let margin = overlap_margin * bounds.diagonal();
    let mut parts = Vec::new();
    let mut warnings = Vec::new();
    for iu in 0..grid_n {
        for iv in 0..grid_n {
            let mut bin_min = [0.0; 2];
            let mut bin_max = [0.0; 2];
            for (k, i) in [iu, iv].into_iter().enumerate() {
                let (lo, hi) = (bounds.min[axes[k]], bounds.max[axes[k]]);
                let w = (hi - lo) / grid_n as f64;
                bin_min[k] = if i == 0 {
                    f64::NEG_INFINITY
                } else {
                    lo + w * i as f64 - margin
                };
                bin_max[k] = if i + 1 == grid_n {
                    f64::INFINITY
                } else {
                    lo + w * (i + 1) as f64 + margin
                };
            }
            let inside = |p: Point3| (0..2).all(|k| p[axes[k]] >= bin_min[k] && p[axes[k]] <= bin_max[k]);
            let face_ids: Vec<usize> = mesh
                .faces()
                .iter()
                .enumerate()
                .filter(|(_, f)| f.iter().any(|&v| inside(mesh.vertices()[v])))
                .map(|(i, _)| i)
                .collect();
            if face_ids.is_empty() {
                warnings.push(format!("part ({iu}, {iv}) is empty and was dropped"));
                log::warn!("part ({iu}, {iv}) is empty and was dropped");
                continue;
            }
            let mut local = vec![usize::MAX; mesh.vertex_count()];
            let mut vertex_map = Vec::new();
            let faces: Vec<[usize; 3]> = face_ids
                .iter()
                .map(|&fi| {
                    let f = mesh.faces()[fi];
                    f.map(|v| {
                        if local[v] == usize::MAX {
                            local[v] = vertex_map.len();
                            vertex_map.push(v);
                        }
                        local[v]
                    })
                })
                .collect();
            let verts = vertex_map.iter().map(|&v| mesh.vertices()[v]).collect();
            parts.push(Part {
                mesh: Mesh::new(verts, faces)?,
                vertex_map,
                face_ids,
                bin_min,
                bin_max,
            });
        }
    }
    Ok(PartMesh {
        parent: mesh.clone(),
        parts,
        axes,
        warnings,
    })
}

/// Recombines per-part vertex positions; shared vertices take the mean of
/// their copies. Connectivity is the parent's.
pub fn merge_parts(part_mesh: &PartMesh, displaced: &[Vec<Point3>]) -> Result<Mesh> {
    if displaced.len() != part_mesh.parts.len() {
        return Err(Error::PartMismatch(format!(
            "expected {} parts, got {}",
            part_mesh.parts.len(),
            displaced.len()
        )));
    }
    let n = part_mesh.parent.vertex_count();
    let mut first: Vec<Option<Point3>> = vec![None; n];
    let mut delta = vec![[0.0; 3]; n];
    let mut count = vec![0usize; n];
    for (pi, (part, pos)) in part_mesh.parts.iter().zip(displaced).enumerate() {
        if pos.len() != part.vertex_map.len() {
            return Err(Error::PartMismatch(format!(
                "part {pi} has {} vertices, got {} positions",
                part.vertex_map.len(),
                pos.len()
            )));
        }
        for (&g, &p) in part.vertex_map.iter().zip(pos) {
            // Mean as first + mean(p - first) so identical copies merge exactly.
            match first[g] {
                None => first[g] = Some(p),
                Some(f0) => delta[g] = geom::add(delta[g], geom::sub(p, f0)),
            }
            count[g] += 1;
        }
    }
    let mut verts = part_mesh.parent.vertices().to_vec();
    for v in 0..n {
        if let Some(f0) = first[v] {
            verts[v] = geom::add(f0, geom::scale(delta[v], 1.0 / count[v] as f64));
        }
    }
    Mesh::with_topology(verts, part_mesh.parent.topology().clone())
}
