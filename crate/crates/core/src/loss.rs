//! Surface sampling and the reconstruction losses.
//!
//! Random draws are taken once per iteration ([`SampleDraw`]) and replayed
//! on the tape, so positions stay differentiable with respect to the mesh
//! vertices while the draws themselves are constants.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::diff::{Real, SparseRows, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::mesh::Mesh;
use crate::spatial::{mutual_knn_mask, PointIndex};

/// Frozen random draws: a face and barycentric weights per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    pub faces: Vec<usize>,
    /// Weights of the face's three corners; non-negative, summing to one.
    pub bary: Vec<[f64; 3]>,
}

/// Picks faces with probability proportional to area and a uniform point
/// in each. Pairs with `a1 + a2 >= 1` are reflected to `(1 - a1, 1 - a2)`.
pub fn draw_samples<R: Rng>(mesh: &Mesh, count: usize, rng: &mut R) -> Result<SampleDraw> {
    let areas = mesh.face_areas();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroArea);
    }
    let pick = WeightedIndex::new(&areas).map_err(|_| Error::ZeroArea)?;
    let mut faces = Vec::with_capacity(count);
    let mut bary = Vec::with_capacity(count);
    for _ in 0..count {
        faces.push(pick.sample(rng));
        let (mut a1, mut a2): (f64, f64) = (rng.gen(), rng.gen());
        if a1 + a2 >= 1.0 {
            a1 = 1.0 - a1;
            a2 = 1.0 - a2;
        }
        bary.push([1.0 - a1 - a2, a1, a2]);
    }
    Ok(SampleDraw { faces, bary })
}

/// Positions of a draw on a concrete mesh.
pub fn draw_positions(mesh: &Mesh, draw: &SampleDraw) -> Vec<Point3> {
    draw.faces
        .iter()
        .zip(&draw.bary)
        .map(|(&f, w)| {
            let [a, b, c] = mesh.triangle(f);
            geom::add(
                geom::add(geom::scale(a, w[0]), geom::scale(b, w[1])),
                geom::scale(c, w[2]),
            )
        })
        .collect()
}

/// Area-uniform surface samples and their source faces.
pub fn sample_surface_points<R: Rng>(mesh: &Mesh, count: usize, rng: &mut R) -> Result<(Vec<Point3>, Vec<usize>)> {
    let draw = draw_samples(mesh, count, rng)?;
    Ok((draw_positions(mesh, &draw), draw.faces))
}

/// Samples placed on the tape.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    /// `[S, 3]` sample positions.
    pub positions: Var,
    /// `[F, 3]` unit face normals of the deformed mesh.
    pub face_normals: Var,
    pub draw: SampleDraw,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.draw.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draw.faces.is_empty()
    }
}

/// Unit face normals `[F, 3]` of the vertex matrix `vertices` (`[V, 3]`).
pub fn face_normals<T: Real>(tape: &mut Tape<T>, vertices: Var, faces: &[[usize; 3]]) -> Result<Var> {
    let corner = |k: usize| faces.iter().map(|f| f[k]).collect::<Vec<_>>();
    let v0 = tape.gather_rows(vertices, &corner(0))?;
    let v1 = tape.gather_rows(vertices, &corner(1))?;
    let v2 = tape.gather_rows(vertices, &corner(2))?;
    let e1 = tape.sub(v1, v0)?;
    let e2 = tape.sub(v2, v0)?;
    let n = tape.cross_rows(e1, e2)?;
    Ok(tape.normalize_rows(n))
}

/// Replays `draw` on the vertex matrix `vertices`.
pub fn sample_surface<T: Real>(
    tape: &mut Tape<T>,
    vertices: Var,
    faces: &[[usize; 3]],
    draw: SampleDraw,
) -> Result<SampleBatch> {
    let v = tape.value(vertices).rows();
    let rows: Vec<Vec<(usize, T)>> = draw
        .faces
        .iter()
        .zip(&draw.bary)
        .map(|(&f, w)| (0..3).map(|k| (faces[f][k], T::of(w[k]))).collect())
        .collect();
    let map = SparseRows::from_rows(v, &rows)?;
    let positions = tape.sparse(vertices, Arc::new(map))?;
    let face_normals = face_normals(tape, vertices, faces)?;
    Ok(SampleBatch {
        positions,
        face_normals,
        draw,
    })
}

/// Nearest-neighbor pairings in both directions, frozen for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ChamferPairs {
    /// For each target point, its nearest sample.
    pub x_to_y: Vec<usize>,
    /// For each sample, its nearest target point.
    pub y_to_x: Vec<usize>,
}

pub fn chamfer_pairs(x_index: &PointIndex, y_points: &[Point3]) -> Result<ChamferPairs> {
    let y_index = PointIndex::new(y_points)?;
    Ok(ChamferPairs {
        x_to_y: x_index.points().iter().map(|&x| y_index.nearest(x).0).collect(),
        y_to_x: y_points.iter().map(|&y| x_index.nearest(y).0).collect(),
    })
}

/// Two-sided Chamfer distance between fixed targets `x` and samples `y`
/// (`[S, 3]` on the tape), each side averaged over its own point count.
/// With `squared`, distances are squared before averaging.
pub fn chamfer<T: Real>(tape: &mut Tape<T>, x: &[Point3], y: Var, pairs: &ChamferPairs, squared: bool) -> Result<Var> {
    if x.is_empty() || tape.value(y).rows() == 0 {
        return Err(Error::EmptyPointSet);
    }
    let xt = tape.constant(Tensor::from_points(x));
    let y_near = tape.gather_rows(y, &pairs.x_to_y)?;
    let d1 = tape.sub(xt, y_near)?;
    let x_near = tape.gather_rows(xt, &pairs.y_to_x)?;
    let d2 = tape.sub(y, x_near)?;
    let (n1, n2) = if squared {
        (tape.row_sq_norm(d1), tape.row_sq_norm(d2))
    } else {
        (tape.row_norm(d1), tape.row_norm(d2))
    };
    let m1 = tape.mean(n1);
    let m2 = tape.mean(n2);
    tape.add(m1, m2)
}

/// Reference Chamfer by a double loop, in the same convention as [`chamfer`].
pub fn chamfer_brute_force(x: &[Point3], y: &[Point3], squared: bool) -> f64 {
    let side = |a: &[Point3], b: &[Point3]| {
        a.iter()
            .map(|&p| {
                let d2 = b.iter().map(|&q| geom::dist2(p, q)).fold(f64::INFINITY, f64::min);
                if squared {
                    d2
                } else {
                    d2.sqrt()
                }
            })
            .sum::<f64>()
            / a.len() as f64
    };
    side(x, y) + side(y, x)
}

/// Beam-gap targets: samples that failed the mutual-kNN test and whose beam
/// hit a target point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeamTargets {
    pub samples: Vec<usize>,
    pub hits: Vec<Point3>,
}

/// Casts a beam of radius `epsilon` from every sample not marked good-fit
/// along its entry in `directions`.
pub fn beam_targets(
    samples: &[Point3],
    directions: &[Point3],
    cloud: &PointIndex,
    epsilon: f64,
    k: usize,
) -> Result<BeamTargets> {
    let good = mutual_knn_mask(samples, cloud, k)?;
    let mut out = BeamTargets::default();
    for (i, (&p, &d)) in samples.iter().zip(directions).enumerate() {
        if good[i] {
            continue;
        }
        if let Some(j) = cloud.beam_intersect(p, d, epsilon) {
            out.samples.push(i);
            out.hits.push(cloud.points()[j]);
        }
    }
    Ok(out)
}

/// Beam-gap loss: squared distance from each targeted sample to its hit,
/// summed and divided by the total sample count.
pub fn beam_gap<T: Real>(tape: &mut Tape<T>, y: Var, targets: &BeamTargets) -> Result<Var> {
    let s = tape.value(y).rows().max(1);
    if targets.samples.is_empty() {
        let zero = tape.constant(Tensor::scalar(T::zero()));
        return Ok(zero);
    }
    let ys = tape.gather_rows(y, &targets.samples)?;
    let hits = tape.constant(Tensor::from_points(&targets.hits));
    let d = tape.sub(ys, hits)?;
    let sq = tape.row_sq_norm(d);
    let total = tape.sum(sq);
    Ok(tape.scale(total, T::of(1.0 / s as f64)))
}

/// Mean of `1 - |n_x . n_f|` (or `1 - n_x . n_f` for oriented normals) over
/// target points, where `n_f` is the normal of the face in `paired_faces`.
pub fn normal_penalty<T: Real>(
    tape: &mut Tape<T>,
    face_normals: Var,
    x_normals: &[Point3],
    paired_faces: &[usize],
    oriented: bool,
) -> Result<Var> {
    let nf = tape.gather_rows(face_normals, paired_faces)?;
    let nx = tape.constant(Tensor::from_points(x_normals));
    let dot = tape.row_dot(nx, nf)?;
    let sim = if oriented { dot } else { tape.abs(dot) };
    let m = tape.mean(sim);
    Ok(tape.affine(m, -T::one(), T::one()))
}

/// Relative weights of the loss terms and when the beam-gap term is active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub chamfer: f64,
    pub beam: f64,
    pub normal: f64,
    /// Beam-gap is evaluated on iterations divisible by this.
    pub beam_every: usize,
    /// First level (0-based) on which beam-gap is evaluated.
    pub beam_from_level: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            chamfer: 1.0,
            beam: 0.05,
            normal: 0.01,
            beam_every: 5,
            beam_from_level: 1,
        }
    }
}

impl LossWeights {
    pub fn beam_active(&self, iteration: usize, level: usize) -> bool {
        self.beam > 0.0
            && self.beam_every > 0
            && level >= self.beam_from_level
            && iteration.is_multiple_of(self.beam_every)
    }
}

/// The terms of one iteration's loss.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub chamfer: Var,
    pub beam: Option<Var>,
    pub normal: Option<Var>,
}

/// Weighted sum of the present terms.
pub fn total_loss<T: Real>(tape: &mut Tape<T>, terms: &LossTerms, w: &LossWeights) -> Result<Var> {
    let mut total = tape.scale(terms.chamfer, T::of(w.chamfer));
    if let Some(b) = terms.beam {
        let s = tape.scale(b, T::of(w.beam));
        total = tape.add(total, s)?;
    }
    if let Some(n) = terms.normal {
        let s = tape.scale(n, T::of(w.normal));
        total = tape.add(total, s)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pts_tensor(tape: &mut Tape<f64>, p: &[Point3]) -> Var {
        tape.var(Tensor::from_points(p))
    }

    #[test]
    fn chamfer_examples() {
        let mut tape = Tape::<f64>::new();
        let x = [[0.0, 0.0, 0.0]];
        let y = pts_tensor(&mut tape, &[[1.0, 0.0, 0.0]]);
        let idx = PointIndex::new(&x).unwrap();
        let pairs = chamfer_pairs(&idx, &[[1.0, 0.0, 0.0]]).unwrap();
        let c = chamfer(&mut tape, &x, y, &pairs, false).unwrap();
        assert_eq!(tape.value(c).item(), 2.0);

        let same = [[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]];
        let y = pts_tensor(&mut tape, &same);
        let idx = PointIndex::new(&same).unwrap();
        let pairs = chamfer_pairs(&idx, &same).unwrap();
        let c = chamfer(&mut tape, &same, y, &pairs, false).unwrap();
        assert_eq!(tape.value(c).item(), 0.0);
    }

    #[test]
    fn beam_gap_single_sample() {
        let cloud = PointIndex::new(&[[0.0, 0.0, 2.0], [5.0, 5.0, 5.0]]).unwrap();
        // The second sample claims (0,0,2), so the first is not a good fit.
        let samples = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.9]];
        let t = beam_targets(&samples, &[[0.0, 0.0, 1.0]; 2], &cloud, 0.5, 1).unwrap();
        assert_eq!(t.samples, vec![0]);
        let mut tape = Tape::<f64>::new();
        let y = pts_tensor(&mut tape, &samples);
        let b = beam_gap(&mut tape, y, &t).unwrap();
        assert_eq!(tape.value(b).item(), 4.0 / 2.0);
    }

    #[test]
    fn beam_gap_zero_when_good_fit() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let cloud = PointIndex::new(&pts).unwrap();
        let t = beam_targets(&pts, &[[0.0, 0.0, 1.0]; 3], &cloud, 10.0, 1).unwrap();
        assert!(t.samples.is_empty());
    }

    #[test]
    fn normal_penalty_cases() {
        let mut tape = Tape::<f64>::new();
        let fnorm = tape.constant(Tensor::from_points(&[[0.0, 0.0, 1.0]]));
        for (nx, want) in [([0.0, 0.0, 1.0], 0.0), ([0.0, 0.0, -1.0], 0.0), ([1.0, 0.0, 0.0], 1.0)] {
            let p = normal_penalty(&mut tape, fnorm, &[nx], &[0], false).unwrap();
            assert_eq!(tape.value(p).item(), want);
        }
        let p = normal_penalty(&mut tape, fnorm, &[[0.0, 0.0, -1.0]], &[0], true).unwrap();
        assert_eq!(tape.value(p).item(), 2.0);
    }

    #[test]
    fn weights_and_cadence() {
        let w = LossWeights::default();
        assert!(!w.beam_active(3, 1));
        assert!(w.beam_active(5, 1));
        assert!(!w.beam_active(5, 0));
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(4.0));
        let n = tape.constant(Tensor::scalar(0.5));
        let only = LossWeights {
            beam: 0.0,
            normal: 0.0,
            ..w
        };
        let t = total_loss(
            &mut tape,
            &LossTerms {
                chamfer: c,
                beam: None,
                normal: None,
            },
            &only,
        )
        .unwrap();
        assert_eq!(tape.value(t).item(), 2.0);
        let t = total_loss(
            &mut tape,
            &LossTerms {
                chamfer: c,
                beam: Some(b),
                normal: Some(n),
            },
            &w,
        )
        .unwrap();
        assert!((tape.value(t).item() - (2.0 + 0.05 * 4.0 + 0.01 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn samples_inside_single_triangle() {
        let m = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pts, _) = sample_surface_points(&m, 2000, &mut rng).unwrap();
        assert!(pts
            .iter()
            .all(|p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0 + 1e-12 && p[2] == 0.0));
    }

    #[test]
    fn zero_area_rejected() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(draw_samples(&m, 10, &mut rng), Err(Error::ZeroArea)));
    }
}
