//! F-score evaluation of a reconstruction against a reference surface.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::sample_surface_points;
use crate::mesh::{compact, Mesh};
use crate::spatial::TriangleIndex;

/// Precision, recall and F-score in percent at one threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct FScoreReport {
    /// Threshold as a fraction of the reference bounding-box diagonal.
    pub tau: f64,
    /// The same threshold in model units.
    pub tau_abs: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub precision_samples: usize,
    pub recall_samples: usize,
}

impl FScoreReport {
    fn new(tau: f64, tau_abs: f64, hits: (usize, usize), counts: (usize, usize)) -> Self {
        let precision = 100.0 * hits.0 as f64 / counts.0 as f64;
        let recall = 100.0 * hits.1 as f64 / counts.1 as f64;
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        FScoreReport {
            tau,
            tau_abs,
            precision,
            recall,
            f_score,
            precision_samples: counts.0,
            recall_samples: counts.1,
        }
    }
}

impl fmt::Display for FScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tau={} precision={:.3} recall={:.3} fscore={:.3} samples={}/{}",
            self.tau, self.precision, self.recall, self.f_score, self.precision_samples, self.recall_samples
        )
    }
}

/// Sampling settings shared by both F-score variants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FScoreConfig {
    /// Threshold as a fraction of the reference bounding-box diagonal.
    pub tau: f64,
    /// Points drawn from each surface.
    pub samples: usize,
    pub seed: u64,
}

impl Default for FScoreConfig {
    fn default() -> Self {
        FScoreConfig {
            tau: 0.01,
            samples: 100_000,
            seed: 0,
        }
    }
}

fn check_mesh(mesh: &Mesh, what: &str) -> Result<()> {
    if mesh.face_count() == 0 {
        return Err(Error::EmptyMesh);
    }
    if mesh.area() <= 0.0 {
        return Err(Error::ZeroArea);
    }
    if !mesh.vertices().iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} vertices")));
    }
    Ok(())
}

fn within(points: &[[f64; 3]], surface: &TriangleIndex, tau_abs: f64) -> usize {
    points.iter().filter(|&&p| surface.distance(p) <= tau_abs).count()
}

fn score(recon: &Mesh, truth: &Mesh, recall_surface: &Mesh, cfg: &FScoreConfig) -> Result<FScoreReport> {
    check_mesh(recon, "reconstruction")?;
    check_mesh(truth, "reference")?;
    if !(cfg.tau > 0.0) || cfg.samples == 0 {
        return Err(Error::Config("F-score needs tau > 0 and at least one sample".into()));
    }
    let tau_abs = cfg.tau * truth.bounds().diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (from_recon, _) = sample_surface_points(recon, cfg.samples, &mut rng)?;
    let (from_truth, _) = sample_surface_points(recall_surface, cfg.samples, &mut rng)?;
    let truth_index = TriangleIndex::from_mesh(truth)?;
    let recon_index = TriangleIndex::from_mesh(recon)?;
    let hits = (
        within(&from_recon, &truth_index, tau_abs),
        within(&from_truth, &recon_index, tau_abs),
    );
    Ok(FScoreReport::new(
        cfg.tau,
        tau_abs,
        hits,
        (from_recon.len(), from_truth.len()),
    ))
}

/// Precision samples the reconstruction against the reference surface;
/// recall samples the reference against the reconstruction. Distances are
/// exact point-to-triangle distances.
pub fn f_score(recon: &Mesh, truth: &Mesh, cfg: &FScoreConfig) -> Result<FScoreReport> {
    score(recon, truth, truth, cfg)
}

/// Like [`f_score`], but recall is sampled only from the reference faces in
/// `missing_region`.
pub fn f_score_completion(
    recon: &Mesh,
    truth: &Mesh,
    missing_region: &[usize],
    cfg: &FScoreConfig,
) -> Result<FScoreReport> {
    if missing_region.is_empty() {
        return Err(Error::Config("completion region is empty".into()));
    }
    let mut faces = Vec::with_capacity(missing_region.len());
    for &f in missing_region {
        if f >= truth.face_count() {
            return Err(Error::Config(format!("region face {f} out of range")));
        }
        faces.push(truth.faces()[f]);
    }
    let region = compact(truth.vertices(), &faces)?;
    score(recon, truth, &region, cfg)
}

/// Faces of `mesh` whose centroid lies within `radius` of `center`.
pub fn faces_within(mesh: &Mesh, center: [f64; 3], radius: f64) -> Vec<usize> {
    (0..mesh.face_count())
        .filter(|&f| {
            let [a, b, c] = mesh.triangle(f);
            let g = [
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
                (a[2] + b[2] + c[2]) / 3.0,
            ];
            crate::geom::dist(g, center) <= radius
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cfg(tau: f64) -> FScoreConfig {
        FScoreConfig {
            tau,
            samples: 10_000,
            seed: 3,
        }
    }

    #[test]
    fn identical_meshes_score_100() {
        let m = fixtures::icosphere(2);
        let r = f_score(&m, &m, &cfg(0.01)).unwrap();
        assert_eq!((r.precision, r.recall, r.f_score), (100.0, 100.0, 100.0));
    }

    #[test]
    fn far_displacement_scores_zero() {
        let m = fixtures::icosphere(2);
        let tau_abs = 0.01 * m.bounds().diagonal();
        let moved = m.transformed(|p| [p[0] + 10.0 * tau_abs + 2.0, p[1], p[2]]);
        let r = f_score(&moved, &m, &cfg(0.01)).unwrap();
        assert_eq!(r.f_score, 0.0);
    }

    #[test]
    fn scaled_cube_within_bound() {
        let cube = fixtures::cube();
        let c = cube.bounds().center();
        let big = cube.transformed(|p| [0, 1, 2].map(|k| c[k] + 1.02 * (p[k] - c[k])));
        let r = f_score(&big, &cube, &cfg(0.05)).unwrap();
        assert_eq!((r.precision, r.recall), (100.0, 100.0));
    }

    #[test]
    fn completion_whole_surface_equals_plain() {
        let m = fixtures::icosphere(2);
        let moved = m.transformed(|p| [p[0] * 1.01, p[1], p[2]]);
        let all: Vec<usize> = (0..m.face_count()).collect();
        let a = f_score(&moved, &m, &cfg(0.005)).unwrap();
        let b = f_score_completion(&moved, &m, &all, &cfg(0.005)).unwrap();
        assert_eq!(a, b);
        assert!(f_score_completion(&moved, &m, &[], &cfg(0.005)).is_err());
    }
}
