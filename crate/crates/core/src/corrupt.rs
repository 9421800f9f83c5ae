//! Synthetic corruptions of a clean point cloud: Gaussian noise, removed or
//! thinned regions, and flipped normals.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::mesh::PointCloud;

/// Low-density regions: balls around centers where only a fraction of the
/// points survive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegionRemoval {
    /// Explicit centers in cloud coordinates.
    pub centers: Vec<Point3>,
    /// Extra centers drawn from the cloud's own points.
    pub random_count: usize,
    /// Ball radius as a fraction of the bounding-box diagonal.
    pub radius: f64,
    /// Probability that a point inside a ball is kept.
    pub keep: f64,
}

/// What to do to a cloud. Lengths are fractions of its bounding-box diagonal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corruption {
    pub noise_sigma: f64,
    pub regions: RegionRemoval,
    /// Probability of negating each normal.
    pub flip_probability: f64,
    pub seed: u64,
}

impl Corruption {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config("noise sigma must be finite and non-negative".into()));
        }
        if !unit(self.regions.keep) || !unit(self.flip_probability) {
            return Err(Error::Config("keep and flip probabilities must lie in [0, 1]".into()));
        }
        let has_regions = !self.regions.centers.is_empty() || self.regions.random_count > 0;
        if has_regions && !(self.regions.radius > 0.0) {
            return Err(Error::Config("region radius must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`corrupt_cloud`].
#[derive(Clone, Debug)]
pub struct Corrupted {
    pub cloud: PointCloud,
    /// Region centers actually used.
    pub centers: Vec<Point3>,
    /// Indices of the input points that survived.
    pub kept: Vec<usize>,
}

/// Applies region removal, then noise, then normal flips, all drawn from
/// one generator seeded by `spec.seed`.
pub fn corrupt_cloud(cloud: &PointCloud, spec: &Corruption) -> Result<Corrupted> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let diag = cloud.bounds().diagonal();
    let pts = cloud.points();

    let mut centers = spec.regions.centers.clone();
    if spec.regions.random_count > 0 {
        let n = spec.regions.random_count.min(pts.len());
        centers.extend(sample(&mut rng, pts.len(), n).into_iter().map(|i| pts[i]));
    }
    let r2 = (spec.regions.radius * diag).powi(2);
    let kept: Vec<usize> = (0..pts.len())
        .filter(|&i| {
            let inside = centers.iter().any(|&c| geom::dist2(pts[i], c) <= r2);
            !inside || (spec.regions.keep > 0.0 && rng.gen::<f64>() < spec.regions.keep)
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::Config("corruption removed every point".into()));
    }

    let mut points: Vec<Point3> = kept.iter().map(|&i| pts[i]).collect();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma * diag).map_err(|e| Error::Config(e.to_string()))?;
        for p in &mut points {
            for x in p.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }
    let normals = cloud.normals().map(|ns| {
        kept.iter()
            .map(|&i| {
                let n = ns[i];
                if spec.flip_probability > 0.0 && rng.gen::<f64>() < spec.flip_probability {
                    geom::scale(n, -1.0)
                } else {
                    n
                }
            })
            .collect()
    });
    Ok(Corrupted {
        cloud: PointCloud::from_parts(points, normals, cloud.is_oriented()),
        centers,
        kept,
    })
}
