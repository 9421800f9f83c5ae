//! Initial meshes and between-level remeshing.

pub mod hull;
pub mod simplify;
pub mod voxel;

pub use hull::convex_hull;
pub use simplify::simplify;
pub use voxel::{watertight_remesh, Grid};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, PointCloud};

/// Settings for [`coarse_shell`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellConfig {
    /// Approximate number of occupied cells.
    pub leaf_budget: usize,
    /// Dilation radius in cells.
    pub dilation: usize,
    /// Face count after simplification; 0 keeps the raw isosurface.
    pub target_faces: usize,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig {
            leaf_budget: 400,
            dilation: 1,
            target_faces: 0,
        }
    }
}

/// Closed shell around a point cloud from a coarse occupancy grid. The cell
/// size is chosen so that about `leaf_budget` cells hold points. The shell
/// may have genus above zero when holes survive the dilation.
pub fn coarse_shell(cloud: &PointCloud, cfg: &ShellConfig) -> Result<Mesh> {
    if cfg.leaf_budget < 8 {
        return Err(Error::Config("shell leaf budget must be at least 8".into()));
    }
    let pts = cloud.points();
    let diag = cloud.bounds().diagonal();
    if !(diag > 0.0) {
        return Err(Error::Degenerate("point cloud has zero extent".into()));
    }
    // Occupied cell count falls as the spacing grows; bisect in log space.
    let (mut lo, mut hi) = (diag * 1e-4, diag);
    if voxel::occupied_cells(pts, lo) <= cfg.leaf_budget {
        return Err(Error::Config(format!(
            "shell leaf budget {} is more cells than {} points can occupy",
            cfg.leaf_budget,
            pts.len()
        )));
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if voxel::occupied_cells(pts, mid) > cfg.leaf_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shell = voxel::occupancy_shell(pts, hi, cfg.dilation)?;
    if cfg.target_faces > 0 {
        simplify(&shell, cfg.target_faces)
    } else {
        Ok(shell)
    }
}

/// Target face count for the next level: `round(growth * faces)` clamped to
/// `max_faces`, never below the current count.
pub fn next_face_budget(current: usize, growth: f64, max_faces: usize) -> usize {
    ((current as f64 * growth).round() as usize)
        .min(max_faces)
        .max(current.min(max_faces))
}

/// Remeshes `current` watertight and simplifies it to the next face budget.
pub fn next_level_mesh(current: &Mesh, growth: f64, max_faces: usize, leaf_budget: usize) -> Result<Mesh> {
    let target = next_face_budget(current.face_count(), growth, max_faces);
    let dense = watertight_remesh(current, leaf_budget)?;
    if dense.face_count() < target {
        log::warn!(
            "remesh produced {} faces, below the target {target}; raise the leaf budget",
            dense.face_count()
        );
    }
    simplify(&dense, target)
}

/// Remeshes an arbitrary closed starting mesh to a clean `target_faces` mesh.
pub fn prepare_initial(mesh: &Mesh, target_faces: usize, leaf_budget: usize) -> Result<Mesh> {
    let dense = watertight_remesh(mesh, leaf_budget)?;
    simplify(&dense, target_faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_growth() {
        assert_eq!(next_face_budget(2000, 1.5, 100_000), 3000);
        assert_eq!(next_face_budget(2000, 1.5, 2500), 2500);
        assert_eq!(next_face_budget(2500, 1.5, 2500), 2500);
    }

    #[test]
    fn shell_genus() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let torus = fixtures::mesh_implicit(
            &fixtures::TorusShape {
                major: 1.0,
                minor: 0.35,
            },
            60,
        );
        let cloud = fixtures::sample_cloud(&torus, 20_000, &mut rng);
        let fine = coarse_shell(
            &cloud,
            &ShellConfig {
                leaf_budget: 1500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fine.is_watertight());
        assert_eq!(fine.genus(), 1);
        let coarse = coarse_shell(
            &cloud,
            &ShellConfig {
                leaf_budget: 20,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(coarse.is_watertight());
        assert_eq!(coarse.genus(), 0);

        let sphere = fixtures::icosphere(3);
        let cloud = fixtures::sample_cloud(&sphere, 5000, &mut rng);
        let s = coarse_shell(&cloud, &ShellConfig::default()).unwrap();
        assert_eq!(s.genus(), 0);
    }

    #[test]
    fn shell_budget_above_point_count_is_rejected() {
        let cloud = fixtures::sample_cloud(&fixtures::icosphere(2), 300, &mut ChaCha8Rng::seed_from_u64(3));
        let cfg = ShellConfig {
            leaf_budget: 300,
            ..Default::default()
        };
        assert!(matches!(coarse_shell(&cloud, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn level_growth() {
        let m = fixtures::icosphere(4);
        let m = simplify(&m, 2000).unwrap();
        let next = next_level_mesh(&m, 1.5, 10_000, 20_000).unwrap();
        assert!(next.is_watertight());
        assert!((next.face_count() as i64 - 3000).abs() <= 2, "{}", next.face_count());
    }
}
