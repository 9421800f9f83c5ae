//! Initial meshes and remeshing: convex hull, coarse occupancy shell,
//! watertight voxel remesh and edge-collapse simplification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::fixtures::{self, TorusShape};
use selfprior::remesh::{coarse_shell, convex_hull, simplify, watertight_remesh, ShellConfig};
use selfprior::Mesh;

fn describe(name: &str, m: &Mesh) {
    println!(
        "{name:<18} faces {:>6} watertight {:<5} genus {}",
        m.face_count(),
        m.is_watertight(),
        if m.is_watertight() {
            m.genus().to_string()
        } else {
            "-".into()
        }
    );
}

fn main() -> selfprior::Result<()> {
    let truth = fixtures::mesh_implicit(&TorusShape { major: 1.0, minor: 0.4 }, 60);
    let cloud = fixtures::sample_cloud(&truth, 5000, &mut ChaCha8Rng::seed_from_u64(2));
    describe("reference torus", &truth);
    describe("convex hull", &convex_hull(cloud.points())?);
    let shell = coarse_shell(
        &cloud,
        &ShellConfig {
            leaf_budget: 1500,
            ..Default::default()
        },
    )?;
    describe("coarse shell", &shell);
    let dense = watertight_remesh(&shell, 8000)?;
    describe("watertight remesh", &dense);
    describe("simplified", &simplify(&dense, 1000)?);
    Ok(())
}
