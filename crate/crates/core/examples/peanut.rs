//! Reconstructs a concave peanut from 5,000 samples, starting at its convex hull.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::fixtures::{self, Peanut};
use selfprior::metrics::{f_score, FScoreConfig};
use selfprior::pipeline::{run_reconstruction, InitSource, LevelSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let iterations = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse())?;
    let truth = fixtures::mesh_implicit(&Peanut::default(), 80);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud = fixtures::sample_cloud(&truth, 5000, &mut rng);
    let schedule = LevelSchedule {
        iterations,
        initial_faces: 1000,
        max_faces: 1500,
        samples_start: 5000,
        samples_end: 10_000,
        max_levels: 2,
        seed: 7,
        ..Default::default()
    };
    let out = run_reconstruction(&cloud, &InitSource::ConvexHull, &schedule)?;
    let report = f_score(&out.mesh, &truth, &FScoreConfig::default())?;
    let first = out.log.first_chamfer().unwrap_or(0.0);
    let last = out.log.last_chamfer().unwrap_or(0.0);
    println!(
        "faces {} watertight {}",
        out.mesh.face_count(),
        out.mesh.is_watertight()
    );
    println!("chamfer {first:.3e} -> {last:.3e} (ratio {:.4})", last / first);
    println!("{report}");
    Ok(())
}
