//! Corrupts a clean cloud with noise, a removed region and flipped normals,
//! then reconstructs it and scores completion of the removed region.
//!
//! Usage: `corrupt [iterations]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::corrupt::{corrupt_cloud, Corruption, RegionRemoval};
use selfprior::fixtures::{self, Sphere};
use selfprior::metrics::{f_score, f_score_completion, faces_within, FScoreConfig};
use selfprior::pipeline::{run_reconstruction, InitSource, LevelSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).map_or(Ok(200), |s| s.parse())?;
    let truth = fixtures::mesh_implicit(&Sphere { radius: 1.0 }, 60);
    let clean = fixtures::sample_cloud(&truth, 5000, &mut ChaCha8Rng::seed_from_u64(8));
    let diag = clean.bounds().diagonal();

    let center = [0.0, 0.0, 1.0];
    let spec = Corruption {
        noise_sigma: 0.003,
        regions: RegionRemoval {
            centers: vec![center],
            random_count: 0,
            radius: 0.1,
            keep: 0.0,
        },
        flip_probability: 0.5,
        seed: 8,
    };
    let damaged = corrupt_cloud(&clean, &spec)?;
    println!("kept {} of {} points", damaged.cloud.len(), clean.len());

    let schedule = LevelSchedule {
        iterations,
        initial_faces: 800,
        max_faces: 1200,
        samples_start: 3000,
        samples_end: 6000,
        max_levels: 2,
        seed: 8,
        ..Default::default()
    };
    let result = run_reconstruction(&damaged.cloud, &InitSource::ConvexHull, &schedule)?;
    let cfg = FScoreConfig::default();
    let region = faces_within(&truth, center, 0.1 * diag);
    println!("full       {}", f_score(&result.mesh, &truth, &cfg)?);
    println!(
        "completion {}",
        f_score_completion(&result.mesh, &truth, &region, &cfg)?
    );
    println!("watertight {}", result.mesh.is_watertight());
    Ok(())
}
