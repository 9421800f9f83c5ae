//! Runs the same schedule twice on a block with a deep slot: once through
//! the network and once optimizing vertex displacements directly, and
//! prints the two logs side by side.
//!
//! Usage: `direct [iterations]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::fixtures::{self, SlottedBlock};
use selfprior::metrics::{f_score, FScoreConfig};
use selfprior::pipeline::{run_direct, run_reconstruction, InitSource, LevelSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).map_or(Ok(150), |s| s.parse())?;
    let truth = fixtures::mesh_implicit(&SlottedBlock::default(), 60);
    let cloud = fixtures::sample_cloud(&truth, 4000, &mut ChaCha8Rng::seed_from_u64(5));
    let schedule = LevelSchedule {
        iterations,
        initial_faces: 600,
        max_faces: 900,
        samples_start: 2000,
        samples_end: 4000,
        max_levels: 2,
        seed: 5,
        ..Default::default()
    };
    let net = run_reconstruction(&cloud, &InitSource::ConvexHull, &schedule)?;
    let direct = run_direct(&cloud, &InitSource::ConvexHull, &schedule)?;

    println!("{:>5} {:>5} {:>12} {:>12}", "iter", "level", "network", "direct");
    for (a, b) in net
        .log
        .iterations
        .iter()
        .zip(&direct.log.iterations)
        .step_by((iterations / 10).max(1))
    {
        println!("{:>5} {:>5} {:>12.4e} {:>12.4e}", a.iter, a.level, a.total, b.total);
    }
    let cfg = FScoreConfig::default();
    println!("network {}", f_score(&net.mesh, &truth, &cfg)?);
    println!("direct  {}", f_score(&direct.mesh, &truth, &cfg)?);
    Ok(())
}
