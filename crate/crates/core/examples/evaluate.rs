//! Scores meshes against a reference: a perturbed copy, a uniformly grown
//! copy, and a copy with a region flattened, over the whole surface and
//! over the region only.

use selfprior::fixtures::{self, Sphere};
use selfprior::metrics::{f_score, f_score_completion, faces_within, FScoreConfig};

fn main() -> selfprior::Result<()> {
    let truth = fixtures::mesh_implicit(&Sphere { radius: 1.0 }, 50);
    let diag = truth.bounds().diagonal();
    let cfg = FScoreConfig::default();

    let wobbly = truth.transformed(|p| {
        let s = 1.0 + 0.004 * (7.0 * p[0]).sin();
        p.map(|x| x * s)
    });
    let grown = truth.transformed(|p| p.map(|x| x * 1.05));
    let flat = truth.transformed(|p| [p[0], p[1], p[2].min(0.8)]);
    let region = faces_within(&truth, [0.0, 0.0, 1.0], 0.2 * diag);

    println!("tau = {} x diagonal ({:.4})", cfg.tau, cfg.tau * diag);
    println!("wobbly       {}", f_score(&wobbly, &truth, &cfg)?);
    println!("grown 5%     {}", f_score(&grown, &truth, &cfg)?);
    println!("flattened    {}", f_score(&flat, &truth, &cfg)?);
    println!("  region     {}", f_score_completion(&flat, &truth, &region, &cfg)?);
    Ok(())
}
