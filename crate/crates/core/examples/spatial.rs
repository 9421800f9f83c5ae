//! Nearest-neighbor, k-NN, mutual k-NN and beam queries on a point index.

use selfprior::spatial::{mutual_knn_mask, PointIndex};

fn main() -> selfprior::Result<()> {
    let lattice: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
    let index = PointIndex::new(&lattice)?;
    println!("nearest to (3.4, 0.2, 0): {:?}", index.nearest([3.4, 0.2, 0.0]));
    println!("3 nearest to (3.4, 0, 0): {:?}", index.knn([3.4, 0.0, 0.0], 3)?);

    // Samples offset by half a spacing: every sample is a mutual neighbor.
    let samples: Vec<[f64; 3]> = (0..10).map(|i| [i as f64 + 0.5, 0.0, 0.0]).collect();
    let mask = mutual_knn_mask(&samples, &index, 1)?;
    println!(
        "mutual 1-NN good fits: {}/{}",
        mask.iter().filter(|&&g| g).count(),
        mask.len()
    );

    // A beam from below along +x with radius 0.3.
    let hit = index.beam_intersect([-2.0, 0.2, 0.0], [1.0, 0.0, 0.0], 0.3);
    println!("beam from (-2, 0.2, 0) along +x hits point {hit:?}");
    Ok(())
}
