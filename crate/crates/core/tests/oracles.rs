mod common;

use common::oracles::{barycentric_p, chamfer_oracle, face_frequency_p, ks2d_uniform_p, ten_triangles};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfprior::geom::{self, Point3};
use selfprior::spatial::{mutual_knn_mask, PointIndex};

#[test]
fn chamfer_matches_double_loop() {
    let worst = chamfer_oracle(300, 21).unwrap();
    assert!(worst <= 1e-10);
}

#[test]
fn face_frequencies_follow_area() {
    assert!(face_frequency_p(&ten_triangles(), 100_000, 3) > 0.001);
}

#[test]
fn barycentric_draws_are_uniform() {
    assert!(barycentric_p(&ten_triangles(), 3000, 4) > 0.001);
}

#[test]
fn ks2d_rejects_a_biased_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let biased: Vec<(f64, f64)> = (0..2000).map(|_| (rng.gen::<f64>().powf(1.3), rng.gen())).collect();
    assert!(ks2d_uniform_p(&biased) < 0.001);
    let uniform: Vec<(f64, f64)> = (0..2000).map(|_| (rng.gen(), rng.gen())).collect();
    assert!(ks2d_uniform_p(&uniform) > 0.001);
}

fn brute_knn(q: Point3, set: &[Point3], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = set.iter().enumerate().map(|(i, &p)| (geom::dist2(q, p), i)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kth = d[k.min(d.len()) - 1].0;
    d.iter().take_while(|e| e.0 <= kth).map(|e| e.1).collect()
}

fn brute_mutual(samples: &[Point3], targets: &[Point3], k: usize) -> Vec<bool> {
    samples
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            brute_knn(s, targets, k)
                .into_iter()
                .any(|t| brute_knn(targets[t], samples, k).contains(&i))
        })
        .collect()
}

#[test]
fn mutual_knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.gen_range(1..80);
        let m = rng.gen_range(1..80);
        let k = rng.gen_range(1..6);
        let pts =
            |rng: &mut ChaCha8Rng, n| -> Vec<Point3> { (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect() };
        let samples = pts(&mut rng, n);
        let targets = pts(&mut rng, m);
        let index = PointIndex::new(&targets).unwrap();
        assert_eq!(
            mutual_knn_mask(&samples, &index, k).unwrap(),
            brute_mutual(&samples, &targets, k)
        );
    }
}

#[test]
fn mutual_knn_on_integer_lattices_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let pts = |rng: &mut ChaCha8Rng| -> Vec<Point3> {
            (0..40)
                .map(|_| [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64, 0.0])
                .collect()
        };
        let samples = pts(&mut rng);
        let targets = pts(&mut rng);
        let k = rng.gen_range(1..4);
        let index = PointIndex::new(&targets).unwrap();
        assert_eq!(
            mutual_knn_mask(&samples, &index, k).unwrap(),
            brute_mutual(&samples, &targets, k)
        );
    }
}

#[test]
fn mutual_knn_is_symmetric_for_identical_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts: Vec<Point3> = (0..200).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let index = PointIndex::new(&pts).unwrap();
    assert!(mutual_knn_mask(&pts, &index, 1).unwrap().into_iter().all(|g| g));
}
