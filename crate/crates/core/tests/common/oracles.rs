//! Brute-force references and goodness-of-fit statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfprior::diff::Tape;
use selfprior::geom::{self, Point3};
use selfprior::loss::{chamfer, chamfer_brute_force, chamfer_pairs, draw_samples};
use selfprior::spatial::PointIndex;
use selfprior::Mesh;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    let spread = rng.gen_range(0.1..10.0);
    (0..n)
        .map(|_| [0; 3].map(|_: i32| rng.gen_range(-spread..spread)))
        .collect()
}

fn argmin(p: Point3, set: &[Point3]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, &q) in set.iter().enumerate() {
        let d = geom::dist2(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Compares the indexed Chamfer with the double loop on `fixtures` random
/// pairs of sets of up to 200 points. Returns the worst relative error, or
/// a description of the first mismatch.
pub fn chamfer_oracle(fixtures: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..fixtures {
        let (n, m) = (rng.gen_range(1..=200), rng.gen_range(1..=200));
        let x = cloud(&mut rng, n);
        let y = cloud(&mut rng, m);
        let index = PointIndex::new(&x).map_err(|e| e.to_string())?;
        let pairs = chamfer_pairs(&index, &y).map_err(|e| e.to_string())?;
        for (i, &p) in x.iter().enumerate() {
            if pairs.x_to_y[i] != argmin(p, &y) {
                return Err(format!("fixture {case}: target {i} paired differently"));
            }
        }
        for (j, &q) in y.iter().enumerate() {
            if pairs.y_to_x[j] != argmin(q, &x) {
                return Err(format!("fixture {case}: sample {j} paired differently"));
            }
        }
        for squared in [true, false] {
            let mut tape = Tape::<f64>::new();
            let yv = tape.var(selfprior::diff::Tensor::from_points(&y));
            let c = chamfer(&mut tape, &x, yv, &pairs, squared).map_err(|e| e.to_string())?;
            let fast = tape.value(c).item();
            let slow = chamfer_brute_force(&x, &y, squared);
            let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
            if rel > 1e-10 {
                return Err(format!("fixture {case}: value {fast} vs {slow}"));
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Ten triangles of widely varying area, not sharing vertices.
pub fn ten_triangles() -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for i in 0..10 {
        let s = 0.2 + 0.3 * i as f64;
        let o = [3.0 * i as f64, 0.0, 0.0];
        let base = vertices.len();
        vertices.push(o);
        vertices.push(geom::add(o, [s, 0.0, 0.0]));
        vertices.push(geom::add(o, [0.3 * s, 0.8 * s, 0.1 * i as f64]));
        faces.push([base, base + 1, base + 2]);
    }
    Mesh::new(vertices, faces).expect("valid triangle soup")
}

/// Chi-square p-value of face frequencies against area proportions.
pub fn face_frequency_p(mesh: &Mesh, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw_samples(mesh, draws, &mut rng).expect("mesh has area");
    let areas = mesh.face_areas();
    let total: f64 = areas.iter().sum();
    let mut counts = vec![0usize; areas.len()];
    for &f in &d.faces {
        counts[f] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&c, &a)| {
            let e = draws as f64 * a / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((areas.len() - 1) as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}

/// Maps the barycentric weights of a uniform point in a triangle to a point
/// uniform on the unit square: `((1 - a)^2, b / (1 - a))` with `a = w[1]`,
/// `b = w[2]`.
fn to_square(w: [f64; 3]) -> (f64, f64) {
    let a = w[1];
    let rest = 1.0 - a;
    (rest * rest, if rest > 0.0 { w[2] / rest } else { 0.0 })
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Two-dimensional one-sample Kolmogorov–Smirnov test against the uniform
/// law on the unit square (Fasano–Franceschini statistic with the usual
/// correlation-corrected asymptotic p-value).
pub fn ks2d_uniform_p(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mut d = 0.0f64;
    for &(x0, y0) in points {
        let mut q = [0usize; 4];
        for &(x, y) in points {
            let i = usize::from(x > x0) + 2 * usize::from(y > y0);
            q[i] += 1;
        }
        let expected = [x0 * y0, (1.0 - x0) * y0, x0 * (1.0 - y0), (1.0 - x0) * (1.0 - y0)];
        for i in 0..4 {
            d = d.max((q[i] as f64 / n - expected[i]).abs());
        }
    }
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let r = sxy / (sxx * syy).sqrt();
    let sqn = n.sqrt();
    kolmogorov_q(sqn * d / (1.0 + (1.0 - r * r).sqrt() * (0.25 - 0.75 / sqn)))
}

/// KS p-value of within-triangle positions for `count` draws.
pub fn barycentric_p(mesh: &Mesh, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw_samples(mesh, count, &mut rng).expect("mesh has area");
    let pts: Vec<(f64, f64)> = d.bary.iter().map(|&w| to_square(w)).collect();
    ks2d_uniform_p(&pts)
}
