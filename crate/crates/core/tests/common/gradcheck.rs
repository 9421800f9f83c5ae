//! Central finite-difference checks of every differentiable operation.
//!
//! Each case maps input tensors to an output; the output is projected onto a
//! fixed random tensor to get a scalar, and the tape's gradient is compared
//! with `(f(x + h) - f(x - h)) / 2h` at random coordinates.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfprior::diff::{SparseRows, Tape, Tensor, Var};
use selfprior::fixtures;
use selfprior::loss::{
    beam_gap, chamfer, chamfer_pairs, draw_samples, face_normals, normal_penalty, sample_surface, BeamTargets,
};
use selfprior::net::{build_delta_v, edge_conv};
use selfprior::spatial::PointIndex;
use selfprior::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const FLOOR: f64 = 1e-3;

type Fun = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub f: Fun,
}

#[derive(Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub coords: usize,
    pub max_rel: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, so `abs` and kinks are not crossed.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.5);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn scalarize(tape: &mut Tape<f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let proj = tape.constant(w.clone());
    let p = tape.mul(y, proj)?;
    Ok(tape.sum(p))
}

fn value(case: &Case, inputs: &[Tensor<f64>], w: &Tensor<f64>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let y = (case.f)(&mut tape, &vars).expect("case evaluates");
    let s = scalarize(&mut tape, y, w).expect("projection");
    tape.value(s).item()
}

pub fn run(case: &Case, coords: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.var(t.clone())).collect();
    let y = (case.f)(&mut tape, &vars).expect("case evaluates");
    let w = uniform(&mut rng, tape.shape(y).to_vec(), -1.0, 1.0);
    let s = scalarize(&mut tape, y, &w).expect("projection");
    let grads = tape.backward(s).expect("backward");

    let sizes: Vec<usize> = case.inputs.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut max_rel = 0.0f64;
    for _ in 0..coords {
        let mut flat = rng.gen_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let analytic = grads.get(vars[which]).map_or(0.0, |g| g.data()[flat]);
        let mut plus = case.inputs.clone();
        plus[which].data_mut()[flat] += STEP;
        let mut minus = case.inputs.clone();
        minus[which].data_mut()[flat] -= STEP;
        let numeric = (value(case, &plus, &w) - value(case, &minus, &w)) / (2.0 * STEP);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        max_rel = max_rel.max(rel);
    }
    Outcome {
        name: case.name,
        coords,
        max_rel,
    }
}

pub fn cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out: Vec<Case> = Vec::new();
    let mut push = |name, inputs, f: Fun| out.push(Case { name, inputs, f });

    // Elementwise and shape primitives.
    push(
        "add",
        vec![uniform(r, vec![20, 6], -1.0, 1.0), uniform(r, vec![20, 6], -1.0, 1.0)],
        Box::new(|t, v| t.add(v[0], v[1])),
    );
    push(
        "sub",
        vec![uniform(r, vec![20, 6], -1.0, 1.0), uniform(r, vec![20, 6], -1.0, 1.0)],
        Box::new(|t, v| t.sub(v[0], v[1])),
    );
    push(
        "mul",
        vec![uniform(r, vec![20, 6], -1.0, 1.0), uniform(r, vec![20, 6], -1.0, 1.0)],
        Box::new(|t, v| t.mul(v[0], v[1])),
    );
    {
        let a = uniform(r, vec![20, 6], -1.0, 1.0);
        let b = a.map(|x| if x > 0.0 { x - 0.3 } else { x + 0.3 });
        push("maximum", vec![a, b], Box::new(|t, v| t.maximum(v[0], v[1])));
    }
    push(
        "affine",
        vec![uniform(r, vec![120], -1.0, 1.0)],
        Box::new(|t, v| Ok(t.affine(v[0], -1.7, 0.4))),
    );
    push(
        "add_row",
        vec![uniform(r, vec![30, 5], -1.0, 1.0), uniform(r, vec![5], -1.0, 1.0)],
        Box::new(|t, v| t.add_row(v[0], v[1])),
    );
    push(
        "matmul",
        vec![uniform(r, vec![12, 9], -1.0, 1.0), uniform(r, vec![9, 7], -1.0, 1.0)],
        Box::new(|t, v| t.matmul(v[0], v[1])),
    );
    push(
        "concat_cols",
        vec![uniform(r, vec![25, 2], -1.0, 1.0), uniform(r, vec![25, 3], -1.0, 1.0)],
        Box::new(|t, v| t.concat_cols(&[v[0], v[1]])),
    );
    {
        let rows: Vec<Vec<(usize, f64)>> = (0..30)
            .map(|_| (0..3).map(|_| (r.gen_range(0..40), r.gen_range(-1.0..1.0))).collect())
            .collect();
        let map = Arc::new(SparseRows::from_rows(40, &rows).unwrap());
        push(
            "sparse",
            vec![uniform(r, vec![40, 4], -1.0, 1.0)],
            Box::new(move |t, v| t.sparse(v[0], map.clone())),
        );
    }
    {
        let index: Vec<usize> = (0..50).map(|_| r.gen_range(0..30)).collect();
        push(
            "gather_rows",
            vec![uniform(r, vec![30, 4], -1.0, 1.0)],
            Box::new(move |t, v| t.gather_rows(v[0], &index)),
        );
    }
    {
        let target: Vec<usize> = (0..40).map(|i| i % 13).collect();
        push(
            "scatter_mean_rows",
            vec![uniform(r, vec![40, 3], -1.0, 1.0)],
            Box::new(move |t, v| t.scatter_mean_rows(v[0], &target, 13)),
        );
    }
    push(
        "abs",
        vec![away_from_zero(r, vec![120])],
        Box::new(|t, v| Ok(t.abs(v[0]))),
    );
    push(
        "leaky_relu",
        vec![away_from_zero(r, vec![120])],
        Box::new(|t, v| Ok(t.leaky_relu(v[0], 0.01))),
    );
    push(
        "tanh",
        vec![uniform(r, vec![120], -2.0, 2.0)],
        Box::new(|t, v| Ok(t.tanh(v[0]))),
    );
    push(
        "group_norm",
        vec![
            uniform(r, vec![30, 8], -1.0, 1.0),
            uniform(r, vec![8], 0.5, 1.5),
            uniform(r, vec![8], -0.5, 0.5),
        ],
        Box::new(|t, v| t.group_norm(v[0], v[1], v[2], 4)),
    );
    push(
        "sum",
        vec![uniform(r, vec![120], -1.0, 1.0)],
        Box::new(|t, v| Ok(t.sum(v[0]))),
    );
    push(
        "mean",
        vec![uniform(r, vec![120], -1.0, 1.0)],
        Box::new(|t, v| Ok(t.mean(v[0]))),
    );
    push(
        "row_norm",
        vec![away_from_zero(r, vec![40, 3])],
        Box::new(|t, v| Ok(t.row_norm(v[0]))),
    );
    push(
        "row_sq_norm",
        vec![uniform(r, vec![40, 3], -1.0, 1.0)],
        Box::new(|t, v| Ok(t.row_sq_norm(v[0]))),
    );
    push(
        "row_dot",
        vec![uniform(r, vec![40, 3], -1.0, 1.0), uniform(r, vec![40, 3], -1.0, 1.0)],
        Box::new(|t, v| t.row_dot(v[0], v[1])),
    );
    push(
        "cross_rows",
        vec![uniform(r, vec![40, 3], -1.0, 1.0), uniform(r, vec![40, 3], -1.0, 1.0)],
        Box::new(|t, v| t.cross_rows(v[0], v[1])),
    );
    push(
        "normalize_rows",
        vec![away_from_zero(r, vec![40, 3])],
        Box::new(|t, v| Ok(t.normalize_rows(v[0]))),
    );
    push(
        "reshape",
        vec![uniform(r, vec![20, 6], -1.0, 1.0)],
        Box::new(|t, v| t.reshape(v[0], vec![40, 3])),
    );
    {
        let mesh = fixtures::icosphere(1);
        let nb = Arc::new(mesh.edge_neighbors().to_vec());
        let e = mesh.edge_count();
        let nb2 = nb.clone();
        push(
            "edge_stencil",
            vec![uniform(r, vec![e, 3], -1.0, 1.0)],
            Box::new(move |t, v| t.edge_stencil(v[0], nb2.clone())),
        );
        push(
            "edge_conv",
            vec![
                uniform(r, vec![e, 4], -1.0, 1.0),
                uniform(r, vec![20, 6], -0.5, 0.5),
                uniform(r, vec![6], -0.5, 0.5),
            ],
            Box::new(move |t, v| edge_conv(t, v[0], &nb, v[1], v[2])),
        );
        let conn = mesh.topology().clone();
        push(
            "build_delta_v",
            vec![uniform(r, vec![e, 6], -1.0, 1.0)],
            Box::new(move |t, v| build_delta_v(t, v[0], &conn)),
        );
    }

    // A small dense network: three layers with biases and mixed activations.
    push(
        "mlp_3_layer",
        vec![
            uniform(r, vec![16, 5], -1.0, 1.0),
            uniform(r, vec![5, 8], -0.7, 0.7),
            uniform(r, vec![8], -0.2, 0.2),
            uniform(r, vec![8, 8], -0.5, 0.5),
            uniform(r, vec![8], -0.2, 0.2),
            uniform(r, vec![8, 3], -0.5, 0.5),
        ],
        Box::new(|t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add_row(h, v[2])?;
            let h = t.tanh(h);
            let h = t.matmul(h, v[3])?;
            let h = t.add_row(h, v[4])?;
            let h = t.tanh(h);
            t.matmul(h, v[5])
        }),
    );

    // Surface sampling with frozen draws, and the losses.
    let mesh = fixtures::icosphere(1);
    let verts = Tensor::from_points(mesh.vertices());
    let faces = mesh.faces().to_vec();
    let draw = draw_samples(&mesh, 60, r).unwrap();
    {
        let (faces, draw) = (faces.clone(), draw.clone());
        push(
            "sample_surface",
            vec![verts.clone()],
            Box::new(move |t, v| Ok(sample_surface(t, v[0], &faces, draw.clone())?.positions)),
        );
    }
    {
        let faces = faces.clone();
        push(
            "face_normals",
            vec![verts.clone()],
            Box::new(move |t, v| face_normals(t, v[0], &faces)),
        );
    }
    let target: Vec<[f64; 3]> = (0..80)
        .map(|_| {
            let p: [f64; 3] = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt().max(1e-3);
            [p[0] / n * 1.05, p[1] / n * 1.05, p[2] / n * 1.05]
        })
        .collect();
    let index = PointIndex::new(&target).unwrap();
    let samples: Vec<[f64; 3]> = selfprior::loss::draw_positions(&mesh, &draw);
    let pairs = chamfer_pairs(&index, &samples).unwrap();
    for squared in [true, false] {
        let (target, pairs, faces, draw) = (target.clone(), pairs.clone(), faces.clone(), draw.clone());
        push(
            if squared { "chamfer_squared" } else { "chamfer" },
            vec![verts.clone()],
            Box::new(move |t, v| {
                let b = sample_surface(t, v[0], &faces, draw.clone())?;
                chamfer(t, &target, b.positions, &pairs, squared)
            }),
        );
    }
    {
        let hits: Vec<[f64; 3]> = samples
            .iter()
            .map(|p| [p[0] * 0.8, p[1] * 0.8 + 0.05, p[2] * 0.8])
            .collect();
        let targets = BeamTargets {
            samples: (0..samples.len()).step_by(2).collect(),
            hits: (0..samples.len()).step_by(2).map(|i| hits[i]).collect(),
        };
        let (faces, draw) = (faces.clone(), draw.clone());
        push(
            "beam_gap",
            vec![verts.clone()],
            Box::new(move |t, v| {
                let b = sample_surface(t, v[0], &faces, draw.clone())?;
                beam_gap(t, b.positions, &targets)
            }),
        );
    }
    let normals: Vec<[f64; 3]> = target
        .iter()
        .map(|p| {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [p[0] / n, p[1] / n, p[2] / n]
        })
        .collect();
    for oriented in [false, true] {
        let (faces, draw, normals) = (faces.clone(), draw.clone(), normals.clone());
        let paired: Vec<usize> = pairs.x_to_y.iter().map(|&j| draw.faces[j]).collect();
        push(
            if oriented {
                "normal_penalty_oriented"
            } else {
                "normal_penalty"
            },
            vec![verts.clone()],
            Box::new(move |t, v| {
                let b = sample_surface(t, v[0], &faces, draw.clone())?;
                normal_penalty(t, b.face_normals, &normals, &paired, oriented)
            }),
        );
    }
    out
}
