//! Evaluates the Chamfer, beam-gap and normal terms for a sphere mesh
//! against a cloud sampled from a larger sphere, with their gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::diff::{Tape, Tensor};
use selfprior::fixtures;
use selfprior::loss::{
    beam_gap, beam_targets, chamfer, chamfer_pairs, draw_positions, draw_samples, normal_penalty, sample_surface,
};
use selfprior::spatial::PointIndex;

fn main() -> selfprior::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mesh = fixtures::icosphere(3);
    let target = fixtures::icosphere(4).transformed(|p| p.map(|x| 1.1 * x));
    let cloud = fixtures::sample_cloud(&target, 4000, &mut rng);
    let index = PointIndex::new(cloud.points())?;

    let draw = draw_samples(&mesh, 3000, &mut rng)?;
    let positions = draw_positions(&mesh, &draw);
    let pairs = chamfer_pairs(&index, &positions)?;

    let mut tape = Tape::<f64>::new();
    let v = tape.var(Tensor::from_points(mesh.vertices()));
    let batch = sample_surface(&mut tape, v, mesh.faces(), draw.clone())?;
    let c = chamfer(&mut tape, cloud.points(), batch.positions, &pairs, true)?;

    let normals = tape.value(batch.face_normals).to_points();
    let inward: Vec<[f64; 3]> = draw.faces.iter().map(|&f| normals[f].map(|x| -x)).collect();
    let hits = beam_targets(&positions, &inward, &index, 0.05, 5)?;
    let b = beam_gap(&mut tape, batch.positions, &hits)?;

    let paired: Vec<usize> = pairs.x_to_y.iter().map(|&j| draw.faces[j]).collect();
    let n = normal_penalty(
        &mut tape,
        batch.face_normals,
        cloud.normals().expect("sampled with normals"),
        &paired,
        false,
    )?;

    let total = tape.add(c, b)?;
    let grads = tape.backward(total)?;
    let g = grads.get(v).expect("vertices are differentiable");
    let outward = g
        .to_points()
        .iter()
        .zip(mesh.vertices())
        .filter(|(g, p)| g[0] * p[0] + g[1] * p[1] + g[2] * p[2] < 0.0)
        .count();
    println!("chamfer {:.4e}", tape.value(c).item());
    println!(
        "beam-gap {:.4e} over {} beam hits",
        tape.value(b).item(),
        hits.samples.len()
    );
    println!("normal penalty {:.4e}", tape.value(n).item());
    println!(
        "{outward} of {} vertices have a descent direction pointing outward",
        mesh.vertex_count()
    );
    Ok(())
}
