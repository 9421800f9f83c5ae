//! Builds the edge-convolution network, runs it on a random edge code and
//! turns its per-edge output into per-vertex displacements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfprior::diff::{Tape, Tensor};
use selfprior::fixtures;
use selfprior::net::{build_delta_v, random_code, NetConfig, PriorNet};

fn main() -> selfprior::Result<()> {
    let mesh = fixtures::icosphere(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = NetConfig::default();
    let net = PriorNet::<f32>::new(&cfg, &mut rng)?;
    println!(
        "channels {:?}, {} parameters",
        cfg.channels,
        net.params().scalar_count()
    );

    let mut tape = Tape::new();
    let bound = net.params().bind(&mut tape);
    let code: Tensor<f32> = random_code(mesh.edge_count(), &mut rng);
    let code = tape.constant(code);
    let out = net.forward(&mut tape, &bound, code, mesh.topology())?;
    let dv = build_delta_v(&mut tape, out, mesh.topology())?;
    let largest = tape.value(dv).data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    println!(
        "{} edges -> output {:?} -> displacements {:?}, largest |dv| = {largest} (zero head)",
        mesh.edge_count(),
        tape.shape(out),
        tape.shape(dv)
    );
    Ok(())
}
