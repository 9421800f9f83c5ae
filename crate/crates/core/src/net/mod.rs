//! The edge-convolution network that predicts per-edge vertex displacements.

pub mod pool;

use std::sync::Arc;

use rand::Rng;

use crate::diff::{ParamId, ParamSet, Real, SparseRows, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mesh::{Connectivity, Mesh};

pub use pool::{pool_edges, PoolRecord};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Width of each encoder stage; the last entry is the bottleneck.
    pub channels: Vec<usize>,
    /// Convolutions in the residual branch of each encoder stage.
    pub encoder_res: usize,
    /// Convolutions in the residual branch of each decoder stage.
    pub decoder_res: usize,
    /// Fraction of edges removed by each pooling step.
    pub pool_fraction: f64,
    pub leaky_slope: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            channels: vec![32, 32, 32, 48, 64, 96],
            encoder_res: 1,
            decoder_res: 0,
            pool_fraction: 0.2,
            leaky_slope: 0.01,
        }
    }
}

/// Channels of the random per-edge input code and of the output.
pub const CODE_CHANNELS: usize = 6;

/// Largest divisor of `c` not above 32: channels per normalization group.
pub fn group_size(c: usize) -> usize {
    (1..=c.min(32)).rev().find(|g| c.is_multiple_of(*g)).unwrap_or(1)
}

#[derive(Clone, Debug)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
    norm: Option<(ParamId, ParamId)>,
    out: usize,
}

#[derive(Clone, Debug)]
struct EncoderStage {
    entry: Conv,
    res: Vec<Conv>,
}

#[derive(Clone, Debug)]
struct DecoderStage {
    merge: Conv,
    res: Vec<Conv>,
}

/// Encoder/decoder of edge convolutions with pooling, skip connections and
/// a zero-initialized output head.
#[derive(Clone, Debug)]
pub struct PriorNet<T> {
    cfg: NetConfig,
    params: ParamSet<T>,
    encoder: Vec<EncoderStage>,
    decoder: Vec<DecoderStage>,
    head: Conv,
}

fn make_conv<T: Real, R: Rng>(
    params: &mut ParamSet<T>,
    rng: &mut R,
    name: &str,
    cin: usize,
    cout: usize,
    norm: bool,
    zero: bool,
) -> Conv {
    let fan_in = 5 * cin;
    let bound = (6.0 / (fan_in + cout) as f64).sqrt();
    let w: Vec<T> = (0..fan_in * cout)
        .map(|_| {
            if zero {
                T::zero()
            } else {
                T::of(rng.gen_range(-bound..bound))
            }
        })
        .collect();
    let weight = params.add(
        format!("{name}.weight"),
        Tensor::new(vec![fan_in, cout], w).expect("shape"),
    );
    let bias = params.add(format!("{name}.bias"), Tensor::zeros(vec![cout]));
    let norm = norm.then(|| {
        let g = params.add(
            format!("{name}.gn.gamma"),
            Tensor::new(vec![cout], vec![T::one(); cout]).expect("shape"),
        );
        let b = params.add(format!("{name}.gn.beta"), Tensor::zeros(vec![cout]));
        (g, b)
    });
    Conv {
        weight,
        bias,
        norm,
        out: cout,
    }
}

/// One edge convolution: symmetric stencil, linear map and bias.
pub fn edge_conv<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    neighbors: &Arc<Vec<[usize; 4]>>,
    weight: Var,
    bias: Var,
) -> Result<Var> {
    let cin = tape.value(x).cols();
    let wrows = tape.value(weight).rows();
    if wrows != 5 * cin {
        return Err(Error::ShapeMismatch {
            op: "edge_conv",
            left: tape.value(x).shape().to_vec(),
            right: tape.value(weight).shape().to_vec(),
        });
    }
    let s = tape.edge_stencil(x, neighbors.clone())?;
    let y = tape.matmul(s, weight)?;
    tape.add_row(y, bias)
}

/// Topology of one resolution inside a forward pass.
struct Level {
    neighbors: Arc<Vec<[usize; 4]>>,
}

impl<T: Real> PriorNet<T> {
    pub fn new<R: Rng>(cfg: &NetConfig, rng: &mut R) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.channels.contains(&0) {
            return Err(Error::Config(
                "network needs at least one stage of non-zero width".into(),
            ));
        }
        if !(0.0..1.0).contains(&cfg.pool_fraction) {
            return Err(Error::Config("pool fraction must be in [0, 1)".into()));
        }
        let mut params = ParamSet::new();
        let mut encoder = Vec::new();
        let mut cin = CODE_CHANNELS;
        for (s, &c) in cfg.channels.iter().enumerate() {
            let entry = make_conv(&mut params, rng, &format!("enc{s}.entry"), cin, c, true, false);
            let res = (0..cfg.encoder_res)
                .map(|r| make_conv(&mut params, rng, &format!("enc{s}.res{r}"), c, c, true, false))
                .collect();
            encoder.push(EncoderStage { entry, res });
            cin = c;
        }
        let mut decoder = Vec::new();
        for s in (0..cfg.channels.len() - 1).rev() {
            let (c, below) = (cfg.channels[s], cfg.channels[s + 1]);
            let merge = make_conv(&mut params, rng, &format!("dec{s}.merge"), below + c, c, true, false);
            let res = (0..cfg.decoder_res)
                .map(|r| make_conv(&mut params, rng, &format!("dec{s}.res{r}"), c, c, true, false))
                .collect();
            decoder.push(DecoderStage { merge, res });
        }
        let head = make_conv(&mut params, rng, "head", cfg.channels[0], CODE_CHANNELS, false, true);
        Ok(PriorNet {
            cfg: cfg.clone(),
            params,
            encoder,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn conv(&self, tape: &mut Tape<T>, bound: &[Var], x: Var, level: &Level, conv: &Conv, act: bool) -> Result<Var> {
        let mut y = edge_conv(tape, x, &level.neighbors, bound[conv.weight.0], bound[conv.bias.0])?;
        if let Some((g, b)) = conv.norm {
            y = tape.group_norm(y, bound[g.0], bound[b.0], group_size(conv.out))?;
        }
        if act {
            y = tape.leaky_relu(y, T::of(self.cfg.leaky_slope));
        }
        Ok(y)
    }

    fn residual(&self, tape: &mut Tape<T>, bound: &[Var], x: Var, level: &Level, convs: &[Conv]) -> Result<Var> {
        if convs.is_empty() {
            return Ok(x);
        }
        let mut h = x;
        for (i, c) in convs.iter().enumerate() {
            h = self.conv(tape, bound, h, level, c, i + 1 < convs.len())?;
        }
        let sum = tape.add(h, x)?;
        Ok(tape.leaky_relu(sum, T::of(self.cfg.leaky_slope)))
    }

    /// Runs the network on `code` (`[E, 6]`) over `conn`; returns `[E, 6]`.
    /// `bound` are this network's parameters placed on `tape` by
    /// [`ParamSet::bind`].
    pub fn forward(&self, tape: &mut Tape<T>, bound: &[Var], code: Var, conn: &Arc<Connectivity>) -> Result<Var> {
        if tape.value(code).rows() != conn.edge_count() || tape.value(code).cols() != CODE_CHANNELS {
            return Err(Error::ShapeMismatch {
                op: "PriorNet::forward",
                left: tape.value(code).shape().to_vec(),
                right: vec![conn.edge_count(), CODE_CHANNELS],
            });
        }
        let mut topo = conn.clone();
        let mut level = Level {
            neighbors: Arc::new(topo.edge_neighbors().to_vec()),
        };
        let mut x = code;
        let mut skips: Vec<(Var, Level, Arc<SparseRows<T>>)> = Vec::new();
        for (s, stage) in self.encoder.iter().enumerate() {
            x = self.conv(tape, bound, x, &level, &stage.entry, true)?;
            x = self.residual(tape, bound, x, &level, &stage.res)?;
            check_finite(tape, x, &format!("encoder stage {s}"))?;
            if s + 1 < self.encoder.len() {
                let priority = row_norms(tape.value(x));
                let target = ((topo.edge_count() as f64) * (1.0 - self.cfg.pool_fraction)).round() as usize;
                let rec = pool_edges(&topo, &priority, target)?;
                let unpool = Arc::new(rec.unpool_map::<T>()?);
                let pooled = tape.sparse(x, Arc::new(rec.pool_map::<T>()))?;
                let coarse = Level {
                    neighbors: Arc::new(rec.coarse.edge_neighbors().to_vec()),
                };
                skips.push((x, std::mem::replace(&mut level, coarse), unpool));
                topo = rec.coarse;
                x = pooled;
            }
        }
        for (d, stage) in self.decoder.iter().enumerate() {
            let (skip, fine, unpool) = skips.pop().expect("one skip per decoder stage");
            x = tape.sparse(x, unpool)?;
            level = fine;
            let cat = tape.concat_cols(&[x, skip])?;
            x = self.conv(tape, bound, cat, &level, &stage.merge, true)?;
            x = self.residual(tape, bound, x, &level, &stage.res)?;
            check_finite(tape, x, &format!("decoder stage {d}"))?;
        }
        let out = self.conv(tape, bound, x, &level, &self.head, false)?;
        check_finite(tape, out, "output head")?;
        Ok(out)
    }
}

fn check_finite<T: Real>(tape: &Tape<T>, x: Var, layer: &str) -> Result<()> {
    if tape.value(x).all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("activations of {layer}")))
    }
}

fn row_norms<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    let c = t.cols().max(1);
    t.data()
        .chunks_exact(c)
        .map(|r| r.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>())
        .collect()
}

/// Uniform `[0, 1)` code of shape `[edges, 6]`.
pub fn random_code<T: Real, R: Rng>(edges: usize, rng: &mut R) -> Tensor<T> {
    let data = (0..edges * CODE_CHANNELS).map(|_| T::of(rng.gen::<f64>())).collect();
    Tensor::new(vec![edges, CODE_CHANNELS], data).expect("shape")
}

/// The `[V, 2E]` map averaging edge slots into vertices: slot `2e` belongs
/// to the lower vertex of edge `e`, slot `2e + 1` to the higher one.
pub fn delta_v_map<T: Real>(conn: &Connectivity) -> Result<SparseRows<T>> {
    let mut slots: Vec<Vec<usize>> = vec![Vec::new(); conn.vertex_count()];
    for (e, &[a, b]) in conn.edges().iter().enumerate() {
        slots[a].push(2 * e);
        slots[b].push(2 * e + 1);
    }
    if let Some(v) = slots.iter().position(|s| s.is_empty()) {
        return Err(Error::IsolatedVertex(v));
    }
    Ok(SparseRows::mean_of_groups(&slots, 2 * conn.edge_count()))
}

/// Per-vertex displacement: the mean of all edge slots that reference the
/// vertex. `delta_e` is `[E, 6]`, read as `[2E, 3]`.
pub fn build_delta_v<T: Real>(tape: &mut Tape<T>, delta_e: Var, conn: &Connectivity) -> Result<Var> {
    let e = conn.edge_count();
    if tape.value(delta_e).len() != 6 * e {
        return Err(Error::ShapeMismatch {
            op: "build_delta_v",
            left: tape.value(delta_e).shape().to_vec(),
            right: vec![e, 6],
        });
    }
    let slots = tape.reshape(delta_e, vec![2 * e, 3])?;
    let map = delta_v_map::<T>(conn)?;
    tape.sparse(slots, Arc::new(map))
}

/// Shifts every vertex; connectivity is shared with the input.
pub fn apply_displacements(mesh: &Mesh, delta: &[[f64; 3]]) -> Result<Mesh> {
    if delta.len() != mesh.vertex_count() {
        return Err(Error::ShapeMismatch {
            op: "apply_displacements",
            left: vec![mesh.vertex_count(), 3],
            right: vec![delta.len(), 3],
        });
    }
    let verts = mesh
        .vertices()
        .iter()
        .zip(delta)
        .map(|(p, d)| crate::geom::add(*p, *d))
        .collect();
    Mesh::with_topology(verts, mesh.topology().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_network_outputs_zero() {
        let mesh = fixtures::icosphere(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PriorNet::<f32>::new(&NetConfig::default(), &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = net.params().bind(&mut tape);
        let code = tape.constant(random_code(mesh.edge_count(), &mut rng));
        let out = net.forward(&mut tape, &bound, code, mesh.topology()).unwrap();
        assert_eq!(tape.shape(out), &[mesh.edge_count(), 6]);
        assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn parameter_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PriorNet::<f32>::new(&NetConfig::default(), &mut rng).unwrap();
        let n = net.params().scalar_count();
        assert!((150_000..350_000).contains(&n), "{n}");
    }

    #[test]
    fn delta_v_two_slot_mean() {
        // Path 0-1-2 as a single triangle: vertex 1 is in edges (0,1) and (1,2).
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let conn = m.topology();
        assert_eq!(conn.edges(), &[[0, 1], [0, 2], [1, 2]]);
        let mut tape = Tape::<f64>::new();
        // Edge (0,1): slot for 1 is (0,0,0); edge (1,2): slot for 1 is (2,0,0).
        let de = tape.var(
            Tensor::new(
                vec![3, 6],
                vec![
                    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                    2.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
            )
            .unwrap(),
        );
        let dv = build_delta_v(&mut tape, de, conn).unwrap();
        assert_eq!(&tape.value(dv).data()[3..6], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn displacement_preserves_connectivity() {
        let m = fixtures::icosphere(1);
        let t = apply_displacements(&m, &vec![[0.5, -1.0, 2.0]; m.vertex_count()]).unwrap();
        assert_eq!(t.faces(), m.faces());
        assert_eq!(t.edges(), m.edges());
        assert_eq!(t.vertices()[3], crate::geom::add(m.vertices()[3], [0.5, -1.0, 2.0]));
        assert_eq!(apply_displacements(&m, &vec![[0.0; 3]; m.vertex_count()]).unwrap(), m);
    }
}
