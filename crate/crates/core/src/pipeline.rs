//! Coarse-to-fine reconstruction driver.
//!
//! Each level fixes the mesh connectivity, draws fresh network weights and a
//! fresh random input code, and optimizes for a fixed number of iterations
//! while the sample count ramps up. Between levels the mesh is remeshed
//! watertight and grown.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{Adam, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};
use crate::loss::{
    beam_gap, beam_targets, chamfer, chamfer_pairs, draw_samples, normal_penalty, sample_surface, total_loss,
    LossTerms, LossWeights,
};
use crate::mesh::{merge_parts, split_into_parts, Mesh, PartMesh, PointCloud};
use crate::metrics::FScoreReport;
use crate::net::{build_delta_v, random_code, NetConfig, PriorNet};
use crate::remesh::{self, coarse_shell, convex_hull, next_face_budget, prepare_initial, ShellConfig};
use crate::spatial::PointIndex;

/// Everything that controls a run besides the input.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSchedule {
    /// Optimization iterations per level.
    pub iterations: usize,
    /// Face count of the first level.
    pub initial_faces: usize,
    /// Face growth factor between levels.
    pub growth: f64,
    pub max_faces: usize,
    /// Surface samples at the start and end of each level's ramp.
    pub samples_start: usize,
    pub samples_end: usize,
    pub max_levels: usize,
    pub weights: LossWeights,
    /// Meshes with more faces than this are split into parts.
    pub part_threshold: usize,
    pub part_grid: usize,
    /// Part overlap as a fraction of the bounding-box diagonal.
    pub part_margin: f64,
    pub seed: u64,
    pub learning_rate: f64,
    /// Beam radius in normalized units (unit bounding-box diagonal).
    pub beam_epsilon: f64,
    /// Neighbors used by the good-fit test.
    pub beam_k: usize,
    /// Square point distances inside the Chamfer term.
    pub squared_chamfer: bool,
    /// Remesh voxel budget as a multiple of the target face count.
    pub remesh_oversample: f64,
    /// Stop once the face budget is saturated and a level improves the loss
    /// by less than this fraction.
    pub min_improvement: f64,
    pub net: NetConfig,
}

impl Default for LevelSchedule {
    fn default() -> Self {
        LevelSchedule {
            iterations: 1000,
            initial_faces: 2000,
            growth: 1.5,
            max_faces: 20_000,
            samples_start: 15_000,
            samples_end: 25_000,
            max_levels: 4,
            weights: LossWeights::default(),
            part_threshold: 10_000,
            part_grid: 2,
            part_margin: 0.05,
            seed: 0,
            learning_rate: 1.1e-3,
            beam_epsilon: 0.02,
            beam_k: 5,
            squared_chamfer: true,
            remesh_oversample: 4.0,
            min_improvement: 1e-4,
            net: NetConfig::default(),
        }
    }
}

impl LevelSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.samples_start == 0 || self.samples_start > self.samples_end {
            return bad("sample ramp needs 0 < samples_start <= samples_end");
        }
        if !(self.growth > 1.0) {
            return bad("growth must exceed 1");
        }
        if self.initial_faces < 4 || self.max_faces < self.initial_faces {
            return bad("face budgets need 4 <= initial_faces <= max_faces");
        }
        if self.max_levels == 0 {
            return bad("max_levels must be at least 1");
        }
        if self.part_grid == 0 {
            return bad("part_grid must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.beam_epsilon > 0.0) || self.beam_k == 0 {
            return bad("learning rate, beam epsilon and beam k must be positive");
        }
        if !(self.remesh_oversample >= 1.0) {
            return bad("remesh_oversample must be at least 1");
        }
        Ok(())
    }

    /// Sample count at `step` of a level: linear from `samples_start` at step
    /// 0 towards `samples_end` at step `iterations`.
    pub fn samples_at(&self, step: usize) -> usize {
        let t = step.min(self.iterations) as f64 / self.iterations.max(1) as f64;
        let s = self.samples_start as f64 + t * (self.samples_end - self.samples_start) as f64;
        s.round() as usize
    }

    fn leaf_budget(&self, target_faces: usize) -> usize {
        (self.remesh_oversample * target_faces as f64).ceil() as usize
    }
}

/// What produces per-vertex displacements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// The edge-convolution network.
    Network,
    /// Displacements are optimized directly.
    Direct,
}

/// Where the first level's mesh comes from.
#[derive(Clone, Debug)]
pub enum InitSource {
    ConvexHull,
    CoarseShell(ShellConfig),
    /// A mesh in the cloud's coordinates.
    Mesh(Mesh),
}

/// Uniform scale and shift taking the cloud to a unit bounding-box diagonal
/// centered at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Point3,
    pub scale: f64,
}

impl Normalization {
    pub fn of(bounds: &Aabb) -> Result<Self> {
        let d = bounds.diagonal();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Degenerate("input has zero or non-finite extent".into()));
        }
        Ok(Normalization {
            center: bounds.center(),
            scale: 1.0 / d,
        })
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        geom::scale(geom::sub(p, self.center), self.scale)
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        geom::add(geom::scale(p, 1.0 / self.scale), self.center)
    }
}

/// Loss values of one iteration, summed over parts.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    /// Iteration index over the whole run.
    pub iter: usize,
    pub level: usize,
    pub samples: usize,
    pub chamfer: f64,
    pub beam: f64,
    pub normal: f64,
    pub total: f64,
    pub ms: f64,
}

/// Summary of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub faces: usize,
    pub vertices: usize,
    pub parts: usize,
    pub samples_start: usize,
    pub samples_end: usize,
    /// Largest displacement component of the level's first forward pass.
    pub start_delta: f64,
    pub first_total: f64,
    pub last_total: f64,
    pub watertight_in: bool,
    pub watertight_out: bool,
}

/// Iteration and level records of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub iterations: Vec<IterRecord>,
    pub levels: Vec<LevelRecord>,
    pub metrics: Option<FScoreReport>,
}

impl RunLog {
    /// Appends a level segment, renumbering its iterations after ours.
    pub fn append(&mut self, mut segment: RunLog) {
        let offset = self.iterations.len();
        for r in &mut segment.iterations {
            r.iter += offset;
        }
        self.iterations.extend(segment.iterations);
        self.levels.extend(segment.levels);
        if segment.metrics.is_some() {
            self.metrics = segment.metrics;
        }
    }

    pub fn iteration_line(r: &IterRecord, timing: bool) -> String {
        let ms = if timing { r.ms } else { 0.0 };
        format!(
            "iter={} level={} chamfer={} beam={} normal={} total={} ms={}",
            r.iter, r.level, r.chamfer, r.beam, r.normal, r.total, ms
        )
    }

    pub fn level_line(l: &LevelRecord) -> String {
        format!(
            "level_start level={} faces={} vertices={} parts={} samples={}..{} start_delta={} watertight={}",
            l.level, l.faces, l.vertices, l.parts, l.samples_start, l.samples_end, l.start_delta, l.watertight_in
        )
    }

    /// Line-per-record text. Without `timing`, wall-clock fields read 0 so
    /// identical runs render identically.
    pub fn render(&self, timing: bool) -> String {
        let mut out = String::new();
        let mut it = self.iterations.iter().peekable();
        for l in &self.levels {
            let _ = writeln!(out, "{}", Self::level_line(l));
            while let Some(r) = it.next_if(|r| r.level == l.level) {
                let _ = writeln!(out, "{}", Self::iteration_line(r, timing));
            }
            let _ = writeln!(
                out,
                "level_end level={} first_total={} last_total={} watertight={}",
                l.level, l.first_total, l.last_total, l.watertight_out
            );
        }
        for r in it {
            let _ = writeln!(out, "{}", Self::iteration_line(r, timing));
        }
        if let Some(m) = &self.metrics {
            let _ = writeln!(out, "metrics {m}");
        }
        out
    }

    pub fn first_chamfer(&self) -> Option<f64> {
        self.iterations.first().map(|r| r.chamfer)
    }

    pub fn last_chamfer(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.chamfer)
    }
}

/// Output of a level or a whole run, in the coordinates it was given.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub mesh: Mesh,
    pub log: RunLog,
}

enum Model {
    Net {
        net: PriorNet<f32>,
        codes: Vec<Tensor<f32>>,
    },
    Direct {
        params: ParamSet<f32>,
    },
}

impl Model {
    fn params(&self) -> &ParamSet<f32> {
        match self {
            Model::Net { net, .. } => net.params(),
            Model::Direct { params } => params,
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        match self {
            Model::Net { net, .. } => net.params_mut(),
            Model::Direct { params } => params,
        }
    }

    /// `[V_part, 3]` displacements of one part.
    fn delta(&self, tape: &mut Tape<f32>, bound: &[Var], p: usize, pm: &PartMesh) -> Result<Var> {
        let part = &pm.parts[p];
        match self {
            Model::Net { net, codes } => {
                let code = tape.constant(codes[p].clone());
                let out = net.forward(tape, bound, code, part.mesh.topology())?;
                build_delta_v(tape, out, part.mesh.topology())
            }
            Model::Direct { .. } => tape.gather_rows(bound[0], &part.vertex_map),
        }
    }
}

/// Rows of the parent code for each part's edges.
fn part_codes(pm: &PartMesh, code: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
    let parent: HashMap<[usize; 2], usize> = pm.parent.edges().iter().enumerate().map(|(e, &k)| (k, e)).collect();
    let c = code.cols();
    pm.parts
        .iter()
        .map(|part| {
            let mut data = Vec::with_capacity(part.mesh.edge_count() * c);
            for &[a, b] in part.mesh.edges() {
                let (u, v) = (part.vertex_map[a], part.vertex_map[b]);
                let key = if u < v { [u, v] } else { [v, u] };
                let e = *parent
                    .get(&key)
                    .ok_or_else(|| Error::PartMismatch(format!("part edge ({u}, {v}) missing from the parent")))?;
                data.extend_from_slice(&code.data()[e * c..(e + 1) * c]);
            }
            Tensor::new(vec![part.mesh.edge_count(), c], data)
        })
        .collect()
}

struct Targets {
    index: PointIndex,
    normals: Option<Vec<Point3>>,
}

fn part_targets(pm: &PartMesh, cloud: &PointCloud) -> Result<Vec<Targets>> {
    pm.parts
        .iter()
        .map(|part| {
            let mut ids: Vec<usize> = (0..cloud.len())
                .filter(|&i| part.bin_contains(cloud.points()[i], pm.axes))
                .collect();
            if ids.is_empty() {
                log::warn!("a part holds no target points; it is fitted to the whole cloud");
                ids = (0..cloud.len()).collect();
            }
            let pts: Vec<Point3> = ids.iter().map(|&i| cloud.points()[i]).collect();
            Ok(Targets {
                index: PointIndex::new(&pts)?,
                normals: cloud.normals().map(|n| ids.iter().map(|&i| n[i]).collect()),
            })
        })
        .collect()
}

fn displaced(base: &[Point3], delta: &Tensor<f32>) -> Vec<Point3> {
    base.iter()
        .zip(delta.to_points())
        .map(|(&p, d)| geom::add(p, d))
        .collect()
}

fn level_rng(schedule: &LevelSchedule, level: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(schedule.seed.wrapping_add(level as u64))
}

/// One level over a split mesh: every iteration runs a forward pass and the
/// losses on each part, accumulates the gradients, and takes a single
/// optimizer step. The returned mesh merges the parts' final positions,
/// averaging shared vertices. Coordinates are used as given.
pub fn run_level_parts(
    pm: &PartMesh,
    cloud: &PointCloud,
    schedule: &LevelSchedule,
    level: usize,
    mode: Mode,
) -> Result<Reconstruction> {
    schedule.validate()?;
    let mut rng = level_rng(schedule, level);
    let mut model = match mode {
        Mode::Network => {
            let net = PriorNet::<f32>::new(&schedule.net, &mut rng)?;
            let code = random_code(pm.parent.edge_count(), &mut rng);
            let codes = part_codes(pm, &code)?;
            Model::Net { net, codes }
        }
        Mode::Direct => {
            let mut params = ParamSet::new();
            params.add("displacement", Tensor::zeros(vec![pm.parent.vertex_count(), 3]));
            Model::Direct { params }
        }
    };
    let mut adam = Adam::new(model.params(), schedule.learning_rate);
    let targets = part_targets(pm, cloud)?;
    let bases: Vec<Tensor<f32>> = pm
        .parts
        .iter()
        .map(|p| Tensor::from_points(p.mesh.vertices()))
        .collect();
    let areas: Vec<f64> = pm.parts.iter().map(|p| p.mesh.area()).collect();
    let area_sum: f64 = areas.iter().sum();
    let w = &schedule.weights;

    let mut log = RunLog::default();
    let mut start_delta = 0.0f64;
    for step in 0..schedule.iterations {
        let clock = Instant::now();
        let samples = schedule.samples_at(step);
        let mut sums = [0.0f64; 4];
        for (p, part) in pm.parts.iter().enumerate() {
            let mut tape = Tape::<f32>::new();
            let bound = model.params().bind(&mut tape);
            let dv = model.delta(&mut tape, &bound, p, pm)?;
            if step == 0 {
                start_delta = start_delta.max(tape.value(dv).max_abs() as f64);
            }
            let positions = displaced(part.mesh.vertices(), tape.value(dv));
            let base = tape.constant(bases[p].clone());
            let verts = tape.add(base, dv)?;
            let current = Mesh::with_topology(positions, part.mesh.topology().clone())?;
            let n = ((samples as f64 * areas[p] / area_sum).round() as usize).max(1);
            let draw = draw_samples(&current, n, &mut rng)?;
            let batch = sample_surface(&mut tape, verts, part.mesh.faces(), draw)?;
            let y = tape.value(batch.positions).to_points();
            let tg = &targets[p];
            let pairs = chamfer_pairs(&tg.index, &y)?;
            let ch = chamfer(
                &mut tape,
                tg.index.points(),
                batch.positions,
                &pairs,
                schedule.squared_chamfer,
            )?;
            let normal = match (&tg.normals, w.normal > 0.0) {
                (Some(nx), true) => {
                    let faces: Vec<usize> = pairs.x_to_y.iter().map(|&j| batch.draw.faces[j]).collect();
                    Some(normal_penalty(
                        &mut tape,
                        batch.face_normals,
                        nx,
                        &faces,
                        cloud.is_oriented(),
                    )?)
                }
                _ => None,
            };
            let beam = if w.beam_active(step, level) {
                let fnorm = tape.value(batch.face_normals).to_points();
                let dirs: Vec<Point3> = batch.draw.faces.iter().map(|&f| geom::scale(fnorm[f], -1.0)).collect();
                let hits = beam_targets(&y, &dirs, &tg.index, schedule.beam_epsilon, schedule.beam_k)?;
                Some(beam_gap(&mut tape, batch.positions, &hits)?)
            } else {
                None
            };
            let terms = LossTerms {
                chamfer: ch,
                beam,
                normal,
            };
            let total = total_loss(&mut tape, &terms, w)?;
            let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item() as f64);
            let vals = [value(Some(ch)), value(beam), value(normal), value(Some(total))];
            if !vals[3].is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at level {level} iteration {step} (chamfer {}, beam {}, normal {})",
                    vals[0], vals[1], vals[2]
                )));
            }
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v;
            }
            let grads = tape.backward(total)?;
            model.params_mut().accumulate(&grads, &bound);
        }
        adam.step(model.params_mut())?;
        let rec = IterRecord {
            iter: step,
            level,
            samples,
            chamfer: sums[0],
            beam: sums[1],
            normal: sums[2],
            total: sums[3],
            ms: clock.elapsed().as_secs_f64() * 1e3,
        };
        if step % 50 == 0 || step + 1 == schedule.iterations {
            log::info!("{}", RunLog::iteration_line(&rec, true));
        }
        log::debug!("{}", RunLog::iteration_line(&rec, true));
        log.iterations.push(rec);
    }

    // Final positions from the optimized parameters.
    let mut moved = Vec::with_capacity(pm.parts.len());
    for p in 0..pm.parts.len() {
        let mut tape = Tape::<f32>::new();
        let bound = model.params().bind(&mut tape);
        let dv = model.delta(&mut tape, &bound, p, pm)?;
        moved.push(displaced(pm.parts[p].mesh.vertices(), tape.value(dv)));
    }
    let mesh = merge_parts(pm, &moved)?;
    log.levels.push(LevelRecord {
        level,
        faces: pm.parent.face_count(),
        vertices: pm.parent.vertex_count(),
        parts: pm.parts.len(),
        samples_start: schedule.samples_start,
        samples_end: schedule.samples_end,
        start_delta,
        first_total: log.iterations.first().map_or(0.0, |r| r.total),
        last_total: log.iterations.last().map_or(0.0, |r| r.total),
        watertight_in: pm.parent.is_watertight(),
        watertight_out: mesh.is_watertight(),
    });
    Ok(Reconstruction { mesh, log })
}

/// One level on an unsplit mesh.
pub fn run_level(
    mesh: &Mesh,
    cloud: &PointCloud,
    schedule: &LevelSchedule,
    level: usize,
    mode: Mode,
) -> Result<Reconstruction> {
    run_level_parts(&split_into_parts(mesh, 1, 0.0)?, cloud, schedule, level, mode)
}

fn outward(mesh: Mesh) -> Result<Mesh> {
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        Ok(mesh)
    }
}

/// The first level's mesh for a normalized cloud.
pub fn initial_mesh(cloud: &PointCloud, init: &InitSource, schedule: &LevelSchedule) -> Result<Mesh> {
    let raw = match init {
        InitSource::ConvexHull => convex_hull(cloud.points())?,
        InitSource::CoarseShell(cfg) => coarse_shell(cloud, cfg)?,
        InitSource::Mesh(m) => m.clone(),
    };
    let mesh = prepare_initial(
        &raw,
        schedule.initial_faces,
        schedule.leaf_budget(schedule.initial_faces),
    )?;
    outward(mesh)
}

fn run(cloud: &PointCloud, init: &InitSource, schedule: &LevelSchedule, mode: Mode) -> Result<Reconstruction> {
    schedule.validate()?;
    let norm = Normalization::of(&cloud.bounds())?;
    let x = cloud.map_points(|p| norm.apply(p));
    let init = match init {
        InitSource::Mesh(m) => InitSource::Mesh(m.transformed(|p| norm.apply(p))),
        other => other.clone(),
    };
    let mut mesh = initial_mesh(&x, &init, schedule)?;
    let mut log = RunLog::default();
    for level in 0..schedule.max_levels {
        if level > 0 {
            let target = next_face_budget(mesh.face_count(), schedule.growth, schedule.max_faces);
            mesh = outward(remesh::next_level_mesh(
                &mesh,
                schedule.growth,
                schedule.max_faces,
                schedule.leaf_budget(target),
            )?)?;
        }
        if !mesh.is_watertight() {
            return Err(Error::Degenerate(format!("level {level} mesh is not watertight")));
        }
        let grid = if mesh.face_count() > schedule.part_threshold {
            schedule.part_grid
        } else {
            1
        };
        let pm = split_into_parts(&mesh, grid, schedule.part_margin)?;
        let out = run_level_parts(&pm, &x, schedule, level, mode)?;
        let (first, last) = (
            out.log.iterations[0].total,
            out.log.iterations.last().map_or(0.0, |r| r.total),
        );
        log.append(out.log);
        mesh = out.mesh;
        let saturated = next_face_budget(mesh.face_count(), schedule.growth, schedule.max_faces) == mesh.face_count();
        let improvement = if first > 0.0 { (first - last) / first } else { 0.0 };
        if saturated && improvement < schedule.min_improvement {
            log::info!("stopping after level {level}: face budget saturated and loss improved by {improvement:.2e}");
            break;
        }
    }
    Ok(Reconstruction {
        mesh: mesh.transformed(|p| norm.invert(p)),
        log,
    })
}

/// Full coarse-to-fine reconstruction with the network. The cloud is
/// normalized internally; the result is in the cloud's coordinates.
pub fn run_reconstruction(cloud: &PointCloud, init: &InitSource, schedule: &LevelSchedule) -> Result<Reconstruction> {
    run(cloud, init, schedule, Mode::Network)
}

/// The same loop with vertex displacements as the optimized parameters.
/// Zero iterations return the prepared initial mesh.
pub fn run_direct(cloud: &PointCloud, init: &InitSource, schedule: &LevelSchedule) -> Result<Reconstruction> {
    if schedule.iterations == 0 {
        let norm = Normalization::of(&cloud.bounds())?;
        let x = cloud.map_points(|p| norm.apply(p));
        let init = match init {
            InitSource::Mesh(m) => InitSource::Mesh(m.transformed(|p| norm.apply(p))),
            other => other.clone(),
        };
        let probe = LevelSchedule {
            iterations: 1,
            ..schedule.clone()
        };
        let mesh = initial_mesh(&x, &init, &probe)?;
        return Ok(Reconstruction {
            mesh: mesh.transformed(|p| norm.invert(p)),
            log: RunLog::default(),
        });
    }
    run(cloud, init, schedule, Mode::Direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn sample_ramp() {
        let s = LevelSchedule {
            iterations: 1000,
            samples_start: 15_000,
            samples_end: 25_000,
            ..Default::default()
        };
        assert_eq!(s.samples_at(0), 15_000);
        assert_eq!(s.samples_at(500), 20_000);
        assert_eq!(s.samples_at(1000), 25_000);
    }

    #[test]
    fn normalization_round_trip() {
        let b = Aabb::from_points(&[[-3.0, 2.0, 10.0], [5.0, 7.5, 11.0]]);
        let n = Normalization::of(&b).unwrap();
        let p = [1.25, 3.5, 10.2];
        let q = n.invert(n.apply(p));
        assert!(geom::dist(p, q) < 1e-9);
        let lo = n.apply(b.min);
        let hi = n.apply(b.max);
        assert!((geom::dist(lo, hi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_init_first_step() {
        let mesh = fixtures::icosphere(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = fixtures::sample_cloud(&fixtures::icosphere(3), 500, &mut rng);
        let s = LevelSchedule {
            iterations: 1,
            samples_start: 300,
            samples_end: 300,
            ..Default::default()
        };
        for mode in [Mode::Network, Mode::Direct] {
            let out = run_level(&mesh, &cloud, &s, 0, mode).unwrap();
            assert_eq!(out.log.levels[0].start_delta, 0.0);
            assert_eq!(out.log.iterations.len(), 1);
            assert_eq!(out.mesh.faces(), mesh.faces());
        }
    }
}
