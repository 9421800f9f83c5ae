use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use selfprior::config::{InitMode, RunConfig};
use selfprior::corrupt::{corrupt_cloud, Corruption, RegionRemoval};
use selfprior::io::{self, Format, PlyEncoding};
use selfprior::metrics::{f_score, f_score_completion, faces_within, FScoreConfig, FScoreReport};
use selfprior::pipeline::{run_direct, run_reconstruction, InitSource, Reconstruction};
use selfprior::PointCloud;

#[derive(Parser)]
#[command(
    name = "selfprior",
    version,
    about = "Watertight surface reconstruction from point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a mesh with the network prior.
    Reconstruct(RunArgs),
    /// Reconstruct by optimizing vertex displacements directly.
    Direct(RunArgs),
    /// F-score of a reconstruction against a reference mesh.
    Eval(EvalArgs),
    /// Add noise, holes or flipped normals to a point cloud.
    Corrupt(CorruptArgs),
    /// Summarize a point cloud or mesh file.
    Info(InfoArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// convex-hull, coarse-shell or file:<path>
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration log file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Reference mesh for a final F-score.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    initial_faces: Option<usize>,
    #[arg(long)]
    max_faces: Option<usize>,
    #[arg(long)]
    samples_start: Option<usize>,
    #[arg(long)]
    samples_end: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Write zero timings to the log so identical runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Threshold as a fraction of the reference bounding-box diagonal.
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Center of the missing region, as x,y,z; enables completion recall.
    #[arg(long, value_parser = parse_point)]
    region_center: Option<[f64; 3]>,
    /// Region radius as a fraction of the reference diagonal.
    #[arg(long, default_value_t = 0.15)]
    region_radius: f64,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gaussian noise sigma as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Region centers drawn at random from the cloud.
    #[arg(long, default_value_t = 0)]
    regions: usize,
    /// Explicit region center x,y,z. Repeatable.
    #[arg(long = "center", value_parser = parse_point)]
    centers: Vec<[f64; 3]>,
    /// Region radius as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    /// Probability that a point inside a region survives.
    #[arg(long, default_value_t = 0.0)]
    keep: f64,
    /// Probability of flipping each normal.
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write binary PLY.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected x,y,z".to_string())
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut set = |k: &str, v: Option<String>| -> Result<()> {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
        Ok(())
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("input", path(&args.input))?;
    set("init", args.init.clone())?;
    set("out", path(&args.out))?;
    set("log", path(&args.log))?;
    set("truth", path(&args.truth))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("iterations", args.iterations.map(|v| v.to_string()))?;
    set("max_levels", args.levels.map(|v| v.to_string()))?;
    set("initial_faces", args.initial_faces.map(|v| v.to_string()))?;
    set("max_faces", args.max_faces.map(|v| v.to_string()))?;
    set("samples_start", args.samples_start.map(|v| v.to_string()))?;
    set("samples_end", args.samples_end.map(|v| v.to_string()))?;
    set("learning_rate", args.learning_rate.map(|v| v.to_string()))?;
    set("tau", args.tau.map(|v| v.to_string()))?;
    if args.no_timing {
        set("log_timing", Some("false".into()))?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(label: &str, r: &FScoreReport) {
    println!(
        "{:<12} {:>8} {:>10} {:>10} {:>10}",
        "run", "tau", "precision", "recall", "fscore"
    );
    println!(
        "{:<12} {:>8} {:>10.3} {:>10.3} {:>10.3}",
        label, r.tau, r.precision, r.recall, r.f_score
    );
}

fn reconstruct(args: &RunArgs, direct: bool) -> Result<()> {
    let cfg = run_config(args)?;
    let input = cfg.input.as_ref().context("no input cloud; pass --input")?;
    let out = cfg.out.as_ref().context("no output path; pass --out")?;
    let cloud = io::read_point_cloud(input)?;
    log::info!(
        "{}: {} points, normals {}",
        input.display(),
        cloud.len(),
        cloud.normals().is_some()
    );
    let init = match &cfg.init {
        InitMode::ConvexHull => InitSource::ConvexHull,
        InitMode::CoarseShell => InitSource::CoarseShell(cfg.shell),
        InitMode::File(p) => InitSource::Mesh(io::read_mesh(p)?),
    };
    let Reconstruction { mesh, mut log } = if direct {
        run_direct(&cloud, &init, &cfg.schedule)?
    } else {
        run_reconstruction(&cloud, &init, &cfg.schedule)?
    };
    io::write_mesh(&mesh, out, PlyEncoding::Ascii)?;
    if let Some(truth) = &cfg.truth {
        let truth = io::read_mesh(truth)?;
        let fcfg = FScoreConfig {
            tau: cfg.tau,
            samples: cfg.metric_samples,
            seed: cfg.schedule.seed,
        };
        log.metrics = Some(f_score(&mesh, &truth, &fcfg)?);
    }
    if let Some(path) = &cfg.log {
        std::fs::write(path, log.render(cfg.log_timing)).with_context(|| format!("writing {}", path.display()))?;
    }
    let mode = if direct { "direct" } else { "network" };
    println!(
        "{:<8} {:>7} {:>9} {:>10} {:>13} {:>13}",
        "mode", "faces", "vertices", "watertight", "chamfer_first", "chamfer_last"
    );
    println!(
        "{:<8} {:>7} {:>9} {:>10} {:>13.4e} {:>13.4e}",
        mode,
        mesh.face_count(),
        mesh.vertex_count(),
        mesh.is_watertight(),
        log.first_chamfer().unwrap_or(0.0),
        log.last_chamfer().unwrap_or(0.0)
    );
    if let Some(r) = &log.metrics {
        print_report(mode, r);
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let recon = io::read_mesh(&args.recon)?;
    let truth = io::read_mesh(&args.truth)?;
    let cfg = FScoreConfig {
        tau: args.tau,
        samples: args.samples,
        seed: args.seed,
    };
    let (label, report) = match args.region_center {
        Some(c) => {
            let region = faces_within(&truth, c, args.region_radius * truth.bounds().diagonal());
            if region.is_empty() {
                bail!("no reference faces within the region");
            }
            ("completion", f_score_completion(&recon, &truth, &region, &cfg)?)
        }
        None => ("full", f_score(&recon, &truth, &cfg)?),
    };
    print_report(label, &report);
    Ok(())
}

fn corrupt(args: &CorruptArgs) -> Result<()> {
    let cloud = io::read_point_cloud(&args.input)?;
    let spec = Corruption {
        noise_sigma: args.sigma,
        regions: RegionRemoval {
            centers: args.centers.clone(),
            random_count: args.regions,
            radius: args.radius,
            keep: args.keep,
        },
        flip_probability: args.flip,
        seed: args.seed,
    };
    let out = corrupt_cloud(&cloud, &spec)?;
    let enc = if args.binary {
        PlyEncoding::BinaryLittleEndian
    } else {
        PlyEncoding::Ascii
    };
    io::write_point_cloud(&out.cloud, &args.out, enc)?;
    println!("{:>8} {:>8} {:>8}", "input", "kept", "regions");
    println!("{:>8} {:>8} {:>8}", cloud.len(), out.cloud.len(), out.centers.len());
    for c in &out.centers {
        println!("center {} {} {}", c[0], c[1], c[2]);
    }
    Ok(())
}

fn describe_cloud(cloud: &PointCloud) {
    let b = cloud.bounds();
    println!("points   {}", cloud.len());
    println!("normals  {}", cloud.normals().map_or(0, |n| n.len()));
    println!("bbox_min {} {} {}", b.min[0], b.min[1], b.min[2]);
    println!("bbox_max {} {} {}", b.max[0], b.max[1], b.max[2]);
    println!("diagonal {}", b.diagonal());
}

fn info(args: &InfoArgs) -> Result<()> {
    let bytes = std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let format = Format::from_path(&args.input)?;
    if format != Format::Xyz {
        if let Ok(mesh) = io::parse_mesh(&bytes, format, &args.input) {
            let cloud = PointCloud::new(mesh.vertices().to_vec())?;
            describe_cloud(&cloud);
            println!("faces    {}", mesh.face_count());
            println!("edges    {}", mesh.edge_count());
            println!("watertight {}", mesh.is_watertight());
            if mesh.is_watertight() {
                println!("genus    {}", mesh.genus());
            }
            return Ok(());
        }
    }
    describe_cloud(&io::parse_point_cloud(&bytes, format, &args.input)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Reconstruct(a) => reconstruct(a, false),
        Command::Direct(a) => reconstruct(a, true),
        Command::Eval(a) => eval(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
