//! Flat `key = value` run configuration. Later assignments override earlier
//! ones, so command-line overrides are applied with [`RunConfig::set`] after
//! the file is loaded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::LevelSchedule;
use crate::remesh::ShellConfig;

/// How the first level's mesh is made.
#[derive(Clone, Debug, PartialEq)]
pub enum InitMode {
    ConvexHull,
    CoarseShell,
    File(PathBuf),
}

impl InitMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "convex-hull" | "hull" => Ok(InitMode::ConvexHull),
            "coarse-shell" | "shell" => Ok(InitMode::CoarseShell),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(InitMode::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "init must be convex-hull, coarse-shell or file:<path>, got {s:?}"
                ))),
            },
        }
    }

    fn render(&self) -> String {
        match self {
            InitMode::ConvexHull => "convex-hull".into(),
            InitMode::CoarseShell => "coarse-shell".into(),
            InitMode::File(p) => format!("file:{}", p.display()),
        }
    }
}

/// Everything a reconstruction run reads.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub init: InitMode,
    pub shell: ShellConfig,
    pub schedule: LevelSchedule,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Reference mesh for a final F-score.
    pub truth: Option<PathBuf>,
    pub tau: f64,
    pub metric_samples: usize,
    /// Write wall-clock timings into the log file.
    pub log_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            init: InitMode::ConvexHull,
            shell: ShellConfig::default(),
            schedule: LevelSchedule::default(),
            out: None,
            log: None,
            truth: None,
            tau: 0.01,
            metric_samples: 100_000,
            log_timing: true,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    /// Every accepted key, in rendering order.
    pub const KEYS: &'static [&'static str] = &[
        "input",
        "init",
        "shell_budget",
        "shell_dilation",
        "out",
        "log",
        "log_timing",
        "truth",
        "tau",
        "metric_samples",
        "seed",
        "iterations",
        "initial_faces",
        "growth",
        "max_faces",
        "samples_start",
        "samples_end",
        "max_levels",
        "part_threshold",
        "part_grid",
        "part_margin",
        "learning_rate",
        "beam_epsilon",
        "beam_k",
        "squared_chamfer",
        "remesh_oversample",
        "min_improvement",
        "weight_chamfer",
        "weight_beam",
        "weight_normal",
        "beam_every",
        "beam_from_level",
        "channels",
        "encoder_res",
        "decoder_res",
        "pool_fraction",
        "leaky_slope",
    ];

    /// Assigns one key; values are validated by type here and by range in
    /// [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.schedule;
        match key.trim() {
            "input" => self.input = Some(PathBuf::from(v)),
            "init" => self.init = InitMode::parse(v)?,
            "shell_budget" => self.shell.leaf_budget = num(key, v)?,
            "shell_dilation" => self.shell.dilation = num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "log" => self.log = Some(PathBuf::from(v)),
            "log_timing" => self.log_timing = flag(key, v)?,
            "truth" => self.truth = Some(PathBuf::from(v)),
            "tau" => self.tau = num(key, v)?,
            "metric_samples" => self.metric_samples = num(key, v)?,
            "seed" => s.seed = num(key, v)?,
            "iterations" => s.iterations = num(key, v)?,
            "initial_faces" => s.initial_faces = num(key, v)?,
            "growth" => s.growth = num(key, v)?,
            "max_faces" => s.max_faces = num(key, v)?,
            "samples_start" => s.samples_start = num(key, v)?,
            "samples_end" => s.samples_end = num(key, v)?,
            "max_levels" => s.max_levels = num(key, v)?,
            "part_threshold" => s.part_threshold = num(key, v)?,
            "part_grid" => s.part_grid = num(key, v)?,
            "part_margin" => s.part_margin = num(key, v)?,
            "learning_rate" => s.learning_rate = num(key, v)?,
            "beam_epsilon" => s.beam_epsilon = num(key, v)?,
            "beam_k" => s.beam_k = num(key, v)?,
            "squared_chamfer" => s.squared_chamfer = flag(key, v)?,
            "remesh_oversample" => s.remesh_oversample = num(key, v)?,
            "min_improvement" => s.min_improvement = num(key, v)?,
            "weight_chamfer" => s.weights.chamfer = num(key, v)?,
            "weight_beam" => s.weights.beam = num(key, v)?,
            "weight_normal" => s.weights.normal = num(key, v)?,
            "beam_every" => s.weights.beam_every = num(key, v)?,
            "beam_from_level" => s.weights.beam_from_level = num(key, v)?,
            "channels" => {
                s.net.channels = v
                    .split(',')
                    .map(|c| num(key, c.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "encoder_res" => s.net.encoder_res = num(key, v)?,
            "decoder_res" => s.net.decoder_res = num(key, v)?,
            "pool_fraction" => s.net.pool_fraction = num(key, v)?,
            "leaky_slope" => s.net.leaky_slope = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.tau > 0.0) || self.metric_samples == 0 {
            return Err(Error::Config("tau and metric_samples must be positive".into()));
        }
        if self.shell.leaf_budget < 8 {
            return Err(Error::Config("shell_budget must be at least 8".into()));
        }
        let n = &self.schedule.net;
        if n.channels.is_empty() || n.channels.contains(&0) || !(0.0..1.0).contains(&n.pool_fraction) {
            return Err(Error::Config(
                "channels must be non-zero and pool_fraction in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Renders every key so that `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let s = &self.schedule;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{k} = {v}");
            }
        };
        put("input", path(&self.input));
        put("init", Some(self.init.render()));
        put("shell_budget", Some(self.shell.leaf_budget.to_string()));
        put("shell_dilation", Some(self.shell.dilation.to_string()));
        put("out", path(&self.out));
        put("log", path(&self.log));
        put("log_timing", Some(self.log_timing.to_string()));
        put("truth", path(&self.truth));
        put("tau", Some(self.tau.to_string()));
        put("metric_samples", Some(self.metric_samples.to_string()));
        put("seed", Some(s.seed.to_string()));
        put("iterations", Some(s.iterations.to_string()));
        put("initial_faces", Some(s.initial_faces.to_string()));
        put("growth", Some(s.growth.to_string()));
        put("max_faces", Some(s.max_faces.to_string()));
        put("samples_start", Some(s.samples_start.to_string()));
        put("samples_end", Some(s.samples_end.to_string()));
        put("max_levels", Some(s.max_levels.to_string()));
        put("part_threshold", Some(s.part_threshold.to_string()));
        put("part_grid", Some(s.part_grid.to_string()));
        put("part_margin", Some(s.part_margin.to_string()));
        put("learning_rate", Some(s.learning_rate.to_string()));
        put("beam_epsilon", Some(s.beam_epsilon.to_string()));
        put("beam_k", Some(s.beam_k.to_string()));
        put("squared_chamfer", Some(s.squared_chamfer.to_string()));
        put("remesh_oversample", Some(s.remesh_oversample.to_string()));
        put("min_improvement", Some(s.min_improvement.to_string()));
        put("weight_chamfer", Some(s.weights.chamfer.to_string()));
        put("weight_beam", Some(s.weights.beam.to_string()));
        put("weight_normal", Some(s.weights.normal.to_string()));
        put("beam_every", Some(s.weights.beam_every.to_string()));
        put("beam_from_level", Some(s.weights.beam_from_level.to_string()));
        let ch: Vec<String> = s.net.channels.iter().map(usize::to_string).collect();
        put("channels", Some(ch.join(",")));
        put("encoder_res", Some(s.net.encoder_res.to_string()));
        put("decoder_res", Some(s.net.decoder_res.to_string()));
        put("pool_fraction", Some(s.net.pool_fraction.to_string()));
        put("leaky_slope", Some(s.net.leaky_slope.to_string()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let text = "# run\ninput = cloud.ply\niterations = 250\nchannels = 16, 32\ninit = file:start.obj\n";
        let mut cfg = RunConfig::parse(text, Path::new("run.cfg")).unwrap();
        assert_eq!(cfg.input, Some(PathBuf::from("cloud.ply")));
        assert_eq!(cfg.schedule.iterations, 250);
        assert_eq!(cfg.schedule.net.channels, vec![16, 32]);
        assert_eq!(cfg.init, InitMode::File("start.obj".into()));
        cfg.set("iterations", "10").unwrap();
        assert_eq!(cfg.schedule.iterations, 10);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("seed = 1\nbogus = 3\n", Path::new("run.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = RunConfig::parse("seed = x\n", Path::new("run.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("truth", "t.obj").unwrap();
        cfg.set("learning_rate", "0.0025").unwrap();
        let back = RunConfig::parse(&cfg.render(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
        for k in RunConfig::KEYS {
            assert!(
                cfg.render().contains(&format!("{k} = ")) || ["input", "out", "log"].contains(k),
                "{k}"
            );
        }
    }

    #[test]
    fn range_checks() {
        let mut cfg = RunConfig::default();
        cfg.set("samples_start", "100").unwrap();
        cfg.set("samples_end", "50").unwrap();
        assert!(cfg.validate().is_err());
    }
}
