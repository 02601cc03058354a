//! Flat `key = value` run configuration.
//!
//! Values are resolved in order default, `NOON_SEED` (seed only), config
//! file, command-line `--set` flags; later sources win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use noon_core::analysis::{EaMethod, Weighting};
use noon_core::source::SourceConfig;
use noon_core::temporal::SpatialMismatch;
use noon_core::Complex64;

use crate::error::CliError;

/// Environment variable overriding the default seed.
pub const SEED_ENV: &str = "NOON_SEED";

pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

/// Every recognized key, in help order.
pub const KEYS: &[KeySpec] = &[
    KeySpec { name: "seed", default: "1592598535", doc: "master RNG seed (env NOON_SEED)" },
    KeySpec { name: "sigma", default: "55", doc: "packet amplitude e-width, um of optical path" },
    KeySpec { name: "jitter_s", default: "0", doc: "per-pair timing jitter std dev, um" },
    KeySpec { name: "mu_spatial", default: "1", doc: "spatial match scalar in [0, 1]" },
    KeySpec { name: "mismatch", default: "cross", doc: "entries scaled by mu: cross (H-V pairs) | all" },
    KeySpec { name: "t_h", default: "0", doc: "delay of the crystal-1 H photon, um" },
    KeySpec { name: "mc_samples", default: "20000", doc: "Monte Carlo jitter draws per point" },
    KeySpec { name: "grid_min", default: "-800", doc: "scan start, um" },
    KeySpec { name: "grid_max", default: "800", doc: "scan end (inclusive), um" },
    KeySpec { name: "grid_step", default: "40", doc: "scan step, um" },
    KeySpec { name: "poisson_counts", default: "none", doc: "expected counts at the curve maximum; none disables noise" },
    KeySpec { name: "floor", default: "0", doc: "flat accidental floor added before Poisson draws, counts" },
    KeySpec { name: "out_dir", default: ".", doc: "directory for CSV, SVG and report files" },
    KeySpec { name: "svg", default: "true", doc: "also write SVG plots" },
    KeySpec { name: "report", default: "text", doc: "report layout: text | markdown" },
    KeySpec { name: "n", default: "3", doc: "photon number for fringe and predict" },
    KeySpec { name: "c0", default: "0.7071067811865476", doc: "fringe amplitude of |0,N>, as re or re,im" },
    KeySpec { name: "cn", default: "0.7071067811865476", doc: "fringe amplitude of |N,0>, as re or re,im" },
    KeySpec { name: "fringe_points", default: "360", doc: "phase samples over [0, 2 pi)" },
    KeySpec { name: "input", default: "none", doc: "scan CSV read by fit and infer-ea" },
    KeySpec { name: "n_dips", default: "1", doc: "dips to fit: 1 | 2" },
    KeySpec { name: "centers", default: "none", doc: "initial dip centers, comma separated, um" },
    KeySpec { name: "weighting", default: "auto", doc: "auto (1/stderr when present) | unweighted" },
    KeySpec { name: "shared_width", default: "false", doc: "fit one FWHH for all dips" },
    KeySpec { name: "beta", default: "0.96", doc: "spatial reduction factor for predict and infer-ea" },
    KeySpec { name: "ea", default: "0.82", doc: "pair indistinguishability E/A for predict" },
    KeySpec { name: "m", default: "none", doc: "co-modal H photons for the m/(N-1) rule" },
    KeySpec { name: "v3", default: "none", doc: "measured visibility for infer-ea" },
    KeySpec { name: "method", default: "v3", doc: "infer-ea route: v3 | dip2 | wings" },
    KeySpec { name: "beta3", default: "0.96", doc: "reproduce: beta of the overlapped-H scan" },
    KeySpec { name: "beta4", default: "0.92", doc: "reproduce: beta of the separated-H scan" },
    KeySpec { name: "ea3", default: "0.82", doc: "reproduce: E/A of the overlapped-H scan" },
    KeySpec { name: "ea4", default: "0.86", doc: "reproduce: E/A of the separated-H scan" },
    KeySpec { name: "fwhh_target", default: "185", doc: "reproduce: overlapped-H dip FWHH that fixes sigma, um" },
    KeySpec { name: "calibrate_sigma", default: "true", doc: "reproduce: tune sigma to fwhh_target" },
    KeySpec { name: "t_h4", default: "600", doc: "reproduce: H delay of the separated-H scan, um" },
    KeySpec { name: "grid4_min", default: "-1000", doc: "reproduce: separated-H scan start, um" },
    KeySpec { name: "grid4_max", default: "1600", doc: "reproduce: separated-H scan end, um" },
    KeySpec { name: "grid4_step", default: "40", doc: "reproduce: separated-H scan step, um" },
];

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (key = value; flag > file > default):\n");
    for k in KEYS {
        let _ = writeln!(s, "  {:width$}  {} [default: {}]", k.name, k.doc, k.default);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOptions {
    pub poisson_counts: Option<f64>,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceTargets {
    pub beta3: f64,
    pub beta4: f64,
    pub ea3: f64,
    pub ea4: f64,
    pub fwhh_target: f64,
    pub calibrate_sigma: bool,
    pub t_h4: f64,
    pub grid4: GridSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub grid: GridSpec,
    pub noise: NoiseOptions,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub report: ReportFormat,
    pub n: usize,
    pub c0: Complex64,
    pub cn: Complex64,
    pub fringe_points: usize,
    pub input: Option<PathBuf>,
    pub n_dips: usize,
    pub centers: Option<Vec<f64>>,
    pub weighting: Weighting,
    pub shared_width: bool,
    pub beta: f64,
    pub ea: f64,
    pub m: Option<usize>,
    pub v3: Option<f64>,
    pub method: EaMethod,
    pub reproduce: ReproduceTargets,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            source: SourceConfig::default(),
            grid: GridSpec { min: 0.0, max: 0.0, step: 1.0 },
            noise: NoiseOptions { poisson_counts: None, floor: 0.0 },
            out_dir: PathBuf::new(),
            svg: true,
            report: ReportFormat::Text,
            n: 0,
            c0: Complex64::new(0.0, 0.0),
            cn: Complex64::new(0.0, 0.0),
            fringe_points: 0,
            input: None,
            n_dips: 1,
            centers: None,
            weighting: Weighting::Auto,
            shared_width: false,
            beta: 0.0,
            ea: 0.0,
            m: None,
            v3: None,
            method: EaMethod::V3,
            reproduce: ReproduceTargets {
                beta3: 0.0,
                beta4: 0.0,
                ea3: 0.0,
                ea4: 0.0,
                fwhh_target: 0.0,
                calibrate_sigma: true,
                t_h4: 0.0,
                grid4: GridSpec { min: 0.0, max: 0.0, step: 1.0 },
            },
        };
        for k in KEYS {
            cfg.set(k.name, k.default)
                .expect("built-in defaults parse");
        }
        cfg
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_complex(key: &str, value: &str) -> Result<Complex64, CliError> {
    match value.split_once(',') {
        Some((re, im)) => Ok(Complex64::new(parse(key, re.trim())?, parse(key, im.trim())?)),
        None => Ok(Complex64::new(parse(key, value)?, 0.0)),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Defaults, then the seed from the environment when set.
    pub fn from_env() -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.set("seed", seed.trim())
                .map_err(|e| CliError::Config(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "seed" => {
                self.source.seed = match v.strip_prefix("0x") {
                    Some(hex) => u64::from_str_radix(hex, 16)
                        .map_err(|_| CliError::Config(format!("seed: cannot parse {v:?}")))?,
                    None => parse(key, v)?,
                }
            }
            "sigma" => self.source.sigma = parse(key, v)?,
            "jitter_s" => self.source.jitter_s = parse(key, v)?,
            "mu_spatial" => self.source.mu_spatial = parse(key, v)?,
            "mismatch" => {
                self.source.mismatch = match v {
                    "cross" => SpatialMismatch::CrossPolarization,
                    "all" => SpatialMismatch::AllPairs,
                    _ => return Err(CliError::Config(format!("mismatch: expected cross or all, got {v:?}"))),
                }
            }
            "t_h" => self.source.t_h = parse(key, v)?,
            "mc_samples" => self.source.mc_samples = parse(key, v)?,
            "grid_min" => self.grid.min = parse(key, v)?,
            "grid_max" => self.grid.max = parse(key, v)?,
            "grid_step" => self.grid.step = parse(key, v)?,
            "poisson_counts" => self.noise.poisson_counts = parse_opt(key, v)?,
            "floor" => self.noise.floor = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "svg" => self.svg = parse_bool(key, v)?,
            "report" => {
                self.report = match v {
                    "text" => ReportFormat::Text,
                    "markdown" => ReportFormat::Markdown,
                    _ => return Err(CliError::Config(format!("report: expected text or markdown, got {v:?}"))),
                }
            }
            "n" => self.n = parse(key, v)?,
            "c0" => self.c0 = parse_complex(key, v)?,
            "cn" => self.cn = parse_complex(key, v)?,
            "fringe_points" => self.fringe_points = parse(key, v)?,
            "input" => self.input = parse_opt::<String>(key, v)?.map(PathBuf::from),
            "n_dips" => self.n_dips = parse(key, v)?,
            "centers" => {
                self.centers = if v.eq_ignore_ascii_case("none") || v.is_empty() {
                    None
                } else {
                    Some(
                        v.split(',')
                            .map(|c| parse(key, c.trim()))
                            .collect::<Result<_, _>>()?,
                    )
                }
            }
            "weighting" => {
                self.weighting = match v {
                    "auto" => Weighting::Auto,
                    "unweighted" => Weighting::Unweighted,
                    _ => return Err(CliError::Config(format!("weighting: expected auto or unweighted, got {v:?}"))),
                }
            }
            "shared_width" => self.shared_width = parse_bool(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "ea" => self.ea = parse(key, v)?,
            "m" => self.m = parse_opt(key, v)?,
            "v3" => self.v3 = parse_opt(key, v)?,
            "method" => {
                self.method = match v {
                    "v3" => EaMethod::V3,
                    "dip2" => EaMethod::Dip2,
                    "wings" => EaMethod::Wings,
                    _ => return Err(CliError::Config(format!("method: expected v3, dip2 or wings, got {v:?}"))),
                }
            }
            "beta3" => self.reproduce.beta3 = parse(key, v)?,
            "beta4" => self.reproduce.beta4 = parse(key, v)?,
            "ea3" => self.reproduce.ea3 = parse(key, v)?,
            "ea4" => self.reproduce.ea4 = parse(key, v)?,
            "fwhh_target" => self.reproduce.fwhh_target = parse(key, v)?,
            "calibrate_sigma" => self.reproduce.calibrate_sigma = parse_bool(key, v)?,
            "t_h4" => self.reproduce.t_h4 = parse(key, v)?,
            "grid4_min" => self.reproduce.grid4.min = parse(key, v)?,
            "grid4_max" => self.reproduce.grid4.max = parse(key, v)?,
            "grid4_step" => self.reproduce.grid4.step = parse(key, v)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value)
    }

    /// Resolves defaults, environment, an optional file and overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Self::from_env()?;
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }

    pub fn tv_grid(&self) -> Result<Vec<f64>, CliError> {
        grid_points(&self.grid)
    }

    pub fn validate_source(&self) -> Result<(), CliError> {
        self.source
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn grid_points(g: &GridSpec) -> Result<Vec<f64>, CliError> {
    noon_core::source::uniform_grid(g.min, g.max, g.step)
        .map_err(|e| CliError::Config(format!("grid: {e}")))
}
