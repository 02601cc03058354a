//! End-to-end reproduction of the overlapped-H and separated-H scans: calibrate
//! the source, scan, fit, infer E/A three ways and compare with targets.

use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use noon_core::analysis::{
    beta_from_two_fold, fit_dips_with, infer_ea, infer_ea_wings_excluding, predict_visibilities,
    DipFit, EaMethod, FitOptions, ScanCurve, Weighting,
};
use noon_core::source::{calibrate_jitter, SourceConfig, TvScan};
use noon_core::temporal::spatial_match_for_beta;

use crate::config::{grid_points, ReportFormat, RunConfig};
use crate::error::CliError;
use crate::scan::par_scan_tv;

/// Jitter, in units of sigma, standing in for fully distinguishable pairs.
pub const UNCORRELATED_JITTER: f64 = 1e6;

/// Sigma refinement stops once the fitted FWHH is this close to the target.
const FWHH_TOLERANCE: f64 = 0.01;
const MAX_SIGMA_ITERATIONS: usize = 10;

/// A local minimum counts as a dip when it sits this far below the maximum.
const DIP_DEPTH_THRESHOLD: f64 = 0.01;

/// Published values shown next to the simulation.
pub mod reference {
    pub const V3: f64 = 0.91;
    pub const EA_WINGS: f64 = 0.81;
    pub const FWHH3: f64 = 185.0;
    pub const V_DIP1: f64 = 0.45;
    pub const V_DIP2: f64 = 0.39;
    pub const FWHH4: f64 = 200.0;
    pub const BETA3: f64 = 0.96;
    pub const BETA4: f64 = 0.92;
    pub const EA_V3: f64 = 0.82;
    pub const EA_DIP2: f64 = 0.86;
    pub const EA_SPREAD: f64 = 0.05;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    Within { target: f64, tol: f64 },
    Range { lo: f64, hi: f64 },
    AtMost(f64),
}

impl Check {
    pub fn passes(&self, value: f64) -> bool {
        match *self {
            Check::Within { target, tol } => (value - target).abs() <= tol,
            Check::Range { lo, hi } => (lo..=hi).contains(&value),
            Check::AtMost(limit) => value <= limit,
        }
    }

    fn expected(&self) -> String {
        match *self {
            Check::Within { target, .. } => fmt_num(target),
            Check::Range { lo, hi } => format!("[{}, {}]", fmt_num(lo), fmt_num(hi)),
            Check::AtMost(limit) => format!("<= {}", fmt_num(limit)),
        }
    }

    fn tolerance(&self) -> String {
        match *self {
            Check::Within { tol, .. } => format!("+-{}", fmt_num(tol)),
            _ => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: &'static str,
    pub reference: Option<f64>,
    pub check: Check,
    pub simulated: f64,
    pub pass: bool,
}

impl Row {
    fn new(name: &'static str, reference: Option<f64>, check: Check, simulated: f64) -> Self {
        Self {
            name,
            reference,
            check,
            simulated,
            pass: simulated.is_finite() && check.passes(simulated),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub mu3: f64,
    pub mu4: f64,
    /// Jitter over sigma giving the configured E/A.
    pub jitter_ratio3: f64,
    pub jitter_ratio4: f64,
    pub sigma: f64,
    /// Fitted FWHH of each sigma iterate.
    pub sigma_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Overlapped {
    pub config: SourceConfig,
    pub scan: TvScan,
    pub fit: DipFit,
    pub ea_wings: f64,
    pub two_fold_fit: DipFit,
    pub beta: f64,
    pub scan_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Separated {
    pub config: SourceConfig,
    pub scan: TvScan,
    /// Two dips with separate widths; `None` when the second dip is absent
    /// and only a single dip could be fitted.
    pub fit: DipFit,
    pub second_dip_absent: bool,
    /// Two dips sharing one width, for reference.
    pub shared_fit: Option<DipFit>,
    pub accidental_dips: usize,
    pub accidental_fit: DipFit,
    pub two_fold_fit: DipFit,
    pub beta: f64,
    pub grid_step: f64,
}

impl Separated {
    pub fn visibilities(&self) -> (f64, f64) {
        let v2 = if self.second_dip_absent { 0.0 } else { self.fit.visibility(1) };
        (self.fit.visibility(0), v2)
    }

    /// Mean FWHH of the fitted dips.
    pub fn fwhh(&self) -> f64 {
        let n = if self.second_dip_absent { 1 } else { 2 };
        self.fit.dips[..n].iter().map(|d| d.fwhh).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub calibration: Calibration,
    pub overlapped: Overlapped,
    pub separated: Separated,
    pub ea_v3: f64,
    pub ea_dip2: f64,
    pub rows: Vec<Row>,
}

impl Reproduction {
    pub fn ea_spread(&self) -> f64 {
        let e = [self.overlapped.ea_wings, self.ea_v3, self.ea_dip2];
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.name.to_owned())
            .collect()
    }
}

fn fit_unweighted(curve: &ScanCurve, centers: &[f64], shared: bool) -> noon_core::Result<DipFit> {
    let mut opts = FitOptions::new(centers.len());
    opts.init_centers = Some(centers.to_vec());
    opts.weighting = Weighting::Unweighted;
    opts.shared_width = shared;
    fit_dips_with(curve, &opts)
}

/// Jitter over sigma giving `ea`. The wings estimate depends on jitter and
/// sigma only through their ratio, so one calibration at unit sigma serves
/// every sigma.
pub fn jitter_ratio(ea: f64, mc_samples: usize, seed: u64) -> Result<f64, CliError> {
    if !(0.0..=1.0).contains(&ea) {
        return Err(CliError::Config(format!("E/A {ea} outside [0, 1]")));
    }
    if ea == 0.0 {
        return Ok(UNCORRELATED_JITTER);
    }
    let unit = SourceConfig {
        sigma: 1.0,
        mc_samples,
        seed,
        ..SourceConfig::default()
    };
    Ok(calibrate_jitter(&unit, ea)?)
}

/// Local minima lying more than [`DIP_DEPTH_THRESHOLD`] below the maximum.
pub fn count_dips(curve: &ScanCurve) -> usize {
    let y = curve.y();
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return 0;
    }
    (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] < y[i - 1] && y[i] <= y[i + 1])
        .filter(|&i| (max - y[i]) / max > DIP_DEPTH_THRESHOLD)
        .count()
}

fn overlapped_config(cfg: &RunConfig, cal: &Calibration, sigma: f64) -> SourceConfig {
    SourceConfig {
        sigma,
        jitter_s: cal.jitter_ratio3 * sigma,
        mu_spatial: cal.mu3,
        t_h: 0.0,
        t_v: 0.0,
        ..cfg.source.clone()
    }
}

fn run_overlapped(cfg: &RunConfig, source: SourceConfig) -> Result<Overlapped, CliError> {
    let grid = cfg.tv_grid()?;
    let start = Instant::now();
    let scan = par_scan_tv(&source, &grid)?;
    let scan_time = start.elapsed();
    let signal = scan.fourfold()?;
    let fit = fit_unweighted(&signal, &[0.0], false)?;
    let dip = fit.dips[0];
    let ea_wings = infer_ea_wings_excluding(&signal, &scan.accidental()?, &[(dip.center, dip.fwhh)])?;
    let two_fold_fit = fit_unweighted(&scan.two_fold()?[0], &[0.0], false)?;
    let beta = beta_from_two_fold(two_fold_fit.visibility(0));
    Ok(Overlapped {
        config: source,
        scan,
        fit,
        ea_wings,
        two_fold_fit,
        beta,
        scan_time,
    })
}

fn run_separated(cfg: &RunConfig, cal: &Calibration) -> Result<Separated, CliError> {
    let t = &cfg.reproduce;
    let source = SourceConfig {
        sigma: cal.sigma,
        jitter_s: cal.jitter_ratio4 * cal.sigma,
        mu_spatial: cal.mu4,
        t_h: t.t_h4,
        t_v: 0.0,
        ..cfg.source.clone()
    };
    let grid = grid_points(&t.grid4)?;
    let scan = par_scan_tv(&source, &grid)?;
    let signal = scan.fourfold()?;
    let (fit, second_dip_absent) = match fit_unweighted(&signal, &[0.0, t.t_h4], false) {
        Ok(fit) if fit.visibility(1) > DIP_DEPTH_THRESHOLD => (fit, false),
        Ok(_) | Err(noon_core::Error::FitFailure { .. }) | Err(noon_core::Error::IllPosed(_)) => {
            (fit_unweighted(&signal, &[0.0], false)?, true)
        }
        Err(e) => return Err(e.into()),
    };
    let shared_fit = if second_dip_absent {
        None
    } else {
        fit_unweighted(&signal, &[0.0, t.t_h4], true).ok()
    };
    let accidental = scan.accidental()?;
    let accidental_fit = fit_unweighted(&accidental, &[0.0], false)?;
    let two_fold_fit = fit_unweighted(&scan.two_fold()?[0], &[0.0], false)?;
    let beta = beta_from_two_fold(two_fold_fit.visibility(0));
    Ok(Separated {
        config: source,
        accidental_dips: count_dips(&accidental),
        scan,
        fit,
        second_dip_absent,
        shared_fit,
        accidental_fit,
        two_fold_fit,
        beta,
        grid_step: t.grid4.step,
    })
}

pub fn run(cfg: &RunConfig) -> Result<Reproduction, CliError> {
    cfg.validate_source()?;
    let t = &cfg.reproduce;
    for (name, v) in [("beta3", t.beta3), ("beta4", t.beta4), ("ea3", t.ea3), ("ea4", t.ea4)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Config(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if !(t.fwhh_target > 0.0) {
        return Err(CliError::Config("fwhh_target must be positive".into()));
    }

    let mu3 = spatial_match_for_beta(t.beta3)?;
    let mu4 = spatial_match_for_beta(t.beta4)?;
    let (mc, seed) = (cfg.source.mc_samples, cfg.source.seed);
    let (r3, r4) = rayon::join(
        || jitter_ratio(t.ea3, mc, seed),
        || jitter_ratio(t.ea4, mc, seed),
    );
    let mut cal = Calibration {
        mu3,
        mu4,
        jitter_ratio3: r3?,
        jitter_ratio4: r4?,
        sigma: cfg.source.sigma,
        sigma_history: Vec::new(),
    };
    log::info!(
        "calibrated mu = {mu3}, {mu4}; jitter/sigma = {}, {}",
        cal.jitter_ratio3,
        cal.jitter_ratio4
    );

    // Gaussian packets of amplitude width sigma give a two-photon dip of FWHH
    // 4 sqrt(ln 2) sigma; start there and rescale until the fit matches.
    let mut sigma = if t.calibrate_sigma {
        t.fwhh_target / (4.0 * LN_2.sqrt())
    } else {
        cfg.source.sigma
    };
    let mut overlapped = run_overlapped(cfg, overlapped_config(cfg, &cal, sigma))?;
    cal.sigma_history.push((sigma, overlapped.fit.dips[0].fwhh));
    if t.calibrate_sigma {
        for _ in 1..MAX_SIGMA_ITERATIONS {
            let fwhh = overlapped.fit.dips[0].fwhh;
            if (fwhh - t.fwhh_target).abs() < FWHH_TOLERANCE {
                break;
            }
            sigma *= t.fwhh_target / fwhh;
            overlapped = run_overlapped(cfg, overlapped_config(cfg, &cal, sigma))?;
            cal.sigma_history.push((sigma, overlapped.fit.dips[0].fwhh));
        }
    }
    cal.sigma = sigma;
    log::info!("sigma = {sigma} um after {} scan(s)", cal.sigma_history.len());

    let separated = run_separated(cfg, &cal)?;

    let (v1, v2) = separated.visibilities();
    let v3 = overlapped.fit.visibility(0);
    let ea_v3 = infer_ea(v3.min(1.0), overlapped.beta.min(1.0), EaMethod::V3).unwrap_or(f64::NAN);
    let ea_dip2 = infer_ea(v2.min(1.0), separated.beta.min(1.0), EaMethod::Dip2).unwrap_or(f64::NAN);

    let p3 = predict_visibilities(t.beta3, t.ea3)?;
    let p4 = predict_visibilities(t.beta4, t.ea4)?;
    let dip1_center = separated.fit.dips[0].center;
    let mut rows = vec![
        Row::new("V3 overlapped", Some(reference::V3), Check::Within { target: p3.v3_overlapped, tol: 0.02 }, v3),
        Row::new("E/A wings", Some(reference::EA_WINGS), Check::Within { target: t.ea3, tol: 0.04 }, overlapped.ea_wings),
        Row::new("FWHH overlapped (um)", Some(reference::FWHH3), Check::Within { target: t.fwhh_target, tol: 5.0 }, overlapped.fit.dips[0].fwhh),
        Row::new("V3 dip 1", Some(reference::V_DIP1), Check::Within { target: p4.v3_dip1, tol: 0.02 }, v1),
        Row::new("V3 dip 2", Some(reference::V_DIP2), Check::Within { target: p4.v3_dip2, tol: 0.02 }, v2),
        Row::new(
            "FWHH separated (um)",
            Some(reference::FWHH4),
            // sigma only matches the target to FWHH_TOLERANCE
            Check::Range { lo: t.fwhh_target - FWHH_TOLERANCE, hi: t.fwhh_target + 30.0 },
            separated.fwhh(),
        ),
        Row::new("R(2x2) dips", Some(1.0), Check::Within { target: 1.0, tol: 0.0 }, separated.accidental_dips as f64),
        Row::new(
            "R(2x2) dip offset (um)",
            None,
            Check::AtMost(separated.grid_step / 2.0),
            (separated.accidental_fit.dips[0].center - dip1_center).abs(),
        ),
        Row::new("beta two-fold, overlapped", Some(reference::BETA3), Check::Within { target: t.beta3, tol: 0.02 }, overlapped.beta),
        Row::new("beta two-fold, separated", Some(reference::BETA4), Check::Within { target: t.beta4, tol: 0.02 }, separated.beta),
        Row::new("E/A from V3", Some(reference::EA_V3), Check::Within { target: t.ea3, tol: 0.04 }, ea_v3),
        Row::new("E/A from dip 2", Some(reference::EA_DIP2), Check::Within { target: t.ea4, tol: 0.04 }, ea_dip2),
    ];
    let mut result = Reproduction {
        calibration: cal,
        overlapped,
        separated,
        ea_v3,
        ea_dip2,
        rows: Vec::new(),
    };
    rows.push(Row::new("E/A spread", Some(reference::EA_SPREAD), Check::AtMost(0.06), result.ea_spread()));
    result.rows = rows;
    Ok(result)
}

pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        return format!("{v:.4e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_owned() }
}

/// The comparison table and calibration summary. Contains no timings, so
/// equal inputs give equal reports.
pub fn render_report(r: &Reproduction, format: ReportFormat) -> String {
    let mut s = String::new();
    let c = &r.calibration;
    let header = ["quantity", "reference", "expected", "simulated", "tolerance", "result"];
    let cells: Vec<[String; 6]> = r
        .rows
        .iter()
        .map(|row| {
            [
                row.name.to_owned(),
                row.reference.map_or("-".into(), fmt_num),
                row.check.expected(),
                fmt_num(row.simulated),
                row.check.tolerance(),
                if row.pass { "pass" } else { "FAIL" }.to_owned(),
            ]
        })
        .collect();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(s, "| {} |", header.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
            for row in &cells {
                let _ = writeln!(s, "| {} |", row.join(" | "));
            }
        }
        ReportFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
                .collect();
            let line = |cols: &[String]| {
                cols.iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_owned()
            };
            let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(s, "{}", line(&head));
            for row in &cells {
                let _ = writeln!(s, "{}", line(row));
            }
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "sigma = {} um ({} scan(s))", fmt_num(c.sigma), c.sigma_history.len());
    let _ = writeln!(s, "mu = {} (overlapped), {} (separated)", fmt_num(c.mu3), fmt_num(c.mu4));
    let _ = writeln!(
        s,
        "jitter = {} um (overlapped), {} um (separated)",
        fmt_num(c.jitter_ratio3 * c.sigma),
        fmt_num(c.jitter_ratio4 * c.sigma)
    );
    if let Some(shared) = &r.separated.shared_fit {
        let _ = writeln!(
            s,
            "separated scan, shared-width fit: V = {}, {}; FWHH = {} um",
            fmt_num(shared.visibility(0)),
            fmt_num(shared.visibility(1)),
            fmt_num(shared.dips[0].fwhh)
        );
    }
    if r.separated.second_dip_absent {
        let _ = writeln!(s, "separated scan: second dip absent");
    }
    let failures = r.failures();
    if failures.is_empty() {
        let _ = writeln!(s, "all {} rows pass", r.rows.len());
    } else {
        let _ = writeln!(s, "{} row(s) failed: {}", failures.len(), failures.join(", "));
    }
    s
}
