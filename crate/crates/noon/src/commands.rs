//! Subcommand bodies. Each writes its human-readable output to `out` and its
//! files under `out_dir`.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use noon_core::analysis::{
    fit_dips_with, infer_ea, infer_ea_wings, predict_visibilities, predict_visibility_mk, DipFit,
    EaMethod, FitOptions, ScanCurve,
};
use noon_core::fock::{fringe_scan, FringeModel};
use noon_core::source::{inject_poisson_noise, TvScan};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{create_file, read_table_file, write_scan, write_table, write_two_fold};
use crate::plot::{Plot, Series, Style};
use crate::reproduce::{self, Reproduction};
use crate::scan::par_scan_tv;

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io("stdout", e))
}

fn emit_json(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    emit(out, &format!("{text}\n"))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_with(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut f = create_file(path)?;
    body(&mut f)?;
    f.flush().map_err(|e| CliError::io(path, e))
}

fn input_path(cfg: &RunConfig) -> Result<&PathBuf, CliError> {
    cfg.input
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs input = <csv file>".into()))
}

fn fit_json(fit: &DipFit) -> Value {
    let dips: Vec<Value> = fit
        .dips
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut v = json!({
                "visibility": fit.visibility(i),
                "center_um": d.center,
                "fwhh_um": d.fwhh,
                "determined": d.determined,
            });
            if let Some([sv, sc, sw]) = fit.dip_stderr.get(i) {
                v["stderr"] = json!({ "visibility": sv, "center_um": sc, "fwhh_um": sw });
            }
            v
        })
        .collect();
    json!({
        "baseline": fit.baseline,
        "dips": dips,
        "residual_rms": fit.residual_rms,
        "iterations": fit.iterations,
    })
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    let mut opts = FitOptions::new(cfg.n_dips);
    opts.init_centers = cfg.centers.clone();
    opts.weighting = cfg.weighting;
    opts.shared_width = cfg.shared_width;
    opts
}

fn scan_plot(title: &str, signal: &ScanCurve, accidental: &ScanCurve, fit: Option<&DipFit>) -> String {
    let mut plot = Plot::new(title, "V photon delay (um)", "four-fold rate");
    let mut data = Series::new("four-fold", signal.x(), signal.y(), "#1f4e99", Style::Markers);
    if let Some(e) = signal.yerr() {
        data = data.with_errors(e);
    }
    plot.add(data);
    plot.add(Series::new("2x2 accidental", accidental.x(), accidental.y(), "#777777", Style::Dashed));
    if let Some(fit) = fit {
        let (lo, hi) = (signal.x()[0], signal.x()[signal.len() - 1]);
        let xs: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| fit.eval(x)).collect();
        plot.add(Series::new("fit", &xs, &ys, "#c0392b", Style::Line));
    }
    plot.to_svg()
}

/// Rate of the N-fold projection against the phase shift.
pub fn fringe(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    if cfg.n < 2 {
        return Err(CliError::Config("n must be at least 2".into()));
    }
    if cfg.fringe_points < 2 {
        return Err(CliError::Config("fringe_points must be at least 2".into()));
    }
    let model = FringeModel::from_amplitudes(cfg.c0, cfg.cn, cfg.n);
    let deltas: Vec<f64> = (0..cfg.fringe_points)
        .map(|i| TAU * i as f64 / cfg.fringe_points as f64)
        .collect();
    let rates = fringe_scan(&model, &deltas);
    let path = cfg.out_dir.join("fringe.csv");
    let rows: Vec<Vec<f64>> = deltas.iter().zip(&rates).map(|(d, r)| vec![*d, *r]).collect();
    write_with(&path, |w| write_table(w, &["delta_rad", "rate"], &rows))?;
    emit(out, &format!("wrote {}\n", path.display()))?;
    if cfg.svg {
        let mut plot = Plot::new(&format!("N = {} fringe", cfg.n), "phase shift (rad)", "projection rate");
        plot.add(Series::new("rate", &deltas, &rates, "#1f4e99", Style::Line));
        let svg = cfg.out_dir.join("fringe.svg");
        write_text(&svg, &plot.to_svg())?;
        emit(out, &format!("wrote {}\n", svg.display()))?;
    }
    Ok(())
}

/// Four-fold and two-fold rates over the configured delay grid.
pub fn scan(cfg: &RunConfig, out: &mut dyn Write) -> Result<TvScan, CliError> {
    cfg.validate_source()?;
    let grid = cfg.tv_grid()?;
    let scan = par_scan_tv(&cfg.source, &grid)?;
    let mut signal = scan.fourfold()?;
    if let Some(counts) = cfg.noise.poisson_counts {
        signal = inject_poisson_noise(&signal, counts, cfg.noise.floor, cfg.source.seed)?;
    }
    let accidental = scan.accidental()?;
    let path = cfg.out_dir.join("scan.csv");
    write_with(&path, |w| write_scan(w, &signal, &accidental))?;
    let two = cfg.out_dir.join("scan_twofold.csv");
    write_with(&two, |w| write_two_fold(w, &scan))?;
    emit(out, &format!("wrote {}\nwrote {}\n", path.display(), two.display()))?;
    if cfg.svg {
        let svg = cfg.out_dir.join("scan.svg");
        write_text(&svg, &scan_plot("delay scan", &signal, &accidental, None))?;
        emit(out, &format!("wrote {}\n", svg.display()))?;
    }
    Ok(scan)
}

/// Dip fit of the `input` CSV, reported as JSON.
pub fn fit(cfg: &RunConfig, out: &mut dyn Write) -> Result<DipFit, CliError> {
    let table = read_table_file(input_path(cfg)?)?;
    let curve = table.curve()?;
    let fit = fit_dips_with(&curve, &fit_options(cfg))?;
    emit_json(out, &fit_json(&fit))?;
    Ok(fit)
}

/// Visibilities expected from `beta` and `ea`, and `m/(N-1)` when `m` is set.
pub fn predict(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = predict_visibilities(cfg.beta, cfg.ea)?;
    let mut report = json!({
        "beta": cfg.beta,
        "ea": cfg.ea,
        "v3_overlapped": p.v3_overlapped,
        "v3_dip1": p.v3_dip1,
        "v3_dip2": p.v3_dip2,
    });
    if let Some(m) = cfg.m {
        report["n"] = json!(cfg.n);
        report["m"] = json!(m);
        report["v_mk"] = json!(predict_visibility_mk(cfg.n, m)?);
    }
    emit_json(out, &report)
}

/// E/A from a visibility (`v3`) or from the `input` scan.
pub fn infer_ea_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<f64, CliError> {
    let ea = match (cfg.method, cfg.v3) {
        (EaMethod::Wings, _) => {
            let table = read_table_file(input_path(cfg)?)?;
            infer_ea_wings(&table.curve()?, &table.curve_of("r2x2")?)?
        }
        (method, Some(v)) => infer_ea(v, cfg.beta, method)?,
        (method, None) => {
            let table = read_table_file(input_path(cfg)?)?;
            let (n_dips, dip) = if method == EaMethod::Dip2 { (2, 1) } else { (1, 0) };
            let mut opts = fit_options(cfg);
            opts.n_dips = n_dips;
            if opts.init_centers.as_ref().is_some_and(|c| c.len() != n_dips) {
                return Err(CliError::Config(format!("centers must list {n_dips} value(s)")));
            }
            let fit = fit_dips_with(&table.curve()?, &opts)?;
            infer_ea(fit.visibility(dip).min(1.0), cfg.beta, method)?
        }
    };
    let method = match cfg.method {
        EaMethod::V3 => "v3",
        EaMethod::Dip2 => "dip2",
        EaMethod::Wings => "wings",
    };
    emit_json(out, &json!({ "method": method, "beta": cfg.beta, "ea": ea }))?;
    Ok(ea)
}

/// Runs the reproduction and writes its scans, plots and report. Rows that
/// miss are reported in the result, see [`Reproduction::failures`].
pub fn reproduce(cfg: &RunConfig, out: &mut dyn Write) -> Result<Reproduction, CliError> {
    let r = reproduce::run(cfg)?;
    let dir = &cfg.out_dir;
    for (name, scan) in [("overlapped", &r.overlapped.scan), ("separated", &r.separated.scan)] {
        let signal = scan.fourfold()?;
        let accidental = scan.accidental()?;
        write_with(&dir.join(format!("{name}_scan.csv")), |w| write_scan(w, &signal, &accidental))?;
        write_with(&dir.join(format!("{name}_twofold.csv")), |w| write_two_fold(w, scan))?;
        if cfg.svg {
            let (title, fit) = if name == "overlapped" {
                ("H photons overlapped", &r.overlapped.fit)
            } else {
                ("H photons separated", &r.separated.fit)
            };
            write_text(&dir.join(format!("{name}.svg")), &scan_plot(title, &signal, &accidental, Some(fit)))?;
        }
    }
    let report = reproduce::render_report(&r, cfg.report);
    write_text(&dir.join("report.txt"), &report)?;
    emit(out, &report)?;
    Ok(r)
}
