//! Damped least-squares fit of Gaussian dips.
//!
//! Model: `y = B prod_d [1 - V_d exp(-4 ln2 (x - c_d)^2 / w_d^2)]`, where `w_d`
//! is the full width at half height of dip `d`. Jacobians are central
//! differences; steps use Marquardt's diagonal scaling.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// unused when std is linked elsewhere in the build graph
#[allow(unused_imports)]
use num_traits::Float;

use super::ScanCurve;
use crate::error::{invalid, Error, Result};

const LN2: f64 = core::f64::consts::LN_2;

/// Gauss-Newton steps taken after damped convergence.
const POLISH_STEPS: usize = 20;

/// Below this initial relative depth a curve is treated as flat.
const FLAT_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub depth: f64,
    pub center: f64,
    pub fwhh: f64,
    /// False when the dip has no depth and its center carries no information.
    pub determined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipFit {
    pub baseline: f64,
    pub dips: Vec<Dip>,
    pub residual_rms: f64,
    pub iterations: usize,
    /// One-sigma errors of (visibility, center, fwhh) per dip, from the
    /// residual covariance. Empty when the normal matrix is singular.
    pub dip_stderr: Vec<[f64; 3]>,
}

impl DipFit {
    pub fn visibility(&self, dip: usize) -> f64 {
        let d = &self.dips[dip];
        if self.baseline > 0.0 {
            d.depth / self.baseline
        } else {
            0.0
        }
    }

    pub fn visibilities(&self) -> Vec<f64> {
        (0..self.dips.len()).map(|i| self.visibility(i)).collect()
    }

    /// The fitted model at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        (0..self.dips.len()).fold(self.baseline, |y, i| {
            let d = &self.dips[i];
            let u = (x - d.center) / d.fwhh;
            y * (1.0 - self.visibility(i) * (-4.0 * LN2 * u * u).exp())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weighted by `1 / yerr` when every error is positive.
    #[default]
    Auto,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_dips: usize,
    /// Initial dip centers; seeded from smoothed minima when absent.
    pub init_centers: Option<Vec<f64>>,
    /// Fit one FWHH common to all dips.
    pub shared_width: bool,
    pub weighting: Weighting,
    /// Relative parameter change that counts as converged.
    pub xtol: f64,
    pub max_iterations: usize,
}

impl FitOptions {
    pub fn new(n_dips: usize) -> Self {
        Self {
            n_dips,
            init_centers: None,
            shared_width: false,
            weighting: Weighting::Auto,
            xtol: 1e-8,
            max_iterations: 200,
        }
    }
}

pub fn fit_dips(curve: &ScanCurve, n_dips: usize, init: Option<&[f64]>) -> Result<DipFit> {
    let mut opts = FitOptions::new(n_dips);
    opts.init_centers = init.map(|c| c.to_vec());
    fit_dips_with(curve, &opts)
}

/// Parameter vector layout: `[B, V_1, c_1, (w_1), V_2, c_2, (w_2), (w)]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n_dips: usize,
    shared: bool,
}

impl Layout {
    fn len(&self) -> usize {
        if self.shared {
            2 + 2 * self.n_dips
        } else {
            1 + 3 * self.n_dips
        }
    }

    fn vis(&self, d: usize) -> usize {
        if self.shared {
            1 + 2 * d
        } else {
            1 + 3 * d
        }
    }

    fn center(&self, d: usize) -> usize {
        self.vis(d) + 1
    }

    fn width(&self, d: usize) -> usize {
        if self.shared {
            self.len() - 1
        } else {
            self.vis(d) + 2
        }
    }

    fn model(&self, p: &[f64], x: f64) -> f64 {
        let mut y = p[0];
        for d in 0..self.n_dips {
            let (v, c, w) = (p[self.vis(d)], p[self.center(d)], p[self.width(d)]);
            let u = (x - c) / w;
            y *= 1.0 - v * (-4.0 * LN2 * u * u).exp();
        }
        y
    }

    fn project(&self, p: &mut [f64], min_width: f64) {
        p[0] = p[0].max(0.0);
        for d in 0..self.n_dips {
            let v = self.vis(d);
            p[v] = p[v].clamp(0.0, 1.0);
            let w = self.width(d);
            p[w] = p[w].max(min_width);
        }
    }
}

pub fn fit_dips_with(curve: &ScanCurve, opts: &FitOptions) -> Result<DipFit> {
    let n_dips = opts.n_dips;
    if !(1..=2).contains(&n_dips) {
        return Err(invalid("only one or two dips can be fitted"));
    }
    let layout = Layout {
        n_dips,
        shared: opts.shared_width && n_dips > 1,
    };
    let n_params = layout.len();
    if curve.len() < 8 * n_params {
        return Err(invalid(format!(
            "need at least {} points for {} parameters, got {}",
            8 * n_params,
            n_params,
            curve.len()
        )));
    }
    if let Some(c) = &opts.init_centers {
        if c.len() != n_dips {
            return Err(Error::DimensionMismatch {
                expected: n_dips,
                got: c.len(),
            });
        }
    }

    // Work in units of the largest rate so the fit is scale free.
    let scale = curve.y().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let xs = curve.x();
    let ys: Vec<f64> = curve.y().iter().map(|v| v / scale).collect();
    let weights: Vec<f64> = match (opts.weighting, curve.yerr()) {
        (Weighting::Auto, Some(e)) if e.iter().all(|v| *v > 0.0) => {
            e.iter().map(|v| scale / v).collect()
        }
        _ => vec![1.0; xs.len()],
    };
    let span = xs[xs.len() - 1] - xs[0];
    let min_width = 1e-6 * span;

    let init = initial_guess(xs, &ys, n_dips, opts.init_centers.as_deref(), span);
    let mut p: Vec<f64> = vec![0.0; n_params];
    p[0] = init.baseline;
    for d in 0..n_dips {
        p[layout.vis(d)] = init.visibilities[d];
        p[layout.center(d)] = init.centers[d];
        p[layout.width(d)] = init.widths[d];
    }
    if layout.shared {
        p[n_params - 1] = init.widths.iter().sum::<f64>() / n_dips as f64;
    }

    if init.max_depth < FLAT_DEPTH {
        let dips = (0..n_dips)
            .map(|d| Dip {
                depth: 0.0,
                center: init.centers[d],
                fwhh: p[layout.width(d)],
                determined: false,
            })
            .collect();
        let baseline = p[0] * scale;
        let rms = rms(xs, &ys, &p, &layout) * scale;
        return Ok(DipFit {
            baseline,
            dips,
            residual_rms: rms,
            iterations: 0,
            dip_stderr: Vec::new(),
        });
    }

    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            xs.len(),
            xs.iter()
                .zip(&ys)
                .zip(&weights)
                .map(|((&x, &y), &w)| w * (layout.model(p, x) - y)),
        )
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(xs.len(), n_params);
        let mut probe = p.to_vec();
        for j in 0..n_params {
            let typical = if j == 0 || (layout.shared && j == n_params - 1) {
                p[j].abs().max(1e-3)
            } else if j == layout.center(0) || (n_dips > 1 && j == layout.center(1)) {
                span * 1e-2
            } else {
                p[j].abs().max(1e-2)
            };
            let h = 1e-6 * typical;
            probe[j] = p[j] + h;
            let up = residuals(&probe);
            probe[j] = p[j] - h;
            let down = residuals(&probe);
            probe[j] = p[j];
            jac.set_column(j, &((up - down) / (2.0 * h)));
        }
        jac
    };

    let mut lambda = 1e-3;
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_jac = None;
    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        last_jac = Some(jac);
        if cost == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..n_params {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let step = damped
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&(-&grad)))
                .or_else(|| damped.lu().solve(&(-&grad)));
            let Some(step) = step else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            layout.project(&mut trial, min_width);
            let r_trial = residuals(&trial);
            let trial_cost = r_trial.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                accepted = Some((trial, r_trial, trial_cost));
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, r_trial, trial_cost)) = accepted else {
            // no damping lowers the cost: already at the minimum
            converged = true;
            break;
        };
        let rel_change = p
            .iter()
            .zip(&trial)
            .enumerate()
            .map(|(j, (a, b))| {
                let reference = if j == layout.center(0) || (n_dips > 1 && j == layout.center(1)) {
                    a.abs().max(span)
                } else {
                    a.abs().max(1e-12)
                };
                (a - b).abs() / reference
            })
            .fold(0.0, f64::max);
        p = trial;
        r = r_trial;
        cost = trial_cost;
        lambda = (lambda / 10.0).max(1e-12);
        if rel_change < opts.xtol {
            converged = true;
            break;
        }
    }

    if converged {
        // Undamped Gauss-Newton polish: the end point then depends smoothly on
        // the data instead of on which damped steps were accepted.
        for _ in 0..POLISH_STEPS {
            let jac = jacobian(&p);
            let Some(step) = (jac.transpose() * &jac)
                .cholesky()
                .map(|ch| ch.solve(&(-(jac.transpose() * &r))))
            else {
                break;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            layout.project(&mut trial, min_width);
            let r_trial = residuals(&trial);
            let trial_cost = r_trial.norm_squared();
            if !(trial_cost <= cost * (1.0 + 1e-9)) {
                break;
            }
            let moved = p
                .iter()
                .zip(&trial)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
                .fold(0.0, f64::max);
            p = trial;
            r = r_trial;
            cost = trial_cost;
            last_jac = Some(jac);
            if moved < 1e-15 {
                break;
            }
        }
    }

    let dip_stderr = last_jac
        .map(|jac| stderr_from(&jac, cost, xs.len(), n_params, &layout))
        .unwrap_or_default();
    let baseline = p[0] * scale;
    let dips: Vec<Dip> = (0..n_dips)
        .map(|d| {
            let v = p[layout.vis(d)];
            Dip {
                depth: v * baseline,
                center: p[layout.center(d)],
                fwhh: p[layout.width(d)],
                determined: v > FLAT_DEPTH,
            }
        })
        .collect();
    let fit = DipFit {
        baseline,
        dips,
        residual_rms: rms(xs, &ys, &p, &layout) * scale,
        iterations,
        dip_stderr,
    };
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            last: Box::new(fit),
        });
    }
    if n_dips == 2 {
        let (a, b) = (&fit.dips[0], &fit.dips[1]);
        if (a.center - b.center).abs() < a.fwhh.max(b.fwhh) / 10.0 {
            return Err(Error::IllPosed(format!(
                "dip centers {} and {} coincide within a tenth of the width",
                a.center, b.center
            )));
        }
    }
    Ok(fit)
}

fn rms(xs: &[f64], ys: &[f64], p: &[f64], layout: &Layout) -> f64 {
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (layout.model(p, x) - y).powi(2))
        .sum();
    (ss / xs.len() as f64).sqrt()
}

fn stderr_from(
    jac: &DMatrix<f64>,
    cost: f64,
    m: usize,
    n_params: usize,
    layout: &Layout,
) -> Vec<[f64; 3]> {
    let dof = m.saturating_sub(n_params).max(1) as f64;
    let Some(cov) = (jac.transpose() * jac).try_inverse() else {
        return Vec::new();
    };
    let s2 = cost / dof;
    (0..layout.n_dips)
        .map(|d| {
            let e = |i: usize| (cov[(i, i)] * s2).max(0.0).sqrt();
            [e(layout.vis(d)), e(layout.center(d)), e(layout.width(d))]
        })
        .collect()
}

struct InitialGuess {
    baseline: f64,
    centers: Vec<f64>,
    visibilities: Vec<f64>,
    widths: Vec<f64>,
    max_depth: f64,
}

/// Baseline from the upper-quartile mean; centers at the lowest minima of a
/// moving average, each at least one estimated FWHH from the others.
fn initial_guess(
    xs: &[f64],
    ys: &[f64],
    n_dips: usize,
    centers: Option<&[f64]>,
    span: f64,
) -> InitialGuess {
    let n = ys.len();
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = &sorted[(3 * n) / 4..];
    let baseline = top.iter().sum::<f64>() / top.len() as f64;

    // three points on coarse grids, wider on dense ones
    let half = (n / 64).max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            ys[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let depth_at = |i: usize| {
        if baseline > 0.0 {
            (1.0 - smooth[i] / baseline).clamp(0.01, 0.99)
        } else {
            0.5
        }
    };
    let width_at =
        |i: usize| half_depth_width(xs, &smooth, i, baseline, depth_at(i)).unwrap_or(span / 10.0);

    let center_idx: Vec<usize> = match centers {
        Some(c) => c.iter().map(|&cx| nearest_index(xs, cx)).collect(),
        None => lowest_minima(xs, &smooth, n_dips, &width_at),
    };
    let max_depth = if baseline > 0.0 {
        (baseline - sorted[0]) / baseline
    } else {
        0.0
    };

    let mut out_centers = Vec::with_capacity(n_dips);
    let mut vis = Vec::with_capacity(n_dips);
    let mut widths = Vec::with_capacity(n_dips);
    for (d, &i) in center_idx.iter().enumerate() {
        out_centers.push(match centers {
            Some(c) => c[d],
            None => xs[i],
        });
        vis.push(depth_at(i));
        widths.push(width_at(i));
    }
    InitialGuess {
        baseline,
        centers: out_centers,
        visibilities: vis,
        widths,
        max_depth,
    }
}

fn nearest_index(xs: &[f64], x: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn lowest_minima(
    xs: &[f64],
    smooth: &[f64],
    count: usize,
    width_at: &dyn Fn(usize) -> f64,
) -> Vec<usize> {
    let n = smooth.len();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || smooth[i] <= smooth[i - 1];
            let right = i == n - 1 || smooth[i] <= smooth[i + 1];
            left && right
        })
        .collect();
    minima.sort_by(|&a, &b| smooth[a].total_cmp(&smooth[b]).then(a.cmp(&b)));
    let mut picked: Vec<(usize, f64)> = Vec::with_capacity(count);
    for &i in &minima {
        if picked.len() == count {
            break;
        }
        let clear = picked
            .iter()
            .all(|&(p, w)| p.abs_diff(i) > 2 && (xs[p] - xs[i]).abs() > w);
        if clear {
            picked.push((i, width_at(i)));
        }
    }
    let mut picked: Vec<usize> = picked.into_iter().map(|(i, _)| i).collect();
    // fall back to spreading seeds over the grid
    let mut k = 1;
    while picked.len() < count {
        let i = (k * n) / (count + 1);
        if !picked.contains(&i) {
            picked.push(i);
        }
        k += 1;
    }
    picked.sort();
    picked
}

fn half_depth_width(xs: &[f64], ys: &[f64], i: usize, baseline: f64, v: f64) -> Option<f64> {
    let level = baseline * (1.0 - v / 2.0);
    let right = (i..xs.len()).find(|&j| ys[j] >= level).map(|j| xs[j] - xs[i]);
    let left = (0..=i).rev().find(|&j| ys[j] >= level).map(|j| xs[i] - xs[j]);
    let half = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (l + r),
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => return None,
    };
    (half > 0.0).then_some(2.0 * half)
}
