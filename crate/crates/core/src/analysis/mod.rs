//! Dip fitting, closed-form visibility predictions and E/A inference.

mod fit;

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

pub use fit::{fit_dips, fit_dips_with, Dip, DipFit, FitOptions, Weighting};

/// Sampled rate versus delay (delays in micrometers of optical path).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCurve {
    x: Vec<f64>,
    y: Vec<f64>,
    yerr: Option<Vec<f64>>,
}

impl ScanCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>, yerr: Option<Vec<f64>>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(e) = &yerr {
            if e.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    got: e.len(),
                });
            }
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("scan delays must be strictly increasing"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("scan values must be finite"));
        }
        Ok(Self { x, y, yerr })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn yerr(&self) -> Option<&[f64]> {
        self.yerr.as_deref()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Multiplies rates (and errors) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v * factor).collect(),
            yerr: self
                .yerr
                .as_ref()
                .map(|e| e.iter().map(|v| v * factor.abs()).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPrediction {
    /// Single dip when both H photons overlap.
    pub v3_overlapped: f64,
    /// Dip from the V photon meeting the H photon of its own pair.
    pub v3_dip1: f64,
    /// Dip from the V photon meeting the H photon of the other pair.
    pub v3_dip2: f64,
}

/// Three-photon visibilities from the spatial reduction factor `beta` and the
/// pair indistinguishability `ea` (E/A).
pub fn predict_visibilities(beta: f64, ea: f64) -> Result<VisibilityPrediction> {
    if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&ea) {
        return Err(invalid("beta and E/A must lie in [0, 1]"));
    }
    Ok(VisibilityPrediction {
        v3_overlapped: beta * (1.0 + 3.0 * ea) / (2.0 * (1.0 + ea)),
        v3_dip1: beta / 2.0,
        v3_dip2: beta * ea / 2.0,
    })
}

/// Visibility of the N-fold dip for `|N-1, 1>` when `m` H photons share the
/// V photon's temporal mode.
pub fn predict_visibility_mk(n: usize, m: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("photon number must be at least 2"));
    }
    if m > n - 1 {
        return Err(invalid("co-modal H photon count must lie in 0..=N-1"));
    }
    Ok(m as f64 / (n - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaMethod {
    /// Ratio of the four-fold to the accidental estimate on the scan wings.
    Wings,
    /// Visibility of the second dip with separated H photons.
    Dip2,
    /// Visibility of the single dip with overlapping H photons.
    V3,
}

/// Inverts a measured visibility into E/A.
pub fn infer_ea(v3: f64, beta: f64, method: EaMethod) -> Result<f64> {
    if !(0.0..=1.0).contains(&v3) || !(0.0..=1.0).contains(&beta) {
        return Err(invalid("visibility and beta must lie in [0, 1]"));
    }
    if beta == 0.0 {
        return Err(Error::OutOfRange("beta = 0 carries no interference".into()));
    }
    let raw = match method {
        EaMethod::V3 => {
            let slack = 1e-12;
            if v3 < beta / 2.0 - slack || v3 > beta + slack {
                return Err(Error::OutOfRange(alloc::format!(
                    "overlapped-dip visibility {v3} outside [beta/2, beta] = [{}, {beta}]",
                    beta / 2.0
                )));
            }
            (2.0 * v3 - beta) / (3.0 * beta - 2.0 * v3)
        }
        EaMethod::Dip2 => 2.0 * v3 / beta,
        EaMethod::Wings => {
            return Err(invalid("wings inference needs scan curves, see infer_ea_wings"))
        }
    };
    if !(0.0..=1.0).contains(&raw) {
        log::warn!("inferred E/A {raw} clamped to [0, 1]");
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// `beta` from the visibility of a two-photon dip, ideally 50 %.
pub fn beta_from_two_fold(visibility: f64) -> f64 {
    visibility / 0.5
}

/// Minimum number of wing points for [`infer_ea_wings`].
pub const MIN_WING_POINTS: usize = 5;

/// Wings sit farther than this many FWHH from every dip center.
pub const WING_EXCLUSION_FWHH: f64 = 2.0;

/// E/A from the ratio of the four-fold scan to its accidental (2x2) estimate
/// on the wings. The dip is located by a single-dip fit of `signal`.
pub fn infer_ea_wings(signal: &ScanCurve, accidental: &ScanCurve) -> Result<f64> {
    let fit = fit_dips(signal, 1, None)?;
    let dips: Vec<(f64, f64)> = fit
        .dips
        .iter()
        .filter(|d| d.determined)
        .map(|d| (d.center, d.fwhh))
        .collect();
    infer_ea_wings_excluding(signal, accidental, &dips)
}

/// As [`infer_ea_wings`], with explicit `(center, fwhh)` exclusion zones.
pub fn infer_ea_wings_excluding(
    signal: &ScanCurve,
    accidental: &ScanCurve,
    dips: &[(f64, f64)],
) -> Result<f64> {
    if signal.x() != accidental.x() {
        return Err(invalid("signal and accidental curves must share the grid"));
    }
    let ratios: Vec<f64> = signal
        .x()
        .iter()
        .zip(signal.y().iter().zip(accidental.y()))
        .filter(|(x, _)| {
            dips.iter()
                .all(|(c, w)| (*x - c).abs() > WING_EXCLUSION_FWHH * w)
        })
        .map(|(_, (s, a))| {
            if *a <= 0.0 {
                Err(invalid("accidental rate must be positive on the wings"))
            } else {
                Ok(s / a)
            }
        })
        .collect::<Result<_>>()?;
    if ratios.len() < MIN_WING_POINTS {
        return Err(Error::InsufficientWings {
            found: ratios.len(),
            needed: MIN_WING_POINTS,
        });
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scan_curve_validation() {
        assert!(ScanCurve::new(vec![0.0, 1.0], vec![1.0], None).is_err());
        assert!(ScanCurve::new(vec![0.0, 0.0], vec![1.0, 1.0], None).is_err());
        assert!(ScanCurve::new(vec![1.0, 0.0], vec![1.0, 1.0], None).is_err());
        assert!(ScanCurve::new(vec![0.0, 1.0], vec![1.0, 1.0], Some(vec![0.1])).is_err());
        assert!(ScanCurve::new(vec![0.0, 1.0], vec![1.0, f64::NAN], None).is_err());
        assert!(ScanCurve::new(vec![0.0, 1.0], vec![1.0, 1.0], Some(vec![0.1, 0.1])).is_ok());
    }

    #[test]
    fn visibility_predictions() {
        let p = predict_visibilities(0.96, 0.82).unwrap();
        assert_abs_diff_eq!(p.v3_overlapped, 0.96 * 3.46 / 3.64, epsilon = 1e-15);
        assert_abs_diff_eq!(p.v3_overlapped, 0.9125, epsilon = 1e-4);
        assert_abs_diff_eq!(predict_visibilities(0.92, 0.0).unwrap().v3_dip1, 0.46, epsilon = 1e-15);
        assert_abs_diff_eq!(predict_visibilities(0.92, 0.86).unwrap().v3_dip2, 0.3956, epsilon = 1e-15);
        let ideal = predict_visibilities(1.0, 1.0).unwrap();
        assert_eq!((ideal.v3_overlapped, ideal.v3_dip1, ideal.v3_dip2), (1.0, 0.5, 0.5));
        assert!(predict_visibilities(1.2, 0.5).is_err());
        assert!(predict_visibilities(0.5, -0.1).is_err());
    }

    #[test]
    fn mk_rule() {
        assert_eq!(predict_visibility_mk(3, 1).unwrap(), 0.5);
        assert_eq!(predict_visibility_mk(3, 2).unwrap(), 1.0);
        assert_eq!(predict_visibility_mk(5, 0).unwrap(), 0.0);
        assert!(predict_visibility_mk(3, 3).is_err());
        assert!(predict_visibility_mk(1, 0).is_err());
    }

    #[test]
    fn ea_inversion_examples() {
        let v3 = predict_visibilities(0.96, 0.82).unwrap().v3_overlapped;
        assert_abs_diff_eq!(infer_ea(v3, 0.96, EaMethod::V3).unwrap(), 0.82, epsilon = 1e-12);
        assert_abs_diff_eq!(infer_ea(0.3956, 0.92, EaMethod::Dip2).unwrap(), 0.86, epsilon = 1e-12);
        assert_abs_diff_eq!(infer_ea(0.48, 0.96, EaMethod::V3).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            infer_ea(0.3, 0.96, EaMethod::V3),
            Err(Error::OutOfRange(_))
        ));
        assert!(infer_ea(0.99, 0.96, EaMethod::V3).is_err());
        assert!(infer_ea(0.2, 0.0, EaMethod::Dip2).is_err());
        // above the invertible range of the second dip: clamped
        assert_eq!(infer_ea(0.5, 0.9, EaMethod::Dip2).unwrap(), 1.0);
    }

    #[test]
    fn wings_trivial_cases() {
        let x: Vec<f64> = (0..41).map(|i| -1000.0 + 50.0 * i as f64).collect();
        let acc: Vec<f64> = x.iter().map(|_| 2.0).collect();
        let sig = acc.clone();
        let a = ScanCurve::new(x.clone(), acc.clone(), None).unwrap();
        let s = ScanCurve::new(x.clone(), sig, None).unwrap();
        assert_abs_diff_eq!(infer_ea_wings(&s, &a).unwrap(), 0.0, epsilon = 1e-15);
        let doubled = ScanCurve::new(x.clone(), acc.iter().map(|v| 2.0 * v).collect(), None).unwrap();
        assert_abs_diff_eq!(
            infer_ea_wings_excluding(&doubled, &a, &[(0.0, 150.0)]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            infer_ea_wings_excluding(&doubled, &a, &[(0.0, 450.0)]),
            Err(Error::InsufficientWings { .. })
        ));
    }
}
