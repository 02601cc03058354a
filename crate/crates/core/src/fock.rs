//! Single-temporal-mode Fock algebra for the N-arm NOON projector.
//!
//! The input lives in the two polarization modes `a_H`, `a_V`. Arm `k` of the
//! projector sees `b_k = (a_H - a_V e^{i delta_k}) / sqrt(2N)` with
//! `delta_k = 2 pi (k-1) / N`. Vacuum inputs of the beam splitters never
//! contribute to normally ordered rates and are left out; the polarizer
//! rejection of each arm is kept as an explicit loss amplitude so that the
//! network is an isometry (needed by inclusive rates in [`crate::temporal`]).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
// unused when std is linked elsewhere in the build graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Tolerance on `sum |c_k|^2 = 1` accepted by normalized-only operations.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
}

/// `sum_k c_k |k>_H |N-k>_V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockStateHV {
    n_total: usize,
    amps: Vec<Complex64>,
}

impl FockStateHV {
    /// Builds a state from amplitudes that are already normalized.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let state = Self::raw(amps)?;
        let norm_sqr = state.norm_sqr();
        if (norm_sqr - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(state)
    }

    /// Builds a state and rescales it to unit norm.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let mut state = Self::raw(amps)?;
        let norm = state.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite state"));
        }
        state.amps.iter_mut().for_each(|c| *c /= norm);
        Ok(state)
    }

    /// Stores the amplitudes as given, without any norm check.
    pub fn raw(amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(invalid("a Fock state needs at least N+1 = 2 amplitudes"));
        }
        Ok(Self {
            n_total: amps.len() - 1,
            amps,
        })
    }

    /// `|k>_H |n-k>_V`.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k > n {
            return Err(invalid("basis state needs n >= 1 and k <= n"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n + 1];
        amps[k] = Complex64::new(1.0, 0.0);
        Ok(Self { n_total: n, amps })
    }

    /// `(|N,0> - |0,N>) / sqrt(2)`.
    pub fn noon(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("NOON state needs n >= 1"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n + 1];
        let r = core::f64::consts::FRAC_1_SQRT_2;
        amps[n] = Complex64::new(r, 0.0);
        amps[0] = Complex64::new(-r, 0.0);
        Ok(Self { n_total: n, amps })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Output amplitudes of the N-arm projector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorNetwork {
    n_arms: usize,
    amp_h: Vec<Complex64>,
    amp_v: Vec<Complex64>,
}

impl ProjectorNetwork {
    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn amp_h(&self) -> &[Complex64] {
        &self.amp_h
    }

    pub fn amp_v(&self) -> &[Complex64] {
        &self.amp_v
    }

    /// Wave-plate phase of each arm, `2 pi (k-1) / N`.
    pub fn phases(&self) -> Vec<f64> {
        (0..self.n_arms).map(|k| arm_phase(k, self.n_arms)).collect()
    }

    /// Detector amplitude of arm `arm` (0-based) for an input polarization.
    pub fn detector(&self, arm: usize, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::H => self.amp_h[arm],
            Polarization::V => self.amp_v[arm],
        }
    }

    /// Amplitude into the polarizer-rejected port of arm `arm` (0-based).
    ///
    /// The rejected port projects onto the polarization orthogonal to the
    /// detector's, `(a_H + a_V e^{i delta_k}) / sqrt(2N)`.
    pub fn loss(&self, arm: usize, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::H => self.amp_h[arm],
            Polarization::V => -self.amp_v[arm],
        }
    }
}

fn arm_phase(k: usize, n: usize) -> f64 {
    2.0 * PI * k as f64 / n as f64
}

pub fn build_projector(n: usize) -> Result<ProjectorNetwork> {
    if n < 2 {
        return Err(invalid("projector needs at least 2 arms"));
    }
    let scale = 1.0 / ((2 * n) as f64).sqrt();
    let amp_h = vec![Complex64::new(scale, 0.0); n];
    let amp_v = (0..n)
        .map(|k| -Complex64::from_polar(scale, arm_phase(k, n)))
        .collect();
    Ok(ProjectorNetwork {
        n_arms: n,
        amp_h,
        amp_v,
    })
}

/// Coefficients of `prod_k b_k` as a commuting polynomial; entry `j` multiplies
/// `x^j y^(N-j)` (x for `a_H`, y for `a_V`).
pub fn product_polynomial(net: &ProjectorNetwork) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for (h, v) in net.amp_h.iter().zip(&net.amp_v) {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (j, c) in coeffs.iter().enumerate() {
            next[j + 1] += c * h;
            next[j] += c * v;
        }
        coeffs = next;
    }
    coeffs
}

/// Max-norm distance between `prod_k b_k` and `(x^N - y^N) / (2N)^(N/2)`.
pub fn product_identity_residual(n: usize) -> Result<f64> {
    let net = build_projector(n)?;
    let coeffs = product_polynomial(&net);
    let scale = 1.0 / ((2 * n) as f64).powf(n as f64 / 2.0);
    let residual = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let target = if j == n {
                scale
            } else if j == 0 {
                -scale
            } else {
                0.0
            };
            (c - Complex64::new(target, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    Ok(residual)
}

/// `<prod b^dag prod b>` by applying each `b_k` to the Fock vector in turn.
pub fn n_fold_rate(state: &FockStateHV, net: &ProjectorNetwork) -> Result<f64> {
    if state.n_total != net.n_arms {
        return Err(Error::DimensionMismatch {
            expected: net.n_arms,
            got: state.n_total,
        });
    }
    // vector[m] holds the amplitude of |m>_H |total - m>_V
    let mut vector = state.amps.clone();
    for (h, v) in net.amp_h.iter().zip(&net.amp_v) {
        let total = vector.len() - 1;
        let next = (0..total)
            .map(|m| {
                let from_h = vector[m + 1] * h * ((m + 1) as f64).sqrt();
                let from_v = vector[m] * v * ((total - m) as f64).sqrt();
                from_h + from_v
            })
            .collect();
        vector = next;
    }
    Ok(vector[0].norm_sqr())
}

pub(crate) fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// `2 N! |<Phi|NOON>|^2 / (2N)^N`.
pub fn noon_projection_rate(state: &FockStateHV) -> Result<f64> {
    let norm_sqr = state.norm_sqr();
    if (norm_sqr - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm_sqr });
    }
    let n = state.n_total;
    let overlap = (state.amps[n].conj() - state.amps[0].conj()) * core::f64::consts::FRAC_1_SQRT_2;
    let prefactor = match (2 * n as u128).checked_pow(n as u32) {
        Some(denom) => 2.0 * factorial(n) as f64 / denom as f64,
        None => 2.0 * factorial(n) as f64 / ((2 * n) as f64).powi(n as i32),
    };
    Ok(prefactor * overlap.norm_sqr())
}

/// `|c0|^2 + |cN|^2 - 2 |c0 cN| cos(N delta + delta0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel {
    pub c0: Complex64,
    pub cn: Complex64,
    pub delta0: f64,
    pub n: usize,
}

impl FringeModel {
    /// Offset follows from the amplitude phases: `delta0 = arg cN - arg c0`.
    pub fn from_amplitudes(c0: Complex64, cn: Complex64, n: usize) -> Self {
        Self {
            c0,
            cn,
            delta0: cn.arg() - c0.arg(),
            n,
        }
    }

    pub fn from_state(state: &FockStateHV) -> Self {
        Self::from_amplitudes(state.amps[0], state.amps[state.n_total], state.n_total)
    }

    pub fn rate(&self, delta: f64) -> f64 {
        let a = self.c0.norm_sqr() + self.cn.norm_sqr();
        let b = 2.0 * self.c0.norm() * self.cn.norm();
        (a - b * (self.n as f64 * delta + self.delta0).cos()).max(0.0)
    }
}

pub fn fringe_scan(model: &FringeModel, deltas: &[f64]) -> Vec<f64> {
    deltas.iter().map(|&d| model.rate(d)).collect()
}
