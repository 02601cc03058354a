//! Two-crystal pulsed down-conversion source.
//!
//! Crystal 1 emits an H photon into the projector and a V photon that fires
//! the gate detector D. Crystal 2 emits an H and a V photon, both into the
//! projector. The crystal-1 H photon sits at `t_h + tau1`, the crystal-2 H
//! photon at `tau2` and the V photon at `t_v + tau2`, where `tau1`, `tau2` are
//! per-pair timing offsets drawn from `Normal(0, jitter_s^2)`. The jitter is
//! what makes the two pairs partially distinguishable; the effective E/A is
//! measured from the simulated scan exactly as in the experiment.
//!
//! Monte Carlo draws are indexed by sample number only, so every delay on a
//! grid sees the same offsets (common random numbers) and a scan is the same
//! whether its points are evaluated serially or in parallel.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
// unused when std is linked elsewhere in the build graph
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::analysis::{EaMethod, ScanCurve};
use crate::error::{invalid, Error, Result};
use crate::fock::{build_projector, Polarization, ProjectorNetwork};
use crate::temporal::{
    CoincidenceEngine, Crystal, DetectionPattern, Photon, PhotonEnsemble, SpatialMismatch,
    WavePacket,
};

/// Speed of light in micrometers per femtosecond, for display conversions.
pub const C_UM_PER_FS: f64 = 0.299_792_458;

/// Largest standard error accepted from [`effective_ea`].
pub const EA_MAX_STDERR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Packet width (amplitude e-width, micrometers of optical path).
    pub sigma: f64,
    /// Per-pair timing jitter standard deviation.
    pub jitter_s: f64,
    pub mu_spatial: f64,
    /// Delay of the crystal-1 H photon relative to the crystal-2 H photon.
    pub t_h: f64,
    /// Delay of the V photon relative to the crystal-2 H photon.
    pub t_v: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub mismatch: SpatialMismatch,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            sigma: 55.0,
            jitter_s: 0.0,
            mu_spatial: 1.0,
            t_h: 0.0,
            t_v: 0.0,
            mc_samples: 20_000,
            seed: 0x5eed_2007,
            mismatch: SpatialMismatch::CrossPolarization,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid("sigma must be positive"));
        }
        if !(self.jitter_s >= 0.0) || !self.jitter_s.is_finite() {
            return Err(invalid("jitter_s must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.mu_spatial) {
            return Err(invalid("mu_spatial must lie in [0, 1]"));
        }
        if !self.t_h.is_finite() || !self.t_v.is_finite() {
            return Err(invalid("delays must be finite"));
        }
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples must be at least 1"));
        }
        Ok(())
    }

    pub fn with_t_v(&self, t_v: f64) -> Self {
        Self {
            t_v,
            ..self.clone()
        }
    }

    /// Number of Monte Carlo draws actually used: one when there is no jitter.
    pub fn effective_samples(&self) -> usize {
        if self.jitter_s == 0.0 {
            1
        } else {
            self.mc_samples
        }
    }
}

/// The interfering triple of one gated event. The trigger photon carries
/// `pair1_offset` but never enters the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedEvent {
    pub pair1_offset: f64,
    pub pair2_offset: f64,
    pub ensemble: PhotonEnsemble,
}

pub fn build_event(cfg: &SourceConfig, tau1: f64, tau2: f64) -> Result<GatedEvent> {
    let packet = |center| WavePacket::new(center, cfg.sigma);
    let photons = vec![
        Photon::new(Polarization::H, packet(cfg.t_h + tau1)?, Crystal::One),
        Photon::new(Polarization::H, packet(tau2)?, Crystal::Two),
        Photon::new(Polarization::V, packet(cfg.t_v + tau2)?, Crystal::Two),
    ];
    let ensemble = PhotonEnsemble::new(photons, cfg.mu_spatial, cfg.mismatch)?;
    Ok(GatedEvent {
        pair1_offset: tau1,
        pair2_offset: tau2,
        ensemble,
    })
}

/// Offsets `(tau1, tau2)` of Monte Carlo sample `index`. Each sample has its
/// own ChaCha stream under the master seed.
pub fn jitter_offsets(cfg: &SourceConfig, index: u64) -> (f64, f64) {
    if cfg.jitter_s == 0.0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let z1: f64 = StandardNormal.sample(&mut rng);
    let z2: f64 = StandardNormal.sample(&mut rng);
    (cfg.jitter_s * z1, cfg.jitter_s * z2)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl RateEstimate {
    fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Two-fold rates entering the accidental four-fold estimate. A, B, C are the
/// projector detectors and D the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFoldRates {
    pub ab: f64,
    pub ac: f64,
    pub bc: f64,
    pub ad: f64,
    pub bd: f64,
    pub cd: f64,
}

/// `(R_AB R_CD + R_AC R_BD + R_AD R_BC) / R_0`: the four-fold rate if the two
/// pairs were independent.
pub fn accidental_fourfold(rates: &TwoFoldRates, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(invalid("repetition rate must be positive"));
    }
    let all = [rates.ab, rates.ac, rates.bc, rates.ad, rates.bd, rates.cd];
    if all.iter().any(|r| !(*r >= 0.0)) {
        return Err(invalid("two-fold rates must be non-negative"));
    }
    Ok((rates.ab * rates.cd + rates.ac * rates.bd + rates.ad * rates.bc) / r0)
}

/// Everything measured at one `t_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub t_v: f64,
    pub fourfold: RateEstimate,
    pub two_fold: TwoFoldRates,
    pub accidental: f64,
}

/// Precomputed pieces shared by all points of a scan: network, engines and
/// the jitter draws.
#[derive(Debug, Clone)]
pub struct ScanPlan {
    cfg: SourceConfig,
    net: ProjectorNetwork,
    triple: CoincidenceEngine,
    pair: CoincidenceEngine,
    offsets: Vec<(f64, f64)>,
    gate: [f64; 3],
}

impl ScanPlan {
    /// Pulses are normalized per emitted pair of pairs, so `R_0 = 1`.
    pub const REPETITION_RATE: f64 = 1.0;

    /// Gate detector efficiency `R_D`, absorbed into the normalization.
    pub const GATE_RATE: f64 = 1.0;

    pub fn new(cfg: &SourceConfig) -> Result<Self> {
        cfg.validate()?;
        let net = build_projector(3)?;
        let offsets = (0..cfg.effective_samples() as u64)
            .map(|i| jitter_offsets(cfg, i))
            .collect();
        // crystal-1 H photon reaching each projector arm, times the gate rate
        let single = CoincidenceEngine::new(1);
        let h1 = PhotonEnsemble::new(
            vec![Photon::new(
                Polarization::H,
                WavePacket::new(cfg.t_h, cfg.sigma)?,
                Crystal::One,
            )],
            cfg.mu_spatial,
            cfg.mismatch,
        )?;
        let mut gate = [0.0; 3];
        for (arm, g) in gate.iter_mut().enumerate() {
            *g = single.coincidence_rate(&h1, &net, &DetectionPattern::new(vec![arm]))?
                * Self::GATE_RATE;
        }
        Ok(Self {
            cfg: cfg.clone(),
            net,
            triple: CoincidenceEngine::new(3),
            pair: CoincidenceEngine::new(2),
            offsets,
            gate,
        })
    }

    pub fn config(&self) -> &SourceConfig {
        &self.cfg
    }

    /// Per-sample gated four-fold rates at `t_v`.
    pub fn fourfold_samples(&self, t_v: f64) -> Result<Vec<f64>> {
        let cfg = self.cfg.with_t_v(t_v);
        let pattern = DetectionPattern::all_arms(3);
        self.offsets
            .iter()
            .map(|&(tau1, tau2)| {
                let event = build_event(&cfg, tau1, tau2)?;
                self.triple
                    .coincidence_rate(&event.ensemble, &self.net, &pattern)
            })
            .collect()
    }

    /// Projector two-folds come from the crystal-2 pair alone; its shared
    /// offset cancels, so they need no Monte Carlo.
    pub fn two_fold(&self, t_v: f64) -> Result<TwoFoldRates> {
        let cfg = &self.cfg;
        let pair = PhotonEnsemble::new(
            vec![
                Photon::new(Polarization::H, WavePacket::new(0.0, cfg.sigma)?, Crystal::Two),
                Photon::new(Polarization::V, WavePacket::new(t_v, cfg.sigma)?, Crystal::Two),
            ],
            cfg.mu_spatial,
            cfg.mismatch,
        )?;
        let r = |j, k| self.pair.two_fold_inclusive_rate(&pair, &self.net, j, k);
        Ok(TwoFoldRates {
            ab: r(0, 1)?,
            ac: r(0, 2)?,
            bc: r(1, 2)?,
            ad: self.gate[0],
            bd: self.gate[1],
            cd: self.gate[2],
        })
    }

    pub fn point(&self, t_v: f64) -> Result<ScanPoint> {
        let samples = self.fourfold_samples(t_v)?;
        let two_fold = self.two_fold(t_v)?;
        Ok(ScanPoint {
            t_v,
            fourfold: RateEstimate::from_samples(&samples),
            two_fold,
            accidental: accidental_fourfold(&two_fold, Self::REPETITION_RATE)?,
        })
    }
}

pub fn fourfold_rate(cfg: &SourceConfig) -> Result<RateEstimate> {
    Ok(ScanPlan::new(cfg)?.point(cfg.t_v)?.fourfold)
}

/// A `t_v` scan: four-fold with Monte Carlo errors, the projector two-folds
/// and the accidental (2x2) estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TvScan {
    pub points: Vec<ScanPoint>,
}

impl TvScan {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t_v).collect()
    }

    pub fn fourfold(&self) -> Result<ScanCurve> {
        ScanCurve::new(
            self.grid(),
            self.points.iter().map(|p| p.fourfold.mean).collect(),
            Some(self.points.iter().map(|p| p.fourfold.stderr).collect()),
        )
    }

    pub fn accidental(&self) -> Result<ScanCurve> {
        ScanCurve::new(
            self.grid(),
            self.points.iter().map(|p| p.accidental).collect(),
            None,
        )
    }

    /// Projector two-fold curves in the order AB, AC, BC.
    pub fn two_fold(&self) -> Result<[ScanCurve; 3]> {
        let curve = |f: fn(&TwoFoldRates) -> f64| {
            ScanCurve::new(
                self.grid(),
                self.points.iter().map(|p| f(&p.two_fold)).collect(),
                None,
            )
        };
        Ok([curve(|r| r.ab)?, curve(|r| r.ac)?, curve(|r| r.bc)?])
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("scan grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("scan grid must be strictly increasing"));
    }
    Ok(())
}

pub fn scan_tv(cfg: &SourceConfig, tv_grid: &[f64]) -> Result<TvScan> {
    check_grid(tv_grid)?;
    let plan = ScanPlan::new(cfg)?;
    let points = tv_grid
        .iter()
        .map(|&t| plan.point(t))
        .collect::<Result<_>>()?;
    Ok(TvScan { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EAEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: EaMethod,
}

/// Wing delays used by [`effective_ea`]: 10 to 20 sigma on either side,
/// beyond any dip of the `t_h = 0` scan.
pub fn wing_grid(sigma: f64) -> Vec<f64> {
    let far: Vec<f64> = (0..5).map(|i| (10.0 + 2.5 * i as f64) * sigma).collect();
    far.iter().rev().map(|d| -d).chain(far.iter().copied()).collect()
}

/// E/A from the `t_h = 0` scan: mean wing ratio of the four-fold rate to its
/// accidental estimate, minus one.
pub fn effective_ea(cfg: &SourceConfig) -> Result<EAEstimate> {
    effective_ea_with_limit(cfg, EA_MAX_STDERR)
}

pub fn effective_ea_with_limit(cfg: &SourceConfig, max_stderr: f64) -> Result<EAEstimate> {
    let cfg = SourceConfig {
        t_h: 0.0,
        ..cfg.clone()
    };
    let plan = ScanPlan::new(&cfg)?;
    let wings = wing_grid(cfg.sigma);
    let mut per_sample = vec![0.0; plan.offsets.len()];
    for &t in &wings {
        let acc = accidental_fourfold(&plan.two_fold(t)?, ScanPlan::REPETITION_RATE)?;
        for (acc_sum, rate) in per_sample.iter_mut().zip(plan.fourfold_samples(t)?) {
            *acc_sum += rate / acc / wings.len() as f64;
        }
    }
    let ratio = RateEstimate::from_samples(&per_sample);
    if cfg.jitter_s > 0.0 && (per_sample.len() < 2 || ratio.stderr > max_stderr) {
        return Err(Error::UnstableEstimate {
            stderr: if per_sample.len() < 2 {
                f64::INFINITY
            } else {
                ratio.stderr
            },
            limit: max_stderr,
        });
    }
    Ok(EAEstimate {
        value: (ratio.mean - 1.0).clamp(0.0, 1.0),
        stderr: ratio.stderr,
        method: EaMethod::Wings,
    })
}

/// Jitter giving the requested effective E/A, by bisection on the monotone
/// map `jitter_s -> E/A` (common random numbers keep it monotone).
pub fn calibrate_jitter(cfg: &SourceConfig, target_ea: f64) -> Result<f64> {
    if !(target_ea > 0.0 && target_ea <= 1.0) {
        return Err(invalid("target E/A must lie in (0, 1]"));
    }
    let ea_at = |jitter_s: f64| -> Result<f64> {
        effective_ea(&SourceConfig {
            jitter_s,
            ..cfg.clone()
        })
        .map(|e| e.value)
    };
    if target_ea >= ea_at(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = cfg.sigma;
    while ea_at(hi)? > target_ea {
        hi *= 2.0;
        if hi > 1e4 * cfg.sigma {
            return Err(invalid("target E/A unreachable by jitter"));
        }
    }
    while hi - lo > 1e-9 * cfg.sigma {
        let mid = 0.5 * (lo + hi);
        if ea_at(mid)? > target_ea {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Poisson counting noise on a rate curve. The curve is scaled so that its
/// maximum maps to `max_counts`, a flat accidental floor of `floor` counts is
/// added, counts are drawn, and the floor is subtracted again. Errors are the
/// square roots of the raw counts, in rate units.
pub fn inject_poisson_noise(
    curve: &ScanCurve,
    max_counts: f64,
    floor: f64,
    seed: u64,
) -> Result<ScanCurve> {
    if !(max_counts > 0.0) || !(floor >= 0.0) {
        return Err(invalid("max_counts must be positive and floor non-negative"));
    }
    let peak = curve.y().iter().fold(0.0_f64, |m, v| m.max(*v));
    if !(peak > 0.0) {
        return Err(invalid("cannot scale a curve without positive rates"));
    }
    let scale = max_counts / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(curve.len());
    let mut e = Vec::with_capacity(curve.len());
    for &rate in curve.y() {
        let mean = (rate * scale).max(0.0) + floor;
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|_| invalid("invalid Poisson mean"))?
                .sample(&mut rng)
        } else {
            0.0
        };
        y.push((counts - floor) / scale);
        e.push(counts.max(1.0).sqrt() / scale);
    }
    ScanCurve::new(curve.x().to_vec(), y, Some(e))
}

/// Uniform grid `min, min + step, ...` up to `max` inclusive (within a
/// thousandth of a step).
pub fn uniform_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(invalid("grid needs finite min <= max and step > 0"));
    }
    let n = ((max - min) / step + 1e-3).floor() as usize + 1;
    Ok((0..n).map(|i| min + step * i as f64).collect())
}
