//! Coincidence rates for partially distinguishable photons.
//!
//! Each photon carries a polarization and a Gaussian temporal wavepacket.
//! Distinguishability enters only through the Gram matrix
//! `S[i][j] = spatial(i, j) <phi_i|phi_j>`. For a list of output ports
//! `d_1..d_N` (one per detected photon) the time-integrated rate is
//!
//! ```text
//! (1 / prod_p n_p!) sum_{sigma, tau in S_N} prod_k U[d_k, pol(sigma k)] conj(U[d_k, pol(tau k)]) S[tau k, sigma k]
//! ```
//!
//! where `n_p` counts repeated ports. The input is the unnormalized product
//! of one creation operator per photon, so bunched identical photons come
//! with their stimulated-emission weight (`1 + |S|^2` for two photons sharing
//! a mode). [`PhotonEnsemble::norm_sqr`] gives that weight.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
// unused when std is linked elsewhere in the build graph
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::fock::{Polarization, ProjectorNetwork};

/// Largest roundoff-negative rate that is silently clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

/// Eigenvalue floor accepted for the Gram matrix.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Gaussian temporal mode, amplitude `exp(-(t - center)^2 / (4 sigma^2))`.
///
/// Times are in micrometers of optical path (`c T`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePacket {
    pub center: f64,
    pub width_sigma: f64,
}

impl WavePacket {
    pub fn new(center: f64, width_sigma: f64) -> Result<Self> {
        if !(width_sigma > 0.0) || !width_sigma.is_finite() || !center.is_finite() {
            return Err(invalid("wavepacket needs finite center and width_sigma > 0"));
        }
        Ok(Self {
            center,
            width_sigma,
        })
    }
}

/// `<a|b>` for two Gaussian packets. Carrier phase is dropped, so the value is
/// real: `sqrt(2 sa sb / (sa^2 + sb^2)) exp(-dt^2 / (4 (sa^2 + sb^2)))`.
pub fn overlap(a: &WavePacket, b: &WavePacket) -> Complex64 {
    let (sa, sb) = (a.width_sigma, b.width_sigma);
    let sum_sq = sa * sa + sb * sb;
    let dt = a.center - b.center;
    let amplitude = (2.0 * sa * sb / sum_sq).sqrt();
    Complex64::new(amplitude * (-dt * dt / (4.0 * sum_sq)).exp(), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Crystal {
    One,
    Two,
}

impl Crystal {
    pub fn tag(self) -> u8 {
        match self {
            Crystal::One => 1,
            Crystal::Two => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Crystal::One),
            2 => Ok(Crystal::Two),
            _ => Err(invalid("crystal tag must be 1 or 2")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photon {
    pub polarization: Polarization,
    pub packet: WavePacket,
    pub origin: Crystal,
}

impl Photon {
    pub fn new(polarization: Polarization, packet: WavePacket, origin: Crystal) -> Self {
        Self {
            polarization,
            packet,
            origin,
        }
    }
}

/// Which Gram entries the spatial match factor multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpatialMismatch {
    /// Only pairs of photons arriving through different polarization inputs.
    /// Photons sharing a polarization share a single-mode fiber and are
    /// spatially matched.
    #[default]
    CrossPolarization,
    /// Every off-diagonal entry.
    AllPairs,
}

impl SpatialMismatch {
    fn applies(self, a: &Photon, b: &Photon) -> bool {
        match self {
            SpatialMismatch::CrossPolarization => a.polarization != b.polarization,
            SpatialMismatch::AllPairs => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonEnsemble {
    photons: Vec<Photon>,
    gram: DMatrix<Complex64>,
}

impl PhotonEnsemble {
    /// Gram matrix from packet overlaps, with `mu` applied to the pairs
    /// selected by `mismatch`.
    pub fn new(photons: Vec<Photon>, mu: f64, mismatch: SpatialMismatch) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(invalid("spatial match must lie in [0, 1]"));
        }
        let n = photons.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                return Complex64::new(1.0, 0.0);
            }
            let (a, b) = (&photons[i], &photons[j]);
            let s = overlap(&a.packet, &b.packet);
            if mismatch.applies(a, b) {
                s * mu
            } else {
                s
            }
        });
        Ok(Self { photons, gram })
    }

    /// Ensemble with an explicit Gram matrix, validated as an overlap matrix.
    pub fn with_gram(photons: Vec<Photon>, gram: DMatrix<Complex64>) -> Result<Self> {
        let n = photons.len();
        if gram.nrows() != n || gram.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: gram.nrows(),
            });
        }
        for i in 0..n {
            if (gram[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(Error::InvalidGram("diagonal must be 1".to_string()));
            }
            for j in 0..n {
                if (gram[(i, j)] - gram[(j, i)].conj()).norm() > 1e-12 {
                    return Err(Error::InvalidGram("matrix is not Hermitian".to_string()));
                }
                if gram[(i, j)].norm() > 1.0 + 1e-12 {
                    return Err(Error::InvalidGram("entry exceeds 1 in modulus".to_string()));
                }
            }
        }
        let ens = Self { photons, gram };
        if ens.min_eigenvalue() < -PSD_TOLERANCE {
            return Err(Error::InvalidGram("matrix is not positive semidefinite".to_string()));
        }
        Ok(ens)
    }

    pub fn photons(&self) -> &[Photon] {
        &self.photons
    }

    pub fn gram(&self) -> &DMatrix<Complex64> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.photons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.photons.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.photons.is_empty() {
            return 0.0;
        }
        self.gram
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Reorders photons (and the Gram matrix) so that new photon `i` is old
    /// photon `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.len();
        if order.len() != n || !order.iter().copied().sorted().eq(0..n) {
            return Err(invalid("order must be a permutation of the photon indices"));
        }
        let photons = order.iter().map(|&i| self.photons[i]).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| self.gram[(order[i], order[j])]);
        Ok(Self { photons, gram })
    }

    /// Squared norm of `prod_i a^dag_{pol_i, phi_i} |0>`: the sum over
    /// polarization-preserving permutations of `prod_i S[i, rho(i)]`.
    pub fn norm_sqr(&self) -> f64 {
        let n = self.len();
        (0..n)
            .permutations(n)
            .filter(|rho| {
                rho.iter()
                    .enumerate()
                    .all(|(i, &r)| self.photons[i].polarization == self.photons[r].polarization)
            })
            .map(|rho| {
                rho.iter()
                    .enumerate()
                    .map(|(i, &r)| self.gram[(i, r)])
                    .product::<Complex64>()
                    .re
            })
            .sum()
    }
}

/// Output arms at which photons are detected, one entry per photon
/// (0-based arm indices, repeats allowed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionPattern {
    pub detectors: Vec<usize>,
}

impl DetectionPattern {
    pub fn new(detectors: Vec<usize>) -> Self {
        Self { detectors }
    }

    /// One photon in every arm `0..n`.
    pub fn all_arms(n: usize) -> Self {
        Self {
            detectors: (0..n).collect(),
        }
    }
}

/// A physical output of the projector: a detector or the polarizer-rejected
/// port of an arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputPort {
    Detector(usize),
    Loss(usize),
}

impl OutputPort {
    fn amplitude(self, net: &ProjectorNetwork, pol: Polarization) -> Complex64 {
        match self {
            OutputPort::Detector(k) => net.detector(k, pol),
            OutputPort::Loss(k) => net.loss(k, pol),
        }
    }
}

/// Permutation-pair sums for a fixed photon number, with the permutation
/// table built once.
#[derive(Debug, Clone)]
pub struct CoincidenceEngine {
    n: usize,
    perms: Vec<Vec<usize>>,
}

impl CoincidenceEngine {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            perms: (0..n).permutations(n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unclamped permutation-pair sum for the given ports. The imaginary part
    /// vanishes up to roundoff.
    pub fn port_rate_complex(
        &self,
        ens: &PhotonEnsemble,
        net: &ProjectorNetwork,
        ports: &[OutputPort],
    ) -> Result<Complex64> {
        if ens.len() != self.n || ports.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: if ens.len() != self.n {
                    ens.len()
                } else {
                    ports.len()
                },
            });
        }
        for port in ports {
            let (OutputPort::Detector(k) | OutputPort::Loss(k)) = *port;
            if k >= net.n_arms() {
                return Err(invalid("arm index outside the network"));
            }
        }
        let n = self.n;
        // transfer[k][i]: amplitude for photon i to reach port k
        let transfer: Vec<Vec<Complex64>> = ports
            .iter()
            .map(|p| {
                ens.photons
                    .iter()
                    .map(|ph| p.amplitude(net, ph.polarization))
                    .collect()
            })
            .collect();
        let amps: Vec<Complex64> = self
            .perms
            .iter()
            .map(|sigma| (0..n).map(|k| transfer[k][sigma[k]]).product())
            .collect();

        let mut total = Complex64::new(0.0, 0.0);
        for (sigma, a_sigma) in self.perms.iter().zip(&amps) {
            if a_sigma.norm_sqr() == 0.0 {
                continue;
            }
            for (tau, a_tau) in self.perms.iter().zip(&amps) {
                let mut s = a_sigma * a_tau.conj();
                for k in 0..n {
                    s *= ens.gram[(tau[k], sigma[k])];
                }
                total += s;
            }
        }
        Ok(total / multiplicity_factor(ports) as f64)
    }

    pub fn port_rate(
        &self,
        ens: &PhotonEnsemble,
        net: &ProjectorNetwork,
        ports: &[OutputPort],
    ) -> Result<f64> {
        self.port_rate_complex(ens, net, ports).map(|z| clamp_rate(z.re))
    }

    pub fn coincidence_rate(
        &self,
        ens: &PhotonEnsemble,
        net: &ProjectorNetwork,
        pattern: &DetectionPattern,
    ) -> Result<f64> {
        let ports: Vec<OutputPort> = pattern
            .detectors
            .iter()
            .map(|&k| OutputPort::Detector(k))
            .collect();
        self.port_rate(ens, net, &ports)
    }

    /// Probability that detectors `j` and `k` both fire, summed over every fate
    /// of the remaining photons (any detector or loss port).
    pub fn two_fold_inclusive_rate(
        &self,
        ens: &PhotonEnsemble,
        net: &ProjectorNetwork,
        j: usize,
        k: usize,
    ) -> Result<f64> {
        if j == k {
            return Err(invalid("two-fold rate needs two distinct arms"));
        }
        let arms = net.n_arms();
        if j >= arms || k >= arms {
            return Err(invalid("arm index outside the network"));
        }
        if self.n < 2 {
            return Ok(0.0);
        }
        let ports: Vec<OutputPort> = (0..arms)
            .map(OutputPort::Detector)
            .chain((0..arms).map(OutputPort::Loss))
            .collect();
        let (dj, dk) = (OutputPort::Detector(j), OutputPort::Detector(k));
        let mut total = 0.0;
        for rest in ports.iter().copied().combinations_with_replacement(self.n - 2) {
            // each output multiset holding dj and dk arises from exactly one `rest`
            let mut pattern = vec![dj, dk];
            pattern.extend(rest);
            total += self.port_rate_complex(ens, net, &pattern)?.re;
        }
        Ok(clamp_rate(total))
    }
}

fn multiplicity_factor(ports: &[OutputPort]) -> u128 {
    let mut sorted = ports.to_vec();
    sorted.sort();
    sorted
        .chunk_by(|a, b| a == b)
        .map(|run| crate::fock::factorial(run.len()))
        .product()
}

fn clamp_rate(value: f64) -> f64 {
    if value < 0.0 {
        debug_assert!(
            value > -CLAMP_TOLERANCE,
            "permutation sum went negative beyond roundoff: {value}"
        );
        0.0
    } else {
        value
    }
}

pub fn coincidence_rate(
    ens: &PhotonEnsemble,
    net: &ProjectorNetwork,
    pattern: &DetectionPattern,
) -> Result<f64> {
    CoincidenceEngine::new(ens.len()).coincidence_rate(ens, net, pattern)
}

/// One photon per arm; the photon number must equal the number of arms.
pub fn nfold_projector_rate(ens: &PhotonEnsemble, net: &ProjectorNetwork) -> Result<f64> {
    if ens.len() != net.n_arms() {
        return Err(Error::DimensionMismatch {
            expected: net.n_arms(),
            got: ens.len(),
        });
    }
    coincidence_rate(ens, net, &DetectionPattern::all_arms(net.n_arms()))
}

pub fn two_fold_inclusive_rate(
    ens: &PhotonEnsemble,
    net: &ProjectorNetwork,
    j: usize,
    k: usize,
) -> Result<f64> {
    CoincidenceEngine::new(ens.len()).two_fold_inclusive_rate(ens, net, j, k)
}

/// Visibility of the two-fold dip for an H and a V photon in identical packets
/// on the three-arm projector, with their overlap scaled by `mu`, divided by
/// the ideal 50 %.
pub fn spatial_match_calibration(mu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid("spatial match must lie in [0, 1]"));
    }
    let net = crate::fock::build_projector(3)?;
    let packet = WavePacket::new(0.0, 1.0)?;
    let far = WavePacket::new(1e6, 1.0)?;
    let pair = |v_packet: WavePacket| {
        PhotonEnsemble::new(
            vec![
                Photon::new(Polarization::H, packet, Crystal::Two),
                Photon::new(Polarization::V, v_packet, Crystal::Two),
            ],
            mu,
            SpatialMismatch::CrossPolarization,
        )
    };
    let engine = CoincidenceEngine::new(2);
    let overlapped = engine.two_fold_inclusive_rate(&pair(packet)?, &net, 0, 1)?;
    let separated = engine.two_fold_inclusive_rate(&pair(far)?, &net, 0, 1)?;
    let visibility = 1.0 - overlapped / separated;
    Ok((visibility / 0.5).clamp(0.0, 1.0))
}

/// Spatial match giving the requested `beta`, by bisection on the monotone
/// calibration curve.
pub fn spatial_match_for_beta(beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid("beta must lie in [0, 1]"));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spatial_match_calibration(mid)? < beta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
