//! State-vector oracle: expands the input in an orthonormal basis of internal
//! (temporal and spatial) modes and propagates every photon through the
//! projector ports.
#![allow(dead_code)]

use std::collections::HashMap;

use itertools::Itertools;
use nalgebra::DMatrix;
use noon_core::fock::{Polarization, ProjectorNetwork};
use noon_core::temporal::{
    Crystal, OutputPort, Photon, PhotonEnsemble, SpatialMismatch, WavePacket,
};
use noon_core::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn photon(pol: Polarization, center: f64, sigma: f64) -> Photon {
    Photon::new(pol, WavePacket::new(center, sigma).unwrap(), Crystal::One)
}

/// Columns of `B` with `S = B^H B`, from the eigen-factorization of `S`.
pub fn factor(gram: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = gram.clone().symmetric_eigen();
    let n = gram.nrows();
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-13).collect();
    DMatrix::from_fn(keep.len(), n, |m, i| {
        let k = keep[m];
        eig.eigenvectors[(i, k)].conj() * eig.eigenvalues[k].sqrt()
    })
}

pub fn port_amp(net: &ProjectorNetwork, port: OutputPort, pol: Polarization) -> Complex64 {
    match port {
        OutputPort::Detector(k) => net.detector(k, pol),
        OutputPort::Loss(k) => net.loss(k, pol),
    }
}

pub fn all_ports(arms: usize) -> Vec<OutputPort> {
    (0..arms)
        .map(OutputPort::Detector)
        .chain((0..arms).map(OutputPort::Loss))
        .collect()
}

/// Occupied `(port index, internal mode)` pairs, sorted.
pub type Occupation = Vec<(usize, usize)>;

/// Probability of every output occupation `(port, internal mode)` multiset for
/// the unnormalized input `prod_i a^dag_i |0>`.
pub fn output_distribution(
    ens: &PhotonEnsemble,
    net: &ProjectorNetwork,
) -> (Vec<OutputPort>, HashMap<Occupation, f64>) {
    let b = &factor(ens.gram());
    let ports = all_ports(net.n_arms());
    let modes = b.nrows();
    let n = ens.len();
    // w[i][(port, mode)]
    let w: Vec<Vec<((usize, usize), Complex64)>> = ens
        .photons()
        .iter()
        .enumerate()
        .map(|(i, ph)| {
            ports
                .iter()
                .enumerate()
                .flat_map(|(p, port)| {
                    let u = port_amp(net, *port, ph.polarization);
                    (0..modes).map(move |m| ((p, m), u * b[(m, i)]))
                })
                .collect()
        })
        .collect();

    let mut amps: HashMap<Vec<(usize, usize)>, Complex64> = HashMap::new();
    for choice in (0..n).map(|i| 0..w[i].len()).multi_cartesian_product() {
        let mut key: Vec<(usize, usize)> = Vec::with_capacity(n);
        let mut a = c(1.0);
        for (i, &j) in choice.iter().enumerate() {
            key.push(w[i][j].0);
            a *= w[i][j].1;
        }
        key.sort();
        *amps.entry(key).or_insert(c(0.0)) += a;
    }
    if n == 0 {
        amps.insert(vec![], c(1.0));
    }
    let probs = amps
        .into_iter()
        .map(|(key, a)| {
            let occ: f64 = key
                .iter()
                .dedup_with_count()
                .map(|(count, _)| (1..=count).product::<usize>() as f64)
                .product();
            (key, a.norm_sqr() * occ)
        })
        .collect();
    (ports, probs)
}

pub fn oracle_port_rate(ens: &PhotonEnsemble, net: &ProjectorNetwork, pattern: &[OutputPort]) -> f64 {
    let (ports, probs) = output_distribution(ens, net);
    let mut want: Vec<usize> = pattern
        .iter()
        .map(|p| ports.iter().position(|q| q == p).unwrap())
        .collect();
    want.sort();
    probs
        .iter()
        .filter(|(key, _)| key.iter().map(|(p, _)| *p).sorted().eq(want.iter().copied()))
        .map(|(_, p)| p)
        .sum()
}

pub fn oracle_two_fold(ens: &PhotonEnsemble, net: &ProjectorNetwork, j: usize, k: usize) -> f64 {
    let (ports, probs) = output_distribution(ens, net);
    let pj = ports.iter().position(|q| *q == OutputPort::Detector(j)).unwrap();
    let pk = ports.iter().position(|q| *q == OutputPort::Detector(k)).unwrap();
    probs
        .iter()
        .filter(|(key, _)| key.iter().any(|(p, _)| *p == pj) && key.iter().any(|(p, _)| *p == pk))
        .map(|(_, p)| p)
        .sum()
}

pub fn random_gram(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let dim = rng.random_range(1..=n + 1);
    let cols: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            let v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|z| z / norm).collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let s: Complex64 = (0..dim).map(|m| cols[i][m].conj() * cols[j][m]).sum();
        if i == j {
            c(1.0)
        } else {
            s
        }
    })
}

pub fn random_ensemble(n: usize, rng: &mut ChaCha8Rng) -> PhotonEnsemble {
    let photons: Vec<Photon> = (0..n)
        .map(|_| {
            let pol = if rng.random_bool(0.5) { Polarization::H } else { Polarization::V };
            photon(pol, rng.random_range(-200.0..200.0), rng.random_range(30.0..90.0))
        })
        .collect();
    match rng.random_range(0..3) {
        0 => PhotonEnsemble::with_gram(photons, random_gram(n, rng)).unwrap(),
        1 => PhotonEnsemble::new(photons, rng.random_range(0.0..=1.0), SpatialMismatch::AllPairs)
            .unwrap(),
        _ => PhotonEnsemble::new(
            photons,
            rng.random_range(0.0..=1.0),
            SpatialMismatch::CrossPolarization,
        )
        .unwrap(),
    }
}

