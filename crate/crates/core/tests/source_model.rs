use noon_core::analysis::{fit_dips_with, FitOptions, ScanCurve, Weighting};
use noon_core::error::Error;
use noon_core::fock::Polarization;
use noon_core::source::{
    accidental_fourfold, build_event, effective_ea, effective_ea_with_limit, fourfold_rate,
    jitter_offsets, scan_tv, uniform_grid, wing_grid, SourceConfig, TwoFoldRates,
};
use noon_core::temporal::{Crystal, SpatialMismatch};

fn cfg() -> SourceConfig {
    SourceConfig {
        sigma: 50.0,
        mc_samples: 4000,
        ..SourceConfig::default()
    }
}

#[test]
fn jitter_draws_have_configured_variance() {
    let c = SourceConfig {
        jitter_s: 30.0,
        ..cfg()
    };
    let n = 20_000;
    let draws: Vec<(f64, f64)> = (0..n).map(|i| jitter_offsets(&c, i)).collect();
    for pick in [|d: &(f64, f64)| d.0, |d: &(f64, f64)| d.1] {
        let xs: Vec<f64> = draws.iter().map(pick).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of a sample variance is s^2 sqrt(2 / n)
        assert!((var - 900.0).abs() < 4.0 * 900.0 * (2.0 / n as f64).sqrt(), "{var}");
        assert!(mean.abs() < 4.0 * 30.0 / (n as f64).sqrt());
    }
    let cross: f64 = draws.iter().map(|d| d.0 * d.1).sum::<f64>() / n as f64;
    assert!(cross.abs() < 4.0 * 900.0 / (n as f64).sqrt());
}

#[test]
fn wings_estimate_matches_gaussian_average() {
    // pair offsets differ by N(0, 2 s^2); E[g^2] = 1 / sqrt(1 + s^2 / sigma^2)
    for ratio in [0.3, 0.7, 1.5] {
        let c = SourceConfig {
            jitter_s: ratio * 50.0,
            mc_samples: 20_000,
            ..cfg()
        };
        let est = effective_ea(&c).unwrap();
        let analytic = 1.0 / (1.0 + ratio * ratio).sqrt();
        assert!(
            (est.value - analytic).abs() < 4.0 * est.stderr + 1e-3,
            "s/sigma={ratio}: {} +- {} vs {analytic}",
            est.value,
            est.stderr
        );
    }
}

#[test]
fn ea_extremes() {
    let none = effective_ea(&cfg()).unwrap();
    // deterministic without jitter; packet tails at 10 sigma leave ~1e-12
    assert_eq!(none.stderr, 0.0);
    assert!((none.value - 1.0).abs() < 1e-10);

    let wide = SourceConfig {
        jitter_s: 20.0 * 50.0,
        mc_samples: 20_000,
        ..cfg()
    };
    let est = effective_ea(&wide).unwrap();
    assert!(est.value < 0.05, "{} +- {}", est.value, est.stderr);
}

#[test]
fn ea_decreases_with_jitter() {
    let values: Vec<f64> = [0.0, 10.0, 25.0, 50.0, 100.0]
        .iter()
        .map(|&s| {
            effective_ea(&SourceConfig {
                jitter_s: s,
                ..cfg()
            })
            .unwrap()
            .value
        })
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
}

#[test]
fn too_few_samples_is_unstable() {
    let c = SourceConfig {
        jitter_s: 40.0,
        mc_samples: 20,
        ..cfg()
    };
    assert!(matches!(
        effective_ea_with_limit(&c, 1e-3),
        Err(Error::UnstableEstimate { .. })
    ));
    let single = SourceConfig { mc_samples: 1, ..c };
    assert!(matches!(
        effective_ea(&single),
        Err(Error::UnstableEstimate { .. })
    ));
}

#[test]
fn scans_are_reproducible() {
    let c = SourceConfig {
        jitter_s: 35.0,
        mc_samples: 500,
        ..cfg()
    };
    let grid = uniform_grid(-400.0, 400.0, 50.0).unwrap();
    let a = scan_tv(&c, &grid).unwrap();
    let b = scan_tv(&c, &grid).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.fourfold.mean.to_bits(), q.fourfold.mean.to_bits());
        assert_eq!(p.fourfold.stderr.to_bits(), q.fourfold.stderr.to_bits());
        assert_eq!(p.accidental.to_bits(), q.accidental.to_bits());
    }
    // single-point evaluation agrees with the scan
    let mid = fourfold_rate(&c.with_t_v(grid[3])).unwrap();
    assert_eq!(mid.mean.to_bits(), a.points[3].fourfold.mean.to_bits());
}

#[test]
fn trigger_offset_only_moves_crystal_one() {
    let c = SourceConfig {
        t_h: 120.0,
        t_v: -40.0,
        mu_spatial: 0.9,
        ..cfg()
    };
    let e = build_event(&c, 17.0, -5.0).unwrap();
    let photons = e.ensemble.photons();
    assert_eq!(photons.len(), 3);
    assert!(!photons
        .iter()
        .any(|p| p.origin == Crystal::One && p.polarization == Polarization::V));
    assert_eq!(photons[0].packet.center, 137.0);
    assert_eq!(photons[1].packet.center, -5.0);
    assert_eq!(photons[2].packet.center, -45.0);

    // a common shift of both pairs leaves every overlap unchanged
    let shifted = build_event(&c, 17.0 + 300.0, -5.0 + 300.0).unwrap();
    let (g, h) = (e.ensemble.gram(), shifted.ensemble.gram());
    assert!((g - h).iter().all(|z| z.norm() < 1e-12));
    assert_eq!(shifted.pair1_offset, 317.0);
}

#[test]
fn zero_delay_event_under_uniform_mismatch() {
    let c = SourceConfig {
        mu_spatial: 0.8,
        mismatch: SpatialMismatch::AllPairs,
        ..cfg()
    };
    let e = build_event(&c, 0.0, 0.0).unwrap();
    let g = e.ensemble.gram();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.8 };
            assert!((g[(i, j)].re - want).abs() < 1e-15 && g[(i, j)].im == 0.0);
        }
    }
}

fn fit_unweighted(curve: &ScanCurve, n_dips: usize, init: &[f64]) -> Vec<(f64, f64)> {
    let mut opts = FitOptions::new(n_dips);
    opts.init_centers = Some(init.to_vec());
    opts.weighting = Weighting::Unweighted;
    let fit = fit_dips_with(curve, &opts).unwrap();
    fit.dips
        .iter()
        .enumerate()
        .map(|(i, d)| (fit.visibility(i), d.center))
        .collect()
}

#[test]
fn overlapped_h_photons_give_one_dip() {
    let grid = uniform_grid(-800.0, 800.0, 40.0).unwrap();
    let scan = scan_tv(&cfg(), &grid).unwrap();
    let dips = fit_unweighted(&scan.fourfold().unwrap(), 1, &[0.0]);
    assert!((dips[0].0 - 1.0).abs() < 1e-6);
    assert!(dips[0].1.abs() < 1e-6);
    // the minimum sits at zero delay and reaches zero
    assert!(scan.points[20].fourfold.mean < 1e-15);
}

#[test]
fn separated_h_photons_give_two_dips() {
    let c = SourceConfig { t_h: 600.0, ..cfg() };
    let grid = uniform_grid(-1000.0, 1600.0, 40.0).unwrap();
    let scan = scan_tv(&c, &grid).unwrap();
    let dips = fit_unweighted(&scan.fourfold().unwrap(), 2, &[0.0, 600.0]);
    for ((v, center), want) in dips.iter().zip([0.0, 600.0]) {
        assert!((v - 0.5).abs() < 1e-3, "{v}");
        assert!((center - want).abs() < 1.0, "{center}");
    }
}

#[test]
fn half_depth_when_one_h_is_far() {
    let far = SourceConfig {
        t_h: 5000.0,
        ..cfg()
    };
    let on = fourfold_rate(&far).unwrap().mean;
    let off = fourfold_rate(&far.with_t_v(-5000.0)).unwrap().mean;
    assert!((on / off - 0.5).abs() < 1e-10);
}

#[test]
fn wings_are_flat() {
    let c = SourceConfig {
        jitter_s: 35.0,
        mc_samples: 2000,
        ..cfg()
    };
    let scan = scan_tv(&c, &wing_grid(c.sigma)).unwrap();
    let mean = scan.points.iter().map(|p| p.fourfold.mean).sum::<f64>() / scan.points.len() as f64;
    for p in &scan.points {
        assert!((p.fourfold.mean - mean).abs() < 3.0 * p.fourfold.stderr + 1e-12);
    }
    let acc = scan.points[0].accidental;
    assert!(scan.points.iter().all(|p| (p.accidental / acc - 1.0).abs() < 1e-4));
}

#[test]
fn accidental_estimate_examples() {
    let r = 0.25;
    let all = TwoFoldRates {
        ab: r,
        ac: r,
        bc: r,
        ad: r,
        bd: r,
        cd: r,
    };
    assert!((accidental_fourfold(&all, 1.0).unwrap() - 3.0 * r * r).abs() < 1e-15);
    let zeroed = TwoFoldRates {
        ab: 0.0,
        ac: 0.0,
        bc: 0.0,
        ..all
    };
    assert_eq!(accidental_fourfold(&zeroed, 1.0).unwrap(), 0.0);
    assert!(accidental_fourfold(&all, 0.0).is_err());
}
