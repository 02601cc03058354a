use rayon::prelude::*;

use noon_core::source::{ScanPlan, SourceConfig, TvScan};
use noon_core::Result;

/// [`noon_core::source::scan_tv`] with grid points evaluated in parallel.
/// Every point depends only on the shared plan, so the result is bit-identical
/// to the serial scan.
pub fn par_scan_tv(cfg: &SourceConfig, tv_grid: &[f64]) -> Result<TvScan> {
    if tv_grid.is_empty() || tv_grid.windows(2).any(|w| !(w[1] > w[0])) {
        // let the serial scan report the grid error
        return noon_core::source::scan_tv(cfg, tv_grid);
    }
    let plan = ScanPlan::new(cfg)?;
    let points = tv_grid
        .par_iter()
        .map(|&t| plan.point(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(TvScan { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use noon_core::source::scan_tv;

    #[test]
    fn parallel_equals_serial() {
        let cfg = SourceConfig {
            jitter_s: 30.0,
            mc_samples: 300,
            ..SourceConfig::default()
        };
        let grid: Vec<f64> = (-10..=10).map(|i| 40.0 * i as f64).collect();
        assert_eq!(par_scan_tv(&cfg, &grid).unwrap(), scan_tv(&cfg, &grid).unwrap());
        assert!(par_scan_tv(&cfg, &[]).is_err());
        assert!(par_scan_tv(&cfg, &[1.0, 0.0]).is_err());
    }
}
