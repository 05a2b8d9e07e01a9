//! Monte Carlo ensembles, exact small-n enumeration, and the combinatorial
//! audits (single-coordinate Lipschitz bound, stable covers).

mod cover;
mod ensemble;
mod exact;
mod perturb;

use serde::Serialize;

pub use self::cover::{build_stable_cover, check_cover_budget, StableCover, WitnessReport};
pub use self::ensemble::{
    concentration_probe, run_ensemble, ConcentrationRow, EnsembleReport, EnsembleSpec, KSummary,
    LkMean, Timing, ENSEMBLE_SCHEMA,
};
pub use self::exact::{
    exact_small_n, law_distribution, sampler_distribution, ExactExpectations, ExactMoments,
    MAX_EXACT_OUTCOMES,
};
pub use self::perturb::{
    lipschitz_audit, lipschitz_bound, perturb_one_coordinate, LipschitzReport,
};

/// Ordinary least squares fit of `ln y = intercept + slope * ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; absent with fewer than three points.
    pub slope_se: Option<f64>,
    pub points: usize,
}

/// Fits a power law through the points with positive coordinates.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<PowerLawFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (n > 2).then(|| {
        let ssr: f64 = logs
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    });
    Some(PowerLawFit {
        slope,
        intercept,
        slope_se,
        points: n,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one sample).
pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_power() {
        let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&k| (k, 3.0 / (k * k)))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.slope_se.unwrap() < 1e-10);
        assert_eq!(fit.points, 4);
    }

    #[test]
    fn fit_ignores_nonpositive_points() {
        let fit = fit_power_law(&[(1.0, 1.0), (2.0, 0.5), (4.0, 0.0)]).unwrap();
        assert_eq!(fit.points, 2);
        assert!(fit.slope_se.is_none());
        assert!(fit_power_law(&[(1.0, 1.0)]).is_none());
    }

    #[test]
    fn wilson_is_well_formed() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson_interval(100, 100, 1.96);
        assert!(lo > 0.95 && hi > 1.0 - 1e-12);
    }

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd([7.0].into_iter()), (7.0, 0.0));
    }
}
