//! Simultaneous confidence rectangles for the projection parameter.
//!
//! Three calibrations for the critical value of
//! `max_j |beta_hat_j - beta_j| / se_j`: Bonferroni, Sidak, and the Gaussian
//! multiplier bootstrap. Conditionally on the data, the pre-max bootstrap
//! vector is exactly `N(0, corr(Sigma_hat^{-1} V_hat_n Sigma_hat^{-1}))`
//! because the sandwich equals the outer product of the scores.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_max::{bonferroni_crit, sidak_crit, upper_quantile};
use crate::ols::ProjectionFit;
use crate::rng::substream;
use crate::sandwich::SandwichCov;

/// Calibration method for the simultaneous critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Bonferroni,
    Sidak,
    Bootstrap,
}

impl CiMethod {
    pub fn name(self) -> &'static str {
        match self {
            CiMethod::Bonferroni => "bonferroni",
            CiMethod::Sidak => "sidak",
            CiMethod::Bootstrap => "bootstrap",
        }
    }
}

impl std::str::FromStr for CiMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bonferroni" => Ok(CiMethod::Bonferroni),
            "sidak" => Ok(CiMethod::Sidak),
            "bootstrap" => Ok(CiMethod::Bootstrap),
            other => Err(format!("unknown method '{other}' (expected bonferroni|sidak|bootstrap)")),
        }
    }
}

/// Simultaneous confidence rectangle: `beta_hat_j +- crit * se_j`.
#[derive(Debug, Clone, Serialize)]
pub struct SimultaneousCi {
    pub method: CiMethod,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub crit: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub width: Vec<f64>,
}

impl SimultaneousCi {
    pub fn contains(&self, target: &[f64]) -> bool {
        target
            .iter()
            .enumerate()
            .all(|(j, &t)| self.lower[j] <= t && t <= self.upper[j])
    }
}

/// Bootstrap draws `T_b`, in replicate order, deterministic given the seed.
#[derive(Debug, Clone)]
pub struct BootstrapDistribution {
    pub draws: Vec<f64>,
    pub b: usize,
    pub seed: u64,
}

impl BootstrapDistribution {
    /// (1 - alpha) quantile by the conservative order-statistic convention
    /// (index ceil((1-alpha) * B) of the sorted draws).
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidLevel(alpha));
        }
        let mut sorted = self.draws.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(upper_quantile(&sorted, alpha))
    }
}

/// Multiplier-bootstrap draws of the studentized max statistic:
/// `T_b = max_j |n^{-1} sum_i e_i psi_hat_{ij}| / se_j` with
/// `e_i ~ N(0, 1)`. One RNG substream per replicate; replicates run in
/// parallel and the result does not depend on scheduling.
pub fn multiplier_bootstrap(
    fit: &ProjectionFit,
    cov: &SandwichCov,
    b: usize,
    seed: u64,
) -> Result<BootstrapDistribution> {
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap replicates must be >= 1".into()));
    }
    let n = fit.n() as f64;
    // The scores are centered by construction (normal equations); a failure
    // here is a fit bug, not a data problem.
    let col_sums = fit.scores.row_sum();
    for (j, s) in col_sums.iter().enumerate() {
        assert!(
            s.abs() <= 1e-8 * n,
            "score column {j} is not centered (sum {s}); fit is inconsistent"
        );
    }
    for (j, &se) in cov.std_err.iter().enumerate() {
        if !(se > 0.0) {
            return Err(Error::DegenerateVariance { index: j, value: se });
        }
    }
    let draws = studentized_max_draws(&fit.scores, &cov.std_err, 1.0 / n, b, seed);
    Ok(BootstrapDistribution { draws, b, seed })
}

/// Shared bootstrap core: draws of
/// `max_j |scale * sum_i e_i scores_{ij}| / denom_j`.
pub(crate) fn studentized_max_draws(
    scores: &DMatrix<f64>,
    denom: &[f64],
    scale: f64,
    b: usize,
    seed: u64,
) -> Vec<f64> {
    let n = scores.nrows();
    let m = scores.ncols();
    (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, rep as u64);
            let mut acc = vec![0.0f64; m];
            for i in 0..n {
                let e: f64 = rng.sample(StandardNormal);
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += e * scores[(i, j)];
                }
            }
            acc.iter()
                .zip(denom)
                .map(|(a, d)| (scale * a).abs() / d)
                .fold(0.0f64, f64::max)
        })
        .collect()
}

/// Builds the simultaneous confidence rectangle for the projection
/// parameter under the chosen calibration. `boot_b` and `seed` are only
/// consulted for the bootstrap method.
pub fn ci(
    fit: &ProjectionFit,
    cov: &SandwichCov,
    method: CiMethod,
    alpha: f64,
    boot_b: usize,
    seed: u64,
) -> Result<SimultaneousCi> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let d = fit.d();
    let crit = match method {
        CiMethod::Bonferroni => bonferroni_crit(d, alpha)?,
        CiMethod::Sidak => sidak_crit(d, alpha)?,
        CiMethod::Bootstrap => multiplier_bootstrap(fit, cov, boot_b, seed)?.quantile(alpha)?,
    };
    Ok(assemble_ci(method, alpha, crit, fit.beta_hat.as_slice(), &cov.std_err))
}

pub(crate) fn assemble_ci(
    method: CiMethod,
    alpha: f64,
    crit: f64,
    center: &[f64],
    std_err: &[f64],
) -> SimultaneousCi {
    let lower: Vec<f64> = center.iter().zip(std_err).map(|(b, s)| b - crit * s).collect();
    let upper: Vec<f64> = center.iter().zip(std_err).map(|(b, s)| b + crit * s).collect();
    let width: Vec<f64> = std_err.iter().map(|s| 2.0 * crit * s).collect();
    SimultaneousCi { method, level: 1.0 - alpha, crit, lower, upper, width }
}

/// Two-sample Kolmogorov distance `sup_t |F_a(t) - F_b(t)|`.
pub fn empirical_cdf_distance(draws_a: &[f64], draws_b: &[f64]) -> Result<f64> {
    if draws_a.is_empty() || draws_b.is_empty() {
        return Err(Error::EmptyInput("empirical_cdf_distance"));
    }
    let mut a = draws_a.to_vec();
    let mut b = draws_b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut dist: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        dist = dist.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::dgp::{generate, DgpSpec, ErrorLaw, Family};
    use crate::ols::fit;
    use crate::sandwich::sandwich_cov;
    use nalgebra::DMatrix;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn demo_fit(n: usize, d: usize, seed: u64) -> (crate::ols::ProjectionFit, SandwichCov) {
        let spec = DgpSpec {
            n,
            d,
            family: Family::LinearHomoskedastic,
            error_law: ErrorLaw::Gaussian { sigma: 1.0 },
            design_corr: 0.0,
            intercept: true,
            seed,
        };
        let (data, _) = generate(&spec).unwrap();
        let f = fit(&data).unwrap();
        let s = sandwich_cov(&f).unwrap();
        (f, s)
    }

    #[test]
    fn interval_invariants_hold() {
        let (f, s) = demo_fit(200, 4, 1);
        let c = ci(&f, &s, CiMethod::Sidak, 0.05, 0, 0).unwrap();
        for j in 0..4 {
            assert_eq!(c.lower[j], f.beta_hat[j] - c.crit * s.std_err[j]);
            assert_eq!(c.upper[j], f.beta_hat[j] + c.crit * s.std_err[j]);
            assert_eq!(c.width[j], 2.0 * c.crit * s.std_err[j]);
            assert!(c.width[j] > 0.0);
        }
        assert_eq!(c.level, 0.95);
    }

    #[test]
    fn sidak_no_wider_than_bonferroni() {
        let (f, s) = demo_fit(200, 6, 2);
        let cs = ci(&f, &s, CiMethod::Sidak, 0.05, 0, 0).unwrap();
        let cb = ci(&f, &s, CiMethod::Bonferroni, 0.05, 0, 0).unwrap();
        for j in 0..6 {
            assert!(cs.width[j] <= cb.width[j]);
        }
    }

    #[test]
    fn d1_bonferroni_and_sidak_agree() {
        let (f, s) = demo_fit(100, 1, 3);
        let cs = ci(&f, &s, CiMethod::Sidak, 0.05, 0, 0).unwrap();
        let cb = ci(&f, &s, CiMethod::Bonferroni, 0.05, 0, 0).unwrap();
        assert_eq!(cs.lower, cb.lower);
        assert_eq!(cs.upper, cb.upper);
    }

    #[test]
    fn invalid_level_rejected() {
        let (f, s) = demo_fit(100, 2, 4);
        assert!(matches!(ci(&f, &s, CiMethod::Sidak, 0.0, 0, 0), Err(Error::InvalidLevel(_))));
        assert!(matches!(ci(&f, &s, CiMethod::Sidak, 1.0, 0, 0), Err(Error::InvalidLevel(_))));
        assert!(multiplier_bootstrap(&f, &s, 0, 0).is_err());
    }

    #[test]
    fn bootstrap_d1_draws_match_half_normal() {
        let (f, s) = demo_fit(300, 1, 5);
        let boot = multiplier_bootstrap(&f, &s, 5000, 11).unwrap();
        // d = 1: T_b = |N(0,1)| exactly, conditionally on the data.
        let mut rng = StdRng::seed_from_u64(99);
        let half_normal: Vec<f64> = (0..5000)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect();
        let ks = empirical_cdf_distance(&boot.draws, &half_normal).unwrap();
        assert!(ks <= 0.03, "KS distance {ks}");
    }

    #[test]
    fn bootstrap_scale_invariance_power_of_two() {
        // Scaling the scores by a power of two and the covariance by its
        // square is exact in floating point, so the draws are bit-identical.
        let (f, s) = demo_fit(150, 3, 6);
        let c: f64 = 4.0;
        let draws1 = studentized_max_draws(&f.scores, &s.std_err, 1.0 / f.n() as f64, 512, 17);
        let scaled_scores = &f.scores * c;
        let scaled_err: Vec<f64> = s.std_err.iter().map(|v| v * c).collect();
        let draws2 = studentized_max_draws(&scaled_scores, &scaled_err, 1.0 / f.n() as f64, 512, 17);
        for (a, b) in draws1.iter().zip(&draws2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bootstrap_deterministic_in_seed() {
        let (f, s) = demo_fit(120, 3, 7);
        let a = multiplier_bootstrap(&f, &s, 800, 3).unwrap();
        let b = multiplier_bootstrap(&f, &s, 800, 3).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = multiplier_bootstrap(&f, &s, 800, 4).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn ks_distance_edge_cases() {
        assert_eq!(empirical_cdf_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let d = empirical_cdf_distance(&[0.0, 0.1], &[5.0, 6.0]).unwrap();
        assert_eq!(d, 1.0);
        assert!(empirical_cdf_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_distance_two_gaussian_samples() {
        let mut rng = StdRng::seed_from_u64(12);
        let a: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        // Two-sample KS 1% critical value at n = m = 5000 is about 0.0326.
        assert!(empirical_cdf_distance(&a, &b).unwrap() <= 0.04);
    }

    #[test]
    fn bootstrap_crit_within_reach_of_sidak_under_independence() {
        // Engineered DGP with corr(cov) ~ I: bootstrap quantile close to Sidak.
        let (f, s) = demo_fit(2000, 5, 8);
        let boot = multiplier_bootstrap(&f, &s, 5000, 21).unwrap();
        let q = boot.quantile(0.05).unwrap();
        let sidak = sidak_crit(5, 0.05).unwrap();
        assert!((q - sidak).abs() <= 0.05, "bootstrap {q} vs sidak {sidak}");
    }

    #[test]
    fn equicorrelated_bootstrap_no_wider_than_sidak() {
        let spec = DgpSpec {
            n: 1500,
            d: 6,
            family: Family::LinearHomoskedastic,
            error_law: ErrorLaw::Gaussian { sigma: 1.0 },
            design_corr: 0.7,
            intercept: false,
            seed: 9,
        };
        let (data, _) = generate(&spec).unwrap();
        let f = fit(&data).unwrap();
        let s = sandwich_cov(&f).unwrap();
        let boot = multiplier_bootstrap(&f, &s, 4000, 31).unwrap();
        let q = boot.quantile(0.1).unwrap();
        let sidak = sidak_crit(6, 0.1).unwrap();
        assert!(q <= sidak + 0.05, "bootstrap {q} vs sidak {sidak}");
    }

    #[test]
    fn rescaled_response_rescales_intervals_exactly() {
        let spec = DgpSpec {
            n: 180,
            d: 3,
            family: Family::LinearHomoskedastic,
            error_law: ErrorLaw::Gaussian { sigma: 1.0 },
            design_corr: 0.0,
            intercept: true,
            seed: 10,
        };
        let (data, truth) = generate(&spec).unwrap();
        let f1 = fit(&data).unwrap();
        let s1 = sandwich_cov(&f1).unwrap();
        let c1 = ci(&f1, &s1, CiMethod::Bootstrap, 0.1, 500, 5).unwrap();

        let scale = 2.0;
        let scaled = crate::ols::Dataset::from_parts(
            data.x().clone(),
            data.y() * scale,
            data.has_intercept(),
        )
        .unwrap();
        let f2 = fit(&scaled).unwrap();
        let s2 = sandwich_cov(&f2).unwrap();
        let c2 = ci(&f2, &s2, CiMethod::Bootstrap, 0.1, 500, 5).unwrap();

        let beta: Vec<f64> = truth.beta.iter().copied().collect();
        let beta_scaled: Vec<f64> = beta.iter().map(|v| v * scale).collect();
        // Same coverage indicator and exactly rescaled endpoints.
        assert_eq!(c1.contains(&beta), c2.contains(&beta_scaled));
        for j in 0..3 {
            assert_eq!(c2.width[j], scale * c1.width[j]);
        }
    }

    #[test]
    fn pipeline_bootstrap_matches_gaussian_max_sampler() {
        let (f, s) = demo_fit(400, 8, 44);
        let boot = multiplier_bootstrap(&f, &s, 5000, 7).unwrap();
        let corr = s.cov.corr().unwrap();
        let gspec = crate::gaussian_max::MaxGaussSpec::new(corr, 5000, 8).unwrap();
        let direct = crate::gaussian_max::sample_max_abs(&gspec).unwrap();
        let ks = empirical_cdf_distance(&boot.draws, &direct).unwrap();
        assert!(ks <= 0.03, "KS distance {ks}");
    }

    #[test]
    fn noncentered_scores_panic() {
        let (f, s) = demo_fit(50, 2, 12);
        let mut broken = f.clone();
        broken.scores = DMatrix::from_element(50, 2, 1.0);
        let result = std::panic::catch_unwind(|| multiplier_bootstrap(&broken, &s, 10, 0));
        assert!(result.is_err());
    }
}
