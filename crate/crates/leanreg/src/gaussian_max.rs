//! Distribution of `max_j |G_j|` for a centered Gaussian vector with unit
//! variances: Bonferroni and Sidak critical values, Monte Carlo quantiles
//! under an arbitrary correlation, and an anti-concentration estimate.
//!
//! Sampling uses the spectral factorization of the correlation matrix, so
//! PSD-but-singular correlations (e.g. perfectly correlated coordinates)
//! work. Draws are generated in fixed-size blocks with one RNG substream per
//! block, so the output is bit-identical regardless of thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::substream;

pub const DEFAULT_MC_DRAWS: usize = 100_000;
pub const DEFAULT_EPS_GRID: [f64; 3] = [0.01, 0.05, 0.1];

const BLOCK: usize = 4096;

/// Specification of the Gaussian max distribution to simulate from.
#[derive(Debug, Clone)]
pub struct MaxGaussSpec {
    corr: SymMatrix,
    mc_draws: usize,
    seed: u64,
}

impl MaxGaussSpec {
    /// Validates the correlation matrix: unit diagonal within 1e-12 and
    /// PSD within -1e-10.
    pub fn new(corr: SymMatrix, mc_draws: usize, seed: u64) -> Result<Self> {
        if mc_draws == 0 {
            return Err(Error::InvalidParameter("mc_draws must be >= 1".into()));
        }
        for j in 0..corr.dim() {
            if (corr.get(j, j) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "correlation diagonal entry {j} is {}, expected 1",
                    corr.get(j, j)
                )));
            }
        }
        let spec = corr.spectral()?;
        let min_eig = spec.eigenvalues[spec.eigenvalues.len() - 1];
        if min_eig < -1e-10 * spec.eigenvalues[0].max(1.0) {
            return Err(Error::NonPsdCorrelation { min_eig });
        }
        Ok(Self { corr, mc_draws, seed })
    }

    pub fn with_defaults(corr: SymMatrix, seed: u64) -> Result<Self> {
        Self::new(corr, DEFAULT_MC_DRAWS, seed)
    }

    pub fn dim(&self) -> usize {
        self.corr.dim()
    }

    pub fn corr(&self) -> &SymMatrix {
        &self.corr
    }
}

/// Standard normal quantile `Phi^{-1}(p)`, Wichura's algorithm AS 241
/// (PPND16), absolute error below 1e-9 over (0, 1). Validated in tests
/// against a bisection-on-quadrature oracle.
pub fn std_normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must lie in (0,1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_9)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-9) * r
            + 1.846_318_317_510_054_8e-6)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// `z_gamma`: the (1 - gamma) quantile of the standard normal, computed on
/// the tail branch for precision.
fn upper_z(gamma: f64) -> f64 {
    -std_normal_quantile(gamma)
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    Ok(())
}

/// Bonferroni critical value `z_{alpha/(2d)}`.
pub fn bonferroni_crit(d: usize, alpha: f64) -> Result<f64> {
    check_dim(d)?;
    check_level(alpha)?;
    Ok(upper_z(alpha / (2.0 * d as f64)))
}

/// Sidak critical value `z_{(1-(1-alpha)^{1/d})/2}`. Never exceeds the
/// Bonferroni value; the two coincide exactly at d = 1.
pub fn sidak_crit(d: usize, alpha: f64) -> Result<f64> {
    check_dim(d)?;
    check_level(alpha)?;
    if d == 1 {
        return bonferroni_crit(1, alpha);
    }
    let p = 1.0 - (1.0 - alpha).powf(1.0 / d as f64);
    Ok(upper_z(p / 2.0))
}

/// Draws `spec.mc_draws` samples of `max_j |G_j|`, `G ~ N(0, corr)`.
/// Deterministic given the spec, independent of thread count.
pub fn sample_max_abs(spec: &MaxGaussSpec) -> Result<Vec<f64>> {
    let d = spec.dim();
    let decomp = spec.corr.spectral()?;
    // Factor A with A A' = corr; negative eigenvalues within roundoff clamp
    // to zero so singular correlations sample from the degenerate law.
    let mut factor = decomp.eigenvectors.clone();
    for i in 0..d {
        let s = decomp.eigenvalues[i].max(0.0).sqrt();
        factor.column_mut(i).scale_mut(s);
    }

    let blocks = spec.mc_draws.div_ceil(BLOCK);
    let out: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, b as u64);
            let count = BLOCK.min(spec.mc_draws - b * BLOCK);
            let mut vals = Vec::with_capacity(count);
            let mut z = DVector::zeros(d);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = rng.sample::<f64, _>(StandardNormal);
                }
                let g = &factor * &z;
                vals.push(g.amax());
            }
            vals
        })
        .collect();
    Ok(out.concat())
}

/// Upper (1 - alpha) empirical quantile by the conservative order-statistic
/// convention: the ceil((1-alpha) * B)-th smallest draw.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    let idx = ((1.0 - alpha) * b as f64).ceil() as usize;
    sorted[idx.clamp(1, b) - 1]
}

/// (1 - alpha) Monte Carlo quantile of `max_j |G_j|`.
pub fn mc_quantile(spec: &MaxGaussSpec, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    let mut draws = sample_max_abs(spec)?;
    draws.sort_unstable_by(f64::total_cmp);
    Ok(upper_quantile(&draws, alpha))
}

/// Monte Carlo estimate of the anti-concentration constant
/// `sup_{t, eps} P(t <= max|G_j| <= t + eps) / eps`, with the sup taken over
/// a 512-point t-grid spanning the sampled range and the given eps grid.
/// This is an estimate, not a bound.
pub fn anti_concentration(spec: &MaxGaussSpec, eps_grid: &[f64]) -> Result<f64> {
    if eps_grid.is_empty() {
        return Err(Error::EmptyInput("eps_grid"));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("eps grid entries must be positive".into()));
    }
    let mut draws = sample_max_abs(spec)?;
    draws.sort_unstable_by(f64::total_cmp);
    let n = draws.len() as f64;
    let t_max = *draws.last().expect("mc_draws >= 1");

    let mut sup: f64 = 0.0;
    for i in 0..512 {
        let t = t_max * i as f64 / 511.0;
        let lo = draws.partition_point(|&v| v < t);
        for &eps in eps_grid {
            let hi = draws.partition_point(|&v| v <= t + eps);
            sup = sup.max((hi - lo) as f64 / n / eps);
        }
    }
    Ok(sup)
}

/// Builds the max-Gauss spec for the correlation of a covariance matrix.
pub fn spec_for_cov(cov: &SymMatrix, mc_draws: usize, seed: u64) -> Result<MaxGaussSpec> {
    MaxGaussSpec::new(cov.corr()?, mc_draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadrature-based standard normal CDF: Phi(x) = 1/2 + int_0^x phi.
    /// Composite Simpson with enough panels for ~1e-13 accuracy.
    fn phi_cdf_quadrature(x: f64) -> f64 {
        let (a, b) = (0.0, x.abs());
        let panels = 2000;
        let h = (b - a) / panels as f64;
        let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = density(a) + density(b);
        for i in 1..panels {
            let t = a + i as f64 * h;
            acc += density(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = acc * h / 3.0;
        if x >= 0.0 {
            0.5 + integral
        } else {
            0.5 - integral
        }
    }

    /// Independent quantile oracle: bisection on the quadrature CDF.
    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-9.0, 9.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if phi_cdf_quadrature(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        for &p in &[1e-6, 1e-4, 0.0025, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.975, 0.999, 0.999999] {
            let got = std_normal_quantile(p);
            let want = quantile_oracle(p);
            assert!((got - want).abs() < 1e-9, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn bonferroni_frozen_values() {
        assert!((bonferroni_crit(1, 0.05).unwrap() - 1.959964).abs() < 1e-5);
        assert!((bonferroni_crit(10, 0.05).unwrap() - 2.807034).abs() < 1e-5);
        // alpha -> 1 at d = 1 approaches the median of the standard normal.
        assert!(bonferroni_crit(1, 0.9999999999).unwrap().abs() < 1e-6);
    }

    #[test]
    fn sidak_frozen_value_and_d1_equality() {
        assert!((sidak_crit(10, 0.05).unwrap() - 2.806520).abs() < 1e-4);
        for &alpha in &[0.01, 0.05, 0.1, 0.5] {
            assert_eq!(sidak_crit(1, alpha).unwrap(), bonferroni_crit(1, alpha).unwrap());
        }
    }

    #[test]
    fn sidak_never_exceeds_bonferroni() {
        for d in 1..=100 {
            for &alpha in &[0.01, 0.05, 0.1] {
                let s = sidak_crit(d, alpha).unwrap();
                let b = bonferroni_crit(d, alpha).unwrap();
                assert!(s <= b, "d={d}, alpha={alpha}: {s} > {b}");
            }
        }
    }

    #[test]
    fn level_validation() {
        assert!(matches!(bonferroni_crit(2, 0.0), Err(Error::InvalidLevel(_))));
        assert!(matches!(sidak_crit(2, 1.0), Err(Error::InvalidLevel(_))));
        assert!(bonferroni_crit(0, 0.05).is_err());
    }

    #[test]
    fn mc_quantile_d1_matches_normal_quantile() {
        let spec = MaxGaussSpec::new(SymMatrix::identity(1), 100_000, 42).unwrap();
        for &alpha in &[0.05, 0.1] {
            let got = mc_quantile(&spec, alpha).unwrap();
            let want = upper_z(alpha / 2.0);
            assert!((got - want).abs() < 0.01, "alpha={alpha}: {got} vs {want}");
        }
    }

    #[test]
    fn mc_quantile_independent_matches_sidak() {
        let spec = MaxGaussSpec::new(SymMatrix::identity(10), 200_000, 7).unwrap();
        let got = mc_quantile(&spec, 0.05).unwrap();
        let want = sidak_crit(10, 0.05).unwrap();
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn mc_quantile_perfectly_correlated_collapses_to_d1() {
        let corr = SymMatrix::from_fn(6, |_, _| 1.0);
        let spec = MaxGaussSpec::new(corr, 100_000, 3).unwrap();
        let got = mc_quantile(&spec, 0.05).unwrap();
        let want = upper_z(0.025);
        assert!((got - want).abs() < 0.015, "{got} vs {want}");
    }

    #[test]
    fn mc_quantile_monotone_in_alpha() {
        let spec = MaxGaussSpec::new(SymMatrix::identity(5), 50_000, 9).unwrap();
        let qs: Vec<f64> = [0.01, 0.05, 0.1, 0.2, 0.5]
            .iter()
            .map(|&a| mc_quantile(&spec, a).unwrap())
            .collect();
        for w in qs.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn mc_quantile_below_sidak_plus_tolerance() {
        // Sidak's inequality: the MC quantile never exceeds the Sidak value
        // beyond Monte Carlo noise, for any unit-diagonal correlation.
        for (d, rho, seed) in [(4usize, 0.0, 1u64), (4, 0.5, 2), (8, 0.9, 3), (3, -0.3, 4)] {
            let corr = SymMatrix::from_fn(d, |j, k| if j == k { 1.0 } else { rho });
            let spec = MaxGaussSpec::new(corr, 100_000, seed).unwrap();
            let q = mc_quantile(&spec, 0.1).unwrap();
            let s = sidak_crit(d, 0.1).unwrap();
            assert!(q <= s + 0.02, "d={d}, rho={rho}: {q} > {s} + 0.02");
        }
    }

    #[test]
    fn determinism_same_spec_same_quantile() {
        let corr = SymMatrix::from_fn(4, |j, k| if j == k { 1.0 } else { 0.4 });
        let a = mc_quantile(&MaxGaussSpec::new(corr.clone(), 60_000, 5).unwrap(), 0.05).unwrap();
        let b = mc_quantile(&MaxGaussSpec::new(corr, 60_000, 5).unwrap(), 0.05).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_bad_correlations() {
        let not_unit = SymMatrix::from_diagonal(&[1.0, 2.0]);
        assert!(MaxGaussSpec::new(not_unit, 100, 0).is_err());
        let indefinite = SymMatrix::from_fn(2, |j, k| if j == k { 1.0 } else { 1.5 });
        assert!(matches!(
            MaxGaussSpec::new(indefinite, 100, 0),
            Err(Error::NonPsdCorrelation { .. })
        ));
    }

    #[test]
    fn anti_concentration_d1_near_two_phi_zero() {
        let spec = MaxGaussSpec::new(SymMatrix::identity(1), 100_000, 21).unwrap();
        let est = anti_concentration(&spec, &DEFAULT_EPS_GRID).unwrap();
        // sup density of |G| is 2 phi(0) ~ 0.798.
        assert!((est - 0.80).abs() < 0.05, "estimate {est}");
    }

    #[test]
    fn anti_concentration_grows_with_dimension() {
        let est: Vec<f64> = [1usize, 5, 25]
            .iter()
            .map(|&d| {
                let spec = MaxGaussSpec::new(SymMatrix::identity(d), 100_000, 23).unwrap();
                anti_concentration(&spec, &DEFAULT_EPS_GRID).unwrap()
            })
            .collect();
        assert!(est[0] < est[1] && est[1] < est[2], "{est:?}");
    }

    #[test]
    fn anti_concentration_huge_eps() {
        let spec = MaxGaussSpec::new(SymMatrix::identity(3), 20_000, 2).unwrap();
        let est = anti_concentration(&spec, &[20.0]).unwrap();
        assert!(est <= 0.05);
    }
}
