//! Statistical primitives: a counter-based deterministic RNG with Gaussian
//! sampling, chi-square quantiles via the regularized incomplete gamma
//! function, and asymptotic covariance estimators for coefficient vectors.

use crate::densela::{DenseMatrix, DenseVector};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum StatsError {
    DomainError(String),
    TooFewRows { need: usize, got: usize },
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::DomainError(msg) => write!(f, "domain error: {msg}"),
            StatsError::TooFewRows { need, got } => {
                write!(f, "too few rows: need at least {need}, got {got}")
            }
        }
    }
}

impl std::error::Error for StatsError {}

/// Deterministic RNG built on a counter hashed with SplitMix64.
///
/// Identical seeds reproduce identical streams bit-for-bit, and the output
/// for draw `i` depends only on `(seed, i)`, so parallel replications can
/// derive independent generators by offsetting the seed.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0, spare_normal: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        // SplitMix64 applied to seed + counter * golden ratio.
        let mut z = self.seed.wrapping_add(c.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw strictly inside (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9007199254740992.0)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw via Box-Muller; pairs are cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i as f64) + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
///
/// Series expansion for `x < a + 1`, Lentz continued fraction otherwise.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "reg_lower_gamma: a must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // P(a,x) = x^a e^-x / Gamma(a) * sum_n x^n / (a (a+1) ... (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..500 {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (log_prefix.exp() * sum).clamp(0.0, 1.0)
    } else {
        // Continued fraction for Q(a,x); P = 1 - Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - log_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chi2_cdf(df: usize, x: f64) -> Result<f64, StatsError> {
    if df == 0 {
        return Err(StatsError::DomainError("df must be >= 1".into()));
    }
    Ok(reg_lower_gamma(df as f64 / 2.0, x.max(0.0) / 2.0))
}

/// Chi-square quantile: the `q` with `P(df/2, q/2) = p`, solved by bisection
/// on `[0, df + 40 sqrt(2 df)]`.
pub fn chi2_quantile(df: usize, p: f64) -> Result<f64, StatsError> {
    if df == 0 {
        return Err(StatsError::DomainError("df must be >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::DomainError(format!("p must be in (0,1), got {p}")));
    }
    let a = df as f64 / 2.0;
    let mut lo = 0.0f64;
    let mut hi = df as f64 + 40.0 * (2.0 * df as f64).sqrt();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg_lower_gamma(a, mid / 2.0) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Column means and the (n-1)-denominator sample covariance of the rows.
pub fn sample_mean_cov(data: &DenseMatrix) -> Result<(DenseVector, DenseMatrix), StatsError> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(StatsError::TooFewRows { need: 2, got: n });
    }
    let mut mean = DenseVector::zeros(d);
    for i in 0..n {
        for j in 0..d {
            mean[j] += data[(i, j)];
        }
    }
    for j in 0..d {
        mean[j] /= n as f64;
    }
    let mut cov = DenseMatrix::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let da = data[(i, a)] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (data[(i, b)] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    Ok((mean, cov))
}

/// Plug-in asymptotic covariance for the stacked moment estimates
/// `(vec(Q̂), R̂)` of a returns panel: the sample covariance of the
/// per-observation influence terms `h_t = (vec((x_t - x̄)(x_t - x̄)'), x_t)`.
///
/// Ordering matches the portfolio coefficient stacking: the `k²` entries of
/// the column-stacked covariance block come first, then the `k` mean entries.
pub fn moments_influence_cov(returns: &DenseMatrix) -> Result<DenseMatrix, StatsError> {
    let t = returns.rows();
    let k = returns.cols();
    if t < k + 2 {
        return Err(StatsError::TooFewRows { need: k + 2, got: t });
    }
    let mut mean = vec![0.0; k];
    for i in 0..t {
        for j in 0..k {
            mean[j] += returns[(i, j)];
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    let dim = k * k + k;
    let mut h = DenseMatrix::zeros(t, dim);
    for i in 0..t {
        for b in 0..k {
            for a in 0..k {
                // vec((x - x̄)(x - x̄)') entry (a, b) at column b*k + a.
                h[(i, b * k + a)] = (returns[(i, a)] - mean[a]) * (returns[(i, b)] - mean[b]);
            }
        }
        for a in 0..k {
            h[(i, k * k + a)] = returns[(i, a)];
        }
    }
    let (_, cov) = sample_mean_cov(&h)?;
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_reproduce_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = Rng::new(42);
        let mut d = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(c.normal().to_bits(), d.normal().to_bits());
        }
    }

    #[test]
    fn gaussian_moments_within_four_standard_errors() {
        let mut rng = Rng::new(7);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = rng.normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se_mean = 1.0 / (n as f64).sqrt();
        let se_var = (2.0f64 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - 1.0).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn chi2_quantile_reference_values() {
        // df=2 has the closed form -2 ln(1 - p).
        assert!((chi2_quantile(2, 0.95).unwrap() - (-2.0 * 0.05f64.ln())).abs() < 1e-9);
        assert!((chi2_quantile(1, 0.95).unwrap() - 3.841458820694124).abs() < 1e-5);
        assert!((chi2_quantile(4, 0.95).unwrap() - 9.487729036781154).abs() < 1e-5);
    }

    #[test]
    fn chi2_cdf_quantile_identity() {
        for df in 1..=10 {
            for &p in &[0.5, 0.9, 0.95, 0.99] {
                let q = chi2_quantile(df, p).unwrap();
                let back = chi2_cdf(df, q).unwrap();
                assert!((back - p).abs() <= 1e-9, "df={df} p={p} back={back}");
            }
        }
    }

    #[test]
    fn chi2_quantile_monotone_in_p_and_df() {
        let ps = [0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];
        for df in 1..=10 {
            for w in ps.windows(2) {
                assert!(chi2_quantile(df, w[0]).unwrap() < chi2_quantile(df, w[1]).unwrap());
            }
        }
        for &p in &ps {
            for df in 1..10 {
                assert!(chi2_quantile(df, p).unwrap() < chi2_quantile(df + 1, p).unwrap());
            }
        }
    }

    #[test]
    fn chi2_quantile_domain_errors() {
        assert!(chi2_quantile(0, 0.5).is_err());
        assert!(chi2_quantile(1, 0.0).is_err());
        assert!(chi2_quantile(1, 1.0).is_err());
    }

    #[test]
    fn mean_cov_constant_rows() {
        let data = DenseMatrix::from_rows(&vec![vec![2.0, -1.0]; 5]);
        let (mean, cov) = sample_mean_cov(&data).unwrap();
        assert_eq!(mean.as_slice(), &[2.0, -1.0]);
        assert_eq!(cov.max_abs(), 0.0);
    }

    #[test]
    fn mean_cov_two_point() {
        let data = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        let (mean, cov) = sample_mean_cov(&data).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, 1.0]);
        for &v in cov.data() {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_cov_too_few_rows() {
        let data = DenseMatrix::new(1, 2, vec![1.0, 2.0]);
        assert!(matches!(sample_mean_cov(&data), Err(StatsError::TooFewRows { .. })));
    }

    #[test]
    fn mean_cov_recovers_design_three() {
        // sigma^2 = (3, 1), sigma_12 = 1.5; 1e5 draws.
        let mut rng = Rng::new(17);
        let (l11, l21, l22) = (3.0f64.sqrt(), 1.5 / 3.0f64.sqrt(), 0.5);
        let n = 100_000;
        let mut data = DenseMatrix::zeros(n, 2);
        for i in 0..n {
            let (z1, z2) = (rng.normal(), rng.normal());
            data[(i, 0)] = 5.0 + l11 * z1;
            data[(i, 1)] = 3.0 + l21 * z1 + l22 * z2;
        }
        let (_, cov) = sample_mean_cov(&data).unwrap();
        assert!((cov[(0, 0)] - 3.0).abs() < 0.05);
        assert!((cov[(1, 1)] - 1.0).abs() < 0.05);
        assert!((cov[(0, 1)] - 1.5).abs() < 0.05);
    }

    #[test]
    fn influence_cov_constant_returns() {
        let data = DenseMatrix::from_rows(&vec![vec![1.0, 2.0]; 6]);
        let v = moments_influence_cov(&data).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn influence_cov_two_point_scalar() {
        let data = DenseMatrix::new(3, 1, vec![-1.0, 1.0, -1.0]);
        // Need T >= k + 2 = 3; use the symmetric two-value pattern.
        let v = moments_influence_cov(&data).unwrap();
        assert_eq!(v.rows(), 2);
        // h_t = ((x_t - x̄)^2, x_t); x̄ = -1/3 here so just check shape/psd.
        assert!(v[(1, 1)] > 0.0);
    }

    #[test]
    fn influence_cov_two_point_exact() {
        // The documented k=1 case with x̄ = 0: h rows (1,-1) and (1,1).
        let data = DenseMatrix::new(2, 1, vec![-1.0, 1.0]);
        match moments_influence_cov(&data) {
            // T = 2 < k + 2 = 3 trips the row guard by design.
            Err(StatsError::TooFewRows { need: 3, got: 2 }) => {}
            other => panic!("expected TooFewRows, got {other:?}"),
        }
        // Verify the algebra through sample_mean_cov on the stacked h terms.
        let h = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]);
        let (_, v) = sample_mean_cov(&h).unwrap();
        assert_eq!(v[(0, 0)], 0.0);
        assert_eq!(v[(0, 1)], 0.0);
        assert!((v[(1, 1)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn influence_cov_mean_block_matches_generator() {
        let mut rng = Rng::new(23);
        let (l11, l21, l22) = (1.0, 0.4, 0.8);
        let n = 100_000;
        let mut data = DenseMatrix::zeros(n, 2);
        for i in 0..n {
            let (z1, z2) = (rng.normal(), rng.normal());
            data[(i, 0)] = 2.0 + l11 * z1;
            data[(i, 1)] = 3.0 + l21 * z1 + l22 * z2;
        }
        let v = moments_influence_cov(&data).unwrap();
        // The R̂ block (last k x k) estimates the return covariance.
        let truth = [[1.0, 0.4], [0.4, 0.4 * 0.4 + 0.8 * 0.8]];
        for a in 0..2 {
            for b in 0..2 {
                let est = v[(4 + a, 4 + b)];
                assert!(
                    (est - truth[a][b]).abs() <= 0.02 * (1.0 + truth[a][b].abs()),
                    "block ({a},{b}): est {est} vs {t}",
                    t = truth[a][b]
                );
            }
        }
    }
}
