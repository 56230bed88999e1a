//! Estimators and test statistics for the verification harness: batch-means
//! confidence intervals, jackknife standard errors, autocorrelation times,
//! split R-hat, Anderson-Darling normality, and Gauss-Legendre nodes.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Batch-means estimate for a correlated series: the mean and a 3-sigma
/// halfwidth from `batch_count` contiguous batches.
pub fn batch_means(series: &[f64], batch_count: usize) -> (f64, f64) {
    assert!(batch_count >= 2, "need at least two batches");
    assert!(
        series.len() >= 4 * batch_count,
        "series too short: {} points for {} batches",
        series.len(),
        batch_count
    );
    let m = series.len() / batch_count;
    let used = m * batch_count;
    let means: Vec<f64> = (0..batch_count)
        .map(|b| mean(&series[b * m..(b + 1) * m]))
        .collect();
    let grand = mean(&series[..used]);
    let var_b = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>()
        / (batch_count - 1) as f64;
    (grand, 3.0 * (var_b / batch_count as f64).sqrt())
}

/// Leave-one-out jackknife standard error of the sample mean.
pub fn jackknife_mean_se(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Jackknife estimate and standard error of `Cov(x, y)` from paired samples.
pub fn jackknife_covariance(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 3);
    let nf = n as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let full = (sxy - sx * sy / nf) / (nf - 1.0);
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let m = nf - 1.0;
            let sx_i = sx - xs[i];
            let sy_i = sy - ys[i];
            let sxy_i = sxy - xs[i] * ys[i];
            (sxy_i - sx_i * sy_i / m) / (m - 1.0)
        })
        .collect();
    let loo_mean = mean(&loo);
    let se = ((nf - 1.0) / nf
        * loo
            .iter()
            .map(|v| (v - loo_mean) * (v - loo_mean))
            .sum::<f64>())
    .sqrt();
    (full, se)
}

/// Jackknife estimate and standard error of the sample variance.
pub fn jackknife_variance(xs: &[f64]) -> (f64, f64) {
    jackknife_covariance(xs, xs)
}

/// Integrated autocorrelation time with Sokal's adaptive window
/// (`tau = 1 + 2 sum rho(k)`, window `M >= 5 tau`). Returns at least 1.
pub fn autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 8 {
        return 1.0;
    }
    let m = mean(series);
    let c0: f64 = series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let max_lag = n / 4;
    let mut tau = 1.0;
    for k in 1..max_lag {
        let ck: f64 = (0..n - k)
            .map(|i| (series[i] - m) * (series[i + k] - m))
            .sum::<f64>()
            / (n - k) as f64;
        tau += 2.0 * ck / c0;
        if (k as f64) >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Split R-hat agreement statistic over one or more chains.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let mid = c.len() / 2;
        halves.push(&c[..mid]);
        halves.push(&c[mid..mid * 2]);
    }
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0)
        * means
            .iter()
            .map(|x| (x - grand) * (x - grand))
            .sum::<f64>();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / m;
    if w <= 0.0 {
        return 1.0;
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Anderson-Darling normality statistic (mean and variance estimated),
/// with the small-sample correction `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)`.
#[derive(Debug, Clone, Copy)]
pub struct AndersonDarling {
    pub a2_star: f64,
    /// Critical value at significance 0.01 for the estimated-parameter case.
    pub critical_01: f64,
}

impl AndersonDarling {
    pub fn passes(&self) -> bool {
        self.a2_star <= self.critical_01
    }
}

pub fn anderson_darling_normal(samples: &[f64]) -> AndersonDarling {
    let n = samples.len();
    assert!(n >= 8, "too few samples for a normality test");
    let m = mean(samples);
    let sd = variance(samples).sqrt();
    assert!(sd > 0.0, "degenerate sample for normality test");
    let mut z: Vec<f64> = samples.iter().map(|x| (x - m) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let nf = n as f64;
    let mut a2 = -nf;
    for i in 0..n {
        let phi_lo = normal.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let phi_hi = normal.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        a2 -= (2.0 * i as f64 + 1.0) / nf * (phi_lo.ln() + (1.0 - phi_hi).ln());
    }
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    AndersonDarling { a2_star, critical_01: 1.035 }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    assert!(m >= 1);
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        // Newton iteration from the Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Expected TV distance between the empirical law of `n` multinomial draws
/// and its generator: `sum_z E|p_hat - p| / 2` under the normal approximation.
pub fn tv_noise_floor(probs: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    0.5 * probs
        .iter()
        .map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * nf)).sqrt())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use approx::assert_relative_eq;

    #[test]
    fn batch_means_constant_series() {
        let series = vec![2.5; 400];
        let (m, hw) = batch_means(&series, 20);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(hw, 0.0);
    }

    #[test]
    fn batch_means_iid_normal() {
        let mut rng = StreamRng::new(21, "bm-iid");
        let n = 10_000;
        let series: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let (m, hw) = batch_means(&series, 50);
        // CLT sanity: mean within its own CI and halfwidth near 3/sqrt(n).
        assert!(m.abs() < hw.max(0.05), "mean {m} hw {hw}");
        let ideal = 3.0 / (n as f64).sqrt();
        assert!(hw > ideal * 0.5 && hw < ideal * 1.5, "hw {hw} vs {ideal}");
    }

    #[test]
    fn batch_means_ar1_inflation() {
        // AR(1) with phi = 0.9 inflates the CI by sqrt((1+phi)/(1-phi)).
        let phi = 0.9f64;
        let mut rng = StreamRng::new(22, "bm-ar1");
        let n = 200_000;
        let mut x = 0.0;
        let scale = (1.0 - phi * phi).sqrt();
        let series: Vec<f64> = (0..n)
            .map(|_| {
                x = phi * x + scale * rng.gaussian();
                x
            })
            .collect();
        let (_, hw) = batch_means(&series, 50);
        let ideal_iid = 3.0 / (n as f64).sqrt();
        let inflation = hw / ideal_iid;
        let expect = ((1.0 + phi) / (1.0 - phi)).sqrt();
        assert!(
            (inflation - expect).abs() < 0.3 * expect,
            "inflation {inflation} vs analytic {expect}"
        );
    }

    #[test]
    fn jackknife_covariance_matches_direct() {
        let mut rng = StreamRng::new(23, "jk");
        let xs: Vec<f64> = (0..500).map(|_| rng.gaussian()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 0.5 * rng.gaussian()).collect();
        let (cov, se) = jackknife_covariance(&xs, &ys);
        assert_relative_eq!(cov, covariance(&xs, &ys), epsilon = 1e-10);
        assert!((cov - 0.5).abs() < 4.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn autocorrelation_time_iid_near_one() {
        let mut rng = StreamRng::new(24, "iat-iid");
        let series: Vec<f64> = (0..20_000).map(|_| rng.gaussian()).collect();
        let tau = autocorrelation_time(&series);
        assert!(tau < 1.5, "tau {tau}");
    }

    #[test]
    fn autocorrelation_time_ar1() {
        let phi = 0.8f64;
        let mut rng = StreamRng::new(25, "iat-ar1");
        let mut x = 0.0;
        let scale = (1.0 - phi * phi).sqrt();
        let series: Vec<f64> = (0..100_000)
            .map(|_| {
                x = phi * x + scale * rng.gaussian();
                x
            })
            .collect();
        let tau = autocorrelation_time(&series);
        let expect = (1.0 + phi) / (1.0 - phi);
        assert!((tau - expect).abs() < 0.3 * expect, "tau {tau} vs {expect}");
    }

    #[test]
    fn rhat_same_law_near_one() {
        let mut rng = StreamRng::new(26, "rhat");
        let a: Vec<f64> = (0..4000).map(|_| rng.gaussian()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.gaussian()).collect();
        let r = split_rhat(&[&a, &b]);
        assert!((r - 1.0).abs() < 0.02, "rhat {r}");
        let shifted: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        assert!(split_rhat(&[&a, &shifted]) > 1.5);
    }

    #[test]
    fn anderson_darling_accepts_gaussian_rejects_exponential() {
        let mut rng = StreamRng::new(27, "ad");
        let gauss: Vec<f64> = (0..2000).map(|_| rng.gaussian()).collect();
        assert!(anderson_darling_normal(&gauss).passes());
        let expo: Vec<f64> = (0..2000).map(|_| rng.exponential()).collect();
        assert!(!anderson_darling_normal(&expo).passes());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        // m-point rule is exact for degree <= 2m-1.
        for m in [2usize, 4, 8] {
            let rule = gauss_legendre_unit(m);
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            for k in 0..(2 * m) {
                let quad: f64 = rule.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert_relative_eq!(quad, exact, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn tv_helpers() {
        let p = [0.5, 0.5];
        let q = [0.75, 0.25];
        assert_relative_eq!(tv_distance(&p, &q), 0.25);
        assert!(tv_noise_floor(&p, 10_000) < 0.01);
    }
}
