//! Goodness-of-fit tests and (weighted) sample statistics.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_KS_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample size used for the p-value (the effective size for weighted data).
    pub n_eff: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, fast for small lambda
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-m * m * c).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { t } else { -t };
            if t < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value of a one-sample statistic `d` at sample size `n`,
/// with the usual small-sample correction `sqrt(n) + 0.12 + 0.11/sqrt(n)`.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous distribution function.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d.max(c - i as f64 / n).max((i + 1) as f64 / n - c);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n_eff: n,
    })
}

/// KS test of a self-normalized weighted sample; the p-value uses the
/// effective sample size in place of `n`.
pub fn ks_test_weighted(samples: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    assert_eq!(samples.len(), weights.len());
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: samples.len(),
        });
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for &i in &idx {
        let c = cdf(samples[i]);
        d = d.max(c - acc / total);
        acc += weights[i];
        d = d.max(acc / total - c);
    }
    let n_eff = effective_sample_size(weights);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_eff,
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < MIN_KS_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_KS_SAMPLES,
                got: s.len(),
            });
        }
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, ne),
        n_eff: ne,
    })
}

/// `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub ess: f64,
}

pub fn mean_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        f64::NAN
    };
    MeanEstimate {
        mean,
        stderr: (var / nf).sqrt(),
        n,
        ess: nf,
    }
}

/// Self-normalized weighted mean; the standard error is the delta-method
/// estimate `sqrt(sum w^2 (x - m)^2) / sum w`.
pub fn weighted_mean_stderr(xs: &[f64], weights: &[f64]) -> MeanEstimate {
    assert_eq!(xs.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let mean = xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let v: f64 = xs
        .iter()
        .zip(weights)
        .map(|(x, w)| w * w * (x - mean) * (x - mean))
        .sum();
    MeanEstimate {
        mean,
        stderr: v.sqrt() / total,
        n: xs.len(),
        ess: effective_sample_size(weights),
    }
}

/// Pearson correlation with the large-sample standard error `(1 - r^2)/sqrt(n - 1)`.
pub fn correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let r = sxy / (sxx * syy).sqrt();
    (r, (1.0 - r * r) / (n - 1.0).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k as f64;
    }
    r
}

/// Spearman rank correlation; usable for heavy-tailed variables without a
/// finite variance. Under independence its standard error is `1/sqrt(n - 1)`.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (r, _) = correlation(&ranks(x), &ranks(y));
    (r, 1.0 / (x.len() as f64 - 1.0).sqrt())
}

/// Systematic resampling: `n_out` indices drawn with probabilities
/// proportional to `weights` using a single uniform offset.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n_out: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n_out as f64;
    let mut pos = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n_out);
    let mut acc = 0.0;
    let mut i = 0;
    for _ in 0..n_out {
        while i + 1 < weights.len() && acc + weights[i] <= pos {
            acc += weights[i];
            i += 1;
        }
        out.push(i);
        pos += step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn kolmogorov_known_values() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        // both branches agree at the switch
        let a = kolmogorov_survival(1.18 - 1e-12);
        let b = kolmogorov_survival(1.18 + 1e-12);
        assert!((a - b).abs() < 1e-9);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(ks_test(&[0.5; 10], |x| x), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn uniform_null_calibration() {
        let mut low = 0;
        for seed in 0..200 {
            let mut rng = stream(seed, 0);
            let xs: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
            let r = ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
            assert!((0.0..=1.0).contains(&r.statistic));
            if r.p_value < 0.01 {
                low += 1;
            }
        }
        // about 2 expected out of 200
        assert!(low <= 8, "{low}");
    }

    #[test]
    fn shifted_normal_is_detected() {
        let mut rng = stream(3, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| 0.1 + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>();
        let r = ks_test(&xs, normal_cdf).unwrap();
        assert!(r.p_value < 1e-6, "{r:?}");
    }

    #[test]
    fn weighted_ks_reduces_to_plain() {
        let mut rng = stream(4, 0);
        let xs: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let w = vec![2.5; 500];
        let a = ks_test(&xs, |x| x).unwrap();
        let b = ks_test_weighted(&xs, &w, |x| x).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert!((b.n_eff - 500.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_ks_with_tilt() {
        // uniform draws weighted by 2x follow the law with cdf x^2
        let mut rng = stream(5, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| rng.random()).collect();
        let w: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let r = ks_test_weighted(&xs, &w, |x| x * x).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        assert!(r.n_eff <= 50_000.0);
    }

    #[test]
    fn two_sample_same_law() {
        let mut rng = stream(6, 0);
        let a: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.001);
        let c: Vec<f64> = (0..4000).map(|_| rng.random::<f64>().powi(2)).collect();
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }

    #[test]
    fn resampling_follows_weights() {
        let w = [1.0, 0.0, 3.0, 0.0];
        let mut rng = stream(7, 0);
        let idx = systematic_resample(&w, 4000, &mut rng);
        let c2 = idx.iter().filter(|&&i| i == 2).count();
        assert_eq!(c2, 3000);
        assert!(idx.iter().all(|&i| i == 0 || i == 2));
    }

    #[test]
    fn ess_bounds() {
        assert!((effective_sample_size(&[1.0; 10]) - 10.0).abs() < 1e-12);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_mean_uniform_weights() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let a = weighted_mean_stderr(&xs, &[0.5; 4]);
        let b = mean_stderr(&xs);
        assert!((a.mean - b.mean).abs() < 1e-15);
        assert!(a.stderr > 0.0);
    }
}
