//! Small statistics toolkit: Kolmogorov-Smirnov tests, Wilson intervals,
//! z and chi-square tests, jackknife standard errors.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::erf::erf;

/// Asymptotic Kolmogorov distribution, `P(K > x)` for `K = sup|B_t|` of a
/// Brownian bridge.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // the alternating series converges slowly here; use the theta
        // function form of the CDF instead
        let s = (2.0 * std::f64::consts::PI).sqrt() / x;
        let mut cdf = 0.0;
        for k in 1..=50 {
            let t = (2 * k - 1) as f64 * std::f64::consts::PI / x;
            cdf += (-t * t / 8.0).exp();
        }
        return (1.0 - s * cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic `D_n = sup_x |F_n(x) - F(x)|`.
///
/// Ties in the sample are handled by evaluating the empirical CDF just
/// before (strict inequality) and at each distinct value.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d
            .max((f - i as f64 / n).abs())
            .max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    kolmogorov_survival(d * (n as f64).sqrt())
}

/// Two-sample KS test; returns `(D, asymptotic p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_survival(d * en))
}

/// CDF of `scale·|N(0,1)|`.
pub fn half_normal_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / (scale * std::f64::consts::SQRT_2))
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * (1.0 - n.cdf(z.abs()))
}

pub fn chi_square_survival(stat: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Wilson score interval for a binomial proportion at two-sided confidence
/// `1 - alpha`.
pub fn wilson_interval(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Sample mean and its delete-one jackknife standard error.
pub fn jackknife_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let nf = n as f64;
    let loo_mean_of = |v: f64| (total - v) / (nf - 1.0);
    let centre: f64 = values.iter().map(|&v| loo_mean_of(v)).sum::<f64>() / nf;
    let var: f64 = values
        .iter()
        .map(|&v| {
            let d = loo_mean_of(v) - centre;
            d * d
        })
        .sum::<f64>()
        * (nf - 1.0)
        / nf;
    (mean, var.sqrt())
}

/// Running moments of a scalar sample.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n as f64 - 1.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance,
    /// `sqrt((μ₄ - σ⁴)/n)`.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.n as f64;
        let mu4 = self.m4 / n;
        let s2 = self.m2 / n;
        ((mu4 - s2 * s2).max(0.0) / n).sqrt()
    }
}

/// Two-sided z-test of two independent estimates.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZTest {
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub pass: bool,
}

impl ZTest {
    pub fn new(lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64, level: f64) -> Self {
        let se = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
        let z = if se > 0.0 {
            (lhs - rhs) / se
        } else if lhs == rhs {
            0.0
        } else {
            f64::INFINITY
        };
        let p_value = normal_two_sided_p(z);
        ZTest {
            lhs,
            rhs,
            se,
            z,
            p_value,
            pass: p_value >= level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_values() {
        // classical critical values of the asymptotic distribution
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
        // both branches agree where they meet
        let lo = {
            let x: f64 = 0.2;
            let s = (2.0 * std::f64::consts::PI).sqrt() / x;
            let cdf: f64 = (1..=50)
                .map(|k| {
                    let t = (2 * k - 1) as f64 * std::f64::consts::PI / x;
                    (-t * t / 8.0).exp()
                })
                .sum();
            1.0 - s * cdf
        };
        assert!((lo - kolmogorov_survival(0.2)).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_by_hand() {
        // uniform CDF on [0,1]; sample {0.1, 0.5, 0.5, 0.9}
        let d = ks_statistic(&[0.5, 0.1, 0.9, 0.5], |x| x.clamp(0.0, 1.0));
        // at 0.5: before = 1/4, after = 3/4 -> max(|0.5-0.25|, |0.75-0.5|) = 0.25
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wilson_is_sane() {
        let (lo, hi) = wilson_interval(50, 100, 0.05);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((hi - lo - 0.192).abs() < 0.01);
        let (lo0, _) = wilson_interval(0, 10, 0.05);
        assert_eq!(lo0, 0.0);
    }

    #[test]
    fn jackknife_of_mean_is_classical_se() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let (m, se) = jackknife_mean_se(&xs);
        let mom = Moments::from_slice(&xs);
        assert!((m - 4.0).abs() < 1e-15);
        assert!((se - mom.std_error()).abs() < 1e-12);
        assert!((mom.variance() - 7.5).abs() < 1e-12);
    }

    #[test]
    fn half_normal_median() {
        // median of |N(0,1)| is 0.6744897...
        assert!((half_normal_cdf(0.674_489_750_196_081_7, 1.0) - 0.5).abs() < 1e-12);
        assert!((half_normal_cdf(2.0 * 0.674_489_750_196_081_7, 2.0) - 0.5).abs() < 1e-12);
    }
}
