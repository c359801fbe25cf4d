//! Desk-scale statistical checks of the scaling limits: half-normal
//! marginals, survival asymptotics, closeness of the exploration processes
//! and finite-sample diagnostics of the hypotheses on a leafed law.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::explore::Stop;
use crate::leafed::{
    estimate_params, exploration_processes, explore_prefix, LeafedLaw, ProcessTrace,
};
use crate::multitype::{
    sample_multitype_with, MultitypeLaw, SampleOptions, TypeCode, DEFAULT_HARD_CAP,
};
use crate::reduction::reduce_with;
use crate::rng::{self, tag};
use crate::stats::{
    chi_square_survival, half_normal_cdf, ks_pvalue, ks_statistic, ks_two_sample, normal_quantile,
    wilson_interval, Moments, ZTest,
};

pub const DEFAULT_LEVEL: f64 = 0.01;
pub const MIN_KS_SAMPLE: usize = 100;

/// One replicate value per simulated forest, e.g. `H^ℓ(⌊ns⌋)/√n`.
#[derive(Clone, Debug, Serialize)]
pub struct MarginalSample {
    pub values: Vec<f64>,
    pub n: usize,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: usize,
}

impl MarginalSample {
    /// CSV `replicate,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "replicate,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestReport {
    pub statistic: String,
    pub observed: f64,
    pub reference: String,
    pub p_value: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub level: f64,
    pub pass: bool,
}

/// One-sample KS test of `sample` against `scale·|N(0,1)|`.
pub fn half_normal_test(sample: &MarginalSample, scale: f64, level: f64) -> Result<TestReport> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if sample.values.len() < MIN_KS_SAMPLE {
        return Err(Error::InvalidArgument(format!(
            "KS test needs at least {MIN_KS_SAMPLE} values, got {}",
            sample.values.len()
        )));
    }
    let d = ks_statistic(&sample.values, |x| half_normal_cdf(x, scale));
    let p = ks_pvalue(d, sample.values.len());
    Ok(TestReport {
        statistic: "ks_half_normal".into(),
        observed: d,
        reference: format!("half-normal(scale={scale})"),
        p_value: Some(p),
        ci: None,
        level,
        pass: p >= level,
    })
}

/// `H^ℓ(⌊ns⌋)/√n` over `r` independent leafed forests.
pub fn leafed_marginal(
    law: &LeafedLaw,
    n: usize,
    s: f64,
    r: usize,
    seed: u64,
) -> Result<MarginalSample> {
    let rank = rank_of(n, s)?;
    let values = rng::replicate(seed, tag::MARGINAL, r, |_, rng| {
        let f = explore_prefix(law, rank + 1, rng)?;
        let h = f.heights();
        Ok(h[rank] / (n as f64).sqrt())
    });
    Ok(MarginalSample {
        values: values.into_iter().collect::<Result<_>>()?,
        n,
        s,
        r,
    })
}

/// `H^ℓ(⌊ns⌋)/√n` for the reduction of `r` independent multitype forests
/// rooted at `x0`.
pub fn reduced_marginal(
    law: &MultitypeLaw,
    x0: TypeCode,
    n: usize,
    s: f64,
    r: usize,
    seed: u64,
) -> Result<MarginalSample> {
    let rank = rank_of(n, s)?;
    let values = rng::replicate(seed, tag::MARGINAL, r, |_, rng| {
        let t = sample_multitype_with(
            law,
            x0,
            Stop::Prefix(rank + 1),
            rng,
            SampleOptions::default(),
        )?;
        let reduced = reduce_with(&t, false)?;
        let h = reduced.leafed.heights();
        Ok(h[rank] / (n as f64).sqrt())
    });
    Ok(MarginalSample {
        values: values.into_iter().collect::<Result<_>>()?,
        n,
        s,
        r,
    })
}

fn rank_of(n: usize, s: f64) -> Result<usize> {
    if n == 0 || !(s > 0.0) {
        return Err(Error::InvalidArgument("need n ≥ 1 and s > 0".into()));
    }
    Ok((n as f64 * s).floor() as usize)
}

/// `(2μ/σ)√(s/m)`.
pub fn leafed_scale(mu: f64, sigma2: f64, m: f64, s: f64) -> f64 {
    2.0 * mu / sigma2.sqrt() * (s / m).sqrt()
}

/// `(2/η)√s`.
pub fn multitype_scale(eta2: f64, s: f64) -> f64 {
    2.0 / eta2.sqrt() * s.sqrt()
}

pub enum SurvivalLaw<'a> {
    Leafed(&'a LeafedLaw),
    Multitype(&'a MultitypeLaw, TypeCode),
}

#[derive(Clone, Debug, Serialize)]
pub struct SurvivalEstimate {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub survivors: u64,
    pub p_hat: f64,
    /// `n·P̂(h_max ≥ n)`.
    pub scaled: f64,
    pub scaled_se: f64,
    /// Wilson 95% interval, scaled by `n`.
    pub ci: (f64, f64),
}

pub const MIN_SURVIVAL_N: usize = 50;
pub const MIN_SURVIVAL_R: usize = 10_000;

/// Estimates `n·P(h_max(T) ≥ n)`; trees are explored depth-first and
/// abandoned as soon as height `n` is reached.
pub fn survival_estimate(
    law: SurvivalLaw<'_>,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<SurvivalEstimate> {
    if n < MIN_SURVIVAL_N || r < MIN_SURVIVAL_R {
        return Err(Error::InvalidArgument(format!(
            "survival needs n ≥ {MIN_SURVIVAL_N} and R ≥ {MIN_SURVIVAL_R}, got n = {n}, R = {r}"
        )));
    }
    let offset = (n as u64) << 28;
    let hits: Vec<Result<bool>> = match law {
        SurvivalLaw::Leafed(l) => {
            if l.surely_infinite() {
                return Err(Error::Degenerate(
                    "every tree is infinite: h_max is almost surely infinite".into(),
                ));
            }
            rng::replicate_offset(seed, tag::SURVIVAL_LEAFED, offset, r, |_, rng| {
                let mut stack = vec![0.0f64];
                let mut kids = Vec::new();
                let mut explored = 0usize;
                while let Some(h) = stack.pop() {
                    if h >= n as f64 {
                        return Ok(true);
                    }
                    explored += 1;
                    if explored > DEFAULT_HARD_CAP {
                        return Err(Error::HardCap {
                            cap: DEFAULT_HARD_CAP,
                            explored,
                            trees: 0,
                        });
                    }
                    kids.clear();
                    l.sample_into(rng, &mut kids)?;
                    for c in &kids {
                        if c.bit == 1 {
                            stack.push(h + c.length);
                        } else if h + c.length >= n as f64 {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            })
        }
        SurvivalLaw::Multitype(l, x0) => {
            if l.surely_infinite(x0)? {
                return Err(Error::Degenerate(
                    "every tree is infinite: h_max is almost surely infinite".into(),
                ));
            }
            rng::replicate_offset(seed, tag::SURVIVAL, offset, r, |_, rng| {
                let mut stack = vec![(x0, 0usize)];
                let mut kids = Vec::new();
                let mut explored = 0usize;
                while let Some((t, g)) = stack.pop() {
                    if g >= n {
                        return Ok(true);
                    }
                    explored += 1;
                    if explored > DEFAULT_HARD_CAP {
                        return Err(Error::HardCap {
                            cap: DEFAULT_HARD_CAP,
                            explored,
                            trees: 0,
                        });
                    }
                    kids.clear();
                    l.sample_into(t, rng, &mut kids)?;
                    stack.extend(kids.iter().map(|&c| (c, g + 1)));
                }
                Ok(false)
            })
        }
    };
    let mut survivors = 0u64;
    for h in hits {
        survivors += h? as u64;
    }
    let nf = n as f64;
    let p_hat = survivors as f64 / r as f64;
    let (lo, hi) = wilson_interval(survivors, r as u64, 0.05);
    Ok(SurvivalEstimate {
        n,
        r,
        survivors,
        p_hat,
        scaled: nf * p_hat,
        scaled_se: nf * (p_hat * (1.0 - p_hat) / r as f64).sqrt(),
        ci: (nf * lo, nf * hi),
    })
}

/// `n·P̂` against a target constant with a relative tolerance.
pub fn survival_report(est: &SurvivalEstimate, target: f64, rel_tol: f64) -> TestReport {
    TestReport {
        statistic: "n_times_survival".into(),
        observed: est.scaled,
        reference: format!("{target} ± {}%", rel_tol * 100.0),
        p_value: None,
        ci: Some(est.ci),
        level: 0.05,
        pass: (est.scaled / target - 1.0).abs() <= rel_tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendFit {
    /// Limit constant `c` in `n·P̂ ≈ c + d/n`.
    pub c: f64,
    pub c_se: f64,
    pub d: f64,
    pub d_se: f64,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_p: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdjustedEstimate {
    pub n: usize,
    /// `n·P̂ - d/n`.
    pub value: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub name: String,
    pub value: f64,
    /// `(c - value)/c_se`.
    pub z: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurvivalTrend {
    pub estimates: Vec<SurvivalEstimate>,
    pub fit: TrendFit,
    pub adjusted: Vec<AdjustedEstimate>,
    /// Every pair of trend-adjusted 95% intervals overlaps.
    pub consistent: bool,
    pub candidates: Vec<Candidate>,
    /// The only candidate not excluded, if exactly one survives.
    pub supported: Option<String>,
    /// The candidate with the smallest `|z|`.
    pub closest: Option<String>,
    pub pass: bool,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Weighted least-squares fit of `n·P̂_n = c + d/n` and a 95% decision
/// between candidate limits.
pub fn survival_trend(
    estimates: Vec<SurvivalEstimate>,
    candidates: &[(&str, f64)],
) -> SurvivalTrend {
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .map(|e| (1.0 / e.n as f64, e.scaled, e.scaled_se.max(1e-300)))
        .collect();
    let mut distinct: Vec<usize> = estimates.iter().map(|e| e.n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let fit = if distinct.len() < 2 {
        let w: f64 = pts.iter().map(|p| 1.0 / (p.2 * p.2)).sum();
        let c = pts.iter().map(|p| p.1 / (p.2 * p.2)).sum::<f64>() / w;
        let chi2: f64 = pts.iter().map(|p| ((p.1 - c) / p.2).powi(2)).sum();
        let dof = pts.len() - 1;
        TrendFit {
            c,
            c_se: w.sqrt().recip(),
            d: 0.0,
            d_se: 0.0,
            chi2,
            dof,
            chi2_p: chi_square_survival(chi2, dof as f64),
        }
    } else {
        let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y, se) in &pts {
            let w = 1.0 / (se * se);
            s += w;
            sx += w * x;
            sxx += w * x * x;
            sy += w * y;
            sxy += w * x * y;
        }
        let det = s * sxx - sx * sx;
        let c = (sxx * sy - sx * sxy) / det;
        let d = (s * sxy - sx * sy) / det;
        let chi2: f64 = pts
            .iter()
            .map(|&(x, y, se)| ((y - c - d * x) / se).powi(2))
            .sum();
        let dof = pts.len() - 2;
        TrendFit {
            c,
            c_se: (sxx / det).sqrt(),
            d,
            d_se: (s / det).sqrt(),
            chi2,
            dof,
            chi2_p: chi_square_survival(chi2, dof as f64),
        }
    };
    let adjusted: Vec<AdjustedEstimate> = estimates
        .iter()
        .map(|e| {
            let v = e.scaled - fit.d / e.n as f64;
            AdjustedEstimate {
                n: e.n,
                value: v,
                ci: (v - Z95 * e.scaled_se, v + Z95 * e.scaled_se),
            }
        })
        .collect();
    let consistent = adjusted.iter().enumerate().all(|(i, a)| {
        adjusted[i + 1..]
            .iter()
            .all(|b| a.ci.0 <= b.ci.1 && b.ci.0 <= a.ci.1)
    });
    let candidates: Vec<Candidate> = candidates
        .iter()
        .map(|&(name, value)| {
            let z = (fit.c - value) / fit.c_se;
            Candidate {
                name: name.into(),
                value,
                z,
                excluded: z.abs() > Z95,
            }
        })
        .collect();
    let kept: Vec<&Candidate> = candidates.iter().filter(|c| !c.excluded).collect();
    let supported = (kept.len() == 1).then(|| kept[0].name.clone());
    let closest = candidates
        .iter()
        .min_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
        .map(|c| c.name.clone());
    let any_excluded = candidates.iter().any(|c| c.excluded);
    SurvivalTrend {
        estimates,
        fit,
        adjusted,
        consistent,
        pass: consistent && any_excluded,
        candidates,
        supported,
        closest,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Closeness {
    pub n: usize,
    /// `max_{i≤n} |H^ℓ(i) - μH¹(φ(i))| / √n`.
    pub vertical: f64,
    /// `sup_{s≤1} |φ(⌊ns⌋)/n - s/m|`.
    pub horizontal: f64,
    /// The same supremum for the running maximum `max_{j≤i} φ(j)`, i.e. the
    /// number of type-1 vertices among `u(0..=i)`, minus one. It differs from
    /// `φ(i)` only at type-0 vertices.
    pub horizontal_envelope: f64,
}

pub fn closeness_report(trace: &ProcessTrace, mu: f64, m: f64, n: usize) -> Result<Closeness> {
    if trace.h_ell.len() <= n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "trace has {} vertices, closeness at n = {n} needs n + 1",
            trace.h_ell.len()
        )));
    }
    let nf = n as f64;
    // on [i/n, (i+1)/n) the first term is constant and s/m is linear
    let gap = |f: f64, i: usize| {
        (f - i as f64 / (nf * m))
            .abs()
            .max((f - (i + 1) as f64 / (nf * m)).abs())
    };
    let mut vertical: f64 = 0.0;
    let mut horizontal: f64 = 0.0;
    let mut envelope: f64 = 0.0;
    let mut running = 0usize;
    for i in 0..=n {
        let k = trace.phi[i];
        running = running.max(k);
        vertical = vertical.max((trace.h_ell[i] - mu * trace.h_one[k] as f64).abs());
        if i < n {
            horizontal = horizontal.max(gap(k as f64 / nf, i));
            envelope = envelope.max(gap(running as f64 / nf, i));
        } else {
            horizontal = horizontal.max((k as f64 / nf - 1.0 / m).abs());
            envelope = envelope.max((running as f64 / nf - 1.0 / m).abs());
        }
    }
    Ok(Closeness {
        n,
        vertical: vertical / nf.sqrt(),
        horizontal,
        horizontal_envelope: envelope,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosenessRun {
    pub seed: u64,
    pub small: Closeness,
    pub large: Closeness,
    pub vertical_decreased: bool,
    pub horizontal_decreased: bool,
    pub envelope_decreased: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosenessTrend {
    pub mu: f64,
    pub m: f64,
    pub runs: Vec<ClosenessRun>,
    pub vertical_decreases: usize,
    pub horizontal_decreases: usize,
    /// Diagnostic only; not part of `pass`.
    pub envelope_decreases: usize,
    pub required: usize,
    pub pass: bool,
}

/// Closeness at `n_small` and `n_large` on `runs` independent forests.
pub fn closeness_trend(
    law: &LeafedLaw,
    mu: f64,
    m: f64,
    n_small: usize,
    n_large: usize,
    runs: usize,
    required: usize,
    seed: u64,
) -> Result<ClosenessTrend> {
    let results = rng::replicate(seed, tag::CLOSENESS, runs, |i, rng| {
        let f = explore_prefix(law, n_large + 1, rng)?;
        let trace = exploration_processes(&f);
        let small = closeness_report(&trace, mu, m, n_small)?;
        let large = closeness_report(&trace, mu, m, n_large)?;
        Ok(ClosenessRun {
            seed: i as u64,
            small,
            large,
            vertical_decreased: large.vertical < small.vertical,
            horizontal_decreased: large.horizontal < small.horizontal,
            envelope_decreased: large.horizontal_envelope < small.horizontal_envelope,
        })
    });
    let runs: Vec<ClosenessRun> = results.into_iter().collect::<Result<_>>()?;
    let vertical_decreases = runs.iter().filter(|r| r.vertical_decreased).count();
    let horizontal_decreases = runs.iter().filter(|r| r.horizontal_decreased).count();
    let envelope_decreases = runs.iter().filter(|r| r.envelope_decreased).count();
    Ok(ClosenessTrend {
        mu,
        m,
        pass: vertical_decreases >= required && horizontal_decreases >= required,
        runs,
        vertical_decreases,
        horizontal_decreases,
        envelope_decreases,
        required,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TailCurve {
    pub y: Vec<f64>,
    pub value: Vec<f64>,
    /// Number of samples contributing a non-zero term at each `y`.
    pub support: Vec<u64>,
    /// Log-log slope over grid points with enough support.
    pub slope: Option<f64>,
    pub flag: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub n_samples: usize,
    pub m: f64,
    pub m_ci: (f64, f64),
    pub h1_finite_mean: bool,
    pub criticality: ZTest,
    pub sigma2: f64,
    pub sigma2_ci: (f64, f64),
    pub sigma2_positive: bool,
    pub type0_tail: TailCurve,
    pub type1_tail: TailCurve,
    /// Exact verdict for the two tail conditions, when lengths are bounded.
    pub tail_verdict: String,
}

/// Minimum number of contributing samples for a grid point to enter the
/// slope fit.
const TAIL_MIN_SUPPORT: u64 = 10;

fn tail_curve(y: &[f64], sums: Vec<f64>, support: Vec<u64>, n: usize) -> TailCurve {
    let value: Vec<f64> = y
        .iter()
        .zip(&sums)
        .map(|(y, s)| y * y * s / n as f64)
        .collect();
    let pts: Vec<(f64, f64)> = y
        .iter()
        .zip(&value)
        .zip(&support)
        .filter(|((y, v), s)| **s >= TAIL_MIN_SUPPORT && **y > 0.0 && **v > 0.0)
        .map(|((y, v), _)| (y.ln(), v.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    TailCurve {
        y: y.to_vec(),
        flag: slope.is_some_and(|s| s > 0.0),
        value,
        support,
        slope,
    }
}

/// Finite-sample diagnostics for the moment and tail hypotheses.
pub fn hypothesis_h_report(
    law: &LeafedLaw,
    n_samples: usize,
    y_grid: &[f64],
    seed: u64,
) -> Result<HypothesisReport> {
    if y_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("y grid must be increasing".into()));
    }
    let p = estimate_params(law, n_samples.max(2), seed)?;
    let draws = rng::replicate(seed, tag::HYPOTHESIS, n_samples, |_, rng| {
        let mut out = Vec::new();
        law.sample_into(rng, &mut out).map(|_| out)
    });
    let k = y_grid.len();
    let mut t0 = vec![0.0; k];
    let mut s0 = vec![0u64; k];
    let mut t1 = vec![0.0; k];
    let mut s1 = vec![0u64; k];
    for d in draws {
        let d = d?;
        let max0 = d
            .iter()
            .filter(|c| c.bit == 0)
            .map(|c| c.length)
            .fold(f64::NEG_INFINITY, f64::max);
        for (j, &y) in y_grid.iter().enumerate() {
            if max0 > y {
                t0[j] += 1.0;
                s0[j] += 1;
            }
            let c1 = d.iter().filter(|c| c.bit == 1 && c.length > y).count();
            if c1 > 0 {
                t1[j] += c1 as f64;
                s1[j] += 1;
            }
        }
    }
    let z = normal_quantile(0.975);
    let ztest = ZTest::new(p.mean_type1, p.se_mean_type1, 1.0, 0.0, 0.01);
    let tail_verdict = match law.length_bound() {
        Some(b) => format!("exactly satisfied (bounded support: lengths ≤ {b})"),
        None => "undecidable from samples; see tail curves".into(),
    };
    Ok(HypothesisReport {
        n_samples,
        m: p.m,
        m_ci: (p.m - z * p.se_m, p.m + z * p.se_m),
        h1_finite_mean: p.m.is_finite(),
        criticality: ztest,
        sigma2: p.sigma2,
        sigma2_ci: (p.sigma2 - z * p.se_sigma2, p.sigma2 + z * p.se_sigma2),
        sigma2_positive: p.sigma2 - z * p.se_sigma2 > 0.0 || (p.exact && p.sigma2 > 0.0),
        type0_tail: tail_curve(y_grid, t0, s0, n_samples),
        type1_tail: tail_curve(y_grid, t1, s1, n_samples),
        tail_verdict,
    })
}

/// Chi-square test that a chain moves with kernel `p(x, y)`. Cells with
/// expected count below 5 are pooled per row.
pub fn transition_chi_square<F>(chain: &[TypeCode], p: F, level: f64) -> TestReport
where
    F: Fn(TypeCode, TypeCode) -> f64,
{
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<TypeCode, BTreeMap<TypeCode, u64>> = BTreeMap::new();
    for w in chain.windows(2) {
        *counts.entry(w[0]).or_default().entry(w[1]).or_default() += 1;
    }
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&x, row) in &counts {
        let nx: u64 = row.values().sum();
        // candidate targets: observed ones plus every y with positive kernel
        // mass near the observed range
        let hi = row.keys().max().copied().unwrap_or(x).max(x) + 2;
        let mut cells: Vec<(f64, f64)> = (0..=hi)
            .map(|y| {
                (
                    row.get(&y).copied().unwrap_or(0) as f64,
                    nx as f64 * p(x, y),
                )
            })
            .filter(|&(o, e)| o > 0.0 || e > 0.0)
            .collect();
        let covered: f64 = cells.iter().map(|c| c.1).sum();
        if (nx as f64 - covered) > 1e-9 {
            cells.push((0.0, nx as f64 - covered));
        }
        let (mut big, mut pool): (Vec<_>, Vec<_>) = cells.into_iter().partition(|c| c.1 >= 5.0);
        if !pool.is_empty() {
            let o: f64 = pool.iter().map(|c| c.0).sum();
            let e: f64 = pool.iter().map(|c| c.1).sum();
            pool.clear();
            if e >= 5.0 || big.is_empty() {
                big.push((o, e));
            } else if let Some(last) = big.last_mut() {
                last.0 += o;
                last.1 += e;
            }
        }
        if big.len() < 2 {
            continue;
        }
        for (o, e) in &big {
            if *e > 0.0 {
                stat += (o - e).powi(2) / e;
            } else if *o > 0.0 {
                stat = f64::INFINITY;
            }
        }
        dof += big.len() - 1;
    }
    let pv = chi_square_survival(stat, dof as f64);
    TestReport {
        statistic: "chi2_transitions".into(),
        observed: stat,
        reference: format!("chi-square({dof})"),
        p_value: Some(pv),
        ci: None,
        level,
        pass: pv >= level,
    }
}

/// Two-sample KS test, e.g. for the i.i.d. spine lengths.
pub fn two_sample_test(a: &[f64], b: &[f64], level: f64) -> TestReport {
    let (d, p) = ks_two_sample(a, b);
    TestReport {
        statistic: "ks_two_sample".into(),
        observed: d,
        reference: "same distribution".into(),
        p_value: Some(p),
        ci: None,
        level,
        pass: p >= level,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub test: String,
    pub repetitions: usize,
    pub level: f64,
    pub rejections: usize,
    pub rate: f64,
    pub accepted_range: (f64, f64),
    pub pass: bool,
}

pub const CALIBRATION_TESTS: [&str; 5] = [
    "ks_half_normal",
    "ks_two_sample",
    "z_test",
    "chi2_transitions",
    "wilson",
];

/// Runs a test `reps` times on data drawn from its own null and counts
/// rejections at `level`.
pub fn calibrate(
    test: &str,
    reps: usize,
    level: f64,
    range: (f64, f64),
    seed: u64,
) -> Result<CalibrationReport> {
    let idx = CALIBRATION_TESTS
        .iter()
        .position(|t| *t == test)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown test {test}")))?;
    let reject = rng::replicate_offset(
        seed,
        tag::CALIBRATION,
        (idx as u64) << 32,
        reps,
        |_, rng| -> Result<bool> {
            Ok(match idx {
                0 => {
                    let scale = 1.7;
                    let values: Vec<f64> = (0..2000)
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal).abs())
                        .collect();
                    let s = MarginalSample {
                        values,
                        n: 1,
                        s: 1.0,
                        r: 2000,
                    };
                    !half_normal_test(&s, scale, level)?.pass
                }
                1 => {
                    let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
                    let b: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
                    !two_sample_test(&a, &b, level).pass
                }
                2 => {
                    let exp = rand_distr::Exp::new(1.0).unwrap();
                    let a = Moments::from_slice(
                        &(0..1000).map(|_| exp.sample(rng)).collect::<Vec<_>>(),
                    );
                    let b = Moments::from_slice(
                        &(0..1000).map(|_| exp.sample(rng)).collect::<Vec<_>>(),
                    );
                    ZTest::new(a.mean, a.std_error(), b.mean, b.std_error(), level).p_value < level
                }
                3 => {
                    // a three-state chain with a known kernel
                    let kernel = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]];
                    let mut x = 0usize;
                    let mut chain = vec![0u64];
                    for _ in 0..3000 {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut next = 2;
                        for (y, &q) in kernel[x].iter().enumerate() {
                            acc += q;
                            if u < acc {
                                next = y;
                                break;
                            }
                        }
                        x = next;
                        chain.push(x as u64);
                    }
                    let p = |a: u64, b: u64| {
                        if a < 3 && b < 3 {
                            kernel[a as usize][b as usize]
                        } else {
                            0.0
                        }
                    };
                    !transition_chi_square(&chain, p, level).pass
                }
                _ => {
                    let (p, trials) = (0.3, 10_000u64);
                    let k = (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64;
                    let (lo, hi) = wilson_interval(k, trials, level);
                    !(lo <= p && p <= hi)
                }
            })
        },
    );
    let mut rejections = 0;
    for r in reject {
        rejections += r? as usize;
    }
    let rate = rejections as f64 / reps as f64;
    Ok(CalibrationReport {
        test: test.into(),
        repetitions: reps,
        level,
        rejections,
        rate,
        accepted_range: range,
        pass: rate >= range.0 && rate <= range.1,
    })
}
