use std::collections::BTreeMap;

use clap::Args;
use serde::Serialize;

use gwforest::laminations::{self, Section5Config, MIN_TYPE};
use gwforest::lawspec::{load_law, Law};
use gwforest::leafed::{
    estimate_params, exploration_processes, sample_leafed_forest, LeafedLaw, LeafedParams,
};
use gwforest::multitype::{
    drift_check as run_drift, sample_multitype_forest, spectral_data, MeanMatrixMode, MultitypeLaw,
    SpineKernel, TypeCode, TypeWeights,
};
use gwforest::reduction::{reduce_with, reduced_params, verify_reduced};
use gwforest::scaling::{
    closeness_trend, half_normal_test, hypothesis_h_report, leafed_marginal, leafed_scale,
    multitype_scale, reduced_marginal, survival_estimate, survival_report, survival_trend,
    SurvivalLaw,
};
use gwforest::spine::{verify_many_to_one_monotype, verify_many_to_one_multitype};
use gwforest::tree::write_forest_csv;
use gwforest::{Error, Result};

use crate::report::Context;
use crate::Common;

fn resolve_x0(given: Option<TypeCode>, default: Option<TypeCode>) -> Result<TypeCode> {
    given.or(default).ok_or_else(|| {
        Error::InvalidArgument("this law has no default root type; pass --x0".into())
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct TypeList(pub Vec<TypeCode>);

fn parse_types(s: &str) -> std::result::Result<TypeList, String> {
    parse_type_list(s).map(TypeList)
}

/// Parses `a..b` (inclusive) or a comma-separated list.
fn parse_type_list(s: &str) -> std::result::Result<Vec<TypeCode>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: TypeCode = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: TypeCode = b.trim().parse().map_err(|e| format!("{e}"))?;
        if a > b {
            return Err(format!("empty range {s}"));
        }
        Ok((a..=b).collect())
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|e| format!("{e}")))
            .collect()
    }
}

/// Known parameters of a leafed law, else exact or Monte Carlo estimates.
fn leafed_params(law: &LeafedLaw, samples: usize, seed: u64) -> Result<LeafedParams> {
    if let Some(d) = law.declared {
        return Ok(d);
    }
    let p = estimate_params(law, samples, seed)?;
    Ok(LeafedParams {
        m: p.m,
        mu: p.mu,
        sigma2: p.sigma2,
    })
}

/// `(b, η²)` of a multitype law: closed forms for the lamination law,
/// truncated spectral data otherwise.
fn multitype_b_eta(
    law: &MultitypeLaw,
    x0: TypeCode,
    k: usize,
    seed: u64,
) -> Result<(TypeWeights, f64, f64, f64)> {
    if let MultitypeLaw::Lamination = law {
        let c = laminations::closed_forms(x0)?;
        return Ok((laminations::b_weights(), c.eta2, c.a, c.b));
    }
    let s = spectral_data(law, x0, k, MeanMatrixMode::Exact, seed)?;
    let (a, b) = (s.a_of(x0).unwrap(), s.b_of(x0).unwrap());
    Ok((s.b_weights(), s.eta2, a, b))
}

#[derive(Args, Debug, Serialize)]
pub struct SampleLeafed {
    /// Law reference: builtin:NAME, file:PATH or a path.
    #[arg(long)]
    pub law: String,
    /// Vertex budget; the last tree is completed.
    #[arg(long)]
    pub budget: usize,
    /// Samples for Monte Carlo parameter estimates of laws without an
    /// enumerator.
    #[arg(long, default_value_t = 100_000)]
    pub param_samples: usize,
    /// Write forest, vertex and type-1 CSV traces.
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct SampleLeafedResult {
    vertices: usize,
    trees: usize,
    type1_vertices: usize,
    max_height: f64,
    params: gwforest::leafed::ParamEstimate,
}

pub fn sample_leafed(ctx: &Context, a: &SampleLeafed) -> Result<bool> {
    let law = load_law(&a.law)?.leafed()?;
    let f = sample_leafed_forest(&law, a.budget, a.common.seed)?;
    let trace = exploration_processes(&f);
    if a.traces {
        ctx.csv("forest.csv", |w| f.write_csv(w, None))?;
        ctx.csv("vertices.csv", |w| trace.write_vertex_csv(w, &f.forest))?;
        ctx.csv("type1.csv", |w| trace.write_type1_csv(w))?;
    }
    let result = SampleLeafedResult {
        vertices: f.len(),
        trees: f.forest.num_trees(),
        type1_vertices: trace.h_one.len(),
        max_height: trace.h_ell.iter().copied().fold(0.0, f64::max),
        params: estimate_params(&law, a.param_samples, a.common.seed)?,
    };
    ctx.emit("sample-leafed", a, &result, true)
}

#[derive(Args, Debug, Serialize)]
pub struct SampleMultitype {
    #[arg(long)]
    pub law: String,
    /// Root type (defaults to the law's own, e.g. 4 for the lamination law).
    #[arg(long)]
    pub x0: Option<TypeCode>,
    #[arg(long)]
    pub budget: usize,
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct SampleMultitypeResult {
    x0: TypeCode,
    vertices: usize,
    trees: usize,
    max_generation: usize,
    type_counts: BTreeMap<TypeCode, usize>,
}

pub fn sample_multitype(ctx: &Context, a: &SampleMultitype) -> Result<bool> {
    let (law, default) = load_law(&a.law)?.multitype()?;
    let x0 = resolve_x0(a.x0, default)?;
    let f = sample_multitype_forest(&law, x0, a.budget, a.common.seed)?;
    if a.traces {
        let ones = vec![1.0; f.forest.len()];
        ctx.csv("forest.csv", |w| {
            write_forest_csv(w, &f.forest, &f.types, &ones, None)
        })?;
    }
    let mut type_counts = BTreeMap::new();
    for &t in &f.types {
        *type_counts.entry(t).or_insert(0) += 1;
    }
    let result = SampleMultitypeResult {
        x0,
        vertices: f.forest.len(),
        trees: f.forest.num_trees(),
        max_generation: f.forest.max_generation(),
        type_counts,
    };
    ctx.emit("sample-multitype", a, &result, true)
}

#[derive(Args, Debug, Serialize)]
pub struct Reduce {
    #[arg(long)]
    pub law: String,
    #[arg(long)]
    pub x0: Option<TypeCode>,
    #[arg(long)]
    pub budget: usize,
    /// Check that weighted heights in the reduced forest equal generations.
    #[arg(long)]
    pub verify_prop1: bool,
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct ReduceResult {
    x0: TypeCode,
    vertices: usize,
    trees: usize,
    type1_vertices: usize,
    prop1: Option<bool>,
    prop1_checked: Option<usize>,
    first_mismatch: Option<usize>,
}

pub fn reduce(ctx: &Context, a: &Reduce) -> Result<bool> {
    let (law, default) = load_law(&a.law)?.multitype()?;
    let x0 = resolve_x0(a.x0, default)?;
    let t = sample_multitype_forest(&law, x0, a.budget, a.common.seed)?;
    let r = reduce_with(&t, a.traces)?;
    if a.traces {
        let corr: Vec<usize> = r
            .correspondence
            .as_ref()
            .unwrap()
            .iter()
            .map(|v| v.0)
            .collect();
        ctx.csv("reduced.csv", |w| {
            r.leafed.write_csv(w, Some(("original_id", &corr)))
        })?;
    }
    let check = a
        .verify_prop1
        .then(|| verify_reduced(&t, &r.leafed))
        .transpose()?;
    let result = ReduceResult {
        x0,
        vertices: r.leafed.len(),
        trees: r.leafed.forest.num_trees(),
        type1_vertices: r.leafed.bits.iter().filter(|&&b| b == 1).count(),
        prop1: check.as_ref().map(|c| c.holds),
        prop1_checked: check.as_ref().map(|c| c.checked),
        first_mismatch: check.as_ref().and_then(|c| c.first_mismatch),
    };
    let pass = result.prop1.unwrap_or(true);
    ctx.emit("reduce", a, &result, pass)
}

#[derive(Args, Debug, Serialize)]
pub struct Spectral {
    #[arg(long)]
    pub law: String,
    #[arg(long)]
    pub x0: Option<TypeCode>,
    /// Truncation size: number of retained types reachable from x0.
    #[arg(long = "K", default_value_t = 60)]
    #[serde(rename = "K")]
    pub k: usize,
    /// Monte Carlo samples per type; 0 selects exact mode.
    #[arg(long, default_value_t = 0)]
    pub mc_samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

pub fn spectral(ctx: &Context, a: &Spectral) -> Result<bool> {
    let (law, default) = load_law(&a.law)?.multitype()?;
    let x0 = resolve_x0(a.x0, default)?;
    let mode = match a.mc_samples {
        0 => MeanMatrixMode::Exact,
        n => MeanMatrixMode::MonteCarlo { n_samples: n },
    };
    let s = spectral_data(&law, x0, a.k, mode, a.common.seed)?;
    let pass = (s.eigenvalue - 1.0).abs() <= gwforest::multitype::CRITICALITY_TOL;
    ctx.emit("spectral", a, &s, pass)
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyMto {
    #[arg(long)]
    pub law: String,
    /// Root type, for multitype laws.
    #[arg(long)]
    pub x0: Option<TypeCode>,
    /// Generation.
    #[arg(long)]
    pub n: usize,
    /// Replicates per side.
    #[arg(long = "R", default_value_t = 100_000)]
    #[serde(rename = "R")]
    pub r: usize,
    /// Test function: `one`, or `sum` (sum of lengths, or of types).
    #[arg(long, default_value = "one")]
    pub g: String,
    #[arg(long, default_value_t = 3.0)]
    pub z_threshold: f64,
    /// Truncation for b when the law has no closed form.
    #[arg(long = "K", default_value_t = 60)]
    #[serde(rename = "K")]
    pub k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

pub fn verify_mto(ctx: &Context, a: &VerifyMto) -> Result<bool> {
    if a.g != "one" && a.g != "sum" {
        return Err(Error::InvalidArgument(format!(
            "unknown test function {}",
            a.g
        )));
    }
    let sum = a.g == "sum";
    let report = match load_law(&a.law)? {
        Law::Leafed(law) => verify_many_to_one_monotype(
            &law,
            |p: &[f64]| if sum { p.iter().sum() } else { 1.0 },
            a.n,
            a.r,
            a.common.seed,
            a.z_threshold,
        )?,
        Law::Multitype(law, default) => {
            let x0 = resolve_x0(a.x0, default)?;
            let (b, ..) = multitype_b_eta(&law, x0, a.k, a.common.seed)?;
            verify_many_to_one_multitype(
                &law,
                &b,
                x0,
                |p: &[TypeCode]| {
                    if sum {
                        p.iter().map(|&t| t as f64).sum()
                    } else {
                        1.0
                    }
                },
                a.n,
                a.r,
                a.common.seed,
                a.z_threshold,
            )?
        }
    };
    let pass = report.pass;
    ctx.emit("verify-mto", a, &report, pass)
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyScaling {
    #[arg(long)]
    pub law: String,
    #[arg(long)]
    pub x0: Option<TypeCode>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long = "R", default_value_t = 2000)]
    #[serde(rename = "R")]
    pub r: usize,
    #[arg(long, default_value_t = 0.01)]
    pub level: f64,
    #[arg(long = "K", default_value_t = 60)]
    #[serde(rename = "K")]
    pub k: usize,
    /// Samples for the hypothesis diagnostics of a leafed law; 0 skips them.
    #[arg(long, default_value_t = 0)]
    pub hypothesis_samples: usize,
    /// Seeded runs of the closeness trend between n/100 and n; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub closeness_runs: usize,
    /// Write the marginal sample as CSV.
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct ScalingResult {
    scale: f64,
    params: LeafedParams,
    direct_scale: Option<f64>,
    test: gwforest::scaling::TestReport,
    hypotheses: Option<gwforest::scaling::HypothesisReport>,
    closeness: Option<gwforest::scaling::ClosenessTrend>,
}

pub fn verify_scaling(ctx: &Context, a: &VerifyScaling) -> Result<bool> {
    let seed = a.common.seed;
    let (sample, params, direct_scale, leafed) = match load_law(&a.law)? {
        Law::Leafed(law) => {
            let p = leafed_params(&law, 1_000_000, seed)?;
            (leafed_marginal(&law, a.n, a.s, a.r, seed)?, p, None, law)
        }
        Law::Multitype(law, default) => {
            let x0 = resolve_x0(a.x0, default)?;
            let (_, eta2, ax, bx) = multitype_b_eta(&law, x0, a.k, seed)?;
            let p = reduced_params(ax, bx, eta2)?;
            let sample = reduced_marginal(&law, x0, a.n, a.s, a.r, seed)?;
            let reduced = LeafedLaw::reduced(law, x0)?.with_declared(p);
            (sample, p, Some(multitype_scale(eta2, a.s)), reduced)
        }
    };
    let scale = leafed_scale(params.mu, params.sigma2, params.m, a.s);
    if a.traces {
        ctx.csv("marginal.csv", |w| sample.write_csv(w))?;
    }
    let test = half_normal_test(&sample, scale, a.level)?;
    let hypotheses = (a.hypothesis_samples > 0)
        .then(|| {
            hypothesis_h_report(
                &leafed,
                a.hypothesis_samples,
                &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
                seed,
            )
        })
        .transpose()?;
    let closeness = (a.closeness_runs > 0)
        .then(|| {
            let required = (a.closeness_runs * 4).div_ceil(5);
            closeness_trend(
                &leafed,
                params.mu,
                params.m,
                (a.n / 100).max(1),
                a.n,
                a.closeness_runs,
                required,
                seed,
            )
        })
        .transpose()?;
    let pass = test.pass && closeness.as_ref().is_none_or(|c| c.pass);
    let result = ScalingResult {
        scale,
        params,
        direct_scale,
        test,
        hypotheses,
        closeness,
    };
    ctx.emit("verify-scaling", a, &result, pass)
}

#[derive(Args, Debug, Serialize)]
pub struct Survival {
    #[arg(long)]
    pub law: String,
    #[arg(long)]
    pub x0: Option<TypeCode>,
    /// Comma-separated heights.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long = "R", default_value_t = 500_000)]
    #[serde(rename = "R")]
    pub r: usize,
    /// Relative tolerance against the limit constant, per n.
    #[arg(long, default_value_t = 0.1)]
    pub rel_tol: f64,
    #[arg(long = "K", default_value_t = 60)]
    #[serde(rename = "K")]
    pub k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct SurvivalResult {
    /// The limit of `n P(h_max >= n)` predicted by the general theorem.
    target: f64,
    per_n: Vec<gwforest::scaling::TestReport>,
    trend: Option<gwforest::scaling::SurvivalTrend>,
}

pub fn survival(ctx: &Context, a: &Survival) -> Result<bool> {
    let seed = a.common.seed;
    let law = load_law(&a.law)?;
    let (target, candidates): (f64, Vec<(&str, f64)>) = match &law {
        Law::Leafed(l) => {
            let p = leafed_params(l, 1_000_000, seed)?;
            (2.0 * p.mu / p.sigma2, vec![])
        }
        Law::Multitype(l, default) => {
            let x0 = resolve_x0(a.x0, *default)?;
            let (b, eta2, ..) = multitype_b_eta(l, x0, a.k, seed)?;
            let t = 2.0 * b.get(x0).unwrap() / eta2;
            if let (MultitypeLaw::Lamination, MIN_TYPE) = (l, x0) {
                (
                    t,
                    vec![
                        ("theorem", t),
                        ("application", laminations::survival_constant_text()),
                    ],
                )
            } else {
                (t, vec![])
            }
        }
    };
    let mut estimates = Vec::new();
    for &n in &a.n_list {
        estimates.push(match &law {
            Law::Leafed(l) => survival_estimate(SurvivalLaw::Leafed(l), n, a.r, seed)?,
            Law::Multitype(l, default) => survival_estimate(
                SurvivalLaw::Multitype(l, resolve_x0(a.x0, *default)?),
                n,
                a.r,
                seed,
            )?,
        });
    }
    let per_n: Vec<_> = estimates
        .iter()
        .map(|e| survival_report(e, target, a.rel_tol))
        .collect();
    let trend = (!candidates.is_empty()).then(|| survival_trend(estimates, &candidates));
    // the lamination law is judged by the trend decision, others per n
    let pass = match &trend {
        Some(t) => t.pass,
        None => per_n.iter().all(|r| r.pass),
    };
    ctx.emit(
        "survival",
        a,
        &SurvivalResult {
            target,
            per_n,
            trend,
        },
        pass,
    )
}

#[derive(Args, Debug, Serialize)]
pub struct DriftCheck {
    #[arg(long)]
    pub law: String,
    #[arg(long)]
    pub x0: Option<TypeCode>,
    /// Base of V(x) = beta^x.
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    /// Margin parameter in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    /// Small set, as `a..b` or a comma list.
    #[arg(long, default_value = "4..9", value_parser = parse_types)]
    pub small_set: TypeList,
    /// Checked range, as `a..b`.
    #[arg(long, default_value = "10..500", value_parser = parse_types)]
    pub range: TypeList,
    /// Truncation when the law has no closed form.
    #[arg(long = "K", default_value_t = 600)]
    #[serde(rename = "K")]
    pub k: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

pub fn drift_check(ctx: &Context, a: &DriftCheck) -> Result<bool> {
    let (law, default) = load_law(&a.law)?.multitype()?;
    let x0 = resolve_x0(a.x0, default)?;
    let (lo, hi) = match (a.range.0.first(), a.range.0.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidArgument("empty range".into())),
    };
    let (kernel, b): (SpineKernel, Vec<f64>) = if let MultitypeLaw::Lamination = law {
        laminations::closed_form_kernel(hi + 1)?
    } else {
        let s = spectral_data(&law, x0, a.k, MeanMatrixMode::Exact, a.common.seed)?;
        (s.kernel, s.b)
    };
    let report = run_drift(&kernel, &b, a.beta, a.margin, &a.small_set.0, (lo, hi))?;
    let pass = report.pass;
    ctx.emit("drift-check", a, &report, pass)
}

#[derive(Args, Debug, Serialize)]
pub struct Laminations {
    /// Generations for the exact chain and survival, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100")]
    pub n: Vec<usize>,
    #[arg(long = "K", default_value_t = laminations::DEFAULT_K)]
    #[serde(rename = "K")]
    pub k: usize,
    /// Survival replicates per n; 0 skips the Monte Carlo part.
    #[arg(long = "R", default_value_t = 0)]
    #[serde(rename = "R")]
    pub r: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub zn_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct LaminationsResult {
    constants: BTreeMap<&'static str, f64>,
    report: laminations::Section5Report,
}

pub fn laminations(ctx: &Context, a: &Laminations) -> Result<bool> {
    let report = laminations::reproduce_section5(&Section5Config {
        n_list: a.n.clone(),
        r: a.r,
        seed: a.common.seed,
        k: a.k,
        zn_tol: a.zn_tol,
    })?;
    let c = laminations::closed_forms(MIN_TYPE)?;
    let constants = BTreeMap::from([
        ("a_4", c.a),
        ("b_4", c.b),
        ("pi_4", c.pi),
        ("eta2", c.eta2),
        ("zn_limit", laminations::zn_limit()),
        ("survival_theorem", laminations::survival_constant_theorem()),
        (
            "survival_application",
            laminations::survival_constant_text(),
        ),
    ]);
    let pass = report.pass;
    ctx.emit(
        "laminations",
        a,
        &LaminationsResult { constants, report },
        pass,
    )
}
