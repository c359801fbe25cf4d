//! Leafed Galton-Watson forests with edge lengths.
//!
//! Every vertex carries a type bit and the length of the edge to its parent.
//! Type-0 vertices are sterile leaves; type-1 vertices reproduce according to
//! the offspring law. The type-1 vertices form the sub-forest `F¹`.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric, Pareto};
use serde::{Deserialize, Serialize};

use crate::enumerated::Enumerated;
use crate::error::{Error, Result};
use crate::explore::{grow, Limits, Stop};
use crate::multitype::{MultitypeLaw, SampleOptions, TypeCode};
use crate::reduction::sample_bush;
use crate::rng::{self, tag, SimRng};
use crate::stats::Moments;
use crate::tree::{lukasiewicz, weighted_heights, NodeId, PlanarForest};

/// One child: its type bit and the length of the edge above it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u8, f64)", into = "(u8, f64)")]
pub struct LeafedChild {
    pub bit: u8,
    pub length: f64,
}

impl LeafedChild {
    pub fn new(bit: u8, length: f64) -> Self {
        LeafedChild { bit, length }
    }
}

impl From<(u8, f64)> for LeafedChild {
    fn from((bit, length): (u8, f64)) -> Self {
        LeafedChild { bit, length }
    }
}

impl From<LeafedChild> for (u8, f64) {
    fn from(c: LeafedChild) -> Self {
        (c.bit, c.length)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum LengthDist {
    Const {
        value: f64,
    },
    Exponential {
        mean: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// `P(ℓ > y) = (scale / y)^alpha` for `y ≥ scale`.
    Pareto {
        scale: f64,
        alpha: f64,
    },
}

impl Default for LengthDist {
    fn default() -> Self {
        LengthDist::Const { value: 1.0 }
    }
}

impl LengthDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LengthDist::Const { value } => value >= 0.0 && value.is_finite(),
            LengthDist::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            LengthDist::Uniform { low, high } => low >= 0.0 && high >= low && high.is_finite(),
            LengthDist::Pareto { scale, alpha } => scale > 0.0 && alpha > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw(format!(
                "invalid length distribution {self:?}"
            )))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LengthDist::Const { value } => value,
            LengthDist::Exponential { mean } => Exp::new(1.0 / mean).unwrap().sample(rng),
            LengthDist::Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            LengthDist::Pareto { scale, alpha } => Pareto::new(scale, alpha).unwrap().sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LengthDist::Const { value } => value,
            LengthDist::Exponential { mean } => mean,
            LengthDist::Uniform { low, high } => 0.5 * (low + high),
            LengthDist::Pareto { scale, alpha } => {
                if alpha > 1.0 {
                    alpha * scale / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Almost-sure upper bound, if any.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            LengthDist::Const { value } => Some(value),
            LengthDist::Uniform { high, .. } => Some(high),
            _ => None,
        }
    }
}

/// `m = E[ν]`, `μ = E[Σ_{type-1 children} ℓ]`, `σ² = Var(ν¹)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafedParams {
    pub m: f64,
    pub mu: f64,
    pub sigma2: f64,
}

pub type LeafedSamplerFn = dyn Fn(&mut SimRng, &mut Vec<LeafedChild>) -> Result<()> + Send + Sync;

#[derive(Clone)]
pub enum LeafedKind {
    Enumerated(Enumerated<LeafedChild>),
    /// Independent geometric numbers of type-1 and type-0 children (means
    /// given), in uniformly random order, with i.i.d. lengths per type.
    Geometric {
        mean_type1: f64,
        type1_length: LengthDist,
        mean_type0: f64,
        type0_length: LengthDist,
    },
    /// Offspring of a type-`x0` vertex in the reduction of a multitype law:
    /// its bush, in depth-first order, with generation gaps as lengths.
    Reduced {
        law: MultitypeLaw,
        x0: TypeCode,
        bush_cap: usize,
    },
    Sampler(Arc<LeafedSamplerFn>),
}

#[derive(Clone)]
pub struct LeafedLaw {
    pub kind: LeafedKind,
    /// Analytic parameters, when known.
    pub declared: Option<LeafedParams>,
}

impl std::fmt::Debug for LeafedLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            LeafedKind::Enumerated(e) => format!("Enumerated({} outcomes)", e.outcomes().len()),
            LeafedKind::Geometric {
                mean_type1,
                mean_type0,
                ..
            } => {
                format!("Geometric(mean_type1={mean_type1}, mean_type0={mean_type0})")
            }
            LeafedKind::Reduced { law, x0, .. } => format!("Reduced({law:?}, x0={x0})"),
            LeafedKind::Sampler(_) => "Sampler(..)".into(),
        };
        f.debug_struct("LeafedLaw")
            .field("kind", &kind)
            .field("declared", &self.declared)
            .finish()
    }
}

pub const DEFAULT_BUSH_CAP: usize = 10_000_000;

impl LeafedLaw {
    pub fn enumerated(outcomes: Vec<(f64, Vec<LeafedChild>)>) -> Result<Self> {
        for (_, c) in &outcomes {
            for ch in c {
                if ch.bit > 1 || !(ch.length >= 0.0) || !ch.length.is_finite() {
                    return Err(Error::InvalidLaw(format!("invalid child {ch:?}")));
                }
            }
        }
        Ok(LeafedLaw {
            kind: LeafedKind::Enumerated(Enumerated::new(outcomes)?),
            declared: None,
        })
    }

    pub fn deterministic(children: Vec<LeafedChild>) -> Result<Self> {
        Self::enumerated(vec![(1.0, children)])
    }

    pub fn geometric(
        mean_type1: f64,
        type1_length: LengthDist,
        mean_type0: f64,
        type0_length: LengthDist,
    ) -> Result<Self> {
        if !(mean_type1 >= 0.0
            && mean_type0 >= 0.0
            && mean_type1.is_finite()
            && mean_type0.is_finite())
        {
            return Err(Error::InvalidLaw(
                "geometric means must be finite and non-negative".into(),
            ));
        }
        type1_length.validate()?;
        type0_length.validate()?;
        Ok(LeafedLaw {
            kind: LeafedKind::Geometric {
                mean_type1,
                type1_length,
                mean_type0,
                type0_length,
            },
            declared: Some(LeafedParams {
                m: mean_type1 + mean_type0,
                mu: mean_type1 * type1_length.mean(),
                sigma2: mean_type1 * (1.0 + mean_type1),
            }),
        })
    }

    /// Critical geometric offspring with unit lengths and no type-0 leaves.
    pub fn critical_geometric() -> Self {
        Self::geometric(1.0, LengthDist::default(), 0.0, LengthDist::default()).unwrap()
    }

    pub fn reduced(law: MultitypeLaw, x0: TypeCode) -> Result<Self> {
        if !law.knows_type(x0) {
            return Err(Error::InvalidLaw(format!("no rule for type {x0}")));
        }
        Ok(LeafedLaw {
            kind: LeafedKind::Reduced {
                law,
                x0,
                bush_cap: DEFAULT_BUSH_CAP,
            },
            declared: None,
        })
    }

    pub fn sampler<F>(f: F) -> Self
    where
        F: Fn(&mut SimRng, &mut Vec<LeafedChild>) -> Result<()> + Send + Sync + 'static,
    {
        LeafedLaw {
            kind: LeafedKind::Sampler(Arc::new(f)),
            declared: None,
        }
    }

    pub fn with_declared(mut self, p: LeafedParams) -> Self {
        self.declared = Some(p);
        self
    }

    pub fn enumerator(&self) -> Option<&Enumerated<LeafedChild>> {
        match &self.kind {
            LeafedKind::Enumerated(e) => Some(e),
            _ => None,
        }
    }

    /// Almost-sure bound on every length, when one is known.
    pub fn length_bound(&self) -> Option<f64> {
        match &self.kind {
            LeafedKind::Enumerated(e) => Some(
                e.outcomes()
                    .iter()
                    .flat_map(|(_, c)| c.iter().map(|x| x.length))
                    .fold(0.0, f64::max),
            ),
            LeafedKind::Geometric {
                type1_length,
                type0_length,
                ..
            } => Some(type1_length.upper_bound()?.max(type0_length.upper_bound()?)),
            _ => None,
        }
    }

    /// True when every tree is infinite almost surely (every outcome has a
    /// type-1 child), as decided from the enumerator.
    pub fn surely_infinite(&self) -> bool {
        match self.enumerator() {
            Some(e) => e
                .outcomes()
                .iter()
                .filter(|(p, _)| *p > 0.0)
                .all(|(_, c)| c.iter().any(|x| x.bit == 1)),
            None => false,
        }
    }

    /// Appends the ordered offspring of one type-1 vertex.
    pub fn sample_into(&self, rng: &mut SimRng, out: &mut Vec<LeafedChild>) -> Result<()> {
        match &self.kind {
            LeafedKind::Enumerated(e) => {
                e.sample_into(rng, out);
                Ok(())
            }
            LeafedKind::Geometric {
                mean_type1,
                type1_length,
                mean_type0,
                type0_length,
            } => {
                let k1 = geometric_count(*mean_type1, rng);
                let k0 = geometric_count(*mean_type0, rng);
                let start = out.len();
                out.extend((0..k1).map(|_| LeafedChild::new(1, 0.0)));
                out.extend((0..k0).map(|_| LeafedChild::new(0, 0.0)));
                if k0 > 0 && k1 > 0 {
                    out[start..].shuffle(rng);
                }
                for c in &mut out[start..] {
                    c.length = if c.bit == 1 {
                        type1_length.sample(rng)
                    } else {
                        type0_length.sample(rng)
                    };
                }
                Ok(())
            }
            LeafedKind::Reduced { law, x0, bush_cap } => {
                let bush = sample_bush(law, *x0, *x0, rng, *bush_cap)?;
                out.extend(
                    bush.types
                        .iter()
                        .zip(&bush.depths)
                        .map(|(&t, &d)| LeafedChild::new((t == *x0) as u8, d as f64)),
                );
                Ok(())
            }
            LeafedKind::Sampler(f) => {
                let start = out.len();
                f(rng, out)?;
                if let Some(c) = out[start..]
                    .iter()
                    .find(|c| c.bit > 1 || !(c.length >= 0.0))
                {
                    return Err(Error::InvalidLaw(format!(
                        "sampler produced invalid child {c:?}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Geometric count on `{0, 1, ...}` with the given mean.
fn geometric_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean == 0.0 {
        0
    } else {
        Geometric::new(1.0 / (1.0 + mean)).unwrap().sample(rng) as usize
    }
}

/// A sampled leafed forest; arrays are indexed by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafedForest {
    pub forest: PlanarForest,
    pub bits: Vec<u8>,
    pub lengths: Vec<f64>,
}

impl LeafedForest {
    pub fn new(forest: PlanarForest, bits: Vec<u8>, lengths: Vec<f64>) -> Result<Self> {
        if bits.len() != forest.len() || lengths.len() != forest.len() {
            return Err(Error::LengthMismatch {
                expected: forest.len(),
                got: bits.len().min(lengths.len()),
            });
        }
        for i in 0..forest.len() {
            let u = NodeId(i);
            if forest.parent(u).is_none() && (bits[i] != 1 || lengths[i] != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "root {i} must have bit 1 and length 0"
                )));
            }
            if bits[i] == 0 && forest.num_children(u) > 0 {
                return Err(Error::InvalidArgument(format!(
                    "type-0 node {i} has children"
                )));
            }
            if bits[i] > 1 {
                return Err(Error::InvalidArgument(format!(
                    "node {i} has type bit {}",
                    bits[i]
                )));
            }
        }
        Ok(LeafedForest {
            forest,
            bits,
            lengths,
        })
    }

    pub fn len(&self) -> usize {
        self.forest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forest.is_empty()
    }

    pub fn heights(&self) -> Vec<f64> {
        weighted_heights(&self.forest, Some(&self.lengths)).expect("validated lengths")
    }

    pub fn write_csv<W: Write>(&self, w: W, extra: Option<(&str, &[usize])>) -> Result<()> {
        let tags: Vec<u64> = self.bits.iter().map(|&b| b as u64).collect();
        crate::tree::write_forest_csv(w, &self.forest, &tags, &self.lengths, extra)
    }
}

pub fn sample_leafed_forest(
    law: &LeafedLaw,
    vertex_budget: usize,
    seed: u64,
) -> Result<LeafedForest> {
    let mut rng = rng::stream(seed, tag::FOREST, 0);
    sample_leafed_with(
        law,
        Stop::Budget(vertex_budget),
        &mut rng,
        SampleOptions::default(),
    )
}

/// The first `n` vertices, in depth-first order, of an infinite i.i.d. forest.
pub fn explore_prefix(law: &LeafedLaw, n: usize, rng: &mut SimRng) -> Result<LeafedForest> {
    sample_leafed_with(law, Stop::Prefix(n), rng, SampleOptions::default())
}

pub fn sample_leafed_with(
    law: &LeafedLaw,
    stop: Stop,
    rng: &mut SimRng,
    options: SampleOptions,
) -> Result<LeafedForest> {
    if let Stop::Budget(0) | Stop::Prefix(0) = stop {
        return Err(Error::InvalidArgument(
            "vertex budget must be positive".into(),
        ));
    }
    if !matches!(stop, Stop::Prefix(_)) && options.max_generation.is_none() && law.surely_infinite()
    {
        return Err(Error::Degenerate("every tree is infinite".into()));
    }
    let mut limits = Limits::new(stop, options.hard_cap);
    limits.max_generation = options.max_generation;
    let grown = grow(
        limits,
        || LeafedChild::new(1, 0.0),
        |c, _, out| {
            if c.bit == 1 {
                law.sample_into(rng, out)
            } else {
                Ok(())
            }
        },
    )?;
    let forest = PlanarForest::from_dfs_parents(&grown.parents)?;
    let bits = grown.marks.iter().map(|c| c.bit).collect();
    let lengths = grown.marks.iter().map(|c| c.length).collect();
    LeafedForest::new(forest, bits, lengths)
}

/// Exploration processes of a leafed forest, indexed by depth-first rank `n`
/// in `F` or `k` in `F¹`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessTrace {
    /// `H^ℓ(n) = h(u(n))`.
    pub h_ell: Vec<f64>,
    /// `H¹(k) = |u¹(k)|`.
    pub h_one: Vec<usize>,
    /// `F¹`-rank of `u(n)`, or of its parent when `u(n)` has type 0.
    pub phi: Vec<usize>,
    /// `F`-rank of `u¹(k)`.
    pub psi: Vec<usize>,
    /// 1-based tree index of `u(n)`.
    pub gamma: Vec<usize>,
    /// Lukasiewicz path of `F¹`.
    pub lukasiewicz: Vec<i64>,
}

pub fn exploration_processes(f: &LeafedForest) -> ProcessTrace {
    let forest = &f.forest;
    let h_ell = f.heights();
    let n = forest.len();
    let mut one_rank = vec![usize::MAX; n];
    let mut phi = Vec::with_capacity(n);
    let mut psi = Vec::new();
    let mut h_one = Vec::new();
    for (rank, &u) in forest.dfs().iter().enumerate() {
        if f.bits[u.0] == 1 {
            one_rank[u.0] = psi.len();
            phi.push(psi.len());
            psi.push(rank);
            h_one.push(forest.generation(u));
        } else {
            let p = forest.parent(u).expect("type-0 vertices are never roots");
            phi.push(one_rank[p.0]);
        }
    }
    // ν¹ counts, indexed by node id, restricted to F¹ in depth-first order
    let ones: Vec<NodeId> = psi.iter().map(|&r| forest.node_at(r)).collect();
    let sub_parents: Vec<Option<usize>> = ones
        .iter()
        .map(|&u| forest.parent(u).map(|p| one_rank[p.0]))
        .collect();
    let sub = PlanarForest::from_dfs_parents(&sub_parents).expect("F¹ inherits depth-first order");
    let counts: Vec<usize> = ones
        .iter()
        .map(|&u| {
            forest
                .children(u)
                .iter()
                .filter(|c| f.bits[c.0] == 1)
                .count()
        })
        .collect();
    let lukasiewicz = lukasiewicz(&sub, &counts).expect("sized").0;
    ProcessTrace {
        h_ell,
        h_one,
        phi,
        psi,
        gamma: forest.gamma(),
        lukasiewicz,
    }
}

impl ProcessTrace {
    /// CSV `n,node_id,H_ell,phi,Gamma`.
    pub fn write_vertex_csv<W: Write>(&self, mut w: W, forest: &PlanarForest) -> Result<()> {
        writeln!(w, "n,node_id,H_ell,phi,Gamma")?;
        for n in 0..self.h_ell.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                n,
                forest.node_at(n).0,
                self.h_ell[n],
                self.phi[n],
                self.gamma[n]
            )?;
        }
        Ok(())
    }

    /// CSV `k,H_one,psi`.
    pub fn write_type1_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,H_one,psi")?;
        for k in 0..self.h_one.len() {
            writeln!(w, "{},{},{}", k, self.h_one[k], self.psi[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamEstimate {
    pub m: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// `E[ν¹]`; one for a critical law.
    pub mean_type1: f64,
    pub se_m: f64,
    pub se_mu: f64,
    pub se_sigma2: f64,
    pub se_mean_type1: f64,
    pub n_samples: usize,
    pub exact: bool,
    /// `critical`, `subcritical` or `supercritical`, judged within 3 standard
    /// errors for Monte Carlo estimates.
    pub regime: String,
    /// `σ² = 0`.
    pub degenerate: bool,
    pub declared: Option<LeafedParams>,
}

#[derive(Clone, Copy, Debug, Default)]
struct OffspringSummary {
    nu: f64,
    nu1: f64,
    mass1: f64,
}

fn summarize(children: &[LeafedChild]) -> OffspringSummary {
    let mut s = OffspringSummary {
        nu: children.len() as f64,
        ..Default::default()
    };
    for c in children.iter().filter(|c| c.bit == 1) {
        s.nu1 += 1.0;
        s.mass1 += c.length;
    }
    s
}

pub fn estimate_params(law: &LeafedLaw, n_samples: usize, seed: u64) -> Result<ParamEstimate> {
    if let Some(e) = law.enumerator() {
        let mean = |f: &dyn Fn(&OffspringSummary) -> f64| e.expect(|c| f(&summarize(c)));
        let m = mean(&|s| s.nu);
        let mean_type1 = mean(&|s| s.nu1);
        let second = mean(&|s| s.nu1 * s.nu1);
        let mu = mean(&|s| s.mass1);
        let sigma2 = (second - mean_type1 * mean_type1).max(0.0);
        return Ok(ParamEstimate {
            m,
            mu,
            sigma2,
            mean_type1,
            se_m: 0.0,
            se_mu: 0.0,
            se_sigma2: 0.0,
            se_mean_type1: 0.0,
            n_samples: 0,
            exact: true,
            regime: regime(mean_type1, 0.0),
            degenerate: sigma2 == 0.0,
            declared: law.declared,
        });
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument(
            "at least two samples are needed".into(),
        ));
    }
    let samples = rng::replicate(seed, tag::PARAMS, n_samples, |_, rng| {
        let mut out = Vec::new();
        law.sample_into(rng, &mut out).map(|_| summarize(&out))
    });
    let mut nu = Moments::default();
    let mut nu1 = Moments::default();
    let mut mass = Moments::default();
    for s in samples {
        let s = s?;
        nu.push(s.nu);
        nu1.push(s.nu1);
        mass.push(s.mass1);
    }
    let sigma2 = nu1.variance();
    Ok(ParamEstimate {
        m: nu.mean,
        mu: mass.mean,
        sigma2,
        mean_type1: nu1.mean,
        se_m: nu.std_error(),
        se_mu: mass.std_error(),
        se_sigma2: nu1.variance_std_error(),
        se_mean_type1: nu1.std_error(),
        n_samples,
        exact: false,
        regime: regime(nu1.mean, nu1.std_error()),
        degenerate: sigma2 == 0.0,
        declared: law.declared,
    })
}

fn regime(mean: f64, se: f64) -> String {
    let tol = (3.0 * se).max(1e-9);
    if (mean - 1.0).abs() <= tol {
        "critical"
    } else if mean < 1.0 {
        "subcritical"
    } else {
        "supercritical"
    }
    .into()
}
