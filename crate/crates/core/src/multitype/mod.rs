//! Multitype Galton-Watson forests over a countable type space.
//!
//! Types are encoded as non-negative integers. A law gives, for each type, a
//! sampler for the ordered offspring type sequence and, when available, an
//! exact enumeration of that sequence's distribution.

mod drift;
mod spectral;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

pub use drift::{drift_check, DriftReport, DriftRow, DRIFT_LEAK_TOL};
pub use spectral::{
    additive_martingale, eta_squared, expected_zn_exact, mean_matrix, mean_matrix_on,
    solve_eigenvectors, spectral_data, spine_kernel, Eigenpair, Eta2, MartingaleTrace, MeanMatrix,
    MeanMatrixMode, Residuals, SpectralData, SpineKernel, TypeSet, TypeWeights, WeightFn, ZnExact,
    CRITICALITY_TOL, DEFAULT_CHAIN_LEAK, EIGEN_MAX_ITER, EIGEN_TOL, MIN_MC_SAMPLES,
};

use crate::enumerated::Enumerated;
use crate::error::{Error, Result};
use crate::explore::{grow, Limits, Stop};
use crate::laminations;
use crate::rng::{self, SimRng};
use crate::tree::PlanarForest;

pub type TypeCode = u64;

pub type SamplerFn = dyn Fn(TypeCode, &mut SimRng, &mut Vec<TypeCode>) -> Result<()> + Send + Sync;

#[derive(Clone)]
pub enum MultitypeLaw {
    /// Explicit per-type outcome tables.
    Rules(BTreeMap<TypeCode, Enumerated<TypeCode>>),
    /// The disk-lamination law on types `4, 5, ...`.
    Lamination,
    /// Sampler only; exact computations are unavailable.
    Sampler(Arc<SamplerFn>),
}

impl fmt::Debug for MultitypeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultitypeLaw::Rules(r) => f
                .debug_tuple("Rules")
                .field(&r.keys().collect::<Vec<_>>())
                .finish(),
            MultitypeLaw::Lamination => f.write_str("Lamination"),
            MultitypeLaw::Sampler(_) => f.write_str("Sampler(..)"),
        }
    }
}

impl MultitypeLaw {
    pub fn rules(rules: Vec<(TypeCode, Vec<(f64, Vec<TypeCode>)>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (x, outcomes) in rules {
            if map.insert(x, Enumerated::new(outcomes)?).is_some() {
                return Err(Error::InvalidLaw(format!("type {x} has two rules")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidLaw("no rules".into()));
        }
        Ok(MultitypeLaw::Rules(map))
    }

    /// Each type produces the given sequence with probability one.
    pub fn deterministic(rules: Vec<(TypeCode, Vec<TypeCode>)>) -> Result<Self> {
        Self::rules(
            rules
                .into_iter()
                .map(|(x, c)| (x, vec![(1.0, c)]))
                .collect(),
        )
    }

    pub fn sampler<F>(f: F) -> Self
    where
        F: Fn(TypeCode, &mut SimRng, &mut Vec<TypeCode>) -> Result<()> + Send + Sync + 'static,
    {
        MultitypeLaw::Sampler(Arc::new(f))
    }

    pub fn has_enumerator(&self) -> bool {
        !matches!(self, MultitypeLaw::Sampler(_))
    }

    pub fn knows_type(&self, x: TypeCode) -> bool {
        match self {
            MultitypeLaw::Rules(r) => r.contains_key(&x),
            MultitypeLaw::Lamination => x >= laminations::MIN_TYPE,
            MultitypeLaw::Sampler(_) => true,
        }
    }

    /// Appends the offspring types of one vertex of type `x`.
    pub fn sample_into(
        &self,
        x: TypeCode,
        rng: &mut SimRng,
        out: &mut Vec<TypeCode>,
    ) -> Result<()> {
        match self {
            MultitypeLaw::Rules(r) => {
                r.get(&x)
                    .ok_or_else(|| Error::InvalidLaw(format!("no rule for type {x}")))?
                    .sample_into(rng, out);
                Ok(())
            }
            MultitypeLaw::Lamination => {
                if x < laminations::MIN_TYPE {
                    return Err(Error::InvalidLaw(format!("lamination type {x} < 4")));
                }
                let split = rng.random_range(0..=x);
                laminations::children_for_split(x, split, out);
                Ok(())
            }
            MultitypeLaw::Sampler(f) => f(x, rng, out),
        }
    }

    /// True when every tree rooted at `x0` is infinite, as decided from the
    /// enumerator: no reachable type can have zero children. Sampler-only
    /// laws and type spaces too large to scan are not decided.
    pub fn surely_infinite(&self, x0: TypeCode) -> Result<bool> {
        if !self.has_enumerator() {
            return Ok(false);
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut todo = vec![x0];
        while let Some(x) = todo.pop() {
            if !seen.insert(x) {
                continue;
            }
            if seen.len() > 10_000 {
                return Ok(false);
            }
            let e = self.enumerate(x)?;
            for (p, c) in e.outcomes() {
                if *p > 0.0 && c.is_empty() {
                    return Ok(false);
                }
                todo.extend(c.iter().copied());
            }
        }
        Ok(true)
    }

    /// Exact offspring distribution of type `x`.
    pub fn enumerate(&self, x: TypeCode) -> Result<Cow<'_, Enumerated<TypeCode>>> {
        match self {
            MultitypeLaw::Rules(r) => r
                .get(&x)
                .map(Cow::Borrowed)
                .ok_or_else(|| Error::InvalidLaw(format!("no rule for type {x}"))),
            MultitypeLaw::Lamination => Ok(Cow::Owned(Enumerated::new(
                laminations::lamination_offspring_enumerate(x)?,
            )?)),
            MultitypeLaw::Sampler(_) => Err(Error::NoEnumerator(x)),
        }
    }
}

/// A sampled multitype forest; node ids coincide with depth-first ranks.
#[derive(Clone, Debug)]
pub struct MultitypeForest {
    pub forest: PlanarForest,
    pub types: Vec<TypeCode>,
    pub x0: TypeCode,
}

impl MultitypeForest {
    pub fn new(forest: PlanarForest, types: Vec<TypeCode>, x0: TypeCode) -> Result<Self> {
        if types.len() != forest.len() {
            return Err(Error::LengthMismatch {
                expected: forest.len(),
                got: types.len(),
            });
        }
        Ok(MultitypeForest { forest, types, x0 })
    }

    /// The component trees as separate forests.
    pub fn components(&self) -> Vec<MultitypeForest> {
        let mut out = Vec::with_capacity(self.forest.num_trees());
        let dfs = self.forest.dfs();
        let mut start = 0;
        while start < dfs.len() {
            let tree = self.forest.tree_index(dfs[start]);
            let mut end = start + 1;
            while end < dfs.len() && self.forest.tree_index(dfs[end]) == tree {
                end += 1;
            }
            let ids = &dfs[start..end];
            let local: std::collections::HashMap<usize, usize> =
                ids.iter().enumerate().map(|(i, u)| (u.0, i)).collect();
            let parents: Vec<Option<usize>> = ids
                .iter()
                .map(|&u| self.forest.parent(u).map(|p| local[&p.0]))
                .collect();
            let types = ids.iter().map(|u| self.types[u.0]).collect();
            let forest =
                PlanarForest::from_dfs_parents(&parents).expect("component of a valid forest");
            out.push(MultitypeForest {
                forest,
                types,
                x0: self.x0,
            });
            start = end;
        }
        out
    }
}

pub const DEFAULT_HARD_CAP: usize = 100_000_000;

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub hard_cap: usize,
    pub max_generation: Option<usize>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            hard_cap: DEFAULT_HARD_CAP,
            max_generation: None,
        }
    }
}

/// I.i.d. trees rooted at type `x0`, explored depth-first until at least
/// `vertex_budget` vertices exist; the last tree is always completed.
pub fn sample_multitype_forest(
    law: &MultitypeLaw,
    x0: TypeCode,
    vertex_budget: usize,
    seed: u64,
) -> Result<MultitypeForest> {
    let mut rng = rng::stream(seed, rng::tag::FOREST, 0);
    sample_multitype_with(
        law,
        x0,
        Stop::Budget(vertex_budget),
        &mut rng,
        SampleOptions::default(),
    )
}

pub fn sample_multitype_with(
    law: &MultitypeLaw,
    x0: TypeCode,
    stop: Stop,
    rng: &mut SimRng,
    options: SampleOptions,
) -> Result<MultitypeForest> {
    if let Stop::Budget(0) | Stop::Prefix(0) = stop {
        return Err(Error::InvalidArgument(
            "vertex budget must be positive".into(),
        ));
    }
    if !law.knows_type(x0) {
        return Err(Error::InvalidLaw(format!("no rule for root type {x0}")));
    }
    if !matches!(stop, Stop::Prefix(_))
        && options.max_generation.is_none()
        && law.surely_infinite(x0)?
    {
        return Err(Error::Degenerate(format!(
            "every tree rooted at type {x0} is infinite"
        )));
    }
    let mut limits = Limits::new(stop, options.hard_cap);
    limits.max_generation = options.max_generation;
    let grown = grow(limits, || x0, |&x, _, out| law.sample_into(x, rng, out))?;
    let forest = PlanarForest::from_dfs_parents(&grown.parents)?;
    MultitypeForest::new(forest, grown.marks, x0)
}
