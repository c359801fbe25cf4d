//! Truncated mean-matrix analysis: Perron vectors `a` and `b`, the
//! second-moment constant `η²`, the spine kernel `p` and exact expectations
//! along the spine chain.
//!
//! The countable type space is finitized to `K` types reachable from `x0`.
//! Expected offspring mass that falls outside the retained set is tracked per
//! row as `leak` and carried through every quantity built on top.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use super::{MultitypeForest, MultitypeLaw, TypeCode};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::stats::jackknife_mean_se;

pub const EIGEN_TOL: f64 = 1e-12;
pub const EIGEN_MAX_ITER: usize = 100_000;
/// Tolerance on `|λ - 1|` before a criticality warning is attached.
pub const CRITICALITY_TOL: f64 = 1e-6;
/// Minimum Monte Carlo sample count per type for spectral use.
pub const MIN_MC_SAMPLES: usize = 1_000;

/// Retained types, sorted ascending, with a reverse index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeSet {
    types: Vec<TypeCode>,
    #[serde(skip)]
    index: HashMap<TypeCode, usize>,
}

impl TypeSet {
    pub fn new(mut types: Vec<TypeCode>) -> Self {
        types.sort_unstable();
        types.dedup();
        let index = types.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        TypeSet { types, index }
    }

    /// The first `k` types met by a breadth-first search from `x0` over the
    /// offspring support. Exact laws use their enumerator; sampler-only laws
    /// discover the support from `samples` draws per type.
    pub fn reachable(
        law: &MultitypeLaw,
        x0: TypeCode,
        k: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let mut seen = vec![x0];
        let mut queue = VecDeque::from([x0]);
        let mut known: std::collections::HashSet<TypeCode> = [x0].into();
        while let Some(x) = queue.pop_front() {
            if seen.len() >= k {
                break;
            }
            let mut successors: Vec<TypeCode> = Vec::new();
            if law.has_enumerator() {
                for (p, kids) in law.enumerate(x)?.outcomes() {
                    if *p > 0.0 {
                        successors.extend_from_slice(kids);
                    }
                }
            } else {
                let mut r = rng::stream(seed, tag::SUPPORT, x);
                for _ in 0..samples {
                    law.sample_into(x, &mut r, &mut successors)?;
                }
            }
            successors.sort_unstable();
            successors.dedup();
            for y in successors {
                if seen.len() >= k {
                    break;
                }
                if known.insert(y) {
                    seen.push(y);
                    queue.push_back(y);
                }
            }
        }
        Ok(TypeSet::new(seen))
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[TypeCode] {
        &self.types
    }

    pub fn index_of(&self, t: TypeCode) -> Option<usize> {
        self.index.get(&t).copied()
    }

    pub fn type_at(&self, i: usize) -> TypeCode {
        self.types[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeanMatrixMode {
    Exact,
    MonteCarlo { n_samples: usize },
}

/// `M_K[x][y] = E_x[ν^y]` on the retained types.
#[derive(Clone, Debug, Serialize)]
pub struct MeanMatrix {
    pub types: TypeSet,
    pub m: Vec<Vec<f64>>,
    /// Expected number of children per row whose type is not retained.
    pub leak: Vec<f64>,
    /// Standard errors of the entries (Monte Carlo mode only).
    pub std_errors: Option<Vec<Vec<f64>>>,
}

impl MeanMatrix {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, x: TypeCode, y: TypeCode) -> Option<f64> {
        Some(self.m[self.types.index_of(x)?][self.types.index_of(y)?])
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.m.iter().enumerate() {
            out[i] = row.iter().zip(v).map(|(m, x)| m * x).sum();
        }
    }

    fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &vi) in self.m.iter().zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(row) {
                *o += vi * m;
            }
        }
    }

    /// Strong connectivity of the support digraph; on failure names a pair
    /// of types that do not communicate.
    pub fn check_irreducible(&self) -> Result<()> {
        let k = self.len();
        let reach = |forward: bool| {
            let mut seen = vec![false; k];
            seen[0] = true;
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                for j in 0..k {
                    let edge = if forward { self.m[i][j] } else { self.m[j][i] };
                    if edge > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        };
        if let Some(j) = reach(true).iter().position(|s| !s) {
            return Err(Error::Reducible(
                self.types.type_at(0),
                self.types.type_at(j),
            ));
        }
        if let Some(j) = reach(false).iter().position(|s| !s) {
            return Err(Error::Reducible(
                self.types.type_at(j),
                self.types.type_at(0),
            ));
        }
        Ok(())
    }
}

pub fn mean_matrix(
    law: &MultitypeLaw,
    x0: TypeCode,
    k: usize,
    mode: MeanMatrixMode,
    seed: u64,
) -> Result<MeanMatrix> {
    let samples = match mode {
        MeanMatrixMode::Exact => 0,
        MeanMatrixMode::MonteCarlo { n_samples } => n_samples,
    };
    let types = TypeSet::reachable(law, x0, k, samples, seed)?;
    mean_matrix_on(law, types, mode, seed)
}

pub fn mean_matrix_on(
    law: &MultitypeLaw,
    types: TypeSet,
    mode: MeanMatrixMode,
    seed: u64,
) -> Result<MeanMatrix> {
    let k = types.len();
    let mut m = vec![vec![0.0; k]; k];
    let mut leak = vec![0.0; k];
    match mode {
        MeanMatrixMode::Exact => {
            for i in 0..k {
                let law_x = law.enumerate(types.type_at(i))?;
                for (p, kids) in law_x.outcomes() {
                    for y in kids {
                        match types.index_of(*y) {
                            Some(j) => m[i][j] += p,
                            None => leak[i] += p,
                        }
                    }
                }
            }
            Ok(MeanMatrix {
                types,
                m,
                leak,
                std_errors: None,
            })
        }
        MeanMatrixMode::MonteCarlo { n_samples } => {
            if n_samples < MIN_MC_SAMPLES {
                return Err(Error::InvalidArgument(format!(
                    "Monte Carlo mean matrix needs at least {MIN_MC_SAMPLES} samples per type, got {n_samples}"
                )));
            }
            // one stream per retained type; rows are independent
            let rows = rng::replicate(seed, tag::MEAN_MATRIX, k, |i, r| -> Result<_> {
                let x = types.type_at(i);
                let mut sum = vec![0.0; k];
                let mut sum_sq = vec![0.0; k];
                let mut out_mass = 0.0;
                let mut kids = Vec::new();
                let mut counts = vec![0.0; k];
                for _ in 0..n_samples {
                    kids.clear();
                    law.sample_into(x, r, &mut kids)?;
                    for y in &kids {
                        match types.index_of(*y) {
                            Some(j) => counts[j] += 1.0,
                            None => out_mass += 1.0,
                        }
                    }
                    for j in 0..k {
                        if counts[j] != 0.0 {
                            sum[j] += counts[j];
                            sum_sq[j] += counts[j] * counts[j];
                            counts[j] = 0.0;
                        }
                    }
                }
                let n = n_samples as f64;
                let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
                let se: Vec<f64> = sum_sq
                    .iter()
                    .zip(&mean)
                    .map(|(sq, mu)| ((sq / n - mu * mu).max(0.0) * n / (n - 1.0) / n).sqrt())
                    .collect();
                Ok((mean, se, out_mass / n))
            });
            let mut se = Vec::with_capacity(k);
            for (i, row) in rows.into_iter().enumerate() {
                let (mean, row_se, l) = row?;
                m[i] = mean;
                se.push(row_se);
                leak[i] = l;
            }
            Ok(MeanMatrix {
                types,
                m,
                leak,
                std_errors: Some(se),
            })
        }
    }
}

/// Left and right Perron vectors normalized so that `Σ a = 1` and
/// `Σ a_x b_x = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `‖aᵀM - λaᵀ‖∞ / ‖a‖∞`.
    pub residual_left: f64,
    /// `‖Mb - λb‖∞ / ‖b‖∞`.
    pub residual_right: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Power iteration on the lazy matrix `(M + I)/2`, which shares the Perron
/// vectors of `M` and is aperiodic whenever `M` is irreducible.
fn power_iterate<F>(k: usize, apply: F) -> Result<(f64, Vec<f64>, f64, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut v = vec![1.0; k];
    let mut w = vec![0.0; k];
    let mut residual = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        apply(&v, &mut w);
        let lambda = w.iter().sum::<f64>() / v.iter().sum::<f64>();
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).abs())
            .fold(0.0, f64::max);
        if residual <= EIGEN_TOL {
            return Ok((lambda, v, residual, it));
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = 0.5 * (*vi + wi);
        }
        let norm = v.iter().fold(0.0, |a: f64, &x| a.max(x.abs()));
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Err(Error::NoConvergence {
        iterations: EIGEN_MAX_ITER,
        residual,
    })
}

pub fn solve_eigenvectors(m: &MeanMatrix) -> Result<Eigenpair> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("empty mean matrix".into()));
    }
    m.check_irreducible()?;
    let k = m.len();
    let (lambda_r, mut b, res_r, it_r) = power_iterate(k, |v, out| m.apply(v, out))?;
    let (lambda_l, mut a, res_l, it_l) = power_iterate(k, |v, out| m.apply_transpose(v, out))?;

    let sa: f64 = a.iter().sum();
    a.iter_mut().for_each(|x| *x /= sa);
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    b.iter_mut().for_each(|x| *x /= sab);

    let mut warnings = Vec::new();
    let eigenvalue = 0.5 * (lambda_r + lambda_l);
    if (lambda_r - lambda_l).abs() > 1e-9 {
        warnings.push(format!(
            "left/right eigenvalue estimates differ: {lambda_l} vs {lambda_r}"
        ));
    }
    if (eigenvalue - 1.0).abs() > CRITICALITY_TOL {
        warnings.push(format!(
            "dominant eigenvalue {eigenvalue} is not 1: law is not critical"
        ));
    }
    if a.iter().chain(&b).any(|&x| x <= 0.0) {
        warnings.push("Perron vector has non-positive entries (underflow); reduce K".into());
    }
    Ok(Eigenpair {
        eigenvalue,
        a,
        b,
        residual_left: res_l,
        residual_right: res_r,
        iterations: it_r.max(it_l),
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Eta2 {
    pub value: f64,
    pub std_error: f64,
    /// `Σ_x a_x P_x(some child falls outside the retained types)`.
    pub leak: f64,
    pub degenerate: bool,
}

/// `η² = Σ_x a_x Σ_{y,z} b_y Q^x_{y,z} b_z`. Since
/// `Σ_{y,z} b_y Q^x_{y,z} b_z = E_x[(Σ_u b_{ty(u)})² - Σ_u b_{ty(u)}²]`,
/// each type contributes the expectation of a single offspring functional.
pub fn eta_squared(
    law: &MultitypeLaw,
    m: &MeanMatrix,
    a: &[f64],
    b: &[f64],
    mode: MeanMatrixMode,
    seed: u64,
) -> Result<Eta2> {
    let types = &m.types;
    let k = types.len();
    if a.len() != k || b.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: a.len().min(b.len()),
        });
    }
    // returns (value, escaped) for one offspring sequence
    let functional = |kids: &[TypeCode]| -> (f64, bool) {
        let mut s = 0.0;
        let mut s2 = 0.0;
        let mut escaped = false;
        for y in kids {
            match types.index_of(*y) {
                Some(j) => {
                    s += b[j];
                    s2 += b[j] * b[j];
                }
                None => escaped = true,
            }
        }
        (s * s - s2, escaped)
    };
    let (value, std_error, leak) = match mode {
        MeanMatrixMode::Exact => {
            let mut total = 0.0;
            let mut leak = 0.0;
            for i in 0..k {
                let law_x = law.enumerate(types.type_at(i))?;
                for (p, kids) in law_x.outcomes() {
                    let (v, escaped) = functional(kids);
                    total += a[i] * p * v;
                    if escaped {
                        leak += a[i] * p;
                    }
                }
            }
            (total, 0.0, leak)
        }
        MeanMatrixMode::MonteCarlo { n_samples } => {
            if n_samples < MIN_MC_SAMPLES {
                return Err(Error::InvalidArgument(format!(
                    "Monte Carlo eta^2 needs at least {MIN_MC_SAMPLES} samples per type"
                )));
            }
            let rows = rng::replicate(seed, tag::ETA, k, |i, r| -> Result<(f64, f64, f64)> {
                let x = types.type_at(i);
                let mut kids = Vec::new();
                let mut values = Vec::with_capacity(n_samples);
                let mut escaped = 0usize;
                for _ in 0..n_samples {
                    kids.clear();
                    law.sample_into(x, r, &mut kids)?;
                    let (v, e) = functional(&kids);
                    values.push(v);
                    escaped += e as usize;
                }
                let (mean, se) = jackknife_mean_se(&values);
                Ok((mean, se, escaped as f64 / n_samples as f64))
            });
            let mut total = 0.0;
            let mut var = 0.0;
            let mut leak = 0.0;
            for (i, row) in rows.into_iter().enumerate() {
                let (mean, se, esc) = row?;
                total += a[i] * mean;
                var += a[i] * a[i] * se * se;
                leak += a[i] * esc;
            }
            (total, var.sqrt(), leak)
        }
    };
    if value < -1e-9 {
        return Err(Error::NegativeEta2(value));
    }
    let value = value.max(0.0);
    Ok(Eta2 {
        value,
        std_error,
        leak,
        degenerate: value <= 1e-15,
    })
}

/// Transition kernel of the spine types, `p_{x,y} = b_y m_{x,y} / b_x`, with
/// invariant measure `π_x = a_x b_x`.
#[derive(Clone, Debug, Serialize)]
pub struct SpineKernel {
    pub types: TypeSet,
    pub p: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// `1 - Σ_y p_{x,y}` per row.
    pub leak: Vec<f64>,
    /// `‖πp - π‖∞`.
    pub pi_residual: f64,
}

impl SpineKernel {
    pub fn get(&self, x: TypeCode, y: TypeCode) -> Option<f64> {
        Some(self.p[self.types.index_of(x)?][self.types.index_of(y)?])
    }

    pub fn max_leak(&self) -> f64 {
        self.leak.iter().fold(0.0, |a: f64, &l| a.max(l.abs()))
    }

    /// A kernel given directly by its rows (e.g. the identity, for testing).
    pub fn from_rows(types: TypeSet, p: Vec<Vec<f64>>, pi: Vec<f64>) -> Self {
        let leak = p.iter().map(|row| 1.0 - row.iter().sum::<f64>()).collect();
        let pi_residual = pi_residual(&p, &pi);
        SpineKernel {
            types,
            p,
            pi,
            leak,
            pi_residual,
        }
    }
}

fn pi_residual(p: &[Vec<f64>], pi: &[f64]) -> f64 {
    let k = pi.len();
    let mut pp = vec![0.0; k];
    for (row, &w) in p.iter().zip(pi) {
        for (o, x) in pp.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    pp.iter()
        .zip(pi)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn spine_kernel(m: &MeanMatrix, a: &[f64], b: &[f64]) -> Result<SpineKernel> {
    let k = m.len();
    if a.len() != k || b.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: a.len().min(b.len()),
        });
    }
    if let Some(i) = b.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "b is not positive at type {}",
            m.types.type_at(i)
        )));
    }
    let p: Vec<Vec<f64>> = (0..k)
        .map(|x| (0..k).map(|y| b[y] * m.m[x][y] / b[x]).collect())
        .collect();
    let pi: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    Ok(SpineKernel::from_rows(m.types.clone(), p, pi))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZnExact {
    pub value: f64,
    /// Probability mass of the spine chain lost through the truncation.
    pub leak: f64,
}

pub const DEFAULT_CHAIN_LEAK: f64 = 1e-9;

/// `E_{x0}[Z_n] = b_{x0} Σ_y (pⁿ)_{x0,y} / b_y`.
pub fn expected_zn_exact(
    kernel: &SpineKernel,
    b: &[f64],
    x0: TypeCode,
    n: usize,
    leak_threshold: f64,
) -> Result<ZnExact> {
    let k = kernel.types.len();
    let start = kernel
        .types
        .index_of(x0)
        .ok_or(Error::OutsideTruncation(x0))?;
    let mut v = vec![0.0; k];
    v[start] = 1.0;
    let mut next = vec![0.0; k];
    for _ in 0..n {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (row, &w) in kernel.p.iter().zip(&v) {
            if w == 0.0 {
                continue;
            }
            for (o, p) in next.iter_mut().zip(row) {
                *o += w * p;
            }
        }
        std::mem::swap(&mut v, &mut next);
    }
    let mass: f64 = v.iter().sum();
    let leak = (1.0 - mass).max(0.0);
    if leak > leak_threshold {
        return Err(Error::TruncationLeak {
            leak,
            threshold: leak_threshold,
        });
    }
    let value = b[start] * v.iter().zip(b).map(|(w, bi)| w / bi).sum::<f64>();
    Ok(ZnExact { value, leak })
}

pub type WeightFn = dyn Fn(TypeCode) -> Option<f64> + Send + Sync;

/// Weights per type, e.g. the right eigenvector `b` or the unit weights.
#[derive(Clone)]
pub enum TypeWeights {
    Unit,
    Table(HashMap<TypeCode, f64>),
    /// Weights known in closed form on the whole type space.
    Function(Arc<WeightFn>),
}

impl std::fmt::Debug for TypeWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TypeWeights::Unit => f.write_str("Unit"),
            TypeWeights::Table(t) => f.debug_tuple("Table").field(&t.len()).finish(),
            TypeWeights::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl TypeWeights {
    pub fn from_vectors(types: &TypeSet, values: &[f64]) -> Self {
        TypeWeights::Table(
            types
                .types()
                .iter()
                .copied()
                .zip(values.iter().copied())
                .collect(),
        )
    }

    pub fn get(&self, t: TypeCode) -> Option<f64> {
        match self {
            TypeWeights::Unit => Some(1.0),
            TypeWeights::Table(m) => m.get(&t).copied(),
            TypeWeights::Function(f) => f(t),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleTrace {
    /// `W_0, W_1, ...` for each component tree.
    pub per_tree: Vec<Vec<f64>>,
    /// Types occurring in the forest but absent from the weights.
    pub missing_types: Vec<TypeCode>,
}

/// `W_n = Σ_{|u|=n} b_{ty(u)}` per component tree.
pub fn additive_martingale(f: &MultitypeForest, weights: &TypeWeights) -> MartingaleTrace {
    let forest = &f.forest;
    let mut per_tree: Vec<Vec<f64>> = vec![Vec::new(); forest.num_trees()];
    let mut missing = std::collections::BTreeSet::new();
    for &u in forest.dfs() {
        let w = match weights.get(f.types[u.0]) {
            Some(w) => w,
            None => {
                missing.insert(f.types[u.0]);
                0.0
            }
        };
        let row = &mut per_tree[forest.tree_index(u) - 1];
        let g = forest.generation(u);
        if row.len() <= g {
            row.resize(g + 1, 0.0);
        }
        row[g] += w;
    }
    MartingaleTrace {
        per_tree,
        missing_types: missing.into_iter().collect(),
    }
}

/// Everything spectral about a law, as exported to JSON.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    #[serde(rename = "K")]
    pub k: usize,
    pub x0: TypeCode,
    pub types: Vec<TypeCode>,
    pub eigenvalue: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta2: f64,
    pub eta2_std_error: f64,
    pub eta2_leak: f64,
    pub leak: Vec<f64>,
    pub kernel_leak: Vec<f64>,
    pub residuals: Residuals,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub mean: MeanMatrix,
    #[serde(skip)]
    pub kernel: SpineKernel,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residuals {
    pub left: f64,
    pub right: f64,
    pub pi: f64,
}

impl SpectralData {
    pub fn a_of(&self, t: TypeCode) -> Option<f64> {
        self.mean.types.index_of(t).map(|i| self.a[i])
    }

    pub fn b_of(&self, t: TypeCode) -> Option<f64> {
        self.mean.types.index_of(t).map(|i| self.b[i])
    }

    pub fn b_weights(&self) -> TypeWeights {
        TypeWeights::from_vectors(&self.mean.types, &self.b)
    }
}

pub fn spectral_data(
    law: &MultitypeLaw,
    x0: TypeCode,
    k: usize,
    mode: MeanMatrixMode,
    seed: u64,
) -> Result<SpectralData> {
    let mean = mean_matrix(law, x0, k, mode, seed)?;
    let eig = solve_eigenvectors(&mean)?;
    let eta = eta_squared(law, &mean, &eig.a, &eig.b, mode, seed)?;
    let kernel = spine_kernel(&mean, &eig.a, &eig.b)?;
    let mut warnings = eig.warnings.clone();
    if eta.degenerate {
        warnings.push("eta^2 = 0: degenerate offspring variance".into());
    }
    Ok(SpectralData {
        k: mean.len(),
        x0,
        types: mean.types.types().to_vec(),
        eigenvalue: eig.eigenvalue,
        a: eig.a,
        b: eig.b,
        pi: kernel.pi.clone(),
        eta2: eta.value,
        eta2_std_error: eta.std_error,
        eta2_leak: eta.leak,
        leak: mean.leak.clone(),
        kernel_leak: kernel.leak.clone(),
        residuals: Residuals {
            left: eig.residual_left,
            right: eig.residual_right,
            pi: kernel.pi_residual,
        },
        warnings,
        mean,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminations::closed_forms;

    fn swap_law() -> MultitypeLaw {
        MultitypeLaw::deterministic(vec![(0, vec![1]), (1, vec![0])]).unwrap()
    }

    #[test]
    fn permutation_law() {
        let m = mean_matrix(&swap_law(), 0, 2, MeanMatrixMode::Exact, 0).unwrap();
        assert_eq!(m.m, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let e = solve_eigenvectors(&m).unwrap();
        assert_eq!(e.a, vec![0.5, 0.5]);
        assert_eq!(e.b, vec![1.0, 1.0]);
        assert!(e.warnings.is_empty());
        let k = spine_kernel(&m, &e.a, &e.b).unwrap();
        assert_eq!(k.p, m.m);
        let eta = eta_squared(&swap_law(), &m, &e.a, &e.b, MeanMatrixMode::Exact, 0).unwrap();
        assert_eq!(eta.value, 0.0);
        assert!(eta.degenerate);
    }

    #[test]
    fn reducible_matrix_is_an_error() {
        let law = MultitypeLaw::deterministic(vec![(0, vec![0, 1]), (1, vec![1])]).unwrap();
        let m = mean_matrix(&law, 0, 2, MeanMatrixMode::Exact, 0).unwrap();
        let err = solve_eigenvectors(&m).unwrap_err();
        assert!(err.to_string().starts_with("mean matrix not irreducible"));
    }

    #[test]
    fn supercritical_law_warns() {
        let law = MultitypeLaw::deterministic(vec![(0, vec![1, 1]), (1, vec![0])]).unwrap();
        let m = mean_matrix(&law, 0, 2, MeanMatrixMode::Exact, 0).unwrap();
        let e = solve_eigenvectors(&m).unwrap();
        assert!((e.eigenvalue - 2f64.sqrt()).abs() < 1e-10);
        assert!(!e.warnings.is_empty());
    }

    #[test]
    fn mc_mode_refuses_small_samples() {
        let err = mean_matrix(
            &MultitypeLaw::Lamination,
            4,
            5,
            MeanMatrixMode::MonteCarlo { n_samples: 999 },
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn lamination_rows_and_truncation() {
        let m = mean_matrix(&MultitypeLaw::Lamination, 4, 10, MeanMatrixMode::Exact, 0).unwrap();
        assert_eq!(m.types.types(), &(4..14).collect::<Vec<_>>()[..]);
        for i in 4..14u64 {
            for j in 4..14u64 {
                let want = if j <= i + 1 {
                    2.0 / (i as f64 + 1.0)
                } else {
                    0.0
                };
                assert!((m.get(i, j).unwrap() - want).abs() < 1e-15, "m[{i}][{j}]");
            }
        }
        // type 13 loses its type-14 child
        assert!((m.leak[9] - 2.0 / 14.0).abs() < 1e-15);
        assert!(m.leak[..9].iter().all(|&l| l == 0.0));
    }

    #[test]
    fn lamination_kernel_matches_formula() {
        let s = spectral_data(&MultitypeLaw::Lamination, 4, 60, MeanMatrixMode::Exact, 0).unwrap();
        for i in 4..40u64 {
            for j in 4..40u64 {
                let want = if j <= i + 1 {
                    2.0 * (j as f64 - 2.0) / ((i as f64 - 2.0) * (i as f64 + 1.0))
                } else {
                    0.0
                };
                assert!((s.kernel.get(i, j).unwrap() - want).abs() < 1e-9);
            }
        }
        for i in 4..20u64 {
            let cf = closed_forms(i).unwrap();
            assert!((s.pi[(i - 4) as usize] - cf.pi).abs() < 1e-9);
        }
        assert!(s.residuals.pi < 1e-12);
    }

    #[test]
    fn zn_exact_small_cases() {
        let s = spectral_data(&MultitypeLaw::Lamination, 4, 60, MeanMatrixMode::Exact, 0).unwrap();
        let z0 = expected_zn_exact(&s.kernel, &s.b, 4, 0, DEFAULT_CHAIN_LEAK).unwrap();
        assert_eq!(z0.value, 1.0);
        let z1 = expected_zn_exact(&s.kernel, &s.b, 4, 1, DEFAULT_CHAIN_LEAK).unwrap();
        assert!((z1.value - 0.8).abs() < 1e-12);
        // K too small for the horizon
        let small = spectral_data(&MultitypeLaw::Lamination, 4, 6, MeanMatrixMode::Exact, 0);
        if let Ok(small) = small {
            let err = expected_zn_exact(&small.kernel, &small.b, 4, 40, DEFAULT_CHAIN_LEAK);
            assert!(matches!(err, Err(Error::TruncationLeak { .. })));
        }
    }

    #[test]
    fn martingale_on_permutation_law() {
        // the swap law never dies; cap the depth
        let mut r = rng::stream(0, tag::FOREST, 0);
        let f = super::super::sample_multitype_with(
            &swap_law(),
            0,
            crate::explore::Stop::OneTree,
            &mut r,
            super::super::SampleOptions {
                max_generation: Some(6),
                hard_cap: 100,
            },
        )
        .unwrap();
        let w = additive_martingale(&f, &TypeWeights::Unit);
        assert_eq!(w.per_tree, vec![vec![1.0; 7]]);
        let single = MultitypeForest::new(
            crate::tree::PlanarForest::from_dfs_parents(&[None]).unwrap(),
            vec![4],
            4,
        )
        .unwrap();
        let tw = TypeWeights::Table([(4, 0.25)].into());
        assert_eq!(additive_martingale(&single, &tw).per_tree, vec![vec![0.25]]);
        let none = TypeWeights::Table(HashMap::new());
        assert_eq!(additive_martingale(&single, &none).missing_types, vec![4]);
    }
}
