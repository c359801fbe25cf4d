//! Size-biased trees with a distinguished spine, and dual-simulation checks of
//! the many-to-one formulas.
//!
//! A spine tree is observed up to a fixed generation `depth`: spine vertices
//! reproduce under the size-biased law, every other vertex under the
//! original law, and vertices at generation `depth` are not expanded.

use std::borrow::Cow;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::enumerated::Enumerated;
use crate::error::{Error, Result};
use crate::explore::{grow, Limits, Stop};
use crate::leafed::{LeafedChild, LeafedLaw};
use crate::multitype::{MultitypeLaw, TypeCode, TypeWeights, DEFAULT_HARD_CAP};
use crate::rng::{self, tag, SimRng};
use crate::stats::{Moments, ZTest};
use crate::tree::{NodeId, PlanarForest};

/// Default bound on the size-bias ratio for rejection sampling.
pub const DEFAULT_REJECTION_CAP: f64 = 64.0;

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SizeBiasInfo {
    /// `None` when exact reweighting of an enumerator was used.
    pub rejection_cap: Option<f64>,
    /// Accepted proposals whose size-bias ratio exceeded the cap.
    pub cap_violations: u64,
    pub proposals: u64,
}

impl SizeBiasInfo {
    fn merge(&mut self, o: SizeBiasInfo) {
        self.rejection_cap = self.rejection_cap.or(o.rejection_cap);
        self.cap_violations += o.cap_violations;
        self.proposals += o.proposals;
    }
}

#[derive(Clone, Debug)]
pub struct SpineTree {
    pub forest: PlanarForest,
    /// Type bits (monotype) or type codes (multitype), by node id.
    pub types: Vec<TypeCode>,
    pub lengths: Vec<f64>,
    /// `w_0, w_1, ..., w_depth`.
    pub spine: Vec<NodeId>,
    pub size_bias: SizeBiasInfo,
}

impl SpineTree {
    pub fn spine_types(&self) -> Vec<TypeCode> {
        self.spine.iter().map(|w| self.types[w.0]).collect()
    }

    /// CSV `k,node_id,type,ell`.
    pub fn write_spine_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,node_id,type,ell")?;
        for (k, u) in self.spine.iter().enumerate() {
            writeln!(w, "{},{},{},{}", k, u.0, self.types[u.0], self.lengths[u.0])?;
        }
        Ok(())
    }
}

/// Size-biased draw from an enumerated law with weights `f(outcome)`.
fn reweighted<T: Clone, R: Rng + ?Sized>(
    e: &Enumerated<T>,
    f: impl Fn(&[T]) -> f64,
    rng: &mut R,
) -> Option<usize> {
    let w: Vec<f64> = e.outcomes().iter().map(|(p, c)| p * f(c)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &wi) in w.iter().enumerate() {
        if u < wi {
            return Some(i);
        }
        u -= wi;
    }
    w.iter().rposition(|&x| x > 0.0)
}

/// Offspring of a monotype spine vertex under `ζ̂¹(x) ∝ ν¹(x) ζ(x)`.
fn size_biased_monotype(
    law: &LeafedLaw,
    cap: f64,
    rng: &mut SimRng,
    out: &mut Vec<LeafedChild>,
    info: &mut SizeBiasInfo,
) -> Result<()> {
    let ones = |c: &[LeafedChild]| c.iter().filter(|x| x.bit == 1).count() as f64;
    if let Some(e) = law.enumerator() {
        let i = reweighted(e, ones, rng).ok_or_else(|| {
            Error::Degenerate("no outcome has a type-1 child; the spine cannot grow".into())
        })?;
        out.extend_from_slice(&e.outcomes()[i].1);
        return Ok(());
    }
    info.rejection_cap = Some(cap);
    let start = out.len();
    for _ in 0..100_000_000u64 {
        out.truncate(start);
        law.sample_into(rng, out)?;
        info.proposals += 1;
        let k = ones(&out[start..]);
        if k > cap {
            info.cap_violations += 1;
            return Ok(());
        }
        if rng.random::<f64>() * cap < k {
            return Ok(());
        }
    }
    Err(Error::Degenerate(
        "size-biased rejection sampler never accepted".into(),
    ))
}

/// Offspring of a multitype spine vertex under
/// `ζ̂_x(c) ∝ ζ_x(c) Σ_{v ∈ c} b_{ty(v)} / b_x`.
fn size_biased_multitype(
    law: &MultitypeLaw,
    b: &TypeWeights,
    x: TypeCode,
    cap: f64,
    rng: &mut SimRng,
    out: &mut Vec<TypeCode>,
    info: &mut SizeBiasInfo,
) -> Result<()> {
    let bx = b.get(x).ok_or(Error::OutsideTruncation(x))?;
    if !(bx > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "b is not positive at type {x}"
        )));
    }
    let mass = |c: &[TypeCode]| -> Result<f64> {
        c.iter()
            .map(|&t| b.get(t).ok_or(Error::OutsideTruncation(t)))
            .sum::<Result<f64>>()
    };
    if law.has_enumerator() {
        let e: Cow<'_, Enumerated<TypeCode>> = law.enumerate(x)?;
        for (_, c) in e.outcomes() {
            mass(c)?;
        }
        let i = reweighted(&e, |c| mass(c).unwrap_or(0.0), rng).ok_or(Error::ZeroMass(x))?;
        out.extend_from_slice(&e.outcomes()[i].1);
        return Ok(());
    }
    info.rejection_cap = Some(cap);
    let start = out.len();
    for _ in 0..100_000_000u64 {
        out.truncate(start);
        law.sample_into(x, rng, out)?;
        info.proposals += 1;
        let r = mass(&out[start..])? / bx;
        if r > cap {
            info.cap_violations += 1;
            return Ok(());
        }
        if rng.random::<f64>() * cap < r {
            return Ok(());
        }
    }
    Err(Error::ZeroMass(x))
}

/// Index of the next spine vertex among `children`, chosen with probability
/// proportional to `weight`.
fn pick<T>(children: &[T], weight: impl Fn(&T) -> f64, rng: &mut SimRng) -> Option<usize> {
    let total: f64 = children.iter().map(&weight).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, c) in children.iter().enumerate() {
        let w = weight(c);
        if u < w {
            return Some(i);
        }
        u -= w;
    }
    children.iter().rposition(|c| weight(c) > 0.0)
}

#[derive(Clone, Copy, Debug)]
struct Mark<M> {
    mark: M,
    on_spine: bool,
}

pub fn sample_spine_monotype(law: &LeafedLaw, depth: usize, seed: u64) -> Result<SpineTree> {
    let mut rng = rng::stream(seed, tag::SPINE, 0);
    sample_spine_monotype_with(
        law,
        depth,
        &mut rng,
        DEFAULT_REJECTION_CAP,
        DEFAULT_HARD_CAP,
    )
}

pub fn sample_spine_monotype_with(
    law: &LeafedLaw,
    depth: usize,
    rng: &mut SimRng,
    rejection_cap: f64,
    hard_cap: usize,
) -> Result<SpineTree> {
    let mut info = SizeBiasInfo::default();
    let limits = Limits::new(Stop::OneTree, hard_cap).with_max_generation(depth);
    let grown = grow(
        limits,
        || Mark {
            mark: LeafedChild::new(1, 0.0),
            on_spine: true,
        },
        |m: &Mark<LeafedChild>, _, out| {
            if m.mark.bit == 0 {
                return Ok(());
            }
            let mut kids = Vec::new();
            if m.on_spine {
                size_biased_monotype(law, rejection_cap, rng, &mut kids, &mut info)?;
            } else {
                law.sample_into(rng, &mut kids)?;
            }
            let next = if m.on_spine {
                pick(&kids, |c| (c.bit == 1) as u8 as f64, rng)
            } else {
                None
            };
            out.extend(kids.into_iter().enumerate().map(|(i, c)| Mark {
                mark: c,
                on_spine: Some(i) == next,
            }));
            Ok(())
        },
    )?;
    finish(grown, |m| m.bit as TypeCode, |m| m.length, info)
}

pub fn sample_spine_multitype(
    law: &MultitypeLaw,
    b: &TypeWeights,
    x0: TypeCode,
    depth: usize,
    seed: u64,
) -> Result<SpineTree> {
    let mut rng = rng::stream(seed, tag::SPINE, 0);
    sample_spine_multitype_with(
        law,
        b,
        x0,
        depth,
        &mut rng,
        DEFAULT_REJECTION_CAP,
        DEFAULT_HARD_CAP,
    )
}

pub fn sample_spine_multitype_with(
    law: &MultitypeLaw,
    b: &TypeWeights,
    x0: TypeCode,
    depth: usize,
    rng: &mut SimRng,
    rejection_cap: f64,
    hard_cap: usize,
) -> Result<SpineTree> {
    let mut info = SizeBiasInfo::default();
    let limits = Limits::new(Stop::OneTree, hard_cap).with_max_generation(depth);
    let grown = grow(
        limits,
        || Mark {
            mark: x0,
            on_spine: true,
        },
        |m: &Mark<TypeCode>, _, out| {
            let mut kids = Vec::new();
            let next = if m.on_spine {
                size_biased_multitype(law, b, m.mark, rejection_cap, rng, &mut kids, &mut info)?;
                Some(
                    pick(&kids, |&t| b.get(t).unwrap_or(0.0), rng)
                        .ok_or(Error::ZeroMass(m.mark))?,
                )
            } else {
                law.sample_into(m.mark, rng, &mut kids)?;
                None
            };
            out.extend(kids.into_iter().enumerate().map(|(i, t)| Mark {
                mark: t,
                on_spine: Some(i) == next,
            }));
            Ok(())
        },
    )?;
    finish(grown, |&t| t, |_| 1.0, info)
}

fn finish<M: Clone>(
    grown: crate::explore::Grown<Mark<M>>,
    ty: impl Fn(&M) -> TypeCode,
    len: impl Fn(&M) -> f64,
    info: SizeBiasInfo,
) -> Result<SpineTree> {
    let forest = PlanarForest::from_dfs_parents(&grown.parents)?;
    let spine: Vec<NodeId> = grown
        .marks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.on_spine)
        .map(|(i, _)| NodeId(i))
        .collect();
    let mut lengths: Vec<f64> = grown.marks.iter().map(|m| len(&m.mark)).collect();
    lengths[0] = 0.0;
    Ok(SpineTree {
        types: grown.marks.iter().map(|m| ty(&m.mark)).collect(),
        lengths,
        forest,
        spine,
        size_bias: info,
    })
}

/// Lengths `ℓ(w_1), ..., ℓ(w_depth)` along a monotype spine, without growing
/// the rest of the tree.
pub fn spine_lengths(
    law: &LeafedLaw,
    depth: usize,
    rng: &mut SimRng,
    rejection_cap: f64,
    info: &mut SizeBiasInfo,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(depth);
    let mut kids = Vec::new();
    for _ in 0..depth {
        kids.clear();
        size_biased_monotype(law, rejection_cap, rng, &mut kids, info)?;
        let i = pick(&kids, |c| (c.bit == 1) as u8 as f64, rng)
            .ok_or_else(|| Error::Degenerate("spine vertex without type-1 child".into()))?;
        out.push(kids[i].length);
    }
    Ok(out)
}

/// The spine type chain `φ_0 = x0, φ_1, ..., φ_depth`, without growing the
/// rest of the tree.
pub fn spine_chain(
    law: &MultitypeLaw,
    b: &TypeWeights,
    x0: TypeCode,
    depth: usize,
    rng: &mut SimRng,
    rejection_cap: f64,
    info: &mut SizeBiasInfo,
) -> Result<Vec<TypeCode>> {
    let mut chain = Vec::with_capacity(depth + 1);
    chain.push(x0);
    let mut kids = Vec::new();
    let mut x = x0;
    for _ in 0..depth {
        kids.clear();
        size_biased_multitype(law, b, x, rejection_cap, rng, &mut kids, info)?;
        let i = pick(&kids, |&t| b.get(t).unwrap_or(0.0), rng).ok_or(Error::ZeroMass(x))?;
        x = kids[i];
        chain.push(x);
    }
    Ok(chain)
}

#[derive(Clone, Debug, Serialize)]
pub struct ManyToOneReport {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub se: f64,
    pub z: f64,
    pub z_threshold: f64,
    pub pass: bool,
    pub size_bias: SizeBiasInfo,
}

fn mto_report(
    n: usize,
    r: usize,
    lhs: &Moments,
    rhs: &Moments,
    z_threshold: f64,
    info: SizeBiasInfo,
) -> ManyToOneReport {
    let t = ZTest::new(lhs.mean, lhs.std_error(), rhs.mean, rhs.std_error(), 0.0);
    ManyToOneReport {
        n,
        r,
        lhs: lhs.mean,
        lhs_se: lhs.std_error(),
        rhs: rhs.mean,
        rhs_se: rhs.std_error(),
        se: t.se,
        z: t.z,
        z_threshold,
        pass: t.z.abs() < z_threshold,
        size_bias: info,
    }
}

/// Depth-first walk over generation-`n` vertices of one tree, calling `visit`
/// with the path of marks `u_1, ..., u_n`.
fn for_each_path<M: Clone>(
    root: M,
    n: usize,
    hard_cap: usize,
    mut expand: impl FnMut(&M, &mut Vec<M>) -> Result<()>,
    mut visit: impl FnMut(&[M]),
) -> Result<()> {
    let mut stack: Vec<(usize, M)> = vec![(0, root)];
    let mut path: Vec<M> = Vec::new();
    let mut kids = Vec::new();
    let mut explored = 0usize;
    while let Some((g, m)) = stack.pop() {
        explored += 1;
        if explored > hard_cap {
            return Err(Error::HardCap {
                cap: hard_cap,
                explored,
                trees: 0,
            });
        }
        path.truncate(g.saturating_sub(1));
        if g > 0 {
            path.push(m.clone());
        }
        if g == n {
            visit(&path);
            continue;
        }
        kids.clear();
        expand(&m, &mut kids)?;
        stack.extend(kids.drain(..).rev().map(|c| (g + 1, c)));
    }
    Ok(())
}

/// Monotype many-to-one check: `E[Σ_{|u|=n} g(ℓ(u_1), ..., ℓ(u_n))]` over the type-1 tree
/// against `Ê[g(ℓ(w_1), ..., ℓ(w_n))]`.
pub fn verify_many_to_one_monotype<G>(
    law: &LeafedLaw,
    g: G,
    n: usize,
    r: usize,
    seed: u64,
    z_threshold: f64,
) -> Result<ManyToOneReport>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let lhs = rng::replicate(seed, tag::MTO_FOREST, r, |_, rng| {
        let mut acc = 0.0;
        for_each_path(
            0.0f64,
            n,
            DEFAULT_HARD_CAP,
            |_, out| {
                let mut kids = Vec::new();
                law.sample_into(rng, &mut kids)?;
                out.extend(kids.iter().filter(|c| c.bit == 1).map(|c| c.length));
                Ok(())
            },
            |path| acc += g(path),
        )?;
        Ok(acc)
    });
    let rhs = rng::replicate(seed, tag::MTO_SPINE, r, |_, rng| {
        let mut info = SizeBiasInfo::default();
        let ls = spine_lengths(law, n, rng, DEFAULT_REJECTION_CAP, &mut info)?;
        Ok((g(&ls), info))
    });
    let (l, rr, info) = collect(lhs, rhs)?;
    Ok(mto_report(n, r, &l, &rr, z_threshold, info))
}

/// Multitype many-to-one check: `E_{x0}[Σ_{|u|=n} g(ty(u_1), ..., ty(u_n))]` against
/// `b_{x0} Ê_{x0}[g(φ_1, ..., φ_n) / b_{φ_n}]`.
#[allow(clippy::too_many_arguments)]
pub fn verify_many_to_one_multitype<G>(
    law: &MultitypeLaw,
    b: &TypeWeights,
    x0: TypeCode,
    g: G,
    n: usize,
    r: usize,
    seed: u64,
    z_threshold: f64,
) -> Result<ManyToOneReport>
where
    G: Fn(&[TypeCode]) -> f64 + Sync,
{
    let bx0 = b.get(x0).ok_or(Error::OutsideTruncation(x0))?;
    let lhs = rng::replicate(seed, tag::MTO_FOREST, r, |_, rng| {
        let mut acc = 0.0;
        for_each_path(
            x0,
            n,
            DEFAULT_HARD_CAP,
            |&t, out| law.sample_into(t, rng, out),
            |path| acc += g(path),
        )?;
        Ok(acc)
    });
    let rhs = rng::replicate(seed, tag::MTO_SPINE, r, |_, rng| {
        let mut info = SizeBiasInfo::default();
        let chain = spine_chain(law, b, x0, n, rng, DEFAULT_REJECTION_CAP, &mut info)?;
        let last = *chain.last().unwrap();
        let bl = b.get(last).ok_or(Error::OutsideTruncation(last))?;
        Ok((bx0 * g(&chain[1..]) / bl, info))
    });
    let (l, rr, info) = collect(lhs, rhs)?;
    Ok(mto_report(n, r, &l, &rr, z_threshold, info))
}

fn collect(
    lhs: Vec<Result<f64>>,
    rhs: Vec<Result<(f64, SizeBiasInfo)>>,
) -> Result<(Moments, Moments, SizeBiasInfo)> {
    let mut l = Moments::default();
    for v in lhs {
        l.push(v?);
    }
    let mut r = Moments::default();
    let mut info = SizeBiasInfo::default();
    for v in rhs {
        let (x, i) = v?;
        r.push(x);
        info.merge(i);
    }
    Ok((l, r, info))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(bit: u8, l: f64) -> LeafedChild {
        LeafedChild::new(bit, l)
    }

    #[test]
    fn zero_or_two_law_always_doubles_on_spine() {
        let law =
            LeafedLaw::enumerated(vec![(0.5, vec![]), (0.5, vec![c(1, 1.0), c(1, 1.0)])]).unwrap();
        let t = sample_spine_monotype(&law, 30, 1).unwrap();
        assert_eq!(t.spine.len(), 31);
        for w in &t.spine[..30] {
            assert_eq!(t.forest.num_children(*w), 2);
        }
        for k in 1..t.spine.len() {
            assert_eq!(t.forest.parent(t.spine[k]), Some(t.spine[k - 1]));
        }
        assert!(t.size_bias.rejection_cap.is_none());
    }

    #[test]
    fn trivial_spines() {
        let chain = LeafedLaw::deterministic(vec![c(1, 2.0)]).unwrap();
        let t = sample_spine_monotype(&chain, 5, 0).unwrap();
        assert_eq!(t.forest.len(), 6);
        assert_eq!(t.lengths, vec![0.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        let t = sample_spine_monotype(&chain, 0, 0).unwrap();
        assert_eq!(t.spine, vec![NodeId(0)]);
    }

    #[test]
    fn permutation_spine_alternates() {
        let law = MultitypeLaw::deterministic(vec![(0, vec![1]), (1, vec![0])]).unwrap();
        let t = sample_spine_multitype(&law, &TypeWeights::Unit, 0, 7, 0).unwrap();
        assert_eq!(t.spine_types(), vec![0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn zero_mass_is_reported() {
        let law = MultitypeLaw::deterministic(vec![(0, vec![])]).unwrap();
        let err = sample_spine_multitype(&law, &TypeWeights::Unit, 0, 3, 0).unwrap_err();
        assert!(matches!(err, Error::ZeroMass(0)));
    }

    #[test]
    fn spine_survives_long() {
        let t = sample_spine_monotype(&LeafedLaw::critical_geometric(), 1000, 5).unwrap();
        assert_eq!(t.spine.len(), 1001);
        assert_eq!(t.size_bias.rejection_cap, Some(DEFAULT_REJECTION_CAP));
        assert_eq!(t.size_bias.cap_violations, 0);
    }

    #[test]
    fn many_to_one_geometric() {
        let law = LeafedLaw::critical_geometric();
        let r = verify_many_to_one_monotype(&law, |_| 1.0, 4, 20_000, 3, 3.0).unwrap();
        assert_eq!(r.rhs, 1.0);
        assert!(r.pass, "{r:?}");
    }
}
