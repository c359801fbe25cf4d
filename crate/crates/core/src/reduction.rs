//! Reduction of a multitype tree to a leafed tree with edge lengths.
//!
//! Fix the root type `x0`. Each type-`x0` vertex `u` of `𝕋` becomes a type-1
//! vertex of `T` whose children are the vertices of its bush `𝓑_u^{x0}`:
//! the descendants of `u` with no type-`x0` vertex strictly in between. A
//! child gets bit 1 when it has type `x0` and the length of its edge is its
//! generation gap to `u`. The construction preserves depth-first order, so
//! weighted heights in `T` equal generations in `𝕋`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::leafed::{LeafedForest, LeafedParams};
use crate::multitype::{MultitypeForest, MultitypeLaw, TypeCode};
use crate::rng::SimRng;
use crate::tree::{weighted_heights, NodeId, PlanarForest};

/// `(𝓑_u^y, 𝓛_u^y)` in depth-first order.
pub fn optional_line(
    tree: &MultitypeForest,
    u: NodeId,
    y: TypeCode,
) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
    let forest = &tree.forest;
    if u.0 >= forest.len() {
        return Err(Error::UnknownNode(u.0));
    }
    let mut bush = Vec::new();
    let mut line = Vec::new();
    let mut stack: Vec<NodeId> = forest.children(u).iter().rev().copied().collect();
    while let Some(v) = stack.pop() {
        bush.push(v);
        if tree.types[v.0] == y {
            line.push(v);
        } else {
            stack.extend(forest.children(v).iter().rev());
        }
    }
    Ok((bush, line))
}

/// A reduced forest. Node ids of `leafed` are depth-first ranks, which are
/// also the ranks of the corresponding vertices of `𝕋`.
#[derive(Clone, Debug)]
pub struct ReducedTree {
    pub leafed: LeafedForest,
    /// `correspondence[v]` is the `𝕋` vertex behind `T` vertex `v`.
    pub correspondence: Option<Vec<NodeId>>,
    pub x0: TypeCode,
}

pub fn reduce(tree: &MultitypeForest) -> Result<ReducedTree> {
    reduce_with(tree, true)
}

/// One depth-first pass keeping the stack of type-`x0` ancestors.
pub fn reduce_with(tree: &MultitypeForest, keep_correspondence: bool) -> Result<ReducedTree> {
    let forest = &tree.forest;
    let x0 = tree.x0;
    let n = forest.len();
    let mut parents = Vec::with_capacity(n);
    let mut bits = Vec::with_capacity(n);
    let mut lengths = Vec::with_capacity(n);
    // (generation, T rank) of type-x0 ancestors on the current path
    let mut anchors: Vec<(usize, usize)> = Vec::new();
    for (rank, &v) in forest.dfs().iter().enumerate() {
        let g = forest.generation(v);
        let ty = tree.types[v.0];
        while anchors.last().is_some_and(|&(ga, _)| ga >= g) {
            anchors.pop();
        }
        match anchors.last() {
            None => {
                if ty != x0 {
                    return Err(Error::RootType { root: ty, x0 });
                }
                parents.push(None);
                bits.push(1);
                lengths.push(0.0);
            }
            Some(&(ga, pr)) => {
                parents.push(Some(pr));
                bits.push((ty == x0) as u8);
                lengths.push((g - ga) as f64);
            }
        }
        if ty == x0 {
            anchors.push((g, rank));
        }
    }
    let t = PlanarForest::from_dfs_parents(&parents)?;
    Ok(ReducedTree {
        leafed: LeafedForest::new(t, bits, lengths)?,
        correspondence: keep_correspondence.then(|| forest.dfs().to_vec()),
        x0,
    })
}

/// Reduces each component tree separately, in parallel.
pub fn reduce_components(f: &MultitypeForest) -> Result<Vec<ReducedTree>> {
    f.components().par_iter().map(reduce).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Prop1Check {
    pub holds: bool,
    pub checked: usize,
    pub first_mismatch: Option<usize>,
}

/// Checks `H^ℓ(n) = |u_𝕋(n)|` at every rank, with no tolerance.
pub fn verify_prop1(tree: &MultitypeForest) -> Result<Prop1Check> {
    let reduced = reduce_with(tree, false)?;
    verify_reduced(tree, &reduced.leafed)
}

/// Compares the heights of a given leafed forest with the generations of
/// `𝕋`, rank by rank.
pub fn verify_reduced(tree: &MultitypeForest, leafed: &LeafedForest) -> Result<Prop1Check> {
    if leafed.len() != tree.forest.len() {
        return Ok(Prop1Check {
            holds: false,
            checked: 0,
            first_mismatch: Some(leafed.len().min(tree.forest.len())),
        });
    }
    let h = weighted_heights(&leafed.forest, Some(&leafed.lengths))?;
    let first_mismatch = tree
        .forest
        .dfs()
        .iter()
        .zip(&h)
        .position(|(&u, &hl)| hl != tree.forest.generation(u) as f64);
    Ok(Prop1Check {
        holds: first_mismatch.is_none(),
        checked: h.len(),
        first_mismatch,
    })
}

/// `m = 1/a_{x0}`, `μ = 1/(a_{x0} b_{x0})`, `σ² = η²/(a_{x0} b_{x0}²)`.
pub fn reduced_params(a_x0: f64, b_x0: f64, eta2: f64) -> Result<LeafedParams> {
    if !(a_x0 > 0.0 && b_x0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "a_x0 = {a_x0} and b_x0 = {b_x0} must be positive"
        )));
    }
    if !(eta2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta^2 = {eta2} must be non-negative"
        )));
    }
    Ok(LeafedParams {
        m: 1.0 / a_x0,
        mu: 1.0 / (a_x0 * b_x0),
        sigma2: eta2 / (a_x0 * b_x0 * b_x0),
    })
}

/// The bush `𝓑^y` below a fresh vertex of type `x`, in depth-first order.
#[derive(Clone, Debug, Default)]
pub struct Bush {
    pub types: Vec<TypeCode>,
    /// Generation below the starting vertex.
    pub depths: Vec<usize>,
}

impl Bush {
    /// `N^y = #𝓑^y`.
    pub fn size(&self) -> usize {
        self.types.len()
    }

    /// `Z^y = #𝓛^y`, given the stopping type.
    pub fn line_size(&self, y: TypeCode) -> usize {
        self.types.iter().filter(|&&t| t == y).count()
    }
}

/// Samples the offspring of a type-`x` vertex and explores downwards,
/// stopping at type-`y` vertices.
pub fn sample_bush(
    law: &MultitypeLaw,
    x: TypeCode,
    y: TypeCode,
    rng: &mut SimRng,
    cap: usize,
) -> Result<Bush> {
    let mut bush = Bush::default();
    let mut scratch = Vec::new();
    law.sample_into(x, rng, &mut scratch)?;
    let mut stack: Vec<(TypeCode, usize)> = scratch.drain(..).rev().map(|t| (t, 1)).collect();
    while let Some((t, d)) = stack.pop() {
        if bush.types.len() >= cap {
            return Err(Error::HardCap {
                cap,
                explored: bush.types.len(),
                trees: 0,
            });
        }
        bush.types.push(t);
        bush.depths.push(d);
        if t != y {
            law.sample_into(t, rng, &mut scratch)?;
            stack.extend(scratch.drain(..).rev().map(|c| (c, d + 1)));
        }
    }
    Ok(bush)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: TypeCode = 0;
    const B: TypeCode = 1;

    fn typed(parents: &[Option<usize>], types: &[TypeCode]) -> MultitypeForest {
        let f = PlanarForest::from_dfs_parents(parents).unwrap();
        MultitypeForest::new(f, types.to_vec(), types[0]).unwrap()
    }

    #[test]
    fn four_node_example() {
        // root(A) with v1(B), v2(A); v1 has v3(A); dfs root, v1, v3, v2
        let t = typed(&[None, Some(0), Some(1), Some(0)], &[A, B, A, A]);
        let r = reduce(&t).unwrap();
        let f = &r.leafed;
        assert_eq!(
            f.forest.children(NodeId(0)),
            &[NodeId(1), NodeId(2), NodeId(3)]
        );
        assert_eq!(f.bits, vec![1, 0, 1, 1]);
        assert_eq!(f.lengths, vec![0.0, 1.0, 2.0, 1.0]);
        assert_eq!(f.heights(), vec![0.0, 1.0, 2.0, 1.0]);
        assert!(verify_prop1(&t).unwrap().holds);
    }

    #[test]
    fn single_root_and_no_x0_below() {
        let t = typed(&[None], &[A]);
        assert_eq!(reduce(&t).unwrap().leafed.len(), 1);
        // root(A) -> v(B) -> w(B), root -> z(B)
        let t = typed(&[None, Some(0), Some(1), Some(0)], &[A, B, B, B]);
        let r = reduce(&t).unwrap();
        assert_eq!(r.leafed.forest.max_generation(), 1);
        assert_eq!(r.leafed.bits, vec![1, 0, 0, 0]);
        assert_eq!(r.leafed.lengths, vec![0.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn optional_lines() {
        // chain root(A) -> v(B) -> w(A)
        let t = typed(&[None, Some(0), Some(1)], &[A, B, A]);
        let (b, l) = optional_line(&t, NodeId(0), A).unwrap();
        assert_eq!(b, vec![NodeId(1), NodeId(2)]);
        assert_eq!(l, vec![NodeId(2)]);
        let (b, l) = optional_line(&t, NodeId(2), A).unwrap();
        assert!(b.is_empty() && l.is_empty());
        let t = typed(&[None, Some(0), Some(0)], &[A, B, B]);
        let (b, l) = optional_line(&t, NodeId(0), B).unwrap();
        assert_eq!(b, l);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn wrong_root_type() {
        let f = PlanarForest::from_dfs_parents(&[None, Some(0)]).unwrap();
        let t = MultitypeForest::new(f, vec![B, A], A).unwrap();
        assert!(matches!(
            reduce(&t),
            Err(Error::RootType { root: B, x0: A })
        ));
    }

    #[test]
    fn corruption_is_detected() {
        let t = typed(&[None, Some(0), Some(1), Some(0)], &[A, B, A, A]);
        let r = reduce(&t).unwrap();
        // swap the first two children of the root in T
        let mut records = r.leafed.forest.records();
        records[0].children.swap(0, 1);
        let swapped = PlanarForest::build(&records).unwrap();
        let bad =
            LeafedForest::new(swapped, r.leafed.bits.clone(), r.leafed.lengths.clone()).unwrap();
        let c = verify_reduced(&t, &bad).unwrap();
        assert!(!c.holds);
        assert_eq!(c.first_mismatch, Some(1));
    }

    #[test]
    fn params_mapping() {
        let p = reduced_params(1.0, 1.0, 0.7).unwrap();
        assert_eq!((p.m, p.mu, p.sigma2), (1.0, 1.0, 0.7));
        let (a, b, eta2) = (1.0 / 3.0, 0.626, 0.078);
        let p = reduced_params(a, b, eta2).unwrap();
        assert!((p.sigma2 * a * b * b / eta2 - 1.0).abs() < 1e-15);
        assert!(reduced_params(0.0, 1.0, 1.0).is_err());
        assert!(reduced_params(1.0, 1.0, -1.0).is_err());
    }
}
