//! Depth-first growth of random forests.
//!
//! Vertices are generated in lexicographic order: a vertex draws its
//! offspring when it is visited and the children are pushed on a stack in
//! reverse, so the arena index of every vertex equals its depth-first rank.
//! The offspring law is independent of the visiting order, so this yields the
//! same law as the generation-by-generation construction.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    /// Keep adding whole trees until at least this many vertices exist.
    Budget(usize),
    /// Stop after exactly this many vertices; the last tree may be cut.
    Prefix(usize),
    /// A single complete tree.
    OneTree,
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub stop: Stop,
    pub hard_cap: usize,
    /// Vertices at this generation are not expanded.
    pub max_generation: Option<usize>,
}

impl Limits {
    pub fn new(stop: Stop, hard_cap: usize) -> Self {
        Limits {
            stop,
            hard_cap,
            max_generation: None,
        }
    }

    pub fn with_max_generation(mut self, g: usize) -> Self {
        self.max_generation = Some(g);
        self
    }
}

#[derive(Clone, Debug)]
pub struct Grown<C> {
    pub parents: Vec<Option<usize>>,
    pub generations: Vec<usize>,
    pub marks: Vec<C>,
    pub complete_trees: usize,
}

/// Grows a forest. `root()` gives the mark of each new root; `expand(mark,
/// generation, out)` appends the ordered offspring marks of a visited vertex.
pub fn grow<C, R, F>(limits: Limits, mut root: R, mut expand: F) -> Result<Grown<C>>
where
    C: Clone,
    R: FnMut() -> C,
    F: FnMut(&C, usize, &mut Vec<C>) -> Result<()>,
{
    let mut parents = Vec::new();
    let mut generations = Vec::new();
    let mut marks = Vec::new();
    let mut complete_trees = 0;
    let mut stack: Vec<(usize, usize, C)> = Vec::new();
    let mut scratch = Vec::new();

    loop {
        if stack.is_empty() {
            if !parents.is_empty() {
                complete_trees += 1;
            }
            let done = match limits.stop {
                Stop::Budget(b) => parents.len() >= b,
                Stop::Prefix(n) => parents.len() >= n,
                Stop::OneTree => !parents.is_empty(),
            };
            if done {
                break;
            }
            stack.push((usize::MAX, 0, root()));
        }
        if let Stop::Prefix(n) = limits.stop {
            if parents.len() >= n {
                break;
            }
        }
        if parents.len() >= limits.hard_cap {
            return Err(Error::HardCap {
                cap: limits.hard_cap,
                explored: parents.len(),
                trees: complete_trees,
            });
        }
        let (parent, generation, mark) = stack.pop().unwrap();
        let me = parents.len();
        parents.push((parent != usize::MAX).then_some(parent));
        generations.push(generation);
        if limits.max_generation.is_none_or(|g| generation < g) {
            scratch.clear();
            expand(&mark, generation, &mut scratch)?;
            for c in scratch.drain(..).rev() {
                stack.push((me, generation + 1, c));
            }
        }
        marks.push(mark);
    }
    Ok(Grown {
        parents,
        generations,
        marks,
        complete_trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_completes_last_tree() {
        // every root has exactly two leaf children
        let g = grow(
            Limits::new(Stop::Budget(4), 100),
            || 1u8,
            |m, _, out| {
                if *m == 1 {
                    out.extend([0u8, 0u8]);
                }
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(
            g.parents,
            vec![None, Some(0), Some(0), None, Some(3), Some(3)]
        );
        assert_eq!(g.complete_trees, 2);
    }

    #[test]
    fn prefix_cuts_and_cap_errors() {
        let chain = |_: &u8, _: usize, out: &mut Vec<u8>| {
            out.push(1u8);
            Ok(())
        };
        let g = grow(Limits::new(Stop::Prefix(5), 100), || 1u8, chain).unwrap();
        assert_eq!(g.generations, vec![0, 1, 2, 3, 4]);
        let err = grow(Limits::new(Stop::OneTree, 50), || 1u8, chain).unwrap_err();
        assert!(matches!(
            err,
            Error::HardCap {
                cap: 50,
                explored: 50,
                trees: 0
            }
        ));
        let cut = grow(
            Limits::new(Stop::OneTree, 50).with_max_generation(3),
            || 1u8,
            chain,
        )
        .unwrap();
        assert_eq!(cut.generations, vec![0, 1, 2, 3]);
    }
}
