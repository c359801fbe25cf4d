//! Planar rooted forests in Ulam-Harris order.
//!
//! A [`PlanarForest`] is an immutable arena. Children keep the order in which
//! they were born, which is the only tie-break used by depth-first
//! (lexicographic) numbering. Everything downstream indexes vertices by their
//! depth-first rank `n`, so `u(n)` is `forest.node_at(n)`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Input record for [`PlanarForest::build`]: node `i` of the slice is
/// `NodeId(i)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeRecord {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanarForest {
    parent: Vec<Option<NodeId>>,
    tree_index: Vec<usize>,
    child_offsets: Vec<usize>,
    child_list: Vec<NodeId>,
    dfs: Vec<NodeId>,
    rank: Vec<usize>,
    generation: Vec<usize>,
    roots: Vec<NodeId>,
}

impl PlanarForest {
    /// Builds a forest from explicit parent/children records. Roots are the
    /// records without a parent, taken in slice order.
    pub fn build(records: &[NodeRecord]) -> Result<Self> {
        let n = records.len();
        let mut seen_as_child = vec![false; n];
        for (i, rec) in records.iter().enumerate() {
            if let Some(p) = rec.parent {
                if p.0 >= n {
                    return Err(Error::UnknownNode(p.0));
                }
                if !records[p.0].children.contains(&NodeId(i)) {
                    return Err(Error::Orphan {
                        node: i,
                        parent: p.0,
                    });
                }
            }
            for &c in &rec.children {
                if c.0 >= n {
                    return Err(Error::UnknownNode(c.0));
                }
                if seen_as_child[c.0] {
                    return Err(Error::DuplicateChild { child: c.0 });
                }
                seen_as_child[c.0] = true;
                if records[c.0].parent != Some(NodeId(i)) {
                    return Err(Error::Orphan {
                        node: c.0,
                        parent: i,
                    });
                }
            }
        }

        let mut child_offsets = Vec::with_capacity(n + 1);
        let mut child_list = Vec::new();
        child_offsets.push(0);
        for rec in records {
            child_list.extend_from_slice(&rec.children);
            child_offsets.push(child_list.len());
        }
        let parent: Vec<Option<NodeId>> = records.iter().map(|r| r.parent).collect();
        let roots: Vec<NodeId> = (0..n)
            .filter(|&i| parent[i].is_none())
            .map(NodeId)
            .collect();

        let mut forest = PlanarForest {
            parent,
            tree_index: vec![0; n],
            child_offsets,
            child_list,
            dfs: Vec::with_capacity(n),
            rank: vec![usize::MAX; n],
            generation: vec![0; n],
            roots,
        };
        forest.number_depth_first();
        if forest.dfs.len() != n {
            let stray = (0..n).find(|&i| forest.rank[i] == usize::MAX).unwrap_or(0);
            return Err(Error::Cycle(stray));
        }
        Ok(forest)
    }

    /// Builds a forest whose nodes are listed in depth-first order, so that
    /// `NodeId(i)` has rank `i`. `parents[i]` must be an ancestor-chain member
    /// of node `i - 1` (or `None` to start a new tree).
    pub fn from_dfs_parents(parents: &[Option<usize>]) -> Result<Self> {
        let n = parents.len();
        let mut stack: Vec<usize> = Vec::new();
        let mut generation = vec![0usize; n];
        let mut tree_index = vec![0usize; n];
        let mut roots = Vec::new();
        let mut counts = vec![0usize; n + 1];
        for (i, p) in parents.iter().enumerate() {
            match *p {
                None => {
                    stack.clear();
                    roots.push(NodeId(i));
                    tree_index[i] = roots.len();
                }
                Some(p) => {
                    if p >= i {
                        return Err(Error::NotDepthFirst(i));
                    }
                    while let Some(&top) = stack.last() {
                        if top == p {
                            break;
                        }
                        stack.pop();
                    }
                    if stack.is_empty() {
                        return Err(Error::NotDepthFirst(i));
                    }
                    generation[i] = generation[p] + 1;
                    tree_index[i] = tree_index[p];
                    counts[p + 1] += 1;
                }
            }
            stack.push(i);
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let child_offsets = counts;
        let mut fill = child_offsets.clone();
        let mut child_list = vec![NodeId(0); child_offsets[n]];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                child_list[fill[p]] = NodeId(i);
                fill[p] += 1;
            }
        }
        Ok(PlanarForest {
            parent: parents.iter().map(|p| p.map(NodeId)).collect(),
            tree_index,
            child_offsets,
            child_list,
            dfs: (0..n).map(NodeId).collect(),
            rank: (0..n).collect(),
            generation,
            roots,
        })
    }

    fn number_depth_first(&mut self) {
        let mut stack: Vec<NodeId> = Vec::new();
        for (t, &root) in self.roots.iter().enumerate() {
            stack.push(root);
            self.generation[root.0] = 0;
            while let Some(u) = stack.pop() {
                self.rank[u.0] = self.dfs.len();
                self.dfs.push(u);
                self.tree_index[u.0] = t + 1;
                let (lo, hi) = (self.child_offsets[u.0], self.child_offsets[u.0 + 1]);
                for &c in self.child_list[lo..hi].iter().rev() {
                    self.generation[c.0] = self.generation[u.0] + 1;
                    stack.push(c);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn num_trees(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn parent(&self, u: NodeId) -> Option<NodeId> {
        self.parent[u.0]
    }

    pub fn children(&self, u: NodeId) -> &[NodeId] {
        &self.child_list[self.child_offsets[u.0]..self.child_offsets[u.0 + 1]]
    }

    pub fn num_children(&self, u: NodeId) -> usize {
        self.child_offsets[u.0 + 1] - self.child_offsets[u.0]
    }

    /// `|u|`, roots at generation 0.
    pub fn generation(&self, u: NodeId) -> usize {
        self.generation[u.0]
    }

    /// 1-based index of the tree containing `u`.
    pub fn tree_index(&self, u: NodeId) -> usize {
        self.tree_index[u.0]
    }

    /// Nodes in depth-first order: `dfs()[n] = u(n)`.
    pub fn dfs(&self) -> &[NodeId] {
        &self.dfs
    }

    pub fn node_at(&self, rank: usize) -> NodeId {
        self.dfs[rank]
    }

    pub fn rank(&self, u: NodeId) -> usize {
        self.rank[u.0]
    }

    /// Generations indexed by depth-first rank.
    pub fn generations(&self) -> Vec<usize> {
        self.dfs.iter().map(|&u| self.generation[u.0]).collect()
    }

    /// `Γ_n`: tree index of `u(n)` for every rank `n`.
    pub fn gamma(&self) -> Vec<usize> {
        self.dfs.iter().map(|&u| self.tree_index[u.0]).collect()
    }

    pub fn max_generation(&self) -> usize {
        self.generation.iter().copied().max().unwrap_or(0)
    }

    /// `u ⊢ v`: `u` is a strict ancestor of `v`.
    pub fn is_strict_ancestor(&self, u: NodeId, v: NodeId) -> bool {
        let mut w = self.parent[v.0];
        while let Some(x) = w {
            if x == u {
                return true;
            }
            w = self.parent[x.0];
        }
        false
    }

    /// Ancestors `u_0, ..., u_{|u|}` of `u`, root first, `u` last.
    pub fn ancestry(&self, u: NodeId) -> Vec<NodeId> {
        let mut path = vec![u];
        let mut w = self.parent[u.0];
        while let Some(x) = w {
            path.push(x);
            w = self.parent[x.0];
        }
        path.reverse();
        path
    }

    /// Depth-first listing of the subtree rooted at `u` (inclusive).
    pub fn subtree(&self, u: NodeId) -> &[NodeId] {
        let start = self.rank[u.0];
        let g = self.generation[u.0];
        let tree = self.tree_index[u.0];
        let end = (start + 1..self.dfs.len())
            .find(|&r| {
                let v = self.dfs[r];
                self.tree_index[v.0] != tree || self.generation[v.0] <= g
            })
            .unwrap_or(self.dfs.len());
        &self.dfs[start..end]
    }

    /// Per-node records equivalent to this forest, for round-tripping through
    /// [`PlanarForest::build`].
    pub fn records(&self) -> Vec<NodeRecord> {
        (0..self.len())
            .map(|i| NodeRecord {
                parent: self.parent[i],
                children: self.children(NodeId(i)).to_vec(),
            })
            .collect()
    }
}

/// `h(u(n))` for every rank `n`. With `lengths` absent every edge has length
/// one and the result is the generation array.
pub fn weighted_heights(forest: &PlanarForest, lengths: Option<&[f64]>) -> Result<Vec<f64>> {
    let Some(lengths) = lengths else {
        return Ok(forest.generations().into_iter().map(|g| g as f64).collect());
    };
    if lengths.len() != forest.len() {
        return Err(Error::LengthMismatch {
            expected: forest.len(),
            got: lengths.len(),
        });
    }
    let mut height = vec![0.0; forest.len()];
    let mut out = Vec::with_capacity(forest.len());
    for &u in forest.dfs() {
        if let Some(p) = forest.parent(u) {
            let l = lengths[u.0];
            if !(l >= 0.0) {
                return Err(Error::MissingLength(u));
            }
            height[u.0] = height[p.0] + l;
        }
        out.push(height[u.0]);
    }
    Ok(out)
}

/// `S_0 = 0`, `S_{k+1} = S_k + ν(u(k)) - 1` along depth-first order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LukasiewiczPath(pub Vec<i64>);

impl LukasiewiczPath {
    pub fn steps(&self) -> &[i64] {
        &self.0
    }

    /// Ranks `k ≤ n` with `S_k = min_{k≤l≤n} S_l`, i.e. the ancestors of
    /// `u(n)` (together with `u(n)` itself).
    pub fn running_minimum_ranks(&self, n: usize) -> Vec<usize> {
        let s = &self.0;
        let mut out = Vec::new();
        let mut min = i64::MAX;
        for k in (0..=n).rev() {
            if s[k] <= min {
                min = s[k];
                out.push(k);
            }
        }
        out.reverse();
        out
    }
}

pub fn lukasiewicz(forest: &PlanarForest, child_count: &[usize]) -> Result<LukasiewiczPath> {
    if child_count.len() != forest.len() {
        return Err(Error::LengthMismatch {
            expected: forest.len(),
            got: child_count.len(),
        });
    }
    let mut s = Vec::with_capacity(forest.len() + 1);
    let mut acc = 0i64;
    s.push(acc);
    for &u in forest.dfs() {
        acc += child_count[u.0] as i64 - 1;
        s.push(acc);
    }
    Ok(LukasiewiczPath(s))
}

/// Lukasiewicz path using the forest's own child counts.
pub fn lukasiewicz_of(forest: &PlanarForest) -> LukasiewiczPath {
    let counts: Vec<usize> = (0..forest.len())
        .map(|i| forest.num_children(NodeId(i)))
        .collect();
    lukasiewicz(forest, &counts).expect("counts sized to forest")
}

pub const FOREST_CSV_HEADER: &str = "node_id,parent_id,tree_index,type_tag,length";

/// Writes the forest as CSV with columns
/// `node_id,parent_id,tree_index,type_tag,length[,extra]`, one row per node in
/// node-id order. Roots have an empty `parent_id`.
pub fn write_forest_csv<W: Write>(
    mut w: W,
    forest: &PlanarForest,
    type_tags: &[u64],
    lengths: &[f64],
    extra: Option<(&str, &[usize])>,
) -> Result<()> {
    if type_tags.len() != forest.len() || lengths.len() != forest.len() {
        return Err(Error::LengthMismatch {
            expected: forest.len(),
            got: type_tags.len().min(lengths.len()),
        });
    }
    match extra {
        Some((name, _)) => writeln!(w, "{FOREST_CSV_HEADER},{name}")?,
        None => writeln!(w, "{FOREST_CSV_HEADER}")?,
    }
    for i in 0..forest.len() {
        let u = NodeId(i);
        let parent = forest
            .parent(u)
            .map(|p| p.0.to_string())
            .unwrap_or_default();
        write!(
            w,
            "{},{},{},{},{}",
            i,
            parent,
            forest.tree_index(u),
            type_tags[i],
            lengths[i]
        )?;
        if let Some((_, col)) = extra {
            write!(w, ",{}", col[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parsed contents of a forest CSV.
#[derive(Clone, Debug)]
pub struct ForestTable {
    pub forest: PlanarForest,
    pub type_tags: Vec<u64>,
    pub lengths: Vec<f64>,
}

/// Reads the CSV written by [`write_forest_csv`]. Children are ordered by
/// node id, which is the order the writer uses for sampled forests.
pub fn read_forest_csv<R: BufRead>(r: R) -> Result<ForestTable> {
    let bad =
        |line: usize, what: &str| Error::InvalidArgument(format!("forest CSV line {line}: {what}"));
    let mut parents: Vec<Option<usize>> = Vec::new();
    let mut type_tags = Vec::new();
    let mut lengths = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if !line.starts_with(FOREST_CSV_HEADER) {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(bad(lineno + 1, "too few columns"));
        }
        let id: usize = cols[0].parse().map_err(|_| bad(lineno + 1, "node_id"))?;
        if id != parents.len() {
            return Err(bad(lineno + 1, "node ids must be consecutive from 0"));
        }
        let parent = if cols[1].is_empty() {
            None
        } else {
            Some(cols[1].parse().map_err(|_| bad(lineno + 1, "parent_id"))?)
        };
        parents.push(parent);
        type_tags.push(cols[3].parse().map_err(|_| bad(lineno + 1, "type_tag"))?);
        lengths.push(cols[4].parse().map_err(|_| bad(lineno + 1, "length"))?);
    }
    let n = parents.len();
    let mut records = vec![NodeRecord::default(); n];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= n {
                return Err(Error::UnknownNode(p));
            }
            records[i].parent = Some(NodeId(p));
            records[p].children.push(NodeId(i));
        }
    }
    Ok(ForestTable {
        forest: PlanarForest::build(&records)?,
        type_tags,
        lengths,
    })
}
