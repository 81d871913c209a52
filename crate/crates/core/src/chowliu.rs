//! Binary feature statistics and the Chow-Liu dependence tree.
//!
//! Smoothing uses a symmetric pseudo-count `alpha` per outcome of each
//! feature, spread as `alpha / 2` over the four cells of every pairwise
//! table, so the pairwise tables always marginalize back to the per-feature
//! probabilities:
//!
//! ```text
//! p1[q]     = (n_q  + alpha)     / (n + 2 alpha)
//! p11[q, v] = (n_qv + alpha / 2) / (n + 2 alpha)
//! ```

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featurize::FeatureVector;
use crate::scalar::Scalar;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone)]
enum PairTable<S> {
    /// Column-major sample bitsets; joint counts come from popcounts.
    Columns { words: usize, bits: Vec<u64> },
    /// Explicit row-major `p11` matrix.
    Dense(Vec<S>),
}

#[derive(Debug, Clone)]
pub struct FeatureStats<S: Scalar> {
    n_samples: usize,
    alpha: S,
    p1: Vec<S>,
    pairs: PairTable<S>,
}

impl<S: Scalar> FeatureStats<S> {
    /// Statistics given directly as probabilities; `p11` is a full
    /// `n_features x n_features` row-major matrix and must be symmetric.
    pub fn from_probabilities(p1: Vec<S>, p11: Vec<S>) -> Result<Self> {
        let n = p1.len();
        if p11.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                actual: p11.len(),
            });
        }
        for q in 0..n {
            for v in 0..q {
                if p11[q * n + v] != p11[v * n + q] {
                    return Err(Error::Config(format!("p11 not symmetric at ({q}, {v})")));
                }
            }
        }
        Ok(Self {
            n_samples: 0,
            alpha: S::zero(),
            p1,
            pairs: PairTable::Dense(p11),
        })
    }

    pub fn n_features(&self) -> usize {
        self.p1.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn p1(&self) -> &[S] {
        &self.p1
    }

    pub fn p11(&self, q: usize, v: usize) -> S {
        match &self.pairs {
            PairTable::Dense(m) => m[q * self.p1.len() + v],
            PairTable::Columns { words, bits } => {
                let a = &bits[q * words..(q + 1) * words];
                let b = &bits[v * words..(v + 1) * words];
                let both: u32 = a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum();
                let half = self.alpha / S::lit(2.0);
                (S::lit(f64::from(both)) + half)
                    / (S::lit(self.n_samples as f64) + self.alpha + self.alpha)
            }
        }
    }

    /// Joint table of `(z_q, z_v)` indexed `2 * z_q + z_v`.
    pub fn joint(&self, q: usize, v: usize) -> [S; 4] {
        let p11 = self.p11(q, v);
        let (pq, pv) = (self.p1[q], self.p1[v]);
        [S::one() - pq - pv + p11, pv - p11, pq - p11, p11]
    }
}

/// Counts feature occurrences and co-occurrences over `vectors`.
pub fn estimate_stats<S: Scalar>(vectors: &[FeatureVector], alpha: S) -> Result<FeatureStats<S>> {
    let first = vectors.first().ok_or(Error::EmptyInput("feature statistics need at least one vector"))?;
    if alpha < S::zero() {
        return Err(Error::Config("smoothing alpha must be non-negative".into()));
    }
    let n_features = first.len();
    let n = vectors.len();
    let words = n.div_ceil(64);
    let mut bits = vec![0u64; n_features * words];
    for (s, v) in vectors.iter().enumerate() {
        if v.len() != n_features {
            return Err(Error::LengthMismatch {
                expected: n_features,
                actual: v.len(),
            });
        }
        for q in v.ones() {
            bits[q * words + s / 64] |= 1 << (s % 64);
        }
    }
    let denom = S::lit(n as f64) + alpha + alpha;
    let p1 = (0..n_features)
        .map(|q| {
            let c: u32 = bits[q * words..(q + 1) * words].iter().map(|w| w.count_ones()).sum();
            (S::lit(f64::from(c)) + alpha) / denom
        })
        .collect();
    Ok(FeatureStats {
        n_samples: n,
        alpha,
        p1,
        pairs: PairTable::Columns { words, bits },
    })
}

/// Mutual information in nats between features `q` and `v`.
pub fn mutual_information<S: Scalar>(stats: &FeatureStats<S>, q: usize, v: usize) -> S {
    let (a, b) = if q <= v { (q, v) } else { (v, q) };
    let joint = stats.joint(a, b);
    let (pa, pb) = (stats.p1[a], stats.p1[b]);
    let ma = [S::one() - pa, pa];
    let mb = [S::one() - pb, pb];
    let mut mi = S::zero();
    for za in 0..2 {
        for zb in 0..2 {
            let p = joint[2 * za + zb];
            if p > S::zero() {
                mi = mi + p * (p / (ma[za] * mb[zb])).ln();
            }
        }
    }
    mi
}

#[derive(Debug, Clone, Copy)]
struct Candidate<S> {
    node: usize,
    weight: S,
    from: usize,
}

/// True when edge `(w1, e1)` beats `(w2, e2)`: heavier first, then the
/// lexicographically smaller `(min, max)` pair.
fn beats<S: Scalar>(w1: S, e1: (usize, usize), w2: S, e2: (usize, usize)) -> bool {
    let key = |(a, b): (usize, usize)| (a.min(b), a.max(b));
    w1 > w2 || (w1 == w2 && key(e1) < key(e2))
}

/// Maximum-weight spanning forest of the complete graph on `n` nodes, using
/// only edges of positive weight. Returns each node's parent (`None` for
/// roots); every component is rooted at its lowest index.
///
/// Dense Prim: each pair's weight is evaluated exactly once and nothing
/// quadratic is stored. With the total edge order of [`beats`] the forest is
/// unique, so the result equals Kruskal's under the same order.
pub fn max_spanning_forest<S, F>(n: usize, weight: F) -> Vec<Option<usize>>
where
    S: Scalar,
    F: Fn(usize, usize) -> S + Sync,
{
    let mut parent = vec![None; n];
    let mut open: Vec<Candidate<S>> = (0..n)
        .map(|node| Candidate {
            node,
            weight: S::neg_infinity(),
            from: usize::MAX,
        })
        .collect();

    while !open.is_empty() {
        let mut pick: Option<usize> = None;
        for (k, c) in open.iter().enumerate() {
            if c.from == usize::MAX {
                continue;
            }
            let better = match pick {
                None => true,
                Some(p) => {
                    let b = &open[p];
                    beats(c.weight, (c.node, c.from), b.weight, (b.node, b.from))
                }
            };
            if better {
                pick = Some(k);
            }
        }
        let k = pick.unwrap_or_else(|| {
            // No positive edge reaches the open set: new component rooted at
            // its lowest remaining node.
            (0..open.len()).min_by_key(|&k| open[k].node).expect("open set non-empty")
        });
        let added = open.swap_remove(k);
        if added.from != usize::MAX {
            parent[added.node] = Some(added.from);
        }
        let v = added.node;
        open.par_iter_mut().for_each(|c| {
            let w = weight(v, c.node);
            let current = if c.from == usize::MAX {
                S::zero()
            } else {
                c.weight
            };
            if w > S::zero()
                && (c.from == usize::MAX || beats(w, (v, c.node), current, (c.from, c.node)))
            {
                c.weight = w;
                c.from = v;
            }
        });
    }
    parent
}

/// Tree-structured distribution over binary features. A forest is allowed;
/// each component has its own root.
#[derive(Debug, Clone, PartialEq)]
pub struct ChowLiuTree<S: Scalar> {
    pub parent: Vec<Option<usize>>,
    pub roots: Vec<usize>,
    /// `p(z_q = 1)` for every feature.
    pub marginal: Vec<S>,
    /// `p(z_q = a | z_parent = b)` at index `2 * b + a`. Roots store their
    /// marginal in both rows.
    pub cond: Vec<[S; 4]>,
}

impl<S: Scalar> ChowLiuTree<S> {
    pub fn n_features(&self) -> usize {
        self.parent.len()
    }

    /// Root of the component containing feature 0.
    pub fn root(&self) -> Option<usize> {
        self.roots.first().copied()
    }

    pub fn root_marginal(&self) -> Option<S> {
        self.root().map(|r| self.marginal[r])
    }

    #[inline]
    pub fn conditional(&self, q: usize, z_q: bool, z_parent: bool) -> S {
        self.cond[q][2 * usize::from(z_parent) + usize::from(z_q)]
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.n_features()];
        for (q, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(q);
            }
        }
        children
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(q, p)| p.map(|p| (p, q)))
    }

    /// Independent features: every feature is its own root.
    pub fn independent(marginal: Vec<S>) -> Self {
        let n = marginal.len();
        let cond = marginal
            .iter()
            .map(|&m| [S::one() - m, m, S::one() - m, m])
            .collect();
        Self {
            parent: vec![None; n],
            roots: (0..n).collect(),
            marginal,
            cond,
        }
    }

    /// Builds a tree from an explicit parent structure and statistics.
    pub fn from_parents(parent: Vec<Option<usize>>, stats: &FeatureStats<S>) -> Result<Self> {
        let n = stats.n_features();
        if parent.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: parent.len(),
            });
        }
        let p1 = stats.p1();
        let cond = (0..n)
            .map(|q| {
                let m = p1[q];
                let Some(p) = parent[q] else {
                    return [S::one() - m, m, S::one() - m, m];
                };
                let pp = p1[p];
                let p11 = stats.p11(q, p);
                let on = if pp > S::zero() { p11 / pp } else { m };
                let off = if pp < S::one() {
                    (m - p11) / (S::one() - pp)
                } else {
                    m
                };
                [S::one() - off, off, S::one() - on, on]
            })
            .collect();
        let tree = Self {
            roots: (0..n).filter(|&q| parent[q].is_none()).collect(),
            parent,
            marginal: p1.to_vec(),
            cond,
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Checks that the parent links form a forest.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_features();
        if self.marginal.len() != n || self.cond.len() != n {
            return Err(Error::Model("tree arrays have inconsistent lengths".into()));
        }
        // Each node walks up at most n links before reaching a root.
        let mut depth_known = vec![false; n];
        for start in 0..n {
            let mut path = Vec::new();
            let mut q = start;
            while !depth_known[q] {
                path.push(q);
                if path.len() > n {
                    return Err(Error::Model(format!("cycle through feature {start}")));
                }
                match self.parent[q] {
                    Some(p) if p >= n => return Err(Error::Model(format!("parent {p} out of range"))),
                    Some(p) => q = p,
                    None => break,
                }
            }
            for q in path {
                depth_known[q] = true;
            }
        }
        Ok(())
    }

    /// Topological order: parents before children.
    pub fn order(&self) -> Vec<usize> {
        let children = self.children();
        let mut order = Vec::with_capacity(self.n_features());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(q) = stack.pop() {
            order.push(q);
            stack.extend(children[q].iter().rev());
        }
        order
    }
}

/// Chow-Liu tree: maximum mutual-information spanning forest over all
/// feature pairs, with conditionals taken from the same statistics.
pub fn build_tree<S: Scalar>(stats: &FeatureStats<S>) -> Result<ChowLiuTree<S>> {
    let parent = max_spanning_forest(stats.n_features(), |q, v| mutual_information(stats, q, v));
    ChowLiuTree::from_parents(parent, stats)
}

/// Probability of a full assignment under the tree.
pub fn tree_joint<S: Scalar>(tree: &ChowLiuTree<S>, z: &[bool]) -> Result<S> {
    if z.len() != tree.n_features() {
        return Err(Error::LengthMismatch {
            expected: tree.n_features(),
            actual: z.len(),
        });
    }
    Ok((0..z.len())
        .map(|q| tree.conditional(q, z[q], tree.parent[q].is_some_and(|p| z[p])))
        .fold(S::one(), |acc, x| acc * x))
}

/// Total mutual information carried by the tree's edges.
pub fn tree_weight<S: Scalar>(tree: &ChowLiuTree<S>, stats: &FeatureStats<S>) -> S {
    tree.edges().map(|(p, q)| mutual_information(stats, p, q)).sum()
}
