//! Place recognition: detector model, place database and posterior over
//! places.
//!
//! Each feature `q` has an observed bit `z_q` and a hidden existence bit
//! `e_q`. A place stores beliefs `β_q = p(e_q = 1 | L)`. The observation
//! likelihood follows the Chow-Liu tree, with each factor coupling the
//! detector and the tree conditional:
//!
//! ```text
//! p(z_q | e_q = s, z_p) ∝ p(z_q | e_q = s) · p(z_q | z_p) / p(z_q)
//! p(z_q | z_p, L)       = Σ_s p(z_q | e_q = s, z_p) · p(e_q = s | L)
//! ```
//!
//! normalized over `z_q`. Roots use the detector term alone.
//!
//! Belief vectors are stored compressed: per feature a small palette of
//! distinct belief values, whose first element is the most common one, and
//! per entry the sparse list of features deviating from it. Scoring a query
//! then only touches features that are on in the query or whose parent is.

use std::collections::HashMap;

use crate::chowliu::ChowLiuTree;
use crate::cluster::SplitResult;
use crate::dataset::{ApRegistry, Dataset, GroundTruth, WifiScan};
use crate::error::{Error, Result};
use crate::featurize::{featurize_scan, BinningConfig, FeatureVector};
use crate::scalar::{log_sum_exp, Scalar};

/// False detection rates: `pzge = p(z = 1 | e = 0)` and
/// `pzgne = p(z = 0 | e = 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel<S: Scalar> {
    pub pzge: S,
    pub pzgne: S,
}

impl<S: Scalar> DetectorModel<S> {
    pub fn new(pzge: S, pzgne: S) -> Result<Self> {
        let interior = |p: S| p > S::zero() && p < S::one();
        if !interior(pzge) || !interior(pzgne) {
            return Err(Error::Config(format!(
                "detector probabilities must lie in (0, 1), got PzGe={pzge} PzGne={pzgne}"
            )));
        }
        Ok(Self { pzge, pzgne })
    }

    /// `p(z | e)`.
    #[inline]
    pub fn likelihood(&self, z: bool, e: bool) -> S {
        match (z, e) {
            (true, true) => S::one() - self.pzgne,
            (false, true) => self.pzgne,
            (true, false) => self.pzge,
            (false, false) => S::one() - self.pzge,
        }
    }
}

/// `p(e = 1 | z = observed)` with prior `p(e = 1) = prior`.
pub fn place_belief<S: Scalar>(observed: bool, prior: S, detector: &DetectorModel<S>) -> S {
    let on = detector.likelihood(observed, true) * prior;
    let off = detector.likelihood(observed, false) * (S::one() - prior);
    on / (on + off)
}

/// Belief vector of a place defined by a single observation. Priors are the
/// tree's feature marginals.
pub fn init_place<S: Scalar>(
    observation: &FeatureVector,
    tree: &ChowLiuTree<S>,
    detector: &DetectorModel<S>,
) -> Result<Vec<S>> {
    if observation.len() != tree.n_features() {
        return Err(Error::LengthMismatch {
            expected: tree.n_features(),
            actual: observation.len(),
        });
    }
    Ok((0..observation.len())
        .map(|q| place_belief(observation.get(q), tree.marginal[q], detector))
        .collect())
}

/// `p(z_q | e_q = e, z_parent)`, normalized over `z_q`. `z_parent` is ignored
/// for roots.
pub fn coupled_likelihood<S: Scalar>(
    tree: &ChowLiuTree<S>,
    detector: &DetectorModel<S>,
    q: usize,
    z_q: bool,
    z_parent: bool,
    e: bool,
) -> Result<S> {
    if tree.parent[q].is_none() {
        return Ok(detector.likelihood(z_q, e));
    }
    let m = tree.marginal[q];
    let weight = |z: bool| {
        let marginal = if z { m } else { S::one() - m };
        detector.likelihood(z, e) * tree.conditional(q, z, z_parent) / marginal
    };
    let (w1, w0) = (weight(true), weight(false));
    let norm = w0 + w1;
    if !(norm > S::zero()) || !norm.is_finite() {
        return Err(Error::DegenerateNormalizer(q));
    }
    Ok(if z_q { w1 } else { w0 } / norm)
}

/// `p(z_q | z_parent, L)` for a place with belief `belief = p(e_q = 1 | L)`.
pub fn feature_likelihood<S: Scalar>(
    tree: &ChowLiuTree<S>,
    detector: &DetectorModel<S>,
    q: usize,
    z_q: bool,
    z_parent: bool,
    belief: S,
) -> Result<S> {
    let on = coupled_likelihood(tree, detector, q, z_q, z_parent, true)?;
    let off = coupled_likelihood(tree, detector, q, z_q, z_parent, false)?;
    Ok(on * belief + off * (S::one() - belief))
}

/// `ln p(Z | L)` evaluated factor by factor over every feature. This is the
/// direct form of the model; [`PlaceDatabase::log_likelihoods`] computes the
/// same quantity for all entries at once.
pub fn observation_likelihood<S: Scalar>(
    beliefs: &[S],
    z: &FeatureVector,
    tree: &ChowLiuTree<S>,
    detector: &DetectorModel<S>,
) -> Result<S> {
    let n = tree.n_features();
    if z.len() != n || beliefs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: if z.len() != n { z.len() } else { beliefs.len() },
        });
    }
    let mut total = S::zero();
    for q in 0..n {
        let z_parent = tree.parent[q].is_some_and(|p| z.get(p));
        total = total + feature_likelihood(tree, detector, q, z.get(q), z_parent, beliefs[q])?.ln();
    }
    Ok(total)
}

/// One known place. Its beliefs live in the database palettes; `deviations`
/// lists `(feature, palette index)` for every feature whose belief is not the
/// palette default.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceEntry {
    pub label: GroundTruth,
    pub source_record: usize,
    pub deviations: Vec<(u32, u32)>,
}

/// Precomputed log factors and posting lists.
#[derive(Debug, Clone)]
struct ScoringIndex<S> {
    children: Vec<Vec<u32>>,
    /// `ln p(z_q | z_p, β = palette[q][k])` at `term_offset[q] + ctx * P_q + k`
    /// with `ctx = 2 z_q + z_p`.
    terms: Vec<S>,
    term_offset: Vec<usize>,
    /// Entries deviating at feature `q`: `posting_offset[q]..posting_offset[q + 1]`.
    posting_offset: Vec<usize>,
    posting: Vec<(u32, u32)>,
    /// Σ_q of the all-zero-context default term.
    base_common: S,
    /// Per-entry correction of the all-zero context for its deviations.
    base_entry: Vec<S>,
}

impl<S: Scalar> ScoringIndex<S> {
    #[inline]
    fn term(&self, palettes: &[Vec<S>], q: usize, ctx: usize, k: usize) -> S {
        self.terms[self.term_offset[q] + ctx * palettes[q].len() + k]
    }

    fn build(
        tree: &ChowLiuTree<S>,
        detector: &DetectorModel<S>,
        palettes: &[Vec<S>],
        entries: &[PlaceEntry],
    ) -> Result<Self> {
        let n = tree.n_features();
        let mut term_offset = Vec::with_capacity(n);
        let mut terms = Vec::new();
        for (q, palette) in palettes.iter().enumerate() {
            term_offset.push(terms.len());
            for ctx in 0..4 {
                let (z_q, z_p) = (ctx >= 2, ctx % 2 == 1);
                let on = coupled_likelihood(tree, detector, q, z_q, z_p, true)?;
                let off = coupled_likelihood(tree, detector, q, z_q, z_p, false)?;
                terms.extend(palette.iter().map(|&b| (on * b + off * (S::one() - b)).ln()));
            }
        }

        let mut counts = vec![0usize; n + 1];
        for e in entries {
            for &(q, _) in &e.deviations {
                counts[q as usize + 1] += 1;
            }
        }
        for q in 0..n {
            counts[q + 1] += counts[q];
        }
        let posting_offset = counts.clone();
        let mut fill = counts;
        let mut posting = vec![(0u32, 0u32); posting_offset[n]];
        for (i, e) in entries.iter().enumerate() {
            for &(q, k) in &e.deviations {
                posting[fill[q as usize]] = (i as u32, k);
                fill[q as usize] += 1;
            }
        }

        let mut index = Self {
            children: tree
                .children()
                .into_iter()
                .map(|c| c.into_iter().map(|x| x as u32).collect())
                .collect(),
            terms,
            term_offset,
            posting_offset,
            posting,
            base_common: S::zero(),
            base_entry: Vec::new(),
        };
        index.base_common = (0..n).map(|q| index.term(palettes, q, 0, 0)).sum();
        index.base_entry = entries
            .iter()
            .map(|e| {
                e.deviations
                    .iter()
                    .map(|&(q, k)| {
                        let q = q as usize;
                        index.term(palettes, q, 0, k as usize) - index.term(palettes, q, 0, 0)
                    })
                    .sum()
            })
            .collect();
        Ok(index)
    }
}

/// Known places plus everything needed to score queries against them.
#[derive(Debug, Clone)]
pub struct PlaceDatabase<S: Scalar> {
    entries: Vec<PlaceEntry>,
    palettes: Vec<Vec<S>>,
    tree: ChowLiuTree<S>,
    detector: DetectorModel<S>,
    config: BinningConfig,
    registry: ApRegistry,
    index: ScoringIndex<S>,
}

impl<S: Scalar> PlaceDatabase<S> {
    /// Assembles a database from palettes and entries, validating layout.
    pub fn from_parts(
        palettes: Vec<Vec<S>>,
        entries: Vec<PlaceEntry>,
        tree: ChowLiuTree<S>,
        detector: DetectorModel<S>,
        config: BinningConfig,
        registry: ApRegistry,
    ) -> Result<Self> {
        config.validate()?;
        let n = tree.n_features();
        let layout = registry.len() * config.bins_per_network();
        if layout != n {
            return Err(Error::LengthMismatch {
                expected: layout,
                actual: n,
            });
        }
        if palettes.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: palettes.len(),
            });
        }
        for (q, p) in palettes.iter().enumerate() {
            if p.is_empty() || p.iter().any(|&b| !(b > S::zero() && b < S::one())) {
                return Err(Error::Model(format!("feature {q}: beliefs must lie in (0, 1)")));
            }
        }
        for (i, e) in entries.iter().enumerate() {
            let mut last = None;
            for &(q, k) in &e.deviations {
                let (qu, ku) = (q as usize, k as usize);
                if qu >= n || ku == 0 || ku >= palettes[qu].len() || last.is_some_and(|l| l >= q) {
                    return Err(Error::Model(format!("entry {i}: invalid deviation ({q}, {k})")));
                }
                last = Some(q);
            }
        }
        let index = ScoringIndex::build(&tree, &detector, &palettes, &entries)?;
        Ok(Self {
            entries,
            palettes,
            tree,
            detector,
            config,
            registry,
            index,
        })
    }

    /// One entry per observation, beliefs from [`init_place`].
    pub fn from_observations(
        observations: &[(FeatureVector, GroundTruth, usize)],
        tree: ChowLiuTree<S>,
        detector: DetectorModel<S>,
        config: BinningConfig,
        registry: ApRegistry,
    ) -> Result<Self> {
        let n = tree.n_features();
        let palettes: Vec<Vec<S>> = (0..n)
            .map(|q| {
                let absent = place_belief(false, tree.marginal[q], &detector);
                let present = place_belief(true, tree.marginal[q], &detector);
                if absent == present {
                    vec![absent]
                } else {
                    vec![absent, present]
                }
            })
            .collect();
        let mut entries = Vec::with_capacity(observations.len());
        for (z, label, source_record) in observations {
            if z.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: z.len(),
                });
            }
            entries.push(PlaceEntry {
                label: *label,
                source_record: *source_record,
                deviations: z
                    .ones()
                    .filter(|&q| palettes[q].len() == 2)
                    .map(|q| (q as u32, 1))
                    .collect(),
            });
        }
        Self::from_parts(palettes, entries, tree, detector, config, registry)
    }

    /// Entries given as dense belief vectors.
    pub fn from_beliefs(
        places: Vec<(Vec<S>, GroundTruth, usize)>,
        tree: ChowLiuTree<S>,
        detector: DetectorModel<S>,
        config: BinningConfig,
        registry: ApRegistry,
    ) -> Result<Self> {
        let n = tree.n_features();
        for (beliefs, _, _) in &places {
            if beliefs.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: beliefs.len(),
                });
            }
        }
        let mut palettes: Vec<Vec<S>> = Vec::with_capacity(n);
        // Per feature: palette position of each distinct belief value.
        let mut slot_of: Vec<HashMap<u64, u32>> = Vec::with_capacity(n);
        for q in 0..n {
            let mut seen: Vec<(S, usize)> = Vec::new();
            let mut pos: HashMap<u64, usize> = HashMap::new();
            for (beliefs, _, _) in &places {
                let b = beliefs[q];
                let slot = *pos.entry(b.as_f64().to_bits()).or_insert_with(|| {
                    seen.push((b, 0));
                    seen.len() - 1
                });
                seen[slot].1 += 1;
            }
            // Most frequent first; ties keep first-seen order.
            let mut order: Vec<usize> = (0..seen.len()).collect();
            order.sort_by(|&a, &b| seen[b].1.cmp(&seen[a].1).then(a.cmp(&b)));
            let palette: Vec<S> = if order.is_empty() {
                vec![tree.marginal[q]]
            } else {
                order.iter().map(|&i| seen[i].0).collect()
            };
            slot_of.push(
                palette
                    .iter()
                    .enumerate()
                    .map(|(k, b)| (b.as_f64().to_bits(), k as u32))
                    .collect(),
            );
            palettes.push(palette);
        }
        let entries = places
            .into_iter()
            .map(|(beliefs, label, source_record)| PlaceEntry {
                label,
                source_record,
                deviations: beliefs
                    .iter()
                    .enumerate()
                    .filter_map(|(q, b)| {
                        let k = slot_of[q][&b.as_f64().to_bits()];
                        (k != 0).then_some((q as u32, k))
                    })
                    .collect(),
            })
            .collect();
        Self::from_parts(palettes, entries, tree, detector, config, registry)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PlaceEntry] {
        &self.entries
    }

    pub fn palettes(&self) -> &[Vec<S>] {
        &self.palettes
    }

    pub fn tree(&self) -> &ChowLiuTree<S> {
        &self.tree
    }

    pub fn detector(&self) -> &DetectorModel<S> {
        &self.detector
    }

    pub fn config(&self) -> &BinningConfig {
        &self.config
    }

    pub fn registry(&self) -> &ApRegistry {
        &self.registry
    }

    pub fn n_features(&self) -> usize {
        self.tree.n_features()
    }

    /// Dense belief vector `β` of one entry.
    pub fn beliefs(&self, entry: usize) -> Vec<S> {
        let mut beliefs: Vec<S> = self.palettes.iter().map(|p| p[0]).collect();
        for &(q, k) in &self.entries[entry].deviations {
            beliefs[q as usize] = self.palettes[q as usize][k as usize];
        }
        beliefs
    }

    /// `ln p(Z | L)` for every entry.
    pub fn log_likelihoods(&self, z: &FeatureVector) -> Result<Vec<S>> {
        let n = self.n_features();
        if z.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: z.len(),
            });
        }
        let ix = &self.index;
        let mut active: Vec<usize> = Vec::new();
        for q in z.ones() {
            active.push(q);
            active.extend(ix.children[q].iter().map(|&c| c as usize));
        }
        active.sort_unstable();
        active.dedup();

        let mut common = ix.base_common;
        let mut acc = ix.base_entry.clone();
        for q in active {
            let z_parent = self.tree.parent[q].is_some_and(|p| z.get(p));
            let ctx = 2 * usize::from(z.get(q)) + usize::from(z_parent);
            let default_shift = ix.term(&self.palettes, q, ctx, 0) - ix.term(&self.palettes, q, 0, 0);
            common = common + default_shift;
            for &(e, k) in &ix.posting[ix.posting_offset[q]..ix.posting_offset[q + 1]] {
                let k = k as usize;
                let here = ix.term(&self.palettes, q, ctx, k) - ix.term(&self.palettes, q, ctx, 0);
                let base = ix.term(&self.palettes, q, 0, k) - ix.term(&self.palettes, q, 0, 0);
                acc[e as usize] = acc[e as usize] + (here - base);
            }
        }
        Ok(acc.into_iter().map(|a| common + a).collect())
    }

    /// Highest-likelihood entry, ties to the lower index.
    pub fn best_entry(&self, z: &FeatureVector) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyInput("place database has no entries"));
        }
        let lls = self.log_likelihoods(z)?;
        Ok(argmax(&lls))
    }

    pub fn match_features(&self, z: &FeatureVector) -> Result<MatchResult<S>> {
        if self.is_empty() {
            return Err(Error::EmptyInput("place database has no entries"));
        }
        let lls = self.log_likelihoods(z)?;
        let norm = log_sum_exp(&lls);
        let mut order: Vec<usize> = (0..lls.len()).collect();
        order.sort_by(|&a, &b| {
            lls[b]
                .partial_cmp(&lls[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let ranked: Vec<(usize, S)> = order.iter().map(|&i| (i, (lls[i] - norm).exp())).collect();
        Ok(MatchResult {
            predicted: self.entries[ranked[0].0].label,
            ranked,
        })
    }
}

fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Posterior over entries, descending, with the top entry's label.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<S: Scalar> {
    pub ranked: Vec<(usize, S)>,
    pub predicted: GroundTruth,
}

impl<S: Scalar> MatchResult<S> {
    pub fn best(&self) -> (usize, S) {
        self.ranked[0]
    }
}

/// Featurizes `scan` with the database's layout and matches it.
pub fn match_scan<S: Scalar>(scan: &WifiScan, db: &PlaceDatabase<S>) -> Result<MatchResult<S>> {
    if db.is_empty() {
        return Err(Error::EmptyInput("place database has no entries"));
    }
    let z = featurize_scan(scan, db.registry(), db.config())?;
    db.match_features(&z)
}

/// One entry per place-database scan of `split`, in cluster order.
pub fn build_place_database<S: Scalar>(
    split: &SplitResult,
    dataset: &Dataset,
    tree: ChowLiuTree<S>,
    detector: DetectorModel<S>,
    config: &BinningConfig,
) -> Result<PlaceDatabase<S>> {
    let layout = dataset.registry.len() * config.bins_per_network();
    if layout != tree.n_features() {
        return Err(Error::LengthMismatch {
            expected: layout,
            actual: tree.n_features(),
        });
    }
    let observations = split
        .place_db_scans
        .iter()
        .flatten()
        .map(|&i| {
            let record = dataset.records.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: dataset.len(),
            })?;
            Ok((featurize_scan(&record.scan, &dataset.registry, config)?, record.truth, i))
        })
        .collect::<Result<Vec<_>>>()?;
    PlaceDatabase::from_observations(&observations, tree, detector, *config, dataset.registry.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chowliu::{build_tree, estimate_stats};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn label(i: usize) -> GroundTruth {
        GroundTruth {
            longitude: i as f64,
            latitude: 0.0,
            floor: 0,
            building_id: 0,
        }
    }

    /// Registry of `n` networks with a 2-threshold binning, i.e. 2n features.
    fn layout(networks: usize) -> (ApRegistry, BinningConfig) {
        let registry = ApRegistry::new((0..networks).map(|i| format!("n{i}"))).unwrap();
        let config = BinningConfig {
            range_low: -110.0,
            range_high: -10.0,
            bin_width: 100.0,
        };
        (registry, config)
    }

    fn random_tree(n_features: usize, seed: u64) -> ChowLiuTree<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<FeatureVector> = (0..40)
            .map(|_| {
                let base = rng.gen_bool(0.5);
                FeatureVector::from_bits(
                    &(0..n_features)
                        .map(|_| if rng.gen_bool(0.8) { base } else { rng.gen_bool(0.3) })
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        build_tree(&estimate_stats(&vectors, 0.5).unwrap()).unwrap()
    }

    fn all_assignments(n: usize) -> impl Iterator<Item = FeatureVector> {
        (0u32..1 << n).map(move |m| FeatureVector::from_ones(n, (0..n).filter(|&i| m >> i & 1 == 1)))
    }

    #[test]
    fn detector_validation() {
        assert!(DetectorModel::new(0.0, 0.5).is_err());
        assert!(DetectorModel::new(0.5, 1.0).is_err());
        assert!(DetectorModel::new(0.3135f64, 0.0429).is_ok());
    }

    #[test]
    fn belief_examples() {
        let d = DetectorModel::new(1e-12f64, 1e-12).unwrap();
        assert!(place_belief(true, 0.3, &d) > 1.0 - 1e-9);

        let d = DetectorModel::new(0.3135f64, 0.0429).unwrap();
        let hand = 0.9571 * 0.5 / (0.9571 * 0.5 + 0.3135 * 0.5);
        assert_abs_diff_eq!(place_belief(true, 0.5, &d), hand, epsilon = 1e-15);
        assert_abs_diff_eq!(hand, 0.7533, epsilon = 1e-4);

        let sym = DetectorModel::new(0.2f64, 0.2).unwrap();
        assert_abs_diff_eq!(
            place_belief(false, 0.5, &sym),
            1.0 - place_belief(true, 0.5, &sym),
            epsilon = 1e-15
        );
    }

    #[test]
    fn coupling_limits() {
        let tree = random_tree(6, 3);
        // Perfect detector: indicator regardless of the parent.
        let perfect = DetectorModel::new(1e-12f64, 1e-12).unwrap();
        for q in 0..6 {
            for zp in [false, true] {
                for e in [false, true] {
                    let p = coupled_likelihood(&tree, &perfect, q, e, zp, e).unwrap();
                    assert!(p > 1.0 - 1e-9, "q={q} zp={zp} e={e} p={p}");
                }
            }
        }
        // Uninformative detector: only the ratio of conditional to marginal
        // is left.
        let flat = DetectorModel::new(0.5f64, 0.5).unwrap();
        for q in 0..6 {
            if tree.parent[q].is_none() {
                continue;
            }
            let m = tree.marginal[q];
            for zp in [false, true] {
                let r1 = tree.conditional(q, true, zp) / m;
                let r0 = tree.conditional(q, false, zp) / (1.0 - m);
                let p = coupled_likelihood(&tree, &flat, q, true, zp, true).unwrap();
                assert_abs_diff_eq!(p, r1 / (r0 + r1), epsilon = 1e-12);
            }
        }
        // Uninformative tree: the detector comes back.
        let indep = ChowLiuTree::independent(vec![0.4f64; 3]);
        let mut chained = indep.clone();
        chained.parent = vec![None, Some(0), Some(1)];
        chained.roots = vec![0];
        let d = DetectorModel::new(0.1f64, 0.2).unwrap();
        for z in [false, true] {
            for e in [false, true] {
                assert_abs_diff_eq!(
                    coupled_likelihood(&chained, &d, 2, z, true, e).unwrap(),
                    d.likelihood(z, e),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn likelihood_sums_to_one() {
        for (n, seed) in [(4, 1), (7, 2), (10, 3)] {
            let tree = random_tree(n, seed);
            let d = DetectorModel::new(0.3135f64, 0.0429).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let beliefs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
            let total: f64 = all_assignments(n)
                .map(|z| observation_likelihood(&beliefs, &z, &tree, &d).unwrap().exp())
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_model_is_flat() {
        let tree = ChowLiuTree::independent(vec![0.5f64; 6]);
        let d = DetectorModel::new(0.2f64, 0.2).unwrap();
        let beliefs = vec![0.5; 6];
        let lls: Vec<f64> = all_assignments(6)
            .map(|z| observation_likelihood(&beliefs, &z, &tree, &d).unwrap())
            .collect();
        assert!(lls.iter().all(|&l| (l - lls[0]).abs() < 1e-12));
    }

    #[test]
    fn self_observation_beats_single_flips() {
        let tree = random_tree(10, 9);
        let d = DetectorModel::new(1e-9f64, 1e-9).unwrap();
        let z_star = FeatureVector::from_ones(10, [0, 3, 4, 8]);
        let beliefs = init_place(&z_star, &tree, &d).unwrap();
        let own = observation_likelihood(&beliefs, &z_star, &tree, &d).unwrap();
        for flip in 0..10 {
            let mut bits = z_star.to_bools();
            bits[flip] = !bits[flip];
            let other = observation_likelihood(&beliefs, &FeatureVector::from_bits(&bits), &tree, &d).unwrap();
            assert!(own > other, "flip {flip}: {own} <= {other}");
        }
    }

    #[test]
    fn indexed_scores_match_direct_form() {
        let (registry, config) = layout(5);
        let tree = random_tree(10, 21);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let observations: Vec<_> = (0..12)
            .map(|i| {
                let bits: Vec<bool> = (0..10).map(|_| rng.gen_bool(0.3)).collect();
                (FeatureVector::from_bits(&bits), label(i), i)
            })
            .collect();
        let db = PlaceDatabase::from_observations(&observations, tree.clone(), d, config, registry).unwrap();
        for z in all_assignments(10).step_by(37) {
            let fast = db.log_likelihoods(&z).unwrap();
            for (i, (obs, _, _)) in observations.iter().enumerate() {
                let beliefs = init_place(obs, &tree, &d).unwrap();
                assert_eq!(db.beliefs(i), beliefs);
                let direct = observation_likelihood(&beliefs, &z, &tree, &d).unwrap();
                assert_abs_diff_eq!(fast[i], direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn general_beliefs_index_matches_direct_form() {
        let (registry, config) = layout(3);
        let tree = random_tree(6, 4);
        let d = DetectorModel::new(0.2f64, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let places: Vec<_> = (0..5)
            .map(|i| {
                let b: Vec<f64> = (0..6).map(|_| [0.1, 0.5, 0.9][rng.gen_range(0..3)]).collect();
                (b, label(i), i)
            })
            .collect();
        let db = PlaceDatabase::from_beliefs(places.clone(), tree.clone(), d, config, registry).unwrap();
        for z in all_assignments(6) {
            let fast = db.log_likelihoods(&z).unwrap();
            for (i, (b, _, _)) in places.iter().enumerate() {
                assert_eq!(&db.beliefs(i), b);
                let direct = observation_likelihood(b, &z, &tree, &d).unwrap();
                assert_abs_diff_eq!(fast[i], direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn single_entry_gets_all_mass() {
        let (registry, config) = layout(2);
        let tree = random_tree(4, 1);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        let obs = vec![(FeatureVector::from_ones(4, [1]), label(0), 0)];
        let db = PlaceDatabase::from_observations(&obs, tree, d, config, registry).unwrap();
        let m = db.match_features(&FeatureVector::from_ones(4, [0, 2])).unwrap();
        assert_eq!(m.ranked, vec![(0, 1.0)]);
    }

    #[test]
    fn identical_entries_split_evenly() {
        let (registry, config) = layout(2);
        let tree = random_tree(4, 1);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        let z = FeatureVector::from_ones(4, [0, 1]);
        let obs = vec![(z.clone(), label(0), 0), (z.clone(), label(1), 1)];
        let db = PlaceDatabase::from_observations(&obs, tree, d, config, registry).unwrap();
        let m = db.match_features(&z).unwrap();
        assert_eq!(m.ranked[0].0, 0);
        assert_eq!(m.ranked[1].0, 1);
        assert_abs_diff_eq!(m.ranked[0].1, 0.5, epsilon = 1e-15);
        assert_eq!(m.ranked[0].1, m.ranked[1].1);
        assert_eq!(m.predicted, label(0));
        assert_eq!(db.best_entry(&z).unwrap(), 0);
    }

    #[test]
    fn toy_database_self_match() {
        let (registry, config) = layout(10);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let defining: Vec<FeatureVector> = (0..20)
            .map(|_| FeatureVector::from_bits(&(0..20).map(|_| rng.gen_bool(0.35)).collect::<Vec<_>>()))
            .collect();
        let tree = build_tree(&estimate_stats::<f64>(&defining, 0.5).unwrap()).unwrap();
        let d = DetectorModel::new(1e-9, 1e-9).unwrap();
        let obs: Vec<_> = defining.iter().enumerate().map(|(i, z)| (z.clone(), label(i), i)).collect();
        let db = PlaceDatabase::from_observations(&obs, tree, d, config, registry).unwrap();
        let m = db.match_features(&defining[7]).unwrap();
        assert_eq!(m.best().0, 7);
        let total: f64 = m.ranked.iter().map(|r| r.1).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        assert!(m.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn empty_database_is_an_error() {
        let (registry, config) = layout(2);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        let db = PlaceDatabase::from_observations(&[], random_tree(4, 1), d, config, registry).unwrap();
        assert!(matches!(match_scan(&WifiScan::empty(), &db), Err(Error::EmptyInput(_))));
        assert!(db.best_entry(&FeatureVector::zeros(4)).is_err());
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let (registry, config) = layout(3);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        assert!(matches!(
            PlaceDatabase::from_observations(&[], random_tree(4, 1), d, config, registry),
            Err(Error::LengthMismatch { expected: 6, actual: 4 })
        ));
    }

    #[test]
    fn scale_invariant_ranking() {
        let (registry, config) = layout(4);
        let tree = random_tree(8, 12);
        let d = DetectorModel::new(0.3f64, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs: Vec<_> = (0..6)
            .map(|i| (FeatureVector::from_bits(&(0..8).map(|_| rng.gen_bool(0.4)).collect::<Vec<_>>()), label(i), i))
            .collect();
        let db = PlaceDatabase::from_observations(&obs, tree, d, config, registry).unwrap();
        let z = FeatureVector::from_ones(8, [1, 2, 5]);
        let lls = db.log_likelihoods(&z).unwrap();
        let shifted: Vec<f64> = lls.iter().map(|l| l + 1234.5).collect();
        let norm_a = log_sum_exp(&lls);
        let norm_b = log_sum_exp(&shifted);
        for (a, b) in lls.iter().zip(&shifted) {
            assert_abs_diff_eq!((a - norm_a).exp(), (b - norm_b).exp(), epsilon = 1e-12);
        }
        assert_eq!(argmax(&lls), argmax(&shifted));
    }
}
