//! End-to-end training, tuning and evaluation.

use log::info;

use crate::chowliu::{build_tree, estimate_stats, tree_weight, ChowLiuTree, DEFAULT_ALPHA};
use crate::cluster::{dbscan, split_dataset, ClusterAssignment, ClusterParams, SplitResult};
use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, Prediction};
use crate::featurize::{featurize_scan, BinningConfig, FeatureVector};
use crate::inference::{DetectorModel, PlaceDatabase};
use crate::scalar::Scalar;
use crate::tune::{grid_search, split_for_validation, GridSpec, TuneResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub binning: BinningConfig,
    pub cluster: ClusterParams,
    pub alpha: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(bin_width: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            binning: BinningConfig::with_width(bin_width)?,
            cluster: ClusterParams::default(),
            alpha: DEFAULT_ALPHA,
            seed,
        })
    }
}

/// Everything learned from a training set that does not depend on the
/// detector parameters.
#[derive(Debug, Clone)]
pub struct Prepared<S: Scalar> {
    pub config: TrainConfig,
    pub dataset: Dataset,
    pub assignment: ClusterAssignment,
    pub split: SplitResult,
    pub tree: ChowLiuTree<S>,
    /// Total mutual information on the tree's edges.
    pub tree_weight: S,
}

fn featurize(dataset: &Dataset, indices: &[usize], config: &BinningConfig) -> Result<Vec<FeatureVector>> {
    indices
        .iter()
        .map(|&i| featurize_scan(&dataset.records[i].scan, &dataset.registry, config))
        .collect()
}

impl<S: Scalar> Prepared<S> {
    /// Clusters the records, splits them and learns the Chow-Liu tree from
    /// the environment scans.
    pub fn new(dataset: Dataset, config: TrainConfig) -> Result<Self> {
        config.binning.validate()?;
        if dataset.is_empty() {
            return Err(Error::EmptyInput("training set has no records"));
        }
        let positions: Vec<GroundTruth> = dataset.records.iter().map(|r| r.truth).collect();
        let assignment = dbscan(&positions, &config.cluster)?;
        let split = split_dataset(&assignment, config.seed);
        info!(
            "{} records, {} clusters, {} place-database scans",
            dataset.len(),
            assignment.count,
            split.place_db_len()
        );
        let env = featurize(&dataset, &split.environment_scans, &config.binning)?;
        let stats = estimate_stats(&env, S::lit(config.alpha))?;
        let tree = build_tree(&stats)?;
        let weight = tree_weight(&tree, &stats);
        info!(
            "Chow-Liu tree over {} features: {} roots, total MI {:.4} nats",
            tree.n_features(),
            tree.roots.len(),
            weight.as_f64()
        );
        Ok(Self {
            config,
            dataset,
            assignment,
            split,
            tree,
            tree_weight: weight,
        })
    }

    fn observations(&self, groups: &[Vec<usize>]) -> Result<Vec<(FeatureVector, GroundTruth, usize)>> {
        let indices: Vec<usize> = groups.iter().flatten().copied().collect();
        let features = featurize(&self.dataset, &indices, &self.config.binning)?;
        Ok(features
            .into_iter()
            .zip(&indices)
            .map(|(z, &i)| (z, self.dataset.records[i].truth, i))
            .collect())
    }

    /// Place database over every place-database scan.
    pub fn database(&self, detector: DetectorModel<S>) -> Result<PlaceDatabase<S>> {
        let observations = self.observations(&self.split.place_db_scans)?;
        PlaceDatabase::from_observations(
            &observations,
            self.tree.clone(),
            detector,
            self.config.binning,
            self.dataset.registry.clone(),
        )
    }

    /// Grid search on a subtraining / validation division of the
    /// place-database scans.
    pub fn tune(&self, grid: &GridSpec) -> Result<TuneResult> {
        let (subtraining, validation) = split_for_validation(&self.split.place_db_scans, self.config.seed);
        let subtraining = self.observations(&subtraining)?;
        let validation: Vec<(FeatureVector, GroundTruth)> = self
            .observations(&validation)?
            .into_iter()
            .map(|(z, t, _)| (z, t))
            .collect();
        info!(
            "tuning on {} subtraining entries, {} validation queries, {} grid points",
            subtraining.len(),
            validation.len(),
            grid.points().len()
        );
        grid_search(
            &subtraining,
            &validation,
            &self.tree,
            &self.config.binning,
            &self.dataset.registry,
            grid,
        )
    }
}

/// Trains and evaluates one detector setting.
pub fn train_and_evaluate<S: Scalar>(
    prepared: &Prepared<S>,
    detector: DetectorModel<S>,
    test: &Dataset,
) -> Result<(PlaceDatabase<S>, Vec<Prediction>, EvalReport)> {
    let db = prepared.database(detector)?;
    let (predictions, report) = evaluate(&db, test)?;
    Ok((db, predictions, report))
}
