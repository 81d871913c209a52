//! Grid search over the detector parameters on an exponential grid.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chowliu::ChowLiuTree;
use crate::dataset::{ApRegistry, GroundTruth};
use crate::error::{Error, Result};
use crate::featurize::{BinningConfig, FeatureVector};
use crate::inference::{DetectorModel, PlaceDatabase};
use crate::scalar::Scalar;

/// Share of each cluster's database scans used to build the subtraining
/// database; the rest are validation queries.
pub const SUBTRAIN_FRACTION: f64 = 0.7;

const ENDPOINT_SLACK: f64 = 1e-12;

/// Natural-log exponents swept for each parameter; the parameter value is
/// `exp(exponent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub pzge_log_start: f64,
    pub pzge_log_end: f64,
    pub pzgne_log_start: f64,
    pub pzgne_log_end: f64,
    pub log_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            pzge_log_start: -0.01,
            pzge_log_end: -4.0,
            pzgne_log_start: -2.0,
            pzgne_log_end: -8.0,
            log_step: 0.05,
        }
    }
}

impl GridSpec {
    /// A grid holding the single point `(pzge, pzgne)`.
    pub fn single(pzge: f64, pzgne: f64) -> Self {
        Self {
            pzge_log_start: pzge.ln(),
            pzge_log_end: pzge.ln(),
            pzgne_log_start: pzgne.ln(),
            pzgne_log_end: pzgne.ln(),
            log_step: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.log_step > 0.0
            && self.pzge_log_start >= self.pzge_log_end
            && self.pzgne_log_start >= self.pzgne_log_end
            && self.pzge_log_start < 0.0
            && self.pzgne_log_start < 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    pub fn pzge_exponents(&self) -> Vec<f64> {
        exponents(self.pzge_log_start, self.pzge_log_end, self.log_step)
    }

    pub fn pzgne_exponents(&self) -> Vec<f64> {
        exponents(self.pzgne_log_start, self.pzgne_log_end, self.log_step)
    }

    /// Grid points, PzGe-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let pzgne = self.pzgne_exponents();
        self.pzge_exponents()
            .into_iter()
            .flat_map(|a| pzgne.iter().map(move |&b| (a.exp(), b.exp())))
            .collect()
    }
}

/// `start, start - step, ...` down to `end` (inclusive up to rounding).
pub fn exponents(start: f64, end: f64, step: f64) -> Vec<f64> {
    (0..)
        .map(|i| start - i as f64 * step)
        .take_while(|&x| x >= end - ENDPOINT_SLACK)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub pzge: f64,
    pub pzgne: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    /// PzGe-major, `n_pzge x n_pzgne`.
    pub surface: Vec<GridPoint>,
    pub n_pzge: usize,
    pub n_pzgne: usize,
    pub best: GridPoint,
}

impl TuneResult {
    pub fn at(&self, i: usize, j: usize) -> &GridPoint {
        &self.surface[i * self.n_pzgne + j]
    }

    /// Grid coordinates of the best point.
    pub fn best_cell(&self) -> (usize, usize) {
        let k = self
            .surface
            .iter()
            .position(|p| p == &self.best)
            .expect("best point is on the surface");
        (k / self.n_pzgne, k % self.n_pzgne)
    }

    /// Scores of the up-to-8 grid neighbors of the best point.
    pub fn best_neighborhood(&self) -> Vec<f64> {
        let (bi, bj) = self.best_cell();
        let mut out = Vec::new();
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (i, j) = (bi as i64 + di, bj as i64 + dj);
                if (di, dj) != (0, 0)
                    && (0..self.n_pzge as i64).contains(&i)
                    && (0..self.n_pzgne as i64).contains(&j)
                {
                    out.push(self.at(i as usize, j as usize).score);
                }
            }
        }
        out
    }

    /// `pzge,pzgne,score` rows.
    pub fn write_surface_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["pzge", "pzgne", "score"])?;
        for p in &self.surface {
            csv.write_record([p.pzge.to_string(), p.pzgne.to_string(), p.score.to_string()])?;
        }
        csv.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

/// Per cluster: shuffle, then the first `round(0.7 m)` scans (at least one,
/// leaving at least one) go to subtraining and the rest to validation.
/// Clusters with fewer than two scans go entirely to subtraining.
pub fn split_for_validation(
    place_db_scans: &[Vec<usize>],
    seed: u64,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subtraining = Vec::with_capacity(place_db_scans.len());
    let mut validation = Vec::with_capacity(place_db_scans.len());
    for scans in place_db_scans {
        let mut scans = scans.clone();
        scans.shuffle(&mut rng);
        let m = scans.len();
        let keep = if m < 2 {
            m
        } else {
            ((m as f64 * SUBTRAIN_FRACTION).round() as usize).clamp(1, m - 1)
        };
        validation.push(scans.split_off(keep));
        subtraining.push(scans);
    }
    (subtraining, validation)
}

/// Building+floor accuracy of one detector setting.
pub fn score_point<S: Scalar>(
    subtraining: &[(FeatureVector, GroundTruth, usize)],
    validation: &[(FeatureVector, GroundTruth)],
    tree: &ChowLiuTree<S>,
    config: &BinningConfig,
    registry: &ApRegistry,
    pzge: f64,
    pzgne: f64,
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation set is empty"));
    }
    let detector = DetectorModel::new(S::lit(pzge), S::lit(pzgne))?;
    let db = PlaceDatabase::from_observations(subtraining, tree.clone(), detector, *config, registry.clone())?;
    let mut correct = 0usize;
    for (z, truth) in validation {
        let best = db.best_entry(z)?;
        if db.entries()[best].label.same_floor(truth) {
            correct += 1;
        }
    }
    Ok(correct as f64 / validation.len() as f64)
}

/// Evaluates every grid point; the tree stays fixed, only place beliefs are
/// rebuilt. Ties prefer larger PzGe, then larger PzGne.
pub fn grid_search<S: Scalar>(
    subtraining: &[(FeatureVector, GroundTruth, usize)],
    validation: &[(FeatureVector, GroundTruth)],
    tree: &ChowLiuTree<S>,
    config: &BinningConfig,
    registry: &ApRegistry,
    grid: &GridSpec,
) -> Result<TuneResult> {
    grid.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation set is empty"));
    }
    let n_pzge = grid.pzge_exponents().len();
    let n_pzgne = grid.pzgne_exponents().len();
    let surface = grid
        .points()
        .into_par_iter()
        .map(|(pzge, pzgne)| {
            let score = score_point(subtraining, validation, tree, config, registry, pzge, pzgne)?;
            log::debug!("PzGe={pzge:.4} PzGne={pzgne:.5} score={score:.4}");
            Ok(GridPoint { pzge, pzgne, score })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = *surface
        .iter()
        .reduce(|a, b| {
            let b_wins = b.score > a.score
                || (b.score == a.score && (b.pzge > a.pzge || (b.pzge == a.pzge && b.pzgne > a.pzgne)));
            if b_wins {
                b
            } else {
                a
            }
        })
        .expect("grid has at least one point");
    Ok(TuneResult {
        surface,
        n_pzge,
        n_pzgne,
        best,
    })
}
