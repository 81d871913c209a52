//! Building+floor accuracy, mean distance error over correct matches, and
//! match export.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::featurize::featurize_scan;
use crate::inference::PlaceDatabase;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub query_index: usize,
    pub entry_index: usize,
    pub predicted: GroundTruth,
}

impl Prediction {
    pub fn is_correct(&self, truth: &GroundTruth) -> bool {
        self.predicted.same_floor(truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score: f64,
    /// `None` when no query was classified correctly.
    #[serde(rename = "e_d_m")]
    pub e_d: Option<f64>,
    pub n_total: usize,
    pub n_correct: usize,
}

impl EvalReport {
    pub fn new(predictions: &[Prediction], truths: &[GroundTruth]) -> Result<Self> {
        let score = score(predictions, truths)?;
        let n_correct = predictions
            .iter()
            .zip(truths)
            .filter(|(p, t)| p.is_correct(t))
            .count();
        Ok(Self {
            score,
            e_d: mean_distance_error(predictions, truths)?,
            n_total: predictions.len(),
            n_correct,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_aligned(predictions: &[Prediction], truths: &[GroundTruth]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score"));
    }
    Ok(())
}

/// Fraction of queries whose predicted building and floor both match.
pub fn score(predictions: &[Prediction], truths: &[GroundTruth]) -> Result<f64> {
    check_aligned(predictions, truths)?;
    let correct = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.is_correct(t))
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Mean planar distance between query and matched position over correctly
/// classified queries; `None` when there are none.
pub fn mean_distance_error(predictions: &[Prediction], truths: &[GroundTruth]) -> Result<Option<f64>> {
    check_aligned(predictions, truths)?;
    let (sum, count) = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.is_correct(t))
        .fold((0.0, 0usize), |(s, c), (p, t)| (s + t.planar_distance(&p.predicted), c + 1));
    Ok((count > 0).then(|| sum / count as f64))
}

/// Match CSV: truth and matched position per query plus a correctness flag.
pub fn export_matches<W: Write>(
    predictions: &[Prediction],
    truths: &[GroundTruth],
    writer: W,
) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "query_index",
        "entry_index",
        "truth_lon",
        "truth_lat",
        "truth_floor",
        "truth_building",
        "match_lon",
        "match_lat",
        "match_floor",
        "match_building",
        "correct",
    ])?;
    for (p, t) in predictions.iter().zip(truths) {
        let m = &p.predicted;
        csv.write_record([
            p.query_index.to_string(),
            p.entry_index.to_string(),
            t.longitude.to_string(),
            t.latitude.to_string(),
            t.floor.to_string(),
            t.building_id.to_string(),
            m.longitude.to_string(),
            m.latitude.to_string(),
            m.floor.to_string(),
            m.building_id.to_string(),
            u8::from(p.is_correct(t)).to_string(),
        ])?;
    }
    csv.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Predicts every record of `queries` against `db`. The query file must
/// share the database's network registry.
pub fn predict_dataset<S: Scalar>(db: &PlaceDatabase<S>, queries: &Dataset) -> Result<Vec<Prediction>> {
    if queries.registry.ids() != db.registry().ids() {
        return Err(Error::Config(
            "query networks differ from the model's network registry".into(),
        ));
    }
    queries
        .records
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let z = featurize_scan(&record.scan, db.registry(), db.config())?;
            let entry = db.best_entry(&z)?;
            Ok(Prediction {
                query_index: i,
                entry_index: entry,
                predicted: db.entries()[entry].label,
            })
        })
        .collect()
}

pub fn evaluate<S: Scalar>(db: &PlaceDatabase<S>, queries: &Dataset) -> Result<(Vec<Prediction>, EvalReport)> {
    let predictions = predict_dataset(db, queries)?;
    let truths: Vec<GroundTruth> = queries.records.iter().map(|r| r.truth).collect();
    let report = EvalReport::new(&predictions, &truths)?;
    Ok((predictions, report))
}
