//! Versioned JSON model file.
//!
//! Layout (all arrays flat):
//!
//! ```text
//! format, version
//! params    { range_low, range_high, bin_width, pzge, pzgne, seed, alpha, eps, min_pts }
//! registry  [network id, ...]
//! tree      { roots, parent (-1 for roots), marginal, cond (4 per feature:
//!             p(0|0), p(1|0), p(0|1), p(1|1) given the parent bit) }
//! palettes  { offsets (n_features + 1), values }
//! entries   { longitude, latitude, floor, building, source_record,
//!             deviation_offsets (n_entries + 1), deviation_features, deviation_slots }
//! ```
//!
//! An entry's belief for feature `q` is `values[offsets[q] + slot]`, where
//! `slot` is listed in the entry's deviations or is 0 otherwise.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chowliu::ChowLiuTree;
use crate::dataset::{ApRegistry, GroundTruth};
use crate::error::{Error, Result};
use crate::featurize::BinningConfig;
use crate::inference::{DetectorModel, PlaceDatabase, PlaceEntry};
use crate::scalar::Scalar;

pub const FORMAT: &str = "wifi-fabmap-model";
pub const VERSION: u32 = 1;

/// Training settings recorded alongside the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub range_low: f64,
    pub range_high: f64,
    pub bin_width: f64,
    pub pzge: f64,
    pub pzgne: f64,
    pub seed: u64,
    pub alpha: f64,
    pub eps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTables {
    pub roots: Vec<usize>,
    pub parent: Vec<i64>,
    pub marginal: Vec<f64>,
    pub cond: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteTables {
    pub offsets: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryTables {
    pub longitude: Vec<f64>,
    pub latitude: Vec<f64>,
    pub floor: Vec<i32>,
    pub building: Vec<i32>,
    pub source_record: Vec<usize>,
    pub deviation_offsets: Vec<usize>,
    pub deviation_features: Vec<u32>,
    pub deviation_slots: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub params: ModelParams,
    pub registry: Vec<String>,
    pub tree: TreeTables,
    pub palettes: PaletteTables,
    pub entries: EntryTables,
}

impl ModelFile {
    /// `seed`, `alpha`, `eps` and `min_pts` are recorded for provenance only.
    pub fn from_database<S: Scalar>(
        db: &PlaceDatabase<S>,
        seed: u64,
        alpha: f64,
        eps: f64,
        min_pts: usize,
    ) -> Self {
        let config = db.config();
        let tree = db.tree();
        let det = db.detector();
        let params = ModelParams {
            range_low: config.range_low,
            range_high: config.range_high,
            bin_width: config.bin_width,
            pzge: det.pzge.as_f64(),
            pzgne: det.pzgne.as_f64(),
            seed,
            alpha,
            eps,
            min_pts,
        };
        let tree_tables = TreeTables {
            roots: tree.roots.clone(),
            parent: tree.parent.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            marginal: tree.marginal.iter().map(|m| m.as_f64()).collect(),
            cond: tree.cond.iter().flatten().map(|c| c.as_f64()).collect(),
        };
        let mut offsets = vec![0];
        let mut values = Vec::new();
        for p in db.palettes() {
            values.extend(p.iter().map(|b| b.as_f64()));
            offsets.push(values.len());
        }
        let entries = db.entries();
        let mut tables = EntryTables {
            longitude: entries.iter().map(|e| e.label.longitude).collect(),
            latitude: entries.iter().map(|e| e.label.latitude).collect(),
            floor: entries.iter().map(|e| e.label.floor).collect(),
            building: entries.iter().map(|e| e.label.building_id).collect(),
            source_record: entries.iter().map(|e| e.source_record).collect(),
            deviation_offsets: vec![0],
            deviation_features: Vec::new(),
            deviation_slots: Vec::new(),
        };
        for e in entries {
            for &(q, k) in &e.deviations {
                tables.deviation_features.push(q);
                tables.deviation_slots.push(k);
            }
            tables.deviation_offsets.push(tables.deviation_features.len());
        }
        Self {
            format: FORMAT.into(),
            version: VERSION,
            params,
            registry: db.registry().ids().to_vec(),
            tree: tree_tables,
            palettes: PaletteTables { offsets, values },
            entries: tables,
        }
    }

    pub fn into_database<S: Scalar>(self) -> Result<PlaceDatabase<S>> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported model {} v{} (expected {FORMAT} v{VERSION})",
                self.format, self.version
            )));
        }
        let n = self.tree.parent.len();
        let t = &self.tree;
        if t.marginal.len() != n || t.cond.len() != 4 * n || self.palettes.offsets.len() != n + 1 {
            return Err(Error::Model("tree or palette arrays have inconsistent lengths".into()));
        }
        let parent = t
            .parent
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 && (p as usize) < n => Ok(Some(p as usize)),
                p => Err(Error::Model(format!("parent index {p} out of range"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let tree = ChowLiuTree {
            roots: t.roots.clone(),
            parent,
            marginal: t.marginal.iter().map(|&m| S::lit(m)).collect(),
            cond: t
                .cond
                .chunks_exact(4)
                .map(|c| [S::lit(c[0]), S::lit(c[1]), S::lit(c[2]), S::lit(c[3])])
                .collect(),
        };
        tree.validate()?;
        let off = &self.palettes.offsets;
        if off.windows(2).any(|w| w[0] > w[1]) || off[n] != self.palettes.values.len() {
            return Err(Error::Model("palette offsets are not monotone".into()));
        }
        let palettes = (0..n)
            .map(|q| self.palettes.values[off[q]..off[q + 1]].iter().map(|&b| S::lit(b)).collect())
            .collect();

        let e = &self.entries;
        let m = e.longitude.len();
        let lengths_ok = [e.latitude.len(), e.floor.len(), e.building.len(), e.source_record.len()]
            .iter()
            .all(|&l| l == m)
            && e.deviation_offsets.len() == m + 1
            && e.deviation_features.len() == e.deviation_slots.len()
            && e.deviation_offsets.windows(2).all(|w| w[0] <= w[1])
            && e.deviation_offsets[m] == e.deviation_features.len();
        if !lengths_ok {
            return Err(Error::Model("entry arrays have inconsistent lengths".into()));
        }
        let entries = (0..m)
            .map(|i| {
                let range = e.deviation_offsets[i]..e.deviation_offsets[i + 1];
                PlaceEntry {
                    label: GroundTruth {
                        longitude: e.longitude[i],
                        latitude: e.latitude[i],
                        floor: e.floor[i],
                        building_id: e.building[i],
                    },
                    source_record: e.source_record[i],
                    deviations: e.deviation_features[range.clone()]
                        .iter()
                        .copied()
                        .zip(e.deviation_slots[range].iter().copied())
                        .collect(),
                }
            })
            .collect();
        let p = &self.params;
        let config = BinningConfig {
            range_low: p.range_low,
            range_high: p.range_high,
            bin_width: p.bin_width,
        };
        let detector = DetectorModel::new(S::lit(p.pzge), S::lit(p.pzgne))?;
        PlaceDatabase::from_parts(
            palettes,
            entries,
            tree,
            detector,
            config,
            ApRegistry::new(self.registry)?,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| {
            serde_json::to_writer(&mut *w, self)?;
            Ok(())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Runs `body` against a temporary file next to `path` and moves it into
/// place only on success.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut writer = BufWriter::new(file);
        body(&mut writer)?;
        writer.flush().map_err(|e| Error::io(&tmp, e))?;
        writer
            .into_inner()
            .map_err(|e| Error::io(&tmp, e.into_error()))?
            .sync_all()
            .map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Prepared, TrainConfig};
    use crate::synth::{generate, SynthSpec};
    use crate::featurize::featurize_scan;

    fn small() -> (PlaceDatabase<f64>, crate::dataset::Dataset) {
        let spec = SynthSpec {
            buildings: 1,
            floors: 2,
            test_scans: 20,
            ..SynthSpec::default()
        };
        let (train, test) = generate(&spec).unwrap();
        let prepared = Prepared::<f64>::new(train, TrainConfig::new(10.0, 3).unwrap()).unwrap();
        let db = prepared.database(DetectorModel::new(0.4916, 0.0055).unwrap()).unwrap();
        (db, test)
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let (db, test) = small();
        let file = ModelFile::from_database(&db, 3, 0.5, 1.0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        file.save(&path).unwrap();
        assert!(!dir.path().join("model.json.tmp").exists());
        let loaded = ModelFile::load(&path).unwrap();
        assert_eq!(loaded, file);
        let back: PlaceDatabase<f64> = loaded.into_database().unwrap();
        assert_eq!(back.len(), db.len());
        for r in &test.records {
            let z = featurize_scan(&r.scan, &test.registry, db.config()).unwrap();
            assert_eq!(db.log_likelihoods(&z).unwrap(), back.log_likelihoods(&z).unwrap());
        }
        assert_eq!(ModelFile::from_database(&back, 3, 0.5, 1.0, 1).to_json().unwrap(), file.to_json().unwrap());
    }

    #[test]
    fn loads_as_f32() {
        let (db, _) = small();
        let file = ModelFile::from_database(&db, 3, 0.5, 1.0, 1);
        let db32: PlaceDatabase<f32> = file.into_database().unwrap();
        assert_eq!(db32.len(), db.len());
    }

    #[test]
    fn rejects_wrong_version_and_corrupt_tables() {
        let (db, _) = small();
        let file = ModelFile::from_database(&db, 3, 0.5, 1.0, 1);
        let mut wrong = file.clone();
        wrong.version = VERSION + 1;
        assert!(matches!(wrong.into_database::<f64>(), Err(Error::Model(_))));
        let mut cut = file.clone();
        cut.tree.marginal.pop();
        assert!(cut.into_database::<f64>().is_err());
        let mut bad_parent = file.clone();
        bad_parent.tree.parent[0] = 1_000_000;
        assert!(bad_parent.into_database::<f64>().is_err());
        let mut entries = file;
        entries.entries.floor.pop();
        assert!(entries.into_database::<f64>().is_err());
    }

    #[test]
    fn failed_write_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        let r = write_atomic(&path, |_| Err(Error::Config("boom".into())));
        assert!(r.is_err());
        assert!(!path.exists());
        assert!(!dir.path().join("out.json.tmp").exists());
    }
}
