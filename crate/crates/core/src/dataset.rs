//! UJIIndoorLoc ingestion, the network registry, and the debug export format.
//!
//! A UJIIndoorLoc CSV has a header row followed by one row per scan: 520
//! `WAPnnn` columns holding RSSI in dBm (`100` marks a network that was not
//! detected), then `LONGITUDE, LATITUDE, FLOOR, BUILDINGID, SPACEID,
//! RELATIVEPOSITION, USERID, PHONEID, TIMESTAMP`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Cell value UJIIndoorLoc uses for "network not detected".
pub const NOT_DETECTED: f64 = 100.0;

/// Trailing metadata columns after the WAP block, in file order.
pub const META_COLUMNS: [&str; 9] = [
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
];

const MAX_FLOOR: i32 = 4;
const MAX_BUILDING: i32 = 2;

/// Ordered, duplicate-free list of network identifiers. The order defines the
/// feature-vector layout and never changes after construction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ApRegistry {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ApRegistry {
    pub fn new<I, T>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate network identifier {id:?}")));
            }
        }
        Ok(Self { ids, lookup })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// One measurement event: detected networks and their RSSI in dBm, sorted by
/// registry index. Undetected networks are simply absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WifiScan {
    readings: Vec<(usize, f64)>,
}

impl WifiScan {
    /// Validates indices against a registry of `registry_len` networks.
    pub fn new(mut readings: Vec<(usize, f64)>, registry_len: usize) -> Result<Self> {
        readings.sort_by_key(|&(i, _)| i);
        for w in readings.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateReading(w[0].0));
            }
        }
        if let Some(&(index, _)) = readings.last() {
            if index >= registry_len {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: registry_len,
                });
            }
        }
        Ok(Self { readings })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn readings(&self) -> &[(usize, f64)] {
        &self.readings
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.readings
            .binary_search_by_key(&index, |&(i, _)| i)
            .ok()
            .map(|pos| self.readings[pos].1)
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }
}

/// Position label of a scan. Coordinates are meters in the dataset's
/// projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub longitude: f64,
    pub latitude: f64,
    pub floor: i32,
    pub building_id: i32,
}

impl GroundTruth {
    pub fn same_floor(&self, other: &GroundTruth) -> bool {
        self.building_id == other.building_id && self.floor == other.floor
    }

    /// Planar distance between the two positions, ignoring floor and building.
    pub fn planar_distance(&self, other: &GroundTruth) -> f64 {
        (self.longitude - other.longitude).hypot(self.latitude - other.latitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scan: WifiScan,
    pub truth: GroundTruth,
    pub space_id: i32,
    pub relative_position: i32,
    pub user_id: i32,
    pub phone_id: i32,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub registry: ApRegistry,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Re-indexes every scan against `target`. Readings from networks that
    /// `target` does not know are dropped; their ids are returned, in the
    /// order of this dataset's registry.
    pub fn remap(&self, target: &ApRegistry) -> Result<(Dataset, Vec<String>)> {
        let map: Vec<Option<usize>> = self.registry.ids().iter().map(|id| target.index_of(id)).collect();
        let mut unknown = vec![false; map.len()];
        let records = self
            .records
            .iter()
            .map(|r| {
                let readings = r
                    .scan
                    .readings()
                    .iter()
                    .filter_map(|&(i, rssi)| {
                        if map[i].is_none() {
                            unknown[i] = true;
                        }
                        map[i].map(|j| (j, rssi))
                    })
                    .collect();
                Ok(Record {
                    scan: WifiScan::new(readings, target.len())?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let unknown = unknown
            .iter()
            .zip(self.registry.ids())
            .filter(|(&u, _)| u)
            .map(|(_, id)| id.clone())
            .collect();
        Ok((
            Dataset {
                records,
                registry: target.clone(),
            },
            unknown,
        ))
    }
}

pub fn registry_size(dataset: &Dataset) -> usize {
    dataset.registry.len()
}

/// Loads a UJIIndoorLoc CSV file.
pub fn load_ujiindoorloc(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ujiindoorloc(BufReader::new(file), &path.display().to_string())
}

/// Parses UJIIndoorLoc CSV content. `source` only labels error messages.
///
/// The WAP block is every leading header column up to `LONGITUDE`, so files
/// with fewer networks than the official 520 load too.
pub fn parse_ujiindoorloc<R: Read>(reader: R, source: &str) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = csv.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile {
            path: source.to_string(),
        });
    }
    let n_wap = header
        .iter()
        .position(|h| h == META_COLUMNS[0])
        .ok_or_else(|| Error::MalformedRow {
            row: 0,
            message: "header lacks LONGITUDE column".into(),
        })?;
    let meta: Vec<&str> = header.iter().skip(n_wap).collect();
    if meta != META_COLUMNS {
        return Err(Error::MalformedRow {
            row: 0,
            message: format!("expected trailing columns {META_COLUMNS:?}, found {meta:?}"),
        });
    }
    let registry = ApRegistry::new(header.iter().take(n_wap))?;
    let n_cols = header.len();

    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        // 1-based data row index, header excluded.
        let row_index = i + 1;
        let row = row?;
        if row.len() != n_cols {
            return Err(Error::MalformedRow {
                row: row_index,
                message: format!("expected {n_cols} columns, found {}", row.len()),
            });
        }
        let num = |col: usize| -> Result<f64> {
            row[col].parse::<f64>().map_err(|_| Error::MalformedRow {
                row: row_index,
                message: format!("column {} ({:?}) is not a number", &header[col], &row[col]),
            })
        };
        let int = |col: usize| -> Result<i64> {
            row[col].parse::<i64>().map_err(|_| Error::MalformedRow {
                row: row_index,
                message: format!("column {} ({:?}) is not an integer", &header[col], &row[col]),
            })
        };

        let mut readings = Vec::new();
        for col in 0..n_wap {
            let value = num(col)?;
            if value != NOT_DETECTED {
                readings.push((col, value));
            }
        }
        let truth = GroundTruth {
            longitude: num(n_wap)?,
            latitude: num(n_wap + 1)?,
            floor: int(n_wap + 2)? as i32,
            building_id: int(n_wap + 3)? as i32,
        };
        if !(0..=MAX_FLOOR).contains(&truth.floor) || !(0..=MAX_BUILDING).contains(&truth.building_id) {
            return Err(Error::MalformedRow {
                row: row_index,
                message: format!(
                    "floor {} / building {} outside the dataset's range",
                    truth.floor, truth.building_id
                ),
            });
        }
        records.push(Record {
            scan: WifiScan { readings },
            truth,
            space_id: int(n_wap + 4)? as i32,
            relative_position: int(n_wap + 5)? as i32,
            user_id: int(n_wap + 6)? as i32,
            phone_id: int(n_wap + 7)? as i32,
            timestamp: int(n_wap + 8)?,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile {
            path: source.to_string(),
        });
    }
    Ok(Dataset { records, registry })
}

/// Writes records in UJIIndoorLoc layout (absent readings as `100`).
pub fn write_ujiindoorloc<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let header: Vec<&str> = dataset
        .registry
        .ids()
        .iter()
        .map(String::as_str)
        .chain(META_COLUMNS)
        .collect();
    csv.write_record(&header)?;
    let mut cells = vec![String::new(); header.len()];
    let n_wap = dataset.registry.len();
    for record in &dataset.records {
        cells[..n_wap].iter_mut().for_each(|c| *c = "100".into());
        for &(i, rssi) in record.scan.readings() {
            cells[i] = rssi.to_string();
        }
        let t = &record.truth;
        cells[n_wap] = t.longitude.to_string();
        cells[n_wap + 1] = t.latitude.to_string();
        cells[n_wap + 2] = t.floor.to_string();
        cells[n_wap + 3] = t.building_id.to_string();
        cells[n_wap + 4] = record.space_id.to_string();
        cells[n_wap + 5] = record.relative_position.to_string();
        cells[n_wap + 6] = record.user_id.to_string();
        cells[n_wap + 7] = record.phone_id.to_string();
        cells[n_wap + 8] = record.timestamp.to_string();
        csv.write_record(&cells)?;
    }
    csv.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// One line of the debug export: `index,bssid=rssi;...,lon,lat,floor,building`.
pub fn export_line(index: usize, record: &Record, registry: &ApRegistry) -> String {
    let mut line = format!("{index},");
    for (k, &(i, rssi)) in record.scan.readings().iter().enumerate() {
        if k > 0 {
            line.push(';');
        }
        let id = registry.id(i).unwrap_or("?");
        let _ = write!(line, "{id}={rssi}");
    }
    let t = &record.truth;
    let _ = write!(
        line,
        ",{},{},{},{}",
        t.longitude, t.latitude, t.floor, t.building_id
    );
    line
}

pub fn export_records<W: Write>(dataset: &Dataset, mut writer: W) -> Result<()> {
    for (i, record) in dataset.records.iter().enumerate() {
        writeln!(writer, "{}", export_line(i, record, &dataset.registry))
            .map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

/// A parsed debug-export line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedRecord {
    pub index: usize,
    pub readings: Vec<(String, f64)>,
    pub truth: GroundTruth,
}

pub fn parse_export_line(line: &str) -> Result<ExportedRecord> {
    let bad = |message: &str| Error::MalformedRow {
        row: 0,
        message: format!("{message}: {line:?}"),
    };
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 6 {
        return Err(bad("expected 6 comma-separated fields"));
    }
    let index = fields[0].parse().map_err(|_| bad("bad index"))?;
    let mut readings = Vec::new();
    if !fields[1].is_empty() {
        for pair in fields[1].split(';') {
            let (id, rssi) = pair.split_once('=').ok_or_else(|| bad("bad reading"))?;
            readings.push((id.to_string(), rssi.parse().map_err(|_| bad("bad rssi"))?));
        }
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad coordinate"));
    let int = |s: &str| s.parse::<i32>().map_err(|_| bad("bad label"));
    Ok(ExportedRecord {
        index,
        readings,
        truth: GroundTruth {
            longitude: num(fields[2])?,
            latitude: num(fields[3])?,
            floor: int(fields[4])?,
            building_id: int(fields[5])?,
        },
    })
}

pub fn read_export<R: Read>(reader: R) -> Result<Vec<ExportedRecord>> {
    BufReader::new(reader)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            parse_export_line(&line)
        })
        .collect()
}
