//! Synthetic datasets in UJIIndoorLoc layout.
//!
//! Buildings are laid out side by side; every floor carries its own access
//! points and a regular grid of reference points. RSSI follows a log-distance
//! path-loss model with per-floor attenuation and Gaussian noise. Training
//! scans repeat at the exact reference coordinates, as in UJIIndoorLoc;
//! test scans are jittered around reference points and carry a per-scan
//! device offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{ApRegistry, Dataset, GroundTruth, Record, WifiScan};
use crate::error::{Error, Result};

const ORIGIN_LON: f64 = -7600.0;
const ORIGIN_LAT: f64 = 4_864_800.0;
const BUILDING_GAP: f64 = 120.0;
const TX_POWER: f64 = -32.0;
const PATH_LOSS_EXPONENT: f64 = 2.8;
const FLOOR_LOSS: f64 = 14.0;
const BUILDING_LOSS: f64 = 35.0;
const DETECTION_FLOOR: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub buildings: usize,
    pub floors: usize,
    pub aps_per_floor: usize,
    pub points_x: usize,
    pub points_y: usize,
    pub spacing: f64,
    pub scans_per_point: usize,
    pub test_scans: usize,
    pub noise_db: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            buildings: 2,
            floors: 3,
            aps_per_floor: 6,
            points_x: 5,
            points_y: 3,
            spacing: 6.0,
            scans_per_point: 14,
            test_scans: 120,
            noise_db: 4.0,
            seed: 1,
        }
    }
}

struct AccessPoint {
    building: usize,
    floor: usize,
    x: f64,
    y: f64,
}

/// Training and test sets sharing one registry.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    if spec.buildings == 0 || spec.buildings > 3 || spec.floors == 0 || spec.floors > 5 {
        return Err(Error::Config("synthetic layout needs 1-3 buildings and 1-5 floors".into()));
    }
    if spec.points_x == 0 || spec.points_y == 0 || spec.aps_per_floor == 0 || spec.scans_per_point == 0 {
        return Err(Error::Config("synthetic layout needs at least one point, AP and scan".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.points_x as f64 * spec.spacing;
    let depth = spec.points_y as f64 * spec.spacing;

    let mut aps = Vec::new();
    for building in 0..spec.buildings {
        for floor in 0..spec.floors {
            for _ in 0..spec.aps_per_floor {
                aps.push(AccessPoint {
                    building,
                    floor,
                    x: rng.gen_range(0.0..width),
                    y: rng.gen_range(0.0..depth),
                });
            }
        }
    }
    let registry = ApRegistry::new((1..=aps.len()).map(|i| format!("WAP{i:03}")))?;
    let noise = Normal::new(0.0, spec.noise_db).map_err(|e| Error::Config(e.to_string()))?;

    let mut points = Vec::new();
    for building in 0..spec.buildings {
        for floor in 0..spec.floors {
            for ix in 0..spec.points_x {
                for iy in 0..spec.points_y {
                    points.push((building, floor, (ix as f64 + 0.5) * spec.spacing, (iy as f64 + 0.5) * spec.spacing));
                }
            }
        }
    }

    let scan_at = |rng: &mut ChaCha8Rng, building: usize, floor: usize, x: f64, y: f64, offset: f64| {
        let readings = aps
            .iter()
            .enumerate()
            .filter_map(|(i, ap)| {
                let d = (ap.x - x).hypot(ap.y - y).max(1.0);
                let mut rssi = TX_POWER - 10.0 * PATH_LOSS_EXPONENT * d.log10()
                    - FLOOR_LOSS * (ap.floor as f64 - floor as f64).abs()
                    + noise.sample(rng)
                    + offset;
                if ap.building != building {
                    rssi -= BUILDING_LOSS;
                }
                (rssi >= DETECTION_FLOOR).then(|| (i, rssi.round().min(0.0)))
            })
            .collect();
        WifiScan::new(readings, aps.len())
    };
    let truth = |building: usize, floor: usize, x: f64, y: f64| GroundTruth {
        longitude: ORIGIN_LON + building as f64 * (width + BUILDING_GAP) + x,
        latitude: ORIGIN_LAT + y,
        floor: floor as i32,
        building_id: building as i32,
    };

    let mut train = Vec::new();
    let mut timestamp = 1_371_000_000i64;
    for (space, &(b, f, x, y)) in points.iter().enumerate() {
        for _ in 0..spec.scans_per_point {
            timestamp += 7;
            train.push(Record {
                scan: scan_at(&mut rng, b, f, x, y, 0.0)?,
                truth: truth(b, f, x, y),
                space_id: space as i32,
                relative_position: 1,
                user_id: rng.gen_range(1..=18),
                phone_id: rng.gen_range(1..=24),
                timestamp,
            });
        }
    }

    let mut test = Vec::new();
    for _ in 0..spec.test_scans {
        let (b, f, x, y) = points[rng.gen_range(0..points.len())];
        let (x, y) = (x + rng.gen_range(-1.5..1.5), y + rng.gen_range(-1.5..1.5));
        let offset = rng.gen_range(-4.0..4.0);
        timestamp += 11;
        test.push(Record {
            scan: scan_at(&mut rng, b, f, x, y, offset)?,
            truth: truth(b, f, x, y),
            space_id: 0,
            relative_position: 0,
            user_id: 0,
            phone_id: rng.gen_range(1..=24),
            timestamp,
        });
    }

    Ok((
        Dataset {
            records: train,
            registry: registry.clone(),
        },
        Dataset {
            records: test,
            registry,
        },
    ))
}
