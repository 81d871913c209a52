//! Thresholded-RSSI binary features.
//!
//! Every registered network contributes one sub-vector with a bit per
//! threshold; bit `j` is set when the reading strictly exceeds threshold `j`.
//! Sub-vectors are concatenated network-major.

use serde::{Deserialize, Serialize};

use crate::dataset::{ApRegistry, WifiScan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub range_low: f64,
    pub range_high: f64,
    pub bin_width: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            range_low: -110.0,
            range_high: -10.0,
            bin_width: 10.0,
        }
    }
}

impl BinningConfig {
    pub fn with_width(bin_width: f64) -> Result<Self> {
        let config = Self {
            bin_width,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_low < self.range_high) {
            return Err(Error::Config(format!(
                "range_low {} must be below range_high {}",
                self.range_low, self.range_high
            )));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::Config(format!("bin width {} must be positive", self.bin_width)));
        }
        let steps = (self.range_high - self.range_low) / self.bin_width;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "bin width {} does not divide the range [{}, {}]",
                self.bin_width, self.range_low, self.range_high
            )));
        }
        Ok(())
    }

    /// Number of thresholds, which is also the sub-vector length per network.
    pub fn bins_per_network(&self) -> usize {
        ((self.range_high - self.range_low) / self.bin_width).round() as usize + 1
    }

    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.bins_per_network())
            .map(|j| self.range_low + j as f64 * self.bin_width)
            .collect()
    }
}

/// Thresholds `range_low + j * bin_width`, endpoints included.
pub fn make_thresholds(config: &BinningConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(config.thresholds())
}

/// Number of thresholds strictly below `rssi`. The sub-vector is that many
/// ones followed by zeros.
pub fn bits_set(rssi: f64, thresholds: &[f64]) -> usize {
    thresholds.partition_point(|&t| rssi > t)
}

pub fn binarize_reading(rssi: f64, config: &BinningConfig) -> Vec<bool> {
    let thresholds = config.thresholds();
    let set = bits_set(rssi, &thresholds);
    (0..thresholds.len()).map(|j| j < set).collect()
}

/// Fixed-length packed bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    words: Vec<u64>,
    len: usize,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i);
            }
        }
        v
    }

    pub fn from_ones(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.set(i);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Config(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bits(&bits))
    }
}

/// Network-major concatenation of every network's sub-vector.
pub fn featurize_scan(
    scan: &WifiScan,
    registry: &ApRegistry,
    config: &BinningConfig,
) -> Result<FeatureVector> {
    config.validate()?;
    let thresholds = config.thresholds();
    let k = thresholds.len();
    let mut v = FeatureVector::zeros(registry.len() * k);
    for &(net, rssi) in scan.readings() {
        if net >= registry.len() {
            return Err(Error::IndexOutOfRange {
                index: net,
                len: registry.len(),
            });
        }
        for j in 0..bits_set(rssi, &thresholds) {
            v.set(net * k + j);
        }
    }
    Ok(v)
}
