use serde::{Deserialize, Serialize};

use super::{Inputs, ModelError};
use crate::labeling::HISTORY_LEN;
use crate::market_data::{synth_series, window, Candle, SynthParams};
use crate::neural::{stack, Tensor};
use crate::raster::{render_window, RenderSpec};
use crate::rng::{stage_seed, SeededRng};

/// Train/validation/test fractions. The test partition takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    /// Split each member series by time order instead of shuffling.
    pub chronological: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.15,
            chronological: true,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.train_frac > 0.0 && self.val_frac > 0.0 && self.train_frac + self.val_frac < 1.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::BadConfig(format!(
                "split fractions train={} val={} must be positive with sum < 1",
                self.train_frac, self.val_frac
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Split {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
        }
    }
}

/// Partitions sample indices given each sample's `(member, order)` key.
///
/// In chronological mode every member is sorted by `order` and cut into
/// `floor(n * train_frac)` training samples, `floor(n * val_frac)` validation
/// samples and the rest for test; the per-member partitions are concatenated
/// in order of first appearance. Otherwise indices are shuffled with `seed`
/// and cut the same way.
pub fn split_indices(keys: &[(&str, i64)], cfg: &SplitConfig, seed: u64) -> Result<Split, ModelError> {
    cfg.validate()?;
    let cut = |idx: &[usize], split: &mut Split| {
        let n = idx.len() as f64;
        let n_train = (n * cfg.train_frac).floor() as usize;
        let n_val = (n * cfg.val_frac).floor() as usize;
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    };
    let mut split = Split::default();
    if cfg.chronological {
        let mut members: Vec<&str> = Vec::new();
        for &(m, _) in keys {
            if !members.contains(&m) {
                members.push(m);
            }
        }
        for m in members {
            let mut idx: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].0 == m).collect();
            idx.sort_by_key(|&i| (keys[i].1, i));
            cut(&idx, &mut split);
        }
    } else {
        let mut idx: Vec<usize> = (0..keys.len()).collect();
        SeededRng::new(stage_seed(seed, "split")).shuffle(&mut idx);
        cut(&idx, &mut split);
    }
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            return Err(ModelError::EmptyPartition(format!(
                "{name} partition is empty ({} samples total)",
                keys.len()
            )));
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSample {
    /// Flattened history image `[C, H, W]`.
    pub primary: Vec<f32>,
    /// Flattened pattern crop, present for two-stream datasets.
    pub secondary: Option<Vec<f32>>,
    pub label: bool,
    pub member: String,
    pub order: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierDataset {
    pub primary_shape: Vec<usize>,
    pub secondary_shape: Option<Vec<usize>>,
    pub samples: Vec<ClassifierSample>,
}

impl ClassifierDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.samples[i].label).collect()
    }

    pub fn split(&self, cfg: &SplitConfig, seed: u64) -> Result<Split, ModelError> {
        let keys: Vec<(&str, i64)> = self.samples.iter().map(|s| (s.member.as_str(), s.order)).collect();
        split_indices(&keys, cfg, seed)
    }

    /// Batched inputs for the given sample indices.
    pub fn inputs(&self, idx: &[usize]) -> Result<Inputs, ModelError> {
        let primary: Vec<&[f32]> = idx.iter().map(|&i| self.samples[i].primary.as_slice()).collect();
        let primary = stack(&self.primary_shape, &primary)?;
        let secondary = match &self.secondary_shape {
            Some(shape) => {
                let rows = idx
                    .iter()
                    .map(|&i| {
                        self.samples[i].secondary.as_deref().ok_or_else(|| {
                            ModelError::BadConfig(format!("sample {i} has no pattern image"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(stack(shape, &rows)?)
            }
            None => None,
        };
        Ok(Inputs { primary, secondary })
    }

    /// Target tensor `[N, 1]` with 1 for the positive class.
    pub fn targets(&self, idx: &[usize]) -> Tensor<f32> {
        let data = idx.iter().map(|&i| f32::from(u8::from(self.samples[i].label))).collect();
        Tensor::new(vec![idx.len(), 1], data).expect("target length matches shape")
    }

    /// The same dataset with its labels permuted by a seeded shuffle.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        let mut labels: Vec<bool> = self.samples.iter().map(|s| s.label).collect();
        SeededRng::new(stage_seed(seed, "label-shuffle")).shuffle(&mut labels);
        let mut out = self.clone();
        for (s, y) in out.samples.iter_mut().zip(labels) {
            s.label = y;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcpSample {
    /// `seq_len` flattened sub-charts, each `[C, H, W]`, in chart order.
    pub subcharts: Vec<Vec<f32>>,
    pub label: bool,
    pub member: String,
    pub order: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcpDataset {
    pub subchart_shape: Vec<usize>,
    pub samples: Vec<DcpSample>,
}

impl DcpDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, cfg: &SplitConfig, seed: u64) -> Result<Split, ModelError> {
        let keys: Vec<(&str, i64)> = self.samples.iter().map(|s| (s.member.as_str(), s.order)).collect();
        split_indices(&keys, cfg, seed)
    }
}

/// A dataset whose label is decided by one planted visual feature: the body
/// fraction (body / range) of the final candle, which spans the full price
/// range of its 30-candle window. Fractions alternate between `[0.1, 0.4]`
/// and `[0.6, 0.9]`; the label is `fraction > median`.
pub fn planted_body_fraction_dataset(
    seed: u64,
    n: usize,
    spec: &RenderSpec,
    image_side: usize,
) -> Result<ClassifierDataset, ModelError> {
    let bad = |e: &dyn std::fmt::Display| ModelError::BadConfig(e.to_string());
    let mut fractions = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    let params = SynthParams::default();
    for i in 0..n {
        let mut rng = SeededRng::new(stage_seed(seed, &format!("planted:{i}")));
        let series = synth_series(rng.next_u64(), HISTORY_LEN, &params).map_err(|e| bad(&e))?;
        let mut candles = series.candles().to_vec();
        let (lo, hi) = crate::market_data::price_bounds(&candles[..HISTORY_LEN - 1])
            .expect("history is non-empty");
        let fraction = if i % 2 == 0 {
            rng.uniform_range(0.1, 0.4)
        } else {
            rng.uniform_range(0.6, 0.9)
        };
        let body = fraction * (hi - lo);
        let bottom = lo + rng.uniform() * (hi - lo - body);
        let (open, close) = if rng.uniform() < 0.5 {
            (bottom, bottom + body)
        } else {
            (bottom + body, bottom)
        };
        let last = candles.last_mut().expect("history is non-empty");
        *last = Candle::new(last.timestamp, open, hi, lo, close);
        let series = crate::market_data::Series::new(series.symbol(), candles).map_err(|e| bad(&e))?;
        let w = window(&series, HISTORY_LEN - 1, HISTORY_LEN).map_err(|e| bad(&e))?;
        let image = render_window(&w, spec).map_err(|e| bad(&e))?;
        images.push(image.resize_nearest(image_side, image_side).to_chw());
        fractions.push(fraction);
    }
    let mut sorted = fractions.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => 0.0,
        m if m % 2 == 1 => sorted[m / 2],
        m => 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]),
    };
    let samples = images
        .into_iter()
        .zip(&fractions)
        .enumerate()
        .map(|(i, (primary, &f))| ClassifierSample {
            primary,
            secondary: None,
            label: f > median,
            member: "planted".into(),
            order: i as i64,
        })
        .collect();
    Ok(ClassifierDataset {
        primary_shape: vec![3, image_side, image_side],
        secondary_shape: None,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chronological_split_per_member() {
        let keys = [("a", 3), ("a", 1), ("b", 0), ("a", 2), ("b", 1), ("a", 0), ("b", 2), ("b", 3)];
        let cfg = SplitConfig { train_frac: 0.5, val_frac: 0.25, chronological: true };
        let s = split_indices(&keys, &cfg, 0).unwrap();
        assert_eq!(s.train, vec![5, 1, 2, 4]);
        assert_eq!(s.val, vec![3, 6]);
        assert_eq!(s.test, vec![0, 7]);
    }

    #[test]
    fn empty_partition_is_an_error() {
        let keys = [("a", 0), ("a", 1)];
        let err = split_indices(&keys, &SplitConfig::default(), 0).unwrap_err();
        assert!(matches!(err, ModelError::EmptyPartition(_)));
    }

    #[test]
    fn shuffled_split_is_a_partition() {
        let keys: Vec<(&str, i64)> = (0..20).map(|i| ("x", i)).collect();
        let cfg = SplitConfig { chronological: false, ..SplitConfig::default() };
        let s = split_indices(&keys, &cfg, 9).unwrap();
        assert_eq!(s.sizes(), SplitSizes { train: 14, val: 3, test: 3 });
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(s, split_indices(&keys, &cfg, 9).unwrap());
    }

    #[test]
    fn bad_fractions() {
        let cfg = SplitConfig { train_frac: 0.9, val_frac: 0.1, chronological: true };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn planted_labels_alternate() {
        let ds = planted_body_fraction_dataset(3, 10, &RenderSpec::default(), 64).unwrap();
        assert_eq!(ds.len(), 10);
        for (i, s) in ds.samples.iter().enumerate() {
            assert_eq!(s.label, i % 2 == 1);
            assert_eq!(s.primary.len(), 3 * 64 * 64);
        }
        let shuffled = ds.with_shuffled_labels(1);
        assert_eq!(shuffled.samples.iter().filter(|s| s.label).count(), 5);
    }
}
