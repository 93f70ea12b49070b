//! Signal data model, constant-factor amplitude scaling, splitting, synthetic
//! data and on-disk formats.
//!
//! Amplitudes are held as `f64` in memory and stored as little-endian `f32`
//! on disk, so datasets whose samples are `f32`-representable roundtrip
//! exactly. [`synth_dataset`] emits such samples.

mod ingest;
mod sdf;
mod synth;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use ingest::load_csv_manifest;
pub use sdf::{load_dataset, read_dataset, save_dataset, write_dataset, SDF_MAGIC, SDF_VERSION};
pub use synth::{default_band, synth_dataset, SynthSpec};

/// Scaled amplitudes are confined to `[-SCALED_BOUND, SCALED_BOUND]`.
pub const SCALED_BOUND: f64 = 4.0;

/// A `C × L` block of samples, channel-major, with an optional class label.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSegment {
    channels: usize,
    len: usize,
    data: Vec<f64>,
    label: Option<usize>,
}

impl SignalSegment {
    pub fn new(channels: usize, len: usize, data: Vec<f64>, label: Option<usize>) -> Result<Self> {
        if channels == 0 || len == 0 {
            return Err(Error::invalid(format!(
                "segment needs C >= 1 and L >= 1, got {channels}x{len}"
            )));
        }
        if data.len() != channels * len {
            return Err(Error::shape(format!(
                "{} samples for a {channels}x{len} segment",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is {}", data[i])));
        }
        Ok(Self {
            channels,
            len,
            data,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.channels,
            self.len,
            self.data.iter().map(|&v| f(v)).collect(),
            self.label,
        )
    }
}

/// A set of equally shaped segments plus dataset-level metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalDataset {
    segments: Vec<SignalSegment>,
    num_classes: usize,
    /// Set when the samples are in the scaled domain (divided by this factor).
    scale_factor: Option<f64>,
    sample_rate_hz: f64,
}

impl SignalDataset {
    pub fn new(
        segments: Vec<SignalSegment>,
        num_classes: usize,
        scale_factor: Option<f64>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate {sample_rate_hz} must be positive")));
        }
        if let Some(s) = scale_factor {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("scale factor {s} must be positive")));
            }
        }
        if let Some(first) = segments.first() {
            let (c, l) = (first.channels, first.len);
            for (i, seg) in segments.iter().enumerate() {
                if seg.channels != c || seg.len != l {
                    return Err(Error::shape(format!(
                        "segment {i} is {}x{}, dataset is {c}x{l}",
                        seg.channels, seg.len
                    )));
                }
                if let Some(y) = seg.label {
                    if y >= num_classes {
                        return Err(Error::invalid(format!(
                            "segment {i} label {y} outside [0, {num_classes})"
                        )));
                    }
                }
                if scale_factor.is_some() && seg.max_abs() > SCALED_BOUND + 1e-6 {
                    return Err(Error::invalid(format!(
                        "segment {i} exceeds the scaled range (max |z| = {})",
                        seg.max_abs()
                    )));
                }
            }
        }
        Ok(Self {
            segments,
            num_classes,
            scale_factor,
            sample_rate_hz,
        })
    }

    pub fn segments(&self) -> &[SignalSegment] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<SignalSegment> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn scale_factor(&self) -> Option<f64> {
        self.scale_factor
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// `(C, L)`, or `None` for an empty dataset.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.segments.first().map(|s| (s.channels, s.len))
    }

    /// True when every segment carries a label (and there is at least one).
    pub fn is_labeled(&self) -> bool {
        !self.segments.is_empty() && self.segments.iter().all(|s| s.label.is_some())
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.segments.iter().map(|s| s.label).collect()
    }

    /// Segments at `indices`, in that order, with the same metadata.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            segments: indices.iter().map(|&i| self.segments[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            segments: Vec::new(),
            num_classes: self.num_classes,
            scale_factor: self.scale_factor,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Appends `other`'s segments; shapes and class counts must agree.
    pub fn concat(&self, other: &SignalDataset) -> Result<Self> {
        if self.num_classes != other.num_classes {
            return Err(Error::shape(format!(
                "class counts differ: {} vs {}",
                self.num_classes, other.num_classes
            )));
        }
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Self::new(segments, self.num_classes, self.scale_factor, self.sample_rate_hz)
    }
}

/// `max |x| / 4` over the whole dataset, or 1 when every sample is zero.
pub fn compute_scale_factor(dataset: &SignalDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot compute a scale factor of an empty dataset"));
    }
    let mut max = 0.0f64;
    for seg in &dataset.segments {
        for &v in &seg.data {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sample value {v}")));
            }
            max = max.max(v.abs());
        }
    }
    Ok(if max == 0.0 { 1.0 } else { max / SCALED_BOUND })
}

fn check_factor(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("scale factor must be positive, got {s}")))
    }
}

pub fn scale(x: &SignalSegment, s: f64) -> Result<SignalSegment> {
    check_factor(s)?;
    x.map(|v| v / s)
}

pub fn unscale(z: &SignalSegment, s: f64) -> Result<SignalSegment> {
    check_factor(s)?;
    z.map(|v| v * s)
}

/// Divides every segment by `s` and records `s` on the result.
pub fn scale_dataset(dataset: &SignalDataset, s: f64) -> Result<SignalDataset> {
    check_factor(s)?;
    let segments = dataset
        .segments
        .iter()
        .map(|x| scale(x, s))
        .collect::<Result<Vec<_>>>()?;
    SignalDataset::new(segments, dataset.num_classes, Some(s), dataset.sample_rate_hz)
}

/// Multiplies every segment by `s`; the result is in the amplitude domain.
pub fn unscale_dataset(dataset: &SignalDataset, s: f64) -> Result<SignalDataset> {
    check_factor(s)?;
    let segments = dataset
        .segments
        .iter()
        .map(|z| unscale(z, s))
        .collect::<Result<Vec<_>>>()?;
    SignalDataset::new(segments, dataset.num_classes, None, dataset.sample_rate_hz)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::invalid(format!("split fractions must be nonnegative: {fr:?}")));
        }
        let total: f64 = fr.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Original-index membership of each split part, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Minimum dataset size accepted by [`split_dataset`].
pub const MIN_SPLIT_SIZE: usize = 5;

/// Stratified membership for a split of `labels`.
///
/// Within each label group the order is shuffled under `spec.seed`. Items are
/// then ranked by their relative position inside their group, so every prefix
/// of the ranking is close to class-proportional and the first item of every
/// group comes first. Train takes the head of the ranking, then val, then test.
pub fn split_indices(labels: &[Option<usize>], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = labels.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::invalid(format!(
            "splitting needs at least {MIN_SPLIT_SIZE} segments, got {n}"
        )));
    }
    let n_val = (spec.val_frac * n as f64).round() as usize;
    let n_test = (spec.test_frac * n as f64).round() as usize;
    let n_test = n_test.min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut groups: std::collections::BTreeMap<Option<usize>, Vec<usize>> = Default::default();
    for (i, y) in labels.iter().enumerate() {
        groups.entry(*y).or_default().push(i);
    }
    let mut rng = seed::rng(spec.seed);
    // (rank / group size, group order, index)
    let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for (gi, members) in groups.values_mut().enumerate() {
        members.shuffle(&mut rng);
        let size = members.len() as f64;
        for (r, &idx) in members.iter().enumerate() {
            ranked.push((r as f64 / size, gi, idx));
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = ranked.into_iter().map(|(_, _, i)| i).collect();
    let part = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    })
}

/// Splits into `(train, val, test)`; see [`split_indices`].
pub fn split_dataset(
    dataset: &SignalDataset,
    spec: &SplitSpec,
) -> Result<(SignalDataset, SignalDataset, SignalDataset)> {
    let idx = split_indices(&dataset.labels(), spec)?;
    Ok((
        dataset.subset(&idx.train),
        dataset.subset(&idx.val),
        dataset.subset(&idx.test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(v: &[f64]) -> SignalSegment {
        SignalSegment::new(1, v.len(), v.to_vec(), None).unwrap()
    }

    fn ds(segs: Vec<SignalSegment>, k: usize) -> SignalDataset {
        SignalDataset::new(segs, k, None, 128.0).unwrap()
    }

    #[test]
    fn segment_rejects_bad_input() {
        assert!(SignalSegment::new(0, 4, vec![], None).is_err());
        assert!(SignalSegment::new(1, 3, vec![1.0; 4], None).is_err());
        assert!(matches!(
            SignalSegment::new(1, 2, vec![1.0, f64::NAN], None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn dataset_rejects_label_out_of_range_and_shape_mix() {
        let a = seg(&[1.0, 2.0]).with_label(Some(2));
        assert!(SignalDataset::new(vec![a], 2, None, 1.0).is_err());
        assert!(SignalDataset::new(vec![seg(&[1.0]), seg(&[1.0, 2.0])], 1, None, 1.0).is_err());
    }

    #[test]
    fn scale_factor_examples() {
        let d = ds(vec![seg(&[10.0, -100.0, 3.0])], 1);
        assert_eq!(compute_scale_factor(&d).unwrap(), 25.0);
        let z = ds(vec![seg(&[0.0, 0.0])], 1);
        assert_eq!(compute_scale_factor(&z).unwrap(), 1.0);
        let two = ds(vec![seg(&[80.0, -5.0]), seg(&[-120.0, 1.0])], 1);
        assert_eq!(compute_scale_factor(&two).unwrap(), 30.0);
        assert!(compute_scale_factor(&ds(vec![], 1)).is_err());
    }

    #[test]
    fn scale_and_unscale_examples() {
        assert_eq!(scale(&seg(&[8.0, -4.0, 0.0]), 2.0).unwrap().data(), &[4.0, -2.0, 0.0]);
        let x = seg(&[1.5, -2.25]);
        assert_eq!(scale(&x, 1.0).unwrap(), x);
        assert_eq!(scale(&seg(&[100.0]), 25.0).unwrap().data(), &[4.0]);
        assert_eq!(unscale(&seg(&[4.0, -2.0]), 2.0).unwrap().data(), &[8.0, -4.0]);
        assert_eq!(unscale(&x, 1.0).unwrap(), x);
        assert!(scale(&x, 0.0).is_err());
        assert!(unscale(&x, -1.0).is_err());
        let labeled = x.clone().with_label(Some(3));
        assert_eq!(scale(&labeled, 2.0).unwrap().label(), Some(3));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let segs: Vec<_> = (0..10).map(|i| seg(&[i as f64])).collect();
        let d = ds(segs, 1);
        let spec = SplitSpec {
            seed: 7,
            ..Default::default()
        };
        let (tr, va, te) = split_dataset(&d, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (6, 2, 2));
        assert_eq!(split_dataset(&d, &spec).unwrap(), (tr, va, te));
        let bad = SplitSpec {
            train_frac: 0.5,
            ..spec
        };
        assert!(split_dataset(&d, &bad).is_err());
        assert!(split_dataset(&ds(vec![seg(&[1.0]); 4], 1), &spec).is_err());
    }

    #[test]
    fn stratified_split_keeps_each_class_in_train() {
        let labels: Vec<Option<usize>> = (0..10).map(|i| Some(i / 5)).collect();
        for seed in 0..50 {
            let idx = split_indices(&labels, &SplitSpec { seed, ..Default::default() }).unwrap();
            assert_eq!(idx.train.len(), 6);
            for class in 0..2 {
                let count = |part: &[usize]| part.iter().filter(|&&i| labels[i] == Some(class)).count();
                assert!(count(&idx.train) >= 1, "seed {seed} class {class}");
                // Balanced classes split 3/1/1.
                assert_eq!(count(&idx.train), 3);
                assert_eq!(count(&idx.val), 1);
                assert_eq!(count(&idx.test), 1);
            }
        }
    }

    proptest! {
        #[test]
        fn split_parts_are_disjoint_and_exhaustive(n in 5usize..200, k in 1usize..5, seed in any::<u64>()) {
            let labels: Vec<Option<usize>> = (0..n).map(|i| Some((i * 7 + i / 3) % k)).collect();
            let idx = split_indices(&labels, &SplitSpec { seed, ..Default::default() }).unwrap();
            let mut all: Vec<usize> = idx.train.iter().chain(&idx.val).chain(&idx.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            // Every class fits in train whenever train has room for one of each.
            let present = (0..k).filter(|c| labels.contains(&Some(*c))).count();
            if present <= idx.train.len() {
                for class in 0..k {
                    if labels.contains(&Some(class)) {
                        prop_assert!(idx.train.iter().any(|&i| labels[i] == Some(class)));
                    }
                }
            }
            prop_assert!(!idx.val.is_empty() && !idx.test.is_empty());
        }

        #[test]
        fn scaled_dataset_attains_the_bound(
            values in proptest::collection::vec(-1e4f64..1e4, 1..64),
            split in 1usize..4,
        ) {
            let segs: Vec<_> = values.chunks(split).filter(|c| c.len() == split).map(seg).collect();
            prop_assume!(!segs.is_empty());
            let d = ds(segs, 1);
            let s = compute_scale_factor(&d).unwrap();
            let z = scale_dataset(&d, s).unwrap();
            let max = z.segments().iter().map(SignalSegment::max_abs).fold(0.0, f64::max);
            prop_assert!(max <= SCALED_BOUND + 1e-9);
            let all_zero = d.segments().iter().all(|x| x.max_abs() == 0.0);
            if !all_zero {
                prop_assert!((max - SCALED_BOUND).abs() <= 1e-9);
            }
        }

        #[test]
        fn unscale_inverts_scale(values in proptest::collection::vec(-1e6f64..1e6, 1..32), s in 1e-3f64..1e3) {
            let x = seg(&values);
            let back = unscale(&scale(&x, s).unwrap(), s).unwrap();
            for (a, b) in x.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
            // Single precision path.
            let xs: Vec<f32> = values.iter().map(|&v| v as f32).collect();
            let sf = s as f32;
            for &v in &xs {
                let r = (v / sf) * sf;
                prop_assert!((r - v).abs() <= 1e-5 * v.abs().max(f32::MIN_POSITIVE));
            }
        }
    }
}
