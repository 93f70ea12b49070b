use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{SignalDataset, SignalSegment};
use crate::error::{Error, Result};
use crate::seed;

/// Recipe for a labeled dataset of band-limited multi-tone signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub len: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
    /// Per-class `[low, high]` frequency band in Hz; `None` uses [`default_band`].
    pub bands: Option<Vec<[f64; 2]>>,
    /// Sinusoids summed per channel.
    pub tones: usize,
    /// Nominal amplitude of each tone, microvolts.
    pub amplitude: f64,
    /// Relative amplitude jitter (uniform in `1 ± jitter`).
    pub amplitude_jitter: f64,
    /// Noise standard deviation as a fraction of the clean signal RMS.
    pub noise_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            per_class: 32,
            channels: 1,
            len: 256,
            sample_rate_hz: 128.0,
            seed: 1,
            bands: None,
            tones: 3,
            amplitude: 20.0,
            amplitude_jitter: 0.2,
            noise_fraction: 0.1,
        }
    }
}

/// Class `j` occupies `[2 + 6j, 6 + 6j]` Hz.
pub fn default_band(class: usize) -> [f64; 2] {
    let lo = 2.0 + 6.0 * class as f64;
    [lo, lo + 4.0]
}

impl SynthSpec {
    pub fn bands(&self) -> Vec<[f64; 2]> {
        self.bands
            .clone()
            .unwrap_or_else(|| (0..self.num_classes).map(default_band).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be >= 1"));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per_class must be >= 1"));
        }
        if self.channels == 0 || self.len < 2 {
            return Err(Error::invalid(format!(
                "channels/len must be >= 1/2, got {}/{}",
                self.channels, self.len
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if self.tones == 0 {
            return Err(Error::invalid("tones must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) || self.noise_fraction < 0.0 {
            return Err(Error::invalid("amplitude_jitter must be in [0,1), noise_fraction >= 0"));
        }
        let bands = self.bands();
        if bands.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "bands has {} entries for {} classes",
                bands.len(),
                self.num_classes
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for (j, [lo, hi]) in bands.iter().enumerate() {
            if !(*lo >= 0.0 && lo < hi) {
                return Err(Error::invalid(format!("bands[{j}] = [{lo}, {hi}] is not an interval")));
            }
            if *hi >= nyquist {
                return Err(Error::invalid(format!(
                    "bands[{j}] top {hi} Hz is at or above the Nyquist frequency {nyquist} Hz"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the dataset described by `spec`; segment `i` draws from its own
/// stream derived from `(spec.seed, i)`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SignalDataset> {
    spec.validate()?;
    let bands = spec.bands();
    let mut segments = Vec::with_capacity(spec.num_classes * spec.per_class);
    for (class, [lo, hi]) in bands.iter().enumerate() {
        for j in 0..spec.per_class {
            let index = (class * spec.per_class + j) as u64;
            let mut rng = seed::rng(seed::derive(spec.seed, index));
            let mut data = Vec::with_capacity(spec.channels * spec.len);
            for _ in 0..spec.channels {
                let mut clean = vec![0.0; spec.len];
                for _ in 0..spec.tones {
                    let f = rng.random_range(*lo..=*hi);
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let jitter = if spec.amplitude_jitter > 0.0 {
                        rng.random_range(1.0 - spec.amplitude_jitter..=1.0 + spec.amplitude_jitter)
                    } else {
                        1.0
                    };
                    let a = spec.amplitude * jitter;
                    for (n, v) in clean.iter_mut().enumerate() {
                        *v += a * (2.0 * PI * f * n as f64 / spec.sample_rate_hz + phase).sin();
                    }
                }
                let rms = (clean.iter().map(|v| v * v).sum::<f64>() / spec.len as f64).sqrt();
                let sd = spec.noise_fraction * rms;
                if sd > 0.0 {
                    let noise = Normal::new(0.0, sd).expect("positive noise sd");
                    for v in clean.iter_mut() {
                        *v += noise.sample(&mut rng);
                    }
                }
                data.extend(clean.into_iter().map(|v| v as f32 as f64));
            }
            segments.push(SignalSegment::new(spec.channels, spec.len, data, Some(class))?);
        }
    }
    SignalDataset::new(segments, spec.num_classes, None, spec.sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::magnitude_spectrum;

    fn peak_bin(spectrum: &[f64]) -> usize {
        spectrum
            .iter()
            .enumerate()
            .skip(1)
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }

    #[test]
    fn class_spectra_peak_inside_their_bands() {
        let spec = SynthSpec {
            num_classes: 2,
            per_class: 32,
            seed: 1,
            ..Default::default()
        };
        let d = synth_dataset(&spec).unwrap();
        assert_eq!(d.len(), 64);
        assert!(d.is_labeled());
        let bin_hz = spec.sample_rate_hz / spec.len as f64;
        let mut mean_peaks = Vec::new();
        for class in 0..2 {
            let [lo, hi] = default_band(class);
            let mut mean = vec![0.0; spec.len / 2 + 1];
            for seg in d.segments().iter().filter(|s| s.label() == Some(class)) {
                let mag = magnitude_spectrum(seg.channel(0));
                let f = peak_bin(&mag) as f64 * bin_hz;
                assert!(f >= lo && f <= hi, "class {class} segment peak at {f} Hz");
                for (m, v) in mean.iter_mut().zip(&mag) {
                    *m += v;
                }
            }
            mean_peaks.push(peak_bin(&mean));
        }
        assert_ne!(mean_peaks[0], mean_peaks[1]);
    }

    #[test]
    fn deterministic_and_f32_exact() {
        let spec = SynthSpec::default();
        let a = synth_dataset(&spec).unwrap();
        assert_eq!(a, synth_dataset(&spec).unwrap());
        assert!(a
            .segments()
            .iter()
            .flat_map(|s| s.data())
            .all(|&v| v == v as f32 as f64));
        let other = synth_dataset(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn nyquist_violation_is_rejected() {
        // Class 10 would need [62, 66] Hz at a 128 Hz sample rate.
        let spec = SynthSpec {
            num_classes: 11,
            ..Default::default()
        };
        let err = synth_dataset(&spec).unwrap_err().to_string();
        assert!(err.contains("bands[10]"), "{err}");
        let bad = SynthSpec {
            bands: Some(vec![[5.0, 3.0]]),
            num_classes: 1,
            ..Default::default()
        };
        assert!(synth_dataset(&bad).is_err());
    }
}
