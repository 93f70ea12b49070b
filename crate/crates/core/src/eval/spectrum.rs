use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{magnitude_spectrum, num_bins};
use crate::signal::SignalDataset;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    #[default]
    Magnitude,
    Power,
}

/// Mean spectrum of one population, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// Bin centers in Hz, `0 ..= fs/2`.
    pub freqs: Vec<f64>,
    /// `channels[c][bin]`.
    pub channels: Vec<Vec<f64>>,
    pub kind: SpectrumKind,
}

impl SpectrumReport {
    /// Bin of the largest value of channel `c`, ignoring DC.
    pub fn peak_bin(&self, c: usize) -> usize {
        let row = &self.channels[c];
        (1..row.len()).fold(1.min(row.len() - 1), |best, j| if row[j] > row[best] { j } else { best })
    }
}

pub fn spectrum_report(data: &SignalDataset, kind: SpectrumKind) -> Result<SpectrumReport> {
    let (c, l) = data
        .shape()
        .ok_or_else(|| Error::invalid("spectrum of an empty dataset"))?;
    let bins = num_bins(l);
    let fs = data.sample_rate_hz();
    let mut channels = vec![vec![0.0; bins]; c];
    for seg in data.segments() {
        for (ch, acc) in channels.iter_mut().enumerate() {
            for (a, m) in acc.iter_mut().zip(magnitude_spectrum(seg.channel(ch))) {
                *a += match kind {
                    SpectrumKind::Magnitude => m,
                    SpectrumKind::Power => m * m,
                };
            }
        }
    }
    let n = data.len() as f64;
    for row in &mut channels {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(SpectrumReport {
        freqs: (0..bins).map(|k| k as f64 * fs / l as f64).collect(),
        channels,
        kind,
    })
}

fn check_aligned(reports: &[(&str, &SpectrumReport)]) -> Result<()> {
    let (_, first) = reports
        .first()
        .ok_or_else(|| Error::invalid("no populations to report"))?;
    for (name, r) in reports {
        if r.freqs != first.freqs || r.channels.len() != first.channels.len() {
            return Err(Error::shape(format!("population {name} has a different bin layout")));
        }
    }
    Ok(())
}

/// `freq_hz,<pop>_ch0,<pop>_ch1,…` with one row per bin.
pub fn spectra_csv(reports: &[(&str, &SpectrumReport)]) -> Result<String> {
    check_aligned(reports)?;
    let mut s = String::from("freq_hz");
    for (name, r) in reports {
        for c in 0..r.channels.len() {
            let _ = write!(s, ",{name}_ch{c}");
        }
    }
    s.push('\n');
    for (k, f) in reports[0].1.freqs.iter().enumerate() {
        let _ = write!(s, "{f}");
        for (_, r) in reports {
            for row in &r.channels {
                let _ = write!(s, ",{}", row[k]);
            }
        }
        s.push('\n');
    }
    Ok(s)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Standalone SVG line plot of channel `c` for every population.
pub fn spectra_svg(reports: &[(&str, &SpectrumReport)], c: usize) -> Result<String> {
    check_aligned(reports)?;
    if c >= reports[0].1.channels.len() {
        return Err(Error::invalid(format!("no channel {c}")));
    }
    let (w, h, m) = (640.0, 360.0, 48.0);
    let freqs = &reports[0].1.freqs;
    let fmax = freqs.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let ymax = reports
        .iter()
        .flat_map(|(_, r)| r.channels[c].iter().cloned())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let x = |f: f64| m + (w - 2.0 * m) * f / fmax;
    let y = |v: f64| h - m - (h - 2.0 * m) * v / ymax;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">frequency (Hz), 0 to {fmax}</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="12">channel {c}</text>"#, m - 16.0);
    for (i, (name, r)) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = freqs
            .iter()
            .zip(&r.channels[c])
            .map(|(&f, &v)| format!("{:.2},{:.2}", x(f), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            w - m - 120.0,
            m + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
