//! CSV ingestion: one segment per file (L rows × C comma-separated columns),
//! labels from a manifest of `path,label` lines.

use std::fs;
use std::path::Path;

use super::{SignalDataset, SignalSegment};
use crate::error::{Error, Result};

fn parse_segment(text: &str, origin: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Corrupt(format!("{origin}:{}: {e}", ln + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Corrupt(format!(
                    "{origin}:{}: {} columns, expected {}",
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let len = rows.len();
    let channels = rows.first().map_or(0, Vec::len);
    // Rows are time steps; the segment stores channel-major.
    let mut data = vec![0.0; channels * len];
    for (t, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            data[c * len + t] = *v;
        }
    }
    Ok((channels, len, data))
}

/// Reads every segment named in `manifest`. Relative paths resolve against the
/// manifest's directory. An empty label field leaves that segment unlabeled.
/// `num_classes` defaults to one more than the largest label.
pub fn load_csv_manifest(
    manifest: impl AsRef<Path>,
    sample_rate_hz: f64,
    num_classes: Option<usize>,
) -> Result<SignalDataset> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(manifest)?;
    let mut segments = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, label) = match line.rsplit_once(',') {
            Some((p, l)) => (p.trim(), l.trim()),
            None => (line, ""),
        };
        let label = if label.is_empty() {
            None
        } else {
            Some(label.parse::<usize>().map_err(|e| {
                Error::Corrupt(format!("{}:{}: label {label:?}: {e}", manifest.display(), ln + 1))
            })?)
        };
        let full = base.join(path);
        let body = fs::read_to_string(&full)?;
        let (c, l, data) = parse_segment(&body, &full.display().to_string())?;
        segments.push(SignalSegment::new(c, l, data, label)?);
    }
    let k = num_classes.unwrap_or_else(|| {
        segments
            .iter()
            .filter_map(SignalSegment::label)
            .max()
            .map_or(0, |m| m + 1)
    });
    SignalDataset::new(segments, k, None, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_columns_as_channels() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "1,10\n2,20\n3,30\n").unwrap();
        fs::write(dir.path().join("b.csv"), "# header comment\n4,40\n5,50\n6,60\n").unwrap();
        fs::write(dir.path().join("m.txt"), "a.csv,1\nb.csv,0\n").unwrap();
        let d = load_csv_manifest(dir.path().join("m.txt"), 100.0, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape(), Some((2, 3)));
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.segments()[0].channel(1), &[10.0, 20.0, 30.0]);
        assert_eq!(d.segments()[1].label(), Some(0));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "1,2\n3\n").unwrap();
        fs::write(dir.path().join("m.txt"), "a.csv,0\n").unwrap();
        assert!(matches!(
            load_csv_manifest(dir.path().join("m.txt"), 1.0, None),
            Err(Error::Corrupt(_))
        ));
    }
}
