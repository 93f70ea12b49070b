//! Fréchet distance between embedding populations and mean-spectrum reports.

mod fid;
mod spectrum;

use std::io::Write;
use std::path::Path;

pub use fid::{embed_population, fid_protocol, fit_gaussian, frechet_distance, FidOutcome, FidStats};
pub use spectrum::{spectra_csv, spectra_svg, spectrum_report, SpectrumKind, SpectrumReport};

use crate::error::Result;

pub const FID_RESULTS_HEADER: &str = "timestamp,dataset,model_tag,fid";

/// Appends `timestamp,dataset,model_tag,fid`, writing the header to a new file.
pub fn append_fid_row(path: &Path, timestamp: &str, dataset: &str, model_tag: &str, fid: f64) -> Result<()> {
    let fresh = !path.exists();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{FID_RESULTS_HEADER}")?;
    }
    writeln!(f, "{timestamp},{dataset},{model_tag},{fid}")?;
    Ok(())
}
