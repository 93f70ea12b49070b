use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::signal::SignalDataset;

/// Eigenvalues below this fraction of the largest are treated as zero.
const EIG_CLAMP: f64 = 1e-10;

/// Gaussian fitted to one population's embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FidStats {
    pub mu: DVector<f64>,
    /// Unbiased sample covariance, symmetrized.
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

/// Penultimate-layer embeddings as an `E × n` matrix, one column per segment.
pub fn embed_population(extractor: &Classifier, data: &SignalDataset) -> Result<DMatrix<f64>> {
    let cfg = extractor.config();
    if let Some((c, l)) = data.shape() {
        if (c, l) != (cfg.channels, cfg.len) {
            return Err(Error::shape(format!(
                "data is {c}x{l}, extractor expects {}x{}",
                cfg.channels, cfg.len
            )));
        }
    }
    let (emb, _) = extractor.infer(data.segments())?;
    Ok(DMatrix::from_column_slice(cfg.embedding_dim, data.len(), emb.data()))
}

/// Sample mean and unbiased covariance of the columns of `x` (`E × n`).
pub fn fit_gaussian(x: &DMatrix<f64>) -> Result<FidStats> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples for a covariance, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    let mu = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mu;
    }
    let s = &centered * centered.transpose() / (n as f64 - 1.0);
    let sigma = (&s + s.transpose()) * 0.5;
    Ok(FidStats { mu, sigma, n })
}

/// `V f(Λ) Vᵀ` for symmetric `m`, with small or negative eigenvalues clamped to zero first.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let vals = eig
        .eigenvalues
        .map(|l| if l > EIG_CLAMP * top && l > 0.0 { f(l) } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^½)`, clamped at zero.
///
/// The cross term is `Σ_a^½ (Σ_a^½ Σ_b Σ_a^½)^½ Σ_a^{−½}` with symmetric
/// eigendecompositions throughout and a pseudo-inverse for singular `Σ_a`.
pub fn frechet_distance(a: &FidStats, b: &FidStats) -> Result<f64> {
    let e = a.mu.len();
    if b.mu.len() != e || a.sigma.shape() != (e, e) || b.sigma.shape() != (e, e) {
        return Err(Error::shape(format!(
            "statistics of dimension {} and {}",
            a.mu.len(),
            b.mu.len()
        )));
    }
    let finite = |s: &FidStats| s.mu.iter().chain(s.sigma.iter()).all(|v| v.is_finite());
    if !finite(a) || !finite(b) {
        return Err(Error::NonFinite("Gaussian statistics".into()));
    }
    let root_a = spectral_map(&a.sigma, f64::sqrt);
    let inv_root_a = spectral_map(&a.sigma, |l| 1.0 / l.sqrt());
    let inner = &root_a * &b.sigma * &root_a;
    let cross = &root_a * spectral_map(&inner, f64::sqrt) * inv_root_a;
    let diff = &a.mu - &b.mu;
    let d = diff.norm_squared() + a.sigma.trace() + b.sigma.trace() - 2.0 * cross.trace();
    Ok(d.max(0.0))
}

/// Outcome of comparing an original and a generated population.
#[derive(Clone, Debug, PartialEq)]
pub struct FidOutcome {
    pub fid: f64,
    pub n_original: usize,
    pub n_generated: usize,
    /// Set when the two populations differ in size.
    pub warning: Option<String>,
}

pub fn fid_protocol(original: &SignalDataset, generated: &SignalDataset, extractor: &Classifier) -> Result<FidOutcome> {
    if original.shape() != generated.shape() {
        let show = |s: Option<(usize, usize)>| s.map_or("empty".to_string(), |(c, l)| format!("{c}x{l}"));
        return Err(Error::shape(format!(
            "original is {}, generated is {}",
            show(original.shape()),
            show(generated.shape())
        )));
    }
    let a = fit_gaussian(&embed_population(extractor, original)?)?;
    let b = fit_gaussian(&embed_population(extractor, generated)?)?;
    let warning = (original.len() != generated.len()).then(|| {
        format!(
            "population sizes differ: {} original vs {} generated",
            original.len(),
            generated.len()
        )
    });
    Ok(FidOutcome {
        fid: frechet_distance(&a, &b)?,
        n_original: original.len(),
        n_generated: generated.len(),
        warning,
    })
}
