//! Conditioning signals: step embedding, class embedding, spectral embedding
//! and the cosine weight that fades the spectral term with noise level.

use std::f64::consts::FRAC_PI_2;

use eegdit_autograd::{Bound, Graph, ParamId, ParamSet, Tensor, Var};

use crate::error::{Error, Result};
use crate::fft::{magnitude_spectrum, num_bins};
use crate::nn::{Init, Linear};
use crate::seed::Rng;

/// `cos(π/2 · t / T_max)`: 1 at `t = 0`, 0 at `t = T_max`.
pub fn time_weight(t: usize, max_steps: usize) -> Result<f64> {
    if max_steps == 0 || t > max_steps {
        return Err(Error::invalid(format!("step {t} outside [0, {max_steps}]")));
    }
    if t == max_steps {
        return Ok(0.0);
    }
    Ok((FRAC_PI_2 * t as f64 / max_steps as f64).cos())
}

/// Interleaved `[sin(t f_0), cos(t f_0), sin(t f_1), …]` with geometric
/// frequencies `f_i = 10000^(-i / (dim/2))`.
pub fn timestep_base(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
    out
}

/// Sinusoidal base followed by a two-layer SiLU MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TimeEmbedding {
    pub fn new(ps: &mut ParamSet, dim: usize, rng: &mut Rng) -> Self {
        Self {
            dim,
            fc1: Linear::new(ps, "time.fc1", dim, dim, Init::xavier(dim, dim), rng),
            fc2: Linear::new(ps, "time.fc2", dim, dim, Init::xavier(dim, dim), rng),
        }
    }

    /// `[B, D]` for steps `t`.
    pub fn forward<'g>(&self, p: &Bound<'g>, graph: &'g Graph, t: &[usize]) -> Var<'g> {
        let mut base = Vec::with_capacity(t.len() * self.dim);
        for &s in t {
            base.extend(timestep_base(s, self.dim));
        }
        let x = graph.constant(Tensor::from_vec(base, &[t.len(), self.dim]));
        self.fc2.forward(p, self.fc1.forward(p, x).silu())
    }
}

/// Learned per-class vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEmbedding {
    pub table: ParamId,
    pub num_classes: usize,
}

impl ClassEmbedding {
    pub fn new(ps: &mut ParamSet, num_classes: usize, dim: usize, rng: &mut Rng) -> Self {
        let table = ps.register("class.table", Init::Normal(0.02).tensor(&[num_classes, dim], rng));
        Self { table, num_classes }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, classes: &[usize]) -> Result<Var<'g>> {
        if let Some(&c) = classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::invalid(format!(
                "class {c} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(p.get(self.table).index_select(classes))
    }
}

/// MLP over the concatenated per-channel magnitude spectra of the noised input.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEmbedding {
    pub channels: usize,
    pub len: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SpectralEmbedding {
    pub fn new(ps: &mut ParamSet, channels: usize, len: usize, hidden: usize, dim: usize, rng: &mut Rng) -> Self {
        let inp = channels * num_bins(len);
        Self {
            channels,
            len,
            fc1: Linear::new(ps, "dfsi.fc1", inp, hidden, Init::xavier(inp, hidden), rng),
            fc2: Linear::new(ps, "dfsi.fc2", hidden, dim, Init::xavier(hidden, dim), rng),
        }
    }

    /// `[B, C·(L/2+1)]` magnitudes normalized by `√L`.
    pub fn spectra(&self, x: &Tensor) -> Tensor {
        let (c, l) = (self.channels, self.len);
        let b = x.numel() / (c * l);
        let bins = num_bins(l);
        let norm = 1.0 / (l as f64).sqrt();
        let mut out = Vec::with_capacity(b * c * bins);
        for row in x.data().chunks(l) {
            out.extend(magnitude_spectrum(row).into_iter().map(|m| m * norm));
        }
        Tensor::from_vec(out, &[b, c * bins])
    }

    /// `[B, D]` spectral information for `x_t` of shape `[B, C, L]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, graph: &'g Graph, x: &Tensor) -> Var<'g> {
        let s = graph.constant(self.spectra(x));
        self.fc2.forward(p, self.fc1.forward(p, s).silu())
    }
}
