//! Multi-scale convolution with per-branch attention refinement.

use eegdit_autograd::{Bound, ParamSet, Var};

use super::ModelConfig;
use crate::nn::{Conv1d, Init, Linear, Padding};
use crate::seed::Rng;

/// Kernel length of the single convolution used when the multi-scale module is disabled.
pub const PLAIN_KERNEL: usize = 3;

/// Channel attention followed by temporal attention, both as sigmoid gates.
#[derive(Clone, Debug, PartialEq)]
pub struct Cbam {
    pub mlp_in: Linear,
    pub mlp_out: Linear,
    pub temporal: Conv1d,
}

impl Cbam {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        features: usize,
        reduction: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Self {
        let hidden = features / reduction;
        Self {
            mlp_in: Linear::new(ps, &format!("{name}.mlp_in"), features, hidden, Init::xavier(features, hidden), rng),
            mlp_out: Linear::new(ps, &format!("{name}.mlp_out"), hidden, features, Init::xavier(hidden, features), rng),
            temporal: Conv1d::new(ps, &format!("{name}.temporal"), 2, 1, kernel, 1, Padding::Same, 1, true, rng),
        }
    }

    /// Channel gate `[B, F, 1]` for features `[B, F, L]`.
    pub fn channel_gate<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (b, f) = (s[0], s[1]);
        let mlp = |v: Var<'g>| self.mlp_out.forward(p, self.mlp_in.forward(p, v).relu());
        let avg = mlp(x.mean(2).reshape(&[b, f]));
        let max = mlp(x.max(2).reshape(&[b, f]));
        avg.add(max).sigmoid().reshape(&[b, f, 1])
    }

    /// Temporal gate `[B, 1, L]` for features `[B, F, L]`.
    pub fn temporal_gate<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let pooled = Var::concat(&[x.mean(1), x.max(1)], 1);
        self.temporal.forward(p, pooled).sigmoid()
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let x = x.mul(self.channel_gate(p, x));
        x.mul(self.temporal_gate(p, x))
    }
}

/// One frequency branch: a convolution per kernel length, concatenated, then refined.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub convs: Vec<Conv1d>,
    pub cbam: Cbam,
}

impl Branch {
    fn new(ps: &mut ParamSet, name: &str, cfg: &ModelConfig, kernels: &[usize], rng: &mut Rng) -> Self {
        let per = cfg.msc_channels / kernels.len();
        let convs = kernels
            .iter()
            .map(|&k| {
                Conv1d::new(ps, &format!("{name}.conv{k}"), cfg.channels, per, k, 1, Padding::Same, 1, true, rng)
            })
            .collect();
        let cbam = Cbam::new(ps, &format!("{name}.cbam"), cfg.msc_channels, cfg.cbam_reduction, cfg.cbam_kernel, rng);
        Self { convs, cbam }
    }

    /// Branch features before attention, `[B, msc_channels, L]`.
    pub fn convolve<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let parts: Vec<Var<'g>> = self.convs.iter().map(|c| c.forward(p, x)).collect();
        if parts.len() == 1 {
            parts[0]
        } else {
            Var::concat(&parts, 1)
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        self.cbam.forward(p, self.convolve(p, x))
    }
}

/// Feature extractor in front of the patch embedding.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum FeatureExtractor {
    MultiScale { low: Branch, high: Branch },
    Plain(Conv1d),
}

impl FeatureExtractor {
    pub fn new(ps: &mut ParamSet, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        if cfg.msc_enabled {
            FeatureExtractor::MultiScale {
                low: Branch::new(ps, "msc.low", cfg, &cfg.msc_kernels_low, rng),
                high: Branch::new(ps, "msc.high", cfg, &cfg.msc_kernels_high, rng),
            }
        } else {
            FeatureExtractor::Plain(Conv1d::new(
                ps,
                "plain_conv",
                cfg.channels,
                cfg.feature_channels(),
                PLAIN_KERNEL,
                1,
                Padding::Same,
                1,
                true,
                rng,
            ))
        }
    }

    /// `[B, C, L] → [B, 2·msc_channels, L]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        match self {
            FeatureExtractor::MultiScale { low, high } => {
                Var::concat(&[low.forward(p, x), high.forward(p, x)], 1)
            }
            FeatureExtractor::Plain(conv) => conv.forward(p, x),
        }
    }
}
