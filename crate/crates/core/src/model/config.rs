use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the noise predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub len: usize,
    /// Samples per token.
    pub patch_len: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub heads: usize,
    /// Kernel lengths of the low-frequency branch (odd).
    pub msc_kernels_low: Vec<usize>,
    /// Kernel lengths of the high-frequency branch (odd).
    pub msc_kernels_high: Vec<usize>,
    /// Feature channels per branch, split evenly across its kernels.
    pub msc_channels: usize,
    /// `Some(k)` for a class-conditional model.
    pub num_classes: Option<usize>,
    /// Schedule length the time weighting is normalized by.
    pub max_steps: usize,
    /// Off: one plain convolution replaces the multi-scale module.
    pub msc_enabled: bool,
    /// Off: the spectral guidance term and its parameters are absent.
    pub dfsi_enabled: bool,
    pub cbam_reduction: usize,
    pub cbam_kernel: usize,
    /// Hidden width of the spectral MLP.
    pub dfsi_hidden: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            len: 256,
            patch_len: 16,
            hidden_dim: 64,
            depth: 4,
            heads: 4,
            msc_kernels_low: vec![31, 63],
            msc_kernels_high: vec![3, 7],
            msc_channels: 16,
            num_classes: None,
            max_steps: 1000,
            msc_enabled: true,
            dfsi_enabled: true,
            cbam_reduction: 8,
            cbam_kernel: 7,
            dfsi_hidden: 128,
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    pub fn is_conditional(&self) -> bool {
        self.num_classes.is_some()
    }

    /// Token count `L / P`.
    pub fn num_tokens(&self) -> usize {
        self.len / self.patch_len
    }

    /// Feature channels entering the patch embedding.
    pub fn feature_channels(&self) -> usize {
        2 * self.msc_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.channels == 0 || self.len == 0 {
            return bad(format!("channels/len must be positive, got {}x{}", self.channels, self.len));
        }
        if self.patch_len == 0 || !self.len.is_multiple_of(self.patch_len) {
            return bad(format!("len {} is not divisible by patch_len {}", self.len, self.patch_len));
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            ));
        }
        if self.hidden_dim < 2 || !self.hidden_dim.is_multiple_of(2) {
            return bad(format!("hidden_dim {} must be even", self.hidden_dim));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.num_classes == Some(0) {
            return bad("a conditional model needs num_classes >= 1".into());
        }
        if self.msc_channels == 0 || self.mlp_ratio == 0 || self.dfsi_hidden == 0 {
            return bad("msc_channels, mlp_ratio and dfsi_hidden must be positive".into());
        }
        if self.msc_enabled {
            for (name, ks) in [("msc_kernels_low", &self.msc_kernels_low), ("msc_kernels_high", &self.msc_kernels_high)] {
                if ks.is_empty() {
                    return bad(format!("{name} is empty"));
                }
                if !self.msc_channels.is_multiple_of(ks.len()) {
                    return bad(format!(
                        "msc_channels {} is not divisible by the {} kernels of {name}",
                        self.msc_channels,
                        ks.len()
                    ));
                }
                for (i, &k) in ks.iter().enumerate() {
                    if ks[..i].contains(&k) {
                        return bad(format!("{name} lists kernel {k} twice"));
                    }
                    if k % 2 == 0 {
                        return bad(format!("{name} kernel {k} is not odd"));
                    }
                    if k > self.len {
                        return bad(format!("{name} kernel {k} is longer than len {}", self.len));
                    }
                }
            }
            if self.msc_channels < self.cbam_reduction || self.cbam_reduction == 0 {
                return bad(format!(
                    "msc_channels {} is smaller than the attention reduction ratio {}",
                    self.msc_channels, self.cbam_reduction
                ));
            }
            if self.cbam_kernel.is_multiple_of(2) {
                return bad(format!("cbam_kernel {} is not odd", self.cbam_kernel));
            }
        }
        Ok(())
    }
}
