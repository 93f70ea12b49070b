//! Patch embedding and transformer blocks with adaptive layer-norm conditioning.

use eegdit_autograd::{Bound, ParamId, ParamSet, Var};

use crate::nn::{layer_norm, Conv1d, Init, Linear, Padding};
use crate::seed::Rng;

pub const LN_EPS: f64 = 1e-6;

/// Strided convolution into tokens plus a learned positional table.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbed {
    pub conv: Conv1d,
    pub pos: ParamId,
    pub num_tokens: usize,
}

impl PatchEmbed {
    pub fn new(
        ps: &mut ParamSet,
        features: usize,
        dim: usize,
        patch_len: usize,
        num_tokens: usize,
        rng: &mut Rng,
    ) -> Self {
        let conv = Conv1d::new(ps, "patch.conv", features, dim, patch_len, patch_len, Padding::Valid, 1, true, rng);
        let pos = ps.register("patch.pos", Init::Normal(0.02).tensor(&[num_tokens, dim], rng));
        Self {
            conv,
            pos,
            num_tokens,
        }
    }

    /// `[B, F, L] → [B, L/P, D]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, features: Var<'g>) -> Var<'g> {
        self.conv
            .forward(p, features)
            .transpose(1, 2)
            .add(p.get(self.pos))
    }
}

/// `h ⊙ (1 + scale) + shift`, with `scale`/`shift` of shape `[B, 1, D]`.
pub fn modulate<'g>(h: Var<'g>, scale: Var<'g>, shift: Var<'g>) -> Var<'g> {
    h.mul(scale.add_scalar(1.0)).add(shift)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DitBlock {
    pub dim: usize,
    pub heads: usize,
    /// Guidance → six modulation vectors, zero-initialized.
    pub ada: Linear,
    pub qkv: Linear,
    pub proj: Linear,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl DitBlock {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, heads: usize, mlp_ratio: usize, rng: &mut Rng) -> Self {
        let hidden = dim * mlp_ratio;
        Self {
            dim,
            heads,
            ada: Linear::new(ps, &format!("{name}.ada"), dim, 6 * dim, Init::Zeros, rng),
            qkv: Linear::new(ps, &format!("{name}.qkv"), dim, 3 * dim, Init::xavier(dim, 3 * dim), rng),
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim, Init::xavier(dim, dim), rng),
            fc1: Linear::new(ps, &format!("{name}.fc1"), dim, hidden, Init::xavier(dim, hidden), rng),
            fc2: Linear::new(ps, &format!("{name}.fc2"), hidden, dim, Init::xavier(hidden, dim), rng),
        }
    }

    /// Multi-head self-attention over `[B, N, D]`.
    pub fn attention<'g>(&self, p: &Bound<'g>, h: Var<'g>) -> Var<'g> {
        let s = h.shape();
        let (b, n, d) = (s[0], s[1], s[2]);
        let hd = d / self.heads;
        let qkv = self
            .qkv
            .forward(p, h)
            .reshape(&[b, n, 3, self.heads, hd])
            .permute(&[2, 0, 3, 1, 4]);
        let part = |i: usize| qkv.narrow(0, i, 1).reshape(&[b * self.heads, n, hd]);
        let (q, k, v) = (part(0), part(1), part(2));
        let attn = q.bmm(k.transpose(1, 2)).scale(1.0 / (hd as f64).sqrt()).softmax();
        let out = attn
            .bmm(v)
            .reshape(&[b, self.heads, n, hd])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b, n, d]);
        self.proj.forward(p, out)
    }

    /// `tokens: [B, N, D]`, `guidance: [B, D]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, tokens: Var<'g>, guidance: Var<'g>) -> Var<'g> {
        let b = tokens.shape()[0];
        let d = self.dim;
        let m = self.ada.forward(p, guidance.silu());
        let chunk = |i: usize| m.narrow(1, i * d, d).reshape(&[b, 1, d]);
        let (scale1, shift1, gate1) = (chunk(0), chunk(1), chunk(2));
        let (scale2, shift2, gate2) = (chunk(3), chunk(4), chunk(5));

        let h = modulate(layer_norm(tokens, LN_EPS), scale1, shift1);
        let x = tokens.add(gate1.mul(self.attention(p, h)));
        let h = modulate(layer_norm(x, LN_EPS), scale2, shift2);
        let mlp = self.fc2.forward(p, self.fc1.forward(p, h).gelu());
        x.add(gate2.mul(mlp))
    }
}
