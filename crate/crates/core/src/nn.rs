//! Parameterized layers shared by the noise predictor and the classifier.

use eegdit_autograd::{Bound, ParamId, ParamSet, Tensor, Var};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// `U(-a, a)`.
    Uniform(f64),
    /// `N(0, sd²)`.
    Normal(f64),
}

impl Init {
    pub fn xavier(fan_in: usize, fan_out: usize) -> Self {
        Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
    }

    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform(1.0 / (fan_in as f64).sqrt())
    }

    pub fn tensor(self, shape: &[usize], rng: &mut Rng) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Uniform(a) => Tensor::from_fn(shape, |_| rng.random_range(-a..=a)),
            Init::Normal(sd) => {
                let n = Normal::new(0.0, sd).expect("finite sd");
                Tensor::from_fn(shape, |_| n.sample(rng))
            }
        }
    }
}

/// `y = x W + b` over the last axis, `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let weight = ps.register(format!("{name}.weight"), init.tensor(&[in_dim, out_dim], rng));
        let bias = Some(ps.register(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let y = x.matmul(p.get(self.weight));
        match self.bias {
            Some(b) => y.add(p.get(b)),
            None => y,
        }
    }
}

/// Grouped 1-D convolution over `[B, C_in, L]` with a per-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length equals input length at stride 1.
    Same,
    Valid,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        groups: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        assert!(in_channels.is_multiple_of(groups) && out_channels.is_multiple_of(groups));
        let fan_in = in_channels / groups * kernel;
        let weight = ps.register(
            format!("{name}.weight"),
            Init::fan_in(fan_in).tensor(&[out_channels, in_channels / groups, kernel], rng),
        );
        let bias =
            bias.then(|| ps.register(format!("{name}.bias"), Tensor::zeros(&[out_channels, 1])));
        let (pad_left, pad_right) = match padding {
            Padding::Same => ((kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2),
            Padding::Valid => (0, 0),
        };
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            pad_left,
            pad_right,
            groups,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        self.forward_with_weight(p, x, p.get(self.weight))
    }

    /// Same geometry and bias, caller-supplied (e.g. standardized) weights.
    pub fn forward_with_weight<'g>(&self, p: &Bound<'g>, x: Var<'g>, weight: Var<'g>) -> Var<'g> {
        let y = x.conv1d(weight, self.stride, self.pad_left, self.pad_right, self.groups);
        match self.bias {
            Some(b) => y.add(p.get(b)),
            None => y,
        }
    }
}

/// Normalizes over the last axis without affine parameters.
pub fn layer_norm<'g>(x: Var<'g>, eps: f64) -> Var<'g> {
    let axis = x.shape().len() - 1;
    let centered = x.sub(x.mean(axis));
    let var = centered.square().mean(axis);
    centered.div(var.add_scalar(eps).sqrt())
}

/// Mean squared error between two equally shaped variables.
pub fn mse<'g>(a: Var<'g>, b: Var<'g>) -> Var<'g> {
    a.sub(b).square().mean_all()
}
