//! The diffusion-transformer noise predictor: multi-scale features, patch
//! tokens, guidance-conditioned transformer blocks and a linear output head.

mod config;
pub mod dit;
pub mod guidance;
pub mod msc;

use eegdit_autograd::{Bound, Graph, ParamSet, Tensor, Var};

pub use config::ModelConfig;
use dit::{DitBlock, PatchEmbed, LN_EPS};
use guidance::{time_weight, ClassEmbedding, SpectralEmbedding, TimeEmbedding};
use msc::FeatureExtractor;

use crate::error::{Error, Result};
use crate::nn::{layer_norm, Init, Linear};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Layers {
    pub features: FeatureExtractor,
    pub patch: PatchEmbed,
    pub time: TimeEmbedding,
    pub class: Option<ClassEmbedding>,
    pub spectral: Option<SpectralEmbedding>,
    pub blocks: Vec<DitBlock>,
    /// Zero-initialized projection from tokens to `P·C` samples each.
    pub head: Linear,
}

/// The three guidance terms before they are summed.
pub struct GuidanceTerms<'g> {
    pub time: Var<'g>,
    pub class: Option<Var<'g>>,
    /// Spectral term already multiplied by the per-sample time weight.
    pub spectral: Option<Var<'g>>,
}

impl<'g> GuidanceTerms<'g> {
    pub fn sum(&self) -> Var<'g> {
        let mut g = self.time;
        if let Some(c) = self.class {
            g = g.add(c);
        }
        if let Some(s) = self.spectral {
            g = g.add(s);
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisePredictor {
    config: ModelConfig,
    params: ParamSet,
    layers: Layers,
}

impl NoisePredictor {
    /// Fresh parameters. Two models built from the same config and seed are identical.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamSet::new();
        let mut rng = seed::rng(seed);
        let cfg = &config;
        let d = cfg.hidden_dim;
        let features = FeatureExtractor::new(&mut ps, cfg, &mut rng);
        let patch = PatchEmbed::new(&mut ps, cfg.feature_channels(), d, cfg.patch_len, cfg.num_tokens(), &mut rng);
        let time = TimeEmbedding::new(&mut ps, d, &mut rng);
        let class = cfg.num_classes.map(|k| ClassEmbedding::new(&mut ps, k, d, &mut rng));
        let spectral = cfg
            .dfsi_enabled
            .then(|| SpectralEmbedding::new(&mut ps, cfg.channels, cfg.len, cfg.dfsi_hidden, d, &mut rng));
        let blocks = (0..cfg.depth)
            .map(|i| DitBlock::new(&mut ps, &format!("block{i}"), d, cfg.heads, cfg.mlp_ratio, &mut rng))
            .collect();
        let head = Linear::new(&mut ps, "head", d, cfg.patch_len * cfg.channels, Init::Zeros, &mut rng);
        Ok(Self {
            config,
            params: ps,
            layers: Layers {
                features,
                patch,
                time,
                class,
                spectral,
                blocks,
                head,
            },
        })
    }

    /// Rebuilds the layer layout for `config` and adopts `params`, which must
    /// match it name for name and shape for shape.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Corrupt(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (id, name, t) in params.iter() {
            let own = model
                .params
                .id_of(name)
                .ok_or_else(|| Error::Corrupt(format!("unexpected parameter {name}")))?;
            if model.params.get(own).shape() != t.shape() {
                return Err(Error::Corrupt(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    model.params.get(own).shape(),
                    t.shape()
                )));
            }
            *model.params.get_mut(own) = params.get(id).clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layers(&self) -> &Layers {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn check_input(&self, shape: &[usize], t: &[usize], cond: Option<&[usize]>) -> Result<()> {
        let cfg = &self.config;
        if shape.len() != 3 || shape[1] != cfg.channels || shape[2] != cfg.len {
            return Err(Error::shape(format!(
                "model expects [B, {}, {}], got {shape:?}",
                cfg.channels, cfg.len
            )));
        }
        if t.len() != shape[0] {
            return Err(Error::shape(format!("{} steps for a batch of {}", t.len(), shape[0])));
        }
        match (cfg.num_classes, cond) {
            (Some(_), None) => Err(Error::invalid("conditional model needs class labels")),
            (None, Some(_)) => Err(Error::invalid("unconditional model takes no class labels")),
            (Some(_), Some(c)) if c.len() != shape[0] => Err(Error::shape(format!(
                "{} class labels for a batch of {}",
                c.len(),
                shape[0]
            ))),
            _ => Ok(()),
        }
    }

    /// Guidance terms for a batch; `x_t` only feeds the spectral term.
    pub fn guidance_terms<'g>(
        &self,
        p: &Bound<'g>,
        x_t: Var<'g>,
        t: &[usize],
        cond: Option<&[usize]>,
    ) -> Result<GuidanceTerms<'g>> {
        self.check_input(&x_t.shape(), t, cond)?;
        let graph = x_t.graph();
        let weights = t
            .iter()
            .map(|&s| time_weight(s, self.config.max_steps))
            .collect::<Result<Vec<f64>>>()?;
        let time = self.layers.time.forward(p, graph, t);
        let class = match (&self.layers.class, cond) {
            (Some(table), Some(c)) => Some(table.forward(p, c)?),
            _ => None,
        };
        let spectral = self.layers.spectral.as_ref().map(|s| {
            let x = x_t.to_tensor();
            let w = graph.constant(Tensor::from_vec(weights.clone(), &[t.len(), 1]));
            s.forward(p, graph, &x).mul(w)
        });
        Ok(GuidanceTerms { time, class, spectral })
    }

    /// Predicted noise `[B, C, L]` for noised input `x_t: [B, C, L]` at steps `t`.
    pub fn forward<'g>(
        &self,
        p: &Bound<'g>,
        x_t: Var<'g>,
        t: &[usize],
        cond: Option<&[usize]>,
    ) -> Result<Var<'g>> {
        let guidance = self.guidance_terms(p, x_t, t, cond)?.sum();
        let cfg = &self.config;
        let b = t.len();
        let features = self.layers.features.forward(p, x_t);
        let mut tokens = self.layers.patch.forward(p, features);
        for block in &self.layers.blocks {
            tokens = block.forward(p, tokens, guidance);
        }
        let out = self.layers.head.forward(p, layer_norm(tokens, LN_EPS));
        Ok(out
            .reshape(&[b, cfg.num_tokens(), cfg.channels, cfg.patch_len])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b, cfg.channels, cfg.len]))
    }

    /// Inference-only forward pass on plain tensors.
    pub fn predict(&self, x_t: &Tensor, t: &[usize], cond: Option<&[usize]>) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let x = g.constant(x_t.clone());
        Ok(self.forward(&p, x, t, cond)?.to_tensor())
    }
}
