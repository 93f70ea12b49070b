//! Compact depthwise-separable convolutional classifier. Its penultimate
//! activation doubles as the embedding for Fréchet distances.

mod metrics;
mod train;

use eegdit_autograd::{Bound, Graph, ParamSet, Tensor, Var};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{auc_rank, evaluate, evaluate_logits, Metrics};
pub use train::{train_classifier, EpochRecord, LossMode, TrainReport};

use crate::diffusion::stack;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Init, Linear, Padding};
use crate::seed;
use crate::signal::{SignalDataset, SignalSegment};

/// Weight-standardization epsilon.
const WS_EPS: f64 = 1e-5;
/// Segments per forward pass when embedding or scoring a dataset.
const EVAL_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub channels: usize,
    pub len: usize,
    pub num_classes: usize,
    pub temporal_kernel: usize,
    pub temporal_filters: usize,
    /// Spatial filters per temporal filter.
    pub depth_multiplier: usize,
    pub separable_filters: usize,
    pub separable_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub embedding_dim: usize,
    /// Inputs are divided by this constant. `None` until training fixes it
    /// from the training set's sample standard deviation.
    pub input_scale: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            len: 256,
            num_classes: 2,
            temporal_kernel: 32,
            temporal_filters: 8,
            depth_multiplier: 2,
            separable_filters: 16,
            separable_kernel: 16,
            pool1: 4,
            pool2: 8,
            embedding_dim: 64,
            input_scale: None,
        }
    }
}

impl ClassifierConfig {
    pub fn pooled_len(&self) -> usize {
        self.len / self.pool1.max(1) / self.pool2.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.channels == 0 || self.len == 0 || self.num_classes == 0 {
            return bad("classifier needs positive channels, len and num_classes".into());
        }
        if [self.temporal_kernel, self.temporal_filters, self.depth_multiplier, self.separable_filters, self.separable_kernel]
            .contains(&0)
        {
            return bad("classifier kernel and filter counts must be positive".into());
        }
        if self.pool1 == 0 || self.pool2 == 0 || self.pooled_len() == 0 {
            return bad(format!(
                "pools {}x{} leave nothing of length {}",
                self.pool1, self.pool2, self.len
            ));
        }
        if self.embedding_dim < 2 {
            return bad(format!("embedding_dim {} must be at least 2", self.embedding_dim));
        }
        if let Some(s) = self.input_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("input_scale {s} must be positive"));
            }
        }
        Ok(())
    }

    /// Checks `(C, L, k)` against a dataset.
    pub fn check_data(&self, data: &SignalDataset) -> Result<()> {
        if let Some((c, l)) = data.shape() {
            if (c, l) != (self.channels, self.len) {
                return Err(Error::shape(format!(
                    "data is {c}x{l}, classifier expects {}x{}",
                    self.channels, self.len
                )));
            }
        }
        if data.num_classes() != self.num_classes {
            return Err(Error::shape(format!(
                "data has {} classes, classifier expects {}",
                data.num_classes(),
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// `(w − mean) / √(var + ε)` over each output filter's fan-in.
pub fn standardize<'g>(w: Var<'g>) -> Var<'g> {
    let shape = w.shape();
    let fan_in: usize = shape[1..].iter().product();
    let flat = w.reshape(&[shape[0], fan_in]);
    let centered = flat.sub(flat.mean(1));
    let var = centered.square().mean(1);
    centered.div(var.add_scalar(WS_EPS).sqrt()).reshape(&shape)
}

/// Mean over non-overlapping windows of `pool` along the last axis; a ragged tail is dropped.
fn avg_pool<'g>(x: Var<'g>, pool: usize) -> Var<'g> {
    let s = x.shape();
    let (b, f, l) = (s[0], s[1], s[2]);
    let out = l / pool;
    let x = if out * pool == l { x } else { x.narrow(2, 0, out * pool) };
    x.reshape(&[b, f, out, pool]).mean(3).reshape(&[b, f, out])
}

#[derive(Clone, Debug, PartialEq)]
struct Layers {
    temporal: Conv1d,
    spatial: Conv1d,
    depthwise: Conv1d,
    pointwise: Conv1d,
    embed: Linear,
    head: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    config: ClassifierConfig,
    params: ParamSet,
    layers: Layers,
}

impl Classifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let cfg = &config;
        let mut ps = ParamSet::new();
        let mut rng = seed::rng(seed);
        let (f1, d) = (cfg.temporal_filters, cfg.depth_multiplier);
        let temporal = Conv1d::new(&mut ps, "temporal", 1, f1, cfg.temporal_kernel, 1, Padding::Same, 1, true, &mut rng);
        let spatial = Conv1d::new(&mut ps, "spatial", f1 * cfg.channels, f1 * d, 1, 1, Padding::Valid, f1, true, &mut rng);
        let depthwise = Conv1d::new(
            &mut ps,
            "separable.depthwise",
            f1 * d,
            f1 * d,
            cfg.separable_kernel,
            1,
            Padding::Same,
            f1 * d,
            false,
            &mut rng,
        );
        let pointwise =
            Conv1d::new(&mut ps, "separable.pointwise", f1 * d, cfg.separable_filters, 1, 1, Padding::Valid, 1, true, &mut rng);
        let flat = cfg.separable_filters * cfg.pooled_len();
        let e = cfg.embedding_dim;
        let embed = Linear::new(&mut ps, "embed", flat, e, Init::xavier(flat, e), &mut rng);
        let head = Linear::new(&mut ps, "head", e, cfg.num_classes, Init::xavier(e, cfg.num_classes), &mut rng);
        Ok(Self {
            config,
            params: ps,
            layers: Layers {
                temporal,
                spatial,
                depthwise,
                pointwise,
                embed,
                head,
            },
        })
    }

    pub fn from_params(config: ClassifierConfig, params: ParamSet) -> Result<Self> {
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
                return Err(Error::Corrupt(format!("parameter {name} has shape {:?}", t.shape())));
            }
            *model.params.get_mut(own) = params.get(id).clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `(embedding [B, E], logits [B, k])` for `x: [B, C, L]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
        let cfg = &self.config;
        let s = x.shape();
        if s.len() != 3 || s[1] != cfg.channels || s[2] != cfg.len {
            return Err(Error::shape(format!(
                "classifier expects [B, {}, {}], got {s:?}",
                cfg.channels, cfg.len
            )));
        }
        let (b, c, l) = (s[0], s[1], s[2]);
        let f1 = cfg.temporal_filters;
        let ly = &self.layers;
        let x = x.scale(1.0 / cfg.input_scale.unwrap_or(1.0));

        // Each channel is filtered on its own, then filters are grouped so the
        // spatial step mixes channels within one temporal filter.
        let h = x.reshape(&[b * c, 1, l]);
        let h = ly.temporal.forward_with_weight(p, h, standardize(p.get(ly.temporal.weight)));
        let h = h.reshape(&[b, c, f1, l]).permute(&[0, 2, 1, 3]).reshape(&[b, f1 * c, l]);
        let h = ly.spatial.forward(p, h).elu();
        let h = avg_pool(h, cfg.pool1);

        let h = ly.depthwise.forward_with_weight(p, h, standardize(p.get(ly.depthwise.weight)));
        let h = ly.pointwise.forward_with_weight(p, h, standardize(p.get(ly.pointwise.weight))).elu();
        let h = avg_pool(h, cfg.pool2);

        let flat = h.reshape(&[b, cfg.separable_filters * cfg.pooled_len()]);
        let embedding = ly.embed.forward(p, flat).elu();
        let logits = ly.head.forward(p, embedding);
        Ok((embedding, logits))
    }

    /// `(embeddings [n, E], logits [n, k])` for a list of segments, computed in
    /// fixed chunks in parallel.
    pub fn infer(&self, segments: &[SignalSegment]) -> Result<(Tensor, Tensor)> {
        let cfg = &self.config;
        let parts = segments
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let refs: Vec<&SignalSegment> = chunk.iter().collect();
                let g = Graph::new();
                let p = self.params.bind_frozen(&g);
                let (e, z) = self.forward(&p, g.constant(stack(&refs)?))?;
                Ok((e.to_tensor().into_data(), z.to_tensor().into_data()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut emb, mut logits) = (Vec::new(), Vec::new());
        for (e, z) in parts {
            emb.extend(e);
            logits.extend(z);
        }
        let n = segments.len();
        Ok((
            Tensor::from_vec(emb, &[n, cfg.embedding_dim]),
            Tensor::from_vec(logits, &[n, cfg.num_classes]),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ClassifierConfig {
        ClassifierConfig {
            channels: 3,
            len: 64,
            num_classes: 3,
            temporal_kernel: 8,
            temporal_filters: 4,
            separable_filters: 8,
            separable_kernel: 4,
            embedding_dim: 6,
            ..ClassifierConfig::default()
        }
    }

    fn segs(n: usize, cfg: &ClassifierConfig, s: u64) -> Vec<SignalSegment> {
        let mut rng = seed::rng(s);
        (0..n)
            .map(|_| {
                let t = crate::diffusion::standard_normal(&[cfg.channels * cfg.len], &mut rng);
                SignalSegment::new(cfg.channels, cfg.len, t.into_data(), None).unwrap()
            })
            .collect()
    }

    #[test]
    fn output_shapes() {
        let cfg = small();
        let m = Classifier::new(cfg.clone(), 1).unwrap();
        let (e, z) = m.infer(&segs(5, &cfg, 2)).unwrap();
        assert_eq!((e.shape(), z.shape()), (&[5, 6][..], &[5, 3][..]));
    }

    #[test]
    fn zero_parameters_give_uniform_prediction() {
        let cfg = small();
        let mut m = Classifier::new(cfg.clone(), 1).unwrap();
        for t in m.params_mut().tensors_mut() {
            *t = Tensor::zeros(t.shape());
        }
        let (_, z) = m.infer(&segs(3, &cfg, 2)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn amplitude_is_not_normalized_away() {
        let cfg = small();
        let m = Classifier::new(cfg.clone(), 1).unwrap();
        let x = segs(1, &cfg, 3);
        let doubled = vec![SignalSegment::new(3, 64, x[0].data().iter().map(|v| 2.0 * v).collect(), None).unwrap()];
        let (e1, _) = m.infer(&x).unwrap();
        let (e2, _) = m.infer(&doubled).unwrap();
        assert_ne!(e1, e2);
    }

    #[test]
    fn chunked_inference_matches_single_pass() {
        let cfg = small();
        let m = Classifier::new(cfg.clone(), 1).unwrap();
        let all = segs(EVAL_CHUNK + 7, &cfg, 5);
        let (e, _) = m.infer(&all).unwrap();
        let (e_last, _) = m.infer(&all[EVAL_CHUNK..]).unwrap();
        assert_eq!(&e.data()[EVAL_CHUNK * 6..], e_last.data());
    }

    #[test]
    fn invalid_configs() {
        assert!(Classifier::new(ClassifierConfig { len: 16, ..ClassifierConfig::default() }, 0).is_err());
        assert!(Classifier::new(ClassifierConfig { embedding_dim: 1, ..ClassifierConfig::default() }, 0).is_err());
    }
}
