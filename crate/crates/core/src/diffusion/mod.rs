//! Forward noising, ancestral sampling and the noise-prediction objective.

mod schedule;

use eegdit_autograd::{AdamW, AdamWConfig, Bound, Graph, ParamSet, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use schedule::{NoiseSchedule, ScheduleConfig};

use crate::error::{Error, Result};
use crate::model::NoisePredictor;
use crate::nn::mse;
use crate::seed;
use crate::signal::{SignalDataset, SignalSegment};

/// Segments denoised together by one model call during sampling. Fixed so the
/// batch a segment lands in depends only on its index.
pub const GENERATE_CHUNK: usize = 64;

/// Anything that predicts the added noise from `(x_t, t, c)`.
#[allow(clippy::len_without_is_empty)]
pub trait EpsilonModel: Sync {
    fn channels(&self) -> usize;
    fn len(&self) -> usize;
    /// Schedule length the model was built for.
    fn max_steps(&self) -> usize;
    fn is_conditional(&self) -> bool;
    fn params(&self) -> &ParamSet;

    /// `x_t: [B, C, L]` → predicted noise `[B, C, L]`.
    fn predict_graph<'g>(
        &self,
        p: &Bound<'g>,
        x_t: Var<'g>,
        t: &[usize],
        cond: Option<&[usize]>,
    ) -> Result<Var<'g>>;

    fn predict(&self, x_t: &Tensor, t: &[usize], cond: Option<&[usize]>) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params().bind_frozen(&g);
        let x = g.constant(x_t.clone());
        Ok(self.predict_graph(&p, x, t, cond)?.to_tensor())
    }
}

impl EpsilonModel for NoisePredictor {
    fn channels(&self) -> usize {
        self.config().channels
    }

    fn len(&self) -> usize {
        self.config().len
    }

    fn max_steps(&self) -> usize {
        self.config().max_steps
    }

    fn is_conditional(&self) -> bool {
        self.config().is_conditional()
    }

    fn params(&self) -> &ParamSet {
        NoisePredictor::params(self)
    }

    fn predict_graph<'g>(
        &self,
        p: &Bound<'g>,
        x_t: Var<'g>,
        t: &[usize],
        cond: Option<&[usize]>,
    ) -> Result<Var<'g>> {
        self.forward(p, x_t, t, cond)
    }
}

fn check_batch(x: &Tensor, other: &Tensor, t: &[usize], schedule: &NoiseSchedule) -> Result<usize> {
    if x.shape() != other.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", x.shape(), other.shape())));
    }
    let b = x.shape().first().copied().unwrap_or(0);
    if x.rank() < 2 || t.len() != b {
        return Err(Error::shape(format!("{} steps for batch shape {:?}", t.len(), x.shape())));
    }
    for &s in t {
        schedule.check_step(s)?;
    }
    Ok(x.numel() / b.max(1))
}

/// `x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · ε`, with one step per leading-axis row.
pub fn forward_sample(x0: &Tensor, t: &[usize], epsilon: &Tensor, schedule: &NoiseSchedule) -> Result<Tensor> {
    let row = check_batch(x0, epsilon, t, schedule)?;
    let mut out = x0.clone();
    for (i, &s) in t.iter().enumerate() {
        let (a, b) = (schedule.alpha_bar(s).sqrt(), (1.0 - schedule.alpha_bar(s)).sqrt());
        let range = i * row..(i + 1) * row;
        for (o, e) in out.data_mut()[range.clone()].iter_mut().zip(&epsilon.data()[range]) {
            *o = a * *o + b * e;
        }
    }
    Ok(out)
}

/// One ancestral step: `μ + σ_t · noise` with
/// `μ = (x_t − β_t / √(1 − ᾱ_t) · ε̂) / √α_t`.
pub fn reverse_step(
    x_t: &Tensor,
    t: usize,
    eps_pred: &Tensor,
    schedule: &NoiseSchedule,
    noise: &Tensor,
) -> Result<Tensor> {
    schedule.check_step(t)?;
    if x_t.shape() != eps_pred.shape() || x_t.shape() != noise.shape() {
        return Err(Error::shape(format!(
            "x_t {:?}, eps_pred {:?}, noise {:?}",
            x_t.shape(),
            eps_pred.shape(),
            noise.shape()
        )));
    }
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / schedule.alpha(t).sqrt();
    let sigma = schedule.sigma(t);
    let data = x_t
        .data()
        .iter()
        .zip(eps_pred.data())
        .zip(noise.data())
        .map(|((x, e), z)| inv * (x - coef * e) + sigma * z)
        .collect();
    Ok(Tensor::from_vec(data, x_t.shape()))
}

/// Replaces `eps_pred` by the noise consistent with the implied clean signal
/// `(x_t − √(1 − ᾱ_t) · ε̂) / √ᾱ_t` clamped to `[−bound, bound]`.
pub fn clip_epsilon(x_t: &Tensor, t: usize, eps_pred: &Tensor, schedule: &NoiseSchedule, bound: f64) -> Result<Tensor> {
    schedule.check_step(t)?;
    if x_t.shape() != eps_pred.shape() {
        return Err(Error::shape(format!("x_t {:?}, eps_pred {:?}", x_t.shape(), eps_pred.shape())));
    }
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::invalid(format!("clip bound {bound} must be positive")));
    }
    let ab = schedule.alpha_bar(t);
    let (keep, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x_t
        .data()
        .iter()
        .zip(eps_pred.data())
        .map(|(x, e)| {
            let x0 = ((x - noise * e) / keep).clamp(-bound, bound);
            (x - keep * x0) / noise
        })
        .collect();
    Ok(Tensor::from_vec(data, x_t.shape()))
}

/// `batch` steps drawn uniformly from `[1, T]`.
pub fn sample_timesteps(batch: usize, steps: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    (0..batch).map(|_| rng.random_range(1..=steps)).collect()
}

pub fn standard_normal(shape: &[usize], rng: &mut seed::Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

/// One training batch with every random quantity spelled out.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionBatch {
    /// Scaled clean signals `[B, C, L]`.
    pub x0: Tensor,
    pub t: Vec<usize>,
    pub epsilon: Tensor,
    pub cond: Option<Vec<usize>>,
}

impl DiffusionBatch {
    /// Draws steps and noise for `segments` from `seed`.
    pub fn sample(segments: &[&SignalSegment], steps: usize, conditional: bool, seed: u64) -> Result<Self> {
        let x0 = stack(segments)?;
        let t = sample_timesteps(segments.len(), steps, seed::derive(seed, 0));
        let epsilon = standard_normal(x0.shape(), &mut seed::rng(seed::derive(seed, 1)));
        let cond = if conditional {
            Some(
                segments
                    .iter()
                    .map(|s| s.label().ok_or_else(|| Error::invalid("conditional training needs labels")))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self { x0, t, epsilon, cond })
    }
}

/// Segments as a `[B, C, L]` tensor.
pub fn stack(segments: &[&SignalSegment]) -> Result<Tensor> {
    let first = segments
        .first()
        .ok_or_else(|| Error::invalid("cannot stack an empty batch"))?;
    let (c, l) = (first.channels(), first.len());
    let mut data = Vec::with_capacity(segments.len() * c * l);
    for s in segments {
        if (s.channels(), s.len()) != (c, l) {
            return Err(Error::shape(format!("{}x{} segment among {c}x{l}", s.channels(), s.len())));
        }
        data.extend_from_slice(s.data());
    }
    Ok(Tensor::from_vec(data, &[segments.len(), c, l]))
}

/// Mean squared error between predicted and injected noise, as a graph scalar.
pub fn diffusion_loss<'g, M: EpsilonModel + ?Sized>(
    model: &M,
    p: &Bound<'g>,
    graph: &'g Graph,
    input: &DiffusionBatch,
    schedule: &NoiseSchedule,
) -> Result<Var<'g>> {
    let x_t = forward_sample(&input.x0, &input.t, &input.epsilon, schedule)?;
    let pred = model.predict_graph(p, graph.constant(x_t), &input.t, input.cond.as_deref())?;
    if pred.shape() != input.epsilon.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs noise {:?}",
            pred.shape(),
            input.epsilon.shape()
        )));
    }
    Ok(mse(pred, graph.constant(input.epsilon.clone())))
}

/// Loss value and its gradient for every model parameter, in registration order.
pub fn loss_and_gradients<M: EpsilonModel + ?Sized>(
    model: &M,
    input: &DiffusionBatch,
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<Tensor>)> {
    let g = Graph::new();
    let p = model.params().bind(&g);
    let loss = diffusion_loss(model, &p, &g, input, schedule)?;
    let value = loss.item();
    let mut grads = g.backward(loss);
    Ok((value, p.gradients(&mut grads)))
}

fn check_model<M: EpsilonModel + ?Sized>(model: &M, schedule: &NoiseSchedule) -> Result<()> {
    if model.max_steps() != schedule.steps() {
        return Err(Error::invalid(format!(
            "model was built for T = {} but the schedule has T = {}",
            model.max_steps(),
            schedule.steps()
        )));
    }
    Ok(())
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to step 1.
///
/// Segment `i` draws all of its noise from the stream `derive(seed, i)`, so
/// the output is independent of thread count. Outputs stay in the scaled
/// domain and carry `cond` as labels.
pub fn generate<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    count: usize,
    cond: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<SignalSegment>> {
    generate_clipped(model, schedule, count, cond, seed, None)
}

/// [`generate`] where each step's implied clean signal is clamped to
/// `[−bound, bound]` (see [`clip_epsilon`]) when `clip` is set. Scaled
/// training data never leaves that range, while an imperfect noise predictor
/// otherwise lets errors grow by up to `1/√ᾱ_T` over the chain.
pub fn generate_clipped<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    count: usize,
    cond: Option<&[usize]>,
    seed: u64,
    clip: Option<f64>,
) -> Result<Vec<SignalSegment>> {
    check_model(model, schedule)?;
    match cond {
        Some(c) if c.len() != count => {
            return Err(Error::shape(format!("{} class labels for {count} segments", c.len())));
        }
        None if model.is_conditional() => return Err(Error::invalid("conditional model needs class labels")),
        Some(_) if !model.is_conditional() => {
            return Err(Error::invalid("unconditional model takes no class labels"))
        }
        _ => {}
    }
    let (c, l) = (model.channels(), model.len());
    let chunks: Vec<usize> = (0..count).step_by(GENERATE_CHUNK).collect();
    let parts = chunks
        .par_iter()
        .map(|&start| {
            let end = (start + GENERATE_CHUNK).min(count);
            let n = end - start;
            let mut rngs: Vec<seed::Rng> = (start..end).map(|i| seed::rng(seed::derive(seed, i as u64))).collect();
            let draw = |rngs: &mut [seed::Rng]| {
                let mut data = Vec::with_capacity(n * c * l);
                for r in rngs.iter_mut() {
                    data.extend((0..c * l).map(|_| -> f64 { StandardNormal.sample(r) }));
                }
                Tensor::from_vec(data, &[n, c, l])
            };
            let mut x = draw(&mut rngs);
            let labels = cond.map(|all| &all[start..end]);
            for t in (1..=schedule.steps()).rev() {
                let mut eps = model.predict(&x, &vec![t; n], labels)?;
                if let Some(bound) = clip {
                    eps = clip_epsilon(&x, t, &eps, schedule, bound)?;
                }
                let noise = if t > 1 { draw(&mut rngs) } else { Tensor::zeros(x.shape()) };
                x = reverse_step(&x, t, &eps, schedule, &noise)?;
            }
            if !x.is_finite() {
                return Err(Error::NonFinite("sampling produced non-finite values".into()));
            }
            x.data()
                .chunks(c * l)
                .enumerate()
                .map(|(j, row)| SignalSegment::new(c, l, row.to_vec(), labels.map(|lab| lab[j])))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Optimizer and loop settings shared by the diffusion and classifier trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            lr: 2e-4,
            weight_decay: 1e-6,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid(format!(
                "need lr > 0 and weight_decay >= 0, got {} and {}",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Trains `model` on scaled `data` and returns the mean loss of every epoch.
///
/// Each epoch reshuffles with its own derived stream and each batch draws its
/// steps and noise from another, so a run is a pure function of `seed`.
pub fn train_diffusion(
    model: &mut NoisePredictor,
    schedule: &NoiseSchedule,
    data: &SignalDataset,
    settings: &TrainSettings,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    settings.validate()?;
    check_model(model, schedule)?;
    let (c, l) = data
        .shape()
        .ok_or_else(|| Error::invalid("no training segments"))?;
    if (c, l) != (model.config().channels, model.config().len) {
        return Err(Error::shape(format!(
            "data is {c}x{l}, model expects {}x{}",
            model.config().channels,
            model.config().len
        )));
    }
    let conditional = model.config().is_conditional();
    let mut opt = AdamW::new(settings.optimizer(), model.params());
    let mut curve = Vec::with_capacity(settings.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..settings.epochs {
        let epoch_seed = seed::derive(seed, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut seed::rng(epoch_seed));
        let mut total = 0.0;
        for (b, idx) in order.chunks(settings.batch_size).enumerate() {
            let segs: Vec<&SignalSegment> = idx.iter().map(|&i| &data.segments()[i]).collect();
            let batch = DiffusionBatch::sample(&segs, schedule.steps(), conditional, seed::derive(epoch_seed, 1 + b as u64))?;
            let (loss, grads) = loss_and_gradients(&*model, &batch, schedule)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            opt.step(model.params_mut(), &grads);
            if model.params().iter().any(|(_, _, t)| !t.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            total += loss * idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    Ok(curve)
}
