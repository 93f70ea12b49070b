//! Generated-original reassembly: smoothed labels for generated segments,
//! Beta-drawn crop proportions, time-axis reassembly of an original and a
//! generated segment, mixed labels and the combined loss.

use eegdit_autograd::{Graph, Tensor, Var};
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::signal::{SignalDataset, SignalSegment};

/// A probability vector over `k` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("label over zero classes"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(format!("label has a negative or non-finite entry: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("label sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: usize, k: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::invalid(format!("class {class} outside [0, {k})")));
        }
        let mut probs = vec![0.0; k];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Shannon entropy in nats, `0 · ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoConfig {
    /// Weight kept on the generated segment's own class.
    pub beta_smooth: f64,
    /// Crop proportions are drawn from `Beta(alpha, alpha)`.
    pub alpha: f64,
    /// Weight of the vicinal term.
    pub eta: f64,
    /// Pair each original only with generated segments of its own class.
    pub same_class: bool,
}

impl Default for GoConfig {
    fn default() -> Self {
        Self {
            beta_smooth: 0.9,
            alpha: 1.0,
            eta: 1.0,
            same_class: false,
        }
    }
}

impl GoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta_smooth) {
            return Err(Error::invalid(format!("beta_smooth {} outside [0, 1]", self.beta_smooth)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha {} must be positive", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta {} must be nonnegative", self.eta)));
        }
        Ok(())
    }
}

/// `onehot(y) · β + (1 − β) / k`.
pub fn smooth_labels(class: usize, beta_smooth: f64, k: usize) -> Result<SoftLabel> {
    if !(0.0..=1.0).contains(&beta_smooth) {
        return Err(Error::invalid(format!("beta_smooth {beta_smooth} outside [0, 1]")));
    }
    let mut label = SoftLabel::one_hot(class, k)?;
    let floor = (1.0 - beta_smooth) / k as f64;
    for p in &mut label.probs {
        *p = *p * beta_smooth + floor;
    }
    Ok(label)
}

/// One draw from `Beta(alpha, alpha)`.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    let dist = Beta::new(alpha, alpha).map_err(|e| Error::invalid(format!("alpha {alpha}: {e}")))?;
    Ok(dist.sample(rng))
}

/// A reassembled segment and the fraction of its samples taken from the original.
#[derive(Clone, Debug, PartialEq)]
pub struct Reassembled {
    pub segment: SignalSegment,
    pub lambda_actual: f64,
}

/// Takes `round(λL)` contiguous samples from `original` and the remaining
/// `L − round(λL)` from `generated`, each window at a uniform random start
/// shared by all channels, and joins them in random order.
///
/// Draws from `rng`, in order: the original's start, the generated start,
/// then whether the original goes first.
pub fn reassemble(
    original: &SignalSegment,
    generated: &SignalSegment,
    lambda: f64,
    rng: &mut Rng,
) -> Result<Reassembled> {
    let (c, l) = (original.channels(), original.len());
    if (generated.channels(), generated.len()) != (c, l) {
        return Err(Error::shape(format!(
            "original is {c}x{l}, generated is {}x{}",
            generated.channels(),
            generated.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let n1 = ((lambda * l as f64).round() as usize).min(l);
    let n2 = l - n1;
    let s1 = rng.random_range(0..=l - n1);
    let s2 = rng.random_range(0..=l - n2);
    let original_first = rng.random_bool(0.5);
    let mut data = Vec::with_capacity(c * l);
    for ch in 0..c {
        let a = &original.channel(ch)[s1..s1 + n1];
        let b = &generated.channel(ch)[s2..s2 + n2];
        if original_first {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        } else {
            data.extend_from_slice(b);
            data.extend_from_slice(a);
        }
    }
    Ok(Reassembled {
        segment: SignalSegment::new(c, l, data, None)?,
        lambda_actual: n1 as f64 / l as f64,
    })
}

/// `λ · y_orig + (1 − λ) · ỹ_gen`.
pub fn mix_labels(original: &SoftLabel, generated: &SoftLabel, lambda: f64) -> Result<SoftLabel> {
    if original.num_classes() != generated.num_classes() {
        return Err(Error::shape(format!(
            "labels over {} and {} classes",
            original.num_classes(),
            generated.num_classes()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let probs = original
        .probs
        .iter()
        .zip(&generated.probs)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok(SoftLabel { probs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VicinalSample {
    pub segment: SignalSegment,
    pub label: SoftLabel,
    pub lambda_actual: f64,
    /// Index of the generated partner in the pool.
    pub partner: usize,
}

/// One vicinal sample per original. Sample `i` draws from `derive(seed, i)`:
/// its partner, then `λ`, then the reassembly.
pub fn make_vicinal_batch(
    originals: &[&SignalSegment],
    pool: &SignalDataset,
    config: &GoConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<VicinalSample>> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::invalid("generated pool is empty"));
    }
    let pool_labels = pool
        .segments()
        .iter()
        .map(|s| s.label().ok_or_else(|| Error::invalid("generated pool must be labeled")))
        .collect::<Result<Vec<usize>>>()?;
    let by_class: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..pool_labels.len()).filter(|&i| pool_labels[i] == c).collect())
        .collect();
    originals
        .iter()
        .enumerate()
        .map(|(i, orig)| {
            let y = orig
                .label()
                .ok_or_else(|| Error::invalid("original segments must be labeled"))?;
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let candidates: &[usize] = if config.same_class {
                by_class.get(y).map(Vec::as_slice).unwrap_or(&[])
            } else {
                &[]
            };
            let partner = if config.same_class {
                if candidates.is_empty() {
                    return Err(Error::invalid(format!("no generated segment of class {y}")));
                }
                candidates[rng.random_range(0..candidates.len())]
            } else {
                rng.random_range(0..pool.len())
            };
            let lambda = sample_lambda(config.alpha, &mut rng)?;
            let r = reassemble(orig, &pool.segments()[partner], lambda, &mut rng)?;
            let label = mix_labels(
                &SoftLabel::one_hot(y, k)?,
                &smooth_labels(pool_labels[partner], config.beta_smooth, k)?,
                r.lambda_actual,
            )?;
            Ok(VicinalSample {
                segment: r.segment,
                label,
                lambda_actual: r.lambda_actual,
                partner,
            })
        })
        .collect()
}

/// Rows of soft labels as a `[B, k]` tensor.
pub fn label_matrix(labels: &[SoftLabel]) -> Result<Tensor> {
    let k = labels
        .first()
        .ok_or_else(|| Error::invalid("no labels"))?
        .num_classes();
    let mut data = Vec::with_capacity(labels.len() * k);
    for l in labels {
        if l.num_classes() != k {
            return Err(Error::shape("labels over differing class counts"));
        }
        data.extend_from_slice(l.probs());
    }
    Ok(Tensor::from_vec(data, &[labels.len(), k]))
}

/// Batch-mean `−Σ y · log softmax(logits)` for `logits: [B, k]`, `targets: [B, k]`.
pub fn soft_cross_entropy<'g>(logits: Var<'g>, targets: &Tensor) -> Var<'g> {
    let b = logits.shape()[0] as f64;
    let t = logits.graph().constant(targets.clone());
    logits.log_softmax().mul(t).sum_all().scale(-1.0 / b)
}

/// Batch-mean `KL(target ‖ softmax(logits))`, with `0 · ln 0 = 0`.
pub fn kl_to_prediction<'g>(logits: Var<'g>, targets: &Tensor) -> Var<'g> {
    let b = logits.shape()[0] as f64;
    let neg_entropy: f64 = targets
        .data()
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
        / b;
    soft_cross_entropy(logits, targets).add_scalar(neg_entropy)
}

/// `CE(logits_orig, y_orig) + η · KL(y_vic ‖ softmax(logits_vic))`.
pub fn go_loss_graph<'g>(
    logits_orig: Var<'g>,
    y_orig: &Tensor,
    logits_vic: Var<'g>,
    y_vic: &Tensor,
    eta: f64,
) -> Var<'g> {
    let ce = soft_cross_entropy(logits_orig, y_orig);
    if eta == 0.0 {
        return ce;
    }
    ce.add(kl_to_prediction(logits_vic, y_vic).scale(eta))
}

/// Loss value for plain logits `[B, k]`.
pub fn go_loss(
    logits_orig: &Tensor,
    y_orig: &[SoftLabel],
    logits_vic: &Tensor,
    y_vic: &[SoftLabel],
    eta: f64,
) -> Result<f64> {
    if !logits_orig.is_finite() || !logits_vic.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let (yo, yv) = (label_matrix(y_orig)?, label_matrix(y_vic)?);
    if yo.shape() != logits_orig.shape() || yv.shape() != logits_vic.shape() {
        return Err(Error::shape(format!(
            "logits {:?}/{:?} vs labels {:?}/{:?}",
            logits_orig.shape(),
            logits_vic.shape(),
            yo.shape(),
            yv.shape()
        )));
    }
    let g = Graph::new();
    let loss = go_loss_graph(g.constant(logits_orig.clone()), &yo, g.constant(logits_vic.clone()), &yv, eta);
    Ok(loss.item())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(v: &[f64]) -> SignalSegment {
        SignalSegment::new(1, v.len(), v.to_vec(), None).unwrap()
    }

    #[test]
    fn smoothing_examples() {
        let y = smooth_labels(1, 0.9, 2).unwrap();
        assert!((y.probs()[0] - 0.05).abs() < 1e-15 && (y.probs()[1] - 0.95).abs() < 1e-15);
        assert_eq!(smooth_labels(2, 1.0, 3).unwrap().probs(), &[0.0, 0.0, 1.0]);
        assert_eq!(smooth_labels(0, 0.0, 4).unwrap().probs(), &[0.25; 4]);
        assert!(smooth_labels(2, 0.9, 2).is_err());
        assert!(smooth_labels(0, 1.1, 2).is_err());
    }

    #[test]
    fn mixing_examples() {
        let y = SoftLabel::one_hot(0, 2).unwrap();
        let g = smooth_labels(1, 0.9, 2).unwrap();
        let m = mix_labels(&y, &g, 0.5).unwrap();
        assert!((m.probs()[0] - 0.525).abs() < 1e-15 && (m.probs()[1] - 0.475).abs() < 1e-15);
        assert_eq!(mix_labels(&y, &g, 1.0).unwrap(), y);
        assert_eq!(mix_labels(&y, &g, 0.0).unwrap(), g);
        assert!(mix_labels(&y, &SoftLabel::one_hot(0, 3).unwrap(), 0.5).is_err());
    }

    #[test]
    fn reassembly_boundaries() {
        let o = seg(&[1.0, 2.0, 3.0, 4.0]);
        let g = seg(&[9.0, 8.0, 7.0, 6.0]);
        for s in 0..20 {
            let r = reassemble(&o, &g, 1.0, &mut seed::rng(s)).unwrap();
            assert_eq!((r.segment.data(), r.lambda_actual), (o.data(), 1.0));
            let r = reassemble(&o, &g, 0.0, &mut seed::rng(s)).unwrap();
            assert_eq!((r.segment.data(), r.lambda_actual), (g.data(), 0.0));
        }
        assert!(reassemble(&o, &seg(&[1.0, 2.0]), 0.5, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn go_loss_closed_form() {
        let y = [SoftLabel::one_hot(0, 2).unwrap()];
        let yv = [SoftLabel::new(vec![0.5, 0.5]).unwrap()];
        let z = Tensor::zeros(&[1, 2]);
        let v = go_loss(&z, &y, &z, &yv, 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(go_loss(&Tensor::from_vec(vec![f64::NAN, 0.0], &[1, 2]), &y, &z, &yv, 1.0).is_err());
    }

    #[test]
    fn vicinal_batch_contract() {
        let pool = SignalDataset::new(vec![seg(&[5.0; 8]).with_label(Some(1))], 2, None, 1.0).unwrap();
        let origs: Vec<SignalSegment> = (0..8).map(|i| seg(&[i as f64; 8]).with_label(Some(i % 2))).collect();
        let refs: Vec<&SignalSegment> = origs.iter().collect();
        let cfg = GoConfig::default();
        let a = make_vicinal_batch(&refs, &pool, &cfg, 2, 4).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|v| v.partner == 0));
        assert_eq!(a, make_vicinal_batch(&refs, &pool, &cfg, 2, 4).unwrap());
        let empty = SignalDataset::new(vec![], 2, None, 1.0).unwrap();
        assert!(make_vicinal_batch(&refs, &empty, &cfg, 2, 4).is_err());
    }
}
