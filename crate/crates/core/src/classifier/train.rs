use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use eegdit_autograd::{AdamW, Graph, Tensor};
use rand::seq::SliceRandom;

use super::{evaluate, Classifier, ClassifierConfig, Metrics};
use crate::augment::{go_loss_graph, label_matrix, make_vicinal_batch, soft_cross_entropy, GoConfig, SoftLabel};
use crate::diffusion::{stack, TrainSettings};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{SignalDataset, SignalSegment};

/// How generated data takes part in training.
#[derive(Clone, Copy, Debug)]
pub enum LossMode<'a> {
    /// Cross-entropy on the training set alone.
    PlainCe,
    /// Cross-entropy plus the vicinal term, with a fresh vicinal batch per step.
    Go { pool: &'a SignalDataset, config: &'a GoConfig },
    /// `⌊ratio · |train|⌋` generated segments appended with hard labels.
    Append { data: &'a SignalDataset, ratio: f64 },
}

impl LossMode<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            LossMode::PlainCe => "plain_ce",
            LossMode::Go { .. } => "go",
            LossMode::Append { .. } => "append",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub mode: String,
    pub go: Option<GoConfig>,
    pub append_ratio: Option<f64>,
    /// Segments the optimizer saw per epoch.
    pub train_size: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub test: Option<Metrics>,
    pub seed: u64,
    pub config: ClassifierConfig,
    pub settings: TrainSettings,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// `key=value` lines. The wall time is the only field that varies between identical runs.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode);
        if let Some(go) = &self.go {
            let _ = writeln!(s, "go.beta_smooth={}", go.beta_smooth);
            let _ = writeln!(s, "go.alpha={}", go.alpha);
            let _ = writeln!(s, "go.eta={}", go.eta);
            let _ = writeln!(s, "go.same_class={}", go.same_class);
        }
        if let Some(r) = self.append_ratio {
            let _ = writeln!(s, "append.ratio={r}");
        }
        let _ = writeln!(s, "train_size={}", self.train_size);
        let _ = writeln!(s, "epochs={}", self.epochs.len());
        let best = self.best_epoch.map_or("none".to_string(), |e| e.to_string());
        let _ = writeln!(s, "best_epoch={best}");
        if let Some(m) = &self.test {
            let _ = writeln!(s, "test.acc={}", m.acc);
            let _ = writeln!(s, "test.auc={}", m.auc);
            let _ = writeln!(s, "test.f1={}", m.f1);
            let skipped: Vec<String> = m.skipped_classes.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "test.skipped_classes={}", skipped.join(";"));
        }
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "lr={}", self.settings.lr);
        let _ = writeln!(s, "weight_decay={}", self.settings.weight_decay);
        let _ = writeln!(s, "batch_size={}", self.settings.batch_size);
        let _ = writeln!(
            s,
            "config={}",
            serde_json::to_string(&self.config).expect("config serializes")
        );
        let _ = writeln!(s, "wall_time_s={:.3}", self.wall_time_s);
        s
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_acc);
        }
        s
    }

    /// Writes `<stem>.txt` and `<stem>_epochs.csv` next to each other.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_key_values())?;
        std::fs::write(dir.join(format!("{stem}_epochs.csv")), self.epochs_csv())?;
        Ok(())
    }
}

fn hard_labels(data: &SignalDataset) -> Result<Vec<usize>> {
    data.labels()
        .into_iter()
        .map(|l| l.ok_or_else(|| Error::invalid("training data must be labeled")))
        .collect()
}

/// Root-mean-square over all samples, or 1 for silent data.
fn rms(data: &SignalDataset) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in data.segments() {
        sum += s.data().iter().map(|v| v * v).sum::<f64>();
        n += s.data().len();
    }
    let r = (sum / n.max(1) as f64).sqrt();
    if r > 0.0 && r.is_finite() {
        r
    } else {
        1.0
    }
}

/// Trains a fresh classifier and returns the parameters of the epoch with the
/// best validation accuracy (earliest on ties).
///
/// Shuffling, initialization and vicinal batches each draw from streams
/// derived from `seed`, so reruns are bit-identical.
pub fn train_classifier(
    train: &SignalDataset,
    val: &SignalDataset,
    config: &ClassifierConfig,
    mode: LossMode<'_>,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(Classifier, TrainReport)> {
    let start = Instant::now();
    settings.validate()?;
    config.check_data(train)?;
    config.check_data(val)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    hard_labels(val)?;
    let k = config.num_classes;

    let (train_set, go, append_ratio) = match mode {
        LossMode::PlainCe => (train.clone(), None, None),
        LossMode::Go { pool, config: go } => {
            go.validate()?;
            config.check_data(pool)?;
            (train.clone(), Some(go.clone()), None)
        }
        LossMode::Append { data, ratio } => {
            if !(ratio >= 0.0 && ratio.is_finite()) {
                return Err(Error::invalid(format!("append ratio {ratio} must be nonnegative")));
            }
            config.check_data(data)?;
            hard_labels(data)?;
            let n = (ratio * train.len() as f64).floor() as usize;
            if n > data.len() {
                return Err(Error::invalid(format!(
                    "append ratio {ratio} needs {n} generated segments, only {} available",
                    data.len()
                )));
            }
            let mut pick: Vec<usize> = (0..data.len()).collect();
            pick.shuffle(&mut seed::rng(seed::derive_named(seed, "append")));
            pick.truncate(n);
            pick.sort_unstable();
            let extra = data.subset(&pick);
            let merged = SignalDataset::new(
                train.segments().iter().chain(extra.segments()).cloned().collect(),
                k,
                None,
                train.sample_rate_hz(),
            )?;
            (merged, None, Some(ratio))
        }
    };
    let labels = hard_labels(&train_set)?;

    let mut cfg = config.clone();
    if cfg.input_scale.is_none() {
        cfg.input_scale = Some(rms(train));
    }
    let mut model = Classifier::new(cfg.clone(), seed::derive_named(seed, "init"))?;
    let mut opt = AdamW::new(settings.optimizer(), model.params());
    let mut best: Option<(f64, usize, Classifier)> = None;
    let mut epochs = Vec::with_capacity(settings.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..settings.epochs {
        let epoch_seed = seed::derive(seed, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut seed::rng(epoch_seed));
        let mut total = 0.0;
        for (b, idx) in order.chunks(settings.batch_size).enumerate() {
            let segs: Vec<&SignalSegment> = idx.iter().map(|&i| &train_set.segments()[i]).collect();
            let targets = label_matrix(
                &idx.iter()
                    .map(|&i| SoftLabel::one_hot(labels[i], k))
                    .collect::<Result<Vec<_>>>()?,
            )?;
            let g = Graph::new();
            let p = model.params().bind(&g);
            let (_, logits) = model.forward(&p, g.constant(stack(&segs)?))?;
            let loss = match (&mode, &go) {
                (LossMode::Go { pool, .. }, Some(go)) if go.eta != 0.0 => {
                    let vic = make_vicinal_batch(&segs, pool, go, k, seed::derive(epoch_seed, 1 + b as u64))?;
                    let vsegs: Vec<&SignalSegment> = vic.iter().map(|v| &v.segment).collect();
                    let vlabels: Vec<SoftLabel> = vic.iter().map(|v| v.label.clone()).collect();
                    let (_, vlogits) = model.forward(&p, g.constant(stack(&vsegs)?))?;
                    go_loss_graph(logits, &targets, vlogits, &label_matrix(&vlabels)?, go.eta)
                }
                _ => soft_cross_entropy(logits, &targets),
            };
            let value = loss.item();
            let mut grads = g.backward(loss);
            let grads: Vec<Tensor> = p.gradients(&mut grads);
            if !value.is_finite() || grads.iter().any(|t| !t.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            opt.step(model.params_mut(), &grads);
            if model.params().iter().any(|(_, _, t)| !t.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            total += value * idx.len() as f64;
        }
        let val_acc = match evaluate(&model, val) {
            Ok(m) => m.acc,
            // Finite but huge weights can still overflow the logits.
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch }),
            Err(e) => return Err(e),
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_acc,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, model.clone()));
        }
    }

    let (best_epoch, model) = match best {
        Some((_, e, m)) => (Some(e), m),
        None => (None, model),
    };
    let report = TrainReport {
        mode: mode.name().to_string(),
        go,
        append_ratio,
        train_size: train_set.len(),
        epochs,
        best_epoch,
        test: None,
        seed,
        config: cfg,
        settings: settings.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
