use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eegdit::augment::GoConfig;
use eegdit::classifier::{evaluate, train_classifier, Classifier, LossMode, Metrics, TrainReport};
use eegdit::diffusion::{generate_clipped, train_diffusion, NoiseSchedule};
use eegdit::eval::{append_fid_row, fid_protocol, spectra_csv, spectra_svg, spectrum_report, FidOutcome, SpectrumKind};
use eegdit::model::NoisePredictor;
use eegdit::signal::{
    compute_scale_factor, load_dataset, save_dataset, scale_dataset, split_dataset, unscale_dataset, SignalDataset,
};
use serde::{Deserialize, Serialize};

use crate::config::{AugmentMode, DatasetSource, RunConfig};
use crate::error::{CliError, Result};

pub const METRICS_HEADER: &str = "timestamp,dataset,model_tag,acc,auc,f1";

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// What `generate` needs to know about a trained generator beyond its weights.
/// Stored as JSON next to the checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    /// Divisor applied to the training data; generated signals are multiplied back.
    pub scale_factor: f64,
    pub sample_rate_hz: f64,
    pub num_classes: usize,
    pub train_size: usize,
}

impl GeneratorMeta {
    pub fn path_for(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("meta.json")
    }

    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(Self::path_for(checkpoint), json + "\n")?;
        Ok(())
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let path = Self::path_for(checkpoint);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(PathBuf, SignalDataset)> {
    let DatasetSource::Synth(_) = &cfg.dataset else {
        return Err(CliError::config("synth needs a synthetic dataset source"));
    };
    let data = cfg.dataset.load()?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("dataset.sdf");
    save_dataset(&data, &path)?;
    Ok((path, data))
}

fn dataset_from(cfg: &RunConfig, path: Option<&Path>) -> Result<SignalDataset> {
    match path {
        Some(p) => Ok(load_dataset(p)?),
        None => cfg.dataset.load(),
    }
}

pub fn loss_curve_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{e},{l}");
    }
    s
}

pub struct DiffusionOutcome {
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub losses: Vec<f64>,
    pub meta: GeneratorMeta,
}

/// Trains on every segment of `data`; the caller decides what that set is.
pub fn train_generator(
    cfg: &RunConfig,
    data: &SignalDataset,
    dir: &Path,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<DiffusionOutcome> {
    let schedule = cfg.schedule.build()?;
    let model_cfg = cfg.model_for(data)?;
    let s = compute_scale_factor(data)?;
    let scaled = scale_dataset(data, s)?;
    let mut model = NoisePredictor::new(model_cfg, eegdit::seed::derive_named(seed, "init"))?;
    let losses = train_diffusion(
        &mut model,
        &schedule,
        &scaled,
        &cfg.diffusion_training,
        eegdit::seed::derive_named(seed, "batches"),
        &mut on_epoch,
    )?;
    ensure_dir(dir)?;
    let checkpoint = dir.join("diffusion.edtm");
    model.save(&checkpoint)?;
    let meta = GeneratorMeta {
        scale_factor: s,
        sample_rate_hz: data.sample_rate_hz(),
        num_classes: data.num_classes(),
        train_size: data.len(),
    };
    meta.save(&checkpoint)?;
    let curve = dir.join("diffusion_loss.csv");
    std::fs::write(&curve, loss_curve_csv(&losses))?;
    Ok(DiffusionOutcome { checkpoint, curve, losses, meta })
}

pub fn cmd_train_diffusion(
    cfg: &RunConfig,
    data: Option<&Path>,
    on_epoch: impl FnMut(usize, f64),
) -> Result<DiffusionOutcome> {
    let data = dataset_from(cfg, data)?;
    train_generator(cfg, &data, &cfg.out, cfg.seed, on_epoch)
}

/// Samples `count` segments (or one per class label in `classes`) and returns
/// them in original units.
pub fn sample_generator(
    cfg: &RunConfig,
    checkpoint: &Path,
    count: Option<usize>,
    classes: Option<&[usize]>,
    seed: u64,
) -> Result<SignalDataset> {
    let model = NoisePredictor::load(checkpoint)?;
    let meta = GeneratorMeta::load(checkpoint)?;
    let schedule: NoiseSchedule = cfg.schedule.build()?;
    let conditional = model.config().num_classes.is_some();
    let labels: Option<Vec<usize>> = match (classes, conditional) {
        (Some(_), false) => return Err(CliError::config("unconditional checkpoint takes no class list")),
        (Some(c), true) => {
            if count.is_some_and(|n| n != c.len()) {
                return Err(CliError::config(format!("count {} disagrees with {} class labels", count.unwrap(), c.len())));
            }
            Some(c.to_vec())
        }
        // Balanced round robin over the classes.
        (None, true) => Some((0..count.unwrap_or(meta.train_size)).map(|i| i % meta.num_classes).collect()),
        (None, false) => None,
    };
    let n = labels.as_ref().map_or(count.unwrap_or(meta.train_size), |l| l.len());
    if model.config().max_steps != schedule.steps() {
        return Err(CliError::config(format!(
            "checkpoint was trained with {} diffusion steps, config schedule has {}",
            model.config().max_steps,
            schedule.steps()
        )));
    }
    let segments = generate_clipped(&model, &schedule, n, labels.as_deref(), seed, cfg.sample_clip)?;
    let k = if conditional { meta.num_classes } else { 1 };
    let scaled = SignalDataset::new(segments, k.max(1), None, meta.sample_rate_hz)?;
    Ok(unscale_dataset(&scaled, meta.scale_factor)?)
}

pub fn cmd_generate(
    cfg: &RunConfig,
    checkpoint: &Path,
    count: Option<usize>,
    classes: Option<&[usize]>,
) -> Result<(PathBuf, SignalDataset)> {
    let data = sample_generator(cfg, checkpoint, count, classes, cfg.seed)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("generated.sdf");
    save_dataset(&data, &path)?;
    Ok((path, data))
}

/// Generated data is saved with its own class count; classifiers need the original one.
pub fn align_classes(pool: SignalDataset, num_classes: usize) -> Result<SignalDataset> {
    if pool.num_classes() == num_classes {
        return Ok(pool);
    }
    let fs = pool.sample_rate_hz();
    Ok(SignalDataset::new(pool.into_segments(), num_classes, None, fs)?)
}

pub struct ClassifierOutcome {
    pub checkpoint: PathBuf,
    pub report: TrainReport,
}

/// Trains one classifier, scores it on `test` and writes `<stem>.edtm`,
/// `<stem>.txt` and `<stem>_epochs.csv` into `dir`.
#[allow(clippy::too_many_arguments)]
pub fn fit_classifier(
    cfg: &RunConfig,
    train: &SignalDataset,
    val: &SignalDataset,
    test: &SignalDataset,
    mode: AugmentMode,
    pool: Option<&SignalDataset>,
    seed: u64,
    dir: &Path,
    stem: &str,
) -> Result<ClassifierOutcome> {
    let ccfg = cfg.classifier_for(train)?;
    let go: GoConfig = cfg.go.clone();
    let need_pool = || pool.ok_or_else(|| CliError::config(format!("mode {mode:?} needs generated data")));
    let loss_mode = match mode {
        AugmentMode::None => LossMode::PlainCe,
        AugmentMode::Go => LossMode::Go { pool: need_pool()?, config: &go },
        AugmentMode::Append => LossMode::Append { data: need_pool()?, ratio: cfg.append_ratio },
    };
    let (model, mut report) = train_classifier(train, val, &ccfg, loss_mode, &cfg.classifier_training, seed)?;
    ensure_dir(dir)?;
    let checkpoint = dir.join(format!("{stem}.edtm"));
    model.save(&checkpoint)?;
    // Score the stored weights so a later `evaluate` of the checkpoint agrees.
    let stored = Classifier::load(&checkpoint)?;
    report.test = Some(evaluate(&stored, test)?);
    report.save(dir, stem)?;
    Ok(ClassifierOutcome { checkpoint, report })
}

pub fn cmd_train_classifier(
    cfg: &RunConfig,
    data: Option<&Path>,
    pool: Option<&Path>,
    mode: AugmentMode,
) -> Result<ClassifierOutcome> {
    let data = dataset_from(cfg, data)?;
    let (train, val, test) = split_dataset(&data, &cfg.split)?;
    let pool = match pool {
        Some(p) => Some(align_classes(load_dataset(p)?, data.num_classes())?),
        None => None,
    };
    let stem = match mode {
        AugmentMode::None => "classifier_plain_ce",
        AugmentMode::Go => "classifier_go",
        AugmentMode::Append => "classifier_append",
    };
    fit_classifier(cfg, &train, &val, &test, mode, pool.as_ref(), cfg.seed, &cfg.out, stem)
}

pub fn metrics_row(timestamp: &str, dataset: &str, tag: &str, m: &Metrics) -> String {
    format!("{timestamp},{dataset},{tag},{},{},{}", m.acc, m.auc, m.f1)
}

pub fn append_line(path: &Path, header: &str, line: &str) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{line}")?;
    Ok(())
}

fn file_tag(path: &Path) -> String {
    path.file_stem().map_or("model".into(), |s| s.to_string_lossy().replace(',', "_"))
}

/// Scores a classifier checkpoint on `test` (or the config's test split) and
/// appends a row to `<out>/metrics.csv`.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, test: Option<&Path>) -> Result<(Metrics, String)> {
    let model = Classifier::load(checkpoint)?;
    let test = match test {
        Some(p) => load_dataset(p)?,
        None => split_dataset(&cfg.dataset.load()?, &cfg.split)?.2,
    };
    let m = evaluate(&model, &test)?;
    let row = metrics_row(&timestamp(), &cfg.dataset_name, &file_tag(checkpoint), &m);
    append_line(&cfg.out.join("metrics.csv"), METRICS_HEADER, &row)?;
    Ok((m, row))
}

pub struct FidReport {
    pub outcome: FidOutcome,
    /// Spectrum CSV and per-channel SVGs, when requested.
    pub spectra: Vec<PathBuf>,
}

/// Writes `spectra.csv` and one `spectra_ch<c>.svg` per channel into `dir`.
pub fn write_spectra(original: &SignalDataset, generated: &SignalDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    let a = spectrum_report(original, SpectrumKind::Magnitude)?;
    let b = spectrum_report(generated, SpectrumKind::Magnitude)?;
    let pops = [("original", &a), ("generated", &b)];
    ensure_dir(dir)?;
    let csv = dir.join("spectra.csv");
    std::fs::write(&csv, spectra_csv(&pops)?)?;
    let mut paths = vec![csv];
    for c in 0..a.channels.len() {
        let svg = dir.join(format!("spectra_ch{c}.svg"));
        std::fs::write(&svg, spectra_svg(&pops, c)?)?;
        paths.push(svg);
    }
    Ok(paths)
}

pub fn cmd_fid(
    cfg: &RunConfig,
    original: &Path,
    generated: &Path,
    extractor: &Path,
    spectra: bool,
    tag: Option<&str>,
) -> Result<FidReport> {
    let a = load_dataset(original)?;
    let b = load_dataset(generated)?;
    let model = Classifier::load(extractor)?;
    let outcome = fid_protocol(&a, &b, &model)?;
    let tag = tag.map_or_else(|| file_tag(generated), |t| t.replace(',', "_"));
    append_fid_row(&cfg.out.join("fid_results.csv"), &timestamp(), &cfg.dataset_name, &tag, outcome.fid)?;
    let spectra = if spectra { write_spectra(&a, &b, &cfg.out)? } else { Vec::new() };
    Ok(FidReport { outcome, spectra })
}
