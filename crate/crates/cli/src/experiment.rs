//! The full protocol: split, train the generator on the training split only,
//! sample, train classifiers under every mode and seed, then aggregate.
//!
//! Progress lives in `record.json` in the output directory. Every stage reads
//! its inputs from files written by earlier stages, so a resumed run produces
//! the same artifacts as an uninterrupted one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};

use eegdit::classifier::Classifier;
use eegdit::eval::{append_fid_row, fid_protocol};
use eegdit::seed;
use eegdit::signal::{load_dataset, save_dataset, split_indices, SignalDataset, SignalSegment, SplitIndices};
use serde::{Deserialize, Serialize};

use crate::commands::{align_classes, fit_classifier, sample_generator, timestamp, train_generator, write_spectra};
use crate::config::{AugmentMode, RunConfig, FULL_SCALE_EPOCHS};
use crate::error::{CliError, Result};

pub const MODES: [(AugmentMode, &str); 3] =
    [(AugmentMode::None, "plain_ce"), (AugmentMode::Go, "go"), (AugmentMode::Append, "append")];

pub const RUNS_HEADER: &str = "mode,seed,acc,auc,f1,best_epoch,train_size";
pub const TABLE_HEADER: &str = "mode,n_seeds,acc_mean,acc_std,auc_mean,auc_std,f1_mean,f1_std,acc_gain_mean,acc_gain_std";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub diffusion: u64,
    pub generate: u64,
    pub extractor: u64,
    /// `(configured seed, derived classifier seed)`.
    pub classifier: Vec<(u64, u64)>,
}

impl StageSeeds {
    pub fn derive(cfg: &RunConfig) -> Self {
        let cls = seed::derive_named(cfg.seed, "classifier");
        Self {
            diffusion: seed::derive_named(cfg.seed, "diffusion"),
            generate: seed::derive_named(cfg.seed, "generate"),
            extractor: seed::derive_named(cfg.seed, "extractor"),
            classifier: cfg.seeds.iter().map(|&s| (s, seed::derive(cls, s))).collect(),
        }
    }
}

/// Evidence that the generator saw training segments only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub generator_segments: usize,
    pub train_segments: usize,
    pub held_out_segments: usize,
    /// Generator inputs whose content matches any validation or test segment.
    pub held_out_matches: usize,
    /// Generator inputs that are not training segments.
    pub foreign_segments: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub mode: String,
    pub seed: u64,
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub best_epoch: Option<usize>,
    pub train_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub n_seeds: usize,
    pub acc_mean: f64,
    pub acc_std: Option<f64>,
    pub auc_mean: f64,
    pub auc_std: Option<f64>,
    pub f1_mean: f64,
    pub f1_std: Option<f64>,
    /// Accuracy minus the plain run's accuracy under the same seed.
    pub acc_gain_mean: f64,
    pub acc_gain_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Config snapshot with `out` cleared; artifact paths are relative to the record.
    pub config: RunConfig,
    pub seeds: StageSeeds,
    pub completed: Vec<String>,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub split: Option<SplitIndices>,
    pub audit: Option<SplitAudit>,
    pub diffusion_final_loss: Option<f64>,
    pub fid: Option<f64>,
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub notes: Vec<String>,
    pub started_at: String,
    pub updated_at: String,
}

pub const RECORD_FILE: &str = "record.json";

fn snapshot(cfg: &RunConfig) -> RunConfig {
    RunConfig { out: PathBuf::new(), ..cfg.clone() }
}

impl ExperimentRecord {
    fn fresh(cfg: &RunConfig) -> Self {
        let now = timestamp();
        Self {
            config: snapshot(cfg),
            seeds: StageSeeds::derive(cfg),
            completed: Vec::new(),
            artifacts: BTreeMap::new(),
            split: None,
            audit: None,
            diffusion_final_loss: None,
            fid: None,
            runs: Vec::new(),
            summary: Vec::new(),
            notes: vec![format!(
                "desk-scale training: {} generator epochs and {} classifier epochs, against {FULL_SCALE_EPOCHS} at full scale",
                cfg.diffusion_training.epochs, cfg.classifier_training.epochs
            )],
            started_at: now.clone(),
            updated_at: now,
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(RECORD_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    fn save(&mut self, dir: &Path) -> Result<()> {
        self.updated_at = timestamp();
        let json = serde_json::to_string_pretty(self).expect("record serializes");
        let tmp = dir.join(format!("{RECORD_FILE}.tmp"));
        std::fs::write(&tmp, json + "\n")?;
        std::fs::rename(tmp, dir.join(RECORD_FILE))?;
        Ok(())
    }

    pub fn is_done(&self, stage: &str) -> bool {
        self.completed.iter().any(|s| s == stage)
    }

    fn finish(&mut self, dir: &Path, stage: &str) -> Result<()> {
        self.completed.push(stage.to_string());
        self.save(dir)
    }

    fn artifact(&mut self, name: &str, rel: impl Into<PathBuf>) {
        self.artifacts.insert(name.to_string(), rel.into());
    }
}

fn fingerprint(s: &SignalSegment) -> u64 {
    let mut h = DefaultHasher::new();
    (s.channels(), s.len()).hash(&mut h);
    for v in s.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Compares the generator's inputs against the split by content.
pub fn audit_split(generator_input: &SignalDataset, train: &SignalDataset, held_out: &[&SignalDataset]) -> SplitAudit {
    let train_prints: std::collections::HashSet<u64> = train.segments().iter().map(fingerprint).collect();
    let held: std::collections::HashSet<u64> =
        held_out.iter().flat_map(|d| d.segments().iter().map(fingerprint)).collect();
    let inputs: Vec<u64> = generator_input.segments().iter().map(fingerprint).collect();
    let held_out_matches = inputs.iter().filter(|f| held.contains(f)).count();
    let foreign_segments = inputs.iter().filter(|f| !train_prints.contains(f)).count();
    SplitAudit {
        generator_segments: inputs.len(),
        train_segments: train.len(),
        held_out_segments: held_out.iter().map(|d| d.len()).sum(),
        held_out_matches,
        foreign_segments,
        passed: held_out_matches == 0 && foreign_segments == 0,
    }
}

fn mean_std(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

/// Mean and sample standard deviation per mode over seeds.
pub fn summarize(runs: &[RunRow]) -> Vec<SummaryRow> {
    let plain: BTreeMap<u64, f64> = runs.iter().filter(|r| r.mode == "plain_ce").map(|r| (r.seed, r.acc)).collect();
    MODES
        .iter()
        .filter_map(|(_, name)| {
            let rows: Vec<&RunRow> = runs.iter().filter(|r| r.mode == *name).collect();
            if rows.is_empty() {
                return None;
            }
            let col = |f: fn(&RunRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (acc_mean, acc_std) = mean_std(&col(|r| r.acc));
            let (auc_mean, auc_std) = mean_std(&col(|r| r.auc));
            let (f1_mean, f1_std) = mean_std(&col(|r| r.f1));
            let gains: Vec<f64> = rows.iter().filter_map(|r| plain.get(&r.seed).map(|p| r.acc - p)).collect();
            let (acc_gain_mean, acc_gain_std) = if gains.is_empty() { (f64::NAN, None) } else { mean_std(&gains) };
            Some(SummaryRow {
                mode: name.to_string(),
                n_seeds: rows.len(),
                acc_mean,
                acc_std,
                auc_mean,
                auc_std,
                f1_mean,
                f1_std,
                acc_gain_mean,
                acc_gain_std,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn runs_csv(runs: &[RunRow]) -> String {
    let mut s = format!("{RUNS_HEADER}\n");
    for r in runs {
        let best = r.best_epoch.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(s, "{},{},{},{},{},{best},{}", r.mode, r.seed, r.acc, r.auc, r.f1, r.train_size);
    }
    s
}

pub fn table_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.n_seeds,
            r.acc_mean,
            opt(r.acc_std),
            r.auc_mean,
            opt(r.auc_std),
            r.f1_mean,
            opt(r.f1_std),
            r.acc_gain_mean,
            opt(r.acc_gain_std)
        );
    }
    s
}

pub fn model_tag(cfg: &RunConfig) -> String {
    let mut tag = format!("eegdit-T{}", cfg.schedule.steps);
    if !cfg.model.msc_enabled {
        tag.push_str("-no_msc");
    }
    if !cfg.model.dfsi_enabled {
        tag.push_str("-no_dfsi");
    }
    tag
}

/// Progress messages for the caller to print.
pub trait Progress {
    fn stage(&mut self, name: &str, skipped: bool);
    fn epoch(&mut self, _stage: &str, _epoch: usize, _loss: f64) {}
}

pub struct Silent;

impl Progress for Silent {
    fn stage(&mut self, _: &str, _: bool) {}
}

/// Runs (or resumes) the experiment in `cfg.out`. With `stop_after`, returns
/// once that stage is recorded, as if interrupted there.
pub fn run_experiment(cfg: &RunConfig, stop_after: Option<&str>, progress: &mut dyn Progress) -> Result<ExperimentRecord> {
    cfg.validate()?;
    if !cfg.conditional {
        return Err(CliError::config("experiment needs conditional = true: go and append modes use labeled generated data"));
    }
    let dir = cfg.out.clone();
    std::fs::create_dir_all(&dir)?;
    let mut rec = match ExperimentRecord::load(&dir)? {
        Some(r) if r.config == snapshot(cfg) => r,
        Some(_) => {
            return Err(CliError::config(format!(
                "{} holds a record made with a different config; remove it or pick another --out",
                dir.join(RECORD_FILE).display()
            )))
        }
        None => ExperimentRecord::fresh(cfg),
    };
    if rec.completed.is_empty() {
        rec.save(&dir)?;
    }
    let stop = |rec: &ExperimentRecord, stage: &str| stop_after == Some(stage) && rec.is_done(stage);

    // Data and split.
    let stage = "data";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        let data = cfg.dataset.load()?;
        if !data.is_labeled() {
            return Err(CliError::config("experiment needs a labeled dataset"));
        }
        let idx = split_indices(&data.labels(), &cfg.split)?;
        save_dataset(&data, dir.join("dataset.sdf"))?;
        for (name, part) in [("train", &idx.train), ("val", &idx.val), ("test", &idx.test)] {
            save_dataset(&data.subset(part), dir.join(format!("{name}.sdf")))?;
            rec.artifact(name, format!("{name}.sdf"));
        }
        rec.artifact("dataset", "dataset.sdf");
        rec.split = Some(idx);
        rec.finish(&dir, stage)?;
    }
    if stop(&rec, stage) {
        return Ok(rec);
    }
    let train = load_dataset(dir.join("train.sdf"))?;
    let val = load_dataset(dir.join("val.sdf"))?;
    let test = load_dataset(dir.join("test.sdf"))?;

    // Generator, trained on the training split alone.
    let stage = "diffusion";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        let generator_input = &train;
        rec.audit = Some(audit_split(generator_input, &train, &[&val, &test]));
        if !rec.audit.as_ref().is_some_and(|a| a.passed) {
            return Err(CliError::config("held-out segments reached the generator's training set"));
        }
        let out = train_generator(cfg, generator_input, &dir.join("diffusion"), rec.seeds.diffusion, |e, l| {
            progress.epoch("diffusion", e, l)
        })?;
        rec.diffusion_final_loss = out.losses.last().copied();
        rec.artifact("diffusion_checkpoint", "diffusion/diffusion.edtm");
        rec.artifact("diffusion_meta", "diffusion/diffusion.meta.json");
        rec.artifact("diffusion_loss", "diffusion/diffusion_loss.csv");
        rec.finish(&dir, stage)?;
    }
    if stop(&rec, stage) {
        return Ok(rec);
    }

    let stage = "generate";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        let count = cfg.generated_count.unwrap_or(train.len());
        let data = sample_generator(cfg, &dir.join("diffusion/diffusion.edtm"), Some(count), None, rec.seeds.generate)?;
        save_dataset(&data, dir.join("generated.sdf"))?;
        rec.artifact("generated", "generated.sdf");
        rec.finish(&dir, stage)?;
    }
    if stop(&rec, stage) {
        return Ok(rec);
    }
    let pool = align_classes(load_dataset(dir.join("generated.sdf"))?, train.num_classes())?;

    for (mode, name) in MODES {
        for &(user_seed, derived) in &rec.seeds.classifier.clone() {
            let stage = format!("classifier/{name}/seed{user_seed}");
            progress.stage(&stage, rec.is_done(&stage));
            if !rec.is_done(&stage) {
                let stem = format!("{name}_seed{user_seed}");
                let out = fit_classifier(
                    cfg,
                    &train,
                    &val,
                    &test,
                    mode,
                    Some(&pool),
                    derived,
                    &dir.join("classifiers"),
                    &stem,
                )?;
                let m = out.report.test.clone().expect("fit_classifier scores the test split");
                rec.runs.push(RunRow {
                    mode: name.to_string(),
                    seed: user_seed,
                    acc: m.acc,
                    auc: m.auc,
                    f1: m.f1,
                    best_epoch: out.report.best_epoch,
                    train_size: out.report.train_size,
                });
                for (suffix, file) in [("", format!("{stem}.edtm")), ("_report", format!("{stem}.txt")), ("_epochs", format!("{stem}_epochs.csv"))] {
                    rec.artifact(&format!("classifier_{stem}{suffix}"), Path::new("classifiers").join(file));
                }
                rec.finish(&dir, &stage)?;
            }
            if stop(&rec, &stage) {
                return Ok(rec);
            }
        }
    }

    // The FID embedding network: plain training on every labeled segment, then frozen.
    let stage = "extractor";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        let full = load_dataset(dir.join("dataset.sdf"))?;
        fit_classifier(cfg, &full, &full, &full, AugmentMode::None, None, rec.seeds.extractor, &dir, "extractor")?;
        rec.artifact("extractor", "extractor.edtm");
        rec.artifact("extractor_report", "extractor.txt");
        rec.artifact("extractor_epochs", "extractor_epochs.csv");
        rec.finish(&dir, stage)?;
    }
    if stop(&rec, stage) {
        return Ok(rec);
    }

    // FID of generated against training data.
    let stage = "fid";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        let extractor = Classifier::load(&dir.join("extractor.edtm"))?;
        let outcome = fid_protocol(&train, &pool, &extractor)?;
        rec.fid = Some(outcome.fid);
        append_fid_row(&dir.join("fid_results.csv"), &timestamp(), &cfg.dataset_name, &model_tag(cfg), outcome.fid)?;
        let spectra = write_spectra(&train, &pool, &dir)?;
        rec.artifact("fid_results", "fid_results.csv");
        for p in spectra {
            let name = p.file_name().expect("spectra files have names").to_string_lossy().to_string();
            rec.artifact(&name.replace('.', "_"), name);
        }
        rec.finish(&dir, stage)?;
    }
    if stop(&rec, stage) {
        return Ok(rec);
    }

    let stage = "summary";
    progress.stage(stage, rec.is_done(stage));
    if !rec.is_done(stage) {
        rec.summary = summarize(&rec.runs);
        std::fs::write(dir.join("runs.csv"), runs_csv(&rec.runs))?;
        std::fs::write(dir.join("table.csv"), table_csv(&rec.summary))?;
        rec.artifact("runs", "runs.csv");
        rec.artifact("table", "table.csv");
        rec.finish(&dir, stage)?;
    }
    Ok(rec)
}
