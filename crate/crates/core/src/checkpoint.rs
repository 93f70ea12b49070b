//! `EDTM` parameter container shared by the noise predictor and the classifier.
//!
//! ```text
//! "EDTM" | version u16 | config_len u32 | config JSON (config_len bytes)
//!        | count u32 | count × ( name_len u32 | name UTF-8 | rank u32
//!                              | rank × dim u32 | f32 payload )
//! ```
//! Little-endian throughout. Parameters live in memory as `f64` and are
//! stored as `f32`; values that are `f32`-representable roundtrip exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use eegdit_autograd::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifierConfig};
use crate::error::{read_err, Error, Result};
use crate::model::{ModelConfig, NoisePredictor};

pub const EDTM_MAGIC: [u8; 4] = *b"EDTM";
pub const EDTM_VERSION: u16 = 1;

/// Guard against absurd lengths in corrupt headers.
const MAX_LEN: u32 = 1 << 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config")]
pub enum CheckpointConfig {
    NoisePredictor(ModelConfig),
    Classifier(ClassifierConfig),
}

pub fn write_checkpoint<W: Write>(config: &CheckpointConfig, params: &ParamSet, mut w: W) -> Result<()> {
    let json = serde_json::to_vec(config).map_err(|e| Error::invalid(format!("config: {e}")))?;
    w.write_all(&EDTM_MAGIC)?;
    w.write_u16::<LE>(EDTM_VERSION)?;
    w.write_u32::<LE>(json.len() as u32)?;
    w.write_all(&json)?;
    w.write_u32::<LE>(params.len() as u32)?;
    for (_, name, t) in params.iter() {
        if let Some(v) = t.data().iter().find(|v| !(**v as f32).is_finite()) {
            return Err(Error::NonFinite(format!("parameter {name} holds {v}")));
        }
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u32::<LE>(t.rank() as u32)?;
        for &d in t.shape() {
            w.write_u32::<LE>(d as u32)?;
        }
        for &v in t.data() {
            w.write_f32::<LE>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_len<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let n = r.read_u32::<LE>().map_err(read_err(what))?;
    if n > MAX_LEN {
        return Err(Error::Corrupt(format!("{what} length {n} is implausible")));
    }
    Ok(n as usize)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointConfig, ParamSet)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(read_err("magic"))?;
    if magic != EDTM_MAGIC {
        return Err(Error::BadMagic {
            expected: EDTM_MAGIC,
            found: magic,
        });
    }
    let version = r.read_u16::<LE>().map_err(read_err("header"))?;
    if version != EDTM_VERSION {
        return Err(Error::Version {
            expected: EDTM_VERSION,
            found: version,
        });
    }
    let n = read_len(&mut r, "config")?;
    let mut json = vec![0u8; n];
    r.read_exact(&mut json).map_err(read_err("config"))?;
    let config: CheckpointConfig =
        serde_json::from_slice(&json).map_err(|e| Error::Corrupt(format!("config: {e}")))?;
    let count = read_len(&mut r, "tensor count")?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let n = read_len(&mut r, "name")?;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(read_err("name"))?;
        let name = String::from_utf8(name).map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
        let rank = read_len(&mut r, "rank")?;
        let shape = (0..rank)
            .map(|_| read_len(&mut r, "dims"))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= MAX_LEN as usize)
            .ok_or_else(|| Error::Corrupt(format!("tensor {name} shape {shape:?} is implausible")))?;
        let mut data = vec![0f32; numel];
        r.read_f32_into::<LE>(&mut data).map_err(read_err("payload"))?;
        if params.id_of(&name).is_some() {
            return Err(Error::Corrupt(format!("duplicate tensor {name}")));
        }
        params.register(name, Tensor::from_vec(data.into_iter().map(f64::from).collect(), &shape));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Corrupt("trailing bytes after the last tensor".into()));
    }
    Ok((config, params))
}

pub fn save_checkpoint(config: &CheckpointConfig, params: &ParamSet, path: &Path) -> Result<()> {
    write_checkpoint(config, params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointConfig, ParamSet)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Rounds every parameter to the nearest `f32`, the precision checkpoints keep.
pub fn round_to_stored(params: &mut ParamSet) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

impl NoisePredictor {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&CheckpointConfig::NoisePredictor(self.config().clone()), self.params(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        match load_checkpoint(path)? {
            (CheckpointConfig::NoisePredictor(cfg), params) => Self::from_params(cfg, params),
            _ => Err(Error::invalid(format!("{} holds a classifier, not a noise predictor", path.display()))),
        }
    }
}

impl Classifier {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&CheckpointConfig::Classifier(self.config().clone()), self.params(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        match load_checkpoint(path)? {
            (CheckpointConfig::Classifier(cfg), params) => Self::from_params(cfg, params),
            _ => Err(Error::invalid(format!("{} holds a noise predictor, not a classifier", path.display()))),
        }
    }
}
