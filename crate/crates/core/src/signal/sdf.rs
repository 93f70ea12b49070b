//! `SDF1` dataset container.
//!
//! ```text
//! "SDF1" | version u16 | flags u16 | k u32 | C u32 | L u32 | count u32
//!        | sample_rate f32 | [scale f32 if flags bit1]
//!        | count × ( [label u16 if flags bit0] | C×L f32, channel-major )
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{SignalDataset, SignalSegment};
use crate::error::{read_err, Error, Result};

pub const SDF_MAGIC: [u8; 4] = *b"SDF1";
pub const SDF_VERSION: u16 = 1;

const FLAG_LABELS: u16 = 1;
const FLAG_SCALE: u16 = 1 << 1;

pub fn write_dataset<W: Write>(dataset: &SignalDataset, mut w: W) -> Result<()> {
    let labeled = dataset.is_labeled();
    if !labeled && dataset.segments().iter().any(|s| s.label().is_some()) {
        return Err(Error::invalid("cannot store a dataset where only some segments are labeled"));
    }
    if labeled && dataset.num_classes() > u16::MAX as usize + 1 {
        return Err(Error::invalid("labels do not fit in u16"));
    }
    let (c, l) = dataset.shape().unwrap_or((0, 0));
    let mut flags = 0u16;
    if labeled {
        flags |= FLAG_LABELS;
    }
    if dataset.scale_factor().is_some() {
        flags |= FLAG_SCALE;
    }
    w.write_all(&SDF_MAGIC)?;
    w.write_u16::<LE>(SDF_VERSION)?;
    w.write_u16::<LE>(flags)?;
    w.write_u32::<LE>(dataset.num_classes() as u32)?;
    w.write_u32::<LE>(c as u32)?;
    w.write_u32::<LE>(l as u32)?;
    w.write_u32::<LE>(dataset.len() as u32)?;
    w.write_f32::<LE>(dataset.sample_rate_hz() as f32)?;
    if let Some(s) = dataset.scale_factor() {
        w.write_f32::<LE>(s as f32)?;
    }
    for seg in dataset.segments() {
        if labeled {
            w.write_u16::<LE>(seg.label().expect("labeled dataset") as u16)?;
        }
        for &v in seg.data() {
            w.write_f32::<LE>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<SignalDataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(read_err("magic"))?;
    if magic != SDF_MAGIC {
        return Err(Error::BadMagic {
            expected: SDF_MAGIC,
            found: magic,
        });
    }
    let version = r.read_u16::<LE>().map_err(read_err("header"))?;
    if version != SDF_VERSION {
        return Err(Error::Version {
            expected: SDF_VERSION,
            found: version,
        });
    }
    let header = |r: &mut R| r.read_u32::<LE>().map_err(read_err("header"));
    let flags = r.read_u16::<LE>().map_err(read_err("header"))?;
    if flags & !(FLAG_LABELS | FLAG_SCALE) != 0 {
        return Err(Error::Corrupt(format!("unknown flag bits {flags:#06x}")));
    }
    let k = header(&mut r)? as usize;
    let c = header(&mut r)? as usize;
    let l = header(&mut r)? as usize;
    let count = header(&mut r)? as usize;
    let sample_rate = r.read_f32::<LE>().map_err(read_err("header"))? as f64;
    let scale = if flags & FLAG_SCALE != 0 {
        Some(r.read_f32::<LE>().map_err(read_err("header"))? as f64)
    } else {
        None
    };
    if count > 0 && (c == 0 || l == 0) {
        return Err(Error::Corrupt(format!("{count} segments of shape {c}x{l}")));
    }
    let mut segments = Vec::with_capacity(count.min(1 << 16));
    let mut buf = vec![0f32; c * l];
    for i in 0..count {
        let what = format!("segment {i} of {count}");
        let label = if flags & FLAG_LABELS != 0 {
            Some(r.read_u16::<LE>().map_err(read_err(&what))? as usize)
        } else {
            None
        };
        r.read_f32_into::<LE>(&mut buf).map_err(read_err(&what))?;
        let data = buf.iter().map(|&v| v as f64).collect();
        segments.push(SignalSegment::new(c, l, data, label)?);
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Corrupt("trailing bytes after the last segment".into()));
    }
    SignalDataset::new(segments, k, scale, sample_rate)
}

pub fn save_dataset(dataset: &SignalDataset, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_dataset(dataset, BufWriter::new(f))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SignalDataset> {
    let f = File::open(path)?;
    read_dataset(BufReader::new(f))
}
