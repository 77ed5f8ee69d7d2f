//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "DSRMCKPT"
//! version    u32 LE   (1)
//! sizes      4 x u64 LE  input, hidden1, hidden2, output
//! gamma      f64 LE
//! seed       u64 LE
//! W1 W2 b2 W3 b3   f64 LE, matrices row-major
//! ```
//!
//! The training report is written next to the checkpoint as
//! `<checkpoint>.report.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::params::{LayerSizes, NetworkParams};
use super::train::TrainingReport;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSRMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub gamma: f64,
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &NetworkParams, gamma: f64) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for size in params.sizes().as_array() {
        out.write_all(&(size as u64).to_le_bytes())?;
    }
    out.write_all(&gamma.to_le_bytes())?;
    out.write_all(&params.seed().to_le_bytes())?;
    let tensors: [&[f64]; 4] = [&params.w2, &params.b2, &params.w3, &params.b3];
    for v in params.w1_row_major().iter().chain(tensors.into_iter().flatten()) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

fn read_u64<R: Read>(input: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(input: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    (0..count)
        .map(|_| {
            input.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        })
        .collect()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let truncated = |e: std::io::Error| Error::Checkpoint(format!("truncated or unreadable: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version).map_err(truncated)?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = usize::try_from(read_u64(&mut input).map_err(truncated)?)
            .map_err(|_| Error::Checkpoint("layer size overflows usize".into()))?;
    }
    let sizes = LayerSizes::new(dims[0], dims[1], dims[2], dims[3]);
    let gamma = f64::from_bits(read_u64(&mut input).map_err(truncated)?);
    let seed = read_u64(&mut input).map_err(truncated)?;

    let w1 = read_f64s(&mut input, sizes.hidden1 * sizes.input).map_err(truncated)?;
    let w2 = read_f64s(&mut input, sizes.hidden2 * sizes.hidden1).map_err(truncated)?;
    let b2 = read_f64s(&mut input, sizes.hidden2).map_err(truncated)?;
    let w3 = read_f64s(&mut input, sizes.output * sizes.hidden2).map_err(truncated)?;
    let b3 = read_f64s(&mut input, sizes.output).map_err(truncated)?;
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(truncated)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    let params = NetworkParams::from_tensors(sizes, seed, &w1, w2, b2, w3, b3)?;
    Ok(Checkpoint { params, gamma })
}

pub fn report_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &NetworkParams,
    gamma: f64,
    report: Option<&TrainingReport>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), params, gamma).map_err(|e| Error::io(path, e))?;
    if let Some(report) = report {
        let sidecar = report_path(path);
        let value = serde_json::to_value(report).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
        text.push('\n');
        std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
