//! Binary model checkpoints.
//!
//! Layout (little endian): magic `TAGCKPT\x01`, `u8` model kind, `u64` seed,
//! `u64` epoch, `u32` network count, then per network a `u32` layer count and
//! per layer the weight (`u64` rows, `u64` cols, values) followed by the bias
//! (`u64` cols, values).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::matrix::DenseMatrix;
use super::model::GcnParams;
use super::train::{ModelKind, TrainedModel};

const MAGIC: &[u8; 8] = b"TAGCKPT\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub seed: u64,
    pub epoch: u64,
    pub nets: Vec<GcnParams>,
}

impl From<&TrainedModel> for Checkpoint {
    fn from(m: &TrainedModel) -> Self {
        Self {
            kind: m.kind,
            seed: m.seed,
            epoch: m.best_epoch as u64,
            nets: m.nets.clone(),
        }
    }
}

fn put_matrix(w: &mut impl Write, m: &DenseMatrix, with_rows: bool) -> io::Result<()> {
    if with_rows {
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
    }
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_matrix(r: &mut impl Read, rows: Option<usize>) -> io::Result<DenseMatrix> {
    let rows = match rows {
        Some(n) => n,
        None => get_u64(r)? as usize,
    };
    let cols = get_u64(r)? as usize;
    let count = rows.checked_mul(cols).filter(|&c| c <= 1 << 32).ok_or_else(|| bad("matrix too large"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f64::from_bits(get_u64(r)?));
    }
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

impl Checkpoint {
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[match self.kind {
            ModelKind::Gcn => 0,
            ModelKind::Mlp => 1,
            ModelKind::Dual => 2,
        }])?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.nets.len() as u32).to_le_bytes())?;
        for net in &self.nets {
            w.write_all(&(net.num_layers() as u32).to_le_bytes())?;
            for (wm, b) in net.weights.iter().zip(&net.biases) {
                put_matrix(&mut w, wm, true)?;
                put_matrix(&mut w, b, false)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let kind = match kind[0] {
            0 => ModelKind::Gcn,
            1 => ModelKind::Mlp,
            2 => ModelKind::Dual,
            k => return Err(bad(format!("unknown model kind {k}"))),
        };
        let seed = get_u64(&mut r)?;
        let epoch = get_u64(&mut r)?;
        let count = get_u32(&mut r)?;
        let mut nets = Vec::new();
        for _ in 0..count {
            let layers = get_u32(&mut r)?;
            let mut p = GcnParams {
                weights: vec![],
                biases: vec![],
            };
            for _ in 0..layers {
                p.weights.push(get_matrix(&mut r, None)?);
                p.biases.push(get_matrix(&mut r, Some(1))?);
            }
            nets.push(p);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        Ok(Self { kind, seed, epoch, nets })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Self> {
        Self::read_from(fs::read(path)?.as_slice())
    }
}
