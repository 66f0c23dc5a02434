//! Binary checkpoints: every parameter tensor with its shape, the skew
//! record in its canonical wire order, and optionally the optimizer state
//! needed for exact resume.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "SCRN" | version u32 | model u8 (0 = orthogonal cell, 1 = lstm)
//! | has_optimizer u8 | model section | optimizer section?
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cayley;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::lstm::{LstmCell, LstmOptimizers};
use crate::network::{ScoCell, ScoOptimizers};
use crate::optim::{OptimizerHyper, OptimizerKind, ParamGroup};

const MAGIC: &[u8; 4] = b"SCRN";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Sco {
        cell: ScoCell,
        optim: Option<ScoOptimizers>,
    },
    Lstm {
        cell: LstmCell,
        optim: Option<LstmOptimizers>,
    },
}

impl Checkpoint {
    pub fn model_name(&self) -> &'static str {
        match self {
            Checkpoint::Sco { .. } => "scornn",
            Checkpoint::Lstm { .. } => "lstm",
        }
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    write_u64(w, m.rows() as u64)?;
    write_u64(w, m.cols() as u64)?;
    for &v in m.as_slice() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read) -> Result<Matrix> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    if rows.saturating_mul(cols) > (1 << 28) {
        return Err(Error::Checkpoint(format!(
            "implausible tensor shape {rows}x{cols}"
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Matrix::from_vec(rows, cols, data).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn write_vector(w: &mut impl Write, v: &[f64]) -> Result<()> {
    write_u64(w, v.len() as u64)?;
    for &x in v {
        write_f64(w, x)?;
    }
    Ok(())
}

fn read_vector(r: &mut impl Read) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len > (1 << 28) {
        return Err(Error::Checkpoint(format!("implausible vector length {len}")));
    }
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(read_f64(r)?);
    }
    Ok(v)
}

fn write_group(w: &mut impl Write, g: &ParamGroup) -> Result<()> {
    let name = g.name().as_bytes();
    write_u64(w, name.len() as u64)?;
    w.write_all(name)?;
    let kind = match g.kind() {
        OptimizerKind::Sgd => 0u8,
        OptimizerKind::RmsProp => 1,
        OptimizerKind::Adam => 2,
    };
    w.write_all(&[kind])?;
    write_f64(w, g.learning_rate())?;
    let h = g.hyper();
    write_f64(w, h.rms_decay)?;
    write_f64(w, h.beta1)?;
    write_f64(w, h.beta2)?;
    write_f64(w, h.epsilon)?;
    write_u64(w, g.step_count())?;
    let (first, second) = g.state();
    write_vector(w, first)?;
    write_vector(w, second)?;
    Ok(())
}

fn read_group(r: &mut impl Read) -> Result<ParamGroup> {
    let name_len = read_u64(r)? as usize;
    if name_len > 4096 {
        return Err(Error::Checkpoint(format!("group name length {name_len}")));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name =
        String::from_utf8(name).map_err(|_| Error::Checkpoint("group name not UTF-8".into()))?;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let kind = match kind[0] {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::RmsProp,
        2 => OptimizerKind::Adam,
        other => return Err(Error::Checkpoint(format!("unknown optimizer tag {other}"))),
    };
    let lr = read_f64(r)?;
    let hyper = OptimizerHyper {
        rms_decay: read_f64(r)?,
        beta1: read_f64(r)?,
        beta2: read_f64(r)?,
        epsilon: read_f64(r)?,
    };
    let step_count = read_u64(r)?;
    let first = read_vector(r)?;
    let second = read_vector(r)?;
    ParamGroup::restore(name, kind, lr, hyper, first, second, step_count)
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    match checkpoint {
        Checkpoint::Sco { cell, optim } => {
            w.write_all(&[0u8, optim.is_some() as u8])?;
            write_u64(&mut w, cell.hidden_size() as u64)?;
            write_u64(&mut w, cell.input_size() as u64)?;
            write_u64(&mut w, cell.output_size() as u64)?;
            write_matrix(&mut w, cell.input_weights())?;
            cayley::write_skew_record(&mut w, cell.skew(), cell.scaling())?;
            write_vector(&mut w, cell.modrelu_bias())?;
            write_matrix(&mut w, cell.output_weights())?;
            write_vector(&mut w, cell.output_bias())?;
            if let Some(opt) = optim {
                for g in opt.groups() {
                    write_group(&mut w, g)?;
                }
            }
        }
        Checkpoint::Lstm { cell, optim } => {
            w.write_all(&[1u8, optim.is_some() as u8])?;
            write_u64(&mut w, cell.hidden_size() as u64)?;
            write_u64(&mut w, cell.input_size() as u64)?;
            write_u64(&mut w, cell.output_size() as u64)?;
            write_matrix(&mut w, cell.input_weights())?;
            write_matrix(&mut w, cell.recurrent_weights())?;
            write_vector(&mut w, cell.gate_bias())?;
            write_matrix(&mut w, cell.output_weights())?;
            write_vector(&mut w, cell.output_bias())?;
            write_f64(&mut w, cell.forget_bias_init())?;
            if let Some(opt) = optim {
                for g in opt.groups() {
                    write_group(&mut w, g)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let has_opt = tags[1] != 0;
    match tags[0] {
        0 => {
            let n = read_u64(&mut r)? as usize;
            let m = read_u64(&mut r)? as usize;
            let p = read_u64(&mut r)? as usize;
            let input_weights = read_matrix(&mut r)?;
            let (skew, scaling) = cayley::read_skew_record(&mut r)?;
            let modrelu_bias = read_vector(&mut r)?;
            let output_weights = read_matrix(&mut r)?;
            let output_bias = read_vector(&mut r)?;
            if input_weights.rows() != n
                || input_weights.cols() != m
                || skew.dim() != n
                || output_weights.rows() != p
            {
                return Err(Error::Checkpoint(
                    "tensor shapes disagree with header".into(),
                ));
            }
            let cell = ScoCell::from_parts(
                input_weights,
                skew,
                scaling,
                modrelu_bias,
                output_weights,
                output_bias,
            )
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let optim = if has_opt {
                Some(ScoOptimizers {
                    input: read_group(&mut r)?,
                    skew: read_group(&mut r)?,
                    modrelu_bias: read_group(&mut r)?,
                    output: read_group(&mut r)?,
                    output_bias: read_group(&mut r)?,
                })
            } else {
                None
            };
            Ok(Checkpoint::Sco { cell, optim })
        }
        1 => {
            let n = read_u64(&mut r)? as usize;
            let _m = read_u64(&mut r)? as usize;
            let _p = read_u64(&mut r)? as usize;
            let input_weights = read_matrix(&mut r)?;
            let recurrent_weights = read_matrix(&mut r)?;
            let gate_bias = read_vector(&mut r)?;
            let output_weights = read_matrix(&mut r)?;
            let output_bias = read_vector(&mut r)?;
            let forget_bias_init = read_f64(&mut r)?;
            if recurrent_weights.cols() != n {
                return Err(Error::Checkpoint(
                    "tensor shapes disagree with header".into(),
                ));
            }
            let cell = LstmCell::from_parts(
                input_weights,
                recurrent_weights,
                gate_bias,
                output_weights,
                output_bias,
                forget_bias_init,
            )
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let optim = if has_opt {
                Some(LstmOptimizers {
                    input: read_group(&mut r)?,
                    recurrent: read_group(&mut r)?,
                    gate_bias: read_group(&mut r)?,
                    output: read_group(&mut r)?,
                    output_bias: read_group(&mut r)?,
                })
            } else {
                None
            };
            Ok(Checkpoint::Lstm { cell, optim })
        }
        other => Err(Error::Checkpoint(format!("unknown model tag {other}"))),
    }
}
