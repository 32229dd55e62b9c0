//! Binary checkpoint: magic `REICCKPT`, u32 version, u32-length-prefixed
//! UTF-8 config echo, u32 tensor count, then per tensor a u32 rank, u32
//! dims and little-endian f32 values.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::bytes::Reader;
use crate::error::{ReicError, Result};
use crate::nn::{DenseLayer, LstmCell};
use crate::rehead::{HeadVariant, ReHead};
use crate::selector::PolicyNetwork;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"REICCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    fn matrix(m: &Array2<f64>) -> Self {
        Tensor {
            shape: m.shape().to_vec(),
            data: m.iter().map(|&v| v as f32).collect(),
        }
    }

    fn vector(v: &Array1<f64>) -> Self {
        Tensor {
            shape: vec![v.len()],
            data: v.iter().map(|&x| x as f32).collect(),
        }
    }

    fn to_matrix(&self, what: &str) -> Result<Array2<f64>> {
        match self.shape[..] {
            [r, c] => Ok(
                Array2::from_shape_vec((r, c), self.data.iter().map(|&v| v as f64).collect())
                    .expect("shape checked on read"),
            ),
            _ => Err(ReicError::Data(format!(
                "{what}: expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    fn to_vector(&self, what: &str) -> Result<Array1<f64>> {
        match self.shape[..] {
            [_] => Ok(self.data.iter().map(|&v| v as f64).collect()),
            _ => Err(ReicError::Data(format!(
                "{what}: expected a vector, got shape {:?}",
                self.shape
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub tensors: Vec<Tensor>,
}

fn dense_tensors(layer: &DenseLayer, out: &mut Vec<Tensor>) {
    out.push(Tensor::matrix(&layer.weight));
    out.push(Tensor::vector(&layer.bias));
}

impl Checkpoint {
    /// Tensor order: policy scorer (hidden, output), recurrent cell, head
    /// (hidden, output), threshold.
    pub fn from_models(policy: &PolicyNetwork, head: &ReHead, config_echo: &str) -> Self {
        let mut tensors = Vec::with_capacity(11);
        dense_tensors(&policy.scorer_hidden, &mut tensors);
        dense_tensors(&policy.scorer_out, &mut tensors);
        tensors.push(Tensor::matrix(&policy.recurrent.weight));
        tensors.push(Tensor::vector(&policy.recurrent.bias));
        dense_tensors(&head.hidden, &mut tensors);
        dense_tensors(&head.out, &mut tensors);
        tensors.push(Tensor::vector(&Array1::from_elem(1, head.theta)));
        Checkpoint {
            config_echo: config_echo.to_owned(),
            tensors,
        }
    }

    pub fn into_models(&self, variant: HeadVariant, train_theta: bool) -> Result<(PolicyNetwork, ReHead)> {
        if self.tensors.len() != 11 {
            return Err(ReicError::Data(format!(
                "checkpoint holds {} tensors, expected 11",
                self.tensors.len()
            )));
        }
        let t = &self.tensors;
        let dense = |i: usize, what: &str| -> Result<DenseLayer> {
            let w = t[i].to_matrix(what)?;
            let b = t[i + 1].to_vector(what)?;
            if b.len() != w.nrows() {
                return Err(ReicError::Data(format!(
                    "{what}: bias length {} for {} rows",
                    b.len(),
                    w.nrows()
                )));
            }
            Ok(DenseLayer::from_parts(w, b))
        };
        let scorer_hidden = dense(0, "policy scorer hidden layer")?;
        let scorer_out = dense(2, "policy scorer output layer")?;
        let lstm_w = t[4].to_matrix("recurrent weights")?;
        let lstm_b = t[5].to_vector("recurrent bias")?;
        let hidden_dim = lstm_w.nrows() / 4;
        if lstm_w.nrows() % 4 != 0 || lstm_w.ncols() <= hidden_dim || lstm_b.len() != lstm_w.nrows() {
            return Err(ReicError::Data(format!(
                "recurrent weights have inconsistent shape {:?}",
                lstm_w.shape()
            )));
        }
        let embed_dim = lstm_w.ncols() - hidden_dim;
        if scorer_hidden.in_dim() != embed_dim + hidden_dim
            || scorer_out.in_dim() != scorer_hidden.out_dim()
            || scorer_out.out_dim() != 1
        {
            return Err(ReicError::Data("policy tensors disagree on dimensions".into()));
        }
        let policy = PolicyNetwork {
            scorer_hidden,
            scorer_out,
            recurrent: LstmCell::from_parts(embed_dim, hidden_dim, lstm_w, lstm_b),
        };

        let hidden = dense(6, "head hidden layer")?;
        let out = dense(8, "head output layer")?;
        let theta = t[10].to_vector("threshold")?;
        if theta.len() != 1 || hidden.in_dim() != 2 * embed_dim || out.in_dim() != hidden.out_dim() {
            return Err(ReicError::Data(
                "head tensors disagree with the policy dimensions".into(),
            ));
        }
        let n_relations = match variant {
            HeadVariant::EndToEnd => out.out_dim().checked_sub(1).filter(|&k| k > 0),
            HeadVariant::Threshold => Some(out.out_dim()).filter(|&k| k > 0),
        }
        .ok_or_else(|| ReicError::Data(format!("head output width {} invalid for {variant}", out.out_dim())))?;
        let head = ReHead {
            variant,
            n_relations,
            hidden,
            out,
            theta: theta[0],
            grad_theta: 0.0,
            train_theta,
        };
        Ok((policy, head))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_echo.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_echo.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(ReicError::format(0, "bad magic, expected \"REICCKPT\""));
        }
        let version_at = r.pos as u64;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(ReicError::format(
                version_at,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let echo_len = r.u32("config echo length")? as usize;
        let echo_at = r.pos as u64;
        let config_echo = String::from_utf8(r.take(echo_len, "config echo")?.to_vec())
            .map_err(|_| ReicError::format(echo_at, "config echo is not UTF-8"))?;
        let n = r.u32("tensor count")?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let rank = r.u32("tensor rank")?;
            let shape = (0..rank)
                .map(|_| r.u32("tensor dim").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let data_at = r.pos as u64;
            let count = count
                .filter(|c| c.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| ReicError::format(data_at, format!("tensor shape {shape:?} exceeds the file")))?;
            let data = r
                .take(count * 4, "tensor values")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { shape, data });
        }
        if r.remaining() != 0 {
            return Err(ReicError::format(
                r.pos as u64,
                format!("{} trailing bytes", r.remaining()),
            ));
        }
        Ok(Checkpoint { config_echo, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
