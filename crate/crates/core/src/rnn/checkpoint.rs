//! Versioned JSON checkpoints.
//!
//! Every parameter is stored as a decimal string holding the shortest
//! representation that parses back to the identical `f64`, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{CellKind, RnnParams, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::geno::Normalization;

pub const CHECKPOINT_VERSION: &str = "genoseq-rnn-v1";

/// How genotype rows were turned into sequences for this model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub chunk_width: usize,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    version: String,
    cell: CellKind,
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preprocessing: Option<Preprocessing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_name: Option<String>,
    tensors: Vec<TensorDoc>,
}

/// A model plus the metadata needed to apply it to new genotypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: RnnParams,
    pub preprocessing: Option<Preprocessing>,
    pub target_name: Option<String>,
}

impl Checkpoint {
    pub fn new(params: RnnParams) -> Self {
        Checkpoint {
            params,
            preprocessing: None,
            target_name: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        p.validate()?;
        if !p.is_finite() {
            return Err(Error::State(
                "refusing to save non-finite parameters".into(),
            ));
        }
        let shapes = [
            p.w_ih.shape(),
            p.w_hh.shape(),
            p.w_ho.shape(),
            (1, p.b_h.len()),
            (1, p.b_o.len()),
        ];
        let tensors = TENSOR_NAMES
            .iter()
            .zip(p.tensors())
            .zip(shapes)
            .map(|((name, data), (rows, cols))| TensorDoc {
                name: (*name).to_string(),
                rows,
                cols,
                data: data.iter().map(|x| format!("{x:?}")).collect(),
            })
            .collect();
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION.to_string(),
            cell: p.cell,
            n_in: p.n_in,
            n_hidden: p.n_hidden,
            n_out: p.n_out,
            preprocessing: self.preprocessing,
            target_name: self.target_name.clone(),
            tensors,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint version {:?}, expected {CHECKPOINT_VERSION:?}",
                doc.version
            )));
        }
        if doc.n_in == 0 || doc.n_hidden == 0 || doc.n_out == 0 {
            return Err(Error::Data(
                "checkpoint has a zero network dimension".into(),
            ));
        }
        let mut params = RnnParams::zeros(doc.cell, doc.n_in, doc.n_hidden, doc.n_out);
        if doc.tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, expected {}",
                doc.tensors.len(),
                TENSOR_NAMES.len()
            )));
        }
        for (t, name) in doc.tensors.iter().zip(TENSOR_NAMES) {
            if t.name != name {
                return Err(Error::Data(format!(
                    "expected tensor {name:?}, found {:?}",
                    t.name
                )));
            }
        }
        for ((slot, t), name) in params
            .tensors_mut()
            .into_iter()
            .zip(&doc.tensors)
            .zip(TENSOR_NAMES)
        {
            if t.data.len() != slot.len() || t.rows * t.cols != slot.len() {
                return Err(Error::Shape(format!(
                    "tensor {name} holds {} values ({}x{}), expected {}",
                    t.data.len(),
                    t.rows,
                    t.cols,
                    slot.len()
                )));
            }
            for (dst, s) in slot.iter_mut().zip(&t.data) {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Data(format!("tensor {name}: bad number {s:?}")))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "tensor {name}: non-finite value {s:?}"
                    )));
                }
                *dst = v;
            }
        }
        // Matrix shapes were fixed by `zeros`; guard against transposed docs.
        let expect = [
            params.w_ih.shape(),
            params.w_hh.shape(),
            params.w_ho.shape(),
        ];
        for ((t, shape), name) in doc.tensors.iter().zip(expect).zip(TENSOR_NAMES) {
            if (t.rows, t.cols) != shape {
                return Err(Error::Shape(format!(
                    "tensor {name} is {}x{}, expected {}x{}",
                    t.rows, t.cols, shape.0, shape.1
                )));
            }
        }
        params.validate()?;
        Ok(Checkpoint {
            params,
            preprocessing: doc.preprocessing,
            target_name: doc.target_name,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
