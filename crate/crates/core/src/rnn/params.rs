use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Activation, InitSpec, Matrix};

/// Standard deviation of the gaussian weight initialization.
pub const DEFAULT_INIT_STDDEV: f64 = 0.01;

/// Initial bias of the LSTM forget gate.
pub const LSTM_FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// `h_t = tanh(W_ih x_t + W_hh h_{t-1} + b_h)`.
    SimpleTanh,
    /// Input, forget and output gates with a tanh candidate and cell state.
    Lstm,
    /// Rectified-linear recurrence whose recurrent matrix starts as the
    /// identity with zero hidden bias.
    ReluIdentity,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::SimpleTanh, CellKind::Lstm, CellKind::ReluIdentity];

    /// Number of stacked parameter blocks on the hidden side.
    pub fn blocks(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            _ => 1,
        }
    }

    /// Hidden nonlinearity of the single-block cells.
    pub fn hidden_activation(self) -> Activation {
        match self {
            CellKind::ReluIdentity => Activation::Relu,
            _ => Activation::Tanh,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::SimpleTanh => "simple_tanh",
            CellKind::Lstm => "lstm",
            CellKind::ReluIdentity => "relu_identity",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "simple_tanh" | "tanh" | "srnn" | "simple" => Ok(CellKind::SimpleTanh),
            "lstm" => Ok(CellKind::Lstm),
            "relu_identity" | "relu" | "irnn" => Ok(CellKind::ReluIdentity),
            other => Err(Error::Config(format!(
                "unknown cell {other:?}; expected simple_tanh, lstm or relu_identity"
            ))),
        }
    }
}

/// Weights and biases of one recurrent regression model.
///
/// For LSTM the hidden-side tensors stack four blocks of `n_hidden` rows in
/// the order input gate, forget gate, candidate, output gate.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub cell: CellKind,
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    /// `(blocks * n_hidden) x n_in`.
    pub w_ih: Matrix,
    /// `(blocks * n_hidden) x n_hidden`.
    pub w_hh: Matrix,
    /// `n_out x n_hidden`.
    pub w_ho: Matrix,
    pub b_h: Vec<f64>,
    pub b_o: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 5] = ["w_ih", "w_hh", "w_ho", "b_h", "b_o"];

impl RnnParams {
    /// Zero-valued parameters of the given shape.
    pub fn zeros(cell: CellKind, n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        let g = cell.blocks() * n_hidden;
        RnnParams {
            cell,
            n_in,
            n_hidden,
            n_out,
            w_ih: Matrix::zeros(g, n_in),
            w_hh: Matrix::zeros(g, n_hidden),
            w_ho: Matrix::zeros(n_out, n_hidden),
            b_h: vec![0.0; g],
            b_o: vec![0.0; n_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.cell.blocks() * self.n_hidden;
        let ok = self.w_ih.shape() == (g, self.n_in)
            && self.w_hh.shape() == (g, self.n_hidden)
            && self.w_ho.shape() == (self.n_out, self.n_hidden)
            && self.b_h.len() == g
            && self.b_o.len() == self.n_out;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{} parameters inconsistent with n_in={}, n_hidden={}, n_out={}",
                self.cell, self.n_in, self.n_hidden, self.n_out
            )))
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.w_ih.as_slice(),
            self.w_hh.as_slice(),
            self.w_ho.as_slice(),
            &self.b_h,
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_ih.as_mut_slice(),
            self.w_hh.as_mut_slice(),
            self.w_ho.as_mut_slice(),
            &mut self.b_h,
            &mut self.b_o,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Seeded initialization with [`DEFAULT_INIT_STDDEV`].
pub fn rnn_init(
    cell: CellKind,
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    seed: u64,
) -> Result<RnnParams> {
    rnn_init_with_stddev(cell, n_in, n_hidden, n_out, seed, DEFAULT_INIT_STDDEV)
}

/// Gaussian weights with the given standard deviation and zero biases, except
/// that `relu_identity` gets an exact identity recurrent matrix and `lstm`
/// gets a forget-gate bias of [`LSTM_FORGET_BIAS`].
///
/// Each tensor draws from its own stream derived from `seed` and the tensor
/// name.
pub fn rnn_init_with_stddev(
    cell: CellKind,
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    seed: u64,
    stddev: f64,
) -> Result<RnnParams> {
    if n_in == 0 || n_hidden == 0 || n_out == 0 {
        return Err(Error::Config(format!(
            "network dimensions must be positive, got n_in={n_in}, n_hidden={n_hidden}, n_out={n_out}"
        )));
    }
    let g = cell.blocks() * n_hidden;
    let gauss = |name: &str| InitSpec::gaussian(0.0, stddev, derive_seed(seed, name));
    let w_ih = Matrix::new(g, n_in, gauss("w_ih"))?;
    let w_ho = Matrix::new(n_out, n_hidden, gauss("w_ho"))?;
    let w_hh = match cell {
        CellKind::ReluIdentity => Matrix::new(n_hidden, n_hidden, InitSpec::identity())?,
        _ => Matrix::new(g, n_hidden, gauss("w_hh"))?,
    };
    let mut b_h = vec![0.0; g];
    if cell == CellKind::Lstm {
        b_h[n_hidden..2 * n_hidden].fill(LSTM_FORGET_BIAS);
    }
    Ok(RnnParams {
        cell,
        n_in,
        n_hidden,
        n_out,
        w_ih,
        w_hh,
        w_ho,
        b_h,
        b_o: vec![0.0; n_out],
    })
}
