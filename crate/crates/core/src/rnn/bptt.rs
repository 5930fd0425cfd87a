use rayon::prelude::*;

use super::forward::{rnn_forward, ForwardTrace};
use super::params::{CellKind, RnnParams};
use crate::error::{Error, Result};
use crate::geno::SequenceBatch;
use crate::linalg::Matrix;

/// Sequences per accumulation block in [`bptt_gradients`].
pub const ACCUMULATION_BLOCK: usize = 16;

/// Gradient tensors shaped like the corresponding [`RnnParams`] fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub w_ho: Matrix,
    pub b_h: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &RnnParams) -> Self {
        Gradients {
            w_ih: Matrix::zeros(p.w_ih.rows(), p.w_ih.cols()),
            w_hh: Matrix::zeros(p.w_hh.rows(), p.w_hh.cols()),
            w_ho: Matrix::zeros(p.w_ho.rows(), p.w_ho.cols()),
            b_h: vec![0.0; p.b_h.len()],
            b_o: vec![0.0; p.b_o.len()],
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

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Accumulates into `grads` the gradient of `scale * sum_k (y_k - target_k)^2`
/// for one sequence and returns the unscaled squared error.
pub fn accumulate_sequence(
    params: &RnnParams,
    sequence: &[Vec<f64>],
    target: &[f64],
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    if target.len() != params.n_out {
        return Err(Error::Shape(format!(
            "target width {} does not match n_out {}",
            target.len(),
            params.n_out
        )));
    }
    let trace = rnn_forward(params, sequence)?;
    let sq_err: f64 = trace
        .output
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t).powi(2))
        .sum();
    let dy: Vec<f64> = trace
        .output
        .iter()
        .zip(target)
        .map(|(y, t)| 2.0 * scale * (y - t))
        .collect();
    backward(params, sequence, &trace, &dy, grads);
    Ok(sq_err)
}

/// Backpropagates the output error `dy` through every timestep.
pub fn backward(
    params: &RnnParams,
    sequence: &[Vec<f64>],
    trace: &ForwardTrace,
    dy: &[f64],
    grads: &mut Gradients,
) {
    let steps = sequence.len();
    let m = params.n_hidden;
    let h_last = &trace.hidden[steps - 1];
    grads.w_ho.add_outer(1.0, dy, h_last);
    for (b, d) in grads.b_o.iter_mut().zip(dy) {
        *b += d;
    }
    let mut dh = params.w_ho.matvec_transposed(dy);
    let zeros = vec![0.0; m];

    match params.cell {
        CellKind::SimpleTanh | CellKind::ReluIdentity => {
            let act = params.cell.hidden_activation();
            for t in (0..steps).rev() {
                let dz: Vec<f64> = trace.pre[t]
                    .iter()
                    .zip(&dh)
                    .map(|(&z, &d)| d * act.derivative(z))
                    .collect();
                let h_prev = if t == 0 { &zeros } else { &trace.hidden[t - 1] };
                grads.w_ih.add_outer(1.0, &dz, &sequence[t]);
                grads.w_hh.add_outer(1.0, &dz, h_prev);
                for (b, d) in grads.b_h.iter_mut().zip(&dz) {
                    *b += d;
                }
                dh = params.w_hh.matvec_transposed(&dz);
            }
        }
        CellKind::Lstm => {
            let mut dc = vec![0.0; m];
            let mut dz = vec![0.0; 4 * m];
            for t in (0..steps).rev() {
                let gates = &trace.gates[t];
                let c = &trace.cells[t];
                let c_prev = if t == 0 { &zeros } else { &trace.cells[t - 1] };
                let h_prev = if t == 0 { &zeros } else { &trace.hidden[t - 1] };
                for k in 0..m {
                    let (i, f, g, o) = (gates[k], gates[m + k], gates[2 * m + k], gates[3 * m + k]);
                    let tc = c[k].tanh();
                    let d_o = dh[k] * tc;
                    dc[k] += dh[k] * o * (1.0 - tc * tc);
                    let d_i = dc[k] * g;
                    let d_g = dc[k] * i;
                    let d_f = dc[k] * c_prev[k];
                    dz[k] = d_i * i * (1.0 - i);
                    dz[m + k] = d_f * f * (1.0 - f);
                    dz[2 * m + k] = d_g * (1.0 - g * g);
                    dz[3 * m + k] = d_o * o * (1.0 - o);
                    dc[k] *= f;
                }
                grads.w_ih.add_outer(1.0, &dz, &sequence[t]);
                grads.w_hh.add_outer(1.0, &dz, h_prev);
                for (b, d) in grads.b_h.iter_mut().zip(&dz) {
                    *b += d;
                }
                dh = params.w_hh.matvec_transposed(&dz);
            }
        }
    }
}

fn check_batch(params: &RnnParams, batch: &SequenceBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if batch.targets.len() != batch.inputs.len() {
        return Err(Error::Shape(
            "batch inputs and targets differ in length".into(),
        ));
    }
    params.validate()
}

/// Gradient of the mean squared error over the batch (averaged over
/// sequences and output units) with full, untruncated unrolling.
///
/// Sequences are processed in fixed blocks of [`ACCUMULATION_BLOCK`]; each
/// block sums its sequences in index order and the block sums are then added
/// in block order. The result is independent of the worker count.
pub fn bptt_gradients(params: &RnnParams, batch: &SequenceBatch) -> Result<Gradients> {
    gradients_and_loss(params, batch).map(|(g, _)| g)
}

/// [`bptt_gradients`] together with the batch loss at `params`.
pub fn gradients_and_loss(params: &RnnParams, batch: &SequenceBatch) -> Result<(Gradients, f64)> {
    check_batch(params, batch)?;
    let denom = (batch.len() * params.n_out) as f64;
    let scale = 1.0 / denom;
    let idx: Vec<usize> = (0..batch.len()).collect();
    let blocks: Vec<(Gradients, f64)> = idx
        .par_chunks(ACCUMULATION_BLOCK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(params);
            let mut sq = 0.0;
            for &s in chunk {
                sq += accumulate_sequence(
                    params,
                    &batch.inputs[s],
                    &batch.targets[s],
                    scale,
                    &mut g,
                )?;
            }
            Ok((g, sq))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(params);
    let mut sq = 0.0;
    for (g, s) in &blocks {
        total.add_assign(g);
        sq += s;
    }
    Ok((total, sq / denom))
}
