use super::params::{CellKind, RnnParams};
use crate::error::{Error, Result};
use crate::geno::SequenceBatch;
use crate::linalg::sigmoid;

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `h_1 .. h_T`.
    pub hidden: Vec<Vec<f64>>,
    /// Hidden-side pre-activations per step (`blocks * n_hidden` wide).
    pub pre: Vec<Vec<f64>>,
    /// LSTM only: activated gates `[i, f, g, o]` per step.
    pub gates: Vec<Vec<f64>>,
    /// LSTM only: cell states `c_1 .. c_T`.
    pub cells: Vec<Vec<f64>>,
    /// Linear readout of the final hidden state.
    pub output: Vec<f64>,
}

fn check_sequence(params: &RnnParams, sequence: &[Vec<f64>]) -> Result<()> {
    if sequence.is_empty() {
        return Err(Error::Input("empty input sequence".into()));
    }
    if let Some((t, x)) = sequence
        .iter()
        .enumerate()
        .find(|(_, x)| x.len() != params.n_in)
    {
        return Err(Error::Shape(format!(
            "timestep {t} has width {}, network expects {}",
            x.len(),
            params.n_in
        )));
    }
    Ok(())
}

/// Runs the network over `sequence` from a zero hidden state.
pub fn rnn_forward(params: &RnnParams, sequence: &[Vec<f64>]) -> Result<ForwardTrace> {
    let zeros = vec![0.0; params.n_hidden];
    rnn_forward_from(params, sequence, &zeros)
}

/// Runs the network from the hidden state `h0` (and zero LSTM cell state).
pub fn rnn_forward_from(
    params: &RnnParams,
    sequence: &[Vec<f64>],
    h0: &[f64],
) -> Result<ForwardTrace> {
    check_sequence(params, sequence)?;
    if h0.len() != params.n_hidden {
        return Err(Error::Shape(format!(
            "initial state width {} does not match n_hidden {}",
            h0.len(),
            params.n_hidden
        )));
    }
    let m = params.n_hidden;
    let steps = sequence.len();
    let mut trace = ForwardTrace {
        hidden: Vec::with_capacity(steps),
        pre: Vec::with_capacity(steps),
        gates: Vec::new(),
        cells: Vec::new(),
        output: Vec::new(),
    };
    let mut h = h0.to_vec();
    let mut c = vec![0.0; m];
    for x in sequence {
        let mut z = params.b_h.clone();
        params.w_ih.matvec_add(x, &mut z);
        params.w_hh.matvec_add(&h, &mut z);
        match params.cell {
            CellKind::SimpleTanh | CellKind::ReluIdentity => {
                let act = params.cell.hidden_activation();
                h = z.iter().map(|&v| act.eval(v)).collect();
            }
            CellKind::Lstm => {
                let mut gates = vec![0.0; 4 * m];
                for k in 0..m {
                    gates[k] = sigmoid(z[k]);
                    gates[m + k] = sigmoid(z[m + k]);
                    gates[2 * m + k] = z[2 * m + k].tanh();
                    gates[3 * m + k] = sigmoid(z[3 * m + k]);
                }
                for k in 0..m {
                    c[k] = gates[m + k] * c[k] + gates[k] * gates[2 * m + k];
                    h[k] = gates[3 * m + k] * c[k].tanh();
                }
                trace.gates.push(gates);
                trace.cells.push(c.clone());
            }
        }
        trace.pre.push(z);
        trace.hidden.push(h.clone());
    }
    let mut y = params.b_o.clone();
    params.w_ho.matvec_add(&h, &mut y);
    trace.output = y;
    Ok(trace)
}

/// Final-step prediction for every sequence in the batch.
pub fn predict(params: &RnnParams, batch: &SequenceBatch) -> Result<Vec<Vec<f64>>> {
    batch
        .inputs
        .iter()
        .map(|seq| rnn_forward(params, seq).map(|t| t.output))
        .collect()
}
