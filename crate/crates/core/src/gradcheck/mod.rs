//! Central finite-difference checks of the analytic gradients.
//!
//! Each trial draws a small random instance, compares every analytic gradient
//! component against `(f(x + h) - f(x - h)) / 2h` and keeps the worst relative
//! error `|a - n| / max(|a|, |n|)` over components whose larger magnitude
//! exceeds [`MIN_COMPONENT`].
//!
//! The objective inside the difference quotient is evaluated in double-double
//! arithmetic by a separate implementation of the forward pass. In plain
//! `f64` the rounding error of `f` divided by `2h` is around `1e-11`, which
//! is larger than the allowed error on components near `1e-8`.

mod dd;

use dd::Dd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno::{GenotypeMatrix, SequenceBatch, MISSING_CODE};
use crate::linalg::{derive_seed, InitSpec, Matrix, Rng};
use crate::mf::{mf_gradients, FactorPair};
use crate::rnn::{bptt_gradients, rnn_forward, rnn_init_with_stddev, CellKind, RnnParams};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-5;
pub const DEFAULT_TRIALS: usize = 30;
/// Components smaller than this on both sides are skipped.
pub const MIN_COMPONENT: f64 = 1e-8;
/// ReLU instances with a pre-activation closer than this to zero are redrawn,
/// since the difference quotient is meaningless across the kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    pub threshold: f64,
    pub mf: bool,
    pub cells: Vec<CellKind>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: DEFAULT_TRIALS,
            seed: 0,
            step: DEFAULT_STEP,
            threshold: DEFAULT_THRESHOLD,
            mf: true,
            cells: CellKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    /// `mf` or a cell name.
    pub target: String,
    pub trials: usize,
    pub components: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Default)]
struct Tally {
    components: usize,
    worst: f64,
}

impl Tally {
    fn compare(&mut self, analytic: &[f64], numeric: &[f64]) {
        for (&a, &n) in analytic.iter().zip(numeric) {
            let scale = a.abs().max(n.abs());
            if scale > MIN_COMPONENT {
                self.components += 1;
                let rel = (a - n).abs() / scale;
                // NaN must count as a failure.
                if rel.is_nan() || rel > self.worst {
                    self.worst = if rel.is_nan() { f64::INFINITY } else { rel };
                }
            }
        }
    }

    fn finish(self, target: &str, trials: usize, threshold: f64) -> GradcheckResult {
        GradcheckResult {
            target: target.to_string(),
            trials,
            components: self.components,
            max_rel_error: self.worst,
            passed: self.worst < threshold,
        }
    }
}

fn random_genotypes(rng: &mut Rng, u: usize, v: usize) -> Result<GenotypeMatrix> {
    let mut codes = Vec::with_capacity(u * v);
    let mut observed = Vec::with_capacity(u * v);
    for _ in 0..u * v {
        let hole = rng.bernoulli(0.2);
        codes.push(if hole {
            MISSING_CODE
        } else {
            rng.below(3) as u8
        });
        observed.push(!hole);
    }
    GenotypeMatrix::new(u, v, crate::geno::default_snp_ids(v), codes, observed)
}

/// Finite-difference check of the factorization objective's gradients.
pub fn check_mf(trials: usize, seed: u64, step: f64, threshold: f64) -> Result<GradcheckResult> {
    let mut rng = Rng::new(derive_seed(seed, "gradcheck/mf"));
    let mut tally = Tally::default();
    for _ in 0..trials {
        let u = 1 + rng.below(8);
        let v = 1 + rng.below(8);
        let f = 1 + rng.below(3);
        let beta = rng.uniform(0.0, 0.1);
        let g = random_genotypes(&mut rng, u, v)?;
        let p = Matrix::new(u, f, InitSpec::uniform(-1.0, 1.0, rng.next_u64()))?;
        let q = Matrix::new(v, f, InitSpec::uniform(-1.0, 1.0, rng.next_u64()))?;
        let fp = FactorPair::new(p, q)?;
        let (dp, dq) = mf_gradients(&g, &fp, beta)?;
        for (which, analytic) in [(0, &dp), (1, &dq)] {
            let numeric: Vec<f64> = (0..analytic.as_slice().len())
                .map(|i| {
                    let at = |delta: f64| mf_objective_dd(&g, &fp, beta, (which, i, delta));
                    ((at(step) - at(-step)) / Dd::from(2.0 * step)).to_f64()
                })
                .collect();
            tally.compare(analytic.as_slice(), &numeric);
        }
    }
    Ok(tally.finish("mf", trials, threshold))
}

/// Regularized factorization objective with one factor entry shifted by
/// `delta`; `bump.0` selects P (0) or Q (1).
fn mf_objective_dd(
    g: &GenotypeMatrix,
    fp: &FactorPair,
    beta: f64,
    bump: (usize, usize, f64),
) -> Dd {
    let lift = |m: &Matrix, which: usize| -> Vec<Dd> {
        let mut v: Vec<Dd> = m.as_slice().iter().map(|&x| Dd::from(x)).collect();
        if bump.0 == which {
            v[bump.1] = v[bump.1] + Dd::from(bump.2);
        }
        v
    };
    let (p, q) = (lift(&fp.p, 0), lift(&fp.q, 1));
    let f = fp.features();
    let mut sse = Dd::ZERO;
    for u in 0..g.samples() {
        for v in 0..g.snps() {
            if let Some(code) = g.get(u, v) {
                let mut dot = Dd::ZERO;
                for k in 0..f {
                    dot = dot + p[u * f + k] * q[v * f + k];
                }
                sse = sse + (Dd::from(f64::from(code)) - dot).square();
            }
        }
    }
    let norms = p
        .iter()
        .chain(&q)
        .fold(Dd::ZERO, |acc, &x| acc + x.square());
    sse + Dd::from(beta / 2.0) * norms
}

/// Mean squared error of the batch with one parameter shifted by `delta`,
/// using an independent double-double forward pass.
fn rnn_loss_dd(params: &RnnParams, batch: &SequenceBatch, bump: (usize, usize, f64)) -> Dd {
    let mut t: Vec<Vec<Dd>> = params
        .tensors()
        .iter()
        .map(|s| s.iter().map(|&x| Dd::from(x)).collect())
        .collect();
    t[bump.0][bump.1] = t[bump.0][bump.1] + Dd::from(bump.2);
    let (w_ih, w_hh, w_ho, b_h, b_o) = (&t[0], &t[1], &t[2], &t[3], &t[4]);
    let (n_in, m, n_out) = (params.n_in, params.n_hidden, params.n_out);
    let rows = params.cell.blocks() * m;
    let mut total = Dd::ZERO;
    for (seq, target) in batch.inputs.iter().zip(&batch.targets) {
        let mut h = vec![Dd::ZERO; m];
        let mut c = vec![Dd::ZERO; m];
        for x in seq {
            let z: Vec<Dd> = (0..rows)
                .map(|r| {
                    let mut acc = b_h[r];
                    for (k, &xk) in x.iter().enumerate() {
                        acc = acc + w_ih[r * n_in + k] * Dd::from(xk);
                    }
                    for (k, &hk) in h.iter().enumerate() {
                        acc = acc + w_hh[r * m + k] * hk;
                    }
                    acc
                })
                .collect();
            match params.cell {
                CellKind::SimpleTanh => h = z.iter().map(|v| v.tanh()).collect(),
                CellKind::ReluIdentity => {
                    h = z
                        .iter()
                        .map(|&v| if v.is_positive() { v } else { Dd::ZERO })
                        .collect()
                }
                CellKind::Lstm => {
                    for k in 0..m {
                        let i = z[k].sigmoid();
                        let f = z[m + k].sigmoid();
                        let g = z[2 * m + k].tanh();
                        let o = z[3 * m + k].sigmoid();
                        c[k] = f * c[k] + i * g;
                        h[k] = o * c[k].tanh();
                    }
                }
            }
        }
        for o in 0..n_out {
            let mut y = b_o[o];
            for (k, &hk) in h.iter().enumerate() {
                y = y + w_ho[o * m + k] * hk;
            }
            total = total + (y - Dd::from(target[o])).square();
        }
    }
    total / Dd::from((batch.len() * n_out) as f64)
}

fn near_kink(params: &RnnParams, batch: &SequenceBatch) -> Result<bool> {
    if params.cell != CellKind::ReluIdentity {
        return Ok(false);
    }
    for seq in &batch.inputs {
        let trace = rnn_forward(params, seq)?;
        if trace.pre.iter().flatten().any(|z| z.abs() < KINK_MARGIN) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// A random small network and batch: up to 6 steps, 4 hidden units, 3
/// inputs, 2 outputs and 3 sequences. Weights are drawn with standard
/// deviation 0.5 so gradients are well away from zero.
pub fn random_rnn_instance(cell: CellKind, rng: &mut Rng) -> Result<(RnnParams, SequenceBatch)> {
    loop {
        let n_in = 1 + rng.below(3);
        let m = 1 + rng.below(4);
        let n_out = 1 + rng.below(2);
        let steps = 1 + rng.below(6);
        let samples = 1 + rng.below(3);
        let mut params = rnn_init_with_stddev(cell, n_in, m, n_out, rng.next_u64(), 0.5)?;
        for b in params.b_h.iter_mut().chain(params.b_o.iter_mut()) {
            *b += rng.uniform(-0.5, 0.5);
        }
        if cell == CellKind::ReluIdentity {
            for w in params.w_hh.as_mut_slice() {
                *w += rng.gaussian(0.0, 0.3);
            }
        }
        let inputs: Vec<Vec<Vec<f64>>> = (0..samples)
            .map(|_| {
                (0..steps)
                    .map(|_| (0..n_in).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .collect()
            })
            .collect();
        let targets = (0..samples)
            .map(|_| (0..n_out).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let batch = SequenceBatch {
            inputs,
            targets,
            sample_ids: (0..samples).collect(),
            timesteps: steps,
            chunk_width: n_in,
            excluded: Vec::new(),
        };
        if !near_kink(&params, &batch)? {
            return Ok((params, batch));
        }
    }
}

/// Finite-difference check of backpropagation through time for one cell.
pub fn check_rnn(
    cell: CellKind,
    trials: usize,
    seed: u64,
    step: f64,
    threshold: f64,
) -> Result<GradcheckResult> {
    let mut rng = Rng::new(derive_seed(seed, &format!("gradcheck/{cell}")));
    let mut tally = Tally::default();
    for _ in 0..trials {
        let (params, batch) = random_rnn_instance(cell, &mut rng)?;
        let analytic = bptt_gradients(&params, &batch)?;
        for (k, a) in analytic.tensors().iter().enumerate() {
            let numeric: Vec<f64> = (0..a.len())
                .map(|i| {
                    let at = |delta: f64| rnn_loss_dd(&params, &batch, (k, i, delta));
                    ((at(step) - at(-step)) / Dd::from(2.0 * step)).to_f64()
                })
                .collect();
            tally.compare(a, &numeric);
        }
    }
    Ok(tally.finish(cell.name(), trials, threshold))
}

/// Runs every requested check.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<Vec<GradcheckResult>> {
    if cfg.trials == 0 {
        return Err(Error::Config("gradcheck needs at least one trial".into()));
    }
    if !(cfg.step > 0.0 && cfg.threshold > 0.0) {
        return Err(Error::Config("step and threshold must be positive".into()));
    }
    if !cfg.mf && cfg.cells.is_empty() {
        return Err(Error::Config("nothing to check".into()));
    }
    let mut out = Vec::new();
    if cfg.mf {
        out.push(check_mf(cfg.trials, cfg.seed, cfg.step, cfg.threshold)?);
    }
    for &cell in &cfg.cells {
        out.push(check_rnn(
            cell,
            cfg.trials,
            cfg.seed,
            cfg.step,
            cfg.threshold,
        )?);
    }
    Ok(out)
}
