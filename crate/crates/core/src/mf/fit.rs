use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno::GenotypeMatrix;
use crate::linalg::{dot, InitSpec, Matrix};

/// How each epoch turns gradients into updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One step on the gradient of the whole objective per epoch.
    #[default]
    FullBatch,
    /// One step per observed cell, visited in row-major order.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfConfig {
    pub features: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub init_range: (f64, f64),
    pub seed: u64,
    /// Stop once the regularized objective falls below this value.
    pub cost_tolerance: Option<f64>,
    pub mode: UpdateMode,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            features: 400,
            alpha: 0.001,
            beta: 0.02,
            epochs: 5000,
            init_range: (0.0, 1.0),
            seed: 0,
            cost_tolerance: None,
            mode: UpdateMode::FullBatch,
        }
    }
}

impl MfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(Error::Config("features must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        let (a, b) = self.init_range;
        if !(a < b) {
            return Err(Error::Config(format!(
                "init range needs a < b, got [{a}, {b}]"
            )));
        }
        Ok(())
    }
}

/// Latent factors: `p` is samples x F, `q` is SNPs x F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub p: Matrix,
    pub q: Matrix,
}

impl FactorPair {
    pub fn new(p: Matrix, q: Matrix) -> Result<Self> {
        if p.cols() != q.cols() {
            return Err(Error::Shape(format!(
                "factor widths differ: {} vs {}",
                p.cols(),
                q.cols()
            )));
        }
        Ok(FactorPair { p, q })
    }

    pub fn features(&self) -> usize {
        self.p.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub epoch: usize,
    pub sse: f64,
    /// `sse` divided by the number of observed cells.
    pub mse: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub records: Vec<CostRecord>,
}

impl CostCurve {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&CostRecord> {
        self.records.last()
    }

    /// `epoch,sse,objective` rows.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "epoch,sse,objective")?;
        for r in &self.records {
            writeln!(sink, "{},{},{}", r.epoch, r.sse, r.objective)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MfFit {
    pub factors: FactorPair,
    pub curve: CostCurve,
}

/// Draws P and Q uniformly from the configured range.
///
/// Q uses the seed plus one so the two matrices are independent streams.
pub fn mf_init(samples: usize, snps: usize, cfg: &MfConfig) -> Result<FactorPair> {
    cfg.validate()?;
    let (a, b) = cfg.init_range;
    let p = Matrix::new(samples, cfg.features, InitSpec::uniform(a, b, cfg.seed))?;
    let q = Matrix::new(
        snps,
        cfg.features,
        InitSpec::uniform(a, b, cfg.seed.wrapping_add(1)),
    )?;
    Ok(FactorPair { p, q })
}

/// `P Q^T`.
pub fn mf_reconstruct(fp: &FactorPair) -> Matrix {
    fp.p.matmul_transposed(&fp.q)
        .expect("factor widths checked at construction")
}

fn check_dims(g: &GenotypeMatrix, fp: &FactorPair) -> Result<()> {
    if fp.p.rows() != g.samples() || fp.q.rows() != g.snps() || fp.p.cols() != fp.q.cols() {
        return Err(Error::Shape(format!(
            "factors {}x{} / {}x{} do not fit a {}x{} genotype matrix",
            fp.p.rows(),
            fp.p.cols(),
            fp.q.rows(),
            fp.q.cols(),
            g.samples(),
            g.snps()
        )));
    }
    Ok(())
}

/// `G - P Q^T` on observed cells and exactly zero elsewhere.
fn residuals(g: &GenotypeMatrix, fp: &FactorPair) -> Matrix {
    let mut r = Matrix::zeros(g.samples(), g.snps());
    for u in 0..g.samples() {
        let pu = fp.p.row(u);
        for v in 0..g.snps() {
            if let Some(code) = g.get(u, v) {
                r.set(u, v, f64::from(code) - dot(pu, fp.q.row(v)));
            }
        }
    }
    r
}

fn regularizer(fp: &FactorPair, beta: f64) -> f64 {
    0.5 * beta * (fp.p.frobenius_sq() + fp.q.frobenius_sq())
}

/// Observed-cell squared error and the regularized objective
/// `sse + beta/2 (|P|_F^2 + |Q|_F^2)`.
pub fn mf_cost(g: &GenotypeMatrix, fp: &FactorPair, beta: f64) -> Result<(f64, f64)> {
    check_dims(g, fp)?;
    let sse = residuals(g, fp).frobenius_sq();
    Ok((sse, sse + regularizer(fp, beta)))
}

/// Gradients of the objective from [`mf_cost`]:
/// `dP = -2 R Q + beta P` and `dQ = -2 R^T P + beta Q`, with `R` the
/// observed-cell residual.
pub fn mf_gradients(g: &GenotypeMatrix, fp: &FactorPair, beta: f64) -> Result<(Matrix, Matrix)> {
    check_dims(g, fp)?;
    let r = residuals(g, fp);
    let mut dp = r.matmul(&fp.q)?;
    dp.scale(-2.0);
    dp.axpy(beta, &fp.p);
    let mut dq = r.transpose().matmul(&fp.p)?;
    dq.scale(-2.0);
    dq.axpy(beta, &fp.q);
    Ok((dp, dq))
}

fn cost_record(
    g: &GenotypeMatrix,
    fp: &FactorPair,
    cfg: &MfConfig,
    epoch: usize,
) -> Result<CostRecord> {
    let (sse, objective) = mf_cost(g, fp, cfg.beta)?;
    let observed = g.observed_count();
    let mse = if observed == 0 {
        0.0
    } else {
        sse / observed as f64
    };
    if !objective.is_finite() {
        return Err(Error::Divergence {
            stage: "matrix factorization".into(),
            epoch,
            message: format!(
                "objective became {objective}; try a learning rate below alpha = {}",
                cfg.alpha
            ),
        });
    }
    Ok(CostRecord {
        epoch,
        sse,
        mse,
        objective,
    })
}

fn stochastic_sweep(g: &GenotypeMatrix, fp: &mut FactorPair, alpha: f64, beta: f64) {
    let FactorPair { p, q } = fp;
    let mut pu_old = vec![0.0; p.cols()];
    for u in 0..g.samples() {
        for v in 0..g.snps() {
            let Some(code) = g.get(u, v) else { continue };
            let err = f64::from(code) - dot(p.row(u), q.row(v));
            pu_old.copy_from_slice(p.row(u));
            for (pk, &qk) in p.row_mut(u).iter_mut().zip(q.row(v)) {
                *pk += alpha * (2.0 * err * qk - beta * *pk);
            }
            for (qk, &pk) in q.row_mut(v).iter_mut().zip(&pu_old) {
                *qk += alpha * (2.0 * err * pk - beta * *qk);
            }
        }
    }
}

/// One epoch of updates followed by a cost evaluation.
pub fn mf_epoch(
    g: &GenotypeMatrix,
    mut fp: FactorPair,
    cfg: &MfConfig,
    epoch: usize,
) -> Result<(FactorPair, CostRecord)> {
    match cfg.mode {
        UpdateMode::FullBatch => {
            let (dp, dq) = mf_gradients(g, &fp, cfg.beta)?;
            fp.p.axpy(-cfg.alpha, &dp);
            fp.q.axpy(-cfg.alpha, &dq);
        }
        UpdateMode::Stochastic => {
            check_dims(g, &fp)?;
            stochastic_sweep(g, &mut fp, cfg.alpha, cfg.beta);
        }
    }
    let record = cost_record(g, &fp, cfg, epoch)?;
    Ok((fp, record))
}

/// Runs `cfg.epochs` epochs from a fresh seeded initialization.
pub fn mf_fit(g: &GenotypeMatrix, cfg: &MfConfig) -> Result<MfFit> {
    let init = mf_init(g.samples(), g.snps(), cfg)?;
    mf_fit_from(g, init, cfg)
}

/// Runs `cfg.epochs` epochs from the given factors.
pub fn mf_fit_from(g: &GenotypeMatrix, init: FactorPair, cfg: &MfConfig) -> Result<MfFit> {
    cfg.validate()?;
    check_dims(g, &init)?;
    if g.observed_count() == 0 {
        return Err(Error::Data("genotype matrix has no observed cells".into()));
    }
    let mut fp = init;
    let mut curve = CostCurve::default();
    for epoch in 0..cfg.epochs {
        let (next, record) = mf_epoch(g, fp, cfg, epoch)?;
        fp = next;
        curve.records.push(record);
        if epoch % 500 == 0 {
            log::debug!(
                "mf epoch {epoch}: mse {:.6} objective {:.6}",
                record.mse,
                record.objective
            );
        }
        if cfg.cost_tolerance.is_some_and(|tol| record.objective < tol) {
            log::info!("mf early stop at epoch {epoch}");
            break;
        }
    }
    Ok(MfFit { factors: fp, curve })
}

/// Independent fits for several feature counts, run in parallel.
///
/// Each fit owns its factors, so results do not depend on the thread count.
pub fn mf_sweep(g: &GenotypeMatrix, base: &MfConfig, features: &[usize]) -> Result<Vec<MfFit>> {
    features
        .par_iter()
        .map(|&f| {
            let cfg = MfConfig {
                features: f,
                ..base.clone()
            };
            mf_fit(g, &cfg)
        })
        .collect()
}
