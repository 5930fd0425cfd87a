use crate::error::{Error, Result};

/// Mean over samples and output units of the squared difference.
pub fn loss_mse(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Input("no predictions to score".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if p.len() != t.len() {
            return Err(Error::Shape(format!(
                "sample {s}: prediction width {} vs target width {}",
                p.len(),
                t.len()
            )));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += p.len();
    }
    Ok(sum / count as f64)
}

/// Pearson correlation coefficient, or `None` when either input is constant.
pub fn pearson_correlation(pred: &[f64], actual: &[f64]) -> Result<Option<f64>> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} actual values",
            pred.len(),
            actual.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Input(format!(
            "correlation needs at least 2 points, got {}",
            pred.len()
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(pred) || constant(actual) {
        return Ok(None);
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let ma = actual.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}
