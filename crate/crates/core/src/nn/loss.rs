use crate::error::{Error, Result};

/// Clamp applied to predictions before taking logs in the cross entropy.
pub const BCE_EPS: f64 = 1e-7;

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::shape("loss of an empty vector"));
    }
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(pred, target)?;
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, y)| 2.0 * (p - y) / n).collect();
    Ok((loss, grad))
}

/// Binary cross entropy on probabilities and its gradient with respect to `pred`.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let (l, g) = bce_term(p, y);
        loss += l;
        grad.push(g / n);
    }
    Ok((loss / n, grad))
}

/// Loss and derivative of a single cross-entropy term.
pub(crate) fn bce_term(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = (p - y) / (p * (1.0 - p));
    (loss, grad)
}
