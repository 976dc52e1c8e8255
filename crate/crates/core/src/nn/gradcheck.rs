use super::params::ParamSet;
use crate::error::{Error, Result};

/// Central-difference gradient of `loss` with respect to every scalar in
/// `params`: `(loss(p + eps) - loss(p - eps)) / (2 eps)`.
pub fn finite_difference_grad<F>(loss: F, params: &ParamSet, eps: f64) -> Result<ParamSet>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step {eps} must be > 0")));
    }
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let n = params.get(name).map_or(0, |t| t.len());
        for i in 0..n {
            let original = params.get(name).expect("present").data()[i];
            probe.get_mut(name).expect("present").data_mut()[i] = original + eps;
            let plus = loss(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[i] = original - eps;
            let minus = loss(&probe)?;
            probe.get_mut(name).expect("present").data_mut()[i] = original;
            grads.get_mut(name).expect("present").data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over matching entries.
pub fn max_relative_error(a: &ParamSet, b: &ParamSet, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, ta) in a.iter() {
        let Some(tb) = b.get(name) else {
            return f64::INFINITY;
        };
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
