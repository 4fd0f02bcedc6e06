use super::dataset::TrainingExample;
use super::model::loss_and_grad;
use super::params::Params;
use crate::error::Result;

/// Agreement between analytic and finite-difference gradients for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub values: usize,
    /// `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, 0 when both vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

/// Compares back-propagated gradients with central differences of step `eps`
/// on every value of every tensor.
pub fn gradient_check(
    params: &Params<f64>,
    batch: &[&TrainingExample<f64>],
    eps: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, analytic) = loss_and_grad(params, batch)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.tensors.len());
    for (ti, grad) in analytic.tensors.iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..grad.data.len() {
            let orig = params.tensors[ti].data[i];
            probe.tensors[ti].data[i] = orig + eps;
            let (up, _) = loss_and_grad(&probe, batch)?;
            probe.tensors[ti].data[i] = orig - eps;
            let (down, _) = loss_and_grad(&probe, batch)?;
            probe.tensors[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data[i];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let denom = na.sqrt() + nn.sqrt();
        out.push(TensorCheck {
            name: grad.name.clone(),
            values: grad.data.len(),
            rel_error: if denom < 1e-300 { 0.0 } else { diff.sqrt() / denom },
            analytic_norm: na.sqrt(),
        });
    }
    Ok(out)
}
