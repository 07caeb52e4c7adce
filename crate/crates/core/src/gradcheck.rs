//! Central finite-difference check of gradients already accumulated in a
//! [`ParamStore`].

use alloc::string::String;

use crate::error::Result;
use crate::params::ParamStore;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`. The floor keeps entries
/// whose true gradient is zero from dividing rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every stored gradient entry with
/// `(L(θ + h·eᵢ) − L(θ − h·eᵢ)) / 2h`.
pub fn finite_difference_check(
    params: &ParamStore,
    step: f64,
    floor: f64,
    loss: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<GradCheck> {
    let mut probe = params.clone();
    let mut out = GradCheck { checked: 0, max_rel_error: 0.0, max_abs_error: 0.0, worst: None };
    for id in params.ids() {
        for k in 0..params.value(id).data().len() {
            let x = params.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = x + step;
            let up = loss(&probe)?;
            probe.value_mut(id).data_mut()[k] = x - step;
            let down = loss(&probe)?;
            probe.value_mut(id).data_mut()[k] = x;
            let numeric = (up - down) / (2.0 * step);
            let analytic = params.grad(id).data()[k];
            let rel = relative_error(analytic, numeric, floor);
            out.max_abs_error = out.max_abs_error.max((analytic - numeric).abs());
            if rel > out.max_rel_error || out.worst.is_none() {
                out.max_rel_error = out.max_rel_error.max(rel);
                out.worst = Some((params.get(id).name.clone(), k));
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
