//! Central finite-difference check of tape gradients.

use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Scalars compared.
    pub checked: usize,
    /// Parameter name, flat index, analytic and numeric gradient of the
    /// worst scalar.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares the gradient of the scalar built by `f` against central
/// differences with step `h` for every scalar in `store`.
pub fn gradcheck<F>(store: &ParamStore, h: f64, floor: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s);
        let out = f(&mut tape)?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(Error::InvalidArgument(format!("gradcheck needs a scalar, got {:?}", v.shape())));
        }
        Ok(v.item())
    };
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    let grads = tape.backward(out)?;

    let mut probe = store.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let x0 = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = x0 + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0 - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).data()[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), k, analytic, numeric));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
