//! Central finite-difference check of tape gradients.

use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error over all parameters.
    pub max_rel_error: f64,
    /// Worst relative error per named parameter tensor.
    pub per_param: BTreeMap<String, f64>,
    pub checked: usize,
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences. The relative error of a scalar is
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-5)`; the floor keeps gradients
/// that are identically zero (a key bias under softmax, for one) from turning
/// finite-difference round-off into a large ratio.
///
/// `f` must build its output from `params` only through [`Tape::param`].
pub fn grad_check<T, F>(params: &ParamStore<T>, eps: T, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&ParamStore<T>, &mut Tape<T>) -> Result<Var>,
{
    let eval = |p: &ParamStore<T>| -> Result<T> {
        let mut tape = Tape::new();
        let out = f(p, &mut tape)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let out = f(params, &mut tape)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite("objective at the base point".into()));
    }
    let analytic = tape.backward(out)?.params();

    let mut work = params.clone();
    let mut per_param = BTreeMap::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let floor = 1e-5;
    for (name, grad) in &analytic {
        let mut worst = 0.0f64;
        for k in 0..grad.len() {
            let orig = work.get(name).expect("registered").data()[k];
            work.get_mut(name).expect("registered").data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work.get_mut(name).expect("registered").data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work.get_mut(name).expect("registered").data_mut()[k] = orig;

            let fd = ((plus - minus) / (eps + eps)).to_f64_lossy();
            let a = grad.data()[k].to_f64_lossy();
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
        max_rel = max_rel.max(worst);
        per_param.insert(name.clone(), worst);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        per_param,
        checked,
    })
}
