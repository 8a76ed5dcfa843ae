//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Element errors with `|analytic - numeric|` at or below this count as 0.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, abs_floor: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub id: ParamId,
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest analytic gradient magnitude in the block.
    pub grad_max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: f64,
    pub max_rel_error: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a - n| / max(|a|, |n|)`, or 0 when `|a - n| <= abs_floor`.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

fn eval<F>(store: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let l = loss_fn(&mut tape)?;
    let v = tape.scalar(l);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// for every element of every parameter in `store`.
pub fn grad_check<F>(store: &ParamStore, cfg: GradCheckConfig, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (loss, grads) = {
        let mut tape = Tape::new(store);
        let l = loss_fn(&mut tape)?;
        let v = tape.scalar(l);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {v}")));
        }
        (v, tape.backward(l)?)
    };
    let mut probe = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (id, p) in store.iter() {
        let analytic = grads.param(id).cloned().unwrap_or_else(|| super::Matrix::zeros(p.value.rows(), p.value.cols()));
        let (mut worst, mut worst_abs): (f64, f64) = (0.0, 0.0);
        for i in 0..p.value.len() {
            let orig = p.value.data()[i];
            probe.get_mut(id).value.data_mut()[i] = orig + cfg.eps;
            let plus = eval(&probe, &loss_fn)?;
            probe.get_mut(id).value.data_mut()[i] = orig - cfg.eps;
            let minus = eval(&probe, &loss_fn)?;
            probe.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric, cfg.abs_floor));
            worst_abs = worst_abs.max((analytic.data()[i] - numeric).abs());
        }
        params.push(ParamCheck {
            id,
            name: p.name.clone(),
            max_rel_error: worst,
            max_abs_error: worst_abs,
            grad_max_abs: analytic.max_abs(),
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { loss, max_rel_error, params })
}
