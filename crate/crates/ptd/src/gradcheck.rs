//! Central-difference gradient verification.
//!
//! The tape's replay keeps the recorded control flow frozen, so perturbing a
//! parameter and re-running [`Tape::forward_eval`] probes exactly the same
//! straight-line program that `backward` differentiated. Data-dependent
//! decisions (switch thresholds, graph construction) stay as recorded.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Max over parameter elements of
/// `|analytic - central difference| / max(1, |central difference|)`.
///
/// `build` records the scalar function onto a fresh tape at the given point;
/// the finite differences then replay that single tape with perturbed
/// parameter values.
pub fn grad_check<F>(build: F, params: &ParamSet, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let out = build(&mut tape, params)?;
    grad_check_prebuilt(&mut tape, out, params, h)
}

/// Same check for an already-recorded tape (a full rollout, for instance).
/// Finite differences replay the tape in place; values are restored before
/// returning.
pub fn grad_check_prebuilt(
    tape: &mut Tape,
    out: NodeId,
    params: &ParamSet,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::Config(format!("step h={h} outside (0, 1e-3]")));
    }
    if !tape.shape(out).is_empty() {
        return Err(Error::shape(
            "grad_check output",
            "scalar (rank 0)".to_string(),
            format!("{:?}", tape.shape(out)),
        ));
    }
    let analytic = tape.backward(out, &Tensor::scalar(1.0), params)?;

    let no_inputs = BTreeMap::new();
    let mut max_err: f64 = 0.0;
    let mut point = params.clone();
    for (name, tensor) in params.iter() {
        for idx in 0..tensor.numel() {
            let base = tensor.data()[idx];
            let probe = |v: f64, point: &mut ParamSet, tape: &mut Tape| -> Result<f64> {
                let mut t = tensor.clone();
                t.data_mut()[idx] = v;
                point.set(name, t)?;
                tape.forward_eval(point, &no_inputs).map_err(|e| match e {
                    Error::NonFinite(what) => {
                        Error::NonFinite(format!("{what} while perturbing {name}[{idx}]"))
                    }
                    other => other,
                })?;
                tape.scalar_value(out)
            };
            let f_plus = probe(base + h, &mut point, tape)?;
            let f_minus = probe(base - h, &mut point, tape)?;
            point.set(name, tensor.clone())?;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let err = (analytic[name].data()[idx] - numeric).abs() / numeric.abs().max(1.0);
            max_err = max_err.max(err);
        }
    }
    tape.forward_eval(params, &no_inputs)?;
    Ok(max_err)
}
