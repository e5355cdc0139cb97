//! Adam with bias correction and global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clip applied before the update; `0` disables it.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros_like(t)))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Rescale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }
    norm
}

/// One Adam update. Parameters listed in `frozen` are skipped entirely.
/// Non-finite gradients abort with the offending parameter's name.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &OptimizerConfig,
    frozen: &[&str],
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let grad = match grads.get(&name) {
            Some(g) => g,
            None => continue,
        };
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        let m = state.m.get_mut(&name).expect("state built from params");
        let v = state.v.get_mut(&name).expect("state built from params");
        for ((mi, vi), gi) in m
            .data_mut()
            .iter_mut()
            .zip(v.data_mut())
            .zip(grad.data())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        if frozen.contains(&name.as_str()) {
            continue;
        }
        let mut value = params.get(&name)?.clone();
        for ((pi, mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(state.m[&name].data())
            .zip(state.v[&name].data())
        {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        params.set(&name, value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> (ParamSet, AdamState) {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        let s = AdamState::new(&p);
        (p, s)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut p, mut s) = one_param(1.5);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::scalar(0.0));
        adam_step(&mut p, &grads, &mut s, &OptimizerConfig::default(), &[]).unwrap();
        assert_eq!(p.scalar("w").unwrap(), 1.5);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        let (mut p, mut s) = one_param(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::scalar(0.3));
        let cfg = OptimizerConfig {
            clip_norm: 0.0,
            ..OptimizerConfig::default()
        };
        adam_step(&mut p, &grads, &mut s, &cfg, &[]).unwrap();
        let step = p.scalar("w").unwrap().abs();
        assert!(
            (step - cfg.lr).abs() < 1e-6,
            "bias correction should make the first step ~lr, got {step}"
        );
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Tensor::vector(vec![6.0, 8.0])); // norm 10
        let before = clip_gradients(&mut grads, 1.0);
        assert_eq!(before, 10.0);
        let after: f64 = grads["a"].data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut p, mut s) = one_param(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::scalar(f64::NAN));
        let err = adam_step(&mut p, &grads, &mut s, &OptimizerConfig::default(), &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("w"), "{err}");
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let (mut p, mut s) = one_param(0.5);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::scalar(2.0));
        adam_step(&mut p, &grads, &mut s, &OptimizerConfig::default(), &["w"]).unwrap();
        assert_eq!(p.scalar("w").unwrap(), 0.5);
    }
}
