//! Transient switch: scores the need for a transient channel from the
//! persistent RNN's state and input, modulated by an exponential distance
//! discount, then thresholds the score into the binary on/off decision.

use super::PtdModel;
use crate::error::{Error, Result};
use crate::nn::mlp_forward;
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};

/// Switch score `p = gamma * sigmoid(MLP([h; z]))` with
/// `gamma = exp(-eta * d_min)`. Returns the score node (rank 0) and the
/// discount value for diagnostics.
///
/// With no object in the scene (`d_min` infinite) the discount is zero and
/// the switch cannot fire; the score is the constant zero.
///
/// Ablations: `no_discount` drops gamma, `discount_only` uses gamma alone,
/// `heuristic_switch` replaces everything with the rule `d_min <= beta_out`.
pub fn switch_score(
    tape: &mut Tape,
    params: &ParamSet,
    model: &PtdModel,
    h: NodeId,
    z: NodeId,
    d_min: f64,
) -> Result<(NodeId, f64)> {
    let cfg = &model.config;
    if d_min < 0.0 {
        return Err(Error::Config(format!("negative distance d_min={d_min}")));
    }
    let eta = params.scalar("eta")?;
    if eta <= 0.0 {
        return Err(Error::Config(format!("decay rate eta must be > 0, got {eta}")));
    }
    let gamma_val = (-eta * d_min).exp();

    if cfg.ablation.heuristic_switch {
        let fire = if d_min <= cfg.beta_out { 1.0 } else { 0.0 };
        return Ok((tape.scalar(fire)?, gamma_val));
    }

    let gamma_node = if d_min.is_finite() {
        let eta_node = tape.param("eta", params)?;
        let d_node = tape.scalar(d_min)?;
        let ed = tape.mul(eta_node, d_node)?;
        let ned = tape.neg(ed)?;
        Some(tape.exp(ned)?)
    } else {
        None
    };

    if cfg.ablation.discount_only {
        let node = match gamma_node {
            Some(g) => g,
            None => tape.scalar(0.0)?,
        };
        return Ok((node, gamma_val));
    }

    let hz = tape.concat(&[h, z], 0)?;
    let logit = mlp_forward(tape, params, "switch.mlp", &model.switch_layers(), hz)?;
    let logit = tape.sum(logit)?; // [1] -> rank 0
    let neural = tape.sigmoid(logit)?;

    if cfg.ablation.no_discount {
        return Ok((neural, gamma_val));
    }
    match gamma_node {
        Some(g) => Ok((tape.mul(g, neural)?, gamma_val)),
        None => Ok((tape.scalar(0.0)?, 0.0)),
    }
}

/// Binary life-cycle decision: on iff the score reaches the threshold
/// (boundary counts as on).
pub fn switch_decide(p_hat: f64, theta: f64) -> bool {
    p_hat >= theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityDims, PtdConfig};
    use crate::tensor::{sigmoid, Tensor};

    fn toy_model(mutate: impl FnOnce(&mut PtdConfig)) -> PtdModel {
        let dims = EntityDims {
            coord_dim: 2,
            keypoints: 2,
            human_dim: 4,
            object_dim: 8,
        };
        let mut cfg = PtdConfig {
            hidden_width: 3,
            message_width: 2,
            switch_hidden: 2,
            ..PtdConfig::default()
        };
        mutate(&mut cfg);
        PtdModel::new(cfg, dims).unwrap()
    }

    fn hz(tape: &mut Tape, model: &PtdModel) -> (NodeId, NodeId) {
        let h = tape.constant(Tensor::vector(vec![0.1, -0.2, 0.3])).unwrap();
        let z = tape
            .constant(Tensor::vector(vec![0.5; model.human_z_width()]))
            .unwrap();
        (h, z)
    }

    #[test]
    fn zero_distance_full_discount() {
        let model = toy_model(|_| {});
        let p = model.init_params(3).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        let (score, gamma) = switch_score(&mut tape, &p, &model, h, z, 0.0).unwrap();
        assert_eq!(gamma, 1.0);
        let v = tape.scalar_value(score).unwrap();
        assert!(v > 0.0 && v < 1.0);
        // gamma = 1 means the score is the bare sigmoid: recompute without discount
        let model_nd = toy_model(|c| c.ablation.no_discount = true);
        let mut tape2 = Tape::new();
        let (h2, z2) = hz(&mut tape2, &model_nd);
        let (score2, _) = switch_score(&mut tape2, &p, &model_nd, h2, z2, 0.0).unwrap();
        assert_eq!(v, tape2.scalar_value(score2).unwrap());
    }

    #[test]
    fn no_objects_switch_cannot_fire() {
        let model = toy_model(|_| {});
        let p = model.init_params(3).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        let (score, gamma) =
            switch_score(&mut tape, &p, &model, h, z, f64::INFINITY).unwrap();
        assert_eq!(gamma, 0.0);
        assert_eq!(tape.scalar_value(score).unwrap(), 0.0);
    }

    #[test]
    fn discount_hand_value() {
        // eta=0.5, d=2 -> gamma = e^-1
        let model = toy_model(|c| c.eta_init = 0.5);
        let p = model.init_params(3).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        let (_, gamma) = switch_score(&mut tape, &p, &model, h, z, 2.0).unwrap();
        assert!((gamma - (-1.0f64).exp()).abs() < 1e-15);
        assert!((gamma - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn nonpositive_eta_is_a_config_error() {
        let model = toy_model(|_| {});
        let mut p = model.init_params(3).unwrap();
        p.set_scalar("eta", 0.0).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        assert!(matches!(
            switch_score(&mut tape, &p, &model, h, z, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn discount_monotone_in_distance() {
        let model = toy_model(|_| {});
        let p = model.init_params(3).unwrap();
        let mut prev = f64::INFINITY;
        for d in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let mut tape = Tape::new();
            let (h, z) = hz(&mut tape, &model);
            let (score, _) = switch_score(&mut tape, &p, &model, h, z, d).unwrap();
            let v = tape.scalar_value(score).unwrap();
            assert!(v <= prev, "score must be non-increasing in d_min");
            prev = v;
        }
    }

    #[test]
    fn heuristic_switch_rule() {
        let model = toy_model(|c| c.ablation.heuristic_switch = true);
        let p = model.init_params(3).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        let (on, _) = switch_score(&mut tape, &p, &model, h, z, 0.3).unwrap();
        let (off, _) = switch_score(&mut tape, &p, &model, h, z, 0.6).unwrap();
        assert_eq!(tape.scalar_value(on).unwrap(), 1.0);
        assert_eq!(tape.scalar_value(off).unwrap(), 0.0);
    }

    #[test]
    fn discount_only_score_is_gamma() {
        let model = toy_model(|c| c.ablation.discount_only = true);
        let p = model.init_params(3).unwrap();
        let mut tape = Tape::new();
        let (h, z) = hz(&mut tape, &model);
        let (score, gamma) = switch_score(&mut tape, &p, &model, h, z, 0.7).unwrap();
        assert_eq!(tape.scalar_value(score).unwrap(), gamma);
    }

    #[test]
    fn threshold_boundary_is_on() {
        assert!(switch_decide(0.5, 0.5));
        assert!(switch_decide(0.9, 0.5));
        assert!(!switch_decide(0.3, 0.5));
    }

    #[test]
    fn sigmoid_midpoint_sanity() {
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
