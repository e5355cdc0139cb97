//! Transient channel: an egocentric recurrent star graph, one instance per
//! human while their switch is on.
//!
//! Per step, in egocentric coordinates of the center human: the center state
//! aggregates inward-edge leaves through attention and consumes the parent
//! channel's message; outward-edge leaves receive a center-broadcast message
//! and update, all other leaf states stay frozen. Readouts produce the
//! message back to the persistent channel and per-node position predictions,
//! decoded in egocentric coordinates and shifted back to global.

use std::collections::BTreeMap;

use super::attention::gat_attention;
use super::ego::{centroid_node, tile_node};
use super::graph::TransientGraph;
use super::PtdModel;
use crate::error::{Error, Result};
use crate::nn::{affine, gru_step};
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};

/// Recurrent state of one transient life cycle. Parameters are shared across
/// all instances; only the states here are per-instance.
#[derive(Debug, Clone)]
pub struct TransientInstance {
    /// Entity index of the center human.
    pub center: usize,
    /// Step the switch turned on (1-based).
    pub started_at: usize,
    pub center_state: NodeId,
    /// Per object entity index. Zero-initialized at activation; a leaf's
    /// state only changes on steps where it has an outward edge.
    pub leaf_states: BTreeMap<usize, NodeId>,
}

impl TransientInstance {
    /// Fresh zero-state instance covering every object in the scene.
    pub fn activate(
        tape: &mut Tape,
        center: usize,
        objects: &[usize],
        hidden_width: usize,
        step: usize,
    ) -> Result<Self> {
        let center_state = tape.zeros(vec![hidden_width])?;
        let mut leaf_states = BTreeMap::new();
        for &o in objects {
            leaf_states.insert(o, tape.zeros(vec![hidden_width])?);
        }
        Ok(TransientInstance {
            center,
            started_at: step,
            center_state,
            leaf_states,
        })
    }
}

pub struct TransientStepOut {
    /// Message to the persistent channel, consumed at the next step.
    pub to_persistent: NodeId,
    /// Global-coordinate predictions: center plus every outward-edge leaf.
    pub predictions: BTreeMap<usize, NodeId>,
    /// Attention weights over inward edges (diagnostics).
    pub inward_weights: Option<NodeId>,
}

/// One transient update for an active instance. `x` holds this step's
/// global-coordinate feature nodes for all entities.
pub fn transient_step(
    tape: &mut Tape,
    params: &ParamSet,
    model: &PtdModel,
    inst: &mut TransientInstance,
    graph: &TransientGraph,
    x: &[NodeId],
    p2t_msg: NodeId,
) -> Result<TransientStepOut> {
    if graph.center != inst.center {
        return Err(Error::Lifecycle(format!(
            "graph centered on entity {} applied to instance of entity {}",
            graph.center, inst.center
        )));
    }
    let cfg = &model.config;
    let dims = &model.dims;
    let msg = cfg.message_width;
    let ego = !cfg.ablation.no_egocentric;

    // Egocentric frame: subtract the center's keypoint centroid everywhere.
    // The no-egocentric ablation keeps global coordinates (zero centroid).
    let center_c = if ego {
        centroid_node(tape, x[inst.center], dims.keypoints, dims.coord_dim)?
    } else {
        tape.zeros(vec![dims.coord_dim])?
    };
    let tiled_h = tile_node(tape, center_c, dims.keypoints)?;
    let tiled_o = tile_node(tape, center_c, dims.object_points())?;
    let x_ego_center = tape.sub(x[inst.center], tiled_h)?;

    let mut x_ego_leaf: BTreeMap<usize, NodeId> = BTreeMap::new();
    for &l in graph.inward.iter().chain(graph.outward.iter()) {
        if !x_ego_leaf.contains_key(&l) {
            x_ego_leaf.insert(l, tape.sub(x[l], tiled_o)?);
        }
    }

    let prev_center = inst.center_state;

    // Center update: inward attention over [x_ego_l; s_l^{t-1}] leaves.
    let query = tape.concat(&[x_ego_center, prev_center], 0)?;
    let mut values = Vec::with_capacity(graph.inward.len());
    for &l in &graph.inward {
        let s_l = *inst.leaf_states.get(&l).ok_or_else(|| {
            Error::Lifecycle(format!("no leaf state for object entity {l}"))
        })?;
        values.push((tape.concat(&[x_ego_leaf[&l], s_l], 0)?, "transient.attn.value.w"));
    }
    let attn = gat_attention(
        tape,
        params,
        query,
        "transient.attn.query.w",
        &values,
        "transient.attn.score",
        cfg.attn_slope,
        msg,
    )?;
    let center_in = tape.concat(&[x_ego_center, attn.message, p2t_msg], 0)?;
    let new_center = gru_step(tape, params, "transient.center.gru", center_in, prev_center)?;

    // Leaf updates: outward edges receive the center-broadcast message
    // (computed from the pre-update center state); everything else freezes.
    if !graph.outward.is_empty() {
        let bc_in = tape.concat(&[x_ego_center, prev_center], 0)?;
        let broadcast = affine(tape, params, "transient.broadcast", bc_in)?;
        for &l in &graph.outward {
            let prev = inst.leaf_states[&l];
            let leaf_in = tape.concat(&[x_ego_leaf[&l], broadcast], 0)?;
            let new = gru_step(tape, params, "transient.leaf.gru", leaf_in, prev)?;
            inst.leaf_states.insert(l, new);
        }
    }
    inst.center_state = new_center;

    // Readouts from the updated states.
    let to_persistent = affine(tape, params, "transient.to_persistent", new_center)?;
    let mut predictions = BTreeMap::new();
    let center_pred_ego = affine(tape, params, "transient.center.predict", new_center)?;
    let center_pred = if ego {
        tape.add(center_pred_ego, tiled_h)?
    } else {
        center_pred_ego
    };
    predictions.insert(inst.center, center_pred);
    for &l in &graph.outward {
        let pred_ego = affine(tape, params, "transient.leaf.predict", inst.leaf_states[&l])?;
        let pred = if ego {
            tape.add(pred_ego, tiled_o)?
        } else {
            pred_ego
        };
        predictions.insert(l, pred);
    }

    Ok(TransientStepOut {
        to_persistent,
        predictions,
        inward_weights: attn.weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::graph::build_transient_graph;
    use crate::model::{EntityDims, PtdConfig};
    use crate::tensor::Tensor;

    fn toy_model() -> PtdModel {
        let dims = EntityDims {
            coord_dim: 2,
            keypoints: 2,
            human_dim: 4,
            object_dim: 8,
        };
        let cfg = PtdConfig {
            hidden_width: 3,
            message_width: 2,
            switch_hidden: 2,
            ..PtdConfig::default()
        };
        PtdModel::new(cfg, dims).unwrap()
    }

    fn zero_params(model: &PtdModel) -> ParamSet {
        let mut p = model.init_params(0).unwrap();
        let names: Vec<String> = p.names().cloned().collect();
        for n in names {
            if n == "eta" || n == "theta" {
                continue;
            }
            let z = Tensor::zeros_like(p.get(&n).unwrap());
            p.set(&n, z).unwrap();
        }
        p
    }

    /// Entities: 0 human at centroid (1,1); 1,2 objects as unit boxes.
    fn toy_nodes(tape: &mut Tape, obj1_x: f64, obj2_x: f64) -> Vec<NodeId> {
        let human = tape
            .constant(Tensor::vector(vec![0.5, 1.0, 1.5, 1.0]))
            .unwrap();
        let along = |cx: f64| {
            vec![cx - 0.1, 0.9, cx + 0.1, 0.9, cx + 0.1, 1.1, cx - 0.1, 1.1]
        };
        let o1 = tape.constant(Tensor::vector(along(obj1_x))).unwrap();
        let o2 = tape.constant(Tensor::vector(along(obj2_x))).unwrap();
        vec![human, o1, o2]
    }

    #[test]
    fn leaf_without_outward_edge_is_bitwise_frozen() {
        let model = toy_model();
        let p = model.init_params(5).unwrap();
        let mut tape = Tape::new();
        // object 1 near (outward), object 2 at inward-only range
        let x = toy_nodes(&mut tape, 1.3, 2.0);
        let graph = build_transient_graph(
            0,
            &[1.0, 1.0],
            &[(1, vec![1.3, 1.0]), (2, vec![2.0, 1.0])],
            1.2,
            0.45,
            false,
        );
        assert_eq!(graph.outward, vec![1]);
        assert_eq!(graph.inward, vec![1, 2]);
        let mut inst = TransientInstance::activate(&mut tape, 0, &[1, 2], 3, 1).unwrap();
        // warm the states so "frozen" is observable on non-zero values
        let p2t = tape.zeros(vec![2]).unwrap();
        transient_step(&mut tape, &p, &model, &mut inst, &graph, &x, p2t).unwrap();
        let s1_before = tape.value(inst.leaf_states[&1]).data().to_vec();
        let s2_before = tape.value(inst.leaf_states[&2]).data().to_vec();
        let out = transient_step(&mut tape, &p, &model, &mut inst, &graph, &x, p2t).unwrap();
        let s1_after = tape.value(inst.leaf_states[&1]).data().to_vec();
        let s2_after = tape.value(inst.leaf_states[&2]).data().to_vec();
        assert_ne!(s1_before, s1_after, "outward leaf must update");
        assert_eq!(s2_before, s2_after, "inward-only leaf must freeze");
        // exactly one leaf prediction (the outward edge) plus the center
        assert_eq!(out.predictions.len(), 2);
        assert!(out.predictions.contains_key(&0) && out.predictions.contains_key(&1));
        // attention weights over the two inward edges sum to 1
        let w = tape.value(out.inward_weights.unwrap());
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_keep_zero_states() {
        let model = toy_model();
        let p = zero_params(&model);
        let mut tape = Tape::new();
        let x = toy_nodes(&mut tape, 1.3, 1.4);
        let graph = build_transient_graph(
            0,
            &[1.0, 1.0],
            &[(1, vec![1.3, 1.0]), (2, vec![1.4, 1.0])],
            1.2,
            0.45,
            false,
        );
        let mut inst = TransientInstance::activate(&mut tape, 0, &[1, 2], 3, 1).unwrap();
        let p2t = tape.zeros(vec![2]).unwrap();
        transient_step(&mut tape, &p, &model, &mut inst, &graph, &x, p2t).unwrap();
        assert!(tape.value(inst.center_state).data().iter().all(|&v| v == 0.0));
        for (_, s) in &inst.leaf_states {
            assert!(tape.value(*s).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_readout_weights_predict_the_centroid() {
        let model = toy_model();
        let p = zero_params(&model);
        let mut tape = Tape::new();
        let x = toy_nodes(&mut tape, 1.3, 2.0);
        let graph = build_transient_graph(
            0,
            &[1.0, 1.0],
            &[(1, vec![1.3, 1.0]), (2, vec![2.0, 1.0])],
            1.2,
            0.45,
            false,
        );
        let mut inst = TransientInstance::activate(&mut tape, 0, &[1, 2], 3, 1).unwrap();
        let p2t = tape.zeros(vec![2]).unwrap();
        let out = transient_step(&mut tape, &p, &model, &mut inst, &graph, &x, p2t).unwrap();
        // zero readout in egocentric space decodes to the center centroid
        // repeated for every coordinate pair
        let pred = tape.value(out.predictions[&0]).data();
        assert_eq!(pred, &[1.0, 1.0, 1.0, 1.0]);
        let pred_leaf = tape.value(out.predictions[&1]).data();
        assert_eq!(pred_leaf, &[1.0; 8]);
    }

    #[test]
    fn mismatched_graph_is_a_lifecycle_error() {
        let model = toy_model();
        let p = model.init_params(0).unwrap();
        let mut tape = Tape::new();
        let x = toy_nodes(&mut tape, 1.3, 2.0);
        let graph = build_transient_graph(9, &[1.0, 1.0], &[], 1.2, 0.45, false);
        let mut inst = TransientInstance::activate(&mut tape, 0, &[1, 2], 3, 1).unwrap();
        let p2t = tape.zeros(vec![2]).unwrap();
        let err = transient_step(&mut tape, &p, &model, &mut inst, &graph, &x, p2t);
        assert!(matches!(err, Err(Error::Lifecycle(_))));
    }
}
