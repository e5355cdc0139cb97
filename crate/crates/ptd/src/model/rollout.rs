//! Step orchestration: runs the persistent channel, the switches and the
//! active transient channels over observation and prediction phases, and
//! arbitrates the two channels' outputs per entity.
//!
//! Step `t` (1-based) consumes the features of frame `t-1`; its readouts
//! predict frame `t`. In autoregressive mode the combined prediction of step
//! `t` becomes the input of step `t+1` once the observation runs out, and
//! transient graphs and distances are recomputed from predicted positions.

use std::collections::BTreeMap;

use super::graph::{build_transient_graph, object_centroid, TransientGraph};
use super::persistent::{persistent_readout, persistent_step};
use super::switch::{switch_decide, switch_score};
use super::transient::{transient_step, TransientInstance};
use super::PtdModel;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scene::{anchor_point, SceneSequence};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Ground-truth positions feed every step, including the prediction
    /// phase (stage-1 training).
    TeacherForced,
    /// Combined predictions feed back as inputs past the observation.
    Autoregressive,
}

/// Per-step, per-human switch diagnostics; the trace CSV schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchTraceRow {
    pub t: usize,
    pub human_id: usize,
    pub p_hat: f64,
    pub gamma: f64,
    pub on: bool,
    pub n_inward: usize,
    pub n_outward: usize,
    pub d_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphTraceRow {
    pub t: usize,
    pub human_id: usize,
    /// Entity ids, not indices.
    pub inward: Vec<usize>,
    pub outward: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTraceRow {
    pub t: usize,
    pub human_id: usize,
    pub center: Vec<f64>,
    /// Leaf states by object entity id.
    pub leaves: BTreeMap<usize, Vec<f64>>,
}

/// One active transient channel's claim on this step's predictions.
pub struct ChannelPrediction {
    /// Entity index of the owning human.
    pub human: usize,
    pub score: f64,
    /// Entity index -> prediction node (center + outward leaves).
    pub predictions: BTreeMap<usize, NodeId>,
}

/// Arbitration: a human with an active transient takes its transient
/// prediction; an object takes the prediction of the highest-scoring channel
/// reaching it through an outward edge (ties to the lowest human index);
/// everything else keeps the persistent prediction.
pub fn combine_predictions(
    persistent: &[NodeId],
    channels: &[ChannelPrediction],
) -> Vec<NodeId> {
    (0..persistent.len())
        .map(|i| {
            if let Some(own) = channels.iter().find(|c| c.human == i) {
                return own.predictions[&own.human];
            }
            let mut best: Option<(f64, NodeId)> = None;
            for c in channels {
                if let Some(&node) = c.predictions.get(&i) {
                    let take = match best {
                        None => true,
                        Some((s, _)) => c.score > s,
                    };
                    if take {
                        best = Some((c.score, node));
                    }
                }
            }
            best.map(|(_, n)| n).unwrap_or(persistent[i])
        })
        .collect()
}

pub struct Rollout {
    pub tape: Tape,
    pub t_obs: usize,
    pub l_pred: usize,
    /// `predictions[l][entity]` — node predicting frame `t_obs + l`.
    pub predictions: Vec<Vec<NodeId>>,
    /// Same predictions as plain values.
    pub predicted_values: Vec<Vec<Vec<f64>>>,
    /// Switch score nodes per step (index `t-1`), keyed by human entity
    /// index. Empty maps when the score path is ablated away.
    pub scores: Vec<BTreeMap<usize, NodeId>>,
    pub switch_trace: Vec<SwitchTraceRow>,
    pub graph_trace: Vec<GraphTraceRow>,
    pub state_trace: Vec<StateTraceRow>,
}

pub fn rollout(
    model: &PtdModel,
    params: &ParamSet,
    scene: &SceneSequence,
    t_obs: usize,
    l_pred: usize,
    mode: RolloutMode,
) -> Result<Rollout> {
    let needed = match mode {
        RolloutMode::TeacherForced => t_obs + l_pred,
        RolloutMode::Autoregressive => t_obs,
    };
    if t_obs == 0 {
        return Err(Error::Data("rollout needs t_obs >= 1".to_string()));
    }
    if scene.frames.len() < needed {
        return Err(Error::Data(format!(
            "scene has {} frames, rollout needs {needed}",
            scene.frames.len()
        )));
    }
    let theta = params.scalar("theta")?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Config(format!("theta must be in (0,1), got {theta}")));
    }
    let eta = params.scalar("eta")?;

    let cfg = &model.config;
    let flags = cfg.ablation;
    let n = scene.entities.len();
    let humans = scene.human_indices();
    let objects = scene.object_indices();
    let cd = model.dims.coord_dim;
    let total = t_obs + l_pred;

    let mut tape = Tape::new();
    let mut h: Vec<NodeId> = (0..n)
        .map(|_| tape.zeros(vec![cfg.hidden_width]))
        .collect::<Result<_>>()?;
    let mut tp_msgs: BTreeMap<usize, NodeId> = BTreeMap::new();
    let mut active: BTreeMap<usize, TransientInstance> = BTreeMap::new();
    let mut on_state: BTreeMap<usize, bool> = humans.iter().map(|&r| (r, false)).collect();
    let mut prev_combined: Option<Vec<NodeId>> = None;

    let mut predictions = Vec::with_capacity(l_pred);
    let mut predicted_values = Vec::with_capacity(l_pred);
    let mut scores = Vec::with_capacity(total);
    let mut switch_trace = Vec::new();
    let mut graph_trace = Vec::new();
    let mut state_trace = Vec::new();

    for t in 1..=total {
        // Inputs: ground truth through the observation (and throughout in
        // teacher-forced mode), fed-back predictions afterwards.
        let x: Vec<NodeId> = if t <= t_obs || mode == RolloutMode::TeacherForced {
            let frame = &scene.frames[t - 1];
            (0..n)
                .map(|i| tape.input(&format!("x.t{t}.e{i}"), Tensor::vector(frame[i].clone())))
                .collect::<Result<_>>()?
        } else {
            prev_combined.clone().expect("combined prediction from the previous step")
        };
        let x_vals: Vec<Vec<f64>> =
            x.iter().map(|node| tape.value(*node).data().to_vec()).collect();

        // Transient graphs from this step's (possibly predicted) positions.
        let obj_cents: Vec<(usize, Vec<f64>)> = objects
            .iter()
            .map(|&o| (o, object_centroid(&x_vals[o], cd)))
            .collect();
        let graphs: BTreeMap<usize, TransientGraph> = humans
            .iter()
            .map(|&r| {
                let anchor = anchor_point(&x_vals[r], cd, cfg.distance_anchor());
                (
                    r,
                    build_transient_graph(
                        r,
                        &anchor,
                        &obj_cents,
                        cfg.beta_in,
                        cfg.beta_out,
                        flags.no_egocentric,
                    ),
                )
            })
            .collect();

        // Persistent channel; when ablated away, entities fall back to
        // repeating their current position.
        let (h_new, z_map, p2t, y_p) = if !flags.no_persistent {
            let step = persistent_step(&mut tape, params, model, &scene.entities, &x, &h, &tp_msgs)?;
            let mut p2t = BTreeMap::new();
            let mut y_p = Vec::with_capacity(n);
            for i in 0..n {
                let (m, pred) =
                    persistent_readout(&mut tape, params, &scene.entities[i].class, step.h[i])?;
                if let Some(m) = m {
                    p2t.insert(i, m);
                }
                y_p.push(pred);
            }
            (step.h, step.z, p2t, y_p)
        } else {
            (h.clone(), BTreeMap::new(), BTreeMap::new(), x.clone())
        };
        h = h_new;

        // Switch decisions and transient steps, humans in ascending index
        // order so arbitration ties resolve deterministically.
        let zero_msg = tape.zeros(vec![cfg.message_width])?;
        let mut new_tp = BTreeMap::new();
        let mut channels: Vec<ChannelPrediction> = Vec::new();
        let mut step_scores = BTreeMap::new();
        for &r in &humans {
            let graph = &graphs[&r];
            let (score_node, p_hat, gamma) = if flags.no_transient {
                (None, 0.0, 0.0)
            } else if flags.no_persistent {
                // forced on; no persistent state to score from
                (None, 1.0, (-eta * graph.d_min).exp())
            } else {
                let (node, gamma) =
                    switch_score(&mut tape, params, model, h[r], z_map[&r], graph.d_min)?;
                let val = tape.scalar_value(node)?;
                (Some(node), val, gamma)
            };
            let on = if flags.no_transient {
                false
            } else if flags.always_on_transient || flags.no_persistent {
                true
            } else {
                switch_decide(p_hat, theta)
            };

            let was_on = on_state[&r];
            if on && !was_on {
                active.insert(
                    r,
                    TransientInstance::activate(&mut tape, r, &objects, cfg.hidden_width, t)?,
                );
            } else if !on && was_on {
                active.remove(&r);
            }
            on_state.insert(r, on);

            if on {
                let inst = active
                    .get_mut(&r)
                    .ok_or_else(|| Error::Lifecycle(format!("no instance for human {r}")))?;
                let p2t_node = p2t.get(&r).copied().unwrap_or(zero_msg);
                let out = transient_step(&mut tape, params, model, inst, graph, &x, p2t_node)?;
                new_tp.insert(r, out.to_persistent);
                state_trace.push(StateTraceRow {
                    t,
                    human_id: scene.entities[r].id,
                    center: tape.value(inst.center_state).data().to_vec(),
                    leaves: inst
                        .leaf_states
                        .iter()
                        .map(|(&o, &s)| (scene.entities[o].id, tape.value(s).data().to_vec()))
                        .collect(),
                });
                channels.push(ChannelPrediction {
                    human: r,
                    score: p_hat,
                    predictions: out.predictions,
                });
            }
            if let Some(node) = score_node {
                step_scores.insert(r, node);
            }
            switch_trace.push(SwitchTraceRow {
                t,
                human_id: scene.entities[r].id,
                p_hat,
                gamma,
                on,
                n_inward: graph.inward.len(),
                n_outward: graph.outward.len(),
                d_min: graph.d_min,
            });
            graph_trace.push(GraphTraceRow {
                t,
                human_id: scene.entities[r].id,
                inward: graph.inward.iter().map(|&o| scene.entities[o].id).collect(),
                outward: graph.outward.iter().map(|&o| scene.entities[o].id).collect(),
            });
        }
        tp_msgs = new_tp;
        scores.push(step_scores);

        // Combined prediction for frame t, kept for the loss and fed back in
        // autoregressive mode.
        if l_pred > 0 && t >= t_obs && t < total {
            let combined = combine_predictions(&y_p, &channels);
            predicted_values.push(
                combined
                    .iter()
                    .map(|&node| tape.value(node).data().to_vec())
                    .collect(),
            );
            predictions.push(combined.clone());
            prev_combined = Some(combined);
        }
    }

    Ok(Rollout {
        tape,
        t_obs,
        l_pred,
        predictions,
        predicted_values,
        scores,
        switch_trace,
        graph_trace,
        state_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityDims, PtdConfig};
    use crate::scene::{Entity, EntityClass};

    fn box_feats(cx: f64, cy: f64) -> Vec<f64> {
        let s = 0.15;
        vec![cx - s, cy - s, cx + s, cy - s, cx + s, cy + s, cx - s, cy + s]
    }

    fn human_feats(cx: f64, cy: f64) -> Vec<f64> {
        vec![cx - 0.2, cy, cx + 0.2, cy] // 2 keypoints, centroid (cx, cy)
    }

    /// Human walking toward an object at (5,0); second object far away.
    fn walking_scene(frames: usize) -> SceneSequence {
        let entities = vec![
            Entity { id: 0, class: EntityClass::Human { keypoints: 2 }, dim: 4 },
            Entity { id: 1, class: EntityClass::Object { type_label: "cup".into() }, dim: 8 },
            Entity { id: 2, class: EntityClass::Object { type_label: "pot".into() }, dim: 8 },
        ];
        let frames = (0..frames)
            .map(|t| {
                let x = 0.4 * t as f64;
                vec![human_feats(x, 0.0), box_feats(5.0, 0.0), box_feats(2.0, 8.0)]
            })
            .collect();
        SceneSequence {
            coord_dim: 2,
            entities,
            frames,
            t_obs: 4,
            l_pred: 3,
            windows: vec![],
        }
    }

    fn toy_model(mutate: impl FnOnce(&mut PtdConfig)) -> PtdModel {
        let dims = EntityDims { coord_dim: 2, keypoints: 2, human_dim: 4, object_dim: 8 };
        let mut cfg = PtdConfig {
            hidden_width: 6,
            message_width: 4,
            switch_hidden: 4,
            ..PtdConfig::default()
        };
        mutate(&mut cfg);
        PtdModel::new(cfg, dims).unwrap()
    }

    #[test]
    fn zero_horizon_covers_observation_only() {
        let model = toy_model(|_| {});
        let params = model.init_params(1).unwrap();
        let scene = walking_scene(7);
        let out = rollout(&model, &params, &scene, 4, 0, RolloutMode::Autoregressive).unwrap();
        assert!(out.predictions.is_empty());
        assert_eq!(out.scores.len(), 4);
        assert_eq!(out.switch_trace.len(), 4); // one human, four steps
    }

    #[test]
    fn modes_agree_on_first_predicted_frame() {
        let model = toy_model(|_| {});
        let params = model.init_params(2).unwrap();
        let scene = walking_scene(7);
        let tf = rollout(&model, &params, &scene, 4, 3, RolloutMode::TeacherForced).unwrap();
        let ar = rollout(&model, &params, &scene, 4, 3, RolloutMode::Autoregressive).unwrap();
        for (a, b) in tf.predicted_values[0].iter().zip(&ar.predicted_values[0]) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn insufficient_frames_is_an_error() {
        let model = toy_model(|_| {});
        let params = model.init_params(1).unwrap();
        let scene = walking_scene(5);
        assert!(rollout(&model, &params, &scene, 4, 3, RolloutMode::TeacherForced).is_err());
        assert!(rollout(&model, &params, &scene, 4, 3, RolloutMode::Autoregressive).is_ok());
        assert!(rollout(&model, &params, &scene, 6, 0, RolloutMode::Autoregressive).is_err());
    }

    #[test]
    fn no_transient_flag_matches_never_firing_switch() {
        // With every object far away the switch never fires, so the
        // prediction pathway must match the no-transient configuration
        // bitwise (score nodes are dead ends for predictions).
        let scene = {
            let mut s = walking_scene(7);
            for frame in &mut s.frames {
                frame[1] = box_feats(40.0, 0.0);
                frame[2] = box_feats(2.0, 80.0);
            }
            s
        };
        let full = toy_model(|_| {});
        let ablated = toy_model(|c| c.ablation.no_transient = true);
        let params = full.init_params(3).unwrap();
        let a = rollout(&full, &params, &scene, 4, 3, RolloutMode::Autoregressive).unwrap();
        let b = rollout(&ablated, &params, &scene, 4, 3, RolloutMode::Autoregressive).unwrap();
        assert!(a.switch_trace.iter().all(|r| !r.on));
        assert!(b.switch_trace.iter().all(|r| !r.on && r.p_hat == 0.0));
        for (fa, fb) in a.predicted_values.iter().zip(&b.predicted_values) {
            for (ea, eb) in fa.iter().zip(fb) {
                for (x, y) in ea.iter().zip(eb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn switch_fires_near_object_and_transient_runs() {
        // theta low enough that proximity fires the switch
        let model = toy_model(|c| c.theta_init = 0.01);
        let params = model.init_params(4).unwrap();
        let scene = walking_scene(14);
        let out = rollout(&model, &params, &scene, 12, 2, RolloutMode::TeacherForced).unwrap();
        let fired: Vec<_> = out.switch_trace.iter().filter(|r| r.on).collect();
        assert!(!fired.is_empty(), "switch never fired near the object");
        // transient state rows exist exactly for fired steps
        assert_eq!(out.state_trace.len(), fired.len());
        for row in &out.state_trace {
            assert!(out
                .switch_trace
                .iter()
                .any(|s| s.t == row.t && s.human_id == row.human_id && s.on));
        }
    }

    #[test]
    fn arbitration_picks_highest_scoring_channel() {
        let mut tape = Tape::new();
        let p0 = tape.constant(Tensor::vector(vec![1.0])).unwrap();
        let p1 = tape.constant(Tensor::vector(vec![2.0])).unwrap();
        let p2 = tape.constant(Tensor::vector(vec![3.0])).unwrap();
        let weak = tape.constant(Tensor::vector(vec![10.0])).unwrap();
        let strong = tape.constant(Tensor::vector(vec![20.0])).unwrap();
        let persistent = vec![p0, p1, p2];
        // humans 0 and 1 both claim object 2 with scores 0.6 / 0.9
        let channels = vec![
            ChannelPrediction {
                human: 0,
                score: 0.6,
                predictions: [(0, p0), (2, weak)].into_iter().collect(),
            },
            ChannelPrediction {
                human: 1,
                score: 0.9,
                predictions: [(1, p1), (2, strong)].into_iter().collect(),
            },
        ];
        let combined = combine_predictions(&persistent, &channels);
        assert_eq!(tape.value(combined[2]).data(), &[20.0]);
        // tie goes to the lowest human index
        let tied = vec![
            ChannelPrediction {
                human: 0,
                score: 0.7,
                predictions: [(0, p0), (2, weak)].into_iter().collect(),
            },
            ChannelPrediction {
                human: 1,
                score: 0.7,
                predictions: [(1, p1), (2, strong)].into_iter().collect(),
            },
        ];
        let combined = combine_predictions(&persistent, &tied);
        assert_eq!(tape.value(combined[2]).data(), &[10.0]);
        // no channels anywhere: persistent predictions pass through
        let combined = combine_predictions(&persistent, &[]);
        assert_eq!(tape.value(combined[0]).data(), &[1.0]);
        assert_eq!(tape.value(combined[2]).data(), &[3.0]);
    }
}
