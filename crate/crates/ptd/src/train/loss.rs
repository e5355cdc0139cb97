//! Loss assembly on the rollout tape.
//!
//! Prediction terms are the mean (over entities and predicted frames, per
//! entity class) of per-frame Euclidean distances — the mean normalization
//! keeps the lambda weights scale-free across scene sizes. The switch term
//! is mean binary cross-entropy between scores and postdated labels over all
//! humans and all steps, observation and prediction phases alike.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{PtdConfig, Rollout};
use crate::scene::SceneSequence;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub human: f64,
    pub object: f64,
    pub switch: f64,
}

pub struct LossBreakdown {
    pub total: NodeId,
    pub human: NodeId,
    pub object: NodeId,
    pub switch: NodeId,
    pub values: LossValues,
}

fn mean_of(tape: &mut Tape, terms: &[NodeId]) -> Result<NodeId> {
    if terms.is_empty() {
        return tape.scalar(0.0);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    tape.scale(acc, 1.0 / terms.len() as f64)
}

/// Mean per-frame Euclidean distance terms plus mean BCE switch term,
/// weighted into the total. Scores must cover every step the rollout ran;
/// prediction nodes pair with ground-truth frames `t_obs..t_obs+l_pred`.
pub fn total_loss(
    rollout: &mut Rollout,
    scene: &SceneSequence,
    switch_labels: &BTreeMap<usize, Vec<bool>>,
    cfg: &PtdConfig,
) -> Result<LossBreakdown> {
    let t_obs = rollout.t_obs;
    let l_pred = rollout.l_pred;
    if scene.frames.len() < t_obs + l_pred {
        return Err(Error::Data(format!(
            "loss needs ground truth through frame {}, scene has {}",
            t_obs + l_pred,
            scene.frames.len()
        )));
    }
    let humans = scene.human_indices();

    let mut human_terms = Vec::new();
    let mut object_terms = Vec::new();
    for (l, preds) in rollout.predictions.iter().enumerate() {
        let truth = &scene.frames[t_obs + l];
        for (i, entity) in scene.entities.iter().enumerate() {
            let tape = &mut rollout.tape;
            let t_const = tape.constant(Tensor::vector(truth[i].clone()))?;
            let diff = tape.sub(preds[i], t_const)?;
            let sq = tape.square(diff)?;
            let ssq = tape.sum(sq)?;
            let dist = tape.sqrt(ssq)?;
            if entity.class.is_human() {
                human_terms.push(dist);
            } else {
                object_terms.push(dist);
            }
        }
    }

    let mut switch_terms = Vec::new();
    for (step_idx, step_scores) in rollout.scores.iter().enumerate() {
        for &hi in &humans {
            let score = match step_scores.get(&hi) {
                Some(&s) => s,
                None => continue, // score path ablated away
            };
            let labels = switch_labels.get(&hi).ok_or_else(|| {
                Error::Data(format!("no switch labels for human entity index {hi}"))
            })?;
            if labels.len() < t_obs + l_pred {
                return Err(Error::Data(format!(
                    "switch labels cover {} frames, need {}",
                    labels.len(),
                    t_obs + l_pred
                )));
            }
            let label = labels[step_idx];
            let tape = &mut rollout.tape;
            // affine squash into [eps, 1-eps] keeps the log finite
            let scaled = tape.scale(score, 1.0 - 2.0 * BCE_EPS)?;
            let eps = tape.scalar(BCE_EPS)?;
            let clamped = tape.add(scaled, eps)?;
            let prob = if label {
                clamped
            } else {
                let one = tape.scalar(1.0)?;
                tape.sub(one, clamped)?
            };
            let log_p = tape.ln(prob)?;
            switch_terms.push(tape.neg(log_p)?);
        }
    }

    let tape = &mut rollout.tape;
    let human = mean_of(tape, &human_terms)?;
    let object = mean_of(tape, &object_terms)?;
    let switch = mean_of(tape, &switch_terms)?;

    let lambda_switch = if cfg.ablation.no_switch_loss {
        0.0
    } else {
        cfg.lambda_switch
    };
    let wh = tape.scale(human, cfg.lambda_human)?;
    let wo = tape.scale(object, cfg.lambda_object)?;
    let ws = tape.scale(switch, lambda_switch)?;
    let partial = tape.add(wh, wo)?;
    let total = tape.add(partial, ws)?;
    tape.mark_output("loss", total);

    let values = LossValues {
        total: tape.scalar_value(total)?,
        human: tape.scalar_value(human)?,
        object: tape.scalar_value(object)?,
        switch: tape.scalar_value(switch)?,
    };
    Ok(LossBreakdown {
        total,
        human,
        object,
        switch,
        values,
    })
}
