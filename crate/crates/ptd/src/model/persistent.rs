//! Persistent channel: a heterogeneous recurrent graph attention network
//! over all entities, with dense spatial edges at each step and a recurrent
//! temporal edge per entity.
//!
//! Per step: `u_i = [x_i; h_i^{t-1}]`, spatial message
//! `m_i = Attn(u_i, {u_j}_{j != i})`, then `h_i = GRU_class([x_i, m_i, m_TP], h_i^{t-1})`
//! where the transient-to-persistent message slot exists for humans only
//! (zero vector while that human's transient is inactive).

use std::collections::BTreeMap;

use super::attention::gat_attention;
use super::PtdModel;
use crate::error::Result;
use crate::nn::{affine, gru_step};
use crate::params::ParamSet;
use crate::scene::{Entity, EntityClass};
use crate::tape::{NodeId, Tape};

pub struct PersistentStepOut {
    /// Updated hidden state per entity.
    pub h: Vec<NodeId>,
    /// RNN input `z_i` per human entity index (the switch reads it).
    pub z: BTreeMap<usize, NodeId>,
}

fn class_tag(class: &EntityClass) -> &'static str {
    if class.is_human() {
        "human"
    } else {
        "object"
    }
}

pub fn persistent_step(
    tape: &mut Tape,
    params: &ParamSet,
    model: &PtdModel,
    entities: &[Entity],
    x: &[NodeId],
    h_prev: &[NodeId],
    transient_msgs: &BTreeMap<usize, NodeId>,
) -> Result<PersistentStepOut> {
    let msg = model.config.message_width;
    let mut u = Vec::with_capacity(entities.len());
    for i in 0..entities.len() {
        u.push(tape.concat(&[x[i], h_prev[i]], 0)?);
    }

    let mut h_new = Vec::with_capacity(entities.len());
    let mut z_map = BTreeMap::new();
    for (i, entity) in entities.iter().enumerate() {
        let values: Vec<(NodeId, String)> = entities
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, other)| {
                (
                    u[j],
                    format!("persistent.attn.value.{}.w", class_tag(&other.class)),
                )
            })
            .collect();
        let value_refs: Vec<(NodeId, &str)> =
            values.iter().map(|(n, s)| (*n, s.as_str())).collect();
        let attn = gat_attention(
            tape,
            params,
            u[i],
            &format!("persistent.attn.query.{}.w", class_tag(&entity.class)),
            &value_refs,
            "persistent.attn.score",
            model.config.attn_slope,
            msg,
        )?;

        let z = if entity.class.is_human() {
            let tp = match transient_msgs.get(&i) {
                Some(&node) => node,
                None => tape.zeros(vec![msg])?,
            };
            tape.concat(&[x[i], attn.message, tp], 0)?
        } else {
            tape.concat(&[x[i], attn.message], 0)?
        };
        let prefix = format!("persistent.{}.gru", class_tag(&entity.class));
        h_new.push(gru_step(tape, params, &prefix, z, h_prev[i])?);
        if entity.class.is_human() {
            z_map.insert(i, z);
        }
    }
    Ok(PersistentStepOut { h: h_new, z: z_map })
}

/// Readout heads on the persistent hidden state: the message to the human's
/// transient channel, and the prediction of the entity's next position in
/// absolute global coordinates. Objects have no transient, so no message.
pub fn persistent_readout(
    tape: &mut Tape,
    params: &ParamSet,
    class: &EntityClass,
    h: NodeId,
) -> Result<(Option<NodeId>, NodeId)> {
    if class.is_human() {
        let msg = affine(tape, params, "persistent.human.to_transient", h)?;
        let pred = affine(tape, params, "persistent.human.predict", h)?;
        Ok((Some(msg), pred))
    } else {
        let pred = affine(tape, params, "persistent.object.predict", h)?;
        Ok((None, pred))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn single_entity_scene_zero_spatial_message() {
        let model = toy_model();
        let p = model.init_params(1).unwrap();
        let entities = vec![Entity {
            id: 0,
            class: EntityClass::Human { keypoints: 2 },
            dim: 4,
        }];
        let mut tape = Tape::new();
        let x = vec![tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0])).unwrap()];
        let h = vec![tape.zeros(vec![3]).unwrap()];
        // with an empty neighbor set, z = [x, 0, 0]
        let out =
            persistent_step(&mut tape, &p, &model, &entities, &x, &h, &BTreeMap::new()).unwrap();
        let z = tape.value(out.z[&0]).data();
        assert_eq!(&z[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert!(z[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_keep_zero_hidden() {
        let model = toy_model();
        let p = zero_params(&model);
        let entities = vec![
            Entity {
                id: 0,
                class: EntityClass::Human { keypoints: 2 },
                dim: 4,
            },
            Entity {
                id: 1,
                class: EntityClass::Object {
                    type_label: "box".to_string(),
                },
                dim: 8,
            },
        ];
        let mut tape = Tape::new();
        let x = vec![
            tape.constant(Tensor::vector(vec![1.0; 4])).unwrap(),
            tape.constant(Tensor::vector(vec![2.0; 8])).unwrap(),
        ];
        let h = vec![tape.zeros(vec![3]).unwrap(), tape.zeros(vec![3]).unwrap()];
        let out =
            persistent_step(&mut tape, &p, &model, &entities, &x, &h, &BTreeMap::new()).unwrap();
        for hn in &out.h {
            assert!(tape.value(*hn).data().iter().all(|&v| v == 0.0));
        }
        // readout with zero weights: zero message, zero prediction
        let (msg, pred) =
            persistent_readout(&mut tape, &p, &entities[0].class, out.h[0]).unwrap();
        assert!(tape.value(msg.unwrap()).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(pred).data().iter().all(|&v| v == 0.0));
        // human head shapes: (message width, feature dim)
        assert_eq!(tape.shape(pred), &[4]);
    }
}
