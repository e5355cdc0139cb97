//! Two-stage training: teacher-forced epochs first, then fine-tuning with
//! the autoregressive unrolling. Validation always runs autoregressively
//! (the deployment mode) and the best-validation parameters are kept.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{interaction_labels, switch_labels};
use super::loss::{total_loss, LossValues};
use super::optim::{adam_step, clip_gradients, AdamState, OptimizerConfig};
use crate::error::{Error, Result};
use crate::model::{rollout, PtdModel, RolloutMode};
use crate::params::ParamSet;
use crate::scene::SceneSequence;
use crate::tensor::Tensor;

const ETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip; 0 disables.
    pub clip_norm: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of scenes held out for model selection.
    pub val_fraction: f64,
    /// Use generator ground-truth windows for switch labels when available.
    pub labels_from_windows: bool,
    /// After training, grid-search theta on validation switch-label F1.
    pub calibrate_theta: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            epochs_stage1: 30,
            epochs_stage2: 10,
            batch_size: 8,
            seed: 7,
            val_fraction: 0.1,
            labels_from_windows: true,
            calibrate_theta: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must be in [0, 0.5], got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: usize,
    pub split: &'static str,
    pub values: LossValues,
}

pub struct TrainOutcome {
    /// Best-validation parameters (initialization when no epochs ran).
    pub params: ParamSet,
    pub best_val: f64,
    pub log: Vec<EpochLog>,
    pub stages_run: usize,
}

/// Postdated switch labels for one scene, keyed by human entity index.
pub fn scene_switch_labels(
    model: &PtdModel,
    scene: &SceneSequence,
    from_windows: bool,
) -> BTreeMap<usize, Vec<bool>> {
    let q = interaction_labels(
        scene,
        model.config.beta_out,
        model.config.distance_anchor(),
        from_windows,
    );
    q.into_iter()
        .map(|(k, bits)| (k, switch_labels(&bits, model.config.postdate_window)))
        .collect()
}

/// Forward + loss + backward for one scene.
fn scene_gradients(
    model: &PtdModel,
    params: &ParamSet,
    scene: &SceneSequence,
    labels: &BTreeMap<usize, Vec<bool>>,
    mode: RolloutMode,
) -> Result<(BTreeMap<String, Tensor>, LossValues)> {
    let mut r = rollout(model, params, scene, scene.t_obs, scene.l_pred, mode)?;
    let loss = total_loss(&mut r, scene, labels, &model.config)?;
    let grads = r.tape.backward(loss.total, &Tensor::scalar(1.0), params)?;
    Ok((grads, loss.values))
}

/// Mean loss over a scene set, forward only.
pub fn dataset_loss(
    model: &PtdModel,
    params: &ParamSet,
    scenes: &[&SceneSequence],
    labels: &[&BTreeMap<usize, Vec<bool>>],
    mode: RolloutMode,
) -> Result<LossValues> {
    let per_scene: Vec<LossValues> = scenes
        .par_iter()
        .zip(labels.par_iter())
        .map(|(scene, lab)| {
            let mut r = rollout(model, params, scene, scene.t_obs, scene.l_pred, mode)?;
            Ok(total_loss(&mut r, scene, lab, &model.config)?.values)
        })
        .collect::<Result<_>>()?;
    let n = per_scene.len().max(1) as f64;
    Ok(LossValues {
        total: per_scene.iter().map(|v| v.total).sum::<f64>() / n,
        human: per_scene.iter().map(|v| v.human).sum::<f64>() / n,
        object: per_scene.iter().map(|v| v.object).sum::<f64>() / n,
        switch: per_scene.iter().map(|v| v.switch).sum::<f64>() / n,
    })
}

pub fn train(model: &PtdModel, scenes: &[SceneSequence], tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    model.config.validate()?;
    if scenes.is_empty() {
        return Err(Error::Data("training dataset is empty".to_string()));
    }
    for s in scenes {
        s.validate()?;
        let dims = crate::model::EntityDims::from_scene(s)?;
        if dims != model.dims {
            return Err(Error::Data(
                "scene feature dimensions do not match the model".to_string(),
            ));
        }
    }
    let labels: Vec<BTreeMap<usize, Vec<bool>>> = scenes
        .iter()
        .map(|s| scene_switch_labels(model, s, tc.labels_from_windows))
        .collect();

    // Seeded validation split.
    let mut split_rng = ChaCha12Rng::seed_from_u64(tc.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut split_rng);
    let n_val = ((scenes.len() as f64) * tc.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_scenes: Vec<&SceneSequence> = val_idx.iter().map(|&i| &scenes[i]).collect();
    let val_labels: Vec<&BTreeMap<usize, Vec<bool>>> =
        val_idx.iter().map(|&i| &labels[i]).collect();

    let mut params = model.init_params(tc.seed)?;
    let mut adam = AdamState::new(&params);
    let opt = tc.optimizer();
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(tc.seed.wrapping_add(2));

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut log = Vec::new();
    let mut epoch = 0usize;

    let mut stages: Vec<(usize, RolloutMode, usize)> =
        vec![(1, RolloutMode::TeacherForced, tc.epochs_stage1)];
    if !model.config.ablation.single_stage {
        stages.push((2, RolloutMode::Autoregressive, tc.epochs_stage2));
    }
    let stages_run = stages.iter().filter(|(_, _, e)| *e > 0).count();

    for (stage, mode, epochs) in stages {
        for _ in 0..epochs {
            epoch += 1;
            let mut train_order = train_idx.to_vec();
            train_order.shuffle(&mut shuffle_rng);

            let mut sums = LossValues {
                total: 0.0,
                human: 0.0,
                object: 0.0,
                switch: 0.0,
            };
            let mut count = 0usize;
            for batch in train_order.chunks(tc.batch_size) {
                let results: Vec<(BTreeMap<String, Tensor>, LossValues)> = batch
                    .par_iter()
                    .map(|&i| scene_gradients(model, &params, &scenes[i], &labels[i], mode))
                    .collect::<Result<_>>()?;

                let mut grads: BTreeMap<String, Tensor> = params
                    .iter()
                    .map(|(n, t)| (n.clone(), Tensor::zeros_like(t)))
                    .collect();
                for (g, v) in &results {
                    for (name, tensor) in g {
                        grads.get_mut(name).expect("same param names").add_assign(tensor)?;
                    }
                    sums.total += v.total;
                    sums.human += v.human;
                    sums.object += v.object;
                    sums.switch += v.switch;
                    count += 1;
                }
                let scale = 1.0 / batch.len() as f64;
                for g in grads.values_mut() {
                    for v in g.data_mut() {
                        *v *= scale;
                    }
                }
                clip_gradients(&mut grads, opt.clip_norm);
                adam_step(&mut params, &grads, &mut adam, &opt, &["theta"])?;
                if params.scalar("eta")? < ETA_FLOOR {
                    params.set_scalar("eta", ETA_FLOOR)?;
                }
            }

            let n = count.max(1) as f64;
            log.push(EpochLog {
                epoch,
                stage,
                split: "train",
                values: LossValues {
                    total: sums.total / n,
                    human: sums.human / n,
                    object: sums.object / n,
                    switch: sums.switch / n,
                },
            });

            if val_scenes.is_empty() {
                best_params = params.clone();
            } else {
                let val = dataset_loss(
                    model,
                    &params,
                    &val_scenes,
                    &val_labels,
                    RolloutMode::Autoregressive,
                )?;
                log.push(EpochLog {
                    epoch,
                    stage,
                    split: "val",
                    values: val,
                });
                if val.total < best_val {
                    best_val = val.total;
                    best_params = params.clone();
                }
            }
        }
    }

    if tc.calibrate_theta && !val_scenes.is_empty() {
        let theta = calibrate_theta(model, &best_params, &val_scenes, &val_labels)?;
        best_params.set_scalar("theta", theta)?;
    }

    Ok(TrainOutcome {
        params: best_params,
        best_val,
        log,
        stages_run,
    })
}

/// Grid-search the switch threshold by maximizing switch-label F1 on the
/// validation scenes. Each candidate re-runs the rollouts: the threshold
/// feeds back into the dynamics, so traces cannot be reused across values.
pub fn calibrate_theta(
    model: &PtdModel,
    params: &ParamSet,
    scenes: &[&SceneSequence],
    labels: &[&BTreeMap<usize, Vec<bool>>],
) -> Result<f64> {
    let mut best = (params.scalar("theta")?, -1.0);
    for k in 1..20 {
        let theta = k as f64 / 20.0;
        let mut probe = params.clone();
        probe.set_scalar("theta", theta)?;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (scene, lab) in scenes.iter().zip(labels) {
            let r = rollout(
                model,
                &probe,
                scene,
                scene.t_obs,
                scene.l_pred,
                RolloutMode::Autoregressive,
            )?;
            for row in &r.switch_trace {
                let hi = scene.entity_index(row.human_id).expect("trace id valid");
                let truth = lab[&hi][row.t - 1];
                match (row.on, truth) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
        };
        if f1 > best.1 {
            best = (theta, f1);
        }
    }
    Ok(best.0)
}

/// Training-log CSV: `epoch,stage,split,loss_total,loss_h,loss_o,loss_switch`.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,stage,split,loss_total,loss_h,loss_o,loss_switch\n");
    for row in log {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.epoch,
            row.stage,
            row.split,
            row.values.total,
            row.values.human,
            row.values.object,
            row.values.switch
        ));
    }
    s
}
