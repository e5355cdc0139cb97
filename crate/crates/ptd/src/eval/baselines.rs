//! Comparison predictors: two closed-form baselines and a per-entity
//! recurrent regressor without any graph structure, trained with the same
//! optimizer and two-stage schedule as the main model.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{EntityDims, RolloutMode};
use crate::nn::{affine, gru_step, init_affine, init_gru};
use crate::params::ParamSet;
use crate::scene::SceneSequence;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::train::{adam_step, clip_gradients, AdamState, EpochLog, LossValues, TrainConfig};

use super::metrics::ScenePredictions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Repeat the last observed frame.
    ZeroVelocity,
    /// Repeat the mean of the last two observed frames.
    RunningAvg2,
    /// Trained per-entity GRU regressor.
    Gru,
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-velocity" => Ok(BaselineKind::ZeroVelocity),
            "running-avg-2" => Ok(BaselineKind::RunningAvg2),
            "gru" => Ok(BaselineKind::Gru),
            other => Err(Error::Config(format!("unknown baseline kind `{other}`"))),
        }
    }
}

pub fn zero_velocity(scene: &SceneSequence, t_obs: usize, l_pred: usize) -> ScenePredictions {
    let last = scene.frames[t_obs - 1].clone();
    (0..l_pred).map(|_| last.clone()).collect()
}

pub fn running_avg2(scene: &SceneSequence, t_obs: usize, l_pred: usize) -> ScenePredictions {
    let a = &scene.frames[t_obs - 2];
    let b = &scene.frames[t_obs - 1];
    let mean: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(fa, fb)| fa.iter().zip(fb).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    (0..l_pred).map(|_| mean.clone()).collect()
}

/// Per-entity GRU: one parameter set per entity class, no attention, no
/// transient machinery.
#[derive(Debug, Clone)]
pub struct GruBaseline {
    pub hidden: usize,
    pub dims: EntityDims,
}

impl GruBaseline {
    pub fn new(hidden: usize, dims: EntityDims) -> Self {
        GruBaseline { hidden, dims }
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        init_gru(&mut p, &mut rng, "baseline.human.gru", self.dims.human_dim, self.hidden)?;
        init_affine(
            &mut p,
            &mut rng,
            "baseline.human.predict",
            self.hidden,
            self.dims.human_dim,
        )?;
        init_gru(
            &mut p,
            &mut rng,
            "baseline.object.gru",
            self.dims.object_dim,
            self.hidden,
        )?;
        init_affine(
            &mut p,
            &mut rng,
            "baseline.object.predict",
            self.hidden,
            self.dims.object_dim,
        )?;
        Ok(p)
    }

    /// Unroll every entity independently. Returns the tape, prediction nodes
    /// (`[l][entity]`) and plain values.
    pub fn rollout(
        &self,
        params: &ParamSet,
        scene: &SceneSequence,
        t_obs: usize,
        l_pred: usize,
        mode: RolloutMode,
    ) -> Result<(Tape, Vec<Vec<NodeId>>, ScenePredictions)> {
        let needed = match mode {
            RolloutMode::TeacherForced => t_obs + l_pred,
            RolloutMode::Autoregressive => t_obs,
        };
        if scene.frames.len() < needed {
            return Err(Error::Data(format!(
                "scene has {} frames, baseline rollout needs {needed}",
                scene.frames.len()
            )));
        }
        let mut tape = Tape::new();
        let n = scene.entities.len();
        let mut h: Vec<NodeId> = (0..n)
            .map(|_| tape.zeros(vec![self.hidden]))
            .collect::<Result<_>>()?;
        let mut predictions: Vec<Vec<NodeId>> = Vec::with_capacity(l_pred);
        let mut prev: Option<Vec<NodeId>> = None;
        let total = t_obs + l_pred;
        for t in 1..=total {
            let x: Vec<NodeId> = if t <= t_obs || mode == RolloutMode::TeacherForced {
                scene.frames[t - 1]
                    .iter()
                    .enumerate()
                    .map(|(i, f)| tape.input(&format!("x.t{t}.e{i}"), Tensor::vector(f.clone())))
                    .collect::<Result<_>>()?
            } else {
                prev.clone().expect("prediction from previous step")
            };
            let mut preds = Vec::with_capacity(n);
            for i in 0..n {
                let class = if scene.entities[i].class.is_human() {
                    "human"
                } else {
                    "object"
                };
                h[i] = gru_step(&mut tape, params, &format!("baseline.{class}.gru"), x[i], h[i])?;
                preds.push(affine(
                    &mut tape,
                    params,
                    &format!("baseline.{class}.predict"),
                    h[i],
                )?);
            }
            if l_pred > 0 && t >= t_obs && t < total {
                predictions.push(preds.clone());
                prev = Some(preds);
            }
        }
        let values = predictions
            .iter()
            .map(|row| row.iter().map(|&n| tape.value(n).data().to_vec()).collect())
            .collect();
        Ok((tape, predictions, values))
    }

    fn scene_loss(
        &self,
        tape: &mut Tape,
        predictions: &[Vec<NodeId>],
        scene: &SceneSequence,
        t_obs: usize,
    ) -> Result<NodeId> {
        let mut terms = Vec::new();
        for (l, row) in predictions.iter().enumerate() {
            let truth = &scene.frames[t_obs + l];
            for (i, &pred) in row.iter().enumerate() {
                let c = tape.constant(Tensor::vector(truth[i].clone()))?;
                let d = tape.sub(pred, c)?;
                let sq = tape.square(d)?;
                let ssq = tape.sum(sq)?;
                terms.push(tape.sqrt(ssq)?);
            }
        }
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = tape.add(acc, t)?;
        }
        tape.scale(acc, 1.0 / terms.len() as f64)
    }

    /// Same two-stage schedule as the main model, prediction loss only.
    pub fn train(
        &self,
        scenes: &[SceneSequence],
        tc: &TrainConfig,
    ) -> Result<(ParamSet, Vec<EpochLog>)> {
        tc.validate()?;
        if scenes.is_empty() {
            return Err(Error::Data("training dataset is empty".to_string()));
        }
        let mut params = self.init_params(tc.seed)?;
        let mut adam = AdamState::new(&params);
        let opt = tc.optimizer();
        let mut rng = ChaCha12Rng::seed_from_u64(tc.seed.wrapping_add(2));
        let mut log = Vec::new();
        let mut epoch = 0usize;
        for (stage, mode, epochs) in [
            (1, RolloutMode::TeacherForced, tc.epochs_stage1),
            (2, RolloutMode::Autoregressive, tc.epochs_stage2),
        ] {
            for _ in 0..epochs {
                epoch += 1;
                let mut order: Vec<usize> = (0..scenes.len()).collect();
                use rand::seq::SliceRandom;
                order.shuffle(&mut rng);
                let mut sum = 0.0;
                let mut count = 0usize;
                for batch in order.chunks(tc.batch_size) {
                    let results: Vec<(std::collections::BTreeMap<String, Tensor>, f64)> = batch
                        .par_iter()
                        .map(|&i| {
                            let scene = &scenes[i];
                            let (mut tape, preds, _) = self.rollout(
                                &params,
                                scene,
                                scene.t_obs,
                                scene.l_pred,
                                mode,
                            )?;
                            let loss = self.scene_loss(&mut tape, &preds, scene, scene.t_obs)?;
                            let v = tape.scalar_value(loss)?;
                            let g = tape.backward(loss, &Tensor::scalar(1.0), &params)?;
                            Ok((g, v))
                        })
                        .collect::<Result<_>>()?;
                    let mut grads: std::collections::BTreeMap<String, Tensor> = params
                        .iter()
                        .map(|(n, t)| (n.clone(), Tensor::zeros_like(t)))
                        .collect();
                    for (g, v) in &results {
                        for (name, tensor) in g {
                            grads.get_mut(name).unwrap().add_assign(tensor)?;
                        }
                        sum += v;
                        count += 1;
                    }
                    let k = 1.0 / batch.len() as f64;
                    for g in grads.values_mut() {
                        for v in g.data_mut() {
                            *v *= k;
                        }
                    }
                    clip_gradients(&mut grads, opt.clip_norm);
                    adam_step(&mut params, &grads, &mut adam, &opt, &[])?;
                }
                let mean = sum / count.max(1) as f64;
                log.push(EpochLog {
                    epoch,
                    stage,
                    split: "train",
                    values: LossValues {
                        total: mean,
                        human: mean,
                        object: mean,
                        switch: 0.0,
                    },
                });
            }
        }
        Ok((params, log))
    }
}

/// Dispatch a baseline predictor over one scene.
pub fn baseline_predict(
    kind: BaselineKind,
    scene: &SceneSequence,
    t_obs: usize,
    l_pred: usize,
    gru: Option<(&GruBaseline, &ParamSet)>,
) -> Result<ScenePredictions> {
    if scene.frames.len() < t_obs || t_obs < 2 {
        return Err(Error::Data(format!(
            "baseline needs t_obs >= 2 within the scene, got t_obs={t_obs} over {} frames",
            scene.frames.len()
        )));
    }
    match kind {
        BaselineKind::ZeroVelocity => Ok(zero_velocity(scene, t_obs, l_pred)),
        BaselineKind::RunningAvg2 => Ok(running_avg2(scene, t_obs, l_pred)),
        BaselineKind::Gru => {
            let (model, params) = gru.ok_or_else(|| {
                Error::Config("gru baseline requires a trained checkpoint".to_string())
            })?;
            let (_, _, values) =
                model.rollout(params, scene, t_obs, l_pred, RolloutMode::Autoregressive)?;
            Ok(values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Entity, EntityClass};

    fn moving_scene(frames: usize) -> SceneSequence {
        SceneSequence {
            coord_dim: 2,
            entities: vec![Entity {
                id: 0,
                class: EntityClass::Human { keypoints: 1 },
                dim: 2,
            }],
            frames: (0..frames).map(|t| vec![vec![t as f64, 2.0 * t as f64]]).collect(),
            t_obs: 4,
            l_pred: 3,
            windows: vec![],
        }
    }

    #[test]
    fn zero_velocity_on_static_scene_is_exact() {
        let mut scene = moving_scene(8);
        for f in &mut scene.frames {
            f[0] = vec![1.0, 1.0];
        }
        let p = baseline_predict(BaselineKind::ZeroVelocity, &scene, 4, 3, None).unwrap();
        for row in &p {
            assert_eq!(row[0], vec![1.0, 1.0]);
        }
    }

    #[test]
    fn running_avg2_midpoint() {
        // frames T-1=(0,0), T=(2,2) -> prediction (1,1) for all steps
        let mut scene = moving_scene(8);
        scene.frames[2][0] = vec![0.0, 0.0];
        scene.frames[3][0] = vec![2.0, 2.0];
        let p = baseline_predict(BaselineKind::RunningAvg2, &scene, 4, 3, None).unwrap();
        for row in &p {
            assert_eq!(row[0], vec![1.0, 1.0]);
        }
    }

    #[test]
    fn zero_velocity_error_grows_linearly_on_constant_velocity() {
        let scene = moving_scene(10);
        let p = baseline_predict(BaselineKind::ZeroVelocity, &scene, 4, 3, None).unwrap();
        // truth at step l is frame 4+l = (4+l, 8+2l); prediction is frame 3
        let speed = (1.0f64 + 4.0).sqrt(); // per-frame displacement norm
        for (l, row) in p.iter().enumerate() {
            let truth = &scene.frames[4 + l][0];
            let d = crate::scene::euclidean(&row[0], truth);
            let expect = speed * (l + 1) as f64;
            assert!((d - expect).abs() < 1e-12, "l={l}: {d} vs {expect}");
        }
    }

    #[test]
    fn gru_without_checkpoint_is_an_error() {
        let scene = moving_scene(8);
        assert!(baseline_predict(BaselineKind::Gru, &scene, 4, 3, None).is_err());
    }

    #[test]
    fn gru_rollout_shapes_and_determinism() {
        let dims = EntityDims {
            coord_dim: 2,
            keypoints: 1,
            human_dim: 2,
            object_dim: 8,
        };
        let model = GruBaseline::new(6, dims);
        let params = model.init_params(3).unwrap();
        let scene = moving_scene(8);
        let (_, _, a) = model
            .rollout(&params, &scene, 4, 3, RolloutMode::Autoregressive)
            .unwrap();
        let (_, _, b) = model
            .rollout(&params, &scene, 4, 3, RolloutMode::Autoregressive)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0][0].len(), 2);
    }
}
