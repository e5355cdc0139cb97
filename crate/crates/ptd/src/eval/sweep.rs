//! Generalization sweep: evaluate trained predictors at observation and
//! prediction lengths different from the training protocol, without
//! retraining.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_predict, BaselineKind, GruBaseline};
use super::metrics::{euclid_errors, ScenePredictions};
use crate::error::{Error, Result};
use crate::model::{rollout, PtdModel, RolloutMode};
use crate::params::ParamSet;
use crate::scene::SceneSequence;

/// A model under evaluation: the duality network or one of the baselines.
pub enum Predictor<'a> {
    Ptd {
        model: &'a PtdModel,
        params: &'a ParamSet,
    },
    Baseline {
        kind: BaselineKind,
        gru: Option<(&'a GruBaseline, &'a ParamSet)>,
    },
}

impl Predictor<'_> {
    pub fn predict(
        &self,
        scene: &SceneSequence,
        t_obs: usize,
        l_pred: usize,
    ) -> Result<ScenePredictions> {
        match self {
            Predictor::Ptd { model, params } => Ok(rollout(
                model,
                params,
                scene,
                t_obs,
                l_pred,
                RolloutMode::Autoregressive,
            )?
            .predicted_values),
            Predictor::Baseline { kind, gru } => {
                baseline_predict(*kind, scene, t_obs, l_pred, *gru)
            }
        }
    }

    pub fn predict_dataset(
        &self,
        scenes: &[&SceneSequence],
        t_obs: usize,
        l_pred: usize,
    ) -> Result<Vec<ScenePredictions>> {
        scenes
            .par_iter()
            .map(|s| self.predict(s, t_obs, l_pred))
            .collect()
    }
}

/// The three protocol cases: vary the observation at fixed horizon, vary the
/// horizon at the training observation, and vary the horizon from a long
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub vary_obs_t: Vec<usize>,
    pub vary_obs_l: usize,
    pub vary_pred_t: usize,
    pub vary_pred_l: Vec<usize>,
    pub long_obs_t: usize,
    pub long_obs_l: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            vary_obs_t: vec![5, 10, 15, 20, 25, 30],
            vary_obs_l: 20,
            vary_pred_t: 10,
            vary_pred_l: vec![5, 10, 20, 30, 40],
            long_obs_t: 30,
            long_obs_l: vec![5, 10, 20, 30],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCase {
    pub case: &'static str,
    pub t_obs: usize,
    pub l_pred: usize,
}

impl SweepSpec {
    pub fn cases(&self) -> Vec<SweepCase> {
        let mut out = Vec::new();
        for &t in &self.vary_obs_t {
            out.push(SweepCase { case: "vary-obs", t_obs: t, l_pred: self.vary_obs_l });
        }
        for &l in &self.vary_pred_l {
            out.push(SweepCase { case: "vary-pred", t_obs: self.vary_pred_t, l_pred: l });
        }
        for &l in &self.long_obs_l {
            out.push(SweepCase { case: "long-obs", t_obs: self.long_obs_t, l_pred: l });
        }
        out
    }

    pub fn max_frames(&self) -> usize {
        self.cases().iter().map(|c| c.t_obs + c.l_pred).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub case: &'static str,
    pub t_obs: usize,
    pub l_pred: usize,
    pub model: String,
    pub avg_error: f64,
}

/// Evaluate every model at every case. Scenes must be long enough for the
/// largest `t_obs + l_pred` in the spec.
pub fn generalization_sweep(
    models: &[(String, Predictor)],
    scenes: &[&SceneSequence],
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    let need = spec.max_frames();
    for s in scenes {
        if s.frames.len() < need {
            return Err(Error::Data(format!(
                "sweep needs scenes with >= {need} frames, found one with {}",
                s.frames.len()
            )));
        }
    }
    let mut rows = Vec::new();
    for case in spec.cases() {
        for (name, predictor) in models {
            let preds = predictor.predict_dataset(scenes, case.t_obs, case.l_pred)?;
            let report = euclid_errors(scenes, &preds, case.t_obs, case.l_pred)?;
            rows.push(SweepRow {
                case: case.case,
                t_obs: case.t_obs,
                l_pred: case.l_pred,
                model: name.clone(),
                avg_error: report.average,
            });
        }
    }
    Ok(rows)
}

/// Sweep CSV: `case,t_obs,l_pred,model,avg_error`.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("case,t_obs,l_pred,model,avg_error\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.case, r.t_obs, r.l_pred, r.model, r.avg_error
        ));
    }
    s
}
