//! Euclidean prediction-error reports.
//!
//! Per entity and step, the error is the Euclidean distance between the
//! predicted and true feature vectors. Reports aggregate per step (mean over
//! entities, then scenes), per entity class, and as the sequence average
//! (mean over steps).

use crate::error::{Error, Result};
use crate::scene::{euclidean, SceneSequence};

/// Predicted frames for one scene: `[l][entity][dim]`.
pub type ScenePredictions = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub t_obs: usize,
    pub l_pred: usize,
    pub scenes: usize,
    /// Mean error per prediction step, all entities.
    pub per_step: Vec<f64>,
    pub per_step_human: Vec<f64>,
    pub per_step_object: Vec<f64>,
    /// Mean of `per_step` (equals the scene-count-weighted mean of
    /// per-scene averages).
    pub average: f64,
    pub human_average: f64,
    pub object_average: f64,
    /// Per-scene sequence averages, scene order preserved.
    pub scene_averages: Vec<f64>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Compare predictions against ground-truth frames `t_obs..t_obs+l_pred`.
pub fn euclid_errors(
    scenes: &[&SceneSequence],
    predictions: &[ScenePredictions],
    t_obs: usize,
    l_pred: usize,
) -> Result<ErrorReport> {
    if scenes.len() != predictions.len() {
        return Err(Error::Data(format!(
            "{} scenes but {} prediction sets",
            scenes.len(),
            predictions.len()
        )));
    }
    if scenes.is_empty() || l_pred == 0 {
        return Err(Error::Data("nothing to evaluate".to_string()));
    }
    let mut per_step = vec![Vec::new(); l_pred];
    let mut per_step_h = vec![Vec::new(); l_pred];
    let mut per_step_o = vec![Vec::new(); l_pred];
    let mut scene_averages = Vec::with_capacity(scenes.len());

    for (scene, preds) in scenes.iter().zip(predictions) {
        if scene.frames.len() < t_obs + l_pred {
            return Err(Error::Data(format!(
                "scene has {} frames, evaluation needs {}",
                scene.frames.len(),
                t_obs + l_pred
            )));
        }
        if preds.len() != l_pred {
            return Err(Error::Data(format!(
                "predictions cover {} steps, expected {l_pred}",
                preds.len()
            )));
        }
        let mut scene_steps = Vec::with_capacity(l_pred);
        for (l, pred_frame) in preds.iter().enumerate() {
            let truth = &scene.frames[t_obs + l];
            if pred_frame.len() != scene.entities.len() {
                return Err(Error::Data("prediction/entity count mismatch".to_string()));
            }
            let mut all = Vec::with_capacity(scene.entities.len());
            for (i, entity) in scene.entities.iter().enumerate() {
                if pred_frame[i].len() != truth[i].len() {
                    return Err(Error::shape(
                        "euclid_errors",
                        format!("{} features", truth[i].len()),
                        format!("{} features", pred_frame[i].len()),
                    ));
                }
                let d = euclidean(&pred_frame[i], &truth[i]);
                all.push(d);
                if entity.class.is_human() {
                    per_step_h[l].push(d);
                } else {
                    per_step_o[l].push(d);
                }
            }
            let step_mean = mean(&all);
            per_step[l].push(step_mean);
            scene_steps.push(step_mean);
        }
        scene_averages.push(mean(&scene_steps));
    }

    let per_step: Vec<f64> = per_step.iter().map(|v| mean(v)).collect();
    let per_step_human: Vec<f64> = per_step_h.iter().map(|v| mean(v)).collect();
    let per_step_object: Vec<f64> = per_step_o.iter().map(|v| mean(v)).collect();
    Ok(ErrorReport {
        t_obs,
        l_pred,
        scenes: scenes.len(),
        average: mean(&per_step),
        human_average: mean(&per_step_human),
        object_average: if per_step_o[0].is_empty() {
            0.0
        } else {
            mean(&per_step_object)
        },
        per_step,
        per_step_human,
        per_step_object,
        scene_averages,
    })
}

/// Error restricted to predicted frames inside ground-truth interaction
/// windows, over the window's human and object only. Returns `None` when no
/// predicted frame overlaps a window.
pub fn interaction_segment_error(
    scenes: &[&SceneSequence],
    predictions: &[ScenePredictions],
    t_obs: usize,
    l_pred: usize,
) -> Option<f64> {
    let mut terms = Vec::new();
    for (scene, preds) in scenes.iter().zip(predictions) {
        for w in &scene.windows {
            let (hi, oi) = match (scene.entity_index(w.human), scene.entity_index(w.object)) {
                (Some(h), Some(o)) => (h, o),
                _ => continue,
            };
            for l in 0..l_pred {
                let frame = t_obs + l;
                if frame >= w.t_start && frame <= w.t_end {
                    let truth = &scene.frames[frame];
                    terms.push(euclidean(&preds[l][hi], &truth[hi]));
                    terms.push(euclidean(&preds[l][oi], &truth[oi]));
                }
            }
        }
    }
    if terms.is_empty() {
        None
    } else {
        Some(mean(&terms))
    }
}

/// Mean and sample standard deviation over independent runs.
pub fn run_summary(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// Report CSV: one row per step plus an `average` row.
pub fn report_to_csv(report: &ErrorReport) -> String {
    let mut s = String::from("step,error_all,error_human,error_object\n");
    for l in 0..report.l_pred {
        s.push_str(&format!(
            "{},{},{},{}\n",
            l + 1,
            report.per_step[l],
            report.per_step_human[l],
            report.per_step_object[l]
        ));
    }
    s.push_str(&format!(
        "average,{},{},{}\n",
        report.average, report.human_average, report.object_average
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Entity, EntityClass};

    fn static_scene(frames: usize) -> SceneSequence {
        SceneSequence {
            coord_dim: 2,
            entities: vec![Entity {
                id: 0,
                class: EntityClass::Human { keypoints: 1 },
                dim: 2,
            }],
            frames: (0..frames).map(|_| vec![vec![1.0, 2.0]]).collect(),
            t_obs: 2,
            l_pred: 2,
            windows: vec![],
        }
    }

    #[test]
    fn perfect_prediction_all_zeros() {
        let scene = static_scene(4);
        let preds: Vec<ScenePredictions> =
            vec![vec![vec![vec![1.0, 2.0]], vec![vec![1.0, 2.0]]]];
        let r = euclid_errors(&[&scene], &preds, 2, 2).unwrap();
        assert_eq!(r.per_step, vec![0.0, 0.0]);
        assert_eq!(r.average, 0.0);
    }

    #[test]
    fn constant_offset_three_four_five() {
        let scene = static_scene(4);
        let preds = vec![vec![
            vec![vec![4.0, 6.0]], // offset (3,4) -> error 5
            vec![vec![4.0, 6.0]],
        ]];
        let r = euclid_errors(&[&scene], &preds, 2, 2).unwrap();
        assert_eq!(r.per_step, vec![5.0, 5.0]);
        assert_eq!(r.average, 5.0);
        assert_eq!(r.human_average, 5.0);
    }

    #[test]
    fn symmetric_in_arguments() {
        // swap roles: prediction as truth and vice versa gives the same report
        let scene_a = static_scene(4);
        let mut scene_b = static_scene(4);
        scene_b.frames[2] = vec![vec![2.0, 3.0]];
        scene_b.frames[3] = vec![vec![2.0, 3.0]];
        let preds_b: Vec<ScenePredictions> =
            vec![vec![scene_b.frames[2].clone(), scene_b.frames[3].clone()]];
        let preds_a: Vec<ScenePredictions> =
            vec![vec![scene_a.frames[2].clone(), scene_a.frames[3].clone()]];
        let ab = euclid_errors(&[&scene_a], &preds_b, 2, 2).unwrap();
        let ba = euclid_errors(&[&scene_b], &preds_a, 2, 2).unwrap();
        assert_eq!(ab.per_step, ba.per_step);
    }

    #[test]
    fn average_is_mean_of_scene_averages() {
        let s1 = static_scene(4);
        let mut s2 = static_scene(4);
        s2.frames[2] = vec![vec![0.0, 2.0]];
        s2.frames[3] = vec![vec![0.0, 2.0]];
        let preds = vec![
            vec![vec![vec![1.0, 2.0]], vec![vec![1.0, 2.0]]], // errors 0
            vec![vec![vec![1.0, 2.0]], vec![vec![1.0, 2.0]]], // errors 1
        ];
        let r = euclid_errors(&[&s1, &s2], &preds, 2, 2).unwrap();
        assert_eq!(r.scene_averages, vec![0.0, 1.0]);
        let weighted = r.scene_averages.iter().sum::<f64>() / 2.0;
        assert!((r.average - weighted).abs() < 1e-15);
    }

    #[test]
    fn brute_force_recomputation_matches() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let mut scene = static_scene(5);
        for f in &mut scene.frames {
            f[0] = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        }
        scene.l_pred = 3;
        let preds: Vec<ScenePredictions> = vec![(0..3)
            .map(|_| vec![(0..2).map(|_| rng.random_range(-3.0..3.0)).collect()])
            .collect()];
        let r = euclid_errors(&[&scene], &preds, 2, 3).unwrap();
        for l in 0..3 {
            let p = &preds[0][l][0];
            let t = &scene.frames[2 + l][0];
            let d = ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2)).sqrt();
            assert!((r.per_step[l] - d).abs() < 1e-15);
        }
    }

    #[test]
    fn run_summary_mean_and_std() {
        let (m, s) = run_summary(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
        let (m1, s1) = run_summary(&[4.0]);
        assert_eq!((m1, s1), (4.0, 0.0));
    }
}
