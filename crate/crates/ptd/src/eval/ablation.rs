//! Ablation runner: train and evaluate component-disabled configurations
//! with shared seeds, one table row per configuration.

use super::metrics::{euclid_errors, interaction_segment_error};
use crate::error::Result;
use crate::model::{rollout, EntityDims, PtdConfig, PtdModel, RolloutMode};
use crate::scene::SceneSequence;
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub avg_error: f64,
    pub human_error: f64,
    pub object_error: f64,
    /// Error restricted to ground-truth interaction frames.
    pub interaction_error: Option<f64>,
    /// Fraction of (human, step) pairs with the switch on.
    pub switch_on_fraction: f64,
}

/// Train and evaluate the full model plus one row per flag set. The flag
/// sets are applied on top of `base`; invalid combinations are rejected at
/// configuration time.
pub fn run_ablation(
    base: &PtdConfig,
    dims: EntityDims,
    flag_sets: &[Vec<String>],
    train_scenes: &[SceneSequence],
    test_scenes: &[SceneSequence],
    tc: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let mut configs: Vec<(String, PtdConfig)> = vec![("full".to_string(), base.clone())];
    for flags in flag_sets {
        let mut cfg = base.clone();
        for f in flags {
            cfg.ablation.set(f)?;
        }
        cfg.validate()?;
        configs.push((flags.join("+"), cfg));
    }

    let mut rows = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        let model = PtdModel::new(cfg, dims)?;
        let outcome = train(&model, train_scenes, tc)?;
        let refs: Vec<&SceneSequence> = test_scenes.iter().collect();
        let mut preds = Vec::with_capacity(refs.len());
        let mut on = 0usize;
        let mut total = 0usize;
        for scene in &refs {
            let r = rollout(
                &model,
                &outcome.params,
                scene,
                scene.t_obs,
                scene.l_pred,
                RolloutMode::Autoregressive,
            )?;
            on += r.switch_trace.iter().filter(|row| row.on).count();
            total += r.switch_trace.len();
            preds.push(r.predicted_values);
        }
        let t_obs = refs[0].t_obs;
        let l_pred = refs[0].l_pred;
        let report = euclid_errors(&refs, &preds, t_obs, l_pred)?;
        rows.push(AblationRow {
            name,
            avg_error: report.average,
            human_error: report.human_average,
            object_error: report.object_average,
            interaction_error: interaction_segment_error(&refs, &preds, t_obs, l_pred),
            switch_on_fraction: on as f64 / total.max(1) as f64,
        });
    }
    Ok(rows)
}

/// Ablation CSV: one row per configuration.
pub fn ablation_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "config,avg_error,human_error,object_error,interaction_error,switch_on_fraction\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name,
            r.avg_error,
            r.human_error,
            r.object_error,
            r.interaction_error.map(|v| v.to_string()).unwrap_or_default(),
            r.switch_on_fraction
        ));
    }
    s
}

/// Plain-text table aligned for terminal output.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<28} {:>10} {:>10} {:>10} {:>12} {:>9}\n",
        "config", "avg", "human", "object", "interaction", "switch%"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<28} {:>10.4} {:>10.4} {:>10.4} {:>12} {:>8.1}%\n",
            r.name,
            r.avg_error,
            r.human_error,
            r.object_error,
            r.interaction_error
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".to_string()),
            100.0 * r.switch_on_fraction
        ));
    }
    s
}
