//! Evaluation: the Euclidean error metric, baseline predictors, the
//! generalization sweep, and the ablation runner.

mod ablation;
mod baselines;
mod metrics;
mod sweep;

pub use ablation::{ablation_table, ablation_to_csv, run_ablation, AblationRow};
pub use baselines::{
    baseline_predict, running_avg2, zero_velocity, BaselineKind, GruBaseline,
};
pub use metrics::{
    euclid_errors, interaction_segment_error, report_to_csv, run_summary, ErrorReport,
    ScenePredictions,
};
pub use sweep::{
    generalization_sweep, sweep_to_csv, Predictor, SweepCase, SweepRow, SweepSpec,
};
