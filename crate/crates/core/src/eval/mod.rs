//! Metrics (recall@K over ranked pairs, scatter ratio, accuracy), the loss
//! gradient check, and the experiment and sweep drivers behind the
//! command-line front end.

mod gradcheck;
mod metrics;
mod run;

pub use gradcheck::{mass_loss_gradcheck, random_instance, GradCheckRow, CHECK_GAMMAS, CHECK_STEP};
pub use metrics::{
    accuracy, dedupe_pairs, rank_pairs, rank_pairs_raw, recall_at_k, recall_of_scores,
    scatter_ratio, RecallQuery, ScoredPair,
};
pub use run::{
    arm_metric, run_config, run_experiment, run_sweep, RankedArm, RunOutcome, SweepAxis,
    SweepReport, SweepSummary, SWEEP_CSV, SWEEP_JSON,
};
