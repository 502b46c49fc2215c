//! Experiment harness: transfer utility, leave-one-out step selection, the
//! interaction/transferability sweeps and the proposition trend suite.

mod experiments;
mod export;
mod stats;
mod toy;
mod transfer;

pub use experiments::{
    attack_all, correlation_sweep, grid_interaction, interaction_only_curve, lambda_sweep,
    magnitude_match, multi_single_leading_term, neighbor_heatmap, pilot_tau, proposition_suite,
    Comparison, CorrelationPoint, CorrelationSweep, HeatCell, InteractionOnlyCurve,
    InteractionOnlyTarget, LambdaRow, LambdaSweep, PropositionConfig, PropositionReport,
    TargetCorrelation, DEFAULT_C_VALUES, DEFAULT_P_VALUES,
};
pub use export::{correlation_csv, curve_csv, heatmap_csv, lambda_csv};
pub use stats::{
    bootstrap_mean_ci, mean, median, pearson, verdict, Correlation, Direction, Histogram, Interval,
    Verdict,
};
pub use toy::{build_zoo, ModelSpec, NamedModel, ToySetup, Zoo};
pub use transfer::{
    evaluate_transfer, loo_select, loo_select_matrix, loo_transferability, success_matrix,
    transfer_utility, Tags, TransferRecord, TransferReport,
};
