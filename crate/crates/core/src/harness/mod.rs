//! Scenario bundles, the feeding demo and the experiment drivers.

mod demo;
mod experiments;
mod scenario;
mod sequencing;

pub use demo::{
    run_feeding_demo, BiteRecord, DemoError, DemoReport, OnlineLearner, CONSENT_SIGNAL_KEY, DEMO_HANDLERS,
    INTENT_SIGNAL_KEY, TRANSFER_SIDE_ANGLE_KEY, TRANSFER_SIDE_KEY,
};
pub use experiments::{
    run_bite_transfer_experiment, run_robot_model_comparison, PatternCheck, RobotComparison, RobotComparisonConfig,
    RobotRow, TransferExperimentConfig, TransferReport, ROBOT_REFERENCE, ROBOT_TABLE_HEADER,
};
pub use scenario::{
    load_scenario, parse_scenario_document, FeedingSetup, Scenario, ScenarioError, ScenarioErrorKind, BLOCKS_FILE,
    HUMAN_WORKFLOW_FILE, MEAL_FILE, PLANNER_FILE, ROBOT_WORKFLOW_FILE,
};
pub use sequencing::{
    default_meal, generator_loglik, run_bite_sequencing_experiment, run_user, synthetic_user, SequencingConfig,
    SequencingReport, SyntheticUser, UserResult, SEQUENCING_HEADER,
};
