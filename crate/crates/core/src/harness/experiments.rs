//! Bite-transfer policy comparison and arm-model comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::transfer::{evaluate_policies, mean_sd, ArmModel, Evaluation, Policy, TransferError, TransferScenario};

fn default_scenario() -> String {
    "natalia_tv_feeding".into()
}

fn default_poses() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferExperimentConfig {
    /// Scenario directory name under the data root.
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default = "default_poses")]
    pub n_user_poses: usize,
    /// Overrides the seeds of the scenario's planner configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

impl Default for TransferExperimentConfig {
    fn default() -> Self {
        Self { scenario: default_scenario(), n_user_poses: default_poses(), seeds: None }
    }
}

/// One named pass/fail check of an experiment's expected pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternCheck {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub evaluation: Evaluation,
    pub checks: Vec<PatternCheck>,
}

impl TransferReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("policy\tsuccess_rate\tmean_rel_angle_rad\n");
        for p in Policy::ALL {
            let success = self.evaluation.seed_mean(p, |m| m.success_rate);
            let angle = self.evaluation.seed_mean(p, |m| m.mean_rel_angle_rad);
            let _ = writeln!(out, "{}\t{success:.4}\t{angle:.4}", p.as_str());
        }
        for c in &self.checks {
            let _ = writeln!(out, "[{}] {}", if c.passed { "pass" } else { "FAIL" }, c.name);
        }
        out
    }
}

/// Evaluates all three policies and checks the expected pattern: the
/// user-functionality-informed policy always succeeds and asks for the least neck movement.
pub fn run_bite_transfer_experiment(
    scenario: &TransferScenario,
    n_user_poses: usize,
    seeds: &[u64],
) -> Result<TransferReport, TransferError> {
    let evaluation = evaluate_policies(scenario, &Policy::ALL, n_user_poses, seeds)?;
    let success = |p| evaluation.seed_mean(p, |m| m.success_rate);
    let angle = |p| evaluation.seed_mean(p, |m| m.mean_rel_angle_rad);
    let check = |name: &str, passed: bool| PatternCheck { name: name.into(), passed };
    let checks = vec![
        check("MufInformed success rate = 1.00", success(Policy::MufInformed) == 1.0),
        check("Fixed success rate >= 0.9", success(Policy::Fixed) >= 0.9),
        check("Baseline success rate <= MufInformed", success(Policy::Baseline) <= success(Policy::MufInformed)),
        check("MufInformed mean angle < Fixed", angle(Policy::MufInformed) < angle(Policy::Fixed)),
        check("MufInformed mean angle <= Baseline", angle(Policy::MufInformed) <= angle(Policy::Baseline)),
    ];
    Ok(TransferReport { evaluation, checks })
}

fn default_arms() -> Vec<String> {
    vec!["gen3_6dof".into(), "gen3_7dof".into()]
}

fn default_robot_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotComparisonConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default = "default_arms")]
    pub arms: Vec<String>,
    #[serde(default = "default_poses")]
    pub n_user_poses: usize,
    #[serde(default = "default_robot_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for RobotComparisonConfig {
    fn default() -> Self {
        Self {
            scenario: default_scenario(),
            arms: default_arms(),
            n_user_poses: default_poses(),
            seeds: default_robot_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotRow {
    pub arm: String,
    pub success_rate: f64,
    /// Mean and sample standard deviation over seeds of the per-seed mean
    /// relative angle.
    pub rel_angle_mean_rad: f64,
    pub rel_angle_sd_rad: f64,
}

/// Published values for the shipped arms, printed for comparison only.
pub const ROBOT_REFERENCE: &[(&str, &str, f64, f64, f64)] =
    &[("gen3_6dof", "Kinova Gen3 6-DoF", 1.0, 0.3996, 0.0018), ("gen3_7dof", "Kinova Gen3 7-DoF", 1.0, 0.3496, 0.0008)];

pub const ROBOT_TABLE_HEADER: &str = "Robot Arm,Success Rate,Relative Angle (in rad.)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotComparison {
    pub rows: Vec<RobotRow>,
    pub n_seeds: usize,
}

impl RobotComparison {
    /// Table with one row per arm; angles as `mean∓sd`.
    pub fn to_table(&self) -> String {
        let mut out = format!("{ROBOT_TABLE_HEADER}\n");
        for r in &self.rows {
            let _ =
                writeln!(out, "{},{:.1},{:.4}∓{:.4}", r.arm, r.success_rate, r.rel_angle_mean_rad, r.rel_angle_sd_rad);
        }
        out
    }

    /// Every arm succeeds on every sampled pose.
    pub fn checks(&self) -> Vec<PatternCheck> {
        self.rows
            .iter()
            .map(|r| PatternCheck { name: format!("{} success rate = 1.0", r.arm), passed: r.success_rate == 1.0 })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    /// Reference values for the arms in the table; not compared against.
    pub fn reference_notes(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            if let Some((_, label, s, m, sd)) = ROBOT_REFERENCE.iter().find(|x| x.0 == r.arm) {
                let _ =
                    writeln!(out, "# reference {label}: success {s:.1}, relative angle {m:.4}∓{sd:.4} (not asserted)");
            }
        }
        out
    }
}

/// Runs the user-functionality-informed policy on the same scene with each arm.
pub fn run_robot_model_comparison(
    scenario: &TransferScenario,
    arms: &[ArmModel],
    n_user_poses: usize,
    seeds: &[u64],
) -> Result<RobotComparison, TransferError> {
    let rows = arms
        .iter()
        .map(|arm| {
            let scene = scenario.with_arm(arm.clone());
            let eval = evaluate_policies(&scene, &[Policy::MufInformed], n_user_poses, seeds)?;
            let angles: Vec<f64> = eval.metrics.iter().map(|m| m.mean_rel_angle_rad).collect();
            let (mean, sd) = mean_sd(&angles);
            Ok(RobotRow {
                arm: arm.name().to_owned(),
                success_rate: eval.seed_mean(Policy::MufInformed, |m| m.success_rate),
                rel_angle_mean_rad: mean,
                rel_angle_sd_rad: sd,
            })
        })
        .collect::<Result<_, TransferError>>()?;
    Ok(RobotComparison { rows, n_seeds: seeds.len() })
}
