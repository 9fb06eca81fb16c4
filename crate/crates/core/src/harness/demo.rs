//! End-to-end feeding demo: the robot workflow driven by stub skills, the
//! bite-transfer planner and the online bite-sequencing model, against a
//! simulated user.
//!
//! The robot serves the item the model predicts. At every bite the simulated
//! user also draws the item they would have wanted from their own generator;
//! prediction accuracy is the fraction of bites where the two agree.

use std::cell::RefCell;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::blocks::{AttributeValue, HeadPoseManifold};
use crate::hmm::{online_update, predict_next, simulate_sequences, train, DiscreteHmm, HmmError};
use crate::transfer::{mix_seed, policy_fixed, policy_muf_informed, HeadPose, Policy, TransferError, TransferScenario};
use crate::workflow::{
    run_with_environment, Blackboard, EngineError, Environment, Event, HandlerOutcome, HandlerRegistry, RunStatus,
    TraceEvent, WorkflowNode,
};

use super::scenario::{FeedingSetup, Scenario};

/// Every handler the demo registry provides.
pub const DEMO_HANDLERS: &[&str] = &[
    "move_above_plate",
    "detect_food_items",
    "predict_next_bite",
    "skewer_item",
    "move_to_staging",
    "estimate_head_pose",
    "detect_mouth_open",
    "detect_turn_toward_robot",
    "plan_transfer_muf",
    "plan_transfer_inside_mouth",
    "plan_transfer_fixed_side",
    "move_in_front_of_mouth",
    "move_to_mouth",
    "detect_bite_taken",
    "retract",
];

/// M_UB key naming how the user signals they want a bite.
pub const INTENT_SIGNAL_KEY: &str = "Bite Intent Signal";
/// M_UB key naming how the user consents to an inside-mouth transfer.
pub const CONSENT_SIGNAL_KEY: &str = "Inside Mouth Consent Signal";
pub const TRANSFER_SIDE_KEY: &str = "Preferred Transfer Side";
pub const TRANSFER_SIDE_ANGLE_KEY: &str = "Transfer Side Rotation";

const MAX_STEPS: usize = 5000;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("scenario `{0}` has no meal setup")]
    NotFeeding(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("workflow failed at `{node_id}`: {reason}")]
    WorkflowFailed { node_id: String, reason: String },
    #[error("workflow did not finish within {0} steps")]
    BudgetExhausted(usize),
    #[error("invalid user behavior model: {0}")]
    Behavior(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiteRecord {
    pub bite: usize,
    pub served: String,
    pub wanted: String,
    pub h_user: HeadPose,
    pub policy: Policy,
    pub success: bool,
    pub chosen_pose: Option<HeadPose>,
    pub relative_angle: Option<f64>,
    pub standoff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub scenario_id: String,
    pub seed: u64,
    pub status: RunStatus,
    pub steps: usize,
    pub trace: Vec<TraceEvent>,
    pub bites: Vec<BiteRecord>,
    pub prediction_accuracy: f64,
}

impl DemoReport {
    /// One `step<TAB>node<TAB>event` line per trace event.
    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}", self.scenario_id);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "status: {:?} after {} steps", self.status, self.steps);
        let _ = writeln!(out, "bites: {}", self.bites.len());
        let _ = writeln!(out, "bite\tserved\twanted\tpolicy\tsuccess\trel_angle_rad\tstandoff_m");
        for b in &self.bites {
            let angle = b.relative_angle.map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
                b.bite,
                b.served,
                b.wanted,
                b.policy.as_str(),
                b.success,
                angle,
                b.standoff
            );
        }
        let _ = writeln!(out, "prediction accuracy (HO): {:.4}", self.prediction_accuracy);
        out
    }
}

/// A reaction of the simulated user: once `trigger` is true and `response`
/// is not, `response` becomes true after a seeded delay of 1 to 3 steps.
#[derive(Debug, Clone)]
struct Reaction {
    trigger: &'static str,
    response: &'static str,
    countdown: Option<u32>,
}

struct SimulatedUser {
    reactions: Vec<Reaction>,
    rng: ChaCha8Rng,
}

impl Environment for SimulatedUser {
    fn before_step(&mut self, _step: usize, bb: &mut Blackboard) {
        for r in &mut self.reactions {
            if !bb.flag(r.trigger) || bb.flag(r.response) {
                r.countdown = None;
                continue;
            }
            let left = r.countdown.get_or_insert_with(|| self.rng.random_range(1..=3));
            *left -= 1;
            if *left == 0 {
                bb.set(r.response, true);
                r.countdown = None;
            }
        }
    }
}

fn signal_response(signal: &str) -> Result<&'static str, DemoError> {
    match signal {
        "open mouth" => Ok("user.mouth_open"),
        "turn toward robot" => Ok("user.facing_robot"),
        other => Err(DemoError::Behavior(format!("unknown readiness signal `{other}`"))),
    }
}

fn user_reactions(scenario: &Scenario) -> Result<Vec<Reaction>, DemoError> {
    let mub = scenario.blocks.user_behavior();
    let text = |key: &str| mub.get_attribute(key).and_then(AttributeValue::as_text);
    let intent = text(INTENT_SIGNAL_KEY)
        .ok_or_else(|| DemoError::Behavior(format!("user behavior model lacks `{INTENT_SIGNAL_KEY}`")))?;
    let mut reactions =
        vec![Reaction { trigger: "user.prompted", response: signal_response(intent)?, countdown: None }];
    if let Some(consent) = text(CONSENT_SIGNAL_KEY) {
        reactions.push(Reaction {
            trigger: "robot.in_front_of_mouth",
            response: signal_response(consent)?,
            countdown: None,
        });
    }
    Ok(reactions)
}

/// Right-side (positive) or left-side head rotation the user prefers for
/// transfers, from the behavior model.
fn fixed_side_pose(scenario: &Scenario) -> Result<HeadPose, DemoError> {
    let mub = scenario.blocks.user_behavior();
    let side = mub.get_attribute(TRANSFER_SIDE_KEY).and_then(AttributeValue::as_text);
    let angle =
        mub.get_attribute(TRANSFER_SIDE_ANGLE_KEY).and_then(AttributeValue::as_scalar).and_then(|q| q.radians());
    match (side, angle) {
        (Some("right"), Some(a)) => Ok(HeadPose::new(0.0, a.abs(), 0.0)),
        (Some("left"), Some(a)) => Ok(HeadPose::new(0.0, -a.abs(), 0.0)),
        _ => Err(DemoError::Behavior(format!(
            "fixed-side transfer needs `{TRANSFER_SIDE_KEY}` (left|right) and `{TRANSFER_SIDE_ANGLE_KEY}`"
        ))),
    }
}

fn initial_blackboard(bites: usize) -> Blackboard {
    let mut bb = Blackboard::new();
    bb.set("meal.bites_remaining", bites);
    bb.set("meal.bites_served", 0usize);
    bb.set("plate.items_detected", 0usize);
    bb.set("bite.item", "");
    for flag in [
        "robot.above_plate",
        "robot.at_staging",
        "robot.in_front_of_mouth",
        "robot.at_mouth",
        "fork.loaded",
        "head.estimated",
        "user.prompted",
        "user.mouth_open",
        "user.facing_robot",
        "transfer.success",
    ] {
        bb.set(flag, false);
    }
    bb.set("transfer.relative_angle", 0.0);
    bb
}

/// Per-user bite-sequencing model: HS trained on meals simulated from the
/// profile, kept current by online updates with observed meals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineLearner {
    pub setup: FeedingSetup,
    pub sims: Vec<Vec<usize>>,
    pub model: DiscreteHmm,
}

impl OnlineLearner {
    /// HS, updated with the setup's observed meals of the same profile.
    pub fn new(setup: &FeedingSetup, seed: u64) -> Result<Self, HmmError> {
        let meal = &setup.meal;
        let sims =
            simulate_sequences(&setup.profile, meal, setup.n_sim_meals, setup.temperature, mix_seed(seed, &[1]))?;
        let weights = vec![1.0; sims.len()];
        let hs = train(setup.n_states, &meal.items, &sims, &weights, &setup.train, mix_seed(seed, &[2]))?;
        let observed =
            simulate_sequences(&setup.profile, meal, setup.n_observed_meals, setup.temperature, mix_seed(seed, &[3]))?;
        let model = online_update(&hs, &observed, setup.user_weight, &sims, &setup.train)?;
        Ok(Self { setup: setup.clone(), sims, model })
    }

    /// Folds completed meals into the model.
    pub fn update(&mut self, meals: &[Vec<usize>]) -> Result<(), HmmError> {
        self.model = online_update(&self.model, meals, self.setup.user_weight, &self.sims, &self.setup.train)?;
        Ok(())
    }
}

struct DemoState<'a> {
    scenario: &'a Scenario,
    setup: &'a FeedingSetup,
    transfer: TransferScenario,
    manifold: HeadPoseManifold,
    model: DiscreteHmm,
    affinities: Vec<f64>,
    seed: u64,
    rng: ChaCha8Rng,
    served: Vec<usize>,
    remaining: Vec<usize>,
    pending_item: Option<usize>,
    wanted: Option<usize>,
    h_user: HeadPose,
    bites: Vec<BiteRecord>,
    matches: usize,
}

fn done(bb: Blackboard) -> (Blackboard, HandlerOutcome) {
    (bb, HandlerOutcome::Success)
}

impl DemoState<'_> {
    fn invoke(&mut self, handler: &str, node: &WorkflowNode, bb: &Blackboard) -> (Blackboard, HandlerOutcome) {
        let mut next = bb.clone();
        match handler {
            "move_above_plate" => next.set("robot.above_plate", true),
            "detect_food_items" => next.set("plate.items_detected", self.remaining.iter().filter(|&&r| r > 0).count()),
            "predict_next_bite" => return self.predict(next),
            "skewer_item" => match self.pending_item {
                Some(_) => {
                    next.set("fork.loaded", true);
                    next.set("robot.above_plate", false);
                }
                None => return (next, HandlerOutcome::Failure("no item chosen".into())),
            },
            "move_to_staging" => {
                next.set("robot.at_staging", true);
                next.set("user.prompted", true);
            }
            "estimate_head_pose" => {
                self.h_user = self.manifold.sample(&mut self.rng);
                next.set("head.estimated", true);
            }
            "detect_mouth_open" | "detect_turn_toward_robot" => {}
            "plan_transfer_muf" => return self.plan(next, Policy::MufInformed, false),
            "plan_transfer_inside_mouth" => return self.plan(next, Policy::MufInformed, true),
            "plan_transfer_fixed_side" => return self.plan(next, Policy::Fixed, false),
            "move_in_front_of_mouth" => next.set("robot.in_front_of_mouth", true),
            "move_to_mouth" => {
                next.set("robot.at_mouth", true);
                next.set("robot.at_staging", false);
            }
            "detect_bite_taken" => {
                let Some(item) = self.pending_item.take() else {
                    return (next, HandlerOutcome::Failure("fork is empty".into()));
                };
                self.remaining[item] -= 1;
                self.served.push(item);
                next.set("fork.loaded", false);
                next.set("meal.bites_served", self.served.len());
                next.set("meal.bites_remaining", self.remaining.iter().sum::<usize>());
            }
            "retract" => {
                for flag in [
                    "robot.at_mouth",
                    "robot.in_front_of_mouth",
                    "head.estimated",
                    "user.prompted",
                    "user.mouth_open",
                    "user.facing_robot",
                    "transfer.success",
                ] {
                    next.set(flag, false);
                }
            }
            other => return (next, HandlerOutcome::Failure(format!("`{}` bound to unknown skill `{other}`", node.id))),
        }
        done(next)
    }

    fn predict(&mut self, mut next: Blackboard) -> (Blackboard, HandlerOutcome) {
        let item = match predict_next(&self.model, &self.served, &self.remaining) {
            Ok(i) => i,
            Err(e) => return (next, HandlerOutcome::Failure(e.to_string())),
        };
        let probs = self.setup.profile.next_bite_distribution(
            &self.affinities,
            &self.remaining,
            self.served.last().copied(),
            self.setup.temperature,
        );
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let wanted = (0..probs.len())
            .filter(|&i| probs[i] > 0.0)
            .find(|&i| {
                acc += probs[i];
                u < acc
            })
            .or_else(|| (0..probs.len()).rev().find(|&i| probs[i] > 0.0))
            .expect("remaining inventory is nonempty");
        self.matches += usize::from(wanted == item);
        self.pending_item = Some(item);
        self.wanted = Some(wanted);
        next.set("bite.item", self.setup.meal.items[item].as_str());
        done(next)
    }

    fn plan(&mut self, mut next: Blackboard, policy: Policy, inside_mouth: bool) -> (Blackboard, HandlerOutcome) {
        let standoff = self.scenario.planner.standoff;
        if inside_mouth && standoff >= 0.0 {
            return (next, HandlerOutcome::Failure("inside-mouth transfer needs a negative standoff".into()));
        }
        let bite = self.bites.len();
        let seed = mix_seed(self.seed, &[0x6269_7465, bite as u64]);
        let result = match policy {
            Policy::Fixed => match fixed_side_pose(self.scenario) {
                Ok(pose) => {
                    let scene = TransferScenario { h_fixed: pose, ..self.transfer.clone() };
                    policy_fixed(&scene, &self.h_user, seed)
                }
                Err(e) => return (next, HandlerOutcome::Failure(e.to_string())),
            },
            _ => match policy_muf_informed(&self.transfer, &self.h_user, seed) {
                Ok(r) => r,
                Err(e) => return (next, HandlerOutcome::Failure(e.to_string())),
            },
        };
        let items = &self.setup.meal.items;
        self.bites.push(BiteRecord {
            bite: bite + 1,
            served: self.pending_item.map(|i| items[i].clone()).unwrap_or_default(),
            wanted: self.wanted.map(|i| items[i].clone()).unwrap_or_default(),
            h_user: self.h_user,
            policy,
            success: result.success,
            chosen_pose: result.chosen_pose,
            relative_angle: result.relative_angle,
            standoff,
        });
        next.set("transfer.success", result.success);
        next.set("transfer.relative_angle", result.relative_angle.unwrap_or(f64::NAN));
        if result.success {
            done(next)
        } else {
            (next, HandlerOutcome::Failure("no feasible transfer".into()))
        }
    }
}

/// Runs the robot workflow of a feeding scenario for one full meal.
pub fn run_feeding_demo(scenario: &Scenario, seed: u64) -> Result<DemoReport, DemoError> {
    let setup = scenario.feeding.as_ref().ok_or_else(|| DemoError::NotFeeding(scenario.id.clone()))?;
    let transfer = scenario.transfer_scenario()?;
    let manifold = transfer.user_manifold;
    let reactions = user_reactions(scenario)?;
    let state = RefCell::new(DemoState {
        scenario,
        setup,
        transfer,
        manifold,
        model: OnlineLearner::new(setup, seed)?.model,
        affinities: setup.profile.affinities_for(&setup.meal)?,
        seed,
        rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, &[4])),
        served: Vec::new(),
        remaining: setup.meal.full_inventory(),
        pending_item: None,
        wanted: None,
        h_user: HeadPose::neutral(),
        bites: Vec::new(),
        matches: 0,
    });
    let mut registry = HandlerRegistry::new();
    for &name in DEMO_HANDLERS {
        let state = &state;
        registry.register(name, move |node: &WorkflowNode, bb: &Blackboard| state.borrow_mut().invoke(name, node, bb));
    }
    let mut user = SimulatedUser { reactions, rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, &[5])) };
    let bb = initial_blackboard(setup.meal.len());
    let result = run_with_environment(&scenario.workflow_robot, bb, &mut registry, &mut user, MAX_STEPS)?;
    drop(registry);
    let trace = result.trace().to_vec();
    match result.status {
        RunStatus::Done => {}
        RunStatus::Failed => {
            let (node_id, reason) = trace
                .iter()
                .find_map(|e| match &e.event {
                    Event::Failed(reason) => Some((e.node_id.clone(), reason.clone())),
                    _ => None,
                })
                .unwrap_or_else(|| (scenario.workflow_robot.root.id.clone(), "failed".into()));
            return Err(DemoError::WorkflowFailed { node_id, reason });
        }
        RunStatus::BudgetExhausted => return Err(DemoError::BudgetExhausted(MAX_STEPS)),
    }
    let state = state.into_inner();
    let served = state.served.len().max(1);
    Ok(DemoReport {
        scenario_id: scenario.id.clone(),
        seed,
        status: result.status,
        steps: result.instance.steps(),
        trace,
        prediction_accuracy: state.matches as f64 / served as f64,
        bites: state.bites,
    })
}
