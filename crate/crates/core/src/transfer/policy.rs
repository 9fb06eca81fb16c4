//! The three bite-transfer policies and their evaluation.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::planner::{plan_trajectory, Trajectory};
use super::pose::{goal_pose, relative_angle, HeadPose};
use super::{TransferError, TransferScenario};
use crate::blocks::HeadPoseManifold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Policy {
    Fixed,
    Baseline,
    MufInformed,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Fixed, Policy::Baseline, Policy::MufInformed];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Fixed => "Fixed",
            Policy::Baseline => "Baseline",
            Policy::MufInformed => "MufInformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub policy: Policy,
    pub success: bool,
    pub chosen_pose: Option<HeadPose>,
    pub relative_angle: Option<f64>,
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// Candidate poses planned to, including the successful one.
    pub attempts: usize,
}

impl PlanResult {
    fn failure(policy: Policy, attempts: usize) -> Self {
        Self { policy, success: false, chosen_pose: None, relative_angle: None, trajectory: None, attempts }
    }
}

/// SplitMix64 finalizer over a seed and extra words; derives independent
/// per-call seeds.
pub fn mix_seed(seed: u64, words: &[u64]) -> u64 {
    let mut h = seed;
    for w in words.iter().copied().chain([0x5350_4152_4353]) {
        h = h.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// `h_user`, `h_fixed` (if given) and `n` uniform manifold samples, stably
/// sorted by relative angle from `h_user`.
pub fn sample_candidates(
    manifold: &HeadPoseManifold,
    h_user: &HeadPose,
    h_fixed: Option<&HeadPose>,
    n: usize,
    seed: u64,
) -> Result<Vec<HeadPose>, TransferError> {
    if !manifold.contains(h_user) {
        return Err(TransferError::PoseOutsideManifold(*h_user));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses = Vec::with_capacity(n + 2);
    poses.push(*h_user);
    poses.extend(h_fixed.copied());
    poses.extend((0..n).map(|_| manifold.sample(&mut rng)));
    let mut keyed: Vec<(f64, HeadPose)> = poses.into_iter().map(|p| (relative_angle(h_user, &p), p)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Plans for one scenario and seed, remembering results per head pose so the
/// policies share work.
pub struct TransferSession<'a> {
    scenario: &'a TransferScenario,
    seed: u64,
    cache: HashMap<[u64; 3], Option<Trajectory>>,
}

impl<'a> TransferSession<'a> {
    pub fn new(scenario: &'a TransferScenario, seed: u64) -> Self {
        Self { scenario, seed, cache: HashMap::new() }
    }

    /// Trajectory to the goal for `pose`, if one is found. The planner seed
    /// depends only on the session seed and the pose.
    pub fn plan_to(&mut self, pose: &HeadPose) -> Option<Trajectory> {
        let s = self.scenario;
        let seed = mix_seed(self.seed, &pose.key());
        self.cache
            .entry(pose.key())
            .or_insert_with(|| {
                let goal = goal_pose(&s.head, pose, &s.transfer);
                plan_trajectory(&s.arm, &s.arm.home(), &goal, &s.obstacles, &s.params, seed).ok()
            })
            .clone()
    }

    fn first_feasible(&mut self, policy: Policy, h_user: &HeadPose, candidates: &[HeadPose]) -> PlanResult {
        for (i, c) in candidates.iter().enumerate() {
            if let Some(t) = self.plan_to(c) {
                return PlanResult {
                    policy,
                    success: true,
                    chosen_pose: Some(*c),
                    relative_angle: Some(relative_angle(h_user, c)),
                    trajectory: Some(t.iter().map(|q| q.as_slice().to_vec()).collect()),
                    attempts: i + 1,
                };
            }
        }
        PlanResult::failure(policy, candidates.len())
    }

    pub fn run(&mut self, policy: Policy, h_user: &HeadPose) -> Result<PlanResult, TransferError> {
        let s = self.scenario;
        let candidate_seed = mix_seed(self.seed, &h_user.key());
        Ok(match policy {
            Policy::Fixed => self.first_feasible(policy, h_user, &[s.h_fixed]),
            Policy::Baseline => {
                let full = s.full_manifold;
                if !full.contains(h_user) {
                    return Err(TransferError::PoseOutsideManifold(*h_user));
                }
                let c = sample_candidates(&full, h_user, None, s.n_candidates, candidate_seed)?;
                self.first_feasible(policy, h_user, &c)
            }
            Policy::MufInformed => {
                let c = sample_candidates(&s.user_manifold, h_user, Some(&s.h_fixed), s.n_candidates, candidate_seed)?;
                self.first_feasible(policy, h_user, &c)
            }
        })
    }
}

pub fn policy_fixed(scenario: &TransferScenario, h_user: &HeadPose, seed: u64) -> PlanResult {
    TransferSession::new(scenario, seed)
        .run(Policy::Fixed, h_user)
        .expect("fixed policy has no preconditions on h_user")
}

pub fn policy_baseline(scenario: &TransferScenario, h_user: &HeadPose, seed: u64) -> Result<PlanResult, TransferError> {
    TransferSession::new(scenario, seed).run(Policy::Baseline, h_user)
}

pub fn policy_muf_informed(
    scenario: &TransferScenario,
    h_user: &HeadPose,
    seed: u64,
) -> Result<PlanResult, TransferError> {
    TransferSession::new(scenario, seed).run(Policy::MufInformed, h_user)
}

/// Corners, edge midpoints and center of the manifold box (deduplicated),
/// topped up with uniform samples, `n` poses at most.
pub fn user_test_poses(manifold: &HeadPoseManifold, n: usize, seed: u64) -> Vec<HeadPose> {
    let axis = |r: &crate::blocks::AngleRange| [r.min, 0.5 * (r.min + r.max), r.max];
    let mut poses: Vec<HeadPose> = Vec::with_capacity(n);
    let push = |p: HeadPose, poses: &mut Vec<HeadPose>| {
        if poses.len() < n && !poses.iter().any(|q| q.key() == p.key()) {
            poses.push(p);
        }
    };
    for f in axis(&manifold.flexion) {
        for r in axis(&manifold.rotation) {
            for l in axis(&manifold.lateral) {
                push(HeadPose::new(f, r, l), &mut poses);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x7465_7374]));
    let mut tries = 0;
    while poses.len() < n && tries < 100 * n {
        push(manifold.sample(&mut rng), &mut poses);
        tries += 1;
    }
    poses
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseOutcome {
    pub seed: u64,
    pub h_user: HeadPose,
    /// In the order of the evaluated policies.
    pub results: Vec<PlanResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub n_poses: usize,
    pub success_rate: f64,
    pub mean_rel_angle_rad: f64,
    pub sd_rel_angle_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub metrics: Vec<PolicyMetrics>,
    pub outcomes: Vec<PoseOutcome>,
}

pub const METRICS_HEADER: &str = "policy,seed,success_rate,mean_rel_angle_rad,sd_rel_angle_rad";

impl Evaluation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                m.policy.as_str(),
                m.seed,
                m.success_rate,
                m.mean_rel_angle_rad,
                m.sd_rel_angle_rad
            ));
        }
        out
    }

    /// Mean over seeds of a per-seed metric.
    pub fn seed_mean(&self, policy: Policy, f: impl Fn(&PolicyMetrics) -> f64) -> f64 {
        let values: Vec<f64> = self.metrics.iter().filter(|m| m.policy == policy).map(f).collect();
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

/// A success counts toward the success rate only if the user can attain the
/// chosen pose. Relative angles are summarized over every planned success.
pub fn is_valid_success(scenario: &TransferScenario, result: &PlanResult) -> bool {
    result.success && result.chosen_pose.is_some_and(|p| scenario.user_manifold.contains(&p))
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn evaluate_seed(
    scenario: &TransferScenario,
    policies: &[Policy],
    n_user_poses: usize,
    seed: u64,
) -> Result<Vec<PoseOutcome>, TransferError> {
    let mut session = TransferSession::new(scenario, seed);
    user_test_poses(&scenario.user_manifold, n_user_poses, seed)
        .into_iter()
        .map(|h_user| {
            let results = policies.iter().map(|p| session.run(*p, &h_user)).collect::<Result<Vec<_>, _>>()?;
            Ok(PoseOutcome { seed, h_user, results })
        })
        .collect()
}

pub fn evaluate_policies(
    scenario: &TransferScenario,
    policies: &[Policy],
    n_user_poses: usize,
    seeds: &[u64],
) -> Result<Evaluation, TransferError> {
    if n_user_poses == 0 {
        return Err(TransferError::Config("n_user_poses must be at least 1".into()));
    }
    let per_seed: Vec<Vec<PoseOutcome>> = seeds
        .par_iter()
        .map(|&seed| evaluate_seed(scenario, policies, n_user_poses, seed))
        .collect::<Result<_, _>>()?;
    let mut metrics = Vec::new();
    for (k, policy) in policies.iter().enumerate() {
        for (seed, outcomes) in seeds.iter().zip(&per_seed) {
            let results: Vec<&PlanResult> = outcomes.iter().map(|o| &o.results[k]).collect();
            let valid = results.iter().filter(|r| is_valid_success(scenario, r)).count();
            let angles: Vec<f64> = results.iter().filter_map(|r| r.relative_angle).collect();
            let (mean, sd) = mean_sd(&angles);
            metrics.push(PolicyMetrics {
                policy: *policy,
                seed: *seed,
                n_poses: results.len(),
                success_rate: valid as f64 / results.len() as f64,
                mean_rel_angle_rad: mean,
                sd_rel_angle_rad: sd,
            });
        }
    }
    Ok(Evaluation { metrics, outcomes: per_seed.into_iter().flatten().collect() })
}
