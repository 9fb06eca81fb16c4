//! Reference computations that share no code with the library paths they
//! check. Also included by the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DVector, Point3};
use sparcs_core::hmm::DiscreteHmm;
use sparcs_core::transfer::{ArmModel, Obstacle, SceneObstacles};

// ---- hidden Markov models ----------------------------------------------------

/// `ln P(sequence)` by summing over every state path.
pub fn brute_force_loglik(hmm: &DiscreteHmm, sequence: &[usize]) -> f64 {
    let n = hmm.n_states;
    let t = sequence.len();
    let mut total = 0.0;
    let mut path = vec![0usize; t];
    loop {
        let mut p = hmm.pi[path[0]] * hmm.b[path[0]][sequence[0]];
        for k in 1..t {
            p *= hmm.a[path[k - 1]][path[k]] * hmm.b[path[k]][sequence[k]];
        }
        total += p;
        // Odometer increment over n^t paths.
        let mut k = 0;
        while k < t && path[k] == n - 1 {
            path[k] = 0;
            k += 1;
        }
        if k == t {
            break;
        }
        path[k] += 1;
    }
    total.ln()
}

pub fn max_stochastic_error(hmm: &DiscreteHmm) -> f64 {
    let row_error = |row: &[f64]| {
        let negative = row.iter().map(|p| (-p).max(0.0)).fold(0.0, f64::max);
        negative.max((row.iter().sum::<f64>() - 1.0).abs())
    };
    let mut worst = row_error(&hmm.pi);
    for row in hmm.a.iter().chain(&hmm.b) {
        worst = worst.max(row_error(row));
    }
    worst
}

// ---- random next-item baseline ------------------------------------------------

fn distinct(remaining: &[usize]) -> usize {
    remaining.iter().filter(|&&c| c > 0).count()
}

/// Expected accuracy of a uniform guess over the remaining distinct items
/// against a fixed meal: the mean over positions of 1 / #distinct.
pub fn random_accuracy_for_meal(meal: &[usize], n_items: usize) -> f64 {
    let mut remaining = vec![0usize; n_items];
    for &s in meal {
        remaining[s] += 1;
    }
    let mut sum = 0.0;
    for &s in meal {
        sum += 1.0 / distinct(&remaining) as f64;
        remaining[s] -= 1;
    }
    sum / meal.len() as f64
}

/// Same expectation when the meal itself is eaten by uniform choice over
/// remaining distinct items, by dynamic programming over inventory states.
pub fn random_accuracy_uniform_meal(n_items: usize, bites_per_item: usize) -> f64 {
    use std::collections::HashMap;
    fn go(remaining: &mut Vec<usize>, memo: &mut HashMap<Vec<usize>, f64>) -> f64 {
        let k = distinct(remaining);
        if k == 0 {
            return 0.0;
        }
        if let Some(v) = memo.get(remaining.as_slice()) {
            return *v;
        }
        let mut future = 0.0;
        for i in 0..remaining.len() {
            if remaining[i] > 0 {
                remaining[i] -= 1;
                future += go(remaining, memo);
                remaining[i] += 1;
            }
        }
        let value = 1.0 / k as f64 + future / k as f64;
        memo.insert(remaining.clone(), value);
        value
    }
    let total = go(&mut vec![bites_per_item; n_items], &mut HashMap::new());
    total / (n_items * bites_per_item) as f64
}

// ---- collision ---------------------------------------------------------------

fn point_distance(obstacle: &Obstacle, p: &Point3<f64>) -> f64 {
    match obstacle {
        Obstacle::Box { min, max, .. } => {
            let mut sq = 0.0;
            for i in 0..3 {
                let d = (min[i] - p[i]).max(p[i] - max[i]).max(0.0);
                sq += d * d;
            }
            sq.sqrt()
        }
        Obstacle::Sphere { center, radius, .. } => {
            let d = ((p.x - center[0]).powi(2) + (p.y - center[1]).powi(2) + (p.z - center[2]).powi(2)).sqrt();
            (d - radius).max(0.0)
        }
    }
}

/// Capsule-surface clearance with the axis sampled every `spacing` meters;
/// overestimates by at most `spacing / 2`.
fn sampled_clearance(obstacle: &Obstacle, a: &Point3<f64>, b: &Point3<f64>, radius: f64, spacing: f64) -> f64 {
    let length = (b - a).norm();
    let mid = Point3::from((a.coords + b.coords) / 2.0);
    let lower = point_distance(obstacle, &mid) - length / 2.0 - radius;
    if lower > 0.01 {
        return lower;
    }
    let n = (length / spacing).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| point_distance(obstacle, &(a + (b - a) * (k as f64 / n as f64))) - radius)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest sampled clearance along a trajectory, with each segment
/// interpolated `factor` times more finely than `check_resolution` alone
/// requires. Fork contact with tool-contact spheres is allowed.
pub fn dense_trajectory_clearance(
    arm: &ArmModel,
    obstacles: &SceneObstacles,
    trajectory: &[Vec<f64>],
    check_resolution: f64,
    factor: usize,
) -> f64 {
    let mut worst = f64::INFINITY;
    let mut check = |q: &[f64]| {
        for c in arm.capsules(q) {
            for o in obstacles.iter() {
                if c.is_fork && matches!(o, Obstacle::Sphere { tool_contact: true, .. }) {
                    continue;
                }
                worst = worst.min(sampled_clearance(o, &c.a, &c.b, c.radius, 1e-3));
            }
        }
    };
    check(&trajectory[0]);
    for w in trajectory.windows(2) {
        let (a, b) = (DVector::from_column_slice(&w[0]), DVector::from_column_slice(&w[1]));
        let steps = ((&b - &a).amax() / check_resolution).ceil().max(1.0) as usize * factor;
        for k in 1..=steps {
            let q = &a + (&b - &a) * (k as f64 / steps as f64);
            check(q.as_slice());
        }
    }
    worst
}
