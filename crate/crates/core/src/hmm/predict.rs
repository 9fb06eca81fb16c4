//! Next-bite prediction, the random baseline, and accuracy on a meal.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{forward, DiscreteHmm};
use super::HmmError;

fn lowest_remaining(remaining: &[usize]) -> Result<usize, HmmError> {
    remaining.iter().position(|&c| c > 0).ok_or(HmmError::NoRemainingItems)
}

/// Predictive next-symbol distribution after `prefix`: the filtered state
/// distribution pushed through `A` then `B`, or `pi·B` for an empty prefix.
/// `None` if the prefix has probability zero.
pub fn next_symbol_distribution(hmm: &DiscreteHmm, prefix: &[usize]) -> Option<Vec<f64>> {
    let n = hmm.n_states;
    let state: Vec<f64> = if prefix.is_empty() {
        hmm.pi.clone()
    } else {
        let f = forward(hmm, prefix)?;
        let last = f.alpha.last().expect("prefix is nonempty");
        (0..n).map(|j| (0..n).map(|i| last[i] * hmm.a[i][j]).sum()).collect()
    };
    Some((0..hmm.n_symbols()).map(|k| (0..n).map(|i| state[i] * hmm.b[i][k]).sum()).collect())
}

/// Most probable item among those still on the plate, lowest index on ties.
/// Falls back to the lowest-index remaining item when the prefix is
/// impossible under the model or every remaining item has probability zero.
pub fn predict_next(hmm: &DiscreteHmm, prefix: &[usize], remaining: &[usize]) -> Result<usize, HmmError> {
    let fallback = lowest_remaining(remaining)?;
    if remaining.len() != hmm.n_symbols() {
        return Err(HmmError::InvalidArgument("inventory length differs from the symbol count".into()));
    }
    if let Some(s) = prefix.iter().find(|&&s| s >= hmm.n_symbols()) {
        return Err(HmmError::UnknownSymbol(s.to_string()));
    }
    let Some(dist) = next_symbol_distribution(hmm, prefix) else {
        return Ok(fallback);
    };
    let mut best = fallback;
    for k in 0..dist.len() {
        if remaining[k] > 0 && dist[k] > dist[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Uniform over items with a positive count.
pub fn random_choice<R: Rng + ?Sized>(remaining: &[usize], rng: &mut R) -> Result<usize, HmmError> {
    let available: Vec<usize> = (0..remaining.len()).filter(|&i| remaining[i] > 0).collect();
    available.choose(rng).copied().ok_or(HmmError::NoRemainingItems)
}

pub fn random_policy(remaining: &[usize], seed: u64) -> Result<usize, HmmError> {
    random_choice(remaining, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Fraction of positions where `policy(true prefix, true inventory)` names
/// the item actually eaten.
pub fn evaluate_accuracy<P>(mut policy: P, test_meal: &[usize], n_items: usize) -> Result<f64, HmmError>
where
    P: FnMut(&[usize], &[usize]) -> Result<usize, HmmError>,
{
    if test_meal.is_empty() {
        return Err(HmmError::InvalidArgument("test meal is empty".into()));
    }
    let mut remaining = vec![0usize; n_items];
    for &s in test_meal {
        *remaining.get_mut(s).ok_or_else(|| HmmError::UnknownSymbol(s.to_string()))? += 1;
    }
    let mut hits = 0;
    for t in 0..test_meal.len() {
        if policy(&test_meal[..t], &remaining)? == test_meal[t] {
            hits += 1;
        }
        remaining[test_meal[t]] -= 1;
    }
    Ok(hits as f64 / test_meal.len() as f64)
}
