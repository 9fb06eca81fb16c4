//! Meals, preference profiles and simulated bite sequences.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HmmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MealSpec {
    pub items: Vec<String>,
    pub bites_per_item: usize,
}

impl MealSpec {
    pub fn new(items: Vec<String>, bites_per_item: usize) -> Result<Self, HmmError> {
        let spec = Self { items, bites_per_item };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        if self.items.is_empty() || self.bites_per_item == 0 {
            return Err(HmmError::EmptyMeal);
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.is_empty() || self.items[..i].contains(item) {
                return Err(HmmError::InvalidArgument(format!("meal items must be unique and nonempty: `{item}`")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len() * self.bites_per_item
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.items.iter().position(|i| i == item)
    }

    pub fn full_inventory(&self) -> Vec<usize> {
        vec![self.bites_per_item; self.items.len()]
    }

    /// Inventory left after `prefix`; errors if the prefix over-eats an item.
    pub fn remaining_after(&self, prefix: &[usize]) -> Result<Vec<usize>, HmmError> {
        let mut remaining = self.full_inventory();
        for &s in prefix {
            let slot = remaining.get_mut(s).ok_or_else(|| HmmError::UnknownSymbol(s.to_string()))?;
            if *slot == 0 {
                return Err(HmmError::InvalidArgument(format!(
                    "item {s} eaten more than {} times",
                    self.bites_per_item
                )));
            }
            *slot -= 1;
        }
        Ok(remaining)
    }

    pub fn is_complete_meal(&self, sequence: &[usize]) -> bool {
        sequence.len() == self.len() && self.remaining_after(sequence).is_ok()
    }

    pub fn names(&self, sequence: &[usize]) -> Vec<&str> {
        sequence.iter().map(|&i| self.items[i].as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EatingPreference {
    SaveFavoriteForLast,
    FavoriteFirst,
    MixAndMatch,
}

impl EatingPreference {
    pub const ALL: [EatingPreference; 3] =
        [EatingPreference::SaveFavoriteForLast, EatingPreference::FavoriteFirst, EatingPreference::MixAndMatch];

    pub fn as_str(self) -> &'static str {
        match self {
            EatingPreference::SaveFavoriteForLast => "SaveFavoriteForLast",
            EatingPreference::FavoriteFirst => "FavoriteFirst",
            EatingPreference::MixAndMatch => "MixAndMatch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrefProfile {
    pub affinity: IndexMap<String, f64>,
    pub eating_preference: EatingPreference,
}

/// Factor applied to a MixAndMatch item equal to the previous bite.
pub const REPEAT_PENALTY: f64 = 0.25;

impl UserPrefProfile {
    /// Affinities in meal-item order; every item needs a score in `[1, 5]`.
    pub fn affinities_for(&self, meal: &MealSpec) -> Result<Vec<f64>, HmmError> {
        meal.items
            .iter()
            .map(|item| match self.affinity.get(item) {
                Some(a) if (1.0..=5.0).contains(a) => Ok(*a),
                Some(a) => Err(HmmError::InvalidArgument(format!("affinity {a} for `{item}` outside [1, 5]"))),
                None => Err(HmmError::InvalidArgument(format!("no affinity for `{item}`"))),
            })
            .collect()
    }

    /// Next-bite probabilities over items given the remaining inventory and
    /// the previous bite. Exhausted items get probability 0. With
    /// `temperature == 0` all mass goes to the lowest-index argmax.
    pub fn next_bite_distribution(
        &self,
        affinities: &[f64],
        remaining: &[usize],
        previous: Option<usize>,
        temperature: f64,
    ) -> Vec<f64> {
        let n = affinities.len();
        let available = |i: usize| remaining[i] > 0;
        let scores: Vec<f64> = (0..n)
            .map(|i| match self.eating_preference {
                EatingPreference::FavoriteFirst => affinities[i],
                EatingPreference::SaveFavoriteForLast => -affinities[i],
                EatingPreference::MixAndMatch => {
                    if previous == Some(i) {
                        REPEAT_PENALTY.ln()
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        let mut probs = vec![0.0; n];
        let Some(best) = (0..n).filter(|&i| available(i)).reduce(|a, b| if scores[b] > scores[a] { b } else { a })
        else {
            return probs;
        };
        if temperature == 0.0 {
            probs[best] = 1.0;
            return probs;
        }
        // MixAndMatch weights are 1 or REPEAT_PENALTY regardless of temperature.
        let scale = if self.eating_preference == EatingPreference::MixAndMatch { 1.0 } else { 1.0 / temperature };
        for i in (0..n).filter(|&i| available(i)) {
            probs[i] = ((scores[i] - scores[best]) * scale).exp();
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        probs
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Complete meals drawn bite by bite from the profile's next-bite
/// distribution.
pub fn simulate_sequences(
    profile: &UserPrefProfile,
    meal: &MealSpec,
    n_meals: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>, HmmError> {
    meal.validate()?;
    if n_meals == 0 {
        return Err(HmmError::InvalidArgument("n_meals must be at least 1".into()));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(HmmError::InvalidArgument("temperature must be finite and nonnegative".into()));
    }
    let affinities = profile.affinities_for(meal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meals = (0..n_meals)
        .map(|_| {
            let mut remaining = meal.full_inventory();
            let mut sequence = Vec::with_capacity(meal.len());
            for _ in 0..meal.len() {
                let probs =
                    profile.next_bite_distribution(&affinities, &remaining, sequence.last().copied(), temperature);
                let next = sample_index(&probs, &mut rng);
                remaining[next] -= 1;
                sequence.push(next);
            }
            sequence
        })
        .collect();
    Ok(meals)
}

/// One meal per line, item names separated by commas.
pub fn write_corpus(meal: &MealSpec, sequences: &[Vec<usize>]) -> String {
    sequences.iter().map(|s| meal.names(s).join(",") + "\n").collect()
}

pub fn parse_corpus(meal: &MealSpec, text: &str) -> Result<Vec<Vec<usize>>, HmmError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|name| meal.index_of(name.trim()).ok_or_else(|| HmmError::UnknownSymbol(name.trim().to_owned())))
                .collect()
        })
        .collect()
}
