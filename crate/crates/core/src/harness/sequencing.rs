//! Bite-sequencing experiment over synthetic users: HMM trained on simulated
//! meals (HS), the same model after an online update with observed meals
//! (HO), and a random baseline.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hmm::{
    evaluate_accuracy, kruskal_wallis, online_update, predict_next, random_choice, simulate_sequences, train,
    DiscreteHmm, EatingPreference, HmmError, KruskalWallis, MealSpec, TrainOptions, UserPrefProfile,
};
use crate::transfer::mix_seed;

use super::experiments::PatternCheck;

pub fn default_meal() -> MealSpec {
    MealSpec { items: ["banana", "kiwi", "grape", "carrot"].map(String::from).to_vec(), bites_per_item: 3 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequencingConfig {
    pub meal: MealSpec,
    pub n_users: usize,
    /// Temperature of the users' own choices.
    pub user_temperature: f64,
    /// Temperature of the simulated training meals; defaults to the users'.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_temperature: Option<f64>,
    pub n_sim_meals: usize,
    pub n_observed_meals: usize,
    pub user_weight: f64,
    pub n_states: usize,
    /// Standard deviation of the error between a user's stated and true
    /// affinity scores.
    pub affinity_noise: f64,
    /// Probability that the stated eating preference is not the true one.
    pub preference_flip: f64,
    /// Draw the true affinity scores from 1..=5 without replacement, so
    /// every user has a strict favorite order.
    pub distinct_affinities: bool,
    /// Random-baseline runs averaged per user.
    pub random_repeats: usize,
    pub seed: u64,
    pub train: TrainOptions,
}

impl Default for SequencingConfig {
    fn default() -> Self {
        Self {
            meal: default_meal(),
            n_users: 20,
            user_temperature: 0.5,
            sim_temperature: None,
            n_sim_meals: 50,
            n_observed_meals: 6,
            user_weight: 10.0,
            n_states: 4,
            affinity_noise: 0.5,
            preference_flip: 0.1,
            distinct_affinities: true,
            random_repeats: 100,
            seed: 0,
            train: TrainOptions::default(),
        }
    }
}

/// A user's actual preferences and what they report about them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticUser {
    pub index: usize,
    pub true_profile: UserPrefProfile,
    pub stated_profile: UserPrefProfile,
}

pub fn synthetic_user(config: &SequencingConfig, index: usize) -> SyntheticUser {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[0x7573_6572, index as u64]));
    let items = &config.meal.items;
    let scores: Vec<f64> = if config.distinct_affinities {
        let mut pool = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        pool.shuffle(&mut rng);
        pool.into_iter().cycle().take(items.len()).collect()
    } else {
        items.iter().map(|_| rng.random_range(1..=5) as f64).collect()
    };
    let affinity: IndexMap<String, f64> = items.iter().cloned().zip(scores).collect();
    let preference = EatingPreference::ALL[rng.random_range(0..3)];
    let noise = Normal::new(0.0, config.affinity_noise.max(0.0)).expect("finite standard deviation");
    let stated_affinity = affinity
        .iter()
        .map(|(k, v)| {
            let jitter = if config.affinity_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (k.clone(), (v + jitter).round().clamp(1.0, 5.0))
        })
        .collect();
    let stated_preference = if rng.random::<f64>() < config.preference_flip {
        let others: Vec<_> = EatingPreference::ALL.into_iter().filter(|p| *p != preference).collect();
        others[rng.random_range(0..others.len())]
    } else {
        preference
    };
    SyntheticUser {
        index,
        true_profile: UserPrefProfile { affinity, eating_preference: preference },
        stated_profile: UserPrefProfile { affinity: stated_affinity, eating_preference: stated_preference },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserResult {
    pub user: usize,
    pub eating_preference: EatingPreference,
    pub stated_preference: EatingPreference,
    pub hs_accuracy: f64,
    pub ho_accuracy: f64,
    pub random_accuracy: f64,
    /// Log-probability, under the user's true generator, of the meal each
    /// method would serve on its own. Stand-in for a satisfaction rating.
    pub hs_satisfaction_proxy: f64,
    pub ho_satisfaction_proxy: f64,
    pub random_satisfaction_proxy: f64,
    pub test_meal: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequencingReport {
    pub users: Vec<UserResult>,
    pub mean_hs: f64,
    pub mean_ho: f64,
    pub mean_random: f64,
    pub kruskal_wallis: KruskalWallis,
}

pub const SEQUENCING_HEADER: &str = "user,eating_preference,stated_preference,hs_accuracy,ho_accuracy,random_accuracy,hs_satisfaction_proxy,ho_satisfaction_proxy,random_satisfaction_proxy";

impl SequencingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SEQUENCING_HEADER);
        out.push('\n');
        for u in &self.users {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                u.user,
                u.eating_preference.as_str(),
                u.stated_preference.as_str(),
                u.hs_accuracy,
                u.ho_accuracy,
                u.random_accuracy,
                u.hs_satisfaction_proxy,
                u.ho_satisfaction_proxy,
                u.random_satisfaction_proxy
            ));
        }
        out
    }

    /// Expected ordering: the online model beats the simulation-only model,
    /// which beats guessing, and the methods differ significantly.
    pub fn checks(&self) -> Vec<PatternCheck> {
        let check = |name: &str, passed: bool| PatternCheck { name: name.into(), passed };
        vec![
            check("mean accuracy HO >= HS", self.mean_ho >= self.mean_hs),
            check("mean accuracy HS >= Random", self.mean_hs >= self.mean_random),
            check("mean accuracy HO - Random >= 0.10", self.mean_ho - self.mean_random >= 0.10),
            check("Kruskal-Wallis p < 0.05", self.kruskal_wallis.p_value < 0.05),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "users: {}\nmean accuracy HS: {:.4}\nmean accuracy HO: {:.4}\nmean accuracy Random: {:.4}\nKruskal-Wallis H: {:.4} (dof {}), p = {:.3e}\n",
            self.users.len(),
            self.mean_hs,
            self.mean_ho,
            self.mean_random,
            self.kruskal_wallis.h,
            self.kruskal_wallis.dof,
            self.kruskal_wallis.p_value
        );
        for c in self.checks() {
            out.push_str(&format!("[{}] {}\n", if c.passed { "pass" } else { "FAIL" }, c.name));
        }
        out
    }
}

/// Log-probability of `sequence` under the profile's generator.
pub fn generator_loglik(
    profile: &UserPrefProfile,
    meal: &MealSpec,
    sequence: &[usize],
    temperature: f64,
) -> Result<f64, HmmError> {
    let affinities = profile.affinities_for(meal)?;
    let mut remaining = meal.full_inventory();
    let mut total = 0.0;
    for (t, &s) in sequence.iter().enumerate() {
        let p =
            profile.next_bite_distribution(&affinities, &remaining, t.checked_sub(1).map(|k| sequence[k]), temperature);
        total += p[s].ln();
        remaining[s] -= 1;
    }
    Ok(total)
}

fn served_meal(
    meal: &MealSpec,
    mut choose: impl FnMut(&[usize], &[usize]) -> Result<usize, HmmError>,
) -> Result<Vec<usize>, HmmError> {
    let mut remaining = meal.full_inventory();
    let mut served = Vec::with_capacity(meal.len());
    for _ in 0..meal.len() {
        let next = choose(&served, &remaining)?;
        remaining[next] -= 1;
        served.push(next);
    }
    Ok(served)
}

/// Per-user pipeline. Returns the user's result and the HO model.
pub fn run_user(config: &SequencingConfig, index: usize) -> Result<(UserResult, DiscreteHmm), HmmError> {
    let user = synthetic_user(config, index);
    let meal = &config.meal;
    let seed = |tag: u64| mix_seed(config.seed, &[index as u64, tag]);
    let sim_temperature = config.sim_temperature.unwrap_or(config.user_temperature);

    let sims = simulate_sequences(&user.stated_profile, meal, config.n_sim_meals, sim_temperature, seed(1))?;
    let weights = vec![1.0; sims.len()];
    let hs = train(config.n_states, &meal.items, &sims, &weights, &config.train, seed(2))?;

    let meals =
        simulate_sequences(&user.true_profile, meal, config.n_observed_meals + 1, config.user_temperature, seed(3))?;
    let (observed, test) = meals.split_at(config.n_observed_meals);
    let test = &test[0];
    let ho = online_update(&hs, observed, config.user_weight, &sims, &config.train)?;

    let n = meal.items.len();
    let hs_accuracy = evaluate_accuracy(|p, r| predict_next(&hs, p, r), test, n)?;
    let ho_accuracy = evaluate_accuracy(|p, r| predict_next(&ho, p, r), test, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed(4));
    let mut random_total = 0.0;
    for _ in 0..config.random_repeats.max(1) {
        random_total += evaluate_accuracy(|_, r| random_choice(r, &mut rng), test, n)?;
    }
    let random_accuracy = random_total / config.random_repeats.max(1) as f64;

    let truth = |s: &[usize]| generator_loglik(&user.true_profile, meal, s, config.user_temperature);
    let hs_served = served_meal(meal, |p, r| predict_next(&hs, p, r))?;
    let ho_served = served_meal(meal, |p, r| predict_next(&ho, p, r))?;
    let random_served = served_meal(meal, |_, r| random_choice(r, &mut rng))?;
    let result = UserResult {
        user: index,
        eating_preference: user.true_profile.eating_preference,
        stated_preference: user.stated_profile.eating_preference,
        hs_accuracy,
        ho_accuracy,
        random_accuracy,
        hs_satisfaction_proxy: truth(&hs_served)?,
        ho_satisfaction_proxy: truth(&ho_served)?,
        random_satisfaction_proxy: truth(&random_served)?,
        test_meal: test.clone(),
    };
    Ok((result, ho))
}

pub fn run_bite_sequencing_experiment(config: &SequencingConfig) -> Result<SequencingReport, HmmError> {
    config.meal.validate()?;
    if config.n_users == 0 || config.n_observed_meals == 0 || config.n_sim_meals == 0 {
        return Err(HmmError::InvalidArgument("users, observed meals and simulated meals must be positive".into()));
    }
    let users: Vec<UserResult> =
        (0..config.n_users).into_par_iter().map(|i| run_user(config, i).map(|r| r.0)).collect::<Result<_, _>>()?;
    let column = |f: fn(&UserResult) -> f64| users.iter().map(f).collect::<Vec<f64>>();
    let (hs, ho, random) = (column(|u| u.hs_accuracy), column(|u| u.ho_accuracy), column(|u| u.random_accuracy));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let kw = kruskal_wallis(&[ho.clone(), hs.clone(), random.clone()])?;
    Ok(SequencingReport {
        mean_hs: mean(&hs),
        mean_ho: mean(&ho),
        mean_random: mean(&random),
        kruskal_wallis: kw,
        users,
    })
}
