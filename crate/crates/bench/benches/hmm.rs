use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sparcs_core::hmm::{
    baum_welch, forward_loglik, predict_next, simulate_sequences, DiscreteHmm, EatingPreference, MealSpec,
    UserPrefProfile,
};
use std::hint::black_box;

fn corpus() -> (MealSpec, Vec<Vec<usize>>) {
    let meal = MealSpec::new(["banana", "kiwi", "grape", "carrot"].map(String::from).to_vec(), 3).unwrap();
    let profile = UserPrefProfile {
        affinity: meal.items.iter().cloned().zip([4.0, 2.0, 5.0, 1.0]).collect(),
        eating_preference: EatingPreference::MixAndMatch,
    };
    let meals = simulate_sequences(&profile, &meal, 50, 0.5, 0).unwrap();
    (meal, meals)
}

fn forward(c: &mut Criterion) {
    let (meal, meals) = corpus();
    let mut group = c.benchmark_group("forward_loglik");
    for n in [2, 4, 8] {
        let hmm = DiscreteHmm::random(n, meal.items.clone(), 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &hmm, |b, hmm| {
            b.iter(|| forward_loglik(hmm, black_box(&meals[0])).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let (meal, meals) = corpus();
    let weights = vec![1.0; meals.len()];
    let init = DiscreteHmm::random(4, meal.items.clone(), 2);
    c.bench_function("baum_welch 50 meals x 20 iterations", |b| {
        b.iter(|| baum_welch(&init, black_box(&meals), &weights, 20, 0.0).unwrap())
    });
}

fn prediction(c: &mut Criterion) {
    let (meal, meals) = corpus();
    let hmm = DiscreteHmm::random(4, meal.items.clone(), 3);
    let prefix = &meals[0][..6];
    c.bench_function("predict_next after 6 bites", |b| {
        b.iter(|| predict_next(&hmm, black_box(prefix), &[1, 2, 1, 2]).unwrap())
    });
}

criterion_group!(benches, forward, training, prediction);
criterion_main!(benches);
