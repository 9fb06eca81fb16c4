//! Discrete-emission hidden Markov models: scaled forward-backward and
//! weighted Baum-Welch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::HmmError;

/// Provenance recorded in model files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub simulated_sequences: usize,
    pub observed_sequences: usize,
    pub observed_weight: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHmm {
    pub n_states: usize,
    pub symbols: Vec<String>,
    pub pi: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub trained_on: TrainingInfo,
}

const STOCHASTIC_TOL: f64 = 1e-9;

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|p| p.is_finite() && *p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL
}

fn dirichlet_row(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Normalized unit exponentials are a symmetric Dirichlet(1) draw.
    let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d: f64| d / total).collect()
}

impl DiscreteHmm {
    pub fn new(symbols: Vec<String>, pi: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self, HmmError> {
        let model = Self { n_states: pi.len(), symbols, pi, a, b, trained_on: TrainingInfo::default() };
        model.validate()?;
        Ok(model)
    }

    /// Every state and symbol equally likely.
    pub fn uniform(n_states: usize, symbols: Vec<String>) -> Self {
        let m = symbols.len();
        Self {
            n_states,
            pi: vec![1.0 / n_states as f64; n_states],
            a: vec![vec![1.0 / n_states as f64; n_states]; n_states],
            b: vec![vec![1.0 / m as f64; m]; n_states],
            symbols,
            trained_on: TrainingInfo::default(),
        }
    }

    /// `pi` and every row of `A` and `B` drawn from a symmetric Dirichlet(1).
    pub fn random(n_states: usize, symbols: Vec<String>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = symbols.len();
        let pi = dirichlet_row(n_states, &mut rng);
        let a = (0..n_states).map(|_| dirichlet_row(n_states, &mut rng)).collect();
        let b = (0..n_states).map(|_| dirichlet_row(m, &mut rng)).collect();
        Self { n_states, symbols, pi, a, b, trained_on: TrainingInfo::default() }
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    /// Shapes agree and `pi`, rows of `A` and rows of `B` are distributions
    /// within 1e-9.
    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.n_states;
        let m = self.symbols.len();
        if n == 0 || m == 0 {
            return Err(HmmError::InvalidModel("model needs at least one state and one symbol".into()));
        }
        if self.pi.len() != n || self.a.len() != n || self.b.len() != n {
            return Err(HmmError::InvalidModel("pi, A and B must have n_states rows".into()));
        }
        if self.a.iter().any(|r| r.len() != n) || self.b.iter().any(|r| r.len() != m) {
            return Err(HmmError::InvalidModel("row lengths do not match states/symbols".into()));
        }
        if !is_distribution(&self.pi) {
            return Err(HmmError::InvalidModel("pi is not a distribution".into()));
        }
        if let Some(i) = self.a.iter().position(|r| !is_distribution(r)) {
            return Err(HmmError::InvalidModel(format!("row {i} of A is not a distribution")));
        }
        if let Some(i) = self.b.iter().position(|r| !is_distribution(r)) {
            return Err(HmmError::InvalidModel(format!("row {i} of B is not a distribution")));
        }
        Ok(())
    }

    fn check_symbols(&self, sequence: &[usize]) -> Result<(), HmmError> {
        match sequence.iter().find(|&&s| s >= self.n_symbols()) {
            Some(s) => Err(HmmError::UnknownSymbol(s.to_string())),
            None => Ok(()),
        }
    }

    /// `(1 - eps)·p + eps·uniform` applied to `pi` and every row.
    pub fn smoothed(&self, eps: f64) -> Self {
        let mix = |row: &[f64]| -> Vec<f64> {
            let u = eps / row.len() as f64;
            row.iter().map(|p| (1.0 - eps) * p + u).collect()
        };
        Self {
            pi: mix(&self.pi),
            a: self.a.iter().map(|r| mix(r)).collect(),
            b: self.b.iter().map(|r| mix(r)).collect(),
            ..self.clone()
        }
    }

    pub fn to_canonical(&self) -> String {
        crate::canonical::to_canonical_string(self)
    }

    pub fn parse(document: &str) -> Result<Self, HmmError> {
        let model: Self = serde_json::from_str(document).map_err(|e| HmmError::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Filtered state distributions (rows sum to 1) and per-step normalizers.
/// `None` when the sequence has probability zero.
pub(crate) struct Forward {
    pub alpha: Vec<Vec<f64>>,
    pub scale: Vec<f64>,
}

pub(crate) fn forward(hmm: &DiscreteHmm, sequence: &[usize]) -> Option<Forward> {
    let n = hmm.n_states;
    let mut alpha = Vec::with_capacity(sequence.len());
    let mut scale = Vec::with_capacity(sequence.len());
    for (t, &o) in sequence.iter().enumerate() {
        let mut row: Vec<f64> = if t == 0 {
            (0..n).map(|i| hmm.pi[i] * hmm.b[i][o]).collect()
        } else {
            let prev: &Vec<f64> = &alpha[t - 1];
            (0..n).map(|j| (0..n).map(|i| prev[i] * hmm.a[i][j]).sum::<f64>() * hmm.b[j][o]).collect()
        };
        let c: f64 = row.iter().sum();
        if c.is_nan() || c <= 0.0 {
            return None;
        }
        row.iter_mut().for_each(|v| *v /= c);
        alpha.push(row);
        scale.push(c);
    }
    Some(Forward { alpha, scale })
}

/// log P(sequence | hmm); 0 for the empty sequence, -inf if impossible.
pub fn forward_loglik(hmm: &DiscreteHmm, sequence: &[usize]) -> Result<f64, HmmError> {
    hmm.check_symbols(sequence)?;
    Ok(match forward(hmm, sequence) {
        Some(f) => f.scale.iter().map(|c| c.ln()).sum(),
        None => f64::NEG_INFINITY,
    })
}

/// Weighted expected counts from one E-step.
struct Counts {
    pi: Vec<f64>,
    trans: Vec<Vec<f64>>,
    emit: Vec<Vec<f64>>,
    loglik: f64,
}

#[allow(clippy::needless_range_loop)]
fn expected_counts(hmm: &DiscreteHmm, sequences: &[Vec<usize>], weights: &[f64]) -> Counts {
    let n = hmm.n_states;
    let m = hmm.n_symbols();
    let mut c = Counts { pi: vec![0.0; n], trans: vec![vec![0.0; n]; n], emit: vec![vec![0.0; m]; n], loglik: 0.0 };
    for (seq, &w) in sequences.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let Some(f) = forward(hmm, seq) else {
            c.loglik = f64::NEG_INFINITY;
            continue;
        };
        c.loglik += w * f.scale.iter().map(|s| s.ln()).sum::<f64>();
        let len = seq.len();
        // Scaled backward pass: beta[t] · alpha[t] gives the posterior.
        let mut beta = vec![vec![1.0; n]; len];
        for t in (0..len - 1).rev() {
            let o = seq[t + 1];
            for i in 0..n {
                beta[t][i] = (0..n).map(|j| hmm.a[i][j] * hmm.b[j][o] * beta[t + 1][j]).sum::<f64>() / f.scale[t + 1];
            }
        }
        for t in 0..len {
            let gamma: Vec<f64> = (0..n).map(|i| f.alpha[t][i] * beta[t][i]).collect();
            let norm: f64 = gamma.iter().sum();
            for i in 0..n {
                let g = w * gamma[i] / norm;
                if t == 0 {
                    c.pi[i] += g;
                }
                c.emit[i][seq[t]] += g;
            }
            if t + 1 < len {
                let o = seq[t + 1];
                for i in 0..n {
                    for j in 0..n {
                        let xi = f.alpha[t][i] * hmm.a[i][j] * hmm.b[j][o] * beta[t + 1][j] / f.scale[t + 1];
                        c.trans[i][j] += w * xi;
                    }
                }
            }
        }
    }
    c
}

/// Normalizes `counts` into `row`; a row without expected visits keeps its
/// previous values.
fn renormalize(row: &mut [f64], counts: &[f64]) {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for (r, c) in row.iter_mut().zip(counts) {
            *r = c / total;
        }
    }
}

/// Weighted EM. Returns the fitted model and the weighted log-likelihood
/// before the first update and after every update. Stops once an update
/// gains less than `tol` or after `max_iter` updates.
pub fn baum_welch(
    hmm0: &DiscreteHmm,
    sequences: &[Vec<usize>],
    weights: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(DiscreteHmm, Vec<f64>), HmmError> {
    hmm0.validate()?;
    if sequences.len() != weights.len() {
        return Err(HmmError::InvalidArgument("one weight per sequence required".into()));
    }
    if sequences.iter().any(Vec::is_empty) {
        return Err(HmmError::InvalidArgument("training sequences must be nonempty".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(HmmError::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    for s in sequences {
        hmm0.check_symbols(s)?;
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(HmmError::DegenerateInput);
    }
    let mut model = hmm0.clone();
    let mut trace = Vec::with_capacity(max_iter + 1);
    for iteration in 0..=max_iter {
        let counts = expected_counts(&model, sequences, weights);
        if !counts.loglik.is_finite() {
            return Err(HmmError::InvalidArgument("a weighted training sequence has zero probability".into()));
        }
        trace.push(counts.loglik);
        if iteration > 0 && counts.loglik - trace[iteration - 1] < tol {
            break;
        }
        if iteration == max_iter {
            break;
        }
        renormalize(&mut model.pi, &counts.pi);
        for i in 0..model.n_states {
            renormalize(&mut model.a[i], &counts.trans[i]);
            renormalize(&mut model.b[i], &counts.emit[i]);
        }
    }
    model.trained_on.iterations = trace.len() - 1;
    Ok((model, trace))
}

/// Best of `restarts` Dirichlet initializations by final log-likelihood.
pub fn train(
    n_states: usize,
    symbols: &[String],
    sequences: &[Vec<usize>],
    weights: &[f64],
    options: &TrainOptions,
    seed: u64,
) -> Result<DiscreteHmm, HmmError> {
    if n_states == 0 {
        return Err(HmmError::InvalidArgument("n_states must be positive".into()));
    }
    let mut best: Option<(f64, DiscreteHmm)> = None;
    for r in 0..options.restarts.max(1) {
        let init = DiscreteHmm::random(n_states, symbols.to_vec(), seed.wrapping_add(r as u64));
        let (model, trace) = baum_welch(&init, sequences, weights, options.max_iter, options.tol)?;
        let ll = *trace.last().expect("trace holds the initial likelihood");
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model));
        }
    }
    Ok(best.expect("at least one restart").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { restarts: 5, max_iter: 200, tol: 1e-6 }
    }
}

/// Probability mixed into every entry of the starting model of an online
/// update, so meals the model considered impossible can still be fitted.
pub const ONLINE_SMOOTHING: f64 = 1e-3;

/// Re-fits on the simulated corpus (weight 1 each) plus the user's meals
/// (weight `user_weight` each), starting from `hmm_hs` smoothed by
/// [`ONLINE_SMOOTHING`].
pub fn online_update(
    hmm_hs: &DiscreteHmm,
    user_sequences: &[Vec<usize>],
    user_weight: f64,
    sim_corpus: &[Vec<usize>],
    options: &TrainOptions,
) -> Result<DiscreteHmm, HmmError> {
    if user_sequences.is_empty() {
        return Err(HmmError::InvalidArgument("online update needs at least one user sequence".into()));
    }
    let sequences: Vec<Vec<usize>> = sim_corpus.iter().chain(user_sequences).cloned().collect();
    let weights: Vec<f64> = std::iter::repeat_n(1.0, sim_corpus.len())
        .chain(std::iter::repeat_n(user_weight, user_sequences.len()))
        .collect();
    let start = hmm_hs.smoothed(ONLINE_SMOOTHING);
    let (mut model, _) = baum_welch(&start, &sequences, &weights, options.max_iter, options.tol)?;
    model.trained_on = TrainingInfo {
        simulated_sequences: sim_corpus.len(),
        observed_sequences: user_sequences.len(),
        observed_weight: user_weight,
        iterations: model.trained_on.iterations,
    };
    Ok(model)
}
