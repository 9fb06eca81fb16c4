//! Kruskal-Wallis H test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::HmmError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Rank-based H with tie correction; p from the chi-square tail with
/// `k - 1` degrees of freedom. All values identical gives H = 0, p = 1.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis, HmmError> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(HmmError::InvalidArgument("need at least two nonempty groups".into()));
    }
    let mut pooled: Vec<(f64, usize)> =
        groups.iter().enumerate().flat_map(|(g, xs)| xs.iter().map(move |&x| (x, g))).collect();
    if pooled.iter().any(|(x, _)| x.is_nan()) {
        return Err(HmmError::InvalidArgument("samples must not be NaN".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pooled.len();
    let dof = groups.len() - 1;
    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        for item in &pooled[i..=j] {
            rank_sums[item.1] += avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let nf = n as f64;
    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, p_value: 1.0, dof });
    }
    let raw = 12.0 / (nf * (nf + 1.0))
        * groups.iter().zip(&rank_sums).map(|(g, r)| r * r / g.len() as f64).sum::<f64>()
        - 3.0 * (nf + 1.0);
    let h = (raw / correction).max(0.0);
    let chi = ChiSquared::new(dof as f64).expect("dof is positive");
    Ok(KruskalWallis { h, p_value: chi.sf(h), dof })
}
