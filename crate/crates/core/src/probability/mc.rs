//! Monte Carlo transition-probability truth.
//!
//! Transition probabilities under perfect correlation have no closed form
//! even for logit, so the ground truth is simulated: one cached set of
//! preference draws is evaluated at both price regimes of every query
//! (common random numbers). The same cache also answers choice-probability
//! queries, so marginals and transitions are consistent by construction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::oracle::{draw_preferences, UtilitySpec};
use crate::probability::{ChoiceModel, TransitionMatrix, TransitionModel};

/// Default draw count: a power of two makes every cell an exact binary
/// fraction `count / 2^20`, so matrix totals and marginal sums are exact.
pub const DEFAULT_MC_DRAWS: usize = 1 << 20;

/// A preference draw reduced to what the choice rule needs: the choice at
/// `(p, y)` maximizes `score[c] - beta * p_c` (income shifts all utilities
/// equally and drops out).
#[derive(Debug, Clone)]
struct CompactDraw {
    score: Vec<f64>,
    beta: f64,
}

impl CompactDraw {
    fn choose(&self, prices: &[f64]) -> usize {
        let mut best_c = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (c, p) in prices.iter().enumerate() {
            let u = self.score[c] - self.beta * p;
            if u > best_u {
                best_u = u;
                best_c = c;
            }
        }
        best_c
    }
}

/// Monte Carlo transition (and choice) probability model over a cached
/// draw population.
pub struct McTransitionModel {
    n: usize,
    draws: Vec<CompactDraw>,
    seed: u64,
}

/// Simulates `draws` preference types once and serves every subsequent
/// query from that cache.
pub fn mc_transition_model(
    spec: &UtilitySpec,
    draws: usize,
    seed: u64,
) -> Result<McTransitionModel> {
    if draws == 0 {
        return Err(invalid("draw count must be at least 1"));
    }
    let full = draw_preferences(spec, seed, draws)?;
    let compact = full
        .into_iter()
        .map(|d| CompactDraw {
            score: d.alpha.iter().zip(&d.epsilon).map(|(a, e)| a + e).collect(),
            beta: d.beta,
        })
        .collect();
    Ok(McTransitionModel {
        n: spec.n_alternatives(),
        draws: compact,
        seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct McMetadata {
    pub n_alternatives: usize,
    pub draws: usize,
    pub seed: u64,
}

impl McTransitionModel {
    pub fn draw_count(&self) -> usize {
        self.draws.len()
    }

    pub fn metadata(&self) -> McMetadata {
        McMetadata {
            n_alternatives: self.n,
            draws: self.draws.len(),
            seed: self.seed,
        }
    }

    fn count_transitions(&self, pre: &[f64], post: &[f64]) -> Vec<u64> {
        let n = self.n;
        self.draws
            .par_iter()
            .fold(
                || vec![0u64; n * n],
                |mut acc, draw| {
                    let i = draw.choose(pre);
                    let j = draw.choose(post);
                    acc[i * n + j] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; n * n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            )
    }
}

impl TransitionModel for McTransitionModel {
    fn n_alternatives(&self) -> usize {
        self.n
    }

    fn transition_matrix(&self, pre: &[f64], post: &[f64], income: f64) -> TransitionMatrix {
        let _ = income; // choices are income-invariant for affine utilities
        debug_assert_eq!(pre.len(), self.n);
        debug_assert_eq!(post.len(), self.n);
        // Evaluate in a canonical orientation so that swapping the price
        // arguments transposes the matrix exactly.
        let swap = pre
            .iter()
            .zip(post)
            .find_map(|(a, b)| a.partial_cmp(b).filter(|o| o.is_ne()))
            .map(|o| o == std::cmp::Ordering::Greater)
            .unwrap_or(false);
        let (first, second) = if swap { (post, pre) } else { (pre, post) };
        let counts = self.count_transitions(first, second);
        let total = self.draws.len() as f64;
        let cells: Vec<f64> = counts.iter().map(|c| *c as f64 / total).collect();
        let m = TransitionMatrix::from_cells(self.n, cells);
        if swap {
            m.transposed()
        } else {
            m
        }
    }
}

impl ChoiceModel for McTransitionModel {
    fn n_alternatives(&self) -> usize {
        self.n
    }

    fn choice_probabilities(&self, prices: &[f64], _income: f64) -> Vec<f64> {
        let n = self.n;
        let counts = self
            .draws
            .par_iter()
            .fold(
                || vec![0u64; n],
                |mut acc, draw| {
                    acc[draw.choose(prices)] += 1;
                    acc
                },
            )
            .reduce(
                || vec![0u64; n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            );
        let total = self.draws.len() as f64;
        counts.iter().map(|c| *c as f64 / total).collect()
    }
}
