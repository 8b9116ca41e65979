//! Choice- and transition-probability models.
//!
//! A choice model maps a budget `(p, y)` to the probability vector of each
//! alternative being optimal; a transition model maps a price pair
//! `(p, p', y)` to the joint matrix of being optimal at `p` and at `p'`
//! under a common preference draw. Analytic logit, Monte Carlo, and kernel
//! estimators all answer through the same two traits.

mod mc;
mod nw;

pub use mc::{mc_transition_model, McMetadata, McTransitionModel, DEFAULT_MC_DRAWS};
pub use nw::{
    nw_choice_estimator, nw_transition_estimator, BandwidthRule, NwChoiceModel, NwEvaluation,
    NwMetadata, NwTransitionModel, BANDWIDTH_FLOOR,
};

use serde::Serialize;

use crate::error::{check_same_len, invalid, Result};

/// Evaluator of choice probabilities at a budget set.
pub trait ChoiceModel: Send + Sync {
    fn n_alternatives(&self) -> usize;

    /// Probability vector over alternatives; entries in `[0, 1]` summing
    /// to one.
    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64>;

    fn choice_probability(&self, i: usize, prices: &[f64], income: f64) -> f64 {
        self.choice_probabilities(prices, income)[i]
    }
}

/// Which side of an identified set an envelope transition model reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeSide {
    Lower,
    Upper,
}

/// Evaluator of transition probabilities between two price regimes.
pub trait TransitionModel: Send + Sync {
    fn n_alternatives(&self) -> usize;

    fn transition_matrix(
        &self,
        pre_prices: &[f64],
        post_prices: &[f64],
        income: f64,
    ) -> TransitionMatrix;

    /// Set when the matrix entries are cellwise bounds rather than a joint
    /// law; envelope models need not sum to one.
    fn envelope_side(&self) -> Option<EnvelopeSide> {
        None
    }

    fn is_envelope(&self) -> bool {
        self.envelope_side().is_some()
    }
}

impl<M: ChoiceModel + ?Sized> ChoiceModel for &M {
    fn n_alternatives(&self) -> usize {
        (**self).n_alternatives()
    }
    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64> {
        (**self).choice_probabilities(prices, income)
    }
}

impl<M: ChoiceModel + ?Sized> ChoiceModel for std::sync::Arc<M> {
    fn n_alternatives(&self) -> usize {
        (**self).n_alternatives()
    }
    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64> {
        (**self).choice_probabilities(prices, income)
    }
}

impl<M: TransitionModel + ?Sized> TransitionModel for &M {
    fn n_alternatives(&self) -> usize {
        (**self).n_alternatives()
    }
    fn transition_matrix(&self, pre: &[f64], post: &[f64], income: f64) -> TransitionMatrix {
        (**self).transition_matrix(pre, post, income)
    }
    fn envelope_side(&self) -> Option<EnvelopeSide> {
        (**self).envelope_side()
    }
}

impl<M: TransitionModel + ?Sized> TransitionModel for std::sync::Arc<M> {
    fn n_alternatives(&self) -> usize {
        (**self).n_alternatives()
    }
    fn transition_matrix(&self, pre: &[f64], post: &[f64], income: f64) -> TransitionMatrix {
        (**self).transition_matrix(pre, post, income)
    }
    fn envelope_side(&self) -> Option<EnvelopeSide> {
        (**self).envelope_side()
    }
}

/// An `n x n` matrix of transition probabilities, row = pre-change choice,
/// column = post-change choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_cells(n: usize, cells: Vec<f64>) -> Self {
        assert_eq!(cells.len(), n * n);
        TransitionMatrix { n, cells }
    }

    pub fn n_alternatives(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Marginal probability of choosing `i` before the change.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.cells[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Marginal probability of choosing `j` after the change.
    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn transposed(&self) -> TransitionMatrix {
        let mut cells = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                cells[j * self.n + i] = self.get(i, j);
            }
        }
        TransitionMatrix { n: self.n, cells }
    }
}

/// Scales a non-negative vector to sum to one, exactly in floating point.
///
/// After dividing by the total, the last nonzero entry is replaced by the
/// exact complement of the prefix sum. Trailing zeros add exactly, and
/// `t + fl(1 - t)` rounds to one for any `t` in `[0, 1]`, so the
/// left-to-right sum of the result is exactly one while exact zeros are
/// preserved.
pub(crate) fn normalize_probs(raw: &mut [f64]) {
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        let uniform = 1.0 / raw.len() as f64;
        raw.fill(uniform);
    } else {
        for v in raw.iter_mut() {
            *v /= total;
        }
    }
    let Some(last) = raw.iter().rposition(|v| *v > 0.0) else {
        return;
    };
    for _ in 0..64 {
        let prefix: f64 = raw[..last].iter().sum();
        let complement = 1.0 - prefix;
        if complement >= 0.0 {
            raw[last] = complement;
            debug_assert_eq!(raw.iter().sum::<f64>(), 1.0);
            return;
        }
        // prefix overshoots one by a few ulps: shave the largest entry
        let argmax = raw[..last]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        raw[argmax] = raw[argmax].next_down();
    }
}

/// Multinomial logit: `P_i = exp(alpha_i + beta (y - p_i)) / sum_c ...`.
/// Independent of income, which shifts every exponent equally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitChoiceModel {
    alpha: Vec<f64>,
    beta: f64,
}

/// Builds the analytic logit choice model.
pub fn logit_choice_model(alpha: Vec<f64>, beta: f64) -> Result<LogitChoiceModel> {
    if alpha.is_empty() {
        return Err(invalid("logit model needs at least one alternative"));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(invalid("alpha entries must be finite"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta must be strictly positive"));
    }
    Ok(LogitChoiceModel { alpha, beta })
}

impl LogitChoiceModel {
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl ChoiceModel for LogitChoiceModel {
    fn n_alternatives(&self) -> usize {
        self.alpha.len()
    }

    fn choice_probabilities(&self, prices: &[f64], _income: f64) -> Vec<f64> {
        debug_assert_eq!(prices.len(), self.alpha.len());
        let scores: Vec<f64> = self
            .alpha
            .iter()
            .zip(prices)
            .map(|(a, p)| a - self.beta * p)
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        normalize_probs(&mut probs);
        probs
    }
}

/// Rewrites a transition query with distinct incomes `(p, p', y, y')` as an
/// equal-income query `(p, p'', y)` with `p'' = p' - y' + y`; the two
/// describe the same choice situations.
pub fn normalize_income(
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    post_income: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_same_len(pre_prices, post_prices)?;
    let shifted = post_prices
        .iter()
        .map(|p| p - post_income + income)
        .collect();
    Ok((pre_prices.to_vec(), shifted, income))
}

/// A choice model evaluated at a uniformly shifted budget:
/// `(p, y) -> inner(p - delta, y - delta)` componentwise. Residual incomes
/// are unchanged, so behaviour is identical; the shift re-anchors queries
/// whose outside-option coordinate has no sample variation.
#[derive(Debug, Clone)]
pub struct ShiftedChoiceModel<M> {
    inner: M,
    outside_option: usize,
    delta: f64,
}

/// Wraps `model` so that evaluation at `(p, y)` delegates to
/// `(p - delta, y - delta)`. `outside_option` records which alternative the
/// shift is compensating for.
pub fn outside_option_shift<M: ChoiceModel>(
    model: M,
    outside_option: usize,
    delta: f64,
) -> Result<ShiftedChoiceModel<M>> {
    if outside_option >= model.n_alternatives() {
        return Err(invalid("outside option index out of range"));
    }
    Ok(ShiftedChoiceModel {
        inner: model,
        outside_option,
        delta,
    })
}

impl<M> ShiftedChoiceModel<M> {
    pub fn outside_option(&self) -> usize {
        self.outside_option
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl<M: ChoiceModel> ChoiceModel for ShiftedChoiceModel<M> {
    fn n_alternatives(&self) -> usize {
        self.inner.n_alternatives()
    }

    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64> {
        let shifted: Vec<f64> = prices.iter().map(|p| p - self.delta).collect();
        self.inner
            .choice_probabilities(&shifted, income - self.delta)
    }
}

/// A choice model that re-anchors every query so the outside-option price
/// equals its trained baseline, choosing the shift per query. Lets a model
/// estimated without variation in that coordinate answer counterfactuals
/// that move it.
#[derive(Debug, Clone)]
pub struct OutsideOptionAnchor<M> {
    inner: M,
    outside_option: usize,
    baseline_price: f64,
}

pub fn anchor_outside_option<M: ChoiceModel>(
    model: M,
    outside_option: usize,
    baseline_price: f64,
) -> Result<OutsideOptionAnchor<M>> {
    if outside_option >= model.n_alternatives() {
        return Err(invalid("outside option index out of range"));
    }
    Ok(OutsideOptionAnchor {
        inner: model,
        outside_option,
        baseline_price,
    })
}

impl<M: ChoiceModel> ChoiceModel for OutsideOptionAnchor<M> {
    fn n_alternatives(&self) -> usize {
        self.inner.n_alternatives()
    }

    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64> {
        let delta = prices[self.outside_option] - self.baseline_price;
        let shifted: Vec<f64> = prices.iter().map(|p| p - delta).collect();
        self.inner.choice_probabilities(&shifted, income - delta)
    }
}
