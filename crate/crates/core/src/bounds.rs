//! Set identification of transition probabilities from choice
//! probabilities alone.
//!
//! With only cross-sectional data the joint law of pre- and post-change
//! choices is unobserved. Boole-Fréchet inequalities bound every cell, and
//! the monotonicity of utility in the numeraire tightens them: a
//! same-choice cell is bounded below by the choice probability at the
//! least favourable price vector, and a transition to an alternative that
//! became relatively more expensive is impossible outright. The bounds are
//! sharp cellwise.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::probability::{ChoiceModel, EnvelopeSide, TransitionMatrix, TransitionModel};

/// A closed probability interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ProbabilityInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower <= upper && upper <= 1.0) {
            return Err(invalid(format!(
                "invalid probability interval [{lower}, {upper}]"
            )));
        }
        Ok(ProbabilityInterval { lower, upper })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sharp bounds on the transition probability from `i` at `pre_prices` to
/// `j` at `post_prices`.
pub fn transition_bounds(
    model: &dyn ChoiceModel,
    i: usize,
    j: usize,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
) -> Result<ProbabilityInterval> {
    let n = model.n_alternatives();
    crate::error::check_same_len(pre_prices, post_prices)?;
    if pre_prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: pre_prices.len(),
        });
    }
    if i >= n || j >= n {
        return Err(invalid("alternative index out of range"));
    }

    let p_i_pre = model.choice_probability(i, pre_prices, income);
    if i == j {
        let p_i_post = model.choice_probability(i, post_prices, income);
        // least favourable prices: own price at its maximum, all the
        // others at their minimum
        let worst: Vec<f64> = pre_prices
            .iter()
            .zip(post_prices)
            .enumerate()
            .map(|(c, (a, b))| if c == i { a.max(*b) } else { a.min(*b) })
            .collect();
        let rp_lower = model.choice_probability(i, &worst, income);
        let lower = (p_i_pre + p_i_post - 1.0).max(rp_lower).max(0.0);
        let upper = p_i_pre.min(p_i_post);
        return ProbabilityInterval::new(lower.min(upper), upper);
    }

    // i became weakly cheaper and j weakly dearer: switching from i to j
    // would contradict monotonicity
    if pre_prices[i] >= post_prices[i] && pre_prices[j] <= post_prices[j] {
        return ProbabilityInterval::new(0.0, 0.0);
    }
    let p_j_post = model.choice_probability(j, post_prices, income);
    let lower = (p_i_pre + p_j_post - 1.0).max(0.0);
    let upper = p_i_pre.min(p_j_post);
    ProbabilityInterval::new(lower.min(upper), upper)
}

/// A transition "model" whose matrix holds the cellwise lower or upper
/// bounds. The cells are bounds, not a joint law, and need not sum to one;
/// substituting an envelope into a formula that is increasing in every
/// transition probability yields the corresponding bound on the formula.
#[derive(Debug, Clone)]
pub struct EnvelopeTransitionModel<M> {
    choice: M,
    side: EnvelopeSide,
}

impl<M> EnvelopeTransitionModel<M> {
    pub fn side(&self) -> EnvelopeSide {
        self.side
    }
}

/// Packages the set-identification bounds of a choice model as a
/// (lower, upper) pair of envelope transition models.
pub fn envelope_transition_models<M: ChoiceModel + Clone>(
    model: M,
) -> (EnvelopeTransitionModel<M>, EnvelopeTransitionModel<M>) {
    (
        EnvelopeTransitionModel {
            choice: model.clone(),
            side: EnvelopeSide::Lower,
        },
        EnvelopeTransitionModel {
            choice: model,
            side: EnvelopeSide::Upper,
        },
    )
}

impl<M: ChoiceModel> TransitionModel for EnvelopeTransitionModel<M> {
    fn n_alternatives(&self) -> usize {
        self.choice.n_alternatives()
    }

    fn transition_matrix(&self, pre: &[f64], post: &[f64], income: f64) -> TransitionMatrix {
        let n = self.choice.n_alternatives();
        let mut cells = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let interval =
                    transition_bounds(&self.choice, i, j, pre, post, income).expect("valid query");
                cells.push(match self.side {
                    EnvelopeSide::Lower => interval.lower,
                    EnvelopeSide::Upper => interval.upper,
                });
            }
        }
        TransitionMatrix::from_cells(n, cells)
    }

    fn envelope_side(&self) -> Option<EnvelopeSide> {
        Some(self.side)
    }
}
