//! Distribution formulas for welfare levels, welfare differences, and
//! their joints.
//!
//! Every formula evaluates choice or transition probabilities at
//! counterfactual price vectors built from the welfare family's virtual
//! prices. Levels are reported as CCDFs, differences (CV/EV) as CDFs.
//! Jump locations are solved from the monotone boundary equations
//! `p_c = virtual_price(c, w)` rather than read off the grid, and recorded
//! as explicit mass points.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    boundary_welfare, elementwise_min, CurveKind, DistributionCurve, MassPoint, NosFamily,
};
use crate::probability::{ChoiceModel, EnvelopeSide, TransitionMatrix, TransitionModel};

/// Conditioning events of probability below this threshold are refused
/// rather than divided by.
pub const DEGENERATE_CONDITIONING_THRESHOLD: f64 = 1e-12;

/// Negative values beyond this round-off allowance signal a quadrature
/// problem instead of being clipped.
const NEGATIVE_ROUNDOFF_ALLOWANCE: f64 = 1e-6;

/// Values this far outside `[0, 1]` signal a formula error. Anything
/// closer is clamped: conditional ratios built from independently
/// simulated or estimated numerator and denominator models legitimately
/// stray outside by sampling error.
const VALUE_SANITY_ALLOWANCE: f64 = 0.05;

/// Conditioning scheme for welfare-level distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LevelMode {
    /// Joint with choosing `post_choice` at the post prices; needs the
    /// transition model.
    Joint { post_choice: usize },
    /// Conditional on choosing `post_choice` at the post prices.
    ConditionalOnPostChoice { post_choice: usize },
    /// Conditional on the evaluated bundle itself being chosen at the
    /// given prices; `p_k` must equal `prices[k]`.
    ConditionalOnOwnChoice,
    /// Marginal distribution of welfare in bundle `k` at price `p_k`.
    MarginalAtBundle,
    /// Marginal distribution of welfare at the optimal bundle; `k` and
    /// `p_k` are ignored.
    MarginalAtOptimum,
}

/// Conditioning scheme for CV/EV distributions and the joint grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VariationMode {
    Joint {
        pre_choice: usize,
        post_choice: usize,
    },
    ConditionalOnBoth {
        pre_choice: usize,
        post_choice: usize,
    },
    ConditionalOnPre {
        pre_choice: usize,
    },
    ConditionalOnPost {
        post_choice: usize,
    },
    Marginal,
}

/// Numerical settings for the level-difference integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Step of the difference axis; also the central-difference step and
    /// the trapezoid spacing.
    pub step: f64,
    /// Derivative magnitudes below this fraction of the largest one seen
    /// terminate the lower bracket search.
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    /// Cap on support-bracketing doublings before giving up.
    #[serde(default = "default_max_doublings")]
    pub max_doublings: usize,
}

fn default_tail_tolerance() -> f64 {
    1e-9
}

fn default_max_doublings() -> usize {
    200
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            step: 0.01,
            tail_tolerance: default_tail_tolerance(),
            max_doublings: default_max_doublings(),
        }
    }
}

impl QuadratureSettings {
    /// Default step for a difference axis spanning `z_span`.
    pub fn for_z_span(z_span: f64) -> Self {
        QuadratureSettings {
            step: (z_span.abs() / 400.0).max(1e-9),
            ..Default::default()
        }
    }
}

fn with_kth(v: &[f64], k: usize, value: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    out[k] = value;
    out
}

fn check_conditioning(prob: f64) -> Result<f64> {
    if prob < DEGENERATE_CONDITIONING_THRESHOLD {
        Err(Error::DegenerateConditioning { prob })
    } else {
        Ok(prob)
    }
}

/// Assembles grid values and solved jump locations into a curve: values
/// are clipped for round-off, monotonicity is enforced in the direction
/// appropriate for the kind (and the envelope side, when the values came
/// from an envelope model), and coincident jumps are merged.
fn build_curve(
    kind: CurveKind,
    grid: &[f64],
    mut values: Vec<f64>,
    mut jumps: Vec<(f64, f64)>,
    envelope: Option<EnvelopeSide>,
) -> Result<DistributionCurve> {
    for v in values.iter_mut() {
        // envelope bounds are only informative inside [0, 1]; elsewhere a
        // gross violation is a computation error, a small one is noise
        if envelope.is_none() && (*v < -VALUE_SANITY_ALLOWANCE || *v > 1.0 + VALUE_SANITY_ALLOWANCE)
        {
            return Err(invalid(format!("curve value {v} outside [0, 1]")));
        }
        *v = v.clamp(0.0, 1.0);
    }
    // Bound curves stay valid bounds under the running extreme that
    // tightens them toward the monotone truth; for exact models every
    // repair is a no-op.
    match (kind, envelope) {
        (CurveKind::Ccdf, Some(EnvelopeSide::Upper)) => run_min_from_left(&mut values),
        (CurveKind::Ccdf, Some(EnvelopeSide::Lower)) => run_max_from_right(&mut values),
        (CurveKind::Cdf, Some(EnvelopeSide::Upper)) => run_min_from_right(&mut values),
        (CurveKind::Cdf, Some(EnvelopeSide::Lower)) => run_max_from_left(&mut values),
        (CurveKind::Ccdf, None) => run_min_from_left(&mut values),
        (CurveKind::Cdf, None) => run_max_from_left(&mut values),
    }
    jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    let mut mass_points: Vec<MassPoint> = Vec::new();
    for (loc, jump) in jumps {
        if !(jump > 0.0) || loc < lo || loc > hi {
            continue;
        }
        match mass_points.last_mut() {
            Some(last) if last.location == loc => last.jump = (last.jump + jump).min(1.0),
            _ => mass_points.push(MassPoint {
                location: loc,
                jump: jump.min(1.0),
            }),
        }
    }
    DistributionCurve::new(kind, grid.to_vec(), values, mass_points)
}

fn run_min_from_left(values: &mut [f64]) {
    for i in 1..values.len() {
        values[i] = values[i].min(values[i - 1]);
    }
}

fn run_max_from_left(values: &mut [f64]) {
    for i in 1..values.len() {
        values[i] = values[i].max(values[i - 1]);
    }
}

fn run_max_from_right(values: &mut [f64]) {
    for i in (0..values.len().saturating_sub(1)).rev() {
        values[i] = values[i].max(values[i + 1]);
    }
}

fn run_min_from_right(values: &mut [f64]) {
    for i in (0..values.len().saturating_sub(1)).rev() {
        values[i] = values[i].min(values[i + 1]);
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("evaluation grid must be non-empty"));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid("evaluation grid must be strictly increasing"));
    }
    Ok(())
}

/// A strictly increasing grid over `[lo, hi]` with every boundary location
/// inserted as an exact grid point, so curves are sampled on both sides of
/// each jump.
pub fn grid_with_boundaries(lo: f64, hi: f64, points: usize, boundaries: &[f64]) -> Vec<f64> {
    let mut grid = crate::model::default_grid(lo, hi, points);
    for b in boundaries {
        if *b > grid[0] && *b < *grid.last().unwrap() {
            grid.push(*b);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// CCDF of the welfare level of bundle `k` priced at `p_k`, in the
/// conditioning scheme of `mode`.
///
/// `prices` plays the role the mode requires: the post-change prices for
/// the joint and conditional-on-post modes, and the prices at which the
/// own choice is made for the own-choice and at-optimum modes.
#[allow(clippy::too_many_arguments)]
pub fn level_distribution(
    trans: &dyn TransitionModel,
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    k: usize,
    p_k: f64,
    prices: &[f64],
    income: f64,
    mode: LevelMode,
    grid: &[f64],
) -> Result<DistributionCurve> {
    validate_grid(grid)?;
    let n = family.n_alternatives();
    if prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: prices.len(),
        });
    }
    let needs_k = !matches!(mode, LevelMode::MarginalAtOptimum);
    if needs_k && k >= n {
        return Err(invalid("bundle index out of range"));
    }
    if matches!(mode, LevelMode::ConditionalOnOwnChoice) && p_k != prices[k] {
        return Err(invalid(
            "own-choice conditioning requires p_k to equal prices[k]",
        ));
    }

    let denominator = match mode {
        LevelMode::ConditionalOnPostChoice { post_choice } => {
            check_conditioning(choice.choice_probability(post_choice, prices, income))?
        }
        LevelMode::ConditionalOnOwnChoice => {
            check_conditioning(choice.choice_probability(k, prices, income))?
        }
        _ => 1.0,
    };

    let value_at = |w: f64| -> f64 {
        let vp = family.virtual_prices(w, income);
        match mode {
            LevelMode::Joint { post_choice }
            | LevelMode::ConditionalOnPostChoice { post_choice } => {
                if p_k <= vp[k] {
                    let counterfactual = with_kth(&vp, k, p_k);
                    trans
                        .transition_matrix(prices, &counterfactual, income)
                        .get(post_choice, k)
                        / denominator
                } else {
                    0.0
                }
            }
            LevelMode::ConditionalOnOwnChoice => {
                if p_k <= vp[k] {
                    let capped = elementwise_min(prices, &vp).expect("same length");
                    choice.choice_probability(k, &capped, income) / denominator
                } else {
                    0.0
                }
            }
            LevelMode::MarginalAtBundle => {
                if p_k <= vp[k] {
                    let counterfactual = with_kth(&vp, k, p_k);
                    choice.choice_probability(k, &counterfactual, income)
                } else {
                    0.0
                }
            }
            LevelMode::MarginalAtOptimum => {
                let capped = elementwise_min(prices, &vp).expect("same length");
                let probs = choice.choice_probabilities(&capped, income);
                (0..n)
                    .filter(|c| prices[*c] <= vp[*c])
                    .map(|c| probs[c])
                    .sum()
            }
        }
    };

    let values: Vec<f64> = grid.iter().map(|w| value_at(*w)).collect();

    let mut jumps = Vec::new();
    match mode {
        LevelMode::MarginalAtOptimum => {
            for c in 0..n {
                if let Some(wc) = boundary_welfare(family, c, prices[c], income) {
                    let vp = family.virtual_prices(wc, income);
                    let capped = elementwise_min(prices, &vp).expect("same length");
                    jumps.push((wc, choice.choice_probability(c, &capped, income)));
                }
            }
        }
        _ => {
            if let Some(wk) = boundary_welfare(family, k, p_k, income) {
                jumps.push((wk, value_at(wk)));
            }
        }
    }

    build_curve(
        CurveKind::Ccdf,
        grid,
        values,
        jumps,
        trans_envelope(trans, mode),
    )
}

fn trans_envelope(trans: &dyn TransitionModel, mode: LevelMode) -> Option<EnvelopeSide> {
    match mode {
        LevelMode::Joint { .. } | LevelMode::ConditionalOnPostChoice { .. } => {
            trans.envelope_side()
        }
        _ => None,
    }
}

/// Joint probability of welfare at least `w` in the pre-change optimum `i`
/// and welfare at least `z` in the post-change optimum `j`, with the two
/// levels measured by possibly different families.
#[allow(clippy::too_many_arguments)]
pub fn joint_before_after(
    trans: &dyn TransitionModel,
    family_pre: &dyn NosFamily,
    family_post: &dyn NosFamily,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    i: usize,
    j: usize,
    w: f64,
    z: f64,
) -> Result<f64> {
    let n = trans.n_alternatives();
    crate::error::check_same_len(pre_prices, post_prices)?;
    if pre_prices.len() != n
        || family_pre.n_alternatives() != n
        || family_post.n_alternatives() != n
    {
        return Err(invalid("model and family dimensions disagree"));
    }
    if i >= n || j >= n {
        return Err(invalid("alternative index out of range"));
    }
    let vp_w = family_pre.virtual_prices(w, income);
    let vp_z = family_post.virtual_prices(z, income);
    if pre_prices[i] > vp_w[i] || post_prices[j] > vp_z[j] {
        return Ok(0.0);
    }
    let a = elementwise_min(pre_prices, &vp_w)?;
    let b = elementwise_min(post_prices, &vp_z)?;
    Ok(trans.transition_matrix(&a, &b, income).get(i, j))
}

/// Joint probability of pre-change welfare at least `w` and a welfare
/// change of at most `z`, the two measured by the same pair of families as
/// `joint_before_after`.
///
/// The post-level axis is integrated out: writing the inner function as a
/// smooth part times the indicator `post_j <= virtual_price_j(s)`, the
/// indicator's jump is added in closed form while the smooth part is
/// integrated by trapezoid with central finite differences.
#[allow(clippy::too_many_arguments)]
pub fn level_difference_joint(
    trans: &dyn TransitionModel,
    family_pre: &dyn NosFamily,
    family_post: &dyn NosFamily,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    i: usize,
    j: usize,
    w: f64,
    z: f64,
    quad: &QuadratureSettings,
) -> Result<f64> {
    let n = trans.n_alternatives();
    crate::error::check_same_len(pre_prices, post_prices)?;
    if pre_prices.len() != n
        || family_pre.n_alternatives() != n
        || family_post.n_alternatives() != n
    {
        return Err(invalid("model and family dimensions disagree"));
    }
    if i >= n || j >= n {
        return Err(invalid("alternative index out of range"));
    }
    if !(quad.step > 0.0) {
        return Err(invalid("quadrature step must be positive"));
    }

    // Largest pre-level at which bundle i stays affordable by family_pre.
    let Some(w_cap) = boundary_welfare(family_pre, i, pre_prices[i], income) else {
        return Ok(0.0);
    };
    if w > w_cap {
        return Ok(0.0);
    }
    // Largest post-level at which bundle j stays affordable by family_post.
    let Some(s_cap) = boundary_welfare(family_post, j, post_prices[j], income) else {
        return Ok(0.0);
    };

    // Smooth inner function: no indicator on the post-level axis.
    let vp_w = family_pre.virtual_prices(w, income);
    let smooth = |x: f64, s: f64| -> f64 {
        let vp_x = family_pre.virtual_prices(x, income);
        let mut a = elementwise_min(pre_prices, &vp_w).expect("same length");
        for (av, xv) in a.iter_mut().zip(&vp_x) {
            *av = av.min(*xv);
        }
        let vp_s = family_post.virtual_prices(s, income);
        let b = elementwise_min(post_prices, &vp_s).expect("same length");
        trans.transition_matrix(&a, &b, income).get(i, j)
    };

    // The indicator's jump at s = s_cap lands at x = s_cap - z.
    let x_atom = s_cap - z;
    let x_hi = w_cap.min(x_atom);
    let atom = if x_atom <= w_cap {
        smooth(x_atom, s_cap)
    } else {
        0.0
    };

    // Lower end of the smooth support: expand until the derivative of the
    // inner function vanishes.
    let step = quad.step;
    let deriv = |x: f64| -> f64 {
        let s = x + z;
        -(smooth(x, s + step) - smooth(x, s - step)) / (2.0 * step)
    };
    let mut width = step.max(1e-3);
    let mut x_lo = x_hi - width;
    let mut bracketed = false;
    let mut scale = deriv(x_hi).abs().max(1e-300);
    for _ in 0..quad.max_doublings {
        let d = deriv(x_lo).abs();
        scale = scale.max(d);
        if d <= quad.tail_tolerance * scale.max(1.0) {
            bracketed = true;
            break;
        }
        width *= 2.0;
        x_lo = x_hi - width;
    }
    if !bracketed {
        return Err(Error::IntegrationDomain(format!(
            "derivative of the inner function does not vanish below x = {x_lo}"
        )));
    }

    let steps = ((x_hi - x_lo) / step).ceil().max(1.0) as usize;
    let dx = (x_hi - x_lo) / steps as f64;
    let mut integral = 0.0;
    let mut prev = deriv(x_lo);
    for t in 1..=steps {
        let x = x_lo + dx * t as f64;
        let cur = deriv(x);
        integral += 0.5 * (prev + cur) * dx;
        prev = cur;
    }

    let value = integral + atom;
    if value < -NEGATIVE_ROUNDOFF_ALLOWANCE {
        return Err(Error::IntegrationDomain(format!(
            "integral came out at {value}, beyond round-off"
        )));
    }
    Ok(value.clamp(0.0, 1.0))
}

/// CDF of the compensating variation under the price change
/// `pre_prices -> post_prices`.
pub fn cv_distribution(
    trans: &dyn TransitionModel,
    choice: &dyn ChoiceModel,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    mode: VariationMode,
    grid: &[f64],
) -> Result<DistributionCurve> {
    variation_distribution(
        trans,
        choice,
        pre_prices,
        post_prices,
        income,
        mode,
        grid,
        VariationFlavor::Cv,
    )
}

/// CDF of the equivalent variation under the price change
/// `pre_prices -> post_prices`.
pub fn ev_distribution(
    trans: &dyn TransitionModel,
    choice: &dyn ChoiceModel,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    mode: VariationMode,
    grid: &[f64],
) -> Result<DistributionCurve> {
    variation_distribution(
        trans,
        choice,
        pre_prices,
        post_prices,
        income,
        mode,
        grid,
        VariationFlavor::Ev,
    )
}

#[derive(Clone, Copy, PartialEq)]
enum VariationFlavor {
    Cv,
    Ev,
}

/// Shared CV/EV machinery. The EV formulas mirror the CV ones with the
/// roles of the two price regimes exchanged: the counterfactual vector
/// caps the post prices at `pre + z`, the indicator constrains the post
/// choice, and the pre/post conditioning variants swap accordingly.
#[allow(clippy::too_many_arguments)]
fn variation_distribution(
    trans: &dyn TransitionModel,
    choice: &dyn ChoiceModel,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    mode: VariationMode,
    grid: &[f64],
    flavor: VariationFlavor,
) -> Result<DistributionCurve> {
    validate_grid(grid)?;
    crate::error::check_same_len(pre_prices, post_prices)?;
    let n = trans.n_alternatives();
    if pre_prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: pre_prices.len(),
        });
    }
    check_mode_indices(&mode, n)?;
    if trans.is_envelope() && matches!(mode, VariationMode::ConditionalOnBoth { .. }) {
        return Err(invalid(
            "conditioning on both choices divides by a transition probability, \
             which envelope bounds do not point-identify",
        ));
    }

    let denominator = match mode {
        VariationMode::Joint { .. } | VariationMode::Marginal => 1.0,
        VariationMode::ConditionalOnBoth {
            pre_choice,
            post_choice,
        } => check_conditioning(
            trans
                .transition_matrix(pre_prices, post_prices, income)
                .get(pre_choice, post_choice),
        )?,
        VariationMode::ConditionalOnPre { pre_choice } => {
            check_conditioning(choice.choice_probability(pre_choice, pre_prices, income))?
        }
        VariationMode::ConditionalOnPost { post_choice } => {
            check_conditioning(choice.choice_probability(post_choice, post_prices, income))?
        }
    };

    // Indicator boundary for each alternative: the z at which it enters.
    let entry: Vec<f64> = match flavor {
        VariationFlavor::Cv => pre_prices
            .iter()
            .zip(post_prices)
            .map(|(p, pp)| p - pp)
            .collect(),
        VariationFlavor::Ev => post_prices
            .iter()
            .zip(pre_prices)
            .map(|(pp, p)| pp - p)
            .collect(),
    };

    let value_at = |z: f64| -> f64 {
        let raw = match flavor {
            VariationFlavor::Cv => {
                let capped: Vec<f64> = pre_prices
                    .iter()
                    .zip(post_prices)
                    .map(|(p, pp)| p.min(pp + z))
                    .collect();
                match mode {
                    VariationMode::Joint {
                        pre_choice,
                        post_choice,
                    }
                    | VariationMode::ConditionalOnBoth {
                        pre_choice,
                        post_choice,
                    } => {
                        if z >= entry[pre_choice] {
                            trans
                                .transition_matrix(&capped, post_prices, income)
                                .get(pre_choice, post_choice)
                        } else {
                            0.0
                        }
                    }
                    VariationMode::ConditionalOnPre { pre_choice } => {
                        if z >= entry[pre_choice] {
                            choice.choice_probability(pre_choice, &capped, income)
                        } else {
                            0.0
                        }
                    }
                    VariationMode::ConditionalOnPost { post_choice } => {
                        let m = trans.transition_matrix(&capped, post_prices, income);
                        (0..n)
                            .filter(|i| z >= entry[*i])
                            .map(|i| m.get(i, post_choice))
                            .sum()
                    }
                    VariationMode::Marginal => {
                        let probs = choice.choice_probabilities(&capped, income);
                        (0..n).filter(|i| z >= entry[*i]).map(|i| probs[i]).sum()
                    }
                }
            }
            VariationFlavor::Ev => {
                let capped: Vec<f64> = pre_prices
                    .iter()
                    .zip(post_prices)
                    .map(|(p, pp)| pp.min(p + z))
                    .collect();
                match mode {
                    VariationMode::Joint {
                        pre_choice,
                        post_choice,
                    }
                    | VariationMode::ConditionalOnBoth {
                        pre_choice,
                        post_choice,
                    } => {
                        if z >= entry[post_choice] {
                            trans
                                .transition_matrix(pre_prices, &capped, income)
                                .get(pre_choice, post_choice)
                        } else {
                            0.0
                        }
                    }
                    VariationMode::ConditionalOnPre { pre_choice } => {
                        let m = trans.transition_matrix(pre_prices, &capped, income);
                        (0..n)
                            .filter(|j| z >= entry[*j])
                            .map(|j| m.get(pre_choice, j))
                            .sum()
                    }
                    VariationMode::ConditionalOnPost { post_choice } => {
                        if z >= entry[post_choice] {
                            choice.choice_probability(post_choice, &capped, income)
                        } else {
                            0.0
                        }
                    }
                    VariationMode::Marginal => {
                        let probs = choice.choice_probabilities(&capped, income);
                        (0..n).filter(|j| z >= entry[*j]).map(|j| probs[j]).sum()
                    }
                }
            }
        };
        raw / denominator
    };

    let values: Vec<f64> = grid.iter().map(|z| value_at(*z)).collect();

    // Jump bookkeeping: the curve jumps where an indicator flips. For CV
    // the indicators constrain the pre-change alternative, for EV the
    // post-change one; modes fixing that alternative have one boundary,
    // the summed modes have one per alternative. Coincident boundaries
    // are deduplicated before differencing so jumps are not double
    // counted.
    let relevant: Vec<usize> = match (flavor, mode) {
        (VariationFlavor::Cv, VariationMode::Joint { pre_choice, .. })
        | (VariationFlavor::Cv, VariationMode::ConditionalOnBoth { pre_choice, .. })
        | (VariationFlavor::Cv, VariationMode::ConditionalOnPre { pre_choice }) => {
            vec![pre_choice]
        }
        (VariationFlavor::Cv, _) => (0..n).collect(),
        (VariationFlavor::Ev, VariationMode::Joint { post_choice, .. })
        | (VariationFlavor::Ev, VariationMode::ConditionalOnBoth { post_choice, .. })
        | (VariationFlavor::Ev, VariationMode::ConditionalOnPost { post_choice }) => {
            vec![post_choice]
        }
        (VariationFlavor::Ev, _) => (0..n).collect(),
    };
    let mut locations: Vec<f64> = relevant.iter().map(|c| entry[*c]).collect();
    locations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    locations.dedup();
    let jumps: Vec<(f64, f64)> = locations
        .iter()
        .map(|loc| (*loc, value_at(*loc) - value_at(next_below(*loc))))
        .collect();

    build_curve(
        CurveKind::Cdf,
        grid,
        values,
        jumps,
        variation_envelope(trans, mode, flavor),
    )
}

fn next_below(x: f64) -> f64 {
    // a point strictly below x but well clear of solver tolerance
    x - 1e-7 * (1.0 + x.abs())
}

/// Envelope side to propagate into curve repair, when the mode's value
/// actually flows through the transition model.
fn variation_envelope(
    trans: &dyn TransitionModel,
    mode: VariationMode,
    flavor: VariationFlavor,
) -> Option<EnvelopeSide> {
    let uses_trans = match (flavor, mode) {
        (VariationFlavor::Cv, VariationMode::ConditionalOnPre { .. })
        | (VariationFlavor::Cv, VariationMode::Marginal)
        | (VariationFlavor::Ev, VariationMode::ConditionalOnPost { .. })
        | (VariationFlavor::Ev, VariationMode::Marginal) => false,
        _ => true,
    };
    if uses_trans {
        trans.envelope_side()
    } else {
        None
    }
}

fn check_mode_indices(mode: &VariationMode, n: usize) -> Result<()> {
    let ok = match *mode {
        VariationMode::Joint {
            pre_choice,
            post_choice,
        }
        | VariationMode::ConditionalOnBoth {
            pre_choice,
            post_choice,
        } => pre_choice < n && post_choice < n,
        VariationMode::ConditionalOnPre { pre_choice } => pre_choice < n,
        VariationMode::ConditionalOnPost { post_choice } => post_choice < n,
        VariationMode::Marginal => true,
    };
    if ok {
        Ok(())
    } else {
        Err(invalid("alternative index out of range"))
    }
}

/// A joint distribution sampled on a rectangular `(w, z)` grid: CCDF
/// direction along `w` (non-increasing), CDF direction along `z`
/// (non-decreasing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointGridResult {
    w_grid: Vec<f64>,
    z_grid: Vec<f64>,
    values: Vec<f64>, // row-major, w index first
}

impl JointGridResult {
    pub fn new(w_grid: Vec<f64>, z_grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        validate_grid(&w_grid)?;
        validate_grid(&z_grid)?;
        if values.len() != w_grid.len() * z_grid.len() {
            return Err(Error::LengthMismatch {
                expected: w_grid.len() * z_grid.len(),
                got: values.len(),
            });
        }
        for v in values.iter_mut() {
            if *v < -VALUE_SANITY_ALLOWANCE || *v > 1.0 + VALUE_SANITY_ALLOWANCE {
                return Err(invalid(format!("joint value {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let (nw, nz) = (w_grid.len(), z_grid.len());
        for iz in 0..nz {
            for iw in 1..nw {
                if values[iw * nz + iz] > values[(iw - 1) * nz + iz] + VALUE_SANITY_ALLOWANCE {
                    return Err(invalid("joint values increase along the level axis"));
                }
            }
        }
        for iw in 0..nw {
            for iz in 1..nz {
                if values[iw * nz + iz] + VALUE_SANITY_ALLOWANCE < values[iw * nz + iz - 1] {
                    return Err(invalid("joint values decrease along the difference axis"));
                }
            }
        }
        // enforce exact monotonicity: non-increasing along w first, then
        // non-decreasing along z, which preserves the w direction
        for iz in 0..nz {
            for iw in 1..nw {
                let above = values[(iw - 1) * nz + iz];
                let cell = &mut values[iw * nz + iz];
                *cell = cell.min(above);
            }
        }
        for iw in 0..nw {
            for iz in 1..nz {
                let left = values[iw * nz + iz - 1];
                let cell = &mut values[iw * nz + iz];
                *cell = cell.max(left);
            }
        }
        Ok(JointGridResult {
            w_grid,
            z_grid,
            values,
        })
    }

    pub fn w_grid(&self) -> &[f64] {
        &self.w_grid
    }

    pub fn z_grid(&self) -> &[f64] {
        &self.z_grid
    }

    pub fn get(&self, iw: usize, iz: usize) -> f64 {
        self.values[iw * self.z_grid.len() + iz]
    }

    /// Writes `w,z,value` CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "w,z,value")?;
        for (iw, wv) in self.w_grid.iter().enumerate() {
            for (iz, zv) in self.z_grid.iter().enumerate() {
                writeln!(w, "{},{},{}", wv, zv, self.get(iw, iz))?;
            }
        }
        Ok(())
    }
}

/// Joint distribution of the money-metric level (post prices as reference)
/// and the CV: `Pr[w <= W, CV <= z]` jointly with or conditional on the
/// observed choices per `mode`. Marginal and conditional-on-pre variants
/// derive their choice probabilities from the transition model's row sums.
#[allow(clippy::too_many_arguments)]
pub fn mmu_cv_joint(
    trans: &dyn TransitionModel,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    mode: VariationMode,
    w_grid: &[f64],
    z_grid: &[f64],
) -> Result<JointGridResult> {
    crate::error::check_same_len(pre_prices, post_prices)?;
    let n = trans.n_alternatives();
    if pre_prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: pre_prices.len(),
        });
    }
    check_mode_indices(&mode, n)?;
    guard_envelope_conditioning(trans, &mode)?;
    validate_grid(w_grid)?;
    validate_grid(z_grid)?;

    let base = trans.transition_matrix(pre_prices, post_prices, income);
    let denominator = conditioning_from_matrix(&base, &mode)?;

    // The matrix depends on (w, z) only through m = min(z, income - w).
    let mut cache: HashMap<u64, TransitionMatrix> = HashMap::new();
    let mut values = Vec::with_capacity(w_grid.len() * z_grid.len());
    for w in w_grid {
        for z in z_grid {
            let m = z.min(income - w);
            let matrix = cache.entry(m.to_bits()).or_insert_with(|| {
                let capped: Vec<f64> = pre_prices
                    .iter()
                    .zip(post_prices)
                    .map(|(p, pp)| p.min(pp + m))
                    .collect();
                trans.transition_matrix(&capped, post_prices, income)
            });
            let admit = |i: usize| pre_prices[i] <= post_prices[i] + m;
            let raw = match mode {
                VariationMode::Joint {
                    pre_choice,
                    post_choice,
                }
                | VariationMode::ConditionalOnBoth {
                    pre_choice,
                    post_choice,
                } => {
                    if admit(pre_choice) {
                        matrix.get(pre_choice, post_choice)
                    } else {
                        0.0
                    }
                }
                VariationMode::ConditionalOnPre { pre_choice } => {
                    if admit(pre_choice) {
                        matrix.row_sum(pre_choice)
                    } else {
                        0.0
                    }
                }
                VariationMode::ConditionalOnPost { post_choice } => (0..n)
                    .filter(|i| admit(*i))
                    .map(|i| matrix.get(i, post_choice))
                    .sum(),
                VariationMode::Marginal => (0..n)
                    .filter(|i| admit(*i))
                    .map(|i| matrix.row_sum(i))
                    .sum(),
            };
            values.push(raw / denominator);
        }
    }
    JointGridResult::new(w_grid.to_vec(), z_grid.to_vec(), values)
}

/// Joint distribution of the money-metric level with the initial prices as
/// reference and the EV: the level part collapses to the indicator
/// `w <= income`, the EV part mirrors `ev_distribution`.
#[allow(clippy::too_many_arguments)]
pub fn mmu_ev_joint(
    trans: &dyn TransitionModel,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    mode: VariationMode,
    w_grid: &[f64],
    z_grid: &[f64],
) -> Result<JointGridResult> {
    crate::error::check_same_len(pre_prices, post_prices)?;
    let n = trans.n_alternatives();
    if pre_prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: pre_prices.len(),
        });
    }
    check_mode_indices(&mode, n)?;
    guard_envelope_conditioning(trans, &mode)?;
    validate_grid(w_grid)?;
    validate_grid(z_grid)?;

    let base = trans.transition_matrix(pre_prices, post_prices, income);
    let denominator = conditioning_from_matrix(&base, &mode)?;

    let mut cache: HashMap<u64, TransitionMatrix> = HashMap::new();
    let mut values = Vec::with_capacity(w_grid.len() * z_grid.len());
    for w in w_grid {
        for z in z_grid {
            if *w > income {
                values.push(0.0);
                continue;
            }
            let matrix = cache.entry(z.to_bits()).or_insert_with(|| {
                let capped: Vec<f64> = pre_prices
                    .iter()
                    .zip(post_prices)
                    .map(|(p, pp)| pp.min(p + z))
                    .collect();
                trans.transition_matrix(pre_prices, &capped, income)
            });
            let admit = |j: usize| post_prices[j] <= pre_prices[j] + z;
            let raw = match mode {
                VariationMode::Joint {
                    pre_choice,
                    post_choice,
                }
                | VariationMode::ConditionalOnBoth {
                    pre_choice,
                    post_choice,
                } => {
                    if admit(post_choice) {
                        matrix.get(pre_choice, post_choice)
                    } else {
                        0.0
                    }
                }
                VariationMode::ConditionalOnPre { pre_choice } => (0..n)
                    .filter(|j| admit(*j))
                    .map(|j| matrix.get(pre_choice, j))
                    .sum(),
                VariationMode::ConditionalOnPost { post_choice } => {
                    if admit(post_choice) {
                        matrix.col_sum(post_choice)
                    } else {
                        0.0
                    }
                }
                VariationMode::Marginal => (0..n)
                    .filter(|j| admit(*j))
                    .map(|j| matrix.col_sum(j))
                    .sum(),
            };
            values.push(raw / denominator);
        }
    }
    JointGridResult::new(w_grid.to_vec(), z_grid.to_vec(), values)
}

fn guard_envelope_conditioning(trans: &dyn TransitionModel, mode: &VariationMode) -> Result<()> {
    if trans.is_envelope() && !matches!(mode, VariationMode::Joint { .. } | VariationMode::Marginal)
    {
        return Err(invalid(
            "conditional modes divide by probabilities that envelope bounds do not point-identify",
        ));
    }
    Ok(())
}

fn conditioning_from_matrix(base: &TransitionMatrix, mode: &VariationMode) -> Result<f64> {
    match *mode {
        VariationMode::Joint { .. } | VariationMode::Marginal => Ok(1.0),
        VariationMode::ConditionalOnBoth {
            pre_choice,
            post_choice,
        } => check_conditioning(base.get(pre_choice, post_choice)),
        VariationMode::ConditionalOnPre { pre_choice } => {
            check_conditioning(base.row_sum(pre_choice))
        }
        VariationMode::ConditionalOnPost { post_choice } => {
            check_conditioning(base.col_sum(post_choice))
        }
    }
}

/// A curve-integrated mean with tail diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanResult {
    pub mean: f64,
    /// Set when the curve's tails are not fully resolved on its grid and
    /// the mean is therefore truncated.
    pub truncated_tail: bool,
}

/// Bounds on a mean obtained from a pair of envelope curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanInterval {
    pub lower: f64,
    pub upper: f64,
    pub truncated_tail: bool,
}

const TAIL_ERROR_DEFECT: f64 = 0.25;
const TAIL_WARN_DEFECT: f64 = 1e-3;

/// Mean of the distribution represented by `curve`, by trapezoid on the
/// grid with mass-point corrections: a jump contributes zero spurious area
/// because the curve is re-sampled on both sides of it at the same
/// abscissa.
pub fn mean_from_curve(curve: &DistributionCurve) -> Result<MeanResult> {
    let grid = curve.grid();
    let values = curve.values();
    let (left_defect, right_defect) = match curve.kind() {
        CurveKind::Ccdf => ((1.0 - values[0]).abs(), values.last().unwrap().abs()),
        CurveKind::Cdf => (values[0].abs(), (1.0 - values.last().unwrap()).abs()),
    };
    if left_defect > TAIL_ERROR_DEFECT || right_defect > TAIL_ERROR_DEFECT {
        return Err(Error::NonintegrableCurve(format!(
            "tail defects {left_defect:.3} / {right_defect:.3} leave the support unresolved"
        )));
    }
    let truncated = left_defect > TAIL_WARN_DEFECT || right_defect > TAIL_WARN_DEFECT;

    // Augmented sample list: grid points plus both sides of every atom.
    let mut pts: Vec<(f64, f64)> = grid.iter().cloned().zip(values.iter().cloned()).collect();
    for mp in curve.mass_points() {
        let on_grid = grid.binary_search_by(|g| g.partial_cmp(&mp.location).unwrap());
        match (curve.kind(), on_grid) {
            // CCDF sampled at the atom holds the pre-drop value; append
            // the post-drop value at the same abscissa.
            (CurveKind::Ccdf, Ok(idx)) => {
                pts.push((mp.location, (values[idx] - mp.jump).max(0.0)));
            }
            // CDF sampled at the atom holds the post-jump value; prepend
            // the pre-jump value.
            (CurveKind::Cdf, Ok(idx)) => {
                pts.push((mp.location, (values[idx] - mp.jump).max(0.0)));
            }
            // Atom between grid points: split the jump around the
            // interpolated value.
            (_, Err(_)) => {
                let mid = curve.value_at(mp.location);
                pts.push((mp.location, (mid + 0.5 * mp.jump).min(1.0)));
                pts.push((mp.location, (mid - 0.5 * mp.jump).max(0.0)));
            }
        }
    }
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    if curve.kind() == CurveKind::Cdf {
        // pre-jump value first means ascending value order at equal
        // abscissa for a CDF
        pts.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.partial_cmp(&b.1).unwrap())
        });
    }

    let mut area = 0.0;
    for pair in pts.windows(2) {
        let ((x0, v0), (x1, v1)) = (pair[0], pair[1]);
        area += 0.5 * (v0 + v1) * (x1 - x0);
    }
    let (a, b) = (grid[0], *grid.last().unwrap());
    let mean = match curve.kind() {
        // E = a + integral of the CCDF over [a, b] when tails resolve
        CurveKind::Ccdf => a + area,
        // E = b - integral of the CDF over [a, b]
        CurveKind::Cdf => b - area,
    };
    Ok(MeanResult {
        mean,
        truncated_tail: truncated,
    })
}

/// Mean interval from a pair of bound curves: the curves bracket the true
/// distribution function pointwise, so their means bracket the true mean.
pub fn mean_interval_from_curves(
    curve_a: &DistributionCurve,
    curve_b: &DistributionCurve,
) -> Result<MeanInterval> {
    let a = mean_from_curve(curve_a)?;
    let b = mean_from_curve(curve_b)?;
    Ok(MeanInterval {
        lower: a.mean.min(b.mean),
        upper: a.mean.max(b.mean),
        truncated_tail: a.truncated_tail || b.truncated_tail,
    })
}
