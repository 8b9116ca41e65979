//! Nadaraya-Watson kernel regression of choice and transition
//! probabilities from simulated datasets.
//!
//! One bandwidth vector is shared across all outcome categories, so the
//! estimated probabilities add up to one at every query point. The kernel
//! is product Gaussian over the regressor; the bandwidth follows the
//! rule-of-thumb `h_d = 1.06 sigma_d N^(-1/(4+D))` with `D` the regressor
//! dimension, falling back to a fixed floor for zero-variance coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::SimulatedDataset;
use crate::probability::{normalize_probs, ChoiceModel, TransitionMatrix, TransitionModel};

/// Bandwidth used for a regressor coordinate with no sample variation.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Queries farther than this many bandwidths from every sample point are
/// flagged as extrapolation.
const EXTRAPOLATION_BANDWIDTHS: f64 = 5.0;

/// Bandwidth selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `1.06 sigma_d N^(-1/(4+D))` per coordinate.
    RuleOfThumb,
    /// One fixed bandwidth for every coordinate.
    Fixed { h: f64 },
}

/// Estimator provenance exported alongside fitted models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NwMetadata {
    pub n_alternatives: usize,
    pub sample_size: usize,
    pub regressor_dim: usize,
    pub bandwidths: Vec<f64>,
    pub kernel: String,
}

/// A probability vector with an extrapolation flag.
#[derive(Debug, Clone)]
pub struct NwEvaluation {
    pub probabilities: Vec<f64>,
    /// True when the query is farther than five bandwidths from every
    /// sample point.
    pub extrapolated: bool,
}

/// Shared kernel machinery over a design matrix with categorical outcomes.
#[derive(Debug, Clone)]
struct KernelRegression {
    regressors: Vec<f64>, // row-major, dim columns
    outcomes: Vec<usize>,
    dim: usize,
    categories: usize,
    bandwidths: Vec<f64>,
}

impl KernelRegression {
    fn fit(
        regressors: Vec<f64>,
        outcomes: Vec<usize>,
        dim: usize,
        categories: usize,
        rule: BandwidthRule,
    ) -> Result<Self> {
        let rows = outcomes.len();
        if rows == 0 {
            return Err(invalid("estimator needs a non-empty dataset"));
        }
        debug_assert_eq!(regressors.len(), rows * dim);
        let bandwidths = match rule {
            BandwidthRule::Fixed { h } => {
                if !(h > 0.0) {
                    return Err(invalid("fixed bandwidth must be positive"));
                }
                vec![h; dim]
            }
            BandwidthRule::RuleOfThumb => {
                let scale = (rows as f64).powf(-1.0 / (4.0 + dim as f64));
                (0..dim)
                    .map(|d| {
                        let mean =
                            (0..rows).map(|r| regressors[r * dim + d]).sum::<f64>() / rows as f64;
                        let var = (0..rows)
                            .map(|r| {
                                let x = regressors[r * dim + d] - mean;
                                x * x
                            })
                            .sum::<f64>()
                            / rows as f64;
                        let h = 1.06 * var.sqrt() * scale;
                        if h > 0.0 {
                            h
                        } else {
                            BANDWIDTH_FLOOR
                        }
                    })
                    .collect()
            }
        };
        Ok(KernelRegression {
            regressors,
            outcomes,
            dim,
            categories,
            bandwidths,
        })
    }

    /// Kernel-weighted outcome frequencies at `query`, normalized to sum
    /// to one exactly.
    fn evaluate(&self, query: &[f64]) -> NwEvaluation {
        debug_assert_eq!(query.len(), self.dim);
        let rows = self.outcomes.len();
        let mut numerators = vec![0.0f64; self.categories];
        let mut nearest = f64::INFINITY;
        for r in 0..rows {
            let mut sq = 0.0;
            let mut max_scaled = 0.0f64;
            for d in 0..self.dim {
                let z = (self.regressors[r * self.dim + d] - query[d]) / self.bandwidths[d];
                sq += z * z;
                max_scaled = max_scaled.max(z.abs());
            }
            nearest = nearest.min(max_scaled);
            numerators[self.outcomes[r]] += (-0.5 * sq).exp();
        }
        let mut probabilities = numerators;
        normalize_probs(&mut probabilities);
        NwEvaluation {
            probabilities,
            extrapolated: nearest > EXTRAPOLATION_BANDWIDTHS,
        }
    }
}

/// Nadaraya-Watson choice-probability model over the regressor `(p, y)`.
#[derive(Debug, Clone)]
pub struct NwChoiceModel {
    kernel: KernelRegression,
    n: usize,
}

/// Fits the kernel choice model from a cross-section dataset.
pub fn nw_choice_estimator(data: &SimulatedDataset, rule: BandwidthRule) -> Result<NwChoiceModel> {
    let (n, rows) = match data {
        SimulatedDataset::CrossSection { n, rows } => (*n, rows),
        SimulatedDataset::Panel { .. } => {
            return Err(invalid("choice estimator expects a cross-section dataset"))
        }
    };
    if rows.is_empty() {
        return Err(invalid("estimator needs a non-empty dataset"));
    }
    let dim = n + 1;
    let mut regressors = Vec::with_capacity(rows.len() * dim);
    let mut outcomes = Vec::with_capacity(rows.len());
    for row in rows {
        if row.prices.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: row.prices.len(),
            });
        }
        regressors.extend_from_slice(&row.prices);
        regressors.push(row.income);
        outcomes.push(row.choice);
    }
    let kernel = KernelRegression::fit(regressors, outcomes, dim, n, rule)?;
    Ok(NwChoiceModel { kernel, n })
}

impl NwChoiceModel {
    pub fn metadata(&self) -> NwMetadata {
        NwMetadata {
            n_alternatives: self.n,
            sample_size: self.kernel.outcomes.len(),
            regressor_dim: self.kernel.dim,
            bandwidths: self.kernel.bandwidths.clone(),
            kernel: "product_gaussian".into(),
        }
    }

    /// Evaluation carrying the extrapolation flag.
    pub fn evaluate(&self, prices: &[f64], income: f64) -> NwEvaluation {
        let mut query = prices.to_vec();
        query.push(income);
        self.kernel.evaluate(&query)
    }
}

impl ChoiceModel for NwChoiceModel {
    fn n_alternatives(&self) -> usize {
        self.n
    }

    fn choice_probabilities(&self, prices: &[f64], income: f64) -> Vec<f64> {
        self.evaluate(prices, income).probabilities
    }
}

/// Nadaraya-Watson transition-probability model over `(p, p', y)`.
#[derive(Debug, Clone)]
pub struct NwTransitionModel {
    kernel: KernelRegression,
    n: usize,
}

/// Fits the kernel transition model from a panel dataset; the outcome is
/// the (pre, post) choice pair.
pub fn nw_transition_estimator(
    data: &SimulatedDataset,
    rule: BandwidthRule,
) -> Result<NwTransitionModel> {
    let (n, rows) = match data {
        SimulatedDataset::Panel { n, rows } => (*n, rows),
        SimulatedDataset::CrossSection { .. } => {
            return Err(invalid("transition estimator expects a panel dataset"))
        }
    };
    if rows.is_empty() {
        return Err(invalid("estimator needs a non-empty dataset"));
    }
    let dim = 2 * n + 1;
    let mut regressors = Vec::with_capacity(rows.len() * dim);
    let mut outcomes = Vec::with_capacity(rows.len());
    for row in rows {
        regressors.extend_from_slice(&row.pre_prices);
        regressors.extend_from_slice(&row.post_prices);
        regressors.push(row.income);
        outcomes.push(row.choice_pre * n + row.choice_post);
    }
    let kernel = KernelRegression::fit(regressors, outcomes, dim, n * n, rule)?;
    Ok(NwTransitionModel { kernel, n })
}

impl NwTransitionModel {
    pub fn metadata(&self) -> NwMetadata {
        NwMetadata {
            n_alternatives: self.n,
            sample_size: self.kernel.outcomes.len(),
            regressor_dim: self.kernel.dim,
            bandwidths: self.kernel.bandwidths.clone(),
            kernel: "product_gaussian".into(),
        }
    }

    pub fn evaluate(&self, pre: &[f64], post: &[f64], income: f64) -> (TransitionMatrix, bool) {
        let mut query = pre.to_vec();
        query.extend_from_slice(post);
        query.push(income);
        let eval = self.kernel.evaluate(&query);
        (
            TransitionMatrix::from_cells(self.n, eval.probabilities),
            eval.extrapolated,
        )
    }
}

impl TransitionModel for NwTransitionModel {
    fn n_alternatives(&self) -> usize {
        self.n
    }

    fn transition_matrix(&self, pre: &[f64], post: &[f64], income: f64) -> TransitionMatrix {
        self.evaluate(pre, post, income).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BudgetSet;
    use crate::oracle::{
        simulate_cross_section, simulate_panel, BudgetSampler, CrossSectionRow, IncomeSampler,
        UtilitySpec,
    };
    use crate::probability::{logit_choice_model, mc_transition_model};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn logit_spec(n: usize) -> UtilitySpec {
        UtilitySpec::AdditiveLogit {
            alpha: (0..n).map(|i| 0.3 * i as f64).collect(),
            beta: 1.0,
        }
    }

    fn jittered_data(n_rows: usize, seed: u64) -> SimulatedDataset {
        let sampler = BudgetSampler::UniformJitter {
            base: BudgetSet::new(vec![1.0, 1.5, 2.0], 10.0).unwrap(),
            price_halfwidth: 1.0,
            income_halfwidth: 0.0,
        };
        simulate_cross_section(&logit_spec(3), &sampler, n_rows, seed).unwrap()
    }

    #[test]
    fn degenerate_dataset_yields_degenerate_probabilities() {
        let rows: Vec<CrossSectionRow> = (0..50)
            .map(|_| CrossSectionRow {
                prices: vec![1.0, 1.0, 1.0],
                income: 5.0,
                choice: 2,
            })
            .collect();
        let data = SimulatedDataset::CrossSection { n: 3, rows };
        let model = nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let p = model.choice_probabilities(&[1.0, 1.0, 1.0], 5.0);
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn probabilities_sum_to_one_exactly_at_random_queries() {
        let data = jittered_data(4000, 21);
        let model = nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let q = [
                rng.random_range(0.0..2.0),
                rng.random_range(0.5..2.5),
                rng.random_range(1.0..3.0),
            ];
            let p = model.choice_probabilities(&q, 10.0);
            assert_eq!(p.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn mean_absolute_error_against_analytic_logit() {
        let data = jittered_data(50_000, 22);
        let model = nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let truth = logit_choice_model(vec![0.0, 0.3, 0.6], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut abs_err = 0.0;
        let mut count = 0;
        for _ in 0..10 {
            let q = [
                rng.random_range(0.5..1.5),
                rng.random_range(1.0..2.0),
                rng.random_range(1.5..2.5),
            ];
            let est = model.choice_probabilities(&q, 10.0);
            let exact = truth.choice_probabilities(&q, 10.0);
            for (a, b) in est.iter().zip(&exact) {
                abs_err += (a - b).abs();
                count += 1;
            }
        }
        let mae = abs_err / count as f64;
        assert!(mae <= 0.03, "mean absolute error {mae}");
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = SimulatedDataset::CrossSection { n: 2, rows: vec![] };
        assert!(nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).is_err());
    }

    #[test]
    fn extrapolation_flagged_far_from_support() {
        let data = jittered_data(2000, 23);
        let model = nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let inside = model.evaluate(&[1.0, 1.5, 2.0], 10.0);
        assert!(!inside.extrapolated);
        let outside = model.evaluate(&[50.0, 1.5, 2.0], 10.0);
        assert!(outside.extrapolated);
    }

    #[test]
    fn panel_without_price_change_keeps_diagonal() {
        let spec = logit_spec(2);
        let p = vec![1.0, 1.4];
        let data = simulate_panel(
            &spec,
            &p,
            &p,
            &IncomeSampler::Uniform { lo: 8.0, hi: 12.0 },
            4000,
            31,
        )
        .unwrap();
        let model = nw_transition_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let m = model.transition_matrix(&p, &p, 10.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.total(), 1.0);
    }

    // Panel with individually varying price levels under one common
    // reform: the same jitter enters pre and post prices, so queries sit
    // on the support manifold p' = p + delta.
    const REFORM: [f64; 2] = [0.2, -0.3];

    fn jittered_panel(n_rows: usize, seed: u64) -> SimulatedDataset {
        use crate::oracle::{choose, draw_preferences};
        let spec = logit_spec(2);
        let draws = draw_preferences(&spec, seed, n_rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let rows = draws
            .iter()
            .map(|d| {
                let level: Vec<f64> = vec![
                    1.0 + rng.random_range(-1.0..1.0),
                    1.4 + rng.random_range(-1.0..1.0),
                ];
                let post: Vec<f64> = level.iter().zip(REFORM).map(|(p, dp)| p + dp).collect();
                let income = 10.0;
                let b0 = BudgetSet::new(level.clone(), income).unwrap();
                let b1 = BudgetSet::new(post.clone(), income).unwrap();
                crate::oracle::PanelRow {
                    pre_prices: level,
                    post_prices: post,
                    income,
                    choice_pre: choose(d, &b0),
                    choice_post: choose(d, &b1),
                }
            })
            .collect();
        SimulatedDataset::Panel { n: 2, rows }
    }

    #[test]
    fn transition_cells_close_to_monte_carlo_truth() {
        let data = jittered_panel(100_000, 41);
        let model = nw_transition_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let truth = mc_transition_model(&logit_spec(2), 1 << 18, 999).unwrap();
        let pre_queries = [[1.0, 1.4], [0.8, 1.2], [1.2, 1.6], [1.1, 1.0], [0.9, 1.5]];
        let mut sup: f64 = 0.0;
        for p in pre_queries {
            let pp: Vec<f64> = p.iter().zip(REFORM).map(|(x, dp)| x + dp).collect();
            let est = model.transition_matrix(&p, &pp, 10.0);
            let mc = truth.transition_matrix(&p, &pp, 10.0);
            for i in 0..2 {
                for j in 0..2 {
                    sup = sup.max((est.get(i, j) - mc.get(i, j)).abs());
                }
            }
        }
        assert!(sup <= 0.03, "sup cell error {sup}");
    }

    // The outside-option identity: a model trained with no variation in
    // one price coordinate answers counterfactuals that move it, by
    // re-anchoring every query so that coordinate returns to its trained
    // level.
    #[test]
    fn anchored_kernel_recovers_cv_distribution_for_outside_option_change() {
        use crate::oracle::{exact_variation, VariationKind};
        use crate::probability::anchor_outside_option;
        use crate::welfare::{cv_distribution, VariationMode};

        let spec = UtilitySpec::AdditiveLogit {
            alpha: vec![0.0, 0.3],
            beta: 1.0,
        };
        // alternative 0 is the outside option: its price never varies in
        // the training data, but income and the other price do
        let baseline = 1.0;
        use crate::oracle::{choose, draw_preferences};
        let draws = draw_preferences(&spec, 404, 40_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(405);
        let rows: Vec<CrossSectionRow> = draws
            .iter()
            .map(|d| {
                let prices = vec![baseline, 1.5 + rng.random_range(-0.75..0.75)];
                let income = 10.0 + rng.random_range(-1.0..1.0);
                let budget = BudgetSet::new(prices.clone(), income).unwrap();
                CrossSectionRow {
                    prices,
                    income,
                    choice: choose(d, &budget),
                }
            })
            .collect();
        let data = SimulatedDataset::CrossSection { n: 2, rows };
        let model = nw_choice_estimator(&data, BandwidthRule::RuleOfThumb).unwrap();
        let anchored = anchor_outside_option(model, 0, baseline).unwrap();

        // the outside option's price drops; the CV formula then queries
        // price vectors with the coordinate away from its trained level
        let pre = [1.0, 1.5];
        let post = [0.7, 1.5];
        let trans = mc_transition_model(&spec, 1 << 10, 406).unwrap();
        let grid: Vec<f64> = (0..=60)
            .map(|t| -0.1 + 0.5 * t as f64 / 60.0)
            .filter(|z| (z - 0.0).abs() > 1e-6 && (z - 0.3).abs() > 1e-6)
            .collect();
        let curve = cv_distribution(
            &trans,
            &anchored,
            &pre,
            &post,
            10.0,
            VariationMode::Marginal,
            &grid,
        )
        .unwrap();

        let oracle_draws = draw_preferences(&spec, 407, 50_000).unwrap();
        let samples: Vec<f64> = oracle_draws
            .iter()
            .map(|d| exact_variation(d, &pre, &post, 10.0, VariationKind::Cv).unwrap())
            .collect();
        let oracle = crate::oracle::empirical_cdf(&samples, &grid).unwrap();
        let sup = curve.sup_distance(&oracle);
        assert!(sup <= 0.03, "anchored kernel CV sup distance {sup}");
    }

    #[test]
    fn transition_row_sums_match_choice_estimator_on_pre_marginal() {
        let panel = jittered_panel(60_000, 43);
        let model = nw_transition_estimator(&panel, BandwidthRule::RuleOfThumb).unwrap();
        // same data reduced to its pre-change cross-section slice
        let rows = match &panel {
            SimulatedDataset::Panel { rows, .. } => rows
                .iter()
                .map(|r| CrossSectionRow {
                    prices: r.pre_prices.clone(),
                    income: r.income,
                    choice: r.choice_pre,
                })
                .collect(),
            _ => unreachable!(),
        };
        let cross = SimulatedDataset::CrossSection { n: 2, rows };
        let choice = nw_choice_estimator(&cross, BandwidthRule::RuleOfThumb).unwrap();
        let queries = [[1.0, 1.4], [0.9, 1.2], [1.1, 1.5]];
        for p in queries {
            let pp: Vec<f64> = p.iter().zip(REFORM).map(|(x, dp)| x + dp).collect();
            let m = model.transition_matrix(&p, &pp, 10.0);
            let c = choice.choice_probabilities(&p, 10.0);
            for i in 0..2 {
                assert!(
                    (m.row_sum(i) - c[i]).abs() < 0.02,
                    "row sum {} vs choice {}",
                    m.row_sum(i),
                    c[i]
                );
            }
        }
    }
}
