//! Social welfare functionals over a population of budget sets.
//!
//! The conditional welfare CDF of each member comes from choice
//! probabilities alone; an additively separable social welfare function
//! integrates a strictly increasing (typically concave) transform of
//! welfare against that CDF, member by member, and aggregates with the
//! population weights.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{
    boundary_welfare, elementwise_min, BudgetSet, CurveKind, DistributionCurve, MassPoint,
    NosFamily,
};
use crate::probability::ChoiceModel;

/// A finite weighted population of budget sets; weights default to
/// uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    budgets: Vec<BudgetSet>,
    weights: Vec<f64>,
}

impl PopulationSample {
    pub fn new(budgets: Vec<BudgetSet>, weights: Option<Vec<f64>>) -> Result<Self> {
        if budgets.is_empty() {
            return Err(invalid("population must be non-empty"));
        }
        let n = budgets[0].n_alternatives();
        if budgets.iter().any(|b| b.n_alternatives() != n) {
            return Err(invalid(
                "population members must share the alternative count",
            ));
        }
        let weights = match weights {
            None => vec![1.0 / budgets.len() as f64; budgets.len()],
            Some(w) => {
                if w.len() != budgets.len() {
                    return Err(Error::LengthMismatch {
                        expected: budgets.len(),
                        got: w.len(),
                    });
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid("weights must be finite and non-negative"));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(invalid(format!("weights sum to {total}, expected 1")));
                }
                w
            }
        };
        Ok(PopulationSample { budgets, weights })
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = (&BudgetSet, f64)> {
        self.budgets.iter().zip(self.weights.iter().copied())
    }

    pub fn n_alternatives(&self) -> usize {
        self.budgets[0].n_alternatives()
    }

    /// Reads `p_0..p_{n-1},y[,weight]` CSV rows.
    pub fn read_csv<R: std::io::Read>(mut reader: R) -> Result<Self> {
        let mut content = String::new();
        reader.read_to_string(&mut content)?;
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty population file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n = cols.iter().take_while(|c| c.starts_with("p_")).count();
        if n == 0 {
            return Err(Error::Parse("no price columns in population header".into()));
        }
        let has_weight = cols.last() == Some(&"weight");
        let expected = n + 1 + usize::from(has_weight);
        let mut budgets = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(Error::Parse(format!(
                    "line {} has {} fields, expected {}",
                    i + 2,
                    fields.len(),
                    expected
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {:?} on line {}", s, i + 2)))
            };
            let prices: Result<Vec<f64>> = fields[..n].iter().map(|s| parse(s)).collect();
            budgets.push(BudgetSet::new(prices?, parse(fields[n])?)?);
            if has_weight {
                weights.push(parse(fields[n + 1])?);
            }
        }
        PopulationSample::new(budgets, if has_weight { Some(weights) } else { None })
    }

    /// Writes the population back out as CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let n = self.n_alternatives();
        let mut header: Vec<String> = (0..n).map(|i| format!("p_{}", i)).collect();
        header.push("y".into());
        header.push("weight".into());
        writeln!(w, "{}", header.join(","))?;
        for (budget, weight) in self.members() {
            let mut fields: Vec<String> = budget.prices.iter().map(|p| p.to_string()).collect();
            fields.push(budget.income.to_string());
            fields.push(weight.to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Strictly increasing transform expressing inequality aversion.
pub struct AversionFunction {
    name: String,
    evaluator: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    declared_concave: bool,
}

impl AversionFunction {
    /// Utilitarian case `h(w) = w`.
    pub fn identity() -> Self {
        AversionFunction {
            name: "identity".into(),
            evaluator: Box::new(|w| w),
            declared_concave: true,
        }
    }

    /// Constant absolute inequality aversion `h(w) = -exp(-rate w)`.
    pub fn negative_exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(invalid("aversion rate must be positive"));
        }
        Ok(AversionFunction {
            name: format!("neg_exponential(rate={rate})"),
            evaluator: Box::new(move |w| -(-rate * w).exp()),
            declared_concave: true,
        })
    }

    /// User-supplied transform.
    pub fn from_fn(
        name: impl Into<String>,
        evaluator: impl Fn(f64) -> f64 + Send + Sync + 'static,
        declared_concave: bool,
    ) -> Self {
        AversionFunction {
            name: name.into(),
            evaluator: Box::new(evaluator),
            declared_concave,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, w: f64) -> f64 {
        (self.evaluator)(w)
    }

    /// Checks strict monotonicity, and concavity when declared, on a
    /// probe grid.
    pub fn validate(&self, probe_grid: &[f64]) -> Result<()> {
        if probe_grid.len() < 2 {
            return Err(invalid("probe grid needs at least two points"));
        }
        if !probe_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("probe grid must be strictly increasing"));
        }
        let values: Vec<f64> = probe_grid.iter().map(|w| self.evaluate(*w)).collect();
        if !values.windows(2).all(|v| v[0] < v[1]) {
            return Err(invalid(format!(
                "aversion function {} is not strictly increasing on the probe grid",
                self.name
            )));
        }
        if self.declared_concave {
            for win in probe_grid.windows(3).zip(values.windows(3)) {
                let (x, v) = win;
                // slope over [x0,x1] must not be below slope over [x1,x2]
                let left = (v[1] - v[0]) / (x[1] - x[0]);
                let right = (v[2] - v[1]) / (x[2] - x[1]);
                if right > left + 1e-9 * (1.0 + left.abs()) {
                    return Err(invalid(format!(
                        "aversion function {} violates concavity near {}",
                        self.name, x[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for AversionFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AversionFunction")
            .field("name", &self.name)
            .field("declared_concave", &self.declared_concave)
            .finish()
    }
}

/// Survival probability of welfare at the optimal bundle: the sum of
/// choice probabilities at prices capped by the virtual prices, over the
/// alternatives still affordable at level `w`. With `strict` the
/// affordability comparison excludes the boundary, giving the limit from
/// above.
pub(crate) fn optimum_level_survival(
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    prices: &[f64],
    income: f64,
    w: f64,
    strict: bool,
) -> f64 {
    let vp = family.virtual_prices(w, income);
    let capped = elementwise_min(prices, &vp).expect("same length");
    let probs = choice.choice_probabilities(&capped, income);
    (0..prices.len())
        .filter(|c| {
            if strict {
                prices[*c] < vp[*c]
            } else {
                prices[*c] <= vp[*c]
            }
        })
        .map(|c| probs[c])
        .sum()
}

/// CDF of individual welfare in the optimal bundle at `(prices, income)`,
/// evaluated from choice probabilities as one minus the survival sum.
///
/// At a mass point this is the left limit `Pr[W < w]`: the complement of
/// the survival probability `Pr[w <= W]`, so the two add to one at every
/// `w` exactly. `welfare_cdf_curve` reports the conventional
/// right-continuous values instead, with the jumps recorded as mass
/// points.
pub fn welfare_cdf(
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    prices: &[f64],
    income: f64,
    w: f64,
) -> Result<f64> {
    let n = family.n_alternatives();
    if prices.len() != n || choice.n_alternatives() != n {
        return Err(invalid("model and family dimensions disagree"));
    }
    Ok(1.0 - optimum_level_survival(choice, family, prices, income, w, false))
}

/// The welfare CDF of one member sampled on a grid (right-continuous),
/// with the jump at each affordability boundary recorded as a mass point.
pub fn welfare_cdf_curve(
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    prices: &[f64],
    income: f64,
    grid: &[f64],
) -> Result<DistributionCurve> {
    let n = family.n_alternatives();
    if prices.len() != n || choice.n_alternatives() != n {
        return Err(invalid("model and family dimensions disagree"));
    }
    let values: Vec<f64> = grid
        .iter()
        .map(|w| {
            (1.0 - optimum_level_survival(choice, family, prices, income, *w, true)).clamp(0.0, 1.0)
        })
        .collect();
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    let mut raw_jumps: Vec<(f64, f64)> = Vec::new();
    for c in 0..n {
        if let Some(wc) = boundary_welfare(family, c, prices[c], income) {
            let vp = family.virtual_prices(wc, income);
            let capped = elementwise_min(prices, &vp)?;
            let jump = choice.choice_probability(c, &capped, income);
            if jump > 0.0 && wc >= lo && wc <= hi {
                raw_jumps.push((wc, jump));
            }
        }
    }
    raw_jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut mass_points: Vec<MassPoint> = Vec::new();
    for (loc, jump) in raw_jumps {
        match mass_points.last_mut() {
            Some(last) if last.location == loc => last.jump = (last.jump + jump).min(1.0),
            _ => mass_points.push(MassPoint {
                location: loc,
                jump: jump.min(1.0),
            }),
        }
    }
    DistributionCurve::new(CurveKind::Cdf, grid.to_vec(), values, mass_points)
}

/// Social welfare value with per-member contributions.
#[derive(Debug, Clone, Serialize)]
pub struct SwfResult {
    pub swf: f64,
    pub per_member_contributions: Vec<f64>,
    /// Set when some member's welfare CDF was not fully resolved on the
    /// grid.
    pub truncated_tail: bool,
}

const TAIL_ERROR_DEFECT: f64 = 0.25;
const TAIL_WARN_DEFECT: f64 = 1e-3;

/// Additively separable social welfare: for each member the aversion
/// transform is integrated against the member's welfare CDF (trapezoid on
/// the continuous increments plus `h(location) * jump` for every mass
/// point), then aggregated by the population weights.
pub fn swf(
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    aversion: &AversionFunction,
    population: &PopulationSample,
    w_grid: &[f64],
) -> Result<SwfResult> {
    if w_grid.len() < 2 || !w_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid(
            "w grid must be strictly increasing with >= 2 points",
        ));
    }
    let mut contributions = Vec::with_capacity(population.len());
    let mut truncated = false;
    let mut total = 0.0;
    for (idx, (budget, weight)) in population.members().enumerate() {
        let curve = welfare_cdf_curve(choice, family, &budget.prices, budget.income, w_grid)?;
        let values = curve.values();
        let left = values[0].abs();
        let right = (1.0 - values.last().unwrap()).abs();
        if left > TAIL_ERROR_DEFECT || right > TAIL_ERROR_DEFECT {
            return Err(Error::NonintegrableCurve(format!(
                "member {idx}: welfare CDF spans [{:.4}, {:.4}] on the grid",
                values[0],
                values.last().unwrap()
            )));
        }
        truncated = truncated || left > TAIL_WARN_DEFECT || right > TAIL_WARN_DEFECT;
        let integral = stieltjes_expectation(&curve, aversion);
        contributions.push(integral);
        total += weight * integral;
    }
    Ok(SwfResult {
        swf: total,
        per_member_contributions: contributions,
        truncated_tail: truncated,
    })
}

/// Expectation of `h` under the distribution of a CDF curve with atoms.
fn stieltjes_expectation(curve: &DistributionCurve, aversion: &AversionFunction) -> f64 {
    let grid = curve.grid();
    let values = curve.values();
    let atoms = curve.mass_points();
    let mut total = 0.0;
    // atoms contribute exactly
    for mp in atoms {
        total += aversion.evaluate(mp.location) * mp.jump;
    }
    // continuous part: raw increment minus any atom mass inside the cell
    for t in 1..grid.len() {
        let (a, b) = (grid[t - 1], grid[t]);
        let mut increment = values[t] - values[t - 1];
        for mp in atoms {
            if mp.location > a && mp.location <= b {
                increment -= mp.jump;
            }
        }
        if increment > 0.0 {
            total += 0.5 * (aversion.evaluate(a) + aversion.evaluate(b)) * increment;
        }
    }
    total
}

/// Social welfare difference induced by shifting every member's prices by
/// `delta_p`: the SWF over the shifted population minus the SWF over the
/// original one, both integrated on the same grid.
pub fn swf_difference(
    choice: &dyn ChoiceModel,
    family: &dyn NosFamily,
    aversion: &AversionFunction,
    population: &PopulationSample,
    delta_p: &[f64],
    w_grid: &[f64],
) -> Result<f64> {
    if delta_p.len() != population.n_alternatives() {
        return Err(Error::LengthMismatch {
            expected: population.n_alternatives(),
            got: delta_p.len(),
        });
    }
    let shifted_budgets: Vec<BudgetSet> = population
        .members()
        .map(|(b, _)| BudgetSet {
            prices: b.prices.iter().zip(delta_p).map(|(p, d)| p + d).collect(),
            income: b.income,
        })
        .collect();
    let weights: Vec<f64> = population.members().map(|(_, w)| w).collect();
    let shifted = PopulationSample::new(shifted_budgets, Some(weights))?;
    let after = swf(choice, family, aversion, &shifted, w_grid)?;
    let before = swf(choice, family, aversion, population, w_grid)?;
    Ok(after.swf - before.swf)
}
