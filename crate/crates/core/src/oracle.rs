//! Ground-truth simulator for discrete-choice random-utility models.
//!
//! Draws preference types, computes utility-maximizing choices, solves the
//! per-type welfare index and compensating/equivalent variation by
//! bisection, and produces simulated datasets and empirical distribution
//! curves against which the closed-form machinery is validated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BudgetSet, CurveKind, DistributionCurve, MassPoint, NosFamily};

/// Bisection tolerance for the welfare and variation solvers, far below
/// every acceptance tolerance in the test suites.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

const MAX_BRACKET_DOUBLINGS: usize = 200;

/// Draws per RNG stream; blocks are generated independently so parallel
/// generation is deterministic for a given seed.
const DRAW_BLOCK: usize = 4096;

/// A scalar mixing distribution for random-coefficient specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixing {
    Fixed {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Standard Gumbel via inverse transform of a uniform.
    Gumbel,
}

impl Mixing {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Mixing::Fixed { value } => value,
            Mixing::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            Mixing::Normal { mean, sd } => rand_distr::Normal::new(mean, sd).unwrap().sample(rng),
            Mixing::LogNormal { mu, sigma } => {
                rand_distr::LogNormal::new(mu, sigma).unwrap().sample(rng)
            }
            Mixing::Gumbel => sample_gumbel(rng),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            Mixing::Fixed { value } => value.is_finite(),
            Mixing::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Mixing::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Mixing::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            Mixing::Gumbel => true,
        };
        if finite {
            Ok(())
        } else {
            Err(invalid("mixing distribution has invalid parameters"))
        }
    }

    /// Whether the support is contained in the strictly positive reals,
    /// up to a measure-zero boundary.
    fn positive_almost_surely(&self) -> bool {
        match *self {
            Mixing::Fixed { value } => value > 0.0,
            Mixing::Uniform { lo, .. } => lo >= 0.0,
            Mixing::LogNormal { .. } => true,
            Mixing::Normal { .. } | Mixing::Gumbel => false,
        }
    }
}

fn sample_gumbel<R: Rng>(rng: &mut R) -> f64 {
    // Inverse transform; u is kept strictly inside (0, 1).
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}

/// Utility specification: affine in the numeraire with an additive shock,
/// either with fixed coefficients and Gumbel shocks (logit) or with
/// user-specified mixing distributions over the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum UtilitySpec {
    AdditiveLogit {
        alpha: Vec<f64>,
        beta: f64,
    },
    RandomCoefficient {
        alpha: Vec<Mixing>,
        beta: Mixing,
        epsilon: Vec<Mixing>,
    },
}

impl UtilitySpec {
    pub fn n_alternatives(&self) -> usize {
        match self {
            UtilitySpec::AdditiveLogit { alpha, .. } => alpha.len(),
            UtilitySpec::RandomCoefficient { alpha, .. } => alpha.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            UtilitySpec::AdditiveLogit { alpha, beta } => {
                if alpha.is_empty() {
                    return Err(invalid("utility spec needs at least one alternative"));
                }
                if alpha.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("alpha entries must be finite"));
                }
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(invalid("beta must be strictly positive"));
                }
            }
            UtilitySpec::RandomCoefficient {
                alpha,
                beta,
                epsilon,
            } => {
                if alpha.is_empty() {
                    return Err(invalid("utility spec needs at least one alternative"));
                }
                if epsilon.len() != alpha.len() {
                    return Err(Error::LengthMismatch {
                        expected: alpha.len(),
                        got: epsilon.len(),
                    });
                }
                for m in alpha.iter().chain(epsilon.iter()) {
                    m.validate()?;
                }
                beta.validate()?;
                if !beta.positive_almost_surely() {
                    return Err(invalid(
                        "beta mixing must be strictly positive almost surely",
                    ));
                }
            }
        }
        Ok(())
    }

    fn sample_draw<R: Rng>(&self, rng: &mut R) -> PreferenceDraw {
        match self {
            UtilitySpec::AdditiveLogit { alpha, beta } => {
                let epsilon = alpha.iter().map(|_| sample_gumbel(rng)).collect();
                PreferenceDraw {
                    alpha: alpha.clone(),
                    beta: *beta,
                    epsilon,
                }
            }
            UtilitySpec::RandomCoefficient {
                alpha,
                beta,
                epsilon,
            } => PreferenceDraw {
                alpha: alpha.iter().map(|m| m.sample(rng)).collect(),
                beta: beta.sample(rng),
                epsilon: epsilon.iter().map(|m| m.sample(rng)).collect(),
            },
        }
    }
}

/// One realized preference type: utility of alternative `c` at residual
/// income `m` is `alpha[c] + beta * m + epsilon[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDraw {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub epsilon: Vec<f64>,
}

impl PreferenceDraw {
    pub fn n_alternatives(&self) -> usize {
        self.alpha.len()
    }

    /// Utility of alternative `c` at residual income `m`; strictly
    /// increasing in `m` since `beta > 0`.
    pub fn utility(&self, c: usize, m: f64) -> f64 {
        self.alpha[c] + self.beta * m + self.epsilon[c]
    }

    fn best_utility_at_prices(&self, prices: &[f64], income: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (c, p) in prices.iter().enumerate() {
            best = best.max(self.utility(c, income - p));
        }
        best
    }
}

/// i.i.d. preference draws, deterministic for a given seed.
pub fn draw_preferences(
    spec: &UtilitySpec,
    seed: u64,
    count: usize,
) -> Result<Vec<PreferenceDraw>> {
    spec.validate()?;
    if count == 0 {
        return Err(invalid("draw count must be at least 1"));
    }
    let blocks = count.div_ceil(DRAW_BLOCK);
    let out: Vec<PreferenceDraw> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = block_rng(seed, b as u64);
            let len = DRAW_BLOCK.min(count - b * DRAW_BLOCK);
            (0..len)
                .map(|_| spec.sample_draw(&mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(out)
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Utility-maximizing alternative; ties broken by lowest index (a
/// probability-zero event under the regularity assumptions, but a
/// deterministic rule keeps simulations reproducible).
pub fn choose(draw: &PreferenceDraw, budget: &BudgetSet) -> usize {
    debug_assert_eq!(draw.n_alternatives(), budget.n_alternatives());
    let mut best_c = 0;
    let mut best_u = f64::NEG_INFINITY;
    for c in 0..budget.n_alternatives() {
        let u = draw.utility(c, budget.residual_income(c));
        if u > best_u {
            best_u = u;
            best_c = c;
        }
    }
    best_c
}

/// Largest welfare index `lambda` at which the bundle `(income - p_k, k)`
/// is still weakly preferred to every alternative priced at the family's
/// virtual prices. Solved by geometric bracket expansion plus bisection.
pub fn exact_welfare(
    draw: &PreferenceDraw,
    family: &dyn NosFamily,
    k: usize,
    p_k: f64,
    income: f64,
) -> Result<f64> {
    let n = draw.n_alternatives();
    if family.n_alternatives() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: family.n_alternatives(),
        });
    }
    let target = draw.utility(k, income - p_k);
    let satisfied = |lambda: f64| -> bool {
        let mut best = f64::NEG_INFINITY;
        for c in 0..n {
            let vp = family.virtual_price(c, lambda, income);
            best = best.max(draw.utility(c, income - vp));
        }
        target >= best
    };

    let (dom_lo, dom_hi) = family.lambda_domain();
    let anchor = income;

    // Lower end: expand down until the inequality holds.
    let mut lo = if dom_lo.is_finite() {
        dom_lo
    } else {
        anchor - 1.0
    };
    if !satisfied(lo) {
        if dom_lo.is_finite() {
            return Err(Error::NoSolution(
                "welfare inequality fails on the whole domain".into(),
            ));
        }
        let mut step = 1.0;
        let mut ok = false;
        for _ in 0..MAX_BRACKET_DOUBLINGS {
            lo -= step;
            step *= 2.0;
            if satisfied(lo) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::NoSolution(
                "bracket expansion exhausted searching for a satisfiable welfare level".into(),
            ));
        }
    }

    // Upper end: expand up until it fails.
    let mut hi = if dom_hi.is_finite() {
        dom_hi
    } else {
        anchor + 1.0
    };
    if satisfied(hi) {
        if dom_hi.is_finite() {
            return Ok(dom_hi);
        }
        let mut step = 1.0;
        let mut ok = false;
        for _ in 0..MAX_BRACKET_DOUBLINGS {
            hi += step;
            step *= 2.0;
            if !satisfied(hi) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::NoSolution(
                "bracket expansion exhausted; family never caps welfare for this draw".into(),
            ));
        }
    }

    for _ in 0..200 {
        if hi - lo <= SOLVER_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if satisfied(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Which welfare difference to solve for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VariationKind {
    Cv,
    Ev,
}

/// Money amount equating pre- and post-change maximal utility, taken after
/// the change (CV) or before it (EV). Monotone in the unknown, solved by
/// bisection.
pub fn exact_variation(
    draw: &PreferenceDraw,
    pre_prices: &[f64],
    post_prices: &[f64],
    income: f64,
    kind: VariationKind,
) -> Result<f64> {
    crate::error::check_same_len(pre_prices, post_prices)?;
    if pre_prices.len() != draw.n_alternatives() {
        return Err(Error::LengthMismatch {
            expected: draw.n_alternatives(),
            got: pre_prices.len(),
        });
    }
    // gap(v) is strictly decreasing in v with a unique root.
    let gap = |v: f64| -> f64 {
        match kind {
            VariationKind::Cv => {
                let shifted: Vec<f64> = post_prices.iter().map(|p| p + v).collect();
                draw.best_utility_at_prices(&shifted, income)
                    - draw.best_utility_at_prices(pre_prices, income)
            }
            VariationKind::Ev => {
                let shifted: Vec<f64> = pre_prices.iter().map(|p| p + v).collect();
                draw.best_utility_at_prices(&shifted, income)
                    - draw.best_utility_at_prices(post_prices, income)
            }
        }
    };

    let mut lo = -1.0;
    let mut step = 1.0;
    let mut ok = false;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        if gap(lo) >= 0.0 {
            ok = true;
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    if !ok {
        return Err(Error::NoSolution(
            "variation bracket (lower) exhausted".into(),
        ));
    }
    let mut hi = 1.0;
    step = 1.0;
    ok = false;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        if gap(hi) < 0.0 {
            ok = true;
            break;
        }
        hi += step;
        step *= 2.0;
    }
    if !ok {
        return Err(Error::NoSolution(
            "variation bracket (upper) exhausted".into(),
        ));
    }
    for _ in 0..200 {
        if hi - lo <= SOLVER_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Distribution over budget sets for cross-section simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BudgetSampler {
    Fixed {
        budget: BudgetSet,
    },
    /// Independent uniform jitter around a base budget.
    UniformJitter {
        base: BudgetSet,
        price_halfwidth: f64,
        income_halfwidth: f64,
    },
}

impl BudgetSampler {
    pub fn n_alternatives(&self) -> usize {
        match self {
            BudgetSampler::Fixed { budget } => budget.n_alternatives(),
            BudgetSampler::UniformJitter { base, .. } => base.n_alternatives(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> BudgetSet {
        match self {
            BudgetSampler::Fixed { budget } => budget.clone(),
            BudgetSampler::UniformJitter {
                base,
                price_halfwidth,
                income_halfwidth,
            } => {
                let prices = base
                    .prices
                    .iter()
                    .map(|p| jitter(rng, *p, *price_halfwidth))
                    .collect();
                BudgetSet {
                    prices,
                    income: jitter(rng, base.income, *income_halfwidth),
                }
            }
        }
    }
}

fn jitter<R: Rng>(rng: &mut R, center: f64, halfwidth: f64) -> f64 {
    if halfwidth > 0.0 {
        rng.random_range(center - halfwidth..center + halfwidth)
    } else {
        center
    }
}

/// Distribution over incomes for panel simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncomeSampler {
    Fixed { income: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl IncomeSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            IncomeSampler::Fixed { income } => income,
            IncomeSampler::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        }
    }
}

/// One simulated cross-section observation.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionRow {
    pub prices: Vec<f64>,
    pub income: f64,
    pub choice: usize,
}

/// One simulated panel observation; both choices come from the same draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub pre_prices: Vec<f64>,
    pub post_prices: Vec<f64>,
    pub income: f64,
    pub choice_pre: usize,
    pub choice_post: usize,
}

/// Simulated observations, either one choice per budget (cross-section) or
/// a pre/post choice pair per draw (panel).
#[derive(Debug, Clone, PartialEq)]
pub enum SimulatedDataset {
    CrossSection {
        n: usize,
        rows: Vec<CrossSectionRow>,
    },
    Panel {
        n: usize,
        rows: Vec<PanelRow>,
    },
}

impl SimulatedDataset {
    pub fn n_alternatives(&self) -> usize {
        match self {
            SimulatedDataset::CrossSection { n, .. } => *n,
            SimulatedDataset::Panel { n, .. } => *n,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SimulatedDataset::CrossSection { rows, .. } => rows.len(),
            SimulatedDataset::Panel { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV columns: `p_0..p_{n-1},y,choice` for cross-sections;
    /// `p_0..,pp_0..,y,choice_pre,choice_post` for panels.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        match self {
            SimulatedDataset::CrossSection { n, rows } => {
                let mut header: Vec<String> = (0..*n).map(|i| format!("p_{}", i)).collect();
                header.push("y".into());
                header.push("choice".into());
                writeln!(w, "{}", header.join(","))?;
                for row in rows {
                    let mut fields: Vec<String> =
                        row.prices.iter().map(|p| p.to_string()).collect();
                    fields.push(row.income.to_string());
                    fields.push(row.choice.to_string());
                    writeln!(w, "{}", fields.join(","))?;
                }
            }
            SimulatedDataset::Panel { n, rows } => {
                let mut header: Vec<String> = (0..*n).map(|i| format!("p_{}", i)).collect();
                header.extend((0..*n).map(|i| format!("pp_{}", i)));
                header.push("y".into());
                header.push("choice_pre".into());
                header.push("choice_post".into());
                writeln!(w, "{}", header.join(","))?;
                for row in rows {
                    let mut fields: Vec<String> =
                        row.pre_prices.iter().map(|p| p.to_string()).collect();
                    fields.extend(row.post_prices.iter().map(|p| p.to_string()));
                    fields.push(row.income.to_string());
                    fields.push(row.choice_pre.to_string());
                    fields.push(row.choice_post.to_string());
                    writeln!(w, "{}", fields.join(","))?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut content = String::new();
        let mut reader = reader;
        reader.read_to_string(&mut content)?;
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n_pre = cols.iter().take_while(|c| c.starts_with("p_")).count();
        if n_pre == 0 {
            return Err(Error::Parse("no price columns in dataset header".into()));
        }
        let is_panel = cols.iter().any(|c| c.starts_with("pp_"));
        let parse_f = |s: &str, line: usize| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {:?} on line {}", s, line + 2)))
        };
        let parse_u = |s: &str, line: usize| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad index {:?} on line {}", s, line + 2)))
        };
        if is_panel {
            let expected = 2 * n_pre + 3;
            let mut rows = Vec::new();
            for (i, line) in lines.enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != expected {
                    return Err(Error::Parse(format!(
                        "line {} has {} fields, expected {}",
                        i + 2,
                        f.len(),
                        expected
                    )));
                }
                let pre: Result<Vec<f64>> = f[..n_pre].iter().map(|s| parse_f(s, i)).collect();
                let post: Result<Vec<f64>> =
                    f[n_pre..2 * n_pre].iter().map(|s| parse_f(s, i)).collect();
                rows.push(PanelRow {
                    pre_prices: pre?,
                    post_prices: post?,
                    income: parse_f(f[2 * n_pre], i)?,
                    choice_pre: parse_u(f[2 * n_pre + 1], i)?,
                    choice_post: parse_u(f[2 * n_pre + 2], i)?,
                });
            }
            validate_choices(
                rows.iter().flat_map(|r| [r.choice_pre, r.choice_post]),
                n_pre,
            )?;
            Ok(SimulatedDataset::Panel { n: n_pre, rows })
        } else {
            let expected = n_pre + 2;
            let mut rows = Vec::new();
            for (i, line) in lines.enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != expected {
                    return Err(Error::Parse(format!(
                        "line {} has {} fields, expected {}",
                        i + 2,
                        f.len(),
                        expected
                    )));
                }
                let prices: Result<Vec<f64>> = f[..n_pre].iter().map(|s| parse_f(s, i)).collect();
                rows.push(CrossSectionRow {
                    prices: prices?,
                    income: parse_f(f[n_pre], i)?,
                    choice: parse_u(f[n_pre + 1], i)?,
                });
            }
            validate_choices(rows.iter().map(|r| r.choice), n_pre)?;
            Ok(SimulatedDataset::CrossSection { n: n_pre, rows })
        }
    }
}

fn validate_choices(choices: impl IntoIterator<Item = usize>, n: usize) -> Result<()> {
    for c in choices {
        if c >= n {
            return Err(Error::Parse(format!(
                "choice index {} out of range for {} alternatives",
                c, n
            )));
        }
    }
    Ok(())
}

/// Simulates independent (budget, choice) rows.
pub fn simulate_cross_section(
    spec: &UtilitySpec,
    budget_sampler: &BudgetSampler,
    count: usize,
    seed: u64,
) -> Result<SimulatedDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(invalid("row count must be at least 1"));
    }
    let n = spec.n_alternatives();
    if budget_sampler.n_alternatives() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: budget_sampler.n_alternatives(),
        });
    }
    let blocks = count.div_ceil(DRAW_BLOCK);
    let rows: Vec<CrossSectionRow> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = block_rng(seed, b as u64);
            let len = DRAW_BLOCK.min(count - b * DRAW_BLOCK);
            (0..len)
                .map(|_| {
                    let budget = budget_sampler.sample(&mut rng);
                    let draw = spec.sample_draw(&mut rng);
                    let choice = choose(&draw, &budget);
                    CrossSectionRow {
                        prices: budget.prices,
                        income: budget.income,
                        choice,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SimulatedDataset::CrossSection { n, rows })
}

/// Simulates pre/post choice pairs under a price change; each row's two
/// choices share one preference draw, implementing perfect correlation of
/// unobserved heterogeneity across the change.
pub fn simulate_panel(
    spec: &UtilitySpec,
    pre_prices: &[f64],
    post_prices: &[f64],
    income_sampler: &IncomeSampler,
    count: usize,
    seed: u64,
) -> Result<SimulatedDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(invalid("row count must be at least 1"));
    }
    crate::error::check_same_len(pre_prices, post_prices)?;
    let n = spec.n_alternatives();
    if pre_prices.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: pre_prices.len(),
        });
    }
    let blocks = count.div_ceil(DRAW_BLOCK);
    let rows: Vec<PanelRow> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = block_rng(seed, b as u64);
            let len = DRAW_BLOCK.min(count - b * DRAW_BLOCK);
            (0..len)
                .map(|_| {
                    let income = income_sampler.sample(&mut rng);
                    let draw = spec.sample_draw(&mut rng);
                    let pre = BudgetSet {
                        prices: pre_prices.to_vec(),
                        income,
                    };
                    let post = BudgetSet {
                        prices: post_prices.to_vec(),
                        income,
                    };
                    PanelRow {
                        pre_prices: pre.prices.clone(),
                        post_prices: post.prices.clone(),
                        income,
                        choice_pre: choose(&draw, &pre),
                        choice_post: choose(&draw, &post),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SimulatedDataset::Panel { n, rows })
}

/// Empirical complementary CDF of `samples` on `grid`: the value at `w` is
/// the fraction of samples `>= w`. Atoms carrying more than
/// `2 / sqrt(len)` of mass are recorded as mass points.
pub fn empirical_ccdf(samples: &[f64], grid: &[f64]) -> Result<DistributionCurve> {
    let sorted = sorted_samples(samples)?;
    let count = sorted.len() as f64;
    let values: Vec<f64> = grid
        .iter()
        .map(|w| {
            let below = sorted.partition_point(|s| s < w);
            (sorted.len() - below) as f64 / count
        })
        .collect();
    let mass_points = detect_atoms(&sorted, grid);
    DistributionCurve::new(CurveKind::Ccdf, grid.to_vec(), values, mass_points)
}

/// Empirical CDF counterpart of `empirical_ccdf`.
pub fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Result<DistributionCurve> {
    let sorted = sorted_samples(samples)?;
    let count = sorted.len() as f64;
    let values: Vec<f64> = grid
        .iter()
        .map(|z| sorted.partition_point(|s| s <= z) as f64 / count)
        .collect();
    let mass_points = detect_atoms(&sorted, grid);
    DistributionCurve::new(CurveKind::Cdf, grid.to_vec(), values, mass_points)
}

fn sorted_samples(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(invalid("samples must be non-empty"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted)
}

fn detect_atoms(sorted: &[f64], grid: &[f64]) -> Vec<MassPoint> {
    let count = sorted.len() as f64;
    let threshold = 2.0 / count.sqrt();
    let (lo, hi) = (grid[0], *grid.last().unwrap());
    let mut atoms = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let jump = (j - i) as f64 / count;
        if jump > threshold && sorted[i] >= lo && sorted[i] <= hi {
            atoms.push(MassPoint {
                location: sorted[i],
                jump,
            });
        }
        i = j;
    }
    atoms
}
