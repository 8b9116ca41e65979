//! Run configuration: one TOML file per run, validated exhaustively so a
//! bad config reports every problem at once rather than the first.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dcw_core::oracle::{BudgetSampler, IncomeSampler, UtilitySpec};
use dcw_core::probability::{BandwidthRule, DEFAULT_MC_DRAWS};

/// Number of grid points a generated evaluation grid defaults to.
pub use dcw_core::model::DEFAULT_GRID_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Bounds,
    Welfare,
    Swf,
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Bounds => "bounds",
            Command::Welfare => "welfare",
            Command::Swf => "swf",
        };
        f.write_str(name)
    }
}

/// Where the probability models come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSection {
    /// Analytic logit choice probabilities plus a Monte Carlo transition
    /// truth simulated from the same utility parameters.
    Logit {
        alpha: Vec<f64>,
        beta: f64,
        #[serde(default = "default_draws")]
        draws: usize,
    },
    /// Monte Carlo choice and transition probabilities for a
    /// random-coefficient utility specification.
    RandomCoefficient {
        spec: UtilitySpec,
        #[serde(default = "default_draws")]
        draws: usize,
    },
    /// Kernel estimators fitted to datasets on disk.
    Data {
        #[serde(skip_serializing_if = "Option::is_none")]
        choice_data: Option<PathBuf>,
        #[serde(skip_serializing_if = "Option::is_none")]
        panel_data: Option<PathBuf>,
        #[serde(default = "default_bandwidth")]
        bandwidth: BandwidthRule,
    },
}

fn default_draws() -> usize {
    DEFAULT_MC_DRAWS
}

fn default_bandwidth() -> BandwidthRule {
    BandwidthRule::RuleOfThumb
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

/// Welfare measure selector for the `welfare` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Levels,
    Cv,
    Ev,
    MmuCvJoint,
    MmuEvJoint,
    /// General joint of the pre-change level and the level difference,
    /// integrated over the post-change level axis.
    LevelDifferenceJoint,
}

/// Conditioning mode written out in the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Joint,
    ConditionalOnPostChoice,
    ConditionalOnOwnChoice,
    MarginalAtBundle,
    MarginalAtOptimum,
    ConditionalOnBoth,
    ConditionalOnPre,
    ConditionalOnPost,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub prices: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_prices: Option<Vec<f64>>,
    pub income: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_prices: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    /// Bundle index for level measures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Price of the evaluated bundle when it differs from `prices[k]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_choice: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_choice: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<dcw_core::welfare::QuadratureSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateKind {
    CrossSection,
    Panel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSection {
    pub kind: SimulateKind,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_sampler: Option<BudgetSampler>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub income_sampler: Option<IncomeSampler>,
    #[serde(default = "default_dataset_name")]
    pub output: String,
}

fn default_dataset_name() -> String {
    "dataset.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSection {
    /// Query points at which fitted probabilities are exported, one price
    /// vector per row (plus the analysis income).
    #[serde(default)]
    pub queries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AversionSpec {
    Identity,
    NegExponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwfSection {
    pub population: PathBuf,
    #[serde(default = "default_aversion")]
    pub aversion: AversionSpec,
    /// Per-alternative price shift for the difference report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<Vec<f64>>,
}

fn default_aversion() -> AversionSpec {
    AversionSpec::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub model: Option<ModelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swf: Option<SwfSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// All validation problems found in a config, never just the first.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} config error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses and validates a config file, reporting every violation found.
pub fn parse_config(path: &Path) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    let config: RunConfig = toml::from_str(&text)?;
    let errors = validate(&config, path.parent());
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(Box::new(ConfigErrors(errors)))
    }
}

/// Canonical serialized form with defaults materialized; re-parsing it
/// yields an equal config.
pub fn canonical_toml(config: &RunConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

fn validate(config: &RunConfig, base_dir: Option<&Path>) -> Vec<String> {
    let mut errors = Vec::new();
    let mut dims: BTreeSet<(String, usize)> = BTreeSet::new();

    match &config.model {
        Some(ModelSection::Logit { alpha, beta, draws }) => {
            if alpha.is_empty() {
                errors.push("model.alpha must be non-empty".into());
            } else {
                dims.insert(("model.alpha".into(), alpha.len()));
            }
            if !(*beta > 0.0) {
                errors.push(format!("model.beta must be positive, got {beta}"));
            }
            if *draws == 0 {
                errors.push("model.draws must be at least 1".into());
            }
        }
        Some(ModelSection::RandomCoefficient { spec, draws }) => {
            if let Err(e) = spec.validate() {
                errors.push(format!("model.spec: {e}"));
            } else {
                dims.insert(("model.spec".into(), spec.n_alternatives()));
            }
            if *draws == 0 {
                errors.push("model.draws must be at least 1".into());
            }
        }
        Some(ModelSection::Data {
            choice_data,
            panel_data,
            bandwidth,
        }) => {
            if choice_data.is_none() && panel_data.is_none() {
                errors
                    .push("model.choice_data or model.panel_data required for data models".into());
            }
            for (field, p) in [
                ("model.choice_data", choice_data),
                ("model.panel_data", panel_data),
            ] {
                if let Some(p) = p {
                    let resolved = resolve(base_dir, p);
                    if !resolved.exists() {
                        errors.push(format!(
                            "{field}: file {} does not exist",
                            resolved.display()
                        ));
                    }
                }
            }
            if let BandwidthRule::Fixed { h } = bandwidth {
                if !(*h > 0.0) {
                    errors.push(format!("model.bandwidth.h must be positive, got {h}"));
                }
            }
        }
        None => {
            if matches!(
                config.command,
                Command::Simulate | Command::Bounds | Command::Welfare | Command::Swf
            ) {
                errors.push(format!("[model] section required for {}", config.command));
            }
            if config.command == Command::Estimate {
                errors.push("[model] section with kind = \"data\" required for estimate".into());
            }
        }
    }

    if let Some(analysis) = &config.analysis {
        if analysis.prices.is_empty() {
            errors.push("analysis.prices must be non-empty".into());
        } else {
            dims.insert(("analysis.prices".into(), analysis.prices.len()));
        }
        if let Some(pp) = &analysis.post_prices {
            dims.insert(("analysis.post_prices".into(), pp.len()));
        }
        if let Some(rp) = &analysis.reference_prices {
            dims.insert(("analysis.reference_prices".into(), rp.len()));
        }
        if !analysis.income.is_finite() {
            errors.push("analysis.income must be finite".into());
        }
        for (name, grid) in [
            ("analysis.grid", &analysis.grid),
            ("analysis.w_grid", &analysis.w_grid),
            ("analysis.z_grid", &analysis.z_grid),
        ] {
            if let Some(g) = grid {
                if !(g.lo < g.hi) {
                    errors.push(format!("{name}: lo {} must be below hi {}", g.lo, g.hi));
                }
                if g.points < 2 {
                    errors.push(format!("{name}: needs at least 2 points, got {}", g.points));
                }
            }
        }
    }

    match config.command {
        Command::Simulate => validate_simulate(config, &mut errors, &mut dims),
        Command::Estimate => {
            if config
                .model
                .as_ref()
                .is_some_and(|m| !matches!(m, ModelSection::Data { .. }))
            {
                errors.push("estimate requires model.kind = \"data\"".into());
            }
        }
        Command::Bounds => match &config.analysis {
            None => errors.push("[analysis] section required for bounds".into()),
            Some(a) => {
                if a.post_prices.is_none() {
                    errors.push("analysis.post_prices required for bounds".into());
                }
            }
        },
        Command::Welfare => validate_welfare(config, &mut errors),
        Command::Swf => {
            if config.swf.is_none() {
                errors.push("[swf] section required for swf".into());
            } else if let Some(swf) = &config.swf {
                let resolved = resolve(base_dir, &swf.population);
                if !resolved.exists() {
                    errors.push(format!(
                        "swf.population: file {} does not exist",
                        resolved.display()
                    ));
                }
                if let AversionSpec::NegExponential { rate } = swf.aversion {
                    if !(rate > 0.0) {
                        errors.push(format!("swf.aversion.rate must be positive, got {rate}"));
                    }
                }
                if let Some(dp) = &swf.delta_p {
                    dims.insert(("swf.delta_p".into(), dp.len()));
                }
            }
            if config
                .analysis
                .as_ref()
                .map(|a| a.reference_prices.is_none())
                == Some(true)
            {
                errors.push("analysis.reference_prices required for swf".into());
            }
            if config.analysis.is_none() {
                errors.push("[analysis] section with reference_prices required for swf".into());
            }
        }
    }

    // single consistency report naming every field that disagrees
    let distinct: BTreeSet<usize> = dims.iter().map(|(_, n)| *n).collect();
    if distinct.len() > 1 {
        let detail: Vec<String> = dims
            .iter()
            .map(|(f, n)| format!("{f} has length {n}"))
            .collect();
        errors.push(format!(
            "alternative counts disagree across sections: {}",
            detail.join(", ")
        ));
    }

    errors
}

fn validate_simulate(
    config: &RunConfig,
    errors: &mut Vec<String>,
    dims: &mut BTreeSet<(String, usize)>,
) {
    let Some(sim) = &config.simulate else {
        errors.push("[simulate] section required for simulate".into());
        return;
    };
    if sim.count == 0 {
        errors.push("simulate.count must be at least 1".into());
    }
    match sim.kind {
        SimulateKind::CrossSection => match &sim.budget_sampler {
            None => errors.push("simulate.budget_sampler required for cross-section runs".into()),
            Some(s) => {
                dims.insert(("simulate.budget_sampler".into(), s.n_alternatives()));
            }
        },
        SimulateKind::Panel => {
            match &config.analysis {
                None => errors
                    .push("[analysis] with prices and post_prices required for panel runs".into()),
                Some(a) => {
                    if a.post_prices.is_none() {
                        errors.push("analysis.post_prices required for panel runs".into());
                    }
                }
            }
            if sim.income_sampler.is_none() {
                errors.push("simulate.income_sampler required for panel runs".into());
            }
        }
    }
    if matches!(config.model, Some(ModelSection::Data { .. })) {
        errors.push("simulate requires a utility model, not data".into());
    }
}

fn validate_welfare(config: &RunConfig, errors: &mut Vec<String>) {
    let Some(analysis) = &config.analysis else {
        errors.push("[analysis] section required for welfare".into());
        return;
    };
    let Some(measure) = analysis.measure else {
        errors.push("analysis.measure required for welfare".into());
        return;
    };
    let mode = analysis.mode.clone();
    let needs_post_prices = !matches!(measure, Measure::Levels)
        || matches!(
            mode,
            Some(ModeName::Joint) | Some(ModeName::ConditionalOnPostChoice)
        );
    if needs_post_prices && analysis.post_prices.is_none() {
        errors.push(format!(
            "analysis.post_prices required for measure {measure:?}"
        ));
    }
    match measure {
        Measure::Levels => {
            if analysis.reference_prices.is_none() {
                errors.push("analysis.reference_prices required for level measures".into());
            }
            match &mode {
                None => errors.push("analysis.mode required for level measures".into()),
                Some(
                    ModeName::Joint
                    | ModeName::ConditionalOnPostChoice
                    | ModeName::ConditionalOnOwnChoice
                    | ModeName::MarginalAtBundle
                    | ModeName::MarginalAtOptimum,
                ) => {}
                Some(other) => errors.push(format!("mode {other:?} is not a level mode")),
            }
            let needs_k = !matches!(mode, Some(ModeName::MarginalAtOptimum));
            if needs_k && analysis.k.is_none() {
                errors.push("analysis.k required for bundle-specific level modes".into());
            }
            if matches!(
                mode,
                Some(ModeName::Joint) | Some(ModeName::ConditionalOnPostChoice)
            ) && analysis.post_choice.is_none()
            {
                errors
                    .push("analysis.post_choice required for post-conditioned level modes".into());
            }
        }
        Measure::LevelDifferenceJoint => {
            if analysis.reference_prices.is_none() {
                errors.push("analysis.reference_prices required for level measures".into());
            }
            if analysis.pre_choice.is_none() || analysis.post_choice.is_none() {
                errors.push(
                    "analysis.pre_choice and analysis.post_choice required for the \
                     level-difference joint"
                        .into(),
                );
            }
            if analysis.w_grid.is_none() || analysis.z_grid.is_none() {
                errors
                    .push("analysis.w_grid and analysis.z_grid required for joint measures".into());
            }
        }
        Measure::Cv | Measure::Ev | Measure::MmuCvJoint | Measure::MmuEvJoint => {
            match &mode {
                None => errors.push("analysis.mode required".into()),
                Some(
                    ModeName::Joint
                    | ModeName::ConditionalOnBoth
                    | ModeName::ConditionalOnPre
                    | ModeName::ConditionalOnPost
                    | ModeName::Marginal,
                ) => {}
                Some(other) => errors.push(format!("mode {other:?} is not a variation mode")),
            }
            let needs_pre = matches!(
                mode,
                Some(ModeName::Joint | ModeName::ConditionalOnBoth | ModeName::ConditionalOnPre)
            );
            let needs_post = matches!(
                mode,
                Some(ModeName::Joint | ModeName::ConditionalOnBoth | ModeName::ConditionalOnPost)
            );
            if needs_pre && analysis.pre_choice.is_none() {
                errors.push("analysis.pre_choice required for this mode".into());
            }
            if needs_post && analysis.post_choice.is_none() {
                errors.push("analysis.post_choice required for this mode".into());
            }
        }
    }
}

pub fn resolve(base_dir: Option<&Path>, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir
            .map(|b| b.join(path))
            .unwrap_or_else(|| path.to_path_buf())
    }
}
