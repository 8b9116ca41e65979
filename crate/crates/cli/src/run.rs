//! Command execution: builds the probability models a config describes,
//! runs the requested analysis, and writes the artifacts plus a manifest
//! sufficient to reproduce them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use dcw_core::bounds::transition_bounds;
use dcw_core::model::{boundary_welfare, MmuSpec};
use dcw_core::oracle::{simulate_cross_section, simulate_panel, SimulatedDataset, UtilitySpec};
use dcw_core::probability::{
    logit_choice_model, mc_transition_model, nw_choice_estimator, nw_transition_estimator,
    ChoiceModel, TransitionMatrix, TransitionModel,
};
use dcw_core::social::{swf, swf_difference, AversionFunction, PopulationSample};
use dcw_core::welfare::{
    cv_distribution, ev_distribution, grid_with_boundaries, level_difference_joint,
    level_distribution, mmu_cv_joint, mmu_ev_joint, JointGridResult, LevelMode, QuadratureSettings,
    VariationMode,
};

use crate::config::{
    canonical_toml, resolve, AnalysisSection, AversionSpec, Command, GridSpec, Measure, ModeName,
    ModelSection, RunConfig, SimulateKind, DEFAULT_GRID_POINTS,
};

/// Paths produced by a run, manifest included.
#[derive(Debug)]
pub struct RunOutcome {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

struct Artifacts {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
    input_digests: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Artifacts {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
            input_digests: BTreeMap::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.input_digests
            .insert(path.display().to_string(), hex_digest(&bytes));
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Executes a validated config. `config_path` anchors relative data paths
/// and is digested into the manifest.
pub fn run(config: &RunConfig, config_path: Option<&Path>) -> Result<RunOutcome> {
    let mut artifacts = Artifacts::new(&config.out_dir)?;
    if let Some(p) = config_path {
        artifacts.record_input(p)?;
    }
    let base_dir = config_path.and_then(|p| p.parent());

    match config.command {
        Command::Simulate => run_simulate(config, &mut artifacts)?,
        Command::Estimate => run_estimate(config, base_dir, &mut artifacts)?,
        Command::Bounds => run_bounds(config, base_dir, &mut artifacts)?,
        Command::Welfare => run_welfare(config, base_dir, &mut artifacts)?,
        Command::Swf => run_swf(config, base_dir, &mut artifacts)?,
    }

    #[derive(Serialize)]
    struct Manifest<'a> {
        command: String,
        seed: u64,
        settings: &'a RunConfig,
        canonical_config: String,
        input_digests: &'a BTreeMap<String, String>,
        outputs: Vec<String>,
    }
    let input_digests = artifacts.input_digests.clone();
    let manifest = Manifest {
        command: config.command.to_string(),
        seed: config.seed,
        settings: config,
        canonical_config: canonical_toml(config),
        input_digests: &input_digests,
        outputs: artifacts
            .written
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    let manifest_path = artifacts.write_json("manifest.json", &manifest)?;
    let outputs = artifacts.written.clone();
    Ok(RunOutcome {
        outputs,
        manifest: manifest_path,
    })
}

fn utility_spec(config: &RunConfig) -> Result<UtilitySpec> {
    match config.model.as_ref() {
        Some(ModelSection::Logit { alpha, beta, .. }) => Ok(UtilitySpec::AdditiveLogit {
            alpha: alpha.clone(),
            beta: *beta,
        }),
        Some(ModelSection::RandomCoefficient { spec, .. }) => Ok(spec.clone()),
        _ => bail!("this command needs a utility model"),
    }
}

/// Choice and transition models per the model section. The transition
/// slot stays empty for data models without panel data.
fn build_models(
    config: &RunConfig,
    base_dir: Option<&Path>,
    artifacts: &mut Artifacts,
) -> Result<(Arc<dyn ChoiceModel>, Option<Arc<dyn TransitionModel>>)> {
    match config.model.as_ref() {
        Some(ModelSection::Logit { alpha, beta, draws }) => {
            let choice = Arc::new(logit_choice_model(alpha.clone(), *beta)?);
            let spec = UtilitySpec::AdditiveLogit {
                alpha: alpha.clone(),
                beta: *beta,
            };
            let trans = Arc::new(mc_transition_model(&spec, *draws, config.seed)?);
            Ok((choice, Some(trans)))
        }
        Some(ModelSection::RandomCoefficient { spec, draws }) => {
            let mc = Arc::new(mc_transition_model(spec, *draws, config.seed)?);
            Ok((mc.clone(), Some(mc)))
        }
        Some(ModelSection::Data {
            choice_data,
            panel_data,
            bandwidth,
        }) => {
            let mut choice: Option<Arc<dyn ChoiceModel>> = None;
            let mut trans: Option<Arc<dyn TransitionModel>> = None;
            if let Some(path) = choice_data {
                let path = resolve(base_dir, path);
                artifacts.record_input(&path)?;
                let data = SimulatedDataset::read_csv(std::fs::File::open(&path)?)?;
                let model = nw_choice_estimator(&data, *bandwidth)?;
                artifacts.write_json("choice_model_metadata.json", &model.metadata())?;
                choice = Some(Arc::new(model));
            }
            if let Some(path) = panel_data {
                let path = resolve(base_dir, path);
                artifacts.record_input(&path)?;
                let data = SimulatedDataset::read_csv(std::fs::File::open(&path)?)?;
                let model = nw_transition_estimator(&data, *bandwidth)?;
                artifacts.write_json("transition_model_metadata.json", &model.metadata())?;
                trans = Some(Arc::new(model));
            }
            let choice =
                choice.ok_or_else(|| anyhow!("data models need choice_data for this command"))?;
            Ok((choice, trans))
        }
        None => bail!("[model] section missing"),
    }
}

/// Placeholder for code paths that verifiably never query transitions.
struct UnusedTransitions {
    n: usize,
}

impl TransitionModel for UnusedTransitions {
    fn n_alternatives(&self) -> usize {
        self.n
    }
    fn transition_matrix(&self, _: &[f64], _: &[f64], _: f64) -> TransitionMatrix {
        unreachable!("mode validated as choice-only")
    }
}

fn run_simulate(config: &RunConfig, artifacts: &mut Artifacts) -> Result<()> {
    let sim = config.simulate.as_ref().expect("validated");
    let spec = utility_spec(config)?;
    let dataset = match sim.kind {
        SimulateKind::CrossSection => {
            let sampler = sim.budget_sampler.as_ref().expect("validated");
            simulate_cross_section(&spec, sampler, sim.count, config.seed)?
        }
        SimulateKind::Panel => {
            let analysis = config.analysis.as_ref().expect("validated");
            let post = analysis.post_prices.as_ref().expect("validated");
            let sampler = sim.income_sampler.as_ref().expect("validated");
            simulate_panel(
                &spec,
                &analysis.prices,
                post,
                sampler,
                sim.count,
                config.seed,
            )?
        }
    };
    let mut buf = Vec::new();
    dataset.write_csv(&mut buf)?;
    artifacts.write_bytes(&sim.output, &buf)?;
    Ok(())
}

fn run_estimate(
    config: &RunConfig,
    base_dir: Option<&Path>,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let Some(ModelSection::Data {
        choice_data,
        panel_data,
        bandwidth,
    }) = config.model.as_ref()
    else {
        bail!("estimate requires model.kind = \"data\"");
    };
    let queries = config
        .estimate
        .as_ref()
        .map(|e| e.queries.clone())
        .unwrap_or_default();

    let mut choice_model = None;
    let mut trans_model = None;
    if let Some(path) = choice_data {
        let path = resolve(base_dir, path);
        artifacts.record_input(&path)?;
        let data = SimulatedDataset::read_csv(std::fs::File::open(&path)?)?;
        let model = nw_choice_estimator(&data, *bandwidth)?;
        artifacts.write_json("choice_model_metadata.json", &model.metadata())?;
        choice_model = Some(model);
    }
    if let Some(path) = panel_data {
        let path = resolve(base_dir, path);
        artifacts.record_input(&path)?;
        let data = SimulatedDataset::read_csv(std::fs::File::open(&path)?)?;
        let model = nw_transition_estimator(&data, *bandwidth)?;
        artifacts.write_json("transition_model_metadata.json", &model.metadata())?;
        trans_model = Some(model);
    }

    // every query row must match the arity of a fitted model: n + 1
    // values for choice probabilities, 2n + 1 for transitions
    let mut choice_rows = Vec::new();
    let mut trans_rows = Vec::new();
    for q in &queries {
        match (&choice_model, &trans_model) {
            (Some(m), _) if q.len() == m.n_alternatives() + 1 => choice_rows.push(q.clone()),
            (_, Some(m)) if q.len() == 2 * m.n_alternatives() + 1 => trans_rows.push(q.clone()),
            _ => bail!(
                "query with {} values matches no fitted model's regressor",
                q.len()
            ),
        }
    }
    if let (Some(model), false) = (&choice_model, choice_rows.is_empty()) {
        let n = model.n_alternatives();
        let mut out = Vec::new();
        let mut header: Vec<String> = (0..n).map(|i| format!("p_{i}")).collect();
        header.push("y".into());
        header.extend((0..n).map(|i| format!("prob_{i}")));
        header.push("extrapolated".into());
        writeln!(out, "{}", header.join(","))?;
        for q in &choice_rows {
            let eval = model.evaluate(&q[..n], q[n]);
            let mut fields: Vec<String> = q.iter().map(|v| v.to_string()).collect();
            fields.extend(eval.probabilities.iter().map(|p| p.to_string()));
            fields.push(eval.extrapolated.to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        artifacts.write_bytes("choice_probabilities.csv", &out)?;
    }
    if let (Some(model), false) = (&trans_model, trans_rows.is_empty()) {
        let n = model.n_alternatives();
        let mut out = Vec::new();
        let mut header: Vec<String> = (0..n).map(|i| format!("p_{i}")).collect();
        header.extend((0..n).map(|i| format!("pp_{i}")));
        header.push("y".into());
        for i in 0..n {
            for j in 0..n {
                header.push(format!("prob_{i}_{j}"));
            }
        }
        header.push("extrapolated".into());
        writeln!(out, "{}", header.join(","))?;
        for q in &trans_rows {
            let (matrix, extrapolated) = model.evaluate(&q[..n], &q[n..2 * n], q[2 * n]);
            let mut fields: Vec<String> = q.iter().map(|v| v.to_string()).collect();
            fields.extend(matrix.cells().iter().map(|p| p.to_string()));
            fields.push(extrapolated.to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        artifacts.write_bytes("transition_probabilities.csv", &out)?;
    }
    Ok(())
}

fn run_bounds(
    config: &RunConfig,
    base_dir: Option<&Path>,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let analysis = config.analysis.as_ref().expect("validated");
    let post = analysis.post_prices.as_ref().expect("validated");
    let (choice, _) = build_models(config, base_dir, artifacts)?;
    let n = choice.n_alternatives();
    if analysis.prices.len() != n {
        bail!(
            "analysis.prices length {} does not match the model's {n}",
            analysis.prices.len()
        );
    }
    let mut out = Vec::new();
    writeln!(out, "i,j,lower,upper")?;
    for i in 0..n {
        for j in 0..n {
            let interval =
                transition_bounds(&*choice, i, j, &analysis.prices, post, analysis.income)?;
            writeln!(out, "{},{},{},{}", i, j, interval.lower, interval.upper)?;
        }
    }
    artifacts.write_bytes("bounds.csv", &out)?;
    Ok(())
}

fn family_for(analysis: &AnalysisSection) -> Result<MmuSpec> {
    let refs = analysis
        .reference_prices
        .clone()
        .ok_or_else(|| anyhow!("analysis.reference_prices required"))?;
    Ok(MmuSpec::new(refs, analysis.income)?)
}

fn materialize_grid(spec: Option<&GridSpec>, boundaries: &[f64], fallback: (f64, f64)) -> Vec<f64> {
    match spec {
        Some(g) => grid_with_boundaries(g.lo, g.hi, g.points, boundaries),
        None => {
            let (mut lo, mut hi) = fallback;
            if !(hi > lo) {
                hi = lo + 0.5;
                lo -= 0.5;
            }
            grid_with_boundaries(lo, hi, DEFAULT_GRID_POINTS, boundaries)
        }
    }
}

fn level_mode(analysis: &AnalysisSection) -> Result<LevelMode> {
    Ok(match analysis.mode.as_ref().expect("validated") {
        ModeName::Joint => LevelMode::Joint {
            post_choice: analysis.post_choice.expect("validated"),
        },
        ModeName::ConditionalOnPostChoice => LevelMode::ConditionalOnPostChoice {
            post_choice: analysis.post_choice.expect("validated"),
        },
        ModeName::ConditionalOnOwnChoice => LevelMode::ConditionalOnOwnChoice,
        ModeName::MarginalAtBundle => LevelMode::MarginalAtBundle,
        ModeName::MarginalAtOptimum => LevelMode::MarginalAtOptimum,
        other => bail!("mode {other:?} is not a level mode"),
    })
}

fn variation_mode(analysis: &AnalysisSection) -> Result<VariationMode> {
    Ok(match analysis.mode.as_ref().expect("validated") {
        ModeName::Joint => VariationMode::Joint {
            pre_choice: analysis.pre_choice.expect("validated"),
            post_choice: analysis.post_choice.expect("validated"),
        },
        ModeName::ConditionalOnBoth => VariationMode::ConditionalOnBoth {
            pre_choice: analysis.pre_choice.expect("validated"),
            post_choice: analysis.post_choice.expect("validated"),
        },
        ModeName::ConditionalOnPre => VariationMode::ConditionalOnPre {
            pre_choice: analysis.pre_choice.expect("validated"),
        },
        ModeName::ConditionalOnPost => VariationMode::ConditionalOnPost {
            post_choice: analysis.post_choice.expect("validated"),
        },
        ModeName::Marginal => VariationMode::Marginal,
        other => bail!("mode {other:?} is not a variation mode"),
    })
}

fn run_welfare(
    config: &RunConfig,
    base_dir: Option<&Path>,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let analysis = config.analysis.as_ref().expect("validated");
    let measure = analysis.measure.expect("validated");
    let (choice, trans) = build_models(config, base_dir, artifacts)?;
    let n = choice.n_alternatives();
    if analysis.prices.len() != n {
        bail!(
            "analysis.prices length {} does not match the model's {n}",
            analysis.prices.len()
        );
    }

    #[derive(Serialize)]
    struct CurveMetadata<'a> {
        measure: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        mode: Option<&'a ModeName>,
        kind: &'a str,
        mass_points: Vec<dcw_core::model::MassPoint>,
        #[serde(skip_serializing_if = "Option::is_none")]
        quadrature: Option<QuadratureSettings>,
        seed: u64,
    }

    match measure {
        Measure::LevelDifferenceJoint => {
            let family = family_for(analysis)?;
            let post = analysis.post_prices.as_ref().expect("validated");
            let trans_model = trans.ok_or_else(|| {
                anyhow!("the level-difference joint needs transition probabilities")
            })?;
            let i = analysis.pre_choice.expect("validated");
            let j = analysis.post_choice.expect("validated");
            let wg = analysis.w_grid.expect("validated");
            let zg = analysis.z_grid.expect("validated");
            let w_grid = grid_with_boundaries(wg.lo, wg.hi, wg.points, &[]);
            let z_grid = grid_with_boundaries(zg.lo, zg.hi, zg.points, &[]);
            let quad = analysis
                .quadrature
                .unwrap_or_else(|| QuadratureSettings::for_z_span(zg.hi - zg.lo));
            let mut values = Vec::with_capacity(w_grid.len() * z_grid.len());
            for w in &w_grid {
                for z in &z_grid {
                    values.push(level_difference_joint(
                        &*trans_model,
                        &family,
                        &family,
                        &analysis.prices,
                        post,
                        analysis.income,
                        i,
                        j,
                        *w,
                        *z,
                        &quad,
                    )?);
                }
            }
            let joint = JointGridResult::new(w_grid, z_grid, values)?;
            let mut buf = Vec::new();
            joint.write_csv(&mut buf)?;
            artifacts.write_bytes("joint.csv", &buf)?;
            artifacts.write_json(
                "joint_metadata.json",
                &CurveMetadata {
                    measure: "level_difference_joint",
                    mode: None,
                    kind: "ccdf_in_w_cdf_in_z",
                    mass_points: vec![],
                    quadrature: Some(quad),
                    seed: config.seed,
                },
            )?;
        }
        Measure::Levels => {
            let family = family_for(analysis)?;
            let mode = level_mode(analysis)?;
            let needs_trans = matches!(
                mode,
                LevelMode::Joint { .. } | LevelMode::ConditionalOnPostChoice { .. }
            );
            let k = analysis.k.unwrap_or(0);
            let p_k = analysis.p_k.unwrap_or(analysis.prices[k]);
            let prices = match mode {
                LevelMode::Joint { .. } | LevelMode::ConditionalOnPostChoice { .. } => {
                    analysis.post_prices.clone().expect("validated")
                }
                _ => analysis.prices.clone(),
            };
            let boundaries: Vec<f64> = match mode {
                LevelMode::MarginalAtOptimum => (0..n)
                    .filter_map(|c| boundary_welfare(&family, c, prices[c], analysis.income))
                    .collect(),
                _ => boundary_welfare(&family, k, p_k, analysis.income)
                    .into_iter()
                    .collect(),
            };
            let lo = boundaries.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = boundaries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let fallback = (lo - 6.0 * (hi - lo + 1.0), hi);
            let grid = materialize_grid(analysis.grid.as_ref(), &boundaries, fallback);
            let trans_model: Arc<dyn TransitionModel> = match (&trans, needs_trans) {
                (Some(t), _) => t.clone(),
                (None, false) => Arc::new(UnusedTransitions { n }),
                (None, true) => bail!(
                    "mode {:?} needs transition probabilities; provide panel data or a utility model",
                    analysis.mode
                ),
            };
            let curve = level_distribution(
                &*trans_model,
                &*choice,
                &family,
                k,
                p_k,
                &prices,
                analysis.income,
                mode,
                &grid,
            )?;
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            artifacts.write_bytes("curve.csv", &buf)?;
            artifacts.write_json(
                "curve_metadata.json",
                &CurveMetadata {
                    measure: "levels",
                    mode: analysis.mode.as_ref(),
                    kind: "ccdf",
                    mass_points: curve.mass_points().to_vec(),
                    quadrature: None,
                    seed: config.seed,
                },
            )?;
        }
        Measure::Cv | Measure::Ev => {
            let mode = variation_mode(analysis)?;
            let post = analysis.post_prices.as_ref().expect("validated");
            let gaps: Vec<f64> = match measure {
                Measure::Cv => analysis
                    .prices
                    .iter()
                    .zip(post)
                    .map(|(p, pp)| p - pp)
                    .collect(),
                _ => post
                    .iter()
                    .zip(&analysis.prices)
                    .map(|(pp, p)| pp - p)
                    .collect(),
            };
            let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = materialize_grid(analysis.grid.as_ref(), &gaps, (lo, hi));
            let needs_trans = !matches!(
                (measure, mode),
                (Measure::Cv, VariationMode::Marginal)
                    | (Measure::Cv, VariationMode::ConditionalOnPre { .. })
                    | (Measure::Ev, VariationMode::Marginal)
                    | (Measure::Ev, VariationMode::ConditionalOnPost { .. })
            );
            let trans_model: Arc<dyn TransitionModel> = match (&trans, needs_trans) {
                (Some(t), _) => t.clone(),
                (None, false) => Arc::new(UnusedTransitions { n }),
                (None, true) => bail!(
                    "mode {:?} needs transition probabilities; provide panel data or a utility model",
                    analysis.mode
                ),
            };
            let curve = match measure {
                Measure::Cv => cv_distribution(
                    &*trans_model,
                    &*choice,
                    &analysis.prices,
                    post,
                    analysis.income,
                    mode,
                    &grid,
                )?,
                _ => ev_distribution(
                    &*trans_model,
                    &*choice,
                    &analysis.prices,
                    post,
                    analysis.income,
                    mode,
                    &grid,
                )?,
            };
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            artifacts.write_bytes("curve.csv", &buf)?;
            artifacts.write_json(
                "curve_metadata.json",
                &CurveMetadata {
                    measure: if measure == Measure::Cv { "cv" } else { "ev" },
                    mode: analysis.mode.as_ref(),
                    kind: "cdf",
                    mass_points: curve.mass_points().to_vec(),
                    quadrature: None,
                    seed: config.seed,
                },
            )?;
        }
        Measure::MmuCvJoint | Measure::MmuEvJoint => {
            let mode = variation_mode(analysis)?;
            let post = analysis.post_prices.as_ref().expect("validated");
            let trans_model = trans.ok_or_else(|| {
                anyhow!("joint measures need transition probabilities; provide panel data or a utility model")
            })?;
            let gaps: Vec<f64> = match measure {
                Measure::MmuCvJoint => analysis
                    .prices
                    .iter()
                    .zip(post)
                    .map(|(p, pp)| p - pp)
                    .collect(),
                _ => post
                    .iter()
                    .zip(&analysis.prices)
                    .map(|(pp, p)| pp - p)
                    .collect(),
            };
            let z_lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let z_hi = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z_grid = materialize_grid(analysis.z_grid.as_ref(), &gaps, (z_lo, z_hi));
            let w_boundaries: Vec<f64> = match measure {
                Measure::MmuCvJoint => gaps.iter().map(|g| analysis.income - g).collect(),
                _ => vec![analysis.income],
            };
            let w_lo = w_boundaries.iter().cloned().fold(f64::INFINITY, f64::min);
            let w_hi = w_boundaries
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let w_grid = materialize_grid(
                analysis.w_grid.as_ref(),
                &w_boundaries,
                (w_lo - 6.0 * (w_hi - w_lo + 1.0), w_hi),
            );
            let joint: JointGridResult = match measure {
                Measure::MmuCvJoint => mmu_cv_joint(
                    &*trans_model,
                    &analysis.prices,
                    post,
                    analysis.income,
                    mode,
                    &w_grid,
                    &z_grid,
                )?,
                _ => mmu_ev_joint(
                    &*trans_model,
                    &analysis.prices,
                    post,
                    analysis.income,
                    mode,
                    &w_grid,
                    &z_grid,
                )?,
            };
            let mut buf = Vec::new();
            joint.write_csv(&mut buf)?;
            artifacts.write_bytes("joint.csv", &buf)?;
            artifacts.write_json(
                "joint_metadata.json",
                &CurveMetadata {
                    measure: if measure == Measure::MmuCvJoint {
                        "mmu_cv_joint"
                    } else {
                        "mmu_ev_joint"
                    },
                    mode: analysis.mode.as_ref(),
                    kind: "ccdf_in_w_cdf_in_z",
                    mass_points: vec![],
                    quadrature: None,
                    seed: config.seed,
                },
            )?;
        }
    }
    Ok(())
}

fn run_swf(config: &RunConfig, base_dir: Option<&Path>, artifacts: &mut Artifacts) -> Result<()> {
    let analysis = config.analysis.as_ref().expect("validated");
    let section = config.swf.as_ref().expect("validated");
    let (choice, _) = build_models(config, base_dir, artifacts)?;

    let pop_path = resolve(base_dir, &section.population);
    artifacts.record_input(&pop_path)?;
    let population = PopulationSample::read_csv(std::fs::File::open(&pop_path)?)?;
    if population.n_alternatives() != choice.n_alternatives() {
        bail!(
            "population has {} alternatives, the model {}",
            population.n_alternatives(),
            choice.n_alternatives()
        );
    }
    let family = family_for(analysis)?;
    let aversion = match section.aversion {
        AversionSpec::Identity => AversionFunction::identity(),
        AversionSpec::NegExponential { rate } => AversionFunction::negative_exponential(rate)?,
    };

    let boundaries: Vec<f64> = population
        .members()
        .flat_map(|(b, _)| {
            (0..b.n_alternatives())
                .filter_map(|c| boundary_welfare(&family, c, b.prices[c], b.income))
                .collect::<Vec<_>>()
        })
        .collect();
    let lo = boundaries.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = boundaries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w_grid = materialize_grid(
        analysis.grid.as_ref(),
        &boundaries,
        (lo - 6.0 * (hi - lo + 1.0), hi),
    );
    aversion.validate(&w_grid)?;

    let result = swf(&*choice, &family, &aversion, &population, &w_grid)?;
    let difference = match &section.delta_p {
        Some(dp) => Some(swf_difference(
            &*choice,
            &family,
            &aversion,
            &population,
            dp,
            &w_grid,
        )?),
        None => None,
    };

    #[derive(Serialize)]
    struct SwfReport {
        swf: f64,
        per_member_contributions: Vec<f64>,
        truncated_tail: bool,
        aversion: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        swf_difference: Option<f64>,
    }
    artifacts.write_json(
        "swf.json",
        &SwfReport {
            swf: result.swf,
            per_member_contributions: result.per_member_contributions,
            truncated_tail: result.truncated_tail,
            aversion: aversion.name().to_string(),
            swf_difference: difference,
        },
    )?;
    Ok(())
}

/// Writes a machine-readable error record beside the other artifacts.
pub fn write_error_record(out_dir: &Path, message: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("error.json");
    let body = serde_json::json!({ "error": message });
    std::fs::write(
        &path,
        format!("{}\n", serde_json::to_string_pretty(&body).unwrap()),
    )?;
    Ok(path)
}

/// Applies command-line overrides onto a parsed config.
pub fn apply_overrides(
    config: &mut RunConfig,
    command: Command,
    seed: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<()> {
    if config.command != command {
        bail!(
            "config file declares command \"{}\" but the \"{}\" subcommand was invoked",
            config.command,
            command
        );
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(dir) = out_dir {
        config.out_dir = dir.to_path_buf();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_rejects_command_mismatch() {
        let mut config = RunConfig {
            command: Command::Bounds,
            seed: 0,
            out_dir: PathBuf::from("out"),
            model: None,
            analysis: None,
            simulate: None,
            estimate: None,
            swf: None,
        };
        assert!(apply_overrides(&mut config, Command::Welfare, None, None).is_err());
        assert!(apply_overrides(&mut config, Command::Bounds, Some(9), None).is_ok());
        assert_eq!(config.seed, 9);
    }
}
