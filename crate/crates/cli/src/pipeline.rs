//! End-to-end runs: environment and policy construction, state
//! enumeration, explanation, serialisation, evaluation studies and the
//! output manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssx_core::env::{enumerate_reachable, four_rooms_env, minipac_env, EnvModel, GridState, Layout, MiniPacParams, StateSpace};
use ssx_core::evalharness::{
    bounded_roots, growth_csv, growth_study, horizon_faithfulness, k_sweep, line_chart, perturbation_stability,
    rollout_roots, sampling_csv, sampling_study, Series,
};
use ssx_core::explain::{explain, Explanation};
use ssx_core::pathgraph::{all_actions, build_gamma_cached, local_approximation};
use ssx_core::policy::{induce_transition_model, value_iteration, Policy, ScriptedMiniPac, TabularPolicy};
use ssx_core::{Error, Result};

use crate::config::{scheme_name, EnvKind, PolicyKind, RunConfig};
use crate::render::render_explanation;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXPLANATION_FILE: &str = "explanation.json";
pub const EXPLANATION_SVG: &str = "explanation.svg";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Evaluation studies run by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Sampling,
    Horizon,
    Perturbation,
    Growth,
    KSweep,
}

impl Study {
    pub const ALL: [Study; 5] = [Study::Sampling, Study::Horizon, Study::Perturbation, Study::Growth, Study::KSweep];

    pub fn name(self) -> &'static str {
        match self {
            Study::Sampling => "sampling",
            Study::Horizon => "horizon",
            Study::Perturbation => "perturbation",
            Study::Growth => "growth",
            Study::KSweep => "ksweep",
        }
    }

    pub fn parse(s: &str) -> Option<Study> {
        Study::ALL.into_iter().find(|st| st.name() == s)
    }
}

pub fn build_env(cfg: &RunConfig) -> Result<EnvModel> {
    let layout = match &cfg.env.layout {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read layout {}: {e}", path.display())))?;
            Some(Layout::parse(&text)?)
        }
        None => None,
    };
    match (cfg.env.kind, layout) {
        (EnvKind::FourRooms, None) => four_rooms_env(cfg.env.grid_size, cfg.env.goal),
        (EnvKind::FourRooms, Some(layout)) => EnvModel::gridworld(layout),
        (EnvKind::MiniPac, None) => Ok(ssx_core::env::default_minipac(cfg.env.scheme)),
        (EnvKind::MiniPac, Some(layout)) => minipac_env(layout, cfg.env.scheme, MiniPacParams::default()),
    }
}

/// The configured root: `env.root` when set, else `env.start` on a
/// gridworld and the layout's start state on a pacman board.
pub fn root_state(cfg: &RunConfig, env: &EnvModel) -> Result<GridState> {
    match &cfg.env.root {
        Some(text) => env.decode(text).map_err(|_| Error::InvalidConfig(format!("env.root {text:?} is not a valid state"))),
        None if env.is_minipac() => Ok(env.start_state()),
        None => {
            let s = GridState::at(cfg.env.start);
            if env.is_valid(&s) {
                Ok(s)
            } else {
                Err(Error::InvalidConfig(format!("env.start {} is not an open cell", cfg.env.start)))
            }
        }
    }
}

/// Local space within `ssx.horizon` moves of the root, or the full
/// reachable space without a horizon. Either is capped at `ssx.max_states`.
pub fn state_space(cfg: &RunConfig, env: &EnvModel, root: &GridState) -> Result<StateSpace> {
    match cfg.horizon {
        Some(n) => {
            let local = local_approximation(env, root, n, all_actions)?;
            if local.len() > cfg.max_states {
                return Err(Error::Truncated { cap: cfg.max_states });
            }
            Ok(local.into_space())
        }
        None => enumerate_reachable(env, root, cfg.max_states),
    }
}

/// Policy for an explanation over `space`. Value iteration solves on
/// `space` itself.
pub fn build_policy(cfg: &RunConfig, env: &EnvModel, space: Option<&StateSpace>) -> Result<Box<dyn Policy>> {
    let p = &cfg.policy;
    match p.kind {
        PolicyKind::Scripted => Ok(Box::new(ScriptedMiniPac::new(env, cfg.env.scheme, p.temperature)?)),
        PolicyKind::Tabular => {
            let path = p.table.as_ref().expect("validated");
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("cannot read policy table {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            Ok(Box::new(TabularPolicy::from_json(env, &value)?))
        }
        PolicyKind::ValueIteration => {
            let space = space.ok_or_else(|| {
                Error::InvalidConfig("value iteration solves one state space; studies need a scripted or tabular policy".into())
            })?;
            let (_, policy) = value_iteration(env, space, p.discount, p.tolerance, p.max_iters, p.temperature)?;
            Ok(Box::new(policy))
        }
    }
}

/// Explanation with everything needed to rebuild it, as written to
/// `explanation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDoc {
    pub ssx_version: String,
    pub env: EnvDoc,
    /// Effective settings except the output directory.
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: u64,
    pub root: String,
    /// Encoded states by index.
    pub states: Vec<String>,
    pub partition: PartitionDoc,
    pub meta_states: Vec<MetaStateDoc>,
    pub goal: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDoc {
    #[serde(rename = "type")]
    pub kind: String,
    pub scheme: String,
    pub layout: Vec<String>,
    pub layout_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaStateDoc {
    pub id: usize,
    pub size: usize,
    pub goal: bool,
    pub degenerate: bool,
    /// Selection order; the first entry is the priority strategic state.
    pub strategic: Vec<StrategicDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicDoc {
    pub state: usize,
    pub encoded: String,
    pub gain: f64,
    pub count: f64,
}

impl ExplanationDoc {
    pub fn new(cfg: &RunConfig, env: &EnvModel, root: &GridState, expl: &Explanation) -> Self {
        let mut config: BTreeMap<String, String> =
            cfg.canonical().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        config.remove("output.dir");
        let k = expl.partition.k;
        let mut sizes = vec![0; k];
        for &m in &expl.partition.assignment {
            sizes[m] += 1;
        }
        let meta_states = expl
            .strategic
            .iter()
            .map(|set| MetaStateDoc {
                id: set.meta_state,
                size: sizes[set.meta_state],
                goal: set.goal,
                degenerate: set.degenerate,
                strategic: set
                    .states
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| StrategicDoc {
                        state: s,
                        encoded: env.encode(expl.space.state(s)),
                        gain: set.gains.get(i).copied().unwrap_or(0.0),
                        count: expl.counts.get(s, set.meta_state),
                    })
                    .collect(),
            })
            .collect();
        ExplanationDoc {
            ssx_version: VERSION.to_string(),
            env: EnvDoc {
                kind: cfg.env.kind.name().to_string(),
                scheme: scheme_name(cfg.env.scheme).to_string(),
                layout: env.layout().to_string().lines().map(str::to_string).collect(),
                layout_hash: env.layout_hash(),
            },
            config,
            config_hash: cfg.hash(),
            seed: cfg.ssx.seed,
            root: env.encode(root),
            states: expl.space.states().iter().map(|s| env.encode(s)).collect(),
            partition: PartitionDoc {
                k,
                assignment: expl.partition.assignment.clone(),
                objective: expl.partition.objective,
                history: expl.partition.history.clone(),
                iterations: expl.partition.iterations,
                restart: expl.partition.restart,
            },
            meta_states,
            goal: expl.goal,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Files written by one command, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub ssx_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Command name to the files it wrote, relative to the output directory.
    pub runs: BTreeMap<String, Vec<String>>,
}

/// Whether a previous manifest in the output directory already covered the
/// command with the same configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Fresh,
    Repeat,
    /// The directory held outputs of a different configuration.
    Replaced,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Records `files` for `command` and returns how the run relates to the
/// previous manifest.
pub fn record_run(cfg: &RunConfig, command: &str, files: &[PathBuf]) -> Result<RunStatus> {
    let dir = &cfg.output_dir;
    let hash = cfg.hash();
    let path = dir.join(MANIFEST_FILE);
    let previous: Option<Manifest> = fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str(&t).ok());
    let names: Vec<String> = files
        .iter()
        .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
        .collect();
    let (mut manifest, status) = match previous {
        Some(m) if m.config_hash == hash && m.ssx_version == VERSION => {
            let status = if m.runs.get(command) == Some(&names) { RunStatus::Repeat } else { RunStatus::Fresh };
            (m, status)
        }
        Some(_) => (empty_manifest(cfg), RunStatus::Replaced),
        None => (empty_manifest(cfg), RunStatus::Fresh),
    };
    manifest.runs.insert(command.to_string(), names);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(status)
}

fn empty_manifest(cfg: &RunConfig) -> Manifest {
    Manifest { ssx_version: VERSION.to_string(), config_hash: cfg.hash(), seed: cfg.ssx.seed, runs: BTreeMap::new() }
}

/// Result of [`run_explain`].
pub struct ExplainRun {
    pub env: EnvModel,
    pub explanation: Explanation,
    pub doc: ExplanationDoc,
    pub files: Vec<PathBuf>,
}

/// Explains the configured state space. The environment, policy and
/// explanation are computed without touching disk apart from the path
/// matrix cache.
pub fn explain_config(cfg: &RunConfig, cache_dir: Option<&Path>) -> Result<(EnvModel, GridState, Explanation)> {
    let env = build_env(cfg).map_err(Error::at("environment"))?;
    let root = root_state(cfg, &env).map_err(Error::at("environment"))?;
    let space = state_space(cfg, &env, &root).map_err(Error::at("state enumeration"))?;
    let policy = build_policy(cfg, &env, Some(&space)).map_err(Error::at("policy"))?;
    let expl = explain(&env, policy.as_ref(), space, &cfg.ssx, cache_dir)?;
    Ok((env, root, expl))
}

/// Full `explain` command: explanation JSON, SVG and manifest under the
/// output directory.
pub fn run_explain(cfg: &RunConfig, cache_dir: Option<&Path>) -> Result<ExplainRun> {
    let (env, root, explanation) = explain_config(cfg, cache_dir)?;
    let doc = ExplanationDoc::new(cfg, &env, &root, &explanation);
    let svg = render_explanation(&doc, &env).map_err(Error::at("render"))?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::at("output")(e.into()))?;
    let files = vec![
        write_file(dir, EXPLANATION_FILE, &doc.to_json()).map_err(Error::at("output"))?,
        write_file(dir, EXPLANATION_SVG, &svg).map_err(Error::at("output"))?,
    ];
    Ok(ExplainRun { env, explanation, doc, files })
}

/// `render` command: re-renders an explanation document.
pub fn run_render(cfg: &RunConfig, input: &Path) -> Result<PathBuf> {
    let env = build_env(cfg).map_err(Error::at("environment"))?;
    let text = fs::read_to_string(input).map_err(|e| Error::at("render")(e.into()))?;
    let doc = ExplanationDoc::from_json(&text).map_err(Error::at("render"))?;
    if doc.env.layout_hash != env.layout_hash() {
        return Err(Error::at("render")(Error::Render("explanation was produced on a different board".into())));
    }
    let svg = render_explanation(&doc, &env).map_err(Error::at("render"))?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::at("output")(e.into()))?;
    write_file(&cfg.output_dir, EXPLANATION_SVG, &svg).map_err(Error::at("output"))
}

/// `train` command: value iteration on the configured space, written as a
/// tabular policy usable with `policy.kind = tabular`.
pub fn run_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let env = build_env(cfg).map_err(Error::at("environment"))?;
    let root = root_state(cfg, &env).map_err(Error::at("environment"))?;
    let space = state_space(cfg, &env, &root).map_err(Error::at("state enumeration"))?;
    let p = &cfg.policy;
    let (values, policy) = value_iteration(&env, &space, p.discount, p.tolerance, p.max_iters, p.temperature)
        .map_err(Error::at("value iteration"))?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::at("output")(e.into()))?;
    let to_text = |v: serde_json::Value| {
        let mut s = serde_json::to_string_pretty(&v).expect("json value serialises");
        s.push('\n');
        s
    };
    Ok(vec![
        write_file(dir, "policy.json", &to_text(policy.to_json(&env))).map_err(Error::at("output"))?,
        write_file(dir, "values.json", &to_text(values.to_json(&env, &space))).map_err(Error::at("output"))?,
    ])
}

/// Files and a printable summary of one study.
pub struct StudyReport {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn study_horizon(cfg: &RunConfig) -> Result<usize> {
    cfg.horizon
        .ok_or_else(|| Error::InvalidConfig("local studies need ssx.horizon".into()))
}

/// Policy defined on every state a study can visit. Value iteration needs
/// the full reachable space, so it is only available without a horizon.
fn study_policy(cfg: &RunConfig, env: &EnvModel) -> Result<Box<dyn Policy>> {
    if cfg.policy.kind == PolicyKind::ValueIteration && cfg.horizon.is_none() {
        let root = root_state(cfg, env)?;
        let space = enumerate_reachable(env, &root, cfg.max_states)?;
        return build_policy(cfg, env, Some(&space));
    }
    build_policy(cfg, env, None)
}

/// `eval` command for one study.
pub fn run_eval(cfg: &RunConfig, study: Study, cache_dir: Option<&Path>) -> Result<StudyReport> {
    let stage = study.name();
    let env = build_env(cfg).map_err(Error::at("environment"))?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::at("output")(e.into()))?;
    let e = &cfg.eval;
    let seed = cfg.ssx.seed;
    let mut files = Vec::new();
    let mut summary = String::new();
    let mut write = |name: &str, text: &str| -> Result<()> {
        files.push(write_file(&dir, name, text).map_err(Error::at("output"))?);
        Ok(())
    };
    match study {
        Study::Sampling => {
            let horizon = study_horizon(cfg)?;
            let policy = study_policy(cfg, &env).map_err(Error::at("policy"))?;
            let roots = bounded_roots(&env, policy.as_ref(), e.roots, e.root_steps, seed, horizon, cfg.max_states);
            let rows = sampling_study(&env, policy.as_ref(), &roots, &e.fractions, horizon, &cfg.ssx)
                .map_err(Error::at(stage))?;
            write("sampling.csv", &sampling_csv(&rows))?;
            let series = |name: &str, f: &dyn Fn(&ssx_core::evalharness::SamplingRow) -> f64| Series {
                name: name.to_string(),
                points: rows.iter().map(|r| (r.fraction, f(r))).collect(),
            };
            write(
                "sampling_distance.svg",
                &line_chart(
                    "Priority state displacement",
                    "sample fraction",
                    "mean distance",
                    &[
                        series("agent", &|r| r.displacement.agent),
                        series("ghost", &|r| r.displacement.ghost),
                        series("food", &|r| r.displacement.food),
                    ],
                ),
            )?;
            write(
                "sampling_time.svg",
                &line_chart("Count time", "sample fraction", "time / exact", &[series("time ratio", &|r| r.time_ratio)]),
            )?;
            for r in &rows {
                writeln!(
                    summary,
                    "fraction {}: agent {:.3} ghost {:.3} food {:.3}, time ratio {:.3}",
                    r.fraction, r.displacement.agent, r.displacement.ghost, r.displacement.food, r.time_ratio
                )
                .expect("string write");
            }
        }
        Study::Horizon => {
            let policy = study_policy(cfg, &env).map_err(Error::at("policy"))?;
            let top = *e.horizons.last().expect("validated");
            let roots = bounded_roots(&env, policy.as_ref(), e.roots, e.root_steps, seed, top, cfg.max_states);
            let table = horizon_faithfulness(&env, policy.as_ref(), &roots, &e.horizons, &cfg.ssx)
                .map_err(Error::at(stage))?;
            write("horizon.csv", &table.to_csv())?;
            let h = e.horizons.len();
            let by_gap = |pick: fn(&ssx_core::evalharness::Displacement) -> f64| -> Vec<(f64, f64)> {
                (1..h)
                    .map(|g| {
                        let cells: Vec<f64> = (0..h - g).map(|i| pick(&table.cells[i][i + g])).collect();
                        (g as f64, cells.iter().sum::<f64>() / cells.len() as f64)
                    })
                    .collect()
            };
            write(
                "horizon.svg",
                &line_chart(
                    "Priority state distance across horizons",
                    "horizon gap",
                    "mean distance",
                    &[
                        Series { name: "agent".into(), points: by_gap(|d| d.agent) },
                        Series { name: "ghost".into(), points: by_gap(|d| d.ghost) },
                        Series { name: "food".into(), points: by_gap(|d| d.food) },
                    ],
                ),
            )?;
            writeln!(
                summary,
                "agent mean {:.3}, ghost mean {:.3}, food mean {:.3}, agent gap correlation {:.3}",
                table.off_diagonal_mean(|d| d.agent),
                table.off_diagonal_mean(|d| d.ghost),
                table.off_diagonal_mean(|d| d.food),
                table.gap_correlation(|d| d.agent)
            )
            .expect("string write");
        }
        Study::Perturbation => {
            let horizon = study_horizon(cfg)?;
            let policy = study_policy(cfg, &env).map_err(Error::at("policy"))?;
            let roots = bounded_roots(&env, policy.as_ref(), e.roots, e.root_steps, seed, horizon, cfg.max_states);
            let report = perturbation_stability(
                &env,
                policy.as_ref(),
                &roots,
                e.perturbations,
                e.food_removed,
                horizon,
                &cfg.ssx,
                seed,
            )
            .map_err(Error::at(stage))?;
            write("perturbation.csv", &report.to_csv())?;
            let m = report.mean;
            write(
                "perturbation.svg",
                &line_chart(
                    "Perturbation stability",
                    "entity (1 agent, 2 ghost, 3 food)",
                    "mean distance",
                    &[Series { name: "mean distance".into(), points: vec![(1.0, m.agent), (2.0, m.ghost), (3.0, m.food)] }],
                ),
            )?;
            writeln!(
                summary,
                "{} trials: agent {:.3} ghost {:.3} food {:.3}",
                report.trials, m.agent, m.ghost, m.food
            )
            .expect("string write");
        }
        Study::Growth => {
            let policy = study_policy(cfg, &env).map_err(Error::at("policy"))?;
            let roots = rollout_roots(&env, policy.as_ref(), e.growth_roots, e.root_steps, seed);
            let rows = growth_study(&env, &roots, e.growth_max).map_err(Error::at(stage))?;
            write("growth.csv", &growth_csv(&rows))?;
            let reference = |b: f64| rows.iter().map(|&(n, _)| (n as f64, b.powi(n as i32))).collect();
            write(
                "growth.svg",
                &line_chart(
                    "Local state-space growth",
                    "horizon N",
                    "unique states",
                    &[
                        Series { name: "mean unique states".into(), points: rows.iter().map(|&(n, c)| (n as f64, c)).collect() },
                        Series { name: "3^N".into(), points: reference(3.0) },
                        Series { name: "5^N".into(), points: reference(5.0) },
                    ],
                ),
            )?;
            if let Some(&(n, c)) = rows.last() {
                writeln!(summary, "N = {n}: {c:.1} mean unique states over {} roots", roots.len()).expect("string write");
            }
        }
        Study::KSweep => {
            let root = root_state(cfg, &env).map_err(Error::at("environment"))?;
            let space = state_space(cfg, &env, &root).map_err(Error::at("state enumeration"))?;
            let policy = build_policy(cfg, &env, Some(&space)).map_err(Error::at("policy"))?;
            let model = induce_transition_model(&env, policy.as_ref(), &space).map_err(Error::at("transition model"))?;
            let pm = build_gamma_cached(&model, cache_dir).map_err(Error::at("path matrix"))?;
            let sweep = k_sweep(&pm, &e.k_values, &cfg.ssx.cluster_options()).map_err(Error::at(stage))?;
            write("ksweep.csv", &sweep.to_csv())?;
            write(
                "ksweep.svg",
                &line_chart(
                    "Clustering objective",
                    "meta-states k",
                    "objective",
                    &[Series { name: "objective".into(), points: sweep.rows.iter().map(|&(k, v)| (k as f64, v)).collect() }],
                ),
            )?;
            match sweep.knee {
                Some(k) => writeln!(summary, "knee at k = {k}"),
                None => writeln!(summary, "no knee with fewer than three k values"),
            }
            .expect("string write");
        }
    }
    Ok(StudyReport { files, summary })
}
