//! Run configuration: a flat text file of `section.key = value` lines with
//! `#` comments. Unknown keys and out-of-range values are rejected.
//!
//! Defaults depend on `env.type`; see [`RunConfig::defaults`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use ssx_core::env::{Pos, RewardScheme};
use ssx_core::explain::SsxParams;
use ssx_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    FourRooms,
    MiniPac,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::FourRooms => "four_rooms",
            EnvKind::MiniPac => "minipac",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ValueIteration,
    Scripted,
    Tabular,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::ValueIteration => "value_iteration",
            PolicyKind::Scripted => "scripted",
            PolicyKind::Tabular => "tabular",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub grid_size: usize,
    pub goal: Pos,
    /// Start cell for Four Rooms enumeration.
    pub start: Pos,
    /// Layout file; the built-in board when absent.
    pub layout: Option<PathBuf>,
    pub scheme: RewardScheme,
    /// Encoded root state; the layout's start state when absent.
    pub root: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub discount: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub temperature: f64,
    /// Tabular policy written by `train`.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub roots: usize,
    pub root_steps: usize,
    pub fractions: Vec<f64>,
    pub horizons: Vec<usize>,
    pub perturbations: usize,
    pub food_removed: usize,
    pub growth_max: usize,
    pub growth_roots: usize,
    pub k_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ssx: SsxParams,
    /// Local horizon; full enumeration when absent.
    pub horizon: Option<usize>,
    pub max_states: usize,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

pub fn scheme_name(scheme: RewardScheme) -> &'static str {
    match scheme {
        RewardScheme::FourRoomsGoal => "four_rooms_goal",
        RewardScheme::Eat => "eat",
        RewardScheme::Hunt => "hunt",
    }
}

fn parse_pos(s: &str) -> Option<Pos> {
    let (r, c) = s.split_once(',')?;
    Some(Pos::new(r.trim().parse().ok()?, c.trim().parse().ok()?))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidConfig(format!("bad value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

/// Optional value where `none` clears the setting.
fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl RunConfig {
    /// Defaults for an environment type.
    pub fn defaults(kind: EnvKind) -> RunConfig {
        let four = kind == EnvKind::FourRooms;
        RunConfig {
            env: EnvConfig {
                kind,
                grid_size: 11,
                goal: Pos::new(0, 10),
                start: Pos::new(10, 0),
                layout: None,
                scheme: if four { RewardScheme::FourRoomsGoal } else { RewardScheme::Eat },
                root: None,
            },
            policy: PolicyConfig {
                kind: if four { PolicyKind::ValueIteration } else { PolicyKind::Scripted },
                discount: 0.95,
                tolerance: 1e-10,
                max_iters: 10_000,
                temperature: if four { 0.1 } else { 0.5 },
                table: None,
            },
            ssx: SsxParams {
                k: if four { 4 } else { 3 },
                eta: 1.0,
                lambda: if four { 50.0 } else { 0.1 },
                eps_g: 0.1,
                min_gain_ratio: 0.1,
                max_strategic_per_meta: Some(if four { 2 } else { 5 }),
                weighted_counts: true,
                ..SsxParams::default()
            },
            horizon: if four { None } else { Some(6) },
            max_states: if four { 200_000 } else { 2_500 },
            eval: EvalConfig {
                roots: 10,
                root_steps: 30,
                fractions: vec![1.0, 0.75, 0.5, 0.25],
                horizons: vec![3, 4, 5, 6],
                perturbations: 10,
                food_removed: 3,
                growth_max: 8,
                growth_roots: 100,
                k_values: vec![2, 3, 4, 5, 6],
            },
            output_dir: PathBuf::from("ssx-out"),
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        // Relative paths inside the file resolve against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.env.layout, &mut cfg.policy.table].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `section.key = value`", i + 1)))?;
            let key = key.trim().to_string();
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key {key}", i + 1)));
            }
            entries.push((i + 1, key, value.trim().to_string()));
        }
        let kind = match entries.iter().find(|(_, k, _)| k == "env.type") {
            None => EnvKind::FourRooms,
            Some((_, _, v)) => match v.as_str() {
                "four_rooms" => EnvKind::FourRooms,
                "minipac" => EnvKind::MiniPac,
                _ => return Err(bad("env.type", v)),
            },
        };
        let mut cfg = RunConfig::defaults(kind);
        for (line, key, value) in &entries {
            cfg.set(key, value)
                .map_err(|e| Error::InvalidConfig(format!("line {line}: {}", e.to_string().trim_start_matches("invalid configuration: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let ssx = &mut self.ssx;
        match key {
            "env.type" => {}
            "env.grid_size" => self.env.grid_size = num(key, v)?,
            "env.goal" => self.env.goal = parse_pos(v).ok_or_else(|| bad(key, v))?,
            "env.start" => self.env.start = parse_pos(v).ok_or_else(|| bad(key, v))?,
            "env.layout" => self.env.layout = Some(PathBuf::from(v)),
            "env.scheme" => self.env.scheme = RewardScheme::parse(v).ok_or_else(|| bad(key, v))?,
            "env.root" => self.env.root = Some(v.to_string()),
            "policy.kind" => {
                self.policy.kind = match v {
                    "value_iteration" => PolicyKind::ValueIteration,
                    "scripted" => PolicyKind::Scripted,
                    "tabular" => PolicyKind::Tabular,
                    _ => return Err(bad(key, v)),
                }
            }
            "policy.discount" => self.policy.discount = num(key, v)?,
            "policy.tolerance" => self.policy.tolerance = num(key, v)?,
            "policy.max_iters" => self.policy.max_iters = num(key, v)?,
            "policy.temperature" => self.policy.temperature = num(key, v)?,
            "policy.table" => self.policy.table = Some(PathBuf::from(v)),
            "ssx.k" => ssx.k = num(key, v)?,
            "ssx.eta" => ssx.eta = num(key, v)?,
            "ssx.eps_phi" => ssx.eps_phi = optional(key, v)?,
            "ssx.lambda" => ssx.lambda = num(key, v)?,
            "ssx.eps_g" => ssx.eps_g = num(key, v)?,
            "ssx.min_gain_ratio" => ssx.min_gain_ratio = num(key, v)?,
            "ssx.max_strategic_per_meta" => ssx.max_strategic_per_meta = optional(key, v)?,
            "ssx.sample_fraction" => ssx.sample_fraction = num(key, v)?,
            "ssx.seed" => ssx.seed = num(key, v)?,
            "ssx.restarts" => ssx.restarts = num(key, v)?,
            "ssx.max_iters" => ssx.max_iters = num(key, v)?,
            "ssx.normalise_counts" => ssx.normalise_counts = flag(key, v)?,
            "ssx.weighted_counts" => ssx.weighted_counts = flag(key, v)?,
            "ssx.horizon" => self.horizon = optional(key, v)?,
            "ssx.max_states" => self.max_states = num(key, v)?,
            "eval.roots" => self.eval.roots = num(key, v)?,
            "eval.root_steps" => self.eval.root_steps = num(key, v)?,
            "eval.fractions" => self.eval.fractions = parse_list(v).ok_or_else(|| bad(key, v))?,
            "eval.horizons" => self.eval.horizons = parse_list(v).ok_or_else(|| bad(key, v))?,
            "eval.perturbations" => self.eval.perturbations = num(key, v)?,
            "eval.food_removed" => self.eval.food_removed = num(key, v)?,
            "eval.growth_max" => self.eval.growth_max = num(key, v)?,
            "eval.growth_roots" => self.eval.growth_roots = num(key, v)?,
            "eval.k_values" => self.eval.k_values = parse_list(v).ok_or_else(|| bad(key, v))?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::InvalidConfig(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(what.to_string()))
            }
        };
        let s = &self.ssx;
        check(self.env.grid_size >= 5, "env.grid_size must be at least 5")?;
        let scheme_ok = match self.env.kind {
            EnvKind::FourRooms => self.env.scheme == RewardScheme::FourRoomsGoal,
            EnvKind::MiniPac => self.env.scheme != RewardScheme::FourRoomsGoal,
        };
        check(scheme_ok, "env.scheme does not match env.type")?;
        check(self.policy.discount > 0.0 && self.policy.discount < 1.0, "policy.discount must be in (0, 1)")?;
        check(self.policy.tolerance > 0.0, "policy.tolerance must be positive")?;
        check(self.policy.temperature > 0.0, "policy.temperature must be positive")?;
        check(self.policy.max_iters > 0, "policy.max_iters must be positive")?;
        check(
            self.policy.kind != PolicyKind::Tabular || self.policy.table.is_some(),
            "policy.kind = tabular needs policy.table",
        )?;
        check(
            self.policy.kind != PolicyKind::Scripted || self.env.kind == EnvKind::MiniPac,
            "scripted policies exist only for minipac",
        )?;
        check(s.k >= 1, "ssx.k must be at least 1")?;
        check(s.eta >= 0.0 && s.eta.is_finite(), "ssx.eta must be non-negative")?;
        check(s.eps_phi.is_none_or(|e| e > 0.0), "ssx.eps_phi must be positive")?;
        check(s.lambda >= 0.0 && s.lambda.is_finite(), "ssx.lambda must be non-negative")?;
        check(s.eps_g > 0.0, "ssx.eps_g must be positive")?;
        check((0.0..1.0).contains(&s.min_gain_ratio), "ssx.min_gain_ratio must be in [0, 1)")?;
        check(s.max_strategic_per_meta != Some(0), "ssx.max_strategic_per_meta must be at least 1")?;
        check(s.sample_fraction > 0.0 && s.sample_fraction <= 1.0, "ssx.sample_fraction must be in (0, 1]")?;
        check(s.restarts >= 1, "ssx.restarts must be at least 1")?;
        check(s.max_iters >= 1, "ssx.max_iters must be at least 1")?;
        check(self.horizon != Some(0), "ssx.horizon must be at least 1")?;
        check(self.max_states >= 1, "ssx.max_states must be at least 1")?;
        let e = &self.eval;
        check(e.roots >= 1 && e.growth_roots >= 1, "eval root counts must be positive")?;
        check(e.fractions.iter().all(|&f| f > 0.0 && f <= 1.0), "eval.fractions must lie in (0, 1]")?;
        check(
            !e.horizons.is_empty() && e.horizons.windows(2).all(|w| w[0] < w[1]) && e.horizons[0] >= 1,
            "eval.horizons must be positive and strictly ascending",
        )?;
        check(e.growth_max >= 2, "eval.growth_max must be at least 2")?;
        check(
            !e.k_values.is_empty() && e.k_values.windows(2).all(|w| w[0] < w[1]) && e.k_values[0] >= 1,
            "eval.k_values must be positive and strictly ascending",
        )?;
        Ok(())
    }

    /// Every effective setting as sorted `key = value` pairs.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let opt = |o: Option<usize>| o.map_or("none".to_string(), |v| v.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let list = |v: Vec<String>| v.join(",");
        let s = &self.ssx;
        BTreeMap::from([
            ("env.type", self.env.kind.name().to_string()),
            ("env.grid_size", self.env.grid_size.to_string()),
            ("env.goal", self.env.goal.to_string()),
            ("env.start", self.env.start.to_string()),
            ("env.layout", path(&self.env.layout)),
            ("env.scheme", scheme_name(self.env.scheme).to_string()),
            ("env.root", self.env.root.clone().unwrap_or_else(|| "none".into())),
            ("policy.kind", self.policy.kind.name().to_string()),
            ("policy.discount", self.policy.discount.to_string()),
            ("policy.tolerance", self.policy.tolerance.to_string()),
            ("policy.max_iters", self.policy.max_iters.to_string()),
            ("policy.temperature", self.policy.temperature.to_string()),
            ("policy.table", path(&self.policy.table)),
            ("ssx.k", s.k.to_string()),
            ("ssx.eta", s.eta.to_string()),
            ("ssx.eps_phi", s.eps_phi.map_or("none".to_string(), |v| v.to_string())),
            ("ssx.lambda", s.lambda.to_string()),
            ("ssx.eps_g", s.eps_g.to_string()),
            ("ssx.min_gain_ratio", s.min_gain_ratio.to_string()),
            ("ssx.max_strategic_per_meta", opt(s.max_strategic_per_meta)),
            ("ssx.sample_fraction", s.sample_fraction.to_string()),
            ("ssx.seed", s.seed.to_string()),
            ("ssx.restarts", s.restarts.to_string()),
            ("ssx.max_iters", s.max_iters.to_string()),
            ("ssx.normalise_counts", s.normalise_counts.to_string()),
            ("ssx.weighted_counts", s.weighted_counts.to_string()),
            ("ssx.horizon", opt(self.horizon)),
            ("ssx.max_states", self.max_states.to_string()),
            ("eval.roots", self.eval.roots.to_string()),
            ("eval.root_steps", self.eval.root_steps.to_string()),
            ("eval.fractions", list(self.eval.fractions.iter().map(f64::to_string).collect())),
            ("eval.horizons", list(self.eval.horizons.iter().map(usize::to_string).collect())),
            ("eval.perturbations", self.eval.perturbations.to_string()),
            ("eval.food_removed", self.eval.food_removed.to_string()),
            ("eval.growth_max", self.eval.growth_max.to_string()),
            ("eval.growth_roots", self.eval.growth_roots.to_string()),
            ("eval.k_values", list(self.eval.k_values.iter().map(usize::to_string).collect())),
            ("output.dir", self.output_dir.display().to_string()),
        ])
    }

    /// SHA-256 of the canonical settings, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            if k != "output.dir" {
                h.update(format!("{k}={v}\n"));
            }
        }
        hex::encode(h.finalize())
    }
}
