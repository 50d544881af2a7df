//! Experiment campaigns: seeded scenario drops, every requested assigner with
//! and without max-min power control, and the CSV/JSON outputs.
//!
//! Drops run in parallel and are collected in drop order. Every random
//! choice is derived from the base seed and the drop index, so a given
//! [`ExperimentConfig`] always produces byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assignment::{
    exhaustive_assignment, exhaustive_count, greedy_assignment, random_assignment, refine_assignment, AssignmentStatus,
    AssignmentTrace, JointOptions, EXHAUSTIVE_LIMIT,
};
use crate::config::{Direction, SystemConfig, Weights};
use crate::correlation::{build_statistics, ChannelStatistics};
use crate::error::{Error, Result};
use crate::estimation::PilotAssignment;
use crate::montecarlo::{mc_validate_sinr_terms, TermKind, ValidationReport};
use crate::par;
use crate::power::{maxmin_power, MaxMinOptions, PowerControlResult};
use crate::se::{Evaluator, PowerAllocation, SEReport};
use crate::synthetic::SyntheticSpec;
use crate::topology::generate_scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignerKind {
    Random,
    Greedy,
    UlOnly,
    DlOnly,
    Joint,
    Exhaustive,
}

impl AssignerKind {
    pub const ALL: [AssignerKind; 6] = [
        AssignerKind::Random,
        AssignerKind::Greedy,
        AssignerKind::UlOnly,
        AssignerKind::DlOnly,
        AssignerKind::Joint,
        AssignerKind::Exhaustive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AssignerKind::Random => "random",
            AssignerKind::Greedy => "greedy",
            AssignerKind::UlOnly => "ul_only",
            AssignerKind::DlOnly => "dl_only",
            AssignerKind::Joint => "joint",
            AssignerKind::Exhaustive => "exhaustive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.label() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown assigner `{s}`")))
    }

    /// Iterative assigners that produce a trace.
    pub fn is_iterative(self) -> bool {
        matches!(self, AssignerKind::UlOnly | AssignerKind::DlOnly | AssignerKind::Joint)
    }
}

/// Where the channel statistics of a drop come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// Wrap-around cell grid with pathloss and shadowing.
    #[default]
    Topology,
    /// Geometry-free random gains; any number of cells.
    Synthetic,
}

fn default_assigners() -> Vec<AssignerKind> {
    vec![
        AssignerKind::Random,
        AssignerKind::Greedy,
        AssignerKind::UlOnly,
        AssignerKind::DlOnly,
        AssignerKind::Joint,
    ]
}

fn default_drops() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_epsilon() -> f64 {
    JointOptions::default().epsilon
}

fn default_max_iters() -> usize {
    JointOptions::default().max_iters
}

fn default_power_tol() -> f64 {
    MaxMinOptions::default().tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default = "default_drops")]
    pub n_drops: usize,
    #[serde(default, alias = "seeds")]
    pub seed: u64,
    #[serde(default = "default_assigners")]
    pub assigners: Vec<AssignerKind>,
    #[serde(default)]
    pub power_control: bool,
    /// Monte Carlo draws for term validation of every drop, off when absent.
    #[serde(default)]
    pub mc_validation: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_power_tol")]
    pub power_tol: f64,
    /// Extra assignment/power-control rounds after the first power control.
    #[serde(default)]
    pub alternations: usize,
    /// Users-per-cell values of the K sweep; empty means the configured K only.
    #[serde(default)]
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub instances: InstanceSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::desk_scale(4),
            n_drops: default_drops(),
            seed: 0,
            assigners: default_assigners(),
            power_control: false,
            mc_validation: None,
            output_dir: default_output_dir(),
            epsilon: default_epsilon(),
            max_iters: default_max_iters(),
            power_tol: default_power_tol(),
            alternations: 0,
            k_values: Vec::new(),
            instances: InstanceSource::Topology,
        }
    }
}

/// Rewrites `L`/`K`/`M` keys and fills missing fields from the desk-scale
/// defaults for the given `K`.
fn complete_system(system: Option<&Value>) -> Result<Value> {
    let mut given = match system {
        None | Some(Value::Null) => serde_json::Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(Error::InvalidConfig("`system` must be a table".into())),
    };
    for (alias, name) in [("L", "cells"), ("K", "users_per_cell"), ("M", "antennas")] {
        if let Some(v) = given.remove(alias) {
            if given.insert(name.into(), v).is_some() {
                return Err(Error::InvalidConfig(format!("both `{alias}` and `{name}` given")));
            }
        }
    }
    let k = match given.get("users_per_cell") {
        None => 4,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::InvalidConfig("users_per_cell must be a positive integer".into()))?
            as usize,
    };
    let Value::Object(mut full) = serde_json::to_value(SystemConfig::desk_scale(k)).expect("serializable") else {
        unreachable!("struct serializes to an object")
    };
    full.extend(given);
    Ok(Value::Object(full))
}

impl ExperimentConfig {
    /// Parses a JSON or TOML document. Missing system fields take the
    /// desk-scale defaults for the configured `K`.
    pub fn parse(text: &str, toml_format: bool) -> Result<Self> {
        let mut value: Value = if toml_format {
            toml::from_str(text).map_err(|e| Error::format("TOML config", e))?
        } else {
            serde_json::from_str(text).map_err(|e| Error::format("JSON config", e))?
        };
        let Value::Object(map) = &mut value else {
            return Err(Error::InvalidConfig("config must be a table".into()));
        };
        let system = complete_system(map.get("system"))?;
        map.insert("system".into(), system);
        serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Loads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        Self::parse(&text, is_toml)
    }

    pub fn joint_options(&self) -> JointOptions {
        JointOptions {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
        }
    }

    pub fn power_options(&self) -> MaxMinOptions {
        MaxMinOptions {
            tol: self.power_tol,
            ..MaxMinOptions::default()
        }
    }

    /// The system parameters drops actually use. Synthetic instances have
    /// unit noise and budgets.
    pub fn effective_system(&self) -> SystemConfig {
        match self.instances {
            InstanceSource::Topology => self.system.clone(),
            InstanceSource::Synthetic => {
                let s = &self.system;
                SystemConfig {
                    tau_c: s.tau_c,
                    gamma_ul: s.gamma_ul,
                    gamma_dl: s.gamma_dl,
                    w_ul: s.w_ul.clone(),
                    w_dl: s.w_dl.clone(),
                    ..SyntheticSpec::new(s.cells, s.users_per_cell, s.antennas).config()
                }
            }
        }
    }

    /// Same experiment with `K` users per cell; per-user budgets are kept.
    pub fn with_users_per_cell(&self, k: usize) -> Self {
        let old = self.system.users_per_cell as f64;
        let mut next = self.clone();
        next.system.users_per_cell = k;
        next.system.tau_p = k;
        next.system.p_max_dl = self.system.p_max_dl / old * k as f64;
        next.k_values.clear();
        next
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_drops == 0 {
            return bad("n_drops must be at least 1".into());
        }
        match self.instances {
            InstanceSource::Topology => self.system.validate_for_topology()?,
            InstanceSource::Synthetic => self.effective_system().validate()?,
        }
        let sys = &self.system;
        if sys.tau_p != sys.users_per_cell {
            return bad(format!(
                "the assigners need tau_p == K (tau_p = {}, K = {})",
                sys.tau_p, sys.users_per_cell
            ));
        }
        if self.assigners.is_empty() {
            return bad("at least one assigner is required".into());
        }
        let mut seen = self.assigners.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.assigners.len() {
            return bad("assigners must not repeat".into());
        }
        if self.assigners.contains(&AssignerKind::Exhaustive) {
            let count = exhaustive_count(sys.cells, sys.users_per_cell);
            if count > EXHAUSTIVE_LIMIT {
                return Err(Error::TooLarge {
                    count,
                    limit: EXHAUSTIVE_LIMIT,
                });
            }
        }
        if self.mc_validation == Some(0) {
            return bad("mc_validation needs at least one draw".into());
        }
        if !(self.epsilon >= 0.0) || self.max_iters == 0 || !(self.power_tol > 0.0) {
            return bad("epsilon must be nonnegative, max_iters and power_tol positive".into());
        }
        if !self.k_values.is_empty() {
            if !sys.w_ul.is_empty() || !sys.w_dl.is_empty() {
                return bad("a K sweep needs default weights".into());
            }
            for &k in &self.k_values {
                if k == 0 {
                    return bad("k_values must be positive".into());
                }
                let mut sub = self.with_users_per_cell(k);
                sub.assigners.retain(|&a| a != AssignerKind::Exhaustive);
                sub.validate()?;
            }
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one purpose within one drop.
pub fn derive_seed(base: u64, drop: usize, purpose: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(drop as u64)) ^ purpose)
}

const SCENARIO_SEED: u64 = 1;
const ASSIGNMENT_SEED: u64 = 2;
const MC_SEED: u64 = 3;

/// Channel statistics of drop `drop`.
pub fn drop_statistics(config: &ExperimentConfig, drop: usize) -> Result<ChannelStatistics> {
    let seed = derive_seed(config.seed, drop, SCENARIO_SEED);
    match config.instances {
        InstanceSource::Topology => build_statistics(&generate_scenario(&config.system, seed)?),
        InstanceSource::Synthetic => {
            let s = &config.system;
            SyntheticSpec::new(s.cells, s.users_per_cell, s.antennas).generate(seed)
        }
    }
}

/// Power-controlled outcome of one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerControlRun {
    pub ul: Option<PowerControlResult>,
    pub dl: Option<PowerControlResult>,
    pub powers: PowerAllocation,
    pub report: SEReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignerRun {
    pub assigner: AssignerKind,
    pub assignment: PilotAssignment,
    pub status: Option<AssignmentStatus>,
    pub trace: Option<AssignmentTrace>,
    pub fixed_powers: PowerAllocation,
    /// SE at the fixed initial powers.
    pub fixed: SEReport,
    pub power_control: Option<PowerControlRun>,
}

impl AssignerRun {
    /// Final network minimum: power-controlled when available.
    pub fn min_f(&self) -> f64 {
        self.power_control.as_ref().map_or(self.fixed.min_f, |p| p.report.min_f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropFailure {
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub drop: usize,
    pub seed: u64,
    pub runs: Vec<AssignerRun>,
    pub failure: Option<DropFailure>,
    #[serde(skip)]
    pub mc_validation: Option<ValidationReport>,
}

impl DropResult {
    pub fn run(&self, assigner: AssignerKind) -> Option<&AssignerRun> {
        self.runs.iter().find(|r| r.assigner == assigner)
    }
}

/// Mean network minimum of one assigner at one `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsKRow {
    pub k: usize,
    pub assigner: AssignerKind,
    pub power_control: bool,
    pub mean_min_f: f64,
    pub drops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: ExperimentConfig,
    pub drops: Vec<DropResult>,
    pub vs_k: Vec<VsKRow>,
}

fn max_min_both(
    system: &SystemConfig,
    eval: &mut Evaluator<'_>,
    assignment: &PilotAssignment,
    fixed: &PowerAllocation,
    weights: &Weights,
    options: MaxMinOptions,
) -> Result<PowerControlRun> {
    let e = eval.evaluate(assignment, fixed, weights)?;
    let mut powers = fixed.clone();
    let mut solve = |direction: Direction, gains| -> Result<Option<PowerControlResult>> {
        let w = weights.get(direction);
        if w.iter().all(|&x| x == 0.0) {
            return Ok(None);
        }
        let r = maxmin_power(system, gains, w, options)?;
        r.verify(system, gains, w, options.tol)?;
        *powers.get_mut(direction) = r.powers.clone();
        Ok(Some(r))
    };
    let ul = solve(Direction::Uplink, &e.gains_ul)?;
    let dl = solve(Direction::Downlink, &e.gains_dl)?;
    let report = SEReport::from_sinrs(
        system,
        e.gains_ul.sinrs(&powers.p_ul),
        e.gains_dl.sinrs(&powers.p_dl),
        weights,
    );
    Ok(PowerControlRun { ul, dl, powers, report })
}

fn run_assigner(
    config: &ExperimentConfig,
    system: &SystemConfig,
    eval: &mut Evaluator<'_>,
    assigner: AssignerKind,
    drop: usize,
) -> Result<AssignerRun> {
    let weights = system.weights()?;
    let n = system.num_users();
    let fixed = PowerAllocation::fixed(system);
    let start = random_assignment(
        system.cells,
        system.users_per_cell,
        system.tau_p,
        derive_seed(config.seed, drop, ASSIGNMENT_SEED),
    )?;
    let search_weights = match assigner {
        AssignerKind::UlOnly => Weights::single(n, Direction::Uplink),
        AssignerKind::DlOnly => Weights::single(n, Direction::Downlink),
        _ => weights.clone(),
    };
    let (mut assignment, mut status, mut trace) = match assigner {
        AssignerKind::Random => (start, None, None),
        AssignerKind::Greedy => (greedy_assignment(eval.stats, system.tau_p)?, None, None),
        AssignerKind::Exhaustive => (exhaustive_assignment(eval, &fixed, &weights)?.assignment, None, None),
        AssignerKind::UlOnly | AssignerKind::DlOnly | AssignerKind::Joint => {
            let out = refine_assignment(eval, start, &fixed, &search_weights, config.joint_options())?;
            (out.assignment, Some(out.status), Some(out.trace))
        }
    };
    let mut power_control = None;
    if config.power_control {
        let mut pc = max_min_both(system, eval, &assignment, &fixed, &weights, config.power_options())?;
        if assigner.is_iterative() {
            for _ in 0..config.alternations {
                let out = refine_assignment(
                    eval,
                    assignment.clone(),
                    &pc.powers,
                    &search_weights,
                    config.joint_options(),
                )?;
                assignment = out.assignment;
                status = Some(out.status);
                if let Some(t) = trace.as_mut() {
                    t.records.extend(out.trace.records);
                }
                pc = max_min_both(system, eval, &assignment, &fixed, &weights, config.power_options())?;
            }
        }
        power_control = Some(pc);
    }
    let fixed_report = eval.evaluate(&assignment, &fixed, &weights)?.report;
    Ok(AssignerRun {
        assigner,
        assignment,
        status,
        trace,
        fixed_powers: fixed,
        fixed: fixed_report,
        power_control,
    })
}

fn run_drop_inner(config: &ExperimentConfig, drop: usize) -> Result<(Vec<AssignerRun>, Option<ValidationReport>)> {
    let system = config.effective_system();
    let stats = drop_statistics(config, drop)?;
    let mut eval = Evaluator::new(&system, &stats)?;
    let mut runs = Vec::with_capacity(config.assigners.len());
    for &assigner in &config.assigners {
        runs.push(run_assigner(config, &system, &mut eval, assigner, drop)?);
    }
    let mc = match config.mc_validation {
        Some(draws) => Some(mc_validate_sinr_terms(
            &system,
            &stats,
            &runs[0].assignment,
            &runs[0].fixed_powers,
            derive_seed(config.seed, drop, MC_SEED),
            draws,
        )?),
        None => None,
    };
    Ok((runs, mc))
}

/// Runs one drop; failures are recorded rather than propagated.
pub fn run_drop(config: &ExperimentConfig, drop: usize) -> DropResult {
    let seed = derive_seed(config.seed, drop, SCENARIO_SEED);
    match run_drop_inner(config, drop) {
        Ok((runs, mc_validation)) => DropResult {
            drop,
            seed,
            runs,
            failure: None,
            mc_validation,
        },
        Err(e) => DropResult {
            drop,
            seed,
            runs: Vec::new(),
            failure: Some(DropFailure {
                message: e.to_string(),
                exit_code: e.exit_code(),
            }),
            mc_validation: None,
        },
    }
}

fn run_drops(config: &ExperimentConfig) -> Vec<DropResult> {
    par::map_indexed(config.n_drops, |d| run_drop(config, d))
}

/// Mean of the final network minimum over successful drops.
pub fn mean_min_f(drops: &[DropResult], assigner: AssignerKind, power_control: bool) -> Option<f64> {
    let values: Vec<f64> = drops
        .iter()
        .filter_map(|d| d.run(assigner))
        .filter_map(|r| match (power_control, &r.power_control) {
            (true, Some(p)) => Some(p.report.min_f),
            (true, None) => None,
            (false, _) => Some(r.fixed.min_f),
        })
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn vs_k_rows(config: &ExperimentConfig, k: usize, drops: &[DropResult]) -> Vec<VsKRow> {
    let mut rows = Vec::new();
    let settings: &[bool] = if config.power_control { &[false, true] } else { &[false] };
    for &assigner in &config.assigners {
        for &pc in settings {
            if let Some(mean) = mean_min_f(drops, assigner, pc) {
                rows.push(VsKRow {
                    k,
                    assigner,
                    power_control: pc,
                    mean_min_f: mean,
                    drops: drops.iter().filter(|d| d.run(assigner).is_some()).count(),
                });
            }
        }
    }
    rows
}

/// Runs every drop, then the K sweep if one is configured.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignResult> {
    config.validate()?;
    let drops = run_drops(config);
    let own_k = config.system.users_per_cell;
    let mut vs_k = Vec::new();
    let ks = if config.k_values.is_empty() {
        vec![own_k]
    } else {
        config.k_values.clone()
    };
    for k in ks {
        if k == own_k {
            vs_k.extend(vs_k_rows(config, k, &drops));
        } else {
            let mut sub = config.with_users_per_cell(k);
            sub.assigners.retain(|&a| a != AssignerKind::Exhaustive);
            sub.mc_validation = None;
            vs_k.extend(vs_k_rows(&sub, k, &run_drops(&sub)));
        }
    }
    Ok(CampaignResult {
        config: config.clone(),
        drops,
        vs_k,
    })
}

impl CampaignResult {
    pub fn failures(&self) -> impl Iterator<Item = &DropResult> {
        self.drops.iter().filter(|d| d.failure.is_some())
    }

    /// Aggregate statistics per assigner and power setting.
    pub fn summary(&self) -> Value {
        let mut per_assigner = BTreeMap::new();
        for &assigner in &self.config.assigners {
            let runs: Vec<&AssignerRun> = self.drops.iter().filter_map(|d| d.run(assigner)).collect();
            let stats = |values: Vec<f64>| {
                if values.is_empty() {
                    return Value::Null;
                }
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                json!({
                    "mean": values.iter().sum::<f64>() / values.len() as f64,
                    "median": sorted[sorted.len() / 2],
                    "min": sorted[0],
                    "max": sorted[sorted.len() - 1],
                })
            };
            let fixed = stats(runs.iter().map(|r| r.fixed.min_f).collect());
            let pc = stats(
                runs.iter()
                    .filter_map(|r| r.power_control.as_ref().map(|p| p.report.min_f))
                    .collect(),
            );
            let iterations: Vec<usize> = runs
                .iter()
                .filter_map(|r| r.status.map(AssignmentStatus::iterations))
                .collect();
            let converged = runs
                .iter()
                .filter(|r| matches!(r.status, Some(AssignmentStatus::Converged { .. })))
                .count();
            let mut entry = json!({
                "runs": runs.len(),
                "min_f_fixed_power": fixed,
                "min_f_power_control": pc,
            });
            if !iterations.is_empty() {
                entry["mean_iterations"] = json!(iterations.iter().sum::<usize>() as f64 / iterations.len() as f64);
                entry["max_iterations"] = json!(iterations.iter().max());
                entry["converged"] = json!(converged);
            }
            per_assigner.insert(assigner.label(), entry);
        }
        let mc: Vec<Value> = self
            .drops
            .iter()
            .filter_map(|d| {
                d.mc_validation.as_ref().map(|r| {
                    json!({
                        "drop": d.drop,
                        "n_draws": r.n_draws,
                        "max_rel_err_terms": r.max_rel_err(&[TermKind::Gain, TermKind::MeanSquare, TermKind::Power]),
                        "max_rel_err_se": r.max_rel_err(&[TermKind::SpectralEfficiency]),
                    })
                })
            })
            .collect();
        json!({
            "config": self.config,
            "drops": self.drops.len(),
            "failed_drops": self.failures().map(|d| json!({"drop": d.drop, "error": d.failure})).collect::<Vec<_>>(),
            "assigners": per_assigner,
            "vs_k": self.vs_k,
            "mc_validation": mc,
            "versions": {
                env!("CARGO_PKG_NAME"): env!("CARGO_PKG_VERSION"),
                "format": 1,
            },
        })
    }

    pub fn write_convergence<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "assigner,drop,iteration,h_star")?;
        for d in &self.drops {
            for r in &d.runs {
                if let Some(trace) = &r.trace {
                    for (i, h) in trace.per_iteration().into_iter().enumerate() {
                        writeln!(out, "{},{},{},{}", r.assigner.label(), d.drop, i, h)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Sorted network minima with their empirical CDF, per assigner and power
    /// setting.
    pub fn write_cdf<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "assigner,power_control,min_f,cdf")?;
        for &assigner in &self.config.assigners {
            for pc in [false, true] {
                let mut values: Vec<f64> = self
                    .drops
                    .iter()
                    .filter_map(|d| d.run(assigner))
                    .filter_map(|r| {
                        if pc {
                            r.power_control.as_ref().map(|p| p.report.min_f)
                        } else {
                            Some(r.fixed.min_f)
                        }
                    })
                    .collect();
                values.sort_by(f64::total_cmp);
                let n = values.len() as f64;
                for (i, v) in values.iter().enumerate() {
                    writeln!(out, "{},{},{},{}", assigner.label(), pc, v, (i + 1) as f64 / n)?;
                }
            }
        }
        Ok(())
    }

    pub fn write_vs_k<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,assigner,power_control,mean_min_f,drops")?;
        for r in &self.vs_k {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                r.assigner.label(),
                r.power_control,
                r.mean_min_f,
                r.drops
            )?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes `convergence.csv`, `cdf.csv`, `vs_k.csv`, `summary.json`,
/// `drops.json` and, for drops with Monte Carlo validation,
/// `mc_validation_<drop>.csv`. Returns the written paths.
pub fn emit_outputs(result: &CampaignResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, fill: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, fill)?;
        written.push(path);
        Ok(())
    };
    emit("convergence.csv".into(), &|b| result.write_convergence(b))?;
    emit("cdf.csv".into(), &|b| result.write_cdf(b))?;
    emit("vs_k.csv".into(), &|b| result.write_vs_k(b))?;
    emit("summary.json".into(), &|b| {
        serde_json::to_writer_pretty(&mut *b, &result.summary())?;
        b.push(b'\n');
        Ok(())
    })?;
    emit("drops.json".into(), &|b| {
        serde_json::to_writer(&mut *b, &result.drops)?;
        b.push(b'\n');
        Ok(())
    })?;
    for d in &result.drops {
        if let Some(report) = &d.mc_validation {
            emit(format!("mc_validation_{}.csv", d.drop), &|b| report.write_csv(b))?;
        }
    }
    Ok(written)
}

/// Exhaustive versus joint versus random objectives of one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub drop: usize,
    pub random: f64,
    pub joint: f64,
    pub exhaustive: f64,
    pub candidates: usize,
}

/// Compares the joint assigner with the exhaustive optimum at fixed powers.
pub fn oracle_comparison(config: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    let mut cfg = config.clone();
    cfg.assigners = vec![AssignerKind::Exhaustive];
    cfg.validate()?;
    let system = cfg.effective_system();
    par::try_map_indexed(cfg.n_drops, |drop| {
        let stats = drop_statistics(&cfg, drop)?;
        let mut eval = Evaluator::new(&system, &stats)?;
        let weights = system.weights()?;
        let fixed = PowerAllocation::fixed(&system);
        let start = random_assignment(
            system.cells,
            system.users_per_cell,
            system.tau_p,
            derive_seed(cfg.seed, drop, ASSIGNMENT_SEED),
        )?;
        let joint = refine_assignment(&mut eval, start, &fixed, &weights, cfg.joint_options())?;
        let best = exhaustive_assignment(&mut eval, &fixed, &weights)?;
        Ok(OracleRow {
            drop,
            random: joint.initial_objective,
            joint: joint.objective,
            exhaustive: best.objective,
            candidates: best.candidates,
        })
    })
}

pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "drop,random,joint,exhaustive,candidates")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.drop, r.random, r.joint, r.exhaustive, r.candidates
        )?;
    }
    Ok(())
}
