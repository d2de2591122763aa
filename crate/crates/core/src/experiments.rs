//! Monte Carlo harness: (method x power x trial) grids over random channels,
//! aggregate statistics, and the CSV files behind the sum-rate and deviation
//! plots.
//!
//! Trial `t` draws its channel from `trial_seed(base_seed, t)`, independent of
//! the method and power level, so every comparison is paired and any subset
//! of trials can be rerun in isolation. Rows are produced in grid order no
//! matter how the work is scheduled.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::allocator::{
    allocate_subcarriers, allocate_subcarriers_in_order, proportionality_deviation, user_rates, ReallocationOptions,
    TransferDirection,
};
use crate::baselines::{greedy_max_rate, static_block_fdma_allocation};
use crate::channel::{self, snr_grid, trial_seed, user_rng};
use crate::error::{Error, Result};
use crate::oracle::{exhaustive_best, DEFAULT_GUARD};
use crate::{Allocation, FairnessWeights, GainGrid, PowerDelayProfile, SystemParams};

/// Allocation policy run in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Greedy subcarrier assignment followed by iterative power exchange.
    Proposed,
    /// Greedy subcarrier assignment with equal power (first phase only).
    SubcarrierOnly,
    GreedyMaxRate,
    StaticBlockFdma,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed,
        Method::SubcarrierOnly,
        Method::GreedyMaxRate,
        Method::StaticBlockFdma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::SubcarrierOnly => "subcarrier_only",
            Method::GreedyMaxRate => "greedy_max_rate",
            Method::StaticBlockFdma => "static_block_fdma",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method `{s}` (expected one of {})", known.join(", "))
            })
    }
}

/// `4:2:2:1:...:1`, truncated to `users` entries.
pub fn tiered_weights(users: usize) -> Vec<f64> {
    (0..users)
        .map(|k| match k {
            0 => 4.0,
            1 | 2 => 2.0,
            _ => 1.0,
        })
        .collect()
}

/// Validated experiment description. Serializes back to the same JSON
/// layout it is read from, with presets expanded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub power_delay_profile_db: Vec<f64>,
    pub weights: Vec<f64>,
    pub power_sweep_w: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub base_seed: u64,
    /// Power step as a fraction of `P_total / N`.
    pub delta_fraction: f64,
    pub max_iter: usize,
    pub literal_pseudocode: bool,
    pub oracle_guard: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_users: channel::TABLE1_USERS,
            num_subcarriers: channel::TABLE1_SUBCARRIERS,
            bandwidth_hz: channel::TABLE1_BANDWIDTH_HZ,
            noise_density_dbm_per_hz: channel::TABLE1_NOISE_DBM_PER_HZ,
            power_delay_profile_db: channel::TABLE1_PROFILE_DB.to_vec(),
            weights: vec![1.0; channel::TABLE1_USERS],
            power_sweep_w: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            methods: vec![Method::Proposed, Method::GreedyMaxRate, Method::StaticBlockFdma],
            trials: 1000,
            base_seed: 0,
            delta_fraction: 0.125,
            max_iter: ReallocationOptions::<f64>::DEFAULT_MAX_ITER,
            literal_pseudocode: false,
            oracle_guard: DEFAULT_GUARD,
        }
    }
}

fn field_number(obj: &serde_json::Map<String, Value>, field: &str) -> Result<Option<f64>> {
    match obj.get(field) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::config(field, "expected a number")),
    }
}

fn field_count(obj: &serde_json::Map<String, Value>, field: &str) -> Result<Option<u64>> {
    match obj.get(field) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| Error::config(field, "expected a non-negative integer")),
    }
}

fn number_list(obj: &serde_json::Map<String, Value>, field: &str) -> Result<Option<Vec<f64>>> {
    let Some(v) = obj.get(field) else { return Ok(None) };
    let arr = v
        .as_array()
        .ok_or_else(|| Error::config(field, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| Error::config(format!("{field}[{i}]"), "expected a number"))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

const KNOWN_FIELDS: [&str; 14] = [
    "num_users",
    "num_subcarriers",
    "bandwidth_hz",
    "noise_density_dbm_per_hz",
    "power_delay_profile_db",
    "weights",
    "power_sweep_w",
    "methods",
    "trials",
    "base_seed",
    "delta_fraction",
    "max_iter",
    "literal_pseudocode",
    "oracle_guard",
];

impl ExperimentConfig {
    /// The reference setup: 10 users, 64 subcarriers, 1-5 W, uniform weights.
    pub fn table1() -> Self {
        Self::default()
    }

    /// Parses and validates a JSON config. Missing fields take the
    /// reference defaults; errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::config("<root>", "expected a JSON object"))?;
        if let Some(unknown) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
            return Err(Error::config(unknown.clone(), "unknown field"));
        }
        let mut cfg = Self::default();

        if let Some(k) = field_count(obj, "num_users")? {
            cfg.num_users = k as usize;
        }
        if let Some(n) = field_count(obj, "num_subcarriers")? {
            cfg.num_subcarriers = n as usize;
        }
        if let Some(b) = field_number(obj, "bandwidth_hz")? {
            cfg.bandwidth_hz = b;
        }
        if let Some(n0) = field_number(obj, "noise_density_dbm_per_hz")? {
            cfg.noise_density_dbm_per_hz = n0;
        }
        if let Some(p) = number_list(obj, "power_delay_profile_db")? {
            cfg.power_delay_profile_db = p;
        }
        if let Some(p) = number_list(obj, "power_sweep_w")? {
            cfg.power_sweep_w = p;
        }
        if let Some(t) = field_count(obj, "trials")? {
            cfg.trials = t as usize;
        }
        if let Some(s) = field_count(obj, "base_seed")? {
            cfg.base_seed = s;
        }
        if let Some(f) = field_number(obj, "delta_fraction")? {
            cfg.delta_fraction = f;
        }
        if let Some(m) = field_count(obj, "max_iter")? {
            cfg.max_iter = m as usize;
        }
        if let Some(g) = field_count(obj, "oracle_guard")? {
            cfg.oracle_guard = g;
        }
        if let Some(v) = obj.get("literal_pseudocode") {
            cfg.literal_pseudocode = v
                .as_bool()
                .ok_or_else(|| Error::config("literal_pseudocode", "expected a boolean"))?;
        }
        if let Some(v) = obj.get("methods") {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::config("methods", "expected an array of method names"))?;
            cfg.methods = arr
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let field = format!("methods[{i}]");
                    let name = m.as_str().ok_or_else(|| Error::config(&field, "expected a string"))?;
                    name.parse().map_err(|e| Error::config(&field, e))
                })
                .collect::<Result<_>>()?;
        }

        // Weights depend on num_users, so they are resolved last.
        cfg.weights = match obj.get("weights") {
            None => vec![1.0; cfg.num_users],
            Some(Value::String(preset)) => match preset.as_str() {
                "uniform" => vec![1.0; cfg.num_users],
                "tiered" => tiered_weights(cfg.num_users),
                other => {
                    return Err(Error::config(
                        "weights",
                        format!("unknown preset `{other}` (expected `uniform`, `tiered` or an array)"),
                    ))
                }
            },
            Some(Value::Array(arr)) => {
                let mut w = Vec::with_capacity(arr.len());
                for (i, x) in arr.iter().enumerate() {
                    w.push(
                        x.as_f64()
                            .ok_or_else(|| Error::config(format!("weights[{i}]"), "expected a positive number"))?,
                    );
                }
                w
            }
            Some(_) => return Err(Error::config("weights", "expected a preset name or an array")),
        };

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::config("num_users", "must be at least 1"));
        }
        if self.num_subcarriers < self.num_users {
            return Err(Error::config(
                "num_subcarriers",
                format!("must be >= num_users ({})", self.num_users),
            ));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz", "must be positive"));
        }
        if !self.noise_density_dbm_per_hz.is_finite() {
            return Err(Error::config("noise_density_dbm_per_hz", "must be finite"));
        }
        if self.power_delay_profile_db.is_empty() {
            return Err(Error::config("power_delay_profile_db", "needs at least one tap"));
        }
        if self.power_delay_profile_db.len() > self.num_subcarriers {
            return Err(Error::config("power_delay_profile_db", "more taps than subcarriers"));
        }
        if let Some(i) = self.power_delay_profile_db.iter().position(|p| !p.is_finite()) {
            return Err(Error::config(format!("power_delay_profile_db[{i}]"), "must be finite"));
        }
        if self.weights.len() < self.num_users {
            let k = self.weights.len();
            return Err(Error::config(
                format!("weights[{k}]"),
                format!("missing weight for user {} of {}", k + 1, self.num_users),
            ));
        }
        if self.weights.len() > self.num_users {
            return Err(Error::config(
                format!("weights[{}]", self.num_users),
                format!("more weights than users ({})", self.num_users),
            ));
        }
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config(format!("weights[{i}]"), "must be positive"));
        }
        if self.power_sweep_w.is_empty() {
            return Err(Error::config("power_sweep_w", "must not be empty"));
        }
        for (i, p) in self.power_sweep_w.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::config(format!("power_sweep_w[{i}]"), "must be positive"));
            }
            if i > 0 && *p <= self.power_sweep_w[i - 1] {
                return Err(Error::config(format!("power_sweep_w[{i}]"), "sweep must be strictly increasing"));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if !(self.delta_fraction.is_finite() && self.delta_fraction > 0.0) {
            return Err(Error::config("delta_fraction", "must be positive"));
        }
        Ok(())
    }

    pub fn system_params(&self, total_power: f64) -> Result<SystemParams> {
        SystemParams::new(
            self.num_users,
            self.num_subcarriers,
            self.bandwidth_hz,
            channel::dbm_per_hz_to_watts(self.noise_density_dbm_per_hz),
            total_power,
        )
    }

    pub fn profile(&self) -> Result<PowerDelayProfile> {
        PowerDelayProfile::new(self.power_delay_profile_db.clone())
    }

    pub fn fairness_weights(&self) -> Result<FairnessWeights> {
        FairnessWeights::new(self.weights.clone())
    }

    pub fn reallocation_options(&self, params: &SystemParams) -> ReallocationOptions<f64> {
        ReallocationOptions {
            step: params.equal_power() * self.delta_fraction,
            max_iter: self.max_iter,
            direction: if self.literal_pseudocode {
                TransferDirection::LiteralPseudocode
            } else {
                TransferDirection::ToUnderServed
            },
        }
    }

    /// Channel realization of trial `trial_index`. Independent of the power level.
    pub fn trial_grid(&self, trial_index: usize) -> Result<GainGrid> {
        let params = self.system_params(self.power_sweep_w[0])?;
        snr_grid(&params, &self.profile()?, trial_seed(self.base_seed, trial_index as u64))
    }
}

/// Outcome of one method on one channel realization at one power level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub total_power: f64,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub delta: f64,
    pub deviations: Vec<f64>,
    pub iterations: usize,
    /// Why the power exchange stopped; empty for methods without one.
    pub stop: String,
    pub waterfill_calls: usize,
    /// Seconds spent inside the allocator. Not written to `trials.csv`.
    pub wall_time: f64,
}

fn record_from(
    trial: usize,
    seed: u64,
    method: Method,
    params: &SystemParams,
    weights: &FairnessWeights,
    allocation: &Allocation,
    grid: &GainGrid,
) -> Result<TrialRecord> {
    let rates = user_rates(allocation, grid, params);
    let report = proportionality_deviation(&rates, weights)?;
    Ok(TrialRecord {
        trial,
        seed,
        method,
        total_power: params.total_power,
        sum_rate: report.rate_sum,
        delta: report.mean_abs_deviation,
        deviations: report.deviations,
        rates,
        iterations: 0,
        stop: String::new(),
        waterfill_calls: 0,
        wall_time: 0.0,
    })
}

/// Runs `method` on a precomputed channel.
pub fn run_method(
    config: &ExperimentConfig,
    grid: &GainGrid,
    method: Method,
    total_power: f64,
    trial_index: usize,
) -> Result<TrialRecord> {
    let params = config.system_params(total_power)?;
    let weights = config.fairness_weights()?;
    let seed = trial_seed(config.base_seed, trial_index as u64);
    let started = Instant::now();
    let mut record = match method {
        Method::Proposed => {
            let out = crate::allocator::allocate(grid, &weights, &params, &config.reallocation_options(&params))?;
            let mut r = record_from(trial_index, seed, method, &params, &weights, &out.allocation, grid)?;
            r.iterations = out.iterations;
            r.stop = out.stop.as_str().to_string();
            r.waterfill_calls = out.waterfill_calls;
            r
        }
        Method::SubcarrierOnly => {
            let a = allocate_subcarriers(grid, &weights, &params)?;
            let alloc = Allocation::equal_power(a, params.equal_power());
            record_from(trial_index, seed, method, &params, &weights, &alloc, grid)?
        }
        Method::GreedyMaxRate => {
            let alloc = greedy_max_rate(grid, &params)?;
            record_from(trial_index, seed, method, &params, &weights, &alloc, grid)?
        }
        Method::StaticBlockFdma => {
            let alloc = static_block_fdma_allocation(&params)?;
            record_from(trial_index, seed, method, &params, &weights, &alloc, grid)?
        }
    };
    record.wall_time = started.elapsed().as_secs_f64();
    Ok(record)
}

/// One method, one power level, one trial, end to end.
pub fn run_trial(config: &ExperimentConfig, method: Method, total_power: f64, trial_index: usize) -> Result<TrialRecord> {
    let grid = config.trial_grid(trial_index)?;
    run_method(config, &grid, method, total_power, trial_index)
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    pub std_err: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std_err: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub total_power: f64,
    pub trials: usize,
    pub sum_rate: Moments,
    pub delta: Moments,
    pub iterations: Moments,
}

/// Per-(method, power) aggregates. Records are sorted first, so the result
/// does not depend on the order they arrive in.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.total_power.total_cmp(&b.total_power))
            .then(a.trial.cmp(&b.trial))
    });
    sorted
        .chunk_by(|a, b| a.method == b.method && a.total_power == b.total_power)
        .map(|group| {
            let column = |f: fn(&TrialRecord) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
            SummaryRow {
                method: group[0].method,
                total_power: group[0].total_power,
                trials: group.len(),
                sum_rate: Moments::of(&column(|r| r.sum_rate)),
                delta: Moments::of(&column(|r| r.delta)),
                iterations: Moments::of(&column(|r| r.iterations as f64)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Grid order: trial-major, then power, then method as configured.
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutput {
    pub fn summary_for(&self, method: Method, total_power: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.total_power == total_power)
    }
}

/// Full (method x power x trial) grid. Trials run in parallel; each trial
/// draws its channel once and reuses it for every power and method.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let per_trial: Vec<Vec<TrialRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let grid = config.trial_grid(t)?;
            let mut rows = Vec::with_capacity(config.power_sweep_w.len() * config.methods.len());
            for &p in &config.power_sweep_w {
                for &m in &config.methods {
                    rows.push(run_method(config, &grid, m, p, t)?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(SweepOutput { records, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSensitivityRow {
    pub fraction: f64,
    pub total_power: f64,
    pub trials: usize,
    pub delta: Moments,
    pub iterations: Moments,
}

/// Runs the proposed method with each step fraction (of `P_total / N`) at
/// every configured power level over the configured trials.
pub fn delta_sensitivity(config: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<DeltaSensitivityRow>> {
    if let Some(i) = fractions.iter().position(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::config(format!("fractions[{i}]"), "must be positive"));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let cfg = ExperimentConfig {
            delta_fraction: fraction,
            methods: vec![Method::Proposed],
            ..config.clone()
        };
        let out = sweep(&cfg)?;
        for s in out.summary {
            rows.push(DeltaSensitivityRow {
                fraction,
                total_power: s.total_power,
                trials: s.trials,
                delta: s.delta,
                iterations: s.iterations,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub trial: usize,
    pub seed: u64,
    pub total_power: f64,
    pub oracle_rate: f64,
    pub heuristic_rate: f64,
    /// `(oracle - heuristic) / oracle`.
    pub gap: f64,
    pub heuristic_delta: f64,
}

/// Proposed method against the exhaustive optimum on every trial and power.
/// Refuses instances above `config.oracle_guard` assignments.
pub fn oracle_compare(config: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    config.validate()?;
    let count = crate::oracle::assignment_count(config.num_users, config.num_subcarriers);
    if count.is_none_or(|c| c > config.oracle_guard) {
        return Err(Error::Sizing {
            users: config.num_users,
            subcarriers: config.num_subcarriers,
            guard: config.oracle_guard,
        });
    }
    let weights = config.fairness_weights()?;
    let rows: Vec<Vec<OracleRow>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let grid = config.trial_grid(t)?;
            config
                .power_sweep_w
                .iter()
                .map(|&p| {
                    let params = config.system_params(p)?;
                    let oracle = exhaustive_best(&grid, &weights, &params, config.oracle_guard)?;
                    let heuristic = run_method(config, &grid, Method::Proposed, p, t)?;
                    Ok(OracleRow {
                        trial: t,
                        seed: heuristic.seed,
                        total_power: p,
                        oracle_rate: oracle.optimum_sum_rate,
                        heuristic_rate: heuristic.sum_rate,
                        gap: (oracle.optimum_sum_rate - heuristic.sum_rate) / oracle.optimum_sum_rate,
                        heuristic_delta: heuristic.delta,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSensitivity {
    pub trials: usize,
    pub permutations: usize,
    /// Mean over trials and users of `(max - min) / mean` of a user's rate across orders.
    pub mean_relative_spread: f64,
    pub max_relative_spread: f64,
    /// Same statistic for the sum rate.
    pub mean_sum_rate_spread: f64,
    /// Trials whose assignment was identical under every order.
    pub identical_fraction: f64,
}

/// Runs the subcarrier phase with the initial user pass in `permutations`
/// random orders (plus the natural order) per trial, at the first configured
/// power, and measures how much per-user equal-power rates move.
pub fn order_sensitivity(config: &ExperimentConfig, permutations: usize) -> Result<OrderSensitivity> {
    config.validate()?;
    let params = config.system_params(config.power_sweep_w[0])?;
    let weights = config.fairness_weights()?;
    let k = config.num_users;
    // Per trial: (sum of user spreads, max user spread, sum-rate spread, identical)
    let per_trial: Vec<(f64, f64, f64, bool)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let grid = config.trial_grid(t)?;
            // Stream index past any user index keeps shuffles independent of channels.
            let mut rng = user_rng(trial_seed(config.base_seed, t as u64), usize::MAX >> 1);
            let mut order: Vec<usize> = (0..k).collect();
            let mut rates_by_order = Vec::with_capacity(permutations + 1);
            let mut assignments = Vec::with_capacity(permutations + 1);
            for i in 0..=permutations {
                if i > 0 {
                    order.shuffle(&mut rng);
                }
                let a = allocate_subcarriers_in_order(&grid, &weights, &params, &order)?;
                let alloc = Allocation::equal_power(a.clone(), params.equal_power());
                rates_by_order.push(user_rates(&alloc, &grid, &params));
                assignments.push(a);
            }
            let spread = |vals: &[f64]| {
                let max = vals.iter().copied().fold(f64::MIN, f64::max);
                let min = vals.iter().copied().fold(f64::MAX, f64::min);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                if mean > 0.0 { (max - min) / mean } else { 0.0 }
            };
            let user_spreads: Vec<f64> = (0..k)
                .map(|u| spread(&rates_by_order.iter().map(|r| r[u]).collect::<Vec<_>>()))
                .collect();
            let sums: Vec<f64> = rates_by_order.iter().map(|r| r.iter().sum()).collect();
            let identical = assignments.windows(2).all(|w| w[0] == w[1]);
            Ok((
                user_spreads.iter().sum::<f64>(),
                user_spreads.iter().copied().fold(0.0, f64::max),
                spread(&sums),
                identical,
            ))
        })
        .collect::<Result<_>>()?;
    let trials = per_trial.len();
    Ok(OrderSensitivity {
        trials,
        permutations,
        mean_relative_spread: per_trial.iter().map(|r| r.0).sum::<f64>() / (trials * k) as f64,
        max_relative_spread: per_trial.iter().map(|r| r.1).fold(0.0, f64::max),
        mean_sum_rate_spread: per_trial.iter().map(|r| r.2).sum::<f64>() / trials as f64,
        identical_fraction: per_trial.iter().filter(|r| r.3).count() as f64 / trials as f64,
    })
}

// ---------------------------------------------------------------------------
// CSV I/O. Floats use 17 significant digits so every value round-trips.
// ---------------------------------------------------------------------------

pub const TRIALS_HEADER: [&str; 11] = [
    "trial",
    "seed",
    "method",
    "total_power_w",
    "sum_rate",
    "delta",
    "iterations",
    "stop",
    "waterfill_calls",
    "rates",
    "deviations",
];

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(";")
}

fn parse_float(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::invalid(format!("bad {what} value `{s}` in trials CSV")))
}

pub fn write_trials_csv(path: impl AsRef<Path>, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            fmt_float(r.total_power),
            fmt_float(r.sum_rate),
            fmt_float(r.delta),
            r.iterations.to_string(),
            r.stop.clone(),
            r.waterfill_calls.to_string(),
            fmt_list(&r.rates),
            fmt_list(&r.deviations),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_trials_csv`]. `wall_time` is zero.
pub fn read_trials_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let list = |s: &str, what: &str| -> Result<Vec<f64>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(';').map(|x| parse_float(x, what)).collect()
        };
        let int = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad {what} value `{s}` in trials CSV")))
        };
        out.push(TrialRecord {
            trial: int(get(0), "trial")? as usize,
            seed: int(get(1), "seed")?,
            method: get(2).parse().map_err(Error::InvalidInput)?,
            total_power: parse_float(get(3), "total_power_w")?,
            sum_rate: parse_float(get(4), "sum_rate")?,
            delta: parse_float(get(5), "delta")?,
            iterations: int(get(6), "iterations")? as usize,
            stop: get(7).to_string(),
            waterfill_calls: int(get(8), "waterfill_calls")? as usize,
            rates: list(get(9), "rates")?,
            deviations: list(get(10), "deviations")?,
            wall_time: 0.0,
        });
    }
    Ok(out)
}

pub fn write_timings_csv(path: impl AsRef<Path>, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "method", "total_power_w", "iterations", "waterfill_calls", "wall_time_s"])?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.method.to_string(),
            fmt_float(r.total_power),
            r.iterations.to_string(),
            r.waterfill_calls.to_string(),
            fmt_float(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "total_power_w",
        "trials",
        "mean_sum_rate",
        "se_sum_rate",
        "mean_delta",
        "se_delta",
        "mean_iterations",
        "se_iterations",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            fmt_float(r.total_power),
            r.trials.to_string(),
            fmt_float(r.sum_rate.mean),
            fmt_float(r.sum_rate.std_err),
            fmt_float(r.delta.mean),
            fmt_float(r.delta.std_err),
            fmt_float(r.iterations.mean),
            fmt_float(r.iterations.std_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready table: one row per power level, one column per method.
pub fn write_wide_csv(
    path: impl AsRef<Path>,
    rows: &[SummaryRow],
    methods: &[Method],
    value: fn(&SummaryRow) -> f64,
) -> Result<()> {
    let mut powers: Vec<f64> = rows.iter().map(|r| r.total_power).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["total_power_w".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for p in powers {
        let mut rec = vec![fmt_float(p)];
        for m in methods {
            let v = rows
                .iter()
                .find(|r| r.method == *m && r.total_power == p)
                .map_or(f64::NAN, value);
            rec.push(fmt_float(v));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_delta_sensitivity_csv(path: impl AsRef<Path>, rows: &[DeltaSensitivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "delta_fraction",
        "total_power_w",
        "trials",
        "mean_delta",
        "se_delta",
        "mean_iterations",
        "se_iterations",
    ])?;
    for r in rows {
        w.write_record([
            fmt_float(r.fraction),
            fmt_float(r.total_power),
            r.trials.to_string(),
            fmt_float(r.delta.mean),
            fmt_float(r.delta.std_err),
            fmt_float(r.iterations.mean),
            fmt_float(r.iterations.std_err),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_oracle_csv(path: impl AsRef<Path>, rows: &[OracleRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "trial",
        "seed",
        "total_power_w",
        "oracle_rate",
        "heuristic_rate",
        "gap",
        "heuristic_delta",
    ])?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_float(r.total_power),
            fmt_float(r.oracle_rate),
            fmt_float(r.heuristic_rate),
            fmt_float(r.gap),
            fmt_float(r.heuristic_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}
