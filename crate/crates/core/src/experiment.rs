//! Seeded experiment runner: sample provider prices, run a market per
//! `(budget, n, family)` cell, optionally sweep `c`, and emit CSV/JSON.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::allocation::Family;
use crate::error::{Error, Result};
use crate::market::{run_market, Consumer, ConsumerId, DEFAULT_PROVIDER_MAX_EPSILON, DEFAULT_UNIT_VALUE};
use crate::optimizer::{information_argmax, BudgetProblem};
use crate::provider::{Provider, ProviderId};

pub const CSV_HEADER: [&str; 8] = [
    "budget",
    "n",
    "family",
    "c",
    "spend",
    "information",
    "profit",
    "flag",
];
const SIGNIFICANT_DIGITS: usize = 9;

pub const FLAG_SOLVED: &str = "solved";
pub const FLAG_ARGMAX: &str = "argmax";
pub const FLAG_ERROR: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl CSweep {
    /// `start, start + step, …` up to `stop` (inclusive, up to rounding).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| self.start + k as f64 * self.step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub n_providers: Vec<usize>,
    pub n_consumers: usize,
    pub price_mean: f64,
    pub price_std: f64,
    pub price_clip: [f64; 2],
    pub unit_value: f64,
    pub provider_max_eps: f64,
    pub budgets: Vec<f64>,
    /// Consumer payoff per ε unit.
    pub payoff_rate: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub family: Vec<Family>,
    pub c_sweep: Option<CSweep>,
    pub seed: u64,
    /// Fixed provider prices; replaces sampling and `n_providers`.
    pub prices: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_providers: vec![1000, 1500, 2000],
            n_consumers: 10,
            price_mean: 1.0,
            price_std: 1.0,
            price_clip: [0.0, 2.0],
            unit_value: DEFAULT_UNIT_VALUE,
            provider_max_eps: DEFAULT_PROVIDER_MAX_EPSILON,
            budgets: vec![60.0, 90.0, 120.0],
            payoff_rate: 10.0,
            family: Family::ALL.to_vec(),
            c_sweep: None,
            seed: 0,
            prices: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(deserializer: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(deserializer)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(config_err(msg))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: Self = toml::from_str(s).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.prices {
            Some(prices) => {
                require(!prices.is_empty(), "prices must not be empty")?;
                require(
                    prices.iter().all(|p| p.is_finite() && *p >= 0.0),
                    "prices must be finite and non-negative",
                )?;
            }
            None => {
                require(!self.n_providers.is_empty(), "n_providers must not be empty")?;
                require(self.n_providers.iter().all(|&n| n > 0), "n_providers must be positive")?;
            }
        }
        require(self.n_consumers > 0, "n_consumers must be positive")?;
        require(self.price_mean.is_finite(), "price_mean must be finite")?;
        require(
            self.price_std.is_finite() && self.price_std >= 0.0,
            "price_std must be finite and non-negative",
        )?;
        let [low, high] = self.price_clip;
        require(
            low.is_finite() && high.is_finite() && low >= 0.0 && low <= high,
            "price_clip must satisfy 0 <= low <= high",
        )?;
        require(
            self.unit_value.is_finite() && self.unit_value > 0.0,
            "unit_value must be positive",
        )?;
        require(
            self.provider_max_eps.is_finite() && self.provider_max_eps > 0.0,
            "provider_max_eps must be positive",
        )?;
        require(!self.budgets.is_empty(), "budgets must not be empty")?;
        require(
            self.budgets.iter().all(|b| b.is_finite() && *b > 0.0),
            "budgets must be positive",
        )?;
        require(
            self.payoff_rate.is_finite() && self.payoff_rate > 0.0,
            "payoff_rate must be positive",
        )?;
        require(!self.family.is_empty(), "family must not be empty")?;
        if let Some(s) = &self.c_sweep {
            require(
                s.step.is_finite() && s.step > 0.0,
                "c_sweep.step must be positive",
            )?;
            require(
                s.start.is_finite() && s.start > 0.0,
                "c_sweep.start must be positive",
            )?;
            require(
                s.stop.is_finite() && s.stop >= s.start,
                "c_sweep.stop must be >= start",
            )?;
        }
        Ok(())
    }

    fn provider_counts(&self) -> Vec<usize> {
        match &self.prices {
            Some(p) => vec![p.len()],
            None => self.n_providers.clone(),
        }
    }

    fn prices_for(&self, n: usize) -> Result<Vec<f64>> {
        match &self.prices {
            Some(p) => Ok(p.clone()),
            None => sample_prices(self, n),
        }
    }
}

/// `n` seeded normal draws, clamped (not resampled) to `price_clip`.
pub fn sample_prices(config: &ExperimentConfig, n: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let normal = Normal::new(config.price_mean, config.price_std)
        .map_err(|e| config_err(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [low, high] = config.price_clip;
    Ok((0..n)
        .map(|_| normal.sample(&mut rng).clamp(low, high))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub budget: f64,
    pub n: usize,
    pub family: Family,
    pub c: f64,
    pub spend: f64,
    pub information: f64,
    pub profit: f64,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub budget: f64,
    pub n: usize,
    pub family: Family,
    /// Mean solved `c` over consumers that published an allocator.
    pub solved_c: Option<f64>,
    pub deals: usize,
    pub ledger_violations: Vec<String>,
    pub consumer_failures: Vec<String>,
    pub sweep_argmax_c: Option<f64>,
    /// Sweep values left out of the table because they overspend the budget.
    pub sweep_over_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub rows: Vec<ResultRow>,
}

struct Cell {
    budget: f64,
    n: usize,
    family: Family,
}

/// Runs every `(budget, n, family)` cell. Per-cell failures are recorded,
/// not propagated; output order is `(budget, n, family, c)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut cells = Vec::new();
    let mut prices = Vec::new();
    for n in config.provider_counts() {
        prices.push((n, config.prices_for(n)?));
    }
    for &budget in &config.budgets {
        for (n, _) in &prices {
            for &family in &config.family {
                cells.push(Cell {
                    budget,
                    n: *n,
                    family,
                });
            }
        }
    }

    let results: Vec<(CellSummary, Vec<ResultRow>)> = cells
        .par_iter()
        .map(|cell| {
            let cell_prices = &prices.iter().find(|(n, _)| *n == cell.n).unwrap().1;
            run_cell(config, cell, cell_prices)
        })
        .collect();

    let mut summaries = Vec::with_capacity(results.len());
    let mut rows = Vec::new();
    for (summary, cell_rows) in results {
        summaries.push(summary);
        rows.extend(cell_rows);
    }
    for row in &mut rows {
        round_row(row);
    }
    rows.sort_by(compare_rows);
    summaries.sort_by(|a, b| {
        a.budget
            .total_cmp(&b.budget)
            .then(a.n.cmp(&b.n))
            .then(a.family.cmp(&b.family))
    });
    Ok(ExperimentResult {
        config: config.clone(),
        cells: summaries,
        rows,
    })
}

fn compare_rows(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.budget
        .total_cmp(&b.budget)
        .then(a.n.cmp(&b.n))
        .then(a.family.cmp(&b.family))
        .then(a.c.total_cmp(&b.c))
        .then(a.flag.cmp(&b.flag))
}

fn run_cell(config: &ExperimentConfig, cell: &Cell, prices: &[f64]) -> (CellSummary, Vec<ResultRow>) {
    let mut summary = CellSummary {
        budget: cell.budget,
        n: cell.n,
        family: cell.family,
        solved_c: None,
        deals: 0,
        ledger_violations: Vec::new(),
        consumer_failures: Vec::new(),
        sweep_argmax_c: None,
        sweep_over_budget: 0,
    };
    let mut rows = Vec::new();
    let error_row = || ResultRow {
        budget: cell.budget,
        n: cell.n,
        family: cell.family,
        c: f64::NAN,
        spend: f64::NAN,
        information: f64::NAN,
        profit: f64::NAN,
        flag: FLAG_ERROR.to_string(),
    };

    match market_row(config, cell, prices, &mut summary) {
        Ok(Some(row)) => rows.push(row),
        Ok(None) => rows.push(error_row()),
        Err(e) => {
            summary.consumer_failures.push(e.to_string());
            rows.push(error_row());
        }
    }

    if let Some(sweep) = &config.c_sweep {
        match sweep_rows(config, cell, prices, sweep, &mut summary) {
            Ok(r) => rows.extend(r),
            Err(e) => summary.consumer_failures.push(format!("sweep: {e}")),
        }
    }
    (summary, rows)
}

fn market_row(
    config: &ExperimentConfig,
    cell: &Cell,
    prices: &[f64],
    summary: &mut CellSummary,
) -> Result<Option<ResultRow>> {
    let providers = prices
        .iter()
        .enumerate()
        .map(|(i, &p)| Provider::new(ProviderId(i as u32), p, config.provider_max_eps, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let consumers = (0..config.n_consumers)
        .map(|j| Consumer::new(ConsumerId(j as u32), cell.budget, config.payoff_rate, cell.family))
        .collect::<Result<Vec<_>>>()?;

    let outcome = run_market(&providers, &consumers, config.unit_value)?;
    summary.deals = outcome.deals.len();
    summary.ledger_violations = outcome
        .audit(&providers, &consumers)
        .iter()
        .map(ToString::to_string)
        .collect();

    let mut solved = Vec::new();
    for (id, s) in &outcome.per_consumer {
        match (&s.solved, &s.failure) {
            (Some(_), _) => solved.push(s),
            (None, Some(f)) => summary.consumer_failures.push(format!("{id}: {f}")),
            (None, None) => {}
        }
    }
    if solved.is_empty() {
        return Ok(None);
    }
    let k = solved.len() as f64;
    let mean = |f: &dyn Fn(&&crate::market::ConsumerSummary) -> f64| solved.iter().map(f).sum::<f64>() / k;
    let c = mean(&|s| s.solved.unwrap().allocator.c());
    summary.solved_c = Some(c);
    Ok(Some(ResultRow {
        budget: cell.budget,
        n: cell.n,
        family: cell.family,
        c,
        spend: mean(&|s| s.spent),
        information: mean(&|s| s.information),
        profit: mean(&|s| s.profit),
        flag: FLAG_SOLVED.to_string(),
    }))
}

fn sweep_rows(
    config: &ExperimentConfig,
    cell: &Cell,
    prices: &[f64],
    sweep: &CSweep,
    summary: &mut CellSummary,
) -> Result<Vec<ResultRow>> {
    let problem = BudgetProblem::new(cell.family, prices.to_vec(), cell.budget)?;
    let points = problem.scan(&sweep.values())?;
    let best = information_argmax(&points, cell.budget);
    summary.sweep_argmax_c = best.map(|i| points[i].c);

    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if Some(i) != best && p.spend > cell.budget {
            summary.sweep_over_budget += 1;
            continue;
        }
        rows.push(ResultRow {
            budget: cell.budget,
            n: cell.n,
            family: cell.family,
            c: p.c,
            spend: p.spend,
            information: p.information,
            profit: config.payoff_rate * p.information - p.spend,
            flag: if Some(i) == best {
                FLAG_ARGMAX.to_string()
            } else {
                String::new()
            },
        });
    }
    Ok(rows)
}

/// Formats `x` with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format_significant(x, SIGNIFICANT_DIGITS).parse().unwrap_or(x)
    } else {
        x
    }
}

/// Rounds every float so the JSON mirror carries exactly the CSV values.
fn round_row(row: &mut ResultRow) {
    row.budget = round_sig(row.budget);
    row.c = round_sig(row.c);
    row.spend = round_sig(row.spend);
    row.information = round_sig(row.information);
    row.profit = round_sig(row.profit);
}

impl ExperimentResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| config_err(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            let sig = |x: f64| format_significant(x, SIGNIFICANT_DIGITS);
            w.write_record([
                sig(r.budget),
                r.n.to_string(),
                r.family.to_string(),
                sig(r.c),
                sig(r.spend),
                sig(r.information),
                sig(r.profit),
                r.flag.clone(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| config_err(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| config_err(e.to_string()))
    }

    /// JSON summary; non-finite floats become `null`.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| config_err(e.to_string()))
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| config_err(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("results.csv"), self.to_csv()?).map_err(io)?;
        fs::write(dir.join("summary.json"), self.to_json()? + "\n").map_err(io)?;
        Ok(())
    }
}
