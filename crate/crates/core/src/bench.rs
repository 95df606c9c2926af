//! Search-efficiency benchmark: explored counts, median runtimes and runtime
//! ratios against Approach-II over growing rate sets.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyBudget;
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::synthesis::{candidate_cost_energy, synthesize, Algorithm, DisturbancePattern};
use crate::tables::{
    build_cost_table, build_power_table, totals_over_window, CostTable, LevelSpec, RateSet,
    WindowTotals,
};

pub const DEFAULT_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRule {
    /// Random monotone tables.
    Synthetic,
    /// Tables designed for the built-in DC servo (k must be 3).
    DcServo,
}

fn default_reps() -> usize {
    5
}

fn default_fraction() -> f64 {
    0.5
}

fn default_rule() -> TableRule {
    TableRule::Synthetic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_rule")]
    pub tables: TableRule,
    #[serde(default)]
    pub seed: u64,
    /// Budget as a point between the cheapest and the most expensive
    /// candidate energy: 0 = all-longest, 1 = all-shortest.
    #[serde(default = "default_fraction")]
    pub budget_fraction: f64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
}

impl BenchCase {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self {
            name: None,
            n,
            k,
            tables: TableRule::Synthetic,
            seed,
            budget_fraction: default_fraction(),
            repetitions: default_reps(),
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("n{}_k{}", self.n, self.k))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.repetitions == 0 {
            return Err(Error::config(
                "cases",
                format!("{}: n, k and repetitions must be at least 1", self.label()),
            ));
        }
        if !(0.0..=1.0).contains(&self.budget_fraction) {
            return Err(Error::config("budget_fraction", "must lie in [0, 1]"));
        }
        if self.tables == TableRule::DcServo && self.k != 3 {
            return Err(Error::config("tables", "dc_servo tables have 3 levels"));
        }
        Ok(())
    }
}

fn default_window() -> f64 {
    100.0
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

fn default_peak() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_peak")]
    pub peak_power_mw: f64,
    /// Candidate-space size above which exhaustive and Approach-I are skipped.
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default)]
    pub parallel: bool,
}

impl BenchConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config {
            field: "<root>".into(),
            message: format!("{e} (in {})", path.display()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::config("cases", "at least one case is required"));
        }
        if !(self.window_s > 0.0) {
            return Err(Error::config("window_s", "must be positive"));
        }
        if !(self.cap >= 1.0) {
            return Err(Error::config("cap", "must be at least 1"));
        }
        self.cases.iter().try_for_each(BenchCase::validate)
    }
}

/// `n` periods evenly spread over 10..=90 ms (just 10 ms when `n == 1`).
pub fn bench_rates(n: usize) -> Result<RateSet> {
    if n == 1 {
        return RateSet::from_millis(vec![10.0]);
    }
    RateSet::from_millis(
        (0..n)
            .map(|i| 10.0 + 80.0 * i as f64 / (n - 1) as f64)
            .collect(),
    )
}

/// Costs rising with the period by random positive steps, one scale per level.
/// Steps shrink with `n` so the rise across the rate range does not depend
/// on how finely it is sampled.
pub fn synthetic_cost_table(rates: &RateSet, k: usize, seed: u64) -> Result<CostTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rates.len();
    let step = 0.8 / n.saturating_sub(1).max(1) as f64;
    let mut entries = vec![vec![0.0; k]; n];
    for j in 0..k {
        let scale = 10f64.powi(j as i32);
        let mut v = scale * rng.random_range(1.0..2.0);
        for row in entries.iter_mut() {
            row[j] = v;
            v += scale * step * rng.random_range(0.05..1.0);
        }
    }
    CostTable::from_entries(rates.millis().to_vec(), entries)
}

pub fn case_totals(case: &BenchCase, window_s: f64, peak_power_mw: f64) -> Result<WindowTotals> {
    let rates = bench_rates(case.n)?;
    let ct = match case.tables {
        TableRule::Synthetic => synthetic_cost_table(&rates, case.k, case.seed)?,
        TableRule::DcServo => {
            build_cost_table(&PlantModel::dc_servo(), &rates, &LevelSpec::case_study())?
        }
    };
    let pt = build_power_table(&rates, peak_power_mw)?;
    let pattern = DisturbancePattern::new(vec![1.0 / case.k as f64; case.k])?;
    totals_over_window(&ct, &pt, &pattern, window_s)
}

pub fn case_budget(totals: &WindowTotals, fraction: f64) -> Result<EnergyBudget> {
    let k = totals.levels();
    let (_, low) = candidate_cost_energy(&vec![totals.rates() - 1; k], totals);
    let (_, high) = candidate_cost_energy(&vec![0; k], totals);
    EnergyBudget::new(low + fraction * (high - low), totals.window_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub case: String,
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub skipped: bool,
    pub median_s: Option<f64>,
    pub explored: Option<u64>,
    pub cost: Option<f64>,
    pub feasible: Option<bool>,
    pub ratio_vs_approach2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub notes: Vec<String>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn run_case(case: &BenchCase, cfg: &BenchConfig) -> Result<(Vec<BenchRow>, Vec<String>)> {
    case.validate()?;
    let totals = case_totals(case, cfg.window_s, cfg.peak_power_mw)?;
    let budget = case_budget(&totals, case.budget_fraction)?;
    let space = (case.n as f64).powi(case.k as i32);
    let label = case.label();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for algorithm in Algorithm::ALL {
        let capped = algorithm != Algorithm::Approach2 && space > cfg.cap;
        if capped {
            notes.push(format!(
                "{label}: {algorithm} skipped, candidate space {space:e} exceeds cap {:e}",
                cfg.cap
            ));
            rows.push(BenchRow {
                case: label.clone(),
                n: case.n,
                k: case.k,
                algorithm,
                skipped: true,
                median_s: None,
                explored: None,
                cost: None,
                feasible: None,
                ratio_vs_approach2: None,
            });
            continue;
        }
        let mut times = Vec::with_capacity(case.repetitions);
        let mut last = None;
        for _ in 0..case.repetitions {
            let started = Instant::now();
            let result = synthesize(algorithm, &totals, &budget)?;
            times.push(started.elapsed().as_secs_f64());
            last = Some(result);
        }
        let result = last.expect("at least one repetition");
        notes.extend(result.notes.iter().map(|n| format!("{label}: {algorithm}: {n}")));
        rows.push(BenchRow {
            case: label.clone(),
            n: case.n,
            k: case.k,
            algorithm,
            skipped: false,
            median_s: Some(median(times)),
            explored: Some(result.explored),
            cost: Some(result.predicted_cost),
            feasible: Some(result.feasible),
            ratio_vs_approach2: None,
        });
    }
    let base = rows
        .iter()
        .find(|r| r.algorithm == Algorithm::Approach2)
        .and_then(|r| r.median_s);
    for row in rows.iter_mut() {
        row.ratio_vs_approach2 = match (row.median_s, base) {
            (Some(t), Some(b)) if b > 0.0 => Some(t / b),
            _ => None,
        };
    }
    let feasibility: Vec<bool> = rows.iter().filter_map(|r| r.feasible).collect();
    if feasibility.windows(2).any(|w| w[0] != w[1]) {
        notes.push(format!("{label}: algorithms disagree on feasibility"));
    }
    Ok((rows, notes))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let per_case: Vec<(Vec<BenchRow>, Vec<String>)> = if cfg.parallel {
        cfg.cases
            .par_iter()
            .map(|c| run_case(c, cfg))
            .collect::<Result<_>>()?
    } else {
        cfg.cases
            .iter()
            .map(|c| run_case(c, cfg))
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (r, n) in per_case {
        rows.extend(r);
        notes.extend(n);
    }
    Ok(BenchReport { rows, notes })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl BenchReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "case",
            "n",
            "k",
            "algorithm",
            "status",
            "median_s",
            "explored",
            "cost",
            "feasible",
            "ratio_vs_approach2",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.case.clone(),
                r.n.to_string(),
                r.k.to_string(),
                r.algorithm.to_string(),
                if r.skipped { "skipped" } else { "ok" }.to_string(),
                opt(&r.median_s),
                opt(&r.explored),
                opt(&r.cost),
                opt(&r.feasible),
                opt(&r.ratio_vs_approach2),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<bench csv>", e))?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:>5} {:>2}  {:<11} {:>12} {:>12} {:>14} {:>9}",
            "case", "n", "k", "algorithm", "median", "explored", "cost", "ratio"
        );
        for r in &self.rows {
            if r.skipped {
                let _ = writeln!(
                    s,
                    "{:<14} {:>5} {:>2}  {:<11} {:>12} {:>12} {:>14} {:>9}",
                    r.case, r.n, r.k, r.algorithm.to_string(), "skipped", "-", "-", "-"
                );
                continue;
            }
            let _ = writeln!(
                s,
                "{:<14} {:>5} {:>2}  {:<11} {:>10.3}ms {:>12} {:>14.6} {:>9.2}",
                r.case,
                r.n,
                r.k,
                r.algorithm.to_string(),
                r.median_s.unwrap_or(0.0) * 1e3,
                r.explored.unwrap_or(0),
                r.cost.unwrap_or(f64::NAN),
                r.ratio_vs_approach2.unwrap_or(f64::NAN)
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
