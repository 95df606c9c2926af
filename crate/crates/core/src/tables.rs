//! Off-line tables read by the on-line search: per-rate costs by disturbance
//! level, per-rate power, window totals, and the profit-sorted tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::sample_count;
use crate::error::{Error, Result};
use crate::lqg::{design, evaluate_cost, CostBreakdown, LqgController};
use crate::plant::PlantModel;
use crate::synthesis::DisturbancePattern;

/// Admissible sampling periods, strictly increasing. Stored in milliseconds
/// (the unit used in files) with seconds derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    periods_ms: Vec<f64>,
}

impl RateSet {
    pub fn from_millis(periods_ms: Vec<f64>) -> Result<Self> {
        if periods_ms.is_empty() {
            return Err(Error::InvalidRates("at least one period is required".into()));
        }
        if periods_ms.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidRates("periods must be finite and positive".into()));
        }
        if periods_ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRates("periods must be strictly increasing".into()));
        }
        Ok(Self { periods_ms })
    }

    /// `start, start + step, ..., end` inclusive.
    pub fn arithmetic(start_ms: f64, step_ms: f64, end_ms: f64) -> Result<Self> {
        if !(step_ms > 0.0) {
            return Err(Error::InvalidRates("step must be positive".into()));
        }
        let count = ((end_ms - start_ms) / step_ms + 1e-9).floor() as usize + 1;
        Self::from_millis((0..count).map(|i| start_ms + step_ms * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.periods_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods_ms.is_empty()
    }

    pub fn millis(&self) -> &[f64] {
        &self.periods_ms
    }

    pub fn seconds(&self, i: usize) -> f64 {
        self.periods_ms[i] / 1000.0
    }

    pub fn all_seconds(&self) -> Vec<f64> {
        self.periods_ms.iter().map(|p| p / 1000.0).collect()
    }

    pub fn index_of_millis(&self, ms: f64) -> Option<usize> {
        self.periods_ms
            .iter()
            .position(|p| (p - ms).abs() <= 1e-9 * p.max(1.0))
    }
}

/// Disturbance levels as right-closed intervals on the estimated intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub thresholds: Vec<f64>,
    pub representative_r: Vec<f64>,
}

impl LevelSpec {
    pub fn new(thresholds: Vec<f64>, representative_r: Vec<f64>) -> Result<Self> {
        let spec = Self {
            thresholds,
            representative_r,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Midpoint representatives of each interval.
    pub fn with_midpoints(thresholds: Vec<f64>) -> Result<Self> {
        let reps = thresholds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::new(thresholds, reps)
    }

    /// `(0, 10]`, `(10, 50]`, `(50, 100]` with midpoints 5, 30, 75.
    pub fn case_study() -> Self {
        Self::with_midpoints(vec![0.0, 10.0, 50.0, 100.0]).expect("static levels are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.len() < 2 {
            return Err(Error::InvalidLevels("need at least two boundaries".into()));
        }
        if t.iter().any(|v| !v.is_finite()) || t[0] < 0.0 {
            return Err(Error::InvalidLevels(
                "boundaries must be finite and non-negative".into(),
            ));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLevels("boundaries must be increasing".into()));
        }
        if self.representative_r.len() != t.len() - 1 {
            return Err(Error::InvalidLevels(format!(
                "{} boundaries define {} levels but {} representatives were given",
                t.len(),
                t.len() - 1,
                self.representative_r.len()
            )));
        }
        for (j, r) in self.representative_r.iter().enumerate() {
            if !(*r > t[j] && *r <= t[j + 1]) {
                return Err(Error::InvalidLevels(format!(
                    "representative {r} of level {} lies outside ({}, {}]",
                    j + 1,
                    t[j],
                    t[j + 1]
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.representative_r.len()
    }

    /// Zero-based level of an intensity estimate. Values at or below the
    /// lowest boundary map to the first level, values above the top boundary
    /// clamp to the last.
    pub fn classify(&self, r_hat: f64) -> usize {
        let k = self.count();
        self.thresholds[1..]
            .iter()
            .position(|upper| r_hat <= *upper)
            .unwrap_or(k - 1)
    }
}

/// A rate's designed controller and its cost decomposition.
#[derive(Debug, Clone)]
pub struct RateModel {
    pub period_ms: f64,
    pub controller: LqgController,
    pub breakdown: CostBreakdown,
}

/// Designs a controller for every period, in parallel over the rate set.
pub fn design_rates(plant: &PlantModel, rates: &RateSet) -> Result<Vec<RateModel>> {
    rates
        .millis()
        .par_iter()
        .map(|&ms| {
            let wrap = |e: Error| Error::Design {
                period_ms: ms,
                source: Box::new(e),
            };
            let controller = design(plant, ms / 1000.0).map_err(wrap)?;
            let breakdown = evaluate_cost(plant, &controller, 1.0).map_err(wrap)?;
            Ok(RateModel {
                period_ms: ms,
                controller,
                breakdown,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    /// Zero-based index of the shorter period of the offending pair.
    pub period_index: usize,
    pub level: usize,
    pub shorter: f64,
    pub longer: f64,
}

/// Stationary cost `J[i][j]` for period `i` at level `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub periods_ms: Vec<f64>,
    pub entries: Vec<Vec<f64>>,
    pub violations: Vec<MonotonicityViolation>,
}

impl CostTable {
    pub fn from_entries(periods_ms: Vec<f64>, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.len() != periods_ms.len() {
            return Err(Error::Dimension(format!(
                "{} cost rows for {} periods",
                entries.len(),
                periods_ms.len()
            )));
        }
        let k = entries.first().map_or(0, Vec::len);
        if k == 0 || entries.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension("cost rows must share a non-zero width".into()));
        }
        if entries.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Dimension("cost entries must be finite and >= 0".into()));
        }
        let mut violations = Vec::new();
        for i in 1..entries.len() {
            for j in 0..k {
                if entries[i][j] < entries[i - 1][j] {
                    violations.push(MonotonicityViolation {
                        period_index: i - 1,
                        level: j,
                        shorter: entries[i - 1][j],
                        longer: entries[i][j],
                    });
                }
            }
        }
        Ok(Self {
            periods_ms,
            entries,
            violations,
        })
    }

    pub fn rates(&self) -> usize {
        self.entries.len()
    }

    pub fn levels(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, period_index: usize, level: usize) -> f64 {
        self.entries[period_index][level]
    }

    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn index_of_millis(&self, ms: f64) -> Option<usize> {
        self.periods_ms
            .iter()
            .position(|p| (p - ms).abs() <= 1e-9 * p.max(1.0))
    }
}

pub fn cost_table_from_models(models: &[RateModel], levels: &LevelSpec) -> Result<CostTable> {
    let entries = models
        .iter()
        .map(|m| {
            levels
                .representative_r
                .iter()
                .map(|&r| m.breakdown.at(r))
                .collect()
        })
        .collect();
    let table = CostTable::from_entries(models.iter().map(|m| m.period_ms).collect(), entries)?;
    for v in &table.violations {
        log::warn!(
            "cost decreases from {} ms to {} ms at level {} ({} -> {})",
            table.periods_ms[v.period_index],
            table.periods_ms[v.period_index + 1],
            v.level + 1,
            v.shorter,
            v.longer
        );
    }
    Ok(table)
}

pub fn build_cost_table(plant: &PlantModel, rates: &RateSet, levels: &LevelSpec) -> Result<CostTable> {
    levels.validate()?;
    let models = design_rates(plant, rates)?;
    cost_table_from_models(&models, levels)
}

/// Average power per period with a fixed energy per control cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub periods_ms: Vec<f64>,
    pub power_mw: Vec<f64>,
    /// Energy per sense-compute-actuate cycle in mJ.
    pub phi_mj: f64,
}

impl PowerTable {
    pub fn phi_joules(&self) -> f64 {
        self.phi_mj / 1000.0
    }
}

pub fn build_power_table(rates: &RateSet, peak_power_mw: f64) -> Result<PowerTable> {
    if !(peak_power_mw > 0.0) || !peak_power_mw.is_finite() {
        return Err(Error::config(
            "peak_power_mw",
            format!("must be positive, got {peak_power_mw}"),
        ));
    }
    let h1 = rates.millis()[0];
    let power_mw = rates
        .millis()
        .iter()
        .enumerate()
        .map(|(i, &h)| if i == 0 { peak_power_mw } else { peak_power_mw * h1 / h })
        .collect();
    Ok(PowerTable {
        periods_ms: rates.millis().to_vec(),
        power_mw,
        phi_mj: peak_power_mw * h1 / 1000.0,
    })
}

/// Cost and energy totals over one budget window for a disturbance pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTotals {
    pub periods_ms: Vec<f64>,
    pub window_s: f64,
    /// Seconds spent at each level.
    pub level_durations: Vec<f64>,
    /// `J[i][j] * T_j`.
    pub cc_total: Vec<Vec<f64>>,
    /// Samples over the full window times φ, in J.
    pub ec_total: Vec<f64>,
    /// Samples over `T_j` times φ, in J.
    pub ec_by_level: Vec<Vec<f64>>,
}

impl WindowTotals {
    pub fn rates(&self) -> usize {
        self.cc_total.len()
    }

    pub fn levels(&self) -> usize {
        self.level_durations.len()
    }
}

pub fn totals_over_window(
    ct: &CostTable,
    pt: &PowerTable,
    pattern: &DisturbancePattern,
    window_s: f64,
) -> Result<WindowTotals> {
    if !(window_s > 0.0) || !window_s.is_finite() {
        return Err(Error::InvalidBudget(format!("window must be positive, got {window_s}")));
    }
    if pattern.levels() != ct.levels() {
        return Err(Error::InvalidPattern(format!(
            "pattern has {} levels, cost table has {}",
            pattern.levels(),
            ct.levels()
        )));
    }
    if pt.periods_ms != ct.periods_ms {
        return Err(Error::Dimension("cost and power tables disagree on periods".into()));
    }
    let phi = pt.phi_joules();
    let level_durations: Vec<f64> = pattern.fractions().iter().map(|f| f * window_s).collect();
    let mut cc_total = Vec::with_capacity(ct.rates());
    let mut ec_total = Vec::with_capacity(ct.rates());
    let mut ec_by_level = Vec::with_capacity(ct.rates());
    for (i, &ms) in ct.periods_ms.iter().enumerate() {
        let h = ms / 1000.0;
        cc_total.push(
            level_durations
                .iter()
                .enumerate()
                .map(|(j, t)| ct.get(i, j) * t)
                .collect(),
        );
        ec_total.push(sample_count(window_s, h) as f64 * phi);
        ec_by_level.push(
            level_durations
                .iter()
                .map(|t| sample_count(*t, h) as f64 * phi)
                .collect(),
        );
    }
    Ok(WindowTotals {
        periods_ms: ct.periods_ms.clone(),
        window_s,
        level_durations,
        cc_total,
        ec_total,
        ec_by_level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitRow {
    pub period_index: usize,
    pub cc_total: f64,
    pub ec_total: f64,
    pub profit: f64,
}

/// One table per level, rows sorted by descending profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitTables {
    pub levels: Vec<Vec<ProfitRow>>,
}

impl ProfitTables {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn rate_count(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }
}

pub fn profit(cc_total: f64, ec_total: f64) -> f64 {
    1.0 / (cc_total * ec_total)
}

pub fn build_profit_tables(totals: &WindowTotals) -> Result<ProfitTables> {
    let n = totals.rates();
    let k = totals.levels();
    let mut levels = Vec::with_capacity(k);
    for j in 0..k {
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let cc = totals.cc_total[i][j];
            let ec = totals.ec_total[i];
            if !(cc > 0.0) || !cc.is_finite() {
                return Err(Error::ProfitUndefined {
                    level: j + 1,
                    period_index: i + 1,
                    reason: "total control cost is zero or non-finite",
                });
            }
            if !(ec > 0.0) || !ec.is_finite() {
                return Err(Error::ProfitUndefined {
                    level: j + 1,
                    period_index: i + 1,
                    reason: "total energy is zero or non-finite",
                });
            }
            rows.push(ProfitRow {
                period_index: i,
                cc_total: cc,
                ec_total: ec,
                profit: profit(cc, ec),
            });
        }
        // Descending profit; equal profits put the longer period first.
        rows.sort_by(|a, b| {
            b.profit
                .total_cmp(&a.profit)
                .then(b.period_index.cmp(&a.period_index))
        });
        levels.push(rows);
    }
    Ok(ProfitTables { levels })
}
