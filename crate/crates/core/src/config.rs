//! JSON run configuration shared by `precompute`, `simulate` and `battery`.
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyBudget;
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::sim::{NoiseScenario, NoiseSegment, RateBank, SimOptions, Strategy, DEFAULT_RVE_LAMBDA};
use crate::synthesis::{candidate_cost_energy, min_energy_for_cost, DisturbancePattern};
use crate::tables::{totals_over_window, LevelSpec, RateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatesConfig {
    List(Vec<f64>),
    Range { start: f64, step: f64, end: f64 },
}

impl RatesConfig {
    pub fn to_rate_set(&self) -> Result<RateSet> {
        match self {
            RatesConfig::List(v) => RateSet::from_millis(v.clone()),
            RatesConfig::Range { start, step, end } => RateSet::arithmetic(*start, *step, *end),
        }
        .map_err(|e| Error::config("rates_ms", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsConfig {
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub representative_r: Option<Vec<f64>>,
}

impl LevelsConfig {
    pub fn to_spec(&self) -> Result<LevelSpec> {
        match &self.representative_r {
            Some(r) => LevelSpec::new(self.thresholds.clone(), r.clone()),
            None => LevelSpec::with_midpoints(self.thresholds.clone()),
        }
        .map_err(|e| Error::config("levels", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetConfig {
    /// Fixed energy per window, J.
    EnergyJ(f64),
    /// Smallest window energy at which the adaptive controller's predicted
    /// cost on the nominal pattern is no worse than this uniform period.
    MatchFixedMs(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioConfig {
    Path(PathBuf),
    Inline {
        segments: Vec<NoiseSegment>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        repeat: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub capacity_mah: f64,
    pub voltage_v: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            capacity_mah: 1000.0,
            voltage_v: 3.7,
        }
    }
}

fn default_lambda() -> f64 {
    DEFAULT_RVE_LAMBDA
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    /// Plant JSON; omitted means the built-in DC servo.
    #[serde(default)]
    pub plant: Option<PathBuf>,
    pub rates_ms: RatesConfig,
    pub levels: LevelsConfig,
    pub peak_power_mw: f64,
    pub hyper_period_s: f64,
    /// Nominal level shares. Used for profit tables and budget matching.
    #[serde(default)]
    pub pattern: Option<DisturbancePattern>,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_lambda")]
    pub rve_lambda: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ToolConfig {
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ToolConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            field: "<root>".into(),
            message: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.rates()?;
        let levels = self.level_spec()?;
        if !(self.peak_power_mw > 0.0) || !self.peak_power_mw.is_finite() {
            return Err(Error::config("peak_power_mw", "must be positive and finite"));
        }
        if !(self.hyper_period_s > 0.0) || !self.hyper_period_s.is_finite() {
            return Err(Error::config("hyper_period_s", "must be positive and finite"));
        }
        if let Some(p) = &self.pattern {
            if p.levels() != levels.count() {
                return Err(Error::config(
                    "pattern",
                    format!("{} shares for {} levels", p.levels(), levels.count()),
                ));
            }
        }
        match self.budget {
            Some(BudgetConfig::EnergyJ(e)) if !(e > 0.0) => {
                return Err(Error::config("budget.energy_j", "must be positive"));
            }
            Some(BudgetConfig::MatchFixedMs(ms)) if self.rates()?.index_of_millis(ms).is_none() => {
                return Err(Error::config(
                    "budget.match_fixed_ms",
                    format!("{ms} ms is not in rates_ms"),
                ));
            }
            _ => {}
        }
        if let Some(Strategy::Fixed { period_ms }) = self.strategy {
            if self.rates()?.index_of_millis(period_ms).is_none() {
                return Err(Error::config(
                    "strategy.fixed.period_ms",
                    format!("{period_ms} ms is not in rates_ms"),
                ));
            }
        }
        if !(self.rve_lambda > 0.0 && self.rve_lambda <= 1.0) {
            return Err(Error::config("rve_lambda", "must lie in (0, 1]"));
        }
        if !(self.battery.capacity_mah > 0.0) || !(self.battery.voltage_v > 0.0) {
            return Err(Error::config("battery", "capacity and voltage must be positive"));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn plant_path(&self) -> Option<PathBuf> {
        self.plant.as_deref().map(|p| self.resolve(p))
    }

    /// The plant and the bytes it was loaded from (for provenance).
    pub fn load_plant(&self) -> Result<(PlantModel, Vec<u8>)> {
        match self.plant_path() {
            Some(path) => {
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok((PlantModel::from_path(&path)?, bytes))
            }
            None => {
                let plant = PlantModel::dc_servo();
                let bytes = serde_json::to_vec(&plant.to_spec()).expect("plant spec serializes");
                Ok((plant, bytes))
            }
        }
    }

    pub fn rates(&self) -> Result<RateSet> {
        self.rates_ms.to_rate_set()
    }

    pub fn level_spec(&self) -> Result<LevelSpec> {
        self.levels.to_spec()
    }

    pub fn load_scenario(&self, seed_override: Option<u64>) -> Result<NoiseScenario> {
        let mut scenario = match &self.scenario {
            None => return Err(Error::config("scenario", "required for simulation")),
            Some(ScenarioConfig::Path(p)) => NoiseScenario::from_path(&self.resolve(p))?,
            Some(ScenarioConfig::Inline {
                segments,
                seed,
                repeat,
            }) => {
                if *repeat == 0 {
                    return Err(Error::config("scenario.repeat", "must be at least 1"));
                }
                let all = (0..*repeat).flat_map(|_| segments.iter().copied()).collect();
                NoiseScenario::new(all, *seed)?
            }
        };
        if let Some(seed) = seed_override.or(self.seed) {
            scenario.seed = seed;
        }
        Ok(scenario)
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy
            .ok_or_else(|| Error::config("strategy", "required for simulation"))
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            rve_lambda: self.rve_lambda,
            sample_stride: self.sample_stride,
            ..SimOptions::default()
        }
    }

    /// Configured pattern, or the time share of each level under the
    /// scenario's true intensities.
    pub fn nominal_pattern(&self, levels: &LevelSpec, scenario: Option<&NoiseScenario>) -> Result<DisturbancePattern> {
        if let Some(p) = &self.pattern {
            return Ok(p.clone());
        }
        let scenario = scenario.ok_or_else(|| {
            Error::config("pattern", "required when no scenario is given")
        })?;
        let mut durations = vec![0.0; levels.count()];
        for s in &scenario.segments {
            durations[levels.classify(s.r)] += s.duration_s;
        }
        DisturbancePattern::from_durations(&durations)
    }

    pub fn resolve_budget(&self, bank: &RateBank, pattern: &DisturbancePattern) -> Result<EnergyBudget> {
        let window = self.hyper_period_s;
        match self.budget {
            None => Err(Error::config("budget", "required")),
            Some(BudgetConfig::EnergyJ(e)) => EnergyBudget::new(e, window),
            Some(BudgetConfig::MatchFixedMs(ms)) => {
                let i = bank
                    .rates
                    .index_of_millis(ms)
                    .ok_or(Error::UnknownPeriod(ms))?;
                let totals = totals_over_window(&bank.cost_table, &bank.power_table, pattern, window)?;
                let (fixed_cost, _) = candidate_cost_energy(&vec![i; bank.levels.count()], &totals);
                let energy = min_energy_for_cost(&totals, fixed_cost)
                    .expect("the uniform candidate itself reaches its own cost");
                EnergyBudget::new(energy, window)
            }
        }
    }
}
