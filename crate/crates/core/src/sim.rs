//! On-line regulation loop: the plant runs under noise of time-varying
//! intensity, a residual-variance estimator tracks the intensity from the
//! Kalman innovations, each sample is classified into a disturbance level,
//! and at every hyper-period boundary the multi-rate controller for the next
//! window is re-synthesized from the level shares just observed.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBudget, ExecutionPattern, Segment};
use crate::error::{Error, Result};
use crate::linalg::{inverse, psd_sqrt};
use crate::plant::PlantModel;
use crate::synthesis::{synthesize, Algorithm, DisturbancePattern, MultiRateController};
use crate::tables::{
    build_power_table, cost_table_from_models, design_rates, totals_over_window, CostTable,
    LevelSpec, PowerTable, RateModel, RateSet,
};

/// Default EWMA weight of the intensity estimator, per sample.
pub const DEFAULT_RVE_LAMBDA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSegment {
    pub duration_s: f64,
    pub r: f64,
}

/// Piecewise-constant true noise intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseScenario {
    pub segments: Vec<NoiseSegment>,
    pub seed: u64,
}

#[derive(Deserialize)]
struct ScenarioFile {
    segments: Vec<NoiseSegment>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    repeat: usize,
}

fn one() -> usize {
    1
}

impl NoiseScenario {
    pub fn new(segments: Vec<NoiseSegment>, seed: u64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidScenario("no segments".into()));
        }
        for s in &segments {
            if !(s.duration_s > 0.0) || !s.duration_s.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "segment duration must be positive, got {}",
                    s.duration_s
                )));
            }
            if !(s.r >= 0.0) || !s.r.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "intensity must be non-negative, got {}",
                    s.r
                )));
            }
        }
        Ok(Self { segments, seed })
    }

    /// Each window of `window_s` split into one segment per level, at the
    /// level's representative intensity, repeated `windows` times.
    pub fn from_level_shares(
        shares: &DisturbancePattern,
        levels: &LevelSpec,
        window_s: f64,
        windows: usize,
        seed: u64,
    ) -> Result<Self> {
        if shares.levels() != levels.count() {
            return Err(Error::InvalidScenario("share count differs from level count".into()));
        }
        let one_window: Vec<NoiseSegment> = shares
            .fractions()
            .iter()
            .zip(&levels.representative_r)
            .filter(|(f, _)| **f > 0.0)
            .map(|(f, r)| NoiseSegment {
                duration_s: f * window_s,
                r: *r,
            })
            .collect();
        let segments = (0..windows).flat_map(|_| one_window.iter().copied()).collect();
        Self::new(segments, seed)
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if file.repeat == 0 {
            return Err(Error::InvalidScenario("repeat must be at least 1".into()));
        }
        let segments = (0..file.repeat)
            .flat_map(|_| file.segments.iter().copied())
            .collect();
        Self::new(segments, file.seed)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }
}

/// Exponentially weighted residual-variance estimate of the noise intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RveState {
    pub r_hat: f64,
    pub lambda: f64,
    /// Innovation variance at unit intensity for the active rate.
    pub sigma_nom_sq: f64,
}

impl RveState {
    pub fn new(lambda: f64, sigma_nom_sq: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::config("rve_lambda", format!("must lie in (0, 1], got {lambda}")));
        }
        if !(sigma_nom_sq > 0.0) {
            return Err(Error::config(
                "sigma_nom_sq",
                format!("must be positive, got {sigma_nom_sq}"),
            ));
        }
        Ok(Self {
            r_hat: 0.0,
            lambda,
            sigma_nom_sq,
        })
    }

    /// Folds in an already-normalized squared innovation.
    pub fn update_normalized(&mut self, normalized_sq: f64) {
        self.r_hat = (1.0 - self.lambda) * self.r_hat + self.lambda * normalized_sq;
    }

    pub fn update(&mut self, innovation: f64) {
        self.update_normalized(innovation * innovation / self.sigma_nom_sq);
    }
}

pub fn rve_update(mut state: RveState, innovation: f64) -> RveState {
    state.update(innovation);
    state
}

/// Everything the loop needs per rate, precomputed once.
#[derive(Debug, Clone)]
pub struct RateBank {
    pub rates: RateSet,
    pub levels: LevelSpec,
    pub models: Vec<RateModel>,
    pub cost_table: CostTable,
    pub power_table: PowerTable,
}

impl RateBank {
    pub fn build(
        plant: &PlantModel,
        rates: RateSet,
        levels: LevelSpec,
        peak_power_mw: f64,
    ) -> Result<Self> {
        levels.validate()?;
        let models = design_rates(plant, &rates)?;
        let cost_table = cost_table_from_models(&models, &levels)?;
        let power_table = build_power_table(&rates, peak_power_mw)?;
        Ok(Self {
            rates,
            levels,
            models,
            cost_table,
            power_table,
        })
    }

    pub fn sigma_nom_sq(&self) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| m.controller.innovation_cov[(0, 0)])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One period for the whole run.
    Fixed { period_ms: f64 },
    /// Re-synthesized every hyper-period.
    Adaptive { algorithm: Algorithm },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rve_lambda: f64,
    /// Keep one sample event out of every `sample_stride`; 0 keeps none.
    pub sample_stride: usize,
    /// Spacing of the cost/energy series used for plot output.
    pub series_interval_s: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rve_lambda: DEFAULT_RVE_LAMBDA,
            sample_stride: 1,
            series_interval_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Sample {
        t: f64,
        h_ms: f64,
        r: f64,
        r_hat: f64,
        level: usize,
        energy_j: f64,
        cost: f64,
    },
    LevelChange {
        t: f64,
        from: usize,
        to: usize,
        h_ms: f64,
    },
    WindowBoundary {
        t: f64,
        window: usize,
        level_time_s: Vec<f64>,
        pattern: Vec<f64>,
        window_energy_j: f64,
        window_cost: f64,
    },
    Synthesis {
        t: f64,
        window: usize,
        algorithm: Algorithm,
        choice: Vec<usize>,
        periods_ms: Vec<f64>,
        predicted_cost: f64,
        predicted_energy_j: f64,
        explored: u64,
        feasible: bool,
        fallback: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub cost_integral: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub index: usize,
    pub end_s: f64,
    pub pattern: Vec<f64>,
    pub energy_j: f64,
    /// Controller deployed for the following window, if re-synthesized.
    pub next_controller: Option<MultiRateController>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub duration_s: f64,
    pub samples: u64,
    pub energy_j: f64,
    pub cost_integral: f64,
    pub avg_cost: f64,
    pub avg_power_mw: f64,
    pub flagged_windows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub events: Vec<TraceEvent>,
    pub windows: Vec<WindowRecord>,
    pub realized: ExecutionPattern,
    /// Level classified at each realized segment's samples, as counts.
    pub series: Vec<SeriesPoint>,
    pub summary: SimSummary,
}

impl SimulationTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Row-major dense block for the per-sample arithmetic.
#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// `out = self * x` (or `out += self * x` when `accumulate`).
    fn apply(&self, x: &[f64], out: &mut [f64], accumulate: bool) {
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if accumulate {
                out[i] += v;
            } else {
                out[i] = v;
            }
        }
    }

    fn quadratic(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let v: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
            acc += z[i] * v;
        }
        acc
    }
}

struct RateRuntime {
    h: f64,
    phi: Dense,
    gamma: Dense,
    feedback: Dense,
    kalman_gain: Dense,
    noise_root: Dense,
    qd: Dense,
    noise_cost: f64,
    innovation_inv: Dense,
    sigma_nom_sq: f64,
}

impl RateRuntime {
    fn new(model: &RateModel) -> Result<Self> {
        let c = &model.controller;
        let d = &c.discrete;
        Ok(Self {
            h: c.h,
            phi: Dense::from(&d.phi),
            gamma: Dense::from(&d.gamma),
            feedback: Dense::from(&c.feedback),
            kalman_gain: Dense::from(&c.kalman_gain),
            noise_root: Dense::from(&psd_sqrt(&d.r1d)),
            qd: Dense::from(&d.qd),
            noise_cost: d.noise_cost,
            innovation_inv: Dense::from(&inverse(&c.innovation_cov, "innovation covariance")?),
            sigma_nom_sq: c.innovation_cov[(0, 0)],
        })
    }
}

struct Cursor<'a> {
    segments: &'a [NoiseSegment],
    index: usize,
    end: f64,
}

impl<'a> Cursor<'a> {
    fn new(segments: &'a [NoiseSegment]) -> Self {
        Self {
            segments,
            index: 0,
            end: segments[0].duration_s,
        }
    }

    fn intensity(&mut self, t: f64) -> f64 {
        while t >= self.end - 1e-9 && self.index + 1 < self.segments.len() {
            self.index += 1;
            self.end += self.segments[self.index].duration_s;
        }
        self.segments[self.index].r
    }
}

pub fn simulate(
    plant: &PlantModel,
    bank: &RateBank,
    scenario: &NoiseScenario,
    budget: &EnergyBudget,
    hyper_period_s: f64,
    strategy: Strategy,
    options: &SimOptions,
) -> Result<SimulationTrace> {
    if !(hyper_period_s > 0.0) {
        return Err(Error::config("hyper_period_s", "must be positive"));
    }
    if (budget.window_s - hyper_period_s).abs() > 1e-9 * hyper_period_s {
        return Err(Error::config(
            "budget_window_s",
            format!(
                "budget window {} s must equal the hyper-period {} s",
                budget.window_s, hyper_period_s
            ),
        ));
    }
    let horizon = scenario.duration();
    if horizon < hyper_period_s - 1e-9 {
        return Err(Error::InvalidScenario(format!(
            "scenario lasts {horizon} s, shorter than one hyper-period ({hyper_period_s} s)"
        )));
    }
    let n = bank.rates.len();
    let k = bank.levels.count();
    let nx = plant.nx();
    let nu = plant.nu();
    let ny = plant.ny();
    let runtimes = bank
        .models
        .iter()
        .map(RateRuntime::new)
        .collect::<Result<Vec<_>>>()?;
    let measurement_root = Dense::from(&psd_sqrt(plant.r2()));
    let output = Dense::from(plant.c());
    let phi_j = bank.power_table.phi_joules();

    let mut controller = match strategy {
        Strategy::Fixed { period_ms } => {
            let i = bank
                .rates
                .index_of_millis(period_ms)
                .ok_or(Error::UnknownPeriod(period_ms))?;
            MultiRateController::uniform(i, k)
        }
        Strategy::Adaptive { .. } => MultiRateController::uniform(0, k),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut cursor = Cursor::new(&scenario.segments);
    let mut level = 0usize;
    let mut active = controller.period_index(level);
    let mut rve = RveState::new(options.rve_lambda, runtimes[active].sigma_nom_sq)?;

    let mut x = vec![0.0; nx];
    let mut x_pred = vec![0.0; nx];
    let mut x_est = vec![0.0; nx];
    let mut y = vec![0.0; ny];
    let mut nu_buf = vec![0.0; ny];
    let mut white_y = vec![0.0; ny];
    let mut white_x = vec![0.0; nx];
    let mut u = vec![0.0; nu];
    let mut xu = vec![0.0; nx + nu];
    let mut tmp = vec![0.0; nx];
    let mut s_nu = vec![0.0; ny];

    let mut t = 0.0_f64;
    let mut samples = 0u64;
    let mut energy = 0.0_f64;
    let mut cost = 0.0_f64;
    let mut window = 0usize;
    let mut window_end = hyper_period_s;
    let mut window_energy_start = 0.0;
    let mut window_cost_start = 0.0;
    let mut level_time = vec![0.0; k];
    let mut events = Vec::new();
    let mut windows = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut seg_count = 0u64;
    let mut series = vec![SeriesPoint {
        t: 0.0,
        cost_integral: 0.0,
        energy_j: 0.0,
    }];
    let mut next_series = options.series_interval_s;
    let mut flagged_windows = 0usize;

    while t < horizon - 1e-9 {
        let rt = &runtimes[active];
        let r = cursor.intensity(t);

        for w in white_y.iter_mut() {
            *w = StandardNormal.sample(&mut rng);
        }
        for w in white_x.iter_mut() {
            *w = StandardNormal.sample(&mut rng);
        }

        // Measure and correct.
        output.apply(&x, &mut y, false);
        measurement_root.apply(&white_y, &mut y, true);
        output.apply(&x_pred, &mut nu_buf, false);
        for (v, yi) in nu_buf.iter_mut().zip(&y) {
            *v = yi - *v;
        }
        if ny == 1 {
            rve.update(nu_buf[0]);
        } else {
            rt.innovation_inv.apply(&nu_buf, &mut s_nu, false);
            let q: f64 = nu_buf.iter().zip(&s_nu).map(|(a, b)| a * b).sum();
            rve.update_normalized(q / ny as f64);
        }
        x_est.copy_from_slice(&x_pred);
        rt.kalman_gain.apply(&nu_buf, &mut x_est, true);
        rt.feedback.apply(&x_est, &mut u, false);
        for v in u.iter_mut() {
            *v = -*v;
        }

        // Cost over the coming period, then energy for this cycle.
        xu[..nx].copy_from_slice(&x);
        xu[nx..].copy_from_slice(&u);
        cost += rt.qd.quadratic(&xu) + r * rt.noise_cost;
        energy += phi_j;
        samples += 1;
        seg_count += 1;

        // Propagate plant and prediction.
        rt.phi.apply(&x, &mut tmp, false);
        rt.gamma.apply(&u, &mut tmp, true);
        let scale = r.sqrt();
        for w in white_x.iter_mut() {
            *w *= scale;
        }
        rt.noise_root.apply(&white_x, &mut tmp, true);
        x.copy_from_slice(&tmp);
        rt.phi.apply(&x_est, &mut x_pred, false);
        rt.gamma.apply(&u, &mut x_pred, true);

        let h = rt.h;
        let h_ms = bank.rates.millis()[active];
        level_time[level] += h;
        t += h;

        if options.sample_stride > 0 && (samples - 1) % options.sample_stride as u64 == 0 {
            events.push(TraceEvent::Sample {
                t,
                h_ms,
                r,
                r_hat: rve.r_hat,
                level,
                energy_j: energy,
                cost,
            });
        }
        while t >= next_series - 1e-9 {
            series.push(SeriesPoint {
                t,
                cost_integral: cost,
                energy_j: energy,
            });
            next_series += options.series_interval_s;
        }

        let new_level = bank.levels.classify(rve.r_hat);
        let mut switch_to = controller.period_index(new_level);
        if new_level != level {
            events.push(TraceEvent::LevelChange {
                t,
                from: level,
                to: new_level,
                h_ms: bank.rates.millis()[switch_to],
            });
            level = new_level;
        }

        if t >= window_end - 1e-9 {
            let pattern = DisturbancePattern::from_durations(&level_time)?;
            events.push(TraceEvent::WindowBoundary {
                t,
                window,
                level_time_s: level_time.clone(),
                pattern: pattern.fractions().to_vec(),
                window_energy_j: energy - window_energy_start,
                window_cost: cost - window_cost_start,
            });
            let mut record = WindowRecord {
                index: window,
                end_s: t,
                pattern: pattern.fractions().to_vec(),
                energy_j: energy - window_energy_start,
                next_controller: None,
                flagged: false,
            };
            if let Strategy::Adaptive { algorithm } = strategy {
                let totals = totals_over_window(
                    &bank.cost_table,
                    &bank.power_table,
                    &pattern,
                    hyper_period_s,
                )?;
                let result = synthesize(algorithm, &totals, budget)?;
                let fallback = !result.feasible;
                controller = if fallback {
                    flagged_windows += 1;
                    record.flagged = true;
                    MultiRateController::uniform(n - 1, k)
                } else {
                    result.controller.clone()
                };
                events.push(TraceEvent::Synthesis {
                    t,
                    window,
                    algorithm,
                    choice: result.controller.choice.clone(),
                    periods_ms: result.periods_ms.clone(),
                    predicted_cost: result.predicted_cost,
                    predicted_energy_j: result.predicted_energy_j,
                    explored: result.explored,
                    feasible: result.feasible,
                    fallback,
                });
                record.next_controller = Some(controller.clone());
                switch_to = controller.period_index(level);
            }
            windows.push(record);
            window += 1;
            window_end += hyper_period_s;
            window_energy_start = energy;
            window_cost_start = cost;
            level_time.iter_mut().for_each(|v| *v = 0.0);
        }

        if switch_to != active {
            segments.push(Segment {
                duration_s: seg_count as f64 * runtimes[active].h,
                period_s: runtimes[active].h,
            });
            seg_count = 0;
            active = switch_to;
            rve.sigma_nom_sq = runtimes[active].sigma_nom_sq;
        }
    }
    if seg_count > 0 {
        segments.push(Segment {
            duration_s: seg_count as f64 * runtimes[active].h,
            period_s: runtimes[active].h,
        });
    }

    let summary = SimSummary {
        duration_s: t,
        samples,
        energy_j: energy,
        cost_integral: cost,
        avg_cost: cost / t,
        avg_power_mw: energy / t * 1000.0,
        flagged_windows,
    };
    Ok(SimulationTrace {
        events,
        windows,
        realized: ExecutionPattern { segments },
        series,
        summary,
    })
}
