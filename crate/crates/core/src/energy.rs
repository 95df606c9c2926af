//! Energy accounting for execution patterns, budgets, and an ideal battery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::CostTable;

/// Slack applied before flooring `T / h` so exact multiples that picked up
/// rounding error (for example `0.7 * 100 / 0.01`) are not undercounted.
const FLOOR_SLACK: f64 = 1e-9;

/// Number of complete control cycles of period `period_s` within `duration_s`.
pub fn sample_count(duration_s: f64, period_s: f64) -> u64 {
    if !(duration_s > 0.0) {
        return 0;
    }
    let q = duration_s / period_s;
    (q + FLOOR_SLACK * q.max(1.0)).floor() as u64
}

/// At most `max_energy_j` joules over the next `window_s` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub max_energy_j: f64,
    pub window_s: f64,
}

impl EnergyBudget {
    pub fn new(max_energy_j: f64, window_s: f64) -> Result<Self> {
        if !(max_energy_j > 0.0) {
            return Err(Error::InvalidBudget(format!(
                "energy must be positive, got {max_energy_j}"
            )));
        }
        if !(window_s > 0.0) || !window_s.is_finite() {
            return Err(Error::InvalidBudget(format!(
                "window must be positive and finite, got {window_s}"
            )));
        }
        Ok(Self {
            max_energy_j,
            window_s,
        })
    }

    /// A budget no candidate can exceed.
    pub fn unconstrained(window_s: f64) -> Self {
        Self {
            max_energy_j: f64::INFINITY,
            window_s,
        }
    }

    pub fn admits(&self, energy_j: f64) -> bool {
        energy_j <= self.max_energy_j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    pub period_s: f64,
}

/// Maximal uniform-rate intervals of a multi-rate execution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecutionPattern {
    pub segments: Vec<Segment>,
}

impl ExecutionPattern {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidPattern("execution pattern has no segments".into()));
        }
        for s in &segments {
            if !(s.duration_s > 0.0) || !(s.period_s > 0.0) {
                return Err(Error::InvalidPattern(format!(
                    "segment durations and periods must be positive: {s:?}"
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }
}

/// Time-weighted average cost `Σ J(h_j, l_j) T_j / τ`.
pub fn pattern_cost(pattern: &ExecutionPattern, ct: &CostTable, levels: &[usize]) -> Result<f64> {
    if levels.len() != pattern.segments.len() {
        return Err(Error::Dimension(format!(
            "{} levels for {} segments",
            levels.len(),
            pattern.segments.len()
        )));
    }
    let mut weighted = 0.0;
    for (seg, &level) in pattern.segments.iter().zip(levels) {
        let ms = seg.period_s * 1000.0;
        let i = ct.index_of_millis(ms).ok_or(Error::UnknownPeriod(ms))?;
        if level >= ct.levels() {
            return Err(Error::Dimension(format!("level {} out of range", level + 1)));
        }
        weighted += ct.get(i, level) * seg.duration_s;
    }
    Ok(weighted / pattern.total_duration())
}

/// `Σ ⌊T_j / h_j⌋ φ` in joules, with `φ` in mJ.
pub fn pattern_energy(pattern: &ExecutionPattern, phi_mj: f64) -> f64 {
    let samples: u64 = pattern
        .segments
        .iter()
        .map(|s| sample_count(s.duration_s, s.period_s))
        .sum();
    samples as f64 * phi_mj / 1000.0
}

/// Ideal linear battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_mah: f64,
    pub voltage_v: f64,
    pub level_j: f64,
}

impl Battery {
    pub fn full(capacity_mah: f64, voltage_v: f64) -> Result<Self> {
        if !(capacity_mah > 0.0) || !(voltage_v > 0.0) {
            return Err(Error::config(
                "battery",
                "capacity and voltage must be positive",
            ));
        }
        Ok(Self {
            capacity_mah,
            voltage_v,
            level_j: Self::energy_j(capacity_mah, voltage_v),
        })
    }

    /// mAh * V * 3.6 = J
    pub fn energy_j(capacity_mah: f64, voltage_v: f64) -> f64 {
        capacity_mah * voltage_v * 3.6
    }

    pub fn capacity_j(&self) -> f64 {
        Self::energy_j(self.capacity_mah, self.voltage_v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DischargeTrace {
    /// `(time s, remaining J)` samples.
    pub points: Vec<(f64, f64)>,
    /// `None` when the drain is zero.
    pub depletion_s: Option<f64>,
}

/// Coulomb-counting drain at constant average power over `horizon_s`,
/// sampled at `samples + 1` evenly spaced instants.
pub fn battery_discharge(
    battery: &Battery,
    avg_power_mw: f64,
    horizon_s: f64,
    samples: usize,
) -> Result<DischargeTrace> {
    if !(avg_power_mw >= 0.0) {
        return Err(Error::InvalidBudget(format!(
            "average power must be non-negative, got {avg_power_mw}"
        )));
    }
    let watts = avg_power_mw / 1000.0;
    let depletion_s = (watts > 0.0).then(|| battery.level_j / watts);
    let steps = samples.max(1);
    let points = (0..=steps)
        .map(|s| {
            let t = horizon_s * s as f64 / steps as f64;
            (t, (battery.level_j - watts * t).max(0.0))
        })
        .collect();
    Ok(DischargeTrace {
        points,
        depletion_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(duration_s: f64, period_ms: f64) -> Segment {
        Segment {
            duration_s,
            period_s: period_ms / 1000.0,
        }
    }

    #[test]
    fn floor_sum_energy() {
        let one = ExecutionPattern::new(vec![seg(100.0, 10.0)]).unwrap();
        assert!((pattern_energy(&one, 1.0) - 10.0).abs() < 1e-12);

        let short = ExecutionPattern::new(vec![seg(0.015, 10.0)]).unwrap();
        assert!((pattern_energy(&short, 1.0) - 0.001).abs() < 1e-15);

        let mixed =
            ExecutionPattern::new(vec![seg(70.0, 10.0), seg(10.0, 50.0), seg(20.0, 90.0)]).unwrap();
        assert!((pattern_energy(&mixed, 1.0) - 7.422).abs() < 1e-12);
    }

    #[test]
    fn sample_count_is_exact_on_multiples() {
        assert_eq!(sample_count(0.7 * 100.0, 0.01), 7000);
        assert_eq!(sample_count(100.0, 0.09), 1111);
        assert_eq!(sample_count(0.0, 0.01), 0);
    }

    #[test]
    fn pattern_cost_weights() {
        let ct = CostTable::from_entries(vec![10.0, 20.0], vec![vec![2.0], vec![4.0]]).unwrap();
        let single = ExecutionPattern::new(vec![seg(3.0, 20.0)]).unwrap();
        assert_eq!(pattern_cost(&single, &ct, &[0]).unwrap(), 4.0);
        let two = ExecutionPattern::new(vec![seg(5.0, 10.0), seg(5.0, 20.0)]).unwrap();
        assert_eq!(pattern_cost(&two, &ct, &[0, 0]).unwrap(), 3.0);
        let unknown = ExecutionPattern::new(vec![seg(5.0, 15.0)]).unwrap();
        assert!(matches!(
            pattern_cost(&unknown, &ct, &[0]),
            Err(Error::UnknownPeriod(_))
        ));
    }

    #[test]
    fn battery_linear_drain() {
        let b = Battery::full(1000.0, 3.7).unwrap();
        assert!((b.level_j - 13320.0).abs() < 1e-9);
        let idle = battery_discharge(&b, 0.0, 1000.0, 4).unwrap();
        assert!(idle.depletion_s.is_none());
        assert!(idle.points.iter().all(|p| p.1 == b.level_j));

        let fast = battery_discharge(&b, 20.0, 1000.0, 4).unwrap();
        let slow = battery_discharge(&b, 10.0, 1000.0, 4).unwrap();
        let (tf, ts) = (fast.depletion_s.unwrap(), slow.depletion_s.unwrap());
        assert!((ts - 2.0 * tf).abs() < 1e-6);
        assert!(battery_discharge(&b, -1.0, 10.0, 1).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(EnergyBudget::new(0.0, 100.0).is_err());
        assert!(EnergyBudget::new(1.0, 0.0).is_err());
        assert!(EnergyBudget::new(1.0, 100.0).unwrap().admits(1.0));
        assert!(EnergyBudget::unconstrained(100.0).admits(1e300));
    }
}
