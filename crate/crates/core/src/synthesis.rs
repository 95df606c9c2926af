//! Selection of a multi-rate controller (one period per disturbance level)
//! under an energy budget.
//!
//! Three searches over the `n^k` lattice of period-index vectors:
//!
//! * [`exhaustive`] evaluates every vector.
//! * [`approach1`] applies the two dominance rules. Period indices grow with
//!   the period, so energy is non-increasing and cost non-decreasing along
//!   every coordinate. An over-budget vector therefore rules out everything
//!   component-wise below it, and a within-budget vector rules out everything
//!   component-wise above it.
//! * [`approach2`] walks the product of the per-level profit-sorted tables in
//!   best-first order of summed profit and stops at the first vector that
//!   fits the budget.
//!
//! All three break cost ties toward the lexicographically smallest vector.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyBudget;
use crate::error::{Error, Result};
use crate::tables::{build_profit_tables, ProfitTables, WindowTotals};

/// Share of the window spent at each disturbance level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DisturbancePattern {
    fractions: Vec<f64>,
}

impl DisturbancePattern {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::InvalidPattern("no levels".into()));
        }
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidPattern(format!(
                "fractions must be finite and non-negative: {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPattern(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(Self { fractions })
    }

    /// Normalizes per-level durations into shares.
    pub fn from_durations(durations: &[f64]) -> Result<Self> {
        let total: f64 = durations.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPattern("no time accumulated".into()));
        }
        let mut fractions: Vec<f64> = durations.iter().map(|d| d / total).collect();
        // Push the rounding remainder onto the largest share.
        let drift = 1.0 - fractions.iter().sum::<f64>();
        if let Some(big) = fractions
            .iter_mut()
            .max_by(|a, b| a.total_cmp(b))
        {
            *big += drift;
        }
        Self::new(fractions)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn levels(&self) -> usize {
        self.fractions.len()
    }
}

impl TryFrom<Vec<f64>> for DisturbancePattern {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DisturbancePattern> for Vec<f64> {
    fn from(p: DisturbancePattern) -> Self {
        p.fractions
    }
}

impl FromStr for DisturbancePattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let fractions = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidPattern(format!("`{t}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(fractions)
    }
}

/// `choice[j]` is the zero-based period index used at level `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiRateController {
    pub choice: Vec<usize>,
}

impl MultiRateController {
    pub fn new(choice: Vec<usize>, rates: usize) -> Result<Self> {
        if choice.is_empty() || choice.iter().any(|&c| c >= rates) {
            return Err(Error::Dimension(format!(
                "controller {choice:?} out of range for {rates} rates"
            )));
        }
        Ok(Self { choice })
    }

    pub fn uniform(index: usize, levels: usize) -> Self {
        Self {
            choice: vec![index; levels],
        }
    }

    pub fn period_index(&self, level: usize) -> usize {
        self.choice[level]
    }

    pub fn periods_ms(&self, periods_ms: &[f64]) -> Vec<f64> {
        self.choice.iter().map(|&i| periods_ms[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exhaustive,
    Approach1,
    Approach2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Exhaustive,
        Algorithm::Approach1,
        Algorithm::Approach2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Exhaustive => "exhaustive",
            Algorithm::Approach1 => "approach1",
            Algorithm::Approach2 => "approach2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Algorithm::Exhaustive),
            "approach1" => Ok(Algorithm::Approach1),
            "approach2" => Ok(Algorithm::Approach2),
            other => Err(Error::config(
                "algo",
                format!("unknown algorithm `{other}` (expected exhaustive, approach1 or approach2)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub algorithm: Algorithm,
    pub controller: MultiRateController,
    pub periods_ms: Vec<f64>,
    pub predicted_cost: f64,
    pub predicted_energy_j: f64,
    pub explored: u64,
    pub elapsed_s: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SynthesisResult {
    /// Same outcome, ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.controller == other.controller
            && self.predicted_cost == other.predicted_cost
            && self.predicted_energy_j == other.predicted_energy_j
            && self.explored == other.explored
            && self.feasible == other.feasible
    }
}

/// Window-average cost and energy (J) of one candidate.
pub fn candidate_cost_energy(choice: &[usize], totals: &WindowTotals) -> (f64, f64) {
    let mut cc = 0.0;
    let mut energy = 0.0;
    for (j, &i) in choice.iter().enumerate() {
        cc += totals.cc_total[i][j];
        energy += totals.ec_by_level[i][j];
    }
    (cc / totals.window_s, energy)
}

#[derive(Debug, Clone)]
struct Incumbent {
    choice: Vec<usize>,
    cost: f64,
    energy: f64,
}

impl Incumbent {
    fn beats(&self, other: &Incumbent) -> bool {
        match self.cost.total_cmp(&other.cost) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.choice < other.choice,
        }
    }
}

fn offer(best: &mut Option<Incumbent>, cand: Incumbent) {
    match best {
        Some(b) if !cand.beats(b) => {}
        _ => *best = Some(cand),
    }
}

fn finish(
    algorithm: Algorithm,
    totals: &WindowTotals,
    best: Option<Incumbent>,
    explored: u64,
    started: Instant,
) -> SynthesisResult {
    let (choice, cost, energy, feasible) = match best {
        Some(b) => (b.choice, b.cost, b.energy, true),
        None => {
            let fallback = vec![totals.rates() - 1; totals.levels()];
            let (c, e) = candidate_cost_energy(&fallback, totals);
            (fallback, c, e, false)
        }
    };
    let controller = MultiRateController { choice };
    SynthesisResult {
        algorithm,
        periods_ms: controller.periods_ms(&totals.periods_ms),
        controller,
        predicted_cost: cost,
        predicted_energy_j: energy,
        explored,
        elapsed_s: started.elapsed().as_secs_f64(),
        feasible,
        notes: Vec::new(),
    }
}

/// Advances `digits` as a base-`n` odometer, most significant first.
fn next_vector(digits: &mut [usize], n: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < n {
            return true;
        }
        *d = 0;
    }
    false
}

pub fn exhaustive(totals: &WindowTotals, budget: &EnergyBudget) -> SynthesisResult {
    let started = Instant::now();
    let n = totals.rates();
    let k = totals.levels();
    let mut best: Option<Incumbent> = None;
    let mut explored = 0u64;
    let mut choice = vec![0usize; k];
    loop {
        let (cost, energy) = candidate_cost_energy(&choice, totals);
        explored += 1;
        if budget.admits(energy) {
            // Lexicographic visiting order makes the first of equal-cost
            // candidates the smallest vector.
            let better = best.as_ref().is_none_or(|b| cost < b.cost);
            if better {
                best = Some(Incumbent {
                    choice: choice.clone(),
                    cost,
                    energy,
                });
            }
        }
        if !next_vector(&mut choice, n) {
            break;
        }
    }
    finish(Algorithm::Exhaustive, totals, best, explored, started)
}

/// Whether the dominance rules are sound for these totals: along every
/// level, cost must not fall and energy must not rise as the period grows.
pub fn dominance_sound(totals: &WindowTotals) -> bool {
    (1..totals.rates()).all(|i| {
        (0..totals.levels()).all(|j| {
            totals.cc_total[i][j] >= totals.cc_total[i - 1][j]
                && totals.ec_by_level[i][j] <= totals.ec_by_level[i - 1][j]
        })
    })
}

/// Dominance-pruned search.
///
/// Prefixes (the first `k - 1` coordinates) are visited in lexicographic
/// order, the last coordinate from the top down. Within a row, the first
/// over-budget candidate ends the row, since every smaller last index is
/// component-wise below it. Across rows, `limit[p]` is the smallest last
/// index of any within-budget candidate whose prefix is component-wise at
/// most `p`; candidates at or above it are dominated and never evaluated.
/// The limit of a prefix is the minimum over its immediate predecessors
/// (which precede it lexicographically) and its own row result.
pub fn approach1(totals: &WindowTotals, budget: &EnergyBudget) -> SynthesisResult {
    if !dominance_sound(totals) {
        log::warn!("cost table is not monotone in the period; approach1 falls back to exhaustive");
        let mut r = exhaustive(totals, budget);
        r.algorithm = Algorithm::Approach1;
        r.notes.push(
            "dominance pruning unsound for non-monotone costs; evaluated exhaustively".into(),
        );
        return r;
    }
    let started = Instant::now();
    let n = totals.rates();
    let k = totals.levels();
    let prefix_len = k - 1;
    let strides: Vec<usize> = (0..prefix_len)
        .map(|i| n.pow((prefix_len - 1 - i) as u32))
        .collect();
    let prefix_count = n.pow(prefix_len as u32);
    let mut limit = vec![n; prefix_count];
    let mut prefix = vec![0usize; prefix_len];
    let mut candidate = vec![0usize; k];
    let mut best: Option<Incumbent> = None;
    let mut explored = 0u64;

    for pidx in 0..prefix_count {
        let mut inherited = n;
        for (i, &digit) in prefix.iter().enumerate() {
            if digit > 0 {
                inherited = inherited.min(limit[pidx - strides[i]]);
            }
        }
        let mut row_limit = inherited;
        candidate[..prefix_len].copy_from_slice(&prefix);
        for last in (0..inherited).rev() {
            candidate[prefix_len] = last;
            let (cost, energy) = candidate_cost_energy(&candidate, totals);
            explored += 1;
            if !budget.admits(energy) {
                break;
            }
            row_limit = last;
            offer(
                &mut best,
                Incumbent {
                    choice: candidate.clone(),
                    cost,
                    energy,
                },
            );
        }
        limit[pidx] = row_limit;
        next_vector(&mut prefix, n);
    }
    finish(Algorithm::Approach1, totals, best, explored, started)
}

#[derive(Debug, Clone, PartialEq)]
struct Frontier {
    profit: f64,
    ranks: Vec<usize>,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.profit
            .total_cmp(&other.profit)
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Rank vectors over the sorted profit tables in non-increasing order of
/// summed profit. Each emitted vector after the first is its parent with one
/// coordinate's rank incremented.
pub struct BestFirst<'a> {
    tables: &'a ProfitTables,
    heap: BinaryHeap<Frontier>,
    seen: HashSet<Vec<usize>>,
}

impl<'a> BestFirst<'a> {
    pub fn new(tables: &'a ProfitTables) -> Self {
        let mut walk = Self {
            tables,
            heap: BinaryHeap::new(),
            seen: HashSet::new(),
        };
        if tables.rate_count() > 0 && tables.level_count() > 0 {
            walk.push(vec![0; tables.level_count()]);
        }
        walk
    }

    pub fn collective_profit(&self, ranks: &[usize]) -> f64 {
        ranks
            .iter()
            .enumerate()
            .map(|(j, &r)| self.tables.levels[j][r].profit)
            .sum()
    }

    /// Period indices behind a rank vector.
    pub fn choice(&self, ranks: &[usize]) -> Vec<usize> {
        ranks
            .iter()
            .enumerate()
            .map(|(j, &r)| self.tables.levels[j][r].period_index)
            .collect()
    }

    fn push(&mut self, ranks: Vec<usize>) {
        if self.seen.insert(ranks.clone()) {
            let profit = self.collective_profit(&ranks);
            self.heap.push(Frontier { profit, ranks });
        }
    }
}

impl Iterator for BestFirst<'_> {
    /// `(rank vector, collective profit)`
    type Item = (Vec<usize>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let top = self.heap.pop()?;
        let n = self.tables.rate_count();
        for j in 0..top.ranks.len() {
            if top.ranks[j] + 1 < n {
                let mut succ = top.ranks.clone();
                succ[j] += 1;
                self.push(succ);
            }
        }
        Some((top.ranks, top.profit))
    }
}

/// Profit-ordered best-first search; returns the first emitted candidate
/// within the budget.
pub fn approach2(
    tables: &ProfitTables,
    totals: &WindowTotals,
    budget: &EnergyBudget,
) -> SynthesisResult {
    let started = Instant::now();
    let mut walk = BestFirst::new(tables);
    let mut explored = 0u64;
    let mut found = None;
    while let Some((ranks, _)) = walk.next() {
        let choice = walk.choice(&ranks);
        let (cost, energy) = candidate_cost_energy(&choice, totals);
        explored += 1;
        if budget.admits(energy) {
            found = Some(Incumbent {
                choice,
                cost,
                energy,
            });
            break;
        }
    }
    finish(Algorithm::Approach2, totals, found, explored, started)
}

/// Totals restricted to the given levels.
fn restrict_levels(totals: &WindowTotals, keep: &[usize]) -> WindowTotals {
    let pick = |row: &Vec<f64>| keep.iter().map(|&j| row[j]).collect::<Vec<_>>();
    WindowTotals {
        periods_ms: totals.periods_ms.clone(),
        window_s: totals.window_s,
        level_durations: keep.iter().map(|&j| totals.level_durations[j]).collect(),
        cc_total: totals.cc_total.iter().map(pick).collect(),
        ec_total: totals.ec_total.clone(),
        ec_by_level: totals.ec_by_level.iter().map(pick).collect(),
    }
}

/// Runs one algorithm end to end, including profit-table construction for
/// [`Algorithm::Approach2`].
///
/// Levels with no time in the window have zero total cost, which leaves the
/// profit undefined; approach2 then searches the remaining levels and
/// assigns the shortest period to the idle ones, the same choice the
/// exhaustive tie-break makes.
pub fn synthesize(
    algorithm: Algorithm,
    totals: &WindowTotals,
    budget: &EnergyBudget,
) -> Result<SynthesisResult> {
    if (budget.window_s - totals.window_s).abs() > 1e-9 * totals.window_s {
        return Err(Error::InvalidBudget(format!(
            "budget window {} s differs from totals window {} s",
            budget.window_s, totals.window_s
        )));
    }
    if totals.rates() == 0 || totals.levels() == 0 {
        return Err(Error::Dimension("empty search space".into()));
    }
    let started = Instant::now();
    let mut result = match algorithm {
        Algorithm::Exhaustive => exhaustive(totals, budget),
        Algorithm::Approach1 => approach1(totals, budget),
        Algorithm::Approach2 => {
            let active: Vec<usize> = (0..totals.levels())
                .filter(|&j| totals.level_durations[j] > 0.0)
                .collect();
            if active.len() == totals.levels() {
                let tables = build_profit_tables(totals)?;
                approach2(&tables, totals, budget)
            } else {
                let reduced = restrict_levels(totals, &active);
                let tables = build_profit_tables(&reduced)?;
                let partial = approach2(&tables, &reduced, budget);
                let mut choice = vec![0usize; totals.levels()];
                let reduced_choice = if partial.feasible {
                    partial.controller.choice.clone()
                } else {
                    vec![totals.rates() - 1; active.len()]
                };
                for (slot, &j) in active.iter().enumerate() {
                    choice[j] = reduced_choice[slot];
                }
                if !partial.feasible {
                    choice = vec![totals.rates() - 1; totals.levels()];
                }
                let (cost, energy) = candidate_cost_energy(&choice, totals);
                let controller = MultiRateController { choice };
                SynthesisResult {
                    algorithm,
                    periods_ms: controller.periods_ms(&totals.periods_ms),
                    controller,
                    predicted_cost: cost,
                    predicted_energy_j: energy,
                    explored: partial.explored,
                    elapsed_s: 0.0,
                    feasible: partial.feasible,
                    notes: vec![format!(
                        "{} idle level(s) pinned to the shortest period",
                        totals.levels() - active.len()
                    )],
                }
            }
        }
    };
    result.elapsed_s = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Smallest window energy at which some candidate reaches `target_cost`.
/// `None` when no candidate is that cheap.
pub fn min_energy_for_cost(totals: &WindowTotals, target_cost: f64) -> Option<f64> {
    let n = totals.rates();
    let mut choice = vec![0usize; totals.levels()];
    let mut best: Option<f64> = None;
    loop {
        let (cost, energy) = candidate_cost_energy(&choice, totals);
        if cost <= target_cost && best.is_none_or(|b| energy < b) {
            best = Some(energy);
        }
        if !next_vector(&mut choice, n) {
            return best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::{build_power_table, totals_over_window, CostTable, RateSet};

    fn case_totals() -> WindowTotals {
        let rates = RateSet::arithmetic(10.0, 10.0, 90.0).unwrap();
        let entries = (0..9)
            .map(|i| {
                let base = 1.0 + i as f64 * 0.5 + (i * i) as f64 * 0.05;
                vec![base * 5.0, base * 30.0, base * 75.0]
            })
            .collect();
        let ct = CostTable::from_entries(rates.millis().to_vec(), entries).unwrap();
        let pt = build_power_table(&rates, 100.0).unwrap();
        let pattern = DisturbancePattern::new(vec![0.7, 0.1, 0.2]).unwrap();
        totals_over_window(&ct, &pt, &pattern, 100.0).unwrap()
    }

    #[test]
    fn pattern_parsing_and_validation() {
        let p: DisturbancePattern = "0.7, 0.1,0.2".parse().unwrap();
        assert_eq!(p.fractions(), &[0.7, 0.1, 0.2]);
        assert!("0.5,0.4".parse::<DisturbancePattern>().is_err());
        assert!("0.5,x".parse::<DisturbancePattern>().is_err());
        assert!(DisturbancePattern::new(vec![1.2, -0.2]).is_err());
        let q = DisturbancePattern::from_durations(&[70.0, 10.0, 20.0]).unwrap();
        assert!((q.fractions()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn candidate_energy_for_all_shortest() {
        let t = case_totals();
        let (_, e) = candidate_cost_energy(&[0, 0, 0], &t);
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_level_reduces_to_single_rate() {
        let rates = RateSet::from_millis(vec![10.0, 20.0]).unwrap();
        let ct = CostTable::from_entries(rates.millis().to_vec(), vec![vec![3.0], vec![5.0]]).unwrap();
        let pt = build_power_table(&rates, 100.0).unwrap();
        let pattern = DisturbancePattern::new(vec![1.0]).unwrap();
        let t = totals_over_window(&ct, &pt, &pattern, 10.0).unwrap();
        let (c, e) = candidate_cost_energy(&[1], &t);
        assert_eq!(c, 5.0);
        assert!((e - t.ec_total[1]).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_counts_every_vector() {
        let t = case_totals();
        let r = exhaustive(&t, &EnergyBudget::new(5.0, 100.0).unwrap());
        assert_eq!(r.explored, 729);
        assert!(r.feasible);
        assert!(r.predicted_energy_j <= 5.0);
    }

    #[test]
    fn unconstrained_picks_fastest() {
        let t = case_totals();
        let r = exhaustive(&t, &EnergyBudget::unconstrained(100.0));
        assert_eq!(r.controller.choice, vec![0, 0, 0]);
        let a1 = approach1(&t, &EnergyBudget::unconstrained(100.0));
        assert_eq!(a1.controller.choice, vec![0, 0, 0]);
        // The first candidate of every row is the only one evaluated there.
        assert!(a1.explored <= 81);
    }

    #[test]
    fn budget_below_minimum_is_infeasible() {
        let t = case_totals();
        let (_, min_e) = candidate_cost_energy(&[8, 8, 8], &t);
        let budget = EnergyBudget::new(min_e * 0.99, 100.0).unwrap();
        for algo in Algorithm::ALL {
            let r = synthesize(algo, &t, &budget).unwrap();
            assert!(!r.feasible, "{algo}");
            assert_eq!(r.controller.choice, vec![8, 8, 8]);
        }
    }

    #[test]
    fn approach1_matches_exhaustive_on_case() {
        let t = case_totals();
        for e in [1.2, 2.0, 3.5, 5.0, 8.0, 11.0] {
            let budget = EnergyBudget::new(e, 100.0).unwrap();
            let ex = exhaustive(&t, &budget);
            let a1 = approach1(&t, &budget);
            assert_eq!(ex.predicted_cost, a1.predicted_cost);
            assert_eq!(ex.feasible, a1.feasible);
            assert!(a1.explored <= ex.explored);
        }
    }

    #[test]
    fn approach1_downgrades_on_non_monotone_costs() {
        let mut t = case_totals();
        t.cc_total[4][1] = 0.0;
        let budget = EnergyBudget::new(5.0, 100.0).unwrap();
        let a1 = approach1(&t, &budget);
        assert_eq!(a1.explored, 729);
        assert_eq!(a1.notes.len(), 1);
        assert_eq!(a1.predicted_cost, exhaustive(&t, &budget).predicted_cost);
    }

    #[test]
    fn best_first_starts_at_top_ranks() {
        let t = case_totals();
        let tables = build_profit_tables(&t).unwrap();
        let mut walk = BestFirst::new(&tables);
        assert_eq!(walk.next().unwrap().0, vec![0, 0, 0]);
        let all: Vec<_> = BestFirst::new(&tables).collect();
        assert_eq!(all.len(), 729);
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn approach2_idle_levels_are_pinned() {
        let rates = RateSet::arithmetic(10.0, 10.0, 90.0).unwrap();
        let entries = (0..9).map(|i| vec![1.0 + i as f64, 2.0 + i as f64]).collect();
        let ct = CostTable::from_entries(rates.millis().to_vec(), entries).unwrap();
        let pt = build_power_table(&rates, 100.0).unwrap();
        let pattern = DisturbancePattern::new(vec![0.0, 1.0]).unwrap();
        let t = totals_over_window(&ct, &pt, &pattern, 100.0).unwrap();
        let r = synthesize(Algorithm::Approach2, &t, &EnergyBudget::new(4.0, 100.0).unwrap()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.controller.choice[0], 0);
        assert!(r.predicted_energy_j <= 4.0);
    }

    #[test]
    fn window_mismatch_rejected() {
        let t = case_totals();
        assert!(synthesize(Algorithm::Exhaustive, &t, &EnergyBudget::new(5.0, 50.0).unwrap()).is_err());
    }

    #[test]
    fn min_energy_for_cost_brackets() {
        let t = case_totals();
        let (c_fast, e_fast) = candidate_cost_energy(&[0, 0, 0], &t);
        assert_eq!(min_energy_for_cost(&t, c_fast), Some(e_fast));
        assert_eq!(min_energy_for_cost(&t, c_fast * 0.5), None);
    }
}
