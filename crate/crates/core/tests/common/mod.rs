#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ratekit_core::lqg::design;
use ratekit_core::plant::PlantModel;
use ratekit_core::synthesis::DisturbancePattern;
use ratekit_core::tables::{build_power_table, totals_over_window, CostTable, RateSet, WindowTotals};

/// Taylor-series exponential with scaling and squaring.
pub fn taylor_expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.abs().row_sum().max();
    let mut squarings = 0;
    let mut scaled = m.clone();
    let mut s = norm;
    while s > 0.1 {
        scaled /= 2.0;
        s /= 2.0;
        squarings += 1;
    }
    let n = m.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Classical RK4 on `X' = A X`, `X(0) = I`, over `[0, h]`.
pub fn rk4_transition(a: &DMatrix<f64>, h: f64, steps: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let dt = h / steps as f64;
    let mut x = DMatrix::<f64>::identity(n, n);
    for _ in 0..steps {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (dt / 2.0));
        let k3 = a * (&x + &k2 * (dt / 2.0));
        let k4 = a * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

/// RK4 on the augmented system for `Γ = ∫ e^{As} ds B`.
pub fn rk4_input(a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64, steps: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    rk4_transition(&aug, h, steps).view((0, n), (n, m)).into_owned()
}

/// Composite Simpson rule on `∫_0^h f(s) ds` with `intervals` (even) panels.
pub fn simpson<F: Fn(f64) -> DMatrix<f64>>(f: F, h: f64, intervals: usize) -> DMatrix<f64> {
    assert!(intervals % 2 == 0);
    let dx = h / intervals as f64;
    let mut acc = f(0.0) + f(h);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i as f64 * dx) * w;
    }
    acc * (dx / 3.0)
}

/// Symmetric square root by eigen-decomposition, negative modes dropped.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Random monotone instance: costs rise with the period at every level.
pub struct Instance {
    pub totals: WindowTotals,
    pub budget_j: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, positive_shares: bool) -> Instance {
    let rates = RateSet::from_millis((0..n).map(|i| 10.0 + 10.0 * i as f64).collect()).unwrap();
    let mut entries = vec![vec![0.0; k]; n];
    for j in 0..k {
        let mut v = rng.random_range(0.5..5.0) * (j + 1) as f64;
        for row in entries.iter_mut() {
            row[j] = v;
            // Occasional flat steps exercise ties.
            if rng.random_bool(0.8) {
                v += rng.random_range(0.0..1.0);
            }
        }
    }
    let ct = CostTable::from_entries(rates.millis().to_vec(), entries).unwrap();
    let pt = build_power_table(&rates, 100.0).unwrap();
    let mut shares: Vec<f64> = (0..k)
        .map(|_| {
            if !positive_shares && rng.random_bool(0.15) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if shares.iter().all(|s| *s == 0.0) {
        shares[0] = 1.0;
    }
    let sum: f64 = shares.iter().sum();
    shares.iter_mut().for_each(|s| *s /= sum);
    let pattern = DisturbancePattern::new(shares).unwrap();
    let window = 100.0;
    let totals = totals_over_window(&ct, &pt, &pattern, window).unwrap();
    let (lo, hi) = energy_range(&totals);
    let budget_j = rng.random_range(0.5 * lo..1.2 * hi);
    Instance { totals, budget_j }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cheapest and dearest candidate energy, by brute force.
pub fn energy_range(t: &WindowTotals) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for_each_choice(t.rates(), t.levels(), |c| {
        let e = brute_energy(t, c);
        lo = lo.min(e);
        hi = hi.max(e);
    });
    (lo, hi)
}

pub fn brute_cost(t: &WindowTotals, choice: &[usize]) -> f64 {
    let mut s = 0.0;
    for (j, &i) in choice.iter().enumerate() {
        s += t.cc_total[i][j];
    }
    s / t.window_s
}

pub fn brute_energy(t: &WindowTotals, choice: &[usize]) -> f64 {
    let mut s = 0.0;
    for (j, &i) in choice.iter().enumerate() {
        s += t.ec_by_level[i][j];
    }
    s
}

pub fn for_each_choice<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    let total = n.pow(k as u32);
    let mut c = vec![0usize; k];
    for mut idx in 0..total {
        for slot in (0..k).rev() {
            c[slot] = idx % n;
            idx /= n;
        }
        f(&c);
    }
}

/// Minimum cost within the budget, or `None` when nothing fits.
pub fn brute_optimum(t: &WindowTotals, budget_j: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for_each_choice(t.rates(), t.levels(), |c| {
        if brute_energy(t, c) <= budget_j {
            let cost = brute_cost(t, c);
            if best.is_none_or(|b| cost < b) {
                best = Some(cost);
            }
        }
    });
    best
}

/// Continuous-time closed loop with the designed controller, integrated
/// exactly between fine substeps, cost accumulated by the trapezoid rule.
/// Returns the batch-means estimate of the average cost and its standard error.
pub fn monte_carlo_cost(h: f64, r: f64, periods: usize, substeps: usize, seed: u64) -> (f64, f64) {
    let plant = PlantModel::dc_servo();
    let ctrl = design(&plant, h).unwrap();
    let dt = h / substeps as f64;
    let a = plant.a();
    let e_dt = taylor_expm(&(a * dt));
    let g_dt = rk4_input(a, plant.b(), dt, 200);
    let w_dt = simpson(
        |s| {
            let e = taylor_expm(&(a * s));
            &e * plant.rc() * e.transpose()
        },
        dt,
        64,
    );
    let s_dt = sym_sqrt(&(w_dt * r));
    let m2 = |m: &nalgebra::DMatrix<f64>| Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let v2 = |m: &nalgebra::DMatrix<f64>| Vector2::new(m[(0, 0)], m[(1, 0)]);
    let (ed, sd) = (m2(&e_dt), m2(&s_dt));
    let gd = v2(&g_dt);
    let phi = m2(&ctrl.discrete.phi);
    let gamma = v2(&ctrl.discrete.gamma);
    let c = Vector2::new(plant.c()[(0, 0)], plant.c()[(0, 1)]);
    let l = Vector2::new(ctrl.feedback[(0, 0)], ctrl.feedback[(0, 1)]);
    let kf = v2(&ctrl.kalman_gain);
    let q = plant.qxu();
    let q1 = Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]);
    let q12 = Vector2::new(q[(0, 2)], q[(1, 2)]);
    let q2 = q[(2, 2)];
    let r2_root = plant.r2()[(0, 0)].sqrt();

    let mut rng = seeded(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let stage = |x: &Vector2<f64>, u: f64| x.dot(&(q1 * x)) + 2.0 * u * x.dot(&q12) + q2 * u * u;

    let warmup = 2000;
    let batches = 100;
    let per_batch = periods / batches;
    let mut x = Vector2::zeros();
    let mut xp = Vector2::zeros();
    let mut batch_means = Vec::with_capacity(batches);
    let mut acc = 0.0;
    for k in 0..warmup + batches * per_batch {
        let y = c.dot(&x) + r2_root * normal();
        let xe = xp + kf * (y - c.dot(&xp));
        let u = -l.dot(&xe);
        let mut period_cost = 0.0;
        let mut g0 = stage(&x, u);
        for _ in 0..substeps {
            x = ed * x + gd * u + sd * Vector2::new(normal(), normal());
            let g1 = stage(&x, u);
            period_cost += 0.5 * dt * (g0 + g1);
            g0 = g1;
        }
        xp = phi * xe + gamma * u;
        if k >= warmup {
            acc += period_cost;
            if (k - warmup + 1) % per_batch == 0 {
                batch_means.push(acc / (per_batch as f64 * h));
                acc = 0.0;
            }
        }
    }
    let mean = batch_means.iter().sum::<f64>() / batches as f64;
    let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}
