//! Discrete LQG design per sampling period and stationary cost evaluation.
//!
//! The controller is the current-estimator form: at sample `k` the estimate
//! is corrected with `y_k` before the feedback `u_k = -L x̂_{k|k}` is applied,
//! and the prediction `x̂_{k+1|k} = Φ x̂_{k|k} + Γ u_k` is carried forward.
//! Gains are designed once at unit noise intensity; only the evaluation
//! intensity varies afterwards.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    control_riccati_map, filter_riccati_map, inverse, is_pd, lyapunov_residual,
    solve_control_dare, solve_discrete_lyapunov, solve_filter_dare, spectral_radius, symmetrize,
};
use crate::plant::{discretize, DiscretePlant, PlantModel};

/// Residual above which a doubling result is reported as non-converged.
const ACCEPT_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LqgController {
    pub h: f64,
    pub discrete: DiscretePlant,
    /// State feedback `L`, `u = -L x̂`.
    pub feedback: DMatrix<f64>,
    /// Stationary Kalman gain for the measurement update.
    pub kalman_gain: DMatrix<f64>,
    /// Regulator Riccati solution.
    pub cost_to_go: DMatrix<f64>,
    /// Stationary one-step prediction error covariance at unit intensity.
    pub prediction_cov: DMatrix<f64>,
    /// Innovation covariance `C P C' + R2` at unit intensity.
    pub innovation_cov: DMatrix<f64>,
    pub regulator_residual: f64,
    pub filter_residual: f64,
    pub spectral_radius: f64,
}

/// Affine split of the stationary cost, `J = a r + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub j: f64,
    pub lyapunov_residual: f64,
}

impl CostBreakdown {
    pub fn at(&self, r: f64) -> f64 {
        self.a * r + self.b
    }
}

/// Plant and estimator stacked as `z = [x; x̂_{k|k-1}]`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: DMatrix<f64>,
    /// Input map of the process noise `v_k`.
    pub process_input: DMatrix<f64>,
    /// Input map of the measurement noise `e_k`.
    pub measurement_input: DMatrix<f64>,
    /// `[x_k; u_k] = cost_output * z_k + cost_feedthrough * e_k`.
    pub cost_output: DMatrix<f64>,
    pub cost_feedthrough: DMatrix<f64>,
}

pub fn closed_loop(c: &DMatrix<f64>, d: &DiscretePlant, l: &DMatrix<f64>, kf: &DMatrix<f64>) -> ClosedLoop {
    let n = d.nx();
    let m = d.nu();
    let ny = c.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let correction = &eye - kf * c;
    let gl = &d.gamma * l;
    let phi_cl = &d.phi - &gl;

    let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(&d.phi - &gl * kf * c));
    a.view_mut((0, n), (n, n)).copy_from(&(-&gl * &correction));
    a.view_mut((n, 0), (n, n)).copy_from(&(&phi_cl * kf * c));
    a.view_mut((n, n), (n, n)).copy_from(&(&phi_cl * &correction));

    let mut process_input = DMatrix::<f64>::zeros(2 * n, n);
    process_input.view_mut((0, 0), (n, n)).copy_from(&eye);

    let mut measurement_input = DMatrix::<f64>::zeros(2 * n, ny);
    measurement_input
        .view_mut((0, 0), (n, ny))
        .copy_from(&(-&gl * kf));
    measurement_input
        .view_mut((n, 0), (n, ny))
        .copy_from(&(&phi_cl * kf));

    let mut cost_output = DMatrix::<f64>::zeros(n + m, 2 * n);
    cost_output.view_mut((0, 0), (n, n)).copy_from(&eye);
    cost_output
        .view_mut((n, 0), (m, n))
        .copy_from(&(-l * kf * c));
    cost_output
        .view_mut((n, n), (m, n))
        .copy_from(&(-l * &correction));

    let mut cost_feedthrough = DMatrix::<f64>::zeros(n + m, ny);
    cost_feedthrough
        .view_mut((n, 0), (m, ny))
        .copy_from(&(-l * kf));

    ClosedLoop {
        a,
        process_input,
        measurement_input,
        cost_output,
        cost_feedthrough,
    }
}

pub fn design(plant: &PlantModel, h: f64) -> Result<LqgController> {
    let d = discretize(plant, h)?;
    let (q1, q12, q2) = (d.q1(), d.q12(), d.q2());

    let s = solve_control_dare(&d.phi, &d.gamma, &q1, &q12, &q2)?;
    let regulator_residual =
        (&s - control_riccati_map(&s, &d.phi, &d.gamma, &q1, &q12, &q2)?).norm();
    if !(regulator_residual < ACCEPT_RESIDUAL * s.norm().max(1.0)) {
        return Err(Error::RiccatiNonConvergence {
            equation: "regulator",
            iterations: crate::linalg::RICCATI_MAX_ITERATIONS,
            residual: regulator_residual,
        });
    }
    let m_inv = inverse(
        &(d.gamma.transpose() * &s * &d.gamma + &q2),
        "Γ'SΓ + Q2",
    )?;
    let feedback = m_inv * (d.gamma.transpose() * &s * &d.phi + q12.transpose());

    if !is_pd(plant.r2()) {
        return Err(Error::InvalidPlant(
            "R2 must be positive definite for Kalman filter design".into(),
        ));
    }
    let p = solve_filter_dare(&d.phi, plant.c(), &d.r1d, plant.r2())?;
    let filter_residual =
        (&p - filter_riccati_map(&p, &d.phi, plant.c(), &d.r1d, plant.r2())?).norm();
    if !(filter_residual < ACCEPT_RESIDUAL * p.norm().max(1.0)) {
        return Err(Error::RiccatiNonConvergence {
            equation: "filter",
            iterations: crate::linalg::RICCATI_MAX_ITERATIONS,
            residual: filter_residual,
        });
    }
    let innovation_cov = symmetrize(&(plant.c() * &p * plant.c().transpose() + plant.r2()));
    let kalman_gain = &p * plant.c().transpose() * inverse(&innovation_cov, "innovation covariance")?;

    let cl = closed_loop(plant.c(), &d, &feedback, &kalman_gain);
    let rho = spectral_radius(&cl.a);
    if !(rho < 1.0) {
        return Err(Error::NotStabilizable(format!(
            "closed loop at h = {h} s has spectral radius {rho}"
        )));
    }

    Ok(LqgController {
        h,
        discrete: d,
        feedback,
        kalman_gain,
        cost_to_go: s,
        prediction_cov: p,
        innovation_cov,
        regulator_residual,
        filter_residual,
        spectral_radius: rho,
    })
}

struct StationaryParts {
    loop_: ClosedLoop,
    d: DiscretePlant,
    /// Covariance of `z` per unit process noise intensity.
    per_intensity: DMatrix<f64>,
    /// Covariance of `z` due to measurement noise alone.
    offset: DMatrix<f64>,
    residual: f64,
}

fn stationary(plant: &PlantModel, ctrl: &LqgController) -> Result<StationaryParts> {
    let d = discretize(plant, ctrl.h)?;
    let cl = closed_loop(plant.c(), &d, &ctrl.feedback, &ctrl.kalman_gain);
    let w1 = symmetrize(&(&cl.process_input * &d.r1d * cl.process_input.transpose()));
    let w0 = symmetrize(
        &(&cl.measurement_input * plant.r2() * cl.measurement_input.transpose()),
    );
    let z1 = solve_discrete_lyapunov(&cl.a, &w1)?;
    let z0 = solve_discrete_lyapunov(&cl.a, &w0)?;
    let residual = lyapunov_residual(&cl.a, &w1, &z1).max(lyapunov_residual(&cl.a, &w0, &z0));
    Ok(StationaryParts {
        loop_: cl,
        d,
        per_intensity: z1,
        offset: z0,
        residual,
    })
}

/// Stationary per-second cost of `ctrl` on `plant` at noise intensity `r`.
pub fn evaluate_cost(plant: &PlantModel, ctrl: &LqgController, r: f64) -> Result<CostBreakdown> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidScenario(format!(
            "noise intensity must be finite and non-negative, got {r}"
        )));
    }
    let parts = stationary(plant, ctrl)?;
    let cl = &parts.loop_;
    let qd = &parts.d.qd;
    let h = ctrl.h;

    let slope_cov = &cl.cost_output * &parts.per_intensity * cl.cost_output.transpose();
    let a = ((qd * slope_cov).trace() + parts.d.noise_cost) / h;

    let offset_cov = &cl.cost_output * &parts.offset * cl.cost_output.transpose()
        + &cl.cost_feedthrough * plant.r2() * cl.cost_feedthrough.transpose();
    let b = (qd * offset_cov).trace() / h;

    let (a, b) = (a.max(0.0), b.max(0.0));
    Ok(CostBreakdown {
        a,
        b,
        r,
        j: a * r + b,
        lyapunov_residual: parts.residual,
    })
}

/// Stationary innovation covariance when the loop runs at intensity `r`.
///
/// Innovations are `ν = C(x - x̂_{k|k-1}) + e`, so their covariance is affine
/// in `r`; at `r = 1` it equals [`LqgController::innovation_cov`].
pub fn innovation_covariance(plant: &PlantModel, ctrl: &LqgController, r: f64) -> Result<DMatrix<f64>> {
    let parts = stationary(plant, ctrl)?;
    let n = plant.nx();
    let mut t = DMatrix::<f64>::zeros(plant.ny(), 2 * n);
    t.view_mut((0, 0), (plant.ny(), n)).copy_from(plant.c());
    t.view_mut((0, n), (plant.ny(), n))
        .copy_from(&(-plant.c()));
    let z = &parts.per_intensity * r + &parts.offset;
    Ok(symmetrize(&(&t * z * t.transpose() + plant.r2())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_plant() -> PlantModel {
        PlantModel::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn scalar_gain_matches_quadratic_root() {
        let h = 0.05;
        let plant = scalar_plant();
        let ctrl = design(&plant, h).unwrap();
        let d = &ctrl.discrete;
        let (phi, g) = (d.phi[(0, 0)], d.gamma[(0, 0)]);
        let (q1, q12, q2) = (d.qd[(0, 0)], d.qd[(0, 1)], d.qd[(1, 1)]);
        // g² s² + [q2(1-φ²) - q1 g² + 2φ g q12] s + (q12² - q1 q2) = 0
        let qa = g * g;
        let qb = q2 * (1.0 - phi * phi) - q1 * g * g + 2.0 * phi * g * q12;
        let qc = q12 * q12 - q1 * q2;
        let s = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        let l = (g * s * phi + q12) / (g * g * s + q2);
        assert_relative_eq!(ctrl.cost_to_go[(0, 0)], s, max_relative = 1e-10);
        assert_relative_eq!(ctrl.feedback[(0, 0)], l, max_relative = 1e-10);
    }

    #[test]
    fn servo_design_is_stable_with_small_residuals() {
        let plant = PlantModel::dc_servo();
        for h in [0.01, 0.05, 0.09] {
            let ctrl = design(&plant, h).unwrap();
            assert!(ctrl.regulator_residual < 1e-8);
            assert!(ctrl.filter_residual < 1e-8);
            assert!(ctrl.spectral_radius < 1.0);
        }
    }

    #[test]
    fn zero_noise_gives_zero_cost() {
        let plant = PlantModel::dc_servo();
        let ctrl = design(&plant, 0.02).unwrap();
        let silent = plant.with_measurement_noise(DMatrix::zeros(1, 1)).unwrap();
        let c = evaluate_cost(&silent, &ctrl, 0.0).unwrap();
        assert_eq!(c.j, 0.0);
    }

    #[test]
    fn cost_is_affine_in_intensity() {
        let plant = PlantModel::dc_servo();
        let ctrl = design(&plant, 0.03).unwrap();
        let j0 = evaluate_cost(&plant, &ctrl, 0.0).unwrap().j;
        let j1 = evaluate_cost(&plant, &ctrl, 1.0).unwrap().j;
        let j2 = evaluate_cost(&plant, &ctrl, 2.0).unwrap().j;
        assert_relative_eq!(j2 - j0, 2.0 * (j1 - j0), max_relative = 1e-12);
    }

    #[test]
    fn negative_intensity_rejected() {
        let plant = PlantModel::dc_servo();
        let ctrl = design(&plant, 0.03).unwrap();
        assert!(evaluate_cost(&plant, &ctrl, -1.0).is_err());
    }

    #[test]
    fn singular_measurement_noise_cannot_be_designed() {
        let plant = PlantModel::dc_servo()
            .with_measurement_noise(DMatrix::zeros(1, 1))
            .unwrap();
        assert!(matches!(design(&plant, 0.02), Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn innovation_covariance_at_unit_intensity_matches_design() {
        let plant = PlantModel::dc_servo();
        let ctrl = design(&plant, 0.04).unwrap();
        let s = innovation_covariance(&plant, &ctrl, 1.0).unwrap();
        assert_relative_eq!(s, ctrl.innovation_cov, max_relative = 1e-9);
    }
}
