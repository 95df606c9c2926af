//! Dense matrix helpers shared by the discretization, design, and cost paths.
//!
//! The matrix exponential is nalgebra's scaling-and-squaring Padé
//! implementation. The Riccati and Lyapunov solvers live here so that every
//! caller gets the same residual definitions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative change at which the doubling iteration is considered converged.
pub const RICCATI_TOLERANCE: f64 = 1e-12;
/// Hard cap on doubling steps.
pub const RICCATI_MAX_ITERATIONS: usize = 10_000;

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Matrix exponential by scaling and squaring with Padé approximants.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.exp()
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-10 * scale
}

/// Smallest eigenvalue of a symmetric matrix together with the largest
/// eigenvalue magnitude, for scale-aware definiteness checks.
fn eigen_extent(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = symmetrize(m).symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    (min, max)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    if !is_symmetric(m) {
        return false;
    }
    let (min, max) = eigen_extent(m);
    min >= -1e-12 * max.max(1.0)
}

pub fn is_pd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    if !is_symmetric(m) {
        return false;
    }
    let (min, max) = eigen_extent(m);
    min > 1e-14 * max.max(1.0)
}

/// Symmetric square root `S` with `S * S^T = m`, clamping tiny negative
/// eigenvalues produced by rounding. Works for singular PSD matrices where a
/// Cholesky factor would not exist.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::NotStabilizable(format!("{what} is singular")))
}

/// Solves `X = A X A^T + W` through the Kronecker form
/// `(I - A ⊗ A) vec(X) = vec(W)`.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || w.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lyapunov operands {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::Lyapunov(format!("spectral radius {rho} >= 1")));
    }
    let kron = a.kronecker(a);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let vec_x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Lyapunov("singular Kronecker system".into()))?;
    let x = DMatrix::from_column_slice(n, n, vec_x.as_slice());
    let x = symmetrize(&x);
    if !all_finite(&x) {
        return Err(Error::Lyapunov("non-finite solution".into()));
    }
    Ok(x)
}

/// Frobenius norm of `X - (A X A^T + W)`.
pub fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    (x - (a * x * a.transpose() + w)).norm()
}

/// Structure-preserving doubling for `X = A^T X (I + G X)^{-1} A + H`,
/// the common form of the regulator and filter Riccati equations.
fn doubling(
    a0: DMatrix<f64>,
    g0: DMatrix<f64>,
    h0: DMatrix<f64>,
    equation: &'static str,
) -> Result<DMatrix<f64>> {
    let n = a0.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let (mut a, mut g, mut h) = (a0, g0, h0);
    for _ in 0..RICCATI_MAX_ITERATIONS {
        let w = &eye + &g * &h;
        let w_inv = w.lu().try_inverse().ok_or_else(|| {
            Error::NotStabilizable(format!("{equation} doubling step hit a singular pencil"))
        })?;
        let a_w = &a * &w_inv;
        let a_next = &a_w * &a;
        let g_next = &g + &a_w * &g * a.transpose();
        let h_next = &h + a.transpose() * &h * &w_inv * &a;
        if !all_finite(&h_next) || !all_finite(&g_next) {
            return Err(Error::NotStabilizable(format!(
                "{equation} Riccati iteration diverged; the pair is not stabilizable/detectable"
            )));
        }
        let change = (&h_next - &h).norm() / h_next.norm().max(f64::MIN_POSITIVE);
        a = a_next;
        g = symmetrize(&g_next);
        h = symmetrize(&h_next);
        if change <= RICCATI_TOLERANCE {
            return Ok(h);
        }
    }
    Err(Error::RiccatiNonConvergence {
        equation,
        iterations: RICCATI_MAX_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Regulator DARE with cross weighting:
/// `S = Φ'SΦ + Q1 - (Φ'SΓ + Q12)(Γ'SΓ + Q2)^{-1}(Γ'SΦ + Q12')`.
pub fn solve_control_dare(
    phi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q12: &DMatrix<f64>,
    q2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let q2_inv = inverse(q2, "input weight")?;
    let phi_t = phi - gamma * &q2_inv * q12.transpose();
    let q_t = symmetrize(&(q1 - q12 * &q2_inv * q12.transpose()));
    let g = symmetrize(&(gamma * &q2_inv * gamma.transpose()));
    doubling(phi_t, g, q_t, "regulator")
}

pub fn control_riccati_map(
    s: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q12: &DMatrix<f64>,
    q2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = gamma.transpose() * s * gamma + q2;
    let m_inv = inverse(&m, "Γ'SΓ + Q2")?;
    let n = phi.transpose() * s * gamma + q12;
    Ok(phi.transpose() * s * phi + q1 - &n * m_inv * n.transpose())
}

/// Filter DARE for the one-step prediction covariance:
/// `P = ΦPΦ' + R1 - ΦPC'(CPC' + R2)^{-1}CPΦ'`.
pub fn solve_filter_dare(
    phi: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let r2_inv = inverse(r2, "measurement noise covariance")?;
    let g = symmetrize(&(c.transpose() * r2_inv * c));
    doubling(phi.transpose(), g, r1.clone(), "filter")
}

pub fn filter_riccati_map(
    p: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s = c * p * c.transpose() + r2;
    let s_inv = inverse(&s, "innovation covariance")?;
    let n = phi * p * c.transpose();
    Ok(phi * p * phi.transpose() + r1 - &n * s_inv * n.transpose())
}
