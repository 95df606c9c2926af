//! Continuous-time plant description and its exact sampled-data lift.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, expm, is_psd, symmetrize};

/// Periods below this are rejected outright.
pub const MIN_PERIOD: f64 = 1e-6;

/// Continuous LTI plant `dx = (Ax + Bu) dt + dv`, `y = Cx + Du + e`, with
/// process noise intensity `r * Rc`, measurement noise variance `R2`, and
/// the quadratic cost weight `Qxu` on `[x; u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    rc: DMatrix<f64>,
    r2: DMatrix<f64>,
    qxu: DMatrix<f64>,
}

/// JSON layout of a plant: dense row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "Rc")]
    pub rc: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    pub r2: Vec<Vec<f64>>,
    #[serde(rename = "Qxu")]
    pub qxu: Vec<Vec<f64>>,
}

fn from_rows(name: &'static str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidPlant(format!("matrix {name} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PlantModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        rc: DMatrix<f64>,
        r2: DMatrix<f64>,
        qxu: DMatrix<f64>,
    ) -> Result<Self> {
        for (name, m) in [
            ("A", &a),
            ("B", &b),
            ("C", &c),
            ("D", &d),
            ("Rc", &rc),
            ("R2", &r2),
            ("Qxu", &qxu),
        ] {
            if !all_finite(m) {
                return Err(Error::NonFinite(name));
            }
        }
        let nx = a.nrows();
        let nu = b.ncols();
        let ny = c.nrows();
        let dims_ok = nx > 0
            && nu > 0
            && ny > 0
            && a.ncols() == nx
            && b.nrows() == nx
            && c.ncols() == nx
            && d.shape() == (ny, nu)
            && rc.shape() == (nx, nx)
            && r2.shape() == (ny, ny)
            && qxu.shape() == (nx + nu, nx + nu);
        if !dims_ok {
            return Err(Error::InvalidPlant(format!(
                "inconsistent dimensions: A {:?}, B {:?}, C {:?}, D {:?}, Rc {:?}, R2 {:?}, Qxu {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape(),
                rc.shape(),
                r2.shape(),
                qxu.shape()
            )));
        }
        if !is_psd(&rc) {
            return Err(Error::InvalidPlant(
                "Rc must be symmetric positive semidefinite".into(),
            ));
        }
        if !is_psd(&r2) {
            return Err(Error::InvalidPlant(
                "R2 must be symmetric positive semidefinite".into(),
            ));
        }
        if !is_psd(&qxu) {
            return Err(Error::InvalidPlant(
                "Qxu must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            rc,
            r2,
            qxu,
        })
    }

    pub fn from_spec(spec: &PlantSpec) -> Result<Self> {
        Self::new(
            from_rows("A", &spec.a)?,
            from_rows("B", &spec.b)?,
            from_rows("C", &spec.c)?,
            from_rows("D", &spec.d)?,
            from_rows("Rc", &spec.rc)?,
            from_rows("R2", &spec.r2)?,
            from_rows("Qxu", &spec.qxu)?,
        )
    }

    pub fn to_spec(&self) -> PlantSpec {
        PlantSpec {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
            rc: to_rows(&self.rc),
            r2: to_rows(&self.r2),
            qxu: to_rows(&self.qxu),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: PlantSpec = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<plant>".into(),
            source,
        })?;
        Self::from_spec(&spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: PlantSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_spec(&spec)
    }

    /// The DC-servo case-study plant with the bundled noise and cost defaults.
    pub fn dc_servo() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1000.0]),
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_element(1, 1, 0.01),
            DMatrix::identity(3, 3),
        )
        .expect("built-in plant is valid")
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }
    pub fn ny(&self) -> usize {
        self.c.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn rc(&self) -> &DMatrix<f64> {
        &self.rc
    }
    pub fn r2(&self) -> &DMatrix<f64> {
        &self.r2
    }
    pub fn qxu(&self) -> &DMatrix<f64> {
        &self.qxu
    }

    /// Same plant with a different measurement noise variance.
    pub fn with_measurement_noise(&self, r2: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.d.clone(),
            self.rc.clone(),
            r2,
            self.qxu.clone(),
        )
    }
}

/// Zero-order-hold lift of a [`PlantModel`] at period `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    pub h: f64,
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// Process noise covariance over one period at unit intensity.
    pub r1d: DMatrix<f64>,
    /// Sampled cost weight on `[x_k; u_k]`.
    pub qd: DMatrix<f64>,
    /// Expected inter-sample cost contributed by process noise, per unit
    /// intensity and per period.
    pub noise_cost: f64,
}

impl DiscretePlant {
    pub fn nx(&self) -> usize {
        self.phi.nrows()
    }
    pub fn nu(&self) -> usize {
        self.gamma.ncols()
    }
    pub fn q1(&self) -> DMatrix<f64> {
        let n = self.nx();
        self.qd.view((0, 0), (n, n)).into_owned()
    }
    pub fn q12(&self) -> DMatrix<f64> {
        let (n, m) = (self.nx(), self.nu());
        self.qd.view((0, n), (n, m)).into_owned()
    }
    pub fn q2(&self) -> DMatrix<f64> {
        let (n, m) = (self.nx(), self.nu());
        self.qd.view((n, n), (m, m)).into_owned()
    }
}

pub fn validate_period(h: f64) -> Result<()> {
    if !h.is_finite() || h < MIN_PERIOD {
        return Err(Error::InvalidPeriod(h));
    }
    Ok(())
}

/// Exact sampled-data discretization by Van Loan block exponentials.
///
/// * `exp([[-Ã', Qxu], [0, Ã]] h)` with `Ã = [[A, B], [0, 0]]` yields `Φ`,
///   `Γ` and `Qd = ∫ e^{Ã't} Qxu e^{Ãt} dt`.
/// * `exp([[-A, Rc], [0, A']] h)` yields `R1d = ∫ e^{As} Rc e^{A's} ds`.
/// * the three-block form `[[-A', I, 0], [0, -A', Q1], [0, 0, A]]` yields the
///   double integral behind the inter-sample noise cost.
pub fn discretize(plant: &PlantModel, h: f64) -> Result<DiscretePlant> {
    validate_period(h)?;
    let n = plant.nx();
    let m = plant.nu();
    let nm = n + m;

    let mut a_aug = DMatrix::<f64>::zeros(nm, nm);
    a_aug.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    a_aug.view_mut((0, n), (n, m)).copy_from(&plant.b);

    let mut cost_block = DMatrix::<f64>::zeros(2 * nm, 2 * nm);
    cost_block
        .view_mut((0, 0), (nm, nm))
        .copy_from(&(-a_aug.transpose()));
    cost_block.view_mut((0, nm), (nm, nm)).copy_from(&plant.qxu);
    cost_block.view_mut((nm, nm), (nm, nm)).copy_from(&a_aug);
    let e = expm(&(cost_block * h));
    let f22 = e.view((nm, nm), (nm, nm)).into_owned();
    let f12 = e.view((0, nm), (nm, nm)).into_owned();
    let qd = symmetrize(&(f22.transpose() * f12));
    let phi = f22.view((0, 0), (n, n)).into_owned();
    let gamma = f22.view((0, n), (n, m)).into_owned();

    let mut noise_block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    noise_block.view_mut((0, 0), (n, n)).copy_from(&(-&plant.a));
    noise_block.view_mut((0, n), (n, n)).copy_from(&plant.rc);
    noise_block
        .view_mut((n, n), (n, n))
        .copy_from(&plant.a.transpose());
    let e = expm(&(noise_block * h));
    let g22 = e.view((n, n), (n, n)).into_owned();
    let g12 = e.view((0, n), (n, n)).into_owned();
    let r1d = symmetrize(&(g22.transpose() * g12));

    let q1c = plant.qxu.view((0, 0), (n, n)).into_owned();
    let mut triple = DMatrix::<f64>::zeros(3 * n, 3 * n);
    triple
        .view_mut((0, 0), (n, n))
        .copy_from(&(-plant.a.transpose()));
    triple
        .view_mut((0, n), (n, n))
        .copy_from(&DMatrix::<f64>::identity(n, n));
    triple
        .view_mut((n, n), (n, n))
        .copy_from(&(-plant.a.transpose()));
    triple.view_mut((n, 2 * n), (n, n)).copy_from(&q1c);
    triple.view_mut((2 * n, 2 * n), (n, n)).copy_from(&plant.a);
    let e = expm(&(triple * h));
    let f33 = e.view((2 * n, 2 * n), (n, n)).into_owned();
    let h13 = e.view((0, 2 * n), (n, n)).into_owned();
    let double_integral = symmetrize(&(f33.transpose() * h13));
    let noise_cost = (&plant.rc * double_integral).trace().max(0.0);

    for (name, mat) in [("Phi", &phi), ("Gamma", &gamma), ("R1d", &r1d), ("Qd", &qd)] {
        if !all_finite(mat) {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(DiscretePlant {
        h,
        phi,
        gamma,
        r1d,
        qd,
        noise_cost,
    })
}
