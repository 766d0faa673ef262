//! Observer modes: a shared observer structure plus a per-mode gain.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::plant::Plant;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("placed eigenvalue {0} is not in the open left half-plane")]
    NotHurwitz(f64),
    #[error("Lyapunov equation is singular")]
    SingularLyapunov,
    #[error("covariance diverged: largest eigenvalue {lambda_max:.3e} exceeds {ceiling:.3e}")]
    CovarianceDivergence { lambda_max: f64, ceiling: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Observer structure `x̂̇ = f_o(x̂, u, d)`, `ŷ = h(x̂, u, 0)` built as a copy
/// of the plant driven by the output injection `d`.
pub struct PlantCopy {
    plant: Arc<dyn Plant>,
    zero_v: DVector<f64>,
    zero_w: DVector<f64>,
}

impl PlantCopy {
    pub fn new(plant: Arc<dyn Plant>) -> Self {
        let zero_v = DVector::zeros(plant.n_v());
        let zero_w = DVector::zeros(plant.n_w());
        Self { plant, zero_v, zero_w }
    }

    pub fn plant(&self) -> &Arc<dyn Plant> {
        &self.plant
    }

    pub fn n_x(&self) -> usize {
        self.plant.n_x()
    }

    pub fn n_y(&self) -> usize {
        self.plant.n_y()
    }

    pub fn dynamics(&self, xhat: &DVector<f64>, u: &DVector<f64>, injection: &DVector<f64>) -> DVector<f64> {
        self.plant.dynamics(xhat, u, &self.zero_v) + injection
    }

    pub fn output(&self, xhat: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.plant.output(xhat, u, &self.zero_w)
    }

    pub fn jacobians(&self, xhat: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.plant.jacobians(xhat, u)
    }
}

/// Continuous-time EKF with exponential forgetting.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfParams {
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub alpha: f64,
    pub p0: DMatrix<f64>,
    /// Largest admissible eigenvalue of the covariance.
    pub ceiling: f64,
}

impl EkfParams {
    pub fn new(r: f64, q: DMatrix<f64>, alpha: f64, p0: DMatrix<f64>) -> Self {
        Self { r: DMatrix::from_element(1, 1, r), q, alpha, p0, ceiling: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainProvider {
    Constant(DMatrix<f64>),
    Ekf(EkfParams),
}

impl GainProvider {
    /// Number of internal states this gain carries inside the hybrid state.
    pub fn internal_dim(&self, n_x: usize) -> usize {
        match self {
            GainProvider::Constant(_) => 0,
            GainProvider::Ekf(_) => n_x * (n_x + 1) / 2,
        }
    }
}

#[derive(Clone)]
pub struct ObserverMode {
    pub model: Arc<PlantCopy>,
    pub gain: GainProvider,
}

impl ObserverMode {
    pub fn new(model: Arc<PlantCopy>, gain: GainProvider) -> Self {
        Self { model, gain }
    }
}

/// `f_o(x̂, u, L(y − ŷ))` for a given gain value.
pub fn mode_dynamics(
    model: &PlantCopy,
    gain: &DMatrix<f64>,
    xhat: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    let innovation = y - model.output(xhat, u);
    model.dynamics(xhat, u, &(gain * innovation))
}

/// `diag(h, h², …, hⁿ) · D`.
pub fn high_gain_gain(h: f64, d: &DVector<f64>) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d.len(), 1);
    let mut p = 1.0;
    for i in 0..d.len() {
        p *= h;
        l[(i, 0)] = p * d[i];
    }
    l
}

/// Stores the upper triangle of a symmetric matrix row by row.
pub fn pack_symmetric(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

pub fn unpack_symmetric(packed: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
    m
}

/// Riccati flow and gain of the forgetting-factor EKF:
/// `Ṗ = (A + αI)P + P(A + αI)ᵀ + Q − P Cᵀ R⁻¹ C P`, `L = P Cᵀ R⁻¹`.
pub fn ekf_gain_flow(
    params: &EkfParams,
    p: &DMatrix<f64>,
    a_lin: &DMatrix<f64>,
    c_lin: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = p.nrows();
    let shifted = a_lin + DMatrix::identity(n, n) * params.alpha;
    let r_inv = params.r.clone().try_inverse().expect("EKF R must be invertible");
    let gain = p * c_lin.transpose() * &r_inv;
    let p_dot = &shifted * p + p * shifted.transpose() + &params.q - &gain * c_lin * p;
    (0.5 * (&p_dot + p_dot.transpose()), gain)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Output injection `D` placing the eigenvalues of `A − DC` for the double
/// integrator `A = [[0,1],[0,0]]`, `C = [1,0]`, by matching
/// `λ² + d₁λ + d₂` to `(λ − e₁)(λ − e₂)`.
pub fn place_double_integrator(eigs: (f64, f64)) -> Result<DVector<f64>, ObserverError> {
    for e in [eigs.0, eigs.1] {
        if !(e < 0.0) {
            return Err(ObserverError::NotHurwitz(e));
        }
    }
    Ok(DVector::from_vec(vec![-(eigs.0 + eigs.1), eigs.0 * eigs.1]))
}

/// Solves `P M + Mᵀ P = −Q` through the Kronecker form.
pub fn solve_lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, ObserverError> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    // vec(P M) = (Mᵀ ⊗ I) vec(P), vec(Mᵀ P) = (I ⊗ Mᵀ) vec(P)
    let k = m.transpose().kronecker(&id) + id.kronecker(&m.transpose());
    let rhs = DVector::from_iterator(n * n, (-q).iter().copied());
    let sol = k.lu().solve(&rhs).ok_or(ObserverError::SingularLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(0.5 * (&p + p.transpose()))
}

/// Result of the high-gain feasibility computation.
#[derive(Debug, Clone, PartialEq)]
pub struct HighGainCheck {
    pub d: DVector<f64>,
    pub p: DMatrix<f64>,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub h_star: f64,
    pub residual: f64,
}

/// Places `A − DC`, solves `P(A − DC) + (A − DC)ᵀP = −I` and returns
/// `h* = 2 λ_max(P) K`.
pub fn verify_assumption1_highgain(eigs: (f64, f64), lipschitz: f64) -> Result<HighGainCheck, ObserverError> {
    let d = place_double_integrator(eigs)?;
    let m = DMatrix::from_row_slice(2, 2, &[-d[0], 1.0, -d[1], 0.0]);
    let id = DMatrix::identity(2, 2);
    let p = solve_lyapunov(&m, &id)?;
    let residual = (&p * &m + m.transpose() * &p + &id).amax();
    let lmax = lambda_max(&p);
    Ok(HighGainCheck {
        d,
        lambda_min: lambda_min(&p),
        lambda_max: lmax,
        h_star: 2.0 * lmax * lipschitz,
        p,
        residual,
    })
}

/// `(δ₁, δ₂) = (K²/λ_min(P), K²)`.
pub fn assumption2_constants(k: f64, p: &DMatrix<f64>) -> (f64, f64) {
    (k * k / lambda_min(p), k * k)
}
