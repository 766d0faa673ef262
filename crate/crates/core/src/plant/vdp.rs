use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::Plant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPolParams {
    pub sat_level: f64,
}

impl Default for VanDerPolParams {
    fn default() -> Self {
        Self { sat_level: 10.0 }
    }
}

/// Saturated Van der Pol oscillator `ẋ = Ax + Bφ(x)`, `y = Cx + w`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VanDerPol {
    pub params: VanDerPolParams,
}

impl VanDerPol {
    pub fn new(params: VanDerPolParams) -> Self {
        Self { params }
    }

    pub fn a() -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, 0.0, 0.0)
    }

    pub fn b() -> Vector2<f64> {
        Vector2::new(0.0, 1.0)
    }

    /// Output row `C = [1, 0]`.
    pub fn c() -> Vector2<f64> {
        Vector2::new(1.0, 0.0)
    }

    /// `sat(−x₁ + 0.5(1 − x₁²)x₂)`.
    pub fn phi(&self, x1: f64, x2: f64) -> f64 {
        let s = self.params.sat_level;
        (-x1 + 0.5 * (1.0 - x1 * x1) * x2).clamp(-s, s)
    }
}

impl Plant for VanDerPol {
    fn n_x(&self) -> usize {
        2
    }
    fn n_u(&self) -> usize {
        0
    }
    fn n_v(&self) -> usize {
        0
    }
    fn n_y(&self) -> usize {
        1
    }
    fn n_w(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<f64>, _u: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], self.phi(x[0], x[1])])
    }

    fn output(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let noise = if w.is_empty() { 0.0 } else { w[0] };
        DVector::from_element(1, x[0] + noise)
    }

    fn jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (x1, x2) = (x[0], x[1]);
        let inner = -x1 + 0.5 * (1.0 - x1 * x1) * x2;
        let (d1, d2) = if inner.abs() < self.params.sat_level {
            (-1.0 - x1 * x2, 0.5 * (1.0 - x1 * x1))
        } else {
            (0.0, 0.0)
        };
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, d1, d2]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        (a, c)
    }
}
