use nalgebra::{DMatrix, DVector};

use super::{Plant, PlantError};

/// `ẋ = Ax + Bu + v`, `y = Cx + w`.
///
/// Used as a test plant for gain design and solver checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, PlantError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || n == 0 || c.nrows() == 0 {
            return Err(PlantError::MalformedProfile(format!(
                "inconsistent linear plant shapes A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Scalar integrator `ẋ = v`, `y = x + w`.
    pub fn integrator() -> Self {
        Self::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 0), DMatrix::identity(1, 1)).expect("valid shapes")
    }
}

impl Plant for LinearPlant {
    fn n_x(&self) -> usize {
        self.a.nrows()
    }
    fn n_u(&self) -> usize {
        self.b.ncols()
    }
    fn n_v(&self) -> usize {
        self.a.nrows()
    }
    fn n_y(&self) -> usize {
        self.c.nrows()
    }
    fn n_w(&self) -> usize {
        self.c.nrows()
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut dx = &self.a * x;
        if !u.is_empty() {
            dx += &self.b * u;
        }
        if !v.is_empty() {
            dx += v;
        }
        dx
    }

    fn output(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let y = &self.c * x;
        if w.is_empty() {
            y
        } else {
            y + w
        }
    }

    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.c.clone())
    }
}
