//! Plant models and the exogenous signals that drive them.

mod battery;
mod linear;
mod signals;
mod vdp;

pub use battery::{default_ocv_table, Battery, BatteryParams, OcvCurve};
pub use linear::LinearPlant;
pub use signals::{
    load_current_profile, parse_current_profile, piecewise_linear_noise, sinusoid_noise,
    synthetic_phev_profile, FnSignal, PiecewiseLinearNoise, Signal, SignalBundle, Sinusoid,
    Tabulated, Zero,
};
pub use vdp::{VanDerPol, VanDerPolParams};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("battery output requires an open-circuit-voltage curve")]
    OcvCurveMissing,
    #[error("malformed profile: {0}")]
    MalformedProfile(String),
    #[error("io error reading {path}: {reason}")]
    Io { path: String, reason: String },
}

/// `ẋ = f_p(x, u, v)`, `y = h(x, u, w)`.
pub trait Plant: Send + Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_v(&self) -> usize;
    fn n_y(&self) -> usize;
    fn n_w(&self) -> usize;

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    fn output(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    /// Jacobians `(∂f_p/∂x, ∂h/∂x)` at `(x, u)` with zero disturbance and noise.
    ///
    /// The default uses central differences.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nx, ny) = (self.n_x(), self.n_y());
        let v0 = DVector::zeros(self.n_v());
        let w0 = DVector::zeros(self.n_w());
        let mut a = DMatrix::zeros(nx, nx);
        let mut c = DMatrix::zeros(ny, nx);
        for i in 0..nx {
            let d = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += d;
            xm[i] -= d;
            let df = (self.dynamics(&xp, u, &v0) - self.dynamics(&xm, u, &v0)) / (2.0 * d);
            let dh = (self.output(&xp, u, &w0) - self.output(&xm, u, &w0)) / (2.0 * d);
            a.set_column(i, &df);
            c.set_column(i, &dh);
        }
        (a, c)
    }
}
