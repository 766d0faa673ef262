//! First-order RC equivalent circuit of a Li-ion cell.
//!
//! State is `(U_RC [V], SOC [%])`. SOC is kept in percent, so the capacity is
//! used as ampere-seconds per percent and `u / Q` is a rate in %/s. Positive
//! current charges the cell.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Plant, PlantError};

/// Typical Li-ion open-circuit voltage, SOC in percent to volts.
pub fn default_ocv_table() -> Vec<(f64, f64)> {
    const V: [f64; 21] = [
        3.00, 3.35, 3.45, 3.51, 3.55, 3.58, 3.61, 3.63, 3.65, 3.67, 3.70, 3.73, 3.77, 3.81, 3.85,
        3.90, 3.95, 4.00, 4.06, 4.12, 4.20,
    ];
    V.iter().enumerate().map(|(i, &v)| (5.0 * i as f64, v)).collect()
}

/// Piecewise-linear OCV map, extended linearly past its end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve {
    soc: Vec<f64>,
    volts: Vec<f64>,
}

impl OcvCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PlantError> {
        if points.len() < 2 {
            return Err(PlantError::MalformedProfile("OCV curve needs at least two knots".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PlantError::MalformedProfile("OCV knots must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(PlantError::MalformedProfile("OCV knots must be finite".into()));
        }
        let (soc, volts) = points.into_iter().unzip();
        Ok(Self { soc, volts })
    }

    pub fn default_curve() -> Self {
        Self::new(default_ocv_table()).expect("bundled table is valid")
    }

    /// Reads `soc_percent,voltage_V` rows; a non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Self, PlantError> {
        let rows = super::signals::read_two_column_csv(path)?;
        Self::new(rows)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.soc.iter().copied().zip(self.volts.iter().copied())
    }

    fn segment(&self, s: f64) -> usize {
        let n = self.soc.len();
        match self.soc.partition_point(|&k| k <= s) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (s0, s1) = (self.soc[i], self.soc[i + 1]);
        let (v0, v1) = (self.volts[i], self.volts[i + 1]);
        v0 + (v1 - v0) * (s - s0) / (s1 - s0)
    }

    /// One-sided slope of the segment containing `s` (right segment at knots).
    pub fn slope(&self, s: f64) -> f64 {
        let i = self.segment(s);
        (self.volts[i + 1] - self.volts[i]) / (self.soc[i + 1] - self.soc[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryParams {
    /// RC time constant [s].
    pub tau: f64,
    /// RC resistance [Ω].
    pub r: f64,
    /// Capacity [Ah].
    pub capacity_ah: f64,
    /// Internal resistance [Ω].
    pub r_int: f64,
    pub ocv_curve: Option<OcvCurve>,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            tau: 7.0,
            r: 0.5e-3,
            capacity_ah: 25.0,
            r_int: 1e-3,
            ocv_curve: Some(OcvCurve::default_curve()),
        }
    }
}

impl BatteryParams {
    /// `c = τ / R` [F].
    pub fn capacitance(&self) -> f64 {
        self.tau / self.r
    }

    /// Capacity in ampere-seconds per percent of SOC.
    pub fn q_per_percent(&self) -> f64 {
        self.capacity_ah * 3600.0 / 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    params: BatteryParams,
    c: f64,
    q: f64,
}

impl Battery {
    pub fn new(params: BatteryParams) -> Self {
        let c = params.capacitance();
        let q = params.q_per_percent();
        Self { params, c, q }
    }

    pub fn params(&self) -> &BatteryParams {
        &self.params
    }

    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-1.0 / self.params.tau, 0.0, 0.0, 0.0])
    }

    pub fn b(&self) -> DVector<f64> {
        DVector::from_vec(vec![-1.0 / self.c, 1.0 / self.q])
    }

    /// `y = −U_RC + f(SOC) − R_int·u + w`.
    pub fn try_output(&self, x: &DVector<f64>, u: f64, w: f64) -> Result<f64, PlantError> {
        let ocv = self.params.ocv_curve.as_ref().ok_or(PlantError::OcvCurveMissing)?;
        Ok(-x[0] + ocv.eval(x[1]) - self.params.r_int * u + w)
    }
}

fn first(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v[0]
    }
}

impl Plant for Battery {
    fn n_x(&self) -> usize {
        2
    }
    fn n_u(&self) -> usize {
        1
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

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        let i = first(u);
        DVector::from_vec(vec![-x[0] / self.params.tau - i / self.c, i / self.q])
    }

    /// Panics without an OCV curve; use [`Battery::try_output`] to handle that case.
    fn output(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let y = self.try_output(x, first(u), first(w)).expect("battery OCV curve configured");
        DVector::from_element(1, y)
    }

    fn jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let slope = self.params.ocv_curve.as_ref().map_or(0.0, |c| c.slope(x[1]));
        (self.a(), DMatrix::from_row_slice(1, 2, &[-1.0, slope]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn u1(a: f64) -> DVector<f64> {
        DVector::from_element(1, a)
    }

    #[test]
    fn dynamics_hand_values() {
        let b = Battery::new(BatteryParams::default());
        let empty = DVector::zeros(0);
        assert_eq!(b.dynamics(&v2(0.0, 50.0), &u1(0.0), &empty).as_slice(), &[0.0, 0.0]);
        let d = b.dynamics(&v2(1.0, 50.0), &u1(0.0), &empty);
        assert_abs_diff_eq!(d[0], -1.0 / 7.0, epsilon = 1e-15);
        assert_eq!(d[1], 0.0);
        // A current of Q ampere-seconds per percent moves SOC by 1 %/s.
        let q = b.params().q_per_percent();
        let d = b.dynamics(&v2(0.0, 50.0), &u1(q), &empty);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[0], -q / 14000.0, epsilon = 1e-12);
    }

    #[test]
    fn derived_constants() {
        let p = BatteryParams::default();
        assert_abs_diff_eq!(p.capacitance(), 14000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.q_per_percent(), 900.0, epsilon = 1e-12);
    }

    #[test]
    fn output_hand_values() {
        let b = Battery::new(BatteryParams::default());
        let curve = OcvCurve::default_curve();
        for (s, v) in curve.knots() {
            assert_abs_diff_eq!(b.try_output(&v2(0.0, s), 0.0, 0.0).unwrap(), v, epsilon = 1e-12);
            assert_abs_diff_eq!(b.try_output(&v2(1.0, s), 0.0, 0.0).unwrap(), v - 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.try_output(&v2(0.0, s), 10.0, 0.01).unwrap(), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_curve() {
        let b = Battery::new(BatteryParams { ocv_curve: None, ..BatteryParams::default() });
        assert_eq!(b.try_output(&v2(0.0, 50.0), 0.0, 0.0), Err(PlantError::OcvCurveMissing));
    }

    #[test]
    fn ocv_default_is_monotone_and_extrapolates() {
        let c = OcvCurve::default_curve();
        let knots: Vec<_> = c.knots().collect();
        assert_eq!(knots.len(), 21);
        assert!(knots.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_abs_diff_eq!(c.eval(0.0), 3.0);
        assert_abs_diff_eq!(c.eval(100.0), 4.2);
        let lo = (knots[1].1 - knots[0].1) / 5.0;
        let hi = (knots[20].1 - knots[19].1) / 5.0;
        assert_abs_diff_eq!(c.eval(-10.0), 3.0 - 10.0 * lo, epsilon = 1e-12);
        assert_abs_diff_eq!(c.eval(110.0), 4.2 + 10.0 * hi, epsilon = 1e-12);
        assert_abs_diff_eq!(c.slope(-3.0), lo, epsilon = 1e-12);
        assert_abs_diff_eq!(c.slope(150.0), hi, epsilon = 1e-12);
        assert_abs_diff_eq!(c.eval(2.5), (3.0 + 3.35) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ocv_rejects_unsorted() {
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.0, 3.1)]).is_err());
        assert!(OcvCurve::new(vec![(0.0, 3.0)]).is_err());
    }

    #[test]
    fn soc_is_constant_without_current() {
        let b = Battery::new(BatteryParams::default());
        let empty = DVector::zeros(0);
        for s in [-5.0, 0.0, 37.0, 100.0, 120.0] {
            assert_eq!(b.dynamics(&v2(0.3, s), &u1(0.0), &empty)[1], 0.0);
        }
    }
}
