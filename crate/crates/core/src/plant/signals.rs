//! Exogenous time signals: inputs, disturbances and measurement noise.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PlantError;

pub trait Signal: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> DVector<f64>;
}

/// Input `u`, disturbance `v` and measurement noise `w`.
#[derive(Clone)]
pub struct SignalBundle {
    pub u: Arc<dyn Signal>,
    pub v: Arc<dyn Signal>,
    pub w: Arc<dyn Signal>,
}

impl SignalBundle {
    pub fn new(u: Arc<dyn Signal>, v: Arc<dyn Signal>, w: Arc<dyn Signal>) -> Self {
        Self { u, v, w }
    }

    pub fn zero(n_u: usize, n_v: usize, n_w: usize) -> Self {
        Self::new(Arc::new(Zero(n_u)), Arc::new(Zero(n_v)), Arc::new(Zero(n_w)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Zero(pub usize);

impl Signal for Zero {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _t: f64) -> DVector<f64> {
        DVector::zeros(self.0)
    }
}

pub struct FnSignal<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> DVector<f64> + Send + Sync> FnSignal<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64) -> DVector<f64> + Send + Sync> Signal for FnSignal<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64) -> DVector<f64> {
        (self.f)(t)
    }
}

/// Uniform random knots every `interval` seconds, linearly interpolated.
///
/// Knot `k` is drawn from a ChaCha stream positioned at a word offset derived
/// from `k`, so a value never depends on which other knots were evaluated.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearNoise {
    seed: u64,
    interval: f64,
    amplitude: f64,
}

impl PiecewiseLinearNoise {
    pub fn new(seed: u64, interval: f64, amplitude: f64) -> Self {
        assert!(interval > 0.0, "noise interval must be positive");
        Self { seed, interval, amplitude }
    }

    pub fn knot(&self, k: u64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(2 * k as u128);
        let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.amplitude * (2.0 * unit - 1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = (t / self.interval).max(0.0);
        let k = s.floor();
        let frac = s - k;
        let k = k as u64;
        let a = self.knot(k);
        if frac == 0.0 {
            return a;
        }
        a + (self.knot(k + 1) - a) * frac
    }
}

impl Signal for PiecewiseLinearNoise {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, self.value(t))
    }
}

pub fn piecewise_linear_noise(seed: u64, interval: f64, amplitude: f64) -> PiecewiseLinearNoise {
    PiecewiseLinearNoise::new(seed, interval, amplitude)
}

/// `amplitude · sin(frequency · t)`.
#[derive(Debug, Clone, Copy)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Signal for Sinusoid {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, self.amplitude * (self.frequency * t).sin())
    }
}

pub fn sinusoid_noise(amplitude: f64, frequency: f64) -> Sinusoid {
    Sinusoid { amplitude, frequency }
}

/// Scalar table, linear inside the time range and held constant outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self, PlantError> {
        if rows.is_empty() {
            return Err(PlantError::MalformedProfile("profile has no rows".into()));
        }
        if rows.iter().any(|r| !r.0.is_finite() || !r.1.is_finite()) {
            return Err(PlantError::MalformedProfile("profile values must be finite".into()));
        }
        if let Some(w) = rows.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(PlantError::MalformedProfile(format!(
                "times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let (times, values) = rows.into_iter().unzip();
        Ok(Self { times, values })
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&k| k <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        self.values[i] + (self.values[i + 1] - self.values[i]) * (t - t0) / (t1 - t0)
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

impl Signal for Tabulated {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_element(1, self.value(t))
    }
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

pub(crate) fn parse_two_column(text: &str) -> Result<Vec<(f64, f64)>, PlantError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PlantError::MalformedProfile(e.to_string()))?;
        if rec.len() != 2 {
            return Err(PlantError::MalformedProfile(format!(
                "row {} has {} columns, expected 2",
                i + 1,
                rec.len()
            )));
        }
        match (parse_field(&rec[0]), parse_field(&rec[1])) {
            (Some(a), Some(b)) => rows.push((a, b)),
            _ if i == 0 => continue,
            _ => {
                return Err(PlantError::MalformedProfile(format!(
                    "row {} is not numeric: {:?}",
                    i + 1,
                    rec.iter().collect::<Vec<_>>()
                )))
            }
        }
    }
    Ok(rows)
}

pub(crate) fn read_two_column_csv(path: &Path) -> Result<Vec<(f64, f64)>, PlantError> {
    let text = std::fs::read_to_string(path).map_err(|e| PlantError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_two_column(&text)
}

/// Parses `time_s,current_A` rows (optional header).
pub fn parse_current_profile(text: &str) -> Result<Tabulated, PlantError> {
    Tabulated::new(parse_two_column(text)?)
}

pub fn load_current_profile(path: &Path) -> Result<Tabulated, PlantError> {
    Tabulated::new(read_two_column_csv(path)?)
}

/// Repeating 60 s drive cycle of current pulses within ±100 A, net discharging
/// about 1.5 % SOC per cycle on a 25 Ah cell.
pub fn synthetic_phev_profile(t_end: f64) -> Tabulated {
    // (duration, current) plateaus; 0.5 s linear ramps between them.
    const CYCLE: [(f64, f64); 8] = [
        (8.0, -60.0),
        (6.0, -100.0),
        (6.0, 0.0),
        (5.0, 45.0),
        (10.0, -35.0),
        (5.0, 80.0),
        (12.0, -50.0),
        (8.0, 10.0),
    ];
    const RAMP: f64 = 0.5;
    let mut rows = vec![(0.0, 0.0)];
    let mut t = 0.0;
    while t <= t_end + 60.0 {
        for &(dur, amps) in &CYCLE {
            rows.push((t + RAMP, amps));
            rows.push((t + dur, amps));
            t += dur;
        }
    }
    Tabulated::new(rows).expect("synthetic profile is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_amplitude_noise_is_zero() {
        let n = piecewise_linear_noise(7, 0.01, 0.0);
        for i in 0..100 {
            assert_eq!(n.value(i as f64 * 0.0037), 0.0);
        }
    }

    #[test]
    fn noise_knots_and_midpoints() {
        let n = piecewise_linear_noise(42, 0.01, 0.1);
        for k in 0..50u64 {
            let (a, b) = (n.knot(k), n.knot(k + 1));
            assert!(a.abs() <= 0.1);
            assert_eq!(n.value(k as f64 * 0.01 + 0.0), n.value(k as f64 * 0.01));
            let mid = n.value((k as f64 + 0.5) * 0.01);
            assert_abs_diff_eq!(mid, 0.5 * (a + b), epsilon = 1e-12);
        }
        // Knots at exact multiples of the interval return the stored sample.
        assert_eq!(n.value(0.0), n.knot(0));
        assert_eq!(n.value(0.5), n.knot(50));
    }

    #[test]
    fn noise_knots_look_uniform() {
        let n = piecewise_linear_noise(3, 0.01, 1.0);
        let vals: Vec<f64> = (0..4000).map(|k| n.knot(k)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0 / 3.0).abs() < 0.03);
    }

    #[test]
    fn sinusoid_values() {
        let w = sinusoid_noise(0.01, 10.0);
        assert_eq!(w.eval(0.0)[0], 0.0);
        assert_abs_diff_eq!(w.eval(PI / 20.0)[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(w.eval(PI / 10.0)[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn profile_interpolation_and_hold() {
        let p = parse_current_profile("0,5\n").unwrap();
        assert_eq!(p.value(-3.0), 5.0);
        assert_eq!(p.value(100.0), 5.0);
        let p = parse_current_profile("time_s,current_A\n0,0\n1,10\n").unwrap();
        assert_abs_diff_eq!(p.value(0.5), 5.0);
        assert_eq!(p.value(2.0), 10.0);
    }

    #[test]
    fn profile_errors() {
        assert!(matches!(parse_current_profile("0,1\n1,x\n"), Err(PlantError::MalformedProfile(_))));
        assert!(matches!(parse_current_profile("0,1\n0,2\n"), Err(PlantError::MalformedProfile(_))));
        assert!(matches!(parse_current_profile("1,1\n0,2\n"), Err(PlantError::MalformedProfile(_))));
        assert!(matches!(parse_current_profile("time,amps\n"), Err(PlantError::MalformedProfile(_))));
        assert!(matches!(parse_current_profile("0,1,2\n"), Err(PlantError::MalformedProfile(_))));
    }

    #[test]
    fn profile_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "time_s,current_A\n0,-20\n10,20\n").unwrap();
        let p = load_current_profile(&path).unwrap();
        assert_abs_diff_eq!(p.value(5.0), 0.0);
        assert!(load_current_profile(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn synthetic_profile_bounds() {
        let p = synthetic_phev_profile(600.0);
        assert!(p.rows().all(|(_, i)| i.abs() <= 100.0));
        // Net charge over one cycle: about -1800 A·s.
        let n = 60_000;
        let charge: f64 = (0..n).map(|k| p.value(k as f64 * 1e-3) * 1e-3).sum();
        assert!(charge < -1000.0 && charge > -1700.0, "{charge}");
    }

    proptest! {
        #[test]
        fn noise_is_deterministic_per_seed(seed in any::<u64>(), t in 0.0f64..100.0) {
            let a = piecewise_linear_noise(seed, 0.01, 0.1);
            let b = piecewise_linear_noise(seed, 0.01, 0.1);
            prop_assert_eq!(a.value(t).to_bits(), b.value(t).to_bits());
            prop_assert!(a.value(t).abs() <= 0.1);
        }
    }
}
