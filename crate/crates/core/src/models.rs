//! Motion, sensor and clutter models, and the class registry that binds each
//! target class to its bank of jump-Markov motion models.
//!
//! State ordering is `[px, vx, py, vy, pz, vz]`. Measurements from the radar
//! sensor are `[azimuth, elevation, range]` where azimuth is measured from the
//! +y axis towards +x and elevation is the angle away from the +z axis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Matrix3x6, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 6;
pub const MEAS_DIM: usize = 3;

pub type StateVector = Vector6<f64>;
pub type StateMatrix = Matrix6<f64>;
pub type Measurement = Vector3<f64>;
pub type MeasurementMatrix = Matrix3<f64>;
pub type ObservationMatrix = Matrix3x6<f64>;

/// Below this turn rate (rad/s) the coordinated-turn matrix is replaced by
/// its constant-velocity limit.
pub const CT_MIN_TURN_RATE: f64 = 1e-9;

/// Horizontal distance (m) under which the radar Jacobian is evaluated on a
/// circle of this radius instead of at the (singular) z-axis.
pub const LINEARIZATION_FLOOR_M: f64 = 1.0;

/// Index of a target class inside a [`ClassRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub usize);

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be finite, got {v}")))
    }
}

/// Constant-velocity transition: per axis `[[1, dt], [0, 1]]`.
pub fn cv_transition(dt: f64) -> Result<StateMatrix> {
    finite("dt", dt)?;
    let mut f = StateMatrix::identity();
    for axis in 0..3 {
        f[(2 * axis, 2 * axis + 1)] = dt;
    }
    Ok(f)
}

/// Coordinated-turn transition. The x axis moves at constant velocity while
/// the (vy, vz) velocity pair rotates by `turn_rate * dt`.
pub fn ct_transition(turn_rate: f64, dt: f64) -> Result<StateMatrix> {
    finite("turn_rate", turn_rate)?;
    finite("dt", dt)?;
    if turn_rate.abs() < CT_MIN_TURN_RATE {
        return cv_transition(dt);
    }
    let (s, c) = (turn_rate * dt).sin_cos();
    let w = turn_rate;
    #[rustfmt::skip]
    let f = StateMatrix::from_row_slice(&[
        1.0, dt,  0.0, 0.0,           0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,           0.0, 0.0,
        0.0, 0.0, 1.0, s / w,         0.0, -(1.0 - c) / w,
        0.0, 0.0, 0.0, c,             0.0, -s,
        0.0, 0.0, 0.0, (1.0 - c) / w, 1.0, s / w,
        0.0, 0.0, 0.0, s,             0.0, c,
    ]);
    Ok(f)
}

/// Discretised white-acceleration noise:
/// `sigma_sq * I3 ⊗ [[dt⁴/4, dt³/2], [dt³/2, dt²]]`.
pub fn process_noise(dt: f64, sigma_sq: f64) -> Result<StateMatrix> {
    finite("dt", dt)?;
    finite("sigma_sq", sigma_sq)?;
    if sigma_sq < 0.0 {
        return Err(Error::param(format!("sigma_sq must be >= 0, got {sigma_sq}")));
    }
    if dt < 0.0 {
        return Err(Error::param(format!("dt must be >= 0, got {dt}")));
    }
    let (d2, d3, d4) = (dt * dt, dt.powi(3), dt.powi(4));
    let mut q = StateMatrix::zeros();
    for axis in 0..3 {
        let (p, v) = (2 * axis, 2 * axis + 1);
        q[(p, p)] = sigma_sq * d4 / 4.0;
        q[(p, v)] = sigma_sq * d3 / 2.0;
        q[(v, p)] = sigma_sq * d3 / 2.0;
        q[(v, v)] = sigma_sq * d2;
    }
    Ok(q)
}

/// One step of the model Markov chain: `out[j] = Σ_i in[i] · switch[i][j]`.
pub fn markov_predict(weights: &[f64], switch: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = weights.len();
    if switch.nrows() != n || switch.ncols() != n {
        return Err(Error::param(format!(
            "weights have length {n} but switch matrix is {}x{}",
            switch.nrows(),
            switch.ncols()
        )));
    }
    Ok((0..n)
        .map(|to| (0..n).map(|from| weights[from] * switch[(from, to)]).sum())
        .collect())
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn position(x: &StateVector) -> (f64, f64, f64) {
    (x[0], x[2], x[4])
}

/// Noiseless radar observation `[azimuth, elevation, range]`.
///
/// Azimuth is `atan2(px, py)`, defined as 0 directly above the sensor.
pub fn observe(x: &StateVector) -> Result<Measurement> {
    let (px, py, pz) = position(x);
    let r1 = px * px + py * py;
    let r2 = r1 + pz * pz;
    if !(r2 > 0.0) {
        return Err(Error::SingularGeometry(
            "target position coincides with the sensor".into(),
        ));
    }
    let azimuth = if r1 == 0.0 { 0.0 } else { px.atan2(py) };
    let elevation = r1.sqrt().atan2(pz);
    Ok(Measurement::new(azimuth, elevation, r2.sqrt()))
}

/// Jacobian of [`observe`] with respect to the state. Velocity columns are zero.
pub fn observation_jacobian(x: &StateVector) -> Result<ObservationMatrix> {
    let (px, py, pz) = position(x);
    let r1 = px * px + py * py;
    if !(r1 > 0.0) || !r1.is_finite() {
        return Err(Error::SingularGeometry(
            "Jacobian undefined on the sensor's vertical axis".into(),
        ));
    }
    let r2 = r1 + pz * pz;
    let sr1 = r1.sqrt();
    let sr2 = r2.sqrt();
    let mut h = ObservationMatrix::zeros();
    h[(0, 0)] = py / r1;
    h[(0, 2)] = -px / r1;
    h[(1, 0)] = px * pz / (r2 * sr1);
    h[(1, 2)] = py * pz / (r2 * sr1);
    h[(1, 4)] = -sr1 / r2;
    h[(2, 0)] = px / sr2;
    h[(2, 2)] = py / sr2;
    h[(2, 4)] = pz / sr2;
    Ok(h)
}

fn check_symmetric_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!("{name} has non-finite entries")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * m.amax().max(1.0) {
        return Err(Error::param(format!("{name} is not symmetric")));
    }
    let eig = SymmetricEigen::new(m.clone());
    let tol = 1e-9 * m.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::param(format!("{name} is not positive semi-definite")));
    }
    Ok(())
}

/// A linear-Gaussian motion model `x' = F x + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub id: usize,
    pub name: String,
    pub transition: StateMatrix,
    pub noise: StateMatrix,
}

impl MotionModel {
    pub fn new(
        id: usize,
        name: impl Into<String>,
        transition: StateMatrix,
        noise: StateMatrix,
    ) -> Result<Self> {
        if transition.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("transition matrix has non-finite entries"));
        }
        check_symmetric_psd("process noise", &DMatrix::from_iterator(6, 6, noise.iter().copied()))?;
        Ok(Self {
            id,
            name: name.into(),
            transition,
            noise,
        })
    }

    pub fn constant_velocity(id: usize, dt: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(id, "cv", cv_transition(dt)?, process_noise(dt, sigma_sq)?)
    }

    pub fn coordinated_turn(id: usize, turn_rate: f64, dt: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(
            id,
            format!("ct({:.6} rad/s)", turn_rate),
            ct_transition(turn_rate, dt)?,
            process_noise(dt, sigma_sq)?,
        )
    }
}

/// A target class: its motion-model bank, Markov switching matrix and the
/// class-dependent survival/detection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetClassSpec {
    pub id: ClassId,
    pub name: String,
    pub models: Vec<MotionModel>,
    /// Row-stochastic; `switch[(from, to)]`.
    pub switch: DMatrix<f64>,
    pub p_survive: f64,
    pub p_detect: f64,
}

impl TargetClassSpec {
    pub fn new(
        id: ClassId,
        name: impl Into<String>,
        models: Vec<MotionModel>,
        switch: DMatrix<f64>,
        p_survive: f64,
        p_detect: f64,
    ) -> Result<Self> {
        let name = name.into();
        if models.is_empty() {
            return Err(Error::param(format!("class {name}: empty model bank")));
        }
        let n = models.len();
        if switch.nrows() != n || switch.ncols() != n {
            return Err(Error::param(format!(
                "class {name}: switch matrix must be {n}x{n}"
            )));
        }
        for (i, row) in switch.row_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::param(format!(
                    "class {name}: switch row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!(
                    "class {name}: switch row {i} sums to {s}"
                )));
            }
        }
        for (label, p) in [("p_survive", p_survive), ("p_detect", p_detect)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("class {name}: {label} = {p} not in [0, 1]")));
            }
        }
        for (i, m) in models.iter().enumerate() {
            if m.id != i {
                return Err(Error::param(format!(
                    "class {name}: model at position {i} has id {}",
                    m.id
                )));
            }
        }
        Ok(Self {
            id,
            name,
            models,
            switch,
            p_survive,
            p_detect,
        })
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }
}

/// Ordered set of target classes; `ClassId(i)` is the class at position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRegistry {
    classes: Vec<TargetClassSpec>,
}

impl ClassRegistry {
    pub fn new(classes: Vec<TargetClassSpec>) -> Result<Self> {
        for (i, c) in classes.iter().enumerate() {
            if c.id != ClassId(i) {
                return Err(Error::config(format!(
                    "class '{}' at position {i} has id {}",
                    c.name, c.id
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn get(&self, id: ClassId) -> Result<&TargetClassSpec> {
        self.classes
            .get(id.0)
            .ok_or_else(|| Error::config(format!("class {id} is not registered")))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TargetClassSpec> {
        self.classes.iter()
    }

    pub fn find(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorMode {
    /// `z = H x + v` with a fixed observation matrix.
    Linear(ObservationMatrix),
    /// Azimuth / elevation / range radar, linearised per hypothesis.
    Ekf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub noise: MeasurementMatrix,
    pub mode: SensorMode,
}

impl SensorModel {
    pub fn new(noise: MeasurementMatrix, mode: SensorMode) -> Result<Self> {
        check_symmetric_psd("measurement noise", &DMatrix::from_iterator(3, 3, noise.iter().copied()))?;
        Ok(Self { noise, mode })
    }

    /// Position-only linear sensor.
    pub fn linear_position(noise: MeasurementMatrix) -> Result<Self> {
        let mut h = ObservationMatrix::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        h[(2, 4)] = 1.0;
        Self::new(noise, SensorMode::Linear(h))
    }

    pub fn radar(noise: MeasurementMatrix) -> Result<Self> {
        Self::new(noise, SensorMode::Ekf)
    }

    /// Noiseless measurement of a state.
    pub fn measure(&self, x: &StateVector) -> Result<Measurement> {
        match &self.mode {
            SensorMode::Linear(h) => Ok(h * x),
            SensorMode::Ekf => observe(x),
        }
    }

    /// Predicted measurement and observation matrix at a linearisation point.
    ///
    /// Near the vertical axis the radar Jacobian is taken on a circle of
    /// radius [`LINEARIZATION_FLOOR_M`] around the axis; the predicted
    /// measurement itself is always `h(x)`.
    pub fn linearize(&self, x: &StateVector) -> Result<(Measurement, ObservationMatrix)> {
        match &self.mode {
            SensorMode::Linear(h) => Ok((h * x, *h)),
            SensorMode::Ekf => {
                let zbar = observe(x)?;
                let r1 = (x[0] * x[0] + x[2] * x[2]).sqrt();
                let h = if r1 >= LINEARIZATION_FLOOR_M {
                    observation_jacobian(x)?
                } else {
                    let mut p = *x;
                    if r1 > 0.0 {
                        p[0] *= LINEARIZATION_FLOOR_M / r1;
                        p[2] *= LINEARIZATION_FLOOR_M / r1;
                    } else {
                        p[0] = 0.0;
                        p[2] = LINEARIZATION_FLOOR_M;
                    }
                    observation_jacobian(&p)?
                };
                Ok((zbar, h))
            }
        }
    }

    /// `z - zbar`, with the azimuth difference wrapped for the radar.
    pub fn innovation(&self, z: &Measurement, zbar: &Measurement) -> Measurement {
        let mut d = z - zbar;
        if self.mode == SensorMode::Ekf {
            d[0] = wrap_angle(d[0]);
        }
        d
    }

    /// Brings a measurement into canonical range (azimuth in `(-π, π]`).
    pub fn canonicalize(&self, mut z: Measurement) -> Measurement {
        if self.mode == SensorMode::Ekf {
            z[0] = wrap_angle(z[0]);
        }
        z
    }
}

/// Axis-aligned box in measurement space, one `[lo, hi]` interval per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRegion {
    pub bounds: [[f64; 2]; 3],
}

impl MeasurementRegion {
    pub fn new(bounds: [[f64; 2]; 3]) -> Result<Self> {
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::param(format!(
                    "measurement region axis {i}: [{lo}, {hi}] is empty or non-finite"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Azimuth (-π, π] × elevation [0, π/2] × range [0, max_range].
    pub fn radar(max_range: f64) -> Result<Self> {
        Self::new([[-PI, PI], [0.0, PI / 2.0], [0.0, max_range]])
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|[lo, hi]| hi - lo).product()
    }

    pub fn contains(&self, z: &Measurement) -> bool {
        self.bounds
            .iter()
            .zip(z.iter())
            .all(|([lo, hi], v)| *v >= *lo && *v <= *hi)
    }
}

/// Poisson clutter, uniform over a measurement-space region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterModel {
    pub rate: f64,
    pub region: MeasurementRegion,
}

impl ClutterModel {
    pub fn new(rate: f64, region: MeasurementRegion) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::param(format!("clutter rate must be >= 0, got {rate}")));
        }
        Ok(Self { rate, region })
    }

    pub fn intensity(&self, z: &Measurement) -> f64 {
        clutter_intensity(z, self)
    }
}

/// κ(z) = λ_c / V inside the region, 0 outside.
pub fn clutter_intensity(z: &Measurement, model: &ClutterModel) -> f64 {
    if model.rate == 0.0 || !model.region.contains(z) {
        0.0
    } else {
        model.rate / model.region.volume()
    }
}
