//! Dynamic bicycle model: kinematics, linear tire forces, the lateral
//! state-space form and one-step state prediction.
//!
//! Lateral state is `[v_y, r]` (lateral velocity, yaw rate) driven by the
//! front steering angle. The system matrices are built from the vehicle's
//! physical constants and a [`MatrixConvention`]; the QCar testbed constants
//! are the default parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default steering saturation, in radians.
pub const DEFAULT_STEERING_LIMIT: f64 = std::f64::consts::FRAC_PI_6;

/// Default integration step, in seconds.
pub const DEFAULT_DT: f64 = 0.01;

/// Physical constants of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Distance from the centre of mass to the front axle (m).
    pub lf: f64,
    /// Distance from the centre of mass to the rear axle (m).
    pub lr: f64,
    /// Yaw moment of inertia (kg·m²).
    pub iz: f64,
    /// Front cornering stiffness (N/rad).
    pub c1: f64,
    /// Rear cornering stiffness (N/rad).
    pub c2: f64,
    /// Nominal longitudinal speed the lateral model is linearised about (m/s).
    pub vx: f64,
}

impl VehicleParams {
    /// QCar testbed: 2.7 kg, axles 0.16 m from the centre of mass,
    /// I_z = 0.0441 kg·m², unit cornering stiffness, 1 m/s nominal speed.
    pub const QCAR: VehicleParams = VehicleParams {
        mass: 2.7,
        lf: 0.16,
        lr: 0.16,
        iz: 0.0441,
        c1: 1.0,
        c2: 1.0,
        vx: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("lf", self.lf),
            ("lr", self.lr),
            ("iz", self.iz),
            ("c1", self.c1),
            ("c2", self.c2),
            ("vx", self.vx),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        for (name, v) in [("mass", self.mass), ("iz", self.iz), ("lf", self.lf), ("lr", self.lr)] {
            if v <= 0.0 {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.vx == 0.0 {
            return Err(Error::param("vx", "must be non-zero"));
        }
        Ok(())
    }

    /// Kinematic sideslip at the centre of mass for a steering angle:
    /// `β = atan(l_r / (l_f + l_r) · tan δ)`.
    pub fn sideslip(&self, steering: f64) -> f64 {
        (self.lr / (self.lf + self.lr) * steering.tan()).atan()
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::QCAR
    }
}

/// Lateral velocity and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LateralState {
    pub vy: f64,
    pub r: f64,
}

impl LateralState {
    pub fn new(vy: f64, r: f64) -> Self {
        Self { vy, r }
    }

    pub fn is_finite(&self) -> bool {
        self.vy.is_finite() && self.r.is_finite()
    }
}

/// Planar pose and speed. Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    /// Global-frame position.
    pub gx: f64,
    pub gy: f64,
    /// Yaw angle ψ.
    pub yaw: f64,
    /// Velocity-vector sideslip β.
    pub sideslip: f64,
    /// Speed, non-negative.
    pub speed: f64,
}

/// Steering angle and longitudinal acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub steering: f64,
    pub accel: f64,
}

impl ControlInput {
    /// Builds an input, rejecting steering beyond `±limit`.
    pub fn new(steering: f64, accel: f64, limit: f64) -> Result<Self> {
        if !steering.is_finite() || !accel.is_finite() {
            return Err(Error::NonFinite("control input".into()));
        }
        if steering.abs() > limit {
            return Err(Error::param(
                "steering",
                format!("|{steering}| exceeds the steering limit {limit}"),
            ));
        }
        Ok(Self { steering, accel })
    }

    pub fn steering(steering: f64) -> Self {
        Self {
            steering,
            accel: 0.0,
        }
    }
}

/// Slip angles and forces under the linear tire model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireState {
    pub slip_front: f64,
    pub slip_rear: f64,
    pub lateral_front: f64,
    pub lateral_rear: f64,
    /// Longitudinal tire forces; zero because drag and drive forces are neglected.
    pub longitudinal_front: f64,
    pub longitudinal_rear: f64,
    /// Net body-frame force.
    pub fx: f64,
    pub fy: f64,
    /// Net yaw torque (N·m).
    pub torque: f64,
}

/// Linear tire forces for the given lateral state and steering.
pub fn tire_forces(params: &VehicleParams, lat: LateralState, u: ControlInput) -> Result<TireState> {
    if params.vx == 0.0 {
        return Err(Error::param("vx", "slip angles are undefined at zero speed"));
    }
    let delta = u.steering;
    let slip_front = (lat.vy + params.lf * lat.r) / params.vx - delta;
    let slip_rear = (lat.vy - params.lr * lat.r) / params.vx;
    let lateral_front = -params.c1 * slip_front;
    let lateral_rear = -params.c2 * slip_rear;
    let (fxf, fxr) = (0.0, 0.0);
    let (s, c) = delta.sin_cos();
    Ok(TireState {
        slip_front,
        slip_rear,
        lateral_front,
        lateral_rear,
        longitudinal_front: fxf,
        longitudinal_rear: fxr,
        fx: -fxf * c - lateral_front * s - fxr,
        fy: lateral_front * c - fxf * s + lateral_rear,
        torque: params.lf * (lateral_front * c - fxf * s) - params.lr * lateral_rear,
    })
}

/// Inertial velocity and heading rate `(ẋ, ẏ, ψ̇)` from speed, heading and sideslip.
pub fn kinematic_rates(state: &KinematicState, lr: f64) -> (f64, f64, f64) {
    let heading = state.yaw + state.sideslip;
    (
        state.speed * heading.cos(),
        state.speed * heading.sin(),
        state.speed / lr * state.sideslip.sin(),
    )
}

/// Sign used for the `ẏ cos ψ` term of the global-frame `Ẏ` rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KinematicsForm {
    /// `Ẏ = ẋ sin ψ − ẏ cos ψ`.
    #[default]
    AsPrinted,
    /// `Ẏ = ẋ sin ψ + ẏ cos ψ`.
    Textbook,
}

/// Second-order body rates and global-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyDerivatives {
    pub x_accel: f64,
    pub y_accel: f64,
    pub yaw_accel: f64,
    pub gx_rate: f64,
    pub gy_rate: f64,
}

/// Full dynamic-bicycle derivatives. `ẋ`, `ẏ` come from [`kinematic_rates`]
/// and `ψ̇` is the lateral state's yaw rate.
pub fn full_derivatives(
    params: &VehicleParams,
    kin: &KinematicState,
    lat: LateralState,
    u: ControlInput,
    form: KinematicsForm,
) -> Result<BodyDerivatives> {
    let tires = tire_forces(params, lat, u)?;
    let (xd, yd, _) = kinematic_rates(kin, params.lr);
    let yaw_rate = lat.r;
    let (sy, cy) = kin.yaw.sin_cos();
    let y_term = match form {
        KinematicsForm::AsPrinted => -yd * cy,
        KinematicsForm::Textbook => yd * cy,
    };
    Ok(BodyDerivatives {
        x_accel: yaw_rate * yd + u.accel,
        y_accel: -yaw_rate * xd
            + 2.0 / params.mass * (tires.lateral_front * u.steering.cos() + tires.lateral_rear),
        yaw_accel: 2.0 / params.iz * (params.lf * tires.lateral_front - params.lr * tires.lateral_rear),
        gx_rate: xd * cy - yd * sy,
        gy_rate: xd * sy + y_term,
    })
}

/// How the yaw-damping entry `D` of the system matrix is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixConvention {
    /// `D = (l_f² C1 − l_r² C2) / (I_z v_x)`.
    #[default]
    AsPrinted,
    /// `D = (l_f² C1 + l_r² C2) / (I_z v_x)`.
    SumForm,
}

/// `d/dt [v_y, r] = [[a, b], [c, d]]·[v_y, r] + [e, f]·δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// `None` for matrices given entry-by-entry rather than derived from parameters.
    pub convention: Option<MatrixConvention>,
}

impl StateSpace {
    /// Coefficients reported for the QCar testbed, taken verbatim.
    pub const QCAR_REPORTED: StateSpace = StateSpace {
        a: 0.7407,
        b: 0.0,
        c: 0.0,
        d: 1.1598,
        e: -0.3703,
        f: -3.6244,
        convention: None,
    };

    pub fn from_entries(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<Self> {
        let ss = StateSpace {
            a,
            b,
            c,
            d,
            e,
            f,
            convention: None,
        };
        if ss.entries().iter().all(|v| v.is_finite()) {
            Ok(ss)
        } else {
            Err(Error::NonFinite("state-space entries".into()))
        }
    }

    pub fn entries(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    /// Time derivative of the lateral state.
    pub fn derivatives(&self, lat: LateralState, steering: f64) -> LateralState {
        LateralState {
            vy: self.a * lat.vy + self.b * lat.r + self.e * steering,
            r: self.c * lat.vy + self.d * lat.r + self.f * steering,
        }
    }

    /// One explicit-Euler step of length `dt`.
    pub fn predict(&self, lat: LateralState, steering: f64, dt: f64) -> Result<LateralState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let rate = self.derivatives(lat, steering);
        Ok(LateralState {
            vy: lat.vy + dt * rate.vy,
            r: lat.r + dt * rate.r,
        })
    }
}

/// Lateral system matrices for the given parameters and convention.
pub fn system_matrices(params: &VehicleParams, convention: MatrixConvention) -> Result<StateSpace> {
    params.validate()?;
    let VehicleParams {
        mass,
        lf,
        lr,
        iz,
        c1,
        c2,
        vx,
    } = *params;
    let d_num = match convention {
        MatrixConvention::AsPrinted => lf * lf * c1 - lr * lr * c2,
        MatrixConvention::SumForm => lf * lf * c1 + lr * lr * c2,
    };
    let ss = StateSpace {
        a: (c1 + c2) / (mass * vx),
        b: (lf * c1 - lr * c2) / (mass * vx * vx),
        c: (lf * c1 - lr * c2) / iz,
        d: d_num / (iz * vx),
        e: -c1 / (mass * vx),
        f: -lf * c1 / iz,
        convention: Some(convention),
    };
    if ss.entries().iter().all(|v| v.is_finite()) {
        Ok(ss)
    } else {
        Err(Error::NonFinite("system matrices".into()))
    }
}

/// Builds the matrices and advances the lateral state by one Euler step.
pub fn predict_next_state(
    params: &VehicleParams,
    convention: MatrixConvention,
    lat: LateralState,
    u: ControlInput,
    dt: f64,
) -> Result<LateralState> {
    system_matrices(params, convention)?.predict(lat, u.steering, dt)
}

/// Where a simulator or featurizer takes its lateral matrices from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixSource {
    #[default]
    AsPrinted,
    SumForm,
    /// [`StateSpace::QCAR_REPORTED`], ignoring the vehicle parameters.
    Published,
}

impl MatrixSource {
    pub fn resolve(self, params: &VehicleParams) -> Result<StateSpace> {
        match self {
            MatrixSource::AsPrinted => system_matrices(params, MatrixConvention::AsPrinted),
            MatrixSource::SumForm => system_matrices(params, MatrixConvention::SumForm),
            MatrixSource::Published => Ok(StateSpace::QCAR_REPORTED),
        }
    }
}

impl std::str::FromStr for MatrixSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(MatrixSource::AsPrinted),
            "sum-form" => Ok(MatrixSource::SumForm),
            "published" => Ok(MatrixSource::Published),
            other => Err(Error::param(
                "matrices",
                format!("unknown source `{other}` (expected as-printed, sum-form or published)"),
            )),
        }
    }
}
