//! Synthetic telemetry: scripted driving scenarios integrated through the
//! lateral model, plus depth-camera blinding attacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Label, LaserEntry, LaserLog, TelemetryFrame};
use crate::dynamics::{ControlInput, LateralState, MatrixSource, StateSpace, VehicleParams, DEFAULT_STEERING_LIMIT};
use crate::error::{Error, Result};
use crate::par;

/// Slack for interval membership and range checks on float timestamps.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SteeringProgram {
    Constant { angle: f64 },
    Step { before: f64, after: f64, at: f64 },
    Sinusoid {
        amplitude: f64,
        /// Hz.
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Default for SteeringProgram {
    fn default() -> Self {
        SteeringProgram::Constant { angle: 0.0 }
    }
}

impl SteeringProgram {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            SteeringProgram::Constant { angle } => angle,
            SteeringProgram::Step { before, after, at } => {
                if t < at {
                    before
                } else {
                    after
                }
            }
            SteeringProgram::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin(),
        }
    }
}

/// Desired speed `speed` from time `from` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub from: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEvent {
    pub appear: f64,
    /// Range when first seen, metres.
    pub distance: f64,
    /// Obstacle's own speed toward the vehicle, m/s.
    #[serde(default)]
    pub closing_speed: f64,
}

/// Per-channel Gaussian noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseLevels {
    pub speed: f64,
    pub yaw_rate: f64,
    pub distance: f64,
    pub lateral_speed: f64,
    pub yaw: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            speed: 0.01,
            yaw_rate: 0.005,
            distance: 0.02,
            lateral_speed: 0.01,
            yaw: 0.0,
        }
    }
}

impl NoiseLevels {
    pub const NONE: NoiseLevels = NoiseLevels {
        speed: 0.0,
        yaw_rate: 0.0,
        distance: 0.0,
        lateral_speed: 0.0,
        yaw: 0.0,
    };

    fn all(&self) -> [(&'static str, f64); 5] {
        [
            ("noise.speed", self.speed),
            ("noise.yaw_rate", self.yaw_rate),
            ("noise.distance", self.distance),
            ("noise.lateral_speed", self.lateral_speed),
            ("noise.yaw", self.yaw),
        ]
    }
}

/// Throttle law, braking and depth-sensor constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Longitudinal {
    /// Throttle percent per m/s of speed error.
    pub kp: f64,
    /// Acceleration at full throttle, m/s².
    pub throttle_gain: f64,
    /// Deceleration per m/s of overspeed, 1/s.
    pub brake_gain: f64,
    /// Brake when the measured range drops below this, metres.
    pub braking_threshold: f64,
    /// Depth reading with nothing in view.
    pub clear_distance: f64,
    /// Largest depth the camera reports.
    pub max_range: f64,
    /// Seconds stopped before an obstacle is cleared.
    pub obstacle_hold: f64,
}

impl Default for Longitudinal {
    fn default() -> Self {
        Self {
            kp: 50.0,
            throttle_gain: 4.0,
            brake_gain: 4.0,
            braking_threshold: 0.5,
            clear_distance: 4.0,
            max_range: 10.0,
            obstacle_hold: 1.0,
        }
    }
}

impl Longitudinal {
    /// Time constant of the unsaturated throttle response.
    pub fn time_constant(&self) -> f64 {
        100.0 / (self.kp * self.throttle_gain)
    }

    pub fn throttle(&self, desired: f64, speed: f64) -> f64 {
        (self.kp * (desired - speed)).clamp(0.0, 100.0)
    }

    pub fn accel(&self, throttle: f64, desired: f64, speed: f64) -> f64 {
        self.throttle_gain * throttle / 100.0 - self.brake_gain * (speed - desired).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub steering: SteeringProgram,
    pub speed: Vec<SpeedSegment>,
    pub obstacles: Vec<ObstacleEvent>,
    pub noise: NoiseLevels,
    pub longitudinal: Longitudinal,
    pub matrices: MatrixSource,
    pub steering_limit: f64,
    pub armed: bool,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration: 10.0,
            dt: 0.01,
            steering: SteeringProgram::default(),
            speed: vec![SpeedSegment { from: 0.0, speed: 1.0 }],
            obstacles: Vec::new(),
            noise: NoiseLevels::default(),
            longitudinal: Longitudinal::default(),
            matrices: MatrixSource::default(),
            steering_limit: DEFAULT_STEERING_LIMIT,
            armed: true,
            seed: 0,
        }
    }
}

fn finite_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !self.duration.is_finite() || self.duration < self.dt {
            return Err(Error::param("duration", format!("must be at least dt, got {}", self.duration)));
        }
        for (name, v) in self.noise.all() {
            finite_nonneg(name, v)?;
        }
        for seg in &self.speed {
            finite_nonneg("speed.from", seg.from)?;
            finite_nonneg("speed.speed", seg.speed)?;
        }
        if self.speed.windows(2).any(|w| w[1].from < w[0].from) {
            return Err(Error::param("speed", "segments must be ordered by start time"));
        }
        for o in &self.obstacles {
            finite_nonneg("obstacles.appear", o.appear)?;
            finite_nonneg("obstacles.closing_speed", o.closing_speed)?;
            if !(o.distance > 0.0) || !o.distance.is_finite() {
                return Err(Error::param("obstacles.distance", "must be positive"));
            }
        }
        let l = &self.longitudinal;
        for (name, v) in [
            ("longitudinal.kp", l.kp),
            ("longitudinal.throttle_gain", l.throttle_gain),
            ("longitudinal.brake_gain", l.brake_gain),
            ("longitudinal.braking_threshold", l.braking_threshold),
            ("longitudinal.clear_distance", l.clear_distance),
            ("longitudinal.max_range", l.max_range),
            ("longitudinal.obstacle_hold", l.obstacle_hold),
        ] {
            finite_nonneg(name, v)?;
        }
        if !(self.steering_limit > 0.0) {
            return Err(Error::param("steering_limit", "must be positive"));
        }
        Ok(())
    }

    /// Number of emitted frames.
    pub fn n_frames(&self) -> usize {
        (self.duration / self.dt + TIME_EPS).floor() as usize
    }

    pub fn desired_speed(&self, t: f64) -> f64 {
        self.speed
            .iter()
            .take_while(|s| s.from <= t + TIME_EPS)
            .last()
            .map_or(0.0, |s| s.speed)
    }
}

/// How blinding corrupts the depth reading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BlindingEffect {
    /// Reports the maximum range, i.e. nothing in view.
    #[default]
    Dropout,
    /// Holds the last reading taken before the interval.
    Frozen,
    /// Adds zero-mean Gaussian noise to the true reading.
    NoiseBurst { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackScript {
    /// Laser-on intervals `[start, end]`, inclusive, in seconds.
    pub intervals: Vec<(f64, f64)>,
    pub effect: BlindingEffect,
    pub max_range: f64,
}

impl Default for AttackScript {
    fn default() -> Self {
        Self {
            intervals: Vec::new(),
            effect: BlindingEffect::default(),
            max_range: Longitudinal::default().max_range,
        }
    }
}

impl AttackScript {
    pub fn new(intervals: Vec<(f64, f64)>) -> Self {
        Self {
            intervals,
            ..Self::default()
        }
    }

    /// Checks ordering, overlap and, if given, containment in `[t0, t1]`.
    pub fn validate(&self, range: Option<(f64, f64)>) -> Result<()> {
        if let BlindingEffect::NoiseBurst { std } = self.effect {
            finite_nonneg("effect.std", std)?;
        }
        finite_nonneg("max_range", self.max_range)?;
        let mut sorted = self.intervals.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(s, e) in &sorted {
            if !s.is_finite() || !e.is_finite() || s > e {
                return Err(Error::param("intervals", format!("[{s}, {e}] is not a valid interval")));
            }
            if let Some((t0, t1)) = range {
                if s < t0 - TIME_EPS || e > t1 + TIME_EPS {
                    return Err(Error::param(
                        "intervals",
                        format!("[{s}, {e}] lies outside the recording [{t0}, {t1}]"),
                    ));
                }
            }
        }
        if let Some(w) = sorted.windows(2).find(|w| w[1].0 <= w[0].1) {
            return Err(Error::param(
                "intervals",
                format!("[{}, {}] overlaps [{}, {}]", w[0].0, w[0].1, w[1].0, w[1].1),
            ));
        }
        Ok(())
    }

    pub fn active(&self, t: f64) -> bool {
        self.intervals
            .iter()
            .any(|&(s, e)| t >= s - TIME_EPS && t <= e + TIME_EPS)
    }
}

struct Obstacle {
    distance: f64,
    closing_speed: f64,
    stopped_for: f64,
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("validated std").sample(rng)
    } else {
        0.0
    }
}

/// Below this speed the vehicle counts as stopped.
const STOPPED_SPEED: f64 = 1e-3;

fn integrate(
    params: &VehicleParams,
    scenario: &Scenario,
    blinded: &dyn Fn(f64) -> bool,
) -> Result<Vec<TelemetryFrame>> {
    scenario.validate()?;
    params.validate()?;
    let model: StateSpace = scenario.matrices.resolve(params)?;
    let lon = &scenario.longitudinal;
    let noise = &scenario.noise;
    let dt = scenario.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut events = scenario.obstacles.clone();
    events.sort_by(|a, b| a.appear.total_cmp(&b.appear));
    let mut next_event = 0;
    let mut obstacle: Option<Obstacle> = None;
    let mut braking = false;

    let mut lat = LateralState::default();
    let mut yaw = 0.0;
    let mut speed = 0.0;
    let n = scenario.n_frames();
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        while next_event < events.len() && events[next_event].appear <= t + TIME_EPS {
            let e = events[next_event];
            obstacle = Some(Obstacle {
                distance: e.distance,
                closing_speed: e.closing_speed,
                stopped_for: 0.0,
            });
            braking = false;
            next_event += 1;
        }

        let true_range = obstacle.as_ref().map_or(lon.clear_distance, |o| o.distance);
        let measured_range = (true_range + gaussian(&mut rng, noise.distance)).clamp(0.0, lon.max_range);
        let blind = blinded(t);
        if !blind && obstacle.is_some() && measured_range < lon.braking_threshold {
            braking = true;
        }
        let desired = if braking && !blind { 0.0 } else { scenario.desired_speed(t) };
        let throttle = lon.throttle(desired, speed);
        let u = ControlInput::new(scenario.steering.at(t), 0.0, scenario.steering_limit)?;
        let steering = u.steering;

        frames.push(TelemetryFrame {
            timestamp: t,
            armed: scenario.armed,
            desired_speed: desired,
            longitudinal_speed: speed + gaussian(&mut rng, noise.speed),
            lateral_speed: lat.vy + gaussian(&mut rng, noise.lateral_speed),
            measured_speed: speed + gaussian(&mut rng, noise.speed),
            obstacle_distance: measured_range,
            steering_angle: steering,
            yaw_angle: yaw + gaussian(&mut rng, noise.yaw),
            yaw_rate: lat.r + gaussian(&mut rng, noise.yaw_rate),
            throttle,
            label: Label::Normal,
        });

        let beta = params.sideslip(steering);
        yaw += dt * speed / params.lr * beta.sin();
        lat = model.predict(lat, steering, dt)?;
        if !lat.is_finite() {
            return Err(Error::NonFinite(format!("lateral state at t = {t}")));
        }
        let new_speed = (speed + dt * lon.accel(throttle, desired, speed)).max(0.0);
        if let Some(o) = obstacle.as_mut() {
            o.distance -= dt * (speed + o.closing_speed);
            o.stopped_for = if new_speed < STOPPED_SPEED { o.stopped_for + dt } else { 0.0 };
            if o.distance <= 0.0 || o.stopped_for >= lon.obstacle_hold {
                obstacle = None;
                braking = false;
            }
        }
        speed = new_speed;
    }
    Ok(frames)
}

/// Runs a scenario with no attack. Every frame is labeled normal.
pub fn run_scenario(params: &VehicleParams, scenario: &Scenario) -> Result<Vec<TelemetryFrame>> {
    integrate(params, scenario, &|_| false)
}

/// Corrupts the depth channel inside the attack intervals, labels those
/// frames abnormal (all others normal) and emits one laser-log entry per frame.
pub fn inject_attack(
    frames: &[TelemetryFrame],
    attack: &AttackScript,
    seed: u64,
) -> Result<(Vec<TelemetryFrame>, LaserLog)> {
    if frames.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::param("frames", "must be sorted by timestamp"));
    }
    let range = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => Some((a.timestamp, b.timestamp)),
        _ => None,
    };
    if range.is_none() && !attack.intervals.is_empty() {
        return Err(Error::Empty("frames"));
    }
    attack.validate(range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(frames.len());
    let mut log = Vec::with_capacity(frames.len());
    let mut held: Option<f64> = None;
    for f in frames {
        let active = attack.active(f.timestamp);
        let mut g = *f;
        if active {
            g.obstacle_distance = match attack.effect {
                BlindingEffect::Dropout => attack.max_range,
                BlindingEffect::Frozen => *held.get_or_insert(f.obstacle_distance),
                BlindingEffect::NoiseBurst { std } => {
                    (f.obstacle_distance + gaussian(&mut rng, std)).clamp(0.0, attack.max_range)
                }
            };
            g.label = Label::Abnormal;
        } else {
            held = Some(f.obstacle_distance);
            g.label = Label::Normal;
        }
        out.push(g);
        log.push(LaserEntry {
            timestamp: f.timestamp,
            active,
        });
    }
    Ok((out, LaserLog::new(log)?))
}

/// Attack seed derived from the scenario seed.
fn attack_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Closed-loop run: braking is suppressed while the laser is on, then the
/// depth channel is corrupted as in [`inject_attack`].
pub fn run_attacked_scenario(
    params: &VehicleParams,
    scenario: &Scenario,
    attack: &AttackScript,
) -> Result<(Vec<TelemetryFrame>, LaserLog)> {
    let frames = integrate(params, scenario, &|t| attack.active(t))?;
    inject_attack(&frames, attack, attack_seed(scenario.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub episodes: usize,
    /// Every `attack_every`-th episode is attacked (starting with the first).
    pub attack_every: usize,
    pub duration: f64,
    pub dt: f64,
    pub noise: NoiseLevels,
    pub matrices: MatrixSource,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            episodes: 40,
            attack_every: 2,
            duration: 5.0,
            dt: 0.01,
            noise: NoiseLevels::default(),
            matrices: MatrixSource::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub name: String,
    pub scenario: Scenario,
    pub attack: AttackScript,
    pub frames: Vec<TelemetryFrame>,
    pub laser_log: LaserLog,
}

/// Randomised scenario and attack for one benchmark episode.
pub fn benchmark_episode_spec(config: &BenchmarkConfig, index: usize) -> (Scenario, AttackScript) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let steering = if rng.random_bool(0.5) {
        SteeringProgram::Constant {
            angle: rng.random_range(-0.03..=0.03),
        }
    } else {
        SteeringProgram::Sinusoid {
            amplitude: rng.random_range(0.01..=0.05),
            frequency: rng.random_range(0.1..=0.5),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            offset: 0.0,
        }
    };
    let cruise = rng.random_range(0.5..=1.5);
    let appear = rng.random_range(0.3..=1.5);
    let obstacle = ObstacleEvent {
        appear,
        distance: rng.random_range(1.5..=3.0),
        closing_speed: rng.random_range(0.0..=0.3),
    };
    let scenario = Scenario {
        duration: config.duration,
        dt: config.dt,
        steering,
        speed: vec![SpeedSegment { from: 0.0, speed: cruise }],
        obstacles: vec![obstacle],
        noise: config.noise,
        matrices: config.matrices,
        seed: rng.random(),
        ..Scenario::default()
    };
    let attacked = config.attack_every > 0 && index.is_multiple_of(config.attack_every);
    let attack = if attacked {
        let last = (scenario.n_frames().saturating_sub(1)) as f64 * config.dt;
        let start = (appear + rng.random_range(0.0..=0.5)).min(last);
        let end = (start + rng.random_range(1.5..=2.5)).min(last);
        AttackScript::new(vec![(start, end)])
    } else {
        AttackScript::default()
    };
    (scenario, attack)
}

/// Generates the labeled benchmark corpus, one episode per file.
pub fn generate_benchmark(params: &VehicleParams, config: &BenchmarkConfig) -> Result<Vec<Episode>> {
    if config.episodes == 0 {
        return Err(Error::param("episodes", "must be at least 1"));
    }
    let width = config.episodes.to_string().len().max(2);
    par::map_indices(config.episodes, |i| {
        let (scenario, attack) = benchmark_episode_spec(config, i);
        let (frames, laser_log) = run_attacked_scenario(params, &scenario, &attack)?;
        Ok(Episode {
            name: format!("episode_{i:0width$}"),
            scenario,
            attack,
            frames,
            laser_log,
        })
    })
    .into_iter()
    .collect()
}
