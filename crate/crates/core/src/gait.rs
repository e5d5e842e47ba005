//! Fin gait control and planar crawl kinematics.
//!
//! Each fin carries magnets that pass a fixed hall-effect sensor; a detection
//! marks the end of one stroke. The synchronous gait pauses whichever fin
//! detects first until the other catches up. The asynchronous gait hands the
//! single moving slot back and forth on each detection. The open-loop baseline
//! ignores the sensors and lets both fins free-run at their own speeds.
//!
//! Crawling is event driven: every completed gait cycle moves the body once,
//! with the left/right stroke imbalance of that cycle turning it.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinState {
    /// Rotation angle in `[0, 2 pi)`.
    pub angle: f64,
    /// Current speed, rad/s; zero while paused.
    pub angular_speed: f64,
    pub side: Side,
}

impl FinState {
    pub fn new(side: Side, angle: f64) -> Self {
        Self {
            angle: angle.rem_euclid(TAU),
            angular_speed: 0.0,
            side,
        }
    }
}

/// Smallest absolute angular distance between two angles.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderModel {
    /// Fin angles at which a magnet sits under the sensor, rad.
    pub magnet_angles: Vec<f64>,
    /// Half-width of the detection zone around each magnet, rad.
    pub detection_window: f64,
}

impl Default for EncoderModel {
    fn default() -> Self {
        Self {
            magnet_angles: vec![0.0, PI],
            detection_window: 0.15,
        }
    }
}

impl EncoderModel {
    pub fn validate(&self) -> Result<()> {
        if self.magnet_angles.is_empty() {
            return Err(Error::config("magnet_angles", "needs at least one magnet"));
        }
        if !(self.detection_window > 0.0) {
            return Err(Error::config(
                "detection_window",
                "must be strictly positive",
            ));
        }
        for (i, a) in self.magnet_angles.iter().enumerate() {
            for b in &self.magnet_angles[i + 1..] {
                if angular_distance(*a, *b) <= 2.0 * self.detection_window {
                    return Err(Error::config(
                        "detection_window",
                        "detection zones of two magnets overlap",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fin rotation between consecutive detections, assuming evenly spaced magnets.
    pub fn stroke_angle(&self) -> f64 {
        TAU / self.magnet_angles.len() as f64
    }
}

/// True when the fin sits within the detection window of any magnet.
pub fn encoder_read(fin: &FinState, model: &EncoderModel) -> bool {
    model
        .magnet_angles
        .iter()
        .any(|&m| angular_distance(fin.angle, m) <= model.detection_window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitMode {
    Sync,
    Async,
    OpenLoop,
}

impl GaitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GaitMode::Sync => "sync",
            GaitMode::Async => "async",
            GaitMode::OpenLoop => "open_loop",
        }
    }

    pub fn uses_encoder(self) -> bool {
        self != GaitMode::OpenLoop
    }
}

/// Hardware asymmetry drawn once per trial plus per-cycle heading noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymmetryNoise {
    /// Standard deviation of each fin's speed gain around 1.
    pub stride_std: f64,
    /// Standard deviation of the per-cycle heading perturbation, rad.
    pub heading_std: f64,
    /// Yaw per cycle when the fins strike a quarter stroke out of phase, rad.
    pub phase_yaw: f64,
}

impl AsymmetryNoise {
    pub fn zero() -> Self {
        Self {
            stride_std: 0.0,
            heading_std: 0.0,
            phase_yaw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("stride_std", self.stride_std),
            ("heading_std", self.heading_std),
            ("phase_yaw", self.phase_yaw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be finite and >= 0"));
            }
        }
        if self.stride_std > 0.2 {
            return Err(Error::config("stride_std", "must be <= 0.2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    /// Nominal fin speed, rev/s.
    pub fin_speed: f64,
    /// Forward advance of one synchronized stroke at full traction, m.
    pub stride: f64,
    /// Lateral distance between the fins, m.
    pub track_width: f64,
    /// Advance of a single-fin stroke in the async gait, as a fraction of `stride`.
    pub async_stride_fraction: f64,
    /// Control step, s.
    pub dt: f64,
    pub encoder: EncoderModel,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            fin_speed: 0.5,
            stride: 0.031,
            track_width: 0.066,
            async_stride_fraction: 0.9,
            dt: 1e-3,
            encoder: EncoderModel::default(),
        }
    }
}

impl GaitConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("fin_speed", self.fin_speed),
            ("stride", self.stride),
            ("track_width", self.track_width),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be finite and strictly positive"));
            }
        }
        if !(self.async_stride_fraction > 0.0 && self.async_stride_fraction <= 1.0) {
            return Err(Error::config("async_stride_fraction", "must lie in (0, 1]"));
        }
        self.encoder
            .validate()
            .map_err(|e| crate::springtail::prefix_key(e, "encoder"))?;
        // a fin must not jump across a detection zone in one step
        if TAU * self.fin_speed * 1.5 * self.dt >= self.encoder.detection_window {
            return Err(Error::config("dt", "too coarse for the detection window"));
        }
        Ok(())
    }

    /// Nominal stroke (detection) rate of one fin, Hz.
    pub fn stroke_rate(&self) -> f64 {
        self.fin_speed * self.encoder.magnet_angles.len() as f64
    }
}

/// Both fins plus the bookkeeping shared by every controller.
#[derive(Debug, Clone)]
pub struct FinPair {
    pub left: FinState,
    pub right: FinState,
    /// Speed each fin runs at when allowed to move, rad/s.
    rates: [f64; 2],
    /// Total rotation since the start, rad.
    travel: [f64; 2],
    initial: [f64; 2],
    detected: [bool; 2],
    time: f64,
}

impl FinPair {
    pub fn new(rates: [f64; 2], initial_angles: [f64; 2], encoder: &EncoderModel) -> Self {
        let left = FinState::new(Side::Left, initial_angles[0]);
        let right = FinState::new(Side::Right, initial_angles[1]);
        Self {
            detected: [encoder_read(&left, encoder), encoder_read(&right, encoder)],
            left,
            right,
            rates,
            travel: [0.0; 2],
            initial: [left.angle, right.angle],
            time: 0.0,
        }
    }

    pub fn fin(&self, side: Side) -> &FinState {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn fin_mut(&mut self, side: Side) -> &mut FinState {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn travel(&self) -> [f64; 2] {
        self.travel
    }

    /// Right-minus-left rotation, unwrapped, rad.
    pub fn unwrapped_offset(&self) -> f64 {
        (self.initial[1] + self.travel[1]) - (self.initial[0] + self.travel[0])
    }

    /// Moves each fin by its current speed; returns rising detection edges.
    fn integrate(&mut self, encoder: &EncoderModel, dt: f64) -> [bool; 2] {
        let mut edges = [false; 2];
        for side in [Side::Left, Side::Right] {
            let i = side.index();
            let fin = self.fin_mut(side);
            let step = fin.angular_speed * dt;
            fin.angle = (fin.angle + step).rem_euclid(TAU);
            let now = encoder_read(fin, encoder);
            self.travel[i] += step;
            edges[i] = now && !self.detected[i];
            self.detected[i] = now;
        }
        self.time += dt;
        edges
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    pub cycle_complete: bool,
}

/// Both fins stroke together; a cycle is validated by both sensors firing.
#[derive(Debug, Clone)]
pub struct SyncGait {
    pub fins: FinPair,
    latched: [bool; 2],
    pause_time: f64,
}

impl SyncGait {
    pub fn new(fins: FinPair) -> Self {
        Self {
            fins,
            latched: [false; 2],
            pause_time: 0.0,
        }
    }

    /// Accumulated time during which exactly one fin waited, s.
    pub fn pause_time(&self) -> f64 {
        self.pause_time
    }

    pub fn step(&mut self, encoder: &EncoderModel, dt: f64) -> StepOutcome {
        for side in [Side::Left, Side::Right] {
            let i = side.index();
            let rate = self.fins.rates[i];
            self.fins.fin_mut(side).angular_speed = if self.latched[i] { 0.0 } else { rate };
        }
        let edges = self.fins.integrate(encoder, dt);
        for (latched, edge) in self.latched.iter_mut().zip(edges) {
            *latched |= edge;
        }
        match self.latched {
            [true, true] => {
                self.latched = [false; 2];
                StepOutcome {
                    cycle_complete: true,
                }
            }
            [true, false] | [false, true] => {
                self.pause_time += dt;
                StepOutcome::default()
            }
            [false, false] => StepOutcome::default(),
        }
    }
}

/// Fins stroke alternately; the moving slot passes on each detection.
#[derive(Debug, Clone)]
pub struct AsyncGait {
    pub fins: FinPair,
    scheduled: Side,
    done: [bool; 2],
}

impl AsyncGait {
    pub fn new(fins: FinPair) -> Self {
        Self {
            fins,
            scheduled: Side::Left,
            done: [false; 2],
        }
    }

    pub fn scheduled(&self) -> Side {
        self.scheduled
    }

    /// Advances the scheduled fin. Any speed commanded on the other fin is
    /// overridden, so at most one fin ever moves.
    pub fn step(&mut self, encoder: &EncoderModel, dt: f64) -> StepOutcome {
        let moving = self.scheduled;
        let rate = self.fins.rates[moving.index()];
        self.fins.fin_mut(moving).angular_speed = rate;
        self.fins.fin_mut(moving.other()).angular_speed = 0.0;
        let edges = self.fins.integrate(encoder, dt);
        if edges[moving.index()] {
            self.done[moving.index()] = true;
            self.scheduled = moving.other();
            self.fins.fin_mut(moving).angular_speed = 0.0;
        }
        if self.done == [true, true] {
            self.done = [false; 2];
            return StepOutcome {
                cycle_complete: true,
            };
        }
        StepOutcome::default()
    }
}

/// Free-running fins; cycles are counted on the nominal stroke clock.
#[derive(Debug, Clone)]
pub struct OpenLoopGait {
    pub fins: FinPair,
    period: f64,
    next_boundary: f64,
}

impl OpenLoopGait {
    pub fn new(fins: FinPair, nominal_stroke_period: f64) -> Self {
        Self {
            fins,
            period: nominal_stroke_period,
            next_boundary: nominal_stroke_period,
        }
    }

    pub fn step(&mut self, encoder: &EncoderModel, dt: f64) -> StepOutcome {
        for side in [Side::Left, Side::Right] {
            let rate = self.fins.rates[side.index()];
            self.fins.fin_mut(side).angular_speed = rate;
        }
        self.fins.integrate(encoder, dt);
        // half-step slack keeps float accumulation from skipping a boundary
        if self.fins.time + 0.5 * dt >= self.next_boundary {
            self.next_boundary += self.period;
            return StepOutcome {
                cycle_complete: true,
            };
        }
        StepOutcome::default()
    }
}

/// One completed gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleEvent {
    pub time: f64,
    /// Strokes completed by each fin during the cycle (1.0 is one detection interval).
    pub strokes: [f64; 2],
    /// Right-minus-left stroke phase at the cycle boundary, wrapped to `(-pi, pi]`.
    pub stroke_phase: f64,
    /// Right-minus-left fin rotation, unwrapped, rad.
    pub phase_error: f64,
}

#[derive(Debug, Clone)]
pub enum GaitController {
    Sync(SyncGait),
    Async(AsyncGait),
    OpenLoop(OpenLoopGait),
}

impl GaitController {
    pub fn new(mode: GaitMode, config: &GaitConfig, rates: [f64; 2], initial: [f64; 2]) -> Self {
        let fins = FinPair::new(rates, initial, &config.encoder);
        match mode {
            GaitMode::Sync => GaitController::Sync(SyncGait::new(fins)),
            GaitMode::Async => GaitController::Async(AsyncGait::new(fins)),
            GaitMode::OpenLoop => {
                GaitController::OpenLoop(OpenLoopGait::new(fins, 1.0 / config.stroke_rate()))
            }
        }
    }

    pub fn fins(&self) -> &FinPair {
        match self {
            GaitController::Sync(g) => &g.fins,
            GaitController::Async(g) => &g.fins,
            GaitController::OpenLoop(g) => &g.fins,
        }
    }

    pub fn step(&mut self, encoder: &EncoderModel, dt: f64) -> StepOutcome {
        match self {
            GaitController::Sync(g) => g.step(encoder, dt),
            GaitController::Async(g) => g.step(encoder, dt),
            GaitController::OpenLoop(g) => g.step(encoder, dt),
        }
    }
}

/// Steps a controller for `duration` seconds and records every completed cycle.
pub fn run_gait(
    controller: &mut GaitController,
    config: &GaitConfig,
    duration: f64,
) -> Vec<CycleEvent> {
    let stroke = config.encoder.stroke_angle();
    let steps = (duration / config.dt).round() as u64;
    let mut last_travel = controller.fins().travel();
    let mut events = Vec::new();
    for _ in 0..steps {
        if controller.step(&config.encoder, config.dt).cycle_complete {
            let fins = controller.fins();
            let travel = fins.travel();
            let offset = fins.unwrapped_offset();
            events.push(CycleEvent {
                time: fins.time(),
                strokes: [
                    (travel[0] - last_travel[0]) / stroke,
                    (travel[1] - last_travel[1]) / stroke,
                ],
                stroke_phase: wrap_pi(offset * TAU / stroke),
                phase_error: offset,
            });
            last_travel = travel;
        }
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub time: f64,
}

impl PlanarPose {
    pub const ORIGIN: PlanarPose = PlanarPose {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        time: 0.0,
    };

    /// Expresses `local` (relative to the origin pose) in the frame where `self` is the origin.
    pub fn compose(&self, local: &PlanarPose) -> PlanarPose {
        let (s, c) = self.heading.sin_cos();
        PlanarPose {
            x: self.x + c * local.x - s * local.y,
            y: self.y + s * local.x + c * local.y,
            heading: self.heading + local.heading,
            time: self.time + local.time,
        }
    }
}

/// Time-ordered pose sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<PlanarPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<PlanarPose>) -> Result<Self> {
        if poses.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::domain("trajectory times must be non-decreasing"));
        }
        if poses.iter().any(|p| {
            !(p.x.is_finite() && p.y.is_finite() && p.heading.is_finite() && p.time.is_finite())
        }) {
            return Err(Error::domain("trajectory contains non-finite values"));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[PlanarPose] {
        &self.poses
    }

    pub fn last(&self) -> PlanarPose {
        *self.poses.last().expect("trajectories are never empty")
    }

    /// Keeps poses up to and including the first one whose progress along the
    /// initial heading reaches `distance`.
    pub fn truncate_at_progress(&self, distance: f64) -> Trajectory {
        let origin = self.poses[0];
        let (s, c) = origin.heading.sin_cos();
        let mut out = Vec::new();
        for p in &self.poses {
            out.push(*p);
            if c * (p.x - origin.x) + s * (p.y - origin.y) >= distance {
                break;
            }
        }
        Trajectory { poses: out }
    }

    pub(crate) fn push(&mut self, pose: PlanarPose) {
        debug_assert!(self.poses.last().is_none_or(|l| l.time <= pose.time));
        self.poses.push(pose);
    }

    pub(crate) fn from_start(start: PlanarPose) -> Self {
        Trajectory { poses: vec![start] }
    }
}

/// Mechanical inputs of the crawl kinematics on a given substrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrawlParams {
    pub stride: f64,
    pub track_width: f64,
    pub async_stride_fraction: f64,
    /// Substrate traction in `[0, 1]`.
    pub traction: f64,
}

impl CrawlParams {
    pub fn from_config(config: &GaitConfig, traction: f64) -> Self {
        Self {
            stride: config.stride,
            track_width: config.track_width,
            async_stride_fraction: config.async_stride_fraction,
            traction,
        }
    }
}

/// Integrates cycle events into a planar trajectory starting at the origin.
///
/// Each cycle advances the body along its heading by the mean stroke count times
/// the stride. The heading turns by the stride difference over the track width,
/// plus a yaw term from the fins' stroke phase offset, plus heading noise.
pub fn crawl_kinematics(
    events: &[CycleEvent],
    mode: GaitMode,
    noise: &AsymmetryNoise,
    params: &CrawlParams,
    seed: u64,
) -> Result<Trajectory> {
    if !(params.stride > 0.0) {
        return Err(Error::domain("stride must be strictly positive"));
    }
    noise.validate()?;
    let mut rng = rng::stream(seed, Stream::Kinematics);
    let heading_noise = Normal::new(0.0, noise.heading_std).expect("validated std");
    let gain = match mode {
        GaitMode::Async => 2.0 * params.async_stride_fraction,
        GaitMode::Sync | GaitMode::OpenLoop => 1.0,
    };
    let stroke = params.stride * params.traction;
    let mut pose = PlanarPose::ORIGIN;
    let mut traj = Trajectory::from_start(pose);
    for ev in events {
        let [left, right] = ev.strokes;
        let turn = stroke * (right - left) / params.track_width
            + params.traction * noise.phase_yaw * ev.stroke_phase.sin()
            + params.traction * heading_noise.sample(&mut rng);
        pose.heading += turn;
        let advance = stroke * gain * (left + right) / 2.0;
        pose.x += advance * pose.heading.cos();
        pose.y += advance * pose.heading.sin();
        pose.time = ev.time;
        traj.push(pose);
    }
    Ok(traj)
}

/// A complete crawl run: hardware draws, gait simulation and kinematics.
#[derive(Debug, Clone)]
pub struct CrawlRun {
    pub events: Vec<CycleEvent>,
    pub trajectory: Trajectory,
    /// Fin speed gains drawn for this run, left then right.
    pub gains: [f64; 2],
}

/// Draws the per-trial fin speed gains and starting angles.
///
/// Encoder gaits start homed on a magnet; the open-loop fins start at an
/// arbitrary relative phase.
pub fn draw_hardware(mode: GaitMode, noise: &AsymmetryNoise, seed: u64) -> ([f64; 2], [f64; 2]) {
    let mut rng = rng::stream(seed, Stream::GaitHardware);
    let gain_dist = Normal::new(1.0, noise.stride_std).expect("validated std");
    let gains = [
        gain_dist.sample(&mut rng).clamp(0.5, 1.5),
        gain_dist.sample(&mut rng).clamp(0.5, 1.5),
    ];
    let offset: f64 = rng.random_range(0.0..TAU);
    let initial = match mode {
        GaitMode::OpenLoop => [0.0, offset],
        GaitMode::Sync | GaitMode::Async => [0.0, 0.0],
    };
    (gains, initial)
}

pub fn simulate_crawl(
    mode: GaitMode,
    config: &GaitConfig,
    noise: &AsymmetryNoise,
    traction: f64,
    duration: f64,
    seed: u64,
) -> Result<CrawlRun> {
    config.validate()?;
    noise.validate()?;
    let (gains, initial) = draw_hardware(mode, noise, seed);
    let nominal = TAU * config.fin_speed;
    let mut controller = GaitController::new(
        mode,
        config,
        [nominal * gains[0], nominal * gains[1]],
        initial,
    );
    let events = run_gait(&mut controller, config, duration);
    let mut trajectory = crawl_kinematics(
        &events,
        mode,
        noise,
        &CrawlParams::from_config(config, traction),
        seed,
    )?;
    // close the record at the end of the window
    let mut end = trajectory.last();
    if end.time < duration {
        end.time = duration;
        trajectory.push(end);
    }
    Ok(CrawlRun {
        events,
        trajectory,
        gains,
    })
}

/// Crawls on rigid ground until `run_length` metres of progress and returns the path.
pub fn drift_run(
    mode: GaitMode,
    config: &GaitConfig,
    noise: &AsymmetryNoise,
    run_length: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(run_length > 0.0) {
        return Err(Error::domain("run length must be strictly positive"));
    }
    let speed = match mode {
        GaitMode::Async => config.stride * config.async_stride_fraction * config.stroke_rate(),
        _ => config.stride * config.stroke_rate(),
    };
    let duration = 1.5 * run_length / speed + 2.0 / config.stroke_rate();
    let run = simulate_crawl(mode, config, noise, 1.0, duration, seed)?;
    Ok(run.trajectory.truncate_at_progress(run_length))
}
