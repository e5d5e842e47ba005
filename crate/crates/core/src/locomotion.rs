//! Trials: tail strikes become ballistic hops, gait cycles become crawl strides.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{self, AsymmetryNoise, GaitConfig, GaitMode, PlanarPose, Trajectory};
use crate::springtail::{self, StrikeModel};
use crate::stats::{self, Failure};
use crate::terrain::{Material, SubstrateParams, SubstrateTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// kg
    pub mass: f64,
    /// m
    pub body_length: f64,
    /// Hop launch angle above the ground, rad.
    pub launch_angle: f64,
    /// m/s^2
    pub gravity: f64,
    /// Take-off speed above which the forebody pitches over on rigid ground, m/s.
    pub pitch_stability_limit: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 0.028,
            body_length: 0.058,
            launch_angle: std::f64::consts::FRAC_PI_4,
            gravity: 9.81,
            pitch_stability_limit: 2.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("mass", self.mass),
            ("body_length", self.body_length),
            ("gravity", self.gravity),
            ("pitch_stability_limit", self.pitch_stability_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be finite and strictly positive"));
            }
        }
        if !(self.launch_angle > 0.0 && self.launch_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::config("launch_angle", "must lie in (0, pi/2)"));
        }
        Ok(())
    }
}

/// Every model parameter a trial depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub strikes: StrikeModel,
    pub gait: GaitConfig,
    pub noise: AsymmetryNoise,
    pub robot: RobotParams,
    pub substrates: SubstrateTable,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            strikes: StrikeModel::default(),
            gait: GaitConfig::default(),
            noise: AsymmetryNoise {
                stride_std: 0.0003,
                heading_std: 0.0004,
                phase_yaw: 0.0028,
            },
            robot: RobotParams::default(),
            substrates: SubstrateTable::default(),
        }
    }
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        use crate::springtail::prefix_key;
        self.strikes
            .validate()
            .map_err(|e| prefix_key(e, "strikes"))?;
        self.gait.validate().map_err(|e| prefix_key(e, "gait"))?;
        self.noise.validate().map_err(|e| prefix_key(e, "noise"))?;
        self.robot.validate().map_err(|e| prefix_key(e, "robot"))?;
        self.substrates
            .validate()
            .map_err(|e| prefix_key(e, "substrates"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocomotionMode {
    Skip,
    SyncCrawl,
    AsyncCrawl,
}

impl LocomotionMode {
    pub const ALL: [LocomotionMode; 3] = [
        LocomotionMode::Skip,
        LocomotionMode::SyncCrawl,
        LocomotionMode::AsyncCrawl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocomotionMode::Skip => "skip",
            LocomotionMode::SyncCrawl => "sync_crawl",
            LocomotionMode::AsyncCrawl => "async_crawl",
        }
    }

    fn gait(self) -> Option<GaitMode> {
        match self {
            LocomotionMode::Skip => None,
            LocomotionMode::SyncCrawl => Some(GaitMode::Sync),
            LocomotionMode::AsyncCrawl => Some(GaitMode::Async),
        }
    }
}

impl std::str::FromStr for LocomotionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LocomotionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown locomotion mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub mode: LocomotionMode,
    pub material: Material,
    pub moisture: f64,
    /// s
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub trajectory: Trajectory,
    /// Net displacement, m.
    pub displacement: f64,
    /// Net displacement over the trial duration, m/s.
    pub mean_velocity: f64,
    pub failure: Failure,
}

/// Take-off speed `eta * J / m` of a hop.
pub fn takeoff_speed(impulse: f64, robot: &RobotParams, substrate: &SubstrateParams) -> f64 {
    substrate.skip_efficiency * impulse.max(0.0) / robot.mass
}

/// Ballistic range `v0^2 sin(2 alpha) / g` of a hop; zero when the tail slips.
pub fn hop_displacement(impulse: f64, robot: &RobotParams, substrate: &SubstrateParams) -> f64 {
    if substrate.tail_slips {
        return 0.0;
    }
    let v0 = takeoff_speed(impulse, robot, substrate);
    v0 * v0 * (2.0 * robot.launch_angle).sin() / robot.gravity
}

fn skip_trial(
    spec: &TrialSpec,
    model: &Model,
    substrate: &SubstrateParams,
) -> Result<(Trajectory, Option<Failure>)> {
    let strikes = springtail::strike_sequence(
        &model.strikes,
        model.strikes.regime(),
        spec.duration,
        spec.seed,
    )?;
    let mut hard = substrate.tail_slips.then_some(Failure::TailSlip);
    let mut pose = PlanarPose::ORIGIN;
    let mut poses = vec![pose];
    for strike in &strikes {
        let v0 = takeoff_speed(strike.impulse, &model.robot, substrate);
        if spec.material == Material::Rigid && v0 > model.robot.pitch_stability_limit {
            hard = Some(Failure::PitchOver);
            break;
        }
        pose.x += hop_displacement(strike.impulse, &model.robot, substrate);
        pose.time = strike.time;
        poses.push(pose);
    }
    pose.time = spec.duration;
    poses.push(pose);
    Ok((Trajectory::new(poses)?, hard))
}

fn crawl_trial(
    spec: &TrialSpec,
    gait_mode: GaitMode,
    model: &Model,
    substrate: &SubstrateParams,
) -> Result<(Trajectory, Option<Failure>)> {
    if substrate.excavates {
        let end = PlanarPose {
            time: spec.duration,
            ..PlanarPose::ORIGIN
        };
        return Ok((
            Trajectory::new(vec![PlanarPose::ORIGIN, end])?,
            Some(Failure::Excavation),
        ));
    }
    let run = gait::simulate_crawl(
        gait_mode,
        &model.gait,
        &model.noise,
        substrate.crawl_traction,
        spec.duration,
        spec.seed,
    )?;
    Ok((run.trajectory, None))
}

pub fn run_trial(spec: &TrialSpec, model: &Model) -> Result<TrialResult> {
    if !(spec.duration > 0.0 && spec.duration.is_finite()) {
        return Err(Error::domain(format!(
            "trial duration must be > 0, got {}",
            spec.duration
        )));
    }
    let substrate = model
        .substrates
        .moisture_response(spec.material, spec.moisture)?;
    let (trajectory, hard) = match spec.mode.gait() {
        None => skip_trial(spec, model, &substrate)?,
        Some(g) => crawl_trial(spec, g, model, &substrate)?,
    };
    let displacement = stats::net_displacement(&trajectory)?;
    Ok(TrialResult {
        spec: *spec,
        displacement,
        mean_velocity: displacement / spec.duration,
        failure: stats::classify_trial(displacement, hard),
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n: usize,
    /// m/s
    pub mean_velocity: f64,
    /// Sample standard deviation, m/s.
    pub std_velocity: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub trials: Vec<TrialResult>,
    pub summary: BatchSummary,
}

/// Runs `n_trials` copies of `spec` with seeds `seed_base..seed_base + n_trials`.
///
/// Trials run in parallel; results are ordered by seed.
pub fn run_batch(
    spec: &TrialSpec,
    n_trials: usize,
    seed_base: u64,
    model: &Model,
) -> Result<BatchResult> {
    if n_trials == 0 {
        return Err(Error::domain("a batch needs at least one trial"));
    }
    let trials = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let s = TrialSpec {
                seed: seed_base.wrapping_add(i),
                ..*spec
            };
            run_trial(&s, model)
        })
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<f64> = trials.iter().map(|t| t.mean_velocity).collect();
    let summary = BatchSummary {
        n: n_trials,
        mean_velocity: stats::mean(&v),
        std_velocity: stats::sample_std(&v),
        failures: trials.iter().filter(|t| t.failure.is_failure()).count(),
    };
    Ok(BatchResult { trials, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub material: Material,
    #[serde(default)]
    pub moisture: f64,
    pub mode: LocomotionMode,
    /// s
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSwitch {
    pub time: f64,
    pub from_mode: LocomotionMode,
    pub to_mode: LocomotionMode,
    pub from_material: Material,
    pub to_material: Material,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub trajectory: Trajectory,
    pub switches: Vec<ModeSwitch>,
    pub segments: Vec<TrialResult>,
}

/// Runs segments back to back, carrying the pose across each boundary.
///
/// Segment `i` is an ordinary trial with seed `seed + i`, expressed in the
/// frame of the pose where the previous segment ended.
pub fn scenario_heterogeneous(
    segments: &[Segment],
    model: &Model,
    seed: u64,
) -> Result<ScenarioResult> {
    if segments.is_empty() {
        return Err(Error::domain("a scenario needs at least one segment"));
    }
    let mut start = PlanarPose::ORIGIN;
    let mut poses: Vec<PlanarPose> = Vec::new();
    let mut switches = Vec::new();
    let mut results = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let spec = TrialSpec {
            mode: seg.mode,
            material: seg.material,
            moisture: seg.moisture,
            duration: seg.duration,
            seed: seed.wrapping_add(i as u64),
        };
        let trial = run_trial(&spec, model)?;
        if let Some(prev) = segments.get(i.wrapping_sub(1)).filter(|_| i > 0) {
            switches.push(ModeSwitch {
                time: start.time,
                from_mode: prev.mode,
                to_mode: seg.mode,
                from_material: prev.material,
                to_material: seg.material,
            });
        }
        let skip_first = usize::from(i > 0);
        poses.extend(
            trial.trajectory.poses()[skip_first..]
                .iter()
                .map(|p| start.compose(p)),
        );
        start = *poses.last().expect("segment trajectories are non-empty");
        results.push(trial);
    }
    Ok(ScenarioResult {
        trajectory: Trajectory::new(poses)?,
        switches,
        segments: results,
    })
}
