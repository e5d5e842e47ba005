//! Rotary spring-tail mechanics.
//!
//! The tail is a thin spring-steel strip carried by a rotating hub. Each
//! revolution it wipes along a curved housing wall, bends into the housing arc,
//! and snaps free at the arc exit. At release it behaves as a short cantilever
//! of effective length `L_eff = R * theta`, where `theta` is the arc still
//! engaged at unlatch, giving a peak force `F = 3 E I / (2 R L_eff)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::stats::ForceTrace;

/// Rotor angle span of the unlatch sub-interval just before the arc exit.
pub const UNLATCH_SPAN: f64 = 0.05;

/// Spring geometry and material together with the housing geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Strip width, m.
    pub width_b: f64,
    /// Strip thickness, m.
    pub thickness_t: f64,
    /// Free length of the strip, m.
    pub free_length_l: f64,
    /// Housing radius, m.
    pub housing_radius_r: f64,
    /// Angular extent of the housing arc, rad.
    pub housing_arc: f64,
    /// Hub speed, rev/s.
    pub motor_speed: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            youngs_modulus: 200e9,
            width_b: 10e-3,
            thickness_t: 0.10e-3,
            free_length_l: 25e-3,
            housing_radius_r: 11e-3,
            housing_arc: 1.5 * PI,
            motor_speed: 1.0,
        }
    }
}

impl TailConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("youngs_modulus", self.youngs_modulus),
            ("width_b", self.width_b),
            ("thickness_t", self.thickness_t),
            ("free_length_l", self.free_length_l),
            ("housing_radius_r", self.housing_radius_r),
            ("motor_speed", self.motor_speed),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(key, "must be finite and strictly positive"));
            }
        }
        if self.thickness_t >= self.housing_radius_r {
            return Err(Error::config(
                "thickness_t",
                "must be smaller than housing_radius_r",
            ));
        }
        if !(self.housing_arc > 0.0 && self.housing_arc < TAU) {
            return Err(Error::config("housing_arc", "must lie in (0, 2*pi)"));
        }
        Ok(())
    }

    /// Second moment of area of the strip cross-section.
    pub fn area_moment(&self) -> Result<f64> {
        area_moment(self.width_b, self.thickness_t)
    }

    /// The geometric constant `3 E I / (2 R)`, so that `F = bending_constant / L_eff`.
    pub fn bending_constant(&self) -> Result<f64> {
        Ok(3.0 * self.youngs_modulus * self.area_moment()? / (2.0 * self.housing_radius_r))
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be finite and strictly positive, got {value}"
        )))
    }
}

/// `b t^3 / 12` for a rectangular strip.
pub fn area_moment(width_b: f64, thickness_t: f64) -> Result<f64> {
    require_positive("width", width_b)?;
    require_positive("thickness", thickness_t)?;
    Ok(width_b * thickness_t.powi(3) / 12.0)
}

/// Tip stiffness `3 E I / L^3` of a cantilever.
pub fn tip_stiffness(youngs_modulus: f64, area_moment: f64, effective_length: f64) -> Result<f64> {
    require_positive("youngs modulus", youngs_modulus)?;
    require_positive("area moment", area_moment)?;
    require_positive("effective length", effective_length)?;
    Ok(3.0 * youngs_modulus * area_moment / effective_length.powi(3))
}

/// Tip deflection `L^2 / (2 R)` of a strip conforming to a wall of radius `R`.
pub fn latch_deflection(effective_length: f64, housing_radius: f64) -> Result<f64> {
    require_positive("effective length", effective_length)?;
    require_positive("housing radius", housing_radius)?;
    Ok(effective_length * effective_length / (2.0 * housing_radius))
}

/// Arc length `R theta` still engaged at unlatch.
pub fn effective_length(housing_radius: f64, theta: f64) -> Result<f64> {
    require_positive("housing radius", housing_radius)?;
    require_positive("engaged angle", theta)?;
    Ok(housing_radius * theta)
}

fn check_engaged_angle(config: &TailConfig, theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < config.housing_arc) {
        return Err(Error::domain(format!(
            "engaged angle {theta} outside (0, {})",
            config.housing_arc
        )));
    }
    Ok(())
}

/// Peak elastic force at unlatch, `3 E I / (2 R L_eff)` with `L_eff = R theta`.
pub fn unlatch_force(config: &TailConfig, theta: f64) -> Result<f64> {
    check_engaged_angle(config, theta)?;
    let l_eff = effective_length(config.housing_radius_r, theta)?;
    Ok(config.bending_constant()? / l_eff)
}

/// Elastic energy `k delta^2 / 2` stored at unlatch; reduces to `3 E I L_eff / (8 R^2)`.
pub fn stored_energy(config: &TailConfig, theta: f64) -> Result<f64> {
    check_engaged_angle(config, theta)?;
    let l_eff = effective_length(config.housing_radius_r, theta)?;
    let k = tip_stiffness(config.youngs_modulus, config.area_moment()?, l_eff)?;
    let delta = latch_deflection(l_eff, config.housing_radius_r)?;
    Ok(0.5 * k * delta * delta)
}

/// Phase of the tail within one hub revolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TailPhase {
    FreeRotation,
    Load,
    Latch,
    Unlatch,
}

impl TailPhase {
    pub fn next(self) -> Self {
        match self {
            TailPhase::FreeRotation => TailPhase::Load,
            TailPhase::Load => TailPhase::Latch,
            TailPhase::Latch => TailPhase::Unlatch,
            TailPhase::Unlatch => TailPhase::FreeRotation,
        }
    }
}

/// Phase boundaries within a revolution, measured from the arc entry.
///
/// `[0, load_end)` is Load, `[load_end, unlatch_start)` is Latch,
/// `[unlatch_start, housing_arc)` is Unlatch and `[housing_arc, 2 pi)` is FreeRotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBoundaries {
    pub load_end: f64,
    pub unlatch_start: f64,
    pub arc_exit: f64,
}

impl PhaseBoundaries {
    pub fn for_config(config: &TailConfig) -> Self {
        let arc = config.housing_arc;
        let span = UNLATCH_SPAN.min(arc / 4.0);
        // the strip is fully conformed once its whole free length wraps the wall
        let conform = config.free_length_l / config.housing_radius_r;
        Self {
            load_end: conform.clamp(span, arc - 2.0 * span),
            unlatch_start: arc - span,
            arc_exit: arc,
        }
    }
}

/// Phase at a rotor angle measured from the housing arc entry.
pub fn phase_at(rotor_angle: f64, config: &TailConfig) -> TailPhase {
    let angle = rotor_angle.rem_euclid(TAU);
    let b = PhaseBoundaries::for_config(config);
    if angle < b.load_end {
        TailPhase::Load
    } else if angle < b.unlatch_start {
        TailPhase::Latch
    } else if angle < b.arc_exit {
        TailPhase::Unlatch
    } else {
        TailPhase::FreeRotation
    }
}

/// Distribution of the engaged angle at unlatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngagedAngleModel {
    Uniform {
        lower: f64,
        upper: f64,
    },
    TruncatedNormal {
        lower: f64,
        upper: f64,
        mean: f64,
        spread: f64,
    },
}

impl Default for EngagedAngleModel {
    fn default() -> Self {
        EngagedAngleModel::Uniform {
            lower: 20f64.to_radians(),
            upper: 45f64.to_radians(),
        }
    }
}

impl EngagedAngleModel {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            EngagedAngleModel::Uniform { lower, upper }
            | EngagedAngleModel::TruncatedNormal { lower, upper, .. } => (lower, upper),
        }
    }

    pub fn validate(&self, housing_arc: f64) -> Result<()> {
        let (lower, upper) = self.bounds();
        if !(lower > 0.0 && lower <= upper && upper < housing_arc) {
            return Err(Error::config(
                "engaged_angle",
                "bounds must satisfy 0 < lower <= upper < housing_arc",
            ));
        }
        if let EngagedAngleModel::TruncatedNormal { spread, mean, .. } = *self {
            if !(spread > 0.0 && mean.is_finite()) {
                return Err(Error::config(
                    "engaged_angle.spread",
                    "must be strictly positive",
                ));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EngagedAngleModel::Uniform { lower, upper } => {
                if lower == upper {
                    lower
                } else {
                    rng.random_range(lower..=upper)
                }
            }
            EngagedAngleModel::TruncatedNormal {
                lower,
                upper,
                mean,
                spread,
            } => {
                let normal = Normal::new(mean, spread).expect("validated spread");
                for _ in 0..10_000 {
                    let x = normal.sample(rng);
                    if (lower..=upper).contains(&x) {
                        return x;
                    }
                }
                // the window holds almost no mass; fall back to uniform on it
                rng.random_range(lower..=upper)
            }
        }
    }
}

/// Tail free-length regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthRegime {
    Jam,
    Nominal,
    Roll,
}

/// Fitted length thresholds and per-regime strike modifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeThresholds {
    /// Lengths below this jam, m.
    pub jam_below: f64,
    /// Lengths above this roll in the housing, m.
    pub roll_above: f64,
    /// Probability that a jammed tail still strikes in a given revolution.
    pub jam_strike_probability: f64,
    /// Force multiplier applied to every strike of a rolling tail.
    pub roll_attenuation: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            jam_below: 20e-3,
            roll_above: 30e-3,
            jam_strike_probability: 0.3,
            roll_attenuation: 0.5,
        }
    }
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.jam_below > 0.0 && self.jam_below < self.roll_above) {
            return Err(Error::config(
                "regimes.jam_below",
                "must be positive and below roll_above",
            ));
        }
        if !(0.0..=1.0).contains(&self.jam_strike_probability) {
            return Err(Error::config(
                "regimes.jam_strike_probability",
                "must lie in [0, 1]",
            ));
        }
        if !(self.roll_attenuation > 0.0 && self.roll_attenuation <= 1.0) {
            return Err(Error::config(
                "regimes.roll_attenuation",
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Jam below `jam_below`, roll above `roll_above`, nominal on the closed interval between.
pub fn length_regime(free_length: f64, thresholds: &RegimeThresholds) -> LengthRegime {
    if free_length < thresholds.jam_below {
        LengthRegime::Jam
    } else if free_length > thresholds.roll_above {
        LengthRegime::Roll
    } else {
        LengthRegime::Nominal
    }
}

/// One impulsive tail strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrikeEvent {
    /// Time of peak force, s.
    pub time: f64,
    /// Peak force, N.
    pub peak_force: f64,
    /// Impulse of the force pulse, N s.
    pub impulse: f64,
    /// Engaged angle at unlatch, rad.
    pub engaged_angle: f64,
}

/// Everything needed to turn a seed into a strike sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrikeModel {
    pub tail: TailConfig,
    pub engaged_angle: EngagedAngleModel,
    pub regimes: RegimeThresholds,
    /// Width of the half-sine force pulse, s.
    pub pulse_width: f64,
}

impl Default for StrikeModel {
    fn default() -> Self {
        Self {
            tail: TailConfig::default(),
            engaged_angle: EngagedAngleModel::default(),
            regimes: RegimeThresholds::default(),
            pulse_width: 10e-3,
        }
    }
}

impl StrikeModel {
    pub fn validate(&self) -> Result<()> {
        self.tail.validate().map_err(|e| prefix_key(e, "tail"))?;
        self.engaged_angle.validate(self.tail.housing_arc)?;
        self.regimes.validate()?;
        if !(self.pulse_width > 0.0 && self.pulse_width.is_finite()) {
            return Err(Error::config("pulse_width", "must be strictly positive"));
        }
        Ok(())
    }

    pub fn regime(&self) -> LengthRegime {
        length_regime(self.tail.free_length_l, &self.regimes)
    }
}

pub(crate) fn prefix_key(err: Error, prefix: &str) -> Error {
    match err {
        Error::Config { key, message } => Error::Config {
            key: format!("{prefix}.{key}"),
            message,
        },
        other => other,
    }
}

/// Impulse of a half-sine pulse of amplitude `peak_force` and width `pulse_width`.
pub fn half_sine_impulse(peak_force: f64, pulse_width: f64) -> f64 {
    2.0 * peak_force * pulse_width / PI
}

/// Strikes produced in `[0, duration)` by a tail in the given regime.
///
/// The hub completes `floor(motor_speed * duration)` revolutions; the strike of
/// revolution `i` happens when the tip exits the arc, at `(i + arc / 2pi) / motor_speed`.
pub fn strike_sequence(
    model: &StrikeModel,
    regime: LengthRegime,
    duration: f64,
    seed: u64,
) -> Result<Vec<StrikeEvent>> {
    model.validate()?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    let tail = &model.tail;
    let revolutions = (tail.motor_speed * duration).floor() as u64;
    let exit_fraction = tail.housing_arc / TAU;
    let mut rng = rng::stream(seed, Stream::Strikes);
    let mut events = Vec::with_capacity(revolutions as usize);
    for rev in 0..revolutions {
        // draw both values every revolution so the angle stream is regime independent
        let theta = model.engaged_angle.sample(&mut rng);
        let strike_draw: f64 = rng.random();
        let mut force = unlatch_force(tail, theta)?;
        match regime {
            LengthRegime::Jam if strike_draw >= model.regimes.jam_strike_probability => continue,
            LengthRegime::Roll => force *= model.regimes.roll_attenuation,
            _ => {}
        }
        events.push(StrikeEvent {
            time: (rev as f64 + exit_fraction) / tail.motor_speed,
            peak_force: force,
            impulse: half_sine_impulse(force, model.pulse_width),
            engaged_angle: theta,
        });
    }
    Ok(events)
}

/// Synthesizes the force-sensor signal for a strike list over `[0, duration)`.
///
/// Each strike is a half-sine pulse centred on its time. Overlapping pulses add.
pub fn strike_trace(
    events: &[StrikeEvent],
    sample_rate: f64,
    pulse_width: f64,
    duration: f64,
) -> Result<ForceTrace> {
    if !(pulse_width > 0.0 && pulse_width.is_finite()) {
        return Err(Error::config("pulse_width", "must be strictly positive"));
    }
    if !(sample_rate.is_finite() && sample_rate >= 2.0 / pulse_width) {
        return Err(Error::config(
            "sample_rate",
            format!("{sample_rate} Hz undersamples a {pulse_width} s pulse"),
        ));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    let n = (duration * sample_rate).ceil() as usize;
    let mut samples = vec![0.0; n];
    for ev in events {
        let start = ev.time - pulse_width / 2.0;
        let first = (start * sample_rate).ceil().max(0.0) as usize;
        let last =
            (((start + pulse_width) * sample_rate).floor() as usize).min(n.saturating_sub(1));
        if n == 0 || first > last {
            continue;
        }
        for (i, sample) in samples.iter_mut().enumerate().take(last + 1).skip(first) {
            let phase = (i as f64 / sample_rate - start) / pulse_width;
            if (0.0..=1.0).contains(&phase) {
                *sample += ev.peak_force * (PI * phase).sin();
            }
        }
    }
    ForceTrace::new(sample_rate, samples)
}
