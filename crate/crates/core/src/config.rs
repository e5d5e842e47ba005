//! Versioned experiment configuration.
//!
//! One JSON document holds every model parameter plus the experiment plans, so
//! a calibrated parameter set is a single diffable file. Unknown keys are
//! rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locomotion::{LocomotionMode, Model, Segment};
use crate::springtail::prefix_key;
use crate::stats::Resampling;
use crate::terrain::{Material, MAX_MOISTURE};

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped configuration with calibrated parameters.
pub const CANONICAL_JSON: &str = include_str!("../../../configs/canonical.json");

/// Peak detection and bootstrap settings for force traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// N
    pub peak_threshold: f64,
    /// s
    pub min_separation: f64,
    /// Force-sensor sampling rate, Hz.
    pub sample_rate: f64,
    pub bootstrap_level: f64,
    /// Monte Carlo resample budget; tiny samples are enumerated exhaustively.
    pub bootstrap_resamples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            peak_threshold: 1.0,
            min_separation: 0.3,
            sample_rate: 5000.0,
            bootstrap_level: 0.95,
            bootstrap_resamples: 10_000,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("peak_threshold", self.peak_threshold),
            ("min_separation", self.min_separation),
            ("sample_rate", self.sample_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be finite and strictly positive"));
            }
        }
        if !(self.bootstrap_level > 0.0 && self.bootstrap_level < 1.0) {
            return Err(Error::config("bootstrap_level", "must lie in (0, 1)"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::config("bootstrap_resamples", "must be >= 1"));
        }
        Ok(())
    }

    pub fn resampling(&self) -> Resampling {
        Resampling::Auto(self.bootstrap_resamples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoistureSweep {
    pub material: Material,
    /// Moisture grid, fraction of dry mass.
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRow {
    pub material: Material,
    #[serde(default)]
    pub moisture: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentsConfig {
    /// Trials per condition.
    pub trials: usize,
    /// s
    pub trial_duration: f64,
    pub tail_lengths_mm: Vec<f64>,
    /// Force recording window for tail characterization, s.
    pub tail_duration: f64,
    /// Progress after which drift runs stop, m.
    pub drift_run_length: f64,
    pub moisture_sweeps: Vec<MoistureSweep>,
    pub bench: Vec<BenchRow>,
    pub scenario: Vec<Segment>,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        let sand = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
        let clay = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        Self {
            trials: 3,
            trial_duration: 10.0,
            tail_lengths_mm: vec![15.0, 20.0, 25.0, 30.0, 35.0],
            tail_duration: 10.0,
            drift_run_length: 1.0,
            moisture_sweeps: vec![
                MoistureSweep {
                    material: Material::UniformSand,
                    grid: sand,
                },
                MoistureSweep {
                    material: Material::BentoniteClay,
                    grid: clay,
                },
            ],
            bench: vec![
                BenchRow {
                    material: Material::UniformSand,
                    moisture: 0.0,
                },
                BenchRow {
                    material: Material::NonUniformSand,
                    moisture: 0.0,
                },
                BenchRow {
                    material: Material::BentoniteClay,
                    moisture: 1.0 / 3.0,
                },
                BenchRow {
                    material: Material::Grass,
                    moisture: 0.0,
                },
            ],
            scenario: vec![
                Segment {
                    material: Material::Grass,
                    moisture: 0.0,
                    mode: LocomotionMode::Skip,
                    duration: 12.0,
                },
                Segment {
                    material: Material::Rigid,
                    moisture: 0.0,
                    mode: LocomotionMode::SyncCrawl,
                    duration: 6.0,
                },
            ],
        }
    }
}

fn check_moisture(key: String, m: f64) -> Result<()> {
    if (0.0..=MAX_MOISTURE).contains(&m) {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("moisture {m} outside [0, {MAX_MOISTURE}]"),
        ))
    }
}

impl ExperimentsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        for (key, v) in [
            ("trial_duration", self.trial_duration),
            ("tail_duration", self.tail_duration),
            ("drift_run_length", self.drift_run_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be finite and strictly positive"));
            }
        }
        if self.tail_lengths_mm.is_empty() {
            return Err(Error::config("tail_lengths_mm", "sweep list is empty"));
        }
        for (i, l) in self.tail_lengths_mm.iter().enumerate() {
            if !(*l > 0.0 && l.is_finite()) {
                return Err(Error::config(
                    format!("tail_lengths_mm[{i}]"),
                    "must be finite and strictly positive",
                ));
            }
        }
        for (i, sweep) in self.moisture_sweeps.iter().enumerate() {
            if sweep.grid.is_empty() {
                return Err(Error::config(
                    format!("moisture_sweeps[{i}].grid"),
                    "grid is empty",
                ));
            }
            for (j, m) in sweep.grid.iter().enumerate() {
                check_moisture(format!("moisture_sweeps[{i}].grid[{j}]"), *m)?;
            }
        }
        for (i, row) in self.bench.iter().enumerate() {
            check_moisture(format!("bench[{i}].moisture"), row.moisture)?;
        }
        if self.scenario.is_empty() {
            return Err(Error::config("scenario", "segment list is empty"));
        }
        for (i, seg) in self.scenario.iter().enumerate() {
            check_moisture(format!("scenario[{i}].moisture"), seg.moisture)?;
            if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                return Err(Error::config(
                    format!("scenario[{i}].duration"),
                    "must be finite and strictly positive",
                ));
            }
        }
        Ok(())
    }
}

/// A parameter the calibration may move, with its search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Maximum loss evaluations.
    pub budget: usize,
    pub restarts: usize,
    /// Trials per condition inside the loss.
    pub n_trials: usize,
    pub seed: u64,
    pub parameters: Vec<FreeParameter>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let p = |name: &str, lower: f64, upper: f64| FreeParameter {
            name: name.to_owned(),
            lower,
            upper,
        };
        Self {
            budget: 4000,
            restarts: 3,
            n_trials: 3,
            seed: 1,
            parameters: vec![
                p("uniform_sand.skip.floor", 0.0, 1.0),
                p("uniform_sand.skip.peak", 0.0, 1.0),
                p("uniform_sand.skip.center", 0.05, 0.25),
                p("uniform_sand.skip.width", 0.02, 0.2),
                p("non_uniform_sand.skip.floor", 0.0, 1.0),
                p("bentonite_clay.skip.peak", 0.0, 1.0),
                p("bentonite_clay.skip.center", 0.1, 0.3),
                p("bentonite_clay.skip.width", 0.03, 0.4),
                p("grass.skip.level", 0.0, 1.0),
                p("uniform_sand.crawl.amplitude", 0.0, 1.0),
                p("uniform_sand.crawl.rise_center", 0.0, 0.15),
                p("uniform_sand.crawl.decay", 0.0, 10.0),
                p("bentonite_clay.crawl.amplitude", 0.0, 1.0),
                p("bentonite_clay.crawl.rise_center", 0.0, 0.8),
                p("bentonite_clay.crawl.decay", 0.0, 5.0),
                p("gait.async_stride_fraction", 0.3, 1.0),
            ],
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("budget", "must be >= 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be >= 1"));
        }
        for (i, p) in self.parameters.iter().enumerate() {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower <= p.upper) {
                return Err(Error::config(
                    format!("parameters[{i}]"),
                    format!("bounds of `{}` must be finite with lower <= upper", p.name),
                ));
            }
            if self.parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::config(
                    format!("parameters[{i}].name"),
                    format!("duplicate parameter `{}`", p.name),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    /// Default seed of every experiment.
    pub seed: u64,
    pub output_dir: String,
    pub model: Model,
    pub analysis: AnalysisConfig,
    pub experiments: ExperimentsConfig,
    pub calibration: CalibrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "canonical".to_owned(),
            seed: 1,
            output_dir: "out".to_owned(),
            model: Model::default(),
            analysis: AnalysisConfig::default(),
            experiments: ExperimentsConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." {
                "<root>".to_owned()
            } else {
                path
            };
            Error::config(key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The calibrated configuration shipped with the crate.
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_JSON).expect("shipped canonical config is valid")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        self.model.validate().map_err(|e| prefix_key(e, "model"))?;
        self.analysis
            .validate()
            .map_err(|e| prefix_key(e, "analysis"))?;
        self.experiments
            .validate()
            .map_err(|e| prefix_key(e, "experiments"))?;
        self.calibration
            .validate()
            .map_err(|e| prefix_key(e, "calibration"))?;
        Ok(())
    }
}
