//! The experiments behind each subcommand.
//!
//! Each function writes its files and returns a report; `verdict` on the report
//! is what `--assert` checks.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use skipcrawl_core::calibrate::{
    self, CalibrationTarget, FitOptions, LossContext, ParameterVector,
};
use skipcrawl_core::config::ExperimentConfig;
use skipcrawl_core::gait::{self, AsymmetryNoise, GaitMode, PlanarPose, Trajectory};
use skipcrawl_core::locomotion::{self, LocomotionMode, ModeSwitch, TrialSpec};
use skipcrawl_core::springtail::{self, LengthRegime};
use skipcrawl_core::stats::{self, ForceTrace};
use skipcrawl_core::terrain::Material;

use crate::output::{num, write_json, write_trajectory, CsvTable};
use crate::{targets, HarnessError, Result};

type Verdict = std::result::Result<(), String>;

fn seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.experiments.trials as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TailLengthSummary {
    pub length_mm: f64,
    pub regime: LengthRegime,
    pub n: usize,
    #[serde(rename = "mean_N")]
    pub mean_n: Option<f64>,
    #[serde(rename = "ci_lo_N")]
    pub ci_lo_n: Option<f64>,
    #[serde(rename = "ci_hi_N")]
    pub ci_hi_n: Option<f64>,
    #[serde(skip)]
    pub peaks: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub seed: u64,
    pub duration_s: f64,
    pub revolutions: usize,
    pub lengths: Vec<TailLengthSummary>,
}

impl TailReport {
    /// Nominal tails strike every revolution with a mean near 4 N; jammed tails miss strikes.
    pub fn verdict(&self) -> Verdict {
        for l in &self.lengths {
            match l.regime {
                LengthRegime::Nominal => {
                    if l.n != self.revolutions {
                        return Err(format!(
                            "{} mm: {} peaks, expected {}",
                            l.length_mm, l.n, self.revolutions
                        ));
                    }
                    let m = l.mean_n.unwrap_or(f64::NAN);
                    if !(3.5..=4.5).contains(&m) {
                        return Err(format!(
                            "{} mm: mean peak {m} N outside [3.5, 4.5]",
                            l.length_mm
                        ));
                    }
                }
                LengthRegime::Jam if l.n >= self.revolutions && self.revolutions > 0 => {
                    return Err(format!(
                        "{} mm: jammed tail struck every revolution",
                        l.length_mm
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Simulated force recording and peak analysis for one tail length.
pub fn characterize_length(cfg: &ExperimentConfig, length_mm: f64) -> Result<TailLengthSummary> {
    let mut model = cfg.model.strikes.clone();
    model.tail.free_length_l = length_mm * 1e-3;
    model.validate()?;
    let duration = cfg.experiments.tail_duration;
    let regime = model.regime();
    let strikes = springtail::strike_sequence(&model, regime, duration, cfg.seed)?;
    let a = &cfg.analysis;
    let trace = springtail::strike_trace(&strikes, a.sample_rate, model.pulse_width, duration)?;
    let peaks = stats::detect_peaks(&trace, a.peak_threshold, a.min_separation)?;
    let ci = if peaks.values.is_empty() {
        None
    } else {
        Some(stats::bootstrap_ci(
            &peaks.values,
            a.bootstrap_level,
            a.resampling(),
            cfg.seed,
        )?)
    };
    Ok(TailLengthSummary {
        length_mm,
        regime,
        n: peaks.count(),
        mean_n: ci.map(|c| c.mean),
        ci_lo_n: ci.map(|c| c.lower),
        ci_hi_n: ci.map(|c| c.upper),
        peaks: peaks.values,
    })
}

pub fn tail_characterize(cfg: &ExperimentConfig, out: &Path) -> Result<TailReport> {
    let lengths = cfg
        .experiments
        .tail_lengths_mm
        .par_iter()
        .map(|&l| characterize_length(cfg, l))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = CsvTable::new(&["length_mm", "strike_idx", "peak_N"])?;
    for l in &lengths {
        for (i, p) in l.peaks.iter().enumerate() {
            csv.row(&[num(l.length_mm), i.to_string(), num(*p)])?;
        }
    }
    csv.save(&out.join("tail_peaks.csv"))?;
    let tail = &cfg.model.strikes.tail;
    let report = TailReport {
        seed: cfg.seed,
        duration_s: cfg.experiments.tail_duration,
        revolutions: (tail.motor_speed * cfg.experiments.tail_duration).floor() as usize,
        lengths,
    };
    write_json(&out.join("tail_summary.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftTrial {
    pub mode: GaitMode,
    pub seed: u64,
    pub max_abs_y_m: f64,
    pub progress_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub run_length_m: f64,
    pub trials: Vec<DriftTrial>,
}

impl DriftReport {
    pub fn max_drift(&self, mode: GaitMode) -> f64 {
        self.trials
            .iter()
            .filter(|t| t.mode == mode)
            .map(|t| t.max_abs_y_m)
            .fold(0.0, f64::max)
    }

    pub fn verdict(&self, zero_noise: bool) -> Verdict {
        for mode in [GaitMode::Sync, GaitMode::Async, GaitMode::OpenLoop] {
            let d = self.max_drift(mode);
            let limit = match mode {
                _ if zero_noise => 0.0,
                GaitMode::OpenLoop => 0.06,
                _ => 0.01,
            };
            let ok = if zero_noise {
                d == 0.0
            } else if mode.uses_encoder() {
                d < limit
            } else {
                d <= limit
            };
            if !ok {
                return Err(format!("{} drift {d} m exceeds {limit} m", mode.as_str()));
            }
        }
        Ok(())
    }
}

pub fn gait_drift(cfg: &ExperimentConfig, out: &Path, zero_noise: bool) -> Result<DriftReport> {
    let noise = if zero_noise {
        AsymmetryNoise::zero()
    } else {
        cfg.model.noise.clone()
    };
    let run_length = cfg.experiments.drift_run_length;
    let jobs: Vec<(GaitMode, u64)> = [GaitMode::Sync, GaitMode::Async, GaitMode::OpenLoop]
        .into_iter()
        .flat_map(|m| seeds(cfg).into_iter().map(move |s| (m, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(mode, seed)| gait::drift_run(mode, &cfg.model.gait, &noise, run_length, seed))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut csv = CsvTable::new(&["mode", "seed", "max_abs_y_m", "progress_m"])?;
    let mut trials = Vec::with_capacity(jobs.len());
    for (&(mode, seed), traj) in jobs.iter().zip(&runs) {
        write_trajectory(
            &out.join(format!("drift_{}_seed{seed}.csv", mode.as_str())),
            traj,
        )?;
        let t = DriftTrial {
            mode,
            seed,
            max_abs_y_m: stats::lateral_drift(traj)?,
            progress_m: traj.last().x,
        };
        csv.row(&[
            mode.as_str().into(),
            seed.to_string(),
            num(t.max_abs_y_m),
            num(t.progress_m),
        ])?;
        trials.push(t);
    }
    csv.save(&out.join("drift_summary.csv"))?;
    let report = DriftReport {
        run_length_m: run_length,
        trials,
    };
    write_json(&out.join("drift_summary.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionRow {
    pub material: Material,
    pub moisture: f64,
    pub mode: LocomotionMode,
    pub mean_cmps: f64,
    pub std_cmps: f64,
    pub failures: usize,
    pub failure_labels: Vec<&'static str>,
}

fn run_condition(
    cfg: &ExperimentConfig,
    material: Material,
    moisture: f64,
    mode: LocomotionMode,
) -> Result<ConditionRow> {
    let spec = TrialSpec {
        mode,
        material,
        moisture,
        duration: cfg.experiments.trial_duration,
        seed: cfg.seed,
    };
    let batch = locomotion::run_batch(&spec, cfg.experiments.trials, cfg.seed, &cfg.model)?;
    Ok(ConditionRow {
        material,
        moisture,
        mode,
        mean_cmps: batch.summary.mean_velocity * 100.0,
        std_cmps: batch.summary.std_velocity * 100.0,
        failures: batch.summary.failures,
        failure_labels: batch.trials.iter().map(|t| t.failure.as_str()).collect(),
    })
}

/// Materials the moisture sweep supports.
pub fn sweep_material(name: &str) -> Result<Material> {
    let m: Material = name
        .parse()
        .map_err(|e: skipcrawl_core::Error| HarnessError::Usage(e.to_string()))?;
    match m {
        Material::UniformSand | Material::BentoniteClay => Ok(m),
        other => Err(HarnessError::Usage(format!(
            "moisture sweep supports uniform_sand and bentonite_clay, not {other}"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<ConditionRow>,
}

impl SweepReport {
    pub fn curve(&self, material: Material, mode: LocomotionMode) -> Vec<&ConditionRow> {
        self.rows
            .iter()
            .filter(|r| r.material == material && r.mode == mode)
            .collect()
    }

    /// Moisture of the fastest grid point.
    pub fn argmax(&self, material: Material, mode: LocomotionMode) -> Option<(f64, f64)> {
        self.curve(material, mode)
            .into_iter()
            .map(|r| (r.moisture, r.mean_cmps))
            .fold(None, |best, p| match best {
                Some((_, v)) if v >= p.1 => best,
                _ => Some(p),
            })
    }

    pub fn verdict(&self) -> Verdict {
        for (material, center) in [
            (Material::UniformSand, 0.15),
            (Material::BentoniteClay, 0.2),
        ] {
            if let Some((m, _)) = self.argmax(material, LocomotionMode::Skip) {
                if (m - center).abs() > 0.05 + 1e-9 {
                    return Err(format!(
                        "{material} skip peaks at m = {m}, expected {center} +- 0.05"
                    ));
                }
            }
        }
        for r in &self.rows {
            let dry_sand_crawl = r.material == Material::UniformSand
                && r.moisture == 0.0
                && r.mode != LocomotionMode::Skip;
            if dry_sand_crawl && r.mean_cmps != 0.0 {
                return Err(format!(
                    "{} on dry sand moved {} cm/s",
                    r.mode.as_str(),
                    r.mean_cmps
                ));
            }
            let slipping = r.material == Material::BentoniteClay
                && r.moisture >= 0.8
                && r.mode == LocomotionMode::Skip;
            if slipping
                && (r.mean_cmps != 0.0 || r.failure_labels.iter().any(|l| *l != "tail_slip"))
            {
                return Err(format!(
                    "clay skip at m = {} did not fail by tail slip",
                    r.moisture
                ));
            }
        }
        Ok(())
    }
}

pub fn moisture_sweep(
    cfg: &ExperimentConfig,
    out: &Path,
    material: Option<Material>,
    grid: Option<&[f64]>,
) -> Result<SweepReport> {
    let mut plans: Vec<(Material, Vec<f64>)> = Vec::new();
    for (i, sweep) in cfg.experiments.moisture_sweeps.iter().enumerate() {
        sweep_material(sweep.material.as_str()).map_err(|e| {
            HarnessError::Model(skipcrawl_core::Error::Config {
                key: format!("experiments.moisture_sweeps[{i}].material"),
                message: e.to_string(),
            })
        })?;
        if material.is_none_or(|m| m == sweep.material) {
            plans.push((
                sweep.material,
                grid.map_or_else(|| sweep.grid.clone(), <[f64]>::to_vec),
            ));
        }
    }
    if let (Some(m), true) = (material, plans.is_empty()) {
        plans.push((m, grid.map(<[f64]>::to_vec).unwrap_or_default()));
    }
    if plans.iter().any(|(_, g)| g.is_empty()) {
        return Err(HarnessError::Usage("moisture grid is empty".into()));
    }
    let jobs: Vec<(Material, f64, LocomotionMode)> = plans
        .iter()
        .flat_map(|(mat, g)| {
            g.iter().flat_map(move |&m| {
                LocomotionMode::ALL
                    .into_iter()
                    .map(move |mode| (*mat, m, mode))
            })
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(mat, m, mode)| run_condition(cfg, mat, m, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = CsvTable::new(&[
        "material",
        "moisture",
        "mode",
        "mean_cmps",
        "std_cmps",
        "failures",
    ])?;
    for r in &rows {
        csv.row(&[
            r.material.as_str().into(),
            num(r.moisture),
            r.mode.as_str().into(),
            num(r.mean_cmps),
            num(r.std_cmps),
            r.failures.to_string(),
        ])?;
    }
    csv.save(&out.join("moisture_sweep.csv"))?;
    Ok(SweepReport { rows })
}

/// Skip speed order expected on the bench, fastest first.
pub const BENCH_ORDER: [Material; 4] = [
    Material::Grass,
    Material::NonUniformSand,
    Material::BentoniteClay,
    Material::UniformSand,
];

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<ConditionRow>,
    pub ordering_holds: bool,
}

impl BenchReport {
    pub fn verdict(&self) -> Verdict {
        if self.ordering_holds {
            Ok(())
        } else {
            Err("skip ordering grass > non-uniform sand > mud > uniform sand does not hold".into())
        }
    }
}

/// True when every bench material present appears in strictly decreasing speed.
pub fn ordering_holds(rows: &[ConditionRow]) -> bool {
    let speeds: Vec<f64> = BENCH_ORDER
        .iter()
        .filter_map(|m| rows.iter().find(|r| r.material == *m).map(|r| r.mean_cmps))
        .collect();
    speeds.windows(2).all(|w| w[0] > w[1])
}

pub fn substrate_bench(cfg: &ExperimentConfig, out: &Path) -> Result<BenchReport> {
    let rows = cfg
        .experiments
        .bench
        .par_iter()
        .map(|b| run_condition(cfg, b.material, b.moisture, LocomotionMode::Skip))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = CsvTable::new(&["material", "moisture", "mean_cmps", "std_cmps", "failures"])?;
    for r in &rows {
        csv.row(&[
            r.material.as_str().into(),
            num(r.moisture),
            num(r.mean_cmps),
            num(r.std_cmps),
            r.failures.to_string(),
        ])?;
    }
    csv.save(&out.join("substrate_bench.csv"))?;
    let report = BenchReport {
        ordering_holds: ordering_holds(&rows),
        rows,
    };
    write_json(&out.join("substrate_bench.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub total_duration_s: f64,
    pub displacement_m: f64,
    pub switches: Vec<ModeSwitch>,
    pub segment_failures: Vec<&'static str>,
    #[serde(skip)]
    pub segments: usize,
}

impl ScenarioReport {
    pub fn verdict(&self) -> Verdict {
        if self.switches.len() + 1 != self.segments {
            return Err(format!(
                "{} switches for {} segments",
                self.switches.len(),
                self.segments
            ));
        }
        Ok(())
    }
}

pub fn scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioReport> {
    let segs = &cfg.experiments.scenario;
    let run = locomotion::scenario_heterogeneous(segs, &cfg.model, cfg.seed)?;
    write_trajectory(&out.join("scenario_trajectory.csv"), &run.trajectory)?;
    let report = ScenarioReport {
        seed: cfg.seed,
        total_duration_s: run.trajectory.last().time,
        displacement_m: stats::net_displacement(&run.trajectory)?,
        switches: run.switches,
        segment_failures: run.segments.iter().map(|s| s.failure.as_str()).collect(),
        segments: segs.len(),
    };
    write_json(&out.join("scenario_switches.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TargetFit {
    pub target: CalibrationTarget,
    pub sim_cmps: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub loss: f64,
    pub evaluations: usize,
    pub config: ExperimentConfig,
    pub rows: Vec<TargetFit>,
}

impl CalibrationReport {
    /// Full-weight targets must be matched within 0.5 cm/s.
    pub fn verdict(&self) -> Verdict {
        for r in self.rows.iter().filter(|r| r.target.weight >= 1.0) {
            let err = (r.sim_cmps - r.target.target_mean * 100.0).abs();
            if err > 0.5 {
                return Err(format!(
                    "{} on {} at m = {}: off by {err} cm/s",
                    r.target.mode.as_str(),
                    r.target.material,
                    r.target.moisture
                ));
            }
        }
        Ok(())
    }
}

pub fn loss_context(cfg: &ExperimentConfig, targets: Vec<CalibrationTarget>) -> LossContext {
    LossContext {
        base: cfg.model.clone(),
        targets,
        n_trials: cfg.calibration.n_trials,
        seed: cfg.calibration.seed,
        trial_duration: cfg.experiments.trial_duration,
    }
}

pub fn calibrate(
    cfg: &ExperimentConfig,
    out: &Path,
    targets_path: &Path,
    budget: Option<usize>,
) -> Result<CalibrationReport> {
    let targets = targets::read_targets(targets_path)?;
    let ctx = loss_context(cfg, targets);
    let initial = ParameterVector::from_model(&cfg.model, &cfg.calibration.parameters)?;
    let options = FitOptions {
        budget: budget.unwrap_or(cfg.calibration.budget),
        restarts: cfg.calibration.restarts,
        seed: cfg.calibration.seed,
    };
    if options.budget == 0 {
        return Err(HarnessError::Usage("budget must be >= 1".into()));
    }
    let fit = calibrate::fit_model(&ctx, &initial, options)?;
    let mut fitted = cfg.clone();
    fitted.model = calibrate::apply(&cfg.model, &fit.params)?;
    fitted.validate()?;
    std::fs::write(out.join("fitted_config.json"), fitted.to_json())
        .map_err(|e| HarnessError::io(&out.join("fitted_config.json"), e))?;
    let mut csv = CsvTable::new(&["evaluation", "loss", "best"])?;
    for row in &fit.trace {
        csv.row(&[row.evaluation.to_string(), num(row.loss), num(row.best)])?;
    }
    csv.save(&out.join("loss_trace.csv"))?;
    let sim = calibrate::simulate_targets(&fitted.model, &ctx)?;
    let rows = ctx
        .targets
        .iter()
        .zip(sim)
        .map(|(t, s)| TargetFit {
            target: *t,
            sim_cmps: s * 100.0,
        })
        .collect();
    Ok(CalibrationReport {
        loss: fit.loss,
        evaluations: fit.evaluations,
        config: fitted,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ForceAnalysis {
    pub n: usize,
    pub peak_times_s: Vec<f64>,
    #[serde(rename = "peaks_N")]
    pub peaks_n: Vec<f64>,
    #[serde(rename = "mean_N")]
    pub mean_n: Option<f64>,
    #[serde(rename = "ci_lo_N")]
    pub ci_lo_n: Option<f64>,
    #[serde(rename = "ci_hi_N")]
    pub ci_hi_n: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryAnalysis {
    pub displacement_m: f64,
    pub path_length_m: f64,
    pub mean_velocity_mps: f64,
    pub lateral_drift_m: f64,
    pub failure: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub force: Option<ForceAnalysis>,
    pub trajectory: Option<TrajectoryAnalysis>,
}

fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if names != header {
        return Err(HarnessError::Usage(format!(
            "{}: header must be `{}`",
            path.display(),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Usage(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Force samples must be uniformly spaced; the rate comes from the first interval.
pub fn analyze_force(cfg: &ExperimentConfig, path: &Path) -> Result<ForceAnalysis> {
    let rows = read_columns(path, &["time_s", "force_N"])?;
    if rows.len() < 2 {
        return Err(HarnessError::Usage(format!(
            "{}: need at least two samples",
            path.display()
        )));
    }
    let dt = rows[1][0] - rows[0][0];
    if !(dt > 0.0) {
        return Err(HarnessError::Usage(format!(
            "{}: time must increase",
            path.display()
        )));
    }
    let trace = ForceTrace::new(1.0 / dt, rows.iter().map(|r| r[1]).collect())?;
    let a = &cfg.analysis;
    let peaks = stats::detect_peaks(&trace, a.peak_threshold, a.min_separation)?;
    let ci = if peaks.values.is_empty() {
        None
    } else {
        Some(stats::bootstrap_ci(
            &peaks.values,
            a.bootstrap_level,
            a.resampling(),
            cfg.seed,
        )?)
    };
    Ok(ForceAnalysis {
        n: peaks.count(),
        peak_times_s: peaks.indices.iter().map(|&i| rows[i][0]).collect(),
        mean_n: ci.map(|c| c.mean),
        ci_lo_n: ci.map(|c| c.lower),
        ci_hi_n: ci.map(|c| c.upper),
        peaks_n: peaks.values,
    })
}

pub fn analyze_trajectory(path: &Path) -> Result<TrajectoryAnalysis> {
    let rows = read_columns(path, &crate::output::TRAJECTORY_HEADER)?;
    let poses = rows
        .iter()
        .map(|r| PlanarPose {
            time: r[0],
            x: r[1],
            y: r[2],
            heading: r[3],
        })
        .collect();
    let traj = Trajectory::new(poses)?;
    let displacement = stats::net_displacement(&traj)?;
    Ok(TrajectoryAnalysis {
        displacement_m: displacement,
        path_length_m: stats::path_length(&traj),
        mean_velocity_mps: stats::mean_velocity(&traj)?,
        lateral_drift_m: stats::lateral_drift(&traj)?,
        failure: stats::classify_trial(displacement, None).as_str(),
    })
}

pub fn analyze(
    cfg: &ExperimentConfig,
    out: &Path,
    force: Option<&Path>,
    trajectory: Option<&Path>,
) -> Result<Analysis> {
    if force.is_none() && trajectory.is_none() {
        return Err(HarnessError::Usage(
            "analyze needs --force and/or --trajectory".into(),
        ));
    }
    let analysis = Analysis {
        force: force.map(|p| analyze_force(cfg, p)).transpose()?,
        trajectory: trajectory.map(analyze_trajectory).transpose()?,
    };
    write_json(&out.join("analysis.json"), &analysis)?;
    Ok(analysis)
}
