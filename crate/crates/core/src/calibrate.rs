//! Bounded derivative-free fitting of free model parameters to measured mean velocities.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::FreeParameter;
use crate::error::{Error, Result};
use crate::locomotion::{self, LocomotionMode, Model, TrialSpec};
use crate::rng::{self, Stream};
use crate::terrain::Material;

/// One named parameter with its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Named, bounded free parameters. Values always lie inside their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    params: Vec<Parameter>,
}

impl ParameterVector {
    pub fn new(params: Vec<Parameter>) -> Result<Self> {
        for (i, p) in params.iter().enumerate() {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower <= p.upper) {
                return Err(Error::domain(format!("`{}` has invalid bounds", p.name)));
            }
            if !(p.lower..=p.upper).contains(&p.value) {
                return Err(Error::domain(format!(
                    "`{}` = {} outside [{}, {}]",
                    p.name, p.value, p.lower, p.upper
                )));
            }
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::domain(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(Self { params })
    }

    /// Reads the current value of each free parameter from `model`.
    pub fn from_model(model: &Model, free: &[FreeParameter]) -> Result<Self> {
        let params = free
            .iter()
            .map(|f| {
                Ok(Parameter {
                    name: f.name.clone(),
                    value: get_param(model, &f.name)?,
                    lower: f.lower,
                    upper: f.upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(params)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Same names and bounds with new values; out-of-bounds values are an error.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.params.len() {
            return Err(Error::domain(format!(
                "expected {} values, got {}",
                self.params.len(),
                values.len()
            )));
        }
        let params = self
            .params
            .iter()
            .zip(values)
            .map(|(p, &value)| Parameter { value, ..p.clone() })
            .collect();
        Self::new(params)
    }
}

/// A measured condition and its reported velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub mode: LocomotionMode,
    pub material: Material,
    pub moisture: f64,
    /// m/s
    pub target_mean: f64,
    /// m/s
    pub target_std: f64,
    pub weight: f64,
}

impl CalibrationTarget {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::domain("weight must be finite and > 0"));
        }
        if !(self.target_mean >= 0.0 && self.target_std >= 0.0) {
            return Err(Error::domain("target mean and std must be >= 0"));
        }
        Ok(())
    }
}

fn unknown(name: &str) -> Error {
    Error::domain(format!("unknown parameter `{name}`"))
}

fn param_slot<'a>(model: &'a mut Model, name: &str) -> Result<&'a mut f64> {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        ["gait", "async_stride_fraction"] => Ok(&mut model.gait.async_stride_fraction),
        ["gait", "stride"] => Ok(&mut model.gait.stride),
        ["noise", "stride_std"] => Ok(&mut model.noise.stride_std),
        ["noise", "heading_std"] => Ok(&mut model.noise.heading_std),
        ["noise", "phase_yaw"] => Ok(&mut model.noise.phase_yaw),
        ["strikes", "pulse_width"] => Ok(&mut model.strikes.pulse_width),
        [material, curve, field] => {
            let material: Material = material.parse().map_err(|_| unknown(name))?;
            let r = model.substrates.get_mut(material);
            match (*curve, *field) {
                ("skip", "floor") => Ok(&mut r.skip.floor),
                ("skip", "peak") => Ok(&mut r.skip.peak),
                ("skip", "center") => Ok(&mut r.skip.center),
                ("skip", "width") => Ok(&mut r.skip.width),
                ("crawl", "amplitude") => Ok(&mut r.crawl.amplitude),
                ("crawl", "rise_center") => Ok(&mut r.crawl.rise_center),
                ("crawl", "rise_width") => Ok(&mut r.crawl.rise_width),
                ("crawl", "decay") => Ok(&mut r.crawl.decay),
                _ => Err(unknown(name)),
            }
        }
        _ => Err(unknown(name)),
    }
}

fn is_level(name: &str) -> Option<&str> {
    name.strip_suffix(".skip.level")
}

/// Reads a named parameter. `<material>.skip.level` is the floor of a flat skip curve.
pub fn get_param(model: &Model, name: &str) -> Result<f64> {
    let mut scratch = model.clone();
    match is_level(name) {
        Some(material) => get_param(model, &format!("{material}.skip.floor")),
        None => param_slot(&mut scratch, name).map(|v| *v),
    }
}

/// Writes a named parameter. `<material>.skip.level` sets floor and peak together.
pub fn set_param(model: &mut Model, name: &str, value: f64) -> Result<()> {
    if let Some(material) = is_level(name) {
        set_param(model, &format!("{material}.skip.floor"), value)?;
        return set_param(model, &format!("{material}.skip.peak"), value);
    }
    *param_slot(model, name)? = value;
    Ok(())
}

/// A copy of `base` with every parameter of `params` applied.
pub fn apply(base: &Model, params: &ParameterVector) -> Result<Model> {
    let mut model = base.clone();
    for p in params.params() {
        set_param(&mut model, &p.name, p.value)?;
    }
    Ok(model)
}

/// Everything the loss depends on besides the parameter values.
#[derive(Debug, Clone)]
pub struct LossContext {
    pub base: Model,
    pub targets: Vec<CalibrationTarget>,
    pub n_trials: usize,
    pub seed: u64,
    /// s
    pub trial_duration: f64,
}

/// Simulated batch mean velocity for every target, m/s.
pub fn simulate_targets(model: &Model, ctx: &LossContext) -> Result<Vec<f64>> {
    ctx.targets
        .par_iter()
        .map(|t| {
            let spec = TrialSpec {
                mode: t.mode,
                material: t.material,
                moisture: t.moisture,
                duration: ctx.trial_duration,
                seed: ctx.seed,
            };
            locomotion::run_batch(&spec, ctx.n_trials, ctx.seed, model)
                .map(|b| b.summary.mean_velocity)
        })
        .collect()
}

/// Weighted squared error of simulated against target mean velocities, (m/s)^2.
pub fn loss(params: &ParameterVector, ctx: &LossContext) -> Result<f64> {
    let model = apply(&ctx.base, params)?;
    model.validate()?;
    let sim = simulate_targets(&model, ctx)?;
    Ok(ctx
        .targets
        .iter()
        .zip(&sim)
        .map(|(t, s)| t.weight * (s - t.target_mean).powi(2))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Maximum objective evaluations, at least 1.
    pub budget: usize,
    /// Search starts, the first at the initial point.
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub evaluation: usize,
    pub loss: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParameterVector,
    pub loss: f64,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

const INITIAL_STEP: f64 = 0.25;
const MIN_STEP: f64 = 1e-6;
const RESTART_JITTER: f64 = 0.1;

struct Search<'a, F> {
    objective: F,
    lower: &'a [f64],
    upper: &'a [f64],
    budget: usize,
    trace: Vec<TraceRow>,
    best: (Vec<f64>, f64),
}

impl<F: FnMut(&[f64]) -> f64> Search<'_, F> {
    fn exhausted(&self) -> bool {
        self.trace.len() >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let raw = (self.objective)(x);
        // a failed evaluation never becomes the best point
        let f = if raw.is_nan() { f64::INFINITY } else { raw };
        if f < self.best.1 || self.trace.is_empty() {
            self.best = (x.to_vec(), f);
        }
        self.trace.push(TraceRow {
            evaluation: self.trace.len() + 1,
            loss: f,
            best: self.best.1,
        });
        f
    }

    /// Coordinate search from `x` with steps measured as fractions of each box.
    fn descend(&mut self, mut x: Vec<f64>, mut fx: f64, mut step: f64, stop_at: usize) {
        while step >= MIN_STEP && self.trace.len() < stop_at && !self.exhausted() {
            let mut improved = false;
            for i in 0..x.len() {
                let span = self.upper[i] - self.lower[i];
                if span == 0.0 {
                    continue;
                }
                for dir in [1.0, -1.0] {
                    if self.trace.len() >= stop_at || self.exhausted() {
                        return;
                    }
                    let mut y = x.clone();
                    y[i] = (x[i] + dir * step * span).clamp(self.lower[i], self.upper[i]);
                    if y[i] == x[i] {
                        continue;
                    }
                    let fy = self.eval(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }
}

/// Minimizes `objective` over the box of `initial` by coordinate search.
///
/// Each coordinate is probed by plus and minus one step; the step halves after
/// a sweep without improvement. The first start is the initial point, later
/// starts jitter around the best point found so far. The budget is shared
/// evenly between starts, with leftovers passed on.
pub fn fit<F>(objective: F, initial: &ParameterVector, options: FitOptions) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if options.budget == 0 {
        return Err(Error::domain("budget must be >= 1"));
    }
    let lower: Vec<f64> = initial.params().iter().map(|p| p.lower).collect();
    let upper: Vec<f64> = initial.params().iter().map(|p| p.upper).collect();
    let mut search = Search {
        objective,
        lower: &lower,
        upper: &upper,
        budget: options.budget,
        trace: Vec::new(),
        best: (initial.values(), f64::INFINITY),
    };
    let starts = options.restarts.max(1);
    let mut rng = rng::stream(options.seed, Stream::Search);
    let jitter = Normal::new(0.0, RESTART_JITTER).expect("positive std");
    let x0 = initial.values();
    let f0 = search.eval(&x0);
    for r in 0..starts {
        if search.exhausted() {
            break;
        }
        let remaining = options.budget - search.trace.len();
        let stop_at = search.trace.len() + remaining / (starts - r);
        if r == 0 {
            search.descend(x0.clone(), f0, INITIAL_STEP, stop_at);
        } else {
            let x: Vec<f64> = search
                .best
                .0
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    (b + jitter.sample(&mut rng) * (upper[i] - lower[i])).clamp(lower[i], upper[i])
                })
                .collect();
            let fx = search.eval(&x);
            search.descend(x, fx, INITIAL_STEP / 2.0, stop_at);
        }
    }
    let (best_x, best_f) = search.best.clone();
    Ok(FitResult {
        params: initial.with_values(&best_x)?,
        loss: best_f,
        evaluations: search.trace.len(),
        trace: search.trace,
    })
}

/// Fits the free parameters of `ctx.base` to `ctx.targets`.
///
/// Parameter sets the model rejects score infinite loss.
pub fn fit_model(
    ctx: &LossContext,
    initial: &ParameterVector,
    options: FitOptions,
) -> Result<FitResult> {
    for t in &ctx.targets {
        t.validate()?;
    }
    fit(
        |x| {
            initial
                .with_values(x)
                .and_then(|p| loss(&p, ctx))
                .unwrap_or(f64::INFINITY)
        },
        initial,
        options,
    )
}
