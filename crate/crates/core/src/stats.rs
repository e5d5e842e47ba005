//! Measurement pipeline: peak detection on force traces, percentile bootstrap
//! of the mean, trajectory metrics, and the trial failure rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::Trajectory;
use crate::rng::{self, Stream};

/// Trials that travel less than this are failures, m.
pub const SUCCESS_DISPLACEMENT: f64 = 0.10;

/// Uniformly sampled scalar force signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceTrace {
    sample_rate: f64,
    samples: Vec<f64>,
}

impl ForceTrace {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl PeakSet {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Local maxima at or above `threshold`, at least `min_separation` seconds apart.
///
/// Candidates are accepted greedily from the largest down; on equal height the
/// earlier one wins. A flat top counts once, at its first sample. The result is
/// ordered by time.
pub fn detect_peaks(trace: &ForceTrace, threshold: f64, min_separation: f64) -> Result<PeakSet> {
    if !(threshold > 0.0) {
        return Err(Error::domain(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    if !(min_separation >= 0.0) {
        return Err(Error::domain("min_separation must be >= 0"));
    }
    let x = trace.samples();
    let n = x.len();
    // smallest whole sample gap that spans min_separation; the slack absorbs float noise
    let distance = (min_separation * trace.sample_rate() - 1e-9)
        .ceil()
        .max(0.0) as usize;

    let mut candidates = Vec::new();
    let mut i = 0;
    while i < n {
        if x[i] < threshold {
            i += 1;
            continue;
        }
        let rises = i == 0 || x[i] > x[i - 1];
        // walk over a plateau
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        let falls = j + 1 == n || x[j + 1] < x[i];
        if rises && falls {
            candidates.push(i);
        }
        i = j + 1;
    }

    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= distance.max(1)) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    Ok(PeakSet {
        values: kept.iter().map(|&k| x[k]).collect(),
        indices: kept,
    })
}

/// How the bootstrap distribution of the mean is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Monte Carlo, unless the sample is small enough (`n <= 5`) that all
    /// `n^n` ordered resamples fit in the budget, in which case they are enumerated.
    Auto(usize),
    /// Always Monte Carlo with this many resamples.
    MonteCarlo(usize),
    /// Enumerate all `n^n` ordered resamples.
    Exhaustive,
}

/// Largest sample for which [`Resampling::Auto`] switches to enumeration.
pub const AUTO_EXHAUSTIVE_MAX_N: usize = 5;
const EXHAUSTIVE_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
}

/// Inverse empirical CDF of sorted data: the smallest value whose cumulative
/// share reaches `q`, i.e. rank `ceil(q * len)` counted from 1.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    // the slack keeps q * n that should be integral from rounding up a rank
    let rank = (q.clamp(0.0, 1.0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator; zero for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    // Welford: identical values give exactly zero
    let (mut m, mut ss) = (0.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        let d = v - m;
        m += d / (k + 1) as f64;
        ss += d * (v - m);
    }
    (ss / (values.len() - 1) as f64).sqrt()
}

fn exhaustive_means(samples: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    let total = (n as u32)
        .checked_pow(n as u32)
        .map(|t| t as usize)
        .filter(|&t| t <= EXHAUSTIVE_LIMIT)
        .ok_or_else(|| Error::domain(format!("{n}^{n} resamples is too many to enumerate")))?;
    let mut idx = vec![0usize; n];
    let mut means = Vec::with_capacity(total);
    for _ in 0..total {
        let sum: f64 = idx.iter().map(|&i| samples[i]).sum();
        means.push(sum / n as f64);
        // odometer increment
        for d in idx.iter_mut().rev() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    Ok(means)
}

fn monte_carlo_means(samples: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let n = samples.len();
    let mut rng = rng::stream(seed, Stream::Bootstrap);
    (0..resamples)
        .map(|_| {
            let sum: f64 = (0..n).map(|_| samples[rng.random_range(0..n)]).sum();
            sum / n as f64
        })
        .collect()
}

/// Percentile bootstrap confidence interval for the mean.
pub fn bootstrap_ci(
    samples: &[f64],
    level: f64,
    resampling: Resampling,
    seed: u64,
) -> Result<BootstrapCI> {
    if samples.is_empty() {
        return Err(Error::domain("bootstrap needs at least one sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let n = samples.len();
    let mut means = match resampling {
        Resampling::Exhaustive => exhaustive_means(samples)?,
        Resampling::Auto(b) => {
            let enumerable = n <= AUTO_EXHAUSTIVE_MAX_N && n.pow(n as u32) <= b;
            if enumerable {
                exhaustive_means(samples)?
            } else {
                monte_carlo_means(samples, b.max(1), seed)
            }
        }
        Resampling::MonteCarlo(b) => monte_carlo_means(samples, b.max(1), seed),
    };
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCI {
        mean: mean(samples),
        lower: quantile_sorted(&means, alpha),
        upper: quantile_sorted(&means, 1.0 - alpha),
        level,
        resamples: means.len(),
    })
}

fn require_poses(trajectory: &Trajectory) -> Result<()> {
    if trajectory.poses().len() < 2 {
        return Err(Error::domain("trajectory needs at least two poses"));
    }
    Ok(())
}

/// Net straight-line displacement between the first and last pose, m.
pub fn net_displacement(trajectory: &Trajectory) -> Result<f64> {
    require_poses(trajectory)?;
    let p = trajectory.poses();
    let (a, b) = (p[0], p[p.len() - 1]);
    Ok((b.x - a.x).hypot(b.y - a.y))
}

/// Sum of segment lengths along the pose sequence, m.
pub fn path_length(trajectory: &Trajectory) -> f64 {
    trajectory
        .poses()
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

/// Net displacement over elapsed time, m/s.
pub fn mean_velocity(trajectory: &Trajectory) -> Result<f64> {
    let d = net_displacement(trajectory)?;
    let p = trajectory.poses();
    let elapsed = p[p.len() - 1].time - p[0].time;
    if !(elapsed > 0.0) {
        return Err(Error::domain("trajectory spans no time"));
    }
    Ok(d / elapsed)
}

/// Largest perpendicular distance from the line through the start pose along its heading, m.
pub fn lateral_drift(trajectory: &Trajectory) -> Result<f64> {
    require_poses(trajectory)?;
    let p = trajectory.poses();
    let origin = p[0];
    let (s, c) = origin.heading.sin_cos();
    Ok(p.iter()
        .map(|q| (-s * (q.x - origin.x) + c * (q.y - origin.y)).abs())
        .fold(0.0, f64::max))
}

/// Trial outcome label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    None,
    Excavation,
    PitchOver,
    TailSlip,
    BelowThreshold,
}

impl Failure {
    pub fn as_str(self) -> &'static str {
        match self {
            Failure::None => "none",
            Failure::Excavation => "excavation",
            Failure::PitchOver => "pitch_over",
            Failure::TailSlip => "tail_slip",
            Failure::BelowThreshold => "below_threshold",
        }
    }

    pub fn is_failure(self) -> bool {
        self != Failure::None
    }
}

/// A hard failure passes through; otherwise short trials fail and the rest succeed.
///
/// Exactly [`SUCCESS_DISPLACEMENT`] counts as success.
pub fn classify_trial(displacement: f64, hard_failure: Option<Failure>) -> Failure {
    match hard_failure {
        Some(f) if f.is_failure() => f,
        _ if displacement < SUCCESS_DISPLACEMENT => Failure::BelowThreshold,
        _ => Failure::None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::PlanarPose;

    fn pose(x: f64, y: f64, t: f64) -> PlanarPose {
        PlanarPose {
            x,
            y,
            heading: 0.0,
            time: t,
        }
    }

    #[test]
    fn zero_trace_has_no_peaks() {
        let trace = ForceTrace::new(1000.0, vec![0.0; 5000]).unwrap();
        assert_eq!(detect_peaks(&trace, 1.0, 0.3).unwrap().count(), 0);
        let empty = ForceTrace::new(1000.0, vec![]).unwrap();
        assert_eq!(detect_peaks(&empty, 1.0, 0.3).unwrap().count(), 0);
        assert!(detect_peaks(&trace, 0.0, 0.3).is_err());
    }

    #[test]
    fn close_pulses_keep_the_larger() {
        let mut s = vec![0.0; 1000];
        s[100] = 3.0;
        s[150] = 5.0;
        s[700] = 2.0;
        let trace = ForceTrace::new(1000.0, s).unwrap();
        let peaks = detect_peaks(&trace, 1.0, 0.3).unwrap();
        assert_eq!(peaks.indices, vec![150, 700]);
        assert_eq!(peaks.values, vec![5.0, 2.0]);
    }

    #[test]
    fn equal_peaks_keep_the_earlier() {
        let mut s = vec![0.0; 1000];
        s[100] = 4.0;
        s[200] = 4.0;
        let trace = ForceTrace::new(1000.0, s).unwrap();
        assert_eq!(detect_peaks(&trace, 1.0, 0.3).unwrap().indices, vec![100]);
    }

    #[test]
    fn plateau_counts_once() {
        let s = vec![0.0, 2.0, 2.0, 2.0, 0.0, 0.0];
        let trace = ForceTrace::new(10.0, s).unwrap();
        assert_eq!(detect_peaks(&trace, 1.0, 0.0).unwrap().indices, vec![1]);
    }

    #[test]
    fn constant_samples_give_degenerate_interval() {
        let ci = bootstrap_ci(&[3.0; 7], 0.95, Resampling::Auto(10_000), 1).unwrap();
        assert_eq!((ci.mean, ci.lower, ci.upper), (3.0, 3.0, 3.0));
        assert!(bootstrap_ci(&[], 0.95, Resampling::Auto(10), 1).is_err());
        assert!(bootstrap_ci(&[1.0], 1.0, Resampling::Auto(10), 1).is_err());
    }

    #[test]
    fn auto_enumerates_small_samples() {
        let ci = bootstrap_ci(&[2.0, 4.0, 6.0], 0.95, Resampling::Auto(10_000), 9).unwrap();
        assert_eq!(ci.resamples, 27);
        let mc = bootstrap_ci(&[2.0, 4.0, 6.0], 0.95, Resampling::Auto(20), 9).unwrap();
        assert_eq!(mc.resamples, 20);
    }

    #[test]
    fn quantile_is_inverse_ecdf() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.51), 3.0);
        assert_eq!(quantile_sorted(&s, 0.025), 1.0);
        assert_eq!(quantile_sorted(&s, 0.975), 4.0);
    }

    #[test]
    fn velocity_and_drift_basics() {
        let still = Trajectory::new(vec![pose(0.0, 0.0, 0.0), pose(0.0, 0.0, 10.0)]).unwrap();
        assert_eq!(mean_velocity(&still).unwrap(), 0.0);
        let line = Trajectory::new(vec![pose(0.0, 0.0, 0.0), pose(0.3, 0.0, 10.0)]).unwrap();
        assert!((mean_velocity(&line).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(lateral_drift(&line).unwrap(), 0.0);
        let l_shape = Trajectory::new(vec![
            pose(0.0, 0.0, 0.0),
            pose(0.06, 0.0, 1.0),
            pose(0.06, 0.06, 2.0),
        ])
        .unwrap();
        assert!((lateral_drift(&l_shape).unwrap() - 0.06).abs() < 1e-15);
        let single = Trajectory::new(vec![pose(0.0, 0.0, 0.0)]).unwrap();
        assert!(mean_velocity(&single).is_err());
        assert!(lateral_drift(&single).is_err());
    }

    #[test]
    fn curved_path_uses_net_displacement() {
        let arc: Vec<_> = (0..=20)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 20.0;
                pose(0.1 * (1.0 - a.cos()), 0.1 * a.sin(), i as f64)
            })
            .collect();
        let traj = Trajectory::new(arc).unwrap();
        let v = mean_velocity(&traj).unwrap();
        assert!((v - 0.2 / 20.0).abs() < 1e-12);
        assert!(v <= path_length(&traj) / 20.0);
    }

    #[test]
    fn failure_rule() {
        assert_eq!(classify_trial(0.09, None), Failure::BelowThreshold);
        assert_eq!(classify_trial(0.099, None), Failure::BelowThreshold);
        assert_eq!(classify_trial(0.10, None), Failure::None);
        assert_eq!(
            classify_trial(0.5, Some(Failure::Excavation)),
            Failure::Excavation
        );
        assert_eq!(classify_trial(0.5, Some(Failure::None)), Failure::None);
    }
}
