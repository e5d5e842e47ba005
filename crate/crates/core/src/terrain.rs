//! Phenomenological substrate response.
//!
//! Moisture `m` is added water mass over dry substrate mass. Each material maps
//! `m` to a skip efficiency (how much of a tail impulse becomes take-off
//! momentum) and a crawl traction (how much of a fin stroke becomes forward
//! motion), plus the categorical failure flags used by the locomotion engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the modelled moisture domain.
pub const MAX_MOISTURE: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    UniformSand,
    NonUniformSand,
    BentoniteClay,
    Grass,
    Rigid,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::UniformSand,
        Material::NonUniformSand,
        Material::BentoniteClay,
        Material::Grass,
        Material::Rigid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Material::UniformSand => "uniform_sand",
            Material::NonUniformSand => "non_uniform_sand",
            Material::BentoniteClay => "bentonite_clay",
            Material::Grass => "grass",
            Material::Rigid => "rigid",
        }
    }

    /// Grass and rigid ground respond the same at any moisture.
    pub fn ignores_moisture(self) -> bool {
        matches!(self, Material::Grass | Material::Rigid)
    }
}

impl std::str::FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Material::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown material `{s}`")))
    }
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gaussian bump over a floor: `floor + (peak - floor) exp(-(m - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipCurve {
    pub floor: f64,
    pub peak: f64,
    pub center: f64,
    pub width: f64,
}

impl SkipCurve {
    pub fn constant(level: f64) -> Self {
        Self {
            floor: level,
            peak: level,
            center: 0.0,
            width: 1.0,
        }
    }

    pub fn eval(&self, m: f64) -> f64 {
        let z = (m - self.center) / self.width;
        (self.floor + (self.peak - self.floor) * (-0.5 * z * z).exp()).clamp(0.0, 1.0)
    }
}

/// Logistic rise times exponential decline:
/// `amplitude / (1 + exp(-(m - rise_center) / rise_width)) * exp(-decay m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlCurve {
    pub amplitude: f64,
    pub rise_center: f64,
    pub rise_width: f64,
    pub decay: f64,
}

impl CrawlCurve {
    pub fn constant(level: f64) -> Self {
        // a steep rise far below zero moisture is flat on the domain
        Self {
            amplitude: level,
            rise_center: -1.0,
            rise_width: 1e-3,
            decay: 0.0,
        }
    }

    pub fn eval(&self, m: f64) -> f64 {
        let rise = 1.0 / (1.0 + (-(m - self.rise_center) / self.rise_width).exp());
        (self.amplitude * rise * (-self.decay * m).exp()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoistureResponse {
    pub skip: SkipCurve,
    pub crawl: CrawlCurve,
    /// Moisture at and above which the tail shears through the bed.
    pub slip_threshold: Option<f64>,
    /// Crawl traction below which the fins dig in instead of advancing.
    pub excavation_threshold: f64,
    /// Fraction of crawl traction lost to fins tangling in the substrate.
    pub entanglement: f64,
}

impl MoistureResponse {
    pub fn validate(&self, key: &str) -> Result<()> {
        let s = &self.skip;
        let c = &self.crawl;
        let checks = [
            ("skip.floor", (0.0..=1.0).contains(&s.floor)),
            ("skip.peak", (0.0..=1.0).contains(&s.peak)),
            ("skip.width", s.width > 0.0),
            ("skip.center", s.center.is_finite()),
            ("crawl.amplitude", (0.0..=1.0).contains(&c.amplitude)),
            ("crawl.rise_width", c.rise_width > 0.0),
            ("crawl.rise_center", c.rise_center.is_finite()),
            ("crawl.decay", c.decay >= 0.0 && c.decay.is_finite()),
            (
                "slip_threshold",
                self.slip_threshold
                    .is_none_or(|t| (0.0..=MAX_MOISTURE).contains(&t)),
            ),
            (
                "excavation_threshold",
                (0.0..=1.0).contains(&self.excavation_threshold),
            ),
            ("entanglement", (0.0..=1.0).contains(&self.entanglement)),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::config(format!("{key}.{field}"), "out of bounds"));
            }
        }
        Ok(())
    }
}

/// Mechanical coefficients of one material at one moisture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstrateParams {
    pub skip_efficiency: f64,
    pub crawl_traction: f64,
    pub tail_slips: bool,
    pub excavates: bool,
    pub entangles: bool,
}

/// Uncalibrated starting curves for each material.
pub fn default_curves(material: Material) -> MoistureResponse {
    match material {
        Material::UniformSand => MoistureResponse {
            skip: SkipCurve {
                floor: 0.25,
                peak: 0.65,
                center: 0.15,
                width: 0.06,
            },
            crawl: CrawlCurve {
                amplitude: 1.0,
                rise_center: 0.05,
                rise_width: 0.015,
                decay: 1.0,
            },
            slip_threshold: None,
            excavation_threshold: 0.15,
            entanglement: 0.0,
        },
        Material::NonUniformSand => MoistureResponse {
            skip: SkipCurve {
                floor: 0.55,
                peak: 0.75,
                center: 0.15,
                width: 0.08,
            },
            crawl: CrawlCurve {
                amplitude: 1.0,
                rise_center: 0.05,
                rise_width: 0.015,
                decay: 1.0,
            },
            slip_threshold: None,
            excavation_threshold: 0.15,
            entanglement: 0.0,
        },
        Material::BentoniteClay => MoistureResponse {
            skip: SkipCurve {
                floor: 0.0,
                peak: 0.55,
                center: 0.2,
                width: 0.1,
            },
            crawl: CrawlCurve {
                amplitude: 0.8,
                rise_center: 0.35,
                rise_width: 0.08,
                decay: 0.5,
            },
            slip_threshold: Some(0.8),
            excavation_threshold: 0.05,
            entanglement: 0.0,
        },
        Material::Grass => MoistureResponse {
            skip: SkipCurve::constant(0.8),
            crawl: CrawlCurve::constant(1.0),
            slip_threshold: None,
            excavation_threshold: 0.0,
            entanglement: 1.0,
        },
        Material::Rigid => MoistureResponse {
            skip: SkipCurve::constant(0.5),
            crawl: CrawlCurve::constant(1.0),
            slip_threshold: None,
            excavation_threshold: 0.0,
            entanglement: 0.0,
        },
    }
}

/// Response curves for every material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateTable {
    pub uniform_sand: MoistureResponse,
    pub non_uniform_sand: MoistureResponse,
    pub bentonite_clay: MoistureResponse,
    pub grass: MoistureResponse,
    pub rigid: MoistureResponse,
}

impl Default for SubstrateTable {
    fn default() -> Self {
        Self {
            uniform_sand: default_curves(Material::UniformSand),
            non_uniform_sand: default_curves(Material::NonUniformSand),
            bentonite_clay: default_curves(Material::BentoniteClay),
            grass: default_curves(Material::Grass),
            rigid: default_curves(Material::Rigid),
        }
    }
}

impl SubstrateTable {
    pub fn get(&self, material: Material) -> &MoistureResponse {
        match material {
            Material::UniformSand => &self.uniform_sand,
            Material::NonUniformSand => &self.non_uniform_sand,
            Material::BentoniteClay => &self.bentonite_clay,
            Material::Grass => &self.grass,
            Material::Rigid => &self.rigid,
        }
    }

    pub fn get_mut(&mut self, material: Material) -> &mut MoistureResponse {
        match material {
            Material::UniformSand => &mut self.uniform_sand,
            Material::NonUniformSand => &mut self.non_uniform_sand,
            Material::BentoniteClay => &mut self.bentonite_clay,
            Material::Grass => &mut self.grass,
            Material::Rigid => &mut self.rigid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Material::ALL {
            self.get(m).validate(m.as_str())?;
        }
        Ok(())
    }

    /// Evaluates a material's response at moisture `m`.
    pub fn moisture_response(&self, material: Material, m: f64) -> Result<SubstrateParams> {
        moisture_response(material, m, self.get(material))
    }
}

pub fn moisture_response(
    material: Material,
    m: f64,
    response: &MoistureResponse,
) -> Result<SubstrateParams> {
    if !(0.0..=MAX_MOISTURE).contains(&m) {
        return Err(Error::domain(format!(
            "moisture {m} outside [0, {MAX_MOISTURE}]"
        )));
    }
    let m = if material.ignores_moisture() { 0.0 } else { m };
    let tail_slips = response.slip_threshold.is_some_and(|t| m >= t);
    let skip_efficiency = if tail_slips {
        0.0
    } else {
        response.skip.eval(m)
    };
    let crawl_traction = response.crawl.eval(m) * (1.0 - response.entanglement);
    Ok(SubstrateParams {
        skip_efficiency,
        crawl_traction,
        tail_slips,
        excavates: crawl_traction < response.excavation_threshold,
        entangles: response.entanglement > 0.0,
    })
}

/// Number of local maxima of a sampled curve, treating flat runs as one point.
pub fn count_local_maxima(values: &[f64]) -> usize {
    let mut dedup: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if dedup.last() != Some(&v) {
            dedup.push(v);
        }
    }
    let n = dedup.len();
    if n == 1 {
        return 1;
    }
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || dedup[i] > dedup[i - 1];
            let right_ok = i + 1 == n || dedup[i] > dedup[i + 1];
            left_ok && right_ok
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64, max: f64) -> Vec<f64> {
        let n = (max / step).round() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn rigid_ignores_moisture_exactly() {
        let table = SubstrateTable::default();
        let dry = table.moisture_response(Material::Rigid, 0.0).unwrap();
        for m in grid(0.01, MAX_MOISTURE) {
            assert_eq!(table.moisture_response(Material::Rigid, m).unwrap(), dry);
        }
    }

    #[test]
    fn grass_entangles_fins() {
        let p = SubstrateTable::default()
            .moisture_response(Material::Grass, 0.3)
            .unwrap();
        assert!(p.entangles);
        assert!(p.crawl_traction < 1e-12);
        assert_eq!(default_curves(Material::Grass).entanglement, 1.0);
    }

    #[test]
    fn clay_slips_at_threshold() {
        let table = SubstrateTable::default();
        let p = table
            .moisture_response(Material::BentoniteClay, 0.8)
            .unwrap();
        assert!(p.tail_slips);
        assert_eq!(p.skip_efficiency, 0.0);
        assert!(
            !table
                .moisture_response(Material::BentoniteClay, 0.79)
                .unwrap()
                .tail_slips
        );
    }

    #[test]
    fn dry_sand_excavates_but_skips() {
        let p = SubstrateTable::default()
            .moisture_response(Material::UniformSand, 0.0)
            .unwrap();
        assert!(p.excavates);
        assert!(p.skip_efficiency > 0.0);
    }

    #[test]
    fn out_of_domain_moisture_rejected() {
        let table = SubstrateTable::default();
        assert!(table
            .moisture_response(Material::UniformSand, -0.01)
            .is_err());
        assert!(table
            .moisture_response(Material::UniformSand, 1.21)
            .is_err());
        assert!(table.moisture_response(Material::Rigid, 1.5).is_err());
    }

    #[test]
    fn sand_skip_peaks_at_fifteen_percent() {
        let r = default_curves(Material::UniformSand);
        let g = grid(0.01, 1.0);
        let vals: Vec<f64> = g.iter().map(|&m| r.skip.eval(m)).collect();
        let best = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((g[best] - 0.15).abs() < 1e-9);
        assert_eq!(count_local_maxima(&vals), 1);
    }

    #[test]
    fn local_maxima_counter() {
        assert_eq!(count_local_maxima(&[0.0, 1.0, 0.0]), 1);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 0.5, 1.0, 0.0]), 2);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 1.0, 0.0, 0.0]), 1);
        assert_eq!(count_local_maxima(&[2.0, 2.0]), 1);
        assert_eq!(count_local_maxima(&[3.0, 2.0, 1.0]), 1);
    }

    #[test]
    fn material_names_round_trip() {
        for m in Material::ALL {
            assert_eq!(m.as_str().parse::<Material>().unwrap(), m);
        }
        assert!("mud".parse::<Material>().is_err());
    }
}
