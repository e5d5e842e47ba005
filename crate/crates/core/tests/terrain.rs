use proptest::prelude::*;
use skipcrawl_core::config::ExperimentConfig;
use skipcrawl_core::terrain::{self, Material, SubstrateTable, MAX_MOISTURE};

fn fitted() -> SubstrateTable {
    ExperimentConfig::canonical().model.substrates
}

fn skip_curve(table: &SubstrateTable, material: Material, step: f64) -> Vec<f64> {
    let n = (MAX_MOISTURE / step).round() as usize;
    (0..=n)
        .map(|i| {
            table
                .moisture_response(material, (i as f64 * step).min(MAX_MOISTURE))
                .unwrap()
                .skip_efficiency
        })
        .collect()
}

#[test]
fn substrate_failure_flags() {
    let t = SubstrateTable::default();
    let clay = t.moisture_response(Material::BentoniteClay, 0.8).unwrap();
    assert!(clay.tail_slips);
    assert_eq!(clay.skip_efficiency, 0.0);
    assert!(
        t.moisture_response(Material::UniformSand, 0.0)
            .unwrap()
            .excavates
    );
    let grass = t.moisture_response(Material::Grass, 0.0).unwrap();
    assert!(grass.entangles);
    assert!(grass.crawl_traction.abs() < 1e-12);
}

#[test]
fn fitted_sand_skip_peaks_near_fifteen_percent() {
    let t = fitted();
    let grid = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    let etas: Vec<f64> = grid
        .iter()
        .map(|&m| {
            t.moisture_response(Material::UniformSand, m)
                .unwrap()
                .skip_efficiency
        })
        .collect();
    let best = etas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| grid[i])
        .unwrap();
    assert_eq!(best, 0.15);
}

#[test]
fn fitted_skip_curves_are_unimodal() {
    let t = fitted();
    for material in [
        Material::UniformSand,
        Material::NonUniformSand,
        Material::BentoniteClay,
    ] {
        assert_eq!(
            terrain::count_local_maxima(&skip_curve(&t, material, 0.01)),
            1,
            "{material}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn responses_stay_in_unit_interval(m in 0.0f64..=MAX_MOISTURE, which in 0usize..5) {
        let material = Material::ALL[which];
        for table in [SubstrateTable::default(), fitted()] {
            let p = table.moisture_response(material, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&p.skip_efficiency));
            prop_assert!((0.0..=1.0).contains(&p.crawl_traction));
        }
    }

    #[test]
    fn rigid_ground_ignores_moisture(m in 0.0f64..=MAX_MOISTURE) {
        let t = fitted();
        prop_assert_eq!(
            t.moisture_response(Material::Rigid, m).unwrap(),
            t.moisture_response(Material::Rigid, 0.0).unwrap()
        );
    }

    #[test]
    fn out_of_range_moisture_is_rejected(m in prop_oneof![-10.0f64..-1e-9, 1.2000001f64..10.0]) {
        prop_assert!(SubstrateTable::default().moisture_response(Material::UniformSand, m).is_err());
    }

    #[test]
    fn response_is_a_pure_function(m in 0.0f64..=MAX_MOISTURE) {
        let t = fitted();
        prop_assert_eq!(
            t.moisture_response(Material::BentoniteClay, m).unwrap(),
            t.moisture_response(Material::BentoniteClay, m).unwrap()
        );
    }
}
