use std::fs;

use disoul::config::{MethodId, ScenarioConfig};
use proptest::prelude::*;

fn methods() -> impl Strategy<Value = Vec<MethodId>> {
    let all = vec![MethodId::Disoul, MethodId::Srls, MethodId::Stansfield, MethodId::BearingLs];
    prop::sample::subsequence(all, 1..=4).prop_shuffle()
}

proptest! {
    // Any scenario survives a render and parse unchanged.
    #[test]
    fn rendered_scenarios_parse_back(
        antennas in 1usize..400,
        e_n0_db in -30.0..60.0f64,
        bandwidth_mhz in 1.0..200.0f64,
        seed in any::<u64>(),
        multipath in any::<bool>(),
        methods in methods(),
        stations in prop::collection::vec((-45.0..45.0f64, -45.0..45.0f64), 2..6),
    ) {
        let c = ScenarioConfig {
            antennas,
            e_n0_db,
            bandwidth_hz: bandwidth_mhz * 1e6,
            seed,
            multipath,
            methods,
            stations: stations.into_iter().map(|(x, y)| disoul_core::geometry::Position::new(x, y)).collect(),
            ..ScenarioConfig::default()
        };
        let back: ScenarioConfig = c.render().parse().unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn config_files_load_with_defaults_for_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.cfg");
    fs::write(&path, "# two keys only\nantennas = 12\n\nmultipath = false\n").unwrap();
    let c = ScenarioConfig::from_file(&path).unwrap();
    assert_eq!(
        c,
        ScenarioConfig {
            antennas: 12,
            multipath: false,
            ..ScenarioConfig::default()
        }
    );
    let e = ScenarioConfig::from_file(&dir.path().join("absent.cfg")).unwrap_err();
    assert_eq!(e.line, None);
}
