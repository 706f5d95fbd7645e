//! The shipped scenario files describe exactly the built-in cases.

use std::path::{Path, PathBuf};

use accwave::cases::{case_config, empirical_config};
use accwave::config::ScenarioConfig;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_case_files_match_builtin_cases() {
    for n in 1..=4u8 {
        let path = configs_dir().join(format!("case{n}.toml"));
        let loaded = ScenarioConfig::load(&path).unwrap();
        assert_eq!(loaded, case_config(n).unwrap(), "{}", path.display());
    }
}

#[test]
fn shipped_empirical_file_matches_builtin() {
    let dir = configs_dir();
    let loaded = ScenarioConfig::load(&dir.join("empirical.toml")).unwrap();
    let expected = empirical_config(&dir.join("../data/openacc_standin.csv"));
    assert_eq!(loaded, expected);
    // the recorded leader resolves relative to the config file
    loaded.leader_motion().unwrap();
}

#[test]
fn builtin_configs_round_trip_through_toml() {
    for n in 1..=4u8 {
        let cfg = case_config(n).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
