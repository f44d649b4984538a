use std::path::PathBuf;

use zcmes::env::config::ScenarioConfig;
use zcmes::env::ZcmesEnv;

fn shipped(case: u8) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/case{case}.json"))
}

#[test]
fn shipped_files_match_builtin_defaults() {
    for case in 1..=4 {
        let loaded = ScenarioConfig::load(&shipped(case)).unwrap();
        let builtin = ScenarioConfig::for_case(case).unwrap();
        assert_eq!(loaded, builtin, "case {case} drifted; rerun the write_scenarios example");
        assert_eq!(loaded.hash(), builtin.hash());
    }
}

#[test]
fn shipped_files_build_environments() {
    for case in 1..=4 {
        let env = ZcmesEnv::new(ScenarioConfig::load(&shipped(case)).unwrap()).unwrap();
        assert_eq!(env.horizon(), 168);
    }
}

#[test]
fn cases_share_tariffs_and_plant() {
    let base = ScenarioConfig::for_case(1).unwrap();
    for case in 2..=4 {
        let c = ScenarioConfig::for_case(case).unwrap();
        assert_eq!(c.tariffs, base.tariffs);
        assert_eq!((&c.gt, &c.cfp, &c.gb, &c.bes, &c.tes), (&base.gt, &base.cfp, &base.gb, &base.bes, &base.tes));
    }
}
