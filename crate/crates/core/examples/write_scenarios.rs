//! Regenerates the shipped scenario files under `configs/`.

use std::path::PathBuf;

use zcmes::env::config::ScenarioConfig;

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    std::fs::create_dir_all(&dir).expect("configs directory");
    for case in 1..=4 {
        let cfg = ScenarioConfig::for_case(case).expect("shipped case");
        let path = dir.join(format!("case{case}.json"));
        std::fs::write(&path, cfg.to_json() + "\n").expect("write config");
        println!("{}", path.display());
    }
}
