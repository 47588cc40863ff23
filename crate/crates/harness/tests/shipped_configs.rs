//! The example configs shipped in `configs/` must parse and validate.

use std::path::PathBuf;

use zrp_harness::config::ExperimentConfig;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("configs")
}

#[test]
fn all_shipped_configs_are_valid() {
    let dir = configs_dir();
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let cfg = ExperimentConfig::from_file(&path)
            .unwrap_or_else(|e| panic!("{} invalid: {e}", path.display()));
        cfg.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 4, "expected shipped configs in {}", dir.display());
}
