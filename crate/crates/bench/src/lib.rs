//! Fixtures shared by the benchmarks.

use std::path::{Path, PathBuf};

use sparcs_core::harness::{load_scenario, Scenario};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn scenario(id: &str) -> Scenario {
    load_scenario(&data_dir().join("scenarios").join(id)).expect("bundled scenario loads")
}
