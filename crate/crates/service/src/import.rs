//! Seeds a store with the bundled scenario data.

use std::fs;
use std::path::{Path, PathBuf};

use sparcs_core::harness::load_scenario;
use thiserror::Error;

use crate::store::{Collection, Expect, Store, StoreError};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error(transparent)]
    Scenario(#[from] sparcs_core::harness::ScenarioError),
    #[error("{}: {source}", .path.display())]
    Workflow { path: PathBuf, source: sparcs_core::WorkflowError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sorted_entries(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    Ok(paths)
}

/// Writes documents that do not exist yet and returns how many were written.
///
/// From `<data>/scenarios/<id>/`: `scenarios/<id>`, `blocks/<id>`,
/// `workflows/<id>_human` and `workflows/<id>_robot`. From
/// `<data>/catalog/<name>.json`: `workflows/<name>`.
pub fn import_bundled(store: &Store, data_dir: &Path) -> Result<usize, ImportError> {
    let mut written = 0;
    let mut put = |c: Collection, id: &str, body: String| match store.put(c, id, &body, Expect::Version(0)) {
        Ok(_) => {
            written += 1;
            Ok(())
        }
        Err(StoreError::Conflict { .. }) => Ok(()),
        Err(e) => Err(e),
    };
    for dir in sorted_entries(&data_dir.join("scenarios"))? {
        if !dir.is_dir() {
            continue;
        }
        let scenario = load_scenario(&dir)?;
        put(Collection::Scenarios, &scenario.id, scenario.to_document())?;
        put(Collection::Blocks, &scenario.id, scenario.blocks.to_canonical())?;
        put(Collection::Workflows, &format!("{}_human", scenario.id), scenario.workflow_human.to_canonical())?;
        put(Collection::Workflows, &format!("{}_robot", scenario.id), scenario.workflow_robot.to_canonical())?;
    }
    for path in sorted_entries(&data_dir.join("catalog"))? {
        let Some(name) =
            path.file_stem().and_then(|s| s.to_str()).filter(|_| path.extension().is_some_and(|e| e == "json"))
        else {
            continue;
        };
        let text = fs::read_to_string(&path)?;
        let workflow = sparcs_core::parse_workflow(&text)
            .map_err(|source| ImportError::Workflow { path: path.clone(), source })?;
        put(Collection::Workflows, name, workflow.to_canonical())?;
    }
    Ok(written)
}
