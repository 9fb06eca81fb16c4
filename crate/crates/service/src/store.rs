//! File-backed document store with optimistic versions.
//!
//! ```text
//! <root>/<collection>/<id>/v<N>.json      version N of the document
//! <root>/<collection>/<id>/v<N>.deleted   tombstone written by a delete
//! ```
//!
//! Version numbers of an id only grow, across deletes too. A version file is
//! written to a temporary name and renamed into place, so readers never see
//! a partial document and take no lock.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Collection {
    Scenarios,
    Workflows,
    Blocks,
}

impl Collection {
    pub const ALL: [Collection; 3] = [Collection::Scenarios, Collection::Workflows, Collection::Blocks];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Scenarios => "scenarios",
            Collection::Workflows => "workflows",
            Collection::Blocks => "blocks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Precondition of a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    /// No precondition; only allowed while the document does not exist.
    Unconditional,
    /// The current version must be this one; 0 means "does not exist".
    Version(u64),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document `{0}` not found")]
    NotFound(String),
    #[error("version conflict: expected {expected}, current {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("document exists at version {0}; If-Match is required")]
    PreconditionRequired(u64),
    #[error("invalid document id `{0}`")]
    InvalidId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub version: u64,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    Live(u64),
    Deleted(u64),
    Absent,
}

impl Head {
    fn live_version(self) -> u64 {
        match self {
            Head::Live(v) => v,
            _ => 0,
        }
    }

    fn last_version(self) -> u64 {
        match self {
            Head::Live(v) | Head::Deleted(v) => v,
            Head::Absent => 0,
        }
    }
}

type LockKey = (Collection, String);

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<LockKey, Arc<Mutex<()>>>>,
}

/// Ids are path segments: ASCII letters, digits, `_` and `-`.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn check_id(id: &str) -> Result<(), StoreError> {
    if is_valid_id(id) {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_owned()))
    }
}

fn version_of(name: &str) -> Option<(u64, bool)> {
    let rest = name.strip_prefix('v')?;
    if let Some(n) = rest.strip_suffix(".json") {
        return n.parse().ok().map(|v| (v, false));
    }
    rest.strip_suffix(".deleted")?.parse().ok().map(|v| (v, true))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for c in Collection::ALL {
            fs::create_dir_all(root.join(c.as_str()))?;
        }
        Ok(Self { root, locks: Mutex::default() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, collection: Collection, id: &str) -> PathBuf {
        self.root.join(collection.as_str()).join(id)
    }

    fn head(&self, collection: Collection, id: &str) -> io::Result<Head> {
        let entries = match fs::read_dir(self.dir(collection, id)) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Head::Absent),
            Err(e) => return Err(e),
        };
        let mut head = Head::Absent;
        for entry in entries {
            let name = entry?.file_name();
            if let Some((v, deleted)) = name.to_str().and_then(version_of) {
                if v > head.last_version() {
                    head = if deleted { Head::Deleted(v) } else { Head::Live(v) };
                }
            }
        }
        Ok(head)
    }

    fn lock(&self, collection: Collection, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry((collection, id.to_owned())).or_default().clone()
    }

    pub fn get(&self, collection: Collection, id: &str) -> Result<Document, StoreError> {
        check_id(id)?;
        match self.head(collection, id)? {
            Head::Live(version) => {
                let body = fs::read_to_string(self.dir(collection, id).join(format!("v{version}.json")))?;
                Ok(Document { version, body })
            }
            _ => Err(StoreError::NotFound(id.to_owned())),
        }
    }

    /// Live documents as `(id, version)`, sorted by id.
    pub fn list(&self, collection: Collection) -> Result<Vec<(String, u64)>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(collection.as_str()))? {
            let name = entry?.file_name();
            let Some(id) = name.to_str().filter(|id| is_valid_id(id)) else { continue };
            if let Head::Live(v) = self.head(collection, id)? {
                out.push((id.to_owned(), v));
            }
        }
        out.sort();
        Ok(out)
    }

    fn check(head: Head, expect: Expect) -> Result<(), StoreError> {
        let current = head.live_version();
        match expect {
            Expect::Unconditional if current > 0 => Err(StoreError::PreconditionRequired(current)),
            Expect::Version(expected) if expected != current => Err(StoreError::Conflict { expected, current }),
            _ => Ok(()),
        }
    }

    fn write_version(&self, collection: Collection, id: &str, name: &str, body: &str) -> io::Result<()> {
        let dir = self.dir(collection, id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, dir.join(name))
    }

    /// Writes `body` as the next version and returns that version.
    pub fn put(&self, collection: Collection, id: &str, body: &str, expect: Expect) -> Result<u64, StoreError> {
        check_id(id)?;
        let lock = self.lock(collection, id);
        let _guard = lock.lock().expect("document lock poisoned");
        let head = self.head(collection, id)?;
        Self::check(head, expect)?;
        let version = head.last_version() + 1;
        self.write_version(collection, id, &format!("v{version}.json"), body)?;
        Ok(version)
    }

    pub fn delete(&self, collection: Collection, id: &str, expect: Expect) -> Result<(), StoreError> {
        check_id(id)?;
        let lock = self.lock(collection, id);
        let _guard = lock.lock().expect("document lock poisoned");
        let head = self.head(collection, id)?;
        if head.live_version() == 0 {
            return Err(StoreError::NotFound(id.to_owned()));
        }
        Self::check(head, expect)?;
        let version = head.last_version() + 1;
        self.write_version(collection, id, &format!("v{version}.deleted"), "")?;
        Ok(())
    }
}
