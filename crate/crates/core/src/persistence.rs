//! Content-addressed artifact store.
//!
//! Artifacts live in a flat directory sharded by the first two hex digits of
//! their SHA-256 digest: `<root>/<ab>/<abcdef...>`. Every write goes to a
//! temporary file in the destination directory and is renamed into place, so
//! concurrent writers of identical content never observe a partial file.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::sha256_hex;

pub const SCHEMA_GRAPH: &str = "prism-graph/1";
pub const SCHEMA_GENERATION: &str = "prism-generation/1";
pub const SCHEMA_DOCS: &str = "prism-docs/1";
pub const SCHEMA_CHUNKS: &str = "prism-chunks/1";
pub const SCHEMA_SEEDS: &str = "prism-seeds/1";
pub const SCHEMA_META: &str = "prism-meta/1";
pub const SCHEMA_MANIFEST: &str = "prism-manifest/1";
pub const SCHEMA_REPORT: &str = "prism-report/1";
pub const SCHEMA_DIAGNOSIS: &str = "prism-diagnosis/1";
pub const SCHEMA_EMBEDDINGS: &str = "prism-embeddings/1";
pub const SCHEMA_BLOB: &str = "blob/1";

pub const BUILTIN_SCHEMAS: &[&str] = &[
    SCHEMA_GRAPH,
    SCHEMA_GENERATION,
    SCHEMA_DOCS,
    SCHEMA_CHUNKS,
    SCHEMA_SEEDS,
    SCHEMA_META,
    SCHEMA_MANIFEST,
    SCHEMA_REPORT,
    SCHEMA_DIAGNOSIS,
    SCHEMA_EMBEDDINGS,
    SCHEMA_BLOB,
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("artifact {0} not found")]
    NotFound(String),
    #[error("artifact {digest} is corrupt: stored bytes hash to {actual}")]
    CorruptArtifact { digest: String, actual: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub digest: String,
    pub schema_id: String,
    /// Relative to the store root.
    pub path: String,
}

#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    ids: BTreeSet<String>,
}

impl SchemaRegistry {
    pub fn builtin() -> Self {
        let mut r = Self::default();
        for id in BUILTIN_SCHEMAS {
            r.register(id);
        }
        r
    }

    pub fn register(&mut self, id: &str) {
        self.ids.insert(id.to_owned());
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
    schemas: SchemaRegistry,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_registry(root, SchemaRegistry::builtin())
    }

    pub fn with_registry(root: impl Into<PathBuf>, schemas: SchemaRegistry) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root, schemas })
    }

    /// Store root taken from `PRISM_STORE`, falling back to `default`.
    pub fn from_env(default: impl Into<PathBuf>) -> Result<Self, StoreError> {
        match std::env::var_os("PRISM_STORE") {
            Some(p) => Self::open(PathBuf::from(p)),
            None => Self::open(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn put(&self, bytes: &[u8], schema_id: &str) -> Result<ArtifactRef, StoreError> {
        if !self.schemas.contains(schema_id) {
            return Err(StoreError::UnknownSchema(schema_id.to_owned()));
        }
        let digest = sha256_hex(bytes);
        let rel = format!("{}/{}", &digest[..2], digest);
        let path = self.root.join(&rel);
        if !path.exists() {
            atomic_write(&path, bytes)?;
        }
        Ok(ArtifactRef {
            digest,
            schema_id: schema_id.to_owned(),
            path: rel,
        })
    }

    pub fn get(&self, r: &ArtifactRef) -> Result<Vec<u8>, StoreError> {
        let path = self.root.join(&r.path);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(r.digest.clone()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let actual = sha256_hex(&bytes);
        if actual != r.digest {
            return Err(StoreError::CorruptArtifact {
                digest: r.digest.clone(),
                actual,
            });
        }
        Ok(bytes)
    }
}

/// Write `bytes` to `path` through a sibling temp file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_owned(),
        source: e.error,
    })?;
    Ok(())
}
