//! Session snapshots on disk: `<id>.json` for the session and
//! `<id>.posterior.csv` for the posterior density.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adaptrate_core::{Observation, Posterior, Trace};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::session::{build_model, build_prior, CreateRequest, Session, Status, StoredReply};

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    id: String,
    request: CreateRequest,
    create_key: Option<String>,
    trace: Trace,
    last: Observation,
    /// Word position of the observation generator, as a decimal string.
    word_pos: Option<String>,
    status: Status,
    replies: BTreeMap<String, StoredReply>,
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> ApiResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> ApiResult<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self { dir })
    }

    fn json_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn csv_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.posterior.csv"))
    }

    /// Writes the posterior first so a snapshot file never points at a
    /// missing density.
    pub fn save(&self, s: &Session) -> ApiResult<()> {
        let mut csv = Vec::new();
        s.run.posterior().write_csv(&mut csv).map_err(|e| ApiError::internal(e.to_string()))?;
        write_atomic(&self.csv_path(&s.id), &csv)?;
        let snap = Snapshot {
            id: s.id.clone(),
            request: s.request.clone(),
            create_key: s.create_key.clone(),
            trace: s.run.trace().clone(),
            last: *s.run.last_observation(),
            word_pos: s.word_pos().map(|p| p.to_string()),
            status: s.status.clone(),
            replies: s.replies.clone(),
        };
        let json = serde_json::to_vec_pretty(&snap).map_err(|e| ApiError::internal(e.to_string()))?;
        write_atomic(&self.json_path(&s.id), &json)
    }

    pub fn remove(&self, id: &str) -> ApiResult<()> {
        for path in [self.json_path(id), self.csv_path(id)] {
            match std::fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        Ok(())
    }

    pub fn load(&self, id: &str) -> ApiResult<Session> {
        let path = self.json_path(id);
        let text = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        let snap: Snapshot = serde_json::from_slice(&text).map_err(|e| io_err(&path, e))?;
        // the support is rebuilt from the request, then checked node by node
        let prior = build_prior(&snap.request)?;
        build_model(&snap.request.model)?;
        let csv = self.csv_path(id);
        let file = std::fs::File::open(&csv).map_err(|e| io_err(&csv, e))?;
        let posterior = Posterior::read_csv(Arc::clone(prior.support()), BufReader::new(file))?;
        let word_pos = snap.word_pos.map(|s| s.parse::<u128>().map_err(|e| io_err(&path, e))).transpose()?;
        Session::restore(
            snap.id,
            snap.request,
            snap.create_key,
            posterior,
            snap.last,
            snap.trace,
            word_pos,
            snap.status,
            snap.replies,
        )
    }

    /// Every session with a snapshot in the directory.
    pub fn load_all(&self) -> ApiResult<Vec<Session>> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let name = entry.map_err(|e| io_err(&self.dir, e))?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".json").filter(|id| valid_id(id)) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }
}
