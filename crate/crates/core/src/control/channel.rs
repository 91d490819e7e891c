//! Control channel: an ordered, append-only message log.
//!
//! Consumers keep their own cursor and re-read from it after a restart, so
//! delivery is at-least-once with order preserved; duplicates are possible,
//! reordering is not. Two backends: a newline-delimited JSON log file and an
//! in-process queue.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AckMessage, UpdateNotification};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlMessage {
    Notification(UpdateNotification),
    Ack(AckMessage),
}

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("control channel io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("control channel entry {index} is malformed: {reason}")]
    Malformed { index: u64, reason: String },
}

pub trait ControlChannel: Send + Sync {
    /// Appends a message; returns its log index.
    fn publish(&self, msg: &ControlMessage) -> Result<u64, ChannelError>;

    /// Returns every entry with index >= `cursor`, in log order.
    fn read_from(&self, cursor: u64) -> Result<Vec<(u64, ControlMessage)>, ChannelError>;
}

/// Log file backend, one JSON message per line.
pub struct FileLogChannel {
    path: PathBuf,
    append_lock: Mutex<()>,
}

impl FileLogChannel {
    pub fn new(path: &Path) -> Self {
        FileLogChannel {
            path: path.to_path_buf(),
            append_lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ControlChannel for FileLogChannel {
    fn publish(&self, msg: &ControlMessage) -> Result<u64, ChannelError> {
        let line = serde_json::to_string(msg).expect("control message serializes");
        let _guard = self.append_lock.lock().unwrap();
        let existing = match std::fs::read_to_string(&self.path) {
            Ok(text) => text.lines().count() as u64,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(e.into()),
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        writeln!(file, "{line}")?;
        Ok(existing)
    }

    fn read_from(&self, cursor: u64) -> Result<Vec<(u64, ControlMessage)>, ChannelError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for (index, line) in text.lines().enumerate() {
            let index = index as u64;
            if index < cursor {
                continue;
            }
            let msg = serde_json::from_str(line).map_err(|e| ChannelError::Malformed {
                index,
                reason: e.to_string(),
            })?;
            out.push((index, msg));
        }
        Ok(out)
    }
}

/// In-process backend for tests and single-process deployments.
#[derive(Default)]
pub struct InProcessChannel {
    log: Mutex<Vec<ControlMessage>>,
}

impl InProcessChannel {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ControlChannel for InProcessChannel {
    fn publish(&self, msg: &ControlMessage) -> Result<u64, ChannelError> {
        let mut log = self.log.lock().unwrap();
        log.push(msg.clone());
        Ok(log.len() as u64 - 1)
    }

    fn read_from(&self, cursor: u64) -> Result<Vec<(u64, ControlMessage)>, ChannelError> {
        let log = self.log.lock().unwrap();
        Ok(log
            .iter()
            .enumerate()
            .skip(cursor as usize)
            .map(|(i, m)| (i as u64, m.clone()))
            .collect())
    }
}
