//! Records every file a command opens so the compute phase can be checked
//! for secret-key access.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

#[derive(Debug, Default)]
pub struct FileAudit {
    reads: Mutex<Vec<PathBuf>>,
    writes: Mutex<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditLog {
    pub reads: Vec<PathBuf>,
    pub writes: Vec<PathBuf>,
}

impl FileAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read(&self, p: &Path) {
        self.reads.lock().unwrap().push(p.to_path_buf());
    }

    pub fn write(&self, p: &Path) {
        self.writes.lock().unwrap().push(p.to_path_buf());
    }

    pub fn log(&self) -> AuditLog {
        AuditLog {
            reads: self.reads.lock().unwrap().clone(),
            writes: self.writes.lock().unwrap().clone(),
        }
    }

    /// True if any recorded read has this file name.
    pub fn touched(&self, file_name: &str) -> bool {
        self.reads
            .lock()
            .unwrap()
            .iter()
            .any(|p| p.file_name().is_some_and(|f| f == file_name))
    }
}
