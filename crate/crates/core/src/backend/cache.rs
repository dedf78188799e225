use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{BackendError, CacheKey};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    text: String,
}

/// Response cache, optionally persisted as an append-only JSONL file.
///
/// Corrupt lines are skipped with a warning when the file is opened.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, BackendError> {
        let io = |e: std::io::Error| BackendError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(e) => {
                        entries.insert(e.key, e.text);
                    }
                    Err(err) => log::warn!("cache {}: skipping corrupt line {}: {err}", path.display(), i + 1),
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries.read().expect("cache lock").get(&key.0).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &CacheKey, text: &str) -> Result<(), BackendError> {
        self.entries
            .write()
            .expect("cache lock")
            .insert(key.0.clone(), text.to_string());
        let mut guard = self.file.lock().expect("cache file lock");
        if let Some(f) = guard.as_mut() {
            let mut line = serde_json::to_string(&Entry {
                key: key.0.clone(),
                text: text.to_string(),
            })
            .expect("entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| BackendError::File {
                    path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }
}
