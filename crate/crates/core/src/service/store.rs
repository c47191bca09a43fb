//! Append-only newline-delimited JSON logs for letters and decisions.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::snomed::SnomedResolution;

pub const LETTERS_FILE: &str = "letters.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodePrediction {
    pub code: String,
    pub probability: f64,
    pub resolution: SnomedResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterRecord {
    pub id: String,
    pub created_at: String,
    pub raw_text: String,
    pub cleaned_text: String,
    pub threshold: f64,
    /// Codes at or above the threshold, by probability descending.
    pub predictions: Vec<CodePrediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Reject,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub timestamp: String,
    pub letter_id: String,
    pub icd_code: String,
    pub action: Action,
    pub chosen_snomed_cid: Option<String>,
    pub reviewer: String,
}

#[derive(Debug)]
struct Logs {
    letters: File,
    decisions: File,
}

#[derive(Debug, Default)]
struct State {
    letters: Vec<LetterRecord>,
    index: HashMap<String, usize>,
    decisions: Vec<DecisionRecord>,
}

/// Both logs plus their in-memory view. Appends go through one writer lock
/// and are fsynced before the in-memory view changes, so readers only ever
/// see acknowledged records.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    writer: Mutex<Logs>,
    state: RwLock<State>,
    fail_writes: AtomicBool,
}

impl Store {
    /// Open or create the logs in `dir`, dropping an incomplete final line
    /// left by a crash mid-append.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (letters_file, letters) = open_log::<LetterRecord>(&dir.join(LETTERS_FILE))?;
        let (decisions_file, decisions) = open_log::<DecisionRecord>(&dir.join(DECISIONS_FILE))?;
        let index = letters.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        Ok(Store {
            dir: dir.to_path_buf(),
            writer: Mutex::new(Logs {
                letters: letters_file,
                decisions: decisions_file,
            }),
            state: RwLock::new(State {
                letters,
                index,
                decisions,
            }),
            fail_writes: AtomicBool::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Make every following append fail, for exercising error paths.
    #[doc(hidden)]
    pub fn inject_write_failure(&self, on: bool) {
        self.fail_writes.store(on, Ordering::SeqCst);
    }

    pub fn contains_letter(&self, id: &str) -> bool {
        self.state.read().unwrap().index.contains_key(id)
    }

    pub fn letter(&self, id: &str) -> Option<LetterRecord> {
        let state = self.state.read().unwrap();
        state.index.get(id).map(|&i| state.letters[i].clone())
    }

    pub fn letter_ids(&self) -> Vec<String> {
        self.state.read().unwrap().letters.iter().map(|l| l.id.clone()).collect()
    }

    /// Decisions in insertion order, optionally filtered.
    pub fn decisions(&self, letter_id: Option<&str>, reviewer: Option<&str>) -> Vec<DecisionRecord> {
        self.state
            .read()
            .unwrap()
            .decisions
            .iter()
            .filter(|d| letter_id.is_none_or(|l| d.letter_id == l))
            .filter(|d| reviewer.is_none_or(|r| d.reviewer == r))
            .cloned()
            .collect()
    }

    /// Append a letter, generating a fresh id with `new_id` until unused.
    pub fn append_letter(&self, mut letter: LetterRecord, mut new_id: impl FnMut() -> String) -> Result<String> {
        let mut logs = self.writer.lock().unwrap();
        {
            let state = self.state.read().unwrap();
            while letter.id.is_empty() || state.index.contains_key(&letter.id) {
                letter.id = new_id();
            }
        }
        self.append_line(&mut logs.letters, LETTERS_FILE, &letter)?;
        let mut state = self.state.write().unwrap();
        let position = state.letters.len();
        state.index.insert(letter.id.clone(), position);
        let id = letter.id.clone();
        state.letters.push(letter);
        Ok(id)
    }

    pub fn append_decision(&self, decision: DecisionRecord) -> Result<()> {
        let mut logs = self.writer.lock().unwrap();
        if !self.contains_letter(&decision.letter_id) {
            return Err(Error::invalid(format!("unknown letter {}", decision.letter_id)));
        }
        self.append_line(&mut logs.decisions, DECISIONS_FILE, &decision)?;
        self.state.write().unwrap().decisions.push(decision);
        Ok(())
    }

    fn append_line<T: Serialize>(&self, file: &mut File, name: &str, record: &T) -> Result<()> {
        let path = self.dir.join(name);
        if self.fail_writes.load(Ordering::SeqCst) {
            return Err(Error::io(path, std::io::Error::other("injected write failure")));
        }
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let start = file.seek(SeekFrom::End(0)).map_err(|e| Error::io(&path, e))?;
        let written = file.write_all(&line).and_then(|_| file.sync_data());
        if let Err(e) = written {
            // Leave no partial record behind.
            let _ = file.set_len(start);
            return Err(Error::io(path, e));
        }
        Ok(())
    }
}

fn open_log<T: DeserializeOwned>(path: &Path) -> Result<(File, Vec<T>)> {
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;

    let mut records = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let line = &bytes[offset..offset + len];
        if !line.iter().all(u8::is_ascii_whitespace) {
            let record = serde_json::from_slice(line).map_err(|e| {
                Error::invalid(format!("{}: corrupt record at byte {offset}: {e}", path.display()))
            })?;
            records.push(record);
        }
        offset += len + 1;
    }
    if offset < bytes.len() {
        warn!(path = %path.display(), bytes = bytes.len() - offset, "dropping incomplete final record");
        file.set_len(offset as u64).map_err(|e| Error::io(path, e))?;
        file.sync_all().map_err(|e| Error::io(path, e))?;
    }
    Ok((file, records))
}
