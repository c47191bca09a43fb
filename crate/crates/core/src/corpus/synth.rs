//! Schema-compatible synthetic corpora with a Zipf-distributed label space.
//!
//! Every label owns three marker phrases made of invented words; each
//! document mentions a phrase for every one of its labels among clinical
//! filler text, so the codes are learnable from the text alone.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::icd::{infer_kind, undotted, REFERENCE_CODES};
use super::tables::{open_table, read_code_assignments, read_note_events, NoteColumns};
use super::{CodeAssignment, CodeKind, RawNoteRecord, DISCHARGE_SUMMARY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub n_labels: usize,
    pub zipf_s: f64,
    pub mean_labels_per_doc: f64,
    pub mean_tokens_per_doc: f64,
    /// Extra non-discharge notes written to NOTEEVENTS to exercise the filter.
    pub nursing_notes: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 64,
            n_labels: 20,
            zipf_s: 1.0,
            mean_labels_per_doc: 15.9,
            mean_tokens_per_doc: 1485.0,
            nursing_notes: 0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 || self.n_labels == 0 {
            return Err(Error::invalid("n_docs and n_labels must be positive"));
        }
        if !(self.zipf_s > 0.0 && self.zipf_s.is_finite()) {
            return Err(Error::invalid("zipf_s must be positive"));
        }
        if !(self.mean_labels_per_doc > 0.0 && self.mean_tokens_per_doc > 0.0) {
            return Err(Error::invalid("mean labels and tokens per doc must be positive"));
        }
        Ok(())
    }
}

/// In-memory tables plus the ground-truth code list for every document.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub notes: Vec<RawNoteRecord>,
    pub diagnoses: Vec<CodeAssignment>,
    pub procedures: Vec<CodeAssignment>,
    /// `(code, long title)` for every label in the space.
    pub dictionary: Vec<(String, String)>,
    pub truth: Vec<(u64, Vec<String>)>,
}

/// Share of total Zipf mass held by the `top` most frequent of `n` labels.
pub fn zipf_top_share(n: usize, s: f64, top: usize) -> f64 {
    let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().take(top).sum::<f64>() / total
}

/// Solve for the exponent at which the `top` labels carry `share` of the mass.
pub fn zipf_exponent_for_share(n: usize, top: usize, share: f64) -> Result<f64> {
    if top == 0 || top >= n || !(share > 0.0 && share < 1.0) {
        return Err(Error::invalid("need 0 < top < n and 0 < share < 1"));
    }
    let (mut lo, mut hi) = (1e-6, 16.0);
    if zipf_top_share(n, lo, top) > share || zipf_top_share(n, hi, top) < share {
        return Err(Error::invalid("share not attainable by any exponent"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zipf_top_share(n, mid, top) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Label codes: the built-in reference list first, then generated
/// diagnosis-shaped codes `800.00`, `800.01`, ...
pub fn synthetic_label_codes(n: usize) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = REFERENCE_CODES
        .iter()
        .take(n)
        .map(|(c, t)| (c.to_string(), t.to_string()))
        .collect();
    let mut taken: BTreeSet<String> = out.iter().map(|(c, _)| c.clone()).collect();
    let mut i = 0usize;
    while out.len() < n {
        let code = format!("{}.{:02}", 800 + i / 100, i % 100);
        i += 1;
        if taken.insert(code.clone()) {
            let title = format!("Synthetic condition {code}");
            out.push((code, title));
        }
    }
    out
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(mut n: usize) -> String {
    // Always three syllables so marker words never collide with filler.
    let mut word = String::from("q");
    for _ in 0..3 {
        word.push(CONSONANTS[n % CONSONANTS.len()] as char);
        n /= CONSONANTS.len();
        word.push(VOWELS[n % VOWELS.len()] as char);
        n /= VOWELS.len();
    }
    if n > 0 {
        word.push_str(&n.to_string());
    }
    word
}

/// The three two-word marker phrases owned by label `index`.
pub fn marker_phrases(index: usize) -> [String; 3] {
    std::array::from_fn(|p| {
        let base = (index * 3 + p) * 2;
        format!("{} {}", pseudo_word(base), pseudo_word(base + 1))
    })
}

const FILLER: &[&str] = &[
    "patient", "admitted", "with", "history", "of", "and", "the", "was", "to", "on", "for",
    "in", "noted", "denies", "reports", "presented", "emergency", "department", "chest",
    "pain", "shortness", "breath", "afebrile", "stable", "vital", "signs", "exam", "labs",
    "showed", "normal", "mild", "moderate", "severe", "discharged", "home", "follow", "up",
    "clinic", "medications", "daily", "twice", "tablet", "given", "iv", "fluids", "monitored",
    "overnight", "improved", "course", "hospital", "plan", "continue", "current", "regimen",
    "no", "acute", "distress", "alert", "oriented", "tolerated", "diet", "ambulating",
];

const NOISE: &[&str] = &["500", "mg", "120/80", "2.5", "q6h", "#3", "--", "(1)", "10mg"];

fn sample_without_replacement<R: Rng>(weights: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m.min(weights.len()) {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, (_, w)) in remaining.iter().enumerate() {
            if target < *w {
                pick = pos;
                break;
            }
            target -= w;
        }
        chosen.push(remaining.remove(pick).0);
    }
    chosen
}

fn compose_text<R: Rng>(phrases: Vec<String>, target_tokens: usize, rng: &mut R) -> String {
    let phrase_tokens: usize = phrases.iter().map(|p| p.split(' ').count()).sum();
    let mut segments: Vec<String> = phrases;
    for _ in phrase_tokens..target_tokens.max(phrase_tokens) {
        if rng.gen_bool(0.05) {
            segments.push(NOISE.choose(rng).unwrap().to_string());
        } else {
            segments.push(FILLER.choose(rng).unwrap().to_string());
        }
    }
    segments.shuffle(rng);
    let mut text = String::new();
    let mut sentence_start = true;
    for segment in segments {
        if !text.is_empty() {
            text.push(' ');
        }
        if sentence_start {
            let mut chars = segment.chars();
            if let Some(first) = chars.next() {
                text.extend(first.to_uppercase());
                text.push_str(chars.as_str());
            }
        } else {
            text.push_str(&segment);
        }
        sentence_start = rng.gen_bool(0.08);
        if sentence_start {
            text.push('.');
        }
    }
    text.push('.');
    text
}

pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels = synthetic_label_codes(config.n_labels);
    let weights: Vec<f64> = (1..=config.n_labels)
        .map(|r| (r as f64).powf(-config.zipf_s))
        .collect();
    let max_labels = ((2.0 * config.mean_labels_per_doc).round() as usize)
        .saturating_sub(1)
        .clamp(1, config.n_labels);

    let mut corpus = SyntheticCorpus {
        notes: Vec::new(),
        diagnoses: Vec::new(),
        procedures: Vec::new(),
        dictionary: labels.clone(),
        truth: Vec::new(),
    };
    for d in 0..config.n_docs {
        let hadm_id = 100_001 + d as u64;
        let subject_id = 10_001 + d as u64;
        let m = rng.gen_range(1..=max_labels);
        let chosen = sample_without_replacement(&weights, m, &mut rng);

        let mut phrases = Vec::new();
        for &l in &chosen {
            let owned = marker_phrases(l);
            for _ in 0..rng.gen_range(1..=2) {
                phrases.push(owned.choose(&mut rng).unwrap().clone());
            }
        }
        let target = rng.gen_range(0.5..1.5) * config.mean_tokens_per_doc;
        let text = compose_text(phrases, target.round() as usize, &mut rng);
        corpus.notes.push(RawNoteRecord {
            subject_id,
            hadm_id,
            description: DISCHARGE_SUMMARY.into(),
            text,
        });

        let (mut n_diag, mut n_proc) = (0u32, 0u32);
        let mut truth = Vec::new();
        for &l in &chosen {
            let code = labels[l].0.clone();
            let kind = infer_kind(&code);
            let counter = match kind {
                CodeKind::Diagnosis => &mut n_diag,
                CodeKind::Procedure => &mut n_proc,
            };
            *counter += 1;
            let assignment = CodeAssignment {
                hadm_id,
                code: code.clone(),
                kind,
                sequence: *counter,
            };
            match kind {
                CodeKind::Diagnosis => corpus.diagnoses.push(assignment),
                CodeKind::Procedure => corpus.procedures.push(assignment),
            }
            truth.push(code);
        }
        corpus.truth.push((hadm_id, truth));
    }
    for i in 0..config.nursing_notes {
        let hadm_id = 100_001 + (i % config.n_docs) as u64;
        let text = compose_text(Vec::new(), 20, &mut rng);
        corpus.notes.push(RawNoteRecord {
            subject_id: 10_001 + (i % config.n_docs) as u64,
            hadm_id,
            description: "Nursing note".into(),
            text,
        });
    }
    Ok(corpus)
}

impl SyntheticCorpus {
    /// The corpus after the regular ingestion path.
    pub fn labeled_notes(&self) -> Vec<super::LabeledNote> {
        let codes: Vec<CodeAssignment> = self.diagnoses.iter().chain(&self.procedures).cloned().collect();
        super::build_labeled_notes(&self.notes, &codes, DISCHARGE_SUMMARY).0
    }

    /// Write NOTEEVENTS, DIAGNOSES_ICD, PROCEDURES_ICD, D_ICD_DIAGNOSES and
    /// D_ICD_PROCEDURES as MIMIC-shaped CSVs (undotted codes) into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let writer = |name: &str| -> Result<csv::Writer<fs::File>> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            Ok(csv::Writer::from_writer(file))
        };

        let mut w = writer("NOTEEVENTS.csv")?;
        w.write_record(["ROW_ID", "SUBJECT_ID", "HADM_ID", "CHARTDATE", "CATEGORY", "DESCRIPTION", "TEXT"])?;
        for (i, n) in self.notes.iter().enumerate() {
            let category = if n.description == DISCHARGE_SUMMARY { "Discharge summary" } else { "Nursing" };
            w.write_record([
                (i + 1).to_string(),
                n.subject_id.to_string(),
                n.hadm_id.to_string(),
                "2101-01-01".into(),
                category.into(),
                n.description.clone(),
                n.text.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        for (name, rows) in [("DIAGNOSES_ICD.csv", &self.diagnoses), ("PROCEDURES_ICD.csv", &self.procedures)] {
            let mut w = writer(name)?;
            w.write_record(["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"])?;
            for (i, c) in rows.iter().enumerate() {
                w.write_record([
                    (i + 1).to_string(),
                    (c.hadm_id - 100_001 + 10_001).to_string(),
                    c.hadm_id.to_string(),
                    c.sequence.to_string(),
                    undotted(&c.code),
                ])?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
        }

        for (name, kind) in [("D_ICD_DIAGNOSES.csv", CodeKind::Diagnosis), ("D_ICD_PROCEDURES.csv", CodeKind::Procedure)] {
            let mut w = writer(name)?;
            w.write_record(["ROW_ID", "ICD9_CODE", "SHORT_TITLE", "LONG_TITLE"])?;
            let entries = self.dictionary.iter().filter(|(c, _)| infer_kind(c) == kind);
            for (i, (code, title)) in entries.enumerate() {
                let short: String = title.chars().take(24).collect();
                w.write_record([(i + 1).to_string(), undotted(code), short, title.clone()])?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    /// Re-read tables written by [`SyntheticCorpus::write_tables`].
    pub fn read_tables(dir: &Path) -> Result<(Vec<RawNoteRecord>, Vec<CodeAssignment>)> {
        let notes = read_note_events(open_table(&dir.join("NOTEEVENTS.csv"))?, &NoteColumns::default())?;
        let mut codes = read_code_assignments(open_table(&dir.join("DIAGNOSES_ICD.csv"))?, CodeKind::Diagnosis)?;
        codes.extend(read_code_assignments(
            open_table(&dir.join("PROCEDURES_ICD.csv"))?,
            CodeKind::Procedure,
        )?);
        Ok((notes, codes))
    }
}
