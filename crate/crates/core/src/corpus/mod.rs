//! Corpus ingestion: MIMIC-schema tables in, `notes_labeled` rows out.
//!
//! Notes are cleaned, joined to their diagnosis and procedure codes by
//! admission id, split into train/test and optionally reduced to the most
//! frequent codes.

pub mod icd;
mod synth;
pub(crate) mod tables;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{
    generate_synthetic_corpus, marker_phrases, synthetic_label_codes, zipf_exponent_for_share,
    zipf_top_share, SyntheticConfig, SyntheticCorpus,
};
pub use tables::{
    read_code_assignments, read_icd_dictionary, read_labeled_notes, read_note_events,
    write_labeled_notes, DictionaryEntry, NoteColumns,
};

/// Default note-category value kept by [`build_labeled_notes`].
pub const DISCHARGE_SUMMARY: &str = "Discharge summary";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNoteRecord {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub description: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeAssignment {
    pub hadm_id: u64,
    pub code: String,
    pub kind: CodeKind,
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledNote {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledNote>,
    pub test: Vec<LabeledNote>,
    pub seed: u64,
}

/// Records dropped by [`build_labeled_notes`], by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub wrong_category: usize,
    pub no_codes: usize,
    /// Notes that had codes but nothing left after cleaning.
    pub empty_text: Vec<u64>,
}

/// Lowercase, split on every non-alphanumeric character and drop tokens
/// without a letter: `"500"` goes, `"500mg"` stays.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for token in raw.split(|c: char| !c.is_ascii_alphanumeric()) {
        if token.is_empty() || !token.bytes().any(|b| b.is_ascii_alphabetic()) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(token.chars().map(|c| c.to_ascii_lowercase()));
    }
    out
}

/// Join discharge notes to their codes. Labels are the diagnosis codes then
/// the procedure codes, each in sequence order, deduplicated keeping the
/// first occurrence.
pub fn build_labeled_notes(
    notes: &[RawNoteRecord],
    codes: &[CodeAssignment],
    category: &str,
) -> (Vec<LabeledNote>, SkipReport) {
    let mut by_admission: HashMap<u64, Vec<&CodeAssignment>> = HashMap::new();
    for code in codes {
        by_admission.entry(code.hadm_id).or_default().push(code);
    }
    let labels_by_admission: HashMap<u64, Vec<String>> = by_admission
        .into_iter()
        .map(|(hadm, mut list)| {
            list.sort_by_key(|c| (c.kind, c.sequence));
            let mut seen = HashSet::new();
            let labels = list
                .into_iter()
                .filter(|c| seen.insert(c.code.as_str()))
                .map(|c| c.code.clone())
                .collect();
            (hadm, labels)
        })
        .collect();

    let mut report = SkipReport::default();
    let mut out = Vec::new();
    for note in notes {
        if note.description != category {
            report.wrong_category += 1;
            continue;
        }
        let Some(labels) = labels_by_admission.get(&note.hadm_id) else {
            report.no_codes += 1;
            continue;
        };
        let text = clean_text(&note.text);
        if text.is_empty() {
            report.empty_text.push(note.hadm_id);
            continue;
        }
        out.push(LabeledNote {
            subject_id: note.subject_id,
            hadm_id: note.hadm_id,
            text,
            labels: labels.clone(),
        });
    }
    (out, report)
}

/// Seeded shuffle of admissions, then the first `⌊ratio·n⌋` notes go to
/// train. Notes sharing an admission id always land on the same side.
pub fn split_dataset(notes: &[LabeledNote], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = notes.len();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} note(s)")));
    }
    let target = (ratio * n as f64).floor() as usize;
    if target == 0 || target == n {
        return Err(Error::invalid(format!(
            "ratio {ratio} over {n} notes leaves one side empty"
        )));
    }

    let mut groups: Vec<(u64, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    for (i, note) in notes.iter().enumerate() {
        let g = *slot.entry(note.hadm_id).or_insert_with(|| {
            groups.push((note.hadm_id, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (_, members) in groups {
        let side = if train.len() < target {
            &mut train
        } else {
            &mut test
        };
        side.extend(members.into_iter().map(|i| notes[i].clone()));
    }
    Ok(DatasetSplit { train, test, seed })
}

/// Code frequencies (one count per note), most frequent first, ties by code.
pub fn code_frequencies(notes: &[LabeledNote]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for note in notes {
        for label in &note.labels {
            *counts.entry(label.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(code, count)| (code.to_string(), count))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Restrict the corpus to its `k` most frequent codes.
pub fn build_top_k_subset(
    notes: &[LabeledNote],
    k: usize,
) -> Result<(Vec<LabeledNote>, Vec<String>)> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let ranked = code_frequencies(notes);
    if k > ranked.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} distinct codes in the corpus",
            ranked.len()
        )));
    }
    let codes: Vec<String> = ranked.into_iter().take(k).map(|(c, _)| c).collect();
    let keep: HashSet<&str> = codes.iter().map(String::as_str).collect();
    let subset = notes
        .iter()
        .filter_map(|note| {
            let labels: Vec<String> = note
                .labels
                .iter()
                .filter(|l| keep.contains(l.as_str()))
                .cloned()
                .collect();
            (!labels.is_empty()).then(|| LabeledNote {
                labels,
                ..note.clone()
            })
        })
        .collect();
    Ok((subset, codes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn note(hadm: u64, text: &str, labels: &[&str]) -> LabeledNote {
        LabeledNote {
            subject_id: 1,
            hadm_id: hadm,
            text: text.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn raw(hadm: u64, description: &str, text: &str) -> RawNoteRecord {
        RawNoteRecord {
            subject_id: 7,
            hadm_id: hadm,
            description: description.into(),
            text: text.into(),
        }
    }

    fn code(hadm: u64, code: &str, kind: CodeKind, sequence: u32) -> CodeAssignment {
        CodeAssignment {
            hadm_id: hadm,
            code: code.into(),
            kind,
            sequence,
        }
    }

    #[test]
    fn clean_text_examples() {
        assert_eq!(
            clean_text("Pt given 500 mg (500mg tabs)."),
            "pt given mg 500mg tabs"
        );
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("HEART   Failure,"), "heart failure");
        assert_eq!(clean_text("123 ... 4/5"), "");
    }

    #[test]
    fn join_orders_diagnoses_then_procedures() {
        let notes = vec![raw(100001, DISCHARGE_SUMMARY, "CHF exacerbation")];
        let codes = vec![
            code(100001, "38.93", CodeKind::Procedure, 1),
            code(100001, "401.9", CodeKind::Diagnosis, 2),
            code(100001, "428.0", CodeKind::Diagnosis, 1),
        ];
        let (out, report) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].labels.join(";"), "428.0;401.9;38.93");
        assert_eq!(out[0].text, "chf exacerbation");
        assert_eq!(report, SkipReport::default());
    }

    #[test]
    fn join_filters_category_missing_codes_and_empty_text() {
        let notes = vec![
            raw(1, "Nursing note", "fine"),
            raw(2, DISCHARGE_SUMMARY, "no codes for me"),
            raw(3, DISCHARGE_SUMMARY, "120/80 -- 500"),
            raw(4, "discharge summary", "case differs"),
        ];
        let codes = vec![
            code(1, "401.9", CodeKind::Diagnosis, 1),
            code(3, "401.9", CodeKind::Diagnosis, 1),
            code(4, "401.9", CodeKind::Diagnosis, 1),
        ];
        let (out, report) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
        assert!(out.is_empty());
        assert_eq!(report.wrong_category, 2);
        assert_eq!(report.no_codes, 1);
        assert_eq!(report.empty_text, vec![3]);
    }

    #[test]
    fn duplicate_codes_keep_first_occurrence() {
        let notes = vec![raw(5, DISCHARGE_SUMMARY, "text")];
        let codes = vec![
            code(5, "401.9", CodeKind::Diagnosis, 1),
            code(5, "401.9", CodeKind::Diagnosis, 3),
            code(5, "428.0", CodeKind::Diagnosis, 2),
        ];
        let (out, _) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
        assert_eq!(out[0].labels, vec!["401.9", "428.0"]);
    }

    #[test]
    fn multiple_notes_share_an_admission() {
        let notes = vec![
            raw(9, DISCHARGE_SUMMARY, "first"),
            raw(9, DISCHARGE_SUMMARY, "addendum"),
        ];
        let codes = vec![code(9, "486", CodeKind::Diagnosis, 1)];
        let (out, _) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].labels, out[1].labels);
    }

    #[test]
    fn split_ten_notes() {
        let notes: Vec<_> = (0..10).map(|i| note(i + 1, "a", &["x"])).collect();
        let split = split_dataset(&notes, 0.9, 7).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (9, 1));
        assert_eq!(split, split_dataset(&notes, 0.9, 7).unwrap());
    }

    #[test]
    fn split_rejects_tiny_inputs() {
        assert!(split_dataset(&[note(1, "a", &["x"])], 0.9, 1).is_err());
        let two = vec![note(1, "a", &["x"]), note(2, "a", &["x"])];
        assert!(split_dataset(&two, 1.0, 1).is_err());
        assert!(split_dataset(&two, 0.5, 1).is_ok());
    }

    #[test]
    fn split_keeps_admissions_together() {
        let notes: Vec<_> = (0..40).map(|i| note(i / 2 + 1, "a", &["x"])).collect();
        let split = split_dataset(&notes, 0.9, 3).unwrap();
        let train: HashSet<u64> = split.train.iter().map(|n| n.hadm_id).collect();
        assert!(split.test.iter().all(|n| !train.contains(&n.hadm_id)));
        assert_eq!(split.train.len() + split.test.len(), 40);
    }

    #[test]
    fn top_k_hand_count() {
        let notes = vec![
            note(1, "a", &["A", "B"]),
            note(2, "a", &["A", "C"]),
            note(3, "a", &["A", "B"]),
            note(4, "a", &["C"]),
        ];
        // A:3, B:2, C:2 -> tie between B and C broken by code text.
        let (subset, codes) = build_top_k_subset(&notes, 2).unwrap();
        assert_eq!(codes, vec!["A", "B"]);
        assert_eq!(subset.len(), 3);
        assert_eq!(subset[1].labels, vec!["A"]);

        let notes = vec![
            note(1, "a", &["A", "B"]),
            note(2, "a", &["A", "B"]),
            note(3, "a", &["A"]),
            note(4, "a", &["C"]),
        ];
        let (subset, codes) = build_top_k_subset(&notes, 2).unwrap();
        assert_eq!(codes, vec!["A", "B"]);
        assert!(subset.iter().all(|n| n.hadm_id != 4));
    }

    #[test]
    fn top_k_identity_and_errors() {
        let notes = vec![note(1, "a", &["A", "B"]), note(2, "a", &["C"])];
        let (subset, _) = build_top_k_subset(&notes, 3).unwrap();
        assert_eq!(subset, notes);
        assert!(build_top_k_subset(&notes, 4).is_err());
        assert!(build_top_k_subset(&notes, 0).is_err());
    }

    proptest! {
        #[test]
        fn clean_text_idempotent_and_well_formed(s in "\\PC{0,64}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            if !once.is_empty() {
                for token in once.split(' ') {
                    prop_assert!(!token.is_empty());
                    prop_assert!(token.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
                    prop_assert!(token.bytes().any(|b| b.is_ascii_lowercase()));
                }
            }
        }

        #[test]
        fn split_partitions_admissions(n in 2usize..60, dup in 1u64..3, seed in any::<u64>()) {
            let notes: Vec<_> = (0..n as u64).map(|i| note(i / dup + 1, "a", &["x"])).collect();
            let target = (0.9 * n as f64).floor() as usize;
            prop_assume!(target > 0 && target < n);
            let split = split_dataset(&notes, 0.9, seed).unwrap();
            let train: HashSet<u64> = split.train.iter().map(|n| n.hadm_id).collect();
            let test: HashSet<u64> = split.test.iter().map(|n| n.hadm_id).collect();
            prop_assert!(train.is_disjoint(&test));
            let all: HashSet<u64> = notes.iter().map(|n| n.hadm_id).collect();
            prop_assert_eq!(&train | &test, all);
            if dup == 1 {
                prop_assert_eq!(split.train.len(), target);
            }
        }

        #[test]
        fn top_k_invariants(
            labels in proptest::collection::vec(proptest::collection::vec(0u8..6, 1..4), 1..20),
            k in 1usize..6,
        ) {
            let notes: Vec<_> = labels.iter().enumerate().map(|(i, ls)| {
                let mut seen = Vec::new();
                for l in ls {
                    let s = format!("C{l}");
                    if !seen.contains(&s) { seen.push(s); }
                }
                LabeledNote { subject_id: 1, hadm_id: i as u64 + 1, text: "a".into(), labels: seen }
            }).collect();
            let distinct = code_frequencies(&notes).len();
            prop_assume!(k <= distinct);
            let (subset, codes) = build_top_k_subset(&notes, k).unwrap();
            prop_assert_eq!(codes.len(), k);
            for n in &subset {
                prop_assert!(!n.labels.is_empty());
                prop_assert!(n.labels.iter().all(|l| codes.contains(l)));
            }
            let freq = code_frequencies(&notes);
            for w in freq.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }
    }
}
