// Clean raw notes, join them to their codes, split and take the top codes.

use clinicode::corpus::{
    build_labeled_notes, build_top_k_subset, clean_text, split_dataset, CodeAssignment, CodeKind, RawNoteRecord,
    DISCHARGE_SUMMARY,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    assert_eq!(clean_text("Pt given 500 mg (500mg tabs)."), "pt given mg 500mg tabs");

    let note = |hadm: u64, description: &str, text: &str| RawNoteRecord {
        subject_id: hadm - 90_000,
        hadm_id: hadm,
        description: description.into(),
        text: text.into(),
    };
    let code = |hadm: u64, code: &str, kind: CodeKind, sequence: u32| CodeAssignment {
        hadm_id: hadm,
        code: code.into(),
        kind,
        sequence,
    };
    let notes = vec![
        note(100_001, DISCHARGE_SUMMARY, "CHF exacerbation, BP 180/95. Started lasix 40mg."),
        note(100_002, DISCHARGE_SUMMARY, "New onset AFib; rate controlled."),
        note(100_003, DISCHARGE_SUMMARY, "Hypertension, well controlled."),
        note(100_003, "Nursing note", "Resting comfortably."),
        note(100_004, DISCHARGE_SUMMARY, "12/3 -- 500"),
    ];
    let codes = vec![
        code(100_001, "401.9", CodeKind::Diagnosis, 2),
        code(100_001, "428.0", CodeKind::Diagnosis, 1),
        code(100_001, "38.93", CodeKind::Procedure, 1),
        code(100_002, "427.31", CodeKind::Diagnosis, 1),
        code(100_003, "401.9", CodeKind::Diagnosis, 1),
        code(100_004, "401.9", CodeKind::Diagnosis, 1),
    ];
    let (labeled, skipped) = build_labeled_notes(&notes, &codes, DISCHARGE_SUMMARY);
    for n in &labeled {
        println!("{} [{}] {}", n.hadm_id, n.labels.join(";"), n.text);
    }
    println!("skipped: {skipped:?}");
    assert_eq!(labeled[0].labels, ["428.0", "401.9", "38.93"]);

    let split = split_dataset(&labeled, 0.67, 7)?;
    println!("train {} / test {}", split.train.len(), split.test.len());

    let (subset, top) = build_top_k_subset(&labeled, 1)?;
    println!("top code {top:?} keeps {} notes", subset.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
