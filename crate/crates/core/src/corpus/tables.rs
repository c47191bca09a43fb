//! CSV readers and writers for the MIMIC-shaped tables and `notes_labeled`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::StringRecord;

use super::icd::normalize_code;
use super::{CodeAssignment, CodeKind, LabeledNote, RawNoteRecord};
use crate::error::{Error, Result};

/// Which NOTEEVENTS columns to read. MIMIC-III keeps the note type in
/// `CATEGORY`; some exports put it in `DESCRIPTION`.
#[derive(Debug, Clone)]
pub struct NoteColumns {
    pub category: String,
}

impl Default for NoteColumns {
    fn default() -> Self {
        NoteColumns {
            category: "DESCRIPTION".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub code: String,
    pub short_title: String,
    pub long_title: String,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn column(headers: &StringRecord, table: &str, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            table: table.into(),
            column: name.into(),
        })
}

fn parse_id(field: &str, table: &str, name: &str) -> Result<Option<u64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    // MIMIC exports sometimes write ids as floats ("100001.0").
    let value = field
        .parse::<u64>()
        .ok()
        .or_else(|| field.parse::<f64>().ok().filter(|v| v.fract() == 0.0 && *v >= 0.0).map(|v| v as u64))
        .ok_or_else(|| Error::invalid(format!("{table}.{name}: `{field}` is not an id")))?;
    Ok(Some(value))
}

/// Rows without a positive `HADM_ID` are skipped.
pub fn read_note_events<R: Read>(reader: R, columns: &NoteColumns) -> Result<Vec<RawNoteRecord>> {
    const TABLE: &str = "NOTEEVENTS";
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let subject = column(&headers, TABLE, "SUBJECT_ID")?;
    let hadm = column(&headers, TABLE, "HADM_ID")?;
    let category = column(&headers, TABLE, &columns.category)?;
    let text = column(&headers, TABLE, "TEXT")?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let Some(hadm_id) = parse_id(get(hadm), TABLE, "HADM_ID")?.filter(|&h| h > 0) else {
            continue;
        };
        out.push(RawNoteRecord {
            subject_id: parse_id(get(subject), TABLE, "SUBJECT_ID")?.unwrap_or(0),
            hadm_id,
            description: get(category).to_string(),
            text: get(text).to_string(),
        });
    }
    Ok(out)
}

/// Reads DIAGNOSES_ICD or PROCEDURES_ICD. Codes are normalized to dotted form;
/// rows with an empty code are skipped.
pub fn read_code_assignments<R: Read>(reader: R, kind: CodeKind) -> Result<Vec<CodeAssignment>> {
    let table = match kind {
        CodeKind::Diagnosis => "DIAGNOSES_ICD",
        CodeKind::Procedure => "PROCEDURES_ICD",
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let hadm = column(&headers, table, "HADM_ID")?;
    let seq = column(&headers, table, "SEQ_NUM")?;
    let code = column(&headers, table, "ICD9_CODE")?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let raw_code = get(code).trim();
        if raw_code.is_empty() {
            continue;
        }
        let Some(hadm_id) = parse_id(get(hadm), table, "HADM_ID")? else {
            continue;
        };
        let sequence = parse_id(get(seq), table, "SEQ_NUM")?.unwrap_or(1).max(1) as u32;
        out.push(CodeAssignment {
            hadm_id,
            code: normalize_code(raw_code, kind),
            kind,
            sequence,
        });
    }
    Ok(out)
}

/// Reads D_ICD_DIAGNOSES or D_ICD_PROCEDURES.
pub fn read_icd_dictionary<R: Read>(reader: R, kind: CodeKind) -> Result<Vec<DictionaryEntry>> {
    let table = match kind {
        CodeKind::Diagnosis => "D_ICD_DIAGNOSES",
        CodeKind::Procedure => "D_ICD_PROCEDURES",
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let code = column(&headers, table, "ICD9_CODE")?;
    let short = column(&headers, table, "SHORT_TITLE")?;
    let long = column(&headers, table, "LONG_TITLE")?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let raw = get(code);
        if raw.is_empty() {
            continue;
        }
        out.push(DictionaryEntry {
            code: normalize_code(&raw, kind),
            short_title: get(short),
            long_title: get(long),
        });
    }
    Ok(out)
}

pub fn read_labeled_notes<R: Read>(reader: R) -> Result<Vec<LabeledNote>> {
    const TABLE: &str = "notes_labeled";
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let subject = column(&headers, TABLE, "SUBJECT_ID")?;
    let hadm = column(&headers, TABLE, "HADM_ID")?;
    let text = column(&headers, TABLE, "TEXT")?;
    let labels = column(&headers, TABLE, "LABELS")?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        out.push(LabeledNote {
            subject_id: parse_id(get(subject), TABLE, "SUBJECT_ID")?.unwrap_or(0),
            hadm_id: parse_id(get(hadm), TABLE, "HADM_ID")?
                .ok_or_else(|| Error::invalid("notes_labeled row without HADM_ID"))?,
            text: get(text).to_string(),
            labels: get(labels)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}

pub fn write_labeled_notes<W: Write>(writer: W, notes: &[LabeledNote]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["SUBJECT_ID", "HADM_ID", "TEXT", "LABELS"])?;
    for note in notes {
        wtr.write_record([
            note.subject_id.to_string(),
            note.hadm_id.to_string(),
            note.text.clone(),
            note.labels.join(";"),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<notes_labeled>", e))?;
    Ok(())
}

impl LabeledNote {
    pub fn load_csv(path: &Path) -> Result<Vec<LabeledNote>> {
        read_labeled_notes(open(path)?)
    }

    pub fn save_csv(path: &Path, notes: &[LabeledNote]) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_labeled_notes(file, notes)
    }
}

pub(crate) fn open_table(path: &Path) -> Result<File> {
    open(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn note_events_by_header_name_with_quoting() {
        let csv = "ROW_ID,SUBJECT_ID,HADM_ID,CHARTDATE,CATEGORY,DESCRIPTION,TEXT\n\
                   1,10,100001,2101-01-01,Discharge summary,Discharge summary,\"Line one,\nline \"\"two\"\"\"\n\
                   2,11,,2101-01-01,Nursing,Nursing note,orphan\n";
        let notes = read_note_events(csv.as_bytes(), &NoteColumns::default()).unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].hadm_id, 100001);
        assert_eq!(notes[0].text, "Line one,\nline \"two\"");

        let by_category = NoteColumns {
            category: "CATEGORY".into(),
        };
        let notes = read_note_events(csv.as_bytes(), &by_category).unwrap();
        assert_eq!(notes[0].description, "Discharge summary");
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_code_assignments("HADM_ID,ICD9_CODE\n1,4019\n".as_bytes(), CodeKind::Diagnosis)
            .unwrap_err();
        assert!(err.to_string().contains("SEQ_NUM"), "{err}");
    }

    #[test]
    fn codes_are_dotted_on_read() {
        let csv = "ROW_ID,SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n1,1,5,1,42731\n2,1,5,2,\n";
        let codes = read_code_assignments(csv.as_bytes(), CodeKind::Diagnosis).unwrap();
        assert_eq!(codes.len(), 1);
        assert_eq!(codes[0].code, "427.31");
    }

    #[test]
    fn labeled_notes_csv_round_trip() {
        let notes = vec![LabeledNote {
            subject_id: 3,
            hadm_id: 100001,
            text: "heart failure".into(),
            labels: vec!["428.0".into(), "401.9".into(), "38.93".into()],
        }];
        let mut buf = Vec::new();
        write_labeled_notes(&mut buf, &notes).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("SUBJECT_ID,HADM_ID,TEXT,LABELS\n"));
        assert!(text.contains("428.0;401.9;38.93"));
        assert_eq!(read_labeled_notes(buf.as_slice()).unwrap(), notes);
    }
}
