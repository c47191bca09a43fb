//! ICD-9-CM → SNOMED CT resolution over the UMLS one-to-one and one-to-many
//! map releases, with dictionary descriptions as the fallback.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::icd::normalize_code;
use crate::corpus::tables::{column, open_table};
use crate::corpus::{read_icd_dictionary, CodeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub icd_code: String,
    pub icd_name: String,
    pub snomed_cid: String,
    pub snomed_fsn: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapKind {
    OneToOne,
    OneToMany,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapCategory {
    OneToOne,
    OneToMany,
    NoMap,
    NoDesc,
}

impl MapCategory {
    pub const ALL: [MapCategory; 4] = [
        MapCategory::OneToOne,
        MapCategory::OneToMany,
        MapCategory::NoMap,
        MapCategory::NoDesc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MapCategory::OneToOne => "1-to-1",
            MapCategory::OneToMany => "1-to-M",
            MapCategory::NoMap => "No Map",
            MapCategory::NoDesc => "No Desc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnomedResolution {
    pub icd_code: String,
    pub category: MapCategory,
    pub candidates: Vec<MapEntry>,
    pub fallback_description: Option<String>,
}

impl SnomedResolution {
    /// Console form, e.g. `1-to-1: 49436004 Atrial fibrillation (disorder)`.
    pub fn summary(&self) -> String {
        let detail = match self.category {
            MapCategory::OneToOne | MapCategory::OneToMany => self
                .candidates
                .iter()
                .map(|c| format!("{} {}", c.snomed_cid, c.snomed_fsn))
                .collect::<Vec<_>>()
                .join("; "),
            MapCategory::NoMap => self.fallback_description.clone().unwrap_or_default(),
            MapCategory::NoDesc => "no mapping or description".to_string(),
        };
        format!("{}: {detail}", self.category.label())
    }

    pub fn is_consistent(&self) -> bool {
        match self.category {
            MapCategory::OneToOne => self.candidates.len() == 1,
            MapCategory::OneToMany => self.candidates.len() >= 2,
            MapCategory::NoMap => self.candidates.is_empty() && self.fallback_description.is_some(),
            MapCategory::NoDesc => self.candidates.is_empty() && self.fallback_description.is_none(),
        }
    }
}

/// ICD code → candidate concepts, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapTable {
    pub kind: MapKind,
    entries: HashMap<String, Vec<MapEntry>>,
}

impl MapTable {
    pub fn empty(kind: MapKind) -> Self {
        MapTable {
            kind,
            entries: HashMap::new(),
        }
    }

    /// Group rows by ICD code. A repeated code in a one-to-one table is an
    /// error.
    pub fn from_entries(kind: MapKind, rows: impl IntoIterator<Item = MapEntry>) -> Result<Self> {
        let mut table = MapTable::empty(kind);
        for row in rows {
            let group = table.entries.entry(row.icd_code.clone()).or_default();
            if kind == MapKind::OneToOne && !group.is_empty() {
                return Err(Error::invalid(format!(
                    "ICD code {} appears more than once in the one-to-one map",
                    row.icd_code
                )));
            }
            group.push(row);
        }
        Ok(table)
    }

    pub fn get(&self, icd_code: &str) -> Option<&[MapEntry]> {
        self.entries.get(icd_code).map(Vec::as_slice)
    }

    pub fn codes(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a tab-delimited map release. Columns are found by header name and
/// unrelated columns are ignored.
pub fn parse_map<R: Read>(reader: R, kind: MapKind, table_name: &str) -> Result<MapTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let code = column(&headers, table_name, "ICD_CODE")?;
    let name = column(&headers, table_name, "ICD_NAME")?;
    let cid = column(&headers, table_name, "SNOMED_CID")?;
    let fsn = column(&headers, table_name, "SNOMED_FSN")?;
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let entry = MapEntry {
            icd_code: get(code),
            icd_name: get(name),
            snomed_cid: get(cid),
            snomed_fsn: get(fsn),
        };
        if entry.icd_code.is_empty() && entry.snomed_cid.is_empty() {
            continue;
        }
        if entry.icd_code.is_empty() || entry.snomed_cid.is_empty() {
            return Err(Error::invalid(format!(
                "{table_name}: row {} lacks an ICD code or SNOMED concept id",
                line + 2
            )));
        }
        rows.push(entry);
    }
    MapTable::from_entries(kind, rows)
}

pub fn parse_map_file(path: &Path, kind: MapKind) -> Result<MapTable> {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    parse_map(open_table(path)?, kind, &name)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveOptions {
    /// Move the one-to-many candidate whose name is contained in every other
    /// candidate's name to the front.
    pub parent_first: bool,
}

#[derive(Debug, Clone)]
pub struct SnomedMapper {
    pub one_to_one: MapTable,
    pub one_to_many: MapTable,
    /// Dotted ICD code → LONG_TITLE.
    pub descriptions: HashMap<String, String>,
    /// Codes present in both map files; the one-to-one entry wins.
    pub conflicts: Vec<String>,
}

/// The files making up a maps directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapsLayout {
    pub one_to_one: Option<PathBuf>,
    pub one_to_many: Option<PathBuf>,
    pub diagnoses: Option<PathBuf>,
    pub procedures: Option<PathBuf>,
}

impl MapsLayout {
    /// Find `*1TO1*`, `*1TOM*`, `D_ICD_DIAGNOSES*` and `D_ICD_PROCEDURES*`
    /// (case-insensitive) in `dir`.
    pub fn discover(dir: &Path) -> Result<Self> {
        let mut layout = MapsLayout::default();
        let mut names: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for path in names {
            let upper = path.file_name().unwrap_or_default().to_string_lossy().to_ascii_uppercase();
            let slot = if upper.contains("1TO1") {
                &mut layout.one_to_one
            } else if upper.contains("1TOM") {
                &mut layout.one_to_many
            } else if upper.starts_with("D_ICD_DIAGNOSES") {
                &mut layout.diagnoses
            } else if upper.starts_with("D_ICD_PROCEDURES") {
                &mut layout.procedures
            } else {
                continue;
            };
            slot.get_or_insert(path);
        }
        Ok(layout)
    }
}

impl SnomedMapper {
    /// No maps and no dictionary: every code resolves to NoDesc.
    pub fn empty() -> Self {
        SnomedMapper {
            one_to_one: MapTable::empty(MapKind::OneToOne),
            one_to_many: MapTable::empty(MapKind::OneToMany),
            descriptions: HashMap::new(),
            conflicts: Vec::new(),
        }
    }

    pub fn new(
        one_to_one: MapTable,
        one_to_many: MapTable,
        descriptions: HashMap<String, String>,
    ) -> Result<Self> {
        if one_to_one.kind != MapKind::OneToOne || one_to_many.kind != MapKind::OneToMany {
            return Err(Error::invalid("map tables passed in the wrong order"));
        }
        let conflicts: Vec<String> = one_to_one
            .codes()
            .intersection(&one_to_many.codes())
            .map(|c| c.to_string())
            .collect();
        for code in &conflicts {
            warn!(code = %code, "code in both map files; one-to-one entry takes precedence");
        }
        Ok(SnomedMapper {
            one_to_one,
            one_to_many,
            descriptions,
            conflicts,
        })
    }

    /// Load a maps directory. Both map files are required; the dictionaries
    /// are optional.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let layout = MapsLayout::discover(dir)?;
        let need = |p: Option<PathBuf>, what: &str| {
            p.ok_or_else(|| Error::invalid(format!("no {what} map file in {}", dir.display())))
        };
        let one_to_one = parse_map_file(&need(layout.one_to_one, "1TO1")?, MapKind::OneToOne)?;
        let one_to_many = parse_map_file(&need(layout.one_to_many, "1TOM")?, MapKind::OneToMany)?;
        let mut descriptions = HashMap::new();
        for (path, kind) in [(layout.diagnoses, CodeKind::Diagnosis), (layout.procedures, CodeKind::Procedure)] {
            let Some(path) = path else {
                warn!(?kind, dir = %dir.display(), "no ICD dictionary; unmapped codes will have no description");
                continue;
            };
            for entry in read_icd_dictionary(open_table(&path)?, kind)? {
                let text = if entry.long_title.is_empty() { entry.short_title } else { entry.long_title };
                if !text.is_empty() {
                    descriptions.insert(entry.code, text);
                }
            }
        }
        Self::new(one_to_one, one_to_many, descriptions)
    }

    /// One-to-one, then one-to-many, then the dictionary description, then
    /// nothing. Undotted codes are dotted as diagnoses first.
    pub fn resolve(&self, icd_code: &str, opts: ResolveOptions) -> SnomedResolution {
        let code = self.canonical(icd_code);
        if let Some(hit) = self.one_to_one.get(&code) {
            return SnomedResolution {
                icd_code: code,
                category: MapCategory::OneToOne,
                candidates: hit[..1].to_vec(),
                fallback_description: None,
            };
        }
        if let Some(group) = self.one_to_many.get(&code) {
            let mut candidates = group.to_vec();
            if opts.parent_first {
                parent_first(&mut candidates);
            }
            // A one-to-many group with a single row still maps to one concept.
            let category = if candidates.len() >= 2 {
                MapCategory::OneToMany
            } else {
                MapCategory::OneToOne
            };
            return SnomedResolution {
                icd_code: code,
                category,
                candidates,
                fallback_description: None,
            };
        }
        let description = self.descriptions.get(&code).cloned();
        SnomedResolution {
            icd_code: code,
            category: if description.is_some() {
                MapCategory::NoMap
            } else {
                MapCategory::NoDesc
            },
            candidates: Vec::new(),
            fallback_description: description,
        }
    }

    /// One resolution per input code, in input order.
    pub fn resolve_all<S: AsRef<str>>(&self, codes: &[S], opts: ResolveOptions) -> Vec<SnomedResolution> {
        codes.iter().map(|c| self.resolve(c.as_ref(), opts)).collect()
    }

    fn canonical(&self, raw: &str) -> String {
        let code = raw.trim();
        if code.contains('.') {
            return code.to_string();
        }
        let known = |c: &String| {
            self.one_to_one.get(c).is_some() || self.one_to_many.get(c).is_some() || self.descriptions.contains_key(c)
        };
        [CodeKind::Diagnosis, CodeKind::Procedure]
            .into_iter()
            .map(|k| normalize_code(code, k))
            .find(known)
            .unwrap_or_else(|| code.to_string())
    }
}

fn fsn_tokens(fsn: &str) -> BTreeSet<String> {
    // Drop the trailing semantic tag, e.g. "(disorder)".
    let body = match fsn.rfind(" (") {
        Some(i) if fsn.ends_with(')') => &fsn[..i],
        _ => fsn,
    };
    body.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Stable move-to-front of the first candidate whose name tokens are a
/// subset of every other candidate's. Without a hierarchy this only
/// approximates the least specific concept.
pub fn parent_first(candidates: &mut Vec<MapEntry>) {
    let tokens: Vec<BTreeSet<String>> = candidates.iter().map(|c| fsn_tokens(&c.snomed_fsn)).collect();
    let parent = (0..candidates.len()).find(|&i| {
        !tokens[i].is_empty() && tokens.iter().enumerate().all(|(j, t)| i == j || tokens[i].is_subset(t))
    });
    if let Some(i) = parent {
        let entry = candidates.remove(i);
        candidates.insert(0, entry);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryShare {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingStats {
    pub total: usize,
    pub categories: BTreeMap<MapCategory, CategoryShare>,
    /// Share of codes mapped to at least one SNOMED concept.
    pub mapped_rate: f64,
    /// Share of codes with any useful output (everything but NoDesc).
    pub useful_rate: f64,
}

impl MappingStats {
    pub fn share(&self, category: MapCategory) -> CategoryShare {
        self.categories[&category]
    }

    pub fn from_counts(counts: [usize; 4]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("no resolutions to summarize"));
        }
        let pct = |n: usize| 100.0 * n as f64 / total as f64;
        let categories = MapCategory::ALL
            .into_iter()
            .zip(counts)
            .map(|(c, n)| (c, CategoryShare { count: n, percent: pct(n) }))
            .collect();
        Ok(MappingStats {
            total,
            categories,
            mapped_rate: pct(counts[0] + counts[1]),
            useful_rate: pct(total - counts[3]),
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>6} {:>8}\n", "category", "count", "percent");
        for c in MapCategory::ALL {
            let s = self.share(c);
            out.push_str(&format!("{:<8} {:>6} {:>7.2}%\n", c.label(), s.count, s.percent));
        }
        out.push_str(&format!("mapped {:.2}%, useful {:.2}% of {} codes\n", self.mapped_rate, self.useful_rate, self.total));
        out
    }
}

pub fn mapping_stats(resolutions: &[SnomedResolution]) -> Result<MappingStats> {
    let mut counts = [0usize; 4];
    for r in resolutions {
        counts[MapCategory::ALL.iter().position(|c| *c == r.category).unwrap()] += 1;
    }
    MappingStats::from_counts(counts)
}

/// Code lists from a predictions file: either a JSON array of code arrays
/// (one per document) or an evaluation report with `documents[].predicted`.
pub fn codes_from_predictions(value: &serde_json::Value) -> Result<Vec<Vec<String>>> {
    let docs = match value {
        serde_json::Value::Array(docs) => docs.clone(),
        serde_json::Value::Object(map) => match map.get("documents") {
            Some(serde_json::Value::Array(docs)) => docs
                .iter()
                .map(|d| d.get("predicted").cloned().unwrap_or(serde_json::Value::Null))
                .collect(),
            _ => return Err(Error::invalid("predictions object has no `documents` array")),
        },
        _ => return Err(Error::invalid("predictions must be an array or an evaluation report")),
    };
    docs.into_iter()
        .map(|d| serde_json::from_value::<Vec<String>>(d).map_err(|e| Error::invalid(format!("bad code list: {e}"))))
        .collect()
}
