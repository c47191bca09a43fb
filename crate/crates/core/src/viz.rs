//! Attention heatmaps: self-contained HTML and a TSV twin.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AttentionMap;
use crate::snomed::SnomedResolution;
use crate::text::chunk_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizToken {
    pub sentence: usize,
    pub position: usize,
    pub token: String,
    pub word_weight: f64,
    pub sentence_weight: f64,
    pub display_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizCode {
    pub code: String,
    pub probability: f64,
    pub resolution: Option<SnomedResolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizDocument {
    /// Label whose attention is shown; `None` for the shared map.
    pub label: Option<String>,
    pub tokens: Vec<VizToken>,
    pub codes: Vec<VizCode>,
}

/// `(sentence, position, word, sentence, display)` for every real token.
pub type WeightRow = (usize, usize, f64, f64, f64);

/// Word weight × sentence weight per real token, divided by the document
/// maximum.
pub fn compose_display_weights(map: &AttentionMap, label: Option<&str>) -> Result<Vec<WeightRow>> {
    let g = map.group(label)?;
    let mut rows = Vec::new();
    for (s, &len) in map.sentence_lengths.iter().enumerate() {
        let sw = map.sentence[g][s];
        for t in 0..len {
            let ww = map.word_weight(g, s, t);
            rows.push((s, t, ww, sw, ww * sw));
        }
    }
    let max = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    if max > 0.0 {
        for r in &mut rows {
            r.4 = (r.4 / max).clamp(0.0, 1.0);
        }
    }
    Ok(rows)
}

impl VizDocument {
    /// Pair the surface tokens of `text` with the attention they received.
    pub fn build(text: &str, map: &AttentionMap, label: Option<&str>, codes: Vec<VizCode>) -> Result<Self> {
        let weights = compose_display_weights(map, label)?;
        let surface = chunk_tokens(text, map.max_sentences, map.max_tokens);
        if surface.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} surface tokens for {} attended positions",
                surface.len(),
                weights.len()
            )));
        }
        let tokens = surface
            .into_iter()
            .zip(weights)
            .map(|((sentence, position, token), (_, _, word_weight, sentence_weight, display_weight))| VizToken {
                sentence,
                position,
                token: token.to_string(),
                word_weight,
                sentence_weight,
                display_weight,
            })
            .collect();
        Ok(VizDocument {
            label: map.labels.as_ref().and(label).map(str::to_string),
            tokens,
            codes,
        })
    }

    /// Tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.token.as_str()).collect::<Vec<_>>().join(" ")
    }
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// One console-style line per predicted code.
pub fn code_summary_line(code: &VizCode) -> String {
    match &code.resolution {
        Some(r) => format!("{} (p={:.3}) {}", code.code, code.probability, r.summary()),
        None => format!("{} (p={:.3})", code.code, code.probability),
    }
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.8}\
header{border-bottom:1px solid #ccc;margin-bottom:1em}\
header li{font-family:monospace}\
.s{margin:0 0 .4em 0}";

pub fn render_html(viz: &VizDocument) -> String {
    let mut h = String::new();
    let title = match &viz.label {
        Some(l) => format!("Attention for {}", escape_html(l)),
        None => "Attention".to_string(),
    };
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(h, "<title>{title}</title>");
    let _ = writeln!(h, "<style>{STYLE}</style>");
    h.push_str("</head>\n<body>\n<header>\n");
    let _ = writeln!(h, "<h1>{title}</h1>");
    h.push_str("<ul>\n");
    for code in &viz.codes {
        let _ = writeln!(h, "<li>{}</li>", escape_html(&code_summary_line(code)));
    }
    h.push_str("</ul>\n</header>\n<main>\n");
    let mut current = None;
    for tok in &viz.tokens {
        if current != Some(tok.sentence) {
            if current.is_some() {
                h.push_str("</div>\n");
            }
            let _ = write!(h, "<div class=\"s\" data-sentence=\"{}\">", tok.sentence);
            current = Some(tok.sentence);
        } else {
            h.push(' ');
        }
        let w = tok.display_weight;
        if w > 0.0 {
            let _ = write!(
                h,
                "<span style=\"background-color:rgba(0,0,255,{w:.4})\" title=\"{w:.4}\">{}</span>",
                escape_html(&tok.token)
            );
        } else {
            let _ = write!(h, "<span>{}</span>", escape_html(&tok.token));
        }
    }
    if current.is_some() {
        h.push_str("</div>\n");
    }
    h.push_str("</main>\n</body>\n</html>\n");
    h
}

pub const TSV_HEADER: &str = "sentence_idx\ttoken_idx\ttoken\tword_weight\tsentence_weight\tdisplay_weight";

pub fn render_tsv(viz: &VizDocument) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for t in &viz.tokens {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            t.sentence, t.position, t.token, t.word_weight, t.sentence_weight, t.display_weight
        );
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<VizToken>> {
    let mut lines = text.lines();
    if lines.next() != Some(TSV_HEADER) {
        return Err(Error::invalid("attention TSV header mismatch"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::invalid(format!("attention TSV row {}: malformed", i + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(VizToken {
                sentence: f[0].parse().map_err(|_| bad())?,
                position: f[1].parse().map_err(|_| bad())?,
                token: f[2].to_string(),
                word_weight: num(f[3])?,
                sentence_weight: num(f[4])?,
                display_weight: num(f[5])?,
            })
        })
        .collect()
}

pub fn write_html(viz: &VizDocument, path: &Path) -> Result<()> {
    fs::write(path, render_html(viz)).map_err(|e| Error::io(path, e))
}

pub fn write_tsv(viz: &VizDocument, path: &Path) -> Result<()> {
    fs::write(path, render_tsv(viz)).map_err(|e| Error::io(path, e))
}
