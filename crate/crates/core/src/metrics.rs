//! Confusion counts, micro/macro F1, precision@k and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledNote;
use crate::error::{Error, Result};
use crate::model::{forward, predict_codes};
use crate::text::structure_document;
use crate::train::Checkpoint;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionTotals {
    pub per_label: BTreeMap<String, Counts>,
    pub pooled: Counts,
    pub per_document: Vec<Counts>,
}

/// Which labels the macro average runs over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroScope {
    /// Labels occurring in the gold or predicted sets of the sample.
    Present,
    /// The whole label space; labels never seen contribute an F1 of 0.
    #[default]
    All,
}

impl std::str::FromStr for MacroScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "present" => Ok(MacroScope::Present),
            "all" => Ok(MacroScope::All),
            other => Err(Error::invalid(format!("macro scope must be present or all, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Scores {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Scores whose denominator was zero and were set to 0.
    pub undefined: Vec<String>,
}

/// Per document `TP = |pred ∩ gold|`, `FP = |pred ∖ gold|`,
/// `FN = |gold ∖ pred|`, accumulated per label and pooled.
pub fn confusion_counts<P, G>(predicted: &[P], gold: &[G]) -> Result<ConfusionTotals>
where
    P: AsRef<[String]>,
    G: AsRef<[String]>,
{
    if predicted.len() != gold.len() {
        return Err(Error::Dimension(format!(
            "{} predicted sets for {} gold sets",
            predicted.len(),
            gold.len()
        )));
    }
    let mut totals = ConfusionTotals::default();
    for (p, g) in predicted.iter().zip(gold) {
        let p: BTreeSet<&str> = p.as_ref().iter().map(String::as_str).collect();
        let g: BTreeSet<&str> = g.as_ref().iter().map(String::as_str).collect();
        let mut doc = Counts::default();
        for &code in p.union(&g) {
            let c = Counts {
                tp: usize::from(p.contains(code) && g.contains(code)),
                fp: usize::from(p.contains(code) && !g.contains(code)),
                fn_: usize::from(!p.contains(code) && g.contains(code)),
            };
            totals.per_label.entry(code.to_string()).or_default().add(c);
            doc.add(c);
        }
        totals.pooled.add(doc);
        totals.per_document.push(doc);
    }
    Ok(totals)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn harmonic(p: f64, r: f64) -> Option<f64> {
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

fn label_f1(c: Counts) -> f64 {
    let p = ratio(c.tp, c.tp + c.fp).unwrap_or(0.0);
    let r = ratio(c.tp, c.tp + c.fn_).unwrap_or(0.0);
    harmonic(p, r).unwrap_or(0.0)
}

/// Pooled precision, recall and micro F1, plus macro F1 over `scope`.
/// `label_space` is only consulted for [`MacroScope::All`].
pub fn aggregate_f1(totals: &ConfusionTotals, label_space: &[String], scope: MacroScope) -> F1Scores {
    let mut undefined = Vec::new();
    let mut flag = |v: Option<f64>, name: &str| {
        v.unwrap_or_else(|| {
            undefined.push(name.to_string());
            0.0
        })
    };
    let c = totals.pooled;
    let precision = flag(ratio(c.tp, c.tp + c.fp), "precision");
    let recall = flag(ratio(c.tp, c.tp + c.fn_), "recall");
    let micro_f1 = flag(harmonic(precision, recall), "micro_f1");

    let mut labels: BTreeSet<&str> = totals.per_label.keys().map(String::as_str).collect();
    if scope == MacroScope::All {
        labels.extend(label_space.iter().map(String::as_str));
    }
    let macro_f1 = if labels.is_empty() {
        flag(None, "macro_f1")
    } else {
        let sum: f64 = labels
            .iter()
            .map(|l| totals.per_label.get(*l).copied().map_or(0.0, label_f1))
            .sum();
        sum / labels.len() as f64
    };
    F1Scores {
        micro_f1,
        macro_f1,
        precision,
        recall,
        undefined,
    }
}

/// Mean over documents of `|top-k ∩ gold| / k`.
pub fn precision_at_k<R, G>(ranked: &[R], gold: &[G], k: usize) -> Result<f64>
where
    R: AsRef<[String]>,
    G: AsRef<[String]>,
{
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if ranked.len() != gold.len() {
        return Err(Error::Dimension(format!("{} rankings for {} gold sets", ranked.len(), gold.len())));
    }
    if ranked.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = ranked
        .iter()
        .zip(gold)
        .map(|(r, g)| {
            let g = g.as_ref();
            let hits = r.as_ref().iter().take(k).filter(|c| g.contains(c)).count();
            hits as f64 / k as f64
        })
        .sum();
    Ok(total / ranked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold: f64,
    pub ks: Vec<usize>,
    /// Evaluate a seeded random sample of this many documents.
    pub sample: Option<usize>,
    pub seed: u64,
    pub macro_over: MacroScope,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            ks: vec![5, 8, 15],
            sample: None,
            seed: 1,
            macro_over: MacroScope::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentRow {
    pub hadm_id: u64,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Keyed by k as a string, so the JSON path reads `p_at_k.15`.
    pub p_at_k: BTreeMap<String, f64>,
    pub n_docs: usize,
    pub threshold: f64,
    pub macro_over: MacroScope,
    pub undefined: Vec<String>,
    pub documents: Vec<DocumentRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>8}", "metric", "value");
        let _ = writeln!(out, "{:<14} {:>8}", "n_docs", self.n_docs);
        let mut ks: Vec<(usize, f64)> = self.p_at_k.iter().map(|(k, v)| (k.parse().unwrap_or(0), *v)).collect();
        ks.sort_by_key(|(k, _)| *k);
        for (k, v) in ks {
            let _ = writeln!(out, "{:<14} {:>8.4}", format!("P@{k}"), v);
        }
        let _ = writeln!(out, "{:<14} {:>8.4}", format!("macro F1 ({})", scope_name(self.macro_over)), self.macro_f1);
        let _ = writeln!(out, "{:<14} {:>8.4}", "micro F1", self.micro_f1);
        let _ = writeln!(out, "{:<14} {:>8.4}", "precision", self.precision);
        let _ = writeln!(out, "{:<14} {:>8.4}", "recall", self.recall);
        if !self.undefined.is_empty() {
            let _ = writeln!(out, "undefined (0/0, reported as 0): {}", self.undefined.join(", "));
        }
        out
    }
}

fn scope_name(s: MacroScope) -> &'static str {
    match s {
        MacroScope::Present => "present",
        MacroScope::All => "all",
    }
}

/// Build a report from already-computed predictions.
pub fn build_report(
    hadm_ids: &[u64],
    predicted: &[Vec<String>],
    ranked: &[Vec<String>],
    gold: &[Vec<String>],
    label_space: &[String],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    if hadm_ids.len() != gold.len() {
        return Err(Error::Dimension("document ids and gold sets differ in length".into()));
    }
    let totals = confusion_counts(predicted, gold)?;
    let scores = aggregate_f1(&totals, label_space, opts.macro_over);
    let mut p_at_k = BTreeMap::new();
    for &k in &opts.ks {
        p_at_k.insert(k.to_string(), precision_at_k(ranked, gold, k)?);
    }
    let documents = hadm_ids
        .iter()
        .zip(predicted.iter().zip(gold))
        .zip(&totals.per_document)
        .map(|((&hadm_id, (p, g)), c)| DocumentRow {
            hadm_id,
            gold: g.clone(),
            predicted: p.clone(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        })
        .collect();
    Ok(EvalReport {
        micro_f1: scores.micro_f1,
        macro_f1: scores.macro_f1,
        precision: scores.precision,
        recall: scores.recall,
        p_at_k,
        n_docs: gold.len(),
        threshold: opts.threshold,
        macro_over: opts.macro_over,
        undefined: scores.undefined,
        documents,
    })
}

/// Indices of the documents to evaluate, in their original order.
pub fn sample_indices(n: usize, sample_size: Option<usize>, seed: u64) -> Vec<usize> {
    match sample_size {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Run the model over the test notes and score its predictions.
pub fn evaluate_run(checkpoint: &Checkpoint, test_set: &[LabeledNote], opts: &EvalOptions) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let cfg = &checkpoint.config;
    let mut ids = Vec::new();
    let mut predicted = Vec::new();
    let mut ranked = Vec::new();
    let mut gold = Vec::new();
    for i in sample_indices(test_set.len(), opts.sample, opts.seed) {
        let note = &test_set[i];
        let doc = structure_document(&note.text, &checkpoint.vocab, cfg.max_sentences, cfg.max_tokens);
        let (pred, _) = forward(&doc, &checkpoint.params)?;
        ids.push(note.hadm_id);
        predicted.push(predict_codes(&pred, opts.threshold, None));
        ranked.push(pred.ranked().into_iter().map(|(c, _)| c).collect());
        gold.push(note.labels.clone());
    }
    build_report(&ids, &predicted, &ranked, &gold, checkpoint.labels(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(codes: &[&str]) -> Vec<String> {
        codes.iter().map(|c| c.to_string()).collect()
    }

    #[test]
    fn hand_fixture_two_thirds() {
        let t = confusion_counts(&[set(&["A", "B", "C"])], &[set(&["A", "B", "D"])]).unwrap();
        assert_eq!(t.pooled, Counts { tp: 2, fp: 1, fn_: 1 });
        let s = aggregate_f1(&t, &[], MacroScope::Present);
        for v in [s.precision, s.recall, s.micro_f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_count_cases() {
        let t = confusion_counts(&[set(&["A"])], &[set(&["A"])]).unwrap();
        assert_eq!(t.pooled, Counts { tp: 1, fp: 0, fn_: 0 });
        let t = confusion_counts(&[set(&[])], &[set(&["A"])]).unwrap();
        assert_eq!(t.pooled, Counts { tp: 0, fp: 0, fn_: 1 });
        assert!(confusion_counts(&[set(&[])], &[] as &[Vec<String>]).is_err());
    }

    #[test]
    fn macro_counts_missed_labels_as_zero() {
        // A is perfect; B is in the gold set and never predicted.
        let t = confusion_counts(&[set(&["A"]), set(&[])], &[set(&["A"]), set(&["B"])]).unwrap();
        let s = aggregate_f1(&t, &set(&["A", "B"]), MacroScope::All);
        assert!((s.macro_f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn macro_scope_all_includes_unseen_labels() {
        let t = confusion_counts(&[set(&["A"])], &[set(&["A"])]).unwrap();
        let space = set(&["A", "B", "C", "D"]);
        assert_eq!(aggregate_f1(&t, &space, MacroScope::Present).macro_f1, 1.0);
        assert!((aggregate_f1(&t, &space, MacroScope::All).macro_f1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let docs = vec![set(&["A", "B"]), set(&["C"])];
        let t = confusion_counts(&docs, &docs).unwrap();
        let s = aggregate_f1(&t, &set(&["A", "B", "C"]), MacroScope::All);
        assert_eq!((s.micro_f1, s.macro_f1), (1.0, 1.0));
        assert!(s.undefined.is_empty());
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let t = confusion_counts(&[set(&[])], &[set(&[])]).unwrap();
        let s = aggregate_f1(&t, &[], MacroScope::Present);
        assert_eq!((s.precision, s.recall, s.micro_f1, s.macro_f1), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.undefined, vec!["precision", "recall", "micro_f1", "macro_f1"]);
    }

    #[test]
    fn precision_at_k_cases() {
        let p = precision_at_k(&[set(&["A", "B", "C"])], &[set(&["A", "C", "X"])], 3).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(precision_at_k(&[set(&[])], &[set(&["A"])], 5).unwrap(), 0.0);
        // Short rankings still divide by k.
        assert_eq!(precision_at_k(&[set(&["A"])], &[set(&["A"])], 2).unwrap(), 0.5);
        assert!(precision_at_k(&[set(&["A"])], &[set(&["A"])], 0).is_err());
        let codes: Vec<String> = (0..20).map(|i| format!("C{i}")).collect();
        assert_eq!(precision_at_k(std::slice::from_ref(&codes), std::slice::from_ref(&codes), 15).unwrap(), 1.0);
    }

    #[test]
    fn p_at_k_non_increasing_for_perfect_prefix() {
        let gold = set(&["A", "B", "C"]);
        let ranked = set(&["A", "B", "C", "X", "Y", "Z"]);
        let values: Vec<f64> = (1..=6)
            .map(|k| precision_at_k(std::slice::from_ref(&ranked), std::slice::from_ref(&gold), k).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    }

    #[test]
    fn empty_documents_leave_pooled_counts_unchanged() {
        let pred = vec![set(&["A", "C"])];
        let gold = vec![set(&["A", "B"])];
        let base = confusion_counts(&pred, &gold).unwrap().pooled;
        let mut pred2 = pred.clone();
        let mut gold2 = gold.clone();
        pred2.push(set(&[]));
        gold2.push(set(&[]));
        assert_eq!(confusion_counts(&pred2, &gold2).unwrap().pooled, base);
    }

    #[test]
    fn sampling_is_seeded() {
        let a = sample_indices(100, Some(10), 4);
        assert_eq!(a, sample_indices(100, Some(10), 4));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_indices(5, Some(10), 4), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn report_json_field_names() {
        let docs = vec![set(&["A"])];
        let report = build_report(&[7], &docs, &docs, &docs, &set(&["A"]), &EvalOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        for f in ["micro_f1", "macro_f1", "precision", "recall", "n_docs", "documents"] {
            assert!(v.get(f).is_some(), "{f}");
        }
        assert_eq!(v["p_at_k"]["15"], 1.0 / 15.0);
        assert_eq!(v["documents"][0]["fn"], 0);
        assert!(report.to_table().contains("P@15"));
    }

    /// Scores computed from a document × label indicator grid, one score at a
    /// time, with no shared code.
    struct Brute {
        micro: f64,
        macro_: f64,
        precision: f64,
        recall: f64,
    }

    fn brute(pred: &[Vec<bool>], gold: &[Vec<bool>], n_labels: usize) -> Brute {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        let mut f1_sum = 0.0;
        for l in 0..n_labels {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for d in 0..pred.len() {
                match (pred[d][l], gold[d][l]) {
                    (true, true) => a += 1.0,
                    (true, false) => b += 1.0,
                    (false, true) => c += 1.0,
                    _ => {}
                }
            }
            tp += a;
            fp += b;
            fn_ += c;
            let p = if a + b > 0.0 { a / (a + b) } else { 0.0 };
            let r = if a + c > 0.0 { a / (a + c) } else { 0.0 };
            f1_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let micro = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Brute {
            micro,
            macro_: f1_sum / n_labels as f64,
            precision,
            recall,
        }
    }

    fn brute_p_at_k(order: &[Vec<usize>], gold: &[Vec<bool>], k: usize) -> f64 {
        let mut acc = 0.0;
        for (o, g) in order.iter().zip(gold) {
            let mut hits = 0.0;
            for (i, &l) in o.iter().enumerate() {
                if i < k && g[l] {
                    hits += 1.0;
                }
            }
            acc += hits / k as f64;
        }
        acc / order.len() as f64
    }

    type Instance = (usize, Vec<Vec<bool>>, Vec<Vec<bool>>, Vec<Vec<usize>>, usize);

    fn instance() -> impl Strategy<Value = Instance> {
        (1usize..=8, 1usize..=6).prop_flat_map(|(n_labels, n_docs)| {
            (
                Just(n_labels),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), n_labels), n_docs),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), n_labels), n_docs),
                proptest::collection::vec(Just((0..n_labels).collect::<Vec<_>>()).prop_shuffle(), n_docs),
                1usize..=10,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn matches_brute_force_oracle((n_labels, pred, gold, order, k) in instance()) {
            let name = |l: usize| format!("L{l}");
            let to_sets = |grid: &[Vec<bool>]| -> Vec<Vec<String>> {
                grid.iter().map(|row| (0..n_labels).filter(|&l| row[l]).map(name).collect()).collect()
            };
            let space: Vec<String> = (0..n_labels).map(name).collect();
            let totals = confusion_counts(&to_sets(&pred), &to_sets(&gold)).unwrap();
            let s = aggregate_f1(&totals, &space, MacroScope::All);
            let b = brute(&pred, &gold, n_labels);
            prop_assert!((s.micro_f1 - b.micro).abs() < 1e-12);
            prop_assert!((s.macro_f1 - b.macro_).abs() < 1e-12);
            prop_assert!((s.precision - b.precision).abs() < 1e-12);
            prop_assert!((s.recall - b.recall).abs() < 1e-12);

            let ranked: Vec<Vec<String>> = order.iter().map(|o| o.iter().map(|&l| name(l)).collect()).collect();
            let p = precision_at_k(&ranked, &to_sets(&gold), k).unwrap();
            prop_assert!((p - brute_p_at_k(&order, &gold, k)).abs() < 1e-12);

            if s.undefined.is_empty() {
                let lo = s.precision.min(s.recall);
                let hi = s.precision.max(s.recall);
                prop_assert!(s.micro_f1 >= lo - 1e-15 && s.micro_f1 <= hi + 1e-15);
            }
        }
    }
}
