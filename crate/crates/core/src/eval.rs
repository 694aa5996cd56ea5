//! Experiment protocols: pair scoring and precision-recall curves, KNN error
//! rates with pruning reports, and the length-varying comparison report.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::balanced_sinkhorn;
use crate::corpus::{to_nbow, Corpus, EmbeddingTable, Nbow, PreprocessOptions, ProcessedDocument};
use crate::error::{Error, Result};
use crate::measures::{euclidean_cost, wfr_cost};
use crate::retrieval::{knn_classify, DocumentIndex, Metric, PruneStats};
use crate::solver::{solve_with_cost, SolverSchedule};

/// One concept/project pair with a binary relevance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocPair {
    pub pair_id: String,
    pub concept_text: String,
    pub project_text: String,
    pub label: bool,
}

fn parse_label(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_f64() {
            Some(1.0) => Some(true),
            Some(x) if x == 0.0 || x == -1.0 => Some(false),
            _ => None,
        },
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "pos" | "positive" => Some(true),
            "0" | "-1" | "false" | "no" | "neg" | "negative" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// JSONL pairs with `concept_text`, `project_text`, `label` and an optional
/// `id`; missing ids become `pair{line}`.
pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<DocPair>> {
    let mut pairs = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { line: lineno, message };
        let v: Value = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let text = |field: &str| {
            v.get(field)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| parse(format!("missing string field `{field}`")))
        };
        let label = v
            .get("label")
            .and_then(parse_label)
            .ok_or_else(|| parse("missing or non-binary `label`".into()))?;
        let pair_id = match v.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("pair{lineno}"),
        };
        pairs.push(DocPair {
            pair_id,
            concept_text: text("concept_text")?,
            project_text: text("project_text")?,
            label,
        });
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<DocPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    /// A document distance; smaller means more related.
    pub score: f64,
    pub label: bool,
}

/// Scores every pair under `metric`, preserving input order.
pub fn score_pairs(
    pairs: &[DocPair],
    table: &EmbeddingTable,
    options: &PreprocessOptions,
    metric: Metric,
    schedule: &SolverSchedule,
) -> Result<Vec<ScoredPair>> {
    pairs
        .par_iter()
        .map(|p| {
            let side = |text: &str, side: &str| {
                let doc = ProcessedDocument::from_text(format!("{}:{side}", p.pair_id), None, text, options);
                to_nbow(&doc, table).map_err(|e| match e {
                    Error::DegenerateDocument { .. } => Error::invalid(format!(
                        "pair `{}`: {side} text has no in-vocabulary tokens",
                        p.pair_id
                    )),
                    other => other,
                })
            };
            let a = side(&p.concept_text, "concept")?;
            let b = side(&p.project_text, "project")?;
            let score = metric.distance(&a.measure, &b.measure, schedule)?;
            if !score.is_finite() {
                return Err(Error::Numerical {
                    stage: 0,
                    message: format!("pair `{}` has a non-finite score", p.pair_id),
                });
            }
            Ok(ScoredPair {
                pair_id: p.pair_id.clone(),
                score,
                label: p.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PRPoint {
    pub fn f1(&self) -> f64 {
        if self.precision + self.recall == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / (self.precision + self.recall)
        }
    }
}

fn sentinel_gap(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Precision and recall of the rule `score < threshold`, with thresholds at
/// the midpoints of consecutive distinct scores plus one sentinel on either
/// side. Thresholds with no positive prediction are skipped.
pub fn pr_curve(scored: &[ScoredPair]) -> Result<Vec<PRPoint>> {
    let positives = scored.iter().filter(|s| s.label).count();
    if positives == 0 {
        return Err(Error::invalid("precision-recall needs at least one positive pair"));
    }
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::invalid(format!("pair `{}` has a non-finite score", bad.pair_id)));
    }
    let mut sorted: Vec<(f64, bool)> = scored.iter().map(|s| (s.score, s.label)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<f64> = sorted.iter().map(|s| s.0).collect();
    distinct.dedup();
    let lo = distinct[0];
    let hi = *distinct.last().expect("non-empty");
    let mut thresholds = vec![lo - sentinel_gap(lo)];
    thresholds.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(hi + sentinel_gap(hi));

    let mut curve = Vec::with_capacity(thresholds.len());
    let (mut tp, mut fp, mut cursor) = (0usize, 0usize, 0usize);
    for t in thresholds {
        while cursor < sorted.len() && sorted[cursor].0 < t {
            if sorted[cursor].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        if tp + fp == 0 {
            continue;
        }
        curve.push(PRPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(curve)
}

/// Point with the highest F1; ties keep the lower threshold.
pub fn best_f1(curve: &[PRPoint]) -> Option<PRPoint> {
    curve
        .iter()
        .copied()
        .fold(None, |best: Option<PRPoint>, p| match best {
            Some(b) if b.f1() >= p.f1() => Some(b),
            _ => Some(p),
        })
}

/// Best precision reachable at recall at least `recall`.
pub fn precision_at_recall(curve: &[PRPoint], recall: f64) -> Option<f64> {
    curve
        .iter()
        .filter(|p| p.recall >= recall - 1e-12)
        .map(|p| p.precision)
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
}

/// True when, at every recall level reached by `other`, `curve` reaches at
/// least the same precision.
pub fn dominates(curve: &[PRPoint], other: &[PRPoint]) -> bool {
    other
        .iter()
        .all(|q| precision_at_recall(curve, q.recall).is_some_and(|p| p >= q.precision - 1e-12))
}

pub fn write_pr_csv<W: Write>(writer: W, curve: &[PRPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in curve {
        w.serialize(p).map_err(|e| Error::invalid(format!("csv output: {e}")))?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv output: {e}")))
}

pub fn read_pr_csv<R: std::io::Read>(reader: R) -> Result<Vec<PRPoint>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| Error::Parse {
                line: k + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Option<String>,
    /// None for test documents with no in-vocabulary token.
    pub predicted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReport {
    pub k: usize,
    pub eta: f64,
    pub error_rate: f64,
    pub misclassified: usize,
    pub total: usize,
    pub degenerate_test_documents: Vec<String>,
    /// Mean survivor fraction per stage over queries; summed full solves.
    pub prune_stats: PruneStats,
    pub predictions: Vec<Prediction>,
}

/// Classifies every test document against an index built from `train`.
/// Degenerate test documents count as errors.
pub fn knn_error_rate(
    train: &Corpus,
    test: &Corpus,
    table: &EmbeddingTable,
    k: usize,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<KnnReport> {
    if !train.is_labeled() {
        return Err(Error::invalid("training corpus must be fully labeled"));
    }
    if test.is_empty() {
        return Err(Error::invalid("test corpus is empty"));
    }
    if train.label_set().is_disjoint(test.label_set()) && !test.label_set().is_empty() {
        log::warn!("training and test label sets are disjoint");
    }
    let (index, skipped) = DocumentIndex::from_corpus(train, table)?;
    if !skipped.is_empty() {
        log::warn!("{} training documents had no in-vocabulary tokens", skipped.len());
    }
    knn_error_rate_index(&index, test, table, k, eta, schedule)
}

/// As [`knn_error_rate`] with a prebuilt training index.
pub fn knn_error_rate_index(
    index: &DocumentIndex,
    test: &Corpus,
    table: &EmbeddingTable,
    k: usize,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<KnnReport> {
    let outcomes = test
        .documents()
        .par_iter()
        .map(|doc| match to_nbow(doc, table) {
            Ok(n) => knn_classify(&n.measure, index, k, eta, schedule).map(|(l, r)| Some((l, r.prune_stats))),
            Err(Error::DegenerateDocument { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut predictions = Vec::with_capacity(outcomes.len());
    let mut degenerate = Vec::new();
    let mut stage_sums = vec![0.0; schedule.len()];
    let (mut full_solves, mut queries, mut misclassified) = (0, 0usize, 0);
    for (doc, outcome) in test.documents().iter().zip(outcomes) {
        let predicted = match outcome {
            Some((label, stats)) => {
                for (s, f) in stage_sums.iter_mut().zip(&stats.survivors_after_stage) {
                    *s += f;
                }
                full_solves += stats.full_solves;
                queries += 1;
                Some(label)
            }
            None => {
                log::warn!("test document `{}` has no in-vocabulary tokens", doc.id);
                degenerate.push(doc.id.clone());
                None
            }
        };
        if predicted.is_none() || predicted != doc.label {
            misclassified += 1;
        }
        predictions.push(Prediction {
            id: doc.id.clone(),
            label: doc.label.clone(),
            predicted,
        });
    }
    let survivors_after_stage = stage_sums.iter().map(|s| s / queries.max(1) as f64).collect();
    Ok(KnnReport {
        k,
        eta,
        error_rate: misclassified as f64 / test.len() as f64,
        misclassified,
        total: test.len(),
        degenerate_test_documents: degenerate,
        prune_stats: PruneStats {
            survivors_after_stage,
            full_solves,
        },
        predictions,
    })
}

/// Fixed-column pruning table: one row per stage, then the full-solve count.
pub fn prune_table(stats: &PruneStats) -> String {
    let mut out = String::from("stage  survivors\n");
    for (m, f) in stats.survivors_after_stage.iter().enumerate() {
        let _ = writeln!(out, "{:>5}  {:>8.2}%", m + 1, 100.0 * f);
    }
    let _ = writeln!(out, "full solves: {}", stats.full_solves);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFlow {
    pub word: String,
    pub wmd_cost: f64,
    pub wmd_mass: f64,
    pub wfr_cost: f64,
    pub wfr_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSide {
    /// Target sentence name, "A" or "C".
    pub target: String,
    /// Flows out of B's first word into every word of the target.
    pub words: Vec<WordFlow>,
    pub wmd_total: f64,
    pub wfr_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub eta: f64,
    pub source_words: Vec<String>,
    pub to_a: DemoSide,
    pub to_c: DemoSide,
    /// Tokens of the three sentences missing from the embedding table.
    pub oov: Vec<String>,
}

impl DemoReport {
    pub fn wfr_flip(&self) -> bool {
        self.to_c.wfr_total < self.to_a.wfr_total
    }

    pub fn wmd_order(&self) -> bool {
        self.to_a.wmd_total < self.to_c.wmd_total
    }

    /// B→C WFR masses strictly decrease as the cost grows.
    pub fn masses_decrease_with_cost(&self) -> bool {
        let mut w: Vec<&WordFlow> = self.to_c.words.iter().collect();
        w.sort_by(|a, b| a.wfr_cost.total_cmp(&b.wfr_cost));
        w.windows(2).all(|p| p[0].wfr_cost == p[1].wfr_cost || p[0].wfr_mass > p[1].wfr_mass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source B: {}   eta = {}", self.source_words.join(" "), self.eta);
        let _ = writeln!(
            out,
            "{:<3} {:<14} {:>10} {:>8} {:>8} {:>10} {:>10} {:>8}",
            "", "word", "WMD cost", "mass", "amount", "WFR cost", "mass", "amount"
        );
        for side in [&self.to_a, &self.to_c] {
            for (k, w) in side.words.iter().enumerate() {
                let name = if k == 0 { side.target.as_str() } else { "" };
                let _ = writeln!(
                    out,
                    "{:<3} {:<14} {:>10.2} {:>8.2} {:>8.2} {:>10.2} {:>10.3e} {:>8.4}",
                    name,
                    w.word,
                    w.wmd_cost,
                    w.wmd_mass,
                    w.wmd_cost * w.wmd_mass,
                    w.wfr_cost,
                    w.wfr_mass,
                    if w.wfr_cost.is_finite() { w.wfr_cost * w.wfr_mass } else { 0.0 },
                );
            }
            let _ = writeln!(
                out,
                "    total: WMD(B,{t}) = {:.4}   WFR(B,{t}) = {:.4}",
                side.wmd_total,
                side.wfr_total,
                t = side.target
            );
        }
        if !self.oov.is_empty() {
            let _ = writeln!(out, "out of vocabulary: {}", self.oov.join(", "));
        }
        let _ = write!(
            out,
            "WFR(B,C) < WFR(A,B): {}; WMD(A,B) < WMD(B,C): {}",
            self.wfr_flip(),
            self.wmd_order()
        );
        out
    }
}

fn demo_side(
    target: &str,
    b: &Nbow,
    other: &Nbow,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<DemoSide> {
    let e_cost = euclidean_cost(&b.measure, &other.measure)?;
    let w_cost = wfr_cost(&b.measure, &other.measure, eta)?;
    let wmd = balanced_sinkhorn(&b.measure, &other.measure, &e_cost, schedule)?;
    let wfr = solve_with_cost(&b.measure, &other.measure, &w_cost, eta, schedule)?;
    let mut words: Vec<WordFlow> = other
        .tokens
        .iter()
        .enumerate()
        .map(|(j, word)| WordFlow {
            word: word.clone(),
            wmd_cost: e_cost.get(0, j),
            wmd_mass: wmd.plan.get(0, j),
            wfr_cost: w_cost.get(0, j),
            wfr_mass: wfr.plan.get(0, j),
        })
        .collect();
    words.sort_by(|a, b| a.wmd_cost.total_cmp(&b.wmd_cost).then_with(|| a.word.cmp(&b.word)));
    Ok(DemoSide {
        target: target.into(),
        words,
        wmd_total: wmd.primal,
        wfr_total: wfr.distance,
    })
}

/// Compares B→A and B→C under WMD and WFR. Per-word rows follow B's first
/// word, which is the whole of B in the intended single-word setting.
pub fn length_varying_demo(
    table: &EmbeddingTable,
    sentences: [&str; 3],
    options: &PreprocessOptions,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<DemoReport> {
    let names = ["A", "B", "C"];
    let docs: Vec<ProcessedDocument> = sentences
        .iter()
        .zip(names)
        .map(|(s, n)| ProcessedDocument::from_text(n, None, s, options))
        .collect();
    let mut oov: Vec<String> = docs
        .iter()
        .flat_map(|d| d.token_counts.keys())
        .filter(|t| !table.contains(t))
        .cloned()
        .collect();
    oov.sort();
    oov.dedup();
    let nbows = docs.iter().map(|d| to_nbow(d, table)).collect::<Result<Vec<_>>>()?;
    Ok(DemoReport {
        eta,
        source_words: nbows[1].tokens.clone(),
        to_a: demo_side("A", &nbows[1], &nbows[0], eta, schedule)?,
        to_c: demo_side("C", &nbows[1], &nbows[2], eta, schedule)?,
        oov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(id: &str, score: f64, label: bool) -> ScoredPair {
        ScoredPair {
            pair_id: id.into(),
            score,
            label,
        }
    }

    fn fixture() -> Vec<ScoredPair> {
        vec![sp("a", 0.1, true), sp("b", 0.2, true), sp("c", 0.3, false), sp("d", 0.4, true)]
    }

    #[test]
    fn four_pair_enumeration() {
        let curve = pr_curve(&fixture()).unwrap();
        let p = curve.iter().find(|p| (p.threshold - 0.25).abs() < 1e-12).unwrap();
        assert_eq!(p.precision, 1.0);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        let last = curve.last().unwrap();
        assert_eq!((last.precision, last.recall), (0.75, 1.0));
        // the sentinel below the minimum predicts nothing and is omitted
        assert_eq!(curve.len(), 4);
    }

    #[test]
    fn perfect_separation_and_single_pair() {
        let curve = pr_curve(&[sp("a", 0.1, true), sp("b", 0.2, true), sp("c", 0.9, false)]).unwrap();
        assert!(curve.iter().any(|p| p.precision == 1.0 && p.recall == 1.0));
        let one = pr_curve(&[sp("x", 0.5, true)]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].threshold > 0.5);
        assert_eq!((one[0].precision, one[0].recall), (1.0, 1.0));
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(pr_curve(&[sp("a", 0.1, false)]).is_err());
        assert!(pr_curve(&[]).is_err());
    }

    #[test]
    fn best_f1_and_dominance() {
        let curve = pr_curve(&fixture()).unwrap();
        let best = best_f1(&curve).unwrap();
        assert!((best.f1() - 2.0 * 0.75 / 1.75).abs() < 1e-12);
        let perfect = pr_curve(&[sp("a", 0.1, true), sp("b", 0.2, true), sp("c", 0.3, true), sp("d", 0.4, false)]).unwrap();
        assert!(dominates(&perfect, &curve));
        assert!(!dominates(&curve, &perfect));
    }

    #[test]
    fn csv_roundtrip() {
        let curve = pr_curve(&fixture()).unwrap();
        let mut buf = Vec::new();
        write_pr_csv(&mut buf, &curve).unwrap();
        assert_eq!(read_pr_csv(buf.as_slice()).unwrap(), curve);
    }

    #[test]
    fn pairs_loader() {
        let text = r#"{"concept_text": "a b", "project_text": "c", "label": 1}
{"id": "p7", "concept_text": "x", "project_text": "y z", "label": false}

{"concept_text": "q", "project_text": "r", "label": "0"}
"#;
        let pairs = read_pairs(text.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].pair_id, "pair1");
        assert!(pairs[0].label);
        assert_eq!(pairs[1].pair_id, "p7");
        assert!(!pairs[2].label);
        let err = read_pairs(r#"{"concept_text": "a", "label": 1}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(read_pairs(r#"{"concept_text": "a", "project_text": "b", "label": 3}"#.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn curve_is_bounded_and_recall_monotone(
            items in prop::collection::vec((0.0f64..10.0, any::<bool>()), 1..40)
        ) {
            let mut scored: Vec<ScoredPair> = items
                .iter()
                .enumerate()
                .map(|(k, (s, l))| sp(&k.to_string(), *s, *l))
                .collect();
            scored[0].label = true;
            let curve = pr_curve(&scored).unwrap();
            prop_assert!(!curve.is_empty());
            for p in &curve {
                prop_assert!((0.0..=1.0).contains(&p.precision));
                prop_assert!((0.0..=1.0).contains(&p.recall));
            }
            for w in curve.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].recall <= w[1].recall);
            }
            prop_assert_eq!(curve.last().unwrap().recall, 1.0);
        }

        #[test]
        fn improving_positives_never_lowers_the_curve(
            items in prop::collection::vec((0.0f64..10.0, any::<bool>()), 1..30),
            shrink in 0.0f64..1.0,
        ) {
            let mut scored: Vec<ScoredPair> = items
                .iter()
                .enumerate()
                .map(|(k, (s, l))| sp(&k.to_string(), *s, *l))
                .collect();
            scored[0].label = true;
            let better: Vec<ScoredPair> = scored
                .iter()
                .map(|p| if p.label { sp(&p.pair_id, p.score * shrink - 0.01, true) } else { p.clone() })
                .collect();
            let before = pr_curve(&scored).unwrap();
            let after = pr_curve(&better).unwrap();
            prop_assert!(dominates(&after, &before));
        }
    }
}
