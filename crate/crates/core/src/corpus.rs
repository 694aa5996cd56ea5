//! Word embeddings, text preprocessing and nBOW measures.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Token → dense vector lookup. All vectors share one dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    data: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            ..Default::default()
        }
    }

    /// Inserts `token`; returns `false` (and keeps the old vector) if the token
    /// is already present.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if token.is_empty() {
            return Err(Error::invalid("empty token"));
        }
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if self.index.contains_key(token) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.index.insert(token.to_owned(), self.tokens.len());
        self.tokens.push(token.to_owned());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of later duplicate lines that were ignored.
    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&k| &self.data[k * self.dimension..(k + 1) * self.dimension])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_ascii_whitespace();
    let (a, b) = (it.next()?, it.next()?);
    if it.next().is_some() {
        return None;
    }
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Reads `token v1 … vD` lines with an optional `V D` header line.
pub fn read_embeddings<R: BufRead>(reader: R, expected_dimension: Option<usize>) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    let mut header_dim = None;
    let mut values = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if table.is_none() && header_dim.is_none() && lineno == 1 {
            if let Some((_, d)) = parse_header(&line) {
                header_dim = Some(d);
                continue;
            }
        }
        let mut fields = line.split_ascii_whitespace();
        let token = fields.next().expect("line is not blank");
        values.clear();
        for f in fields {
            values.push(f.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad value `{f}`: {e}"),
            })?);
        }
        if values.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("token `{token}` has no vector"),
            });
        }
        let tab = table.get_or_insert_with(|| EmbeddingTable::new(header_dim.unwrap_or(values.len())));
        if values.len() != tab.dimension {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} values, found {}", tab.dimension, values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite vector component".into(),
            });
        }
        tab.insert(token, &values)?;
    }
    let table = table.ok_or_else(|| Error::Parse {
        line: 0,
        message: "embedding file contains no vectors".into(),
    })?;
    if let Some(d) = expected_dimension {
        if d != table.dimension {
            return Err(Error::Config(format!(
                "embedding dimension is {}, expected {d}",
                table.dimension
            )));
        }
    }
    if table.duplicates > 0 {
        log::warn!("{} duplicate embedding tokens ignored (first occurrence kept)", table.duplicates);
    }
    Ok(table)
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_dimension: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), expected_dimension)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub lowercase: bool,
    pub stopwords: HashSet<String>,
}

impl PreprocessOptions {
    pub fn new(lowercase: bool) -> Self {
        PreprocessOptions {
            lowercase,
            stopwords: HashSet::new(),
        }
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stopwords.extend(words.into_iter().map(Into::into));
        self
    }
}

/// Reads a stop-word file: one token per line, blank lines ignored.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Splits into maximal alphabetic runs, optionally lowercases, drops stop
/// words and counts.
pub fn preprocess(text: &str, options: &PreprocessOptions) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for run in text.split(|c: char| !c.is_alphabetic()).filter(|s| !s.is_empty()) {
        let token = if options.lowercase {
            run.to_lowercase()
        } else {
            run.to_owned()
        };
        if options.stopwords.contains(&token) {
            continue;
        }
        *counts.entry(token).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedDocument {
    pub id: String,
    pub label: Option<String>,
    pub token_counts: BTreeMap<String, u32>,
}

impl ProcessedDocument {
    pub fn from_text(id: impl Into<String>, label: Option<String>, text: &str, options: &PreprocessOptions) -> Self {
        ProcessedDocument {
            id: id.into(),
            label,
            token_counts: preprocess(text, options),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.token_counts.is_empty()
    }
}

/// nBOW measure together with the token behind each support point.
#[derive(Debug, Clone)]
pub struct Nbow {
    pub measure: DiscreteMeasure,
    pub tokens: Vec<String>,
    /// Distinct tokens dropped because the embedding has no vector for them.
    pub oov_dropped: usize,
}

/// Normalized bag of words: `μ_k = c_k / Σ c`, over in-vocabulary tokens.
pub fn to_nbow(doc: &ProcessedDocument, table: &EmbeddingTable) -> Result<Nbow> {
    let mut tokens = Vec::new();
    let mut counts = Vec::new();
    let mut flat = Vec::new();
    let mut oov = 0;
    for (tok, &c) in &doc.token_counts {
        match table.get(tok) {
            Some(v) if c > 0 => {
                tokens.push(tok.clone());
                counts.push(f64::from(c));
                flat.extend_from_slice(v);
            }
            Some(_) => {}
            None => oov += 1,
        }
    }
    if tokens.is_empty() {
        return Err(Error::DegenerateDocument { id: doc.id.clone() });
    }
    let total: f64 = counts.iter().sum();
    let weights = counts.into_iter().map(|c| c / total).collect();
    let points = Array2::from_shape_vec((tokens.len(), table.dimension()), flat)
        .expect("one embedding row per token");
    Ok(Nbow {
        measure: DiscreteMeasure::new(points, weights)?,
        tokens,
        oov_dropped: oov,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<ProcessedDocument>,
    label_set: BTreeSet<String>,
}

impl Corpus {
    pub fn new(documents: Vec<ProcessedDocument>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::invalid(format!("duplicate document id `{}`", d.id)));
            }
        }
        let label_set = documents.iter().filter_map(|d| d.label.clone()).collect();
        Ok(Corpus { documents, label_set })
    }

    pub fn documents(&self) -> &[ProcessedDocument] {
        &self.documents
    }

    pub fn label_set(&self) -> &BTreeSet<String> {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
struct JsonDoc {
    id: Option<serde_json::Value>,
    label: Option<serde_json::Value>,
    text: String,
}

fn json_scalar(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s),
        other => Some(other.to_string()),
    }
}

pub fn read_corpus<R: BufRead>(reader: R, format: CorpusFormat, options: &PreprocessOptions) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label, text) = match format {
            CorpusFormat::Jsonl => {
                let d: JsonDoc = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
                let id = d.id.and_then(json_scalar).unwrap_or_else(|| format!("line{lineno}"));
                (id, d.label.and_then(json_scalar), d.text)
            }
            CorpusFormat::Tsv => {
                let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "expected `label<TAB>text`".into(),
                })?;
                let label = (!label.is_empty()).then(|| label.to_owned());
                (format!("line{lineno}"), label, text.to_owned())
            }
        };
        docs.push(ProcessedDocument::from_text(id, label, &text, options));
    }
    Corpus::new(docs)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat, options: &PreprocessOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), format, options)
}

/// Small English stop-word list used by the built-in demo sentences.
pub const DEMO_STOPWORDS: &[&str] = &[
    "a", "an", "the", "i", "me", "my", "we", "our", "you", "your", "he", "she", "it", "its", "they",
    "them", "is", "am", "are", "was", "were", "be", "been", "feel", "feels", "felt", "so", "very",
    "and", "or", "but", "that", "this", "of", "in", "on", "at", "to", "for", "with", "after", "as",
    "by", "from", "what", "all", "just",
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(lines: &str) -> Result<EmbeddingTable> {
        read_embeddings(lines.as_bytes(), None)
    }

    #[test]
    fn embeddings_with_header() {
        let t = table("2 3\ncat 1 0 0\ndog 0 1 0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.get("dog").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn embeddings_dimension_mismatch_names_line() {
        match table("cat 1 0 0\ndog 1 0\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn embeddings_duplicates_keep_first() {
        let t = table("cat 1 0 0\ncat 9 9 9\n").unwrap();
        assert_eq!(t.get("cat").unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(t.duplicates_skipped(), 1);
    }

    #[test]
    fn embeddings_errors() {
        assert!(table("").is_err());
        assert!(table("\n\n").is_err());
        assert!(matches!(
            read_embeddings("cat 1 2\n".as_bytes(), Some(3)).unwrap_err(),
            Error::Config(_)
        ));
        assert!(table("cat 1 x\n").is_err());
        assert!(table("3 2\ncat 1 0 0\n").is_err());
    }

    #[test]
    fn preprocess_examples() {
        let opts = PreprocessOptions::new(true).with_stopwords(["i", "my"]);
        let got = preprocess("I lost my key, my key!", &opts);
        let want: BTreeMap<String, u32> = [("lost".to_string(), 1), ("key".to_string(), 2)].into();
        assert_eq!(got, want);
        assert!(preprocess("", &opts).is_empty());
        let got = preprocess("A a A", &PreprocessOptions::new(true));
        assert_eq!(got, [("a".to_string(), 3)].into());
        let got = preprocess("A a A", &PreprocessOptions::new(false));
        assert_eq!(got, [("A".to_string(), 2), ("a".to_string(), 1)].into());
    }

    fn doc(counts: &[(&str, u32)]) -> ProcessedDocument {
        ProcessedDocument {
            id: "d".into(),
            label: None,
            token_counts: counts.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn nbow_examples() {
        let t = table("a 1 0\nb 0 1\nc 1 1\n").unwrap();
        let n = to_nbow(&doc(&[("a", 2), ("b", 1), ("c", 1)]), &t).unwrap();
        assert_eq!(n.measure.weights(), &[0.5, 0.25, 0.25]);
        assert_eq!(n.oov_dropped, 0);

        let n = to_nbow(&doc(&[("a", 1), ("z", 3)]), &t).unwrap();
        assert_eq!(n.measure.weights(), &[1.0]);
        assert_eq!(n.oov_dropped, 1);
        assert_eq!(n.tokens, vec!["a".to_string()]);

        match to_nbow(&doc(&[("z", 5)]), &t).unwrap_err() {
            Error::DegenerateDocument { id } => assert_eq!(id, "d"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn corpus_jsonl_and_tsv() {
        let opts = PreprocessOptions::new(true);
        let c = read_corpus(
            "{\"id\":\"x\",\"label\":\"pos\",\"text\":\"happy day\"}\n\n{\"text\":\"sad\"}\n".as_bytes(),
            CorpusFormat::Jsonl,
            &opts,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.documents()[1].id, "line3");
        assert!(!c.is_labeled());

        let c = read_corpus("pos\thappy day\n".as_bytes(), CorpusFormat::Tsv, &opts).unwrap();
        assert_eq!(c.documents()[0].label.as_deref(), Some("pos"));
        assert_eq!(c.documents()[0].token_counts.len(), 2);

        match read_corpus("{\"id\":\"x\"}\n".as_bytes(), CorpusFormat::Jsonl, &opts).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
        let dup = "{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n";
        assert!(read_corpus(dup.as_bytes(), CorpusFormat::Jsonl, &opts).is_err());
        assert!(read_corpus("no tab here\n".as_bytes(), CorpusFormat::Tsv, &opts).is_err());
    }

    proptest! {
        #[test]
        fn preprocess_idempotent(text in "[a-zA-Z ,.!]{0,60}") {
            let opts = PreprocessOptions::new(true).with_stopwords(["the", "a"]);
            let once = preprocess(&text, &opts);
            let rendered: Vec<String> = once
                .iter()
                .flat_map(|(t, c)| std::iter::repeat_n(t.clone(), *c as usize))
                .collect();
            prop_assert_eq!(preprocess(&rendered.join(" "), &opts), once);
        }

        #[test]
        fn nbow_weights_normalized(counts in prop::collection::vec(1u32..50, 1..8)) {
            let mut t = EmbeddingTable::new(2);
            let mut d = doc(&[]);
            for (k, c) in counts.iter().enumerate() {
                let tok = format!("w{k}");
                t.insert(&tok, &[k as f64, 1.0]).unwrap();
                d.token_counts.insert(tok, *c);
            }
            let n = to_nbow(&d, &t).unwrap();
            let w = n.measure.weights();
            prop_assert!(w.iter().all(|x| *x > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn lookup_has_table_dimension(dim in 1usize..6, n in 1usize..5) {
            let mut text = String::new();
            for k in 0..n {
                text.push_str(&format!("t{k}"));
                for d in 0..dim {
                    text.push_str(&format!(" {}", k * d));
                }
                text.push('\n');
            }
            let t = table(&text).unwrap();
            for k in 0..n {
                prop_assert_eq!(t.get(&format!("t{k}")).unwrap().len(), dim);
            }
        }
    }
}
