//! Seeded synthetic geometries: the length-varying demo vocabulary, labeled
//! two-cluster corpora, topic-structured indexes and random measure pairs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, EmbeddingTable, PreprocessOptions, ProcessedDocument, DEMO_STOPWORDS};
use crate::eval::DocPair;
use crate::measures::DiscreteMeasure;
use crate::retrieval::DocumentIndex;
use crate::Result;

/// Euclidean distance of each demo word from "awful", the single word of B.
pub const DEMO_WORD_DISTANCES: [(&str, f64); 6] = [
    ("happy", 1.43),
    ("sad", 1.20),
    ("lost", 1.49),
    ("key", 1.50),
    ("evening", 1.56),
    ("restaurant", 1.75),
];

/// Sentences A, B, C of the length-varying example.
pub const DEMO_SENTENCES: [&str; 3] = [
    "I feel happy.",
    "I feel awful.",
    "Sad and lost my key in the evening at a restaurant.",
];

/// Length scale used with the synthetic demo geometry. At η = 1 every word
/// is so close relative to the cutoff that WFR keeps the WMD ordering.
pub const DEMO_ETA: f64 = 0.5;

/// "awful" at the origin and every other demo word on its own axis at its
/// listed distance, so all pairwise distances to "awful" are exact.
pub fn demo_embeddings() -> EmbeddingTable {
    let dim = DEMO_WORD_DISTANCES.len();
    let mut table = EmbeddingTable::new(dim);
    table.insert("awful", &vec![0.0; dim]).expect("dimension matches");
    for (axis, (word, d)) in DEMO_WORD_DISTANCES.iter().enumerate() {
        let mut v = vec![0.0; dim];
        v[axis] = *d;
        table.insert(word, &v).expect("dimension matches");
    }
    table
}

pub fn demo_options() -> PreprocessOptions {
    PreprocessOptions::new(true).with_stopwords(DEMO_STOPWORDS.iter().copied())
}

/// Alphabetic token for an integer; the tokenizer keeps letter runs only.
pub fn word_name(prefix: &str, mut k: usize) -> String {
    let mut tail = Vec::new();
    loop {
        tail.push(b'a' + (k % 26) as u8);
        k /= 26;
        if k == 0 {
            break;
        }
    }
    tail.reverse();
    format!("{prefix}{}", String::from_utf8(tail).expect("ascii"))
}

fn gaussian(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random point within `radius` of `center`.
fn in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let dir = gaussian(rng, center.len(), 1.0);
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let r = radius * rng.gen::<f64>().powf(1.0 / center.len() as f64);
    center.iter().zip(dir).map(|(c, d)| c + r * d / norm).collect()
}

/// Two labeled clusters, "alpha" and "beta", whose centers are `separation`
/// apart while every word lies within `radius` of its center.
#[derive(Debug, Clone)]
pub struct TwoClusterSpec {
    pub docs_per_class: usize,
    pub words_per_class: usize,
    pub doc_len: (usize, usize),
    pub dimension: usize,
    pub separation: f64,
    pub radius: f64,
}

impl Default for TwoClusterSpec {
    fn default() -> Self {
        TwoClusterSpec {
            docs_per_class: 20,
            words_per_class: 30,
            doc_len: (3, 8),
            dimension: 4,
            separation: 2.0,
            radius: 0.1,
        }
    }
}

pub const CLUSTER_LABELS: [&str; 2] = ["alpha", "beta"];

/// Embedding table plus raw document texts `(id, label, text)`.
pub fn two_cluster_texts(spec: &TwoClusterSpec, seed: u64) -> (EmbeddingTable, Vec<(String, String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(spec.dimension);
    let mut vocab: Vec<Vec<String>> = Vec::new();
    for (c, label) in CLUSTER_LABELS.iter().enumerate() {
        let mut center = vec![0.0; spec.dimension];
        center[0] = c as f64 * spec.separation;
        let words: Vec<String> = (0..spec.words_per_class).map(|k| word_name(label, k)).collect();
        for w in &words {
            table.insert(w, &in_ball(&mut rng, &center, spec.radius)).expect("dimension matches");
        }
        vocab.push(words);
    }
    let mut docs = Vec::new();
    for n in 0..spec.docs_per_class {
        for (c, label) in CLUSTER_LABELS.iter().enumerate() {
            let len = rng.gen_range(spec.doc_len.0..=spec.doc_len.1);
            let text: Vec<&str> = (0..len)
                .map(|_| vocab[c][rng.gen_range(0..vocab[c].len())].as_str())
                .collect();
            docs.push((format!("{label}{n:03}"), label.to_string(), text.join(" ")));
        }
    }
    (table, docs)
}

pub fn two_cluster_corpus(spec: &TwoClusterSpec, seed: u64) -> Result<(EmbeddingTable, Corpus)> {
    let (table, texts) = two_cluster_texts(spec, seed);
    let opts = PreprocessOptions::new(true);
    let docs = texts
        .into_iter()
        .map(|(id, label, text)| ProcessedDocument::from_text(id, Some(label), &text, &opts))
        .collect();
    Ok((table, Corpus::new(docs)?))
}

/// Topic-structured vocabulary: `topics` centers drawn with spread
/// `topic_spread`, each owning `words_per_topic` words within `word_spread`.
#[derive(Debug, Clone)]
pub struct TopicSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub dimension: usize,
    pub topic_spread: f64,
    pub word_spread: f64,
    /// Probability that a document word comes from a random other topic.
    pub noise: f64,
}

impl Default for TopicSpec {
    fn default() -> Self {
        TopicSpec {
            topics: 8,
            words_per_topic: 40,
            dimension: 10,
            topic_spread: 1.0,
            word_spread: 0.35,
            noise: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicModel {
    pub spec: TopicSpec,
    /// `words[t][w]` is the embedding of word `w` of topic `t`.
    pub words: Vec<Vec<Vec<f64>>>,
}

impl TopicModel {
    pub fn new(spec: TopicSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = (0..spec.topics)
            .map(|_| {
                let center = gaussian(&mut rng, spec.dimension, spec.topic_spread);
                (0..spec.words_per_topic)
                    .map(|_| {
                        let jitter = gaussian(&mut rng, spec.dimension, spec.word_spread);
                        center.iter().zip(jitter).map(|(c, j)| c + j).collect()
                    })
                    .collect()
            })
            .collect();
        TopicModel { spec, words }
    }

    /// nBOW measure of a document with `len` word draws from `topic`.
    pub fn document(&self, rng: &mut impl Rng, topic: usize, len: usize) -> DiscreteMeasure {
        let mut counts: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for _ in 0..len.max(1) {
            let t = if rng.gen::<f64>() < self.spec.noise {
                rng.gen_range(0..self.spec.topics)
            } else {
                topic
            };
            let w = rng.gen_range(0..self.spec.words_per_topic);
            *counts.entry((t, w)).or_default() += 1.0;
        }
        let total: f64 = counts.values().sum();
        let points = counts.keys().map(|&(t, w)| self.words[t][w].clone()).collect();
        let weights = counts.values().map(|c| c / total).collect();
        DiscreteMeasure::from_points(points, weights).expect("valid synthetic measure")
    }

    /// Labeled index of `n` documents with lengths drawn from `len_range`.
    pub fn index(&self, rng: &mut impl Rng, n: usize, len_range: (usize, usize)) -> DocumentIndex {
        let mut index = DocumentIndex::new(self.spec.dimension);
        for d in 0..n {
            let topic = d % self.spec.topics;
            let len = rng.gen_range(len_range.0..=len_range.1);
            index
                .push(format!("doc{d:04}"), Some(word_name("topic", topic)), self.document(rng, topic, len))
                .expect("dimension matches");
        }
        index
    }
}

/// Random nBOW-like measure: `n` Gaussian points of scale `spread`, weights
/// proportional to word counts in 1..=5.
pub fn random_nbow(rng: &mut impl Rng, n: usize, dimension: usize, spread: f64) -> DiscreteMeasure {
    let points = (0..n).map(|_| gaussian(rng, dimension, spread)).collect();
    let counts: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
    let total: f64 = counts.iter().sum();
    DiscreteMeasure::from_points(points, counts.iter().map(|c| c / total).collect()).expect("valid synthetic measure")
}

/// Random measure with arbitrary positive total mass.
pub fn random_measure(rng: &mut impl Rng, n: usize, dimension: usize, spread: f64, mass: (f64, f64)) -> DiscreteMeasure {
    let points = (0..n).map(|_| gaussian(rng, dimension, spread)).collect();
    let weights = (0..n).map(|_| rng.gen_range(mass.0..mass.1)).collect();
    DiscreteMeasure::from_points(points, weights).expect("valid synthetic measure")
}

/// Concept/project pairs built like the length-varying example at
/// [`DEMO_ETA`]. Positives pair a one-word concept with a five-word project
/// holding one close word and four distant details; negatives pair it with a
/// single word at a middling distance. WMD averages the details in and ranks
/// positives behind negatives, while WFR discounts them.
pub fn length_imbalanced_pairs(positives: usize, negatives: usize, seed: u64) -> (EmbeddingTable, Vec<DocPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6;
    let mut table = EmbeddingTable::new(dim);
    let mut next = 0usize;
    let mut add = |table: &mut EmbeddingTable, v: &[f64]| {
        let name = word_name("w", next);
        next += 1;
        table.insert(&name, v).expect("dimension matches");
        name
    };
    let mut pairs = Vec::new();
    for p in 0..positives + negatives {
        let positive = p < positives;
        let mut origin = vec![0.0; dim];
        origin[0] = 10.0 * p as f64;
        let concept = add(&mut table, &origin);
        let at = |axis: usize, d: f64| {
            let mut v = origin.clone();
            v[axis] += d;
            v
        };
        let project: Vec<String> = if positive {
            let mut words = vec![add(&mut table, &at(1, rng.gen_range(1.10..1.20)))];
            for axis in 2..6 {
                words.push(add(&mut table, &at(axis, rng.gen_range(1.55..1.80))));
            }
            words
        } else {
            vec![add(&mut table, &at(1, rng.gen_range(1.42..1.48)))]
        };
        pairs.push(DocPair {
            pair_id: format!("pair{p:03}"),
            concept_text: concept,
            project_text: project.join(" "),
            label: positive,
        });
    }
    (table, pairs)
}
