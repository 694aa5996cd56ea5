//! Top-k smallest WFR distance queries with dual-bound pruning, KNN
//! classification and hyper-parameter cross-validation.
//!
//! The pruned query advances every surviving candidate one schedule stage at
//! a time. After each stage the `k` candidates with the smallest current
//! primal value are solved to the end of the schedule; the largest of their
//! final primals bounds the k-th smallest distance from above. Any candidate
//! whose certified dual lower bound already exceeds that threshold is
//! dropped. The solver is deterministic, so a candidate reaches exactly the
//! same final value whether it was converged early or stage by stage, and the
//! pruned hit list equals the exhaustive one.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::balanced_sinkhorn;
use crate::corpus::{to_nbow, Corpus, EmbeddingTable};
use crate::error::{Error, Result};
use crate::measures::{check_eta, euclidean_cost, wfr_cost, CostMatrix, DiscreteMeasure};
use crate::solver::{certified_bound, normalized_distance, solve_with_cost, solve_wfr, SolverSchedule, StagedSolve};

/// Candidates are pruned only when their bound exceeds `threshold · (1 + PRUNE_SLACK)`.
pub const PRUNE_SLACK: f64 = 1e-9;

/// Labeled collection of nBOW measures.
#[derive(Debug, Clone, Default)]
pub struct DocumentIndex {
    measures: Vec<DiscreteMeasure>,
    labels: Vec<Option<String>>,
    ids: Vec<String>,
    dimension: usize,
}

impl DocumentIndex {
    pub fn new(dimension: usize) -> Self {
        DocumentIndex {
            dimension,
            ..Default::default()
        }
    }

    pub fn push(&mut self, id: impl Into<String>, label: Option<String>, measure: DiscreteMeasure) -> Result<()> {
        if measure.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: measure.dim(),
            });
        }
        self.ids.push(id.into());
        self.labels.push(label);
        self.measures.push(measure);
        Ok(())
    }

    /// Builds an index from a corpus. Documents with no in-vocabulary token
    /// are skipped; their ids are returned.
    pub fn from_corpus(corpus: &Corpus, table: &EmbeddingTable) -> Result<(Self, Vec<String>)> {
        let mut index = DocumentIndex::new(table.dimension());
        let mut skipped = Vec::new();
        for doc in corpus.documents() {
            match to_nbow(doc, table) {
                Ok(n) => index.push(doc.id.clone(), doc.label.clone(), n.measure)?,
                Err(Error::DegenerateDocument { id }) => {
                    log::warn!("skipping degenerate document `{id}`");
                    skipped.push(id);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((index, skipped))
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn label_of(&self, id: &str) -> Option<&str> {
        let k = self.ids.iter().position(|x| x == id)?;
        self.labels[k].as_deref()
    }

    /// Keeps the documents at the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        DocumentIndex {
            measures: positions.iter().map(|&k| self.measures[k].clone()).collect(),
            labels: positions.iter().map(|&k| self.labels[k].clone()).collect(),
            ids: positions.iter().map(|&k| self.ids[k].clone()).collect(),
            dimension: self.dimension,
        }
    }
}

const INDEX_MAGIC: &[u8; 8] = b"WFRIDX\0\0";
const INDEX_VERSION: u32 = 1;

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let n = read_u64(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

impl DocumentIndex {
    /// Binary cache layout (all integers u64 little-endian unless noted):
    ///
    /// ```text
    /// magic "WFRIDX\0\0" | version u32 | dimension | documents
    /// per document: id (len + utf8) | label flag u8 [+ len + utf8]
    ///               | points n | n·dim f64 coordinates | n f64 weights
    /// ```
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.dimension as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for ((id, label), m) in self.ids.iter().zip(&self.labels).zip(&self.measures) {
            write_str(w, id)?;
            match label {
                Some(l) => {
                    w.write_all(&[1])?;
                    write_str(w, l)?;
                }
                None => w.write_all(&[0])?,
            }
            w.write_all(&(m.len() as u64).to_le_bytes())?;
            for x in m.points().iter() {
                w.write_all(&x.to_le_bytes())?;
            }
            for x in m.weights() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::invalid(format!("corrupt index cache: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::invalid("not an index cache file"));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v).map_err(bad)?;
        let version = u32::from_le_bytes(v);
        if version != INDEX_VERSION {
            return Err(Error::invalid(format!("unsupported index cache version {version}")));
        }
        let dimension = read_u64(r).map_err(bad)? as usize;
        let count = read_u64(r).map_err(bad)? as usize;
        let mut index = DocumentIndex::new(dimension);
        for _ in 0..count {
            let id = read_str(r).map_err(bad)?;
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag).map_err(bad)?;
            let label = match flag[0] {
                0 => None,
                1 => Some(read_str(r).map_err(bad)?),
                f => return Err(Error::invalid(format!("corrupt index cache: label flag {f}"))),
            };
            let n = read_u64(r).map_err(bad)? as usize;
            let coords = (0..n * dimension).map(|_| read_f64(r)).collect::<std::io::Result<Vec<_>>>().map_err(bad)?;
            let weights = (0..n).map(|_| read_f64(r)).collect::<std::io::Result<Vec<_>>>().map_err(bad)?;
            let points = ndarray::Array2::from_shape_vec((n, dimension), coords)
                .map_err(|e| Error::invalid(format!("corrupt index cache: {e}")))?;
            index.push(id, label, DiscreteMeasure::new(points, weights)?)?;
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    /// Fraction of the index still alive after each stage.
    pub survivors_after_stage: Vec<f64>,
    /// Candidates whose whole schedule was run.
    pub full_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    pub prune_stats: PruneStats,
}

fn check_query(query: &DiscreteMeasure, index: &DocumentIndex, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::invalid("index is empty"));
    }
    if query.dim() != index.dimension() {
        return Err(Error::DimensionMismatch {
            expected: index.dimension(),
            found: query.dim(),
        });
    }
    Ok(())
}

fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
}

struct Candidate<'a> {
    pos: usize,
    nu: &'a [f64],
    cost: CostMatrix,
    solve: StagedSolve,
    /// Primal value at the end of the schedule, once known.
    final_primal: Option<f64>,
    /// Latest primal (final if known).
    primal: f64,
    /// Certified lower bound on the final primal.
    bound: f64,
}

impl Candidate<'_> {
    fn advance(&mut self, mu: &[f64], schedule: &SolverSchedule) -> Result<()> {
        if self.final_primal.is_some() {
            return Ok(());
        }
        let rec = self.solve.advance(mu, self.nu, &self.cost, schedule)?;
        self.primal = rec.primal;
        let pot = self.solve.potentials().expect("stage ran");
        self.bound = certified_bound(pot, &self.cost, mu, self.nu);
        if self.solve.stages_done() == schedule.len() {
            self.final_primal = Some(self.primal);
            self.bound = self.primal;
        }
        Ok(())
    }

    fn converge(&mut self, mu: &[f64], schedule: &SolverSchedule) -> Result<f64> {
        if let Some(p) = self.final_primal {
            return Ok(p);
        }
        let mut solve = self.solve.clone();
        while solve.stages_done() < schedule.len() {
            solve.advance(mu, self.nu, &self.cost, schedule)?;
        }
        let p = solve.last().expect("stage ran").primal;
        self.final_primal = Some(p);
        self.primal = p;
        self.bound = p;
        Ok(p)
    }
}

/// k documents with the smallest WFR distance to `query`, ties broken by id.
///
/// With `exhaustive` every distance is fully solved; otherwise candidates are
/// pruned with dual lower bounds between schedule stages. Both modes return
/// identical hits.
pub fn topk_query(
    query: &DiscreteMeasure,
    index: &DocumentIndex,
    k: usize,
    eta: f64,
    schedule: &SolverSchedule,
    exhaustive: bool,
) -> Result<QueryResult> {
    check_query(query, index, k)?;
    check_eta(eta)?;
    let n = index.len();
    let k = k.min(n);
    if exhaustive {
        let mut hits = index
            .measures()
            .par_iter()
            .zip(index.ids().par_iter())
            .map(|(m, id)| {
                let cost = wfr_cost(query, m, eta)?;
                let res = solve_with_cost(query, m, &cost, eta, schedule)?;
                Ok(Hit {
                    id: id.clone(),
                    distance: res.distance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_hits(&mut hits);
        hits.truncate(k);
        return Ok(QueryResult {
            hits,
            prune_stats: PruneStats {
                survivors_after_stage: vec![1.0; schedule.len()],
                full_solves: n,
            },
        });
    }

    let mu = query.weights();
    let mut alive: Vec<Candidate> = index
        .measures()
        .par_iter()
        .enumerate()
        .map(|(pos, m)| {
            Ok(Candidate {
                pos,
                nu: m.weights(),
                cost: wfr_cost(query, m, eta)?,
                solve: StagedSolve::new(),
                final_primal: None,
                primal: f64::INFINITY,
                bound: f64::NEG_INFINITY,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut survivors_after_stage = Vec::with_capacity(schedule.len());
    let mut pruned_converged = 0;
    for _stage in 0..schedule.len() {
        alive.par_iter_mut().try_for_each(|c| c.advance(mu, schedule))?;

        // rank by current primal, ties by id, and converge the leading k
        let mut order: Vec<usize> = (0..alive.len()).collect();
        order.sort_by(|&a, &b| {
            alive[a]
                .primal
                .total_cmp(&alive[b].primal)
                .then_with(|| index.ids()[alive[a].pos].cmp(&index.ids()[alive[b].pos]))
        });
        let leaders: Vec<usize> = order.into_iter().take(k).collect();
        {
            let mut refs: Vec<&mut Candidate> = alive
                .iter_mut()
                .enumerate()
                .filter(|(slot, _)| leaders.contains(slot))
                .map(|(_, c)| c)
                .collect();
            refs.par_iter_mut()
                .try_for_each(|c| c.converge(mu, schedule).map(|_| ()))?;
        }
        let threshold = leaders
            .iter()
            .map(|&s| alive[s].final_primal.expect("leader converged"))
            .fold(f64::NEG_INFINITY, f64::max);
        let cutoff = threshold + PRUNE_SLACK * threshold.abs().max(1e-300);
        pruned_converged += alive
            .iter()
            .filter(|c| c.bound > cutoff && c.final_primal.is_some())
            .count();
        alive.retain(|c| c.bound <= cutoff);
        survivors_after_stage.push(alive.len() as f64 / n as f64);
    }

    let full_solves = pruned_converged + alive.len();
    let mut hits: Vec<Hit> = alive
        .iter()
        .map(|c| Hit {
            id: index.ids()[c.pos].clone(),
            distance: normalized_distance(c.final_primal.expect("schedule finished"), eta),
        })
        .collect();
    sort_hits(&mut hits);
    hits.truncate(k);
    Ok(QueryResult {
        hits,
        prune_stats: PruneStats {
            survivors_after_stage,
            full_solves,
        },
    })
}

/// Scoring rule for pairs and rankings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    Wfr { eta: f64 },
    /// Balanced entropic transport with Euclidean ground cost.
    Wmd,
    /// Balanced entropic transport with the WFR cone cost.
    BalancedWfrCost { eta: f64 },
}

impl Metric {
    pub fn parse(name: &str, eta: f64) -> Result<Self> {
        match name {
            "wfr" => Ok(Metric::Wfr { eta }),
            "wmd" => Ok(Metric::Wmd),
            "balanced_wfr_cost" => Ok(Metric::BalancedWfrCost { eta }),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected wfr, wmd or balanced_wfr_cost)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Wfr { .. } => "wfr",
            Metric::Wmd => "wmd",
            Metric::BalancedWfrCost { .. } => "balanced_wfr_cost",
        }
    }

    /// WFR: normalized distance. Balanced metrics: the transport cost `Σ C R`.
    pub fn distance(&self, a: &DiscreteMeasure, b: &DiscreteMeasure, schedule: &SolverSchedule) -> Result<f64> {
        match *self {
            Metric::Wfr { eta } => Ok(solve_wfr(a, b, eta, schedule)?.distance),
            Metric::Wmd => Ok(balanced_sinkhorn(a, b, &euclidean_cost(a, b)?, schedule)?.primal),
            Metric::BalancedWfrCost { eta } => Ok(balanced_sinkhorn(a, b, &wfr_cost(a, b, eta)?, schedule)?.primal),
        }
    }
}

/// Top-k under any metric. WFR goes through [`topk_query`]; the balanced
/// baselines are ranked exhaustively and report no pruning.
pub fn topk_by_metric(
    query: &DiscreteMeasure,
    index: &DocumentIndex,
    k: usize,
    metric: Metric,
    schedule: &SolverSchedule,
    exhaustive: bool,
) -> Result<QueryResult> {
    if let Metric::Wfr { eta } = metric {
        return topk_query(query, index, k, eta, schedule, exhaustive);
    }
    check_query(query, index, k)?;
    let mut hits = index
        .measures()
        .par_iter()
        .zip(index.ids().par_iter())
        .map(|(m, id)| {
            Ok(Hit {
                id: id.clone(),
                distance: metric.distance(query, m, schedule)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_hits(&mut hits);
    hits.truncate(k);
    Ok(QueryResult {
        hits,
        prune_stats: PruneStats {
            survivors_after_stage: vec![1.0; schedule.len()],
            full_solves: index.len(),
        },
    })
}

/// Majority vote; ties go to the smaller summed distance, then the
/// lexicographically smaller label.
pub fn vote<'a>(neighbors: impl IntoIterator<Item = (&'a str, f64)>) -> Option<String> {
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (label, d) in neighbors {
        let e = tally.entry(label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d;
    }
    tally
        .into_iter()
        .min_by(|(la, (ca, sa)), (lb, (cb, sb))| cb.cmp(ca).then(sa.total_cmp(sb)).then(la.cmp(lb)))
        .map(|(l, _)| l.to_owned())
}

fn labeled_neighbors<'a>(index: &'a DocumentIndex, hits: &'a [Hit]) -> Result<Vec<(&'a str, f64)>> {
    hits.iter()
        .map(|h| {
            index
                .label_of(&h.id)
                .map(|l| (l, h.distance))
                .ok_or_else(|| Error::invalid(format!("indexed document `{}` has no label", h.id)))
        })
        .collect()
}

/// Label of the query by majority vote over its k nearest documents.
pub fn knn_classify(
    query: &DiscreteMeasure,
    index: &DocumentIndex,
    k: usize,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<(String, QueryResult)> {
    let res = topk_query(query, index, k, eta, schedule, false)?;
    let label = vote(labeled_neighbors(index, &res.hits)?).expect("at least one hit");
    Ok((label, res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub eta: f64,
    pub fold_errors: Vec<f64>,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub best_k: usize,
    pub best_eta: f64,
    pub grid: Vec<GridPoint>,
    /// False when some class had fewer members than folds and assignment
    /// fell back to plain shuffling.
    pub stratified: bool,
    pub skipped_documents: Vec<String>,
}

pub fn default_k_grid() -> Vec<usize> {
    (1..=19).collect()
}

pub fn default_eta_grid() -> Vec<f64> {
    vec![1.0, 0.5, 1.0 / 3.0, 0.25]
}

/// Seeded fold assignment: per-class shuffles dealt round-robin, or a plain
/// shuffle when some class is smaller than `folds`.
pub fn assign_folds(labels: &[&str], folds: usize, seed: u64) -> (Vec<usize>, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(k);
    }
    let stratified = groups.values().all(|g| g.len() >= folds);
    let mut fold = vec![0; labels.len()];
    if stratified {
        let mut next = 0;
        for members in groups.values_mut() {
            members.shuffle(&mut rng);
            for &m in members.iter() {
                fold[m] = next % folds;
                next += 1;
            }
        }
    } else {
        log::warn!("a class has fewer than {folds} members; using unstratified folds");
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        for (r, m) in all.into_iter().enumerate() {
            fold[m] = r % folds;
        }
    }
    (fold, stratified)
}

/// Grid search over `(k, η)` by `folds`-fold cross-validated KNN error.
///
/// Distances are solved exhaustively once per `(η, fold)` and reused for
/// every k; since pruning is exact this matches what `knn_classify` would
/// return. Ties in mean error prefer smaller k, then larger η.
pub fn cross_validate(
    corpus: &Corpus,
    table: &EmbeddingTable,
    k_grid: &[usize],
    eta_grid: &[f64],
    folds: usize,
    seed: u64,
    schedule: &SolverSchedule,
) -> Result<CrossValidation> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if k_grid.is_empty() || eta_grid.is_empty() || k_grid.contains(&0) {
        return Err(Error::Config("k and eta grids must be non-empty with k >= 1".into()));
    }
    for &eta in eta_grid {
        check_eta(eta)?;
    }
    if !corpus.is_labeled() {
        return Err(Error::invalid("cross-validation needs a fully labeled corpus"));
    }
    let (index, skipped) = DocumentIndex::from_corpus(corpus, table)?;
    if index.len() < folds {
        return Err(Error::invalid(format!(
            "{} usable documents cannot fill {folds} folds",
            index.len()
        )));
    }
    let labels: Vec<&str> = index.labels().iter().map(|l| l.as_deref().expect("labeled")).collect();
    let (fold_of, stratified) = assign_folds(&labels, folds, seed);

    let mut grid = Vec::with_capacity(k_grid.len() * eta_grid.len());
    for &eta in eta_grid {
        // errors[k_slot][fold]
        let mut errors = vec![vec![0.0; folds]; k_grid.len()];
        for f in 0..folds {
            let train: Vec<usize> = (0..index.len()).filter(|&d| fold_of[d] != f).collect();
            let valid: Vec<usize> = (0..index.len()).filter(|&d| fold_of[d] == f).collect();
            let wrong_per_query: Vec<Vec<bool>> = valid
                .par_iter()
                .map(|&q| {
                    let query = &index.measures()[q];
                    let mut hits = train
                        .iter()
                        .map(|&t| {
                            let m = &index.measures()[t];
                            let cost = wfr_cost(query, m, eta)?;
                            let res = solve_with_cost(query, m, &cost, eta, schedule)?;
                            Ok((index.ids()[t].as_str(), labels[t], res.distance))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    hits.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)));
                    Ok(k_grid
                        .iter()
                        .map(|&k| {
                            let predicted = vote(hits.iter().take(k).map(|h| (h.1, h.2)));
                            predicted.as_deref() != Some(labels[q])
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            for (slot, row) in errors.iter_mut().enumerate() {
                let wrong = wrong_per_query.iter().filter(|w| w[slot]).count();
                row[f] = wrong as f64 / valid.len().max(1) as f64;
            }
        }
        for (slot, &k) in k_grid.iter().enumerate() {
            let fold_errors = errors[slot].clone();
            let mean_error = fold_errors.iter().sum::<f64>() / folds as f64;
            grid.push(GridPoint {
                k,
                eta,
                fold_errors,
                mean_error,
            });
        }
    }
    let best = grid
        .iter()
        .min_by(|a, b| {
            a.mean_error
                .total_cmp(&b.mean_error)
                .then(a.k.cmp(&b.k))
                .then(b.eta.total_cmp(&a.eta))
        })
        .expect("grid is non-empty");
    Ok(CrossValidation {
        best_k: best.k,
        best_eta: best.eta,
        stratified,
        skipped_documents: skipped,
        grid,
    })
}
