//! Entropy-regularized WFR solver.
//!
//! The primal problem is
//!
//! ```text
//! J(R) = Σ C_ij R_ij + KL(R 1 ‖ μ) + KL(Rᵀ 1 ‖ ν),   R ≥ 0
//! ```
//!
//! with the generalized KL divergence, and its dual objective is
//! `D(φ, ψ) = Σ (1 − e^{−φ_i}) μ_i + Σ (1 − e^{−ψ_j}) ν_j`. Each stage runs the
//! unbalanced Sinkhorn scaling on the stabilized kernel
//! `R_ij = exp((φ_i + ψ_j − C_ij) / ε)`, absorbing the scalings into the
//! potentials whenever they drift too far. Stages with decreasing ε are
//! chained by warm-starting the potentials.
//!
//! The minimum `J*` relates to the WFR distance by `WFR² = 2η² J*`, so the
//! reported distance is `η √(2 J*)`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{to_nbow, EmbeddingTable, ProcessedDocument};
use crate::error::{Error, Result};
use crate::measures::{check_eta, kl_unchecked, wfr_cost, CostMatrix, DiscreteMeasure};

/// Scalings are folded into the potentials once `|log a|` or `|log b|` exceeds this.
pub const ABSORB_LOG_THRESHOLD: f64 = 50.0;

/// Floor applied to kernel row/column sums before taking logarithms.
const SUM_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DualPotentials {
            phi: vec![0.0; rows],
            psi: vec![0.0; cols],
        }
    }

    fn max_abs_diff(&self, other: &DualPotentials) -> f64 {
        self.phi
            .iter()
            .zip(&other.phi)
            .chain(self.psi.iter().zip(&other.psi))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Nonnegative `I × J` transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan(Array2<f64>);

impl TransportPlan {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if let Some(v) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("plan entry {v} is not finite and nonnegative")));
        }
        Ok(TransportPlan(entries.as_standard_layout().into_owned()))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TransportPlan(Array2::zeros((rows, cols)))
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.0.columns().into_iter().map(|c| c.sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.0.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epsilon: f64,
    pub iterations: usize,
}

/// Ordered ε-continuation: strictly decreasing ε, positive iteration counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSchedule {
    stages: Vec<Stage>,
}

impl SolverSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("schedule needs at least one stage".into()));
        }
        for (m, s) in stages.iter().enumerate() {
            if !(s.epsilon.is_finite() && s.epsilon > 0.0) {
                return Err(Error::Config(format!("stage {}: epsilon must be positive", m + 1)));
            }
            if s.iterations == 0 {
                return Err(Error::Config(format!("stage {}: iterations must be positive", m + 1)));
            }
        }
        if stages.windows(2).any(|w| w[1].epsilon >= w[0].epsilon) {
            return Err(Error::Config("schedule epsilons must be strictly decreasing".into()));
        }
        Ok(SolverSchedule { stages })
    }

    /// `ε_m = e^{−m−1}`, `n_m = 32 m` for `m = 1..=count`.
    pub fn exponential(count: usize) -> Self {
        let stages = (1..=count)
            .map(|m| Stage {
                epsilon: (-(m as f64) - 1.0).exp(),
                iterations: 32 * m,
            })
            .collect();
        SolverSchedule { stages }
    }

    /// The exponential schedule continued past five stages, with at least
    /// `ceil(iters_per_inv_eps / ε)` iterations per stage.
    ///
    /// The unbalanced scaling contracts by roughly `1/(1+ε)` per half-step,
    /// so reaching the fixed point at small ε needs `O(1/ε)` iterations.
    /// Used where the converged (ε → 0) solution is checked against closed
    /// forms.
    pub fn high_precision(count: usize, iters_per_inv_eps: f64) -> Self {
        let mut schedule = Self::exponential(count);
        for s in &mut schedule.stages {
            let needed = (iters_per_inv_eps / s.epsilon).ceil() as usize;
            s.iterations = s.iterations.max(needed);
        }
        schedule
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn final_epsilon(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.epsilon)
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

impl Default for SolverSchedule {
    fn default() -> Self {
        Self::exponential(5)
    }
}

/// Parses `"eps:iters,eps:iters,..."`.
impl FromStr for SolverSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|part| {
                let (eps, iters) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("stage `{part}` is not eps:iters")))?;
                let epsilon = eps
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad epsilon `{eps}`: {e}")))?;
                let iterations = iters
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("bad iteration count `{iters}`: {e}")))?;
                Ok(Stage { epsilon, iterations })
            })
            .collect::<Result<Vec<_>>>()?;
        SolverSchedule::new(stages)
    }
}

impl fmt::Display for SolverSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.stages.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{:e}:{}", s.epsilon, s.iterations)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// 1-based stage index.
    pub stage: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub distance: f64,
    pub stage_trace: Vec<StageRecord>,
}

impl SolveResult {
    /// `gap / max(|primal|, 1e-12)`.
    pub fn relative_gap(&self) -> f64 {
        self.gap / self.primal.abs().max(1e-12)
    }
}

/// `η √(2 max(J, 0))`.
pub fn normalized_distance(primal: f64, eta: f64) -> f64 {
    eta * (2.0 * primal.max(0.0)).sqrt()
}

fn check_problem(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> Result<()> {
    if cost.rows() != mu.len() || cost.cols() != nu.len() {
        return Err(Error::invalid(format!(
            "cost matrix is {}x{} but measures have {} and {} points",
            cost.rows(),
            cost.cols(),
            mu.len(),
            nu.len()
        )));
    }
    let (m, n): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::invalid("measures must have positive total mass"));
    }
    Ok(())
}

fn fill_kernel(
    kernel: &mut [f64],
    cost: &[f64],
    pot: &DualPotentials,
    mu: &[f64],
    nu: &[f64],
    eps: f64,
) {
    let cols = nu.len();
    for (i, row) in kernel.chunks_exact_mut(cols).enumerate() {
        let crow = &cost[i * cols..(i + 1) * cols];
        if mu[i] == 0.0 {
            row.fill(0.0);
            continue;
        }
        let phi = pot.phi[i];
        for j in 0..cols {
            row[j] = if nu[j] == 0.0 {
                0.0
            } else {
                ((phi + pot.psi[j] - crow[j]) / eps).exp()
            };
        }
    }
}

/// Runs `iterations` stabilized scaling updates at fixed `eps`; returns the
/// absorbed plan and potentials. `stage` is only used for error reporting.
pub(crate) fn run_stage(
    mu: &[f64],
    nu: &[f64],
    cost: &CostMatrix,
    eps: f64,
    iterations: usize,
    warm: Option<&DualPotentials>,
    stage: usize,
) -> Result<(TransportPlan, DualPotentials)> {
    check_problem(mu, nu, cost)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
    }
    if iterations == 0 {
        return Err(Error::Config("iterations must be positive".into()));
    }
    let (rows, cols) = (mu.len(), nu.len());
    let mut pot = match warm {
        Some(w) if w.phi.len() == rows && w.psi.len() == cols => w.clone(),
        Some(w) => {
            return Err(Error::invalid(format!(
                "warm-start potentials have lengths {}/{}, expected {rows}/{cols}",
                w.phi.len(),
                w.psi.len()
            )))
        }
        None => DualPotentials::zeros(rows, cols),
    };
    let c = cost.as_slice();
    let ln_mu: Vec<f64> = mu.iter().map(|w| w.ln()).collect();
    let ln_nu: Vec<f64> = nu.iter().map(|w| w.ln()).collect();
    let power = 1.0 / (1.0 + eps);

    let mut kernel = vec![0.0; rows * cols];
    fill_kernel(&mut kernel, c, &pot, mu, nu, eps);
    let mut log_a = vec![0.0; rows];
    let mut a = vec![0.0; rows];
    let mut log_b = vec![0.0; cols];
    let mut b = vec![1.0; cols];
    let mut col_acc = vec![0.0; cols];

    for k in 1..=iterations {
        let mut drift: f64 = 0.0;
        for (i, row) in kernel.chunks_exact(cols).enumerate() {
            if mu[i] == 0.0 {
                log_a[i] = 0.0;
                a[i] = 0.0;
                continue;
            }
            let s: f64 = row.iter().zip(&b).map(|(r, bj)| r * bj).sum();
            let la = (ln_mu[i] - pot.phi[i] - s.max(SUM_FLOOR).ln()) * power;
            log_a[i] = la;
            a[i] = la.exp();
            drift = drift.max(la.abs());
        }
        col_acc.fill(0.0);
        for (row, &ai) in kernel.chunks_exact(cols).zip(&a) {
            if ai == 0.0 {
                continue;
            }
            for (acc, r) in col_acc.iter_mut().zip(row) {
                *acc += r * ai;
            }
        }
        for j in 0..cols {
            if nu[j] == 0.0 {
                log_b[j] = 0.0;
                b[j] = 0.0;
                continue;
            }
            let lb = (ln_nu[j] - pot.psi[j] - col_acc[j].max(SUM_FLOOR).ln()) * power;
            log_b[j] = lb;
            b[j] = lb.exp();
            drift = drift.max(lb.abs());
        }
        if drift > ABSORB_LOG_THRESHOLD || k == iterations {
            for (p, la) in pot.phi.iter_mut().zip(&log_a) {
                *p += eps * la;
            }
            for (p, lb) in pot.psi.iter_mut().zip(&log_b) {
                *p += eps * lb;
            }
            if let Some(bad) = pot.phi.iter().chain(&pot.psi).find(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    stage,
                    message: format!("potential became {bad} at iteration {k}"),
                });
            }
            fill_kernel(&mut kernel, c, &pot, mu, nu, eps);
            for j in 0..cols {
                b[j] = if nu[j] == 0.0 { 0.0 } else { 1.0 };
            }
        }
    }

    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            stage,
            message: "transport plan overflowed".into(),
        });
    }
    let plan = Array2::from_shape_vec((rows, cols), kernel).expect("kernel has I*J entries");
    Ok((TransportPlan(plan), pot))
}

/// One WFR Sinkhorn stage at fixed ε, optionally warm-started.
pub fn sinkhorn_stage(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
    epsilon: f64,
    iterations: usize,
    warm: Option<&DualPotentials>,
) -> Result<(TransportPlan, DualPotentials)> {
    run_stage(mu.weights(), nu.weights(), cost, epsilon, iterations, warm, 1)
}

pub(crate) fn plan_objective(plan: &Array2<f64>, cost: &CostMatrix, mu: &[f64], nu: &[f64]) -> Result<f64> {
    if plan.dim() != (mu.len(), nu.len()) || plan.dim() != (cost.rows(), cost.cols()) {
        return Err(Error::invalid("plan, cost and measure sizes disagree"));
    }
    let mut transport = 0.0;
    for (r, c) in plan.iter().zip(cost.values().iter()) {
        if *r == 0.0 {
            continue;
        }
        if c.is_infinite() {
            return Err(Error::invalid("plan moves mass across an infinite-cost pair"));
        }
        transport += r * c;
    }
    let rows: Vec<f64> = plan.rows().into_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = plan.columns().into_iter().map(|c| c.sum()).collect();
    Ok(transport + kl_unchecked(&rows, mu) + kl_unchecked(&cols, nu))
}

/// `J(R) = Σ C R + KL(R1 ‖ μ) + KL(Rᵀ1 ‖ ν)`, with `0 · ∞ = 0`.
pub fn primal_objective(
    plan: &TransportPlan,
    cost: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    plan_objective(&plan.0, cost, mu.weights(), nu.weights())
}

pub(crate) fn dual_value(pot: &DualPotentials, mu: &[f64], nu: &[f64]) -> f64 {
    fn side(p: &[f64], w: &[f64]) -> f64 {
        p.iter()
            .zip(w)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, w)| -(-p).exp_m1() * w)
            .sum()
    }
    side(&pot.phi, mu) + side(&pot.psi, nu)
}

/// `D(φ, ψ) = Σ (1 − e^{−φ_i}) μ_i + Σ (1 − e^{−ψ_j}) ν_j`.
pub fn dual_objective(potentials: &DualPotentials, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if potentials.phi.len() != mu.len() || potentials.psi.len() != nu.len() {
        return Err(Error::invalid("potential lengths do not match the measures"));
    }
    Ok(dual_value(potentials, mu.weights(), nu.weights()))
}

/// Dual objective after shifting `φ` down just enough that
/// `φ_i + ψ_j ≤ C_ij` holds on the support; by weak duality this is a
/// guaranteed lower bound on the unregularized optimum.
pub(crate) fn certified_bound(pot: &DualPotentials, cost: &CostMatrix, mu: &[f64], nu: &[f64]) -> f64 {
    let c = cost.as_slice();
    let cols = nu.len();
    let mut phi = pot.phi.clone();
    for (i, p) in phi.iter_mut().enumerate() {
        if mu[i] == 0.0 {
            continue;
        }
        let row = &c[i * cols..(i + 1) * cols];
        let violation = row
            .iter()
            .zip(&pot.psi)
            .zip(nu)
            .filter(|((_, _), w)| **w > 0.0)
            .map(|((cij, psi), _)| *p + psi - cij)
            .fold(0.0, f64::max);
        *p -= violation;
    }
    dual_value(
        &DualPotentials {
            phi,
            psi: pot.psi.clone(),
        },
        mu,
        nu,
    )
}

/// Certified dual lower bound for `inf J` from arbitrary potentials.
pub fn dual_lower_bound(
    potentials: &DualPotentials,
    cost: &CostMatrix,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    check_problem(mu.weights(), nu.weights(), cost)?;
    if potentials.phi.len() != mu.len() || potentials.psi.len() != nu.len() {
        return Err(Error::invalid("potential lengths do not match the measures"));
    }
    Ok(certified_bound(potentials, cost, mu.weights(), nu.weights()))
}

/// Incremental solve: advances one schedule stage at a time so that callers
/// (the pruned top-k query) can inspect bounds between stages. Running all
/// stages is exactly what [`solve_with_cost`] does.
#[derive(Debug, Clone, Default)]
pub struct StagedSolve {
    /// Potentials and plan in the solver's internal orientation.
    potentials: Option<DualPotentials>,
    plan: Option<TransportPlan>,
    /// Potentials in the caller's orientation.
    view: Option<DualPotentials>,
    trace: Vec<StageRecord>,
    /// Transposed cost, present when the problem is solved as (ν, μ).
    swapped: Option<Option<CostMatrix>>,
}

/// True when (ν, μ, Cᵀ) precedes (μ, ν, C) in a fixed total order. Solving
/// in the smaller orientation makes the result exactly symmetric.
fn prefers_swap(mu: &[f64], nu: &[f64], cost: &CostMatrix) -> bool {
    use std::cmp::Ordering;
    let ord = nu.len().cmp(&mu.len()).then_with(|| {
        nu.iter()
            .zip(mu)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    if ord.is_ne() {
        return ord.is_lt();
    }
    // equal shapes and weights: compare Cᵀ with C entry by entry
    let n = mu.len();
    let c = cost.as_slice();
    for i in 0..n {
        for j in 0..n {
            let o = c[j * n + i].total_cmp(&c[i * n + j]);
            if o.is_ne() {
                return o.is_lt();
            }
        }
    }
    false
}

impl StagedSolve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stages_done(&self) -> usize {
        self.trace.len()
    }

    pub fn last(&self) -> Option<&StageRecord> {
        self.trace.last()
    }

    pub fn potentials(&self) -> Option<&DualPotentials> {
        self.view.as_ref()
    }

    pub fn advance(
        &mut self,
        mu: &[f64],
        nu: &[f64],
        cost: &CostMatrix,
        schedule: &SolverSchedule,
    ) -> Result<&StageRecord> {
        let m = self.trace.len();
        let stage = *schedule
            .stages()
            .get(m)
            .ok_or_else(|| Error::invalid("schedule already completed"))?;
        if self.swapped.is_none() {
            check_problem(mu, nu, cost)?;
        }
        let swapped = self
            .swapped
            .get_or_insert_with(|| prefers_swap(mu, nu, cost).then(|| cost.transposed()));
        let (mu, nu, cost) = match swapped {
            Some(t) => (nu, mu, &*t),
            None => (mu, nu, cost),
        };
        let (plan, pot) = run_stage(
            mu,
            nu,
            cost,
            stage.epsilon,
            stage.iterations,
            self.potentials.as_ref(),
            m + 1,
        )?;
        let primal = plan_objective(&plan.0, cost, mu, nu)?;
        let dual = dual_value(&pot, mu, nu);
        self.view = Some(match swapped {
            Some(_) => DualPotentials {
                phi: pot.psi.clone(),
                psi: pot.phi.clone(),
            },
            None => pot.clone(),
        });
        self.plan = Some(plan);
        self.potentials = Some(pot);
        self.trace.push(StageRecord {
            stage: m + 1,
            epsilon: stage.epsilon,
            iterations: stage.iterations,
            primal,
            dual,
        });
        Ok(self.trace.last().expect("just pushed"))
    }

    pub fn finish(mut self, mu: &[f64], nu: &[f64], cost: &CostMatrix, schedule: &SolverSchedule, eta: f64) -> Result<SolveResult> {
        while self.trace.len() < schedule.len() {
            self.advance(mu, nu, cost, schedule)?;
        }
        let last = self
            .trace
            .last()
            .cloned()
            .ok_or_else(|| Error::invalid("empty schedule"))?;
        let mut plan = self.plan.expect("at least one stage ran");
        if matches!(self.swapped, Some(Some(_))) {
            plan = TransportPlan(plan.0.t().as_standard_layout().into_owned());
        }
        Ok(SolveResult {
            plan,
            potentials: self.view.expect("at least one stage ran"),
            primal: last.primal,
            dual: last.dual,
            gap: last.primal - last.dual,
            distance: normalized_distance(last.primal, eta),
            stage_trace: self.trace,
        })
    }
}

/// Runs the whole schedule on a precomputed cost matrix.
pub fn solve_with_cost(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<SolveResult> {
    check_eta(eta)?;
    StagedSolve::new().finish(mu.weights(), nu.weights(), cost, schedule, eta)
}

/// WFR distance between two measures with the ε-scaling schedule.
pub fn solve_wfr(mu: &DiscreteMeasure, nu: &DiscreteMeasure, eta: f64, schedule: &SolverSchedule) -> Result<SolveResult> {
    let cost = wfr_cost(mu, nu, eta)?;
    solve_with_cost(mu, nu, &cost, eta, schedule)
}

/// WFR document distance between the nBOW measures of two documents.
pub fn wfr_document_distance(
    d1: &ProcessedDocument,
    d2: &ProcessedDocument,
    table: &EmbeddingTable,
    eta: f64,
    schedule: &SolverSchedule,
) -> Result<f64> {
    let a = to_nbow(d1, table)?;
    let b = to_nbow(d2, table)?;
    Ok(solve_wfr(&a.measure, &b.measure, eta, schedule)?.distance)
}

/// Largest change in either potential caused by `extra` further iterations
/// at the same ε. Used to probe fixed points.
pub fn potential_drift(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
    epsilon: f64,
    potentials: &DualPotentials,
    extra: usize,
) -> Result<f64> {
    let (_, next) = sinkhorn_stage(mu, nu, cost, epsilon, extra, Some(potentials))?;
    Ok(next.max_abs_diff(potentials))
}
