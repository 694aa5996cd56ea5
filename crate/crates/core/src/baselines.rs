//! Closed-form and brute-force references for the WFR solver, plus the
//! balanced entropic OT baseline (WMD with Euclidean cost, or the balanced
//! ablation with the WFR cone cost).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::measures::{check_eta, CostKind, CostMatrix, DiscreteMeasure};
use crate::solver::{plan_objective, SolverSchedule, TransportPlan};

/// `cos₊(t)`: cosine on `[−π/2, π/2]`, zero elsewhere.
pub fn cos_plus(t: f64) -> f64 {
    if t.abs() <= std::f64::consts::FRAC_PI_2 {
        t.cos().max(0.0)
    } else {
        0.0
    }
}

/// WFR distance between two Diracs `h0 δ_{x0}` and `h1 δ_{x1}`:
/// `√2 η [h0 + h1 − 2 √(h0 h1) cos₊(|x1 − x0| / 2η)]^{1/2}`.
///
/// # Panics
/// If `x0` and `x1` have different lengths.
pub fn dirac_wfr(h0: f64, x0: &[f64], h1: f64, x1: &[f64], eta: f64) -> f64 {
    assert_eq!(x0.len(), x1.len(), "Dirac locations must share a dimension");
    let d = x0
        .iter()
        .zip(x1)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let bracket = h0 + h1 - 2.0 * (h0 * h1).sqrt() * cos_plus(d / (2.0 * eta));
    std::f64::consts::SQRT_2 * eta * bracket.max(0.0).sqrt()
}

/// Minimizer of `J` for a single source point of mass `mu_mass`:
/// `r_j = ν_j e^{−C_j} √(μ / S)` with `S = Σ ν_k e^{−C_k}`.
///
/// Returns the plan row and its objective value.
pub fn single_source_plan(mu_mass: f64, cost_row: &[f64], nu: &[f64]) -> Result<(Vec<f64>, f64)> {
    if !(mu_mass.is_finite() && mu_mass > 0.0) {
        return Err(Error::invalid(format!("source mass must be positive, got {mu_mass}")));
    }
    if cost_row.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: nu.len(),
            found: cost_row.len(),
        });
    }
    if nu.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("target weights must be nonnegative"));
    }
    let kernel: Vec<f64> = cost_row.iter().zip(nu).map(|(c, v)| v * (-c).exp()).collect();
    let s: f64 = kernel.iter().sum();
    let row: Vec<f64> = if s > 0.0 {
        let scale = (mu_mass / s).sqrt();
        kernel.iter().map(|k| k * scale).collect()
    } else {
        vec![0.0; nu.len()]
    };
    let cost = CostMatrix::from_values(
        Array2::from_shape_vec((1, cost_row.len()), cost_row.to_vec()).expect("1×J"),
        CostKind::Custom,
    )?;
    let plan = Array2::from_shape_vec((1, row.len()), row.clone()).expect("1×J");
    let j = plan_objective(&plan, &cost, &[mu_mass], nu)?;
    Ok((row, j))
}

/// Largest instance (`I·J`) accepted by [`splitting_bruteforce`].
pub const SPLITTING_MAX_PAIRS: usize = 9;

/// Minimizes `Σ_ij WFR²(α_ij δ_{x_i}, β_ji δ_{y_j})` over splittings
/// `Σ_j α_ij = μ_i`, `Σ_i β_ji = ν_j` and returns the minimal squared distance.
///
/// The objective equals `2η² [Σμ + Σν − 2 Σ c_ij √(α_ij β_ji)]` with
/// `c_ij = cos₊(d_ij / 2η)`, so it is jointly convex. Minimizing over one
/// block with the other fixed has a closed form (Cauchy–Schwarz gives
/// `α_ij ∝ c_ij² β_ji` within row `i`), and the iteration alternates these
/// exact block minimizations from the uniform splitting until the objective
/// changes by less than `1e-10`.
pub fn splitting_bruteforce(mu: &DiscreteMeasure, nu: &DiscreteMeasure, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let (ni, nj) = (mu.len(), nu.len());
    if ni * nj > SPLITTING_MAX_PAIRS {
        return Err(Error::invalid(format!(
            "splitting oracle handles at most {SPLITTING_MAX_PAIRS} pairs, got {ni}x{nj}"
        )));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let c2 = Array2::from_shape_fn((ni, nj), |(i, j)| {
        let d = (&mu.point(i) - &nu.point(j)).mapv(|v| v * v).sum().sqrt();
        cos_plus(d / (2.0 * eta)).powi(2)
    });
    let (mw, nw) = (mu.weights(), nu.weights());
    let mut alpha = Array2::from_shape_fn((ni, nj), |(i, _)| mw[i] / nj as f64);
    // stored as beta[[i, j]] = β_ji
    let mut beta = Array2::from_shape_fn((ni, nj), |(_, j)| nw[j] / ni as f64);

    let objective = |alpha: &Array2<f64>, beta: &Array2<f64>| {
        let coupling: f64 = alpha
            .iter()
            .zip(beta.iter())
            .zip(c2.iter())
            .map(|((a, b), c)| c.sqrt() * (a * b).sqrt())
            .sum();
        2.0 * eta * eta * (mu.total_mass() + nu.total_mass() - 2.0 * coupling)
    };

    let mut prev = objective(&alpha, &beta);
    let mut calm = 0;
    for _ in 0..5_000_000 {
        for i in 0..ni {
            let z: f64 = (0..nj).map(|j| c2[[i, j]] * beta[[i, j]]).sum();
            if z > 0.0 {
                for j in 0..nj {
                    alpha[[i, j]] = mw[i] * c2[[i, j]] * beta[[i, j]] / z;
                }
            }
        }
        for j in 0..nj {
            let z: f64 = (0..ni).map(|i| c2[[i, j]] * alpha[[i, j]]).sum();
            if z > 0.0 {
                for i in 0..ni {
                    beta[[i, j]] = nw[j] * c2[[i, j]] * alpha[[i, j]] / z;
                }
            }
        }
        let cur = objective(&alpha, &beta);
        // require a few quiet sweeps in a row; a single small step can be a plateau
        if (prev - cur).abs() < 1e-10 {
            calm += 1;
            if calm >= 3 {
                return Ok(cur.max(0.0));
            }
        } else {
            calm = 0;
        }
        prev = cur;
    }
    Ok(prev.max(0.0))
}

#[derive(Debug, Clone)]
pub struct BalancedSolveResult {
    pub plan: TransportPlan,
    /// `Σ C_ij R_ij`.
    pub primal: f64,
    /// Max absolute deviation of the plan marginals from `μ`, `ν`.
    pub marginal_error: f64,
    pub stage_marginal_errors: Vec<f64>,
    /// Iterations run at the final ε beyond the schedule to reach
    /// [`BALANCED_MARGINAL_TOL`].
    pub extra_iterations: usize,
}

pub const BALANCED_MARGINAL_TOL: f64 = 1e-6;
const BALANCED_EXTRA_CAP: usize = 50_000;

fn logsumexp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

struct Balanced<'a> {
    c: &'a [f64],
    mu: &'a [f64],
    nu: &'a [f64],
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Balanced<'_> {
    fn sweep(&mut self, eps: f64) {
        let (ni, nj) = (self.mu.len(), self.nu.len());
        for i in 0..ni {
            if self.mu[i] == 0.0 {
                continue;
            }
            let row = &self.c[i * nj..(i + 1) * nj];
            let g = &self.g;
            let nu = self.nu;
            let lse = logsumexp((0..nj).filter(|&j| nu[j] > 0.0).map(|j| (g[j] - row[j]) / eps));
            self.f[i] = eps * (self.mu[i].ln() - lse);
        }
        for j in 0..nj {
            if self.nu[j] == 0.0 {
                continue;
            }
            let (c, f, mu) = (self.c, &self.f, self.mu);
            let lse = logsumexp((0..ni).filter(|&i| mu[i] > 0.0).map(|i| (f[i] - c[i * nj + j]) / eps));
            self.g[j] = eps * (self.nu[j].ln() - lse);
        }
    }

    fn plan(&self, eps: f64) -> Array2<f64> {
        let (ni, nj) = (self.mu.len(), self.nu.len());
        Array2::from_shape_fn((ni, nj), |(i, j)| {
            if self.mu[i] == 0.0 || self.nu[j] == 0.0 {
                0.0
            } else {
                ((self.f[i] + self.g[j] - self.c[i * nj + j]) / eps).exp()
            }
        })
    }

    fn marginal_error(&self, plan: &Array2<f64>) -> f64 {
        let rows = plan.rows().into_iter().zip(self.mu).map(|(r, m)| (r.sum() - m).abs());
        let cols = plan.columns().into_iter().zip(self.nu).map(|(c, n)| (c.sum() - n).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Balanced entropic OT with the same ε-continuation as the WFR solver,
/// computed with log-domain (log-sum-exp) Sinkhorn updates. After the last
/// scheduled stage, iterations continue at the final ε until the marginal
/// error drops below [`BALANCED_MARGINAL_TOL`] (bounded by an internal cap).
pub fn balanced_sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
    schedule: &SolverSchedule,
) -> Result<BalancedSolveResult> {
    if cost.rows() != mu.len() || cost.cols() != nu.len() {
        return Err(Error::invalid("cost matrix does not match the measures"));
    }
    let (ma, mb) = (mu.total_mass(), nu.total_mass());
    if (ma - mb).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "balanced transport needs equal masses, got {ma} and {mb}"
        )));
    }
    let live_rows: Vec<usize> = cost
        .fully_blocked(0)
        .into_iter()
        .filter(|&i| mu.weights()[i] > 0.0)
        .collect();
    let live_cols: Vec<usize> = cost
        .fully_blocked(1)
        .into_iter()
        .filter(|&j| nu.weights()[j] > 0.0)
        .collect();
    if !live_rows.is_empty() || !live_cols.is_empty() {
        return Err(Error::Infeasible(format!(
            "rows {live_rows:?} / columns {live_cols:?} have no finite-cost partner"
        )));
    }

    let mut state = Balanced {
        c: cost.as_slice(),
        mu: mu.weights(),
        nu: nu.weights(),
        f: vec![0.0; mu.len()],
        g: vec![0.0; nu.len()],
    };
    let mut stage_errors = Vec::with_capacity(schedule.len());
    for stage in schedule.stages() {
        for _ in 0..stage.iterations {
            state.sweep(stage.epsilon);
        }
        let plan = state.plan(stage.epsilon);
        stage_errors.push(state.marginal_error(&plan));
    }
    let eps = schedule.final_epsilon();
    let mut plan = state.plan(eps);
    let mut err = state.marginal_error(&plan);
    let mut extra = 0;
    while err > BALANCED_MARGINAL_TOL && extra < BALANCED_EXTRA_CAP {
        for _ in 0..10 {
            state.sweep(eps);
        }
        extra += 10;
        plan = state.plan(eps);
        err = state.marginal_error(&plan);
    }
    if let Some(last) = stage_errors.last_mut() {
        *last = err;
    }
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            stage: schedule.len(),
            message: "balanced plan is not finite".into(),
        });
    }
    let primal = plan
        .iter()
        .zip(cost.values().iter())
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, c)| r * c)
        .sum();
    Ok(BalancedSolveResult {
        plan: TransportPlan::new(plan)?,
        primal,
        marginal_error: err,
        stage_marginal_errors: stage_errors,
        extra_iterations: extra,
    })
}
