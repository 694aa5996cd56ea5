//! Wasserstein-Fisher-Rao (WFR) document distance.
//!
//! Documents are turned into normalized bag-of-words measures over a word
//! embedding and compared with the WFR metric from unbalanced optimal
//! transport. The distance is computed by a log-stabilized Sinkhorn iteration
//! with ε-scaling and certified by the primal/dual gap. On top of the solver
//! sit closed-form oracles, a balanced (WMD-style) baseline, a pruned top-k
//! query using dual lower bounds, and the evaluation protocols (KNN error
//! rates, precision-recall curves).
//!
//! ```
//! use wfrdoc::{measures::{wfr_cost, DiscreteMeasure}, solver::{solve_wfr, SolverSchedule}};
//!
//! let mu = DiscreteMeasure::from_points(vec![vec![0.0]], vec![1.0]).unwrap();
//! let nu = DiscreteMeasure::from_points(vec![vec![1.0]], vec![1.0]).unwrap();
//! let res = solve_wfr(&mu, &nu, 1.0, &SolverSchedule::default()).unwrap();
//! assert!((res.distance - 0.69976).abs() < 1e-3);
//! # let _ = wfr_cost;
//! ```

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod measures;
pub mod retrieval;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
