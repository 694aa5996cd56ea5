//! Discrete measures, ground costs and the generalized KL divergence.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value `cos₊` is treated as zero and the cost as infinite.
const COS_UNDERFLOW: f64 = 1e-300;

/// Weighted point cloud `Σ w_i δ_{x_i}` in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Build from an `n × dim` point matrix and `n` nonnegative weights.
    pub fn new(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::invalid("measure has no support points"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("weight {w} is not a finite nonnegative number")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("support point has a non-finite coordinate"));
        }
        let measure = DiscreteMeasure {
            points: points.as_standard_layout().into_owned(),
            weights,
        };
        if measure.total_mass() <= 0.0 {
            return Err(Error::invalid("measure has zero total mass"));
        }
        Ok(measure)
    }

    /// Convenience constructor from row vectors.
    pub fn from_points(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        let flat: Vec<f64> = points.into_iter().flatten().collect();
        let n = flat.len().checked_div(dim).unwrap_or(0);
        let arr = Array2::from_shape_vec((n, dim), flat)
            .map_err(|e| Error::invalid(format!("bad point matrix: {e}")))?;
        if n == 0 && !weights.is_empty() {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        Self::new(arr, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same support, weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.points.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    Euclidean,
    WfrLog { eta: f64 },
    /// Caller-supplied values.
    Custom,
}

/// Pairwise ground costs between the supports of two measures.
///
/// Entries are nonnegative and may be `+∞` for the WFR kind (pairs at
/// distance at least `πη` cannot exchange mass).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    kind: CostKind,
}

impl CostMatrix {
    /// Wrap raw values. Entries must be nonnegative (or `+∞`); NaN is rejected.
    pub fn from_values(values: Array2<f64>, kind: CostKind) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::invalid(format!("cost entry {v} is not a nonnegative number")));
        }
        if kind == CostKind::Euclidean && values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("euclidean cost entries must be finite"));
        }
        Ok(CostMatrix {
            values: values.as_standard_layout().into_owned(),
            kind,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("cost matrix is stored in standard layout")
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn transposed(&self) -> CostMatrix {
        CostMatrix {
            values: self.values.t().as_standard_layout().into_owned(),
            kind: self.kind,
        }
    }

    /// Rows (axis 0) or columns (axis 1) consisting only of infinite entries.
    pub(crate) fn fully_blocked(&self, axis: usize) -> Vec<usize> {
        self.values
            .axis_iter(Axis(axis))
            .enumerate()
            .filter(|(_, lane)| lane.iter().all(|v| v.is_infinite()))
            .map(|(i, _)| i)
            .collect()
    }
}

fn check_dims(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn pairwise(a: &DiscreteMeasure, b: &DiscreteMeasure, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let (pa, pb) = (a.points(), b.points());
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
        let d2: f64 = pa
            .row(i)
            .iter()
            .zip(pb.row(j).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        f(d2.sqrt())
    })
}

/// `C_ij = ‖x_i − y_j‖`.
pub fn euclidean_cost(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<CostMatrix> {
    check_dims(a, b)?;
    Ok(CostMatrix {
        values: pairwise(a, b, |d| d),
        kind: CostKind::Euclidean,
    })
}

/// WFR cone cost for a single pair distance: `−2 log cos₊(d / 2η)`.
pub fn wfr_cost_entry(distance: f64, eta: f64) -> f64 {
    let t = distance / (2.0 * eta);
    if t >= std::f64::consts::FRAC_PI_2 {
        return f64::INFINITY;
    }
    let c = t.cos();
    if c < COS_UNDERFLOW {
        f64::INFINITY
    } else {
        // -2 log cos(0) would give -0.0
        (-2.0 * c.ln()).max(0.0)
    }
}

/// `C_ij = −2 log cos₊(‖x_i − y_j‖ / 2η)`, `+∞` beyond the cutoff `πη`.
pub fn wfr_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, eta: f64) -> Result<CostMatrix> {
    check_eta(eta)?;
    check_dims(a, b)?;
    Ok(CostMatrix {
        values: pairwise(a, b, |d| wfr_cost_entry(d, eta)),
        kind: CostKind::WfrLog { eta },
    })
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Config(format!("eta must be a positive finite number, got {eta}")));
    }
    Ok(())
}

/// Generalized KL divergence `Σ a log(a/b) − a + b` between nonnegative vectors.
///
/// Uses `0 log 0 = 0`; a positive `a_i` against `b_i = 0` yields `+∞`.
pub fn generalized_kl(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if let Some(v) = a.iter().chain(b).find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("KL argument has negative or NaN entry {v}")));
    }
    Ok(kl_unchecked(a, b))
}

pub(crate) fn kl_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == 0.0 {
                y
            } else if y == 0.0 {
                f64::INFINITY
            } else {
                // x log(x/y) - x + y, rearranged to stay accurate near x == y
                let r = x / y;
                y * (r * r.ln() - r + 1.0)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dirac(x: Vec<f64>, w: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_points(vec![x], vec![w]).unwrap()
    }

    #[test]
    fn euclidean_examples() {
        let c = euclidean_cost(&dirac(vec![1.0, 2.0], 1.0), &dirac(vec![1.0, 2.0], 1.0)).unwrap();
        assert_eq!(c.values().as_slice().unwrap(), &[0.0]);
        let c = euclidean_cost(&dirac(vec![0.0, 0.0], 1.0), &dirac(vec![3.0, 4.0], 1.0)).unwrap();
        assert_eq!(c.get(0, 0), 5.0);

        let a = DiscreteMeasure::from_points(vec![vec![0.0, 1.0], vec![2.0, -1.0]], vec![0.5, 0.5])
            .unwrap();
        let b = DiscreteMeasure::from_points(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![-3.0, 2.0]],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let ab = euclidean_cost(&a, &b).unwrap();
        let ba = euclidean_cost(&b, &a).unwrap();
        assert_eq!((ab.rows(), ab.cols()), (2, 3));
        assert_eq!(ab.values(), &ba.transposed().values().clone());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = euclidean_cost(&dirac(vec![0.0], 1.0), &dirac(vec![0.0, 1.0], 1.0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn wfr_cost_examples() {
        let x = dirac(vec![0.0], 1.0);
        assert_eq!(wfr_cost(&x, &x, 1.0).unwrap().get(0, 0), 0.0);
        let c = wfr_cost(&x, &dirac(vec![1.0], 1.0), 1.0).unwrap().get(0, 0);
        // -2 ln cos(0.5)
        assert!((c - 0.261_168_48).abs() < 1e-7, "{c}");
        let far = dirac(vec![std::f64::consts::PI], 1.0);
        assert!(wfr_cost(&x, &far, 1.0).unwrap().get(0, 0).is_infinite());
        assert!(wfr_cost(&x, &x, 0.0).is_err());
        assert!(wfr_cost(&x, &x, -1.0).is_err());
    }

    #[test]
    fn wfr_cost_just_inside_cutoff_is_finite_and_large() {
        let eta = 1.0;
        let d = std::f64::consts::PI * eta * (1.0 - 1e-9);
        let c = wfr_cost_entry(d, eta);
        assert!(c.is_finite() && c > 30.0);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(generalized_kl(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((generalized_kl(&[0.0, 0.0], &[0.3, 0.7]).unwrap() - 1.0).abs() < 1e-15);
        let v = generalized_kl(&[1.0], &[0.5]).unwrap();
        assert!((v - (2f64.ln() - 0.5)).abs() < 1e-15);
        assert!((v - 0.193_147).abs() < 1e-6);
        assert!(generalized_kl(&[1.0], &[1.0, 2.0]).is_err());
        assert!(generalized_kl(&[-1.0], &[1.0]).is_err());
        assert_eq!(generalized_kl(&[1.0], &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::from_points(vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::from_points(vec![vec![0.0]], vec![0.0]).is_err());
        assert!(DiscreteMeasure::from_points(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).is_err());
        assert!(DiscreteMeasure::from_points(vec![], vec![]).is_err());
    }

    fn arb_measure(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
        (1usize..5).prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), n),
                prop::collection::vec(0.05f64..1.0, n),
            )
                .prop_map(|(p, w)| DiscreteMeasure::from_points(p, w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn wfr_cost_symmetric(a in arb_measure(2), b in arb_measure(2), eta in 0.2f64..3.0) {
            let ab = wfr_cost(&a, &b, eta).unwrap();
            let ba = wfr_cost(&b, &a, eta).unwrap().transposed();
            prop_assert_eq!(ab.values(), ba.values());
        }

        #[test]
        fn wfr_cost_monotone(d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, eta in 0.2f64..3.0, eta2 in 0.2f64..3.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(wfr_cost_entry(lo, eta) <= wfr_cost_entry(hi, eta));
            let (small, big) = if eta <= eta2 { (eta, eta2) } else { (eta2, eta) };
            if lo < std::f64::consts::PI * small {
                prop_assert!(wfr_cost_entry(lo, big) <= wfr_cost_entry(lo, small));
            }
        }

        #[test]
        fn kl_zero_iff_equal(a in prop::collection::vec(0.0f64..2.0, 1..6), shift in 0.01f64..1.0) {
            let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
            prop_assert!(generalized_kl(&b, &b).unwrap().abs() < 1e-15);
            let mut c = b.clone();
            c[0] += shift;
            prop_assert!(generalized_kl(&c, &b).unwrap() > 0.0);
            prop_assert!(generalized_kl(&a, &b).unwrap() >= 0.0);
        }

        #[test]
        fn kl_midpoint_convex(
            v in prop::collection::vec((0.0f64..2.0, 0.05f64..2.0, 0.0f64..2.0, 0.05f64..2.0), 1..6)
        ) {
            let a1: Vec<f64> = v.iter().map(|t| t.0).collect();
            let b1: Vec<f64> = v.iter().map(|t| t.1).collect();
            let a2: Vec<f64> = v.iter().map(|t| t.2).collect();
            let b2: Vec<f64> = v.iter().map(|t| t.3).collect();
            let am: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| 0.5 * (x + y)).collect();
            let bm: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = generalized_kl(&am, &bm).unwrap();
            let rhs = 0.5 * (generalized_kl(&a1, &b1).unwrap() + generalized_kl(&a2, &b2).unwrap());
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
