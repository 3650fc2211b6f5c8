//! Low-rank thin-plate regression splines: `s(z) = a z + sum_k b_k |z - knot_k|^3`.
//!
//! Both the linear column and every radial column are mean-centered so that a
//! smooth can never absorb the model intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::quantile_sorted;
use crate::error::{Error, Result};

/// Interior quantile knots at probabilities `(k + 1) / (K + 1)`, `k = 0..K`.
pub fn make_knots(z: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidParameter("knot count must be at least 1".into()));
    }
    let mut sorted: Vec<f64> = z.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < count + 2 {
        return Err(Error::TooFewDistinctValues {
            needed: count + 2,
            found: distinct.len(),
        });
    }
    let at = |values: &[f64]| -> Vec<f64> {
        (0..count)
            .map(|k| quantile_sorted(values, (k + 1) as f64 / (count + 1) as f64))
            .collect()
    };
    let increasing = |k: &[f64]| k.windows(2).all(|w| w[0] < w[1]);
    let knots = at(&sorted);
    if increasing(&knots) {
        return Ok(knots);
    }
    // Heavy ties: place knots on the distinct values instead.
    let knots = at(&distinct);
    if increasing(&knots) {
        Ok(knots)
    } else {
        Err(Error::TooFewDistinctValues {
            needed: count + 2,
            found: distinct.len(),
        })
    }
}

/// Day index mapped onto [0, 1].
pub fn time_covariate(n_days: usize) -> Vec<f64> {
    if n_days <= 1 {
        return vec![0.0; n_days];
    }
    let span = (n_days - 1) as f64;
    (0..n_days).map(|i| i as f64 / span).collect()
}

/// Min-max rescaling onto [0, 1]; a constant input maps to zeros.
pub fn unit_interval(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub covariate: Vec<f64>,
    pub knots: Vec<f64>,
    /// Centered covariate.
    pub linear: Vec<f64>,
    /// `T x K`, column `k` is the centered `|z - knot_k|^3`.
    pub matrix: DMatrix<f64>,
}

impl SplineBasis {
    pub fn n_days(&self) -> usize {
        self.covariate.len()
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    /// Number of coefficients (linear term plus one per knot).
    pub fn n_coefficients(&self) -> usize {
        1 + self.n_knots()
    }

    /// Full design `[linear | B]`, `T x (K + 1)`.
    pub fn design(&self) -> DMatrix<f64> {
        let t = self.n_days();
        let k = self.n_knots();
        DMatrix::from_fn(t, k + 1, |i, j| {
            if j == 0 {
                self.linear[i]
            } else {
                self.matrix[(i, j - 1)]
            }
        })
    }
}

/// Uncentered radial function `|z - knot|^3`.
pub fn radial(z: f64, knot: f64) -> f64 {
    (z - knot).abs().powi(3)
}

/// Build the centered basis for covariate values `z` and `knots`.
pub fn basis(z: &[f64], knots: &[f64]) -> SplineBasis {
    let t = z.len();
    let k = knots.len();
    let mut matrix = DMatrix::from_fn(t, k, |i, j| radial(z[i], knots[j]));
    for mut col in matrix.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let zm = z.iter().sum::<f64>() / t.max(1) as f64;
    SplineBasis {
        covariate: z.to_vec(),
        knots: knots.to_vec(),
        linear: z.iter().map(|v| v - zm).collect(),
        matrix,
    }
}

/// Coefficients of one smooth and its shrinkage variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothCoefficients {
    pub alpha: f64,
    pub b: Vec<f64>,
    pub variance: f64,
}

impl SmoothCoefficients {
    pub fn zeros(n_knots: usize, variance: f64) -> Self {
        Self {
            alpha: 0.0,
            b: vec![0.0; n_knots],
            variance,
        }
    }

    /// Precision the Gaussian prior adds to each radial coefficient.
    pub fn prior_precision(&self) -> f64 {
        1.0 / self.variance
    }

    /// `(alpha, b_1, ..., b_K)` as one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            1 + self.b.len(),
            std::iter::once(self.alpha).chain(self.b.iter().copied()),
        )
    }
}

/// Evaluate `alpha * linear + B b` for every day.
pub fn smooth_eval(basis: &SplineBasis, coeffs: &SmoothCoefficients) -> Result<Vec<f64>> {
    if coeffs.b.len() != basis.n_knots() {
        return Err(Error::DimensionMismatch(format!(
            "{} radial coefficients for {} knots",
            coeffs.b.len(),
            basis.n_knots()
        )));
    }
    if !(coeffs.variance > 0.0) {
        return Err(Error::NonPositiveScale(coeffs.variance));
    }
    let b = DVector::from_column_slice(&coeffs.b);
    let radial = &basis.matrix * b;
    Ok(basis
        .linear
        .iter()
        .zip(radial.iter())
        .map(|(l, r)| coeffs.alpha * l + r)
        .collect())
}
