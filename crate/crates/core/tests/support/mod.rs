//! Reference computations written without any of the crate's model code.

#![allow(dead_code)]

pub mod scenarios;

use nalgebra::{DMatrix, DVector};

/// Rauch-Tung-Striebel smoother for a local-level model
/// `x_0 ~ N(0, q)`, `x_t = x_{t-1} + w_t`, `w_t ~ N(0, q)`,
/// `y_t = x_t + v_t`, `v_t ~ N(0, r)`; `None` marks a missing observation.
///
/// Returns the smoothed means and variances.
pub fn local_level_smoother(y: &[Option<f64>], q: f64, r: f64) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut pred_m = vec![0.0; n];
    let mut pred_v = vec![0.0; n];
    let mut filt_m = vec![0.0; n];
    let mut filt_v = vec![0.0; n];
    for t in 0..n {
        let (m, v) = if t == 0 { (0.0, q) } else { (filt_m[t - 1], filt_v[t - 1] + q) };
        pred_m[t] = m;
        pred_v[t] = v;
        match y[t] {
            Some(obs) => {
                let k = v / (v + r);
                filt_m[t] = m + k * (obs - m);
                filt_v[t] = (1.0 - k) * v;
            }
            None => {
                filt_m[t] = m;
                filt_v[t] = v;
            }
        }
    }
    let mut sm = filt_m.clone();
    let mut sv = filt_v.clone();
    for t in (0..n.saturating_sub(1)).rev() {
        let j = filt_v[t] / pred_v[t + 1];
        sm[t] = filt_m[t] + j * (sm[t + 1] - pred_m[t + 1]);
        sv[t] = filt_v[t] + j * j * (sv[t + 1] - pred_v[t + 1]);
    }
    (sm, sv)
}

/// Maximum-likelihood Poisson regression `y ~ Poisson(exp(offset + X b))`
/// by plain Newton iterations from zero.
pub fn poisson_glm(x: &DMatrix<f64>, y: &[u64], offset: f64) -> DVector<f64> {
    let k = x.ncols();
    let mut b = DVector::zeros(k);
    b[0] = (y.iter().sum::<u64>() as f64 / y.len() as f64).ln() - offset;
    for _ in 0..100 {
        let eta = x * &b;
        let mut grad = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        for i in 0..x.nrows() {
            let mu = (offset + eta[i]).exp();
            let row = x.row(i).transpose();
            grad += &row * (y[i] as f64 - mu);
            info += &row * row.transpose() * mu;
        }
        let step = info.cholesky().expect("information is positive definite").solve(&grad);
        b += &step;
        if step.amax() < 1e-12 {
            break;
        }
    }
    b
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Pearson correlation matrix of the columns of `x`.
pub fn correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    let cov = centered.tr_mul(&centered);
    DMatrix::from_fn(x.ncols(), x.ncols(), |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
}

/// Empirical type-7 quantile.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}
