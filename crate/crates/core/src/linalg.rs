//! Small dense and banded linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower Cholesky factor, or `NotPositiveDefinite`.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// log |A| from the lower Cholesky factor of A.
pub fn log_det_from_chol(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// Multivariate normal log-density given the lower Cholesky factor of the
/// covariance.
pub fn mvn_logpdf_chol(x: &DVector<f64>, mean: &DVector<f64>, chol_lower: &DMatrix<f64>) -> f64 {
    let diff = x - mean;
    let z = chol_lower
        .solve_lower_triangular(&diff)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * (x.len() as f64 * LN_2PI + log_det_from_chol(chol_lower) + z.norm_squared())
}

/// Clip eigenvalues from below at `floor` and rescale to unit diagonal.
///
/// The input must be symmetric; the result is symmetric positive definite
/// with an exact unit diagonal.
pub fn nearest_correlation(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    if clipped == eig.eigenvalues {
        return unit_diagonal(m);
    }
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    unit_diagonal(&rebuilt)
}

fn unit_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].sqrt()).collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]));
    for i in 0..n {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Symmetric banded matrix holding only its lower band, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBand {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn from_dense(a: &DMatrix<f64>, bandwidth: usize) -> Self {
        let mut band = Self::zeros(a.nrows(), bandwidth);
        for i in 0..a.nrows() {
            for j in i.saturating_sub(bandwidth)..=i {
                band.add(i, j, a[(i, j)]);
            }
        }
        band
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bandwidth, "({i}, {j}) outside the band");
        i * (self.bandwidth + 1) + self.bandwidth + j - i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bandwidth {
            0.0
        } else {
            self.data[self.index(i, j)]
        }
    }

    /// Add `v` to entry `(i, j)` (and, implicitly, `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Cholesky factor `L` of a [`SymBand`] matrix, stored in the same layout.
///
/// Factoring costs `n * bandwidth^2` and each triangular solve
/// `n * bandwidth`.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn factor(a: &SymBand) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth;
        let w = bw + 1;
        let mut l = a.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let lo_j = j.saturating_sub(bw).max(lo);
                let mut s = l.data[i * w + bw + j - i];
                let row_i = i * w + bw - i;
                let row_j = j * w + bw - j;
                for k in lo_j..j {
                    s -= l.data[row_i + k] * l.data[row_j + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l.data[row_i + i] = s.sqrt();
                } else {
                    l.data[row_i + j] = s / l.data[row_j + j];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l.data[i * (self.l.bandwidth + 1) + self.l.bandwidth + j - i]
    }

    /// Solve `L x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let bw = self.l.bandwidth;
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    /// Solve `L^T x = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let bw = self.l.bandwidth;
        let mut x = b.clone();
        for i in (0..n).rev() {
            let xi = x[i] / self.at(i, i);
            x[i] = xi;
            for k in i.saturating_sub(bw)..i {
                x[k] -= self.at(i, k) * xi;
            }
        }
        x
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `ln |A|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    pub fn lower_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if j <= i && i - j <= self.l.bandwidth {
                self.at(i, j)
            } else {
                0.0
            }
        })
    }
}
