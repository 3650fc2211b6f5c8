//! Deterministic, splittable random streams and the samplers built on them.
//!
//! A [`SeedTree`] names a position in a tree of streams: a master seed plus a
//! path of labels (`"replicate"/3/"chain"/1`, ...). The stream key is the
//! SHA-256 digest of the master seed and the length-prefixed labels, and the
//! stream itself is a ChaCha8 keystream. Two distinct paths therefore never
//! share state, and the same path always replays the same numbers no matter
//! which thread asks or in what order.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;

/// Master seed plus derivation path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTree {
    pub master: u64,
    pub path: Vec<String>,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            path: Vec::new(),
        }
    }

    /// Derive a child node by appending one label to the path.
    pub fn child(&self, label: impl fmt::Display) -> Self {
        let mut path = self.path.clone();
        path.push(label.to_string());
        Self {
            master: self.master,
            path,
        }
    }

    /// 256-bit stream key for this node.
    pub fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"h2m-seed-tree/v1");
        hasher.update(self.master.to_le_bytes());
        for label in &self.path {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn stream(&self) -> Stream {
        Stream {
            inner: ChaCha8Rng::from_seed(self.key()),
        }
    }

    /// A compact 64-bit digest of the node, handy for manifests.
    pub fn derived_u64(&self) -> u64 {
        let key = self.key();
        u64::from_le_bytes(key[..8].try_into().expect("slice of 8"))
    }
}

impl fmt::Display for SeedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.master)?;
        for label in &self.path {
            write!(f, "/{label}")?;
        }
        Ok(())
    }
}

/// One owned random stream. Never shared between execution contexts.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Uniform on [0, 1).
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma with shape/rate parameterization (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma shape={shape}, rate={rate}"
        )));
    }
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameter(format!("gamma: {e}")))?;
    Ok(dist.sample(rng))
}

pub fn sample_chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> Result<f64> {
    sample_gamma(rng, 0.5 * dof, 0.5)
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<u64> {
    if rate == 0.0 {
        return Ok(0);
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("poisson rate={rate}")));
    }
    let dist =
        Poisson::new(rate).map_err(|e| Error::InvalidParameter(format!("poisson: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sample_normal(rng))
}

/// Multivariate normal draw through the Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} entries, covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let l = linalg::cholesky_lower(cov)?;
    Ok(sample_mvn_chol(rng, mean, &l))
}

/// Multivariate normal draw from a precomputed lower Cholesky factor.
pub fn sample_mvn_chol<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
) -> DVector<f64> {
    let z = standard_normal_vector(rng, mean.len());
    mean + chol_lower * z
}

/// Inverse-Wishart draw, scale-matrix convention:
/// density proportional to |S|^{-(dof+p+1)/2} exp(-tr(scale S^{-1})/2),
/// so the mean is `scale / (dof - p - 1)` when `dof > p + 1`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    scale: &DMatrix<f64>,
    dof: f64,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    check_wishart_args(scale, dof)?;
    let u = linalg::cholesky_lower(scale)?;
    let a = bartlett_factor(rng, p, dof)?;
    // If W ~ Wishart(scale^{-1}, dof) then W = U^{-T} A A^T U^{-1}, so
    // W^{-1} = (U A^{-T}) (U A^{-T})^T.
    let a_inv_t = a
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::NotPositiveDefinite)?;
    let b = &u * a_inv_t;
    Ok(linalg::symmetrize(&(&b * b.transpose())))
}

/// Wishart draw with mean `dof * scale`.
pub fn sample_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    scale: &DMatrix<f64>,
    dof: f64,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    check_wishart_args(scale, dof)?;
    let l = linalg::cholesky_lower(scale)?;
    let la = &l * bartlett_factor(rng, p, dof)?;
    Ok(linalg::symmetrize(&(&la * la.transpose())))
}

fn check_wishart_args(scale: &DMatrix<f64>, dof: f64) -> Result<()> {
    let p = scale.nrows();
    if scale.ncols() != p {
        return Err(Error::DimensionMismatch("scale must be square".into()));
    }
    let min = p as f64 - 1.0;
    if !(dof > min) || !dof.is_finite() {
        return Err(Error::InvalidDof { dof, min });
    }
    Ok(())
}

// Lower-triangular Bartlett factor: sqrt(chi2(dof - i)) on the diagonal
// (0-based i), standard normals below it.
fn bartlett_factor<R: Rng + ?Sized>(rng: &mut R, p: usize, dof: f64) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = sample_chi_squared(rng, dof - i as f64)?.sqrt();
        for j in 0..i {
            a[(i, j)] = sample_normal(rng);
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_same_stream() {
        let a = SeedTree::new(7).child("chain").child(1);
        let b = SeedTree::new(7).child("chain").child(1);
        let xs: Vec<u64> = (0..5).map({
            let mut s = a.stream();
            move |_| s.next_u64()
        }).collect();
        let ys: Vec<u64> = (0..5).map({
            let mut s = b.stream();
            move |_| s.next_u64()
        }).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn path_labels_are_length_prefixed() {
        // "ab"/"c" must not collide with "a"/"bc".
        let a = SeedTree::new(1).child("ab").child("c");
        let b = SeedTree::new(1).child("a").child("bc");
        assert_ne!(a.key(), b.key());
        assert_ne!(SeedTree::new(1).key(), SeedTree::new(2).key());
    }

    #[test]
    fn poisson_zero_rate() {
        let mut s = SeedTree::new(3).stream();
        for _ in 0..100 {
            assert_eq!(sample_poisson(&mut s, 0.0).unwrap(), 0);
        }
        assert!(sample_poisson(&mut s, -1.0).is_err());
        assert!(sample_poisson(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut s = SeedTree::new(3).stream();
        assert!(matches!(
            sample_gamma(&mut s, 0.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(sample_gamma(&mut s, 1.0, -2.0).is_err());
    }

    #[test]
    fn mvn_rejects_zero_covariance() {
        let mut s = SeedTree::new(3).stream();
        let r = sample_mvn(&mut s, &DVector::zeros(2), &DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn inverse_wishart_dof_boundary() {
        let mut s = SeedTree::new(3).stream();
        let scale = DMatrix::identity(3, 3);
        assert!(matches!(
            sample_inverse_wishart(&mut s, &scale, 2.0),
            Err(Error::InvalidDof { .. })
        ));
        assert!(sample_inverse_wishart(&mut s, &scale, 2.5).is_ok());
    }

    #[test]
    fn inverse_wishart_draws_are_spd() {
        let mut s = SeedTree::new(11).stream();
        let scale = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5]);
        for _ in 0..10_000 {
            let w = sample_inverse_wishart(&mut s, &scale, 3.0).unwrap();
            assert_eq!(w, w.transpose());
            assert!(linalg::cholesky_lower(&w).is_ok());
        }
    }
}
