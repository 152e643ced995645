//! Anisotropic squared-exponential covariance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Hyperparameters of one scalar output: signal variance, one lengthscale per
/// input dimension, and the observation noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_std: f64,
}

impl Hyperparameters {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_std: f64) -> Result<Self> {
        let h = Self { signal_variance, lengthscales, noise_std };
        h.validate()?;
        Ok(h)
    }

    /// Same lengthscale on every axis.
    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize, noise_std: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_std)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(contract(format!("signal variance must be positive, got {}", self.signal_variance)));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(contract(format!("lengthscales must be positive, got {:?}", self.lengthscales)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(contract(format!("noise std must be nonnegative, got {}", self.noise_std)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[ln σ_f², ln ℓ_1, …, ln ℓ_d, ln σ]`
    pub fn to_log_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_std.ln());
        v
    }

    pub fn from_log_params(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            signal_variance: theta[0].exp(),
            lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
            noise_std: theta[d + 1].exp(),
        }
    }

    pub(crate) fn kernel(&self) -> SeKernel {
        SeKernel {
            signal_variance: self.signal_variance,
            inv_sq_lengthscales: self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect(),
        }
    }
}

/// Precomputed form of the kernel used in the hot loops.
#[derive(Debug, Clone)]
pub(crate) struct SeKernel {
    pub signal_variance: f64,
    pub inv_sq_lengthscales: Vec<f64>,
}

impl SeKernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..a.len() {
            let diff = a[k] - b[k];
            s += diff * diff * self.inv_sq_lengthscales[k];
        }
        self.signal_variance * (-0.5 * s).exp()
    }

    /// Kernel vector between `x` and each column of `inputs`.
    pub fn cross(&self, x: &[f64], inputs: &DMatrix<f64>) -> Vec<f64> {
        let d = inputs.nrows();
        let data = inputs.as_slice();
        (0..inputs.ncols()).map(|j| self.eval(x, &data[j * d..(j + 1) * d])).collect()
    }

    pub fn gram(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let d = inputs.nrows();
        let m = inputs.ncols();
        let data = inputs.as_slice();
        let mut k = DMatrix::zeros(m, m);
        for l in 0..m {
            k[(l, l)] = self.signal_variance;
            for j in (l + 1)..m {
                let v = self.eval(&data[l * d..(l + 1) * d], &data[j * d..(j + 1) * d]);
                k[(j, l)] = v;
                k[(l, j)] = v;
            }
        }
        k
    }
}

pub fn kernel_eval(a: &[f64], b: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    if a.len() != b.len() || a.len() != hyper.dim() {
        return Err(contract(format!(
            "kernel arguments of dimension {} and {} with {} lengthscales",
            a.len(),
            b.len(),
            hyper.dim()
        )));
    }
    Ok(hyper.kernel().eval(a, b))
}

/// Gram matrix with entry `(j, l) = k(X[:, l], X[:, j])`; inputs are columns.
pub fn gram_matrix(inputs: &DMatrix<f64>, hyper: &Hyperparameters) -> Result<DMatrix<f64>> {
    if inputs.ncols() == 0 {
        return Err(contract("gram matrix needs at least one point"));
    }
    if inputs.nrows() != hyper.dim() {
        return Err(contract(format!(
            "inputs of dimension {} with {} lengthscales",
            inputs.nrows(),
            hyper.dim()
        )));
    }
    Ok(hyper.kernel().gram(inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(d: usize) -> Hyperparameters {
        Hyperparameters::isotropic(1.0, 1.0, d, 0.1).unwrap()
    }

    #[test]
    fn self_covariance_is_signal_variance() {
        let h = Hyperparameters::new(2.5, vec![0.3, 7.0], 0.0).unwrap();
        assert_eq!(kernel_eval(&[0.4, -1.0], &[0.4, -1.0], &h).unwrap(), 2.5);
        assert_eq!(kernel_eval(&[0.0, 0.0], &[0.0, 0.0], &unit(2)).unwrap(), 1.0);
    }

    #[test]
    fn unit_offset_value() {
        let v = kernel_eval(&[0.0, 0.0], &[1.0, 0.0], &unit(2)).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Hyperparameters::new(1.3, vec![0.5, 2.0, 1.1], 0.0).unwrap();
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(kernel_eval(&a, &b, &h).unwrap(), kernel_eval(&b, &a, &h).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(kernel_eval(&[0.0], &[0.0, 1.0], &unit(2)).is_err());
        assert!(kernel_eval(&[0.0], &[1.0], &unit(2)).is_err());
    }

    #[test]
    fn single_point_gram() {
        let h = Hyperparameters::new(3.0, vec![1.0], 0.0).unwrap();
        let k = gram_matrix(&DMatrix::from_column_slice(1, 1, &[0.7]), &h).unwrap();
        assert_eq!(k, DMatrix::from_element(1, 1, 3.0));
    }

    #[test]
    fn duplicated_columns_give_equal_rows() {
        let x = DMatrix::from_column_slice(2, 3, &[0.0, 1.0, 0.5, -0.5, 0.0, 1.0]);
        let k = gram_matrix(&x, &unit(2)).unwrap();
        assert_eq!(k.row(0), k.row(2));
        assert!(sym_eigenvalues(&k)[0].abs() < 1e-12);
    }

    #[test]
    fn random_gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-2.0..2.0));
            let k = gram_matrix(&x, &unit(3)).unwrap();
            assert!(crate::linalg::is_symmetric(&k, 0.0));
            assert!(sym_eigenvalues(&k)[0] >= -1e-10);
        }
    }

    #[test]
    fn log_param_roundtrip() {
        let h = Hyperparameters::new(0.7, vec![0.2, 3.0], 0.05).unwrap();
        let back = Hyperparameters::from_log_params(&h.to_log_params());
        assert!((back.signal_variance - 0.7).abs() < 1e-15);
        assert!((back.noise_std - 0.05).abs() < 1e-16);
    }
}
