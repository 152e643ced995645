//! Log marginal likelihood of one output and its gradient with respect to
//! the log-hyperparameters `[ln σ_f², ln ℓ_1, …, ln ℓ_d, ln σ]`.

use std::f64::consts::PI;

use super::kernel::Hyperparameters;
use super::model::TrainingSet;
use crate::error::{contract, Result};
use crate::linalg::cholesky_with_jitter;

pub fn log_marginal_likelihood(data: &TrainingSet, hyper: &Hyperparameters, output: usize) -> Result<(f64, Vec<f64>)> {
    if output >= data.output_dim() {
        return Err(contract(format!("output index {output} out of range")));
    }
    if data.is_empty() {
        return Err(contract("likelihood needs at least one training point"));
    }
    hyper.validate()?;
    if hyper.dim() != data.input_dim() {
        return Err(contract("lengthscale count does not match the input dimension"));
    }

    let m = data.len();
    let d = data.input_dim();
    let kernel = hyper.kernel();
    let k = kernel.gram(&data.inputs);
    let noise_var = hyper.noise_std * hyper.noise_std;
    let (chol, _) = cholesky_with_jitter(&k, noise_var)?;
    let y = data.target_column(output);
    let alpha = chol.solve(&y);

    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * m as f64 * (2.0 * PI).ln();

    // grad_p = ½ tr((ααᵀ − K⁻¹) ∂K/∂p)
    let k_inv = chol.inverse();
    let x = data.inputs.as_slice();
    let mut grad = vec![0.0; d + 2];
    for l in 0..m {
        for j in 0..m {
            let w = alpha[j] * alpha[l] - k_inv[(j, l)];
            let kf = k[(j, l)];
            grad[0] += w * kf;
            if j != l {
                for (axis, g) in grad[1..=d].iter_mut().enumerate() {
                    let diff = x[j * d + axis] - x[l * d + axis];
                    *g += w * kf * diff * diff * kernel.inv_sq_lengthscales[axis];
                }
            }
        }
    }
    for g in grad.iter_mut().take(d + 1) {
        *g *= 0.5;
    }
    grad[d + 1] = noise_var * (alpha.dot(&alpha) - k_inv.trace());
    Ok((lml, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_zero_target() {
        let data = TrainingSet::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), vec![0.0]).unwrap();
        // k(x,x) + σ² = 0.75 + 0.25 = 1
        let h = Hyperparameters::new(0.75, vec![1.0], 0.5).unwrap();
        let (lml, _) = log_marginal_likelihood(&data, &h, 0).unwrap();
        assert!((lml + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((lml + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = DMatrix::from_fn(2, 10, |_, _| rng.random_range(-2.0..2.0));
            let y = DMatrix::from_fn(10, 1, |_, _| rng.random_range(-1.0..1.0));
            let data = TrainingSet::new(x, y, vec![0.1]).unwrap();
            let h = Hyperparameters::new(
                rng.random_range(0.5..2.0),
                vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
                rng.random_range(0.1..0.5),
            )
            .unwrap();
            let (_, grad) = log_marginal_likelihood(&data, &h, 0).unwrap();
            let theta = h.to_log_params();
            for p in 0..theta.len() {
                let step = 1e-5;
                let mut up = theta.clone();
                up[p] += step;
                let mut dn = theta.clone();
                dn[p] -= step;
                let fu = log_marginal_likelihood(&data, &Hyperparameters::from_log_params(&up), 0).unwrap().0;
                let fd = log_marginal_likelihood(&data, &Hyperparameters::from_log_params(&dn), 0).unwrap().0;
                let fd_grad = (fu - fd) / (2.0 * step);
                let rel = (grad[p] - fd_grad).abs() / fd_grad.abs().max(1e-3);
                assert!(rel <= 1e-5, "param {p}: analytic {} vs fd {fd_grad}", grad[p]);
            }
        }
    }

    #[test]
    fn pure_noise_scan_is_unimodal_in_noise() {
        // i.i.d. N(0, 0.5²) targets on well separated points: the likelihood
        // over σ rises to the noise-explaining optimum then falls.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = rand_distr::Normal::new(0.0, 0.5).unwrap();
        let x = DMatrix::from_fn(1, 40, |_, j| j as f64 * 10.0);
        let y = DMatrix::from_fn(40, 1, |_, _| rng.sample(normal));
        let data = TrainingSet::new(x, y, vec![0.5]).unwrap();
        let values: Vec<f64> = (0..12)
            .map(|i| {
                let sigma = 0.01 * 2f64.powi(i);
                let h = Hyperparameters::new(1e-6, vec![0.1], sigma).unwrap();
                log_marginal_likelihood(&data, &h, 0).unwrap().0
            })
            .collect();
        let peak = crate::exec::argmax(&values).unwrap();
        assert!(values[..=peak].windows(2).all(|w| w[1] > w[0]));
        assert!(values[peak..].windows(2).all(|w| w[1] < w[0]));
        let sigma_peak = 0.01 * 2f64.powi(peak as i32);
        assert!((0.25..=1.0).contains(&sigma_peak), "peak at σ = {sigma_peak}");
    }
}
