use nalgebra::{DMatrix, DVector};

use super::kernel::{Hyperparameters, SeKernel};
use crate::error::{contract, Error, Result};
use crate::exec::Exec;
use crate::linalg::cholesky_with_jitter;

/// Inputs are stored column-wise (`d × m`), targets row-wise (`m × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub noise_std: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, noise_std: Vec<f64>) -> Result<Self> {
        if inputs.ncols() != targets.nrows() {
            return Err(contract(format!(
                "{} input columns but {} target rows",
                inputs.ncols(),
                targets.nrows()
            )));
        }
        if noise_std.len() != targets.ncols() {
            return Err(contract(format!(
                "{} noise levels for {} outputs",
                noise_std.len(),
                targets.ncols()
            )));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(contract("training data contains non-finite entries"));
        }
        if noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(contract("noise levels must be nonnegative"));
        }
        Ok(Self { inputs, targets, noise_std })
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, j: usize) -> &[f64] {
        let d = self.input_dim();
        &self.inputs.as_slice()[j * d..(j + 1) * d]
    }

    pub fn target_column(&self, i: usize) -> DVector<f64> {
        self.targets.column(i).into_owned()
    }

    /// Keeps the rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        let inputs = self.inputs.select_columns(indices);
        let targets = self.targets.select_rows(indices);
        TrainingSet { inputs, targets, noise_std: self.noise_std.clone() }
    }
}

/// Fitted state of one scalar output.
#[derive(Debug, Clone)]
pub(crate) struct OutputModel {
    pub hyper: Hyperparameters,
    pub kernel: SeKernel,
    /// `σ² + jitter` actually added to the Gram diagonal.
    pub noise_var: f64,
    /// Lower Cholesky factor of `K + noise_var·I`, column-major; empty for a prior-only model.
    pub chol_l: DMatrix<f64>,
    pub alpha: DVector<f64>,
}

impl OutputModel {
    pub(crate) fn fit(inputs: &DMatrix<f64>, y: &DVector<f64>, hyper: &Hyperparameters) -> Result<Self> {
        let kernel = hyper.kernel();
        let k = kernel.gram(inputs);
        let (chol, noise_var) = cholesky_with_jitter(&k, hyper.noise_std * hyper.noise_std)?;
        let alpha = chol.solve(y);
        Ok(Self { hyper: hyper.clone(), kernel, noise_var, chol_l: chol.unpack(), alpha })
    }

    /// Refactor with a known diagonal term and stored weights (used on reload).
    pub(crate) fn restore(
        inputs: &DMatrix<f64>,
        hyper: Hyperparameters,
        noise_var: f64,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let kernel = hyper.kernel();
        let m = inputs.ncols();
        let chol_l = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let mut k = kernel.gram(inputs);
            for i in 0..m {
                k[(i, i)] += noise_var;
            }
            nalgebra::Cholesky::new(k)
                .ok_or_else(|| Error::IllConditioned("stored model no longer factorizes".into()))?
                .unpack()
        };
        Ok(Self { hyper, kernel, noise_var, chol_l, alpha })
    }

    fn prior(hyper: &Hyperparameters) -> Self {
        Self {
            hyper: hyper.clone(),
            kernel: hyper.kernel(),
            noise_var: hyper.noise_std * hyper.noise_std,
            chol_l: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
        }
    }

    /// Solves `L v = k` in place by column-oriented forward substitution.
    fn forward_solve(&self, v: &mut [f64]) {
        let m = v.len();
        let l = self.chol_l.as_slice();
        for j in 0..m {
            let col = &l[j * m..(j + 1) * m];
            v[j] /= col[j];
            let vj = v[j];
            if vj != 0.0 {
                for i in (j + 1)..m {
                    v[i] -= col[i] * vj;
                }
            }
        }
    }

    fn mean(&self, kx: &[f64]) -> f64 {
        kx.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum()
    }

    fn var(&self, x: &[f64], mut kx: Vec<f64>) -> Result<f64> {
        let prior = self.kernel.eval(x, x);
        self.forward_solve(&mut kx);
        let explained: f64 = kx.iter().map(|v| v * v).sum();
        let var = prior - explained;
        if var < -1e-10 {
            return Err(Error::Internal(format!("predicted variance {var:e} is negative")));
        }
        Ok(var.max(0.0))
    }
}

/// Exact GP regressor with one independent scalar model per output dimension.
/// Immutable once fitted.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub(crate) inputs: DMatrix<f64>,
    pub(crate) outputs: Vec<OutputModel>,
}

/// Mean and marginal variance of every output at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GpModel {
    pub fn fit(data: &TrainingSet, hypers: &[Hyperparameters]) -> Result<Self> {
        Self::fit_with(data, hypers, Exec::default())
    }

    pub fn fit_with(data: &TrainingSet, hypers: &[Hyperparameters], exec: Exec) -> Result<Self> {
        if hypers.len() != data.output_dim() {
            return Err(contract(format!(
                "{} hyperparameter sets for {} outputs",
                hypers.len(),
                data.output_dim()
            )));
        }
        if data.is_empty() {
            return Err(contract("cannot fit on an empty training set"));
        }
        for h in hypers {
            h.validate()?;
            if h.dim() != data.input_dim() {
                return Err(contract(format!(
                    "{} lengthscales for {}-dimensional inputs",
                    h.dim(),
                    data.input_dim()
                )));
            }
        }
        let outputs = exec
            .map_range(hypers.len(), |i| OutputModel::fit(&data.inputs, &data.target_column(i), &hypers[i]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { inputs: data.inputs.clone(), outputs })
    }

    /// Model without data: zero mean, prior variance everywhere.
    pub fn prior(input_dim: usize, hypers: &[Hyperparameters]) -> Result<Self> {
        for h in hypers {
            h.validate()?;
            if h.dim() != input_dim {
                return Err(contract("lengthscale count does not match the input dimension"));
            }
        }
        Ok(Self {
            inputs: DMatrix::zeros(input_dim, 0),
            outputs: hypers.iter().map(OutputModel::prior).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_points(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn hyperparameters(&self) -> Vec<Hyperparameters> {
        self.outputs.iter().map(|o| o.hyper.clone()).collect()
    }

    pub fn alpha(&self, i: usize) -> &DVector<f64> {
        &self.outputs[i].alpha
    }

    /// Diagonal term added to the Gram matrix of output `i`, noise plus any jitter.
    pub fn effective_noise_var(&self, i: usize) -> f64 {
        self.outputs[i].noise_var
    }

    /// `K + σ²I` rebuilt from the stored factor.
    pub fn factor_product(&self, i: usize) -> DMatrix<f64> {
        let l = &self.outputs[i].chol_l;
        l * l.transpose()
    }

    /// Noise-free Gram matrix of output `i` at the training inputs.
    pub fn gram(&self, i: usize) -> DMatrix<f64> {
        self.outputs[i].kernel.gram(&self.inputs)
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(contract(format!(
                "query of dimension {} for a {}-dimensional model",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(contract("query contains non-finite entries"));
        }
        Ok(())
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        Ok(self.outputs.iter().map(|o| o.mean(&o.kernel.cross(x, &self.inputs))).collect())
    }

    pub fn predict_var(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        self.outputs.iter().map(|o| o.var(x, o.kernel.cross(x, &self.inputs))).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_query(x)?;
        let mut mean = Vec::with_capacity(self.output_dim());
        let mut var = Vec::with_capacity(self.output_dim());
        for o in &self.outputs {
            let kx = o.kernel.cross(x, &self.inputs);
            mean.push(o.mean(&kx));
            var.push(o.var(x, kx)?);
        }
        Ok(Prediction { mean, var })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_point(y: f64, noise_std: f64) -> (TrainingSet, Vec<Hyperparameters>) {
        let data = TrainingSet::new(
            DMatrix::from_column_slice(1, 1, &[0.3]),
            DMatrix::from_element(1, 1, y),
            vec![noise_std],
        )
        .unwrap();
        let h = vec![Hyperparameters::new(1.0, vec![1.0], noise_std).unwrap()];
        (data, h)
    }

    fn random_set(rng: &mut ChaCha8Rng, d: usize, m: usize) -> TrainingSet {
        let x = DMatrix::from_fn(d, m, |_, _| rng.random_range(-3.0..3.0));
        let y = DMatrix::from_fn(m, 1, |j, _| x.column(j).iter().map(|v: &f64| v.sin()).sum::<f64>() + rng.random_range(-0.1..0.1));
        TrainingSet::new(x, y, vec![0.1]).unwrap()
    }

    /// Dense LU solve of `(K + σ²I) a = y`, independent of the Cholesky path.
    fn dense_solve(data: &TrainingSet, h: &Hyperparameters) -> DVector<f64> {
        let mut k = super::super::gram_matrix(&data.inputs, h).unwrap();
        for i in 0..k.nrows() {
            k[(i, i)] += h.noise_std * h.noise_std;
        }
        k.lu().solve(&data.target_column(0)).unwrap()
    }

    #[test]
    fn single_point_weights_mean_and_var() {
        let (data, h) = one_point(2.0, 1.0);
        let model = GpModel::fit(&data, &h).unwrap();
        assert!((model.alpha(0)[0] - 1.0).abs() < 1e-15);
        assert!((model.predict_mean(&[0.3]).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((model.predict_var(&[0.3]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = random_set(&mut rng, 2, 10);
        data.targets.fill(0.0);
        let model = GpModel::fit(&data, &[Hyperparameters::isotropic(1.0, 1.0, 2, 0.1).unwrap()]).unwrap();
        assert!(model.alpha(0).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn factor_and_weights_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_set(&mut rng, 2, 20);
        let h = Hyperparameters::new(1.2, vec![0.8, 1.5], 0.1).unwrap();
        let model = GpModel::fit(&data, std::slice::from_ref(&h)).unwrap();

        let mut target = super::super::gram_matrix(&data.inputs, &h).unwrap();
        for i in 0..20 {
            target[(i, i)] += 0.01;
        }
        let rel = (model.factor_product(0) - &target).norm() / target.norm();
        assert!(rel <= 1e-8, "factor error {rel:e}");

        let y = data.target_column(0);
        let residual = (&target * model.alpha(0) - &y).norm() / y.norm();
        assert!(residual <= 1e-8, "residual {residual:e}");
        let oracle = dense_solve(&data, &h);
        assert!((model.alpha(0) - oracle).amax() < 1e-8);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_set(&mut rng, 2, 15);
        let h = Hyperparameters::new(2.0, vec![0.5, 0.5], 0.1).unwrap();
        let model = GpModel::fit(&data, std::slice::from_ref(&h)).unwrap();
        let far = [3.0 + 20.0 * 0.5 + 1.0, 0.0];
        let p = model.predict(&far).unwrap();
        assert!(p.mean[0].abs() <= 1e-6 * data.targets.norm());
        assert!((p.var[0] - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn noise_free_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_set(&mut rng, 1, 12);
        let h = Hyperparameters::new(1.0, vec![0.7], 0.0).unwrap();
        let model = GpModel::fit(&data, &[h]).unwrap();
        for j in 0..data.len() {
            let mean = model.predict_mean(data.input(j)).unwrap()[0];
            assert!((mean - data.targets[(j, 0)]).abs() <= 1e-6);
        }
    }

    #[test]
    fn variance_at_training_inputs_below_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_set(&mut rng, 2, 25);
        let h = Hyperparameters::new(1.5, vec![1.0, 1.0], 0.2).unwrap();
        let model = GpModel::fit(&data, std::slice::from_ref(&h)).unwrap();
        for j in 0..data.len() {
            let v = model.predict_var(data.input(j)).unwrap()[0];
            assert!((0.0..=0.04 + 1e-9).contains(&v), "var {v}");
        }
    }

    #[test]
    fn prior_model_predicts_zero_mean() {
        let h = Hyperparameters::new(0.7, vec![1.0, 1.0], 0.1).unwrap();
        let model = GpModel::prior(2, &[h]).unwrap();
        let p = model.predict(&[0.1, -0.4]).unwrap();
        assert_eq!(p.mean, vec![0.0]);
        assert_eq!(p.var, vec![0.7]);
    }

    #[test]
    fn rejects_bad_queries() {
        let (data, h) = one_point(1.0, 0.1);
        let model = GpModel::fit(&data, &h).unwrap();
        assert!(model.predict_mean(&[0.0, 1.0]).is_err());
        assert!(model.predict_var(&[f64::NAN]).is_err());
    }

    #[test]
    fn training_set_shape_checks() {
        assert!(TrainingSet::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), vec![0.1]).is_err());
        assert!(TrainingSet::new(DMatrix::zeros(2, 3), DMatrix::zeros(3, 1), vec![]).is_err());
        let mut x = DMatrix::zeros(1, 1);
        x[(0, 0)] = f64::INFINITY;
        assert!(TrainingSet::new(x, DMatrix::zeros(1, 1), vec![0.0]).is_err());
    }
}
