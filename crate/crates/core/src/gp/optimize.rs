//! Marginal-likelihood maximization: projected gradient ascent in
//! log-parameter space with Barzilai–Borwein trial steps, Armijo
//! backtracking and seeded random restarts.

use super::kernel::Hyperparameters;
use super::likelihood::log_marginal_likelihood;
use super::model::TrainingSet;
use crate::error::{contract, Result};
use crate::exec::Exec;
use crate::seed;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub noise_floor: f64,
    pub seed: u64,
    /// Optimize on an evenly strided subset of at most this many points.
    pub max_points: Option<usize>,
    /// Box for `σ_f²` as multiples of the targets' mean square.
    pub signal_variance_range: (f64, f64),
    /// Box for each lengthscale as multiples of the input span on that axis.
    pub lengthscale_range: (f64, f64),
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 500,
            grad_tol: 1e-6,
            noise_floor: 1e-6,
            seed: 0,
            max_points: None,
            signal_variance_range: (1e-6, 1e2),
            lengthscale_range: (1e-3, 1e1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFit {
    pub hyper: Hyperparameters,
    pub log_likelihood: f64,
    /// Projected gradient ∞-norm at the returned point.
    pub grad_norm: f64,
    pub converged: bool,
    /// Set when no restart improved on its starting point.
    pub no_improvement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub outputs: Vec<OutputFit>,
}

impl OptimizeOutcome {
    pub fn hyperparameters(&self) -> Vec<Hyperparameters> {
        self.outputs.iter().map(|o| o.hyper.clone()).collect()
    }

    pub fn warning(&self) -> bool {
        self.outputs.iter().any(|o| o.no_improvement)
    }
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn for_output(data: &TrainingSet, output: usize, cfg: &OptimizeConfig) -> Self {
        let noise_floor = cfg.noise_floor;
        let (sv_lo, sv_hi) = cfg.signal_variance_range;
        let (ls_lo, ls_hi) = cfg.lengthscale_range;
        let d = data.input_dim();
        let y = data.target_column(output);
        let scale = (y.dot(&y) / y.len() as f64).max(1e-12);
        let mut lo = vec![(sv_lo * scale).ln()];
        let mut hi = vec![(sv_hi * scale).ln()];
        for axis in 0..d {
            let span = axis_span(data, axis);
            lo.push((ls_lo * span).ln());
            hi.push((ls_hi * span).ln());
        }
        lo.push(noise_floor.ln());
        hi.push((1e3 * scale.sqrt()).max(10.0 * noise_floor).ln());
        Self { lo, hi }
    }

    fn project(&self, theta: &mut [f64]) {
        for (t, (l, h)) in theta.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *t = t.clamp(*l, *h);
        }
    }

    /// Gradient with the components that push against an active bound removed.
    fn projected_grad(&self, theta: &[f64], grad: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(grad)
            .enumerate()
            .map(|(i, (t, g))| {
                if (*t <= self.lo[i] && *g < 0.0) || (*t >= self.hi[i] && *g > 0.0) {
                    0.0
                } else {
                    *g
                }
            })
            .collect()
    }
}

fn axis_span(data: &TrainingSet, axis: usize) -> f64 {
    let row = data.inputs.row(axis);
    let span = row.max() - row.min();
    if span > 0.0 {
        span
    } else {
        1.0
    }
}

fn heuristic_start(data: &TrainingSet, output: usize, noise_floor: f64) -> Vec<f64> {
    let y = data.target_column(output);
    let m = y.len() as f64;
    let mean = y.sum() / m;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let sf2 = if var > 0.0 { var } else { 1.0 };
    let mut theta = vec![sf2.ln()];
    for axis in 0..data.input_dim() {
        theta.push((0.5 * axis_span(data, axis)).ln());
    }
    theta.push((0.1 * sf2.sqrt()).max(noise_floor).ln());
    theta
}

fn objective(data: &TrainingSet, output: usize, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let h = Hyperparameters::from_log_params(theta);
    match log_marginal_likelihood(data, &h, output) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
        _ => None,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

struct Ascent {
    theta: Vec<f64>,
    value: f64,
    grad_norm: f64,
    converged: bool,
    start_value: f64,
}

fn ascend(data: &TrainingSet, output: usize, mut theta: Vec<f64>, bounds: &Bounds, cfg: &OptimizeConfig) -> Option<Ascent> {
    bounds.project(&mut theta);
    let (mut f, mut g) = objective(data, output, &theta)?;
    let start_value = f;
    let mut step = 1e-2 / inf_norm(&g).max(1e-12);
    let mut converged = false;
    let mut pg = bounds.projected_grad(&theta, &g);

    for _ in 0..cfg.max_iter {
        if inf_norm(&pg) <= cfg.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..40 {
            let mut trial: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x + t * gi).collect();
            bounds.project(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let ascent: f64 = moved.iter().zip(&g).map(|(s, gi)| s * gi).sum();
            if let Some((ft, gt)) = objective(data, output, &trial) {
                if ft >= f + 1e-4 * ascent && ft > f {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, ft, gt, moved)) = accepted else {
            break;
        };
        // Barzilai–Borwein step for the next trial
        let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = moved.iter().zip(&dg).map(|(a, b)| a * b).sum();
        let ss: f64 = moved.iter().map(|a| a * a).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-10, 1e4) } else { (2.0 * t).min(1e4) };
        theta = trial;
        f = ft;
        g = gt;
        pg = bounds.projected_grad(&theta, &g);
    }
    Some(Ascent { grad_norm: inf_norm(&pg), theta, value: f, converged, start_value })
}

fn optimize_output(data: &TrainingSet, output: usize, cfg: &OptimizeConfig, exec: Exec) -> Result<OutputFit> {
    let bounds = Bounds::for_output(data, output, cfg);
    let base = heuristic_start(data, output, cfg.noise_floor);
    let restarts = cfg.restarts.max(1);
    let starts: Vec<Vec<f64>> = (0..restarts)
        .map(|r| {
            if r == 0 {
                return base.clone();
            }
            let mut rng = seed::rng(cfg.seed, "gp-restart", (output * 1000 + r) as u64);
            base.iter().map(|t| t + rng.random_range(-1.5..1.5)).collect()
        })
        .collect();

    let runs = exec.map(&starts, |s| ascend(data, output, s.clone(), &bounds, cfg));
    let mut best: Option<&Ascent> = None;
    for run in runs.iter().flatten() {
        if best.is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| {
        crate::error::Error::IllConditioned(format!("no restart could evaluate the likelihood of output {output}"))
    })?;
    let no_improvement = runs.iter().flatten().all(|r| r.value <= r.start_value);
    Ok(OutputFit {
        hyper: Hyperparameters::from_log_params(&best.theta),
        log_likelihood: best.value,
        grad_norm: best.grad_norm,
        converged: best.converged,
        no_improvement,
    })
}

pub fn optimize_hyperparameters(data: &TrainingSet, cfg: &OptimizeConfig) -> Result<OptimizeOutcome> {
    optimize_hyperparameters_with(data, cfg, Exec::default())
}

pub fn optimize_hyperparameters_with(data: &TrainingSet, cfg: &OptimizeConfig, exec: Exec) -> Result<OptimizeOutcome> {
    if data.len() < 2 {
        return Err(contract("hyperparameter optimization needs at least two points"));
    }
    if !(cfg.noise_floor > 0.0) {
        return Err(contract("noise floor must be positive"));
    }
    for (lo, hi) in [cfg.signal_variance_range, cfg.lengthscale_range] {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(contract("hyperparameter ranges must be positive and ordered"));
        }
    }
    let subset;
    let data = match cfg.max_points {
        Some(cap) if cap >= 2 && cap < data.len() => {
            let m = data.len();
            let idx: Vec<usize> = (0..cap).map(|i| i * m / cap).collect();
            subset = data.subset(&idx);
            &subset
        }
        _ => data,
    };
    let outputs = (0..data.output_dim())
        .map(|i| optimize_output(data, i, cfg, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(OptimizeOutcome { outputs })
}
