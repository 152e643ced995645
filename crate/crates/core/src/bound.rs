//! High-probability bound on the regression error of the feed-forward model.
//!
//! Per output `j` the error is bounded by `Δ_j · σ_j(x)` where
//! `Δ_j = sqrt(2‖f_j‖²_k + 300 γ_j ln³((m+1)/δ_sc))`, `γ_j` is the maximum
//! information gain of `m+1` points and `δ_sc = 1 − δ^{1/n}` is the
//! per-output confidence that composes to `δ` over all outputs. The
//! supremum of `‖Δ ∘ σ(x)‖` over the working region is `Δ̄`.
//!
//! The maximization inside `γ_j` is done greedily over a candidate grid; by
//! submodularity of the log-determinant the result is within `1 − 1/e` of
//! the true maximum over that grid. The RKHS norm defaults to that of the
//! posterior mean interpolant, which is a data-driven surrogate: the
//! probability claim only holds if the true norm does not exceed it.

use nalgebra::DMatrix;

use crate::domain::{regression_input, DomainSpec};
use crate::error::{contract, Error, Result};
use crate::exec::{argmax, Exec};
use crate::geometry::Grid;
use crate::gp::{GpModel, Hyperparameters};
use crate::io::{parse_report, Report};

pub fn delta_sc_from_delta(delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(contract(format!("confidence δ = {delta} outside (0, 1)")));
    }
    if n == 0 {
        return Err(contract("output dimension must be positive"));
    }
    // 1 − δ^{1/n}, computed without cancellation for δ near 1
    Ok(-(delta.ln() / n as f64).exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformationGain {
    pub gamma: f64,
    /// Candidate indices in selection order.
    pub chosen: Vec<usize>,
    /// Gain after each selection, nondecreasing.
    pub trace: Vec<f64>,
}

/// Greedy maximization of `½ ln det(I + σ⁻² K_S)` over subsets `S` of the
/// candidate columns with `|S| = budget`. Ties go to the lowest index.
pub fn information_gain(candidates: &DMatrix<f64>, hyper: &Hyperparameters, budget: usize) -> Result<InformationGain> {
    information_gain_with(candidates, hyper, budget, Exec::default())
}

pub fn information_gain_with(
    candidates: &DMatrix<f64>,
    hyper: &Hyperparameters,
    budget: usize,
    exec: Exec,
) -> Result<InformationGain> {
    let count = candidates.ncols();
    if count == 0 {
        return Err(contract("empty candidate set"));
    }
    if budget > count {
        return Err(contract(format!("budget {budget} exceeds {count} candidates")));
    }
    hyper.validate()?;
    if candidates.nrows() != hyper.dim() {
        return Err(contract("candidate dimension does not match the lengthscales"));
    }
    let noise_var = hyper.noise_std * hyper.noise_std;
    if noise_var <= 0.0 {
        return Err(contract("information gain is unbounded without observation noise"));
    }

    let kernel = hyper.kernel();
    let d = candidates.nrows();
    let data = candidates.as_slice();
    let point = |j: usize| &data[j * d..(j + 1) * d];

    // Incremental pivoted factorization: rows[x] holds the projections of
    // candidate x on the selected pivots, var[x] its posterior variance.
    struct Cand {
        row: Vec<f64>,
        var: f64,
        taken: bool,
    }
    let mut cands: Vec<Cand> = (0..count)
        .map(|j| Cand { row: Vec::with_capacity(budget), var: kernel.eval(point(j), point(j)), taken: false })
        .collect();

    let mut gamma = 0.0;
    let mut chosen = Vec::with_capacity(budget);
    let mut trace = Vec::with_capacity(budget);
    for _ in 0..budget {
        let scores: Vec<f64> = cands.iter().map(|c| if c.taken { f64::NAN } else { c.var }).collect();
        let s = argmax(&scores).ok_or_else(|| Error::Internal("no candidate left".into()))?;
        let v = cands[s].var.max(0.0);
        gamma += 0.5 * (v / noise_var).ln_1p();
        chosen.push(s);
        trace.push(gamma);

        let pivot_row = cands[s].row.clone();
        let pivot = point(s).to_vec();
        let scale = (v + noise_var).sqrt();
        cands[s].taken = true;
        exec.for_each_mut(&mut cands, |j, c| {
            if c.taken && j != s {
                return;
            }
            let cross = kernel.eval(point(j), &pivot) - c.row.iter().zip(&pivot_row).map(|(a, b)| a * b).sum::<f64>();
            let coeff = if j == s { v / scale } else { cross / scale };
            c.row.push(coeff);
            c.var -= coeff * coeff;
        });
    }
    Ok(InformationGain { gamma, chosen, trace })
}

/// RKHS norm of the posterior-mean interpolant of output `i`,
/// `sqrt(α_iᵀ K α_i)`, raised to `user_bound` when one is given.
pub fn rkhs_norm_estimate(model: &GpModel, i: usize, user_bound: Option<f64>) -> f64 {
    let surrogate = if model.num_points() == 0 {
        0.0
    } else {
        let alpha = model.alpha(i);
        let k = model.gram(i);
        alpha.dot(&(k * alpha)).max(0.0).sqrt()
    };
    match user_bound {
        Some(u) => surrogate.max(u),
        None => surrogate,
    }
}

/// `sqrt(2‖f‖² + 300 γ ln³(ratio))` with `ratio = (m+1)/δ_sc`.
pub fn delta_component(rkhs_norm: f64, gamma: f64, ratio: f64) -> f64 {
    let l = ratio.ln();
    (2.0 * rkhs_norm * rkhs_norm + 300.0 * gamma * l * l * l).sqrt()
}

pub fn delta_vector(rkhs_norms: &[f64], gammas: &[f64], m: usize, delta: f64) -> Result<Vec<f64>> {
    if rkhs_norms.len() != gammas.len() {
        return Err(contract("norm and gain vectors differ in length"));
    }
    if rkhs_norms.iter().chain(gammas).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(contract("norms and gains must be finite and nonnegative"));
    }
    let delta_sc = delta_sc_from_delta(delta, rkhs_norms.len())?;
    let ratio = (m as f64 + 1.0) / delta_sc;
    Ok(rkhs_norms.iter().zip(gammas).map(|(f, g)| delta_component(*f, *g, ratio)).collect())
}

/// `‖Δ ∘ σ(x)‖` at a regression input `(ẋ2; x1; x2)` inside the domain.
pub fn pointwise_bound(model: &GpModel, delta_vec: &[f64], query: &[f64], domain: &DomainSpec) -> Result<f64> {
    let region = domain.regression_box();
    if !region.contains(query) {
        return Err(Error::Domain(format!("query {query:?} outside Dẋ × Dx")));
    }
    pointwise_bound_unchecked(model, delta_vec, query)
}

pub(crate) fn pointwise_bound_unchecked(model: &GpModel, delta_vec: &[f64], query: &[f64]) -> Result<f64> {
    if delta_vec.len() != model.output_dim() {
        return Err(contract("Δ has the wrong length"));
    }
    let var = model.predict_var(query)?;
    Ok(delta_vec.iter().zip(&var).map(|(d, v)| (d * d) * v).sum::<f64>().sqrt())
}

/// Regression-input version of [`pointwise_bound`] taking the state parts separately.
pub fn pointwise_bound_at(model: &GpModel, delta_vec: &[f64], xdot2: &[f64], x1: &[f64], x2: &[f64]) -> Result<f64> {
    pointwise_bound_unchecked(model, delta_vec, &regression_input(xdot2, x1, x2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSupremum {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub resolution: Vec<usize>,
}

/// Maximum of the pointwise bound over a regular grid on `Dẋ × Dx`.
pub fn delta_bar(model: &GpModel, delta_vec: &[f64], domain: &DomainSpec, resolution: &[usize]) -> Result<GridSupremum> {
    delta_bar_with(model, delta_vec, domain, resolution, Exec::default())
}

pub fn delta_bar_with(
    model: &GpModel,
    delta_vec: &[f64],
    domain: &DomainSpec,
    resolution: &[usize],
    exec: Exec,
) -> Result<GridSupremum> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(contract("grid resolution must be at least 2 per axis"));
    }
    let grid = domain.regression_box().grid(resolution)?;
    grid_supremum(model, delta_vec, &grid, exec)
}

pub fn grid_supremum(model: &GpModel, delta_vec: &[f64], grid: &Grid, exec: Exec) -> Result<GridSupremum> {
    let values = exec
        .map_range(grid.len(), |i| pointwise_bound_unchecked(model, delta_vec, &grid.point(i)))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let best = argmax(&values).ok_or_else(|| Error::Internal("empty grid".into()))?;
    Ok(GridSupremum { value: values[best], argmax: grid.point(best), resolution: grid.counts.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    pub delta: f64,
    /// User-supplied RKHS norm bounds, one per output.
    pub rkhs_norms: Option<Vec<f64>>,
    /// Nodes per axis of the candidate grid for the information gain.
    pub candidate_resolution: usize,
    /// Nodes per axis of the grid for the supremum `Δ̄`.
    pub grid_resolution: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { delta: 0.95, rkhs_norms: None, candidate_resolution: 12, grid_resolution: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelErrorBound {
    pub delta: f64,
    pub delta_sc: f64,
    pub m: usize,
    pub rkhs_norms: Vec<f64>,
    pub gammas: Vec<f64>,
    pub delta_vec: Vec<f64>,
    pub delta_bar: f64,
    pub argmax: Vec<f64>,
    pub grid_resolution: Vec<usize>,
    pub candidate_resolution: Vec<usize>,
    /// True when the norms came only from the interpolant surrogate.
    pub rkhs_surrogate: bool,
}

pub fn compute_bound(model: &GpModel, cfg: &BoundConfig, domain: &DomainSpec) -> Result<ModelErrorBound> {
    compute_bound_with(model, cfg, domain, Exec::default())
}

pub fn compute_bound_with(model: &GpModel, cfg: &BoundConfig, domain: &DomainSpec, exec: Exec) -> Result<ModelErrorBound> {
    let n = model.output_dim();
    let region = domain.regression_box();
    if region.dim() != model.input_dim() {
        return Err(contract("domain does not match the model input dimension"));
    }
    if let Some(u) = &cfg.rkhs_norms {
        if u.len() != n {
            return Err(contract("one RKHS norm bound per output is required"));
        }
    }
    let delta_sc = delta_sc_from_delta(cfg.delta, n)?;
    let m = model.num_points();
    let d = region.dim();

    // enough candidates for a budget of m + 1 points
    let mut per_axis = cfg.candidate_resolution.max(2);
    while per_axis.pow(d as u32) < m + 1 {
        per_axis += 1;
    }
    let cand_grid = Grid::uniform(region.clone(), per_axis)?;
    let cand_points = cand_grid.points();
    let candidates = DMatrix::from_fn(d, cand_points.len(), |r, c| cand_points[c][r]);

    let hypers = model.hyperparameters();
    let mut gammas = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for (i, h) in hypers.iter().enumerate() {
        gammas.push(information_gain_with(&candidates, h, m + 1, exec)?.gamma);
        norms.push(rkhs_norm_estimate(model, i, cfg.rkhs_norms.as_ref().map(|u| u[i])));
    }
    let delta_vec = delta_vector(&norms, &gammas, m, cfg.delta)?;
    let sup = delta_bar_with(model, &delta_vec, domain, &vec![cfg.grid_resolution; d], exec)?;
    Ok(ModelErrorBound {
        delta: cfg.delta,
        delta_sc,
        m,
        rkhs_norms: norms,
        gammas,
        delta_vec,
        delta_bar: sup.value,
        argmax: sup.argmax,
        grid_resolution: sup.resolution,
        candidate_resolution: cand_grid.counts,
        rkhs_surrogate: cfg.rkhs_norms.is_none(),
    })
}

impl ModelErrorBound {
    pub fn to_report(&self) -> String {
        let counts = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        Report::new("model error bound")
            .num("delta", self.delta)
            .num("delta_sc", self.delta_sc)
            .text("m", self.m)
            .nums("rkhs_norm", &self.rkhs_norms)
            .text("rkhs_source", if self.rkhs_surrogate { "surrogate" } else { "user" })
            .nums("gamma", &self.gammas)
            .nums("Delta", &self.delta_vec)
            .num("delta_bar", self.delta_bar)
            .nums("argmax", &self.argmax)
            .text("grid_resolution", counts(&self.grid_resolution))
            .text("candidate_resolution", counts(&self.candidate_resolution))
            .finish()
    }

    pub fn from_report(text: &str) -> Result<Self> {
        let kv = parse_report(text);
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("bound report lacks `{k}`")))
        };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|e| Error::Config(format!("`{k}`: {e}"))))
                .collect()
        };
        let counts = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split_whitespace()
                .map(|w| w.parse::<usize>().map_err(|e| Error::Config(format!("`{k}`: {e}"))))
                .collect()
        };
        let scalar = |k: &str| -> Result<f64> {
            floats(k)?.first().copied().ok_or_else(|| Error::Config(format!("`{k}` is empty")))
        };
        Ok(Self {
            delta: scalar("delta")?,
            delta_sc: scalar("delta_sc")?,
            m: get("m")?.parse().map_err(|e| Error::Config(format!("`m`: {e}")))?,
            rkhs_norms: floats("rkhs_norm")?,
            gammas: floats("gamma")?,
            delta_vec: floats("Delta")?,
            delta_bar: scalar("delta_bar")?,
            argmax: floats("argmax")?,
            grid_resolution: counts("grid_resolution")?,
            candidate_resolution: counts("candidate_resolution")?,
            rkhs_surrogate: get("rkhs_source")? == "surrogate",
        })
    }
}
