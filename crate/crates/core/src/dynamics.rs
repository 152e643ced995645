//! Plants, the composite control law `u = u_c + u_gp − u_ex`, training data
//! generation and closed-loop integration.
//!
//! The feed-forward term needs the current acceleration `ẋ2`, which in turn
//! depends on the input. Each evaluation of the closed-loop vector field
//! resolves this algebraic loop by fixed-point iteration on
//! `a ← a + f⁻¹(x, a) − u(a)` (its fixed points are exactly the consistent
//! accelerations `a = f(x, u(a))`, and it contracts when the learned drift
//! has the right slope in `ẋ2`). If that map stalls the direct map
//! `a ← f(x, u(a))` is tried. The `Delayed` mode instead holds the
//! previous step's acceleration.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

use crate::domain::{regression_input, DomainSpec};
use crate::error::{contract, Error, Result};
use crate::exec::Exec;
use crate::geometry::{BoxRegion, Grid};
use crate::gp::{GpModel, TrainingSet};
use crate::io::{channel_names, Table};
use crate::linalg::{mat_vec, norm};
use crate::passivation::{storage_formula, GainSet};
use crate::seed;

/// Second-order plant `ẋ1 = x2`, `ẋ2 = f(x, u)` with an input map that is
/// invertible in `u`.
pub trait SystemDynamics: Sync {
    /// Half-dimension of the state.
    fn n(&self) -> usize;

    fn forward(&self, x1: &[f64], x2: &[f64], u: &[f64]) -> Vec<f64>;

    fn inverse(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Vec<f64>;

    /// The unknown part seen by the regression, `f⁻¹(x, ẋ2) + ẋ2`.
    fn drift(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Vec<f64> {
        self.inverse(x1, x2, xdot2).iter().zip(xdot2).map(|(u, a)| u + a).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuffingParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_damp: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self { alpha: -0.1, beta: -0.1, gamma_damp: 0.1 }
    }
}

/// `ẋ2 = ∛u − γx2 − αx1 − βx1³ + 1` with the real (signed) cube root.
pub fn duffing_f(x1: f64, x2: f64, u: f64, p: &DuffingParams) -> f64 {
    u.cbrt() - p.gamma_damp * x2 - p.alpha * x1 - p.beta * x1 * x1 * x1 + 1.0
}

/// `u = (ẋ2 + γx2 + αx1 + βx1³ − 1)³`
pub fn duffing_f_inverse(x1: f64, x2: f64, xdot2: f64, p: &DuffingParams) -> f64 {
    let r = xdot2 + p.gamma_damp * x2 + p.alpha * x1 + p.beta * x1 * x1 * x1 - 1.0;
    r * r * r
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Duffing {
    pub params: DuffingParams,
}

impl SystemDynamics for Duffing {
    fn n(&self) -> usize {
        1
    }

    fn forward(&self, x1: &[f64], x2: &[f64], u: &[f64]) -> Vec<f64> {
        vec![duffing_f(x1[0], x2[0], u[0], &self.params)]
    }

    fn inverse(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Vec<f64> {
        vec![duffing_f_inverse(x1[0], x2[0], xdot2[0], &self.params)]
    }
}

/// `y_ex = c x1 + x2`
pub fn passive_output(x1: &[f64], x2: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(contract("passive output needs c > 0"));
    }
    Ok(x1.iter().zip(x2).map(|(a, b)| c * a + b).collect())
}

/// `u_c = K_d x2 + K_p x1`
pub fn pd_control(x1: &[f64], x2: &[f64], g: &GainSet) -> Vec<f64> {
    let d = mat_vec(&g.kd, x2);
    let p = mat_vec(&g.kp, x1);
    d.iter().zip(&p).map(|(a, b)| a + b).collect()
}

/// Source of the feed-forward term `u_gp`.
pub trait Compensator: Sync {
    fn feedforward(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Result<Vec<f64>>;
}

impl Compensator for GpModel {
    fn feedforward(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Result<Vec<f64>> {
        self.predict_mean(&regression_input(xdot2, x1, x2))
    }
}

/// Uses the plant's true drift; the ideal learned model.
pub struct PerfectCompensator<'a, S: SystemDynamics>(pub &'a S);

impl<S: SystemDynamics> Compensator for PerfectCompensator<'_, S> {
    fn feedforward(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.drift(x1, x2, xdot2))
    }
}

/// Another compensator shifted by a constant vector.
pub struct OffsetCompensator<C> {
    pub inner: C,
    pub offset: Vec<f64>,
}

impl<C: Compensator> Compensator for OffsetCompensator<C> {
    fn feedforward(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.feedforward(x1, x2, xdot2)?.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
    }
}

impl<C: Compensator + ?Sized> Compensator for &C {
    fn feedforward(&self, x1: &[f64], x2: &[f64], xdot2: &[f64]) -> Result<Vec<f64>> {
        (**self).feedforward(x1, x2, xdot2)
    }
}

pub struct ZeroCompensator {
    pub n: usize,
}

impl Compensator for ZeroCompensator {
    fn feedforward(&self, _: &[f64], _: &[f64], _: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.n])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedforward {
    pub u_gp: Vec<f64>,
    /// False when the query left `Dx × Dẋ`, where the error bound does not apply.
    pub in_domain: bool,
}

pub fn gp_feedforward(model: &GpModel, x1: &[f64], x2: &[f64], xdot2_est: &[f64], domain: &DomainSpec) -> Result<Feedforward> {
    if model.input_dim() != 3 * x1.len() {
        return Err(contract("model input dimension must be 3n"));
    }
    let q = regression_input(xdot2_est, x1, x2);
    Ok(Feedforward { u_gp: model.predict_mean(&q)?, in_domain: domain.regression_box().contains(&q) })
}

/// Sign of `ẋ2` in the regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetSign {
    /// `ỹ = u + ẋ2 + ε`, the drift that cancels in the closed loop.
    #[default]
    Plus,
    /// `ỹ = u − ẋ2 + ε`, kept for comparison.
    Reversed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub data: TrainingSet,
    /// Nodes per regression axis `(ẋ2; x1; x2)`.
    pub lattice: Vec<usize>,
    /// Whether the lattice was thinned to hit the requested count.
    pub thinned: bool,
}

fn factorizations(m: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for f in 1..=m {
        if m % f == 0 {
            for mut rest in factorizations(m / f, parts - 1) {
                rest.insert(0, f);
                out.push(rest);
            }
        }
    }
    out
}

/// Lattice shape with product `m` and counts as even as possible, or a
/// thinned `k^d` lattice when no factorization is close to cubic.
fn lattice_shape(m: usize, widths: &[f64]) -> (Vec<usize>, bool) {
    let d = widths.len();
    let spread = |v: &[usize]| *v.iter().max().unwrap() as f64 / *v.iter().min().unwrap() as f64;
    let best = if m <= 1_000_000 {
        factorizations(m, d).into_iter().min_by(|a, b| spread(a).total_cmp(&spread(b)))
    } else {
        None
    };
    let (mut counts, thinned) = match best {
        Some(c) if spread(&c) <= 2.0 => (c, false),
        _ => {
            let mut k = (m as f64).powf(1.0 / d as f64).floor() as usize;
            while k.pow(d as u32) < m {
                k += 1;
            }
            (vec![k; d], k.pow(d as u32) != m)
        }
    };
    // larger counts to wider axes
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| widths[b].total_cmp(&widths[a]).then(a.cmp(&b)));
    let mut shape = vec![0; d];
    for (rank, &axis) in axes.iter().enumerate() {
        shape[axis] = counts[rank];
    }
    (shape, thinned)
}

/// Samples `m` regression inputs on a regular lattice over `Dẋ × Dx` and
/// records `ỹ = f⁻¹(x, ẋ2) ± ẋ2 + ε` with seeded Gaussian noise.
pub fn generate_training_data(
    sys: &dyn SystemDynamics,
    domain: &DomainSpec,
    m: usize,
    noise_std: &[f64],
    seed: u64,
    sign: TargetSign,
) -> Result<GeneratedData> {
    let n = sys.n();
    if m == 0 {
        return Err(contract("need at least one training point"));
    }
    if domain.n() != n || noise_std.len() != n {
        return Err(contract("domain and noise dimensions must match the plant"));
    }
    let region = domain.regression_box();
    let (shape, thinned) = lattice_shape(m, &region.widths());
    let grid = Grid::new(region, shape.clone())?;
    let total = grid.len();
    let indices: Vec<usize> = if thinned { (0..m).map(|i| i * total / m).collect() } else { (0..m).collect() };

    let noise: Vec<Normal<f64>> = noise_std
        .iter()
        .map(|s| Normal::new(0.0, *s).map_err(|e| contract(format!("noise std {s}: {e}"))))
        .collect::<Result<_>>()?;
    let mut rng = seed::rng(seed, "training-noise", 0);
    let d = 3 * n;
    let mut inputs = DMatrix::zeros(d, m);
    let mut targets = DMatrix::zeros(m, n);
    for (row, &idx) in indices.iter().enumerate() {
        let p = grid.point(idx);
        let (xdot2, rest) = p.split_at(n);
        let (x1, x2) = rest.split_at(n);
        let u = sys.inverse(x1, x2, xdot2);
        for i in 0..n {
            let base = match sign {
                TargetSign::Plus => u[i] + xdot2[i],
                TargetSign::Reversed => u[i] - xdot2[i],
            };
            targets[(row, i)] = base + noise[i].sample(&mut rng);
        }
        inputs.column_mut(row).copy_from_slice(&p);
    }
    Ok(GeneratedData { data: TrainingSet::new(inputs, targets, noise_std.to_vec())?, lattice: shape, thinned })
}

/// CSV layout of a training set: `xdot2_*, x1_*, x2_*, y_*`.
pub fn training_table(data: &TrainingSet) -> Table {
    let n = data.output_dim();
    let mut header = channel_names("xdot2", n);
    header.extend(channel_names("x1", n));
    header.extend(channel_names("x2", n));
    header.extend(channel_names("y", n));
    let mut t = Table::new(header);
    for j in 0..data.len() {
        let mut row = data.input(j).to_vec();
        row.extend(data.targets.row(j).iter());
        t.rows.push(row);
    }
    t
}

pub fn training_from_table(t: &Table, noise_std: &[f64]) -> Result<TrainingSet> {
    let n = t.header.iter().filter(|h| h.starts_with("y_")).count();
    if n == 0 || t.header.len() != 4 * n || noise_std.len() != n {
        return Err(Error::Config(format!(
            "training table with columns {:?} does not match {} noise levels",
            t.header,
            noise_std.len()
        )));
    }
    let m = t.rows.len();
    let inputs = DMatrix::from_fn(3 * n, m, |r, c| t.rows[c][r]);
    let targets = DMatrix::from_fn(m, n, |r, c| t.rows[r][3 * n + c]);
    TrainingSet::new(inputs, targets, noise_std.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopMode {
    #[default]
    FixedPoint,
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSettings {
    pub mode: LoopMode,
    /// Relative step size that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// A solve whose steps stop shrinking below this relative size has hit
    /// the model's evaluation noise and is accepted as noise-limited.
    pub stall_tol: f64,
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self { mode: LoopMode::FixedPoint, tol: 1e-10, max_iter: 50, stall_tol: 1e-6 }
    }
}

/// Outcome of one algebraic-loop solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopStatus {
    Converged,
    /// Stagnated at the floating-point noise of the compensator, below `stall_tol`.
    NoiseLimited,
    /// Cap reached or iteration diverged; the last usable iterate is applied.
    Unconverged,
}

impl LoopStatus {
    pub fn accepted(self) -> bool {
        self != LoopStatus::Unconverged
    }

    fn worst(self, other: Self) -> Self {
        use LoopStatus::*;
        match (self, other) {
            (Unconverged, _) | (_, Unconverged) => Unconverged,
            (NoiseLimited, _) | (_, NoiseLimited) => NoiseLimited,
            _ => Converged,
        }
    }
}

/// Input channels applied at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub u: Vec<f64>,
    pub u_c: Vec<f64>,
    pub u_gp: Vec<f64>,
    pub u_ex: Vec<f64>,
}

/// Closed-loop evaluation at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    /// Plant acceleration `f(x, u)` under the applied input.
    pub xdot2: Vec<f64>,
    /// Acceleration fed to the compensator.
    pub xdot2_est: Vec<f64>,
    pub inputs: Inputs,
    pub status: LoopStatus,
}

struct LoopEval<'a> {
    sys: &'a dyn SystemDynamics,
    comp: &'a dyn Compensator,
    x1: &'a [f64],
    x2: &'a [f64],
    u_c: Vec<f64>,
    u_ex: &'a [f64],
}

impl LoopEval<'_> {
    fn input(&self, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u_gp = self.comp.feedforward(self.x1, self.x2, a)?;
        let u = self.u_c.iter().zip(&u_gp).zip(self.u_ex).map(|((c, g), e)| c + g - e).collect();
        Ok((u, u_gp))
    }

    fn residual(&self, a: &[f64]) -> Result<f64> {
        let (u, _) = self.input(a)?;
        let f = self.sys.forward(self.x1, self.x2, &u);
        Ok(f.iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    fn iterate(&self, seed: &[f64], settings: &LoopSettings, direct: bool) -> Result<(Vec<f64>, LoopStatus)> {
        let mut a = seed.to_vec();
        let mut best_step = f64::INFINITY;
        let mut stale = 0;
        for _ in 0..settings.max_iter {
            let (u, _) = self.input(&a)?;
            let next: Vec<f64> = if direct {
                self.sys.forward(self.x1, self.x2, &u)
            } else {
                let inv = self.sys.inverse(self.x1, self.x2, &a);
                a.iter().zip(inv.iter().zip(&u)).map(|(ai, (fi, ui))| ai + fi - ui).collect()
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Ok((a, LoopStatus::Unconverged));
            }
            let step = next.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let scale = 1.0 + norm(&next);
            a = next;
            if step <= settings.tol * scale {
                return Ok((a, LoopStatus::Converged));
            }
            if step < best_step {
                best_step = step;
                stale = 0;
            } else {
                stale += 1;
                if stale >= 3 {
                    let status =
                        if best_step <= settings.stall_tol * scale { LoopStatus::NoiseLimited } else { LoopStatus::Unconverged };
                    return Ok((a, status));
                }
            }
        }
        Ok((a, LoopStatus::Unconverged))
    }
}

/// Evaluates the closed loop at `(x1, x2)`, resolving the algebraic loop
/// from `seed` (or holding `seed` in delayed mode).
#[allow(clippy::too_many_arguments)]
pub fn resolve_loop(
    sys: &dyn SystemDynamics,
    comp: &dyn Compensator,
    g: &GainSet,
    u_ex: &[f64],
    x1: &[f64],
    x2: &[f64],
    seed: &[f64],
    settings: &LoopSettings,
) -> Result<Resolved> {
    let eval = LoopEval { sys, comp, x1, x2, u_c: pd_control(x1, x2, g), u_ex };
    let (a, status) = match settings.mode {
        LoopMode::Delayed => (seed.to_vec(), LoopStatus::Converged),
        LoopMode::FixedPoint => {
            let (a, st_a) = eval.iterate(seed, settings, false)?;
            if st_a.accepted() {
                (a, st_a)
            } else {
                let (b, st_b) = eval.iterate(seed, settings, true)?;
                if st_b.accepted() {
                    (b, st_b)
                } else {
                    let (ra, rb) = (eval.residual(&a)?, eval.residual(&b)?);
                    if ra.is_finite() && (ra <= rb || !rb.is_finite()) {
                        (a, LoopStatus::Unconverged)
                    } else {
                        (b, LoopStatus::Unconverged)
                    }
                }
            }
        }
    };
    let (u, u_gp) = eval.input(&a)?;
    let xdot2 = sys.forward(x1, x2, &u);
    Ok(Resolved { xdot2, xdot2_est: a, inputs: Inputs { u, u_c: eval.u_c, u_gp, u_ex: u_ex.to_vec() }, status })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Evaluation at the start of the step.
    pub start: Resolved,
    /// Acceleration to seed the next step with.
    pub seed_next: Vec<f64>,
    /// Worst solve status over the four stages.
    pub status: LoopStatus,
}

fn axpy(x: &[f64], h: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

/// One classical RK4 step of `ẋ1 = x2`, `ẋ2 = f(x, u_c + u_gp − u_ex)` with
/// `u_ex` held over the step.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_step(
    sys: &dyn SystemDynamics,
    comp: &dyn Compensator,
    g: &GainSet,
    u_ex: &[f64],
    x1: &[f64],
    x2: &[f64],
    xdot2_prev: &[f64],
    dt: f64,
    settings: &LoopSettings,
) -> Result<Step> {
    if !(dt > 0.0) {
        return Err(contract("time step must be positive"));
    }
    let delayed = settings.mode == LoopMode::Delayed;
    let s1 = resolve_loop(sys, comp, g, u_ex, x1, x2, xdot2_prev, settings)?;
    let k1 = (x2.to_vec(), s1.xdot2.clone());

    let seed2 = if delayed { xdot2_prev } else { &s1.xdot2_est };
    let (y1, y2) = (axpy(x1, 0.5 * dt, &k1.0), axpy(x2, 0.5 * dt, &k1.1));
    let s2 = resolve_loop(sys, comp, g, u_ex, &y1, &y2, seed2, settings)?;
    let k2 = (y2, s2.xdot2.clone());

    let seed3 = if delayed { xdot2_prev } else { &s2.xdot2_est };
    let (y1, y2) = (axpy(x1, 0.5 * dt, &k2.0), axpy(x2, 0.5 * dt, &k2.1));
    let s3 = resolve_loop(sys, comp, g, u_ex, &y1, &y2, seed3, settings)?;
    let k3 = (y2, s3.xdot2.clone());

    let seed4 = if delayed { xdot2_prev } else { &s3.xdot2_est };
    let (y1, y2) = (axpy(x1, dt, &k3.0), axpy(x2, dt, &k3.1));
    let s4 = resolve_loop(sys, comp, g, u_ex, &y1, &y2, seed4, settings)?;
    let k4 = (y2, s4.xdot2.clone());

    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|i| x[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])).collect()
    };
    let nx1 = combine(x1, &k1.0, &k2.0, &k3.0, &k4.0);
    let nx2 = combine(x2, &k1.1, &k2.1, &k3.1, &k4.1);
    let status = s1.status.worst(s2.status).worst(s3.status).worst(s4.status);
    let seed_next = if delayed { s1.xdot2.clone() } else { s4.xdot2_est.clone() };
    Ok(Step { x1: nx1, x2: nx2, start: s1, seed_next, status })
}

/// Recorded closed-loop run; all channels share the time base.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub x1: Vec<Vec<f64>>,
    pub x2: Vec<Vec<f64>>,
    pub xdot2: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_c: Vec<Vec<f64>>,
    pub u_gp: Vec<Vec<f64>>,
    pub u_ex: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    /// The state left the safety box and the run was cut short.
    pub exited: bool,
    pub unconverged_steps: usize,
    /// Steps whose loop solves stopped at the compensator's noise floor.
    pub noise_limited_steps: usize,
}

impl Trajectory {
    fn empty(n: usize) -> Self {
        Self {
            n,
            times: Vec::new(),
            x1: Vec::new(),
            x2: Vec::new(),
            xdot2: Vec::new(),
            u: Vec::new(),
            u_c: Vec::new(),
            u_gp: Vec::new(),
            u_ex: Vec::new(),
            v: Vec::new(),
            exited: false,
            unconverged_steps: 0,
            noise_limited_steps: 0,
        }
    }

    fn push(&mut self, t: f64, x1: &[f64], x2: &[f64], r: &Resolved, g: &GainSet) {
        self.times.push(t);
        self.x1.push(x1.to_vec());
        self.x2.push(x2.to_vec());
        self.xdot2.push(r.xdot2.clone());
        self.u.push(r.inputs.u.clone());
        self.u_c.push(r.inputs.u_c.clone());
        self.u_gp.push(r.inputs.u_gp.clone());
        self.u_ex.push(r.inputs.u_ex.clone());
        self.v.push(storage_formula(x1, x2, g));
    }

    fn count(&mut self, status: LoopStatus) {
        match status {
            LoopStatus::Converged => {}
            LoopStatus::NoiseLimited => self.noise_limited_steps += 1,
            LoopStatus::Unconverged => self.unconverged_steps += 1,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖(x2; x1)‖` per sample.
    pub fn state_norms(&self) -> Vec<f64> {
        self.x1
            .iter()
            .zip(&self.x2)
            .map(|(a, b)| (norm(a).powi(2) + norm(b).powi(2)).sqrt())
            .collect()
    }

    pub fn to_table(&self) -> Table {
        let n = self.n;
        let mut header = vec!["t".to_string()];
        for name in ["x1", "x2", "xdot2", "u", "u_c", "u_gp", "u_ex"] {
            header.extend(channel_names(name, n));
        }
        header.push("V".into());
        let mut t = Table::new(header);
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            for ch in [&self.x1, &self.x2, &self.xdot2, &self.u, &self.u_c, &self.u_gp, &self.u_ex] {
                row.extend_from_slice(&ch[k]);
            }
            row.push(self.v[k]);
            t.rows.push(row);
        }
        t
    }
}

/// External input as a function of time and state.
pub type InputSignal<'a> = &'a (dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Sync);

pub struct SimSpec<'a> {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub loop_settings: LoopSettings,
    pub u_ex: InputSignal<'a>,
    /// Run stops once the state leaves this box.
    pub safety_box: Option<BoxRegion>,
}

pub fn zero_input(n: usize) -> impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Sync {
    move |_, _, _| vec![0.0; n]
}

pub fn simulate(sys: &dyn SystemDynamics, comp: &dyn Compensator, g: &GainSet, spec: &SimSpec<'_>) -> Result<Trajectory> {
    let n = sys.n();
    if spec.x1.len() != n || spec.x2.len() != n || g.n() != n {
        return Err(contract("initial state and gains must match the plant dimension"));
    }
    if !(spec.horizon > 0.0 && spec.dt > 0.0) {
        return Err(contract("horizon and time step must be positive"));
    }
    let steps = (spec.horizon / spec.dt).round() as usize;
    let mut traj = Trajectory::empty(n);
    let (mut x1, mut x2) = (spec.x1.clone(), spec.x2.clone());
    let u_ex0 = (spec.u_ex)(0.0, &x1, &x2);
    // consistent acceleration under a perfect model
    let mut seed: Vec<f64> = pd_control(&x1, &x2, g).iter().zip(&u_ex0).map(|(c, e)| e - c).collect();

    for k in 0..steps {
        let t = k as f64 * spec.dt;
        let u_ex = (spec.u_ex)(t, &x1, &x2);
        let step = closed_loop_step(sys, comp, g, &u_ex, &x1, &x2, &seed, spec.dt, &spec.loop_settings)?;
        traj.push(t, &x1, &x2, &step.start, g);
        traj.count(step.status);
        x1 = step.x1;
        x2 = step.x2;
        seed = step.seed_next;
        if x1.iter().chain(&x2).any(|v| !v.is_finite()) {
            traj.exited = true;
            return Ok(traj);
        }
        if let Some(b) = &spec.safety_box {
            let mut x = x1.clone();
            x.extend_from_slice(&x2);
            if !b.contains(&x) {
                traj.exited = true;
                return Ok(traj);
            }
        }
    }
    let t = steps as f64 * spec.dt;
    let u_ex = (spec.u_ex)(t, &x1, &x2);
    let last = resolve_loop(sys, comp, g, &u_ex, &x1, &x2, &seed, &spec.loop_settings)?;
    traj.count(last.status);
    traj.push(t, &x1, &x2, &last, g);
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// `u = 0`
    OpenLoop,
    /// Full control law with `u_ex = 0`.
    ClosedLoop,
}

/// Vector field `(ẋ1, ẋ2)` at the nodes of a grid over the state `(x1; x2)`.
pub fn vector_field_export(
    sys: &dyn SystemDynamics,
    comp: &dyn Compensator,
    g: &GainSet,
    grid: &Grid,
    mode: FieldMode,
    settings: &LoopSettings,
) -> Result<Table> {
    vector_field_export_with(sys, comp, g, grid, mode, settings, Exec::default())
}

pub fn vector_field_export_with(
    sys: &dyn SystemDynamics,
    comp: &dyn Compensator,
    g: &GainSet,
    grid: &Grid,
    mode: FieldMode,
    settings: &LoopSettings,
    exec: Exec,
) -> Result<Table> {
    let n = sys.n();
    if grid.region.dim() != 2 * n {
        return Err(contract("field grid must span the 2n-dimensional state"));
    }
    let rows = exec
        .map_range(grid.len(), |i| -> Result<Vec<f64>> {
            let p = grid.point(i);
            let (x1, x2) = p.split_at(n);
            let xdot2 = match mode {
                FieldMode::OpenLoop => sys.forward(x1, x2, &vec![0.0; n]),
                FieldMode::ClosedLoop => {
                    let zero = vec![0.0; n];
                    let seed: Vec<f64> = pd_control(x1, x2, g).iter().map(|c| -c).collect();
                    resolve_loop(sys, comp, g, &zero, x1, x2, &seed, settings)?.xdot2
                }
            };
            let mut row = p.clone();
            row.extend_from_slice(x2);
            row.extend_from_slice(&xdot2);
            Ok(row)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut header = channel_names("x1", n);
    header.extend(channel_names("x2", n));
    header.extend(channel_names("x1dot", n));
    header.extend(channel_names("x2dot", n));
    let mut t = Table::new(header);
    t.rows = rows;
    Ok(t)
}
