//! Run configuration: a sectioned TOML file whose defaults reproduce the
//! Duffing benchmark. Unknown keys are rejected with their path.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::bound::BoundConfig;
use crate::domain::DomainSpec;
use crate::dynamics::{DuffingParams, LoopMode, LoopSettings, TargetSign};
use crate::error::{Error, Result};
use crate::geometry::BoxRegion;
use crate::gp::{Hyperparameters, OptimizeConfig};
use crate::io::read_file;
use crate::passivation::{synthesize_gains, GainCaps, GainSet};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream in the pipeline.
    pub seed: u64,
    pub system: SystemSection,
    pub domain: DomainSection,
    pub data: DataSection,
    pub gp: GpSection,
    pub bound: BoundSection,
    pub gains: GainsSection,
    pub sim: SimSection,
    pub audit: AuditSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    /// Bounds on `(x1; x2)`.
    pub dx_lo: Vec<f64>,
    pub dx_hi: Vec<f64>,
    pub dxdot_lo: Vec<f64>,
    pub dxdot_hi: Vec<f64>,
    pub u_ex_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSignSetting {
    Plus,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub m: usize,
    pub noise_std: Vec<f64>,
    pub target_sign: TargetSignSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperMode {
    Optimize,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub hyperparameters: HyperMode,
    /// Used when `hyperparameters = "fixed"`, one entry per output.
    pub signal_variance: Vec<f64>,
    pub lengthscales: Vec<Vec<f64>>,
    pub noise_std: Vec<f64>,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub noise_floor: f64,
    /// Optimize on at most this many points; 0 uses all.
    pub max_points: usize,
    pub signal_variance_max: f64,
    pub lengthscale_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub delta: f64,
    /// Known RKHS norm bounds per output; empty uses the posterior-mean surrogate.
    pub rkhs_norms: Vec<f64>,
    pub candidate_resolution: usize,
    pub grid_resolution: usize,
    /// `Δ̄` used for certification unless `use_computed_delta_bar` is set.
    pub delta_bar_override: f64,
    pub use_computed_delta_bar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    Fixed,
    Synthesize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub mode: GainMode,
    /// Row-major matrices.
    pub kd: Vec<Vec<f64>>,
    pub kp: Vec<Vec<f64>>,
    pub c: f64,
    /// Synthesis target for `λ_min(Λ)`; `kd`/`kp` act as seeds.
    pub lambda_target: f64,
    pub kd_bar: f64,
    pub kp_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopModeSetting {
    FixedPoint,
    Delayed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Explicit initial states `[x1..., x2...]`.
    pub x0: Vec<Vec<f64>>,
    /// Extra seeded initial states from the admissible storage sublevel set.
    pub random_initial_states: usize,
    pub horizon: f64,
    pub dt: f64,
    pub loop_mode: LoopModeSetting,
    pub loop_tol: f64,
    pub loop_max_iter: usize,
    pub loop_stall_tol: f64,
    /// Half-width of the box that stops a run, per state coordinate.
    pub safety_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub tolerance: f64,
    /// Nodes per state axis of the audit grid.
    pub grid: usize,
    /// Random regression inputs for the model-error coverage check.
    pub coverage_points: usize,
    pub require_containment: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            system: SystemSection::default(),
            domain: DomainSection::default(),
            data: DataSection::default(),
            gp: GpSection::default(),
            bound: BoundSection::default(),
            gains: GainsSection::default(),
            sim: SimSection::default(),
            audit: AuditSection::default(),
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = DuffingParams::default();
        Self { name: "duffing".into(), alpha: p.alpha, beta: p.beta, gamma: p.gamma_damp }
    }
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            dx_lo: vec![-2.0, -2.0],
            dx_hi: vec![2.0, 2.0],
            dxdot_lo: vec![-2.55],
            dxdot_hi: vec![4.55],
            u_ex_max: 0.1,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self { m: 720, noise_std: vec![0.01], target_sign: TargetSignSetting::Plus }
    }
}

impl Default for GpSection {
    fn default() -> Self {
        let o = OptimizeConfig::default();
        Self {
            hyperparameters: HyperMode::Optimize,
            signal_variance: Vec::new(),
            lengthscales: Vec::new(),
            noise_std: Vec::new(),
            restarts: o.restarts,
            max_iter: o.max_iter,
            grad_tol: o.grad_tol,
            noise_floor: o.noise_floor,
            max_points: 240,
            signal_variance_max: o.signal_variance_range.1,
            lengthscale_max: o.lengthscale_range.1,
        }
    }
}

impl Default for BoundSection {
    fn default() -> Self {
        let b = BoundConfig::default();
        Self {
            delta: b.delta,
            rkhs_norms: Vec::new(),
            candidate_resolution: b.candidate_resolution,
            grid_resolution: b.grid_resolution,
            delta_bar_override: 0.045,
            use_computed_delta_bar: false,
        }
    }
}

impl Default for GainsSection {
    fn default() -> Self {
        Self {
            mode: GainMode::Fixed,
            kd: vec![vec![0.9]],
            kp: vec![vec![1.0]],
            c: 0.5,
            lambda_target: 0.2,
            kd_bar: 0.9,
            kp_bar: 0.254,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        let l = LoopSettings::default();
        Self {
            x0: Vec::new(),
            random_initial_states: 20,
            horizon: 30.0,
            dt: 0.01,
            loop_mode: LoopModeSetting::FixedPoint,
            loop_tol: l.tol,
            loop_max_iter: l.max_iter,
            loop_stall_tol: l.stall_tol,
            safety_half_width: 10.0,
        }
    }
}

impl Default for AuditSection {
    fn default() -> Self {
        Self { tolerance: 1e-3, grid: 50, coverage_points: 2000, require_containment: true }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn matrix(key: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(bad(key, format!("expected a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_file(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every derived object can be built.
    pub fn validate(&self) -> Result<()> {
        if self.system.name != "duffing" {
            return Err(bad("system.name", format!("unknown system `{}`", self.system.name)));
        }
        for (k, v) in [("system.alpha", self.system.alpha), ("system.beta", self.system.beta), ("system.gamma", self.system.gamma)] {
            if !v.is_finite() {
                return Err(bad(k, "must be finite"));
            }
        }
        let domain = self.domain_spec()?;
        let n = domain.n();
        if n != 1 {
            return Err(bad("domain", "the duffing system has n = 1"));
        }
        if self.data.m == 0 {
            return Err(bad("data.m", "must be at least 1"));
        }
        if self.data.noise_std.len() != n || self.data.noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(bad("data.noise_std", format!("need {n} nonnegative values")));
        }
        if self.gp.hyperparameters == HyperMode::Fixed {
            self.fixed_hyperparameters()?;
        }
        if !(self.gp.noise_floor > 0.0) {
            return Err(bad("gp.noise_floor", "must be positive"));
        }
        if !(self.gp.signal_variance_max > 0.0 && self.gp.lengthscale_max > 0.0) {
            return Err(bad("gp", "signal_variance_max and lengthscale_max must be positive"));
        }
        if !(self.bound.delta > 0.0 && self.bound.delta < 1.0) {
            return Err(bad("bound.delta", "must lie in (0, 1)"));
        }
        if !self.bound.rkhs_norms.is_empty() && self.bound.rkhs_norms.len() != n {
            return Err(bad("bound.rkhs_norms", format!("need {n} values or none")));
        }
        if self.bound.grid_resolution < 2 || self.bound.candidate_resolution < 1 {
            return Err(bad("bound", "grid_resolution ≥ 2 and candidate_resolution ≥ 1 required"));
        }
        if !(self.bound.delta_bar_override.is_finite() && self.bound.delta_bar_override >= 0.0) {
            return Err(bad("bound.delta_bar_override", "must be finite and nonnegative"));
        }
        matrix("gains.kd", &self.gains.kd, n)?;
        matrix("gains.kp", &self.gains.kp, n)?;
        if !(self.gains.c.is_finite() && self.gains.c > 0.0) {
            return Err(bad("gains.c", "must be positive"));
        }
        for x in &self.sim.x0 {
            if x.len() != 2 * n {
                return Err(bad("sim.x0", format!("each state needs {} values", 2 * n)));
            }
        }
        if !(self.sim.horizon > 0.0 && self.sim.dt > 0.0 && self.sim.dt <= self.sim.horizon) {
            return Err(bad("sim", "need 0 < dt ≤ horizon"));
        }
        if !(self.sim.loop_tol > 0.0 && self.sim.loop_stall_tol >= self.sim.loop_tol && self.sim.loop_max_iter > 0) {
            return Err(bad("sim", "need 0 < loop_tol ≤ loop_stall_tol and loop_max_iter ≥ 1"));
        }
        if !(self.sim.safety_half_width > 0.0) {
            return Err(bad("sim.safety_half_width", "must be positive"));
        }
        if !(self.audit.tolerance >= 0.0) {
            return Err(bad("audit.tolerance", "must be nonnegative"));
        }
        if self.audit.grid < 2 {
            return Err(bad("audit.grid", "need at least 2 nodes per axis"));
        }
        Ok(())
    }

    pub fn duffing_params(&self) -> DuffingParams {
        DuffingParams { alpha: self.system.alpha, beta: self.system.beta, gamma_damp: self.system.gamma }
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let d = &self.domain;
        let dx = BoxRegion::new(d.dx_lo.clone(), d.dx_hi.clone()).map_err(|e| bad("domain.dx", e))?;
        let dxdot = BoxRegion::new(d.dxdot_lo.clone(), d.dxdot_hi.clone()).map_err(|e| bad("domain.dxdot", e))?;
        DomainSpec::new(dx, dxdot, d.u_ex_max).map_err(|e| bad("domain", e))
    }

    pub fn target_sign(&self) -> TargetSign {
        match self.data.target_sign {
            TargetSignSetting::Plus => TargetSign::Plus,
            TargetSignSetting::Reversed => TargetSign::Reversed,
        }
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            restarts: self.gp.restarts,
            max_iter: self.gp.max_iter,
            grad_tol: self.gp.grad_tol,
            noise_floor: self.gp.noise_floor,
            seed: crate::seed::sub_seed(self.seed, "gp-optimize", 0),
            max_points: (self.gp.max_points > 0).then_some(self.gp.max_points),
            signal_variance_range: (OptimizeConfig::default().signal_variance_range.0, self.gp.signal_variance_max),
            lengthscale_range: (OptimizeConfig::default().lengthscale_range.0, self.gp.lengthscale_max),
        }
    }

    pub fn fixed_hyperparameters(&self) -> Result<Vec<Hyperparameters>> {
        let g = &self.gp;
        let n = self.domain.dxdot_lo.len();
        if g.signal_variance.len() != n || g.lengthscales.len() != n || g.noise_std.len() != n {
            return Err(bad("gp", format!("fixed hyperparameters need {n} entries each")));
        }
        (0..n)
            .map(|i| {
                Hyperparameters::new(g.signal_variance[i], g.lengthscales[i].clone(), g.noise_std[i])
                    .map_err(|e| bad("gp", e))
            })
            .collect()
    }

    pub fn bound_config(&self) -> BoundConfig {
        BoundConfig {
            delta: self.bound.delta,
            rkhs_norms: (!self.bound.rkhs_norms.is_empty()).then(|| self.bound.rkhs_norms.clone()),
            candidate_resolution: self.bound.candidate_resolution,
            grid_resolution: self.bound.grid_resolution,
        }
    }

    pub fn caps(&self) -> GainCaps {
        GainCaps { kd_bar: self.gains.kd_bar, kp_bar: self.gains.kp_bar }
    }

    /// Configured gains, synthesized from the seeds when requested.
    pub fn gain_set(&self) -> Result<GainSet> {
        let n = self.domain.dxdot_lo.len();
        let kd = matrix("gains.kd", &self.gains.kd, n)?;
        let kp = matrix("gains.kp", &self.gains.kp, n)?;
        match self.gains.mode {
            GainMode::Fixed => GainSet::new(kd, kp, self.gains.c).map_err(|e| bad("gains", e)),
            GainMode::Synthesize => synthesize_gains(self.gains.c, self.gains.lambda_target, &kd, &kp),
        }
    }

    pub fn loop_settings(&self) -> LoopSettings {
        LoopSettings {
            mode: match self.sim.loop_mode {
                LoopModeSetting::FixedPoint => LoopMode::FixedPoint,
                LoopModeSetting::Delayed => LoopMode::Delayed,
            },
            tol: self.sim.loop_tol,
            max_iter: self.sim.loop_max_iter,
            stall_tol: self.sim.loop_stall_tol,
        }
    }

    pub fn safety_box(&self) -> BoxRegion {
        BoxRegion::symmetric(2 * self.domain.dxdot_lo.len(), self.sim.safety_half_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.data.m, 720);
        assert_eq!(cfg.bound.delta_bar_override, 0.045);
        assert_eq!(cfg.gain_set().unwrap(), GainSet::duffing_default());
        assert_eq!(cfg.domain_spec().unwrap(), DomainSpec::duffing_default());
        assert_eq!(cfg.duffing_params(), DuffingParams::default());
        assert_eq!(cfg.sim.random_initial_states, 20);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::from_toml(
            "seed = 7\n[data]\nm = 8\ntarget_sign = \"reversed\"\n[sim]\nx0 = [[1.5, 1.5]]\nloop_mode = \"delayed\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.m, 8);
        assert_eq!(cfg.target_sign(), TargetSign::Reversed);
        assert_eq!(cfg.loop_settings().mode, LoopMode::Delayed);
        assert_eq!(cfg.sim.x0, vec![vec![1.5, 1.5]]);
        assert_eq!(cfg.gp.max_points, 240);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::from_toml("[gains]\nkdd = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("kdd"), "{err}");
        let err = RunConfig::from_toml("[sim]\ndt = \"fast\"\n").unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (text, key) in [
            ("[bound]\ndelta = 1.5\n", "bound.delta"),
            ("[gains]\nkd = [[0.9, 0.0]]\n", "gains.kd"),
            ("[data]\nm = 0\n", "data.m"),
            ("[system]\nname = \"pendulum\"\n", "system.name"),
            ("[gp]\nhyperparameters = \"fixed\"\n", "gp"),
            ("[sim]\nx0 = [[1.0]]\n", "sim.x0"),
        ] {
            let err = RunConfig::from_toml(text).unwrap_err().to_string();
            assert!(err.contains(key), "{text}: {err}");
        }
    }

    #[test]
    fn synthesized_gains_meet_the_target() {
        let cfg = RunConfig::from_toml("[gains]\nmode = \"synthesize\"\nlambda_target = 1.0\n").unwrap();
        let g = cfg.gain_set().unwrap();
        assert!(crate::passivation::lambda_min_eig(&g) >= 1.0);
    }

    #[test]
    fn fixed_hyperparameters_parse() {
        let cfg = RunConfig::from_toml(
            "[gp]\nhyperparameters = \"fixed\"\nsignal_variance = [2.0]\nlengthscales = [[1.0, 2.0, 3.0]]\nnoise_std = [0.1]\n",
        )
        .unwrap();
        let h = cfg.fixed_hyperparameters().unwrap();
        assert_eq!(h[0].lengthscales, vec![1.0, 2.0, 3.0]);
    }
}
