//! The command pipeline: each step reads its prerequisites from a run
//! directory and writes its artifacts back to it.

use std::path::{Path, PathBuf};

use crate::bound::{compute_bound, ModelErrorBound};
use crate::config::{HyperMode, RunConfig};
use crate::domain::DomainSpec;
use crate::dynamics::{
    generate_training_data, simulate, training_from_table, training_table, vector_field_export, Compensator, Duffing,
    FieldMode, GeneratedData, OffsetCompensator, SimSpec, Trajectory,
};
use crate::error::{contract, Error, Result};
use crate::exec::Exec;
use crate::geometry::{BoxRegion, Grid};
use crate::gp::{optimize_hyperparameters, GpModel, TrainingSet};
use crate::io::{channel_names, fmt_f64, read_file, write_file, Report, Table};
use crate::linalg::lambda_min;
use crate::passivation::{certify_delta_bar, lambda_min_eig, PassivityCertificate};
use crate::verification::{
    admissible_storage_level, grid_samples, model_error_empirical, random_regression_points, sample_initial_states,
    semipassivity_audit, AuditReport, AuditSample, CoverageReport,
};

/// Artifact locations inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|source| Error::Io { path: root.clone(), source })?;
        Ok(Self { root })
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.txt")
    }
    pub fn train_summary(&self) -> PathBuf {
        self.root.join("train_summary.txt")
    }
    pub fn bound(&self) -> PathBuf {
        self.root.join("bound.txt")
    }
    pub fn gains(&self) -> PathBuf {
        self.root.join("gains.txt")
    }
    pub fn certificate(&self) -> PathBuf {
        self.root.join("certificate.txt")
    }
    pub fn trajectory_index(&self) -> PathBuf {
        self.root.join("trajectories.txt")
    }
    pub fn trajectory(&self, i: usize) -> PathBuf {
        self.root.join(format!("traj_{i:03}.csv"))
    }
    pub fn audit(&self) -> PathBuf {
        self.root.join("audit.txt")
    }
    pub fn audit_samples(&self) -> PathBuf {
        self.root.join("audit_samples.csv")
    }
    pub fn field(&self, mode: FieldMode) -> PathBuf {
        self.root.join(match mode {
            FieldMode::OpenLoop => "field_open.csv",
            FieldMode::ClosedLoop => "field_closed.csv",
        })
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn plant(cfg: &RunConfig) -> Duffing {
    Duffing { params: cfg.duffing_params() }
}

pub fn gen_data(cfg: &RunConfig, dir: &RunDir) -> Result<GeneratedData> {
    let domain = cfg.domain_spec()?;
    let seed = crate::seed::sub_seed(cfg.seed, "gen-data", 0);
    let generated = generate_training_data(&plant(cfg), &domain, cfg.data.m, &cfg.data.noise_std, seed, cfg.target_sign())?;
    write_file(&dir.data(), &training_table(&generated.data).to_csv())?;
    Ok(generated)
}

pub fn load_training(cfg: &RunConfig, dir: &RunDir) -> Result<TrainingSet> {
    let path = dir.data();
    require(&path)?;
    let table = Table::parse_csv(&read_file(&path)?, &path)?;
    training_from_table(&table, &cfg.data.noise_std).map_err(|e| match e {
        Error::Config(m) => Error::Parse { path: path.clone(), line: 1, message: m },
        other => other,
    })
}

pub fn load_model(dir: &RunDir) -> Result<GpModel> {
    let path = dir.model();
    require(&path)?;
    GpModel::load(&path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub log_likelihood: Vec<f64>,
    pub converged: Vec<bool>,
    pub residual_rms: Vec<f64>,
    pub residual_max: Vec<f64>,
    pub noise_std: Vec<f64>,
}

pub fn train(cfg: &RunConfig, dir: &RunDir) -> Result<(GpModel, TrainSummary)> {
    let data = load_training(cfg, dir)?;
    let (hypers, lml, converged) = match cfg.gp.hyperparameters {
        HyperMode::Optimize => {
            let out = optimize_hyperparameters(&data, &cfg.optimize_config())?;
            (
                out.hyperparameters(),
                out.outputs.iter().map(|o| o.log_likelihood).collect(),
                out.outputs.iter().map(|o| o.converged).collect(),
            )
        }
        HyperMode::Fixed => {
            let h = cfg.fixed_hyperparameters()?;
            let lml = (0..h.len())
                .map(|i| crate::gp::log_marginal_likelihood(&data, &h[i], i).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            let n = h.len();
            (h, lml, vec![true; n])
        }
    };
    let model = GpModel::fit(&data, &hypers)?;
    let n = data.output_dim();
    let preds = Exec::default().map_range(data.len(), |j| model.predict_mean(data.input(j)));
    let mut sq = vec![0.0; n];
    let mut mx = vec![0.0f64; n];
    for (j, p) in preds.into_iter().enumerate() {
        let p = p?;
        for i in 0..n {
            let r = (p[i] - data.targets[(j, i)]).abs();
            sq[i] += r * r;
            mx[i] = mx[i].max(r);
        }
    }
    let summary = TrainSummary {
        log_likelihood: lml,
        converged,
        residual_rms: sq.iter().map(|s| (s / data.len() as f64).sqrt()).collect(),
        residual_max: mx,
        noise_std: data.noise_std.clone(),
    };
    model.save(&dir.model())?;
    let mut r = Report::new("training summary");
    r.text("points", data.len())
        .nums("log_marginal_likelihood", &summary.log_likelihood)
        .text("converged", format!("{:?}", summary.converged))
        .nums("residual_rms", &summary.residual_rms)
        .nums("residual_max", &summary.residual_max)
        .nums("noise_std", &summary.noise_std);
    for (i, h) in model.hyperparameters().iter().enumerate() {
        r.num(&format!("signal_variance_{}", i + 1), h.signal_variance)
            .nums(&format!("lengthscales_{}", i + 1), &h.lengthscales)
            .num(&format!("noise_std_{}", i + 1), h.noise_std);
    }
    write_file(&dir.train_summary(), &r.finish())?;
    Ok((model, summary))
}

pub fn bound(cfg: &RunConfig, dir: &RunDir) -> Result<ModelErrorBound> {
    let model = load_model(dir)?;
    let b = compute_bound(&model, &cfg.bound_config(), &cfg.domain_spec()?)?;
    write_file(&dir.bound(), &b.to_report())?;
    Ok(b)
}

pub fn load_bound(dir: &RunDir) -> Result<ModelErrorBound> {
    let path = dir.bound();
    require(&path)?;
    ModelErrorBound::from_report(&read_file(&path)?)
}

pub fn synth_gains(cfg: &RunConfig, dir: &RunDir) -> Result<crate::passivation::GainSet> {
    let g = cfg.gain_set()?;
    let flat = |m: &nalgebra::DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
    let mut r = Report::new("gains");
    r.nums("Kd", &flat(&g.kd))
        .nums("Kp", &flat(&g.kp))
        .num("c", g.c)
        .num("lambda_min_lambda", lambda_min_eig(&g))
        .num("lambda_min_kp", lambda_min(&g.kp));
    write_file(&dir.gains(), &r.finish())?;
    Ok(g)
}

/// `Δ̄` for certification: the configured override, or the bound artifact's value.
pub fn certification_delta_bar(cfg: &RunConfig, dir: &RunDir) -> Result<f64> {
    if cfg.bound.use_computed_delta_bar {
        Ok(load_bound(dir)?.delta_bar)
    } else {
        Ok(cfg.bound.delta_bar_override)
    }
}

pub fn certify(cfg: &RunConfig, dir: &RunDir) -> Result<PassivityCertificate> {
    require(&dir.model())?;
    let delta_bar = certification_delta_bar(cfg, dir)?;
    let cert = certify_delta_bar(delta_bar, cfg.bound.delta, &cfg.gain_set()?, &cfg.domain_spec()?, cfg.caps())?;
    write_file(&dir.certificate(), &cert.to_report())?;
    Ok(cert)
}

pub fn load_certificate(dir: &RunDir) -> Result<PassivityCertificate> {
    let path = dir.certificate();
    require(&path)?;
    PassivityCertificate::from_report(&read_file(&path)?)
}

/// Explicit initial states followed by seeded draws from the admissible
/// storage sublevel set.
pub fn initial_states(cfg: &RunConfig, cert: &PassivityCertificate, domain: &DomainSpec) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = domain.n();
    let mut states: Vec<(Vec<f64>, Vec<f64>)> = cfg.sim.x0.iter().map(|x| (x[..n].to_vec(), x[n..].to_vec())).collect();
    if cfg.sim.random_initial_states > 0 {
        let level = admissible_storage_level(&cert.gains, domain, cert.delta_bar)?;
        if level <= 0.0 {
            return Err(contract("no admissible storage level: Δ̄ leaves no room inside Dẋ"));
        }
        let seed = crate::seed::sub_seed(cfg.seed, "simulate", 0);
        states.extend(sample_initial_states(&cert.gains, domain, level, cfg.sim.random_initial_states, seed)?);
    }
    Ok(states)
}

pub fn simulate_all(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<Trajectory>> {
    let model = load_model(dir)?;
    let cert = load_certificate(dir)?;
    let domain = cfg.domain_spec()?;
    let states = initial_states(cfg, &cert, &domain)?;
    let sys = plant(cfg);
    let n = domain.n();
    let zero = crate::dynamics::zero_input(n);
    let loop_settings = cfg.loop_settings();
    let safety = cfg.safety_box();
    let trajectories = Exec::default()
        .map(&states, |(x1, x2)| {
            let spec = SimSpec {
                x1: x1.clone(),
                x2: x2.clone(),
                horizon: cfg.sim.horizon,
                dt: cfg.sim.dt,
                loop_settings,
                u_ex: &zero,
                safety_box: Some(safety.clone()),
            };
            simulate(&sys, &model, &cert.gains, &spec)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut index = String::new();
    for (i, t) in trajectories.iter().enumerate() {
        let path = dir.trajectory(i);
        write_file(&path, &t.to_table().to_csv())?;
        index.push_str(&format!(
            "{} exited={} unconverged_steps={} noise_limited_steps={}\n",
            path.file_name().and_then(|s| s.to_str()).unwrap_or_default(),
            t.exited,
            t.unconverged_steps,
            t.noise_limited_steps
        ));
    }
    write_file(&dir.trajectory_index(), &index)?;
    Ok(trajectories)
}

/// Audit samples `(x1, x2, ẋ2, u_ex)` read back from a trajectory CSV.
pub fn read_trajectory_samples(path: &Path, n: usize) -> Result<Vec<AuditSample>> {
    require(path)?;
    let t = Table::parse_csv(&read_file(path)?, path)?;
    let col = |name: String| {
        t.column_index(&name)
            .ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: 1, message: format!("missing column {name}") })
    };
    let pick = |names: Vec<String>| names.into_iter().map(col).collect::<Result<Vec<usize>>>();
    let (c1, c2, ca, ce) =
        (pick(channel_names("x1", n))?, pick(channel_names("x2", n))?, pick(channel_names("xdot2", n))?, pick(channel_names("u_ex", n))?);
    Ok(t.rows
        .iter()
        .map(|r| AuditSample {
            x1: c1.iter().map(|&i| r[i]).collect(),
            x2: c2.iter().map(|&i| r[i]).collect(),
            xdot2: ca.iter().map(|&i| r[i]).collect(),
            u_ex: ce.iter().map(|&i| r[i]).collect(),
        })
        .collect())
}

fn trajectory_paths(dir: &RunDir) -> Result<Vec<PathBuf>> {
    let index = dir.trajectory_index();
    require(&index)?;
    Ok(read_file(&index)?
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .map(|name| dir.root.join(name))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub trajectories: AuditReport,
    pub grid: AuditReport,
    /// Fraction of trajectory samples with `ẋ2 ∈ Dẋ`.
    pub containment: f64,
    pub coverage: Option<CoverageReport>,
    /// Trajectory samples whose true model error is at most `Δ̄`.
    pub trajectory_error_within_delta_bar: f64,
    pub verdict: bool,
}

pub fn verify(cfg: &RunConfig, dir: &RunDir, stub_offset_factor: Option<f64>) -> Result<VerifyOutcome> {
    let model = load_model(dir)?;
    let cert = load_certificate(dir)?;
    let paths = trajectory_paths(dir)?;
    let domain = cfg.domain_spec()?;
    let n = domain.n();
    let sys = plant(cfg);
    let mut samples = Vec::new();
    for p in &paths {
        samples.extend(read_trajectory_samples(p, n)?);
    }
    let offset_model;
    let comp: &dyn Compensator = match stub_offset_factor {
        Some(k) => {
            offset_model = OffsetCompensator { inner: &model, offset: vec![k * cert.delta_bar; n] };
            &offset_model
        }
        None => &model,
    };
    let tol = cfg.audit.tolerance;
    let (traj_report, _) = semipassivity_audit(&samples, &cert, &domain, tol)?;
    let grid = grid_samples(&sys, comp, &cert.gains, &domain, cfg.audit.grid, &cfg.loop_settings(), Exec::default())?;
    let (grid_report, outcomes) = semipassivity_audit(&grid, &cert, &domain, tol)?;
    write_file(&dir.audit_samples(), &crate::verification::outcomes_table(&outcomes, n).to_csv())?;

    let contained = samples.iter().filter(|s| domain.dxdot.contains(&s.xdot2)).count();
    let containment = if samples.is_empty() { 1.0 } else { contained as f64 / samples.len() as f64 };

    let queries: Vec<Vec<f64>> =
        samples.iter().map(|s| crate::domain::regression_input(&s.xdot2, &s.x1, &s.x2)).collect();
    let along = model_error_empirical(&model, &sys, &vec![0.0; n], &queries, Some(cert.delta_bar), Exec::default())?;
    let trajectory_error_within_delta_bar =
        if along.points == 0 { 1.0 } else { along.within_delta_bar.unwrap_or(0) as f64 / along.points as f64 };

    let coverage = if dir.bound().is_file() {
        let b = load_bound(dir)?;
        let pts = random_regression_points(&domain, cfg.audit.coverage_points, crate::seed::sub_seed(cfg.seed, "coverage", 0));
        Some(model_error_empirical(&model, &sys, &b.delta_vec, &pts, Some(cert.delta_bar), Exec::default())?)
    } else {
        None
    };
    let mut grid_report = grid_report;
    grid_report.error_coverage = coverage.as_ref().map(|c| c.coverage);
    let verdict = traj_report.verdict
        && grid_report.verdict
        && (!cfg.audit.require_containment || containment >= 1.0);

    let mut r = Report::new("verification");
    r.text("verdict", if verdict { "pass" } else { "fail" })
        .num("trajectory_xdot_containment", containment)
        .num("trajectory_error_within_delta_bar", trajectory_error_within_delta_bar)
        .num("trajectory_max_model_error", along.max_error)
        .text("stub_offset_factor", stub_offset_factor.map(fmt_f64).unwrap_or_else(|| "none".into()));
    if let Some(c) = &coverage {
        r.num("bound_coverage", c.coverage).num("random_max_model_error", c.max_error);
    }
    let text = format!(
        "{}\n[trajectories]\n{}\n[grid]\n{}",
        r.finish(),
        traj_report.to_report(),
        grid_report.to_report()
    );
    write_file(&dir.audit(), &text)?;
    Ok(VerifyOutcome {
        trajectories: traj_report,
        grid: grid_report,
        containment,
        coverage,
        trajectory_error_within_delta_bar,
        verdict,
    })
}

/// Vector field over the square `[−half_width, half_width]^2n`.
pub fn field(cfg: &RunConfig, dir: &RunDir, mode: FieldMode, half_width: f64, per_axis: usize) -> Result<Table> {
    let n = cfg.domain_spec()?.n();
    let sys = plant(cfg);
    let grid = Grid::uniform(BoxRegion::symmetric(2 * n, half_width), per_axis)?;
    let g = cfg.gain_set()?;
    let table = match mode {
        FieldMode::OpenLoop => {
            vector_field_export(&sys, &crate::dynamics::ZeroCompensator { n }, &g, &grid, mode, &cfg.loop_settings())?
        }
        FieldMode::ClosedLoop => {
            let model = load_model(dir)?;
            vector_field_export(&sys, &model, &g, &grid, mode, &cfg.loop_settings())?
        }
    };
    write_file(&dir.field(mode), &table.to_csv())?;
    Ok(table)
}
