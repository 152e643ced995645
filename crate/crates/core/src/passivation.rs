//! Gain condition, storage function and semi-passivity certificate for the
//! PD + feed-forward closed loop.
//!
//! With `u_c = K_d x2 + K_p x1` and the storage function
//! `V = ½x1ᵀK_p x1 + ½x2ᵀx2 + c x2ᵀx1`, the closed loop satisfies
//! `V̇ = −(x2; x1)ᵀ Λ (x2; x1) + (x2 + c x1)ᵀ(e + u_ex)` where `e` is the
//! model error and `Λ = [[K_d − cI, (c/2)K_d], [(c/2)K_d, cK_p]]`.

use nalgebra::DMatrix;

use crate::bound::ModelErrorBound;
use crate::domain::DomainSpec;
use crate::error::{contract, Error, Result};
use crate::io::{parse_report, Report};
use crate::linalg::{is_positive_definite, is_symmetric, lambda_max, lambda_min, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub kd: DMatrix<f64>,
    pub kp: DMatrix<f64>,
    pub c: f64,
}

impl GainSet {
    /// Checks symmetry and positive definiteness of both gains and `c ≥ 0`.
    /// The storage positivity condition `λ_min(K_p) > c²` is checked where it
    /// is needed, see [`GainSet::storage_is_positive`].
    pub fn new(kd: DMatrix<f64>, kp: DMatrix<f64>, c: f64) -> Result<Self> {
        let g = Self::new_unchecked(kd, kp, c);
        g.validate()?;
        Ok(g)
    }

    pub fn new_unchecked(kd: DMatrix<f64>, kp: DMatrix<f64>, c: f64) -> Self {
        Self { kd, kp, c }
    }

    /// Scalar gains times the identity.
    pub fn scalar(n: usize, kd: f64, kp: f64, c: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n) * kd, DMatrix::identity(n, n) * kp, c)
    }

    /// The benchmark gains `K_d = 0.9`, `K_p = 1`, `c = 0.5`.
    pub fn duffing_default() -> Self {
        Self::new_unchecked(DMatrix::from_element(1, 1, 0.9), DMatrix::from_element(1, 1, 1.0), 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kd.nrows();
        if n == 0 || !self.kd.is_square() || self.kp.shape() != (n, n) {
            return Err(contract("K_d and K_p must be square matrices of equal size"));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(contract(format!("c = {} must be nonnegative", self.c)));
        }
        for (name, m) in [("K_d", &self.kd), ("K_p", &self.kp)] {
            if !is_symmetric(m, 1e-12) {
                return Err(contract(format!("{name} is not symmetric")));
            }
            if !is_positive_definite(m) {
                return Err(contract(format!("{name} is not positive definite")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.kd.nrows()
    }

    pub fn storage_is_positive(&self) -> bool {
        lambda_min(&self.kp) > self.c * self.c
    }
}

pub fn lambda_matrix(g: &GainSet) -> DMatrix<f64> {
    let n = g.n();
    let c = g.c;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = g.kd[(i, j)] - if i == j { c } else { 0.0 };
            m[(i, n + j)] = 0.5 * c * g.kd[(i, j)];
            m[(n + i, j)] = 0.5 * c * g.kd[(i, j)];
            m[(n + i, n + j)] = c * g.kp[(i, j)];
        }
    }
    m
}

pub fn lambda_min_eig(g: &GainSet) -> f64 {
    lambda_min(&lambda_matrix(g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurTest {
    pub positive_definite: bool,
    /// Smallest eigenvalue of `K_d − cI − c K_d K_p⁻¹ K_d / 4`.
    pub schur_min_eig: f64,
}

/// Block test: `Λ ≻ 0` iff `cK_p ≻ 0` and its Schur complement is PD.
pub fn is_lambda_pd(g: &GainSet) -> Result<SchurTest> {
    let n = g.n();
    let kp_inv = g
        .kp
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| contract("K_p is singular"))?;
    let mut schur = &g.kd - &g.kd * kp_inv * &g.kd * (g.c / 4.0);
    for i in 0..n {
        schur[(i, i)] -= g.c;
    }
    // symmetrize away rounding before the symmetric eigensolver
    let schur = (&schur + schur.transpose()) * 0.5;
    let schur_min_eig = lambda_min(&schur);
    let lower_pd = g.c > 0.0 && lambda_min(&g.kp) > 0.0;
    Ok(SchurTest { positive_definite: lower_pd && schur_min_eig > 0.0, schur_min_eig })
}

/// Scales seed gains so that `λ_min(Λ) ≥ lambda_target` and `λ_min(K_p) > c²`.
///
/// If the seed block matrix `[[K̃_d, (c/2)K̃_d], [(c/2)K̃_d, cK̃_p]]` is not PD,
/// `K̃_p` is doubled until it is (at most 2^20). The scale
/// `γ = (c + target)/λ_min(Λ̃_M)` then gives `λ_min(Λ) ≥ −c + γλ_min(Λ̃_M)`.
pub fn synthesize_gains(c: f64, lambda_target: f64, seed_kd: &DMatrix<f64>, seed_kp: &DMatrix<f64>) -> Result<GainSet> {
    if !(c.is_finite() && c > 0.0) {
        return Err(contract("c must be positive"));
    }
    if !(lambda_target.is_finite() && lambda_target >= 0.0) {
        return Err(contract("target eigenvalue must be nonnegative"));
    }
    GainSet::new(seed_kd.clone(), seed_kp.clone(), c)?;

    let n = seed_kd.nrows();
    let mut kp = seed_kp.clone();
    let mut doublings = 0;
    let seed_block = loop {
        let kp_inv = kp.clone().try_inverse().ok_or_else(|| contract("seed K_p is singular"))?;
        let s = seed_kd - seed_kd * kp_inv * seed_kd * (c / 4.0);
        if lambda_min(&((&s + s.transpose()) * 0.5)) > 0.0 {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(seed_kd);
            m.view_mut((0, n), (n, n)).copy_from(&(seed_kd * (0.5 * c)));
            m.view_mut((n, 0), (n, n)).copy_from(&(seed_kd * (0.5 * c)));
            m.view_mut((n, n), (n, n)).copy_from(&(&kp * c));
            break m;
        }
        if doublings == 20 {
            return Err(Error::Synthesis("seed Schur complement still indefinite after inflating K_p by 2^20".into()));
        }
        kp *= 2.0;
        doublings += 1;
    };
    let lam_m = lambda_min(&seed_block);
    if lam_m <= 0.0 {
        return Err(Error::Synthesis("seed block matrix is not positive definite".into()));
    }
    let mut gamma = (c + lambda_target) / lam_m;
    let kp_floor = c * c / lambda_min(&kp);
    if gamma <= kp_floor {
        gamma = kp_floor;
    }
    // margin so the strict inequalities survive rounding
    gamma *= 1.0 + 1e-9;
    let g = GainSet::new(seed_kd * gamma, kp * gamma, c)?;
    let lam = lambda_min_eig(&g);
    if lam < lambda_target || !g.storage_is_positive() {
        return Err(Error::Synthesis(format!("scaled gains reach λ_min(Λ) = {lam}, target {lambda_target}")));
    }
    Ok(g)
}

/// `max{c·k̄_d²/(4(k̄_d − c)), c²}`, the lower limit for `k̄_p`.
pub fn kp_cap_threshold(c: f64, kd_bar: f64) -> f64 {
    (c * kd_bar * kd_bar / (4.0 * (kd_bar - c))).max(c * c)
}

pub fn check_cap_preconditions(c: f64, kd_bar: f64, kp_bar: f64) -> Result<()> {
    if !(kd_bar > c) {
        return Err(contract(format!("k̄_d = {kd_bar} must exceed c = {c}")));
    }
    let threshold = kp_cap_threshold(c, kd_bar);
    if !(kp_bar > threshold) {
        return Err(contract(format!(
            "k̄_p = {kp_bar} must exceed max{{c·k̄_d²/(4(k̄_d − c)), c²}} = {threshold}"
        )));
    }
    Ok(())
}

/// Whether the gains respect the caps `λ̄(K_d) ≤ k̄_d`, `λ̄(K_p) ≤ k̄_p` and give `Λ ≻ 0`.
pub fn check_gain_caps(g: &GainSet, kd_bar: f64, kp_bar: f64) -> Result<bool> {
    check_cap_preconditions(g.c, kd_bar, kp_bar)?;
    Ok(lambda_max(&g.kd) <= kd_bar && lambda_max(&g.kp) <= kp_bar && is_lambda_pd(g)?.positive_definite)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelerationBound {
    pub value: f64,
    /// Whether the centered ball of this radius fits in `Dẋ`.
    pub contained: bool,
}

/// `sup_{x ∈ Dx} k̄_p‖x1‖ + k̄_d‖x2‖ + u_ex_max`.
pub fn required_xdot_bound(domain: &DomainSpec, kd_bar: f64, kp_bar: f64) -> AccelerationBound {
    let value = kp_bar * domain.x1_box().max_norm() + kd_bar * domain.x2_box().max_norm() + domain.u_ex_max;
    AccelerationBound { value, contained: domain.dxdot.contains_centered_ball(value) }
}

/// `sup_{x ∈ Dx} Δ̄ + λ̄(K_d)‖x2‖ + λ̄(K_p)‖x1‖ + u_ex_max`.
pub fn xdot2_envelope(delta_bar: f64, g: &GainSet, domain: &DomainSpec) -> AccelerationBound {
    let value = delta_bar
        + lambda_max(&g.kd).max(0.0) * domain.x2_box().max_norm()
        + lambda_max(&g.kp).max(0.0) * domain.x1_box().max_norm()
        + domain.u_ex_max;
    AccelerationBound { value, contained: domain.dxdot.contains_centered_ball(value) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    /// `sqrt(v)` with `v = (1 + c)Δ̄/λ_min(Λ)`.
    pub sqrt_form: f64,
    /// `v`, beyond which the norm bound on `h` is provably positive.
    pub linear_form: f64,
    pub radius: f64,
}

/// Radius of the ball outside which `h > 0`: `max{sqrt(v), v}`.
pub fn passivity_radius(delta_bar: f64, c: f64, lambda_min: f64) -> Result<Radius> {
    if !(lambda_min > 0.0) {
        return Err(contract(format!("λ_min(Λ) = {lambda_min} must be positive")));
    }
    if !(delta_bar >= 0.0) {
        return Err(contract("Δ̄ must be nonnegative"));
    }
    let v = (1.0 + c) * delta_bar / lambda_min;
    let s = v.sqrt();
    Ok(Radius { sqrt_form: s, linear_form: v, radius: s.max(v) })
}

/// Storage value without the positivity precondition.
pub(crate) fn storage_formula(x1: &[f64], x2: &[f64], g: &GainSet) -> f64 {
    let kp_x1 = crate::linalg::mat_vec(&g.kp, x1);
    0.5 * crate::linalg::dot(x1, &kp_x1) + 0.5 * crate::linalg::dot(x2, x2) + g.c * crate::linalg::dot(x2, x1)
}

pub fn storage_value(x1: &[f64], x2: &[f64], g: &GainSet) -> Result<f64> {
    if x1.len() != g.n() || x2.len() != g.n() {
        return Err(contract("state dimension does not match the gains"));
    }
    if !g.storage_is_positive() {
        return Err(contract(format!("λ_min(K_p) must exceed c² = {}", g.c * g.c)));
    }
    Ok(storage_formula(x1, x2, g))
}

/// `h = λ_min‖(x2; x1)‖² − Δ̄‖x2‖ − cΔ̄‖x1‖`.
pub fn h_value(x1: &[f64], x2: &[f64], lambda_min: f64, delta_bar: f64, c: f64) -> f64 {
    let n1 = norm(x1);
    let n2 = norm(x2);
    lambda_min * (n1 * n1 + n2 * n2) - delta_bar * n2 - c * delta_bar * n1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCaps {
    pub kd_bar: f64,
    pub kp_bar: f64,
}

impl GainCaps {
    pub fn duffing_default() -> Self {
        Self { kd_bar: 0.9, kp_bar: 0.254 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassivityCertificate {
    pub gains: GainSet,
    pub delta_bar: f64,
    pub delta: f64,
    pub lambda_min: f64,
    pub schur_min_eig: f64,
    pub lambda_pd: bool,
    pub storage_positive: bool,
    pub radius: f64,
    pub radius_sqrt_form: f64,
    pub radius_linear_form: f64,
    pub ball_in_dx: bool,
    pub caps: GainCaps,
    pub caps_valid: bool,
    pub required_xdot: f64,
    pub required_xdot_in_dxdot: bool,
    pub gains_within_caps: bool,
    /// Conservative envelope, reported but not part of the verdict.
    pub xdot_envelope: f64,
    pub envelope_in_dxdot: bool,
    pub verdict: bool,
    pub reasons: Vec<String>,
}

pub fn certify(bound: &ModelErrorBound, g: &GainSet, domain: &DomainSpec, caps: GainCaps) -> Result<PassivityCertificate> {
    certify_delta_bar(bound.delta_bar, bound.delta, g, domain, caps)
}

/// Assembles the certificate for a given error supremum `Δ̄` at confidence `δ`.
pub fn certify_delta_bar(
    delta_bar: f64,
    delta: f64,
    g: &GainSet,
    domain: &DomainSpec,
    caps: GainCaps,
) -> Result<PassivityCertificate> {
    if g.n() != domain.n() {
        return Err(contract("gain dimension does not match the domain"));
    }
    if !(delta_bar.is_finite() && delta_bar >= 0.0) {
        return Err(contract("Δ̄ must be finite and nonnegative"));
    }
    let mut reasons = Vec::new();
    let schur = is_lambda_pd(g)?;
    let lam = lambda_min_eig(g);
    let lambda_pd = schur.positive_definite;
    if !lambda_pd {
        reasons.push("Λ not PD".to_string());
    }
    let storage_positive = g.storage_is_positive();
    if !storage_positive {
        reasons.push("λ_min(K_p) ≤ c², storage function not positive".to_string());
    }
    let (radius, sqrt_form, linear_form) = if lambda_pd && lam > 0.0 {
        let r = passivity_radius(delta_bar, g.c, lam)?;
        (r.radius, r.sqrt_form, r.linear_form)
    } else {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    };
    let ball_in_dx = domain.dx.contains_centered_ball(radius);
    if !ball_in_dx {
        reasons.push(format!("ball of radius {radius} not contained in Dx"));
    }
    let caps_valid = match check_cap_preconditions(g.c, caps.kd_bar, caps.kp_bar) {
        Ok(()) => true,
        Err(e) => {
            reasons.push(format!("gain caps invalid: {e}"));
            false
        }
    };
    let required = required_xdot_bound(domain, caps.kd_bar, caps.kp_bar);
    if !required.contained {
        reasons.push(format!("Dẋ does not contain the ball of radius {}", required.value));
    }
    let gains_within_caps =
        caps_valid && lambda_max(&g.kd) <= caps.kd_bar && lambda_max(&g.kp) <= caps.kp_bar && lambda_pd;
    let envelope = xdot2_envelope(delta_bar, g, domain);
    let verdict = lambda_pd && storage_positive && ball_in_dx && caps_valid && required.contained;
    Ok(PassivityCertificate {
        gains: g.clone(),
        delta_bar,
        delta,
        lambda_min: lam,
        schur_min_eig: schur.schur_min_eig,
        lambda_pd,
        storage_positive,
        radius,
        radius_sqrt_form: sqrt_form,
        radius_linear_form: linear_form,
        ball_in_dx,
        caps,
        caps_valid,
        required_xdot: required.value,
        required_xdot_in_dxdot: required.contained,
        gains_within_caps,
        xdot_envelope: envelope.value,
        envelope_in_dxdot: envelope.contained,
        verdict,
        reasons,
    })
}

impl PassivityCertificate {
    pub fn to_report(&self) -> String {
        let n = self.gains.n();
        let flat = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
        let mut r = Report::new("semi-passivity certificate");
        r.text("verdict", if self.verdict { "pass" } else { "fail" })
            .text("n", n)
            .nums("Kd", &flat(&self.gains.kd))
            .nums("Kp", &flat(&self.gains.kp))
            .num("c", self.gains.c)
            .num("delta", self.delta)
            .num("delta_bar", self.delta_bar)
            .num("lambda_min", self.lambda_min)
            .num("schur_min_eig", self.schur_min_eig)
            .text("lambda_pd", self.lambda_pd)
            .text("storage_positive", self.storage_positive)
            .num("radius", self.radius)
            .num("radius_sqrt_form", self.radius_sqrt_form)
            .num("radius_linear_form", self.radius_linear_form)
            .text("ball_in_dx", self.ball_in_dx)
            .num("kd_bar", self.caps.kd_bar)
            .num("kp_bar", self.caps.kp_bar)
            .text("caps_valid", self.caps_valid)
            .num("required_xdot", self.required_xdot)
            .text("required_xdot_in_dxdot", self.required_xdot_in_dxdot)
            .text("gains_within_caps", self.gains_within_caps)
            .num("xdot_envelope", self.xdot_envelope)
            .text("envelope_in_dxdot", self.envelope_in_dxdot);
        for reason in &self.reasons {
            r.text("reason", reason);
        }
        r.finish()
    }

    pub fn from_report(text: &str) -> Result<Self> {
        let kv = parse_report(text);
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("certificate lacks `{k}`")))
        };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|e| Error::Config(format!("`{k}`: {e}"))))
                .collect()
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|e| Error::Config(format!("`{k}`: {e}"))) };
        let flag = |k: &str| -> Result<bool> { get(k)?.parse::<bool>().map_err(|e| Error::Config(format!("`{k}`: {e}"))) };
        let n: usize = get("n")?.parse().map_err(|e| Error::Config(format!("`n`: {e}")))?;
        let kd = floats("Kd")?;
        let kp = floats("Kp")?;
        if kd.len() != n * n || kp.len() != n * n {
            return Err(Error::Config("gain matrices do not match `n`".into()));
        }
        Ok(Self {
            gains: GainSet::new_unchecked(DMatrix::from_row_slice(n, n, &kd), DMatrix::from_row_slice(n, n, &kp), num("c")?),
            delta_bar: num("delta_bar")?,
            delta: num("delta")?,
            lambda_min: num("lambda_min")?,
            schur_min_eig: num("schur_min_eig")?,
            lambda_pd: flag("lambda_pd")?,
            storage_positive: flag("storage_positive")?,
            radius: num("radius")?,
            radius_sqrt_form: num("radius_sqrt_form")?,
            radius_linear_form: num("radius_linear_form")?,
            ball_in_dx: flag("ball_in_dx")?,
            caps: GainCaps { kd_bar: num("kd_bar")?, kp_bar: num("kp_bar")? },
            caps_valid: flag("caps_valid")?,
            required_xdot: num("required_xdot")?,
            required_xdot_in_dxdot: flag("required_xdot_in_dxdot")?,
            gains_within_caps: flag("gains_within_caps")?,
            xdot_envelope: num("xdot_envelope")?,
            envelope_in_dxdot: flag("envelope_in_dxdot")?,
            verdict: get("verdict")? == "pass",
            reasons: kv.iter().filter(|(k, _)| k == "reason").map(|(_, v)| v.clone()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxRegion;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = a.qr().q();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
        let m = &q * d * q.transpose();
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn benchmark_lambda_matrix() {
        let lam = lambda_matrix(&GainSet::duffing_default());
        let expected = DMatrix::from_row_slice(2, 2, &[0.4, 0.225, 0.225, 0.5]);
        assert!((lam - expected).amax() < 1e-15);
    }

    #[test]
    fn benchmark_lambda_min_closed_form() {
        // 2×2: (tr − sqrt(tr² − 4 det)) / 2 with tr = 0.9, det = 0.2 − 0.050625
        let (tr, det) = (0.9f64, 0.4 * 0.5 - 0.225 * 0.225);
        let oracle = (tr - (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!((oracle - (0.9 - 0.2125f64.sqrt()) / 2.0).abs() < 1e-15);
        let lam = lambda_min_eig(&GainSet::duffing_default());
        assert!((lam - oracle).abs() < 1e-12);
        assert!((lam - 0.219511).abs() < 1e-6);
    }

    #[test]
    fn lambda_limits() {
        let g = GainSet::new_unchecked(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 0.0);
        let lam = lambda_matrix(&g);
        assert_eq!(lam.view((0, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert!(lam.view((0, 2), (2, 2)).iter().all(|v| *v == 0.0));
        assert!(lam.view((2, 2), (2, 2)).iter().all(|v| *v == 0.0));

        let g = GainSet::new(s(2.0), s(1.0), 0.0).unwrap();
        assert_eq!(lambda_min_eig(&g), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GainSet::new(random_spd(&mut rng, 3, 0.5, 2.0), random_spd(&mut rng, 3, 0.5, 2.0), 0.7).unwrap();
        let lam = lambda_matrix(&g);
        assert_eq!(lam, lam.transpose());
    }

    #[test]
    fn scalar_eigenvalue_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (kd, kp, c) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.01..2.0));
            let g = GainSet::new(s(kd), s(kp), c).unwrap();
            let (a, b, d) = (kd - c, 0.5 * c * kd, c * kp);
            // roots of λ² − (a + d)λ + (ad − b²)
            let tr = a + d;
            let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
            let oracle = 0.5 * (tr - disc);
            let lam = lambda_min_eig(&g);
            assert!((lam - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn schur_benchmark_and_failure() {
        let t = is_lambda_pd(&GainSet::duffing_default()).unwrap();
        assert!(t.positive_definite);
        assert!((t.schur_min_eig - 0.29875).abs() < 1e-14);

        let g = GainSet::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 0.5).unwrap();
        assert!(!is_lambda_pd(&g).unwrap().positive_definite);

        let singular = GainSet::new_unchecked(s(1.0), s(0.0), 0.5);
        assert!(is_lambda_pd(&singular).is_err());
    }

    #[test]
    fn schur_agrees_with_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.random_range(1..=5);
            let g = GainSet::new(
                random_spd(&mut rng, n, 0.05, 3.0),
                random_spd(&mut rng, n, 0.05, 3.0),
                rng.random_range(0.01..2.0),
            )
            .unwrap();
            assert_eq!(is_lambda_pd(&g).unwrap().positive_definite, lambda_min_eig(&g) > 0.0);
        }
    }

    #[test]
    fn synthesis_reaches_targets() {
        let g = synthesize_gains(0.5, 0.2, &s(1.0), &s(1.0)).unwrap();
        assert!(lambda_min_eig(&g) >= 0.2);
        let g = synthesize_gains(0.5, 0.0, &s(1.0), &s(1.0)).unwrap();
        assert!(lambda_min_eig(&g) >= 0.0);
        // seed needing K_p inflation: Schur of seed 1 − 2·1/(4·0.01) < 0
        let g = synthesize_gains(2.0, 1.0, &s(1.0), &s(0.01)).unwrap();
        assert!(lambda_min_eig(&g) >= 1.0 && g.storage_is_positive());
        assert!(synthesize_gains(0.0, 1.0, &s(1.0), &s(1.0)).is_err());
        // hopelessly small seed K_p
        assert!(matches!(synthesize_gains(1.0, 1.0, &s(1.0), &s(1e-12)), Err(Error::Synthesis(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn synthesis_postcondition(c in 0.1f64..2.0, target in 0.0f64..5.0, n in 1usize..=3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kd = random_spd(&mut rng, n, 0.1, 3.0);
            let kp = random_spd(&mut rng, n, 0.1, 3.0);
            let g = synthesize_gains(c, target, &kd, &kp).unwrap();
            prop_assert!(lambda_min_eig(&g) >= target);
            prop_assert!(g.storage_is_positive());
        }

        #[test]
        fn radius_monotone(d1 in 0.0f64..5.0, d2 in 0.0f64..5.0, l1 in 0.01f64..5.0, l2 in 0.01f64..5.0, c in 0.0f64..2.0) {
            let (dlo, dhi) = (d1.min(d2), d1.max(d2));
            let (llo, lhi) = (l1.min(l2), l1.max(l2));
            let r = |d, l| passivity_radius(d, c, l).unwrap().radius;
            prop_assert!(r(dlo, l1) <= r(dhi, l1));
            prop_assert!(r(d1, lhi) <= r(d1, llo));
        }
    }

    #[test]
    fn cap_threshold_and_checks() {
        let t = kp_cap_threshold(0.5, 0.9);
        assert!((t - 0.253125).abs() < 1e-15);
        assert!(0.254 > t);
        let defaults = GainSet::duffing_default();
        assert!(!check_gain_caps(&defaults, 0.9, 0.254).unwrap());
        let within = GainSet::new(s(0.9), s(0.254), 0.5).unwrap();
        assert!(check_gain_caps(&within, 0.9, 0.254).unwrap());
        let err = check_gain_caps(&defaults, 0.5, 1.0).unwrap_err().to_string();
        assert!(err.contains("k̄_d"), "{err}");
        let err = check_gain_caps(&defaults, 0.9, 0.25).unwrap_err().to_string();
        assert!(err.contains("k̄_p"), "{err}");
    }

    #[test]
    fn acceleration_bounds() {
        let domain = DomainSpec::duffing_default();
        let req = required_xdot_bound(&domain, 0.9, 0.254);
        assert!((req.value - 2.408).abs() < 1e-12);
        assert!(req.contained);

        let origin = DomainSpec {
            dx: BoxRegion { lo: vec![0.0, 0.0], hi: vec![0.0, 0.0] },
            dxdot: BoxRegion { lo: vec![-1.0], hi: vec![1.0] },
            u_ex_max: 0.0,
        };
        assert_eq!(required_xdot_bound(&origin, 0.9, 0.254).value, 0.0);

        let doubled = DomainSpec { dx: domain.dx.scaled(2.0), ..domain.clone() };
        let base = required_xdot_bound(&domain, 0.9, 0.254).value - domain.u_ex_max;
        let twice = required_xdot_bound(&doubled, 0.9, 0.254).value - domain.u_ex_max;
        assert!((twice - 2.0 * base).abs() < 1e-12);

        let env = xdot2_envelope(0.045, &GainSet::duffing_default(), &domain);
        assert!((env.value - 3.945).abs() < 1e-12);
        assert!(!env.contained);

        let zero = GainSet::new_unchecked(s(0.0), s(0.0), 0.5);
        assert_eq!(xdot2_envelope(0.0, &zero, &DomainSpec { u_ex_max: 0.0, ..domain.clone() }).value, 0.0);
        let bigger = xdot2_envelope(0.1, &GainSet::duffing_default(), &domain).value;
        assert!(bigger >= env.value);
    }

    #[test]
    fn radius_cases() {
        assert_eq!(passivity_radius(0.0, 0.5, 0.3).unwrap().radius, 0.0);
        let lam = (0.9 - 0.2125f64.sqrt()) / 2.0;
        let r = passivity_radius(0.045, 0.5, lam).unwrap();
        assert!((r.linear_form - 1.5 * 0.045 / lam).abs() < 1e-15);
        assert!((r.linear_form - 0.307501).abs() < 1e-6);
        assert!((r.sqrt_form - 0.554528).abs() < 1e-6);
        assert_eq!(r.radius, r.sqrt_form);
        // v = 1 crossover
        let r = passivity_radius(1.0, 1.0, 2.0).unwrap();
        assert_eq!((r.sqrt_form, r.linear_form, r.radius), (1.0, 1.0, 1.0));
        // v > 1: linear radius dominates
        assert_eq!(passivity_radius(4.0, 1.0, 2.0).unwrap().radius, 4.0);
        assert!(passivity_radius(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn storage_cases() {
        let g = GainSet::duffing_default();
        assert_eq!(storage_value(&[0.0], &[0.0], &g).unwrap(), 0.0);
        assert!((storage_value(&[1.0], &[1.0], &g).unwrap() - 1.5).abs() < 1e-15);
        let bad = GainSet::new(s(1.0), s(0.2), 0.5).unwrap();
        assert!(storage_value(&[1.0], &[1.0], &bad).is_err());
    }

    #[test]
    fn storage_positive_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.random_range(1..=3);
            let c = rng.random_range(0.05..1.5);
            let kp = random_spd(&mut rng, n, c * c * 1.01 + 1e-3, c * c + 3.0);
            let g = GainSet::new(random_spd(&mut rng, n, 0.1, 2.0), kp, c).unwrap();
            let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            // oracle: V = ½ xᵀ P x with P = [[K_p, cI], [cI, I]], λ_min(P) > 0
            let mut p = DMatrix::identity(2 * n, 2 * n);
            p.view_mut((0, 0), (n, n)).copy_from(&g.kp);
            for i in 0..n {
                p[(i, n + i)] = c;
                p[(n + i, i)] = c;
            }
            assert!(lambda_min(&p) > 0.0);
            let mut x = x1.clone();
            x.extend_from_slice(&x2);
            let oracle = 0.5 * crate::linalg::quad_form(&p, &nalgebra::DVector::from_vec(x));
            let v = storage_value(&x1, &x2, &g).unwrap();
            assert!((v - oracle).abs() < 1e-10 * oracle.abs().max(1.0));
            assert!(v > 0.0);
        }
    }

    #[test]
    fn h_cases() {
        assert_eq!(h_value(&[0.0], &[0.0], 0.3, 0.1, 0.5), 0.0);
        assert!((h_value(&[1.0], &[2.0], 0.3, 0.0, 0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn h_positive_outside_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let lam = rng.random_range(0.01..2.0);
            let db = rng.random_range(0.0..3.0);
            let c = rng.random_range(0.0..2.0);
            let r = passivity_radius(db, c, lam).unwrap().radius;
            for _ in 0..50 {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let rho = r * rng.random_range(1.0001..3.0) + 1e-9;
                let (x1, x2) = (rho * angle.cos(), rho * angle.sin());
                assert!(h_value(&[x1], &[x2], lam, db, c) > 0.0);
            }
        }
    }

    #[test]
    fn certificate_cases() {
        let domain = DomainSpec::duffing_default();
        let caps = GainCaps::duffing_default();
        let cert = certify_delta_bar(0.0, 0.95, &GainSet::duffing_default(), &domain, caps).unwrap();
        assert!(cert.verdict, "{:?}", cert.reasons);
        assert_eq!(cert.radius, 0.0);

        let cert = certify_delta_bar(0.045, 0.95, &GainSet::duffing_default(), &domain, caps).unwrap();
        assert!(cert.verdict);
        assert!((cert.radius - 0.554528).abs() < 1e-6);
        assert!(cert.ball_in_dx && !cert.gains_within_caps && !cert.envelope_in_dxdot);
        assert_eq!(PassivityCertificate::from_report(&cert.to_report()).unwrap(), cert);

        let bad = GainSet::new(s(0.5), s(1.0), 0.5).unwrap();
        let cert = certify_delta_bar(0.045, 0.95, &bad, &domain, caps).unwrap();
        assert!(!cert.verdict);
        assert!(cert.reasons.iter().any(|r| r == "Λ not PD"));
    }
}
