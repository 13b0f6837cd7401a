//! Test-function machinery for the blow-up argument and lifespan sweeps.
//!
//! The weighted average `I_φ(t) = ∫ u(t,x) φ^l(x) dx` with `φ = ψ_R` obeys an
//! ordinary differential inequality once the data clear the threshold
//! `A(n,p,l,φ)`; this module computes every constant of that argument and
//! compares the resulting lower bound with simulated trajectories.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::estimates::least_squares;
use crate::grid::{make_grid, sample, DataProfile, Field, GridSpec};
use crate::nonlinear::{integrate, IntegratorControls, NonlinearityKind, NonlinearitySpec, Run, RunStatus, TraceWeights};
use crate::scalar::{sphere_area, Real};
use crate::symbols::chi_jet;

/// Minimum number of quadrature intervals across the transition shell.
const MIN_SHELL_INTERVALS: usize = 4096;

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `ψ_R(x) = χ(|x|/R)` raised to the power `l`, with cached integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub n: usize,
    pub p: f64,
    pub l: u32,
    pub radius: f64,
    /// `‖ψ_R^l‖₁`
    pub psi_l_norm: f64,
    /// `‖|Φ|^{p′} ψ_R^{l−2p′}‖₁`
    pub phi_norm: f64,
    /// `A(n,p,l,ψ_R)`
    pub a: f64,
}

impl TestFunction {
    pub fn new<T: Real>(n: usize, p: f64, l: u32, radius: f64, grid: &GridSpec<T>) -> Result<Self> {
        if !(p > 1.0) {
            return domain(format!("power must exceed 1, got {p}"));
        }
        if (l as f64) <= 2.0 * conjugate(p) {
            return domain(format!("l = {l} must exceed 2p′ = {}", 2.0 * conjugate(p)));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return domain(format!("radius must be positive, got {radius}"));
        }
        if grid.dim() != n {
            return Err(Error::GridMismatch);
        }
        let hw = grid.half_width().as_f64();
        if 2.0 * radius > hw / 2.0 {
            return domain(format!("support radius {} exceeds half_width/2 = {}", 2.0 * radius, hw / 2.0));
        }
        let mut tf = Self {
            n,
            p,
            l,
            radius,
            psi_l_norm: 0.0,
            phi_norm: 0.0,
            a: 0.0,
        };
        let (psi_l, phi) = tf.integrals(grid.dx().as_f64());
        tf.psi_l_norm = psi_l;
        tf.phi_norm = phi;
        tf.a = tf.a_from(psi_l, phi);
        Ok(tf)
    }

    /// `ψ_R(r)`
    pub fn psi(&self, r: f64) -> f64 {
        chi_jet(r / self.radius)[0]
    }

    /// `Φ = l(l−1)|∇ψ|² + lψΔψ` at radius `r`, from closed-form derivatives.
    pub fn big_phi(&self, r: f64) -> f64 {
        let rr = self.radius;
        let [c, c1, c2] = chi_jet(r / rr);
        let d1 = c1 / rr;
        let lap = c2 / (rr * rr) + if r > 0.0 { (self.n as f64 - 1.0) / r * d1 } else { 0.0 };
        let l = self.l as f64;
        l * (l - 1.0) * d1 * d1 + l * c * lap
    }

    /// Composite Simpson over the shell `R ≤ r ≤ 2R` plus the exact plateau.
    fn integrals(&self, dx: f64) -> (f64, f64) {
        let rr = self.radius;
        let mut m = MIN_SHELL_INTERVALS.max((4.0 * rr / dx).ceil() as usize);
        m += m % 2;
        let h = rr / m as f64;
        let area = sphere_area(self.n);
        let n = self.n as f64;
        let pc = conjugate(self.p);
        let l = self.l as f64;
        let (mut s_psi, mut s_phi) = (0.0, 0.0);
        for i in 0..=m {
            let r = rr + i as f64 * h;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let psi = self.psi(r);
            let jac = r.powf(n - 1.0);
            s_psi += w * psi.powf(l) * jac;
            if psi > 0.0 {
                s_phi += w * self.big_phi(r).abs().powf(pc) * psi.powf(l - 2.0 * pc) * jac;
            }
        }
        let plateau = area * rr.powf(n) / n;
        (plateau + area * s_psi * h / 3.0, area * s_phi * h / 3.0)
    }

    fn a_from(&self, psi_l: f64, phi: f64) -> f64 {
        let p = self.p;
        let pc = conjugate(p);
        2f64.powf(pc - 1.0) * pc.powf(-1.0 / p) * p.powf((1.0 - pc) / p) * phi.powf(1.0 / p) * psi_l.powf(1.0 / pc)
    }

    /// `ψ_R^l` sampled on a grid.
    pub fn weights<T: Real>(&self, grid: &GridSpec<T>) -> Vec<T> {
        let l = self.l as i32;
        (0..grid.len()).map(|i| T::c(self.psi(grid.radius(i).as_f64()).powi(l))).collect()
    }
}

/// `A(n,p,l,φ)` by radial quadrature at the grid's resolution.
#[allow(non_snake_case)]
pub fn big_A<T: Real>(n: usize, p: f64, l: u32, phi: &TestFunction, grid: &GridSpec<T>) -> Result<f64> {
    if phi.n != n || phi.l != l || phi.p != p {
        return domain("test function parameters do not match");
    }
    Ok(TestFunction::new(n, p, l, phi.radius, grid)?.a)
}

/// `μ(p, A) = min{1, (p−1)A/2}`
pub fn mu(p: f64, a: f64) -> Result<f64> {
    if !(p > 1.0) {
        return domain(format!("power must exceed 1, got {p}"));
    }
    if !(a > 0.0) {
        return domain(format!("A must be positive, got {a}"));
    }
    Ok(1f64.min((p - 1.0) / 2.0 * a))
}

/// Scaling radius and which of its three terms is active (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusChoice {
    pub value: f64,
    pub branch: usize,
    pub terms: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusParams {
    pub n: usize,
    pub r: f64,
    pub p: f64,
    pub k: f64,
    pub c0: f64,
    pub c_upper: f64,
    /// `A(n,p,l,ψ)` at unit radius.
    pub a_psi: f64,
    /// `‖ψ^l‖₁` at unit radius.
    pub psi_l_norm: f64,
}

/// The three-term maximum defining `R(ε)`.
pub fn radius_r(eps: f64, rp: &RadiusParams) -> Result<RadiusChoice> {
    let n = rp.n as f64;
    let (p, k) = (rp.p, rp.k);
    let lo = n / rp.r;
    let hi = n.min(2.0 / (p - 1.0));
    if !(k > lo && k < hi) {
        return domain(format!("k = {k} outside ({lo}, {hi})"));
    }
    if !(eps > 0.0) {
        return domain(format!("amplitude must be positive, got {eps}"));
    }
    if !(rp.c0 > 0.0 && rp.c_upper > 0.0 && rp.a_psi > 0.0 && rp.psi_l_norm > 0.0) {
        return domain("radius constants must be positive");
    }
    let area = sphere_area(rp.n);
    let t1 = 2f64.powf(1.0 / (n - k));
    let t2 = (rp.c_upper * area * 2f64.powf(n - k) * eps
        / ((n - k) * 2f64.powf(1.0 / (p - 1.0)) * rp.psi_l_norm))
        .powf(1.0 / k);
    let t3 = (4.0 * (n - k) * rp.a_psi / (rp.c0 * area * eps)).powf(1.0 / (2.0 / (p - 1.0) - k));
    let terms = [t1, t2, t3];
    let (branch, value) = terms
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(b, v), (i, &x)| if x > v { (i, x) } else { (b, v) });
    Ok(RadiusChoice {
        value,
        branch: branch + 1,
        terms,
    })
}

/// Quantities entering the sufficient condition for blow-up.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupCertificate {
    pub p: f64,
    pub i0: f64,
    pub i0_prime: f64,
    pub a: f64,
    pub j0: f64,
    pub jtilde0: f64,
    pub a1: f64,
    pub mu: f64,
    pub psi_l_norm: f64,
    /// `0 < J₀ < 2^{1/(p−1)}‖φ^l‖₁`
    pub gap_ok: bool,
    /// `I′(0) > 0`
    pub slope_ok: bool,
}

impl BlowupCertificate {
    pub fn condition_ok(&self) -> bool {
        self.gap_ok && self.slope_ok
    }

    /// Pole of the lower bound, `μ⁻¹ J̃₀^{1−p}`, which also bounds the lifespan.
    pub fn pole(&self) -> f64 {
        1.0 / (self.mu * self.jtilde0.powf(self.p - 1.0))
    }

    pub fn render(&self) -> String {
        use crate::report::fmt17;
        let rows = [
            ("p", fmt17(self.p)),
            ("i0", fmt17(self.i0)),
            ("i0_prime", fmt17(self.i0_prime)),
            ("a", fmt17(self.a)),
            ("j0", fmt17(self.j0)),
            ("jtilde0", fmt17(self.jtilde0)),
            ("a1", fmt17(self.a1)),
            ("mu", fmt17(self.mu)),
            ("pole", fmt17(self.pole())),
            ("gap_ok", self.gap_ok.to_string()),
            ("slope_ok", self.slope_ok.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Evaluates the certificate for data `(εu₀, εu₁)` and `φ`.
pub fn certify<T: Real>(
    u0: &Field<T>,
    u1: &Field<T>,
    eps: f64,
    phi: &TestFunction,
    p: f64,
    l: u32,
) -> Result<BlowupCertificate> {
    if phi.p != p || phi.l != l {
        return domain("test function parameters do not match");
    }
    u0.same_grid(u1)?;
    let w = phi.weights(u0.grid());
    let i0 = eps * u0.to_space()?.weighted_integral(&w)?.as_f64();
    let i0_prime = eps * u1.to_space()?.weighted_integral(&w)?.as_f64();
    let a = phi.a;
    let j0 = i0 - a;
    let jtilde0 = 2f64.powf(-1.0 / (p - 1.0)) * j0 / phi.psi_l_norm;
    let a1 = i0_prime / j0;
    let gap_ok = j0 > 0.0 && j0 < 2f64.powf(1.0 / (p - 1.0)) * phi.psi_l_norm;
    let slope_ok = i0_prime > 0.0;
    let mu = if gap_ok && slope_ok { mu(p, a1)? } else { f64::NAN };
    Ok(BlowupCertificate {
        p,
        i0,
        i0_prime,
        a,
        j0,
        jtilde0,
        a1,
        mu,
        psi_l_norm: phi.psi_l_norm,
        gap_ok,
        slope_ok,
    })
}

/// `J₀(1 − μ J̃₀^{p−1} t)^{−2/(p−1)}`
pub fn odi_lower_bound(cert: &BlowupCertificate, t: f64) -> Result<f64> {
    if !cert.condition_ok() {
        return domain("certificate conditions do not hold");
    }
    if !(t >= 0.0) {
        return domain(format!("time must be non-negative, got {t}"));
    }
    let pole = cert.pole();
    if t >= pole {
        return Err(Error::Pole { t, pole });
    }
    let p = cert.p;
    Ok(cert.j0 * (1.0 - t / pole).powf(-2.0 / (p - 1.0)))
}

/// `I_φ` along a run and its comparison with the lower bound.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IPhiTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Lower bound for `J_φ = I_φ − A` where it applies.
    pub bounds: Vec<Option<f64>>,
    /// Times where `I_φ − A < slack·bound`.
    pub violations: Vec<f64>,
    /// Smallest `(I_φ − A)/bound` seen.
    pub min_ratio: Option<f64>,
}

/// Evaluates `I_φ` at every snapshot; with a certificate, checks
/// `I_φ(t) − A ≥ slack · bound(t)` up to the bound's pole.
pub fn track_i_phi<T: Real>(
    run: &Run<T>,
    phi: &TestFunction,
    cert: Option<&BlowupCertificate>,
    slack: f64,
) -> Result<IPhiTrace> {
    let mut out = IPhiTrace::default();
    let Some(first) = run.snapshots.first() else {
        return Ok(out);
    };
    let w = phi.weights(first.u.grid());
    for snap in &run.snapshots {
        let i = snap.u.weighted_integral(&w)?.as_f64();
        let bound = match cert {
            Some(c) if c.condition_ok() && snap.time < c.pole() => Some(odi_lower_bound(c, snap.time)?),
            _ => None,
        };
        if let (Some(b), Some(c)) = (bound, cert) {
            let ratio = (i - c.a) / b;
            out.min_ratio = Some(out.min_ratio.map_or(ratio, |m: f64| m.min(ratio)));
            if ratio < slack {
                out.violations.push(snap.time);
            }
        }
        out.times.push(snap.time);
        out.values.push(i);
        out.bounds.push(bound);
    }
    Ok(out)
}

/// Data and equation for a lifespan experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub r: f64,
    pub p: f64,
    pub k: f64,
    pub c0: f64,
    pub c_upper: f64,
    pub c1: f64,
    pub l: u32,
    pub half_width: f64,
    pub points: usize,
}

impl Default for Scenario {
    /// One dimension, `p = 2`, `r = 2`, data `~|x|^{−0.6}`.
    fn default() -> Self {
        let k = 0.6;
        Self {
            n: 1,
            r: 2.0,
            p: 2.0,
            k,
            c0: 1.0,
            c_upper: 3f64.powf(k),
            c1: 1.0,
            l: 5,
            half_width: 2048.0,
            points: 16384,
        }
    }
}

impl Scenario {
    /// `ω = 1/(p−1) − n/(2r)`
    pub fn omega(&self) -> f64 {
        1.0 / (self.p - 1.0) - self.n as f64 / (2.0 * self.r)
    }

    /// Slopes of `log T` against `log ε` from the two lifespan bounds:
    /// `−1/ω` and `−1/(1/(p−1) − k/2)`.
    pub fn slope_pair(&self) -> (f64, f64) {
        (-1.0 / self.omega(), -1.0 / (1.0 / (self.p - 1.0) - self.k / 2.0))
    }

    pub fn grid<T: Real>(&self) -> Result<GridSpec<T>> {
        make_grid(self.n, T::c(self.half_width), self.points)
    }

    pub fn data<T: Real>(&self, grid: &GridSpec<T>) -> Result<(Field<T>, Field<T>)> {
        let u0 = sample(
            &DataProfile::PowerDecay {
                k: self.k,
                c0: self.c0,
                c_upper: self.c_upper,
            },
            grid,
        )?;
        let u1 = sample(
            &DataProfile::PowerDecay {
                k: self.k,
                c0: self.c1,
                c_upper: self.c1 * 3f64.powf(self.k),
            },
            grid,
        )?;
        Ok((u0, u1))
    }

    /// `+|u|^p`
    pub fn nonlinearity(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::new(NonlinearityKind::SignedPower { sign: 1.0 }, self.p)
    }

    pub fn weights(&self) -> TraceWeights {
        TraceWeights {
            n: self.n,
            r: self.r,
            s: 0.0,
            p: self.p,
        }
    }

    pub fn radius_params<T: Real>(&self, grid: &GridSpec<T>) -> Result<RadiusParams> {
        let unit = TestFunction::new(self.n, self.p, self.l, 1.0, grid)?;
        Ok(RadiusParams {
            n: self.n,
            r: self.r,
            p: self.p,
            k: self.k,
            c0: self.c0,
            c_upper: self.c_upper,
            a_psi: unit.a,
            psi_l_norm: unit.psi_l_norm,
        })
    }

    /// Test function `ψ_{R(ε)}` and its certificate.
    pub fn certificate<T: Real>(&self, eps: f64, grid: &GridSpec<T>) -> Result<(RadiusChoice, TestFunction, BlowupCertificate)> {
        let rc = radius_r(eps, &self.radius_params(grid)?)?;
        let phi = TestFunction::new(self.n, self.p, self.l, rc.value, grid)?;
        let (u0, u1) = self.data(grid)?;
        let cert = certify(&u0, &u1, eps, &phi, self.p, self.l)?;
        Ok((rc, phi, cert))
    }

    /// Lower bound `c₀|S_{n−1}|R^{n−k}ε / (4(n−k))` on `J₀`.
    pub fn j0_floor(&self, eps: f64, radius: f64) -> f64 {
        let n = self.n as f64;
        self.c0 * sphere_area(self.n) * radius.powf(n - self.k) * eps / (4.0 * (n - self.k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifespanPoint {
    pub eps: f64,
    pub t_measured: Option<f64>,
    pub status: RunStatus,
    pub r_used: Option<f64>,
    pub branch: Option<usize>,
    /// Detection time with the blow-up threshold multiplied by the shift.
    pub t_shifted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<LifespanPoint>,
    /// `(slope, intercept)` of `log T` against `log ε`; `None` when refused.
    pub fit: Option<(f64, f64)>,
    /// Two-sided band with slack, when the scenario is subcritical.
    pub band: Option<(f64, f64)>,
    /// Largest swept ε at which the third radius term is active.
    pub eps2: Option<f64>,
    /// `min_ε 1/(T ε^{1/(1/(p−1)−k/2)})` over blown-up points.
    pub mu0_empirical: Option<f64>,
    pub warnings: Vec<String>,
}

impl SweepReport {
    pub fn in_band(&self) -> bool {
        matches!((self.fit, self.band), (Some((s, _)), Some((lo, hi))) if s >= lo && s <= hi)
    }

    /// Largest `|log T_shifted − log T|`.
    pub fn max_log_shift(&self) -> Option<f64> {
        self.points
            .iter()
            .filter_map(|pt| Some((pt.t_shifted?.ln() - pt.t_measured?.ln()).abs()))
            .reduce(f64::max)
    }

    pub const HEADER: [&'static str; 6] = ["eps", "R", "status", "T", "active_branch", "T_shifted"];

    pub fn rows(&self) -> Vec<Vec<String>> {
        use crate::report::fmt17;
        let opt = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), fmt17);
        self.points
            .iter()
            .map(|pt| {
                vec![
                    fmt17(pt.eps),
                    opt(pt.r_used),
                    pt.status.label().to_string(),
                    opt(pt.t_measured),
                    pt.branch.map_or_else(|| "0".to_string(), |b| b.to_string()),
                    opt(pt.t_shifted),
                ]
            })
            .collect()
    }
}

/// Runs the scenario for every ε in parallel and fits `log T` against `log ε`.
pub fn lifespan_sweep(
    eps_list: &[f64],
    scenario: &Scenario,
    controls: &IntegratorControls,
    threshold_shift: Option<f64>,
    slack: f64,
) -> Result<SweepReport> {
    if eps_list.len() < 5 {
        return Err(Error::Config(format!("a sweep needs at least 5 amplitudes, got {}", eps_list.len())));
    }
    if eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("amplitudes must be positive".into()));
    }
    controls.validate()?;
    let grid: GridSpec<f64> = scenario.grid()?;
    let subcritical = scenario.omega() > 0.0;
    let rparams = if subcritical {
        scenario.radius_params(&grid).ok()
    } else {
        None
    };
    let hw = scenario.half_width;
    let mut radii = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let rc = rparams.as_ref().map(|rp| radius_r(eps, rp)).transpose()?;
        if let Some(rc) = rc {
            if rc.value > hw / 4.0 {
                return domain(format!("R({eps}) = {} exceeds half_width/4 = {}", rc.value, hw / 4.0));
            }
        }
        radii.push(rc);
    }
    let (u0, u1) = scenario.data(&grid)?;
    let spec = scenario.nonlinearity()?;
    let weights = scenario.weights();
    let runs: Vec<Result<LifespanPoint>> = eps_list
        .par_iter()
        .zip(radii.par_iter())
        .map(|(&eps, rc)| {
            let run = integrate(&u0, &u1, eps, &spec, controls, &weights)?;
            let t_shifted = match (threshold_shift, run.status.breakdown_time()) {
                (Some(f), Some(_)) => {
                    let shifted = IntegratorControls {
                        blowup_factor: controls.blowup_factor * f,
                        ..controls.clone()
                    };
                    integrate(&u0, &u1, eps, &spec, &shifted, &weights)?.status.breakdown_time()
                }
                _ => None,
            };
            Ok(LifespanPoint {
                eps,
                t_measured: run.status.breakdown_time(),
                status: run.status,
                r_used: rc.map(|c| c.value),
                branch: rc.map(|c| c.branch),
                t_shifted,
            })
        })
        .collect();
    let points = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for pt in &points {
        match pt.t_measured {
            Some(t) => {
                xs.push(pt.eps.ln());
                ys.push(t.ln());
            }
            None => warnings.push(format!("eps = {}: no blow-up before the horizon; excluded", pt.eps)),
        }
    }
    let fit = (xs.len() >= 2).then(|| {
        let (a, b, _) = least_squares(&xs, &ys);
        (a, b)
    });
    if fit.is_none() {
        warnings.push("fewer than two blown-up points; fit refused".into());
    }
    let band = subcritical.then(|| {
        let (a, b) = scenario.slope_pair();
        (a.min(b) - slack, a.max(b) + slack)
    });
    let eps2 = points
        .iter()
        .filter(|pt| pt.branch == Some(3))
        .map(|pt| pt.eps)
        .reduce(f64::max);
    let mu0_empirical = subcritical
        .then(|| {
            let e = 1.0 / (1.0 / (scenario.p - 1.0) - scenario.k / 2.0);
            points
                .iter()
                .filter_map(|pt| Some(1.0 / (pt.t_measured? * pt.eps.powf(e))))
                .reduce(f64::min)
        })
        .flatten();
    Ok(SweepReport {
        points,
        fit,
        band,
        eps2,
        mu0_empirical,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(hw: f64, n: usize) -> GridSpec<f64> {
        make_grid(1, hw, n).unwrap()
    }

    #[test]
    fn mu_values() {
        assert_eq!(mu(3.0, 4.0).unwrap(), 1.0);
        assert_relative_eq!(mu(1.5, 0.8).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(mu(2.5, 2.0 / 1.5).unwrap(), 1.0);
        assert!(mu(2.0, 0.0).is_err());
    }

    #[test]
    fn l_must_exceed_twice_conjugate() {
        let g = grid(64.0, 1024);
        assert!(TestFunction::new(1, 2.0, 4, 1.0, &g).is_err());
        assert!(TestFunction::new(1, 2.0, 5, 1.0, &g).is_ok());
        assert!(TestFunction::new(1, 2.0, 5, 20.0, &g).is_err());
    }

    #[test]
    fn phi_vanishes_on_plateau() {
        let g = grid(64.0, 1024);
        let tf = TestFunction::new(1, 2.0, 5, 4.0, &g).unwrap();
        for r in [0.0, 1.0, 3.0, 4.0] {
            assert_eq!(tf.big_phi(r), 0.0);
        }
        assert!(tf.big_phi(6.0) != 0.0);
        assert!(tf.a > 0.0);
    }

    #[test]
    fn a_stable_under_refinement() {
        let a1 = TestFunction::new(1, 2.0, 5, 1.0, &grid(16.0, 256)).unwrap().a;
        let a2 = TestFunction::new(1, 2.0, 5, 1.0, &grid(16.0, 512)).unwrap().a;
        assert!(a1 > 0.0);
        assert!(((a1 - a2) / a2).abs() < 1e-4);
    }

    #[test]
    fn a_scaling_identity() {
        let g = grid(128.0, 2048);
        let p: f64 = 2.0;
        let expo = 1.0 - 2.0 * conjugate(p) / p;
        let base = TestFunction::new(1, p, 5, 1.0, &g).unwrap().a;
        for rr in [4.0, 8.0, 16.0] {
            let a = TestFunction::new(1, p, 5, rr, &g).unwrap().a;
            assert_relative_eq!(a / base, rr.powf(expo), max_relative = 1e-3);
        }
    }

    #[test]
    fn radius_branches() {
        let rp = RadiusParams {
            n: 1,
            r: 2.0,
            p: 2.0,
            k: 0.6,
            c0: 1.0,
            c_upper: 3f64.powf(0.6),
            a_psi: 80.0,
            psi_l_norm: 2.5,
        };
        // small ε: third branch, exact power law
        let e = [1e-6, 1e-5, 1e-4];
        let rs: Vec<f64> = e.iter().map(|&x| radius_r(x, &rp).unwrap().value).collect();
        assert!(e.iter().all(|&x| radius_r(x, &rp).unwrap().branch == 3));
        let slope = (rs[2] / rs[0]).ln() / (e[2] / e[0]).ln();
        assert!((slope + 1.0 / (2.0 - 0.6)).abs() < 1e-6);
        // huge ε: second branch
        let big = radius_r(1e12, &rp).unwrap();
        assert_eq!(big.branch, 2);
        // floor everywhere
        for x in [1e-3, 1.0, 1e3, 1e6] {
            assert!(radius_r(x, &rp).unwrap().value >= 2f64.powf(1.0 / 0.4));
        }
        assert!(radius_r(1e-3, &RadiusParams { k: 0.4, ..rp }).is_err());
    }

    #[test]
    fn radius_continuous_across_switch() {
        let rp = RadiusParams {
            n: 1,
            r: 2.0,
            p: 2.0,
            k: 0.6,
            c0: 1.0,
            c_upper: 2.0,
            a_psi: 1.0,
            psi_l_norm: 2.5,
        };
        let mut prev = radius_r(1e-3, &rp).unwrap();
        let mut switched = false;
        for i in 1..4000 {
            let e = 1e-3 * 1.01f64.powi(i);
            let cur = radius_r(e, &rp).unwrap();
            if cur.branch != prev.branch {
                switched = true;
                assert!((cur.value / prev.value - 1.0).abs() < 0.02);
            }
            prev = cur;
        }
        assert!(switched);
    }

    #[test]
    fn odi_bound_shape() {
        let cert = BlowupCertificate {
            p: 2.0,
            i0: 3.0,
            i0_prime: 1.0,
            a: 1.0,
            j0: 2.0,
            jtilde0: 0.1,
            a1: 0.5,
            mu: 0.25,
            psi_l_norm: 10.0,
            gap_ok: true,
            slope_ok: true,
        };
        let pole = cert.pole();
        assert_relative_eq!(pole, 40.0, epsilon = 1e-12);
        assert_eq!(odi_lower_bound(&cert, 0.0).unwrap(), 2.0);
        assert_relative_eq!(odi_lower_bound(&cert, pole / 2.0).unwrap(), 2.0 * 4.0, epsilon = 1e-12);
        let mut prev = 0.0;
        for i in 0..100 {
            let v = odi_lower_bound(&cert, pole * i as f64 / 100.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(matches!(odi_lower_bound(&cert, pole), Err(Error::Pole { .. })));
    }

    #[test]
    fn certificate_gate() {
        let g = grid(32.0, 512);
        let tf = TestFunction::new(1, 2.0, 5, 2.0, &g).unwrap();
        let u = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        // tiny data cannot clear the threshold A
        let cert = certify(&u, &u, 1e-3, &tf, 2.0, 5).unwrap();
        assert!(!cert.gap_ok);
        assert!(cert.slope_ok);
        assert!(!cert.condition_ok());
        assert!(odi_lower_bound(&cert, 0.0).is_err());
    }

    #[test]
    fn scenario_certificates() {
        let sc = Scenario::default();
        let g: GridSpec<f64> = sc.grid().unwrap();
        for eps in [0.05, 0.025, 0.0125] {
            let (rc, _, cert) = sc.certificate(eps, &g).unwrap();
            assert!(cert.condition_ok(), "eps {eps}: {cert:?}");
            assert!(cert.j0 >= 0.9 * sc.j0_floor(eps, rc.value));
        }
    }

    #[test]
    fn supercritical_sweep_refuses_fit() {
        let sc = Scenario {
            p: 6.0,
            half_width: 64.0,
            points: 512,
            ..Scenario::default()
        };
        let controls = IntegratorControls {
            dt_init: 0.1,
            horizon: 5.0,
            ..Default::default()
        };
        let rep = lifespan_sweep(&[0.01, 0.02, 0.03, 0.04, 0.05], &sc, &controls, None, 0.2).unwrap();
        assert!(rep.points.iter().all(|p| p.t_measured.is_none()));
        assert!(rep.fit.is_none());
        assert!(rep.band.is_none());
    }
}
