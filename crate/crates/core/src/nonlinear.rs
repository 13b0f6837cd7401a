//! Semilinear damped wave solver.
//!
//! Time stepping is an exponential integrator: the linear damped wave flow is
//! applied exactly on the spectrum and the Duhamel integral of the forcing is
//! approximated by a two-point rule inside each step.

use std::collections::HashMap;

use num_complex::Complex;

use crate::error::{domain, Error, Result};
use crate::estimates::DecayFit;
use crate::grid::{Field, GridSpec, Rep};
use crate::propagators::{apply_g, PairState};
use crate::scalar::{bracket, Real};
use crate::symbols::{chi, BranchPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearityKind {
    /// `sign·|u|^p` with `sign = ±1`.
    SignedPower { sign: f64 },
    /// `|u|^{p−1}u`
    FocusingPower,
}

/// Power nonlinearity `amplitude·𝒩(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub p_power: f64,
    pub amplitude: f64,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, p_power: f64) -> Result<Self> {
        if !(p_power > 1.0 && p_power.is_finite()) {
            return Err(Error::Config(format!("power must be finite and > 1, got {p_power}")));
        }
        if let NonlinearityKind::SignedPower { sign } = kind {
            if sign != 1.0 && sign != -1.0 {
                return Err(Error::Config(format!("sign must be +1 or -1, got {sign}")));
            }
        }
        Ok(Self {
            kind,
            p_power,
            amplitude: 1.0,
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Integer smoothness order `⌊p⌋` for which the difference bounds hold.
    pub fn p0(&self) -> usize {
        self.p_power.floor() as usize
    }

    pub fn eval_scalar<T: Real>(&self, u: T) -> T {
        let p = T::c(self.p_power);
        let a = T::c(self.amplitude);
        match self.kind {
            NonlinearityKind::SignedPower { sign } => a * T::c(sign) * u.abs().powf(p),
            NonlinearityKind::FocusingPower => a * u.abs().powf(p - T::one()) * u,
        }
    }
}

/// Pointwise `𝒩(u)` of a real-space field.
pub fn nonlinearity_eval<T: Real>(u: &Field<T>, spec: &NonlinearitySpec) -> Result<Field<T>> {
    u.expect_rep(Rep::Space)?;
    let data = u.data().iter().map(|c| Complex::new(spec.eval_scalar(c.re), T::zero())).collect();
    Field::from_complex(u.grid(), data, Rep::Space)
}

/// Right-hand side of `∂ₜ²u − Δu + ∂ₜu = F(u, t)`.
pub trait Source<T: Real>: Sync {
    /// Forcing for the real-space field `u` at time `t`, in real space.
    fn eval(&self, u: &Field<T>, t: T) -> Result<Field<T>>;

    /// Power used by the `Y`-norm weights; `None` for non-power forcing.
    fn power(&self) -> Option<f64> {
        None
    }
}

impl<T: Real> Source<T> for NonlinearitySpec {
    fn eval(&self, u: &Field<T>, _t: T) -> Result<Field<T>> {
        nonlinearity_eval(u, self)
    }

    fn power(&self) -> Option<f64> {
        Some(self.p_power)
    }
}

/// Two-point rule for the Duhamel integral over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    /// Endpoint weights through the exact flow, with a predictor for the
    /// right endpoint.
    #[default]
    Trapezoid,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorControls {
    /// Initial and largest step.
    pub dt_init: f64,
    pub dt_min: f64,
    /// Largest accepted relative sup-norm change of `u` per step.
    pub safety: f64,
    /// Blow-up is declared when `‖u‖_∞` or `‖u‖₂` exceeds this multiple of
    /// its initial value.
    pub blowup_factor: f64,
    pub horizon: f64,
    pub rule: QuadratureRule,
    pub dealias: bool,
    /// Times at which snapshots are kept (the first accepted step at or past
    /// each time is recorded).
    pub snapshot_times: Vec<f64>,
    /// Additionally keep a snapshot every this many accepted steps.
    pub snapshot_stride: Option<usize>,
    /// Record the norm trace every this many accepted steps.
    pub trace_stride: usize,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        Self {
            dt_init: 0.05,
            dt_min: 1e-8,
            safety: 0.1,
            blowup_factor: 1e6,
            horizon: 10.0,
            rule: QuadratureRule::Trapezoid,
            dealias: true,
            snapshot_times: Vec::new(),
            snapshot_stride: None,
            trace_stride: 1,
        }
    }
}

impl IntegratorControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_init) {
            return Err(Error::Config(format!(
                "need 0 < dt_min < dt_init, got {} and {}",
                self.dt_min, self.dt_init
            )));
        }
        if !(self.safety > 0.0) {
            return Err(Error::Config(format!("safety must be positive, got {}", self.safety)));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(Error::Config(format!(
                "blow-up factor must exceed 1, got {}",
                self.blowup_factor
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.trace_stride == 0 || self.snapshot_stride == Some(0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        Ok(())
    }
}

/// Exponent data for the `X(T)` and `Y(T)` weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceWeights {
    pub n: usize,
    pub r: f64,
    pub s: f64,
    pub p: f64,
}

impl TraceWeights {
    /// `(n/2)(1/r − 1/2)`
    pub fn lebesgue_gain(&self) -> f64 {
        self.n as f64 / 2.0 * (1.0 / self.r - 0.5)
    }

    pub fn eta(&self) -> f64 {
        let n = self.n as f64;
        -0.5 + self.s / 2.0 + n / 2.0 * (self.p / self.r - 0.5)
    }

    pub fn sigma1(&self) -> f64 {
        (self.r / self.p).max(1.0)
    }

    pub fn sigma2(&self) -> f64 {
        let n = self.n as f64;
        if 2.0 * self.s >= n {
            2.0
        } else {
            (2.0 * n / (self.p * (n - 2.0 * self.s))).min(2.0)
        }
    }
}

/// Weighted norms of the solution and of the forcing along a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormTrace {
    pub times: Vec<f64>,
    /// `⟨t⟩^{(n/2)(1/r−1/2)+s/2}‖|∇|^s u‖₂`
    pub x_grad: Vec<f64>,
    /// `⟨t⟩^{(n/2)(1/r−1/2)}‖u‖₂`
    pub x_l2: Vec<f64>,
    /// `‖u‖_r`
    pub x_lr: Vec<f64>,
    /// `⟨t⟩^η‖|∇|^{s−1}F‖₂`, high frequencies only when `s ≤ 1`.
    pub y_grad: Vec<f64>,
    /// `max_γ ⟨t⟩^{(n/2)(p/r−1/γ)}‖F‖_γ` over `γ ∈ [σ₁, σ₂]`.
    pub y_lebesgue: Vec<f64>,
}

impl NormTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn x_norm(&self, i: usize) -> f64 {
        self.x_grad[i] + self.x_l2[i] + self.x_lr[i]
    }

    pub fn y_norm(&self, i: usize) -> f64 {
        self.y_grad[i] + self.y_lebesgue[i]
    }

    /// `‖u‖_{X(t_i)}` for every recorded time.
    pub fn running_sup(&self) -> Vec<f64> {
        let mut m = 0.0f64;
        (0..self.len())
            .map(|i| {
                m = m.max(self.x_norm(i));
                m
            })
            .collect()
    }

    pub const HEADER: [&'static str; 8] =
        ["t", "x_grad", "x_l2", "x_lr", "x_sup", "y_grad", "y_lebesgue", "y_total"];

    pub fn rows(&self) -> Vec<Vec<String>> {
        use crate::report::fmt17;
        let sup = self.running_sup();
        (0..self.len())
            .map(|i| {
                vec![
                    fmt17(self.times[i]),
                    fmt17(self.x_grad[i]),
                    fmt17(self.x_l2[i]),
                    fmt17(self.x_lr[i]),
                    fmt17(sup[i]),
                    fmt17(self.y_grad[i]),
                    fmt17(self.y_lebesgue[i]),
                    fmt17(self.y_norm(i)),
                ]
            })
            .collect()
    }

    fn record<T: Real>(&mut self, w: &TraceWeights, t: f64, u_hat: &Field<T>, u: &Field<T>, f_hat: &Field<T>, f: &Field<T>) -> Result<()> {
        let bt = bracket(t);
        let gain = w.lebesgue_gain();
        let s = w.s;
        let grad = spectral_norm(u_hat, |k| if s == 0.0 { 1.0 } else { k.powf(s) });
        let l2 = spectral_norm(u_hat, |_| 1.0);
        let lr = u.lp_norm(T::c(w.r))?.as_f64();
        let y_grad = spectral_norm(f_hat, |k| {
            if k == 0.0 {
                0.0
            } else if s > 1.0 {
                k.powf(s - 1.0)
            } else {
                (1.0 - chi(k)) * k.powf(s - 1.0)
            }
        });
        // an empty range (σ₂ < σ₁) collapses to σ₁
        let (a, b) = (w.sigma1(), w.sigma1().max(w.sigma2()));
        let mut y_leb = 0.0f64;
        for i in 0..5 {
            let g = a + (b - a) * i as f64 / 4.0;
            let weight = bt.powf(w.n as f64 / 2.0 * (w.p / w.r - 1.0 / g));
            y_leb = y_leb.max(weight * f.lp_norm(T::c(g))?.as_f64());
        }
        self.times.push(t);
        self.x_grad.push(bt.powf(gain + s / 2.0) * grad);
        self.x_l2.push(bt.powf(gain) * l2);
        self.x_lr.push(lr);
        self.y_grad.push(bt.powf(w.eta()) * y_grad);
        self.y_lebesgue.push(y_leb);
        Ok(())
    }
}

fn spectral_norm<T: Real>(f_hat: &Field<T>, weight: impl Fn(f64) -> f64) -> f64 {
    let g = f_hat.grid();
    let w = g.dxi().as_f64().powi(g.dim() as i32);
    let s: f64 = f_hat
        .data()
        .iter()
        .zip(g.xi_mag())
        .map(|(c, &k)| {
            let m = weight(k.as_f64());
            m * m * c.norm_sqr().as_f64()
        })
        .sum();
    (s * w).sqrt()
}

/// One-step propagator with cached flow coefficients.
pub struct Stepper<'a, T: Real, S: Source<T> + ?Sized> {
    source: &'a S,
    rule: QuadratureRule,
    keep: Option<Vec<bool>>,
    cache: HashMap<u64, (Vec<T>, Vec<T>, Vec<T>)>,
}

/// Forcing evaluated at a state, in both representations.
struct Forcing<T: Real> {
    u: Field<T>,
    f: Field<T>,
    f_hat: Field<T>,
}

impl<'a, T: Real, S: Source<T> + ?Sized> Stepper<'a, T, S> {
    pub fn new(source: &'a S, grid: &GridSpec<T>, rule: QuadratureRule, dealias: bool) -> Self {
        let keep = dealias.then(|| (0..grid.len()).map(|i| grid.dealias_keep(i)).collect());
        Self {
            source,
            rule,
            keep,
            cache: HashMap::new(),
        }
    }

    /// Coefficients `(∂ₜB + B, B, ∂ₜB)` of the exact flow over `dt`.
    fn coefficients(&mut self, grid: &GridSpec<T>, dt: T) -> &(Vec<T>, Vec<T>, Vec<T>) {
        let key = dt.as_f64().to_bits();
        if self.cache.len() > 32 && !self.cache.contains_key(&key) {
            self.cache.clear();
        }
        self.cache.entry(key).or_insert_with(|| {
            let bp = BranchPolicy::default();
            let mut a = Vec::with_capacity(grid.len());
            let mut b = Vec::with_capacity(grid.len());
            let mut c = Vec::with_capacity(grid.len());
            for &k in grid.xi_mag() {
                let bb = bp.damped(dt, k);
                let bt = bp.damped_dt(dt, k);
                a.push(bt + bb);
                b.push(bb);
                c.push(bt);
            }
            (a, b, c)
        })
    }

    /// Exact linear flow of `(û, v̂)` over `dt`.
    fn flow(&mut self, u: &Field<T>, v: &Field<T>, dt: T) -> Result<(Field<T>, Field<T>)> {
        let grid = u.grid().clone();
        let (a, b, c) = self.coefficients(&grid, dt);
        let mut un = Vec::with_capacity(grid.len());
        let mut vn = Vec::with_capacity(grid.len());
        for (i, &k) in grid.xi_mag().iter().enumerate() {
            let (u0, v0) = (u.data()[i], v.data()[i]);
            un.push(u0 * a[i] + v0 * b[i]);
            vn.push(u0 * (-k * k * b[i]) + v0 * c[i]);
        }
        Ok((
            Field::from_complex(&grid, un, Rep::Freq)?,
            Field::from_complex(&grid, vn, Rep::Freq)?,
        ))
    }

    fn forcing(&self, u_hat: &Field<T>, t: T) -> Result<Forcing<T>> {
        let u = u_hat.to_space()?;
        let f = self.source.eval(&u, t)?;
        if f.data().iter().any(|c| !c.re.is_finite()) {
            return Err(Error::Overflow { t: t.as_f64() });
        }
        let mut f_hat = f.to_freq()?;
        if let Some(keep) = &self.keep {
            for (c, &k) in f_hat.data_mut().iter_mut().zip(keep) {
                if !k {
                    *c = Complex::new(T::zero(), T::zero());
                }
            }
        }
        Ok(Forcing { u, f, f_hat })
    }

    /// Advances a frequency-space state by `dt`, given the forcing at the
    /// current time.
    fn advance(&mut self, state: &PairState<T>, f_now: &Field<T>, dt: T) -> Result<PairState<T>> {
        let t = state.time;
        let half = dt * T::c(0.5);
        let (u, v) = match self.rule {
            QuadratureRule::Trapezoid => {
                let (up, _) = self.flow(&state.u, &state.v.axpy(dt, f_now)?, dt)?;
                let f_pred = self.forcing(&up, t + dt)?;
                let (uc, vc) = self.flow(&state.u, &state.v.axpy(half, f_now)?, dt)?;
                (uc, vc.axpy(half, &f_pred.f_hat)?)
            }
            QuadratureRule::Midpoint => {
                let (uh, _) = self.flow(&state.u, &state.v.axpy(half, f_now)?, half)?;
                let f_mid = self.forcing(&uh, t + half)?;
                let (u0h, v0h) = self.flow(&state.u, &state.v, half)?;
                self.flow(&u0h, &v0h.axpy(dt, &f_mid.f_hat)?, half)?
            }
        };
        if u.data().iter().chain(v.data()).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Overflow { t: (t + dt).as_f64() });
        }
        PairState::new(u, v, t + dt)
    }
}

/// One exponential step of size `dt`; the result has the input's representation.
pub fn duhamel_step<T: Real, S: Source<T> + ?Sized>(state: &PairState<T>, dt: T, source: &S) -> Result<PairState<T>> {
    duhamel_step_with(state, dt, source, QuadratureRule::Trapezoid)
}

pub fn duhamel_step_with<T: Real, S: Source<T> + ?Sized>(
    state: &PairState<T>,
    dt: T,
    source: &S,
    rule: QuadratureRule,
) -> Result<PairState<T>> {
    if !(dt > T::zero() && dt.is_finite()) {
        return domain(format!("time step must be positive, got {dt}"));
    }
    let rep = state.u.rep();
    let s = state.to_freq()?;
    let mut stepper = Stepper::new(source, s.u.grid(), rule, true);
    let f = stepper.forcing(&s.u, s.time)?;
    let out = stepper.advance(&s, &f.f_hat, dt)?;
    match rep {
        Rep::Freq => Ok(out),
        Rep::Space => out.to_space(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    Blowup(f64),
    DtUnderflow(f64),
}

impl RunStatus {
    /// Detection time for either failure mode.
    pub fn breakdown_time(&self) -> Option<f64> {
        match *self {
            RunStatus::Completed => None,
            RunStatus::Blowup(t) | RunStatus::DtUnderflow(t) => Some(t),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Blowup(_) => "blowup",
            RunStatus::DtUnderflow(_) => "dt_underflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T: Real> {
    pub time: f64,
    /// Real-space solution.
    pub u: Field<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run<T: Real> {
    pub snapshots: Vec<Snapshot<T>>,
    pub trace: NormTrace,
    pub status: RunStatus,
    pub steps: usize,
    pub rejected: usize,
    /// Last accepted state, frequency representation.
    pub last: PairState<T>,
}

/// Marches `(εu₀, εu₁)` to the horizon or until breakdown.
pub fn integrate<T: Real, S: Source<T> + ?Sized>(
    u0: &Field<T>,
    u1: &Field<T>,
    eps: f64,
    source: &S,
    controls: &IntegratorControls,
    weights: &TraceWeights,
) -> Result<Run<T>> {
    controls.validate()?;
    u0.same_grid(u1)?;
    if !eps.is_finite() {
        return Err(Error::Config(format!("amplitude must be finite, got {eps}")));
    }
    let grid = u0.grid().clone();
    if weights.n != grid.dim() {
        return Err(Error::Config(format!(
            "trace weights are for n = {}, grid has n = {}",
            weights.n,
            grid.dim()
        )));
    }
    let e = T::c(eps);
    let mut state = PairState::new(u0.to_freq()?.scale(e), u1.to_freq()?.scale(e), T::zero())?;
    let mut stepper = Stepper::new(source, &grid, controls.rule, controls.dealias);
    let mut f = stepper.forcing(&state.u, T::zero())?;

    let linf0 = f.u.max_abs().as_f64();
    let l20 = spectral_norm(&state.u, |_| 1.0);
    let linf_cap = controls.blowup_factor * linf0;
    let l2_cap = controls.blowup_factor * l20;

    let mut trace = NormTrace::default();
    trace.record(weights, 0.0, &state.u, &f.u, &f.f_hat, &f.f)?;
    let mut snapshots = vec![Snapshot { time: 0.0, u: f.u.clone() }];
    let mut pending: Vec<f64> = controls.snapshot_times.iter().copied().filter(|&t| t > 0.0).collect();
    pending.sort_by(|a, b| b.total_cmp(a));

    let mut dt = controls.dt_init;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let horizon = controls.horizon;
    let mut status = RunStatus::Completed;
    let mut t = 0.0f64;

    while t < horizon * (1.0 - 1e-14) {
        let h = dt.min(horizon - t);
        let attempt = stepper
            .advance(&state, &f.f_hat, T::c(h))
            .and_then(|next| stepper.forcing(&next.u, next.time).map(|fn_| (next, fn_)));
        let (next, f_next) = match attempt {
            Ok(pair) => pair,
            Err(Error::Overflow { .. }) => {
                rejected += 1;
                dt *= 0.5;
                if dt < controls.dt_min {
                    status = RunStatus::DtUnderflow(t);
                    break;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let old_max = f.u.max_abs().as_f64();
        let change = f
            .u
            .data()
            .iter()
            .zip(f_next.u.data())
            .fold(0.0f64, |m, (a, b)| m.max((*a - *b).norm().as_f64()));
        let rel = if change == 0.0 { 0.0 } else { change / old_max.max(f64::MIN_POSITIVE) };
        if rel > controls.safety {
            rejected += 1;
            dt *= 0.5;
            if dt < controls.dt_min {
                status = RunStatus::DtUnderflow(t);
                break;
            }
            continue;
        }
        state = next;
        f = f_next;
        t += h;
        steps += 1;

        let linf = f.u.max_abs().as_f64();
        let l2 = spectral_norm(&state.u, |_| 1.0);
        let broke = linf > linf_cap || l2 > l2_cap;
        let at_end = t >= horizon * (1.0 - 1e-14);
        if broke || at_end || steps % controls.trace_stride == 0 {
            trace.record(weights, t, &state.u, &f.u, &f.f_hat, &f.f)?;
        }
        let mut keep = controls.snapshot_stride.is_some_and(|k| steps % k == 0);
        while pending.last().is_some_and(|&ts| ts <= t * (1.0 + 1e-12)) {
            pending.pop();
            keep = true;
        }
        if keep {
            snapshots.push(Snapshot { time: t, u: f.u.clone() });
        }
        if broke {
            status = RunStatus::Blowup(t);
            break;
        }
        if rel < controls.safety / 4.0 {
            dt = (dt * 2.0).min(controls.dt_init);
        }
    }
    Ok(Run {
        snapshots,
        trace,
        status,
        steps,
        rejected,
        last: state,
    })
}

/// Error norms of `u(t) − ε𝒢(t)(u₀+u₁)` at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub t: f64,
    pub err_hs: f64,
    pub err_l2: f64,
    pub err_lr: f64,
    pub solution_l2: f64,
}

/// Errors against the heat profile at every snapshot with `t ∈ [t_min, t_max]`.
pub fn profile_errors<T: Real>(
    snapshots: &[Snapshot<T>],
    u0: &Field<T>,
    u1: &Field<T>,
    eps: f64,
    s: f64,
    r: f64,
    window: (f64, f64),
) -> Result<Vec<ProfileSample>> {
    let data_hat = u0.add(u1)?.to_freq()?.scale(T::c(eps));
    let mut out = Vec::new();
    for snap in snapshots.iter().filter(|s| s.time >= window.0 && s.time <= window.1) {
        let heat_hat = apply_g(&data_hat, T::c(snap.time))?;
        let u_hat = snap.u.to_freq()?;
        let diff_hat = u_hat.sub(&heat_hat)?;
        let diff = diff_hat.to_space()?;
        out.push(ProfileSample {
            t: snap.time,
            err_hs: spectral_norm(&diff_hat, |k| if s == 0.0 { 1.0 } else { k.powf(s) }),
            err_l2: spectral_norm(&diff_hat, |_| 1.0),
            err_lr: diff.lp_norm(T::c(r))?.as_f64(),
            solution_l2: spectral_norm(&u_hat, |_| 1.0),
        });
    }
    Ok(out)
}

/// Decay fits of the three profile errors and of the solution itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFits {
    pub hs: DecayFit,
    pub l2: DecayFit,
    pub lr: DecayFit,
    pub solution_l2: DecayFit,
}

impl ProfileFits {
    pub fn from_samples(samples: &[ProfileSample]) -> Result<Self> {
        let pick = |f: fn(&ProfileSample) -> f64| samples.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>();
        Ok(Self {
            hs: DecayFit::fit(pick(|s| s.err_hs))?,
            l2: DecayFit::fit(pick(|s| s.err_l2))?,
            lr: DecayFit::fit(pick(|s| s.err_lr))?,
            solution_l2: DecayFit::fit(pick(|s| s.solution_l2))?,
        })
    }

    /// Solution slope minus `L²` error slope.
    pub fn l2_gap(&self) -> f64 {
        self.solution_l2.slope - self.l2.slope
    }
}

/// Rates predicted for the three profile errors, in the order `Ḣ^s`, `L²`, `L^r`.
pub fn profile_error_exponents(w: &TraceWeights) -> Result<[f64; 3]> {
    let n = w.n as f64;
    let (r, s, p) = (w.r, w.s, w.p);
    if p <= 1.0 + 2.0 * r / n {
        return domain(format!("profile rates need p > 1 + 2r/n = {}, got {p}", 1.0 + 2.0 * r / n));
    }
    let m = 1f64
        .min(n / (2.0 * r) * (p - 1.0) - 1.0)
        .min(n / 2.0 * (1.0 / w.sigma1() - 1.0 / r));
    let q = if 2.0 * s >= n {
        r
    } else {
        r.min(2.0 * n / (p * (n - 2.0 * s)))
    };
    let gain = w.lebesgue_gain();
    Ok([
        -gain - s / 2.0 - m,
        -gain - m,
        -m.min(n / 2.0 * (p / r - 1.0 / q)),
    ])
}

/// Fits plus the predicted rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    pub fits: ProfileFits,
    pub theory: [f64; 3],
}

impl ProfileReport {
    /// Whether each fitted slope is at most its predicted rate plus `slack`.
    pub fn within(&self, slack: f64) -> [bool; 3] {
        let f = &self.fits;
        [
            f.hs.slope <= self.theory[0] + slack,
            f.l2.slope <= self.theory[1] + slack,
            f.lr.slope <= self.theory[2] + slack,
        ]
    }
}

/// Profile-error fits of a completed run against the predicted rates.
pub fn asymptotic_profile_error<T: Real>(
    run: &Run<T>,
    u0: &Field<T>,
    u1: &Field<T>,
    eps: f64,
    weights: &TraceWeights,
    window: (f64, f64),
) -> Result<ProfileReport> {
    if run.status != RunStatus::Completed {
        return domain(format!("profile comparison needs a completed run, status {}", run.status.label()));
    }
    let theory = profile_error_exponents(weights)?;
    let samples = profile_errors(&run.snapshots, u0, u1, eps, weights.s, weights.r, window)?;
    Ok(ProfileReport {
        fits: ProfileFits::from_samples(&samples)?,
        theory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sample, DataProfile};
    use crate::propagators::linear_flow;
    use std::f64::consts::PI;

    fn weights(n: usize, p: f64) -> TraceWeights {
        TraceWeights { n, r: 2.0, s: 0.0, p }
    }

    #[test]
    fn scalar_values() {
        let plus = NonlinearitySpec::new(NonlinearityKind::SignedPower { sign: 1.0 }, 2.0).unwrap();
        assert_eq!(plus.eval_scalar(0.0f64), 0.0);
        assert_eq!(plus.eval_scalar(-3.0f64), 9.0);
        let foc = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap();
        assert!((foc.eval_scalar(-2.0f64) + 8.0).abs() < 1e-12);
        assert_eq!(foc.p0(), 3);
        assert!(NonlinearitySpec::new(NonlinearityKind::FocusingPower, 1.0).is_err());
        assert!(NonlinearitySpec::new(NonlinearityKind::SignedPower { sign: 2.0 }, 2.0).is_err());
    }

    #[test]
    fn constant_field_cubed() {
        let g: GridSpec<f64> = make_grid(1, 8.0, 64).unwrap();
        let u = Field::from_fn(&g, |_| 0.7);
        let spec = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap();
        let f = nonlinearity_eval(&u, &spec).unwrap();
        assert!(f.data().iter().all(|c| (c.re - 0.343).abs() < 1e-14));
        let z = nonlinearity_eval(&Field::zeros(&g, Rep::Space), &spec).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn difference_bound_sampled() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (kind, p) in [
            (NonlinearityKind::SignedPower { sign: 1.0 }, 2.0),
            (NonlinearityKind::SignedPower { sign: -1.0 }, 2.5),
            (NonlinearityKind::FocusingPower, 3.0),
            (NonlinearityKind::FocusingPower, 1.5),
        ] {
            let spec = NonlinearitySpec::new(kind, p).unwrap();
            let mut worst = 0.0f64;
            for _ in 0..2000 {
                let u: f64 = rng.gen_range(-3.0..3.0);
                let v: f64 = rng.gen_range(-3.0..3.0);
                if u == v {
                    continue;
                }
                let lhs = (spec.eval_scalar(u) - spec.eval_scalar(v)).abs();
                let rhs = (u - v).abs() * (u.abs() + v.abs()).powf(p - 1.0);
                worst = worst.max(lhs / rhs);
            }
            // mean value theorem gives the constant p
            assert!(worst <= p + 1e-9, "{kind:?} {p}: {worst}");
        }
    }

    fn gaussian_state(g: &GridSpec<f64>) -> PairState<f64> {
        let u = sample(&DataProfile::Gaussian { a: 1.0 }, g).unwrap();
        let v = u.scale(0.5);
        PairState::new(u, v, 0.0).unwrap()
    }

    #[test]
    fn zero_amplitude_is_linear_flow() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap().with_amplitude(0.0);
        let s = gaussian_state(&g);
        let a = duhamel_step(&s, 0.3, &spec).unwrap();
        let b = linear_flow(&s, 0.3).unwrap();
        assert!(a.u.sub(&b.u).unwrap().max_abs() < 1e-12);
        assert!(a.v.sub(&b.v).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_state_stays_zero() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::SignedPower { sign: 1.0 }, 2.0).unwrap();
        let z = PairState::new(Field::zeros(&g, Rep::Space), Field::zeros(&g, Rep::Space), 0.0).unwrap();
        let out = duhamel_step(&z, 0.1, &spec).unwrap();
        assert_eq!(out.u.max_abs(), 0.0);
        assert_eq!(out.v.max_abs(), 0.0);
    }

    #[test]
    fn chained_linear_consistency() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::SignedPower { sign: 1.0 }, 2.0).unwrap().with_amplitude(0.0);
        let s = gaussian_state(&g);
        let controls = IntegratorControls {
            dt_init: 0.05,
            safety: 1e9,
            horizon: 5.0,
            ..Default::default()
        };
        let run = integrate(&s.u, &s.v, 1.0, &spec, &controls, &weights(1, 2.0)).unwrap();
        assert_eq!(run.steps, 100);
        let mut lin = s.to_freq().unwrap();
        for _ in 0..100 {
            lin = linear_flow(&lin, 0.05).unwrap();
        }
        assert!(run.last.u.sub(&lin.u).unwrap().max_abs() < 1e-10);
    }

    struct Manufactured;

    impl Source<f64> for Manufactured {
        // u* = e^{−t} sin x solves the equation with forcing u² + e^{−t}sin x − u*²
        fn eval(&self, u: &Field<f64>, t: f64) -> Result<Field<f64>> {
            let star = Field::from_fn(u.grid(), |x| (-t).exp() * x[0].sin());
            let data = u
                .data()
                .iter()
                .zip(star.data())
                .map(|(a, b)| Complex::new(a.re * a.re + b.re - b.re * b.re, 0.0))
                .collect();
            Field::from_complex(u.grid(), data, Rep::Space)
        }
    }

    fn manufactured_error(dt: f64, rule: QuadratureRule) -> f64 {
        let g: GridSpec<f64> = make_grid(1, PI, 64).unwrap();
        let u0 = Field::from_fn(&g, |x| x[0].sin());
        let u1 = u0.scale(-1.0);
        let controls = IntegratorControls {
            dt_init: dt,
            dt_min: 1e-12,
            safety: 1e9,
            horizon: 1.0,
            rule,
            ..Default::default()
        };
        let run = integrate(&u0, &u1, 1.0, &Manufactured, &controls, &weights(1, 2.0)).unwrap();
        let exact = Field::from_fn(&g, |x| (-1.0f64).exp() * x[0].sin());
        run.last.u.to_space().unwrap().sub(&exact).unwrap().max_abs()
    }

    #[test]
    fn manufactured_second_order() {
        for rule in [QuadratureRule::Trapezoid, QuadratureRule::Midpoint] {
            let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| manufactured_error(dt, rule)).collect();
            let o1 = (e[0] / e[1]).log2();
            let o2 = (e[1] / e[2]).log2();
            assert!((o1 - 2.0).abs() < 0.25 && (o2 - 2.0).abs() < 0.25, "{rule:?}: {e:?}");
        }
    }

    #[test]
    fn zero_amplitude_data_stays_zero() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap();
        let u0 = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        let controls = IntegratorControls { horizon: 2.0, ..Default::default() };
        let run = integrate(&u0, &u0, 0.0, &spec, &controls, &weights(1, 3.0)).unwrap();
        assert_eq!(run.status, RunStatus::Completed);
        assert_eq!(run.last.u.max_abs(), 0.0);
    }

    #[test]
    fn large_focusing_data_blows_up() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 256).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap();
        let u0 = sample(&DataProfile::Gaussian { a: 0.05 }, &g).unwrap();
        let controls = IntegratorControls { horizon: 20.0, ..Default::default() };
        let run = integrate(&u0, &u0, 5.0, &spec, &controls, &weights(1, 3.0)).unwrap();
        let t = run.status.breakdown_time().expect("blow-up");
        assert!(t > 0.0 && t < 20.0);
    }

    #[test]
    fn running_sup_monotone() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let spec = NonlinearitySpec::new(NonlinearityKind::FocusingPower, 3.0).unwrap();
        let u0 = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        let controls = IntegratorControls { horizon: 4.0, ..Default::default() };
        let run = integrate(&u0, &u0, 0.1, &spec, &controls, &weights(1, 3.0)).unwrap();
        let sup = run.trace.running_sup();
        assert!(sup.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(run.trace.len(), run.steps + 1);
    }

    #[test]
    fn heat_profile_self_comparison() {
        let g: GridSpec<f64> = make_grid(1, 32.0, 256).unwrap();
        let u0 = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        let data_hat = u0.add(&u0).unwrap().to_freq().unwrap().scale(0.1);
        let snaps: Vec<Snapshot<f64>> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&t| Snapshot {
                time: t,
                u: apply_g(&data_hat, t).unwrap().to_space().unwrap(),
            })
            .collect();
        let errs = profile_errors(&snaps, &u0, &u0, 0.1, 0.0, 2.0, (0.0, 10.0)).unwrap();
        assert_eq!(errs.len(), 3);
        assert!(errs.iter().all(|e| e.err_l2 < 1e-14 && e.err_lr < 1e-14));
    }

    #[test]
    fn profile_exponents() {
        let w = TraceWeights { n: 1, r: 2.0, s: 0.0, p: 6.0 };
        let th = profile_error_exponents(&w).unwrap();
        // m = min{1, 5/4 − 1, (1/2)(1 − 1/2)} = 1/4
        assert!((th[1] + 0.25).abs() < 1e-12);
        assert!(profile_error_exponents(&TraceWeights { p: 5.0, ..w }).is_err());
    }
}
