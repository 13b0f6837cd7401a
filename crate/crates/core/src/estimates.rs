//! Decay exponents, admissibility ranges, decay measurements and the Hölder
//! exponent construction used for the nonlinear estimates.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::grid::{fractional_derivative, sample, sample_scaled, DataProfile, Field, GridSpec};
use crate::propagators::{apply_d, apply_d_low, apply_diff_dg, apply_dt_d, apply_g, apply_w};
use crate::report::{fmt17, write_csv};
use crate::scalar::{bracket, Exact, Real};
use crate::symbols::chi;

/// Which results' hypotheses a parameter set satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Admissibility {
    /// Local existence in `H^s ∩ L^r`.
    pub local: bool,
    /// Small-data global existence in `H^s ∩ L^r` (`p ≥ p_c`).
    pub global: bool,
    /// Small-data global existence in `H^s` alone.
    pub hs_global: bool,
    /// Asymptotic heat profile (`p > p_c`).
    pub profile: bool,
    /// Lifespan bounds (`p < p_c`).
    pub lifespan: bool,
}

/// Derived exponents for the semilinear problem with power `p`, data in
/// `H^s ∩ L^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateParams<E: Exact> {
    pub n: usize,
    pub r: E,
    pub s: E,
    pub p: E,
    /// `(n−1)(1/r − 1/2)`
    pub beta: E,
    pub sigma1: E,
    pub sigma2: E,
    pub eta: E,
    pub omega: E,
    pub p_c: E,
    pub flags: Admissibility,
}

/// Upper end of the power range when `2s < n`; `None` if unbounded.
pub fn p_upper<E: Exact>(n: usize, s: &E) -> Option<E> {
    let ne = E::from_int(n as i64);
    let two = E::from_int(2);
    if two.clone() * s.clone() >= ne {
        None
    } else {
        let m = E::from_int(n.min(2) as i64);
        Some(E::one() + m / (ne - two * s.clone()))
    }
}

pub fn param_set<E: Exact>(n: usize, r: E, s: E, p: E) -> Result<EstimateParams<E>> {
    if n == 0 {
        return domain("dimension must be at least 1");
    }
    if !(r > E::one() && r <= E::from_int(2)) {
        return domain(format!("r must lie in (1, 2], got {r:?}"));
    }
    if s < E::zero() {
        return domain(format!("s must be non-negative, got {s:?}"));
    }
    if p <= E::one() {
        return domain(format!("p must exceed 1, got {p:?}"));
    }
    let one = E::one();
    let two = E::from_int(2);
    let half = E::ratio(1, 2);
    let ne = E::from_int(n as i64);
    let beta = (ne.clone() - one.clone()) * (one.clone() / r.clone() - half.clone());
    let sigma1 = E::max_of(one.clone(), r.clone() / p.clone());
    let sigma2 = if two.clone() * s.clone() >= ne {
        two.clone()
    } else {
        E::min_of(two.clone(), two.clone() * ne.clone() / (p.clone() * (ne.clone() - two.clone() * s.clone())))
    };
    let eta = -half.clone() + s.clone() / two.clone() + ne.clone() / two.clone() * (p.clone() / r.clone() - half);
    let omega = one.clone() / (p.clone() - one.clone()) - ne.clone() / (two.clone() * r.clone());
    let p_c = one.clone() + two.clone() * r.clone() / ne.clone();

    let p_range = p_upper(n, &s).map_or(true, |up| p <= up);
    let smooth = s.floor_int() <= p;
    let r_local = r.clone() * (ne.clone() + one.clone()) >= two.clone() * (ne.clone() - one.clone());
    let local = r_local && p_range && smooth;
    let supercritical = p >= p_c;
    let four_r_n = E::from_int(4) * r.clone() + ne.clone();
    let r_hs = four_r_n.clone() * four_r_n > ne.clone() * ne.clone() + E::from_int(16) * ne;
    let flags = Admissibility {
        local,
        global: local && supercritical,
        hs_global: r_hs && p_range && smooth && supercritical,
        profile: local && p > p_c,
        lifespan: local && p < p_c,
    };
    Ok(EstimateParams {
        n,
        r,
        s,
        p,
        beta,
        sigma1,
        sigma2,
        eta,
        omega,
        p_c,
        flags,
    })
}

/// An `L^q → L^p` decay cell with derivative orders `s1 ≥ s2`.
///
/// Exponents are stored as reciprocals so `p = ∞` is `inv_p = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCell<E: Exact> {
    pub n: usize,
    pub inv_q: E,
    pub inv_p: E,
    pub s1: E,
    pub s2: E,
}

impl<E: Exact> DecayCell<E> {
    pub fn new(n: usize, inv_q: E, inv_p: E, s1: E, s2: E) -> Result<Self> {
        if n == 0 {
            return domain("dimension must be at least 1");
        }
        if !(inv_p >= E::zero() && inv_q <= E::one()) {
            return domain("need 1 ≤ q and p ≤ ∞");
        }
        if inv_q < inv_p {
            return domain(format!("need q ≤ p, got 1/q = {inv_q:?} < 1/p = {inv_p:?}"));
        }
        Ok(Self { n, inv_q, inv_p, s1, s2 })
    }

    /// `(n−1)|1/2 − 1/p|`
    pub fn beta(&self) -> E {
        (E::from_int(self.n as i64) - E::one()) * (E::ratio(1, 2) - self.inv_p.clone()).abs()
    }
}

impl DecayCell<f64> {
    /// Convenience constructor from `q, p ∈ [1, ∞]`.
    pub fn from_exponents(n: usize, q: f64, p: f64, s1: f64, s2: f64) -> Result<Self> {
        Self::new(n, 1.0 / q, 1.0 / p, s1, s2)
    }

    pub fn q(&self) -> f64 {
        1.0 / self.inv_q
    }

    pub fn p(&self) -> f64 {
        1.0 / self.inv_p
    }
}

/// `−(n/2)(1/q − 1/p) − (s1 − s2)/2`
pub fn theoretical_low_exponent<E: Exact>(cell: &DecayCell<E>) -> E {
    let n = E::from_int(cell.n as i64);
    let two = E::from_int(2);
    -(n / two.clone()) * (cell.inv_q.clone() - cell.inv_p.clone()) - (cell.s1.clone() - cell.s2.clone()) / two
}

/// One power faster than [`theoretical_low_exponent`].
pub fn theoretical_diff_exponent<E: Exact>(cell: &DecayCell<E>) -> E {
    theoretical_low_exponent(cell) - E::one()
}

pub fn theoretical_dt_exponent<E: Exact>(cell: &DecayCell<E>) -> E {
    theoretical_low_exponent(cell) - E::one()
}

/// Least-squares fit of `log value` against `log⟨t⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub r2: f64,
    pub samples: Vec<(f64, f64)>,
}

impl DecayFit {
    pub fn fit(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 8 {
            return Err(Error::Window(format!("need at least 8 samples, got {}", samples.len())));
        }
        if let Some(&(t, v)) = samples.iter().find(|(_, v)| !(*v > 1e-30 && v.is_finite())) {
            return Err(Error::Window(format!("norm {v} at t = {t} is below the fit floor")));
        }
        let xs: Vec<f64> = samples.iter().map(|&(t, _)| bracket(t).ln()).collect();
        let ys: Vec<f64> = samples.iter().map(|&(_, v)| v.ln()).collect();
        let (slope, intercept, r2) = least_squares(&xs, &ys);
        let t_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let t_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            slope,
            intercept,
            t_min,
            t_max,
            r2,
            samples,
        })
    }
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, R²)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

/// `count` log-spaced times in `[t_min, t_max]`.
pub fn log_spaced(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || count < 2 {
        return Err(Error::Window(format!("bad window [{t_min}, {t_max}] with {count} points")));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Default regression window `[10, 0.8·(L/4)²]`, 16 log-spaced points.
pub fn default_window<T: Real>(grid: &GridSpec<T>) -> Result<Vec<f64>> {
    log_spaced(10.0, 0.8 * grid.valid_time().as_f64(), 16)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecayOp {
    D,
    DLow,
    DtD,
    G,
    DiffDG,
    /// `𝒟 − 𝒢 − e^{−t/2}𝒲`
    NishiharaTriple,
}

impl DecayOp {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "D" => DecayOp::D,
            "D_low" => DecayOp::DLow,
            "dtD" => DecayOp::DtD,
            "G" => DecayOp::G,
            "diff_DG" => DecayOp::DiffDG,
            "nishihara_triple" => DecayOp::NishiharaTriple,
            other => return Err(Error::Config(format!("unknown operator '{other}'"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            DecayOp::D => "D",
            DecayOp::DLow => "D_low",
            DecayOp::DtD => "dtD",
            DecayOp::G => "G",
            DecayOp::DiffDG => "diff_DG",
            DecayOp::NishiharaTriple => "nishihara_triple",
        }
    }

    pub fn apply<T: Real>(self, g: &Field<T>, t: T) -> Result<Field<T>> {
        match self {
            DecayOp::D => apply_d(g, t),
            DecayOp::DLow => apply_d_low(g, t),
            DecayOp::DtD => apply_dt_d(g, t),
            DecayOp::G => apply_g(g, t),
            DecayOp::DiffDG => apply_diff_dg(g, t),
            DecayOp::NishiharaTriple => {
                let w = apply_w(g, t)?.scale((-t / T::c(2.0)).exp());
                apply_diff_dg(g, t)?.sub(&w)
            }
        }
    }

    /// Theoretical slope for this operator on `cell`.
    pub fn theory<E: Exact>(self, cell: &DecayCell<E>) -> E {
        match self {
            DecayOp::D | DecayOp::DLow | DecayOp::G => theoretical_low_exponent(cell),
            DecayOp::DtD => theoretical_dt_exponent(cell),
            DecayOp::DiffDG | DecayOp::NishiharaTriple => theoretical_diff_exponent(cell),
        }
    }
}

/// Data used to probe an operator's decay.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// The same profile at every time.
    Fixed(DataProfile),
    /// `g_t(x) = base(x/λ)` with `λ = c⟨t⟩^{1/2}`: data living at the
    /// frequency scale the heat flow resolves at time `t`, which is where the
    /// `L^q → L^p` bound is attained.
    Scaled { base: DataProfile, c: f64 },
}

impl Default for Witness {
    fn default() -> Self {
        Witness::Scaled {
            base: DataProfile::Gaussian { a: 1.0 },
            c: 0.5,
        }
    }
}

/// `|∇|^s` for `s > 0`; order zero is the identity, zero mode included.
fn derivative_or_identity<T: Real>(f: &Field<T>, s: f64) -> Result<Field<T>> {
    if s == 0.0 {
        Ok(f.clone())
    } else {
        fractional_derivative(f, T::c(s))
    }
}

/// Ratio `‖|∇|^{s1} op(t) g‖_p / ‖|∇|^{s2} χ_{≤1}(∇) g‖_q` at one time.
pub fn decay_ratio<T: Real>(
    op: DecayOp,
    witness: &Witness,
    cell: &DecayCell<f64>,
    grid: &GridSpec<T>,
    t: f64,
) -> Result<f64> {
    let g = match witness {
        Witness::Fixed(profile) => sample(profile, grid)?,
        Witness::Scaled { base, c } => sample_scaled(base, grid, T::c(c * bracket(t).sqrt()))?,
    };
    let gh = g.forward()?;
    let num = derivative_or_identity(&op.apply(&gh, T::c(t))?, cell.s1)?
        .inverse()?
        .lp_norm(T::c(cell.p()))?
        .as_f64();
    let low = gh.multiply_radial(chi)?;
    let den = derivative_or_identity(&low, cell.s2)?
        .inverse()?
        .lp_norm(T::c(cell.q()))?
        .as_f64();
    if !(den > 0.0) {
        return domain("witness has vanishing low-frequency norm");
    }
    Ok(num / den)
}

/// Fits the decay slope of `op` over `t_grid`.
pub fn measure_decay<T: Real>(
    op: DecayOp,
    witness: &Witness,
    cell: &DecayCell<f64>,
    grid: &GridSpec<T>,
    t_grid: &[f64],
) -> Result<DecayFit> {
    if cell.n != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let valid = grid.valid_time().as_f64();
    if let Some(&t) = t_grid.iter().find(|&&t| !(t >= 0.0 && t <= valid)) {
        return Err(Error::Window(format!("t = {t} outside the valid window [0, {valid}]")));
    }
    let mut samples = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        samples.push((t, decay_ratio(op, witness, cell, grid, t)?));
    }
    DecayFit::fit(samples)
}

/// One cell of an estimate suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCell {
    pub id: String,
    pub op: DecayOp,
    pub cell: DecayCell<f64>,
    /// Accept `|fitted − theory| ≤ tolerance`, or only the upper side when
    /// `one_sided`.
    pub tolerance: f64,
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub witness: Witness,
    pub window: Option<(f64, f64, usize)>,
    pub cells: Vec<SuiteCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub cell_id: String,
    pub op: DecayOp,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub s1: f64,
    pub s2: f64,
    pub theory_slope: f64,
    pub fitted_slope: f64,
    pub r2: f64,
    pub pass: bool,
}

/// The one-dimensional matrix `(q, p) ∈ {1, 1.5, 2} × {2, 4, ∞}`,
/// `s1 − s2 ∈ {0, 1}` for a given operator.
pub fn matrix_cells(op: DecayOp, n: usize, tolerance: f64) -> Result<Vec<SuiteCell>> {
    let mut cells = Vec::new();
    for &q in &[1.0, 1.5, 2.0] {
        for &p in &[2.0, 4.0, f64::INFINITY] {
            for &s1 in &[0.0, 1.0] {
                cells.push(SuiteCell {
                    id: format!("{}_n{n}_q{q}_p{p}_ds{s1}", op.name()),
                    op,
                    cell: DecayCell::from_exponents(n, q, p, s1, 0.0)?,
                    tolerance,
                    one_sided: false,
                });
            }
        }
    }
    Ok(cells)
}

pub fn verify_estimate_suite(config: &SuiteConfig) -> Result<Vec<SuiteRow>> {
    let grid: GridSpec<f64> = GridSpec::new(config.dim, config.half_width, config.points)?;
    let t_grid = match config.window {
        Some((a, b, k)) => log_spaced(a, b, k)?,
        None => default_window(&grid)?,
    };
    let rows: Result<Vec<SuiteRow>> = config
        .cells
        .par_iter()
        .map(|c| {
            let fit = measure_decay(c.op, &config.witness, &c.cell, &grid, &t_grid)?;
            let theory = c.op.theory(&c.cell);
            let gap = fit.slope - theory;
            let pass = if c.one_sided { gap <= c.tolerance } else { gap.abs() <= c.tolerance };
            Ok(SuiteRow {
                cell_id: c.id.clone(),
                op: c.op,
                n: c.cell.n,
                p: c.cell.p(),
                q: c.cell.q(),
                s1: c.cell.s1,
                s2: c.cell.s2,
                theory_slope: theory,
                fitted_slope: fit.slope,
                r2: fit.r2,
                pass,
            })
        })
        .collect();
    rows
}

pub const SUITE_HEADER: [&str; 10] =
    ["cell_id", "n", "p", "q", "s1", "s2", "theory_slope", "fitted_slope", "r2", "pass"];

pub fn write_suite_csv(path: &Path, rows: &[SuiteRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.cell_id.clone(),
                r.n.to_string(),
                fmt17(r.p),
                fmt17(r.q),
                fmt17(r.s1),
                fmt17(r.s2),
                fmt17(r.theory_slope),
                fmt17(r.fitted_slope),
                fmt17(r.r2),
                r.pass.to_string(),
            ]
        })
        .collect();
    write_csv(path, &SUITE_HEADER, &body)
}

/// Exponents `q₀, q₁(k), …, q_{[s]}(k)` for the fractional Leibniz/chain-rule
/// bound of `|∇|^{s−1}𝒩(u)`, stored as reciprocals.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderExponents<E: Exact> {
    pub inv_q0: E,
    pub inv_q: Vec<E>,
    pub k: Vec<usize>,
}

impl<E: Exact> HolderExponents<E> {
    pub fn q0(&self) -> E {
        E::one() / self.inv_q0.clone()
    }

    pub fn q_list(&self) -> Vec<E> {
        self.inv_q.iter().map(|x| E::one() / x.clone()).collect()
    }
}

fn construction<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Construction(msg.into()))
}

/// Builds the exponents by scaling the per-factor Sobolev budgets uniformly.
pub fn holder_exponents<E: Exact>(n: usize, s: E, p: E, r: E, k: &[usize]) -> Result<HolderExponents<E>> {
    if n == 0 {
        return construction("dimension must be at least 1");
    }
    if !(s > E::one()) {
        return construction(format!("need s > 1, got {s:?}"));
    }
    let fl = s.floor_int();
    let int_s = fl.to_f64_lossy().round() as usize;
    if fl > p {
        return construction(format!("[s] = {int_s} exceeds p = {p:?}"));
    }
    if !(r > E::one() && r <= E::from_int(2)) {
        return construction(format!("r must lie in (1, 2], got {r:?}"));
    }
    if let Some(up) = p_upper(n, &s) {
        if p > up {
            return construction(format!("p = {p:?} above the admissible bound {up:?}"));
        }
    }
    if k.len() != int_s || k.iter().sum::<usize>() + 1 != int_s {
        return construction(format!("multi-index must have {int_s} entries summing to {}", int_s - 1));
    }
    let frac = s.clone() - fl.clone();
    let ne = E::from_int(n as i64);
    let half = E::ratio(1, 2);
    let two = E::from_int(2);
    let pk = p.clone() - fl.clone();
    if !(pk > E::zero()) {
        return construction("p − [s] must be positive for a finite q0");
    }
    // budget s_j for 1/2 − 1/q_j
    let raw: Vec<E> = k
        .iter()
        .enumerate()
        .map(|(j, &kj)| {
            let kj = E::from_int(kj as i64);
            if j == 0 {
                (s.clone() - frac.clone() - kj) / ne.clone()
            } else {
                (s.clone() - kj) / ne.clone()
            }
        })
        .collect();
    let (inv_q0, budgets) = if two.clone() * s.clone() < ne {
        let inv_q0 = pk.clone() * (ne.clone() - two.clone() * s.clone()) / (two.clone() * ne.clone());
        (inv_q0, raw)
    } else {
        let budgets: Vec<E> = raw.into_iter().map(|b| E::min_of(half.clone(), b)).collect();
        // right-hand side of 1/q0 < 1/2 + Σ min{0, budget − 1/2}
        let rhs = budgets
            .iter()
            .fold(half.clone(), |acc, b| acc + (b.clone() - half.clone()));
        if !(rhs > E::zero()) {
            return construction(format!("no admissible q0: bound {rhs:?} is not positive"));
        }
        let inv_q0 = E::min_of(rhs / two.clone(), pk.clone() / r.clone());
        (inv_q0, budgets)
    };
    let a_total = E::from_int(int_s as i64) / two.clone() - half.clone() + inv_q0.clone();
    let total: E = budgets.iter().fold(E::zero(), |acc, b| acc + b.clone());
    if a_total > total {
        return construction(format!(
            "Sobolev budget {total:?} below required {a_total:?}"
        ));
    }
    let theta = a_total / total;
    let inv_q: Vec<E> = budgets.iter().map(|b| half.clone() - theta.clone() * b.clone()).collect();
    let out = HolderExponents {
        inv_q0,
        inv_q,
        k: k.to_vec(),
    };
    check_holder(n, &s, &p, &r, &out).map_err(Error::Construction)?;
    Ok(out)
}

/// Re-evaluates the exponent constraint system from scratch; `Err` names the
/// first violated constraint.
pub fn check_holder<E: Exact>(
    n: usize,
    s: &E,
    p: &E,
    r: &E,
    h: &HolderExponents<E>,
) -> std::result::Result<(), String> {
    let fl = s.floor_int();
    let int_s = fl.to_f64_lossy().round() as usize;
    if h.inv_q.len() != int_s || h.k.len() != int_s {
        return Err(format!("expected {int_s} exponents"));
    }
    if h.k.iter().sum::<usize>() + 1 != int_s {
        return Err("multi-index has wrong order".into());
    }
    let half = E::ratio(1, 2);
    let sum = h.inv_q.iter().fold(h.inv_q0.clone(), |acc, x| acc + x.clone());
    if !sum.approx_eq(&half) {
        return Err(format!("1/q0 + Σ 1/q_j = {sum:?} ≠ 1/2"));
    }
    for (j, x) in h.inv_q.iter().enumerate() {
        if !(x > &E::zero() && x < &half) {
            return Err(format!("q_{} not in (2, ∞): 1/q = {x:?}", j + 1));
        }
    }
    let pk = p.clone() - fl.clone();
    if !(h.inv_q0 > E::zero()) {
        return Err("q0 is not finite".into());
    }
    // r/(p − [s]) ≤ q0
    if !E::le_tol(&h.inv_q0, &(pk.clone() / r.clone())) {
        return Err(format!("q0 below r/(p − [s]): 1/q0 = {:?}", h.inv_q0));
    }
    let ne = E::from_int(n as i64);
    let two = E::from_int(2);
    if two.clone() * s.clone() < ne {
        let lower = pk * (ne.clone() - two.clone() * s.clone()) / (two * ne.clone());
        if !E::le_tol(&lower, &h.inv_q0) {
            return Err(format!("q0 above 2n/((p − [s])(n − 2s)): 1/q0 = {:?}", h.inv_q0));
        }
    }
    let frac = s.clone() - fl;
    for (j, (x, &kj)) in h.inv_q.iter().zip(&h.k).enumerate() {
        let mut cost = E::from_int(kj as i64) + ne.clone() * (half.clone() - x.clone());
        if j == 0 {
            cost = cost + frac.clone();
        }
        if !E::le_tol(&cost, s) {
            return Err(format!("derivative budget of factor {} is {cost:?} > s", j + 1));
        }
    }
    Ok(())
}
