//! Low-frequency kernels `𝔡`, `𝔪` and the derivative-expansion tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};

use crate::error::{domain, Error, Result};
use crate::grid::{Field, GridSpec, Rep};
use crate::scalar::{bracket, Real};
use crate::symbols::{chi, BranchPolicy};

/// Largest kernel grid we are willing to allocate.
const MAX_KERNEL_POINTS: usize = 1 << 22;

/// Grid used for kernel evaluation: up to 4× refinement per axis, capped in
/// total size.
pub fn kernel_grid<T: Real>(grid: &GridSpec<T>) -> Result<GridSpec<T>> {
    for factor in [4usize, 2] {
        if grid.len() * factor.pow(grid.dim() as u32) <= MAX_KERNEL_POINTS {
            return grid.refined(factor);
        }
    }
    Ok(grid.clone())
}

fn check_kernel_args<T: Real>(t: T, s: T) -> Result<()> {
    if !(t.is_finite() && t >= T::zero()) {
        return domain(format!("time must be non-negative, got {t}"));
    }
    if !(s.is_finite() && s >= T::zero()) {
        return domain(format!("derivative order must be non-negative, got {s}"));
    }
    Ok(())
}

fn riesz_factor<T: Real>(k: T, s: T) -> T {
    if s == T::zero() {
        T::one()
    } else if k > T::zero() {
        k.powf(s)
    } else {
        T::zero()
    }
}

fn kernel_from_symbol<T: Real>(grid: &GridSpec<T>, m: impl Fn(T) -> T + Sync) -> Result<Field<T>> {
    let fine = kernel_grid(grid)?;
    let spec = Field::from_complex(
        &fine,
        fine.xi_mag().iter().map(|&k| num_complex::Complex::new(m(k), T::zero())).collect(),
        Rep::Freq,
    )?;
    spec.inverse()
}

/// `|∇|^s 𝔡(t,·) = 𝓕⁻¹[|ξ|^s χ_{<1}(|ξ|) e^{−t/2}L(t,ξ)]`, sampled on the
/// kernel grid.
pub fn kernel_d<T: Real>(t: T, s: T, grid: &GridSpec<T>) -> Result<Field<T>> {
    check_kernel_args(t, s)?;
    let bp = BranchPolicy::default();
    kernel_from_symbol(grid, |k| riesz_factor(k, s) * chi(k) * bp.damped(t, k))
}

/// `|∇|^s 𝔪(t,·)`, the low-frequency difference of the damped and heat kernels.
pub fn kernel_m<T: Real>(t: T, s: T, grid: &GridSpec<T>) -> Result<Field<T>> {
    check_kernel_args(t, s)?;
    let bp = BranchPolicy::default();
    kernel_from_symbol(grid, |k| {
        riesz_factor(k, s) * chi(k) * (bp.damped(t, k) - (-t * k * k).exp())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    D,
    M,
}

/// One sampled point of a pointwise bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSample {
    pub t: f64,
    pub x: f64,
    pub value: f64,
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub samples: Vec<BoundSample>,
    pub max_ratio: f64,
    /// `(t, max ratio over x)` per time.
    pub per_scale: Vec<(f64, f64)>,
    pub stable: bool,
}

/// Pointwise envelope.
///
/// `j = None` gives `min(|x|⁻¹, ⟨t⟩^{−1/2})^{s+n}` (plus two for `𝔪`);
/// `j = Some(j)` gives `⟨t⟩^{−n/2} min(⟨t⟩^{1/2}|x|⁻¹, 1)^j`.
pub fn envelope(kind: KernelKind, n: usize, s: f64, j: Option<u32>, t: f64, x: f64) -> f64 {
    let bt = bracket(t);
    match j {
        Some(j) => bt.powf(-(n as f64) / 2.0) * (bt.sqrt() / x).min(1.0).powi(j as i32),
        None => {
            let extra = match kind {
                KernelKind::D => 0.0,
                KernelKind::M => 2.0,
            };
            let base = if x > 0.0 { (1.0 / x).min(1.0 / bt.sqrt()) } else { 1.0 / bt.sqrt() };
            base.powf(s + n as f64 + extra)
        }
    }
}

fn axis_index<T: Real>(g: &GridSpec<T>, x: f64) -> usize {
    let n = g.points_per_axis();
    let step = (x / g.dx().as_f64()).round() as usize;
    let mut idx = 0usize;
    for a in 0..g.dim() {
        let i = if a == 0 { n / 2 + step } else { n / 2 };
        idx = idx * n + i;
    }
    idx
}

/// Default sample positions: `|x|` from 0 to `half_width/2` in steps of 1/4.
pub fn default_lattice<T: Real>(grid: &GridSpec<T>) -> Vec<f64> {
    let top = grid.half_width().as_f64() / 2.0;
    let count = (top * 4.0).floor() as usize;
    (0..=count).map(|i| i as f64 * 0.25).collect()
}

/// Dyadic time scales used by the bound checks.
pub const DYADIC_TIMES: [f64; 4] = [1.0, 4.0, 16.0, 64.0];

/// Samples `|kernel|` along the first axis and compares with [`envelope`].
pub fn check_pointwise_bound<T: Real>(
    grid: &GridSpec<T>,
    kind: KernelKind,
    s: f64,
    j: Option<u32>,
    t_set: &[f64],
    x_set: &[f64],
) -> Result<BoundReport> {
    if t_set.is_empty() || x_set.is_empty() {
        return domain("bound check needs non-empty time and position samples");
    }
    if j.is_some() && (kind != KernelKind::D || s != 0.0) {
        return domain("the j-envelope applies to the undifferentiated kernel d only");
    }
    let hw = grid.half_width().as_f64();
    let valid = grid.valid_time().as_f64();
    for &t in t_set {
        if !(0.0..=valid).contains(&t) {
            return Err(Error::Window(format!("t = {t} outside the valid window [0, {valid}]")));
        }
    }
    for &x in x_set {
        if !(0.0..=hw / 2.0).contains(&x) {
            return domain(format!("|x| = {x} outside [0, {}]", hw / 2.0));
        }
    }
    let n = grid.dim();
    let mut samples = Vec::new();
    let mut per_scale = Vec::new();
    for &t in t_set {
        let field = match kind {
            KernelKind::D => kernel_d(T::c(t), T::c(s), grid)?,
            KernelKind::M => kernel_m(T::c(t), T::c(s), grid)?,
        };
        let g = field.grid();
        let mut worst = 0.0f64;
        for &x in x_set {
            let idx = axis_index(g, x);
            let xa = g.coords(idx)[0].as_f64();
            let value = field.data()[idx].norm().as_f64();
            let env = envelope(kind, n, s, j, t, xa);
            let ratio = value / env;
            worst = worst.max(ratio);
            samples.push(BoundSample {
                t,
                x: xa,
                value,
                envelope: env,
                ratio,
            });
        }
        per_scale.push((t, worst));
    }
    let max_ratio = per_scale.iter().fold(0.0f64, |m, &(_, r)| m.max(r));
    let min_scale = per_scale.iter().fold(f64::INFINITY, |m, &(_, r)| m.min(r));
    let stable = max_ratio.is_finite() && min_scale > 0.0 && max_ratio / min_scale < 2.0;
    Ok(BoundReport {
        samples,
        max_ratio,
        per_scale,
        stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffKind {
    /// Expansion of `∂₁^k (e^{t√z}/√z)`, `z = 1/4 − |ξ|²`.
    C,
    /// Expansion of `∂₁^k e^{−t|ξ|²}`.
    D,
}

/// Exact coefficients `(l, m) ↦ value` of one derivative order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffTable {
    pub kind: CoeffKind,
    pub k: usize,
    pub entries: BTreeMap<(usize, usize), BigInt>,
}

impl CoeffTable {
    pub fn l_range(k: usize) -> std::ops::RangeInclusive<usize> {
        (k - k / 2)..=k
    }

    fn m_start(kind: CoeffKind) -> usize {
        match kind {
            CoeffKind::C => 0,
            CoeffKind::D => 1,
        }
    }

    pub fn get(&self, l: usize, m: usize) -> BigInt {
        self.entries.get(&(l, m)).cloned().unwrap_or_default()
    }

    fn get_signed(&self, l: isize, m: isize) -> BigInt {
        if l < 0 || m < 0 {
            return BigInt::zero();
        }
        self.get(l as usize, m as usize)
    }

    fn next(&self) -> Self {
        let k = self.k as isize;
        let mut entries = BTreeMap::new();
        for l in Self::l_range(self.k + 1) {
            for m in Self::m_start(self.kind)..=l {
                let (li, mi) = (l as isize, m as isize);
                let value = match self.kind {
                    CoeffKind::C => {
                        -self.get_signed(li - 1, mi - 1)
                            + BigInt::from(2 * li - k) * self.get_signed(li, mi)
                            + BigInt::from(2 * li - mi - 1) * self.get_signed(li - 1, mi)
                    }
                    CoeffKind::D => {
                        BigInt::from(-2) * self.get_signed(li - 1, mi - 1)
                            + BigInt::from(2 * li - k) * self.get_signed(li, mi)
                    }
                };
                entries.insert((l, m), value);
            }
        }
        Self {
            kind: self.kind,
            k: self.k + 1,
            entries,
        }
    }

    /// Text form: a `# kind` line, then `k l m value` per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# kind {}\n",
            match self.kind {
                CoeffKind::C => "C",
                CoeffKind::D => "D",
            }
        );
        for ((l, m), v) in &self.entries {
            let _ = writeln!(out, "{} {l} {m} {v}", self.k);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut k = None;
        let mut entries = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                kind = match rest.trim() {
                    "kind C" => Some(CoeffKind::C),
                    "kind D" => Some(CoeffKind::D),
                    other => return Err(Error::Io(format!("unknown table header '{other}'"))),
                };
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Io(format!("malformed table line '{line}'")));
            }
            let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Io(format!("{s}: {e}")));
            let (kk, l, m) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            let v: BigInt = parts[3].parse().map_err(|e| Error::Io(format!("{}: {e}", parts[3])))?;
            if *k.get_or_insert(kk) != kk {
                return Err(Error::Io("mixed derivative orders in one table".into()));
            }
            entries.insert((l, m), v);
        }
        let kind = kind.ok_or_else(|| Error::Io("missing table header".into()))?;
        let k = k.ok_or_else(|| Error::Io("empty table".into()))?;
        Ok(Self { kind, k, entries })
    }

    /// Evaluates the closed form divided by its exponential prefactor, and
    /// the sum of absolute term magnitudes.
    fn reduced(&self, t: f64, xi1: f64, z: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut mag = 0.0;
        for ((l, m), c) in &self.entries {
            let c = c.to_f64().unwrap_or(f64::NAN);
            let power = (2 * l) as i32 - self.k as i32;
            let mut term = c * t.powi(*m as i32) * xi1.powi(power);
            if self.kind == CoeffKind::C {
                term *= z.powf(-(*l as f64) + (*m as f64 - 1.0) / 2.0);
            }
            sum += term;
            mag += term.abs();
        }
        (sum, mag)
    }
}

/// `C^{(k)}` from `C^{(0)}_{0,0} = 1`.
pub fn derivk_constants(k: usize) -> CoeffTable {
    let mut table = CoeffTable {
        kind: CoeffKind::C,
        k: 0,
        entries: BTreeMap::from([((0, 0), BigInt::from(1))]),
    };
    while table.k < k {
        table = table.next();
    }
    table
}

/// `D^{(k)}` from `D^{(1)}_{1,1} = −2`.
pub fn derivkg_constants(k: usize) -> Result<CoeffTable> {
    if k == 0 {
        return domain("D-tables start at k = 1");
    }
    let mut table = CoeffTable {
        kind: CoeffKind::D,
        k: 1,
        entries: BTreeMap::from([((1, 1), BigInt::from(-2))]),
    };
    while table.k < k {
        table = table.next();
    }
    Ok(table)
}

/// A sample point `(t, ξ)` for [`verify_deriv_expansion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivPoint {
    pub t: f64,
    pub xi: [f64; 3],
}

fn target(kind: CoeffKind, t: f64, xi1: Complex64, rest2: f64) -> Complex64 {
    match kind {
        CoeffKind::C => {
            let z = Complex64::new(0.25 - rest2, 0.0) - xi1 * xi1;
            let r = z.sqrt();
            (r * t).exp() / r
        }
        CoeffKind::D => (-(xi1 * xi1 + rest2) * t).exp(),
    }
}

/// `k`-th derivative in `ξ₁` from the Cauchy integral on a circle of radius
/// `radius`, discretised by the trapezoid rule.
fn contour_derivative(kind: CoeffKind, k: usize, t: f64, xi1: f64, rest2: f64, radius: f64) -> f64 {
    const NODES: usize = 96;
    let mut acc = Complex64::zero();
    for j in 0..NODES {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / NODES as f64;
        let w = Complex64::from_polar(radius, theta);
        let f = target(kind, t, Complex64::new(xi1, 0.0) + w, rest2);
        acc += f * Complex64::from_polar(1.0, -(k as f64) * theta);
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    (acc * fact / (NODES as f64 * radius.powi(k as i32))).re
}

/// Worst relative residual between the recurrence-built closed form and an
/// independent numerical derivative, over the given points.
///
/// Points must satisfy `|ξ| ≤ 1/4`; the residual is relative to the sum of
/// absolute term magnitudes so cancellations do not inflate it.
pub fn verify_deriv_expansion(kind: CoeffKind, k: usize, points: &[DerivPoint]) -> Result<f64> {
    if k > 5 {
        return domain(format!("derivative order {k} above the verified range 5"));
    }
    if kind == CoeffKind::D && k == 0 {
        return domain("D-tables start at k = 1");
    }
    if k == 0 {
        return Ok(0.0);
    }
    let table = match kind {
        CoeffKind::C => derivk_constants(k),
        CoeffKind::D => derivkg_constants(k)?,
    };
    let mut worst = 0.0f64;
    for p in points {
        let rest2 = p.xi[1] * p.xi[1] + p.xi[2] * p.xi[2];
        let xi2 = p.xi[0] * p.xi[0] + rest2;
        if xi2 > 1.0 / 16.0 + 1e-15 {
            return domain(format!("sample point |ξ| = {} above 1/4", xi2.sqrt()));
        }
        let z = 0.25 - xi2;
        let (reduced, mag) = table.reduced(p.t, p.xi[0], z);
        let (prefactor, radius) = match kind {
            CoeffKind::C => ((p.t * z.sqrt()).exp(), 0.5 * ((0.25 - rest2).sqrt() - p.xi[0].abs())),
            CoeffKind::D => ((-p.t * xi2).exp(), 0.5),
        };
        let closed = prefactor * reduced;
        let oracle = contour_derivative(kind, k, p.t, p.xi[0], rest2, radius);
        let scale = (prefactor * mag).max(f64::MIN_POSITIVE);
        worst = worst.max((closed - oracle).abs() / scale);
    }
    Ok(worst)
}
