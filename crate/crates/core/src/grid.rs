//! Periodic pseudospectral discretisation of `[−L, L)ⁿ`.
//!
//! Transforms follow the continuous convention
//! `f̂(ξ) = (2π)^{−n/2} ∫ e^{−ix·ξ} f(x) dx`, so Gaussians are self-dual and
//! Parseval holds with the plain Riemann weights `Δxⁿ` and `Δξⁿ`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::scalar::Real;
use crate::symbols::chi;

const MAGIC: &[u8; 4] = b"DWF1";

/// Uniform periodic grid with cached wavenumber magnitudes.
#[derive(Clone)]
pub struct GridSpec<T: Real> {
    dim: usize,
    half_width: T,
    points: usize,
    wavenumbers: Arc<[T]>,
    xi_mag: Arc<[T]>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for GridSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("dim", &self.dim)
            .field("half_width", &self.half_width)
            .field("points", &self.points)
            .finish()
    }
}

impl<T: Real> PartialEq for GridSpec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.half_width == other.half_width && self.points == other.points
    }
}

/// Validates and builds a grid.
pub fn make_grid<T: Real>(dim: usize, half_width: T, points_per_axis: usize) -> Result<GridSpec<T>> {
    GridSpec::new(dim, half_width, points_per_axis)
}

impl<T: Real> GridSpec<T> {
    pub fn new(dim: usize, half_width: T, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > T::zero()) {
            return Err(Error::Config(format!("half width must be positive, got {half_width}")));
        }
        if !points.is_power_of_two() {
            return Err(Error::Config(format!("{points} points per axis is not a power of two")));
        }
        if points < 64 {
            return Err(Error::Config(format!("need at least 64 points per axis, got {points}")));
        }
        let dx = T::c(2.0) * half_width / T::from_usize_lossy(points);
        let nyquist = T::PI() / dx;
        if nyquist < T::c(8.0) {
            return Err(Error::Config(format!(
                "Nyquist frequency {nyquist} below 8; refine the grid or shrink the box"
            )));
        }
        let dxi = T::PI() / half_width;
        let wavenumbers: Vec<T> = (0..points)
            .map(|j| {
                let signed = if j < points / 2 { j as f64 } else { j as f64 - points as f64 };
                T::c(signed) * dxi
            })
            .collect();
        let total = points.pow(dim as u32);
        let xi_mag: Vec<T> = (0..total)
            .map(|idx| {
                let mut s = T::zero();
                let mut rem = idx;
                for _ in 0..dim {
                    let k = wavenumbers[rem % points];
                    s = s + k * k;
                    rem /= points;
                }
                s.sqrt()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            dim,
            half_width,
            points,
            wavenumbers: wavenumbers.into(),
            xi_mag: xi_mag.into(),
            fwd: planner.plan_fft_forward(points),
            inv: planner.plan_fft_inverse(points),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.xi_mag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_mag.is_empty()
    }

    pub fn dx(&self) -> T {
        T::c(2.0) * self.half_width / T::from_usize_lossy(self.points)
    }

    pub fn dxi(&self) -> T {
        T::PI() / self.half_width
    }

    /// `Δxⁿ`
    pub fn cell_volume(&self) -> T {
        self.dx().powi(self.dim as i32)
    }

    pub fn nyquist(&self) -> T {
        T::PI() / self.dx()
    }

    /// Largest time `(L/4)²` for which whole-space behaviour is trusted.
    pub fn valid_time(&self) -> T {
        let q = self.half_width / T::c(4.0);
        q * q
    }

    pub fn xi_mag(&self) -> &[T] {
        &self.xi_mag
    }

    /// Signed wavenumbers along one axis, in FFT order.
    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumbers
    }

    /// Per-axis indices of a flat index (last axis fastest).
    pub fn axis_indices(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = idx;
        for a in (0..self.dim).rev() {
            out[a] = rem % self.points;
            rem /= self.points;
        }
        out
    }

    /// Physical coordinates of a flat index; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [T; 3] {
        let ax = self.axis_indices(idx);
        let dx = self.dx();
        let mut x = [T::zero(); 3];
        for a in 0..self.dim {
            x[a] = -self.half_width + T::from_usize_lossy(ax[a]) * dx;
        }
        x
    }

    pub fn radius(&self, idx: usize) -> T {
        let x = self.coords(idx);
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }

    /// Frequency vector of a flat index.
    pub fn xi(&self, idx: usize) -> [T; 3] {
        let ax = self.axis_indices(idx);
        let mut k = [T::zero(); 3];
        for a in 0..self.dim {
            k[a] = self.wavenumbers[ax[a]];
        }
        k
    }

    /// Whether a mode survives 2/3-rule truncation.
    pub fn dealias_keep(&self, idx: usize) -> bool {
        let ax = self.axis_indices(idx);
        let cut = self.points / 3;
        (0..self.dim).all(|a| {
            let j = ax[a];
            let signed = if j < self.points / 2 { j } else { self.points - j };
            signed <= cut
        })
    }

    /// A grid on the same box with `factor` times more points per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dim, self.half_width, self.points * factor)
    }

    fn parity(&self, idx: usize) -> bool {
        let ax = self.axis_indices(idx);
        ax[..self.dim].iter().sum::<usize>() % 2 == 1
    }

    fn transform_axes(&self, data: &mut [Complex<T>], forward: bool) {
        let n = self.points;
        let fft = if forward { &self.fwd } else { &self.inv };
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(n * 64.min(data.len() / n).max(1))
                    .for_each(|chunk| fft.process(chunk));
                continue;
            }
            let block = n * stride;
            data.par_chunks_mut(block).for_each(|blk| {
                let mut scratch = vec![Complex::new(T::zero(), T::zero()); block];
                // [n, stride] -> [stride, n]
                for i in 0..n {
                    for j in 0..stride {
                        scratch[j * n + i] = blk[i * stride + j];
                    }
                }
                fft.process(&mut scratch);
                for i in 0..n {
                    for j in 0..stride {
                        blk[i * stride + j] = scratch[j * n + i];
                    }
                }
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rep {
    Space,
    Freq,
}

impl Rep {
    fn name(self) -> &'static str {
        match self {
            Rep::Space => "space",
            Rep::Freq => "frequency",
        }
    }
}

/// Samples on a grid, in either representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    grid: GridSpec<T>,
    data: Vec<Complex<T>>,
    rep: Rep,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &GridSpec<T>, rep: Rep) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            rep,
        }
    }

    pub fn from_real(grid: &GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            data: values.into_iter().map(|v| Complex::new(v, T::zero())).collect(),
            rep: Rep::Space,
        })
    }

    pub fn from_complex(grid: &GridSpec<T>, data: Vec<Complex<T>>, rep: Rep) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            data,
            rep,
        })
    }

    /// Real-space field from a function of the coordinates.
    pub fn from_fn(grid: &GridSpec<T>, f: impl Fn([T; 3]) -> T + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|i| Complex::new(f(grid.coords(i)), T::zero()))
            .collect();
        Self {
            grid: grid.clone(),
            data,
            rep: Rep::Space,
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn rep(&self) -> Rep {
        self.rep
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn real_part(&self) -> Vec<T> {
        self.data.iter().map(|c| c.re).collect()
    }

    pub fn max_imag(&self) -> T {
        self.data.iter().fold(T::zero(), |m, c| m.max(c.im.abs()))
    }

    pub fn expect_rep(&self, rep: Rep) -> Result<()> {
        if self.rep == rep {
            Ok(())
        } else {
            Err(Error::State { expected: rep.name() })
        }
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid && self.rep == other.rep {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Space → frequency.
    pub fn forward(&self) -> Result<Self> {
        self.expect_rep(Rep::Space)?;
        let g = &self.grid;
        let mut data = self.data.clone();
        g.transform_axes(&mut data, true);
        let scale = (T::c(2.0) * T::PI()).powf(T::c(-(g.dim as f64) / 2.0)) * g.cell_volume();
        data.par_iter_mut().enumerate().for_each(|(i, c)| {
            let s = if g.parity(i) { -scale } else { scale };
            *c = *c * s;
        });
        Ok(Self {
            grid: g.clone(),
            data,
            rep: Rep::Freq,
        })
    }

    /// Frequency → space.
    pub fn inverse(&self) -> Result<Self> {
        self.expect_rep(Rep::Freq)?;
        let g = &self.grid;
        let scale =
            (T::c(2.0) * T::PI()).powf(T::c(-(g.dim as f64) / 2.0)) * g.dxi().powi(g.dim as i32);
        let mut data: Vec<Complex<T>> = self
            .data
            .par_iter()
            .enumerate()
            .map(|(i, c)| if g.parity(i) { -*c * scale } else { *c * scale })
            .collect();
        g.transform_axes(&mut data, false);
        Ok(Self {
            grid: g.clone(),
            data,
            rep: Rep::Space,
        })
    }

    pub fn to_freq(&self) -> Result<Self> {
        match self.rep {
            Rep::Freq => Ok(self.clone()),
            Rep::Space => self.forward(),
        }
    }

    pub fn to_space(&self) -> Result<Self> {
        match self.rep {
            Rep::Space => Ok(self.clone()),
            Rep::Freq => self.inverse(),
        }
    }

    /// Multiplies every mode by `m(|ξ|)`; frequency representation only.
    pub fn multiply_radial(&self, m: impl Fn(T) -> T + Sync) -> Result<Self> {
        self.expect_rep(Rep::Freq)?;
        let xi = self.grid.xi_mag();
        let data = self
            .data
            .par_iter()
            .zip(xi.par_iter())
            .map(|(c, &k)| *c * m(k))
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            data,
            rep: Rep::Freq,
        })
    }

    /// Applies a radial multiplier in whichever representation `self` is in.
    fn with_multiplier(&self, m: impl Fn(T) -> T + Sync) -> Result<Self> {
        match self.rep {
            Rep::Freq => self.multiply_radial(m),
            Rep::Space => self.forward()?.multiply_radial(m)?.inverse(),
        }
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|c| *c * a).collect(),
            rep: self.rep,
        }
    }

    /// `self + a·other`
    pub fn axpy(&self, a: T, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            data: self.data.iter().zip(&other.data).map(|(x, y)| *x + *y * a).collect(),
            rep: self.rep,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(T::one(), other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-T::one(), other)
    }

    /// Largest modulus of any sample, in either representation.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// Riemann-sum `L^p` norm of a real-space field; `p = ∞` gives the grid max.
    pub fn lp_norm(&self, p: T) -> Result<T> {
        lp_norm(self, p)
    }

    /// `(Σ |f̂|² Δξⁿ)^{1/2}` of a frequency-space field.
    pub fn spectral_l2(&self) -> Result<T> {
        self.expect_rep(Rep::Freq)?;
        let w = self.grid.dxi().powi(self.grid.dim as i32);
        let s: T = self.data.iter().map(|c| c.norm_sqr()).sum();
        Ok((s * w).sqrt())
    }

    /// `∫ f dx` by the Riemann sum.
    pub fn integral(&self) -> Result<T> {
        self.expect_rep(Rep::Space)?;
        let s: T = self.data.iter().map(|c| c.re).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// `∫ f·w dx` for real weights sampled on the same grid.
    pub fn weighted_integral(&self, weights: &[T]) -> Result<T> {
        self.expect_rep(Rep::Space)?;
        if weights.len() != self.data.len() {
            return Err(Error::GridMismatch);
        }
        let s: T = self.data.iter().zip(weights).map(|(c, &w)| c.re * w).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Binary container: magic, dim (u32), points (u64), half width (f64),
    /// rep (u8), then interleaved little-endian f64 real/imag pairs.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width.as_f64().to_le_bytes())?;
        w.write_all(&[match self.rep {
            Rep::Space => 0u8,
            Rep::Freq => 1u8,
        }])?;
        let mut buf = Vec::with_capacity(self.data.len() * 16);
        for c in &self.data {
            buf.extend_from_slice(&c.re.as_f64().to_le_bytes());
            buf.extend_from_slice(&c.im.as_f64().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a field container".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let points = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let hw = f64::from_le_bytes(b8);
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let rep = match b1[0] {
            0 => Rep::Space,
            1 => Rep::Freq,
            other => return Err(Error::Io(format!("unknown representation tag {other}"))),
        };
        let grid = GridSpec::new(dim, T::c(hw), points)?;
        let mut payload = vec![0u8; grid.len() * 16];
        r.read_exact(&mut payload)?;
        let data = payload
            .chunks_exact(16)
            .map(|ch| {
                let re = f64::from_le_bytes(ch[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(ch[8..].try_into().expect("8 bytes"));
                Complex::new(T::c(re), T::c(im))
            })
            .collect();
        Ok(Self { grid, data, rep })
    }
}

/// Riemann-sum `L^p` norm.
pub fn lp_norm<T: Real>(field: &Field<T>, p: T) -> Result<T> {
    field.expect_rep(Rep::Space)?;
    if p.is_nan() || p < T::one() {
        return domain(format!("Lebesgue exponent must be in [1, ∞], got {p}"));
    }
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let vol = field.grid.cell_volume();
    let s: T = if p == T::one() {
        field.data.iter().map(|c| c.norm()).sum()
    } else if p == T::c(2.0) {
        field.data.iter().map(|c| c.norm_sqr()).sum()
    } else {
        field.data.iter().map(|c| c.norm().powf(p)).sum()
    };
    Ok((s * vol).powf(p.recip()))
}

pub fn forward_transform<T: Real>(field: &Field<T>) -> Result<Field<T>> {
    field.forward()
}

pub fn inverse_transform<T: Real>(field: &Field<T>) -> Result<Field<T>> {
    field.inverse()
}

/// `|∇|^s`, with the zero mode mapped to zero.
pub fn fractional_derivative<T: Real>(field: &Field<T>, s: T) -> Result<Field<T>> {
    if !(s >= T::zero()) {
        return domain(format!("derivative order must be non-negative, got {s}"));
    }
    riesz(field, s)
}

/// `|ξ|^a` for any real `a`, zero mode mapped to zero.
pub fn riesz<T: Real>(field: &Field<T>, a: T) -> Result<Field<T>> {
    field.with_multiplier(|k| if k > T::zero() { k.powf(a) } else { T::zero() })
}

/// `⟨∇⟩^s = (1 + |ξ|²)^{s/2}`.
pub fn bessel_potential<T: Real>(field: &Field<T>, s: T) -> Result<Field<T>> {
    field.with_multiplier(|k| (T::one() + k * k).powf(s / T::c(2.0)))
}

/// Radial initial-data profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum DataProfile {
    /// `e^{−a|x|²}`
    Gaussian { a: f64 },
    /// `c₀|x|^{−k}` for `|x| ≥ 1`, smoothly switched off below `|x| = 1/2`,
    /// with the upper envelope `c_upper (1+|x|)^{−k}` checked at construction.
    PowerDecay { k: f64, c0: f64, c_upper: f64 },
    /// `χ(|x|/R)`: one on `|x| ≤ R`, zero beyond `2R`.
    Bump { radius: f64 },
    /// Piecewise-linear radial table `(r, value)`, zero past the last node.
    Table(Vec<(f64, f64)>),
}

impl DataProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            DataProfile::Gaussian { a } if !(*a > 0.0) => {
                domain(format!("gaussian needs a > 0, got {a}"))
            }
            DataProfile::PowerDecay { k, c0, c_upper } => {
                if !(*k > 0.0) {
                    return domain(format!("power decay needs k > 0, got {k}"));
                }
                if !(*c0 > 0.0) {
                    return domain(format!("power decay needs c0 > 0, got {c0}"));
                }
                // the switch-off starts at |x| = 1/2 where (1+|x|)^k |x|^{-k} = 3^k
                if *c_upper < c0 * 3f64.powf(*k) {
                    return domain(format!(
                        "upper constant {c_upper} below c0·3^k = {}",
                        c0 * 3f64.powf(*k)
                    ));
                }
                Ok(())
            }
            DataProfile::Bump { radius } if !(*radius > 0.0) => {
                domain(format!("bump radius must be positive, got {radius}"))
            }
            DataProfile::Table(rows) => {
                if rows.is_empty() || rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return domain("table radii must be non-empty and increasing");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Value at radius `r ≥ 0`.
    pub fn eval<T: Real>(&self, r: T) -> T {
        match self {
            DataProfile::Gaussian { a } => (-T::c(*a) * r * r).exp(),
            DataProfile::PowerDecay { k, c0, .. } => {
                if r <= T::c(0.5) {
                    T::zero()
                } else {
                    T::c(*c0) * r.powf(T::c(-k)) * (T::one() - chi(T::c(2.0) * r))
                }
            }
            DataProfile::Bump { radius } => chi(r / T::c(*radius)),
            DataProfile::Table(rows) => {
                let x = r.as_f64();
                if x <= rows[0].0 {
                    return T::c(rows[0].1);
                }
                for w in rows.windows(2) {
                    let (r0, v0) = w[0];
                    let (r1, v1) = w[1];
                    if x <= r1 {
                        return T::c(v0 + (v1 - v0) * (x - r0) / (r1 - r0));
                    }
                }
                T::zero()
            }
        }
    }
}

/// Samples a profile on a grid.
pub fn sample<T: Real>(profile: &DataProfile, grid: &GridSpec<T>) -> Result<Field<T>> {
    sample_scaled(profile, grid, T::one())
}

/// Samples `x ↦ profile(|x|/λ)`.
pub fn sample_scaled<T: Real>(profile: &DataProfile, grid: &GridSpec<T>, lambda: T) -> Result<Field<T>> {
    profile.validate()?;
    if !(lambda > T::zero()) {
        return domain(format!("scale must be positive, got {lambda}"));
    }
    Ok(Field::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        profile.eval(r / lambda)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn g1(hw: f64, n: usize) -> GridSpec<f64> {
        make_grid(1, hw, n).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let g = g1(64.0, 4096);
        assert_eq!(g.dx(), 1.0 / 32.0);
        assert_relative_eq!(g.dxi(), std::f64::consts::PI / 64.0);
        let g3: GridSpec<f64> = make_grid(3, 16.0, 128).unwrap();
        assert_eq!(g3.len(), 128usize.pow(3));
        assert!(matches!(make_grid::<f64>(1, 64.0, 100), Err(Error::Config(_))));
        assert!(make_grid::<f64>(4, 64.0, 128).is_err());
        assert!(make_grid::<f64>(1, -1.0, 128).is_err());
        assert!(make_grid::<f64>(1, 64.0, 32).is_err());
        // Nyquist π·64/(2·64) < 8
        assert!(make_grid::<f64>(1, 64.0, 64).is_err());
    }

    #[test]
    fn sample_examples() {
        let g = g1(16.0, 256);
        let f = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        assert_eq!(f.data()[128].re, 1.0);
        let p = DataProfile::PowerDecay { k: 0.6, c0: 2.0, c_upper: 2.0 * 3f64.powf(0.6) };
        assert_relative_eq!(p.eval(2.0f64), 2.0 * 2f64.powf(-0.6), max_relative = 1e-15);
        assert_eq!(p.eval(0.3f64), 0.0);
        let b = DataProfile::Bump { radius: 3.0 };
        assert_eq!(b.eval(2.9f64), 1.0);
        assert_eq!(b.eval(6.5f64), 0.0);
        let bad = DataProfile::PowerDecay { k: 0.0, c0: 1.0, c_upper: 5.0 };
        assert!(sample(&bad, &g).is_err());
        let loose = DataProfile::PowerDecay { k: 0.6, c0: 1.0, c_upper: 1.0 };
        assert!(loose.validate().is_err());
    }

    #[test]
    fn power_decay_sandwich() {
        let (k, c0) = (0.6, 1.3);
        let p = DataProfile::PowerDecay { k, c0, c_upper: c0 * 3f64.powf(k) };
        for i in 0..2000 {
            let r = i as f64 * 0.01;
            let v: f64 = p.eval(r);
            let lower = if r >= 1.0 { c0 * r.powf(-k) } else { 0.0 };
            let upper = c0 * 3f64.powf(k) * (1.0 + r).powf(-k);
            assert!(v >= lower - 1e-15 && v <= upper + 1e-15, "r={r}");
        }
    }

    #[test]
    fn gaussian_self_dual() {
        let g = g1(32.0, 1024);
        let f = sample(&DataProfile::Gaussian { a: 0.5 }, &g).unwrap();
        let fh = f.forward().unwrap();
        for (c, &k) in fh.data().iter().zip(g.xi_mag()) {
            assert!((c.re - (-k * k / 2.0).exp()).abs() < 1e-8);
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_parseval_3d() {
        let g: GridSpec<f64> = make_grid(3, 8.0, 64).unwrap();
        let f = Field::from_fn(&g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 3.0).exp() * (1.0 + x[2]).cos());
        let fh = f.forward().unwrap();
        let back = fh.inverse().unwrap();
        let err = back.sub(&f).unwrap().max_abs();
        assert!(err < 1e-12 * f.max_abs());
        assert!(back.max_imag() < 1e-12);
        let l2x = f.lp_norm(2.0).unwrap();
        let l2k = fh.spectral_l2().unwrap();
        assert_relative_eq!(l2x, l2k, max_relative = 1e-10);
        assert!(matches!(f.inverse(), Err(Error::State { .. })));
        assert!(fh.forward().is_err());
    }

    #[test]
    fn hermitian_symmetry_of_real_input() {
        let g: GridSpec<f64> = make_grid(2, 10.0, 64).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] - 0.3).tanh() * (-(x[1] * x[1])).exp());
        let fh = f.forward().unwrap();
        let n = g.points_per_axis();
        for i in 0..n {
            for j in 0..n {
                let a = fh.data()[i * n + j];
                let b = fh.data()[((n - i) % n) * n + (n - j) % n];
                assert!((a - b.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_examples() {
        let g = g1(16.0, 2048);
        let f = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(f.lp_norm(2.0).unwrap(), (pi / 2.0).powf(0.25), max_relative = 1e-12);
        assert_relative_eq!(f.lp_norm(1.0).unwrap(), pi.sqrt(), max_relative = 1e-12);
        assert_eq!(f.lp_norm(f64::INFINITY).unwrap(), 1.0);
        assert!(f.lp_norm(0.5).is_err());
        assert!(f.forward().unwrap().lp_norm(2.0).is_err());
    }

    #[test]
    fn norm_quadrature_converges() {
        for &p in &[1.0, 1.5, 2.0, 3.0, 4.0] {
            let a = sample(&DataProfile::Gaussian { a: 0.7 }, &g1(16.0, 512)).unwrap();
            let b = sample(&DataProfile::Gaussian { a: 0.7 }, &g1(16.0, 1024)).unwrap();
            let (na, nb) = (a.lp_norm(p).unwrap(), b.lp_norm(p).unwrap());
            assert!(((na - nb) / nb).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn fractional_multipliers() {
        let g = g1(8.0 * std::f64::consts::PI, 512);
        // grid mode e^{iξ₀x} with ξ₀ = 3Δξ
        let k0 = 3.0 * g.dxi();
        let mode = Field::from_complex(
            &g,
            (0..g.len()).map(|i| Complex::new(0.0, k0 * g.coords(i)[0]).exp()).collect(),
            Rep::Space,
        )
        .unwrap();
        let d2 = fractional_derivative(&mode, 2.0).unwrap();
        let expect = mode.scale(k0 * k0);
        assert!(d2.sub(&expect).unwrap().max_abs() < 1e-10);
        // mean-zero field is untouched by |∇|⁰
        let f = Field::from_fn(&g, |x| (x[0] / 4.0).sin() * (-(x[0] * x[0]) / 50.0).exp());
        let f0 = fractional_derivative(&f, 0.0).unwrap();
        assert!(f0.sub(&f).unwrap().max_abs() < 1e-10);
        let h = Field::from_fn(&g, |x| (-(x[0] * x[0]) / 5.0).exp());
        let round = bessel_potential(&bessel_potential(&h, 1.7).unwrap(), -1.7).unwrap();
        assert!(round.sub(&h).unwrap().max_abs() < 1e-10);
        assert!(fractional_derivative(&h, -1.0).is_err());
    }

    #[test]
    fn binary_container_round_trip() {
        let g: GridSpec<f64> = make_grid(2, 6.0, 64).unwrap();
        let f = Field::from_fn(&g, |x| x[0].sin() + x[1]).forward().unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 1 + g.len() * 16);
        let back: Field<f64> = Field::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(Field::<f64>::read_binary(&b"nope"[..]).is_err());
    }

    #[test]
    fn f32_round_trip() {
        let g: GridSpec<f32> = make_grid(1, 8.0, 128).unwrap();
        let f = sample(&DataProfile::Gaussian { a: 1.0 }, &g).unwrap();
        let back = f.forward().unwrap().inverse().unwrap();
        assert!(back.sub(&f).unwrap().max_abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn transform_round_trip_is_identity(seed in 0u64..1000, a in 0.05f64..2.0) {
            let g = g1(12.0, 256);
            let f = Field::from_fn(&g, |x| {
                (-a * x[0] * x[0]).exp() * ((seed as f64) * 0.01 * x[0]).cos()
            });
            let back = f.forward().unwrap().inverse().unwrap();
            prop_assert!(back.sub(&f).unwrap().max_abs() <= 1e-12 * f.max_abs().max(1.0));
        }
    }
}
