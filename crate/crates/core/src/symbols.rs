//! Scalar Fourier multipliers of the damped wave, heat and wave flows.
//!
//! Every symbol is a function of `(t, |ξ|)`. The damped-wave kernel is
//! written through `z = 1/4 − |ξ|²`:
//!
//! ```text
//! m(t, z) = sinh(t√z)/√z   (z > 0)
//!         = t              (z = 0)
//!         = sin(t√−z)/√−z  (z < 0)
//!         = Σ_k t^{2k+1} z^k / (2k+1)!
//! ```
//!
//! and `e^{−t/2} m(t, 1/4 − |ξ|²)` is the multiplier of 𝒟(t). Large-time
//! evaluation never forms `e^{t/2}`; the decaying exponential is folded into
//! each branch before anything is exponentiated.

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Controls where the entire power series replaces the closed forms.
///
/// The series is used when `||ξ| − 1/2| < series_radius` *and*
/// `t·√|z| ≤ series_argument_max`; the second clause keeps the partial sum
/// accurate for large `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPolicy {
    pub series_radius: f64,
    pub series_terms: usize,
    pub series_argument_max: f64,
}

impl Default for BranchPolicy {
    fn default() -> Self {
        Self {
            series_radius: 0.05,
            series_terms: 16,
            series_argument_max: 1.0,
        }
    }
}

impl BranchPolicy {
    pub fn new(series_radius: f64, series_terms: usize) -> Result<Self> {
        if !(series_radius > 0.0 && series_radius <= 0.1) {
            return domain(format!("series radius {series_radius} outside (0, 0.1]"));
        }
        if series_terms < 8 {
            return domain(format!("need at least 8 series terms, got {series_terms}"));
        }
        Ok(Self {
            series_radius,
            series_terms,
            ..Self::default()
        })
    }

    fn in_band<T: Real>(&self, z: T) -> bool {
        // ||ξ| − 1/2| < δ  ⇔  −δ(1+δ) < z < δ(1−δ)
        let d = self.series_radius;
        z > T::c(-d * (1.0 + d)) && z < T::c(d * (1.0 - d))
    }

    fn uses_series<T: Real>(&self, t: T, z: T) -> bool {
        let w_max = T::c(self.series_argument_max);
        self.in_band(z) && t * t * z.abs() <= w_max * w_max
    }

    /// `Σ_{k<terms} t^{2k+1} z^k/(2k+1)!`
    pub fn series_m<T: Real>(&self, t: T, z: T) -> T {
        let q = t * t * z;
        let mut term = t;
        let mut sum = t;
        for k in 0..self.series_terms.saturating_sub(1) {
            let a = T::from_usize_lossy(2 * k + 2);
            let b = T::from_usize_lossy(2 * k + 3);
            term = term * q / (a * b);
            sum = sum + term;
        }
        sum
    }

    /// `∂ₜ` of [`series_m`](Self::series_m): `Σ t^{2k} z^k/(2k)!`.
    pub fn series_m_dt<T: Real>(&self, t: T, z: T) -> T {
        let q = t * t * z;
        let mut term = T::one();
        let mut sum = T::one();
        for k in 0..self.series_terms.saturating_sub(1) {
            let a = T::from_usize_lossy(2 * k + 1);
            let b = T::from_usize_lossy(2 * k + 2);
            term = term * q / (a * b);
            sum = sum + term;
        }
        sum
    }

    /// Closed-form `m(t, z)` without the series.
    pub fn direct_m<T: Real>(&self, t: T, z: T) -> T {
        if z > T::zero() {
            let s = z.sqrt();
            let w = t.abs() * s;
            // e^{w}(1 − e^{−2w})/(2√z), shifted so e^{w} alone never overflows
            let mag = (w - (T::c(2.0) * s).ln()).exp() * (-(T::c(-2.0) * w).exp_m1());
            if t < T::zero() {
                -mag
            } else {
                mag
            }
        } else if z < T::zero() {
            let om = (-z).sqrt();
            (t * om).sin() / om
        } else {
            t
        }
    }

    pub fn m<T: Real>(&self, t: T, z: T) -> T {
        if self.uses_series(t, z) {
            self.series_m(t, z)
        } else {
            self.direct_m(t, z)
        }
    }

    /// `e^{−t/2} L(t, ξ)`; no domain checks.
    pub fn damped<T: Real>(&self, t: T, xi: T) -> T {
        let half = T::c(0.5);
        let z = (half - xi) * (half + xi);
        if self.uses_series(t, z) {
            (-half * t).exp() * self.series_m(t, z)
        } else if z > T::zero() {
            let s = z.sqrt();
            // −1/2 + √z = −|ξ|²/(1/2 + √z)
            let a = -t * xi * xi / (half + s);
            a.exp() * (-(T::c(-2.0) * t * s).exp_m1()) / (T::c(2.0) * s)
        } else {
            let om = (-z).sqrt();
            (-half * t).exp() * (t * om).sin() / om
        }
    }

    /// `∂ₜ[e^{−t/2} L(t, ξ)]`; no domain checks.
    pub fn damped_dt<T: Real>(&self, t: T, xi: T) -> T {
        let half = T::c(0.5);
        let two = T::c(2.0);
        let z = (half - xi) * (half + xi);
        if self.uses_series(t, z) {
            (-half * t).exp() * (self.series_m_dt(t, z) - half * self.series_m(t, z))
        } else if z > T::zero() {
            let s = z.sqrt();
            let a = -t * xi * xi / (half + s);
            let e2 = (-two * t * s).exp();
            // 1 − 1/(2√z) = −4|ξ|²/(2√z (1 + 2√z))
            let lead = -T::c(4.0) * xi * xi / (two * s * (T::one() + two * s));
            half * a.exp() * (lead + e2 * (T::one() + T::one() / (two * s)))
        } else {
            let om = (-z).sqrt();
            (-half * t).exp() * ((t * om).cos() - (t * om).sin() / (two * om))
        }
    }
}

fn finite<T: Real>(name: &str, x: T) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite, got {x}"))
    }
}

fn nonneg<T: Real>(name: &str, x: T) -> Result<()> {
    finite(name, x)?;
    if x < T::zero() {
        return domain(format!("{name} must be non-negative, got {x}"));
    }
    Ok(())
}

/// Unified kernel function `m(t, z)`.
pub fn symbol_m<T: Real>(t: T, z: T) -> Result<T> {
    finite("t", t)?;
    finite("z", z)?;
    Ok(BranchPolicy::default().m(t, z))
}

/// Multiplier of 𝒟(t): `e^{−t/2} L(t, ξ)`.
pub fn symbol_damped<T: Real>(t: T, xi_mag: T) -> Result<T> {
    nonneg("t", t)?;
    nonneg("|xi|", xi_mag)?;
    Ok(BranchPolicy::default().damped(t, xi_mag))
}

/// Multiplier of ∂ₜ𝒟(t).
pub fn symbol_damped_dt<T: Real>(t: T, xi_mag: T) -> Result<T> {
    nonneg("t", t)?;
    nonneg("|xi|", xi_mag)?;
    Ok(BranchPolicy::default().damped_dt(t, xi_mag))
}

/// Heat multiplier `e^{−t|ξ|²}`.
pub fn symbol_heat<T: Real>(t: T, xi_mag: T) -> Result<T> {
    finite("t", t)?;
    nonneg("|xi|", xi_mag)?;
    Ok((-t * xi_mag * xi_mag).exp())
}

/// Wave multiplier `sin(t|ξ|)/|ξ|`, equal to `t` at `ξ = 0`.
pub fn symbol_wave<T: Real>(t: T, xi_mag: T) -> Result<T> {
    finite("t", t)?;
    nonneg("|xi|", xi_mag)?;
    Ok(wave_raw(t, xi_mag))
}

pub(crate) fn wave_raw<T: Real>(t: T, xi: T) -> T {
    let w = t * xi;
    if w.abs() < T::c(1e-3) {
        // sin(w)/ξ = t(1 − w²/6 + w⁴/120)
        let w2 = w * w;
        t * (T::one() - w2 / T::c(6.0) + w2 * w2 / T::c(120.0))
    } else {
        w.sin() / xi
    }
}

fn bump_h<T: Real>(s: T) -> T {
    if s > T::zero() {
        (-s.recip()).exp()
    } else {
        T::zero()
    }
}

/// Base cutoff χ: 1 on `|r| ≤ 1`, 0 on `|r| ≥ 2`, smooth and strictly
/// decreasing in between.
pub fn chi<T: Real>(r: T) -> T {
    let u = r.abs();
    if u <= T::one() {
        return T::one();
    }
    if u >= T::c(2.0) {
        return T::zero();
    }
    let f = bump_h(T::c(2.0) - u);
    let g = bump_h(u - T::one());
    f / (f + g)
}

/// `(χ(r), χ'(r), χ''(r))` for `r ≥ 0`, from closed-form derivatives of the
/// exponential bump.
pub fn chi_jet<T: Real>(r: T) -> [T; 3] {
    let u = r.abs();
    if u <= T::one() {
        return [T::one(), T::zero(), T::zero()];
    }
    if u >= T::c(2.0) {
        return [T::zero(); 3];
    }
    // h' = h/s², h'' = h (1/s⁴ − 2/s³)
    let jet = |s: T| {
        let h = bump_h(s);
        let is = s.recip();
        let d1 = h * is * is;
        let d2 = h * (is * is * is * is - T::c(2.0) * is * is * is);
        (h, d1, d2)
    };
    let (f, fd, fdd) = jet(T::c(2.0) - u);
    let (g, gd, gdd) = jet(u - T::one());
    // f(u) = h(2 − u), g(u) = h(u − 1)
    let f1 = -fd;
    let f2 = fdd;
    let g1 = gd;
    let g2 = gdd;
    let s = f + g;
    let s1 = f1 + g1;
    let num = f1 * g - f * g1;
    let num1 = f2 * g - f * g2;
    let c0 = f / s;
    let c1 = num / (s * s);
    let c2 = num1 / (s * s) - T::c(2.0) * num * s1 / (s * s * s);
    [c0, c1, c2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffKind<T> {
    /// χ_{<a}(r) = χ(r/a)
    Below,
    /// χ_{≥a} = 1 − χ_{<a}
    Above,
    /// χ_{a≤·<b} = χ_{<b} − χ_{<a}
    Band { upper: T },
}

/// Rescaled cutoffs built from [`chi`].
pub fn cutoff<T: Real>(a: T, kind: CutoffKind<T>, r: T) -> Result<T> {
    finite("a", a)?;
    finite("r", r)?;
    if a <= T::zero() {
        return domain(format!("cutoff scale must be positive, got {a}"));
    }
    Ok(match kind {
        CutoffKind::Below => chi(r / a),
        CutoffKind::Above => T::one() - chi(r / a),
        CutoffKind::Band { upper } => {
            if !(upper > a) {
                return domain(format!("band needs upper {upper} > lower {a}"));
            }
            chi(r / upper) - chi(r / a)
        }
    })
}
