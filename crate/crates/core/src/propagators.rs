//! Exact linear solution operators, applied as Fourier multipliers.
//!
//! Every `apply_*` function expects a frequency-space field; callers
//! transform once and chain operators on the spectrum.

use crate::error::{domain, Error, Result};
use crate::grid::{Field, Rep};
use crate::scalar::Real;
use crate::symbols::{chi, wave_raw, BranchPolicy};

fn check_time<T: Real>(t: T) -> Result<()> {
    if !(t.is_finite() && t >= T::zero()) {
        return domain(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

/// `𝒟(t)`
pub fn apply_d<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    let bp = BranchPolicy::default();
    g.multiply_radial(|k| bp.damped(t, k))
}

/// `∂ₜ𝒟(t)`
pub fn apply_dt_d<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    let bp = BranchPolicy::default();
    g.multiply_radial(|k| bp.damped_dt(t, k))
}

/// Heat semigroup `𝒢(t) = e^{tΔ}`.
pub fn apply_g<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    g.multiply_radial(|k| (-t * k * k).exp())
}

/// Free wave propagator `sin(t|∇|)/|∇|`; any real `t`.
pub fn apply_w<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    if !t.is_finite() {
        return domain(format!("time must be finite, got {t}"));
    }
    g.multiply_radial(|k| wave_raw(t, k))
}

/// Low-frequency part `χ_{<1}(|∇|)𝒟(t)`.
pub fn apply_d_low<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    let bp = BranchPolicy::default();
    g.multiply_radial(|k| chi(k) * bp.damped(t, k))
}

/// High-frequency part `(1 − χ_{<1}(|∇|))𝒟(t)`.
pub fn apply_d_high<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    let bp = BranchPolicy::default();
    g.multiply_radial(|k| (T::one() - chi(k)) * bp.damped(t, k))
}

/// `𝒟(t) − 𝒢(t)`
pub fn apply_diff_dg<T: Real>(g: &Field<T>, t: T) -> Result<Field<T>> {
    check_time(t)?;
    let bp = BranchPolicy::default();
    g.multiply_radial(|k| bp.damped(t, k) - (-t * k * k).exp())
}

/// Cauchy data `(u, ∂ₜu)` at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState<T: Real> {
    pub u: Field<T>,
    pub v: Field<T>,
    pub time: T,
}

impl<T: Real> PairState<T> {
    pub fn new(u: Field<T>, v: Field<T>, time: T) -> Result<Self> {
        u.same_grid(&v)?;
        check_time(time)?;
        Ok(Self { u, v, time })
    }

    pub fn to_freq(&self) -> Result<Self> {
        Ok(Self {
            u: self.u.to_freq()?,
            v: self.v.to_freq()?,
            time: self.time,
        })
    }

    pub fn to_space(&self) -> Result<Self> {
        Ok(Self {
            u: self.u.to_space()?,
            v: self.v.to_space()?,
            time: self.time,
        })
    }

    /// `½‖v‖₂² + ½‖∇u‖₂²`, evaluated on the spectrum.
    pub fn energy(&self) -> Result<T> {
        let s = self.to_freq()?;
        let g = s.u.grid();
        let w = g.dxi().powi(g.dim() as i32);
        let total: T = s
            .u
            .data()
            .iter()
            .zip(s.v.data())
            .zip(g.xi_mag())
            .map(|((a, b), &k)| b.norm_sqr() + k * k * a.norm_sqr())
            .sum();
        Ok(T::c(0.5) * total * w)
    }
}

/// Advances the damped wave pair by `dt` exactly.
///
/// With `B = e^{−dt/2}L(dt,ξ)`:
/// `û ← (∂ₜB + B)û + Bv̂`, `v̂ ← −|ξ|²B û + ∂ₜB v̂`.
/// The state keeps its representation.
pub fn linear_flow<T: Real>(state: &PairState<T>, dt: T) -> Result<PairState<T>> {
    if !(dt.is_finite() && dt >= T::zero()) {
        return domain(format!("time step must be finite and non-negative, got {dt}"));
    }
    state.u.same_grid(&state.v)?;
    let rep = state.u.rep();
    let s = state.to_freq()?;
    let g = s.u.grid().clone();
    let bp = BranchPolicy::default();
    let mut u = s.u.clone();
    let mut v = s.v.clone();
    for (i, &k) in g.xi_mag().iter().enumerate() {
        let b = bp.damped(dt, k);
        let bt = bp.damped_dt(dt, k);
        let (u0, v0) = (s.u.data()[i], s.v.data()[i]);
        u.data_mut()[i] = u0 * (bt + b) + v0 * b;
        v.data_mut()[i] = u0 * (-k * k * b) + v0 * bt;
    }
    let out = PairState {
        u,
        v,
        time: state.time + dt,
    };
    match rep {
        Rep::Freq => Ok(out),
        Rep::Space => out.to_space(),
    }
}

/// Linear solution `u(t)` from data at time zero, as a frequency field.
pub fn linear_solution<T: Real>(u0_hat: &Field<T>, u1_hat: &Field<T>, t: T) -> Result<Field<T>> {
    if u0_hat.rep() != Rep::Freq || u1_hat.rep() != Rep::Freq {
        return Err(Error::State { expected: "frequency" });
    }
    let a = apply_dt_d(u0_hat, t)?;
    let b = apply_d(&u0_hat.add(u1_hat)?, t)?;
    a.add(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sample, DataProfile, GridSpec};

    fn gauss(g: &GridSpec<f64>, a: f64) -> Field<f64> {
        sample(&DataProfile::Gaussian { a }, g).unwrap().forward().unwrap()
    }

    fn rel(a: &Field<f64>, b: &Field<f64>) -> f64 {
        a.sub(b).unwrap().max_abs() / b.max_abs().max(1e-300)
    }

    #[test]
    fn trivial_values() {
        let g = make_grid(1, 32.0, 512).unwrap();
        let f = gauss(&g, 0.5);
        assert_eq!(apply_d(&f, 0.0).unwrap().max_abs(), 0.0);
        assert!(rel(&apply_dt_d(&f, 0.0).unwrap(), &f) < 1e-15);
        let d = apply_diff_dg(&f, 0.0).unwrap();
        assert!(d.add(&f).unwrap().max_abs() < 1e-15);
        let zero = Field::zeros(&g, Rep::Freq);
        assert_eq!(apply_diff_dg(&zero, 3.0).unwrap().max_abs(), 0.0);
        assert!(apply_d(&f, -1.0).is_err());
        let space = f.inverse().unwrap();
        assert!(matches!(apply_d(&space, 1.0), Err(Error::State { .. })));
    }

    #[test]
    fn heat_gaussian_closed_form() {
        for dim in 1..=2 {
            let g = make_grid(dim, 32.0, 256).unwrap();
            let u0 = gauss(&g, 0.25);
            for &t in &[0.5, 3.0, 10.0] {
                let u = apply_g(&u0, t).unwrap().inverse().unwrap();
                let c = (1.0 / (1.0 + t)).powf(dim as f64 / 2.0);
                let expect = Field::from_fn(&g, |x| {
                    let r2 = x[0] * x[0] + x[1] * x[1];
                    c * (-r2 / (4.0 * (1.0 + t))).exp()
                });
                assert!(u.sub(&expect).unwrap().max_abs() < 1e-8, "dim={dim} t={t}");
            }
        }
    }

    #[test]
    fn low_high_partition() {
        let g = make_grid(2, 16.0, 128).unwrap();
        let f = gauss(&g, 1.0);
        for &t in &[0.0, 1.0, 10.0] {
            let sum = apply_d_low(&f, t).unwrap().add(&apply_d_high(&f, t).unwrap()).unwrap();
            let full = apply_d(&f, t).unwrap();
            assert!(sum.sub(&full).unwrap().max_abs() <= 1e-12 * full.max_abs().max(1e-300));
        }
        let band = f.multiply_radial(|k| if k <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(apply_d_high(&band, 5.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn high_part_decays_like_exp_half() {
        let g = make_grid(1, 32.0, 1024).unwrap();
        let f = gauss(&g, 0.05);
        let ts: Vec<f64> = (0..12).map(|i| 5.0 + 5.0 * i as f64).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|&t| apply_d_high(&f, t).unwrap().spectral_l2().unwrap().ln())
            .collect();
        let n = ts.len() as f64;
        let mx = ts.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = ts.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = ts.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn wave_matches_ode_at_zero() {
        let g = make_grid(1, 16.0, 256).unwrap();
        let f = gauss(&g, 1.0);
        assert_eq!(apply_w(&f, 0.0).unwrap().max_abs(), 0.0);
        let a = apply_w(&f, -2.0).unwrap();
        let b = apply_w(&f, 2.0).unwrap();
        assert!(a.add(&b).unwrap().max_abs() < 1e-14);
    }

    fn pair(g: &GridSpec<f64>) -> PairState<f64> {
        let u = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() * (1.0 + 0.3 * x[0]));
        let v = Field::from_fn(g, |x| (-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp());
        PairState::new(u, v, 0.0).unwrap().to_freq().unwrap()
    }

    #[test]
    fn flow_identity_and_semigroup() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let s = pair(&g);
        let same = linear_flow(&s, 0.0).unwrap();
        assert!(rel(&same.u, &s.u) < 1e-15 && rel(&same.v, &s.v) < 1e-15);
        for &(a, b) in &[(0.3, 0.7), (2.0, 5.5), (0.01, 40.0)] {
            let two = linear_flow(&linear_flow(&s, a).unwrap(), b).unwrap();
            let one = linear_flow(&s, a + b).unwrap();
            assert!(rel(&two.u, &one.u) < 1e-10, "{a} {b}");
            assert!(rel(&two.v, &one.v) < 1e-10, "{a} {b}");
            assert!((two.time - (a + b)).abs() < 1e-14);
        }
        assert!(linear_flow(&s, -1.0).is_err());
    }

    #[test]
    fn flow_u_matches_operator_formula() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let s = pair(&g);
        for &t in &[0.5, 4.0, 30.0] {
            let flow = linear_flow(&s, t).unwrap();
            let direct = linear_solution(&s.u, &s.v, t).unwrap();
            assert!(rel(&flow.u, &direct) < 1e-13);
        }
    }

    #[test]
    fn flow_energy_non_increasing() {
        let g = make_grid(2, 8.0, 64).unwrap();
        let mut s = pair(&g);
        let mut e = s.energy().unwrap();
        for _ in 0..60 {
            s = linear_flow(&s, 0.25).unwrap();
            let e1 = s.energy().unwrap();
            assert!(e1 <= e * (1.0 + 1e-12));
            e = e1;
        }
    }

    #[test]
    fn zero_mode_exact() {
        let g: GridSpec<f64> = make_grid(1, 16.0, 128).unwrap();
        let u = Field::from_fn(&g, |x| 0.3 + (-(x[0] * x[0])).exp());
        let v = Field::from_fn(&g, |x| -0.2 + (x[0] / 3.0).sin() * 0.1);
        let s = PairState::new(u, v, 0.0).unwrap();
        let m0 = s.u.integral().unwrap();
        let m1 = s.v.integral().unwrap();
        for &t in &[0.1f64, 1.0, 7.0, 50.0] {
            let out = linear_flow(&s, t).unwrap();
            assert_eq!(out.u.rep(), Rep::Space);
            let m = out.u.integral().unwrap();
            let expect = m0 + m1 * (-(-t).exp_m1());
            assert!((m - expect).abs() <= 1e-10 * expect.abs().max(1.0), "t={t}");
        }
    }
}
