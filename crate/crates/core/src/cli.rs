//! Experiment drivers behind `dwave run <config>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blowup::{lifespan_sweep, track_i_phi, Scenario};
use crate::config::{Config, Resolver};
use crate::error::{Error, Result};
use crate::estimates::{
    log_spaced, matrix_cells, verify_estimate_suite, write_suite_csv, DecayCell, DecayOp, SuiteCell, SuiteConfig,
    Witness,
};
use crate::grid::{make_grid, sample, DataProfile, GridSpec};
use crate::kernel::{
    check_pointwise_bound, default_lattice, derivk_constants, derivkg_constants, verify_deriv_expansion, CoeffKind,
    DerivPoint, KernelKind,
};
use crate::nonlinear::{
    asymptotic_profile_error, integrate, profile_errors, IntegratorControls, NonlinearityKind, NonlinearitySpec,
    ProfileFits, QuadratureRule, Run, TraceWeights,
};
use crate::report::{fmt17, write_csv, Manifest};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    DecayFit,
    KernelCheck,
    RecurrenceCheck,
    BlowupBound,
    LifespanSweep,
    ProfileError,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Self::Simulate,
            "decay-fit" => Self::DecayFit,
            "kernel-check" => Self::KernelCheck,
            "recurrence-check" => Self::RecurrenceCheck,
            "blowup-bound" => Self::BlowupBound,
            "lifespan-sweep" => Self::LifespanSweep,
            "profile-error" => Self::ProfileError,
            _ => return Err(Error::Config(format!("unknown experiment {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
}

impl GridParams {
    fn resolve(r: &Resolver, dim: usize, hw: f64, points: usize) -> Result<Self> {
        let g = Self {
            dim: r.usize("grid.dim", Some(dim))?,
            half_width: r.f64("grid.half_width", Some(hw))?,
            points: r.usize("grid.points", Some(points))?,
        };
        g.build()?;
        Ok(g)
    }

    pub fn build(&self) -> Result<GridSpec<f64>> {
        make_grid(self.dim, self.half_width, self.points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub grid: GridParams,
    pub u0: DataProfile,
    pub u1: DataProfile,
    pub eps: f64,
    pub nonlinearity: NonlinearitySpec,
    pub controls: IntegratorControls,
    pub weights: TraceWeights,
    /// Fail when the final `X`-norm supremum exceeds this multiple of the initial one.
    pub max_sup_ratio: Option<f64>,
    /// Required final status: `completed`, `blowup` or `any`.
    pub expect: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub sim: SimulateSpec,
    pub window: (f64, f64),
    pub min_gap: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentSpec {
    Simulate(SimulateSpec),
    DecayFit(SuiteConfig),
    KernelCheck {
        grid: GridParams,
        kinds: Vec<KernelKind>,
        s_list: Vec<f64>,
        times: Vec<f64>,
    },
    RecurrenceCheck {
        k_max: usize,
        deriv_k: usize,
        points: usize,
        seed: u64,
        tolerance: f64,
    },
    BlowupBound {
        scenario: Scenario,
        eps: f64,
        controls: IntegratorControls,
        slack: f64,
    },
    LifespanSweep {
        scenario: Scenario,
        eps: Vec<f64>,
        controls: IntegratorControls,
        threshold_shift: Option<f64>,
        slack: f64,
        max_log_shift: f64,
    },
    ProfileError(ProfileSpec),
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub resolved: Vec<(String, String)>,
    pub spec: ExperimentSpec,
}

fn profile(r: &Resolver, prefix: &str, default_kind: &str) -> Result<DataProfile> {
    let kind = r.string(&format!("{prefix}.profile"), Some(default_kind))?;
    let key = |k: &str| format!("{prefix}.{k}");
    let p = match kind.as_str() {
        "gaussian" => DataProfile::Gaussian {
            a: r.f64(&key("a"), Some(1.0))?,
        },
        "power_decay" => {
            let k = r.f64(&key("k"), None)?;
            let c0 = r.f64(&key("c0"), Some(1.0))?;
            DataProfile::PowerDecay {
                k,
                c0,
                c_upper: r.f64(&key("c_upper"), Some(c0 * 3f64.powf(k)))?,
            }
        }
        "bump" => DataProfile::Bump {
            radius: r.f64(&key("radius"), Some(1.0))?,
        },
        "zero" => DataProfile::Table(vec![(0.0, 0.0)]),
        _ => return Err(Error::Config(format!("{prefix}.profile: unknown profile {kind:?}"))),
    };
    p.validate().map_err(|e| Error::Config(format!("{prefix}: {e}")))?;
    Ok(p)
}

fn controls(r: &Resolver, horizon: f64, dt_init: f64) -> Result<IntegratorControls> {
    let rule = match r.string("integrator.rule", Some("trapezoid"))?.as_str() {
        "trapezoid" => QuadratureRule::Trapezoid,
        "midpoint" => QuadratureRule::Midpoint,
        other => return Err(Error::Config(format!("integrator.rule: unknown rule {other:?}"))),
    };
    let d = IntegratorControls::default();
    let mut c = IntegratorControls {
        dt_init: r.f64("integrator.dt_init", Some(dt_init))?,
        dt_min: r.f64("integrator.dt_min", Some(d.dt_min))?,
        safety: r.f64("integrator.safety", Some(d.safety))?,
        blowup_factor: r.f64("integrator.blowup_factor", Some(d.blowup_factor))?,
        horizon: r.f64("integrator.horizon", Some(horizon))?,
        rule,
        dealias: r.bool("integrator.dealias", Some(true))?,
        snapshot_times: Vec::new(),
        snapshot_stride: r.opt_usize("integrator.snapshot_stride")?,
        trace_stride: r.usize("integrator.trace_stride", Some(1))?,
    };
    let count = r.usize("integrator.snapshot_count", Some(0))?;
    if count > 0 {
        let w = r.f64_list("integrator.snapshot_window", Some(&[1.0, c.horizon]))?;
        if w.len() != 2 {
            return Err(Error::Config("integrator.snapshot_window needs two numbers".into()));
        }
        c.snapshot_times = log_spaced(w[0], w[1], count).map_err(|e| Error::Config(e.to_string()))?;
    }
    c.validate()?;
    Ok(c)
}

fn simulate_spec(r: &Resolver) -> Result<SimulateSpec> {
    let grid = GridParams::resolve(r, 1, 64.0, 512)?;
    let u0 = profile(r, "data.u0", "gaussian")?;
    let u1 = profile(r, "data.u1", "gaussian")?;
    let eps = r.f64("equation.eps", Some(0.01))?;
    let p = r.f64("equation.p", None)?;
    let kind = match r.string("equation.kind", Some("focusing_power"))?.as_str() {
        "focusing_power" => NonlinearityKind::FocusingPower,
        "signed_power" => NonlinearityKind::SignedPower {
            sign: r.f64("equation.sign", Some(1.0))?,
        },
        other => return Err(Error::Config(format!("equation.kind: unknown kind {other:?}"))),
    };
    let nonlinearity = NonlinearitySpec::new(kind, p)?.with_amplitude(r.f64("equation.amplitude", Some(1.0))?);
    let weights = TraceWeights {
        n: grid.dim,
        r: r.f64("norms.r", Some(2.0))?,
        s: r.f64("norms.s", Some(0.0))?,
        p,
    };
    if !(weights.r > 1.0 && weights.r <= 2.0 && weights.s >= 0.0) {
        return Err(Error::Config(format!("norms need r in (1, 2] and s ≥ 0, got r = {}, s = {}", weights.r, weights.s)));
    }
    let controls = controls(r, 10.0, 0.05)?;
    let max_sup_ratio = r.opt_f64("check.max_sup_ratio")?;
    let expect = r.string("check.expect", Some("any"))?;
    if !matches!(expect.as_str(), "any" | "completed" | "blowup") {
        return Err(Error::Config(format!("check.expect: unknown status {expect:?}")));
    }
    Ok(SimulateSpec {
        grid,
        u0,
        u1,
        eps,
        nonlinearity,
        controls,
        weights,
        max_sup_ratio,
        expect,
    })
}

fn scenario(r: &Resolver) -> Result<Scenario> {
    let d = Scenario::default();
    let k = r.f64("scenario.k", Some(d.k))?;
    let c0 = r.f64("scenario.c0", Some(d.c0))?;
    let sc = Scenario {
        n: r.usize("scenario.n", Some(d.n))?,
        r: r.f64("scenario.r", Some(d.r))?,
        p: r.f64("scenario.p", Some(d.p))?,
        k,
        c0,
        c_upper: r.f64("scenario.c_upper", Some(c0 * 3f64.powf(k)))?,
        c1: r.f64("scenario.c1", Some(d.c1))?,
        l: r.usize("scenario.l", Some(d.l as usize))? as u32,
        half_width: r.f64("scenario.half_width", Some(d.half_width))?,
        points: r.usize("scenario.points", Some(d.points))?,
    };
    sc.grid::<f64>()?;
    Ok(sc)
}

fn decay_suite(r: &Resolver) -> Result<SuiteConfig> {
    let grid = GridParams::resolve(r, 1, 128.0, 8192)?;
    let op = DecayOp::parse(&r.string("decay.op", Some("d"))?)?;
    let tolerance = r.f64("decay.tolerance", Some(0.1))?;
    let cells = match r.string("decay.cells", Some("matrix"))?.as_str() {
        "matrix" => matrix_cells(op, grid.dim, tolerance)?,
        "single" => {
            let q = r.f64("decay.q", Some(1.0))?;
            let p = r.f64("decay.p", Some(2.0))?;
            let s1 = r.f64("decay.s1", Some(0.0))?;
            let s2 = r.f64("decay.s2", Some(0.0))?;
            vec![SuiteCell {
                id: format!("{}_n{}_q{q}_p{p}_s{s1}_{s2}", op.name(), grid.dim),
                op,
                cell: DecayCell::from_exponents(grid.dim, q, p, s1, s2)?,
                tolerance,
                one_sided: r.bool("decay.one_sided", Some(false))?,
            }]
        }
        other => return Err(Error::Config(format!("decay.cells: expected matrix or single, got {other:?}"))),
    };
    let window = match r.opt_f64("decay.t_min")? {
        Some(a) => Some((a, r.f64("decay.t_max", None)?, r.usize("decay.t_count", Some(16))?)),
        None => None,
    };
    let base = profile(r, "witness", "gaussian")?;
    let witness = match r.string("witness.kind", Some("scaled"))?.as_str() {
        "fixed" => Witness::Fixed(base),
        "scaled" => match r.f64("witness.scale", Some(0.5))? {
            c if c > 0.0 => Witness::Scaled { base, c },
            c => return Err(Error::Config(format!("witness.scale must be positive, got {c}"))),
        },
        other => return Err(Error::Config(format!("witness.kind: expected fixed or scaled, got {other:?}"))),
    };
    Ok(SuiteConfig {
        dim: grid.dim,
        half_width: grid.half_width,
        points: grid.points,
        witness,
        window,
        cells,
    })
}

impl ExperimentConfig {
    /// Validates everything up front; errors are configuration errors.
    pub fn resolve(cfg: &Config, out_override: Option<PathBuf>) -> Result<Self> {
        let r = Resolver::new(cfg);
        let kind = ExperimentKind::parse(&r.string("experiment.kind", None)?)?;
        let dir = r.string("output.dir", Some("dwave-out"))?;
        let spec = match kind {
            ExperimentKind::Simulate => ExperimentSpec::Simulate(simulate_spec(&r)?),
            ExperimentKind::DecayFit => ExperimentSpec::DecayFit(decay_suite(&r)?),
            ExperimentKind::KernelCheck => {
                let grid = GridParams::resolve(&r, 1, 128.0, 1024)?;
                let kinds = r
                    .str_list("kernel.kinds", "d,m")?
                    .iter()
                    .map(|k| match k.as_str() {
                        "d" => Ok(KernelKind::D),
                        "m" => Ok(KernelKind::M),
                        _ => Err(Error::Config(format!("kernel.kinds: unknown kernel {k:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ExperimentSpec::KernelCheck {
                    grid,
                    kinds,
                    s_list: r.f64_list("kernel.s", Some(&[0.0, 1.0]))?,
                    times: r.f64_list("kernel.times", Some(&crate::kernel::DYADIC_TIMES))?,
                }
            }
            ExperimentKind::RecurrenceCheck => {
                let deriv_k = r.usize("recurrence.deriv_k", Some(5))?;
                if deriv_k > 5 {
                    return Err(Error::Config(format!("recurrence.deriv_k above 5: {deriv_k}")));
                }
                ExperimentSpec::RecurrenceCheck {
                    k_max: r.usize("recurrence.k_max", Some(12))?,
                    deriv_k,
                    points: r.usize("recurrence.points", Some(32))?,
                    seed: r.usize("recurrence.seed", Some(1))? as u64,
                    tolerance: r.f64("recurrence.tolerance", Some(1e-6))?,
                }
            }
            ExperimentKind::BlowupBound => {
                let scenario = scenario(&r)?;
                let eps = r.f64("blowup.eps", Some(0.05))?;
                let mut controls = controls(&r, 5000.0, 0.25)?;
                if controls.snapshot_stride.is_none() {
                    controls.snapshot_stride = Some(5);
                }
                ExperimentSpec::BlowupBound {
                    scenario,
                    eps,
                    controls,
                    slack: r.f64("blowup.slack", Some(0.95))?,
                }
            }
            ExperimentKind::LifespanSweep => {
                let scenario = scenario(&r)?;
                let eps = r.f64_list("sweep.eps", Some(&[0.05, 0.035, 0.025, 0.018, 0.0125]))?;
                let controls = controls(&r, 5000.0, 0.25)?;
                let shift = r.f64("sweep.threshold_shift", Some(10.0))?;
                ExperimentSpec::LifespanSweep {
                    scenario,
                    eps,
                    controls,
                    threshold_shift: (shift > 1.0).then_some(shift),
                    slack: r.f64("sweep.slack", Some(0.2))?,
                    max_log_shift: r.f64("sweep.max_log_shift", Some(0.05))?,
                }
            }
            ExperimentKind::ProfileError => {
                let sim = simulate_spec(&r)?;
                let w = r.f64_list("profile.window", Some(&[10.0, sim.controls.horizon]))?;
                if w.len() != 2 || !(w[0] < w[1]) {
                    return Err(Error::Config("profile.window needs two increasing numbers".into()));
                }
                if sim.controls.snapshot_times.is_empty() && sim.controls.snapshot_stride.is_none() {
                    return Err(Error::Config("profile-error needs integrator.snapshot_count or snapshot_stride".into()));
                }
                ExperimentSpec::ProfileError(ProfileSpec {
                    window: (w[0], w[1]),
                    min_gap: r.f64("profile.min_gap", Some(0.3))?,
                    slack: r.f64("profile.slack", Some(0.15))?,
                    sim,
                })
            }
        };
        let mut resolved = r.finish()?;
        let output_dir = match out_override {
            Some(p) => {
                for kv in resolved.iter_mut().filter(|(k, _)| k == "output.dir") {
                    kv.1 = p.display().to_string();
                }
                p
            }
            None => PathBuf::from(dir),
        };
        Ok(Self {
            kind,
            output_dir,
            resolved,
            spec,
        })
    }
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub manifest: Manifest,
    pub summary: String,
}

fn bool_cell(b: bool) -> String {
    b.to_string()
}

fn run_simulate(spec: &SimulateSpec, dir: &Path, m: &mut Manifest, summary: &mut String) -> Result<bool> {
    let grid = spec.grid.build()?;
    let u0 = sample(&spec.u0, &grid)?;
    let u1 = sample(&spec.u1, &grid)?;
    let run = integrate(&u0, &u1, spec.eps, &spec.nonlinearity, &spec.controls, &spec.weights)?;
    let trace_path = dir.join("trace.csv");
    write_csv(&trace_path, &crate::nonlinear::NormTrace::HEADER, &run.trace.rows())?;
    m.output(&trace_path);
    let snap_rows: Vec<Vec<String>> = run
        .snapshots
        .iter()
        .map(|s| {
            Ok(vec![
                fmt17(s.time),
                fmt17(s.u.lp_norm(2.0)?),
                fmt17(s.u.max_abs()),
                fmt17(s.u.integral()?),
            ])
        })
        .collect::<Result<_>>()?;
    let snap_path = dir.join("snapshots.csv");
    write_csv(&snap_path, &["t", "l2", "linf", "integral"], &snap_rows)?;
    m.output(&snap_path);

    Ok(run_checks(spec, &run, m, summary))
}

/// Status and `X`-norm growth checks shared by `simulate` and `profile-error`.
fn run_checks(spec: &SimulateSpec, run: &Run<f64>, m: &mut Manifest, summary: &mut String) -> bool {
    let sup = run.trace.running_sup();
    let ratio = sup.last().copied().unwrap_or(0.0) / sup.first().copied().unwrap_or(1.0);
    m.result("status", run.status.label());
    if let Some(t) = run.status.breakdown_time() {
        m.result("breakdown_time", fmt17(t));
    }
    m.result("steps", run.steps);
    m.result("sup_ratio", fmt17(ratio));
    let _ = writeln!(summary, "status {} after {} steps", run.status.label(), run.steps);
    let _ = writeln!(summary, "X-norm supremum ratio {ratio:.4}");
    let status_ok = match spec.expect.as_str() {
        "completed" => run.status.breakdown_time().is_none(),
        "blowup" => run.status.breakdown_time().is_some(),
        _ => true,
    };
    status_ok && spec.max_sup_ratio.is_none_or(|c| ratio < c)
}

fn run_profile(spec: &ProfileSpec, dir: &Path, m: &mut Manifest, summary: &mut String) -> Result<bool> {
    let sim = &spec.sim;
    let grid = sim.grid.build()?;
    let u0 = sample(&sim.u0, &grid)?;
    let u1 = sample(&sim.u1, &grid)?;
    let run = integrate(&u0, &u1, sim.eps, &sim.nonlinearity, &sim.controls, &sim.weights)?;
    let trace_path = dir.join("trace.csv");
    write_csv(&trace_path, &crate::nonlinear::NormTrace::HEADER, &run.trace.rows())?;
    m.output(&trace_path);
    let samples = profile_errors(&run.snapshots, &u0, &u1, sim.eps, sim.weights.s, sim.weights.r, spec.window)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| vec![fmt17(s.t), fmt17(s.err_hs), fmt17(s.err_l2), fmt17(s.err_lr), fmt17(s.solution_l2)])
        .collect();
    let path = dir.join("profile.csv");
    write_csv(&path, &["t", "err_hs", "err_l2", "err_lr", "solution_l2"], &rows)?;
    m.output(&path);
    let fits = ProfileFits::from_samples(&samples)?;
    let gap = fits.l2_gap();
    let checks_ok = run_checks(sim, &run, m, summary);
    m.result("err_l2_slope", fmt17(fits.l2.slope));
    m.result("solution_l2_slope", fmt17(fits.solution_l2.slope));
    m.result("gap", fmt17(gap));
    let _ = writeln!(
        summary,
        "L2 error slope {:.4}, solution slope {:.4}, gap {gap:.4}",
        fits.l2.slope, fits.solution_l2.slope
    );
    let mut ok = checks_ok && gap >= spec.min_gap;
    match asymptotic_profile_error(&run, &u0, &u1, sim.eps, &sim.weights, spec.window) {
        Ok(rep) => {
            let within = rep.within(spec.slack);
            for (name, (th, w)) in ["hs", "l2", "lr"].iter().zip(rep.theory.iter().zip(within)) {
                m.result(format!("theory_{name}"), fmt17(*th));
                m.result(format!("within_{name}"), w);
            }
            let _ = writeln!(summary, "predicted rates {:?}, within slack {:?}", rep.theory, within);
            ok &= within.iter().all(|&w| w);
        }
        Err(Error::Domain(msg)) => {
            let _ = writeln!(summary, "no predicted rates: {msg}");
        }
        Err(e) => return Err(e),
    }
    Ok(ok)
}

fn run_kernel(
    grid: &GridParams,
    kinds: &[KernelKind],
    s_list: &[f64],
    times: &[f64],
    dir: &Path,
    m: &mut Manifest,
    summary: &mut String,
) -> Result<bool> {
    let g = grid.build()?;
    let xs = default_lattice(&g);
    let mut rows = Vec::new();
    let mut ok = true;
    for &kind in kinds {
        for &s in s_list {
            let rep = check_pointwise_bound(&g, kind, s, None, times, &xs)?;
            let name = match kind {
                KernelKind::D => "d",
                KernelKind::M => "m",
            };
            for smp in &rep.samples {
                rows.push(vec![
                    name.to_string(),
                    fmt17(s),
                    fmt17(smp.t),
                    fmt17(smp.x),
                    fmt17(smp.value),
                    fmt17(smp.envelope),
                    fmt17(smp.ratio),
                ]);
            }
            let per: Vec<String> = rep.per_scale.iter().map(|(t, r)| format!("{t}:{r:.3}")).collect();
            m.result(format!("stable_{name}_s{s}"), rep.stable);
            let _ = writeln!(summary, "kernel {name} s={s}: stable {} per-scale max {}", rep.stable, per.join(" "));
            ok &= rep.stable;
        }
    }
    let path = dir.join("kernel.csv");
    write_csv(&path, &["kernel", "s", "t", "x", "value", "envelope", "ratio"], &rows)?;
    m.output(&path);
    Ok(ok)
}

/// Random points with `|ξ| ≤ 1/4` and `t ∈ [0.5, 8]`.
pub fn deriv_points(count: usize, seed: u64) -> Vec<DerivPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0.5..8.0);
            let mag = rng.gen_range(0.0..0.25);
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let ph = rng.gen_range(0.0..std::f64::consts::PI);
            DerivPoint {
                t,
                xi: [mag * ph.cos(), mag * ph.sin() * th.cos(), mag * ph.sin() * th.sin()],
            }
        })
        .collect()
}

fn run_recurrence(
    k_max: usize,
    deriv_k: usize,
    points: usize,
    seed: u64,
    tolerance: f64,
    dir: &Path,
    m: &mut Manifest,
    summary: &mut String,
) -> Result<bool> {
    let mut rows = Vec::new();
    let mut ok = true;
    for k in 1..=k_max {
        let c = derivk_constants(k);
        let d = derivkg_constants(k)?;
        for l in crate::kernel::CoeffTable::l_range(k) {
            let cl = c.get(l, l);
            let dl = d.get(l, l);
            let holds = dl == (cl.clone() << l);
            ok &= holds;
            rows.push(vec![k.to_string(), l.to_string(), cl.to_string(), dl.to_string(), bool_cell(holds)]);
        }
        for (kind, t) in [("C", &c), ("D", &d)] {
            let path = dir.join(format!("coeff_{kind}_{k}.txt"));
            fs::create_dir_all(dir)?;
            fs::write(&path, t.to_text())?;
            m.output(&path);
        }
    }
    let path = dir.join("diagonal.csv");
    write_csv(&path, &["k", "l", "C_ll", "D_ll", "identity"], &rows)?;
    m.output(&path);
    let _ = writeln!(summary, "diagonal identity for k ≤ {k_max}: {ok}");

    let pts = deriv_points(points, seed);
    let mut res_rows = Vec::new();
    for k in 1..=deriv_k {
        for (name, kind) in [("C", CoeffKind::C), ("D", CoeffKind::D)] {
            let res = verify_deriv_expansion(kind, k, &pts)?;
            ok &= res < tolerance;
            res_rows.push(vec![name.to_string(), k.to_string(), fmt17(res), bool_cell(res < tolerance)]);
            let _ = writeln!(summary, "{name} k={k}: residual {res:.3e}");
        }
    }
    let path = dir.join("residuals.csv");
    write_csv(&path, &["table", "k", "residual", "pass"], &res_rows)?;
    m.output(&path);
    m.result("pass_identity_and_residuals", ok);
    Ok(ok)
}

fn run_blowup(
    scenario: &Scenario,
    eps: f64,
    controls: &IntegratorControls,
    slack: f64,
    dir: &Path,
    m: &mut Manifest,
    summary: &mut String,
) -> Result<bool> {
    let grid: GridSpec<f64> = scenario.grid()?;
    let (rc, phi, cert) = scenario.certificate(eps, &grid)?;
    let cert_path = dir.join("certificate.txt");
    fs::create_dir_all(dir)?;
    fs::write(
        &cert_path,
        format!("radius = {}\nbranch = {}\n{}", fmt17(rc.value), rc.branch, cert.render()),
    )?;
    m.output(&cert_path);
    let (u0, u1) = scenario.data(&grid)?;
    let run = integrate(&u0, &u1, eps, &scenario.nonlinearity()?, controls, &scenario.weights())?;
    let tr = track_i_phi(&run, &phi, Some(&cert), slack)?;
    let rows: Vec<Vec<String>> = (0..tr.times.len())
        .map(|i| {
            vec![
                fmt17(tr.times[i]),
                fmt17(tr.values[i]),
                fmt17(tr.values[i] - cert.a),
                tr.bounds[i].map_or_else(|| "NaN".into(), fmt17),
            ]
        })
        .collect();
    let path = dir.join("i_phi.csv");
    write_csv(&path, &["t", "I_phi", "J_phi", "bound"], &rows)?;
    m.output(&path);
    let blew = run.status.breakdown_time();
    let before_pole = blew.is_some_and(|t| t <= cert.pole());
    m.result("condition_ok", cert.condition_ok());
    m.result("status", run.status.label());
    m.result("violations", tr.violations.len());
    m.result("pole", fmt17(cert.pole()));
    let _ = writeln!(
        summary,
        "R = {:.3} (branch {}), certificate {}, status {} at {:?}, pole {:.3}, violations {}, min ratio {:?}",
        rc.value,
        rc.branch,
        cert.condition_ok(),
        run.status.label(),
        blew,
        cert.pole(),
        tr.violations.len(),
        tr.min_ratio
    );
    Ok(cert.condition_ok() && tr.violations.is_empty() && before_pole)
}

fn run_sweep(
    scenario: &Scenario,
    eps: &[f64],
    controls: &IntegratorControls,
    shift: Option<f64>,
    slack: f64,
    max_log_shift: f64,
    dir: &Path,
    m: &mut Manifest,
    summary: &mut String,
) -> Result<bool> {
    let rep = lifespan_sweep(eps, scenario, controls, shift, slack)?;
    let path = dir.join("sweep.csv");
    write_csv(&path, &crate::blowup::SweepReport::HEADER, &rep.rows())?;
    m.output(&path);
    for w in &rep.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    if let Some((s, b)) = rep.fit {
        m.result("slope", fmt17(s));
        m.result("intercept", fmt17(b));
        let _ = writeln!(summary, "fitted slope {s:.4}, band {:?}", rep.band);
    }
    if let Some(e) = rep.eps2 {
        m.result("eps2", fmt17(e));
    }
    if let Some(mu0) = rep.mu0_empirical {
        m.result("mu0_empirical", fmt17(mu0));
    }
    let shift_ok = match (shift, rep.max_log_shift()) {
        (Some(_), Some(d)) => {
            m.result("max_log_shift", fmt17(d));
            let _ = writeln!(summary, "threshold shift moves log T by at most {d:.3e}");
            d < max_log_shift
        }
        (Some(_), None) => false,
        (None, _) => true,
    };
    m.result("in_band", rep.in_band());
    Ok(rep.in_band() && shift_ok)
}

/// Runs a validated experiment, writing outputs under its directory.
pub fn execute(exp: &ExperimentConfig) -> Result<Outcome> {
    let dir = exp.output_dir.as_path();
    fs::create_dir_all(dir)?;
    let mut m = Manifest {
        entries: exp.resolved.clone(),
        ..Default::default()
    };
    let mut summary = String::new();
    let passed = match &exp.spec {
        ExperimentSpec::Simulate(s) => run_simulate(s, dir, &mut m, &mut summary)?,
        ExperimentSpec::ProfileError(p) => run_profile(p, dir, &mut m, &mut summary)?,
        ExperimentSpec::DecayFit(suite) => {
            let rows = verify_estimate_suite(suite)?;
            let path = dir.join("decay.csv");
            write_suite_csv(&path, &rows)?;
            m.output(&path);
            for r in &rows {
                let _ = writeln!(
                    summary,
                    "{}: fitted {:.4} theory {:.4} pass {}",
                    r.cell_id, r.fitted_slope, r.theory_slope, r.pass
                );
            }
            rows.iter().all(|r| r.pass)
        }
        ExperimentSpec::KernelCheck {
            grid,
            kinds,
            s_list,
            times,
        } => run_kernel(grid, kinds, s_list, times, dir, &mut m, &mut summary)?,
        ExperimentSpec::RecurrenceCheck {
            k_max,
            deriv_k,
            points,
            seed,
            tolerance,
        } => run_recurrence(*k_max, *deriv_k, *points, *seed, *tolerance, dir, &mut m, &mut summary)?,
        ExperimentSpec::BlowupBound {
            scenario,
            eps,
            controls,
            slack,
        } => run_blowup(scenario, *eps, controls, *slack, dir, &mut m, &mut summary)?,
        ExperimentSpec::LifespanSweep {
            scenario,
            eps,
            controls,
            threshold_shift,
            slack,
            max_log_shift,
        } => run_sweep(scenario, eps, controls, *threshold_shift, *slack, *max_log_shift, dir, &mut m, &mut summary)?,
    };
    m.result("pass", passed);
    let summary_path = dir.join("summary.txt");
    let _ = writeln!(summary, "pass {passed}");
    fs::write(&summary_path, &summary)?;
    m.output(&summary_path);
    m.write(&dir.join("manifest.txt"))?;
    Ok(Outcome {
        passed,
        manifest: m,
        summary,
    })
}

/// Parses, validates and runs a config file; returns the process exit code.
pub fn run(config_path: &Path, out_override: Option<PathBuf>) -> i32 {
    let exp = match Config::from_path(config_path).and_then(|c| ExperimentConfig::resolve(&c, out_override)) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&exp) {
        Ok(out) => {
            print!("{}", out.summary);
            if out.passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            EXIT_FAIL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("bad.cfg");
        let out = dir.path().join("out");
        fs::write(&cfg_path, "experiment.kind = simulate\nequation.p = 3\ngrid.bogus = 1\n").unwrap();
        assert_eq!(run(&cfg_path, Some(out.clone())), EXIT_CONFIG);
        assert!(!out.exists());
        fs::write(&cfg_path, "experiment.kind = simulate\nno equals sign\n").unwrap();
        assert_eq!(run(&cfg_path, Some(out.clone())), EXIT_CONFIG);
        fs::write(&cfg_path, "experiment.kind = simulate\nequation.p = 3\ngrid.points = 8\n").unwrap();
        assert_eq!(run(&cfg_path, Some(out.clone())), EXIT_CONFIG);
        assert!(!out.exists());
    }

    #[test]
    fn simulate_is_deterministic_and_manifest_replays() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("sim.cfg");
        fs::write(
            &cfg_path,
            "experiment.kind = simulate\nequation.p = 3\nequation.eps = 0.1\nintegrator.horizon = 2\ncheck.expect = completed\n",
        )
        .unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        assert_eq!(run(&cfg_path, Some(a.clone())), EXIT_PASS);
        assert_eq!(run(&a.join("manifest.txt"), Some(b.clone())), EXIT_PASS);
        for f in ["trace.csv", "snapshots.csv"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        }
        let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
        assert!(manifest.contains("integrator.dt_init = "));
        assert!(manifest.contains("# pass = true"));
    }

    #[test]
    fn failed_assertion_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("sim.cfg");
        fs::write(
            &cfg_path,
            "experiment.kind = simulate\nequation.p = 3\nequation.eps = 0.1\nintegrator.horizon = 1\ncheck.expect = blowup\n",
        )
        .unwrap();
        assert_eq!(run(&cfg_path, Some(dir.path().join("o"))), EXIT_FAIL);
    }

    #[test]
    fn shipped_configs_resolve() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut count = 0;
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let cfg = Config::from_path(&path).unwrap();
            ExperimentConfig::resolve(&cfg, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
        assert!(count >= 7);
    }

    #[test]
    fn recurrence_experiment_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("rec.cfg");
        fs::write(&cfg_path, "experiment.kind = recurrence-check\nrecurrence.points = 8\n").unwrap();
        assert_eq!(run(&cfg_path, Some(dir.path().join("o"))), EXIT_PASS);
        assert!(dir.path().join("o/coeff_C_12.txt").exists());
    }
}
