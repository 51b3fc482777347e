//! Worst-case bang-bang switching driven by a Lyapunov certificate.
//!
//! Given P at level i, the admissible Δ ∈ {0, δ} that maximizes V̇ is chosen
//! by the sign of the indicator ℐ(x) = ξᵀ(𝒜₀ᵀP + P𝒜₀)ξ, ξ = lift(x).
//! [`find_switching_sequence`] integrates the closed loop and records every
//! sign change of ℐ that invalidates the active branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{lift_state, HierarchyLevel, SwitchedLinearSystem, SymmetricBasis};
use crate::linalg::{self, Matrix, Vector};
use crate::ode::{Dopri5, DenseStep, IntegratorConfig};

/// Piecewise-constant Δ(t): value `values[k]` on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal", into = "RawSignal")]
pub struct SwitchingSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSignal> for SwitchingSignal {
    type Error = Error;

    fn try_from(raw: RawSignal) -> Result<Self> {
        SwitchingSignal::new(raw.times, raw.values)
    }
}

impl From<SwitchingSignal> for RawSignal {
    fn from(s: SwitchingSignal) -> Self {
        RawSignal {
            times: s.times,
            values: s.values,
        }
    }
}

impl SwitchingSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || times.len() != values.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "signal needs |times| = |values| + 1 with at least one value, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("switching signal"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("signal times must be strictly increasing".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("signal values must be non-negative".into()));
        }
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("consecutive signal values must alternate".into()));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> usize {
        self.values.len()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Switching instants strictly inside the horizon.
    pub fn event_times(&self) -> &[f64] {
        &self.times[1..self.times.len() - 1]
    }

    /// Δ at time t (the last value holds at the final instant).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        self.values[k.saturating_sub(1).min(self.values.len() - 1)]
    }

    /// Segments j..k re-based to start at zero.
    pub fn window(&self, j: usize, k: usize) -> Result<Self> {
        if j >= k || k >= self.times.len() {
            return Err(Error::InvalidArgument(format!(
                "window needs j < k < {}, got j = {j}, k = {k}",
                self.times.len()
            )));
        }
        let t0 = self.times[j];
        Self::new(
            self.times[j..=k].iter().map(|t| t - t0).collect(),
            self.values[j..k].to_vec(),
        )
    }

    /// The signal repeated `cycles` times back to back.
    pub fn repeated(&self, cycles: usize) -> Result<Self> {
        if cycles == 0 {
            return Err(Error::InvalidArgument("cycles must be >= 1".into()));
        }
        let period = self.duration();
        let mut times = vec![self.start()];
        let mut values = Vec::new();
        for c in 0..cycles {
            let offset = period * c as f64;
            for (k, &v) in self.values.iter().enumerate() {
                if values.last() == Some(&v) {
                    // same value across the seam: merge the segments
                    times.pop();
                } else {
                    values.push(v);
                }
                times.push(self.times[k + 1] + offset);
            }
        }
        Self::new(times, values)
    }
}

/// One trajectory sample. The true state is `x · exp(log_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    #[serde(with = "crate::serde_util::vector")]
    pub x: Vector,
    pub delta: f64,
    pub log_scale: f64,
}

impl Sample {
    pub fn state(&self) -> Vector {
        if self.log_scale == 0.0 {
            self.x.clone()
        } else {
            &self.x * self.log_scale.exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Set when the run stopped at the overflow guard.
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

/// Precomputed quadratic form of the indicator.
#[derive(Debug, Clone)]
pub struct Indicator {
    basis: SymmetricBasis,
    q: Matrix,
}

impl Indicator {
    pub fn new(level: &HierarchyLevel, p: &Matrix) -> Result<Self> {
        let d = level.dim();
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "P is {}x{}, level {} has dimension {d}",
                p.nrows(),
                p.ncols(),
                level.level
            )));
        }
        let q = level.cal_a0.transpose() * p + p * &level.cal_a0;
        Ok(Self {
            basis: level.basis.clone(),
            q: linalg::symmetrize(&q),
        })
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        let xi = lift_state(x, &self.basis);
        xi.dot(&(&self.q * &xi))
    }

    /// ℐ on the unit sphere; same sign as [`eval`](Self::eval), immune to
    /// under/overflow of the degree-2i form.
    pub fn eval_normalized(&self, x: &Vector) -> f64 {
        let norm = x.norm();
        if norm == 0.0 {
            0.0
        } else {
            self.eval(&(x / norm))
        }
    }
}

pub fn indicator(x: &Vector, level: &HierarchyLevel, p: &Matrix) -> Result<f64> {
    Ok(Indicator::new(level, p)?.eval(x))
}

fn branch(value: f64, delta: f64) -> f64 {
    if value < 0.0 {
        0.0
    } else {
        delta
    }
}

/// The V̇-maximizing Δ ∈ {0, δ} at state x; ties go to δ.
pub fn worst_case_delta(x: &Vector, delta: f64, level: &HierarchyLevel, p: &Matrix) -> Result<f64> {
    Ok(branch(indicator(x, level, p)?, delta))
}

struct Recorder {
    samples: Vec<Sample>,
    grid: Option<f64>,
    next_grid: f64,
    t_end: f64,
}

impl Recorder {
    fn new(cfg: &IntegratorConfig, t0: f64, t_end: f64) -> Self {
        Self {
            samples: Vec::new(),
            grid: cfg.sample_dt,
            next_grid: t0 + cfg.sample_dt.unwrap_or(0.0),
            t_end,
        }
    }

    fn push(&mut self, t: f64, x: Vector, delta: f64, log_scale: f64) {
        self.samples.push(Sample { t, x, delta, log_scale });
    }

    // grid points strictly before `upper`
    fn fill(&mut self, step: &DenseStep, upper: f64, delta: f64, log_scale: f64) {
        if let Some(dt) = self.grid {
            while self.next_grid < upper && self.next_grid < self.t_end {
                let t = self.next_grid;
                self.push(t, step.eval(t), delta, log_scale);
                self.next_grid += dt;
            }
        }
    }
}

fn check_inputs(sys: &SwitchedLinearSystem, x0: &Vector, t_f: f64, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, system has n = {}",
            x0.len(),
            sys.n()
        )));
    }
    linalg::ensure_finite(&Matrix::from_column_slice(x0.len(), 1, x0.as_slice()), "x0")?;
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_f must be positive, got {t_f}")));
    }
    Ok(())
}

/// Integrate ẋ = (A + Δ_w A₀)x from x0 over [0, t_f], switching whenever ℐ
/// changes sign against the active branch.
pub fn find_switching_sequence(
    sys: &SwitchedLinearSystem,
    level: &HierarchyLevel,
    p: &Matrix,
    delta: f64,
    x0: &Vector,
    t_f: f64,
    cfg: &IntegratorConfig,
) -> Result<(SwitchingSignal, Trajectory)> {
    check_inputs(sys, x0, t_f, cfg)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
    }
    if level.basis.n() != sys.n() {
        return Err(Error::DimensionMismatch("level was built for a different n".into()));
    }
    let ind = Indicator::new(level, p)?;
    let g = |x: &Vector| ind.eval_normalized(x);
    let invalid = |value: f64, sigma: f64| branch(value, delta) != sigma;

    let dwell = 10.0 * cfg.event_tol;
    let mut sigma = branch(g(x0), delta);
    let mut times = vec![0.0];
    let mut values = vec![sigma];
    let mut rec = Recorder::new(cfg, 0.0, t_f);
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut log_scale = 0.0;
    let mut last_event = f64::NEG_INFINITY;
    let mut diverged = false;
    let mut steps = 0usize;
    let log_guard = cfg.overflow_guard.ln();
    rec.push(t, x.clone(), sigma, log_scale);

    // delta = 0 has only one branch value; still track the signal shape
    let single_valued = delta == 0.0;

    'segments: while t < t_f {
        let m = sys.mode(sigma);
        let mut solver = Dopri5::new(|y: &Vector| &m * y, t, x.clone(), cfg);
        loop {
            let step = solver.step(t_f)?;
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::Integrator {
                    t: step.t0,
                    reason: "step budget exhausted".into(),
                });
            }

            let mut event = None;
            if !single_valued {
                const PROBES: usize = 8;
                let mut lo = step.t0.max(last_event + dwell);
                for k in 1..=PROBES {
                    let tp = step.t0 + (step.t1 - step.t0) * k as f64 / PROBES as f64;
                    if tp <= last_event + dwell {
                        continue;
                    }
                    if invalid(g(&step.eval(tp)), sigma) {
                        let mut hi = tp;
                        while hi - lo > cfg.event_tol {
                            let mid = 0.5 * (lo + hi);
                            if invalid(g(&step.eval(mid)), sigma) {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        event = Some(hi);
                        break;
                    }
                    lo = tp;
                }
            }

            match event {
                Some(te) if te < t_f - cfg.event_tol => {
                    rec.fill(&step, te, sigma, log_scale);
                    let mut xe = step.eval(te);
                    rec.push(te, xe.clone(), sigma, log_scale);
                    sigma = if sigma == 0.0 { delta } else { 0.0 };
                    if cfg.normalize {
                        let s = xe.norm();
                        if s > 0.0 {
                            log_scale += s.ln();
                            xe /= s;
                        }
                    }
                    rec.push(te, xe.clone(), sigma, log_scale);
                    times.push(te);
                    values.push(sigma);
                    if values.len() > cfg.max_events {
                        return Err(Error::Chattering(cfg.max_events));
                    }
                    t = te;
                    x = xe;
                    last_event = te;
                    continue 'segments;
                }
                _ => {
                    rec.fill(&step, step.t1, sigma, log_scale);
                    rec.push(step.t1, step.y1.clone(), sigma, log_scale);
                    t = step.t1;
                    x = step.y1.clone();
                    let norm = x.norm();
                    if norm > 0.0 && norm.ln() + log_scale > log_guard {
                        diverged = true;
                        break 'segments;
                    }
                    if t >= t_f {
                        break 'segments;
                    }
                }
            }
        }
    }

    times.push(t);
    let signal = SwitchingSignal::new(times, values)?;
    Ok((
        signal,
        Trajectory {
            samples: rec.samples,
            diverged,
        },
    ))
}

/// How [`simulate_fixed_signal`] advances each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Matrix exponential per segment.
    Exact,
    /// Adaptive Runge–Kutta per segment.
    Ode,
}

const EXACT_SAMPLES_PER_SEGMENT: usize = 16;

/// Replay a given signal from x0. Samples are taken at every breakpoint
/// (twice, once per side), at step ends in ODE mode, and on the
/// `sample_dt` grid when set.
pub fn simulate_fixed_signal(
    sys: &SwitchedLinearSystem,
    signal: &SwitchingSignal,
    x0: &Vector,
    mode: ReplayMode,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_inputs(sys, x0, signal.duration().max(f64::MIN_POSITIVE), cfg)?;
    let mut samples = Vec::new();
    let mut x = x0.clone();
    let guard = cfg.overflow_guard;
    let mut diverged = false;
    let mut next_grid = cfg.sample_dt.map(|dt| signal.start() + dt);

    'outer: for (k, &sigma) in signal.values().iter().enumerate() {
        let (ta, tb) = (signal.times()[k], signal.times()[k + 1]);
        let m = sys.mode(sigma);
        samples.push(Sample {
            t: ta,
            x: x.clone(),
            delta: sigma,
            log_scale: 0.0,
        });
        let mut inner: Vec<f64> = Vec::new();
        if let (Some(dt), Some(g)) = (cfg.sample_dt, next_grid.as_mut()) {
            while *g < tb {
                inner.push(*g);
                *g += dt;
            }
        }
        match mode {
            ReplayMode::Exact => {
                if cfg.sample_dt.is_none() {
                    inner.extend(
                        (1..EXACT_SAMPLES_PER_SEGMENT).map(|j| ta + (tb - ta) * j as f64 / EXACT_SAMPLES_PER_SEGMENT as f64),
                    );
                }
                for &t in &inner {
                    let xt = linalg::expm(&m, t - ta)? * &x;
                    let blown = xt.norm() > guard;
                    samples.push(Sample {
                        t,
                        x: xt,
                        delta: sigma,
                        log_scale: 0.0,
                    });
                    if blown {
                        diverged = true;
                        break 'outer;
                    }
                }
                x = linalg::expm(&m, tb - ta)? * &x;
            }
            ReplayMode::Ode => {
                let mut solver = Dopri5::new(|y: &Vector| &m * y, ta, x.clone(), cfg);
                let mut pending = inner.into_iter().peekable();
                while solver.t() < tb {
                    let step = solver.step(tb)?;
                    while let Some(&t) = pending.peek() {
                        if t >= step.t1 {
                            break;
                        }
                        samples.push(Sample {
                            t,
                            x: step.eval(t),
                            delta: sigma,
                            log_scale: 0.0,
                        });
                        pending.next();
                    }
                    if step.t1 < tb {
                        samples.push(Sample {
                            t: step.t1,
                            x: step.y1.clone(),
                            delta: sigma,
                            log_scale: 0.0,
                        });
                    }
                    if step.y1.norm() > guard {
                        diverged = true;
                        break 'outer;
                    }
                }
                x = solver.y().clone();
            }
        }
        samples.push(Sample {
            t: tb,
            x: x.clone(),
            delta: sigma,
            log_scale: 0.0,
        });
        if x.norm() > guard {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory { samples, diverged })
}

/// Exact states of the signal's closed loop at the requested times.
pub fn propagate_exact(sys: &SwitchedLinearSystem, signal: &SwitchingSignal, x0: &Vector, times: &[f64]) -> Result<Vec<Vector>> {
    let mut knots = Vec::with_capacity(signal.times().len());
    knots.push(x0.clone());
    for (k, &sigma) in signal.values().iter().enumerate() {
        let dt = signal.times()[k + 1] - signal.times()[k];
        let next = linalg::expm(&sys.mode(sigma), dt)? * &knots[k];
        knots.push(next);
    }
    times
        .iter()
        .map(|&t| {
            if t < signal.start() || t > signal.end() {
                return Err(Error::InvalidArgument(format!("time {t} outside the signal horizon")));
            }
            let k = signal
                .times()
                .partition_point(|&s| s <= t)
                .saturating_sub(1)
                .min(signal.segments() - 1);
            let dt = t - signal.times()[k];
            Ok(linalg::expm(&sys.mode(signal.values()[k]), dt)? * &knots[k])
        })
        .collect()
}

/// Input and output vectors of the impulse experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSetup {
    #[serde(with = "crate::serde_util::vector")]
    pub b: Vector,
    #[serde(with = "crate::serde_util::vector")]
    pub c: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse {
    pub signal: SwitchingSignal,
    pub trajectory: Trajectory,
    /// C·φ(t) at each trajectory sample.
    pub h_worst: Vec<f64>,
    /// C·e^{At}·B at the same instants.
    pub h_nominal: Vec<f64>,
}

impl ImpulseResponse {
    pub fn peak_worst(&self) -> f64 {
        self.h_worst.iter().fold(0.0, |m, h| m.max(h.abs()))
    }

    pub fn peak_nominal(&self) -> f64 {
        self.h_nominal.iter().fold(0.0, |m, h| m.max(h.abs()))
    }
}

/// Worst-case switching started from φ(0) = B, observed through C.
pub fn worst_case_impulse(
    sys: &SwitchedLinearSystem,
    impulse: &ImpulseSetup,
    level: &HierarchyLevel,
    p: &Matrix,
    delta: f64,
    t_f: f64,
    cfg: &IntegratorConfig,
) -> Result<ImpulseResponse> {
    if impulse.b.len() != sys.n() || impulse.c.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "B and C must have length {}, got {} and {}",
            sys.n(),
            impulse.b.len(),
            impulse.c.len()
        )));
    }
    let (signal, trajectory) = find_switching_sequence(sys, level, p, delta, &impulse.b, t_f, cfg)?;
    let h_worst = trajectory.samples.iter().map(|s| impulse.c.dot(&s.state())).collect();
    let h_nominal = trajectory
        .samples
        .iter()
        .map(|s| Ok(impulse.c.dot(&(linalg::expm(sys.a(), s.t)? * &impulse.b))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ImpulseResponse {
        signal,
        trajectory,
        h_worst,
        h_nominal,
    })
}
