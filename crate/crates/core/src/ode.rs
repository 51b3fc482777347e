//! Dormand–Prince 5(4) integrator with continuous output.
//!
//! The stepper only advances one step at a time; callers decide what to do
//! with each [`DenseStep`] (event search, sampling, truncation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

// the right-hand side is autonomous, so the nodes c_i are not needed
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_REJECTS: usize = 60;

/// Tolerances and limits shared by every integration in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Time tolerance for event localization (seconds).
    pub event_tol: f64,
    pub max_events: usize,
    /// Trajectories are truncated once ‖x‖ exceeds this.
    pub overflow_guard: f64,
    /// Renormalize the state to unit norm at every event.
    pub normalize: bool,
    pub max_step: Option<f64>,
    /// Extra samples on a uniform grid, taken from the continuous output.
    pub sample_dt: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            event_tol: 1e-9,
            max_events: 1_000_000,
            overflow_guard: 1e12,
            normalize: false,
            max_step: None,
            sample_dt: None,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.rtol, "rtol")?;
        positive(self.atol, "atol")?;
        positive(self.event_tol, "event_tol")?;
        positive(self.overflow_guard, "overflow_guard")?;
        if let Some(h) = self.max_step {
            positive(h, "max_step")?;
        }
        if let Some(dt) = self.sample_dt {
            positive(dt, "sample_dt")?;
        }
        Ok(())
    }
}

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub t1: f64,
    pub y1: Vector,
    r1: Vector,
    r2: Vector,
    r3: Vector,
    r4: Vector,
    r5: Vector,
}

impl DenseStep {
    /// State at `t ∈ [t0, t1]`.
    pub fn eval(&self, t: f64) -> Vector {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.r1.clone();
        }
        let theta = ((t - self.t0) / h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        &self.r1 + (&self.r2 + (&self.r3 + (&self.r4 + &self.r5 * theta1) * theta) * theta1) * theta
    }
}

/// Adaptive stepper for ẏ = f(y).
pub struct Dopri5<F: Fn(&Vector) -> Vector> {
    f: F,
    rtol: f64,
    atol: f64,
    max_step: f64,
    t: f64,
    y: Vector,
    k1: Vector,
    h: f64,
}

impl<F: Fn(&Vector) -> Vector> Dopri5<F> {
    pub fn new(f: F, t0: f64, y0: Vector, cfg: &IntegratorConfig) -> Self {
        let k1 = f(&y0);
        let mut s = Self {
            f,
            rtol: cfg.rtol,
            atol: cfg.atol,
            max_step: cfg.max_step.unwrap_or(f64::INFINITY),
            t: t0,
            y: y0,
            k1,
            h: 0.0,
        };
        s.h = s.initial_step();
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn rms(&self, v: &Vector, reference: &Vector) -> f64 {
        let n = v.len().max(1) as f64;
        let s: f64 = v
            .iter()
            .zip(reference.iter())
            .map(|(vi, ri)| {
                let q = vi / self.scale(*ri, *ri);
                q * q
            })
            .sum();
        (s / n).sqrt()
    }

    // Hairer & Wanner's starting step heuristic.
    fn initial_step(&self) -> f64 {
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k1, &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.max_step);
        let y1 = &self.y + &self.k1 * h0;
        let k2 = (self.f)(&y1);
        let d2 = self.rms(&(&k2 - &self.k1), &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Advance by one accepted step without passing `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep> {
        let mut rejects = 0;
        loop {
            let remaining = t_end - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if !(h > 0.0) || self.t + h == self.t {
                return Err(Error::Integrator {
                    t: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }

            let y = &self.y;
            let k1 = &self.k1;
            let f = &self.f;
            let k2 = f(&(y + k1 * (h * A21)));
            let k3 = f(&(y + (k1 * A31 + &k2 * A32) * h));
            let k4 = f(&(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h));
            let k5 = f(&(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
            let k6 = f(&(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
            let y1 = y + (k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
            let k7 = f(&y1);

            let err_vec = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
            let n = y.len().max(1) as f64;
            let err = (err_vec
                .iter()
                .zip(y.iter().zip(y1.iter()))
                .map(|(e, (a, b))| {
                    let q = e / self.scale(*a, *b);
                    q * q
                })
                .sum::<f64>()
                / n)
                .sqrt();

            if !err.is_finite() || !y1.iter().all(|v| v.is_finite()) {
                rejects += 1;
                if rejects > MAX_REJECTS {
                    return Err(Error::Integrator {
                        t: self.t,
                        reason: "non-finite state".into(),
                    });
                }
                self.h = h * MIN_FACTOR;
                continue;
            }

            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };

            if err <= 1.0 {
                let ydiff = &y1 - y;
                let bspl = k1 * h - &ydiff;
                let r4 = &ydiff - &k7 * h - &bspl;
                let r5 = (k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
                let dense = DenseStep {
                    t0: self.t,
                    t1: if last { t_end } else { self.t + h },
                    y1: y1.clone(),
                    r1: y.clone(),
                    r2: ydiff,
                    r3: bspl,
                    r4,
                    r5,
                };
                self.t = dense.t1;
                self.y = y1;
                self.k1 = k7;
                // keep the controller's step when the last one was clipped
                let next = if rejects > 0 { h.min(h * factor) } else { h * factor };
                if !last || next < self.h {
                    self.h = next;
                }
                self.h = self.h.min(self.max_step);
                return Ok(dense);
            }

            rejects += 1;
            if rejects > MAX_REJECTS {
                return Err(Error::Integrator {
                    t: self.t,
                    reason: "too many rejected steps".into(),
                });
            }
            self.h = h * factor.min(1.0);
        }
    }
}

/// Integrate to `t_end` and return the final state.
pub fn integrate<F: Fn(&Vector) -> Vector>(f: F, y0: Vector, t0: f64, t_end: f64, cfg: &IntegratorConfig) -> Result<Vector> {
    let mut solver = Dopri5::new(f, t0, y0, cfg);
    let mut steps = 0;
    while solver.t() < t_end {
        solver.step(t_end)?;
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Integrator {
                t: solver.t(),
                reason: "step budget exhausted".into(),
            });
        }
    }
    Ok(solver.y().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, Matrix};
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let cfg = IntegratorConfig::default();
        let y = integrate(|y| -y, Vector::from_element(1, 1.0), 0.0, 3.0, &cfg).unwrap();
        assert_relative_eq!(y[0], (-3.0f64).exp(), max_relative = 1e-7);
    }

    #[test]
    fn linear_system_matches_expm() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -3.21, -0.5]);
        let x0 = Vector::from_vec(vec![1.0, 1.0]);
        let cfg = IntegratorConfig::default();
        let y = integrate(|y| &a * y, x0.clone(), 0.0, 7.5, &cfg).unwrap();
        let exact = expm(&a, 7.5).unwrap() * x0;
        assert!((y - exact).amax() < 1e-7);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        let cfg = IntegratorConfig::default();
        let mut s = Dopri5::new(|y| &a * y, 0.0, x0.clone(), &cfg);
        let mut worst: f64 = 0.0;
        while s.t() < 10.0 {
            let step = s.step(10.0).unwrap();
            for k in 1..10 {
                let t = step.t0 + (step.t1 - step.t0) * k as f64 / 10.0;
                let exact = Vector::from_vec(vec![t.cos(), -t.sin()]);
                worst = worst.max((step.eval(t) - exact).amax());
            }
        }
        assert!(worst < 1e-7, "dense error {worst}");
    }

    #[test]
    fn respects_max_step() {
        let cfg = IntegratorConfig {
            max_step: Some(0.01),
            ..Default::default()
        };
        let mut s = Dopri5::new(|y: &Vector| y * 0.0, 0.0, Vector::from_element(1, 1.0), &cfg);
        while s.t() < 1.0 {
            let step = s.step(1.0).unwrap();
            assert!(step.t1 - step.t0 <= 0.01 + 1e-15);
        }
    }
}
