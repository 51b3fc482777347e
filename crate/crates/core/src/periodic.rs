//! Upper bounds from periodic worst-case switching.
//!
//! A stretch of a switching signal whose transition matrix
//! `A_d = e^{M_{k-1} τ_{k-1}} ⋯ e^{M_j τ_j}` has an eigenvalue on the unit
//! circle reproduces itself and witnesses a non-decaying trajectory.
//! [`upper_bound_margin`] sweeps δ upward from the certified lower bound
//! until such a stretch appears.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{build_level, SwitchedLinearSystem};
use crate::linalg::{self, Matrix, Spectrum, Vector};
use crate::lyapunov::LyapunovCertificate;
use crate::ode::IntegratorConfig;
use crate::switching::{find_switching_sequence, SwitchingSignal};

pub const DEFAULT_TOL_UNIT: f64 = 1e-3;
pub const DEFAULT_INCREMENT: f64 = 0.01;
/// The sweep gives up after this many increments above the lower bound.
pub const DEFAULT_SWEEP_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityWitness {
    pub j: usize,
    pub k: usize,
    #[serde(with = "crate::serde_util::matrix")]
    pub a_d: Matrix,
    pub spectrum: Spectrum,
    /// min over eigenvalues of `| |λ| - 1 |`.
    pub unit_eig_residual: f64,
}

impl PeriodicityWitness {
    fn new(j: usize, k: usize, a_d: Matrix) -> Result<Self> {
        let spectrum = linalg::eigenvalues(&a_d)?;
        let unit_eig_residual = spectrum.unit_circle_residual();
        Ok(Self {
            j,
            k,
            a_d,
            spectrum,
            unit_eig_residual,
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.spectral_radius()
    }
}

/// Ordered product of segment exponentials over segments `j..k`, the
/// earliest applied first.
pub fn transition_matrix(sys: &SwitchedLinearSystem, signal: &SwitchingSignal, j: usize, k: usize) -> Result<Matrix> {
    if j >= k || k >= signal.times().len() {
        return Err(Error::InvalidArgument(format!(
            "transition matrix needs j < k < {}, got j = {j}, k = {k}",
            signal.times().len()
        )));
    }
    let mut a_d = Matrix::identity(sys.n(), sys.n());
    for s in j..k {
        let dt = signal.times()[s + 1] - signal.times()[s];
        a_d = linalg::expm(&sys.mode(signal.values()[s]), dt)? * a_d;
    }
    Ok(a_d)
}

/// Unit-norm real eigenvector for the eigenvalue of `a_d` nearest the unit
/// circle. `None` when that eigenvalue is complex.
pub fn unit_eigenvector(a_d: &Matrix) -> Result<Option<Vector>> {
    let n = linalg::ensure_square(a_d)?;
    let spectrum = linalg::eigenvalues(a_d)?;
    let Some(lambda) = spectrum
        .complex()
        .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()))
    else {
        return Ok(None);
    };
    if lambda.im.abs() > 1e-9 * (1.0 + lambda.norm()) {
        return Ok(None);
    }
    let shifted = a_d - Matrix::identity(n, n) * lambda.re;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::EigenNonConvergence(n))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 1");
    let v: Vector = v_t.row(imin).transpose();
    Ok(Some(&v / v.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodicSearch {
    Found(PeriodicityWitness),
    NotFound {
        /// Some candidate window grows by more than the tolerance.
        diverging: bool,
        /// Largest spectral radius over all candidate windows (0 if none).
        max_spectral_radius: f64,
        /// Smallest unit-circle residual seen (infinite if no candidates).
        best_residual: f64,
    },
}

impl PeriodicSearch {
    pub fn witness(&self) -> Option<&PeriodicityWitness> {
        match self {
            PeriodicSearch::Found(w) => Some(w),
            PeriodicSearch::NotFound { .. } => None,
        }
    }
}

/// Scan windows `[t_j, t_k]` that open with the Δ = δ branch and close at
/// the same phase of the bang-bang cycle (`k - j` even), shortest first,
/// then earliest. The final segment ends at the horizon rather than at a
/// switch, so it is never part of a window.
pub fn find_periodic_segment(sys: &SwitchedLinearSystem, signal: &SwitchingSignal, tol_unit: f64) -> Result<PeriodicSearch> {
    // times[last] is the horizon; windows may end at most at times[last - 1]
    let last_knot = signal.times().len() - 2;
    let exps = signal
        .values()
        .iter()
        .zip(signal.durations())
        .take(last_knot)
        .map(|(&sigma, dt)| linalg::expm(&sys.mode(sigma), dt))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(usize, usize, Matrix, f64)> = None;
    let mut max_radius: f64 = 0.0;
    let mut best_residual = f64::INFINITY;
    for j in 0..last_knot {
        if signal.values()[j] == 0.0 {
            continue;
        }
        let mut a_d = Matrix::identity(sys.n(), sys.n());
        for k in (j + 1)..=last_knot {
            a_d = &exps[k - 1] * a_d;
            if (k - j) % 2 != 0 {
                continue;
            }
            if let Some((bj, bk, _, _)) = &best {
                // a later start needs a strictly shorter window to win
                if k - j >= bk - bj {
                    break;
                }
            }
            let spectrum = linalg::eigenvalues(&a_d)?;
            let residual = spectrum.unit_circle_residual();
            max_radius = max_radius.max(spectrum.spectral_radius());
            best_residual = best_residual.min(residual);
            if residual <= tol_unit {
                best = Some((j, k, a_d.clone(), residual));
                break;
            }
        }
    }

    match best {
        Some((j, k, a_d, _)) => Ok(PeriodicSearch::Found(PeriodicityWitness::new(j, k, a_d)?)),
        None => Ok(PeriodicSearch::NotFound {
            diverging: max_radius > 1.0 + tol_unit,
            max_spectral_radius: max_radius,
            best_residual,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A periodic window of the worst-case signal.
    Periodic(PeriodicityWitness),
    /// `A + δA₀` itself is not Hurwitz; `a_d = e^{(A+δA₀)t_f}`.
    TrivialHurwitzLoss(PeriodicityWitness),
}

impl Witness {
    pub fn inner(&self) -> &PeriodicityWitness {
        match self {
            Witness::Periodic(w) | Witness::TrivialHurwitzLoss(w) => w,
        }
    }
}

/// Outcome of one δ in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub delta: f64,
    pub switches: usize,
    pub diverged: bool,
    pub search: PeriodicSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub witness: Witness,
    /// The witnessing window, re-based to start at zero.
    pub periodic_signal: SwitchingSignal,
    /// Full worst-case signal at `delta_upper`.
    pub signal: SwitchingSignal,
    pub certificate: LyapunovCertificate,
    pub sweep: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpperBoundConfig {
    pub increment: f64,
    pub tol_unit: f64,
    pub max_steps: usize,
    pub integrator: IntegratorConfig,
}

impl Default for UpperBoundConfig {
    fn default() -> Self {
        Self {
            increment: DEFAULT_INCREMENT,
            tol_unit: DEFAULT_TOL_UNIT,
            max_steps: DEFAULT_SWEEP_STEPS,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Sweep δ = δ̲, δ̲ + h, δ̲ + 2h, … with the fixed certificate until the
/// worst-case signal contains a periodic window or `A + δA₀` stops being
/// Hurwitz.
pub fn upper_bound_margin(
    sys: &SwitchedLinearSystem,
    cert: &LyapunovCertificate,
    x0: &Vector,
    t_f: f64,
    cfg: &UpperBoundConfig,
) -> Result<MarginReport> {
    if !(cfg.increment > 0.0 && cfg.increment.is_finite()) {
        return Err(Error::InvalidArgument(format!("increment must be positive, got {}", cfg.increment)));
    }
    if !(cfg.tol_unit > 0.0) {
        return Err(Error::InvalidArgument(format!("tol_unit must be positive, got {}", cfg.tol_unit)));
    }
    let level = build_level(sys, cert.level)?;
    let delta_lower = cert.delta_certified;
    let mut sweep = Vec::new();

    for step in 0..=cfg.max_steps {
        let delta = delta_lower + step as f64 * cfg.increment;
        let mode = sys.mode(delta);
        if !linalg::is_hurwitz(&mode, linalg::DEFAULT_HURWITZ_TOL)? {
            let witness = PeriodicityWitness::new(0, 1, linalg::expm(&mode, t_f)?)?;
            let signal = SwitchingSignal::new(vec![0.0, t_f], vec![delta])?;
            return Ok(MarginReport {
                delta_lower,
                delta_upper: delta,
                witness: Witness::TrivialHurwitzLoss(witness),
                periodic_signal: signal.clone(),
                signal,
                certificate: cert.clone(),
                sweep,
            });
        }

        let (signal, trajectory) = find_switching_sequence(sys, &level, &cert.p, delta, x0, t_f, &cfg.integrator)?;
        let search = find_periodic_segment(sys, &signal, cfg.tol_unit)?;
        sweep.push(SweepEntry {
            delta,
            switches: signal.event_times().len(),
            diverged: trajectory.diverged,
            search: search.clone(),
        });
        if let PeriodicSearch::Found(w) = search {
            let periodic_signal = signal.window(w.j, w.k)?;
            return Ok(MarginReport {
                delta_lower,
                delta_upper: delta,
                witness: Witness::Periodic(w),
                periodic_signal,
                signal,
                certificate: cert.clone(),
                sweep,
            });
        }
    }
    Err(Error::SweepExhausted {
        last_delta: delta_lower + cfg.max_steps as f64 * cfg.increment,
    })
}
