//! Common quadratic Lyapunov certificates for lifted modes and the
//! lower-bound sweep on the stability margin.
//!
//! A certificate at level `i` is a symmetric `P ⪰ I` on the reduced symmetric
//! space with `MᵀP + PM ⪯ -margin·I` for both lifted endpoint modes
//! `M ∈ {𝒜, 𝒜 + δ𝒜₀}`. Because the constraint is affine in `δ`, it then
//! holds for every `Δ ∈ [0, δ]`, and `V(x) = ξᵀPξ` with `ξ = lift(x)` is a
//! homogeneous polynomial Lyapunov function of degree `2i` for every
//! switching signal with values in `[0, δ]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{build_level_with_cap, HierarchyLevel, SwitchedLinearSystem, DEFAULT_DIM_CAP};
use crate::linalg::{
    self, cholesky_lower, ensure_square, max_symmetric_eigenvalue, min_symmetric_eigenvalue,
    symmetrize, Matrix, Vector,
};
use crate::sdp::{self, LmiMap, SdpSettings, SdpStatus};

/// Structured LMI map for the certificate search.
///
/// Variables are the upper triangle of `P` followed by a scalar `t`; the
/// blocks encode `P - tI ⪰ 0`, `-(MₖᵀP + PMₖ) - tI ⪰ 0` for every mode and
/// `dim - tr P ≥ 0`. Maximizing `t` gives the best-conditioned `P` with the
/// largest common decay margin under a trace normalization.
struct LyapunovLmi<'a> {
    modes: &'a [Matrix],
    dim: usize,
}

impl LyapunovLmi<'_> {
    fn num_p_vars(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn unpack(&self, y: &Vector) -> (Matrix, f64) {
        let d = self.dim;
        let mut p = Matrix::zeros(d, d);
        let mut idx = 0;
        for a in 0..d {
            for b in a..d {
                p[(a, b)] = y[idx];
                p[(b, a)] = y[idx];
                idx += 1;
            }
        }
        (p, y[idx])
    }
}

impl LmiMap for LyapunovLmi<'_> {
    fn num_vars(&self) -> usize {
        self.num_p_vars() + 1
    }

    fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.dim; self.modes.len() + 1];
        sizes.push(1);
        sizes
    }

    fn apply(&self, y: &Vector) -> Vec<Matrix> {
        let d = self.dim;
        let (p, t) = self.unpack(y);
        let ident = Matrix::identity(d, d);
        let mut blocks = Vec::with_capacity(self.modes.len() + 2);
        blocks.push(&ident * t - &p);
        for m in self.modes {
            blocks.push(m.transpose() * &p + &p * m + &ident * t);
        }
        blocks.push(Matrix::from_element(1, 1, p.trace()));
        blocks
    }

    fn adjoint(&self, w: &[Matrix]) -> Vector {
        let d = self.dim;
        let k = self.modes.len();
        let mut g = -&w[0];
        for (m, wk) in self.modes.iter().zip(&w[1..=k]) {
            g += m * wk + wk * m.transpose();
        }
        let w_trace = w[k + 1][(0, 0)];
        for a in 0..d {
            g[(a, a)] += w_trace;
        }
        let mut out = Vector::zeros(self.num_vars());
        let mut idx = 0;
        for a in 0..d {
            for b in a..d {
                out[idx] = if a == b { g[(a, a)] } else { g[(a, b)] + g[(b, a)] };
                idx += 1;
            }
        }
        out[idx] = w[..=k].iter().map(|blk| blk.trace()).sum();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSettings {
    pub sdp: SdpSettings,
    /// Required margin relative to the largest mode norm.
    pub margin_rel: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            sdp: SdpSettings::default(),
            margin_rel: 1e-6,
        }
    }
}

/// A symmetric `P ⪰ I` with `MᵀP + PM ⪯ -margin·I` for every supplied mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonLyapunov {
    pub p: Matrix,
    /// Margin required of the certificate.
    pub margin: f64,
    /// Smallest `-λ_max(MᵀP + PM)` over the modes.
    pub achieved_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Infeasibility {
    /// The solver converged but the best point does not meet the margin.
    NoCertificate { achieved_margin: f64 },
    /// The solver stopped early and its iterate does not verify.
    SolverFailure { status: SdpStatus },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovSearch {
    Feasible(CommonLyapunov),
    Infeasible(Infeasibility),
}

impl LyapunovSearch {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LyapunovSearch::Feasible(_))
    }

    pub fn certificate(self) -> Option<CommonLyapunov> {
        match self {
            LyapunovSearch::Feasible(c) => Some(c),
            LyapunovSearch::Infeasible(_) => None,
        }
    }
}

fn lyapunov_form(m: &Matrix, p: &Matrix) -> Matrix {
    m.transpose() * p + p * m
}

fn decay_margin(modes: &[Matrix], p: &Matrix) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for m in modes {
        worst = worst.min(-max_symmetric_eigenvalue(&lyapunov_form(m, p))?);
    }
    Ok(worst)
}

/// Searches for a common quadratic Lyapunov function of `modes`.
///
/// An `Infeasible` answer only means this relaxation failed; it says nothing
/// about instability of the switched system.
pub fn find_common_lyapunov(
    modes: &[Matrix],
    dim: usize,
    settings: &LyapunovSettings,
) -> Result<LyapunovSearch> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no modes supplied".into()));
    }
    for m in modes {
        if ensure_square(m)? != dim {
            return Err(Error::DimensionMismatch(format!(
                "mode is {}x{} but dim is {dim}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let scale = modes.iter().map(|m| m.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(LyapunovSearch::Infeasible(Infeasibility::NoCertificate {
            achieved_margin: 0.0,
        }));
    }
    let required = settings.margin_rel * scale;

    // Every convex combination of the modes must be Hurwitz for a common
    // certificate to exist; the average doubles as the preconditioner.
    let average = modes.iter().fold(Matrix::zeros(dim, dim), |acc, m| acc + m) / modes.len() as f64;
    if !linalg::is_hurwitz(&average, 0.0)? {
        return Ok(LyapunovSearch::Infeasible(Infeasibility::NoCertificate {
            achieved_margin: f64::NEG_INFINITY,
        }));
    }
    // With P₀ = LLᵀ solving AvgᵀP₀ + P₀Avg = -I, the congruence
    // M ↦ LᵀML⁻ᵀ makes the average mode dissipative and P = L P' Lᵀ.
    let p0 = linalg::solve_lyapunov(&average, &Matrix::identity(dim, dim))?;
    let l = cholesky_lower(&p0)?;
    let l_inv_t = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?.transpose();
    let transformed: Vec<Matrix> = modes.iter().map(|m| l.transpose() * m * &l_inv_t).collect();
    let t_scale = transformed.iter().map(|m| m.norm()).fold(0.0, f64::max);

    // P is invariant under positive scaling of the modes
    let normalized: Vec<Matrix> = transformed.iter().map(|m| m / t_scale).collect();
    let map = LyapunovLmi {
        modes: &normalized,
        dim,
    };
    let mut c: Vec<Matrix> = map.block_sizes().iter().map(|&s| Matrix::zeros(s, s)).collect();
    c.last_mut().unwrap()[(0, 0)] = dim as f64;
    let mut b = Vector::zeros(map.num_vars());
    b[map.num_p_vars()] = 1.0;
    let solution = sdp::solve(&map, &c, &b, &settings.sdp);
    let (p_prime, _t) = map.unpack(&solution.y);
    let p_raw = symmetrize(&(&l * symmetrize(&p_prime) * l.transpose()));

    let failure = |achieved: f64| {
        if solution.status == SdpStatus::Optimal {
            Infeasibility::NoCertificate {
                achieved_margin: achieved,
            }
        } else {
            Infeasibility::SolverFailure {
                status: solution.status,
            }
        }
    };

    let lmin = min_symmetric_eigenvalue(&p_raw)?;
    if !(lmin > 0.0) || !lmin.is_finite() {
        return Ok(LyapunovSearch::Infeasible(failure(f64::NEG_INFINITY)));
    }
    let p = symmetrize(&(p_raw / lmin));
    let achieved = decay_margin(modes, &p)?;
    if achieved >= required {
        Ok(LyapunovSearch::Feasible(CommonLyapunov {
            p,
            margin: required,
            achieved_margin: achieved,
        }))
    } else {
        Ok(LyapunovSearch::Infeasible(failure(achieved)))
    }
}

/// Outcome of the one-dimensional search over `δ` with `P` held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FixedPBound {
    /// Largest admissible `δ`.
    Bounded(f64),
    /// Every `δ ≥ 0` is admissible.
    Unbounded,
    /// `P` does not certify the floor value; the floor is returned unchanged.
    NotCertified { floor: f64 },
}

/// Largest `δ ≥ floor` with `N₀ + δN₁ ⪯ -shift·I`.
///
/// With `-N₀ - shift·I = LLᵀ` this is `1/λ_max(L⁻¹N₁L⁻ᵀ)`, a generalized
/// eigenvalue of the pencil.
pub fn max_delta_for_pencil(n0: &Matrix, n1: &Matrix, floor: f64, shift: f64) -> Result<FixedPBound> {
    let d = ensure_square(n0)?;
    if n1.shape() != n0.shape() {
        return Err(Error::DimensionMismatch("pencil matrices differ in shape".into()));
    }
    let neg = -symmetrize(n0) - Matrix::identity(d, d) * shift;
    let Ok(l) = cholesky_lower(&neg) else {
        return Ok(FixedPBound::NotCertified { floor });
    };
    let linv = l
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?;
    let s = symmetrize(&(&linv * symmetrize(n1) * linv.transpose()));
    let lmax = max_symmetric_eigenvalue(&s)?;
    let scale = s.norm().max(f64::MIN_POSITIVE);
    if lmax <= 1e-14 * scale {
        return Ok(FixedPBound::Unbounded);
    }
    let delta = 1.0 / lmax;
    if delta < floor * (1.0 - 1e-12) {
        return Ok(FixedPBound::NotCertified { floor });
    }
    Ok(FixedPBound::Bounded(delta.max(floor)))
}

fn ensure_positive_definite(p: &Matrix) -> Result<()> {
    if (p - p.transpose()).norm() > 1e-9 * p.norm().max(1.0) {
        return Err(Error::InvalidArgument("P is not symmetric".into()));
    }
    cholesky_lower(p).map(|_| ())
}

/// Largest `δ* ≥ floor` with `(𝒜 + δ*𝒜₀)ᵀP + P(𝒜 + δ*𝒜₀) ⪯ 0` for fixed `P`.
pub fn max_delta_fixed_p(level: &HierarchyLevel, p: &Matrix, floor: f64) -> Result<FixedPBound> {
    max_delta_fixed_p_with_margin(level, p, floor, 0.0)
}

/// As [`max_delta_fixed_p`] with the right-hand side tightened to `-margin·I`.
pub fn max_delta_fixed_p_with_margin(
    level: &HierarchyLevel,
    p: &Matrix,
    floor: f64,
    margin: f64,
) -> Result<FixedPBound> {
    ensure_positive_definite(p)?;
    if p.nrows() != level.dim() {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{} but level {} has dimension {}",
            p.nrows(),
            p.ncols(),
            level.level,
            level.dim()
        )));
    }
    let n0 = lyapunov_form(&level.cal_a, p);
    let n1 = lyapunov_form(&level.cal_a0, p);
    max_delta_for_pencil(&n0, &n1, floor, margin)
}

/// Certificate that the system is stable for every `Δ(t) ∈ [0, delta_certified]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub level: usize,
    /// Symmetric, `P ⪰ I`, on the reduced space of `level`.
    #[serde(with = "crate::serde_util::matrix")]
    pub p: Matrix,
    pub delta_certified: f64,
    pub feasibility_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub min_p_eigenvalue: f64,
    /// `λ_max(MᵀP + PM)` at `Δ = 0`.
    pub nominal_max_eigenvalue: f64,
    /// `λ_max(MᵀP + PM)` at `Δ = delta_certified`.
    pub perturbed_max_eigenvalue: f64,
}

impl CertificateCheck {
    pub fn holds(&self, margin: f64) -> bool {
        self.min_p_eigenvalue >= 1.0 - 1e-8
            && self.nominal_max_eigenvalue <= -margin / 2.0
            && self.perturbed_max_eigenvalue <= -margin / 2.0
    }
}

impl LyapunovCertificate {
    /// Re-evaluates both endpoint inequalities by direct eigenvalue computation.
    pub fn check(&self, level: &HierarchyLevel) -> Result<CertificateCheck> {
        self.check_at(level, self.delta_certified)
    }

    /// The endpoint inequalities with `delta` in place of `delta_certified`.
    pub fn check_at(&self, level: &HierarchyLevel, delta: f64) -> Result<CertificateCheck> {
        if level.level != self.level || level.dim() != self.p.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "certificate is for level {} but level {} was supplied",
                self.level, level.level
            )));
        }
        Ok(CertificateCheck {
            min_p_eigenvalue: min_symmetric_eigenvalue(&self.p)?,
            nominal_max_eigenvalue: max_symmetric_eigenvalue(&lyapunov_form(&level.cal_a, &self.p))?,
            perturbed_max_eigenvalue: max_symmetric_eigenvalue(&lyapunov_form(
                &level.mode(delta),
                &self.p,
            ))?,
        })
    }

    pub fn verify(&self, level: &HierarchyLevel) -> Result<bool> {
        Ok(self.check(level)?.holds(self.feasibility_margin))
    }

    /// `V(x) = lift(x)ᵀ P lift(x)`.
    pub fn value(&self, level: &HierarchyLevel, x: &Vector) -> f64 {
        level.lyapunov_value(x, &self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    /// Step added to `δ` before each certification attempt. `None` picks
    /// `0.01 ×` the fixed-`P` bound of the level-1 nominal certificate.
    pub epsilon: Option<f64>,
    pub i_max: usize,
    pub lyapunov: LyapunovSettings,
    pub definiteness_tol: f64,
    /// Sweep stops once `δ` reaches this value.
    pub delta_max: f64,
    pub dim_cap: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            i_max: 7,
            lyapunov: LyapunovSettings::default(),
            definiteness_tol: linalg::DEFAULT_DEFINITENESS_TOL,
            delta_max: 1e6,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelOutcome {
    Feasible,
    Infeasible(Infeasibility),
    DimensionCap { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub level: usize,
    pub delta_attempted: f64,
    pub outcome: LevelOutcome,
    /// Result of the fixed-`P` step after a successful certification.
    pub delta_p: Option<FixedPBound>,
    /// Whether the fixed-`P` step returned at least `delta_attempted`.
    pub improved: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub delta_lower: f64,
    pub certificate: LyapunovCertificate,
    pub epsilon: f64,
    /// The sweep stopped at `delta_max` rather than at a failed certification.
    pub hit_delta_cap: bool,
    pub trace: Vec<TraceEntry>,
}

fn nominal_certificate(sys: &SwitchedLinearSystem) -> Result<LyapunovCertificate> {
    // A Hurwitz: AᵀP + PA = -I has a positive definite solution
    let p = linalg::solve_lyapunov(sys.a(), &Matrix::identity(sys.n(), sys.n()))?;
    let lmin = min_symmetric_eigenvalue(&p)?;
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    let p = symmetrize(&(p / lmin));
    let margin = -max_symmetric_eigenvalue(&lyapunov_form(sys.a(), &p))?;
    Ok(LyapunovCertificate {
        level: 1,
        p,
        delta_certified: 0.0,
        feasibility_margin: margin,
    })
}

struct LevelCache<'a> {
    sys: &'a SwitchedLinearSystem,
    cap: usize,
    levels: Vec<Option<std::result::Result<HierarchyLevel, usize>>>,
}

impl<'a> LevelCache<'a> {
    fn new(sys: &'a SwitchedLinearSystem, i_max: usize, cap: usize) -> Self {
        Self {
            sys,
            cap,
            levels: vec![None; i_max + 1],
        }
    }

    /// `Err(dim)` when the level exceeds the dimension cap.
    fn get(&mut self, i: usize) -> Result<std::result::Result<&HierarchyLevel, usize>> {
        if self.levels[i].is_none() {
            let built = match build_level_with_cap(self.sys, i, self.cap) {
                Ok(level) => Ok(level),
                Err(Error::DimensionCap { dim, .. }) => Err(dim),
                Err(e) => return Err(e),
            };
            self.levels[i] = Some(built);
        }
        Ok(self.levels[i].as_ref().unwrap().as_ref().map_err(|&dim| dim))
    }
}

/// Sweeps `δ` upward, certifying each candidate with the lowest hierarchy
/// level that admits a common quadratic Lyapunov function and leaping ahead
/// with the fixed-`P` bound after every success.
pub fn under_approximate_margin(
    sys: &SwitchedLinearSystem,
    cfg: &AlgorithmConfig,
) -> Result<LowerBoundReport> {
    if cfg.i_max == 0 {
        return Err(Error::InvalidArgument("i_max must be >= 1".into()));
    }
    if let Some(eps) = cfg.epsilon {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
    }
    let spectrum = linalg::eigenvalues(sys.a())?;
    if spectrum.max_real_part() >= -linalg::DEFAULT_HURWITZ_TOL {
        return Err(Error::NotHurwitz {
            max_real_part: spectrum.max_real_part(),
        });
    }

    let mut cache = LevelCache::new(sys, cfg.i_max, cfg.dim_cap);
    let mut certificate = nominal_certificate(sys)?;
    let epsilon = match cfg.epsilon {
        Some(eps) => eps,
        None => {
            let level1 = cache.get(1)?.expect("level 1 is never capped");
            match max_delta_fixed_p(level1, &certificate.p, 0.0)? {
                FixedPBound::Bounded(d) if d > 0.0 => 0.01 * d,
                _ => 0.01,
            }
        }
    };

    let mut delta = 0.0;
    let mut trace = Vec::new();
    let mut hit_delta_cap = false;
    loop {
        if delta >= cfg.delta_max {
            hit_delta_cap = true;
            break;
        }
        let candidate = delta + epsilon;
        let mut found = None;
        for i in 1..=cfg.i_max {
            let level = match cache.get(i)? {
                Ok(level) => level,
                Err(dim) => {
                    trace.push(TraceEntry {
                        level: i,
                        delta_attempted: candidate,
                        outcome: LevelOutcome::DimensionCap { dim },
                        delta_p: None,
                        improved: None,
                    });
                    continue;
                }
            };
            let modes = [level.cal_a.clone(), level.mode(candidate)];
            match find_common_lyapunov(&modes, level.dim(), &cfg.lyapunov)? {
                LyapunovSearch::Feasible(common) => {
                    found = Some((i, common));
                    break;
                }
                LyapunovSearch::Infeasible(why) => trace.push(TraceEntry {
                    level: i,
                    delta_attempted: candidate,
                    outcome: LevelOutcome::Infeasible(why),
                    delta_p: None,
                    improved: None,
                }),
            }
        }
        let Some((i, common)) = found else {
            break;
        };
        delta = candidate;
        certificate = LyapunovCertificate {
            level: i,
            p: common.p,
            delta_certified: candidate,
            feasibility_margin: common.margin,
        };

        let level = cache.get(i)?.expect("level was just used");
        // tighten slightly past margin/2 so the stored certificate re-verifies
        let bound = max_delta_fixed_p_with_margin(
            level,
            &certificate.p,
            candidate,
            0.6 * certificate.feasibility_margin,
        )?;
        let improved = match bound {
            FixedPBound::Bounded(d) => {
                delta = d.min(cfg.delta_max);
                true
            }
            FixedPBound::Unbounded => {
                delta = cfg.delta_max;
                true
            }
            FixedPBound::NotCertified { .. } => false,
        };
        certificate.delta_certified = delta;
        trace.push(TraceEntry {
            level: i,
            delta_attempted: candidate,
            outcome: LevelOutcome::Feasible,
            delta_p: Some(bound),
            improved: Some(improved),
        });
    }

    Ok(LowerBoundReport {
        delta_lower: delta,
        certificate,
        epsilon,
        hit_delta_cap,
        trace,
    })
}
