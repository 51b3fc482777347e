//! Primal-dual interior-point solver for small dense linear matrix inequalities.
//!
//! Problems are posed in inequality form
//!
//! ```text
//! maximize  bᵀy   subject to   Z = C - 𝒜(y) ⪰ 0,
//! ```
//!
//! where `𝒜(y) = Σ_j y_j A_j` maps into block-diagonal symmetric matrices. The
//! conic dual is `minimize ⟨C, X⟩ s.t. 𝒜*(X) = b, X ⪰ 0`. Iterates follow the
//! HKM search direction with Mehrotra predictor-corrector steps from an
//! infeasible start.

use crate::linalg::{cholesky_lower, symmetrize, Matrix, Vector};

/// A linear map `y ↦ 𝒜(y)` into block-diagonal symmetric matrices.
pub trait LmiMap {
    fn num_vars(&self) -> usize;

    fn block_sizes(&self) -> Vec<usize>;

    /// `Σ_j y_j A_j`, one matrix per block.
    fn apply(&self, y: &Vector) -> Vec<Matrix>;

    /// `(⟨A_j, W⟩)_j` for symmetric `W`.
    fn adjoint(&self, w: &[Matrix]) -> Vector;
}

/// Explicit list of constraint matrices; `a[j][block]`.
#[derive(Debug, Clone)]
pub struct DenseLmiMap {
    pub block_sizes: Vec<usize>,
    pub a: Vec<Vec<Matrix>>,
}

impl LmiMap for DenseLmiMap {
    fn num_vars(&self) -> usize {
        self.a.len()
    }

    fn block_sizes(&self) -> Vec<usize> {
        self.block_sizes.clone()
    }

    fn apply(&self, y: &Vector) -> Vec<Matrix> {
        let mut out = zeros_like(&self.block_sizes);
        for (yj, aj) in y.iter().zip(&self.a) {
            for (o, blk) in out.iter_mut().zip(aj) {
                *o += blk * *yj;
            }
        }
        out
    }

    fn adjoint(&self, w: &[Matrix]) -> Vector {
        Vector::from_iterator(self.a.len(), self.a.iter().map(|aj| inner(aj, w)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdpSettings {
    /// Relative tolerance on primal/dual residuals and the duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: Vector,
    /// `C - 𝒜(y)` per block.
    pub slack: Vec<Matrix>,
    /// Dual multiplier `X` per block.
    pub multiplier: Vec<Matrix>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

fn zeros_like(sizes: &[usize]) -> Vec<Matrix> {
    sizes.iter().map(|&s| Matrix::zeros(s, s)).collect()
}

fn inner(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm(a: &[Matrix]) -> f64 {
    inner(a, a).sqrt()
}

fn inverse_spd(m: &Matrix) -> Option<Matrix> {
    symmetrize(m).cholesky().map(|c| c.inverse())
}

/// Largest `α` with `x + α dx ⪰ 0`, assuming `x ≻ 0`.
fn max_step(x: &[Matrix], dx: &[Matrix]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let l = cholesky_lower(xb).ok()?;
        let linv = l.clone().try_inverse()?;
        let s = symmetrize(&(&linv * db * linv.transpose()));
        let lmin = s.symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

struct Direction {
    dy: Vector,
    dx: Vec<Matrix>,
    dz: Vec<Matrix>,
}

pub fn solve(map: &dyn LmiMap, c: &[Matrix], b: &Vector, settings: &SdpSettings) -> SdpSolution {
    let sizes = map.block_sizes();
    let m = map.num_vars();
    let total: usize = sizes.iter().sum();
    let scale = 10.0_f64.max((total as f64).sqrt());

    let mut y = Vector::zeros(m);
    let mut x: Vec<Matrix> = sizes.iter().map(|&s| Matrix::identity(s, s) * scale).collect();
    let mut z = x.clone();
    let b_norm = b.norm();
    let c_norm = norm(c);

    let finish = |y: Vector, x: Vec<Matrix>, iterations: usize, status: SdpStatus| {
        let ay = map.apply(&y);
        let slack: Vec<Matrix> = c.iter().zip(&ay).map(|(ci, ai)| ci - ai).collect();
        SdpSolution {
            objective: b.dot(&y),
            dual_objective: inner(c, &x),
            y,
            slack,
            multiplier: x,
            iterations,
            status,
        }
    };

    for iter in 0..settings.max_iter {
        let ay = map.apply(&y);
        let rp = b - map.adjoint(&x);
        let rd: Vec<Matrix> = c
            .iter()
            .zip(&z)
            .zip(&ay)
            .map(|((ci, zi), ai)| ci - zi - ai)
            .collect();
        let mu = inner(&x, &z) / total as f64;
        let pobj = inner(c, &x);
        let dobj = b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let p_inf = rp.norm() / (1.0 + b_norm);
        let d_inf = norm(&rd) / (1.0 + c_norm);
        if p_inf <= settings.tol && d_inf <= settings.tol && gap <= settings.tol {
            return finish(y, x, iter, SdpStatus::Optimal);
        }

        let Some(z_inv) = z.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
            return finish(y, x, iter, SdpStatus::NumericalFailure);
        };

        // Schur complement H_ij = ⟨A_i, X A_j Z⁻¹⟩
        let mut h = Matrix::zeros(m, m);
        let mut unit = Vector::zeros(m);
        for j in 0..m {
            unit[j] = 1.0;
            let aj = map.apply(&unit);
            unit[j] = 0.0;
            let g: Vec<Matrix> = aj
                .iter()
                .zip(&x)
                .zip(&z_inv)
                .map(|((a, xb), zi)| symmetrize(&(xb * a * zi)))
                .collect();
            h.set_column(j, &map.adjoint(&g));
        }
        let h = symmetrize(&h);
        let h_factor = h.clone().cholesky();
        let h_lu = if h_factor.is_none() { Some(h.clone().lu()) } else { None };
        let solve_h = |rhs: &Vector| -> Option<Vector> {
            match &h_factor {
                Some(ch) => Some(ch.solve(rhs)),
                None => h_lu.as_ref().and_then(|lu| lu.solve(rhs)),
            }
        };

        // Newton direction for the complementarity target `r` (block-wise XZ residual).
        let direction = |r: &[Matrix]| -> Option<Direction> {
            let w: Vec<Matrix> = r
                .iter()
                .zip(&x)
                .zip(&rd)
                .zip(&z_inv)
                .map(|(((ri, xb), rdi), zi)| symmetrize(&((ri - xb * rdi) * zi)))
                .collect();
            let rhs = &rp - map.adjoint(&w);
            let dy = solve_h(&rhs)?;
            let ady = map.apply(&dy);
            let dz: Vec<Matrix> = rd.iter().zip(&ady).map(|(rdi, a)| rdi - a).collect();
            let dx: Vec<Matrix> = r
                .iter()
                .zip(&x)
                .zip(&dz)
                .zip(&z_inv)
                .map(|(((ri, xb), dzi), zi)| symmetrize(&((ri - xb * dzi) * zi)))
                .collect();
            Some(Direction { dy, dx, dz })
        };

        let xz: Vec<Matrix> = x.iter().zip(&z).map(|(xb, zb)| xb * zb).collect();
        let r_aff: Vec<Matrix> = xz.iter().map(|p| -p).collect();
        let Some(aff) = direction(&r_aff) else {
            return finish(y, x, iter, SdpStatus::NumericalFailure);
        };
        let (Some(ap), Some(ad)) = (max_step(&x, &aff.dx), max_step(&z, &aff.dz)) else {
            return finish(y, x, iter, SdpStatus::NumericalFailure);
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let x_aff: Vec<Matrix> = x.iter().zip(&aff.dx).map(|(a, d)| a + d * ap).collect();
        let z_aff: Vec<Matrix> = z.iter().zip(&aff.dz).map(|(a, d)| a + d * ad).collect();
        let mu_aff = inner(&x_aff, &z_aff) / total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let r_cor: Vec<Matrix> = xz
            .iter()
            .zip(&aff.dx)
            .zip(&aff.dz)
            .map(|((p, dxa), dza)| {
                let n = p.nrows();
                Matrix::identity(n, n) * (sigma * mu) - p - dxa * dza
            })
            .collect();
        let Some(dir) = direction(&r_cor) else {
            return finish(y, x, iter, SdpStatus::NumericalFailure);
        };
        let (Some(ap), Some(ad)) = (max_step(&x, &dir.dx), max_step(&z, &dir.dz)) else {
            return finish(y, x, iter, SdpStatus::NumericalFailure);
        };
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);

        for (xb, d) in x.iter_mut().zip(&dir.dx) {
            *xb += d * ap;
        }
        for (zb, d) in z.iter_mut().zip(&dir.dz) {
            *zb += d * ad;
        }
        y += &dir.dy * ad;
    }
    finish(y, x, settings.max_iter, SdpStatus::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimum_eigenvalue_as_sdp() {
        // maximize y s.t. S - y I ⪰ 0 has optimum λ_min(S)
        let s = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let map = DenseLmiMap {
            block_sizes: vec![3],
            a: vec![vec![Matrix::identity(3, 3)]],
        };
        let sol = solve(&map, std::slice::from_ref(&s), &Vector::from_vec(vec![1.0]), &SdpSettings::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        let lmin = s.symmetric_eigenvalues().min();
        assert_relative_eq!(sol.y[0], lmin, epsilon = 1e-7);
    }

    #[test]
    fn two_variable_lmi_with_linear_block() {
        // maximize y1 + y2 s.t. [[1 - y1, y2/2], [y2/2, 1]] ⪰ 0, y1 + y2 <= 1.2, y1 >= 0;
        // compared against a grid search.
        let map = DenseLmiMap {
            block_sizes: vec![2, 1, 1],
            a: vec![
                vec![
                    Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                    Matrix::from_element(1, 1, 1.0),
                    Matrix::from_element(1, 1, -1.0),
                ],
                vec![
                    Matrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 0.0]),
                    Matrix::from_element(1, 1, 1.0),
                    Matrix::zeros(1, 1),
                ],
            ],
        };
        let c = vec![
            Matrix::identity(2, 2),
            Matrix::from_element(1, 1, 1.2),
            Matrix::zeros(1, 1),
        ];
        let b = Vector::from_vec(vec![1.0, 1.0]);
        let sol = solve(&map, &c, &b, &SdpSettings::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.objective, sol.dual_objective, epsilon = 1e-7);
        for blk in &sol.slack {
            assert!(blk.symmetric_eigenvalues().min() > -1e-8);
        }
        // brute force over a grid of the 2-D feasible set
        let mut best = f64::NEG_INFINITY;
        for i in 0..=1200 {
            let y1 = i as f64 * 0.001;
            for k in 0..=2400 {
                let y2 = -1.2 + k as f64 * 0.001;
                if y1 + y2 > 1.2 + 1e-12 {
                    continue;
                }
                // PSD of [[1-y1, y2/2],[y2/2, 1]]
                if 1.0 - y1 >= 0.0 && (1.0 - y1) - y2 * y2 / 4.0 >= -1e-12 {
                    best = best.max(y1 + y2);
                }
            }
        }
        assert!((sol.objective - best).abs() < 5e-3, "{} vs grid {}", sol.objective, best);
    }
}
