//! Dense real linear-algebra kernels.
//!
//! Kronecker products, the matrix exponential and the spectral tests used by
//! every other module. Storage and factorizations come from `nalgebra`; the
//! Kronecker routines and the exponential are written out here.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default tolerance for definiteness tests.
pub const DEFAULT_DEFINITENESS_TOL: f64 = 1e-9;
/// Default tolerance for the Hurwitz test.
pub const DEFAULT_HURWITZ_TOL: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

pub fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * br, j * bc), (br, bc));
            block.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// `i`-th Kronecker power, `M ⊗ (⊗^{i-1} M)`.
pub fn kron_power(m: &Matrix, i: usize) -> Result<Matrix> {
    if i == 0 {
        return Err(Error::InvalidArgument(
            "Kronecker power requires i >= 1".into(),
        ));
    }
    let mut acc = m.clone();
    for _ in 1..i {
        acc = kron(m, &acc);
    }
    Ok(acc)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// `e^{m t}` by scaling and squaring with the degree-13 diagonal Padé approximant.
pub fn expm(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square(m)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("expm time {t} is not finite")));
    }
    ensure_finite(m, "expm argument")?;
    let a = m * t;
    let norm = one_norm(&a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);

    let b = &PADE13;
    let ident = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::ExpmOverflow)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().all(|x| x.is_finite()) {
        Ok(r)
    } else {
        Err(Error::ExpmOverflow)
    }
}

/// Eigenvalues of a real square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn complex(&self) -> impl Iterator<Item = Complex<f64>> + '_ {
        self.eigenvalues.iter().map(|&(re, im)| Complex::new(re, im))
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.complex().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest `| |λ| - 1 |` over the spectrum.
    pub fn unit_circle_residual(&self) -> f64 {
        self.complex()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Full nonsymmetric spectrum through a real Schur decomposition.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    let n = ensure_square(m)?;
    ensure_finite(m, "eigenvalue input")?;
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
        });
    }
    let schur = m
        .clone()
        .try_schur(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence(n))?;
    let eigenvalues = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    Ok(Spectrum { eigenvalues })
}

pub fn is_hurwitz(m: &Matrix, tol: f64) -> Result<bool> {
    Ok(eigenvalues(m)?.max_real_part() < -tol)
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let n = ensure_square(m)?;
    let s = symmetrize(m);
    let eig = s
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::EigenNonConvergence(n))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

pub fn max_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(*symmetric_eigenvalues(m)?
        .last()
        .unwrap_or(&f64::NEG_INFINITY))
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(*symmetric_eigenvalues(m)?.first().unwrap_or(&f64::INFINITY))
}

/// `λ_max((m + mᵀ)/2) <= tol`.
pub fn is_negative_semidefinite(m: &Matrix, tol: f64) -> bool {
    match max_symmetric_eigenvalue(m) {
        Ok(v) => v <= tol,
        Err(_) => false,
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &Matrix) -> Result<Matrix> {
    symmetrize(m)
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// Solves `Aᵀ P + P A = -Q` for P by vectorization. Intended for small `n`.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    let ident = Matrix::identity(n, n);
    // vec(AᵀP) = (I ⊗ Aᵀ) vec P, vec(PA) = (Aᵀ ⊗ I) vec P with column-major vec.
    let op = kron(&ident, &a.transpose()) + kron(&a.transpose(), &ident);
    let rhs = Vector::from_column_slice((-q).as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidArgument("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&Matrix::from_column_slice(n, n, sol.as_slice())))
}
