//! Lifted operators of the Kronecker hierarchy.
//!
//! Level `i` of the hierarchy evolves `ξ = ⊗ⁱx` under the Kronecker-sum lift
//! `Σ_j I_{n^j} ⊗ A ⊗ I_{n^{i-1-j}}`. Pure tensor powers live in the
//! symmetric subspace of `(ℝⁿ)^{⊗i}`, which every lift leaves invariant, so
//! the downstream algorithms work in orthonormal coordinates on that
//! subspace (dimension `C(n+i-1, i)` instead of `n^i`).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, kron, Matrix, Vector};

/// Default cap on the reduced dimension `C(n+i-1, i)`.
pub const DEFAULT_DIM_CAP: usize = 5000;

/// `ẋ = (A + Δ(t) A₀) x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLinearSystem {
    a: Matrix,
    a0: Matrix,
}

impl SwitchedLinearSystem {
    pub fn new(a: Matrix, a0: Matrix) -> Result<Self> {
        let n = ensure_square(&a)?;
        let n0 = ensure_square(&a0)?;
        if n != n0 {
            return Err(Error::DimensionMismatch(format!(
                "A is {n}x{n} but A0 is {n0}x{n0}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&a0, "A0")?;
        Ok(Self { a, a0 })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn a0(&self) -> &Matrix {
        &self.a0
    }

    /// `A + δ A₀`.
    pub fn mode(&self, delta: f64) -> Matrix {
        &self.a + &self.a0 * delta
    }
}

fn check_level(i: usize) -> Result<()> {
    if i == 0 {
        Err(Error::InvalidArgument("hierarchy level must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn full_dim(n: usize, i: usize) -> Result<usize> {
    n.checked_pow(i as u32)
        .ok_or_else(|| Error::InvalidArgument(format!("{n}^{i} overflows")))
}

/// `Σ_{j=0}^{i-1} I_{n^j} ⊗ M ⊗ I_{n^{i-1-j}}`.
pub fn lift_operator_full(m: &Matrix, i: usize) -> Result<Matrix> {
    check_level(i)?;
    let n = ensure_square(m)?;
    let total = full_dim(n, i)?;
    let mut out = Matrix::zeros(total, total);
    for j in 0..i {
        let left = Matrix::identity(n.pow(j as u32), n.pow(j as u32));
        let right_dim = n.pow((i - 1 - j) as u32);
        let right = Matrix::identity(right_dim, right_dim);
        out += kron(&kron(&left, m), &right);
    }
    Ok(out)
}

/// `𝒜_i = I_n ⊗ 𝒜_{i-1} + M ⊗ I_{n^{i-1}}`, `𝒜_1 = M`.
pub fn lift_operator_recursive(m: &Matrix, i: usize) -> Result<Matrix> {
    check_level(i)?;
    let n = ensure_square(m)?;
    full_dim(n, i)?;
    let ident_n = Matrix::identity(n, n);
    let mut acc = m.clone();
    for level in 2..=i {
        let prev_dim = n.pow((level - 1) as u32);
        acc = kron(&ident_n, &acc) + kron(m, &Matrix::identity(prev_dim, prev_dim));
    }
    Ok(acc)
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

fn multinomial(exponents: &[u32]) -> f64 {
    let mut acc = 1.0;
    let mut total = 0u32;
    for &e in exponents {
        for j in 1..=e {
            total += 1;
            acc *= total as f64 / j as f64;
        }
    }
    acc
}

/// Orthonormal coordinates on the symmetric subspace of `(ℝⁿ)^{⊗i}`.
///
/// Row `α` of the embedding is the normalized sum over all tensor indices
/// that are permutations of the multi-index `α`, so each row has
/// `c_α = i!/Π α_k!` entries equal to `1/√c_α`. Multi-indices are
/// non-decreasing tuples over `0..n`, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBasis {
    n: usize,
    degree: usize,
    multi_indices: Vec<Vec<usize>>,
    exponents: Vec<Vec<u32>>,
    weights: Vec<f64>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl SymmetricBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.multi_indices
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// `√c_α` per row.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.lookup.get(exponent).copied()
    }

    /// Dense `dim × n^i` embedding `E`.
    pub fn embedding(&self) -> Result<Matrix> {
        let total = full_dim(self.n, self.degree)?;
        let mut e = Matrix::zeros(self.dim(), total);
        let mut exponent = vec![0u32; self.n];
        for idx in 0..total {
            exponent.iter_mut().for_each(|v| *v = 0);
            let mut rest = idx;
            for _ in 0..self.degree {
                exponent[rest % self.n] += 1;
                rest /= self.n;
            }
            let row = self.lookup[&exponent];
            e[(row, idx)] = 1.0 / self.weights[row];
        }
        Ok(e)
    }
}

pub fn symmetric_basis(n: usize, i: usize) -> Result<SymmetricBasis> {
    symmetric_basis_with_cap(n, i, DEFAULT_DIM_CAP)
}

pub fn symmetric_basis_with_cap(n: usize, i: usize, cap: usize) -> Result<SymmetricBasis> {
    check_level(i)?;
    if n == 0 {
        return Err(Error::InvalidArgument("base dimension must be >= 1".into()));
    }
    let dim = binomial(n + i - 1, i).unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }

    let mut multi_indices = Vec::with_capacity(dim);
    let mut current = vec![0usize; i];
    loop {
        multi_indices.push(current.clone());
        // next non-decreasing tuple in lexicographic order
        let mut pos = i;
        while pos > 0 && current[pos - 1] == n - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        let v = current[pos - 1] + 1;
        for slot in &mut current[pos - 1..] {
            *slot = v;
        }
    }
    debug_assert_eq!(multi_indices.len(), dim);

    let exponents: Vec<Vec<u32>> = multi_indices
        .iter()
        .map(|tuple| {
            let mut e = vec![0u32; n];
            tuple.iter().for_each(|&k| e[k] += 1);
            e
        })
        .collect();
    let weights = exponents.iter().map(|e| multinomial(e).sqrt()).collect();
    let lookup = exponents
        .iter()
        .enumerate()
        .map(|(row, e)| (e.clone(), row))
        .collect();
    Ok(SymmetricBasis {
        n,
        degree: i,
        multi_indices,
        exponents,
        weights,
        lookup,
    })
}

/// `E · M_full · Eᵀ`, after checking that `M_full` maps the symmetric
/// subspace into itself.
pub fn reduce(m_full: &Matrix, basis: &SymmetricBasis) -> Result<Matrix> {
    let total = full_dim(basis.n, basis.degree)?;
    if m_full.shape() != (total, total) {
        return Err(Error::DimensionMismatch(format!(
            "expected a {total}x{total} operator, got {}x{}",
            m_full.nrows(),
            m_full.ncols()
        )));
    }
    let e = basis.embedding()?;
    let image = m_full * e.transpose();
    let reduced = &e * &image;
    let defect = (&image - e.transpose() * &reduced).norm();
    if defect > 1e-8 * m_full.norm().max(1.0) {
        return Err(Error::NotSymmetricInvariant(defect));
    }
    Ok(reduced)
}

/// Reduced lift of `m` built directly in symmetric coordinates, without
/// forming the `n^i × n^i` operator.
///
/// Uses `d/dt x^α = Σ_{k,l} α_k m_{kl} x^{α - e_k + e_l}` together with
/// `ξ_α = √c_α x^α`.
pub fn reduced_lift(m: &Matrix, basis: &SymmetricBasis) -> Result<Matrix> {
    let n = ensure_square(m)?;
    if n != basis.n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {n}x{n} but basis is over dimension {}",
            basis.n
        )));
    }
    let dim = basis.dim();
    let mut out = Matrix::zeros(dim, dim);
    let mut beta = vec![0u32; n];
    for (row, alpha) in basis.exponents.iter().enumerate() {
        for k in 0..n {
            if alpha[k] == 0 {
                continue;
            }
            for l in 0..n {
                let coeff = m[(k, l)];
                if coeff == 0.0 {
                    continue;
                }
                beta.copy_from_slice(alpha);
                beta[k] -= 1;
                beta[l] += 1;
                let col = basis.lookup[&beta];
                out[(row, col)] +=
                    alpha[k] as f64 * coeff * basis.weights[row] / basis.weights[col];
            }
        }
    }
    Ok(out)
}

/// `E · (⊗ⁱ x)`; its Euclidean norm is `‖x‖^i`.
pub fn lift_state(x: &Vector, basis: &SymmetricBasis) -> Vector {
    assert_eq!(x.len(), basis.n, "state length does not match basis");
    Vector::from_iterator(
        basis.dim(),
        basis
            .exponents
            .iter()
            .zip(&basis.weights)
            .map(|(alpha, w)| {
                alpha
                    .iter()
                    .enumerate()
                    .fold(*w, |acc, (k, &e)| acc * x[k].powi(e as i32))
            }),
    )
}

/// One level of the hierarchy in reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLevel {
    pub level: usize,
    pub basis: SymmetricBasis,
    /// Reduced lift of `A`.
    pub cal_a: Matrix,
    /// Reduced lift of `A₀`.
    pub cal_a0: Matrix,
}

impl HierarchyLevel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Reduced lift of `A + δ A₀`, which is `cal_a + δ cal_a0` by linearity.
    pub fn mode(&self, delta: f64) -> Matrix {
        &self.cal_a + &self.cal_a0 * delta
    }

    pub fn lift(&self, x: &Vector) -> Vector {
        lift_state(x, &self.basis)
    }

    /// `V(x) = ξᵀ P ξ`, a form of degree `2i` in `x`.
    pub fn lyapunov_value(&self, x: &Vector, p: &Matrix) -> f64 {
        let xi = self.lift(x);
        xi.dot(&(p * &xi))
    }
}

pub fn build_level(sys: &SwitchedLinearSystem, i: usize) -> Result<HierarchyLevel> {
    build_level_with_cap(sys, i, DEFAULT_DIM_CAP)
}

pub fn build_level_with_cap(
    sys: &SwitchedLinearSystem,
    i: usize,
    cap: usize,
) -> Result<HierarchyLevel> {
    let basis = symmetric_basis_with_cap(sys.n(), i, cap)?;
    let (cal_a, cal_a0) = if i == 1 {
        (sys.a().clone(), sys.a0().clone())
    } else {
        (reduced_lift(sys.a(), &basis)?, reduced_lift(sys.a0(), &basis)?)
    };
    Ok(HierarchyLevel {
        level: i,
        basis,
        cal_a,
        cal_a0,
    })
}

/// Reduced lifts of an arbitrary list of modes at level `i`.
pub fn lift_modes(modes: &[Matrix], i: usize) -> Result<(SymmetricBasis, Vec<Matrix>)> {
    let first = modes
        .first()
        .ok_or_else(|| Error::InvalidArgument("mode list is empty".into()))?;
    let basis = symmetric_basis(ensure_square(first)?, i)?;
    let lifted = modes
        .iter()
        .map(|m| reduced_lift(m, &basis))
        .collect::<Result<Vec<_>>>()?;
    Ok((basis, lifted))
}
