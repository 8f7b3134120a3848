//! Dense complex matrix helpers shared by every module.
//!
//! Vectorization is row-major throughout: `vec(X)[i * cols + j] = X[(i, j)]`.
//! With that convention `vec(A X B) = (A ⊗ Bᵀ) vec(X)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = nalgebra::DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Relative PSD tolerance: accept when `λ_min ≥ −PSD_REL_TOL · max(1, ‖M‖₂)`.
pub const PSD_REL_TOL: f64 = 1e-9;
/// Relative Hermiticity tolerance on `‖M − M†‖_F`.
pub const HERM_REL_TOL: f64 = 1e-9;
/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Matrix unit `|i⟩⟨j|` of size `d × d`.
pub fn unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

pub fn ket(d: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[i] = ONE;
    v
}

pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all(ms: &[&CMatrix]) -> CMatrix {
    let mut out = CMatrix::from_element(1, 1, ONE);
    for m in ms {
        out = out.kronecker(*m);
    }
    out
}

pub fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.trace()
}

/// Hilbert–Schmidt inner product `tr(a† b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    frob(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    hermiticity_defect(m) <= HERM_REL_TOL * frob(m).max(1.0)
}

pub fn vec_rm(m: &CMatrix) -> CVector {
    let (r, cdim) = m.shape();
    CVector::from_fn(r * cdim, |k, _| m[(k / cdim, k % cdim)])
}

pub fn unvec_rm(v: &CVector, rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    CMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Sorted (descending) eigenvalues and matching orthonormal eigenvectors of a
/// Hermitian matrix. The input is symmetrized before diagonalization.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Scale-aware PSD threshold for a Hermitian matrix.
pub fn psd_threshold(m: &CMatrix) -> f64 {
    PSD_REL_TOL * spectral_norm(m).max(1.0)
}

pub fn is_psd(m: &CMatrix) -> bool {
    is_hermitian(m) && min_eigenvalue(m) >= -psd_threshold(m)
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    frob(&(u * u.adjoint() - identity(u.nrows())))
}

/// Partial trace of `m` over a tensor product with factor dimensions `dims`,
/// keeping the factors where `keep[k]` is true (order preserved).
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[bool]) -> CMatrix {
    let n: usize = dims.iter().product();
    assert_eq!(m.nrows(), n, "partial_trace: matrix does not match dims");
    assert_eq!(dims.len(), keep.len());
    let kept_dim: usize = dims.iter().zip(keep).filter(|(_, &k)| k).map(|(d, _)| d).product();

    // Split each global index into (kept index, traced index).
    let split: Vec<(usize, usize)> = (0..n)
        .map(|mut idx| {
            let (mut kept, mut traced) = (0, 0);
            let (mut kmul, mut tmul) = (1, 1);
            for (d, &k) in dims.iter().zip(keep).rev() {
                let digit = idx % d;
                idx /= d;
                if k {
                    kept += digit * kmul;
                    kmul *= d;
                } else {
                    traced += digit * tmul;
                    tmul *= d;
                }
            }
            (kept, traced)
        })
        .collect();

    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for i in 0..n {
        let (ki, ti) = split[i];
        for j in 0..n {
            let (kj, tj) = split[j];
            if ti == tj {
                out[(ki, kj)] += m[(i, j)];
            }
        }
    }
    out
}

/// `Tr_E` for a bipartite `S ⊗ E` operator.
pub fn ptrace_e(m: &CMatrix, d_s: usize, d_e: usize) -> CMatrix {
    partial_trace(m, &[d_s, d_e], &[true, false])
}

/// `Tr_S` for a bipartite `S ⊗ E` operator.
pub fn ptrace_s(m: &CMatrix, d_s: usize, d_e: usize) -> CMatrix {
    partial_trace(m, &[d_s, d_e], &[false, true])
}

/// Swap operator on `H_a ⊗ H_b` mapping `|x⟩|y⟩ ↦ |y⟩|x⟩` into `H_b ⊗ H_a`.
pub fn swap(d_a: usize, d_b: usize) -> CMatrix {
    let n = d_a * d_b;
    let mut m = CMatrix::zeros(n, n);
    for x in 0..d_a {
        for y in 0..d_b {
            m[(y * d_a + x, x * d_b + y)] = ONE;
        }
    }
    m
}

/// Orthonormal basis (columns) of the column space of `m`, using a relative
/// singular-value cutoff.
pub fn range_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > rel_tol * smax).collect();
    CMatrix::from_fn(m.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    range_basis(m, rel_tol).ncols()
}

/// Orthonormal basis (columns) of the null space of `m`.
pub fn null_space(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    // Pad to at least square so the SVD returns a full right basis.
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax == 0.0 || svd.singular_values[k] <= rel_tol * smax)
        .collect();
    CMatrix::from_fn(cols, null.len(), |i, j| v_t[(null[j], i)].conj())
}

/// Moore–Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pinv(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = CMatrix::zeros(cols, rows);
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        if smax > 0.0 && s > rel_tol * smax {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / s);
        }
    }
    out
}

/// Extend the orthonormal columns of `w` to a full unitary of the same row
/// dimension (modified Gram–Schmidt with one re-orthogonalization pass).
pub fn complete_unitary(w: &CMatrix) -> CMatrix {
    let n = w.nrows();
    let mut cols: Vec<CVector> = w.column_iter().map(|c| c.into_owned()).collect();
    let mut k = 0;
    while cols.len() < n && k < n {
        let mut v = ket(n, k);
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v.unscale(norm));
        }
        k += 1;
    }
    CMatrix::from_columns(&cols)
}

pub fn check_square(m: &CMatrix, what: &str) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::DimensionMismatch(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}
