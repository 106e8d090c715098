//! Dense linear-algebra helpers shared by the Lax-pair modules.
//!
//! Thin wrappers over `nalgebra` that fix the conventions used throughout
//! the crate: eigenvalues are returned sorted ascending, ranks and null
//! spaces use a singular-value cutoff relative to the largest singular value.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Ascending eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(m: &RealMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues of a complex Hermitian matrix. Only the lower
/// triangle is read, so callers should check Hermiticity first.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest entrywise modulus of `m - m*`.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `xy - yx`.
pub fn commutator<T>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::ComplexField,
{
    x * y - y * x
}

/// `Tr(xy)` without forming the product.
pub fn trace_of_product(x: &ComplexMatrix, y: &ComplexMatrix) -> Complex64 {
    let n = x.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += x[(i, k)] * y[(k, i)];
        }
    }
    acc
}

/// Dense complex product that skips zero entries of `y`. Faster than the
/// generic product for the small banded matrices used here.
pub fn complex_product(x: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(x.ncols(), y.nrows(), "inner dimensions differ");
    let (r, k, c) = (x.nrows(), x.ncols(), y.ncols());
    let mut out = ComplexMatrix::zeros(r, c);
    let xs = x.as_slice();
    let ys = y.as_slice();
    let os = out.as_mut_slice();
    for j in 0..c {
        let col = &mut os[j * r..(j + 1) * r];
        for l in 0..k {
            let v = ys[j * k + l];
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            for (o, xv) in col.iter_mut().zip(&xs[l * r..(l + 1) * r]) {
                *o += xv * v;
            }
        }
    }
    out
}

/// Powers `m^0, m^1, ..., m^k`.
pub fn powers(m: &ComplexMatrix, k: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(ComplexMatrix::identity(m.nrows(), m.ncols()));
    if k >= 1 {
        out.push(m.clone());
    }
    for i in 1..k {
        let next = complex_product(&out[i], m);
        out.push(next);
    }
    out
}

/// Real matrix promoted to complex.
pub fn complexify(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

fn singular_values(m: &RealMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Number of singular values above `rel_cutoff * sigma_max`. A zero matrix
/// has rank 0.
pub fn numerical_rank(m: &RealMatrix, rel_cutoff: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_cutoff * max).count()
}

/// Orthonormal basis of `{x : m x = 0}`, using a singular-value cutoff of
/// `rel_cutoff * sigma_max`.
pub fn null_space(m: &RealMatrix, rel_cutoff: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    // Pad to at least square so the SVD returns a full right basis.
    let rows = m.nrows().max(cols);
    let mut padded = RealMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let max = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = rel_cutoff * max;
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| max == 0.0 || s <= cutoff)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect()
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
