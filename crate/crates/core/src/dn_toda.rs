//! The Dₙ Toda lattice (n ≥ 4) and its quadratic Lax pair.
//!
//! Flaschka variables `a_i = ½ e^{½(q_i - q_{i+1})}` (i < n),
//! `a_n = ½ e^{½(q_{n-1} + q_n)}`, `b_i = -½ p_i` turn Hamilton's equations
//! into `L' = [B, L]` with `L` the symmetric `2n × 2n` matrix
//!
//! ```text
//! rows 1..n   : diag b_1..b_n,    super-diagonal a_1..a_{n-1}
//! rows n+1..2n: diag -b_n..-b_1,  super-diagonal -a_{n-1}..-a_1
//! a_n couples (n-1, n+1) with sign - and (n, n+2) with sign +
//! ```
//!
//! and `B` the antisymmetrized strict upper triangle of `L`. Since
//! `(L²)' = [B, L²]` as well, the pair `(L², B)` is also a Lax pair.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{numerical_rank, symmetric_eigenvalues, RealMatrix};

/// Flaschka point of the Dₙ lattice; also used for tangent vectors.
///
/// Points in the image of [`dn_flaschka`] have every `a_i > 0`; the
/// constructor accepts `a_i = 0` so that degenerate matrix-level inputs
/// can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct DnFlaschkaPoint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DnFlaschkaPoint {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_rank(b.len())?;
        check_len("a", b.len(), a.len())?;
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `(a_1..a_n, b_1..b_n)`.
    pub fn to_state(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn from_state(n: usize, state: &[f64]) -> Result<Self> {
        check_rank(n)?;
        check_len("Dn state", 2 * n, state.len())?;
        Ok(Self {
            a: state[..n].to_vec(),
            b: state[n..].to_vec(),
        })
    }
}

pub(crate) fn check_rank(n: usize) -> Result<()> {
    if n < 4 {
        Err(Error::Domain(format!("Dn lattice requires n >= 4, got {n}")))
    } else {
        Ok(())
    }
}

fn check_qp(q: &[f64], p: &[f64]) -> Result<usize> {
    check_len("p", q.len(), p.len())?;
    check_rank(q.len())?;
    Ok(q.len())
}

/// `½ Σ p_j² + Σ_{i<n} e^{q_i - q_{i+1}} + e^{q_{n-1} + q_n}`.
pub fn dn_hamiltonian(q: &[f64], p: &[f64]) -> Result<f64> {
    let n = check_qp(q, p)?;
    let kinetic: f64 = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    let chain: f64 = q.windows(2).map(|w| (w[0] - w[1]).exp()).sum();
    Ok(kinetic + chain + (q[n - 2] + q[n - 1]).exp())
}

/// Gradient of the Dₙ potential with respect to `q`.
pub fn dn_potential_gradient(q: &[f64]) -> Result<Vec<f64>> {
    check_rank(q.len())?;
    Ok(dn_potential_gradient_unchecked(q))
}

pub(crate) fn dn_potential_gradient_unchecked(q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut g = vec![0.0; n];
    for i in 0..n - 1 {
        let e = (q[i] - q[i + 1]).exp();
        g[i] += e;
        g[i + 1] -= e;
    }
    let e = (q[n - 2] + q[n - 1]).exp();
    g[n - 2] += e;
    g[n - 1] += e;
    g
}

/// Dₙ Flaschka transform.
pub fn dn_flaschka(q: &[f64], p: &[f64]) -> Result<DnFlaschkaPoint> {
    check_qp(q, p)?;
    Ok(DnFlaschkaPoint {
        a: dn_a_block(q),
        b: p.iter().map(|x| -0.5 * x).collect(),
    })
}

pub(crate) fn dn_a_block(q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut a: Vec<f64> = q.windows(2).map(|w| 0.5 * (0.5 * (w[0] - w[1])).exp()).collect();
    a.push(0.5 * (0.5 * (q[n - 2] + q[n - 1])).exp());
    a
}

/// Writes the Dₙ equations of motion for `(a_1..a_n, b_1..b_n)` into
/// `da`, `db`. Only the first `n` entries of `a` are read.
pub(crate) fn dn_field_into(a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64]) {
    let n = b.len();
    for i in 0..n - 1 {
        da[i] = a[i] * (b[i + 1] - b[i]);
    }
    da[n - 1] = -a[n - 1] * (b[n - 2] + b[n - 1]);
    db[0] = 2.0 * a[0] * a[0];
    for i in 1..n {
        db[i] = 2.0 * (a[i] * a[i] - a[i - 1] * a[i - 1]);
    }
    db[n - 2] = 2.0 * (a[n - 1] * a[n - 1] + a[n - 2] * a[n - 2] - a[n - 3] * a[n - 3]);
}

/// Time derivative `(a', b')` of the Dₙ lattice.
pub fn dn_vector_field(x: &DnFlaschkaPoint) -> DnFlaschkaPoint {
    let n = x.n();
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    dn_field_into(&x.a, &x.b, &mut da, &mut db);
    DnFlaschkaPoint { a: da, b: db }
}

/// The symmetric `2n × 2n` matrix `L` for `(a_1..a_n, b_1..b_n)`. `L` is
/// linear in its arguments, which the Lax-residual code relies on.
pub(crate) fn l_matrix(a: &[f64], b: &[f64]) -> RealMatrix {
    let n = b.len();
    let m = 2 * n;
    let mut l = RealMatrix::zeros(m, m);
    for i in 0..n {
        l[(i, i)] = b[i];
        l[(m - 1 - i, m - 1 - i)] = -b[i];
    }
    let mut set = |i: usize, j: usize, v: f64| {
        l[(i, j)] = v;
        l[(j, i)] = v;
    };
    for i in 0..n - 1 {
        set(i, i + 1, a[i]);
        set(m - 2 - i, m - 1 - i, -a[i]);
    }
    set(n - 2, n, -a[n - 1]);
    set(n - 1, n + 1, a[n - 1]);
    l
}

/// Antisymmetrized strict upper triangle.
pub(crate) fn skew_part(l: &RealMatrix) -> RealMatrix {
    let m = l.nrows();
    DMatrix::from_fn(m, m, |i, j| {
        if i < j {
            l[(i, j)]
        } else if i > j {
            -l[(j, i)]
        } else {
            0.0
        }
    })
}

pub fn build_l(x: &DnFlaschkaPoint) -> RealMatrix {
    l_matrix(&x.a, &x.b)
}

pub fn build_b(x: &DnFlaschkaPoint) -> RealMatrix {
    skew_part(&build_l(x))
}

/// `L²`, the first matrix of the quadratic Lax pair `(L², B)`.
pub fn build_l2(x: &DnFlaschkaPoint) -> RealMatrix {
    let l = build_l(x);
    &l * &l
}

/// `dL/dt` along the flow, by linearity `L' = L(a', b')`.
pub fn dn_l_derivative(x: &DnFlaschkaPoint) -> RealMatrix {
    build_l(&dn_vector_field(x))
}

/// Frobenius norm of `L' - [B, L]`.
pub fn dn_lax_residual(x: &DnFlaschkaPoint) -> f64 {
    let l = build_l(x);
    let b = skew_part(&l);
    (dn_l_derivative(x) - (&b * &l - &l * &b)).norm()
}

/// Frobenius norm of `(L²)' - [B, L²]` with `(L²)' = L'L + LL'`.
pub fn dn_quadratic_lax_residual(x: &DnFlaschkaPoint) -> f64 {
    let l = build_l(x);
    let b = skew_part(&l);
    let dl = dn_l_derivative(x);
    let l2 = &l * &l;
    (&dl * &l + &l * &dl - (&b * &l2 - &l2 * &b)).norm()
}

/// `(H_2, H_4, ..., H_{2n-2}, P_n)` with `H_{2i} = Tr L^{2i} / (2i)` and
/// `P_n = sqrt((-1)^n det L)`.
///
/// The eigenvalues of `L` come in `±` pairs, so `det L = (-1)^n Π λ_k²`
/// and the sign factor makes the radicand nonnegative for every `n`. A
/// radicand below `-1e-9` times the natural scale means `L` is malformed.
pub fn dn_invariants(l: &RealMatrix) -> Result<Vec<f64>> {
    if l.nrows() != l.ncols() {
        return Err(Error::Domain("L must be square".into()));
    }
    if !l.nrows().is_multiple_of(2) || l.nrows() == 0 {
        return Err(Error::Domain(format!("L must have even order, got {}", l.nrows())));
    }
    let n = l.nrows() / 2;
    let l2 = l * l;
    let mut power = l2.clone();
    let mut out = Vec::with_capacity(n);
    for i in 1..n {
        out.push(power.trace() / (2 * i) as f64);
        power = &power * &l2;
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let radicand = sign * l.clone().lu().determinant();
    let scale = l.norm().max(1.0).powi(2 * n as i32);
    if radicand < -1e-9 * scale {
        return Err(Error::Consistency(format!(
            "(-1)^n det L = {radicand} is negative; L is not a Dn Lax matrix"
        )));
    }
    out.push(radicand.max(0.0).sqrt());
    Ok(out)
}

/// Exact gradients of `H_2, ..., H_{2n-2}` with respect to
/// `(a_1..a_n, b_1..b_n)`: `∂H_{2i}/∂x_j = Tr(L^{2i-1} ∂L/∂x_j)`.
pub fn dn_hamiltonian_gradients(x: &DnFlaschkaPoint) -> RealMatrix {
    let n = x.n();
    let l = build_l(x);
    let mut grads = RealMatrix::zeros(n - 1, 2 * n);
    let mut odd = l.clone(); // L^{2i-1}
    let l2 = &l * &l;
    for i in 0..n - 1 {
        for j in 0..2 * n {
            let e = coordinate_direction(n, j);
            grads[(i, j)] = odd.component_mul(&e.transpose()).sum();
        }
        odd = &odd * &l2;
    }
    grads
}

/// Gradient of `P_n` with respect to `(a_1..a_n, b_1..b_n)`, from
/// `∂P_n/∂x_j = ½ P_n Tr(L⁻¹ ∂L/∂x_j)`. `None` when `L` is singular.
pub fn dn_pfaffian_gradient(x: &DnFlaschkaPoint) -> Option<Vec<f64>> {
    let n = x.n();
    let l = build_l(x);
    let p = *dn_invariants(&l).ok()?.last()?;
    let inv = l.try_inverse()?;
    Some(
        (0..2 * n)
            .map(|j| 0.5 * p * inv.component_mul(&coordinate_direction(n, j).transpose()).sum())
            .collect(),
    )
}

/// `∂L/∂x_j` for coordinate `j` of `(a_1..a_n, b_1..b_n)`.
pub(crate) fn coordinate_direction(n: usize, j: usize) -> RealMatrix {
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    if j < n {
        a[j] = 1.0;
    } else {
        b[j - n] = 1.0;
    }
    l_matrix(&a, &b)
}

/// Ascending eigenvalues of `L`.
pub fn l_eigenvalues(x: &DnFlaschkaPoint) -> Vec<f64> {
    symmetric_eigenvalues(&build_l(x))
}

/// Largest `min_μ |λ + μ|` over eigenvalues `λ` of `L`: zero when the
/// spectrum is symmetric about the origin.
pub fn pm_pairing_defect(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .map(|l| {
            eigenvalues
                .iter()
                .map(|m| (l + m).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Numerical rank of the Jacobian of `(H_2, ..., H_{2n-2})`.
pub fn dn_hamiltonian_rank(x: &DnFlaschkaPoint) -> usize {
    numerical_rank(&dn_hamiltonian_gradients(x), 1e-8)
}
