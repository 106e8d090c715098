//! The Kozlov–Treshchev system
//!
//! ```text
//! H = Σ ½ p_i² + Σ_{i<n} e^{q_i - q_{i+1}} + e^{q_{n-1} + q_n} + e^{-q_1} + e^{-2 q_1}
//! ```
//!
//! in Flaschka variables `(a_1..a_{n+1}, b_1..b_n)`, where `a_1..a_n, b` are
//! the Dₙ variables and `a_{n+1} = e^{-q_1/2} / √2`. Its Lax pair `A' = [C, A]`
//! perturbs the quadratic Dₙ pair `(L², B)`: with `c = a_{n+1}`,
//!
//! ```text
//! A_11 = A_{2n,2n}     = a_1² + b_1² + c² + 2c⁴
//! A_12 = A_{2n,2n-1}   = a_1 (b_1 + b_2 + i√2 c²)
//! A_21 = A_{2n-1,2n}   = conj(A_12)
//! C_11 = C_{2n,2n}     = i√2 c²
//! ```
//!
//! and every other entry equal to that of `L²` resp. `B`. The integrals are
//! `h_{2i} = ½ Tr A^i`, i = 1..n.

use num_complex::Complex64;

use crate::dn_toda::{check_rank, dn_a_block, dn_field_into, dn_potential_gradient_unchecked, l_matrix, skew_part};
use crate::error::{check_len, Error, Result};
use crate::linalg::{
    complexify, frobenius, hermitian_eigenvalues, numerical_rank, powers, trace_of_product, ComplexMatrix, RealMatrix,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Flaschka point `(a_1..a_{n+1}, b_1..b_n)`; also used for tangent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KtFlaschkaPoint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl KtFlaschkaPoint {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_rank(b.len())?;
        check_len("a", b.len() + 1, a.len())?;
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// The end coupling `a_{n+1}`.
    pub fn end(&self) -> f64 {
        self.a[self.n()]
    }

    /// State dimension `2n + 1`.
    pub fn dim(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn to_state(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn from_state(n: usize, state: &[f64]) -> Result<Self> {
        check_rank(n)?;
        check_len("KT state", 2 * n + 1, state.len())?;
        Ok(Self {
            a: state[..=n].to_vec(),
            b: state[n + 1..].to_vec(),
        })
    }
}

/// Which form of the `b_1` equation to use.
///
/// The general-`n` equations are printed with `-4 a_{n+1}²` in `b_1'`,
/// while the `n = 4` equations and the Hamiltonian give `-4 a_{n+1}⁴`.
/// `PrintedGeneral` keeps the misprint so that its effect on the Lax
/// identity can be demonstrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EqgenVariant {
    #[default]
    Corrected,
    PrintedGeneral,
}

fn check_qp(q: &[f64], p: &[f64]) -> Result<usize> {
    check_len("p", q.len(), p.len())?;
    check_rank(q.len())?;
    Ok(q.len())
}

/// Canonical Hamiltonian.
pub fn kt_hamiltonian(q: &[f64], p: &[f64]) -> Result<f64> {
    let n = check_qp(q, p)?;
    let kinetic = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    let chain: f64 = q.windows(2).map(|w| (w[0] - w[1]).exp()).sum();
    Ok(kinetic + chain + (q[n - 2] + q[n - 1]).exp() + (-q[0]).exp() + (-2.0 * q[0]).exp())
}

/// Gradient of the potential with respect to `q`.
pub fn kt_potential_gradient(q: &[f64]) -> Result<Vec<f64>> {
    check_rank(q.len())?;
    let mut g = dn_potential_gradient_unchecked(q);
    g[0] -= (-q[0]).exp() + 2.0 * (-2.0 * q[0]).exp();
    Ok(g)
}

pub fn kt_flaschka(q: &[f64], p: &[f64]) -> Result<KtFlaschkaPoint> {
    check_qp(q, p)?;
    let mut a = dn_a_block(q);
    a.push((-0.5 * q[0]).exp() / SQRT2);
    Ok(KtFlaschkaPoint {
        a,
        b: p.iter().map(|x| -0.5 * x).collect(),
    })
}

/// Equations of motion in Flaschka variables.
pub fn kt_vector_field(x: &KtFlaschkaPoint) -> KtFlaschkaPoint {
    kt_vector_field_variant(x, EqgenVariant::Corrected)
}

pub fn kt_vector_field_variant(x: &KtFlaschkaPoint, variant: EqgenVariant) -> KtFlaschkaPoint {
    let n = x.n();
    let mut da = vec![0.0; n + 1];
    let mut db = vec![0.0; n];
    kt_field_into(&x.a, &x.b, &mut da, &mut db, variant);
    KtFlaschkaPoint { a: da, b: db }
}

/// Flat-state form of the vector field, for the integrators.
pub fn kt_field_state(n: usize, variant: EqgenVariant) -> impl Fn(&[f64], &mut [f64]) {
    move |x, dx| {
        let (a, b) = x.split_at(n + 1);
        let (da, db) = dx.split_at_mut(n + 1);
        kt_field_into(a, b, da, db, variant);
    }
}

fn kt_field_into(a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64], variant: EqgenVariant) {
    let n = b.len();
    dn_field_into(a, b, da, db);
    let c = a[n];
    let c2 = c * c;
    da[n] = c * b[0];
    db[0] -= c2
        + match variant {
            EqgenVariant::Corrected => 4.0 * c2 * c2,
            EqgenVariant::PrintedGeneral => 4.0 * c2,
        };
}

/// `Σ b_i² + 2 Σ_{i≤n} a_i² + a_{n+1}² + 2 a_{n+1}⁴`, equal to half the
/// canonical Hamiltonian.
pub fn kt_hamiltonian_flaschka(x: &KtFlaschkaPoint) -> f64 {
    let n = x.n();
    let c2 = x.end() * x.end();
    x.b.iter().map(|b| b * b).sum::<f64>() + 2.0 * x.a[..n].iter().map(|a| a * a).sum::<f64>() + c2 + 2.0 * c2 * c2
}

pub fn build_a(x: &KtFlaschkaPoint) -> ComplexMatrix {
    let n = x.n();
    let l = l_matrix(&x.a[..n], &x.b);
    let mut a = complexify(&(&l * &l));
    let m = 2 * n;
    let c2 = x.end() * x.end();
    let diag = Complex64::new(c2 + 2.0 * c2 * c2, 0.0);
    a[(0, 0)] += diag;
    a[(m - 1, m - 1)] += diag;
    let off = Complex64::new(0.0, SQRT2 * x.a[0] * c2);
    a[(0, 1)] += off;
    a[(m - 1, m - 2)] += off;
    a[(1, 0)] -= off;
    a[(m - 2, m - 1)] -= off;
    a
}

pub fn build_c(x: &KtFlaschkaPoint) -> ComplexMatrix {
    let n = x.n();
    let mut c = complexify(&skew_part(&l_matrix(&x.a[..n], &x.b)));
    let m = 2 * n;
    let d = Complex64::new(0.0, SQRT2 * x.end() * x.end());
    c[(0, 0)] = d;
    c[(m - 1, m - 1)] = d;
    c
}

/// Directional derivative of `A` at `x` along the tangent `dx`.
///
/// `L` is linear, so `d(L²) = L(dx) L + L L(dx)`; the six perturbed entries
/// are differentiated by hand.
pub fn a_directional_derivative(x: &KtFlaschkaPoint, dx: &KtFlaschkaPoint) -> ComplexMatrix {
    let n = x.n();
    let l = l_matrix(&x.a[..n], &x.b);
    let dl = l_matrix(&dx.a[..n], &dx.b);
    let mut da = complexify(&(&dl * &l + &l * &dl));
    let m = 2 * n;
    let (c, dc) = (x.end(), dx.end());
    let diag = Complex64::new((2.0 * c + 8.0 * c * c * c) * dc, 0.0);
    da[(0, 0)] += diag;
    da[(m - 1, m - 1)] += diag;
    let off = Complex64::new(0.0, SQRT2 * (dx.a[0] * c * c + 2.0 * x.a[0] * c * dc));
    da[(0, 1)] += off;
    da[(m - 1, m - 2)] += off;
    da[(1, 0)] -= off;
    da[(m - 2, m - 1)] -= off;
    da
}

/// `dA/dt` along the chosen form of the equations of motion.
pub fn kt_a_derivative(x: &KtFlaschkaPoint, variant: EqgenVariant) -> ComplexMatrix {
    a_directional_derivative(x, &kt_vector_field_variant(x, variant))
}

/// Frobenius norm of `dA/dt - [C, A]`.
pub fn kt_lax_residual(x: &KtFlaschkaPoint) -> f64 {
    kt_lax_residual_variant(x, EqgenVariant::Corrected)
}

pub fn kt_lax_residual_variant(x: &KtFlaschkaPoint, variant: EqgenVariant) -> f64 {
    let a = build_a(x);
    let c = build_c(x);
    frobenius(&(kt_a_derivative(x, variant) - (&c * &a - &a * &c)))
}

/// `(h_2, h_4, ..., h_{2n})` with `h_{2i} = ½ Tr A^i`.
///
/// `A` is Hermitian so every trace is real; an imaginary part above
/// `1e-10 · max(1, ‖A‖_F)^i` is reported as a consistency error.
pub fn kt_integrals(x: &KtFlaschkaPoint) -> Result<Vec<f64>> {
    let a = build_a(x);
    let scale = frobenius(&a).max(1.0);
    let n = x.n();
    // Tr A^i = Tr(A^j A^{i-j}) with j = ⌈i/2⌉ needs powers up to ⌈n/2⌉ only.
    let pw = powers(&a, n.div_ceil(2));
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let j = i.div_ceil(2);
        let tr = if j == i { pw[i].trace() } else { trace_of_product(&pw[j], &pw[i - j]) };
        if tr.im.abs() > 1e-10 * scale.powi(i as i32) {
            return Err(Error::Consistency(format!("Tr A^{i} has imaginary part {}", tr.im)));
        }
        out.push(0.5 * tr.re);
    }
    Ok(out)
}

/// Unit tangent along coordinate `j` of the flat state.
fn unit(n: usize, j: usize) -> KtFlaschkaPoint {
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n];
    if j <= n {
        a[j] = 1.0;
    } else {
        b[j - n - 1] = 1.0;
    }
    KtFlaschkaPoint { a, b }
}

/// `n × (2n+1)` Jacobian of the integrals, exact via
/// `∂h_{2i}/∂x_j = (i/2) Re Tr(A^{i-1} ∂A/∂x_j)`.
pub fn kt_integral_gradients(x: &KtFlaschkaPoint) -> RealMatrix {
    let n = x.n();
    let a = build_a(x);
    let pw = powers(&a, n - 1);
    let dim = x.dim();
    let mut g = RealMatrix::zeros(n, dim);
    for j in 0..dim {
        let d = a_directional_derivative(x, &unit(n, j));
        for i in 1..=n {
            g[(i - 1, j)] = 0.5 * i as f64 * trace_of_product(&pw[i - 1], &d).re;
        }
    }
    g
}

/// Numerical rank of [`kt_integral_gradients`] with cutoff `1e-8 · σ_max`.
pub fn kt_independence_rank(x: &KtFlaschkaPoint) -> usize {
    numerical_rank(&kt_integral_gradients(x), 1e-8)
}

/// Rank of [`kt_integral_gradients`] after scaling each row to unit length,
/// same cutoff. Row scaling leaves the exact rank unchanged but removes the
/// spread in gradient magnitudes between `h_2` and `h_{2n}`.
pub fn kt_row_normalized_rank(x: &KtFlaschkaPoint) -> usize {
    let mut g = kt_integral_gradients(x);
    for mut row in g.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    numerical_rank(&g, 1e-8)
}

/// Ascending eigenvalues of `A`.
pub fn a_eigenvalues(x: &KtFlaschkaPoint) -> Vec<f64> {
    hermitian_eigenvalues(&build_a(x))
}

/// Casimir of the extended bracket:
/// `Q = a_1² ⋯ a_{n-2}² · a_{n-1} · a_n · a_{n+1}²`.
pub fn casimir_q(x: &KtFlaschkaPoint) -> f64 {
    casimir_exponents(x.n())
        .iter()
        .zip(&x.a)
        .map(|(&e, a)| a.powi(e))
        .product()
}

/// Exponents of `a_1..a_{n+1}` in [`casimir_q`]: `(2,…,2,1,1,2)`.
pub fn casimir_exponents(n: usize) -> Vec<i32> {
    let mut e = vec![2; n + 1];
    e[n - 2] = 1;
    e[n - 1] = 1;
    e
}

pub fn casimir_q_gradient(x: &KtFlaschkaPoint) -> Vec<f64> {
    let n = x.n();
    let exps = casimir_exponents(n);
    let mut g = vec![0.0; x.dim()];
    for k in 0..=n {
        g[k] = (0..=n)
            .map(|i| {
                if i == k {
                    exps[i] as f64 * x.a[i].powi(exps[i] - 1)
                } else {
                    x.a[i].powi(exps[i])
                }
            })
            .product();
    }
    g
}
