//! Structure-matrix Poisson brackets on flat coordinate vectors.
//!
//! Three brackets are provided:
//!
//! * `canonical` on `(q_1..q_n, p_1..p_n)`: `{q_i, p_j} = δ_ij`;
//! * `pi1` on the Dₙ Flaschka variables `(a_1..a_n, b_1..b_n)`:
//!   `{a_i, b_i} = -a_i/2`, `{a_i, b_{i+1}} = a_i/2` (i < n),
//!   `{a_n, b_{n-1}} = -a_n/2`;
//! * `w1` on `(a_1..a_{n+1}, b_1..b_n)`: `pi1` plus `{a_{n+1}, b_1} = a_{n+1}/2`.
//!
//! Every bracket is stored as a list of upper-triangle rules
//! `J_ij = coefficient · x_k` (or a constant), mirrored with a sign flip, so
//! antisymmetry holds exactly. `{f, g} = ∇f · J ∇g` and the Hamiltonian
//! vector field of `h` is `J ∇h`.

use serde::Serialize;

use crate::error::{check_len, Result};
use crate::linalg::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketKind {
    Canonical,
    Pi1,
    W1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rule {
    row: usize,
    col: usize,
    coefficient: f64,
    /// Coordinate the entry is proportional to; `None` for constants.
    source: Option<usize>,
}

/// An antisymmetric, linear-in-coordinates structure matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketStructure {
    kind: BracketKind,
    n: usize,
    dim: usize,
    rules: Vec<Rule>,
}

impl BracketStructure {
    /// `{q_i, p_i} = 1` on `2n` coordinates.
    pub fn canonical(n: usize) -> Self {
        let rules = (0..n)
            .map(|i| Rule {
                row: i,
                col: n + i,
                coefficient: 1.0,
                source: None,
            })
            .collect();
        Self {
            kind: BracketKind::Canonical,
            n,
            dim: 2 * n,
            rules,
        }
    }

    /// Image of the canonical bracket under the Dₙ Flaschka map (times 2).
    pub fn pi1(n: usize) -> Self {
        Self {
            kind: BracketKind::Pi1,
            n,
            dim: 2 * n,
            rules: dn_rules(n, n),
        }
    }

    /// `pi1` extended by the end coupling `a_{n+1}`.
    pub fn w1(n: usize) -> Self {
        let b0 = n + 1;
        let mut rules = dn_rules(n, b0);
        rules.push(Rule {
            row: n,
            col: b0,
            coefficient: 0.5,
            source: Some(n),
        });
        Self {
            kind: BracketKind::W1,
            n,
            dim: 2 * n + 1,
            rules,
        }
    }

    pub fn kind(&self) -> BracketKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of coordinates `m`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure_matrix(&self, state: &[f64]) -> Result<RealMatrix> {
        check_len("bracket state", self.dim, state.len())?;
        let mut j = RealMatrix::zeros(self.dim, self.dim);
        for r in &self.rules {
            let v = r.coefficient * r.source.map_or(1.0, |k| state[k]);
            j[(r.row, r.col)] += v;
            j[(r.col, r.row)] -= v;
        }
        Ok(j)
    }

    /// `∂J/∂x_l`, constant because every entry is linear.
    pub fn structure_derivative(&self, l: usize) -> RealMatrix {
        let mut d = RealMatrix::zeros(self.dim, self.dim);
        for r in self.rules.iter().filter(|r| r.source == Some(l)) {
            d[(r.row, r.col)] += r.coefficient;
            d[(r.col, r.row)] -= r.coefficient;
        }
        d
    }

    pub fn bracket(&self, f: &dyn ScalarField, g: &dyn ScalarField, state: &[f64]) -> Result<f64> {
        let j = self.structure_matrix(state)?;
        let gf = gradient(f, state);
        let gg = gradient(g, state);
        Ok(quadratic_form(&j, &gf, &gg))
    }

    /// `J(x) ∇h(x)`.
    pub fn hamiltonian_vector_field(&self, h: &dyn ScalarField, state: &[f64]) -> Result<Vec<f64>> {
        let j = self.structure_matrix(state)?;
        let g = gradient(h, state);
        Ok((0..self.dim)
            .map(|r| (0..self.dim).map(|c| j[(r, c)] * g[c]).sum())
            .collect())
    }

    /// Pairwise brackets `{f_i, f_j}` at `state`.
    pub fn involution_matrix(&self, fs: &[&dyn ScalarField], state: &[f64]) -> Result<InvolutionReport> {
        let j = self.structure_matrix(state)?;
        let j_norm = j.norm();
        let grads: Vec<Vec<f64>> = fs.iter().map(|f| gradient(*f, state)).collect();
        let norms: Vec<f64> = grads.iter().map(|g| euclid(g)).collect();
        let k = fs.len();
        let mut matrix = RealMatrix::zeros(k, k);
        let mut max_raw = 0.0_f64;
        let mut max_scaled = 0.0_f64;
        for r in 0..k {
            for c in (r + 1)..k {
                let v = quadratic_form(&j, &grads[r], &grads[c]);
                matrix[(r, c)] = v;
                matrix[(c, r)] = -v;
                max_raw = max_raw.max(v.abs());
                max_scaled = max_scaled.max(v.abs() / (1.0 + norms[r] * norms[c] * j_norm));
            }
        }
        Ok(InvolutionReport {
            matrix,
            max_raw,
            max_scaled,
        })
    }

    /// Largest `|{f, x_j}|` over the samples and coordinates. Passes iff each
    /// sample stays below `1e-10 · max(1, ‖∇f‖ ‖J‖_F)`.
    pub fn casimir_check(&self, f: &dyn ScalarField, samples: &[Vec<f64>]) -> Result<CasimirReport> {
        let mut max_value = 0.0_f64;
        let mut max_scaled = 0.0_f64;
        for s in samples {
            let j = self.structure_matrix(s)?;
            let g = gradient(f, s);
            let scale = (euclid(&g) * j.norm()).max(1.0);
            let worst = (0..self.dim)
                .map(|c| (0..self.dim).map(|r| g[r] * j[(r, c)]).sum::<f64>().abs())
                .fold(0.0, f64::max);
            max_value = max_value.max(worst);
            max_scaled = max_scaled.max(worst / scale);
        }
        Ok(CasimirReport {
            max_value,
            max_scaled,
            pass: max_scaled <= CASIMIR_TOL,
        })
    }

    /// Largest coordinate Jacobiator `{x_i,{x_j,x_k}} + cyclic` at `state`.
    pub fn jacobi_defect(&self, state: &[f64]) -> Result<f64> {
        let j = self.structure_matrix(state)?;
        let derivs: Vec<RealMatrix> = (0..self.dim).map(|l| self.structure_derivative(l)).collect();
        let m = self.dim;
        // {x_i, J_jk} = Σ_l J_il ∂_l J_jk
        let inner = |i: usize, a: usize, b: usize| -> f64 { (0..m).map(|l| j[(i, l)] * derivs[l][(a, b)]).sum() };
        let mut worst = 0.0_f64;
        for i in 0..m {
            for jj in 0..m {
                for k in 0..m {
                    let s = inner(i, jj, k) + inner(jj, k, i) + inner(k, i, jj);
                    worst = worst.max(s.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Rules shared by `pi1` and `w1`; `b0` is the index of `b_1`.
fn dn_rules(n: usize, b0: usize) -> Vec<Rule> {
    let mut rules = Vec::with_capacity(3 * n);
    let rule = |i: usize, b: usize, c: f64| Rule {
        row: i,
        col: b0 + b,
        coefficient: c,
        source: Some(i),
    };
    for i in 0..n {
        rules.push(rule(i, i, -0.5));
    }
    for i in 0..n - 1 {
        rules.push(rule(i, i + 1, 0.5));
    }
    rules.push(rule(n - 1, n - 2, -0.5));
    rules
}

pub const CASIMIR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionReport {
    pub matrix: RealMatrix,
    pub max_raw: f64,
    /// Max of `|{f_i, f_j}| / (1 + ‖∇f_i‖ ‖∇f_j‖ ‖J‖_F)`.
    pub max_scaled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasimirReport {
    pub max_value: f64,
    pub max_scaled: f64,
    pub pass: bool,
}

/// A differentiable function of the flat state.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> f64;

    /// Exact gradient, when one is available.
    fn exact_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Exact gradient if the field provides one, otherwise central differences
/// with step `1e-6 · max(1, |x_j|)`.
pub fn gradient(f: &dyn ScalarField, x: &[f64]) -> Vec<f64> {
    f.exact_gradient(x).unwrap_or_else(|| fd_gradient(f, x))
}

pub fn fd_gradient(f: &dyn ScalarField, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = 1e-6 * x[j].abs().max(1.0);
            probe[j] = x[j] + h;
            let up = f.value(&probe);
            probe[j] = x[j] - h;
            let down = f.value(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Closure-backed [`ScalarField`].
pub struct FnField {
    value: ValueFn,
    gradient: Option<GradientFn>,
}

impl FnField {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    /// The coordinate function `x ↦ x_j` on `dim` coordinates.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        Self::new(move |x| x[j]).with_gradient(move |_| {
            let mut g = vec![0.0; dim];
            g[j] = 1.0;
            g
        })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(move |_| c).with_gradient(move |_| vec![0.0; dim])
    }
}

impl ScalarField for FnField {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn exact_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

/// Ready-made fields for the lattices in this crate, all with exact
/// gradients.
pub mod fields {
    use super::FnField;
    use crate::dn_toda::{build_l, dn_hamiltonian_gradients, dn_pfaffian_gradient, DnFlaschkaPoint};
    use crate::kt_system::{casimir_q, casimir_q_gradient, kt_integral_gradients, kt_integrals, KtFlaschkaPoint};

    fn kt(n: usize, x: &[f64]) -> KtFlaschkaPoint {
        KtFlaschkaPoint::from_state(n, x).expect("state length matches bracket")
    }

    fn dn(n: usize, x: &[f64]) -> DnFlaschkaPoint {
        DnFlaschkaPoint::from_state(n, x).expect("state length matches bracket")
    }

    /// `h_{2i} = ½ Tr A^i` for i in `1..=n`.
    pub fn kt_integral(n: usize, i: usize) -> FnField {
        assert!((1..=n).contains(&i));
        FnField::new(move |x| kt_integrals(&kt(n, x)).expect("Hermitian A")[i - 1])
            .with_gradient(move |x| kt_integral_gradients(&kt(n, x)).row(i - 1).iter().copied().collect())
    }

    pub fn kt_integrals_all(n: usize) -> Vec<FnField> {
        (1..=n).map(|i| kt_integral(n, i)).collect()
    }

    pub fn kt_casimir(n: usize) -> FnField {
        FnField::new(move |x| casimir_q(&kt(n, x))).with_gradient(move |x| casimir_q_gradient(&kt(n, x)))
    }

    /// `H_{2i} = Tr L^{2i} / (2i)` for i in `1..n`.
    pub fn dn_hamiltonian(n: usize, i: usize) -> FnField {
        assert!((1..n).contains(&i));
        FnField::new(move |x| {
            let l = build_l(&dn(n, x));
            let l2 = &l * &l;
            let mut p = l2.clone();
            for _ in 1..i {
                p = &p * &l2;
            }
            p.trace() / (2 * i) as f64
        })
        .with_gradient(move |x| dn_hamiltonian_gradients(&dn(n, x)).row(i - 1).iter().copied().collect())
    }

    /// `P_n`. The gradient falls back to central differences where `L` is
    /// singular.
    pub fn dn_pfaffian(n: usize) -> FnField {
        let value = move |x: &[f64]| {
            let inv = crate::dn_toda::dn_invariants(&build_l(&dn(n, x))).expect("Dn Lax matrix");
            inv[n - 1]
        };
        FnField::new(value).with_gradient(move |x| {
            dn_pfaffian_gradient(&dn(n, x)).unwrap_or_else(|| super::fd_gradient(&FnField::new(value), x))
        })
    }
}

fn quadratic_form(j: &RealMatrix, u: &[f64], v: &[f64]) -> f64 {
    let m = u.len();
    let mut acc = 0.0;
    for r in 0..m {
        if u[r] == 0.0 {
            continue;
        }
        let row: f64 = (0..m).map(|c| j[(r, c)] * v[c]).sum();
        acc += u[r] * row;
    }
    acc
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
