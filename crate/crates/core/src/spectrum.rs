//! Exponential-interaction systems described by their spectrum.
//!
//! A Hamiltonian `H = ½(p,p) + Σ exp((v_i, q))` is determined by the finite
//! set of exponent vectors `Δ = {v_1, ..., v_N}`. This module computes the
//! Gram matrix of `Δ`, the Dynkin-type diagram attached to it, the
//! Kozlov–Treshchev necessary condition for Birkhoff integrability, and the
//! generalized (unscaled) Flaschka map into the polynomial system
//!
//! ```text
//! a_k' = a_k b_k,    b_k' = Σ_i M_ki a_i
//! ```
//!
//! together with its Casimir integrals `F_1 = Σ λ_i b_i`, `F_2 = Π a_i^λ_i`
//! for every linear relation `Σ λ_i v_i = 0`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{null_space, RealMatrix};

/// Tolerance for "is an integer" decisions on ratios and edge counts.
pub const INTEGER_TOL: f64 = 1e-9;
/// Two vectors share a direction iff their cosine exceeds `1 - PARALLEL_TOL`.
pub const PARALLEL_TOL: f64 = 1e-12;
/// Relative singular-value cutoff for the Casimir null space.
pub const NULLSPACE_CUTOFF: f64 = 1e-10;

/// The exponent vectors of an exponential-interaction Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Spectrum {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for Spectrum {
    type Error = Error;

    fn try_from(vectors: Vec<Vec<f64>>) -> Result<Self> {
        Spectrum::new(vectors)
    }
}

impl From<Spectrum> for Vec<Vec<f64>> {
    fn from(s: Spectrum) -> Self {
        s.vectors
    }
}

impl Spectrum {
    /// Validates that there is at least one vector, all vectors have the
    /// same positive length, and none is zero.
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Domain("spectrum must contain at least one vector".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Domain("spectrum vectors must have at least one coordinate".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            check_len("spectrum vector", dim, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("vector {} has a non-finite coordinate", i + 1)));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::Domain(format!("vector {} is zero", i + 1)));
            }
        }
        Ok(Self { dim, vectors })
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vectors `N`.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    /// `N × n` matrix with the vectors as rows.
    pub fn as_matrix(&self) -> RealMatrix {
        DMatrix::from_fn(self.len(), self.dim, |i, j| self.vectors[i][j])
    }

    /// Pairwise inner products `M_ij = (v_i, v_j)`. The upper triangle is
    /// computed and mirrored, so the result is exactly symmetric.
    pub fn gram(&self) -> GramMatrix {
        let n = self.len();
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let d = dot(&self.vectors[i], &self.vectors[j]);
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        GramMatrix(m)
    }

    /// Indices of the maximal vectors: those of greatest length among the
    /// vectors sharing their direction.
    pub fn maximal_vectors(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let vi = &self.vectors[i];
                let li = dot(vi, vi);
                !self
                    .vectors
                    .iter()
                    .any(|vj| cosine(vi, vj) > 1.0 - PARALLEL_TOL && dot(vj, vj) > li * (1.0 + PARALLEL_TOL))
            })
            .collect()
    }

    /// Checks the necessary condition for Birkhoff integrability: for every
    /// maximal `v_i` and every `v_j` linearly independent of it,
    /// `2(v_i, v_j)/(v_i, v_i)` must be a nonpositive integer.
    pub fn check_birkhoff_necessary(&self) -> ClassificationReport {
        let maximal = self.maximal_vectors();
        let mut pairs = Vec::new();
        for &i in &maximal {
            for j in 0..self.len() {
                if i == j || cosine(&self.vectors[i], &self.vectors[j]).abs() > 1.0 - PARALLEL_TOL {
                    continue;
                }
                // Maximal vectors are nonzero, so the ratio is always defined.
                let ratio = kt_ratio(&self.vectors[i], &self.vectors[j]).expect("nonzero vector");
                pairs.push(PairCheck {
                    maximal: i,
                    other: j,
                    ratio,
                    pass: is_nonpositive_integer(ratio),
                });
            }
        }
        let pass = pairs.iter().all(|p| p.pass);
        ClassificationReport {
            maximal,
            pairs,
            pass,
        }
    }

    /// Vectors from `candidates` that could be added to the spectrum while
    /// still satisfying [`Spectrum::check_birkhoff_necessary`]. An empty
    /// result means the spectrum is complete relative to that candidate list.
    pub fn completions(&self, candidates: &[Vec<f64>]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (k, c) in candidates.iter().enumerate() {
            check_len("candidate vector", self.dim, c.len())?;
            if self.vectors.iter().any(|v| v == c) {
                continue;
            }
            let mut extended = self.vectors.clone();
            extended.push(c.clone());
            if Spectrum::new(extended)?.check_birkhoff_necessary().pass {
                out.push(k);
            }
        }
        Ok(out)
    }

    /// Dynkin-type diagram: `4(v_i,v_j)² / ((v_i,v_i)(v_j,v_j))` edges per
    /// pair, vertex weights proportional to squared lengths.
    pub fn dynkin_diagram(&self) -> Result<DynkinDiagram> {
        let gram = self.gram();
        let m = gram.matrix();
        let mut edges = BTreeMap::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let raw = 4.0 * m[(i, j)] * m[(i, j)] / (m[(i, i)] * m[(j, j)]);
                let rounded = raw.round();
                if (raw - rounded).abs() > INTEGER_TOL {
                    return Err(Error::Classification(format!(
                        "edge count between v{} and v{} is {raw}, not an integer",
                        i + 1,
                        j + 1
                    )));
                }
                if rounded > 0.0 {
                    edges.insert((i, j), rounded as u32);
                }
            }
        }
        let squared: Vec<f64> = (0..self.len()).map(|i| m[(i, i)]).collect();
        let weights = normalized_weights(&squared)?;
        Ok(DynkinDiagram { weights, edges })
    }

    /// Potential `Σ exp((v_i, q))`.
    pub fn potential(&self, q: &[f64]) -> Result<f64> {
        check_len("q", self.dim, q.len())?;
        Ok(self.vectors.iter().map(|v| dot(v, q).exp()).sum())
    }

    /// `∇V(q) = Σ v_i exp((v_i, q))`.
    pub fn potential_gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("q", self.dim, q.len())?;
        let mut g = vec![0.0; self.dim];
        for v in &self.vectors {
            let e = dot(v, q).exp();
            for (gi, vi) in g.iter_mut().zip(v) {
                *gi += vi * e;
            }
        }
        Ok(g)
    }

    /// `½(p, p) + Σ exp((v_i, q))`.
    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        check_len("p", self.dim, p.len())?;
        Ok(0.5 * dot(p, p) + self.potential(q)?)
    }

    /// `a_i = -exp((v_i, q))`, `b_i = (v_i, p)`.
    pub fn generalized_flaschka(&self, q: &[f64], p: &[f64]) -> Result<GeneralFlaschkaPoint> {
        check_len("q", self.dim, q.len())?;
        check_len("p", self.dim, p.len())?;
        let a = self.vectors.iter().map(|v| -dot(v, q).exp()).collect();
        let b = self.vectors.iter().map(|v| dot(v, p)).collect();
        Ok(GeneralFlaschkaPoint { a, b })
    }

    /// Vector field `(a', b')` of the polynomial system at `x`.
    pub fn polynomial_flow(&self, x: &GeneralFlaschkaPoint) -> Result<GeneralFlaschkaPoint> {
        check_len("a", self.len(), x.a.len())?;
        check_len("b", self.len(), x.b.len())?;
        let m = self.gram();
        let m = m.matrix();
        let da = x.a.iter().zip(&x.b).map(|(a, b)| a * b).collect();
        let db = (0..self.len())
            .map(|k| (0..self.len()).map(|i| m[(k, i)] * x.a[i]).sum())
            .collect();
        Ok(GeneralFlaschkaPoint { a: da, b: db })
    }

    /// Basis of the relations `Σ λ_i v_i = 0`. Empty when the vectors are
    /// linearly independent.
    pub fn casimir_directions(&self) -> Vec<CasimirDirection> {
        null_space(&self.as_matrix().transpose(), NULLSPACE_CUTOFF)
            .into_iter()
            .map(|v| CasimirDirection {
                lambda: v.iter().copied().collect(),
            })
            .collect()
    }

    /// Residual `‖Σ λ_i v_i‖` of a candidate relation.
    pub fn relation_residual(&self, lambda: &[f64]) -> Result<f64> {
        check_len("lambda", self.len(), lambda.len())?;
        let mut acc = vec![0.0; self.dim];
        for (l, v) in lambda.iter().zip(&self.vectors) {
            for (s, x) in acc.iter_mut().zip(v) {
                *s += l * x;
            }
        }
        Ok(dot(&acc, &acc).sqrt())
    }

    /// Evaluates `(F_1, F_2)` for the relation `dir` at `x`.
    ///
    /// `F_2` is computed as `Π |a_i|^λ_i`; the sign `Π sign(a_i)^λ_i` is
    /// attached only when every `λ_i` is an integer.
    pub fn casimir_values(&self, dir: &CasimirDirection, x: &GeneralFlaschkaPoint) -> Result<CasimirValues> {
        check_len("lambda", self.len(), dir.lambda.len())?;
        check_len("a", self.len(), x.a.len())?;
        check_len("b", self.len(), x.b.len())?;
        let f1 = dir.lambda.iter().zip(&x.b).map(|(l, b)| l * b).sum();
        let integral = dir.lambda.iter().all(|l| (l - l.round()).abs() <= INTEGER_TOL);
        let mut log_mag = 0.0;
        let mut zero = false;
        let mut negative = false;
        for (i, (&l, &a)) in dir.lambda.iter().zip(&x.a).enumerate() {
            if l == 0.0 {
                continue;
            }
            if a == 0.0 {
                if l < 0.0 {
                    return Err(Error::Evaluation(format!(
                        "a_{} = 0 raised to negative power {l}",
                        i + 1
                    )));
                }
                zero = true;
                continue;
            }
            log_mag += l * a.abs().ln();
            if integral && a < 0.0 && (l.round() as i64) % 2 != 0 {
                negative = !negative;
            }
        }
        let magnitude = if zero { 0.0 } else { log_mag.exp() };
        let f2 = if negative { -magnitude } else { magnitude };
        Ok(CasimirValues {
            f1,
            f2,
            signed: integral,
        })
    }
}

/// Spectrum of the Kozlov–Treshchev system
/// `Σ e^{q_i - q_{i+1}} + e^{q_{n-1} + q_n} + e^{-q_1} + e^{-2 q_1}`:
/// `e_i - e_{i+1}` (i < n), `e_{n-1} + e_n`, `-e_1`, `-2 e_1`.
pub fn kt_spectrum(n: usize) -> Result<Spectrum> {
    if n < 4 {
        return Err(Error::Domain(format!("kt_spectrum requires n >= 4, got {n}")));
    }
    let mut vs = dn_simple_roots(n)?.vectors;
    let mut e1 = vec![0.0; n];
    e1[0] = -1.0;
    vs.push(e1.clone());
    e1[0] = -2.0;
    vs.push(e1);
    Spectrum::new(vs)
}

/// Simple roots of Dₙ: `e_i - e_{i+1}` for i < n, then `e_{n-1} + e_n`.
pub fn dn_simple_roots(n: usize) -> Result<Spectrum> {
    if n < 4 {
        return Err(Error::Domain(format!("Dn requires n >= 4, got {n}")));
    }
    let mut vs = a_chain(n);
    let mut v = vec![0.0; n];
    v[n - 2] = 1.0;
    v[n - 1] = 1.0;
    vs.push(v);
    Spectrum::new(vs)
}

/// Simple roots of A_{n-1} in `R^n` (the classical Toda chain).
pub fn a_simple_roots(n: usize) -> Result<Spectrum> {
    if n < 2 {
        return Err(Error::Domain(format!("A_(n-1) requires n >= 2, got {n}")));
    }
    Spectrum::new(a_chain(n))
}

fn a_chain(n: usize) -> Vec<Vec<f64>> {
    (0..n - 1)
        .map(|i| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v[i + 1] = -1.0;
            v
        })
        .collect()
}

/// `2 (v_i, v_j) / (v_i, v_i)`.
pub fn kt_ratio(vi: &[f64], vj: &[f64]) -> Result<f64> {
    check_len("vj", vi.len(), vj.len())?;
    let nn = dot(vi, vi);
    if nn == 0.0 {
        return Err(Error::Domain("kt_ratio of a zero vector".into()));
    }
    Ok(2.0 * dot(vi, vj) / nn)
}

/// Gram matrix `M_ij = (v_i, v_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(RealMatrix);

impl GramMatrix {
    pub fn matrix(&self) -> &RealMatrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }
}

/// One tested pair of the Birkhoff necessary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    /// 0-based index of the maximal vector.
    pub maximal: usize,
    pub other: usize,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub maximal: Vec<usize>,
    pub pairs: Vec<PairCheck>,
    pub pass: bool,
}

impl ClassificationReport {
    pub fn violations(&self) -> impl Iterator<Item = &PairCheck> {
        self.pairs.iter().filter(|p| !p.pass)
    }
}

/// Graph on the spectrum vectors with integer edge multiplicities and
/// squared-length vertex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DynkinDiagram {
    /// Squared lengths divided by their greatest common rational divisor,
    /// which leaves coprime positive integers.
    pub weights: Vec<u64>,
    /// Nonzero multiplicities keyed by `(i, j)` with `i < j`.
    pub edges: BTreeMap<(usize, usize), u32>,
}

impl DynkinDiagram {
    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn multiplicity(&self, i: usize, j: usize) -> u32 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    /// Weights sorted ascending, for isomorphism-free comparisons.
    pub fn weight_multiset(&self) -> Vec<u64> {
        let mut w = self.weights.clone();
        w.sort_unstable();
        w
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.edges
            .iter()
            .filter(|((a, b), _)| *a == i || *b == i)
            .map(|(_, m)| *m)
            .sum()
    }
}

/// Point `(a, b)` of the generalized Flaschka variables; also used for
/// tangent vectors of the polynomial flow.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFlaschkaPoint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl GeneralFlaschkaPoint {
    pub fn to_state(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn from_state(state: &[f64]) -> Result<Self> {
        if !state.len().is_multiple_of(2) {
            return Err(Error::Domain("generalized Flaschka state must have even length".into()));
        }
        let (a, b) = state.split_at(state.len() / 2);
        Ok(Self {
            a: a.to_vec(),
            b: b.to_vec(),
        })
    }
}

/// Coefficients of a linear relation `Σ λ_i v_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CasimirDirection {
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CasimirValues {
    pub f1: f64,
    pub f2: f64,
    /// Whether `f2` carries the sign of the product (integer exponents) or
    /// is only the magnitude.
    pub signed: bool,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y) / (dot(x, x) * dot(y, y)).sqrt()
}

fn is_nonpositive_integer(r: f64) -> bool {
    let k = r.round();
    k <= 0.0 && (r - k).abs() <= INTEGER_TOL
}

/// Continued-fraction approximation `p/q` with `q <= max_den`, accepted only
/// if within `INTEGER_TOL` relative.
fn to_rational(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if x <= 0.0 || !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= INTEGER_TOL * x.max(1.0) {
            return Some((h1, k1));
        }
        let frac = r - a as f64;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn normalized_weights(squared: &[f64]) -> Result<Vec<u64>> {
    use num_integer::Integer;
    let rationals = squared
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            to_rational(s, 1_000_000).ok_or_else(|| {
                Error::Classification(format!("squared length of v{} ({s}) is not a small rational", i + 1))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // gcd(p_i / q_i) = gcd(p_i) / lcm(q_i); weight_i = (p_i / q_i) / gcd.
    let num_gcd = rationals.iter().fold(0u64, |g, &(p, _)| g.gcd(&p));
    let den_lcm = rationals.iter().fold(1u64, |l, &(_, q)| l.lcm(&q));
    Ok(rationals
        .iter()
        .map(|&(p, q)| (p / num_gcd) * (den_lcm / q))
        .collect())
}
