//! Cylinder functionals on W(g): the exponential class
//! w ↦ exp(c + m⟨k,k⟩ + Σ_i z_i S_{h_i}(w)) with k = Σ_i z_i h_i, and finite
//! Hermite expansions in normalized increments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ito_left;
use crate::lie::{AlgebraVector, LieGroupSpec};
use crate::linalg::Mat;
use crate::path::{AlgebraPath, GroupPath, StepFunction, TimeGrid};

/// One summand z·S_h of the exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub z: Complex64,
    pub h: StepFunction,
}

/// exp(c + m⟨k,k⟩ + S_k(w)) where k = Σ z_i h_i and ⟨k,k⟩ = Σ_j Δt k_j·k_j is
/// the bilinear (not Hermitian) square. The integer m is only touched by the
/// Fourier–Wiener transform, which keeps that transform exact on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderExponential {
    pub grid: TimeGrid,
    pub dim: usize,
    pub c: Complex64,
    #[serde(default)]
    pub m: i32,
    pub terms: Vec<ExpTerm>,
}

pub(crate) fn times_i(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

impl CylinderExponential {
    pub fn constant(grid: TimeGrid, dim: usize, c: Complex64) -> Self {
        Self { grid, dim, c, m: 0, terms: Vec::new() }
    }

    pub fn one(grid: TimeGrid, dim: usize) -> Self {
        Self::constant(grid, dim, Complex64::new(0.0, 0.0))
    }

    /// w ↦ exp(c + z·S_h(w)).
    pub fn new(c: Complex64, z: Complex64, h: StepFunction) -> Self {
        Self {
            grid: h.grid,
            dim: h.dim(),
            c,
            m: 0,
            terms: vec![ExpTerm { z, h }],
        }
    }

    /// The character φ̂(w) = e^{i S_h(w)}.
    pub fn character(h: StepFunction) -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), h)
    }

    /// The real exponential e^{S_h(w)}.
    pub fn real_exponential(h: StepFunction) -> Self {
        Self::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), h)
    }

    pub fn add_term(mut self, z: Complex64, h: StepFunction) -> Result<Self> {
        self.grid.ensure_same(&h.grid)?;
        if h.dim() != self.dim {
            return Err(Error::InvalidConfig("direction has the wrong algebra dimension".into()));
        }
        self.terms.push(ExpTerm { z, h });
        Ok(self)
    }

    pub fn add_constant(mut self, c: Complex64) -> Self {
        self.c += c;
        self
    }

    /// Cellwise combined direction k_j = Σ_i z_i h_{i,j}.
    pub fn direction(&self) -> Vec<Vec<Complex64>> {
        let mut k = vec![vec![Complex64::new(0.0, 0.0); self.dim]; self.grid.steps];
        for t in &self.terms {
            for (kj, hj) in k.iter_mut().zip(&t.h.cells) {
                for (a, b) in kj.iter_mut().zip(hj.coords()) {
                    *a += t.z * b;
                }
            }
        }
        k
    }

    /// ⟨k,k⟩ without conjugation.
    pub fn bilinear_square(&self) -> Complex64 {
        bilinear(&self.direction(), &self.direction(), self.grid.dt())
    }

    pub fn effective_offset(&self) -> Complex64 {
        if self.m == 0 {
            self.c
        } else {
            self.c + self.bilinear_square() * self.m as f64
        }
    }

    /// Same functional with the ⟨k,k⟩ multiple folded into the offset.
    pub fn collapsed(&self) -> Self {
        Self {
            c: self.effective_offset(),
            m: 0,
            ..self.clone()
        }
    }

    /// log f(w); the grid of w must equal or refine the grid of f.
    pub fn eval_log(&self, w: &AlgebraPath) -> Result<Complex64> {
        let r = refinement(&self.grid, &w.grid)?;
        let mut s = self.effective_offset();
        for t in &self.terms {
            let mut acc = 0.0;
            for (j, h) in t.h.cells.iter().enumerate() {
                acc += h.dot(&w.values[(j + 1) * r].sub(&w.values[j * r]));
            }
            s += t.z * acc;
        }
        Ok(s)
    }

    pub fn eval(&self, w: &AlgebraPath) -> Result<Complex64> {
        Ok(self.eval_log(w)?.exp())
    }

    /// E f = exp(c_eff + ½⟨k,k⟩).
    pub fn gaussian_expectation(&self) -> Complex64 {
        (self.effective_offset() + 0.5 * self.bilinear_square()).exp()
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            c: self.c.conj(),
            m: self.m,
            terms: self
                .terms
                .iter()
                .map(|t| ExpTerm { z: t.z.conj(), h: t.h.clone() })
                .collect(),
        }
    }

    /// Pointwise product: offsets add and the term lists concatenate.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            grid: self.grid,
            dim: self.dim,
            c: self.effective_offset() + other.effective_offset(),
            m: 0,
            terms,
        })
    }

    /// Gaussian pairing ⟨f,g⟩ = E[f·ḡ] in closed form.
    pub fn pairing(&self, other: &Self) -> Result<Complex64> {
        Ok(self.product(&other.conj())?.gaussian_expectation())
    }

    pub fn norm_sq(&self) -> f64 {
        self.pairing(self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// f ∘ Q where (Qw) has increments Q_jΔw_j; each direction maps to Q_jᵀh_j.
    pub fn rotated(&self, q: &CellRotation) -> Result<Self> {
        self.grid.ensure_same(&q.grid)?;
        let base = self.collapsed();
        Ok(Self {
            terms: base
                .terms
                .iter()
                .map(|t| ExpTerm { z: t.z, h: q.transpose_apply(&t.h) })
                .collect(),
            ..base
        })
    }

    /// f(· + ∫a): adds Σ z_i⟨h_i, a⟩ to the offset.
    pub fn translated(&self, a: &StepFunction) -> Result<Self> {
        let mut base = self.collapsed();
        let mut shift = Complex64::new(0.0, 0.0);
        for t in &base.terms {
            shift += t.z * t.h.l2_inner(a)?;
        }
        base.c += shift;
        Ok(base)
    }

    /// The same functional with every direction repeated onto a refining grid.
    pub fn refined(&self, fine: &TimeGrid) -> Result<Self> {
        let r = refinement(&self.grid, fine)?;
        Ok(Self {
            grid: *fine,
            terms: self
                .terms
                .iter()
                .map(|t| ExpTerm {
                    z: t.z,
                    h: StepFunction {
                        grid: *fine,
                        cells: t.h.cells.iter().flat_map(|c| std::iter::repeat_n(c.clone(), r)).collect(),
                    },
                })
                .collect(),
            ..self.clone()
        })
    }

    /// Largest difference between the stored data of two functionals.
    pub fn max_data_difference(&self, other: &Self) -> f64 {
        if self.grid != other.grid || self.terms.len() != other.terms.len() || self.m != other.m {
            return f64::INFINITY;
        }
        let mut d = (self.c - other.c).norm();
        for (a, b) in self.terms.iter().zip(&other.terms) {
            d = d.max((a.z - b.z).norm());
            for (x, y) in a.h.cells.iter().zip(&b.h.cells) {
                d = d.max(x.sub(y).max_abs());
            }
        }
        d
    }

    /// Largest difference between the normal forms (c_eff, k) of two
    /// functionals, i.e. equality as functions of w.
    pub fn functional_difference(&self, other: &Self) -> f64 {
        if self.grid != other.grid {
            return f64::INFINITY;
        }
        let mut d = (self.effective_offset() - other.effective_offset()).norm();
        for (x, y) in self.direction().iter().zip(&other.direction()) {
            for (a, b) in x.iter().zip(y) {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

pub(crate) fn bilinear(a: &[Vec<Complex64>], b: &[Vec<Complex64>], dt: f64) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            s += u * v;
        }
    }
    s * dt
}

/// Ratio of cell counts when `fine` refines `coarse` over the same horizon.
pub(crate) fn refinement(coarse: &TimeGrid, fine: &TimeGrid) -> Result<usize> {
    let mismatch = || Error::GridMismatch {
        left: coarse.describe(),
        right: fine.describe(),
    };
    if (coarse.horizon - fine.horizon).abs() > 1e-12 * coarse.horizon || fine.steps % coarse.steps != 0 {
        return Err(mismatch());
    }
    Ok(fine.steps / coarse.steps)
}

/// A cellwise orthogonal map of increments, Δw_j ↦ Q_jΔw_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRotation {
    pub grid: TimeGrid,
    pub mats: Vec<Mat>,
}

impl CellRotation {
    pub fn identity(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            mats: vec![Mat::identity(dim); grid.steps],
        }
    }

    /// O_{ρ⁻¹} for a path ρ sampled on the grid: Q_j = Ad_{ρ(t_j)⁻¹}.
    pub fn inverse_adjoint(spec: &LieGroupSpec, rho: &GroupPath) -> Self {
        Self {
            grid: rho.grid,
            mats: rho.values[..rho.grid.steps]
                .iter()
                .map(|g| spec.adjoint_matrix(&g.inverse()))
                .collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            grid: self.grid,
            mats: self.mats.iter().map(Mat::transpose).collect(),
        }
    }

    fn transpose_apply(&self, h: &StepFunction) -> StepFunction {
        StepFunction {
            grid: h.grid,
            cells: h.cells.iter().zip(&self.mats).map(|(v, q)| mat_t_vec(q, v)).collect(),
        }
    }

    pub fn apply_step(&self, h: &StepFunction) -> StepFunction {
        StepFunction {
            grid: h.grid,
            cells: h.cells.iter().zip(&self.mats).map(|(v, q)| mat_vec(q, v)).collect(),
        }
    }

    /// The path with increments Q_jΔw_j (w on this grid).
    pub fn apply_path(&self, w: &AlgebraPath) -> Result<AlgebraPath> {
        self.grid.ensure_same(&w.grid)?;
        Ok(AlgebraPath::from_increments(
            w.grid,
            w.dim(),
            w.increments().iter().zip(&self.mats).map(|(dw, q)| mat_vec(q, dw)),
        ))
    }
}

fn mat_vec(q: &Mat, v: &AlgebraVector) -> AlgebraVector {
    let n = q.dim();
    let mut out = AlgebraVector::zeros(n);
    for i in 0..n {
        out.0[i] = (0..n).map(|j| q[(i, j)] * v.0[j]).sum();
    }
    out
}

fn mat_t_vec(q: &Mat, v: &AlgebraVector) -> AlgebraVector {
    let n = q.dim();
    let mut out = AlgebraVector::zeros(n);
    for i in 0..n {
        out.0[i] = (0..n).map(|j| q[(j, i)] * v.0[j]).sum();
    }
    out
}

/// Probabilists' Hermite polynomial He_n(x).
pub fn hermite(n: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let next = x * b - k as f64 * a;
        a = b;
        b = next;
    }
    b
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// X = ⟨ξ, w(end) − w(start)⟩/σ with σ = |ξ|·√(end − start), a standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteVariable {
    pub start: f64,
    pub end: f64,
    pub direction: AlgebraVector,
}

impl HermiteVariable {
    pub fn sigma(&self) -> f64 {
        self.direction.norm() * (self.end - self.start).sqrt()
    }

    pub fn eval(&self, w: &AlgebraPath) -> Result<f64> {
        let at = |t: f64| {
            w.grid.node_index(t).ok_or_else(|| Error::InvalidPartition(format!("t = {t} is not a node of {}", w.grid.describe())))
        };
        let (i, j) = (at(self.start)?, at(self.end)?);
        Ok(self.direction.dot(&w.values[j].sub(&w.values[i])) / self.sigma())
    }

    fn independent_of(&self, other: &Self) -> bool {
        self.end <= other.start || other.end <= self.start || self.direction.dot(&other.direction).abs() < 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTerm {
    pub coefficient: f64,
    pub degrees: Vec<u32>,
}

/// Σ_a c_a Π_j He_{n_{a,j}}(X_j) over independent normalized increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderPolynomial {
    pub variables: Vec<HermiteVariable>,
    pub terms: Vec<HermiteTerm>,
}

impl CylinderPolynomial {
    pub fn new(variables: Vec<HermiteVariable>, terms: Vec<HermiteTerm>) -> Result<Self> {
        for (i, v) in variables.iter().enumerate() {
            if !(v.end > v.start) || !(v.direction.norm() > 0.0) {
                return Err(Error::InvalidConfig(format!("variable {i} has an empty interval or zero direction")));
            }
            if variables[..i].iter().any(|u| !u.independent_of(v)) {
                return Err(Error::InvalidConfig(format!("variable {i} is correlated with an earlier one")));
            }
        }
        if terms.iter().any(|t| t.degrees.len() != variables.len()) {
            return Err(Error::InvalidConfig("degree vector length differs from the variable count".into()));
        }
        Ok(Self { variables, terms })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            variables: Vec::new(),
            terms: vec![HermiteTerm { coefficient: c, degrees: Vec::new() }],
        }
    }

    /// A single monomial Π He_{n_j}(X_j).
    pub fn monomial(variables: Vec<HermiteVariable>, degrees: Vec<u32>) -> Result<Self> {
        Self::new(variables, vec![HermiteTerm { coefficient: 1.0, degrees }])
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.degrees.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn eval_normalized(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient * t.degrees.iter().zip(x).map(|(n, xi)| hermite(*n, *xi)).product::<f64>())
            .sum()
    }

    pub fn eval(&self, w: &AlgebraPath) -> Result<f64> {
        let x = self.variables.iter().map(|v| v.eval(w)).collect::<Result<Vec<_>>>()?;
        Ok(self.eval_normalized(&x))
    }

    /// Only the degree-zero monomial survives.
    pub fn gaussian_expectation(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.degrees.iter().all(|n| *n == 0))
            .map(|t| t.coefficient)
            .sum()
    }

    /// E[p·q] from orthogonality, E[He_m He_n] = n!·δ_{mn}. Both sides must
    /// use the same variables.
    pub fn pairing(&self, other: &Self) -> Result<f64> {
        if self.variables != other.variables {
            return Err(Error::Unsupported("pairing of polynomials over different variables".into()));
        }
        let mut s = 0.0;
        for a in &self.terms {
            for b in &other.terms {
                if a.degrees == b.degrees {
                    s += a.coefficient * b.coefficient * a.degrees.iter().map(|n| factorial(*n)).product::<f64>();
                }
            }
        }
        Ok(s)
    }

    pub fn norm_sq(&self) -> f64 {
        self.pairing(self).unwrap_or(f64::NAN)
    }
}

/// Either functional class on W(g).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum CylinderFunctional {
    Exponential(CylinderExponential),
    Polynomial(CylinderPolynomial),
}

impl CylinderFunctional {
    pub fn eval(&self, w: &AlgebraPath) -> Result<Complex64> {
        match self {
            Self::Exponential(f) => f.eval(w),
            Self::Polynomial(p) => Ok(Complex64::new(p.eval(w)?, 0.0)),
        }
    }

    pub fn gaussian_expectation(&self) -> Complex64 {
        match self {
            Self::Exponential(f) => f.gaussian_expectation(),
            Self::Polynomial(p) => Complex64::new(p.gaussian_expectation(), 0.0),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// F(g) = f(B^L(g)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCylinderFunction {
    pub inner: CylinderFunctional,
}

impl GroupCylinderFunction {
    pub fn new(inner: CylinderFunctional) -> Self {
        Self { inner }
    }

    pub fn eval(&self, spec: &LieGroupSpec, g: &GroupPath) -> Result<Complex64> {
        self.inner.eval(&ito_left(spec, g)?)
    }
}
