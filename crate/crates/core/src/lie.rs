//! Matrix Lie groups, their Lie algebras and the Ad-invariant inner product.
//!
//! A [`LieGroupSpec`] carries an orthonormal basis `g_0` of the algebra as
//! real skew-symmetric matrices. Every compact matrix group in scope sits
//! inside SO(n), so the inner product is the trace form
//! ⟨X, Y⟩ = −½·trace(XY), which is Ad-invariant for any orthogonal
//! conjugation and makes the standard generators orthonormal. Algebra
//! elements are carried as coordinates in `g_0`, so |X|² is the Euclidean
//! norm of the coordinate vector.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_CUT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum GroupKind {
    /// k-dimensional torus as 2k×2k block-diagonal rotations.
    Torus { k: usize },
    /// SO(n) with generators E_ji − E_ij.
    SpecialOrthogonal { n: usize },
    /// Caller-supplied skew-symmetric basis.
    UserSupplied,
}

impl GroupKind {
    pub fn label(&self) -> String {
        match self {
            GroupKind::Torus { k: 1 } => "circle".to_string(),
            GroupKind::Torus { k } => format!("torus{k}"),
            GroupKind::SpecialOrthogonal { n } => format!("so{n}"),
            GroupKind::UserSupplied => "user".to_string(),
        }
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self, GroupKind::Torus { .. } | GroupKind::SpecialOrthogonal { n: 2 })
    }
}

/// Coordinates of a Lie algebra element in the orthonormal basis `g_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlgebraVector(pub SmallVec<[f64; 6]>);

impl AlgebraVector {
    pub fn zeros(d: usize) -> Self {
        Self(SmallVec::from_elem(0.0, d))
    }

    pub fn from_slice(c: &[f64]) -> Self {
        Self(SmallVec::from_slice(c))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = Self::zeros(d);
        v.0[i] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// A group element as an n×n real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Mat);

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n))
    }

    #[inline]
    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(self.0.mul(&other.0))
    }

    /// Inverse; exact for the orthogonal groups in scope (a transpose).
    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// ‖gᵀg − I‖_F, the distance to the orthogonal group.
    pub fn membership_residual(&self) -> f64 {
        let n = self.0.dim();
        self.0.transpose().mul(&self.0).sub(&Mat::identity(n)).frobenius_norm()
    }

    /// Largest rotation angle θ_max ∈ [0, π] of an orthogonal matrix, from
    /// the top eigenvalue 2 − 2cos θ_max of 2I − g − gᵀ.
    pub fn max_rotation_angle(&self) -> f64 {
        let n = self.0.dim();
        let s = Mat::identity(n)
            .scale(2.0)
            .sub(&self.0)
            .sub(&self.0.transpose());
        let top = s.symmetric_eigenvalues().last().copied().unwrap_or(0.0);
        (1.0 - top / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Σ_{A∈g_0} A·A, together with contraction of Σ A⊗A against bilinear forms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CasimirData {
    pub c2_matrix: Mat,
    #[serde(skip)]
    basis: Vec<Mat>,
}

impl CasimirData {
    /// Evaluates Σ_{A∈g_0} B(A, A) for a bilinear form B on matrices.
    pub fn contract<F: Fn(&Mat, &Mat) -> f64>(&self, form: F) -> f64 {
        self.basis.iter().map(|a| form(a, a)).sum()
    }
}

/// A compact matrix group with its orthonormal algebra basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LieGroupSpec {
    pub kind: GroupKind,
    pub matrix_size: usize,
    pub basis: Vec<Mat>,
    pub metric_tolerance: f64,
    pub cut_margin: f64,
}

/// ⟨X, Y⟩ = −½·trace(XY) on matrices.
/// Closed-form exponential of a skew 2×2 or 3×3 matrix (Rodrigues).
fn skew_exp_small(k: &Mat) -> Mat {
    let n = k.dim();
    let theta = (0.5 * k.frobenius_dot(k)).sqrt();
    if n == 2 {
        let (s, c) = k[(1, 0)].sin_cos();
        let mut r = Mat::zeros(2);
        r[(0, 0)] = c;
        r[(0, 1)] = -s;
        r[(1, 0)] = s;
        r[(1, 1)] = c;
        return r;
    }
    let (a, b) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, 2.0 * ((0.5 * theta).sin() / theta).powi(2))
    };
    let mut r = Mat::identity(n);
    r.axpy(a, k);
    r.axpy(b, &k.mul(k));
    r
}

/// Closed-form principal log of a 2×2 or 3×3 rotation; `None` for other
/// sizes and for 3×3 angles within 1e-2 of π, where the formula loses accuracy.
fn skew_log_small(g: &Mat) -> Option<Mat> {
    match g.dim() {
        2 => {
            let th = g[(1, 0)].atan2(g[(0, 0)]);
            Some(Mat::from_rows(&[vec![0.0, -th], vec![th, 0.0]]))
        }
        3 => {
            let mut anti = g.sub(&g.transpose());
            let th = (anti.frobenius_norm() / (2.0 * SQRT_2)).atan2((g.trace() - 1.0) * 0.5);
            if th > PI - 1e-2 {
                return None;
            }
            // θ/(2 sin θ), with its series near 0.
            let f = if th < 1e-4 { 0.5 + th * th / 12.0 } else { 0.5 * th / th.sin() };
            anti = anti.scale(f);
            Some(anti)
        }
        _ => None,
    }
}

pub fn trace_form(x: &Mat, y: &Mat) -> f64 {
    -0.5 * x.mul(y).trace()
}

impl LieGroupSpec {
    /// The circle and higher tori as block-diagonal rotation groups.
    pub fn torus(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidGroup("torus dimension must be positive".into()));
        }
        let n = 2 * k;
        let basis = (0..k)
            .map(|b| {
                let mut m = Mat::zeros(n);
                m[(2 * b, 2 * b + 1)] = -1.0;
                m[(2 * b + 1, 2 * b)] = 1.0;
                m
            })
            .collect();
        Self::validated(GroupKind::Torus { k }, n, basis, DEFAULT_TOLERANCE)
    }

    /// SO(n). For n = 3 the basis is L₁, L₂, L₃ with [L₁, L₂] = L₃.
    pub fn special_orthogonal(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGroup("SO(n) needs n ≥ 2".into()));
        }
        let basis = if n == 3 {
            let mut l1 = Mat::zeros(3);
            l1[(2, 1)] = 1.0;
            l1[(1, 2)] = -1.0;
            let mut l2 = Mat::zeros(3);
            l2[(0, 2)] = 1.0;
            l2[(2, 0)] = -1.0;
            let mut l3 = Mat::zeros(3);
            l3[(1, 0)] = 1.0;
            l3[(0, 1)] = -1.0;
            vec![l1, l2, l3]
        } else {
            let mut b = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let mut m = Mat::zeros(n);
                    m[(j, i)] = 1.0;
                    m[(i, j)] = -1.0;
                    b.push(m);
                }
            }
            b
        };
        Self::validated(GroupKind::SpecialOrthogonal { n }, n, basis, DEFAULT_TOLERANCE)
    }

    pub fn so3() -> Self {
        Self::special_orthogonal(3).expect("built-in SO(3) is valid")
    }

    pub fn circle() -> Self {
        Self::torus(1).expect("built-in circle is valid")
    }

    /// User-supplied basis of skew-symmetric matrices. With `orthonormalize`
    /// the basis is Gram–Schmidt orthonormalized under the trace form first.
    pub fn from_basis(basis: Vec<Mat>, tolerance: f64, orthonormalize: bool) -> Result<Self> {
        let n = basis
            .first()
            .map(|m| m.dim())
            .ok_or_else(|| Error::InvalidGroup("empty basis".into()))?;
        if basis.iter().any(|m| m.dim() != n) {
            return Err(Error::InvalidGroup("basis matrices differ in size".into()));
        }
        let basis = if orthonormalize {
            gram_schmidt(&basis)?
        } else {
            basis
        };
        Self::validated(GroupKind::UserSupplied, n, basis, tolerance)
    }

    fn validated(kind: GroupKind, n: usize, basis: Vec<Mat>, tol: f64) -> Result<Self> {
        for (i, a) in basis.iter().enumerate() {
            let r = a.add(&a.transpose()).frobenius_norm();
            if r > tol {
                return Err(Error::NotSkew { index: i, residual: r });
            }
        }
        let mut dev: f64 = 0.0;
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((trace_form(a, b) - target).abs());
            }
        }
        if dev > tol {
            return Err(Error::NotOrthonormal {
                deviation: dev,
                tolerance: tol,
            });
        }
        let spec = Self {
            kind,
            matrix_size: n,
            basis,
            metric_tolerance: tol,
            cut_margin: DEFAULT_CUT_MARGIN,
        };
        let closure = spec.bracket_closure_residual();
        if closure > 1e-10_f64.max(tol) {
            return Err(Error::NotBracketClosed { residual: closure });
        }
        Ok(spec)
    }

    #[inline]
    pub fn algebra_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_abelian(&self) -> bool {
        self.bracket_structure_norm() < 1e-12
    }

    fn bracket_structure_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                m = m.max(a.commutator(b).max_abs());
            }
        }
        m
    }

    /// Largest residual of projecting [A_i, A_j] onto span(g_0).
    pub fn bracket_closure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                let c = a.commutator(b);
                worst = worst.max(self.projection_residual(&c));
            }
        }
        worst
    }

    /// Σ xᵢ Aᵢ.
    pub fn to_matrix(&self, x: &AlgebraVector) -> Mat {
        let mut m = Mat::zeros(self.matrix_size);
        for (c, a) in x.0.iter().zip(self.basis.iter()) {
            if *c != 0.0 {
                m.axpy(*c, a);
            }
        }
        m
    }

    /// Orthogonal projection of a matrix onto span(g_0) under the trace form.
    pub fn project(&self, m: &Mat) -> AlgebraVector {
        // −½ tr(A M) = ½ Σ A_ij M_ij for skew A.
        AlgebraVector(
            self.basis
                .iter()
                .map(|a| 0.5 * a.frobenius_dot(m))
                .collect(),
        )
    }

    pub fn projection_residual(&self, m: &Mat) -> f64 {
        let x = self.project(m);
        m.sub(&self.to_matrix(&x)).frobenius_norm()
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.matrix_size)
    }

    pub fn zero(&self) -> AlgebraVector {
        AlgebraVector::zeros(self.algebra_dim())
    }

    pub fn exp(&self, x: &AlgebraVector) -> GroupElement {
        let m = self.to_matrix(x);
        GroupElement(match m.dim() {
            2 | 3 => skew_exp_small(&m),
            _ => m.expm(),
        })
    }

    /// Principal logarithm; fails on the cut locus (largest rotation angle
    /// within `cut_margin` of π).
    pub fn log(&self, g: &GroupElement) -> Result<AlgebraVector> {
        let n = self.matrix_size;
        // ‖g − I‖_F < 1 bounds every rotation angle below π/3.
        if g.0.sub(&Mat::identity(n)).frobenius_norm() >= 1.0 {
            let angle = g.max_rotation_angle();
            if angle >= PI - self.cut_margin {
                return Err(Error::CutLocus { angle, step: None });
            }
        }
        let l = match skew_log_small(&g.0) {
            Some(l) => l,
            None => g.0.logm().ok_or(Error::CutLocus {
                angle: g.max_rotation_angle(),
                step: None,
            })?,
        };
        Ok(self.project(&l))
    }

    /// Ad_g X = g X g⁻¹, expressed in coordinates.
    pub fn adjoint(&self, g: &GroupElement, x: &AlgebraVector) -> AlgebraVector {
        let m = g.0.mul(&self.to_matrix(x)).mul(&g.0.transpose());
        self.project(&m)
    }

    /// Matrix of Ad_g on coordinates; column j holds Ad_g A_j.
    pub fn adjoint_matrix(&self, g: &GroupElement) -> Mat {
        let d = self.algebra_dim();
        let mut out = Mat::zeros(d);
        let gt = g.0.transpose();
        for (j, a) in self.basis.iter().enumerate() {
            let c = self.project(&g.0.mul(a).mul(&gt));
            for i in 0..d {
                out[(i, j)] = c.0[i];
            }
        }
        out
    }

    pub fn bracket(&self, x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
        let c = self.to_matrix(x).commutator(&self.to_matrix(y));
        self.project(&c)
    }

    /// ⟨X, Y⟩; equals the coordinate dot product because g_0 is orthonormal.
    pub fn inner(&self, x: &AlgebraVector, y: &AlgebraVector) -> f64 {
        x.dot(y)
    }

    /// ⟨X, Y⟩ computed from the matrix forms, −½·trace(XY).
    pub fn inner_from_matrices(&self, x: &AlgebraVector, y: &AlgebraVector) -> f64 {
        trace_form(&self.to_matrix(x), &self.to_matrix(y))
    }

    pub fn casimir(&self) -> CasimirData {
        let mut c2 = Mat::zeros(self.matrix_size);
        for a in &self.basis {
            c2.add_assign(&a.mul(a));
        }
        CasimirData {
            c2_matrix: c2,
            basis: self.basis.clone(),
        }
    }

    /// A new spec whose basis is A'_i = Σ_j Q_ij A_j for an orthogonal d×d Q.
    pub fn rebased(&self, q: &Mat) -> Result<Self> {
        let d = self.algebra_dim();
        if q.dim() != d {
            return Err(Error::InvalidGroup("change of basis has wrong size".into()));
        }
        let basis = (0..d)
            .map(|i| {
                let mut m = Mat::zeros(self.matrix_size);
                for j in 0..d {
                    m.axpy(q[(i, j)], &self.basis[j]);
                }
                m
            })
            .collect();
        let mut s = Self::validated(self.kind, self.matrix_size, basis, self.metric_tolerance)?;
        s.cut_margin = self.cut_margin;
        Ok(s)
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }

    pub fn to_document(&self) -> GroupDocument {
        GroupDocument {
            kind: self.kind,
            n: self.matrix_size,
            d: self.algebra_dim(),
            basis: self.basis.iter().map(|m| m.as_slice().to_vec()).collect(),
            tolerance: self.metric_tolerance,
            cut_margin: self.cut_margin,
        }
    }

    pub fn from_document(doc: &GroupDocument) -> Result<Self> {
        if doc.basis.len() != doc.d {
            return Err(Error::InvalidGroup(format!(
                "document declares d = {} but carries {} basis matrices",
                doc.d,
                doc.basis.len()
            )));
        }
        let basis = doc
            .basis
            .iter()
            .map(|flat| {
                if flat.len() != doc.n * doc.n {
                    Err(Error::InvalidGroup("basis matrix has wrong length".into()))
                } else {
                    Ok(Mat::from_row_major(doc.n, flat))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::validated(doc.kind, doc.n, basis, doc.tolerance)?;
        s.cut_margin = doc.cut_margin;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    /// Looks up a built-in group by CLI name: `circle`, `torusK`, `so3`, `soN`.
    pub fn by_name(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        if lower == "circle" || lower == "torus" {
            return Self::torus(1);
        }
        if let Some(k) = lower.strip_prefix("torus") {
            let k = k
                .parse()
                .map_err(|_| Error::InvalidGroup(format!("unknown group {name}")))?;
            return Self::torus(k);
        }
        if let Some(n) = lower.strip_prefix("so") {
            let n = n
                .parse()
                .map_err(|_| Error::InvalidGroup(format!("unknown group {name}")))?;
            return Self::special_orthogonal(n);
        }
        Err(Error::InvalidGroup(format!("unknown group {name}")))
    }
}

/// Serialized form of a group spec: basis matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDocument {
    pub kind: GroupKind,
    pub n: usize,
    pub d: usize,
    pub basis: Vec<Vec<f64>>,
    pub tolerance: f64,
    #[serde(default = "default_cut_margin")]
    pub cut_margin: f64,
}

fn default_cut_margin() -> f64 {
    DEFAULT_CUT_MARGIN
}

fn gram_schmidt(basis: &[Mat]) -> Result<Vec<Mat>> {
    let mut out: Vec<Mat> = Vec::with_capacity(basis.len());
    for b in basis {
        let mut v = b.clone();
        for u in &out {
            let c = trace_form(u, &v);
            v.axpy(-c, u);
        }
        let nrm = trace_form(&v, &v);
        if nrm <= 1e-24 {
            return Err(Error::InvalidGroup("basis is linearly dependent".into()));
        }
        out.push(v.scale(1.0 / nrm.sqrt()));
    }
    Ok(out)
}

/// Rotation angle of an SO(3) element from its trace.
pub fn so3_angle(g: &GroupElement) -> f64 {
    ((g.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Angles θ_b ∈ (−π, π] of each 2×2 rotation block of a torus element.
pub fn torus_angles(g: &GroupElement) -> Vec<f64> {
    let k = g.0.dim() / 2;
    (0..k)
        .map(|b| g.0[(2 * b + 1, 2 * b)].atan2(g.0[(2 * b, 2 * b)]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_log_round_trips() {
        let spec = LieGroupSpec::so3();
        for scale in [0.0, 1e-7, 1e-3, 0.5, 2.0, 3.0, 3.1405] {
            let x = AlgebraVector::from_slice(&[0.3, -0.8, 0.5]);
            let x = x.scale(scale / x.norm());
            let back = spec.log(&spec.exp(&x)).unwrap();
            assert!(back.sub(&x).max_abs() < 1e-10, "{scale}");
        }
        let c = LieGroupSpec::circle();
        let x = AlgebraVector::from_slice(&[-2.5]);
        assert!((c.log(&c.exp(&x)).unwrap().coords()[0] + 2.5).abs() < 1e-14);
    }

    #[test]
    fn closed_form_exp_matches_pade() {
        for spec in [LieGroupSpec::so3(), LieGroupSpec::circle()] {
            let d = spec.algebra_dim();
            for scale in [0.0, 1e-6, 1e-3, 0.3, 2.0, 3.1] {
                let x = AlgebraVector::from_slice(&[0.3, -0.8, 0.5][..d]).scale(scale);
                let m = spec.to_matrix(&x);
                assert!(spec.exp(&x).0.sub(&m.expm()).max_abs() < 1e-13, "{scale}");
            }
        }
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> AlgebraVector {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = AlgebraVector::from_slice(&v);
        let r = rng.random_range(0.0..radius);
        v.scale(r / v.norm().max(1e-12))
    }

    #[test]
    fn circle_basis() {
        let g = LieGroupSpec::torus(1).unwrap();
        assert_eq!(g.algebra_dim(), 1);
        assert_eq!(g.matrix_size, 2);
        assert_eq!(g.basis[0].to_rows(), vec![vec![0.0, -1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn so3_basis_is_orthonormal_under_trace_form() {
        let g = LieGroupSpec::so3();
        for i in 0..3 {
            for j in 0..3 {
                let v = -0.5 * g.basis[i].mul(&g.basis[j]).trace();
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn non_closed_basis_is_rejected() {
        // Two so(3) generators without the third are not bracket-closed.
        let so3 = LieGroupSpec::so3();
        let err = LieGroupSpec::from_basis(vec![so3.basis[0].clone(), so3.basis[1].clone()], 1e-9, false);
        assert!(matches!(err, Err(Error::NotBracketClosed { .. })));
    }

    #[test]
    fn non_orthonormal_basis_is_rejected_unless_orthonormalized() {
        let so3 = LieGroupSpec::so3();
        let b = vec![so3.basis[0].scale(2.0), so3.basis[1].add(&so3.basis[0]), so3.basis[2].clone()];
        assert!(matches!(
            LieGroupSpec::from_basis(b.clone(), 1e-9, false),
            Err(Error::NotOrthonormal { .. })
        ));
        let g = LieGroupSpec::from_basis(b, 1e-9, true).unwrap();
        assert_eq!(g.algebra_dim(), 3);
    }

    #[test]
    fn exp_zero_is_identity() {
        let g = LieGroupSpec::so3();
        assert_eq!(g.exp(&g.zero()), g.identity());
    }

    #[test]
    fn exp_pi_l3_matches_rodrigues() {
        let g = LieGroupSpec::so3();
        let x = AlgebraVector::from_slice(&[0.0, 0.0, PI]);
        let e = g.exp(&x);
        // Rodrigues: R = I + sinθ K + (1 − cosθ) K², axis e₃, θ = π.
        let k = &g.basis[2];
        let rod = Mat::identity(3)
            .add(&k.scale(PI.sin()))
            .add(&k.mul(k).scale(1.0 - PI.cos()));
        assert!(e.0.sub(&rod).max_abs() < 1e-14);
        assert!(e.0.sub(&Mat::from_diag(&[-1.0, -1.0, 1.0])).max_abs() < 1e-14);
    }

    #[test]
    fn torus_exp_is_rotation() {
        let g = LieGroupSpec::circle();
        for &theta in &[0.1, 1.3, -2.0, 3.0] {
            let e = g.exp(&AlgebraVector::from_slice(&[theta]));
            let expected = Mat::from_rows(&[
                vec![theta.cos(), -theta.sin()],
                vec![theta.sin(), theta.cos()],
            ]);
            assert!(e.0.sub(&expected).max_abs() < 1e-14);
        }
    }

    #[test]
    fn log_identity_is_zero() {
        let g = LieGroupSpec::so3();
        assert!(g.log(&g.identity()).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn log_on_cut_locus_fails() {
        let g = LieGroupSpec::so3();
        let x = GroupElement(Mat::from_diag(&[-1.0, -1.0, 1.0]));
        assert!(matches!(g.log(&x), Err(Error::CutLocus { .. })));
    }

    #[test]
    fn exp_log_round_trip_ten_thousand() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [LieGroupSpec::so3(), LieGroupSpec::torus(2).unwrap(), LieGroupSpec::special_orthogonal(4).unwrap()] {
            let count = if g.algebra_dim() == 3 { 10_000 } else { 1000 };
            for _ in 0..count {
                let x = random_vector(&mut rng, g.algebra_dim(), 1.0);
                let e = g.exp(&x);
                assert!(e.membership_residual() < g.metric_tolerance);
                let inv = g.exp(&x.neg());
                assert!(e.mul(&inv).0.sub(&Mat::identity(g.matrix_size)).max_abs() < 1e-12);
                let back = g.log(&e).unwrap();
                assert!(back.sub(&x).max_abs() < 1e-10, "{:?} vs {:?}", back, x);
            }
        }
    }

    #[test]
    fn log_far_from_identity() {
        let g = LieGroupSpec::so3();
        let x = AlgebraVector::from_slice(&[0.0, 3.0, 0.0]);
        let back = g.log(&g.exp(&x)).unwrap();
        assert!(back.sub(&x).max_abs() < 1e-10);
    }

    #[test]
    fn adjoint_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = LieGroupSpec::so3();
        let x = random_vector(&mut rng, 3, 2.0);
        assert!(g.adjoint(&g.identity(), &x).sub(&x).max_abs() < 1e-15);
        for _ in 0..200 {
            let a = g.exp(&random_vector(&mut rng, 3, 3.0));
            let b = g.exp(&random_vector(&mut rng, 3, 3.0));
            let x = random_vector(&mut rng, 3, 2.0);
            let y = random_vector(&mut rng, 3, 2.0);
            let ax = g.adjoint(&a, &x);
            assert!((ax.norm() - x.norm()).abs() < 1e-12);
            let m = a.0.mul(&g.to_matrix(&x)).mul(&a.0.transpose());
            assert!(g.projection_residual(&m) < 1e-10);
            assert!((g.inner(&ax, &g.adjoint(&a, &y)) - g.inner(&x, &y)).abs() < 1e-10);
            // Ad_{ab} = Ad_a ∘ Ad_b
            let lhs = g.adjoint(&a.mul(&b), &x);
            let rhs = g.adjoint(&a, &g.adjoint(&b, &x));
            assert!(lhs.sub(&rhs).max_abs() < 1e-10);
            let am = g.adjoint_matrix(&a);
            let via_matrix: Vec<f64> = (0..3).map(|i| (0..3).map(|j| am[(i, j)] * x.0[j]).sum()).collect();
            assert!(ax.sub(&AlgebraVector::from_slice(&via_matrix)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn torus_adjoint_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = LieGroupSpec::torus(2).unwrap();
        for _ in 0..50 {
            let a = g.exp(&random_vector(&mut rng, 2, 3.0));
            let x = random_vector(&mut rng, 2, 2.0);
            assert!(g.adjoint(&a, &x).sub(&x).max_abs() < 1e-14);
        }
    }

    #[test]
    fn bracket_and_inner() {
        let g = LieGroupSpec::so3();
        let l1 = AlgebraVector::basis(3, 0);
        let l2 = AlgebraVector::basis(3, 1);
        let l3 = AlgebraVector::basis(3, 2);
        assert_eq!(g.bracket(&l1, &l2), l3);
        assert_eq!(g.bracket(&l1, &l1).max_abs(), 0.0);
        assert_eq!(g.inner_from_matrices(&l1, &l1), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = random_vector(&mut rng, 3, 2.0);
            let y = random_vector(&mut rng, 3, 2.0);
            let z = random_vector(&mut rng, 3, 2.0);
            assert!(g.bracket(&x, &y).add(&g.bracket(&y, &x)).max_abs() < 1e-14);
            let inv = g.inner(&g.bracket(&x, &y), &z) + g.inner(&y, &g.bracket(&x, &z));
            assert!(inv.abs() < 1e-12);
            assert!((g.inner(&x, &y) - g.inner_from_matrices(&x, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn casimir_is_basis_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [LieGroupSpec::so3(), LieGroupSpec::special_orthogonal(4).unwrap()] {
            let c = g.casimir();
            let d = g.algebra_dim();
            // Random orthogonal Q from the exponential of a random skew d×d matrix.
            let mut s = Mat::zeros(d);
            for i in 0..d {
                for j in i + 1..d {
                    let v: f64 = rng.random_range(-1.5..1.5);
                    s[(i, j)] = v;
                    s[(j, i)] = -v;
                }
            }
            let q = s.expm();
            let g2 = g.rebased(&q).unwrap();
            let c2 = g2.casimir();
            assert!(c.c2_matrix.sub(&c2.c2_matrix).max_abs() < 1e-10);
            let trace_contraction = c.contract(|a, b| a.mul(b).trace());
            assert!((trace_contraction - c.c2_matrix.trace()).abs() < 1e-12);
        }
        let so3 = LieGroupSpec::so3();
        assert!(so3.casimir().c2_matrix.sub(&Mat::identity(3).scale(-2.0)).max_abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let so3 = LieGroupSpec::so3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = Mat::zeros(3);
        for i in 0..3 {
            for j in i + 1..3 {
                let v: f64 = rng.random_range(-1.0..1.0);
                s[(i, j)] = v;
                s[(j, i)] = -v;
            }
        }
        let g = so3.rebased(&s.expm()).unwrap();
        let text = g.to_json().unwrap();
        let back = LieGroupSpec::from_json(&text).unwrap();
        assert_eq!(back, g);
        for (a, b) in back.basis.iter().zip(g.basis.iter()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(LieGroupSpec::by_name("so3").unwrap().algebra_dim(), 3);
        assert_eq!(LieGroupSpec::by_name("circle").unwrap().algebra_dim(), 1);
        assert_eq!(LieGroupSpec::by_name("torus3").unwrap().algebra_dim(), 3);
        assert!(LieGroupSpec::by_name("sl2").is_err());
    }
}
