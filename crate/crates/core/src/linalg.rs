//! Small dense real matrices.
//!
//! Every matrix in this crate is at most a handful of rows wide (the built-in
//! groups stop at SO(4) and small tori), so storage lives inline for n ≤ 4 and
//! spills to the heap only for larger user groups. The hot loops of the path
//! simulator run through [`Mat::mul`], [`Mat::expm`] and [`Mat::logm`].

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

type Storage = SmallVec<[f64; 16]>;

/// Square real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Storage,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}[", self.n)?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: SmallVec::from_elem(0.0, n * n),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds from row-major data; `data.len()` must be a perfect square.
    pub fn from_row_major(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n * n, "row-major data has wrong length");
        Self {
            n,
            data: SmallVec::from_slice(data),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= *b;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * *b;
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// Frobenius inner product Σ a_ij b_ij.
    pub fn frobenius_dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_dot(self).sqrt()
    }

    pub fn norm_1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Commutator `self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Solves `self · X = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot underflows.
    pub fn solve(&self, rhs: &Self) -> Option<Self> {
        let n = self.n;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let mut piv = col;
            let mut best = a.data[col * n + col].abs();
            for r in col + 1..n {
                let v = a.data[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                    b.data.swap(col * n + j, piv * n + j);
                }
            }
            let d = a.data[col * n + col];
            for r in col + 1..n {
                let f = a.data[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a.data[r * n + j] -= f * a.data[col * n + j];
                }
                for j in 0..n {
                    b.data[r * n + j] -= f * b.data[col * n + j];
                }
            }
        }
        for col in (0..n).rev() {
            let d = a.data[col * n + col];
            for j in 0..n {
                let mut s = b.data[col * n + j];
                for k in col + 1..n {
                    s -= a.data[col * n + k] * b.data[k * n + j];
                }
                b.data[col * n + j] = s / d;
            }
        }
        Some(b)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.solve(&Self::identity(self.n))
    }

    /// Matrix exponential by scaling and squaring around a diagonal Padé
    /// approximant of degree 6. The scaled argument satisfies ‖X/2^s‖₁ ≤ ½,
    /// where the [6/6] truncation error is below 1e-16.
    pub fn expm(&self) -> Self {
        const PADE: [f64; 7] = [
            1.0,
            0.5,
            5.0 / 44.0,
            1.0 / 66.0,
            1.0 / 792.0,
            1.0 / 15840.0,
            1.0 / 665280.0,
        ];
        let n = self.n;
        let norm = self.norm_1();
        if norm == 0.0 {
            return Self::identity(n);
        }
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let x = self.scale(0.5f64.powi(s));
        let x2 = x.mul(&x);
        let x4 = x2.mul(&x2);
        let x6 = x4.mul(&x2);
        let id = Self::identity(n);
        // even part: c0 I + c2 X² + c4 X⁴ + c6 X⁶, odd part: X (c1 I + c3 X² + c5 X⁴)
        let mut even = id.scale(PADE[0]);
        even.axpy(PADE[2], &x2);
        even.axpy(PADE[4], &x4);
        even.axpy(PADE[6], &x6);
        let mut odd_inner = id.scale(PADE[1]);
        odd_inner.axpy(PADE[3], &x2);
        odd_inner.axpy(PADE[5], &x4);
        let odd = x.mul(&odd_inner);
        let p = even.add(&odd);
        let q = even.sub(&odd);
        let mut r = q.solve(&p).expect("Padé denominator is well conditioned for ‖X‖ ≤ ½");
        for _ in 0..s {
            r = r.mul(&r);
        }
        r
    }

    /// Principal square root by the Denman–Beavers iteration.
    pub fn sqrtm(&self) -> Option<Self> {
        let n = self.n;
        let mut y = self.clone();
        let mut z = Self::identity(n);
        for _ in 0..60 {
            let yi = y.inverse()?;
            let zi = z.inverse()?;
            let y_next = y.add(&zi).scale(0.5);
            let z_next = z.add(&yi).scale(0.5);
            let delta = y_next.sub(&y).frobenius_norm();
            y = y_next;
            z = z_next;
            if delta <= 1e-15 * y.frobenius_norm().max(1.0) {
                return Some(y);
            }
        }
        if y.is_finite() {
            Some(y)
        } else {
            None
        }
    }

    /// Principal logarithm by inverse scaling and squaring: take square
    /// roots until ‖A − I‖_F ≤ ¼, then sum the series
    /// log A = 2 Σ Z^{2j+1}/(2j+1) with Z = (A − I)(A + I)⁻¹.
    ///
    /// Callers are responsible for keeping A away from the negative real
    /// spectrum (see the cut-locus check in `lie`).
    pub fn logm(&self) -> Option<Self> {
        let n = self.n;
        let id = Self::identity(n);
        let mut a = self.clone();
        let mut k = 0;
        while a.sub(&id).frobenius_norm() > 0.25 {
            a = a.sqrtm()?;
            k += 1;
            if k > 40 {
                return None;
            }
        }
        let num = a.sub(&id);
        let den = a.add(&id);
        // Z = (A − I)(A + I)⁻¹; A commutes with (A + I)⁻¹ so either side works.
        let z = den.transpose().solve(&num.transpose())?.transpose();
        let z2 = z.mul(&z);
        let mut term = z.clone();
        let mut sum = z.clone();
        let znorm = z.frobenius_norm();
        let mut j = 1;
        loop {
            term = term.mul(&z2);
            let coef = 1.0 / (2 * j + 1) as f64;
            sum.axpy(coef, &term);
            j += 1;
            if znorm.powi(2 * j as i32 + 1) < 1e-18 || j > 60 {
                break;
            }
        }
        Some(sum.scale(2.0 * 2f64.powi(k)))
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.clone();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += a[(i, j)] * a[(i, j)];
                    }
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl Serialize for Mat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(serde::de::Error::custom("matrix rows must form a square"));
        }
        Ok(Mat::from_rows(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(theta: f64) -> Mat {
        Mat::from_rows(&[
            vec![theta.cos(), -theta.sin()],
            vec![theta.sin(), theta.cos()],
        ])
    }

    #[test]
    fn expm_of_rotation_generator_is_rotation() {
        for &theta in &[0.0, 0.3, 1.0, 3.0, 10.0] {
            let j = Mat::from_rows(&[vec![0.0, -theta], vec![theta, 0.0]]);
            let e = j.expm();
            assert!(e.sub(&rot2(theta)).max_abs() < 1e-13, "theta={theta}");
        }
    }

    #[test]
    fn expm_diagonal() {
        let d = Mat::from_diag(&[1.0, -2.0, 0.5]);
        let e = d.expm();
        for (i, v) in [1.0f64, -2.0, 0.5].iter().enumerate() {
            assert!((e[(i, i)] - v.exp()).abs() < 1e-13 * v.exp().max(1.0));
        }
    }

    #[test]
    fn logm_inverts_expm_near_identity() {
        let x = Mat::from_rows(&[
            vec![0.0, -0.4, 0.2],
            vec![0.4, 0.0, -0.7],
            vec![-0.2, 0.7, 0.0],
        ]);
        let l = x.expm().logm().unwrap();
        assert!(l.sub(&x).max_abs() < 1e-13);
    }

    #[test]
    fn logm_with_square_roots() {
        let x = Mat::from_rows(&[vec![0.0, -2.5], vec![2.5, 0.0]]);
        let l = x.expm().logm().unwrap();
        assert!(l.sub(&x).max_abs() < 1e-12);
    }

    #[test]
    fn solve_and_inverse() {
        let a = Mat::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]);
        let inv = a.inverse().unwrap();
        assert!(a.mul(&inv).sub(&Mat::identity(2)).max_abs() < 1e-15);
        assert!(Mat::zeros(2).inverse().is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = Mat::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 5.0],
        ]);
        let ev = a.symmetric_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 5.0).abs() < 1e-12);
    }
}
