//! Heat kernels of ½Δ for the flat algebra, tori and SO(3), and the
//! finite-dimensional distributions of group Brownian motion built from them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lie::{so3_angle, torus_angles, AlgebraVector, GroupElement, LieGroupSpec};
use crate::stats::{gauss_legendre_on, ols_fit};

const TRUNCATION_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum KernelVariant {
    FlatGaussian { d: usize },
    WrappedGaussianTorus { k: usize },
    SpectralSo3,
}

/// One irreducible summand: eigenvalue of Δ on χ_ℓ and its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTerm {
    pub ell: usize,
    pub eigenvalue: f64,
    pub dimension: usize,
}

/// How the Laplacian eigenvalues of the characters were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationRecord {
    pub method: String,
    pub sample_points: usize,
    pub seed: u64,
    /// Per ℓ: least-squares eigenvalue and the worst relative eigenfunction residual.
    pub derived: Vec<(usize, f64, f64)>,
    /// λ(ℓ) = a ℓ² + b ℓ + c fitted through the derived values.
    pub quadratic: [f64; 3],
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelModel {
    pub variant: KernelVariant,
    /// Multiplies t on evaluation (1 for the true kernel).
    pub time_scale: f64,
    pub max_terms: usize,
    pub derivation: Option<DerivationRecord>,
}

/// Evaluation point: a group element for compact groups, coordinates for flat.
#[derive(Debug, Clone, Copy)]
pub enum HeatPoint<'a> {
    Group(&'a GroupElement),
    Flat(&'a AlgebraVector),
}

/// χ_ℓ(θ) = sin((2ℓ+1)θ/2)/sin(θ/2) for ℓ = 0..=L, via cos(mθ) recurrence.
pub fn so3_characters(cos_theta: f64, max_ell: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_ell + 1);
    out.push(1.0);
    let mut t_prev = 1.0;
    let mut t_cur = cos_theta;
    let mut acc = 1.0;
    for _ in 1..=max_ell {
        acc += 2.0 * t_cur;
        out.push(acc);
        let t_next = 2.0 * cos_theta * t_cur - t_prev;
        t_prev = t_cur;
        t_cur = t_next;
    }
    out
}

fn so3_cos_angle(g: &GroupElement) -> f64 {
    ((g.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)
}

/// Δχ_ℓ(g) = Σ_A d²/ds² χ_ℓ(g e^{sA}) at s = 0, by twice-Richardson-extrapolated
/// central differences.
fn laplacian_of_character(spec: &LieGroupSpec, g: &GroupElement, ell: usize) -> f64 {
    let chi = |h: &GroupElement| so3_characters(so3_cos_angle(h), ell)[ell];
    let f0 = chi(g);
    let base = 0.02 / (ell as f64 + 1.0);
    let mut total = 0.0;
    for i in 0..spec.algebra_dim() {
        let a = AlgebraVector::basis(spec.algebra_dim(), i);
        let d = |s: f64| {
            let p = chi(&g.mul(&spec.exp(&a.scale(s))));
            let m = chi(&g.mul(&spec.exp(&a.scale(-s))));
            (p - 2.0 * f0 + m) / (s * s)
        };
        let (d1, d2, d4) = (d(base), d(base / 2.0), d(base / 4.0));
        let r1 = (4.0 * d2 - d1) / 3.0;
        let r2 = (4.0 * d4 - d2) / 3.0;
        total += (16.0 * r2 - r1) / 15.0;
    }
    total
}

impl HeatKernelModel {
    pub fn flat(d: usize) -> Self {
        Self {
            variant: KernelVariant::FlatGaussian { d },
            time_scale: 1.0,
            max_terms: 0,
            derivation: None,
        }
    }

    pub fn torus(k: usize) -> Self {
        Self {
            variant: KernelVariant::WrappedGaussianTorus { k },
            time_scale: 1.0,
            max_terms: 0,
            derivation: None,
        }
    }

    /// SO(3) spectral kernel. The character eigenvalues are derived by
    /// differentiating χ_ℓ along the basis of `spec` at random points.
    pub fn so3(spec: &LieGroupSpec) -> Result<Self> {
        Self::so3_with(spec, 12, 6, 20240917)
    }

    pub fn so3_with(spec: &LieGroupSpec, fit_terms: usize, points: usize, seed: u64) -> Result<Self> {
        if spec.matrix_size != 3 || spec.algebra_dim() != 3 {
            return Err(Error::Unsupported("spectral kernel needs a 3-dimensional rotation group".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<GroupElement> = (0..points)
            .map(|_| loop {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let x = AlgebraVector::from_slice(&v);
                let g = spec.exp(&x.scale(rng.random_range(0.4..2.6) / x.norm().max(1e-9)));
                if (0.3..2.8).contains(&so3_angle(&g)) {
                    break g;
                }
            })
            .collect();
        let mut derived = Vec::with_capacity(fit_terms + 1);
        for ell in 0..=fit_terms {
            let pairs: Vec<(f64, f64)> = samples
                .iter()
                .map(|g| (so3_characters(so3_cos_angle(g), ell)[ell], laplacian_of_character(spec, g, ell)))
                .collect();
            let num: f64 = pairs.iter().map(|(c, l)| c * l).sum();
            let den: f64 = pairs.iter().map(|(c, _)| c * c).sum();
            let lambda = if den > 0.0 { num / den } else { 0.0 };
            let scale = pairs.iter().map(|(c, _)| c.abs()).fold(1.0, f64::max) * lambda.abs().max(1.0);
            let resid = pairs
                .iter()
                .map(|(c, l)| (l - lambda * c).abs() / scale)
                .fold(0.0, f64::max);
            derived.push((ell, lambda, resid));
        }
        if let Some(&(ell, _, r)) = derived.iter().find(|(_, _, r)| *r > 1e-6) {
            return Err(Error::InvalidGroup(format!(
                "character χ_{ell} is not a Laplacian eigenfunction (residual {r:.2e})"
            )));
        }
        let quadratic = fit_quadratic(&derived);
        let fit_residual = derived
            .iter()
            .map(|(l, lam, _)| (eval_quadratic(&quadratic, *l) - lam).abs() / lam.abs().max(1.0))
            .fold(0.0, f64::max);
        Ok(Self {
            variant: KernelVariant::SpectralSo3,
            time_scale: 1.0,
            max_terms: 4000,
            derivation: Some(DerivationRecord {
                method: "Richardson-extrapolated second differences of characters along basis one-parameter subgroups".into(),
                sample_points: points,
                seed,
                derived,
                quadratic,
                fit_residual,
            }),
        })
    }

    /// Same kernel with t replaced by scale·t (negative controls).
    pub fn with_time_scale(mut self, scale: f64) -> Self {
        self.time_scale = scale;
        self
    }

    pub fn eigenvalue(&self, ell: usize) -> f64 {
        match &self.derivation {
            Some(rec) => eval_quadratic(&rec.quadratic, ell),
            None => 0.0,
        }
    }

    pub fn spectral_terms(&self, t: f64) -> Result<Vec<SpectralTerm>> {
        let l = self.truncation(t)?;
        Ok((0..=l)
            .map(|ell| SpectralTerm {
                ell,
                eigenvalue: self.eigenvalue(ell),
                dimension: 2 * ell + 1,
            })
            .collect())
    }

    /// Smallest L with (2L+1)²·e^{λ_L t/2} below the truncation tolerance.
    pub fn truncation(&self, t: f64) -> Result<usize> {
        let t = t * self.time_scale;
        for ell in 1..=self.max_terms {
            let d = (2 * ell + 1) as f64;
            if d * d * (self.eigenvalue(ell) * t / 2.0).exp() < TRUNCATION_TOL {
                return Ok(ell);
            }
        }
        Err(Error::TruncationInsufficient {
            t,
            max_terms: self.max_terms,
        })
    }

    /// SO(3) kernel as a function of the rotation angle's cosine.
    pub fn so3_density_cos(&self, t: f64, cos_theta: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let l = self.truncation(t)?;
        let ts = t * self.time_scale;
        let chars = so3_characters(cos_theta, l);
        Ok((0..=l)
            .rev()
            .map(|ell| (2 * ell + 1) as f64 * (self.eigenvalue(ell) * ts / 2.0).exp() * chars[ell])
            .sum())
    }

    /// Circle kernel relative to dθ/2π: 1 + 2Σ e^{−m²t/2} cos(mθ).
    pub fn circle_density(&self, t: f64, theta: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let ts = t * self.time_scale;
        let mut sum = 1.0;
        let mut m = 1usize;
        loop {
            let w = (-((m * m) as f64) * ts / 2.0).exp();
            if w < 1e-17 {
                break;
            }
            sum += 2.0 * w * (m as f64 * theta).cos();
            m += 1;
        }
        Ok(sum)
    }

    /// Density at x relative to normalized Haar measure (compact groups) or
    /// Lebesgue measure on coordinates (flat).
    pub fn kernel_eval(&self, t: f64, x: HeatPoint<'_>) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        match (self.variant, x) {
            (KernelVariant::FlatGaussian { d }, HeatPoint::Flat(v)) => {
                if v.dim() != d {
                    return Err(Error::InvalidGroup("point has wrong dimension".into()));
                }
                let ts = t * self.time_scale;
                Ok((2.0 * PI * ts).powf(-(d as f64) / 2.0) * (-v.norm_sq() / (2.0 * ts)).exp())
            }
            (KernelVariant::WrappedGaussianTorus { k }, HeatPoint::Group(g)) => {
                if g.0.dim() != 2 * k {
                    return Err(Error::InvalidGroup("point has wrong dimension".into()));
                }
                torus_angles(g)
                    .iter()
                    .try_fold(1.0, |acc, th| Ok(acc * self.circle_density(t, *th)?))
            }
            (KernelVariant::SpectralSo3, HeatPoint::Group(g)) => {
                if g.0.dim() != 3 {
                    return Err(Error::InvalidGroup("point has wrong dimension".into()));
                }
                self.so3_density_cos(t, so3_cos_angle(g))
            }
            _ => Err(Error::Unsupported("point type does not match kernel variant".into())),
        }
    }

    /// Σ_i log p_{Δs_i}(x_{i−1}⁻¹ x_i) with x_0 = e.
    pub fn fdd_log_density(&self, times: &[f64], points: &[GroupElement]) -> Result<f64> {
        check_partition(times, points.len())?;
        let mut prev_t = 0.0;
        let mut prev: Option<&GroupElement> = None;
        let mut total = 0.0;
        for (t, x) in times.iter().zip(points) {
            let inc = match prev {
                Some(p) => p.inverse().mul(x),
                None => x.clone(),
            };
            total += self.kernel_eval(t - prev_t, HeatPoint::Group(&inc))?.ln();
            prev_t = *t;
            prev = Some(x);
        }
        Ok(total)
    }

    /// Flat analogue of `fdd_log_density` with additive increments.
    pub fn fdd_log_density_flat(&self, times: &[f64], points: &[AlgebraVector]) -> Result<f64> {
        check_partition(times, points.len())?;
        let mut prev_t = 0.0;
        let mut total = 0.0;
        for (i, (t, x)) in times.iter().zip(points).enumerate() {
            let inc = if i == 0 { x.clone() } else { x.sub(&points[i - 1]) };
            total += self.kernel_eval(t - prev_t, HeatPoint::Flat(&inc))?.ln();
            prev_t = *t;
        }
        Ok(total)
    }

    /// Probability that the class angle of a time-t increment falls in [a, b].
    /// Circle angles live in (−π, π], SO(3) rotation angles in [0, π].
    pub fn angle_bin_probability(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        match self.variant {
            KernelVariant::WrappedGaussianTorus { k: 1 } => {
                let ts = t * self.time_scale;
                let mut p = (b - a) / (2.0 * PI);
                let mut m = 1usize;
                loop {
                    let w = (-((m * m) as f64) * ts / 2.0).exp();
                    if w < 1e-17 {
                        break;
                    }
                    let mf = m as f64;
                    p += w * ((mf * b).sin() - (mf * a).sin()) / (PI * mf);
                    m += 1;
                }
                Ok(p)
            }
            KernelVariant::SpectralSo3 => {
                let (x, w) = gauss_legendre_on(64, a, b);
                let mut p = 0.0;
                for (th, wt) in x.iter().zip(&w) {
                    p += wt * (1.0 - th.cos()) / PI * self.so3_density_cos(t, th.cos())?;
                }
                Ok(p)
            }
            _ => Err(Error::Unsupported("angle bins need the circle or SO(3)".into())),
        }
    }

    /// Total mass of the kernel under Haar measure, by quadrature.
    pub fn normalization(&self, t: f64) -> Result<f64> {
        match self.variant {
            KernelVariant::WrappedGaussianTorus { k } => {
                let one = trapezoid_periodic(512, |th| self.circle_density(t, th))?;
                Ok(one.powi(k as i32))
            }
            KernelVariant::SpectralSo3 => {
                let (x, w) = gauss_legendre_on(200, 0.0, PI);
                let mut s = 0.0;
                for (th, wt) in x.iter().zip(&w) {
                    s += wt * (1.0 - th.cos()) / PI * self.so3_density_cos(t, th.cos())?;
                }
                Ok(s)
            }
            KernelVariant::FlatGaussian { d } => {
                let ts = t * self.time_scale;
                let half = 10.0 * ts.sqrt();
                let (x, w) = gauss_legendre_on(120, -half, half);
                let one: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(u, wt)| wt * (2.0 * PI * ts).powf(-0.5) * (-u * u / (2.0 * ts)).exp())
                    .sum();
                Ok(one.powi(d as i32))
            }
        }
    }

    /// E[trace(g_t)] under the kernel, by quadrature in the rotation angle.
    pub fn so3_trace_moment(&self, t: f64) -> Result<f64> {
        let (x, w) = gauss_legendre_on(200, 0.0, PI);
        let mut s = 0.0;
        for (th, wt) in x.iter().zip(&w) {
            s += wt * (1.0 - th.cos()) / PI * (1.0 + 2.0 * th.cos()) * self.so3_density_cos(t, th.cos())?;
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_partition(times: &[f64], n: usize) -> Result<()> {
    if times.len() != n || n == 0 {
        return Err(Error::InvalidPartition("one point per partition time is required".into()));
    }
    if !(times[0] > 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidPartition("times must be positive and increasing".into()));
    }
    Ok(())
}

fn fit_quadratic(derived: &[(usize, f64, f64)]) -> [f64; 3] {
    // Normal equations for [ℓ², ℓ, 1].
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (l, lam, _) in derived {
        let r = [(*l * *l) as f64, *l as f64, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
            atb[i] += r[i] * lam;
        }
    }
    let m = crate::linalg::Mat::from_rows(&ata.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let rhs = crate::linalg::Mat::from_rows(&[vec![atb[0], 0.0, 0.0], vec![atb[1], 0.0, 0.0], vec![atb[2], 0.0, 0.0]]);
    let sol = m.solve(&rhs).expect("normal equations are nonsingular");
    [sol[(0, 0)], sol[(1, 0)], sol[(2, 0)]]
}

fn eval_quadratic(q: &[f64; 3], ell: usize) -> f64 {
    let l = ell as f64;
    q[0] * l * l + q[1] * l + q[2]
}

/// (1/2π)∫_{−π}^{π} f, by the periodic trapezoid rule.
pub fn trapezoid_periodic<F: Fn(f64) -> Result<f64>>(n: usize, f: F) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..n {
        s += f(-PI + 2.0 * PI * i as f64 / n as f64)?;
    }
    Ok(s / n as f64)
}

/// Lebesgue density of the wrapped Gaussian on (−π, π], summed over images.
pub fn wrapped_gaussian_lebesgue(t: f64, theta: f64) -> f64 {
    let m_max = (6.0 * t.sqrt() / (2.0 * PI)).ceil() as i64 + 3;
    (-m_max..=m_max)
        .map(|m| {
            let x = theta + 2.0 * PI * m as f64;
            (2.0 * PI * t).powf(-0.5) * (-x * x / (2.0 * t)).exp()
        })
        .sum()
}

/// ∫ p_s(y) p_t(y⁻¹x) dy on the circle, relative to dθ/2π.
pub fn chapman_kolmogorov_circle(model: &HeatKernelModel, s: f64, t: f64, x: f64) -> Result<f64> {
    trapezoid_periodic(1024, |y| Ok(model.circle_density(s, y)? * model.circle_density(t, x - y)?))
}

/// ∫ p_s(y) p_t(y⁻¹x) dy on SO(3) in axis-angle coordinates with Haar
/// density (1 − cos θ)/(4π²) dθ dΩ.
pub fn chapman_kolmogorov_so3(
    spec: &LieGroupSpec,
    model: &HeatKernelModel,
    s: f64,
    t: f64,
    x: &GroupElement,
) -> Result<f64> {
    let (th, wth) = gauss_legendre_on(72, 0.0, PI);
    let (cb, wcb) = gauss_legendre_on(48, -1.0, 1.0);
    let n_alpha = 48;
    let mut total = 0.0;
    for (theta, w1) in th.iter().zip(&wth) {
        let ps = model.so3_density_cos(s, theta.cos())?;
        let haar = (1.0 - theta.cos()) / (4.0 * PI * PI);
        let mut inner = 0.0;
        for (c, w2) in cb.iter().zip(&wcb) {
            let sb = (1.0 - c * c).max(0.0).sqrt();
            for ia in 0..n_alpha {
                let alpha = 2.0 * PI * ia as f64 / n_alpha as f64;
                let axis = AlgebraVector::from_slice(&[sb * alpha.cos(), sb * alpha.sin(), *c]);
                let y = spec.exp(&axis.scale(*theta));
                let z = y.inverse().mul(x);
                inner += w2 * (2.0 * PI / n_alpha as f64) * model.so3_density_cos(t, so3_cos_angle(&z))?;
            }
        }
        total += w1 * haar * ps * inner;
    }
    Ok(total)
}

/// Chi-square goodness-of-fit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub cells: usize,
    pub merged_cells: usize,
    pub samples: usize,
}

/// Chi-square test of sampled (g_{s_1}, …, g_{s_k}) against the product of
/// increment kernels: each increment's class angle is binned into `bins`
/// equal cells and the joint cell counts are compared with the expected
/// product probabilities. Cells with expected count below 5 are merged.
pub fn fdd_goodness_of_fit(
    samples: &[Vec<GroupElement>],
    model: &HeatKernelModel,
    times: &[f64],
    bins: usize,
) -> Result<GofReport> {
    if samples.len() < 1000 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 1000,
        });
    }
    let k = times.len();
    check_partition(times, k)?;
    let (lo, hi) = match model.variant {
        KernelVariant::WrappedGaussianTorus { k: 1 } => (-PI, PI),
        KernelVariant::SpectralSo3 => (0.0, PI),
        _ => return Err(Error::Unsupported("goodness of fit needs the circle or SO(3)".into())),
    };
    let width = (hi - lo) / bins as f64;
    let cells = bins.pow(k as u32);
    let mut counts = vec![0usize; cells];
    for path in samples {
        if path.len() != k {
            return Err(Error::InvalidPartition("sample length differs from partition".into()));
        }
        let mut idx = 0usize;
        for i in 0..k {
            let inc = if i == 0 { path[0].clone() } else { path[i - 1].inverse().mul(&path[i]) };
            let angle = match model.variant {
                KernelVariant::SpectralSo3 => so3_angle(&inc),
                _ => torus_angles(&inc)[0],
            };
            let b = (((angle - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            idx = idx * bins + b;
        }
        counts[idx] += 1;
    }
    let mut per_time = Vec::with_capacity(k);
    let mut prev = 0.0;
    for t in times {
        let probs = (0..bins)
            .map(|b| model.angle_bin_probability(t - prev, lo + b as f64 * width, lo + (b + 1) as f64 * width))
            .collect::<Result<Vec<_>>>()?;
        per_time.push(probs);
        prev = *t;
    }
    let m = samples.len() as f64;
    let mut stat = 0.0;
    let mut used = 0usize;
    let mut merged = 0usize;
    let (mut acc_obs, mut acc_exp) = (0.0, 0.0);
    for (idx, &obs) in counts.iter().enumerate() {
        let mut p = 1.0;
        let mut r = idx;
        for i in (0..k).rev() {
            p *= per_time[i][r % bins];
            r /= bins;
        }
        acc_obs += obs as f64;
        acc_exp += p * m;
        if acc_exp >= 5.0 {
            stat += (acc_obs - acc_exp).powi(2) / acc_exp;
            used += 1;
            acc_obs = 0.0;
            acc_exp = 0.0;
        } else {
            merged += 1;
        }
    }
    if acc_exp > 0.0 {
        // Fold the trailing remainder into the statistic as its own cell.
        stat += (acc_obs - acc_exp).powi(2) / acc_exp;
        used += 1;
    }
    let dof = used.saturating_sub(1).max(1);
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(GofReport {
        statistic: stat,
        degrees_of_freedom: dof,
        p_value: 1.0 - chi.cdf(stat),
        cells,
        merged_cells: merged,
        samples: samples.len(),
    })
}

/// Slope of the fitted eigenvalue curve, exposed for reporting.
pub fn eigenvalue_fit_summary(rec: &DerivationRecord) -> (f64, f64) {
    let xs: Vec<f64> = rec.derived.iter().map(|(l, _, _)| (l * (l + 1)) as f64).collect();
    let ys: Vec<f64> = rec.derived.iter().map(|(_, lam, _)| *lam).collect();
    ols_fit(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::AlgebraVector;

    fn so3_model() -> (LieGroupSpec, HeatKernelModel) {
        let s = LieGroupSpec::so3();
        let m = HeatKernelModel::so3(&s).unwrap();
        (s, m)
    }

    #[test]
    fn derived_eigenvalues_follow_casimir_of_spin_ell() {
        let (_, m) = so3_model();
        let rec = m.derivation.as_ref().unwrap();
        // Independent oracle: the character of spin ℓ has Casimir −ℓ(ℓ+1)
        // under the trace-form metric that makes L₁, L₂, L₃ orthonormal.
        for (l, lam, resid) in &rec.derived {
            let expected = -((l * (l + 1)) as f64);
            assert!((lam - expected).abs() < 1e-6 * expected.abs().max(1.0), "ℓ={l}: {lam}");
            assert!(*resid < 1e-6);
        }
        assert!(rec.fit_residual < 1e-7);
        let (slope, icpt) = eigenvalue_fit_summary(rec);
        assert!((slope + 1.0).abs() < 1e-7 && icpt.abs() < 1e-6);
    }

    #[test]
    fn eigenvalues_rescale_with_metric() {
        // Doubling the basis halves |A|, so the orthonormal basis for the
        // metric 4⟨·,·⟩ gives eigenvalues scaled by 1/4.
        let s = LieGroupSpec::so3();
        let scaled: Vec<_> = s.basis.iter().map(|b| b.scale(0.5)).collect();
        let mut spec = s.clone();
        spec.basis = scaled;
        let m = HeatKernelModel::so3_with(&spec, 4, 4, 3).unwrap();
        for (l, lam, _) in &m.derivation.unwrap().derived {
            assert!((lam + (l * (l + 1)) as f64 / 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_kernel_at_origin() {
        let m = HeatKernelModel::flat(3);
        let z = AlgebraVector::zeros(3);
        let v = m.kernel_eval(0.7, HeatPoint::Flat(&z)).unwrap();
        assert!((v - (2.0 * PI * 0.7_f64).powf(-1.5)).abs() < 1e-15);
        assert!(matches!(m.kernel_eval(0.0, HeatPoint::Flat(&z)), Err(Error::NonPositiveTime(_))));
        assert!((m.normalization(0.4).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn circle_fourier_matches_wrapped_images() {
        let m = HeatKernelModel::torus(1);
        for &t in &[0.05, 0.3, 1.0, 4.0] {
            for i in 0..40 {
                let th = -PI + 2.0 * PI * i as f64 / 40.0;
                let a = m.circle_density(t, th).unwrap() / (2.0 * PI);
                let b = wrapped_gaussian_lebesgue(t, th);
                assert!((a - b).abs() < 1e-12, "t={t} θ={th}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn kernels_are_inversion_symmetric() {
        let (s, m) = so3_model();
        let c = LieGroupSpec::circle();
        let mc = HeatKernelModel::torus(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = s.exp(&AlgebraVector::from_slice(&v));
            let a = m.kernel_eval(0.5, HeatPoint::Group(&g)).unwrap();
            let b = m.kernel_eval(0.5, HeatPoint::Group(&g.inverse())).unwrap();
            assert_eq!(a, b);
            let h = c.exp(&AlgebraVector::from_slice(&[v[0]]));
            let a = mc.kernel_eval(0.5, HeatPoint::Group(&h)).unwrap();
            let b = mc.kernel_eval(0.5, HeatPoint::Group(&h.inverse())).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kernels_normalize() {
        let (_, m) = so3_model();
        let mc = HeatKernelModel::torus(1);
        for &t in &[0.1, 1.0, 10.0] {
            assert!((m.normalization(t).unwrap() - 1.0).abs() < 1e-6, "so3 t={t}");
            assert!((mc.normalization(t).unwrap() - 1.0).abs() < 1e-6, "circle t={t}");
        }
    }

    #[test]
    fn kernel_nonnegative() {
        let (_, m) = so3_model();
        for &t in &[0.1, 1.0, 10.0] {
            for i in 0..=100 {
                let th = PI * i as f64 / 100.0;
                assert!(m.so3_density_cos(t, th.cos()).unwrap() > -1e-12);
            }
        }
    }

    #[test]
    fn truncation_grows_at_small_time() {
        let (_, m) = so3_model();
        assert!(m.truncation(0.01).unwrap() > m.truncation(1.0).unwrap());
        let mut tight = m.clone();
        tight.max_terms = 5;
        assert!(matches!(tight.truncation(0.01), Err(Error::TruncationInsufficient { .. })));
    }

    #[test]
    fn trace_moment_matches_character_orthogonality() {
        let (_, m) = so3_model();
        for &t in &[0.2, 1.0, 3.0] {
            assert!((m.so3_trace_moment(t).unwrap() - 3.0 * (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn chapman_kolmogorov_circle_holds() {
        let m = HeatKernelModel::torus(1);
        for &x in &[0.0, 0.7, -2.5, 3.1] {
            let lhs = chapman_kolmogorov_circle(&m, 0.3, 0.5, x).unwrap();
            let rhs = m.circle_density(0.8, x).unwrap();
            assert!((lhs - rhs).abs() < 1e-6);
        }
    }

    #[test]
    fn chapman_kolmogorov_so3_holds() {
        let (s, m) = so3_model();
        for v in [[0.0, 0.0, 0.0], [0.3, -0.8, 0.4], [0.0, 2.5, 0.3]] {
            let x = s.exp(&AlgebraVector::from_slice(&v));
            let lhs = chapman_kolmogorov_so3(&s, &m, 0.4, 0.6, &x).unwrap();
            let rhs = m.kernel_eval(1.0, HeatPoint::Group(&x)).unwrap();
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn fdd_single_time_reduces_to_kernel() {
        let (s, m) = so3_model();
        let x = s.exp(&AlgebraVector::from_slice(&[0.2, 0.5, -0.1]));
        let a = m.fdd_log_density(&[0.8], std::slice::from_ref(&x)).unwrap();
        assert_eq!(a, m.kernel_eval(0.8, HeatPoint::Group(&x)).unwrap().ln());
    }

    #[test]
    fn fdd_repeated_point_uses_identity_increment() {
        let c = LieGroupSpec::circle();
        let m = HeatKernelModel::torus(1);
        let x = c.exp(&AlgebraVector::from_slice(&[1.1]));
        let a = m.fdd_log_density(&[0.4, 1.0], &[x.clone(), x.clone()]).unwrap();
        let b = m.circle_density(0.4, 1.1).unwrap().ln() + m.circle_density(0.6, 0.0).unwrap().ln();
        assert!((a - b).abs() < 1e-13);
        assert!(m.fdd_log_density(&[0.4, 0.3], &[x.clone(), x]).is_err());
    }

    #[test]
    fn bin_probabilities_sum_to_one() {
        let (_, m) = so3_model();
        let mc = HeatKernelModel::torus(1);
        let bins = 12;
        let s: f64 = (0..bins)
            .map(|b| m.angle_bin_probability(0.5, PI * b as f64 / bins as f64, PI * (b + 1) as f64 / bins as f64).unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-8);
        let s: f64 = (0..bins)
            .map(|b| {
                let w = 2.0 * PI / bins as f64;
                mc.angle_bin_probability(0.5, -PI + b as f64 * w, -PI + (b + 1) as f64 * w).unwrap()
            })
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn exact_circle_samples(seed: u64, m: usize, times: &[f64], var_scale: f64) -> Vec<Vec<GroupElement>> {
        let c = LieGroupSpec::circle();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let mut theta = 0.0;
                let mut prev = 0.0;
                times
                    .iter()
                    .map(|t| {
                        let z: f64 = rand_distr_normal(&mut rng);
                        theta += z * ((t - prev) * var_scale).sqrt();
                        prev = *t;
                        c.exp(&AlgebraVector::from_slice(&[theta]))
                    })
                    .collect()
            })
            .collect()
    }

    fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    #[test]
    fn gof_accepts_exact_samples_and_rejects_wrong_variance() {
        let m = HeatKernelModel::torus(1);
        let times = [0.5, 1.0];
        let samples = exact_circle_samples(4, 20_000, &times, 1.0);
        let r = fdd_goodness_of_fit(&samples, &m, &times, 8).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        let wrong = m.clone().with_time_scale(2.0);
        let r = fdd_goodness_of_fit(&samples, &wrong, &times, 8).unwrap();
        assert!(r.p_value < 1e-6, "{r:?}");
        assert!(fdd_goodness_of_fit(&samples[..10], &m, &times, 8).is_err());
    }

    #[test]
    fn gof_p_values_spread_under_the_null() {
        let m = HeatKernelModel::torus(1);
        let times = [0.5, 1.0];
        let ps: Vec<f64> = (0..20)
            .map(|seed| fdd_goodness_of_fit(&exact_circle_samples(100 + seed, 2000, &times, 1.0), &m, &times, 6).unwrap().p_value)
            .collect();
        let below_half = ps.iter().filter(|p| **p < 0.5).count();
        assert!((3..=17).contains(&below_half), "{ps:?}");
        assert!(ps.iter().all(|p| *p > 1e-4));
    }

    #[test]
    fn spectral_data_serializes_with_derivation() {
        let (_, m) = so3_model();
        let text = m.to_json().unwrap();
        assert!(text.contains("derivation"));
        let back: HeatKernelModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
