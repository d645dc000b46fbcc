//! Operators on the exponential class and the pathwise involution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::ito_right;
use crate::lie::LieGroupSpec;
use crate::mc::{run_estimator_vec, Estimate};
use crate::path::{AlgebraPath, GridTranslation, GroupPath, StepFunction};

use super::cylinder::{times_i, CellRotation, CylinderExponential, ExpTerm, GroupCylinderFunction};

fn minus_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

/// Fourier–Wiener transform: (c, m, z_i) ↦ (c, −(m+1), i·z_i). On
/// e^{S_k} this gives e^{⟨k,k⟩}e^{S_{ik}}, so F(φ̂) = e^{−‖h‖²}e^{−S_h}.
pub fn fw_transform(f: &CylinderExponential) -> CylinderExponential {
    CylinderExponential {
        m: -(f.m + 1),
        terms: f.terms.iter().map(|t| ExpTerm { z: times_i(t.z), h: t.h.clone() }).collect(),
        ..f.clone()
    }
}

/// F⁻¹ = F³: (c, m, z_i) ↦ (c, −(m+1), −i·z_i).
pub fn fw_inverse(f: &CylinderExponential) -> CylinderExponential {
    CylinderExponential {
        m: -(f.m + 1),
        terms: f.terms.iter().map(|t| ExpTerm { z: minus_i(t.z), h: t.h.clone() }).collect(),
        ..f.clone()
    }
}

/// Monte Carlo value of ∫ f(iw + √2u) dΓ(u) using the complex-linear
/// extension of the exponent; a cross-check of `fw_transform` only.
pub fn fw_integral_estimate(f: &CylinderExponential, w: &AlgebraPath, samples: u64, seed: u64) -> Result<Estimate> {
    let base = f.effective_offset();
    let lin_w = f.eval_log(w)? - base;
    let grid = f.grid;
    let d = f.dim;
    let set = run_estimator_vec(
        |s| {
            let u = AlgebraPath::from_increments(grid, d, s.bm_increments(d, &grid));
            let lin_u = f.eval_log(&u)? - base;
            Ok(vec![(base + Complex64::new(0.0, 1.0) * lin_w + std::f64::consts::SQRT_2 * lin_u).exp()])
        },
        1,
        samples,
        seed,
    )?;
    Ok(set.get(0))
}

/// Gaussian regular representation
/// (U_{R,h} f)(w) = e^{−½S_h(w) − ¼‖h‖²}·f(Q(w + ∫h)) with Q = (R*)⁻¹ given cellwise.
pub fn gauss_regular_rep(h: &StepFunction, q: &CellRotation, f: &CylinderExponential) -> Result<CylinderExponential> {
    let g = f.rotated(q)?.translated(h)?;
    Ok(g.add_term(Complex64::new(-0.5, 0.0), h.clone())?
        .add_constant(Complex64::new(-0.25 * h.l2_norm_sq(), 0.0)))
}

/// The transported form e^{−iS_h(w)/2}·f(Qw) that F U_{R,h} F⁻¹ must equal.
pub fn conjugated_regular_rep(h: &StepFunction, q: &CellRotation, f: &CylinderExponential) -> Result<CylinderExponential> {
    f.rotated(q)?.add_term(Complex64::new(0.0, -0.5), h.clone())
}

/// Brownian representation pulled back through B^L:
/// (u_φ f)(w) = e^{−½∫⟨φ′φ⁻¹,dw⟩ − ¼‖φ‖²}·f(O_{φ⁻¹}w + ∫φ⁻¹dφ).
pub fn brownian_rep_pullback(spec: &LieGroupSpec, phi: &GridTranslation, f: &CylinderExponential) -> Result<CylinderExponential> {
    let q = CellRotation::inverse_adjoint(spec, &phi.path);
    let g = f.translated(&phi.left)?.rotated(&q)?;
    Ok(g.add_term(Complex64::new(-0.5, 0.0), phi.right.clone())?
        .add_constant(Complex64::new(-0.25 * phi.energy(), 0.0)))
}

/// Which logarithmic derivative carries the phase of the energy representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseDerivative {
    /// φ⁻¹φ′
    Left,
    /// φ′φ⁻¹
    Right,
}

/// Energy representation (E^{(κ)}_φ f)(w) = e^{iκ∫⟨c,dw⟩}·f(O_{φ⁻¹}w), with
/// c the chosen logarithmic derivative of φ.
pub fn energy_rep(
    spec: &LieGroupSpec,
    phi: &GridTranslation,
    kappa: f64,
    derivative: PhaseDerivative,
    f: &CylinderExponential,
) -> Result<CylinderExponential> {
    let q = CellRotation::inverse_adjoint(spec, &phi.path);
    let c = match derivative {
        PhaseDerivative::Left => phi.left.clone(),
        PhaseDerivative::Right => phi.right.clone(),
    };
    f.rotated(&q)?.add_term(Complex64::new(0.0, kappa), c)
}

/// (JF)(g) = F(Θ(g)), evaluated through B^L(Θ(g)) = −B^R(g).
pub fn involution_j(spec: &LieGroupSpec, f: &GroupCylinderFunction, g: &GroupPath) -> Result<Complex64> {
    f.inner.eval(&ito_right(spec, g)?.neg())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{develop_left, sample_bm};
    use crate::lie::AlgebraVector;
    use crate::noise::NoiseStream;
    use crate::path::{CameronMartinPath, Orientation, TimeGrid};
    use crate::repr::cylinder::{CylinderFunctional, CylinderPolynomial};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn step(grid: TimeGrid, d: usize, vals: &[f64]) -> StepFunction {
        StepFunction {
            grid,
            cells: vals.chunks(d).map(AlgebraVector::from_slice).collect(),
        }
    }

    fn so3_phi(grid: &TimeGrid) -> GridTranslation {
        let spec = LieGroupSpec::so3();
        let phi = CameronMartinPath::from_steps(
            &spec,
            vec![0.0, 0.5, 1.0],
            vec![AlgebraVector::from_slice(&[1.0, -0.5, 0.3]), AlgebraVector::from_slice(&[-0.4, 0.8, 1.1])],
            Orientation::Right,
        )
        .unwrap();
        GridTranslation::from_cm(&phi, grid).unwrap()
    }

    fn sample_f(grid: TimeGrid) -> CylinderExponential {
        let h1 = step(grid, 3, &[0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.0, 0.2, 0.2, -0.6, 0.1, 0.3]);
        let h2 = step(grid, 3, &[0.1, 0.0, 0.0, 0.0, -0.3, 0.2, 0.5, 0.5, 0.0, 0.1, 0.1, 0.1]);
        CylinderExponential::new(c(0.2, -0.1), c(0.4, 0.9), h1).add_term(c(-0.7, 0.2), h2).unwrap()
    }

    #[test]
    fn fourth_power_is_identity_exactly() {
        let f = sample_f(TimeGrid::new(1.0, 4).unwrap());
        let f4 = fw_transform(&fw_transform(&fw_transform(&fw_transform(&f))));
        assert_eq!(f4, f);
        assert_eq!(fw_inverse(&fw_transform(&f)), f);
        assert_eq!(fw_transform(&fw_inverse(&f)), f);
    }

    #[test]
    fn transform_rewrite_rules() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let h = step(g, 3, &[0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.0, 0.2, 0.2, -0.6, 0.1, 0.3]);
        let n = h.l2_norm_sq();
        let one = CylinderExponential::one(g, 3);
        assert!(fw_transform(&one).functional_difference(&one) == 0.0);
        // F(φ̂) = e^{−‖h‖²}e^{−S_h}
        let lhs = fw_transform(&CylinderExponential::character(h.clone()));
        let rhs = CylinderExponential::new(c(-n, 0.0), c(-1.0, 0.0), h.clone());
        assert!(lhs.functional_difference(&rhs) < 1e-15);
        // F(e^{S_h}) = e^{‖h‖²}φ̂
        let lhs = fw_transform(&CylinderExponential::real_exponential(h.clone()));
        let rhs = CylinderExponential::new(c(n, 0.0), c(0.0, 1.0), h.clone());
        assert!(lhs.functional_difference(&rhs) < 1e-15);
        // F(e^{−½S_h − ¼‖h‖²}) = e^{−iS_h/2}
        let lhs = fw_transform(&CylinderExponential::new(c(-0.25 * n, 0.0), c(-0.5, 0.0), h.clone()));
        let rhs = CylinderExponential::new(c(0.0, 0.0), c(0.0, -0.5), h);
        assert!(lhs.functional_difference(&rhs) < 1e-15);
    }

    #[test]
    fn transform_matches_gaussian_integral() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = sample_f(g);
        let w = sample_bm(&spec, &g, &NoiseStream::new(5, 0));
        let exact = fw_transform(&f).eval(&w).unwrap();
        let est = fw_integral_estimate(&f, &w, 40_000, 17).unwrap();
        assert!((est.complex_mean() - exact).norm() < 4.0 * est.stderr, "{:?} vs {exact}", est);
    }

    #[test]
    fn regular_rep_trivial_cases() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = sample_f(g);
        let id = CellRotation::identity(g, 3);
        let u = gauss_regular_rep(&StepFunction::zeros(g, 3), &id, &f).unwrap();
        assert!(u.functional_difference(&f) < 1e-15);
        let h = step(g, 3, &[0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.0, 0.2, 0.2, -0.6, 0.1, 0.3]);
        let u1 = gauss_regular_rep(&h, &id, &CylinderExponential::one(g, 3)).unwrap();
        let w = sample_bm(&spec, &g, &NoiseStream::new(3, 0));
        let sh: f64 = h.cells.iter().zip(w.increments()).map(|(a, b)| a.dot(&b)).sum();
        let expected = (-0.5 * sh - 0.25 * h.l2_norm_sq()).exp();
        assert!((u1.eval(&w).unwrap().re - expected).abs() < 1e-14);
        assert!((u1.norm_sq() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pullback_equals_regular_rep_with_rotated_translation() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let phi = so3_phi(&g);
        let f = sample_f(g);
        let u = brownian_rep_pullback(&spec, &phi, &f).unwrap();
        let v = gauss_regular_rep(&phi.right, &CellRotation::inverse_adjoint(&spec, &phi.path), &f).unwrap();
        assert!(u.functional_difference(&v) < 1e-12);
        let id = GridTranslation::from_cm(&CameronMartinPath::identity(&spec, 1.0), &g).unwrap();
        assert!(brownian_rep_pullback(&spec, &id, &f).unwrap().functional_difference(&f) < 1e-15);
    }

    #[test]
    fn pullback_of_one_has_tau_expectation() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let phi = so3_phi(&g);
        let u1 = brownian_rep_pullback(&spec, &phi, &CylinderExponential::one(g, 3)).unwrap();
        let e = u1.gaussian_expectation();
        assert!((e.re - (-phi.energy() / 8.0).exp()).abs() < 1e-14 && e.im.abs() < 1e-15);
    }

    #[test]
    fn energy_rep_trivial_cases() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = sample_f(g);
        let id = GridTranslation::from_cm(&CameronMartinPath::identity(&spec, 1.0), &g).unwrap();
        assert!(energy_rep(&spec, &id, 1.0, PhaseDerivative::Left, &f).unwrap().functional_difference(&f) < 1e-15);
        let phi = so3_phi(&g);
        let e1 = energy_rep(&spec, &phi, 1.0, PhaseDerivative::Left, &CylinderExponential::one(g, 3)).unwrap();
        assert!((e1.norm_sq() - 1.0).abs() < 1e-14);
        let w = sample_bm(&spec, &g, &NoiseStream::new(8, 0));
        assert!((e1.eval(&w).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn energy_rep_adjoint_is_inverse() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let phi = so3_phi(&g);
        let inv = phi.inverse();
        let f = sample_f(g);
        let h = fw_transform(&sample_f(g)).collapsed();
        for kappa in [1.0, 0.5] {
            let lhs = energy_rep(&spec, &phi, kappa, PhaseDerivative::Right, &f).unwrap().pairing(&h).unwrap();
            let rhs = f.pairing(&energy_rep(&spec, &inv, kappa, PhaseDerivative::Right, &h).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0), "kappa {kappa}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn energy_rep_inverse_undoes_it() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let phi = so3_phi(&g);
        let f = sample_f(g);
        let there = energy_rep(&spec, &phi, 0.5, PhaseDerivative::Right, &f).unwrap();
        let back = energy_rep(&spec, &phi.inverse(), 0.5, PhaseDerivative::Right, &there).unwrap();
        assert!(back.functional_difference(&f) < 1e-12);
    }

    #[test]
    fn involution_squares_to_identity() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let path = develop_left(&spec, &sample_bm(&spec, &g, &NoiseStream::new(6, 0)));
        let theta = crate::path::path_invert(&path);
        let h = StepFunction::constant(g, &AlgebraVector::from_slice(&[0.2, -0.4, 0.3]));
        let f = GroupCylinderFunction::new(CylinderFunctional::Exponential(CylinderExponential::character(h)));
        // J applied twice reads F at Θ(Θ(g)) = g.
        let jj = involution_j(&spec, &f, &theta).unwrap();
        assert!((jj - f.eval(&spec, &path).unwrap()).norm() < 1e-12);
        // B^L(Θ(g)) = −B^R(g): J evaluates F on the inverse path.
        assert!((involution_j(&spec, &f, &path).unwrap() - f.eval(&spec, &theta).unwrap()).norm() < 1e-10);
        let one = GroupCylinderFunction::new(CylinderFunctional::Polynomial(CylinderPolynomial::constant(1.0)));
        assert_eq!(involution_j(&spec, &one, &path).unwrap(), c(1.0, 0.0));
    }

    proptest! {
        #[test]
        fn operators_are_unitary_in_closed_form(
            a in proptest::collection::vec(-0.8f64..0.8, 12),
            b in proptest::collection::vec(-0.8f64..0.8, 12),
            za in (-1.0f64..1.0, -1.0f64..1.0),
            zb in (-1.0f64..1.0, -1.0f64..1.0),
            hv in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let spec = LieGroupSpec::so3();
            let g = TimeGrid::new(1.0, 4).unwrap();
            let f = CylinderExponential::new(c(0.1, 0.3), c(za.0, za.1), step(g, 3, &a));
            let k = CylinderExponential::new(c(-0.2, 0.0), c(zb.0, zb.1), step(g, 3, &b));
            let h = step(g, 3, &hv);
            let phi = so3_phi(&g);
            let q = CellRotation::inverse_adjoint(&spec, &phi.path);
            let base = f.pairing(&k).unwrap();
            let tol = 1e-11 * base.norm().max(1.0);
            let ops: Vec<Box<dyn Fn(&CylinderExponential) -> CylinderExponential>> = vec![
                Box::new(fw_transform),
                Box::new(|x: &CylinderExponential| gauss_regular_rep(&h, &q, x).unwrap()),
                Box::new(|x: &CylinderExponential| brownian_rep_pullback(&spec, &phi, x).unwrap()),
                Box::new(|x: &CylinderExponential| energy_rep(&spec, &phi, 1.0, PhaseDerivative::Left, x).unwrap()),
                Box::new(|x: &CylinderExponential| energy_rep(&spec, &phi, 0.5, PhaseDerivative::Right, x).unwrap()),
            ];
            for op in &ops {
                let v = op(&f).pairing(&op(&k)).unwrap();
                prop_assert!((v - base).norm() <= tol, "{v} vs {base}");
            }
        }
    }
}
