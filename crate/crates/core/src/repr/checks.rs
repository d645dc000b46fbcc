//! Numeric and symbolic verification of the representation identities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::flow::{develop_left_increments, ito_left_increments, ito_right_increments, sample_bm};
use crate::girsanov::{half_density_closed_forms, log_density_left_increments, log_density_right_increments};
use crate::lie::{AlgebraVector, LieGroupSpec};
use crate::linalg::Mat;
use crate::mc::{bias_ladder, fit_ladder, run_estimator, run_estimator_real, CampaignPlan, LadderLevel, LadderReport};
use crate::noise::NoiseStream;
use crate::path::{path_invert, path_multiply, CameronMartinPath, GridTranslation, Orientation, TimeGrid};
use crate::report::{Verdict, VerificationReport};

use super::cylinder::{CellRotation, CylinderExponential, CylinderPolynomial, HermiteVariable};
use super::operators::{brownian_rep_pullback, conjugated_regular_rep, energy_rep, fw_inverse, fw_transform, gauss_regular_rep, PhaseDerivative};

pub const INTERTWINING_TOLERANCE: f64 = 1e-8;
pub const IDENTIFIABILITY_MARGIN: f64 = 1e-2;

/// |F U_{R,h} F⁻¹ f − e^{−iS_h/2} f∘Q| on the normal-form data.
pub fn intertwining_symbolic_defect(h: &crate::path::StepFunction, q: &CellRotation, f: &CylinderExponential) -> Result<f64> {
    let lhs = fw_transform(&gauss_regular_rep(h, q, &fw_inverse(f))?);
    Ok(lhs.functional_difference(&conjugated_regular_rep(h, q, f)?))
}

/// Direction in which the transform conjugates u_φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conjugation {
    /// F u_φ F⁻¹
    Forward,
    /// F⁻¹ u_φ F
    Backward,
}

impl Conjugation {
    pub fn label(&self) -> &'static str {
        match self {
            Conjugation::Forward => "F u F^-1",
            Conjugation::Backward => "F^-1 u F",
        }
    }
}

/// Pointwise error of one (conjugation, κ) candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntertwiningCandidate {
    pub conjugation: Conjugation,
    pub kappa: f64,
    pub max_relative_error: f64,
}

pub const KAPPAS: [f64; 2] = [1.0, 0.5];

/// Maximum over sampled w of |a(w) − b(w)| / max(1, |b(w)|).
pub fn pointwise_relative_error(a: &CylinderExponential, b: &CylinderExponential, paths: &[crate::path::AlgebraPath]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for w in paths {
        let (x, y) = (a.eval(w)?, b.eval(w)?);
        worst = worst.max((x - y).norm() / y.norm().max(1.0));
    }
    Ok(worst)
}

/// All four (conjugation, κ) pairings, with the phase on φ′φ⁻¹.
pub fn intertwining_candidates(
    spec: &LieGroupSpec,
    phi: &GridTranslation,
    f: &CylinderExponential,
    paths: &[crate::path::AlgebraPath],
) -> Result<Vec<IntertwiningCandidate>> {
    let forward = fw_transform(&brownian_rep_pullback(spec, phi, &fw_inverse(f))?);
    let backward = fw_inverse(&brownian_rep_pullback(spec, phi, &fw_transform(f))?);
    let mut out = Vec::new();
    for (conjugation, lhs) in [(Conjugation::Forward, &forward), (Conjugation::Backward, &backward)] {
        for kappa in KAPPAS {
            let e = energy_rep(spec, phi, kappa, PhaseDerivative::Right, f)?;
            out.push(IntertwiningCandidate {
                conjugation,
                kappa,
                max_relative_error: pointwise_relative_error(lhs, &e, paths)?,
            });
        }
    }
    Ok(out)
}

/// Two-layer intertwining check. The symbolic layer checks the transported
/// regular representation on the class; the numeric layer compares
/// conjugated u_φ with E^{(κ)}_φ on sampled paths, selects the best
/// (conjugation, κ) pair and requires the other κ to be rejected.
pub fn verify_intertwining(
    spec: &LieGroupSpec,
    phi: &CameronMartinPath,
    f: &CylinderExponential,
    samples: u64,
    seed: u64,
) -> Result<VerificationReport> {
    let grid = f.grid;
    let trans = GridTranslation::from_cm(phi, &grid)?;
    let q = CellRotation::inverse_adjoint(spec, &trans.path);
    let symbolic = intertwining_symbolic_defect(&trans.right, &q, f)?;
    let paths: Vec<_> = (0..samples).map(|i| sample_bm(spec, &grid, &NoiseStream::new(seed, i))).collect();
    let cands = intertwining_candidates(spec, &trans, f, &paths)?;
    let best = *cands
        .iter()
        .min_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("candidates");
    let rival = cands
        .iter()
        .filter(|c| c.conjugation == best.conjugation && c.kappa != best.kappa)
        .map(|c| c.max_relative_error)
        .fold(f64::INFINITY, f64::min);
    let u = brownian_rep_pullback(spec, &trans, f)?;
    let e = energy_rep(spec, &trans, best.kappa, PhaseDerivative::Right, f)?;
    let ok = symbolic <= INTERTWINING_TOLERANCE && best.max_relative_error <= INTERTWINING_TOLERANCE && rival > IDENTIFIABILITY_MARGIN;
    let config = json!({"phi": phi.to_document(), "grid": grid, "samples": samples, "f": f});
    let mut r = VerificationReport::exact(
        "representations.intertwining",
        &spec.label(),
        best.max_relative_error,
        INTERTWINING_TOLERANCE,
        samples,
        seed,
        config,
    )
    .with_detail("symbolic_defect", symbolic)
    .with_detail("selected_kappa", best.kappa)
    .with_detail("rejected_kappa_error", rival)
    .with_detail("norm_f", f.norm_sq())
    .with_detail("norm_u_f", u.norm_sq())
    .with_detail("norm_energy_f", e.norm_sq())
    .with_reference("rejected_kappa_error", rival)
    .with_note(format!("selected: {} with kappa = {}", best.conjugation.label(), best.kappa))
    .with_verdict(Verdict::from_bool(ok));
    for c in &cands {
        r = r.with_detail(&format!("error[{}; kappa={}]", c.conjugation.label(), c.kappa), c.max_relative_error);
    }
    Ok(r)
}

/// Per-path |√Z^R_φ(g)·f(B^L(gφ)) − (u_φ f)(B^L(g))| for g developed from
/// the increments, whose law is Wiener measure pushed to the group.
pub fn pullback_defect(
    spec: &LieGroupSpec,
    phi: &GridTranslation,
    f: &CylinderExponential,
    u_f: &CylinderExponential,
    inc: &[AlgebraVector],
) -> Result<f64> {
    let grid = phi.grid();
    let g = develop_left_increments(spec, &grid, inc);
    let moved = path_multiply(&g, &phi.path)?;
    let bl = crate::path::AlgebraPath::from_increments(grid, spec.algebra_dim(), ito_left_increments(spec, &moved)?);
    let w = crate::path::AlgebraPath::from_increments(grid, spec.algebra_dim(), inc.iter().cloned());
    let z = log_density_right_increments(phi, inc)?.sqrt_density();
    Ok((f.eval(&bl)? * z - u_f.eval(&w)?).norm())
}

/// Ladder of the mean pullback defect; f lives on a grid every ladder
/// level refines.
pub fn pullback_defect_ladder(
    spec: &LieGroupSpec,
    phi: &CameronMartinPath,
    f: &CylinderExponential,
    plan: &CampaignPlan,
) -> Result<LadderReport> {
    plan.check_refines(&phi.partition)?;
    let levels = plan
        .grids()?
        .iter()
        .map(|g| {
            let t = GridTranslation::from_cm(phi, g)?;
            let fg = f.refined(g)?;
            let u = brownian_rep_pullback(spec, &t, &fg)?;
            Ok((t, fg, u))
        })
        .collect::<Result<Vec<_>>>()?;
    bias_ladder(plan, spec.algebra_dim(), |grid, inc, _| {
        let (t, fg, u) = levels
            .iter()
            .find(|(t, _, _)| t.grid().steps == grid.steps)
            .ok_or_else(|| Error::InvalidConfig("ladder grid without translation".into()))?;
        pullback_defect(spec, t, fg, u, inc)
    })
}

/// Per-path |√(Z^L_ψ(g) Z^R_φ(ψ⁻¹g)) − √(Z^R_φ(g) Z^L_ψ(gφ))|: the two
/// orders of applying U^L_ψ and U^R_φ, both of which read F at ψ⁻¹gφ.
pub fn commutation_defect(spec: &LieGroupSpec, phi: &GridTranslation, psi: &GridTranslation, inc: &[AlgebraVector]) -> Result<f64> {
    let grid = phi.grid();
    let g = develop_left_increments(spec, &grid, inc);
    let psi_inv_g = path_multiply(&path_invert(&psi.path), &g)?;
    let g_phi = path_multiply(&g, &phi.path)?;
    let a = log_density_left_increments(psi, &ito_right_increments(spec, &g)?)?.value
        + log_density_right_increments(phi, &ito_left_increments(spec, &psi_inv_g)?)?.value;
    let b = log_density_right_increments(phi, inc)?.value + log_density_left_increments(psi, &ito_right_increments(spec, &g_phi)?)?.value;
    Ok(((0.5 * a).exp() - (0.5 * b).exp()).abs())
}

pub fn commutation_ladder(spec: &LieGroupSpec, phi: &CameronMartinPath, psi: &CameronMartinPath, plan: &CampaignPlan) -> Result<LadderReport> {
    plan.check_refines(&phi.partition)?;
    plan.check_refines(&psi.partition)?;
    let levels = plan
        .grids()?
        .iter()
        .map(|g| Ok((GridTranslation::from_cm(phi, g)?, GridTranslation::from_cm(psi, g)?)))
        .collect::<Result<Vec<_>>>()?;
    bias_ladder(plan, spec.algebra_dim(), |grid, inc, _| {
        let (p, q) = levels
            .iter()
            .find(|(p, _)| p.grid().steps == grid.steps)
            .ok_or_else(|| Error::InvalidConfig("ladder grid without translation".into()))?;
        commutation_defect(spec, p, q, inc)
    })
}

/// Normal-form distance between u_φ(u_ψ f) and u_{φψ} f, with φψ resolved
/// from the sampled product path.
pub fn composition_defect(
    spec: &LieGroupSpec,
    phi: &CameronMartinPath,
    psi: &CameronMartinPath,
    f: &CylinderExponential,
    grid: &TimeGrid,
) -> Result<f64> {
    let (p, q) = (GridTranslation::from_cm(phi, grid)?, GridTranslation::from_cm(psi, grid)?);
    let pq = GridTranslation::product(spec, &p, &q)?;
    let fg = f.refined(grid)?;
    let two = brownian_rep_pullback(spec, &p, &brownian_rep_pullback(spec, &q, &fg)?)?;
    let one = brownian_rep_pullback(spec, &pq, &fg)?;
    Ok(two.functional_difference(&one))
}

/// Deterministic ladder of `composition_defect` over refining grids.
pub fn composition_ladder(
    spec: &LieGroupSpec,
    phi: &CameronMartinPath,
    psi: &CameronMartinPath,
    f: &CylinderExponential,
    plan: &CampaignPlan,
) -> Result<LadderReport> {
    let grids = plan.grids()?;
    let gaps = grids
        .iter()
        .map(|g| composition_defect(spec, phi, psi, f, g))
        .collect::<Result<Vec<_>>>()?;
    let levels = grids
        .iter()
        .zip(&gaps)
        .map(|(g, d)| LadderLevel { steps: g.steps, dt: g.dt(), gap: *d, stderr: 0.0 })
        .collect();
    Ok(fit_ladder(levels, gaps.windows(2).map(|w| (w[0] - w[1], 0.0)).collect()))
}

/// Probe paths φ_x of the cyclicity construction on a uniform partition:
/// Left-oriented, generator x_j ξ_j on cell j with |ξ_j|·Δt_j = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFamily {
    pub spec: LieGroupSpec,
    pub grid: TimeGrid,
    pub directions: Vec<AlgebraVector>,
}

impl ProbeFamily {
    pub fn new(spec: &LieGroupSpec, grid: TimeGrid, directions: Vec<AlgebraVector>) -> Result<Self> {
        if directions.len() != grid.steps {
            return Err(Error::InvalidConfig("one probe direction per partition cell".into()));
        }
        if directions.iter().any(|d| d.dim() != spec.algebra_dim() || !(d.norm() > 0.0)) {
            return Err(Error::InvalidConfig("probe directions must be nonzero algebra vectors".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            grid,
            directions,
        })
    }

    /// Normalized increments X_j paired with the probe directions.
    pub fn variables(&self) -> Vec<HermiteVariable> {
        self.directions
            .iter()
            .enumerate()
            .map(|(j, d)| HermiteVariable {
                start: self.grid.node(j),
                end: self.grid.node(j + 1),
                direction: d.clone(),
            })
            .collect()
    }

    fn generator(&self, j: usize, x: f64) -> AlgebraVector {
        let d = &self.directions[j];
        d.scale(x / (d.norm() * self.grid.dt()))
    }

    pub fn path(&self, x: &[f64]) -> Result<CameronMartinPath> {
        CameronMartinPath::from_steps(
            &self.spec,
            self.grid.nodes(),
            (0..self.grid.steps).map(|j| self.generator(j, x[j])).collect(),
            Orientation::Left,
        )
    }

    /// √Z_{φ_x} = Π_j exp(α_j X_j − α_j²) with α_j = x_j/(2√Δt).
    pub fn alphas(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v / (2.0 * self.grid.dt().sqrt())).collect()
    }

    pub fn translation(&self, x: &[f64]) -> Result<GridTranslation> {
        GridTranslation::from_cm(&self.path(x)?, &self.grid)
    }
}

/// Central-difference design around 0 for the variables and variable pairs
/// the target depends on: 0, ±ε and ±2ε on each axis and (±ε, ±ε) on pairs.
pub fn finite_difference_design(target: &CylinderPolynomial, eps: f64) -> Vec<Vec<f64>> {
    let n = target.variables.len();
    let active: Vec<usize> = (0..n).filter(|j| target.terms.iter().any(|t| t.degrees[*j] > 0)).collect();
    let mut pts = vec![vec![0.0; n]];
    let axis = |j: usize, v: f64| {
        let mut p = vec![0.0; n];
        p[j] = v;
        p
    };
    for &j in &active {
        for s in [-2.0, -1.0, 1.0, 2.0] {
            pts.push(axis(j, s * eps));
        }
    }
    for (a, &j) in active.iter().enumerate() {
        for &k in &active[a + 1..] {
            if target.terms.iter().any(|t| t.degrees[j] > 0 && t.degrees[k] > 0) {
                for (sj, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut p = vec![0.0; n];
                    p[j] = sj * eps;
                    p[k] = sk * eps;
                    pts.push(p);
                }
            }
        }
    }
    pts
}

/// Cumulative designs: design i is the union of the stencils at eps[0..=i].
pub fn nested_designs(target: &CylinderPolynomial, eps: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let mut acc: Vec<Vec<f64>> = Vec::new();
    eps.iter()
        .map(|&e| {
            for p in finite_difference_design(target, e) {
                if !acc.contains(&p) {
                    acc.push(p);
                }
            }
            acc.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicityResult {
    pub design_size: usize,
    pub residual: f64,
    pub relative: f64,
    pub condition: f64,
    pub coefficients: Vec<f64>,
    /// Monte Carlo E|T − Σβ√Z|² and its standard error, when sampled.
    pub mc_residual_sq: Option<(f64, f64)>,
}

pub const RIDGE: f64 = 1e-10;

/// Least-squares projection of `target` onto span{√Z_{φ_x} : x ∈ design}
/// using the closed-form half-density Gram matrix.
pub fn cyclicity_residual(family: &ProbeFamily, target: &CylinderPolynomial, design: &[Vec<f64>]) -> Result<CyclicityResult> {
    if target.variables != family.variables() {
        return Err(Error::InvalidConfig("target variables must be the probe family's normalized increments".into()));
    }
    let n = design.len();
    let trans = design.iter().map(|x| family.translation(x)).collect::<Result<Vec<_>>>()?;
    let mut gram = Mat::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = half_density_closed_forms(&trans[i], &trans[j])?.closed_alt;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    // E[He_n(X) e^{αX − α²}] = αⁿ e^{−α²/2}
    let cross: Vec<f64> = design
        .iter()
        .map(|x| {
            let al = family.alphas(x);
            target
                .terms
                .iter()
                .map(|t| {
                    t.coefficient
                        * t.degrees
                            .iter()
                            .zip(&al)
                            .map(|(k, a)| a.powi(*k as i32) * (-0.5 * a * a).exp())
                            .product::<f64>()
                })
                .sum()
        })
        .collect();
    let mut reg = gram.clone();
    for i in 0..n {
        reg[(i, i)] += RIDGE;
    }
    let mut rhs = Mat::zeros(n);
    for (i, c) in cross.iter().enumerate() {
        rhs[(i, 0)] = *c;
    }
    let sol = reg.solve(&rhs).ok_or_else(|| Error::InvalidConfig("singular cyclicity system".into()))?;
    let beta: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let t2 = target.norm_sq();
    let bc: f64 = beta.iter().zip(&cross).map(|(b, c)| b * c).sum();
    let mut bgb = 0.0;
    for i in 0..n {
        for j in 0..n {
            bgb += beta[i] * gram[(i, j)] * beta[j];
        }
    }
    let residual = (t2 - 2.0 * bc + bgb).max(0.0).sqrt();
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(v.abs()), h.max(v.abs())));
    Ok(CyclicityResult {
        design_size: n,
        residual,
        relative: if t2 > 0.0 { residual / t2.sqrt() } else { residual },
        condition: hi / lo.max(RIDGE),
        coefficients: beta,
        mc_residual_sq: None,
    })
}

/// Monte Carlo E|T(w) − Σ_i β_i √Z_{φ_{x_i}}(w)|² with the densities taken
/// from sampled Brownian increments.
pub fn cyclicity_mc_residual(
    family: &ProbeFamily,
    target: &CylinderPolynomial,
    design: &[Vec<f64>],
    beta: &[f64],
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let trans = design.iter().map(|x| family.translation(x)).collect::<Result<Vec<_>>>()?;
    let d = family.spec.algebra_dim();
    let est = run_estimator(
        |s| {
            let inc = s.bm_increments(d, &family.grid);
            let w = crate::path::AlgebraPath::from_increments(family.grid, d, inc.iter().cloned());
            let mut approx = 0.0;
            for (t, b) in trans.iter().zip(beta) {
                approx += b * log_density_right_increments(t, &inc)?.sqrt_density();
            }
            Ok((target.eval(&w)? - approx).powi(2))
        },
        samples,
        seed,
    )?;
    Ok((est.mean, est.stderr))
}

/// Residuals over nested designs, each cross-checked by Monte Carlo when
/// `samples` > 0.
pub fn cyclicity_sequence(
    family: &ProbeFamily,
    target: &CylinderPolynomial,
    eps: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<CyclicityResult>> {
    nested_designs(target, eps)
        .iter()
        .map(|design| {
            let mut r = cyclicity_residual(family, target, design)?;
            if samples > 0 {
                r.mc_residual_sq = Some(cyclicity_mc_residual(family, target, design, &r.coefficients, samples, seed)?);
            }
            Ok(r)
        })
        .collect()
}

/// True when each squared residual exceeds its predecessor by at most three
/// Monte Carlo standard errors (zero slack where no estimate was taken).
pub fn residuals_non_increasing(seq: &[CyclicityResult]) -> bool {
    seq.windows(2).all(|w| {
        let se = w[1].mc_residual_sq.map_or(0.0, |(_, s)| s);
        w[1].residual.powi(2) <= w[0].residual.powi(2) + 3.0 * se + 1e-15
    })
}

/// ⟨√Z_x, √Z_y⟩ from the product formula exp(−½Σ(α_j − β_j)²), for
/// cross-checking the Gram matrix.
pub fn probe_gram_entry(family: &ProbeFamily, x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = (family.alphas(x), family.alphas(y));
    (-0.5 * a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp()
}

/// ⟨JF, JH⟩ and ⟨F, H⟩ on the same sampled paths, real parts.
pub fn involution_pairings(
    spec: &LieGroupSpec,
    f: &super::cylinder::GroupCylinderFunction,
    h: &super::cylinder::GroupCylinderFunction,
    grid: &TimeGrid,
    samples: u64,
    seed: u64,
) -> Result<crate::mc::EstimateSet> {
    let d = spec.algebra_dim();
    run_estimator_real(
        |s| {
            let g = develop_left_increments(spec, grid, &s.bm_increments(d, grid));
            let (jf, jh) = (super::operators::involution_j(spec, f, &g)?, super::operators::involution_j(spec, h, &g)?);
            let (ff, hh) = (f.eval(spec, &g)?, h.eval(spec, &g)?);
            let pj: Complex64 = jf * jh.conj();
            let p: Complex64 = ff * hh.conj();
            Ok(vec![pj.re, p.re, pj.re - p.re])
        },
        3,
        samples,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::StepFunction;
    use crate::repr::cylinder::{CylinderFunctional, GroupCylinderFunction, HermiteTerm};

    fn torus_phi() -> CameronMartinPath {
        let spec = LieGroupSpec::torus(2).unwrap();
        CameronMartinPath::single(&spec, 1.0, AlgebraVector::from_slice(&[0.8, -0.6]), Orientation::Right).unwrap()
    }

    #[test]
    fn symbolic_transport_is_exact() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let phi = CameronMartinPath::from_steps(
            &spec,
            vec![0.0, 0.5, 1.0],
            vec![AlgebraVector::from_slice(&[1.0, 0.2, -0.3]), AlgebraVector::from_slice(&[0.0, -0.7, 0.4])],
            Orientation::Left,
        )
        .unwrap();
        let t = GridTranslation::from_cm(&phi, &g).unwrap();
        let q = CellRotation::inverse_adjoint(&spec, &t.path);
        let h = StepFunction::constant(g, &AlgebraVector::from_slice(&[0.3, -0.1, 0.6]));
        let f = CylinderExponential::character(h.clone()).add_term(Complex64::new(0.4, 0.1), t.left.clone()).unwrap();
        assert!(intertwining_symbolic_defect(&t.right, &q, &f).unwrap() < 1e-13);
    }

    #[test]
    fn identity_path_intertwines_exactly() {
        let spec = LieGroupSpec::torus(2).unwrap();
        let g = TimeGrid::new(1.0, 1).unwrap();
        let f = CylinderExponential::character(StepFunction::constant(g, &AlgebraVector::from_slice(&[0.5, 0.5])));
        let id = GridTranslation::from_cm(&CameronMartinPath::identity(&spec, 1.0), &g).unwrap();
        let paths: Vec<_> = (0..10).map(|i| sample_bm(&spec, &g, &NoiseStream::new(1, i))).collect();
        for c in intertwining_candidates(&spec, &id, &f, &paths).unwrap() {
            assert!(c.max_relative_error < 1e-14);
        }
    }

    #[test]
    fn torus_selects_a_unique_kappa() {
        let spec = LieGroupSpec::torus(2).unwrap();
        let g = TimeGrid::new(1.0, 1).unwrap();
        let f = CylinderExponential::character(StepFunction::constant(g, &AlgebraVector::from_slice(&[0.7, 0.2])));
        let r = verify_intertwining(&spec, &torus_phi(), &f, 200, 5).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.details["selected_kappa"], 0.5);
        assert!((r.details["norm_u_f"] - r.details["norm_f"]).abs() < 1e-12);
        assert!((r.details["norm_energy_f"] - r.details["norm_f"]).abs() < 1e-12);
    }

    #[test]
    fn composition_defect_shrinks() {
        let spec = LieGroupSpec::so3();
        let phi = CameronMartinPath::single(&spec, 1.0, AlgebraVector::from_slice(&[0.9, -0.4, 0.2]), Orientation::Right).unwrap();
        let psi = CameronMartinPath::single(&spec, 1.0, AlgebraVector::from_slice(&[-0.3, 0.6, 0.8]), Orientation::Left).unwrap();
        let g = TimeGrid::new(1.0, 1).unwrap();
        let f = CylinderExponential::character(StepFunction::constant(g, &AlgebraVector::from_slice(&[0.5, 0.1, -0.2])));
        let plan = CampaignPlan { ladder: vec![4, 8, 16, 32], ..CampaignPlan::default() };
        let rep = composition_ladder(&spec, &phi, &psi, &f, &plan).unwrap();
        let order = rep.fitted_order.expect("resolved");
        assert!(order > 0.5, "{rep:?}");
        // On the torus the law is exact.
        let torus = LieGroupSpec::torus(1).unwrap();
        let a = CameronMartinPath::single(&torus, 1.0, AlgebraVector::from_slice(&[1.3]), Orientation::Right).unwrap();
        let b = CameronMartinPath::single(&torus, 1.0, AlgebraVector::from_slice(&[-0.4]), Orientation::Left).unwrap();
        let f1 = CylinderExponential::character(StepFunction::constant(g, &AlgebraVector::from_slice(&[0.5])));
        assert!(composition_defect(&torus, &a, &b, &f1, &TimeGrid::new(1.0, 8).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn gram_matches_product_formula() {
        let spec = LieGroupSpec::so3();
        let fam = ProbeFamily::new(
            &spec,
            TimeGrid::new(1.0, 2).unwrap(),
            vec![AlgebraVector::from_slice(&[1.0, 0.0, 0.0]), AlgebraVector::from_slice(&[0.0, 1.0, 1.0])],
        )
        .unwrap();
        let xs = [vec![0.0, 0.0], vec![0.3, -0.2], vec![-1.0, 0.5]];
        for x in &xs {
            for y in &xs {
                let (tx, ty) = (fam.translation(x).unwrap(), fam.translation(y).unwrap());
                let closed = half_density_closed_forms(&tx, &ty).unwrap().closed_alt;
                assert!((closed - probe_gram_entry(&fam, x, y)).abs() < 1e-14);
            }
        }
    }

    fn family() -> ProbeFamily {
        ProbeFamily::new(
            &LieGroupSpec::so3(),
            TimeGrid::new(1.0, 2).unwrap(),
            vec![AlgebraVector::from_slice(&[1.0, 0.0, 0.0]), AlgebraVector::from_slice(&[0.0, 1.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn constant_target_has_zero_residual() {
        let fam = family();
        let t = CylinderPolynomial::new(fam.variables(), vec![HermiteTerm { coefficient: 1.0, degrees: vec![0, 0] }]).unwrap();
        let r = cyclicity_residual(&fam, &t, &[vec![0.0, 0.0]]).unwrap();
        assert!(r.residual < 1e-8, "{r:?}");
    }

    #[test]
    fn degree_one_and_two_targets_are_reached() {
        let fam = family();
        for degrees in [vec![1, 0], vec![2, 0], vec![1, 1]] {
            let t = CylinderPolynomial::monomial(fam.variables(), degrees.clone()).unwrap();
            let seq = cyclicity_sequence(&fam, &t, &[0.8, 0.4, 0.2], 4000, 3).unwrap();
            assert!(residuals_non_increasing(&seq), "{degrees:?}: {seq:?}");
            let last = seq.last().unwrap();
            assert!(last.relative < 0.05, "{degrees:?}: {last:?}");
            let (m, s) = last.mc_residual_sq.unwrap();
            assert!((m - last.residual.powi(2)).abs() < 4.0 * s + 1e-6, "{degrees:?}: mc {m} ± {s} vs {}", last.residual.powi(2));
        }
    }

    #[test]
    fn involution_preserves_pairings() {
        let spec = LieGroupSpec::so3();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let f = GroupCylinderFunction::new(CylinderFunctional::Exponential(CylinderExponential::character(StepFunction::constant(
            g,
            &AlgebraVector::from_slice(&[0.6, 0.0, -0.3]),
        ))));
        let h = GroupCylinderFunction::new(CylinderFunctional::Exponential(CylinderExponential::character(StepFunction::constant(
            g,
            &AlgebraVector::from_slice(&[0.1, 0.4, 0.2]),
        ))));
        let set = involution_pairings(&spec, &f, &h, &g, 4000, 9).unwrap();
        let diff = set.get(2);
        assert!(diff.mean.abs() < 4.0 * diff.stderr, "{diff:?}");
    }
}
