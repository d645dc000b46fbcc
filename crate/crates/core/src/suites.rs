//! Named verification campaigns. Every identity is registered once with its
//! suite and the groups it applies to; the command line and the acceptance
//! tests both select from this registry.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::flow::{
    develop_left, develop_right, ito_left, ito_right, martingale_defect, quadratic_variation, rotate_path, sample_bm, terminal_trace,
};
use crate::girsanov::{
    half_density_inner, involution_check, quasi_invariance_ladder, tau, verify_normalization_many, verify_quasi_invariance_many,
    verify_tau_pair, McSettings, PathFunctional, Side,
};
use crate::heat::{chapman_kolmogorov_circle, chapman_kolmogorov_so3, fdd_goodness_of_fit, HeatKernelModel, HeatPoint};
use crate::lie::{AlgebraVector, GroupKind, LieGroupSpec};
use crate::linalg::Mat;
use crate::mc::{run_estimator, run_estimator_real, CampaignPlan, LadderReport};
use crate::noise::NoiseStream;
use crate::path::{path_invert, CameronMartinPath, GridTranslation, Orientation, StepFunction, TimeGrid};
use crate::repr::checks::{
    commutation_ladder, composition_ladder, cyclicity_sequence, intertwining_symbolic_defect, involution_pairings, pullback_defect_ladder,
    residuals_non_increasing, verify_intertwining, ProbeFamily,
};
use crate::repr::cylinder::{CellRotation, CylinderExponential, CylinderFunctional, CylinderPolynomial, GroupCylinderFunction, HermiteTerm};
use crate::repr::operators::{brownian_rep_pullback, energy_rep, fw_inverse, fw_transform, gauss_regular_rep, involution_j, PhaseDerivative};
use crate::report::{Reference, Verdict, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Machine-precision pathwise identities.
    Exact,
    /// Closed-form algebra on cylinder functionals.
    Symbolic,
    /// Monte Carlo identities judged at 3σ plus a bias budget.
    Statistical,
    /// Discretization ladders and fitted orders.
    Convergence,
}

impl Suite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Exact => "exact",
            Suite::Symbolic => "symbolic",
            Suite::Statistical => "statistical",
            Suite::Convergence => "convergence",
        }
    }
}

/// Campaign parameters shared by all identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub horizon: f64,
    pub steps: usize,
    pub samples: u64,
    pub seed: u64,
    /// Paths used by the exact pathwise identities.
    pub exact_samples: u64,
    pub ladder: Vec<usize>,
    pub ladder_samples: u64,
    pub intertwining_samples: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 200,
            samples: 100_000,
            seed: 7,
            exact_samples: 1000,
            ladder: vec![4, 8, 16, 32, 64],
            ladder_samples: 20_000,
            intertwining_samples: 1000,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        TimeGrid::new(self.horizon, self.steps)?;
        if self.steps % 2 != 0 {
            return Err(Error::InvalidConfig("N must be even so the grid refines the test-path partition".into()));
        }
        if self.samples < 2 || self.exact_samples < 1 || self.intertwining_samples < 1 {
            return Err(Error::InvalidConfig("sample counts must be positive (M ≥ 2)".into()));
        }
        self.plan().validate()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn settings(&self) -> Result<McSettings> {
        McSettings::new(self.horizon, self.steps, self.samples, self.seed)
    }

    pub fn plan(&self) -> CampaignPlan {
        CampaignPlan {
            horizon: self.horizon,
            ladder: self.ladder.clone(),
            samples: self.ladder_samples,
            seed: self.seed,
            ..CampaignPlan::default()
        }
    }

    fn as_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

/// A registered identity.
pub struct Identity {
    pub name: &'static str,
    pub suite: Suite,
    pub summary: &'static str,
    accepts: fn(&LieGroupSpec) -> bool,
    run: fn(&LieGroupSpec, &SuiteConfig) -> Result<Vec<VerificationReport>>,
}

impl Identity {
    pub fn accepts(&self, spec: &LieGroupSpec) -> bool {
        (self.accepts)(spec)
    }

    /// Runs on one group. Errors become a single inconclusive report so a
    /// campaign always yields a verdict per identity.
    pub fn run(&self, spec: &LieGroupSpec, cfg: &SuiteConfig) -> Vec<VerificationReport> {
        match (self.run)(spec, cfg) {
            Ok(r) => r,
            Err(e) => vec![VerificationReport::exact(self.name, &spec.label(), f64::NAN, 0.0, 0, cfg.seed, cfg.as_json())
                .with_verdict(Verdict::Inconclusive)
                .with_note(format!("error: {e}"))],
        }
    }
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} [{}]", self.name, self.suite.as_str())
    }
}

fn any(_: &LieGroupSpec) -> bool {
    true
}
fn non_abelian(s: &LieGroupSpec) -> bool {
    !s.is_abelian()
}
fn circle_only(s: &LieGroupSpec) -> bool {
    s.kind == GroupKind::Torus { k: 1 }
}
fn so3_only(s: &LieGroupSpec) -> bool {
    s.kind == GroupKind::SpecialOrthogonal { n: 3 }
}
fn circle_or_so3(s: &LieGroupSpec) -> bool {
    circle_only(s) || so3_only(s)
}

pub fn registry() -> Vec<Identity> {
    use Suite::*;
    macro_rules! id {
        ($name:expr, $suite:expr, $accepts:expr, $run:expr, $summary:expr) => {
            Identity {
                name: $name,
                suite: $suite,
                summary: $summary,
                accepts: $accepts,
                run: $run,
            }
        };
    }
    vec![
        id!("flow.ito_round_trip", Exact, any, ito_round_trip, "Itô maps invert left and right development"),
        id!("flow.theta_identities", Exact, any, theta_identities, "B^L∘Θ = −B^R and B^R∘Θ = −B^L"),
        id!("flow.qv_rotation", Exact, any, qv_rotation, "O_φ preserves per-path scalar quadratic variation"),
        id!("girsanov.theta_density", Exact, any, theta_density, "Z^R_φ(g) = Z^L_φ(Θ(g))"),
        id!("representations.involution_square", Exact, any, involution_square, "J² = id"),
        id!("heat.chapman_kolmogorov", Exact, circle_or_so3, chapman_kolmogorov, "semigroup property of the heat kernel by quadrature"),
        id!("representations.fourier_wiener.rules", Symbolic, any, fw_rules, "transform of 1, characters and real exponentials"),
        id!("representations.fourier_wiener.order_four", Symbolic, any, fw_order_four, "F⁴ = id on stored data"),
        id!("representations.fourier_wiener.unit_exponential", Symbolic, any, fw_unit_exponential, "F(e^{−½S_h−¼‖h‖²}) = e^{−iS_h/2}"),
        id!("representations.regular_rep_transport", Symbolic, any, regular_rep_transport, "F U_{R,h} F⁻¹ f = e^{−iS_h/2} f∘(R*)⁻¹"),
        id!("representations.unitarity", Symbolic, any, unitarity, "closed-form unitarity of F, U_{R,h}, u_φ, E_φ"),
        id!("representations.hermite_orthogonality", Symbolic, any, hermite_orthogonality, "distinct Hermite monomials are orthogonal"),
        id!("girsanov.normalization", Statistical, any, normalization, "E[Z^R] = E[Z^L] = 1 for five test paths"),
        id!("girsanov.quasi_invariance", Statistical, any, quasi_invariance, "E[F(gφ)Z^R] = E[F] and E[F(φ⁻¹g)Z^L] = E[F]"),
        id!("girsanov.half_density", Statistical, any, half_density, "⟨√Z_φ, √Z_ψ⟩ against closed forms"),
        id!("girsanov.tau_pair", Statistical, any, tau_pair_check, "τ(U_φU_ψ) versus τ(U_ψU_φ)"),
        id!("heat.fdd_chi_square", Statistical, circle_only, fdd_chi_square, "two-time distributions against the wrapped Gaussian"),
        id!("heat.trace_moment", Statistical, so3_only, trace_moment, "E[tr g_T] against the spectral kernel"),
        id!("flow.quadratic_variation", Statistical, any, quadratic_variation_check, "ensemble QV of B^L equals T·I"),
        id!("flow.martingale", Statistical, any, martingale, "coordinate martingales and the uncompensated control"),
        id!("representations.intertwining", Statistical, any, intertwining, "conjugated u_φ equals the energy representation"),
        id!("representations.cyclicity", Statistical, any, cyclicity, "Hermite targets from half-density probes"),
        id!("representations.involution_unitarity", Statistical, any, involution_unitarity, "⟨JF, JH⟩ = ⟨F, H⟩"),
        id!("girsanov.quasi_invariance_ladder", Convergence, non_abelian, quasi_ladder, "first-order bias of the quasi-invariance gap"),
        id!("representations.pullback_ladder", Convergence, non_abelian, pullback_ladder, "√Z F(gφ) against u_φ f on B^L(g)"),
        id!("representations.commutation_ladder", Convergence, non_abelian, commutation, "U^L_ψ and U^R_φ commute"),
        id!("representations.composition_ladder", Convergence, non_abelian, composition, "u_φ u_ψ = u_{φψ}"),
    ]
}

pub const DEFAULT_GROUPS: [&str; 2] = ["so3", "circle"];

/// Shell-style glob over identity names; a pattern also matches the name
/// with its module prefix removed (`intertwining*`).
pub fn identity_matches(pattern: &str, name: &str) -> bool {
    let Ok(p) = glob::Pattern::new(pattern) else {
        return false;
    };
    p.matches(name) || name.split_once('.').is_some_and(|(_, rest)| p.matches(rest))
}

/// Resolves a suite name (`exact`, `symbolic`, `statistical`,
/// `convergence`, a module prefix such as `girsanov`, or `all`) and an
/// optional identity glob to registered identities.
pub fn select(suite: Option<&str>, identity: Option<&str>) -> Result<Vec<Identity>> {
    let suite = suite.map(str::to_ascii_lowercase);
    let chosen: Vec<Identity> = registry()
        .into_iter()
        .filter(|id| match suite.as_deref() {
            None | Some("all") => true,
            Some(s) => id.suite.as_str() == s || id.name.split('.').next() == Some(s),
        })
        .filter(|id| identity.is_none_or(|g| identity_matches(g, id.name)))
        .collect();
    if chosen.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no identity matches suite {:?} and identity {:?}",
            suite.unwrap_or_else(|| "all".into()),
            identity.unwrap_or("*")
        )));
    }
    Ok(chosen)
}

/// Runs identities on every accepting group, in registry order.
pub fn run_identities(ids: &[Identity], groups: &[LieGroupSpec], cfg: &SuiteConfig) -> Vec<VerificationReport> {
    let mut out = Vec::new();
    for id in ids {
        for g in groups {
            if id.accepts(g) {
                out.extend(id.run(g, cfg));
            }
        }
    }
    out
}

fn rotate_pattern(pattern: &[f64], d: usize) -> AlgebraVector {
    let v = AlgebraVector::from_slice(&(0..d).map(|i| pattern[i % pattern.len()] * (1.0 + 0.1 * (i / pattern.len()) as f64)).collect::<Vec<_>>());
    v.scale(1.0 / v.norm())
}

/// Five two-segment test paths on [0, T] with energies T·{1, 2.25, 4, 6.25, 9},
/// alternating orientation.
pub fn test_paths(spec: &LieGroupSpec, horizon: f64) -> Result<Vec<CameronMartinPath>> {
    let d = spec.algebra_dim();
    let u1 = rotate_pattern(&[1.0, -0.5, 0.25, 0.8, -0.3, 0.6], d);
    let u2 = if d == 1 { u1.neg() } else { rotate_pattern(&[-0.3, 0.8, 0.5, -0.2, 0.9, 0.1], d) };
    [1.0, 1.5, 2.0, 2.5, 3.0]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let orientation = if i % 2 == 0 { Orientation::Right } else { Orientation::Left };
            CameronMartinPath::from_steps(spec, vec![0.0, 0.5 * horizon, horizon], vec![u1.scale(*c), u2.scale(*c)], orientation)
        })
        .collect()
}

/// SO(3) pair whose two half-density closed forms are far apart.
pub const HALF_DENSITY_WITNESS: (&str, &str) = (
    r#"{"partition":[0,0.5,1],"generators":[[1.0,-1.0,0.5],[3.0,-0.5,-2.5]],"orientation":"left"}"#,
    r#"{"partition":[0,0.5,1],"generators":[[1.0,-1.0,2.5],[-3.0,-2.5,-0.5]],"orientation":"right"}"#,
);

/// SO(3) pair with a resolvable τ(U_φU_ψ) − τ(U_ψU_φ).
pub const TAU_PAIR_WITNESS: (&str, &str) = (
    r#"{"partition":[0,0.5,1],"generators":[[-2.0,-1.5,-0.5],[2.5,-1.0,-2.5]],"orientation":"left"}"#,
    r#"{"partition":[0,0.5,1],"generators":[[0.5,0,0.5],[-2.5,1.0,-2.0]],"orientation":"left"}"#,
);

fn witness(spec: &LieGroupSpec, pair: (&str, &str)) -> Result<(CameronMartinPath, CameronMartinPath)> {
    Ok((CameronMartinPath::from_json(spec, pair.0)?, CameronMartinPath::from_json(spec, pair.1)?))
}

fn exact_report(identity: &str, spec: &LieGroupSpec, error: f64, tol: f64, samples: u64, cfg: &SuiteConfig) -> VerificationReport {
    VerificationReport::exact(identity, &spec.label(), error, tol, samples, cfg.seed, cfg.as_json())
}

fn ito_round_trip(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let (mut left, mut right) = (0.0f64, 0.0f64);
    for i in 0..cfg.exact_samples {
        let w = sample_bm(spec, &grid, &NoiseStream::new(cfg.seed, i));
        left = left.max(ito_left(spec, &develop_left(spec, &w))?.max_distance(&w));
        right = right.max(ito_right(spec, &develop_right(spec, &w))?.max_distance(&w));
    }
    Ok(vec![
        exact_report("flow.ito_round_trip.left", spec, left, 1e-10, cfg.exact_samples, cfg),
        exact_report("flow.ito_round_trip.right", spec, right, 1e-10, cfg.exact_samples, cfg),
    ])
}

fn theta_identities(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for i in 0..cfg.exact_samples {
        let g = develop_left(spec, &sample_bm(spec, &grid, &NoiseStream::new(cfg.seed, i)));
        let theta = path_invert(&g);
        a = a.max(ito_left(spec, &theta)?.max_distance(&ito_right(spec, &g)?.neg()));
        b = b.max(ito_right(spec, &theta)?.max_distance(&ito_left(spec, &g)?.neg()));
    }
    Ok(vec![
        exact_report("flow.theta.left_of_inverse", spec, a, 1e-12, cfg.exact_samples, cfg),
        exact_report("flow.theta.right_of_inverse", spec, b, 1e-12, cfg.exact_samples, cfg),
    ])
}

fn qv_rotation(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let phi = &test_paths(spec, cfg.horizon)?[3];
    let mut worst = 0.0f64;
    for i in 0..cfg.exact_samples {
        let w = sample_bm(spec, &grid, &NoiseStream::new(cfg.seed, i));
        let r = rotate_path(spec, phi, &w)?;
        // O_φ rotates each increment, so the scalar variation Σ|Δw|² is exact per path.
        worst = worst.max((quadratic_variation(&r).trace() - quadratic_variation(&w).trace()).abs());
    }
    Ok(vec![exact_report("flow.qv_rotation", spec, worst, 1e-12, cfg.exact_samples, cfg)])
}

fn theta_density(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let phi = &test_paths(spec, cfg.horizon)?[3];
    let s = McSettings::new(cfg.horizon, cfg.steps, cfg.exact_samples, cfg.seed)?;
    let worst = involution_check(spec, phi, &s)?;
    Ok(vec![exact_report("girsanov.theta_density", spec, worst, 1e-10, cfg.exact_samples, cfg)])
}

fn sample_group_function(spec: &LieGroupSpec, grid: TimeGrid) -> GroupCylinderFunction {
    let d = spec.algebra_dim();
    let h = StepFunction::constant(grid, &rotate_pattern(&[0.7, -0.2, 0.4], d).scale(0.8));
    GroupCylinderFunction::new(CylinderFunctional::Exponential(CylinderExponential::character(h)))
}

fn involution_square(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let f = sample_group_function(spec, grid);
    let mut worst = 0.0f64;
    for i in 0..cfg.exact_samples {
        let g = develop_left(spec, &sample_bm(spec, &grid, &NoiseStream::new(cfg.seed, i)));
        // (J(JF))(g) = (JF)(Θg)
        worst = worst.max((involution_j(spec, &f, &path_invert(&g))? - f.eval(spec, &g)?).norm());
    }
    Ok(vec![exact_report("representations.involution_square", spec, worst, 1e-12, cfg.exact_samples, cfg)])
}

fn chapman_kolmogorov(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mut worst = 0.0f64;
    if circle_only(spec) {
        let m = HeatKernelModel::torus(1);
        for x in [0.0, 0.7, -2.5, 3.1] {
            worst = worst.max((chapman_kolmogorov_circle(&m, 0.3, 0.5, x)? - m.circle_density(0.8, x)?).abs());
        }
    } else {
        let m = HeatKernelModel::so3(spec)?;
        for v in [[0.0, 0.0, 0.0], [0.3, -0.8, 0.4], [0.0, 2.5, 0.3]] {
            let x = spec.exp(&AlgebraVector::from_slice(&v));
            worst = worst.max((chapman_kolmogorov_so3(spec, &m, 0.4, 0.6, &x)? - m.kernel_eval(1.0, HeatPoint::Group(&x))?).abs());
        }
    }
    Ok(vec![exact_report("heat.chapman_kolmogorov", spec, worst, 1e-6, 0, cfg)])
}

fn symbolic_grid(cfg: &SuiteConfig) -> Result<TimeGrid> {
    TimeGrid::new(cfg.horizon, 4)
}

fn symbolic_functionals(spec: &LieGroupSpec, grid: TimeGrid) -> Result<Vec<CylinderExponential>> {
    let d = spec.algebra_dim();
    let step = |pat: &[f64], s: f64| StepFunction {
        grid,
        cells: (0..grid.steps).map(|j| rotate_pattern(&[pat[j % pat.len()], pat[(j + 1) % pat.len()], -0.3], d).scale(s)).collect(),
    };
    Ok(vec![
        CylinderExponential::character(step(&[0.4, -0.9, 0.2], 0.8)),
        CylinderExponential::real_exponential(step(&[1.0, 0.3, -0.5], 0.6)),
        CylinderExponential::new(Complex64::new(0.2, -0.4), Complex64::new(0.3, 0.7), step(&[-0.2, 0.5, 0.9], 1.1))
            .add_term(Complex64::new(-0.6, 0.1), step(&[0.7, 0.7, -0.1], 0.5))?,
    ])
}

fn fw_rules(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = symbolic_grid(cfg)?;
    let d = spec.algebra_dim();
    let one = CylinderExponential::one(grid, d);
    let mut worst = fw_transform(&one).functional_difference(&one);
    for f in symbolic_functionals(spec, grid)?.iter().take(2) {
        let h = f.terms[0].h.clone();
        let n = h.l2_norm_sq();
        // F(φ̂) = e^{−‖h‖²}e^{−S_h};  F(e^{S_h}) = e^{‖h‖²}φ̂
        let chi = CylinderExponential::character(h.clone());
        worst = worst.max(fw_transform(&chi).functional_difference(&CylinderExponential::new(
            Complex64::new(-n, 0.0),
            Complex64::new(-1.0, 0.0),
            h.clone(),
        )));
        let re = CylinderExponential::real_exponential(h.clone());
        worst = worst.max(fw_transform(&re).functional_difference(&CylinderExponential::new(
            Complex64::new(n, 0.0),
            Complex64::new(0.0, 1.0),
            h,
        )));
    }
    Ok(vec![exact_report("representations.fourier_wiener.rules", spec, worst, 1e-12, 0, cfg)])
}

fn fw_order_four(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mut worst = 0.0f64;
    for f in symbolic_functionals(spec, symbolic_grid(cfg)?)? {
        let f4 = fw_transform(&fw_transform(&fw_transform(&fw_transform(&f))));
        worst = worst.max(f4.max_data_difference(&f)).max(fw_inverse(&fw_transform(&f)).max_data_difference(&f));
    }
    Ok(vec![exact_report("representations.fourier_wiener.order_four", spec, worst, 0.0, 0, cfg)])
}

fn fw_unit_exponential(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let mut worst = 0.0f64;
    for f in symbolic_functionals(spec, symbolic_grid(cfg)?)? {
        let h = f.terms[0].h.clone();
        let lhs = fw_transform(&CylinderExponential::new(Complex64::new(-0.25 * h.l2_norm_sq(), 0.0), Complex64::new(-0.5, 0.0), h.clone()));
        let rhs = CylinderExponential::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, -0.5), h);
        worst = worst.max(lhs.functional_difference(&rhs));
    }
    Ok(vec![exact_report("representations.fourier_wiener.unit_exponential", spec, worst, 1e-12, 0, cfg)])
}

fn regular_rep_transport(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = symbolic_grid(cfg)?;
    let fs = symbolic_functionals(spec, grid)?;
    let mut worst = 0.0f64;
    for phi in test_paths(spec, cfg.horizon)? {
        let t = GridTranslation::from_cm(&phi, &grid)?;
        let q = CellRotation::inverse_adjoint(spec, &t.path);
        for f in &fs {
            worst = worst.max(intertwining_symbolic_defect(&t.right, &q, f)? / f.norm_sq().sqrt().max(1.0));
        }
    }
    Ok(vec![exact_report("representations.regular_rep_transport", spec, worst, 1e-12, 0, cfg)])
}

fn unitarity(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = symbolic_grid(cfg)?;
    let fs = symbolic_functionals(spec, grid)?;
    let phi = GridTranslation::from_cm(&test_paths(spec, cfg.horizon)?[2], &grid)?;
    let q = CellRotation::inverse_adjoint(spec, &phi.path);
    let h = fs[2].terms[1].h.clone();
    type Op<'a> = Box<dyn Fn(&CylinderExponential) -> Result<CylinderExponential> + 'a>;
    let ops: Vec<(&str, Op)> = vec![
        ("fourier_wiener", Box::new(|f| Ok(fw_transform(f)))),
        ("gaussian_regular", Box::new(|f| gauss_regular_rep(&h, &q, f))),
        ("brownian_pullback", Box::new(|f| brownian_rep_pullback(spec, &phi, f))),
        ("energy", Box::new(|f| energy_rep(spec, &phi, 0.5, PhaseDerivative::Right, f))),
    ];
    let mut out = Vec::new();
    for (name, op) in &ops {
        let mut worst = 0.0f64;
        for a in &fs {
            for b in &fs {
                let base = a.pairing(b)?;
                let moved = op(a)?.pairing(&op(b)?)?;
                worst = worst.max((moved - base).norm() / base.norm().max(1.0));
            }
        }
        out.push(exact_report(&format!("representations.unitarity.{name}"), spec, worst, 1e-12, 0, cfg));
    }
    Ok(out)
}

fn hermite_orthogonality(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let fam = probe_family(spec, cfg)?;
    let degs: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0], [2, 1]];
    let mut worst = 0.0f64;
    for a in &degs {
        for b in &degs {
            if a != b {
                let p = CylinderPolynomial::monomial(fam.variables(), a.to_vec())?;
                let q = CylinderPolynomial::monomial(fam.variables(), b.to_vec())?;
                worst = worst.max(p.pairing(&q)?.abs());
            }
        }
    }
    Ok(vec![exact_report("representations.hermite_orthogonality", spec, worst, 0.0, 0, cfg)])
}

fn normalization(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let paths = test_paths(spec, cfg.horizon)?;
    let sides = [Side::Right, Side::Left];
    let mut out = verify_normalization_many(spec, &paths, &sides, &cfg.settings()?)?;
    for (k, r) in out.iter_mut().enumerate() {
        r.identity = format!("{}.phi{}", r.identity, k / sides.len() + 1);
    }
    Ok(out)
}

fn quasi_invariance(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let s = cfg.settings()?;
    let phi = &test_paths(spec, cfg.horizon)?[2];
    let fs = PathFunctional::standard_set(spec);
    let mut out = verify_quasi_invariance_many(spec, &fs, phi, Side::Right, &s)?;
    out.extend(verify_quasi_invariance_many(spec, &fs, phi, Side::Left, &s)?);
    Ok(out)
}

fn half_density(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let s = cfg.settings()?;
    let paths = test_paths(spec, cfg.horizon)?;
    let mut out = vec![tau(spec, &paths[2], &s)?];
    let (phi, psi) = if so3_only(spec) { witness(spec, HALF_DENSITY_WITNESS)? } else { (paths[1].clone(), paths[3].clone()) };
    let mut r = half_density_inner(spec, &phi, &psi, &s)?;
    if !spec.is_abelian() {
        let td = r.details["trace_defect"];
        if td <= 0.1 {
            r = r.with_verdict(Verdict::Fail).with_note(format!("trace_defect {td} does not exceed 0.1"));
        }
    }
    out.push(r);
    Ok(out)
}

fn tau_pair_check(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let s = cfg.settings()?;
    let paths = test_paths(spec, cfg.horizon)?;
    let (phi, psi) = if so3_only(spec) { witness(spec, TAU_PAIR_WITNESS)? } else { (paths[1].clone(), paths[3].clone()) };
    Ok(vec![verify_tau_pair(spec, &phi, &psi, &s)?])
}

fn fdd_chi_square(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let times = [0.5 * cfg.horizon, cfg.horizon];
    let idx: Vec<usize> = times.iter().map(|t| grid.node_index(*t).expect("even grid")).collect();
    let samples: Vec<_> = (0..cfg.samples)
        .map(|i| {
            let g = develop_left(spec, &sample_bm(spec, &grid, &NoiseStream::new(cfg.seed, i)));
            idx.iter().map(|k| g.values[*k].clone()).collect()
        })
        .collect();
    let gof = fdd_goodness_of_fit(&samples, &HeatKernelModel::torus(1), &times, 8)?;
    Ok(vec![VerificationReport::exact("heat.fdd_chi_square", &spec.label(), gof.p_value, 0.0, cfg.samples, cfg.seed, cfg.as_json())
        .with_reference("significance", 0.01)
        .with_detail("statistic", gof.statistic)
        .with_detail("degrees_of_freedom", gof.degrees_of_freedom as f64)
        .with_detail("p_value", gof.p_value)
        .with_note("pass iff p ≥ 0.01")
        .with_verdict(Verdict::from_bool(gof.p_value >= 0.01))])
}

fn trace_moment(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let model = HeatKernelModel::so3(spec)?;
    let e = run_estimator(|n| Ok(terminal_trace(&develop_left(spec, &sample_bm(spec, &grid, n)))), cfg.samples, cfg.seed)?;
    Ok(vec![VerificationReport::statistical(
        "heat.trace_moment",
        &spec.label(),
        e.mean,
        e.stderr,
        cfg.samples,
        Reference {
            label: "spectral kernel".into(),
            value: model.so3_trace_moment(cfg.horizon)?,
        },
        0.0,
        cfg.seed,
        cfg.as_json(),
    )])
}

fn quadratic_variation_check(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let d = spec.algebra_dim();
    let set = run_estimator_real(
        |n| {
            let g = develop_left(spec, &sample_bm(spec, &grid, n));
            Ok(quadratic_variation(&ito_left(spec, &g)?).as_slice().to_vec())
        },
        d * d,
        cfg.samples,
        cfg.seed,
    )?;
    let mean: Vec<f64> = (0..d * d).map(|i| set.get(i).mean).collect();
    let dist = Mat::from_row_major(d, &mean).sub(&Mat::identity(d).scale(cfg.horizon)).frobenius_norm();
    let tol = 3.0 * d as f64 / ((cfg.samples * cfg.steps as u64) as f64).sqrt();
    Ok(vec![exact_report("flow.quadratic_variation", spec, dist, tol, cfg.samples, cfg)])
}

fn martingale(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = cfg.grid()?;
    let cps = [(0, cfg.steps / 2), (cfg.steps / 2, cfg.steps)];
    let ok = martingale_defect(spec, &grid, &cps, cfg.samples, cfg.seed, true)?;
    let bad = martingale_defect(spec, &grid, &cps, cfg.samples, cfg.seed, false)?;
    let worst = |r: &crate::flow::MartingaleReport| {
        r.entries
            .iter()
            .max_by(|a, b| (a.mean.abs() / a.stderr.max(1e-300)).total_cmp(&(b.mean.abs() / b.stderr.max(1e-300))))
            .cloned()
    };
    let w = worst(&ok).ok_or(Error::TooFewSamples { got: 0, need: 1 })?;
    let main = VerificationReport::statistical(
        "flow.martingale",
        &spec.label(),
        w.mean,
        w.stderr,
        cfg.samples,
        Reference {
            label: format!("worst test function {} on [{}, {}]", w.test_function, w.s, w.t),
            value: 0.0,
        },
        ok.bias_allowance,
        cfg.seed,
        cfg.as_json(),
    )
    .with_detail("max_sigma", ok.max_sigma)
    .with_detail("entries", ok.entries.len() as f64)
    .with_verdict(Verdict::from_bool(ok.pass));
    let wb = worst(&bad).ok_or(Error::TooFewSamples { got: 0, need: 1 })?;
    let control = VerificationReport::exact(
        "flow.martingale.negative_control",
        &spec.label(),
        bad.max_sigma,
        10.0,
        cfg.samples,
        cfg.seed,
        cfg.as_json(),
    )
    .with_detail("worst_mean", wb.mean)
    .with_detail("worst_stderr", wb.stderr)
    .with_note("compensator removed; pass iff the defect exceeds 10 standard errors")
    .with_verdict(Verdict::from_bool(bad.max_sigma > 10.0));
    Ok(vec![main, control])
}

fn intertwining(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = TimeGrid::new(cfg.horizon, 2)?;
    let d = spec.algebra_dim();
    let f = CylinderExponential::character(StepFunction {
        grid,
        cells: vec![rotate_pattern(&[0.7, 0.2, -0.4], d), rotate_pattern(&[-0.3, 0.6, 0.5], d).scale(0.5)],
    })
    .add_term(Complex64::new(0.3, 0.0), StepFunction::constant(grid, &rotate_pattern(&[0.2, 0.2, -0.4], d)))?;
    let phi = &test_paths(spec, cfg.horizon)?[1];
    Ok(vec![verify_intertwining(spec, phi, &f, cfg.intertwining_samples, cfg.seed)?])
}

fn probe_family(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<ProbeFamily> {
    let d = spec.algebra_dim();
    ProbeFamily::new(
        spec,
        TimeGrid::new(cfg.horizon, 2)?,
        vec![rotate_pattern(&[1.0, 0.0, 0.0], d), rotate_pattern(&[0.5, 1.0, 1.0], d)],
    )
}

pub const CYCLICITY_EPS: [f64; 3] = [0.8, 0.4, 0.2];

fn cyclicity(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let fam = probe_family(spec, cfg)?;
    let samples = cfg.ladder_samples;
    let mut out = Vec::new();
    let one = CylinderPolynomial::new(fam.variables(), vec![HermiteTerm { coefficient: 1.0, degrees: vec![0, 0] }])?;
    let r1 = crate::repr::checks::cyclicity_residual(&fam, &one, &[vec![0.0, 0.0]])?;
    out.push(exact_report("representations.cyclicity.constant", spec, r1.residual, 1e-8, 0, cfg).with_detail("condition", r1.condition));
    let targets: [(&str, Vec<HermiteTerm>); 4] = [
        ("he1", vec![HermiteTerm { coefficient: 1.0, degrees: vec![1, 0] }]),
        ("he2", vec![HermiteTerm { coefficient: 1.0, degrees: vec![2, 0] }]),
        ("he1_he1", vec![HermiteTerm { coefficient: 1.0, degrees: vec![1, 1] }]),
        (
            "mixed",
            vec![
                HermiteTerm { coefficient: 0.5, degrees: vec![0, 0] },
                HermiteTerm { coefficient: -1.0, degrees: vec![0, 1] },
                HermiteTerm { coefficient: 0.7, degrees: vec![2, 0] },
            ],
        ),
    ];
    for (name, terms) in targets {
        let t = CylinderPolynomial::new(fam.variables(), terms)?;
        let seq = cyclicity_sequence(&fam, &t, &CYCLICITY_EPS, samples, cfg.seed)?;
        let last = seq.last().expect("nonempty design list");
        let monotone = residuals_non_increasing(&seq);
        let mut r = VerificationReport::exact(
            &format!("representations.cyclicity.{name}"),
            &spec.label(),
            last.relative,
            0.05,
            samples,
            cfg.seed,
            json!({"eps": CYCLICITY_EPS, "target": t, "config": cfg.as_json()}),
        )
        .with_detail("monotone", if monotone { 1.0 } else { 0.0 })
        .with_detail("condition", last.condition);
        for (i, s) in seq.iter().enumerate() {
            r = r
                .with_detail(&format!("relative[{}]", s.design_size), s.relative)
                .with_detail(&format!("mc_residual_sq[{i}]"), s.mc_residual_sq.map_or(f64::NAN, |x| x.0));
        }
        let ok = r.passed() && monotone;
        out.push(r.with_verdict(Verdict::from_bool(ok)));
    }
    Ok(out)
}

fn involution_unitarity(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let grid = TimeGrid::new(cfg.horizon, 20)?;
    let f = sample_group_function(spec, grid);
    let h = GroupCylinderFunction::new(CylinderFunctional::Exponential(CylinderExponential::character(StepFunction::constant(
        grid,
        &rotate_pattern(&[0.1, 0.4, 0.2], spec.algebra_dim()).scale(0.6),
    ))));
    let m = cfg.ladder_samples;
    let set = involution_pairings(spec, &f, &h, &grid, m, cfg.seed)?;
    let (j, base, diff) = (set.get(0), set.get(1), set.get(2));
    Ok(vec![VerificationReport::statistical(
        "representations.involution_unitarity",
        &spec.label(),
        diff.mean,
        diff.stderr,
        m,
        Reference {
            label: "zero".into(),
            value: 0.0,
        },
        0.0,
        cfg.seed,
        cfg.as_json(),
    )
    .with_detail("pairing_J", j.mean)
    .with_detail("pairing", base.mean)])
}

/// Whether a fitted order is judged around a target or as a lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderTarget {
    Around(f64, f64),
    AtLeast(f64),
}

pub fn order_report(identity: &str, spec: &LieGroupSpec, ladder: &LadderReport, target: OrderTarget, plan: &CampaignPlan) -> VerificationReport {
    let order = ladder.fitted_order.unwrap_or(f64::NAN);
    let (reference, tol, verdict) = match target {
        OrderTarget::Around(t, tol) => (t, tol, Verdict::from_bool((order - t).abs() <= tol)),
        OrderTarget::AtLeast(t) => (t, 0.0, Verdict::from_bool(order >= t)),
    };
    let verdict = if ladder.noise_limited { Verdict::Inconclusive } else { verdict };
    let mut r = VerificationReport {
        identity: identity.into(),
        group: spec.label(),
        estimate: order,
        stderr: 0.0,
        samples: plan.samples,
        references: vec![Reference {
            label: match target {
                OrderTarget::Around(..) => "target order".into(),
                OrderTarget::AtLeast(..) => "minimum order".into(),
            },
            value: reference,
        }],
        difference: order - reference,
        bias_allowance: tol,
        verdict,
        seed: plan.seed,
        config_digest: crate::report::config_digest(&json!(plan)),
        config: json!(plan),
        details: Default::default(),
        notes: vec![format!("fit basis: {}", ladder.fit_basis)],
    };
    for l in &ladder.levels {
        r = r.with_detail(&format!("gap[N={}]", l.steps), l.gap).with_detail(&format!("stderr[N={}]", l.steps), l.stderr);
    }
    r
}

fn quasi_ladder(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let plan = cfg.plan();
    let phi = &test_paths(spec, cfg.horizon)?[2];
    let mut out = Vec::new();
    for f in PathFunctional::standard_set(spec) {
        for side in [Side::Right, Side::Left] {
            let lad = quasi_invariance_ladder(spec, &f, phi, side, &plan)?;
            let (target, note) = match f {
                // Class functions lose the first-order term of the gap.
                PathFunctional::TerminalTrace => (OrderTarget::AtLeast(0.6), Some("class function: at least first order")),
                _ => (OrderTarget::Around(1.0, 0.4), None),
            };
            let mut r = order_report(&format!("girsanov.quasi_invariance_ladder.{}.{}", side.as_str(), f.name()), spec, &lad, target, &plan);
            if let Some(n) = note {
                r = r.with_note(n);
            }
            out.push(r);
        }
    }
    Ok(out)
}

fn ladder_functional(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<CylinderExponential> {
    let grid = TimeGrid::new(cfg.horizon, 2)?;
    let d = spec.algebra_dim();
    CylinderExponential::character(StepFunction {
        grid,
        cells: vec![rotate_pattern(&[0.8, -0.3, 0.5], d), rotate_pattern(&[-0.2, 0.6, 0.4], d)],
    })
    .add_term(Complex64::new(0.3, 0.0), StepFunction::constant(grid, &rotate_pattern(&[0.2, 0.2, -0.4], d)))
}

fn pullback_ladder(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let plan = cfg.plan();
    let phi = &test_paths(spec, cfg.horizon)?[1];
    let lad = pullback_defect_ladder(spec, phi, &ladder_functional(spec, cfg)?, &plan)?;
    Ok(vec![order_report("representations.pullback_ladder", spec, &lad, OrderTarget::Around(1.0, 0.4), &plan)])
}

fn commutation(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let plan = cfg.plan();
    let paths = test_paths(spec, cfg.horizon)?;
    let lad = commutation_ladder(spec, &paths[1], &paths[2], &plan)?;
    Ok(vec![order_report("representations.commutation_ladder", spec, &lad, OrderTarget::AtLeast(0.6), &plan)])
}

fn composition(spec: &LieGroupSpec, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let plan = cfg.plan();
    let paths = test_paths(spec, cfg.horizon)?;
    let lad = composition_ladder(spec, &paths[1], &paths[2], &ladder_functional(spec, cfg)?, &plan)?;
    Ok(vec![order_report("representations.composition_ladder", spec, &lad, OrderTarget::AtLeast(0.6), &plan)])
}
