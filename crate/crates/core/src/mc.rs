//! Reproducible Monte Carlo: streaming moments, deterministic parallel
//! reduction keyed by path index, and Δt ladders.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::path::TimeGrid;
use crate::stats::ols_fit;

/// Paths per block; blocks are reduced sequentially, then merged in a
/// fixed binary tree, so the result does not depend on the worker count.
pub const BLOCK: u64 = 256;
pub const MAX_FAILURE_RATE: f64 = 1e-3;

/// Welford accumulator for complex samples; min/max track real parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub count: u64,
    pub mean: Complex64,
    /// Σ |x − mean|².
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for EstimatorState {
    fn default() -> Self {
        Self {
            count: 0,
            mean: Complex64::new(0.0, 0.0),
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl EstimatorState {
    pub fn push(&mut self, x: Complex64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += delta.re * delta2.re + delta.im * delta2.im;
        self.min = self.min.min(x.re);
        self.max = self.max.max(x.re);
    }

    pub fn push_real(&mut self, x: f64) {
        self.push(Complex64::new(x, 0.0));
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (nb / n as f64);
        let m2 = self.m2 + other.m2 + delta.norm_sqr() * na * nb / n as f64;
        Self {
            count: n,
            mean,
            m2,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.m2 / (self.count as f64 * (self.count - 1) as f64)).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean.re,
            mean_im: self.mean.im,
            stderr: self.stderr(),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub mean_im: f64,
    pub stderr: f64,
    pub count: u64,
}

impl Estimate {
    pub fn complex_mean(&self) -> Complex64 {
        Complex64::new(self.mean, self.mean_im)
    }
}

/// Result of a vector-valued campaign: one state per output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub states: Vec<EstimatorState>,
    pub failures: u64,
    pub requested: u64,
}

impl EstimateSet {
    pub fn get(&self, i: usize) -> Estimate {
        self.states[i].estimate()
    }

    fn empty(width: usize) -> Self {
        Self {
            states: vec![EstimatorState::default(); width],
            failures: 0,
            requested: 0,
        }
    }

    fn merge(&self, other: &Self) -> Self {
        Self {
            states: self.states.iter().zip(&other.states).map(|(a, b)| a.merge(b)).collect(),
            failures: self.failures + other.failures,
            requested: self.requested + other.requested,
        }
    }
}

fn tree_reduce(mut parts: Vec<EstimateSet>, width: usize) -> EstimateSet {
    if parts.is_empty() {
        return EstimateSet::empty(width);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.chunks(2);
        for pair in &mut it {
            next.push(if pair.len() == 2 { pair[0].merge(&pair[1]) } else { pair[0].clone() });
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Runs `task` on paths 0..M, each with its own noise stream under `seed`.
/// The task returns `width` complex outputs; a task error counts as a failure.
pub fn run_estimator_vec<F>(task: F, width: usize, m: u64, seed: u64) -> Result<EstimateSet>
where
    F: Fn(&NoiseStream) -> Result<Vec<Complex64>> + Sync,
{
    if m < 2 {
        return Err(Error::TooFewSamples {
            got: m as usize,
            need: 2,
        });
    }
    let blocks = m.div_ceil(BLOCK);
    let parts: Vec<EstimateSet> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut set = EstimateSet::empty(width);
            for i in b * BLOCK..((b + 1) * BLOCK).min(m) {
                set.requested += 1;
                match task(&NoiseStream::new(seed, i)) {
                    Ok(v) if v.len() == width && v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                        for (s, x) in set.states.iter_mut().zip(v) {
                            s.push(x);
                        }
                    }
                    _ => set.failures += 1,
                }
            }
            set
        })
        .collect();
    let out = tree_reduce(parts, width);
    let rate = out.failures as f64 / m as f64;
    if rate > MAX_FAILURE_RATE {
        return Err(Error::TaskFailures { rate });
    }
    Ok(out)
}

/// Real-valued multi-output convenience wrapper.
pub fn run_estimator_real<F>(task: F, width: usize, m: u64, seed: u64) -> Result<EstimateSet>
where
    F: Fn(&NoiseStream) -> Result<Vec<f64>> + Sync,
{
    run_estimator_vec(
        |s| task(s).map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()),
        width,
        m,
        seed,
    )
}

/// Scalar estimate of E[task].
pub fn run_estimator<F>(task: F, m: u64, seed: u64) -> Result<Estimate>
where
    F: Fn(&NoiseStream) -> Result<f64> + Sync,
{
    Ok(run_estimator_real(|s| task(s).map(|x| vec![x]), 1, m, seed)?.get(0))
}

/// Runs `f` inside a dedicated pool with `threads` workers.
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Tolerance policy: pass iff |gap| ≤ max(sigmas·stderr, bias budget).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    pub sigmas: f64,
    pub bias_budget: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            sigmas: 3.0,
            bias_budget: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub identities: Vec<String>,
    pub group: String,
    pub horizon: f64,
    pub ladder: Vec<usize>,
    pub samples: u64,
    pub seed: u64,
    pub tolerance: TolerancePolicy,
}

impl Default for CampaignPlan {
    fn default() -> Self {
        Self {
            identities: vec!["*".into()],
            group: "so3".into(),
            horizon: 1.0,
            ladder: vec![200],
            samples: 100_000,
            seed: 7,
            tolerance: TolerancePolicy::default(),
        }
    }
}

impl CampaignPlan {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder.contains(&0) {
            return Err(Error::InvalidConfig("grid ladder must contain positive step counts".into()));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("grid ladder must be strictly increasing".into()));
        }
        let finest = *self.ladder.last().unwrap();
        if self.ladder.iter().any(|n| finest % n != 0) {
            return Err(Error::InvalidConfig("every ladder grid must divide the finest grid".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidConfig("need at least two samples".into()));
        }
        Ok(())
    }

    /// Checks that every ladder grid subdivides the given partition.
    pub fn check_refines(&self, partition: &[f64]) -> Result<()> {
        for &n in &self.ladder {
            let g = TimeGrid::new(self.horizon, n)?;
            if !g.refines(partition) {
                return Err(Error::InvalidConfig(format!("grid N={n} does not refine the partition")));
            }
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<Vec<TimeGrid>> {
        self.ladder.iter().map(|&n| TimeGrid::new(self.horizon, n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub steps: usize,
    pub dt: f64,
    pub gap: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub levels: Vec<LadderLevel>,
    /// Mean and stderr of gap(N_i) − gap(N_{i+1}) on coupled paths.
    pub differences: Vec<(f64, f64)>,
    pub fitted_order: Option<f64>,
    pub fit_basis: String,
    pub noise_limited: bool,
}

/// Measures a discretization gap at each ladder grid on coupled noise and
/// fits its order in Δt. `gap` receives a grid and that grid's increments
/// (coarse increments are sums of the finest ones) and returns the per-path
/// gap whose mean is the systematic error at that Δt.
pub fn bias_ladder<F>(plan: &CampaignPlan, d: usize, gap: F) -> Result<LadderReport>
where
    F: Fn(&TimeGrid, &[crate::lie::AlgebraVector], &NoiseStream) -> Result<f64> + Sync,
{
    plan.validate()?;
    if plan.ladder.len() < 3 {
        return Err(Error::InvalidConfig("a ladder needs at least three grids".into()));
    }
    let grids = plan.grids()?;
    let finest = *plan.ladder.last().unwrap();
    let levels = grids.len();
    let set = run_estimator_real(
        |s| {
            let mut gaps = Vec::with_capacity(levels);
            for g in &grids {
                let inc = s.bm_increments_refined(d, g, finest / g.steps);
                gaps.push(gap(g, &inc, s)?);
            }
            let mut out = gaps.clone();
            for w in gaps.windows(2) {
                out.push(w[0] - w[1]);
            }
            Ok(out)
        },
        2 * levels - 1,
        plan.samples,
        plan.seed,
    )?;
    let levels_out: Vec<LadderLevel> = grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let e = set.get(i);
            LadderLevel {
                steps: g.steps,
                dt: g.dt(),
                gap: e.mean,
                stderr: e.stderr,
            }
        })
        .collect();
    let differences: Vec<(f64, f64)> = (0..levels - 1)
        .map(|i| {
            let e = set.get(levels + i);
            (e.mean, e.stderr)
        })
        .collect();
    Ok(fit_ladder(levels_out, differences))
}

/// Order fit shared by Monte Carlo and deterministic ladders.
pub fn fit_ladder(levels: Vec<LadderLevel>, differences: Vec<(f64, f64)>) -> LadderReport {
    // Only points resolved beyond 3σ enter a fit; two are needed.
    let resolved_diffs: Vec<(f64, f64)> = levels
        .iter()
        .zip(&differences)
        .filter(|(_, (m, s))| m.abs() > 3.0 * s)
        .map(|(l, (m, _))| (l.dt.ln(), m.abs().ln()))
        .collect();
    let resolved_gaps: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.gap.abs() > 3.0 * l.stderr && l.gap != 0.0)
        .map(|l| (l.dt.ln(), l.gap.abs().ln()))
        .collect();
    let fit = |pts: &[(f64, f64)]| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        ols_fit(&xs, &ys).0
    };
    let (fitted_order, fit_basis) = if resolved_diffs.len() >= 2 {
        (Some(fit(&resolved_diffs)), "coupled differences".to_string())
    } else if resolved_gaps.len() >= 2 {
        (Some(fit(&resolved_gaps)), "gaps".to_string())
    } else {
        (None, "noise-limited".to_string())
    };
    LadderReport {
        noise_limited: fitted_order.is_none(),
        levels,
        differences,
        fitted_order,
        fit_basis,
    }
}
