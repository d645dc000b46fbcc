//! Discretized path spaces W(g), W(G) and the finite-energy subgroup
//! represented by piecewise-exponential paths.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, LieGroupSpec};
use crate::linalg::Mat;

/// Uniform grid t_k = kT/N on [0, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("step count must be positive".into()));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index k with t_k = t, if t is a grid node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.horizon * self.steps as f64;
        let k = x.round();
        if (x - k).abs() < 1e-9 && k >= 0.0 && k <= self.steps as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    /// True when every partition node is a grid node.
    pub fn refines(&self, partition: &[f64]) -> bool {
        partition.iter().all(|t| self.node_index(*t).is_some())
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.steps != other.steps || self.horizon.to_bits() != other.horizon.to_bits() {
            return Err(Error::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            });
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!("T={} N={}", self.horizon, self.steps)
    }
}

/// Piecewise-constant algebra-valued function on the cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub grid: TimeGrid,
    pub cells: Vec<AlgebraVector>,
}

impl StepFunction {
    pub fn zeros(grid: TimeGrid, d: usize) -> Self {
        Self {
            grid,
            cells: vec![AlgebraVector::zeros(d); grid.steps],
        }
    }

    pub fn constant(grid: TimeGrid, v: &AlgebraVector) -> Self {
        Self {
            grid,
            cells: vec![v.clone(); grid.steps],
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.first().map_or(0, |c| c.dim())
    }

    /// Σ |h_k|² Δt.
    pub fn l2_norm_sq(&self) -> f64 {
        self.cells.iter().map(|c| c.norm_sq()).sum::<f64>() * self.grid.dt()
    }

    /// Σ ⟨h_k, k_k⟩ Δt.
    pub fn l2_inner(&self, other: &StepFunction) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .cells
            .iter()
            .zip(other.cells.iter())
            .map(|(a, b)| a.dot(b))
            .sum::<f64>()
            * self.grid.dt())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            cells: self.cells.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn add(&self, other: &StepFunction) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            cells: self.cells.iter().zip(other.cells.iter()).map(|(a, b)| a.add(b)).collect(),
        })
    }

    /// The path t ↦ ∫₀ᵗ h, sampled at grid nodes.
    pub fn integrate(&self) -> AlgebraPath {
        let dt = self.grid.dt();
        AlgebraPath::from_increments(self.grid, self.dim(), self.cells.iter().map(|c| c.scale(dt)))
    }
}

/// Algebra-valued path w_0 = 0, w_1, …, w_N on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraPath {
    pub grid: TimeGrid,
    pub values: Vec<AlgebraVector>,
}

impl AlgebraPath {
    pub fn zeros(grid: TimeGrid, d: usize) -> Self {
        Self {
            grid,
            values: vec![AlgebraVector::zeros(d); grid.steps + 1],
        }
    }

    pub fn from_increments<I: IntoIterator<Item = AlgebraVector>>(grid: TimeGrid, d: usize, inc: I) -> Self {
        let mut values = Vec::with_capacity(grid.steps + 1);
        let mut acc = AlgebraVector::zeros(d);
        values.push(acc.clone());
        for dw in inc {
            acc.add_assign(&dw);
            values.push(acc.clone());
        }
        assert_eq!(values.len(), grid.steps + 1, "increment count must match the grid");
        Self { grid, values }
    }

    pub fn from_values(grid: TimeGrid, values: Vec<AlgebraVector>) -> Result<Self> {
        if values.len() != grid.steps + 1 {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.steps + 1,
                values.len()
            )));
        }
        if values[0].max_abs() != 0.0 {
            return Err(Error::InvalidGrid("algebra path must start at 0".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn increment(&self, k: usize) -> AlgebraVector {
        self.values[k + 1].sub(&self.values[k])
    }

    pub fn increments(&self) -> Vec<AlgebraVector> {
        (0..self.grid.steps).map(|k| self.increment(k)).collect()
    }

    pub fn terminal(&self) -> &AlgebraVector {
        &self.values[self.grid.steps]
    }

    pub fn neg(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v.neg()).collect(),
        }
    }

    pub fn add(&self, other: &AlgebraPath) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(other.values.iter()).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn max_distance(&self, other: &AlgebraPath) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut s = format!("# grid T={} N={} d={}\nt", self.grid.horizon, self.grid.steps, d);
        for i in 0..d {
            let _ = write!(s, ",w{i}");
        }
        s.push('\n');
        for (k, v) in self.values.iter().enumerate() {
            let _ = write!(s, "{}", self.grid.node(k));
            for c in v.coords() {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let (grid, width, rows) = read_csv(r)?;
        let values = rows.into_iter().map(|r| AlgebraVector::from_slice(&r)).collect();
        let path = Self::from_values(grid, values)?;
        if path.dim() != width {
            return Err(Error::Format("column count does not match header".into()));
        }
        Ok(path)
    }
}

/// Group-valued path g_0 = e, g_1, …, g_N on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPath {
    pub grid: TimeGrid,
    pub values: Vec<GroupElement>,
}

impl GroupPath {
    pub fn constant_identity(grid: TimeGrid, n: usize) -> Self {
        Self {
            grid,
            values: vec![GroupElement::identity(n); grid.steps + 1],
        }
    }

    pub fn from_values(grid: TimeGrid, values: Vec<GroupElement>) -> Result<Self> {
        if values.len() != grid.steps + 1 {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.steps + 1,
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn matrix_size(&self) -> usize {
        self.values[0].0.dim()
    }

    pub fn terminal(&self) -> &GroupElement {
        &self.values[self.grid.steps]
    }

    pub fn max_membership_residual(&self) -> f64 {
        self.values.iter().map(|g| g.membership_residual()).fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &GroupPath) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a.0.sub(&b.0).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.matrix_size();
        let mut s = format!("# grid T={} N={} n={}\nt", self.grid.horizon, self.grid.steps, n);
        for i in 0..n {
            for j in 0..n {
                let _ = write!(s, ",g{i}{j}");
            }
        }
        s.push('\n');
        for (k, g) in self.values.iter().enumerate() {
            let _ = write!(s, "{}", self.grid.node(k));
            for c in g.0.as_slice() {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let (grid, width, rows) = read_csv(r)?;
        let n = (width as f64).sqrt().round() as usize;
        if n * n != width {
            return Err(Error::Format("matrix entries do not form a square".into()));
        }
        let values = rows
            .into_iter()
            .map(|r| GroupElement(Mat::from_row_major(n, &r)))
            .collect();
        Self::from_values(grid, values)
    }
}

fn read_csv<R: Read>(r: R) -> Result<(TimeGrid, usize, Vec<Vec<f64>>)> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty csv".into()))??;
    let mut horizon = None;
    let mut steps = None;
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("T=") {
            horizon = v.parse::<f64>().ok();
        } else if let Some(v) = tok.strip_prefix("N=") {
            steps = v.parse::<usize>().ok();
        }
    }
    let grid = TimeGrid::new(
        horizon.ok_or_else(|| Error::Format("missing T in grid header".into()))?,
        steps.ok_or_else(|| Error::Format("missing N in grid header".into()))?,
    )?;
    let columns = lines
        .next()
        .ok_or_else(|| Error::Format("missing column header".into()))??;
    let width = columns.split(',').count() - 1;
    let mut rows = Vec::with_capacity(grid.steps + 1);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .skip(1)
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != width {
            return Err(Error::Format("ragged csv row".into()));
        }
        rows.push(vals);
    }
    Ok((grid, width, rows))
}

/// Pointwise product (αβ)_t = α_t β_t.
pub fn path_multiply(a: &GroupPath, b: &GroupPath) -> Result<GroupPath> {
    a.grid.ensure_same(&b.grid)?;
    Ok(GroupPath {
        grid: a.grid,
        values: a.values.iter().zip(b.values.iter()).map(|(x, y)| x.mul(y)).collect(),
    })
}

/// Pointwise inverse Θ(α)_t = α_t⁻¹.
pub fn path_invert(a: &GroupPath) -> GroupPath {
    GroupPath {
        grid: a.grid,
        values: a.values.iter().map(|g| g.inverse()).collect(),
    }
}

/// Which side the segment exponentials multiply on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// φ(s) = exp(−(s − t_{j−1})ξ_j)·φ(t_{j−1}).
    Left,
    /// φ(s) = φ(t_{j−1})·exp((s − t_{j−1})ξ_j).
    Right,
}

/// Finite-energy path built from one exponential factor per partition cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinPath {
    pub spec: LieGroupSpec,
    pub partition: Vec<f64>,
    pub generators: Vec<AlgebraVector>,
    pub orientation: Orientation,
    nodes: Vec<GroupElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmDocument {
    pub partition: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
    pub orientation: Orientation,
}

impl CameronMartinPath {
    pub fn from_steps(
        spec: &LieGroupSpec,
        partition: Vec<f64>,
        generators: Vec<AlgebraVector>,
        orientation: Orientation,
    ) -> Result<Self> {
        if partition.len() < 2 {
            return Err(Error::InvalidPartition("need at least two nodes".into()));
        }
        if partition[0] != 0.0 {
            return Err(Error::InvalidPartition("partition must start at 0".into()));
        }
        if partition.windows(2).any(|w| !(w[1] > w[0])) || partition.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPartition("partition must be strictly increasing".into()));
        }
        if generators.len() + 1 != partition.len() {
            return Err(Error::InvalidPartition(format!(
                "{} segments but {} generators",
                partition.len() - 1,
                generators.len()
            )));
        }
        let d = spec.algebra_dim();
        if generators.iter().any(|g| g.dim() != d || !g.is_finite()) {
            return Err(Error::InvalidPartition("generator has wrong dimension or is not finite".into()));
        }
        let mut nodes = Vec::with_capacity(partition.len());
        nodes.push(spec.identity());
        for (j, xi) in generators.iter().enumerate() {
            let dt = partition[j + 1] - partition[j];
            let prev = &nodes[j];
            let next = match orientation {
                Orientation::Left => spec.exp(&xi.scale(-dt)).mul(prev),
                Orientation::Right => prev.mul(&spec.exp(&xi.scale(dt))),
            };
            nodes.push(next);
        }
        Ok(Self {
            spec: spec.clone(),
            partition,
            generators,
            orientation,
            nodes,
        })
    }

    /// Single segment on [0, T].
    pub fn single(spec: &LieGroupSpec, horizon: f64, xi: AlgebraVector, orientation: Orientation) -> Result<Self> {
        Self::from_steps(spec, vec![0.0, horizon], vec![xi], orientation)
    }

    pub fn identity(spec: &LieGroupSpec, horizon: f64) -> Self {
        Self::single(spec, horizon, spec.zero(), Orientation::Left).expect("identity path is valid")
    }

    pub fn horizon(&self) -> f64 {
        *self.partition.last().unwrap()
    }

    pub fn segments(&self) -> usize {
        self.generators.len()
    }

    pub fn is_identity(&self) -> bool {
        self.generators.iter().all(|g| g.max_abs() == 0.0)
    }

    /// Generators multiplied by x_j segmentwise.
    pub fn scaled(&self, x: &[f64]) -> Result<Self> {
        let gens = self.generators.iter().zip(x).map(|(g, s)| g.scale(*s)).collect();
        Self::from_steps(&self.spec, self.partition.clone(), gens, self.orientation)
    }

    /// Same generators, opposite orientation: the pointwise inverse path.
    pub fn inverse(&self) -> Self {
        let orientation = match self.orientation {
            Orientation::Left => Orientation::Right,
            Orientation::Right => Orientation::Left,
        };
        Self::from_steps(&self.spec, self.partition.clone(), self.generators.clone(), orientation)
            .expect("inverse of a valid path is valid")
    }

    fn segment_of(&self, t: f64) -> usize {
        let m = self.segments();
        let tol = 1e-12 * self.horizon();
        for j in 0..m {
            if t < self.partition[j + 1] - tol {
                return j;
            }
        }
        m - 1
    }

    pub fn eval(&self, t: f64) -> Result<GroupElement> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        if t == 0.0 {
            return Ok(self.spec.identity());
        }
        let j = self.segment_of(t);
        let u = t - self.partition[j];
        let xi = &self.generators[j];
        Ok(match self.orientation {
            Orientation::Left => self.spec.exp(&xi.scale(-u)).mul(&self.nodes[j]),
            Orientation::Right => self.nodes[j].mul(&self.spec.exp(&xi.scale(u))),
        })
    }

    pub fn sample(&self, grid: &TimeGrid) -> Result<GroupPath> {
        if (grid.horizon - self.horizon()).abs() > 1e-12 * self.horizon() {
            return Err(Error::GridMismatch {
                left: grid.describe(),
                right: format!("path horizon {}", self.horizon()),
            });
        }
        let values = (0..=grid.steps)
            .map(|k| self.eval(grid.node(k).min(self.horizon())))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupPath { grid: *grid, values })
    }

    /// ∫|φ⁻¹φ′|² = Σ |ξ_j|² Δt_j.
    pub fn energy(&self) -> f64 {
        self.generators
            .iter()
            .zip(self.partition.windows(2))
            .map(|(g, w)| g.norm_sq() * (w[1] - w[0]))
            .sum()
    }

    /// Left derivative φ⁻¹φ′ and right derivative φ′φ⁻¹ on segment j.
    pub fn segment_derivatives(&self, j: usize) -> (AlgebraVector, AlgebraVector) {
        let xi = &self.generators[j];
        match self.orientation {
            Orientation::Left => {
                let right = xi.neg();
                let left = self.spec.adjoint(&self.nodes[j].inverse(), &right);
                (left, right)
            }
            Orientation::Right => {
                let right = self.spec.adjoint(&self.nodes[j], xi);
                (xi.clone(), right)
            }
        }
    }

    /// Step functions (φ⁻¹φ′, φ′φ⁻¹) on the cells of `grid`; a cell takes
    /// the derivative of the segment containing its left endpoint.
    pub fn log_derivatives(&self, grid: &TimeGrid) -> (StepFunction, StepFunction) {
        let per_segment: Vec<_> = (0..self.segments()).map(|j| self.segment_derivatives(j)).collect();
        let mut left = Vec::with_capacity(grid.steps);
        let mut right = Vec::with_capacity(grid.steps);
        for k in 0..grid.steps {
            let (a, b) = &per_segment[self.segment_of(grid.node(k))];
            left.push(a.clone());
            right.push(b.clone());
        }
        (
            StepFunction { grid: *grid, cells: left },
            StepFunction { grid: *grid, cells: right },
        )
    }

    /// The path t ↦ ∫₀ᵗ φ⁻¹dφ on grid nodes.
    pub fn left_integral(&self, grid: &TimeGrid) -> AlgebraPath {
        self.log_derivatives(grid).0.integrate()
    }

    pub fn to_document(&self) -> CmDocument {
        CmDocument {
            partition: self.partition.clone(),
            generators: self.generators.iter().map(|g| g.coords().to_vec()).collect(),
            orientation: self.orientation,
        }
    }

    pub fn from_document(spec: &LieGroupSpec, doc: &CmDocument) -> Result<Self> {
        Self::from_steps(
            spec,
            doc.partition.clone(),
            doc.generators.iter().map(|g| AlgebraVector::from_slice(g)).collect(),
            doc.orientation,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(spec: &LieGroupSpec, s: &str) -> Result<Self> {
        Self::from_document(spec, &serde_json::from_str(s)?)
    }
}

/// A finite-energy path resolved on a grid: node values φ(t_k) and per-cell
/// logarithmic derivatives with φ(t_{k+1}) = φ(t_k)·exp(a_kΔt) = exp(b_kΔt)·φ(t_k).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTranslation {
    pub path: GroupPath,
    pub left: StepFunction,
    pub right: StepFunction,
}

impl GridTranslation {
    /// Exact resolution of a piecewise-exponential path on a refining grid.
    pub fn from_cm(phi: &CameronMartinPath, grid: &TimeGrid) -> Result<Self> {
        if !grid.refines(&phi.partition) {
            return Err(Error::InvalidPartition(format!(
                "grid {} does not refine the partition",
                grid.describe()
            )));
        }
        let path = phi.sample(grid)?;
        let (left, right) = phi.log_derivatives(grid);
        Ok(Self { path, left, right })
    }

    /// Derivatives recovered cellwise as (1/Δt)·log of consecutive ratios.
    pub fn from_group_path(spec: &LieGroupSpec, path: GroupPath) -> Result<Self> {
        let dt = path.grid.dt();
        let mut left = Vec::with_capacity(path.grid.steps);
        let mut right = Vec::with_capacity(path.grid.steps);
        for k in 0..path.grid.steps {
            let (g0, g1) = (&path.values[k], &path.values[k + 1]);
            left.push(spec.log(&g0.inverse().mul(g1)).map_err(|e| with_step(e, k))?.scale(1.0 / dt));
            right.push(spec.log(&g1.mul(&g0.inverse())).map_err(|e| with_step(e, k))?.scale(1.0 / dt));
        }
        let grid = path.grid;
        Ok(Self {
            path,
            left: StepFunction { grid, cells: left },
            right: StepFunction { grid, cells: right },
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.path.grid
    }

    pub fn energy(&self) -> f64 {
        self.left.l2_norm_sq()
    }

    /// Pointwise product φψ, resolved from the sampled product path.
    pub fn product(spec: &LieGroupSpec, phi: &GridTranslation, psi: &GridTranslation) -> Result<Self> {
        Self::from_group_path(spec, path_multiply(&phi.path, &psi.path)?)
    }

    /// Pointwise inverse; derivatives swap sides with a sign change.
    pub fn inverse(&self) -> Self {
        Self {
            path: path_invert(&self.path),
            left: self.right.scale(-1.0),
            right: self.left.scale(-1.0),
        }
    }
}

pub(crate) fn with_step(e: Error, k: usize) -> Error {
    match e {
        Error::CutLocus { angle, .. } => Error::CutLocus { angle, step: Some(k) },
        other => other,
    }
}

/// Σ |log(g_{k+1} g_k⁻¹)|² / Δt, the energy of the sampled path.
pub fn discrete_energy(spec: &LieGroupSpec, path: &GroupPath) -> Result<f64> {
    let dt = path.grid.dt();
    let mut total = 0.0;
    for k in 0..path.grid.steps {
        let r = path.values[k + 1].mul(&path.values[k].inverse());
        total += spec.log(&r).map_err(|e| with_step(e, k))?.norm_sq() / dt;
    }
    Ok(total)
}
