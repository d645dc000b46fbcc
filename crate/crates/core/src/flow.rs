//! Algebra-valued Brownian motion, its development into the group, the
//! discrete left/right Itô maps and pathwise identity checks.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, LieGroupSpec};
use crate::linalg::Mat;
use crate::mc::{run_estimator_real, EstimatorState};
use crate::noise::{NoiseStream, GENERATOR_KIND};
use crate::path::{with_step, AlgebraPath, CameronMartinPath, GridTranslation, GroupPath, StepFunction, TimeGrid};

pub fn sample_bm(spec: &LieGroupSpec, grid: &TimeGrid, noise: &NoiseStream) -> AlgebraPath {
    AlgebraPath::from_increments(*grid, spec.algebra_dim(), noise.bm_increments(spec.algebra_dim(), grid))
}

/// g_{k+1} = g_k·exp(Δw_k).
pub fn develop_left_increments(spec: &LieGroupSpec, grid: &TimeGrid, inc: &[AlgebraVector]) -> GroupPath {
    let mut values = Vec::with_capacity(inc.len() + 1);
    let mut g = spec.identity();
    values.push(g.clone());
    for dw in inc {
        g = g.mul(&spec.exp(dw));
        values.push(g.clone());
    }
    GroupPath { grid: *grid, values }
}

/// g_{k+1} = exp(Δw_k)·g_k.
pub fn develop_right_increments(spec: &LieGroupSpec, grid: &TimeGrid, inc: &[AlgebraVector]) -> GroupPath {
    let mut values = Vec::with_capacity(inc.len() + 1);
    let mut g = spec.identity();
    values.push(g.clone());
    for dw in inc {
        g = spec.exp(dw).mul(&g);
        values.push(g.clone());
    }
    GroupPath { grid: *grid, values }
}

pub fn develop_left(spec: &LieGroupSpec, w: &AlgebraPath) -> GroupPath {
    develop_left_increments(spec, &w.grid, &w.increments())
}

pub fn develop_right(spec: &LieGroupSpec, w: &AlgebraPath) -> GroupPath {
    develop_right_increments(spec, &w.grid, &w.increments())
}

/// ΔB^L_k = log(g_k⁻¹ g_{k+1}).
pub fn ito_left_increments(spec: &LieGroupSpec, g: &GroupPath) -> Result<Vec<AlgebraVector>> {
    (0..g.grid.steps)
        .map(|k| {
            spec.log(&g.values[k].inverse().mul(&g.values[k + 1]))
                .map_err(|e| with_step(e, k))
        })
        .collect()
}

/// ΔB^R_k = log(g_{k+1} g_k⁻¹).
pub fn ito_right_increments(spec: &LieGroupSpec, g: &GroupPath) -> Result<Vec<AlgebraVector>> {
    (0..g.grid.steps)
        .map(|k| {
            spec.log(&g.values[k + 1].mul(&g.values[k].inverse()))
                .map_err(|e| with_step(e, k))
        })
        .collect()
}

pub fn ito_left(spec: &LieGroupSpec, g: &GroupPath) -> Result<AlgebraPath> {
    Ok(AlgebraPath::from_increments(g.grid, spec.algebra_dim(), ito_left_increments(spec, g)?))
}

pub fn ito_right(spec: &LieGroupSpec, g: &GroupPath) -> Result<AlgebraPath> {
    Ok(AlgebraPath::from_increments(g.grid, spec.algebra_dim(), ito_right_increments(spec, g)?))
}

/// Σ_k ⟨h_k, Δw_k⟩ (left-point rule).
pub fn stoch_integral(h: &StepFunction, w: &AlgebraPath) -> Result<f64> {
    h.grid.ensure_same(&w.grid)?;
    Ok(stoch_integral_increments(h, &w.increments()))
}

pub fn stoch_integral_increments(h: &StepFunction, inc: &[AlgebraVector]) -> f64 {
    h.cells.iter().zip(inc).map(|(a, b)| a.dot(b)).sum()
}

/// Increments Ad_{φ(t_k)} Δw_k for a path sampled on the grid of w.
pub fn rotate_by(spec: &LieGroupSpec, phi: &GroupPath, w: &AlgebraPath) -> Result<AlgebraPath> {
    phi.grid.ensure_same(&w.grid)?;
    let inc = w.increments();
    Ok(AlgebraPath::from_increments(
        w.grid,
        w.dim(),
        inc.iter().enumerate().map(|(k, dw)| spec.adjoint(&phi.values[k], dw)),
    ))
}

/// O_φ(w) = ∫ Ad_φ δw on the grid of w.
pub fn rotate_path(spec: &LieGroupSpec, phi: &CameronMartinPath, w: &AlgebraPath) -> Result<AlgebraPath> {
    rotate_by(spec, &phi.sample(&w.grid)?, w)
}

/// Σ_k Δw_k Δw_kᵀ in basis coordinates.
pub fn quadratic_variation(w: &AlgebraPath) -> Mat {
    quadratic_variation_increments(w.dim(), &w.increments())
}

pub fn quadratic_variation_increments(d: usize, inc: &[AlgebraVector]) -> Mat {
    let mut q = Mat::zeros(d);
    for dw in inc {
        for i in 0..d {
            for j in 0..d {
                q[(i, j)] += dw.0[i] * dw.0[j];
            }
        }
    }
    q
}

/// Max-norm defects of the four translation identities for B^L, B^R under
/// left translation by φ⁻¹ and right translation by φ, at grid nodes:
/// [B^L(φ⁻¹g), B^L(gφ), B^R(φ⁻¹g), B^R(gφ)].
pub fn translation_defects(spec: &LieGroupSpec, g: &GroupPath, phi: &GridTranslation) -> Result<[f64; 4]> {
    g.grid.ensure_same(&phi.grid())?;
    let dt = g.grid.dt();
    let n = g.grid.steps;
    let bl = ito_left_increments(spec, g)?;
    let br = ito_right_increments(spec, g)?;
    let phi_inv = crate::path::path_invert(&phi.path);
    let left_shift = crate::path::path_multiply(&phi_inv, g)?;
    let right_shift = crate::path::path_multiply(g, &phi.path)?;
    let bl_left = ito_left_increments(spec, &left_shift)?;
    let bl_right = ito_left_increments(spec, &right_shift)?;
    let br_left = ito_right_increments(spec, &left_shift)?;
    let br_right = ito_right_increments(spec, &right_shift)?;
    let d = spec.algebra_dim();
    let mut acc = [AlgebraVector::zeros(d), AlgebraVector::zeros(d), AlgebraVector::zeros(d), AlgebraVector::zeros(d)];
    let mut worst = [0.0f64; 4];
    for k in 0..n {
        let (a, b) = (&phi.left.cells[k], &phi.right.cells[k]);
        let gk_inv = g.values[k].inverse();
        let phik_inv = phi_inv.values[k].clone();
        // B^L(φ⁻¹g) = B^L − ∫Ad_{g⁻¹}(δφ φ⁻¹)
        let e3 = bl_left[k].sub(&bl[k]).add(&spec.adjoint(&gk_inv, &b.scale(dt)));
        // B^L(gφ) = ∫Ad_{φ⁻¹}dB^L + ∫φ⁻¹δφ
        let e4 = bl_right[k].sub(&spec.adjoint(&phik_inv, &bl[k])).sub(&a.scale(dt));
        // B^R(φ⁻¹g) = −∫φ⁻¹δφ + ∫Ad_{φ⁻¹}δB^R
        let e5 = br_left[k].add(&a.scale(dt)).sub(&spec.adjoint(&phik_inv, &br[k]));
        // B^R(gφ) = B^R + ∫Ad_g(δφ φ⁻¹)
        let e6 = br_right[k].sub(&br[k]).sub(&spec.adjoint(&g.values[k], &b.scale(dt)));
        for (i, e) in [e3, e4, e5, e6].into_iter().enumerate() {
            acc[i].add_assign(&e);
            worst[i] = worst[i].max(acc[i].max_abs());
        }
    }
    Ok(worst)
}

/// Summary of one coordinate-function martingale test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleEntry {
    pub s: f64,
    pub t: f64,
    pub test_function: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub compensated: bool,
    pub samples: u64,
    pub bias_allowance: f64,
    pub entries: Vec<MartingaleEntry>,
    /// Largest |mean| / stderr over all entries.
    pub max_sigma: f64,
    pub max_abs_defect: f64,
    pub pass: bool,
}

fn martingale_outputs(
    c2: &Mat,
    g: &GroupPath,
    checkpoints: &[(usize, usize)],
    compensated: bool,
) -> Vec<f64> {
    let dt = g.grid.dt();
    let mut out = Vec::new();
    for &(s, t) in checkpoints {
        let mut m = g.values[t].0.sub(&g.values[s].0);
        if compensated {
            for k in s..t {
                m.axpy(-0.5 * dt, &g.values[k].0.mul(c2));
            }
        }
        out.extend_from_slice(m.as_slice());
        if s > 0 {
            let gs = g.values[s].0.as_slice();
            for a in gs {
                for v in m.as_slice() {
                    out.push(v * a);
                }
            }
        }
    }
    out
}

fn martingale_labels(n: usize, grid: &TimeGrid, checkpoints: &[(usize, usize)]) -> Vec<(f64, f64, String)> {
    let mut labels = Vec::new();
    for &(s, t) in checkpoints {
        let (ts, tt) = (grid.node(s), grid.node(t));
        for i in 0..n {
            for j in 0..n {
                labels.push((ts, tt, format!("f{i}{j}·1")));
            }
        }
        if s > 0 {
            for a in 0..n * n {
                for i in 0..n {
                    for j in 0..n {
                        labels.push((ts, tt, format!("f{i}{j}·g{}{}(s)", a / n, a % n)));
                    }
                }
            }
        }
    }
    labels
}

fn martingale_report(
    spec: &LieGroupSpec,
    grid: &TimeGrid,
    checkpoints: &[(usize, usize)],
    compensated: bool,
    states: &[EstimatorState],
) -> MartingaleReport {
    let c2 = spec.casimir().c2_matrix;
    let c2max = c2.max_abs();
    let bias_allowance = 0.25 * c2max * c2max * grid.horizon * grid.dt();
    let labels = martingale_labels(spec.matrix_size, grid, checkpoints);
    let mut entries = Vec::with_capacity(states.len());
    let mut max_sigma: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut pass = true;
    for (st, (s, t, name)) in states.iter().zip(labels) {
        let e = st.estimate();
        let sigma = if e.stderr > 0.0 { e.mean.abs() / e.stderr } else if e.mean == 0.0 { 0.0 } else { f64::INFINITY };
        max_sigma = max_sigma.max(sigma);
        max_abs = max_abs.max(e.mean.abs());
        if e.mean.abs() > 3.0 * e.stderr + bias_allowance {
            pass = false;
        }
        entries.push(MartingaleEntry {
            s,
            t,
            test_function: name,
            mean: e.mean,
            stderr: e.stderr,
        });
    }
    MartingaleReport {
        compensated,
        samples: states.first().map_or(0, |s| s.count),
        bias_allowance,
        entries,
        max_sigma,
        max_abs_defect: max_abs,
        pass,
    }
}

fn check_checkpoints(grid: &TimeGrid, checkpoints: &[(usize, usize)]) -> Result<()> {
    if checkpoints.is_empty() || checkpoints.iter().any(|(s, t)| s >= t || *t > grid.steps) {
        return Err(Error::InvalidConfig("checkpoints must be pairs s < t ≤ N".into()));
    }
    Ok(())
}

/// Martingale defect of f_ij(g) = g_ij over a stored ensemble, tested
/// against F ∈ {1} ∪ {entries of g_s}.
pub fn martingale_defect_paths(
    spec: &LieGroupSpec,
    paths: &[GroupPath],
    checkpoints: &[(usize, usize)],
    compensated: bool,
) -> Result<MartingaleReport> {
    let grid = paths.first().ok_or(Error::TooFewSamples { got: 0, need: 2 })?.grid;
    check_checkpoints(&grid, checkpoints)?;
    let c2 = spec.casimir().c2_matrix;
    let mut states: Vec<EstimatorState> = Vec::new();
    for p in paths {
        p.grid.ensure_same(&grid)?;
        let v = martingale_outputs(&c2, p, checkpoints, compensated);
        if states.is_empty() {
            states = vec![EstimatorState::default(); v.len()];
        }
        for (s, x) in states.iter_mut().zip(v) {
            s.push_real(x);
        }
    }
    Ok(martingale_report(spec, &grid, checkpoints, compensated, &states))
}

/// Streaming version over M simulated geometric-Euler paths.
pub fn martingale_defect(
    spec: &LieGroupSpec,
    grid: &TimeGrid,
    checkpoints: &[(usize, usize)],
    m: u64,
    seed: u64,
    compensated: bool,
) -> Result<MartingaleReport> {
    check_checkpoints(grid, checkpoints)?;
    let c2 = spec.casimir().c2_matrix;
    let d = spec.algebra_dim();
    let width = martingale_labels(spec.matrix_size, grid, checkpoints).len();
    let set = run_estimator_real(
        |s| {
            let g = develop_left_increments(spec, grid, &s.bm_increments(d, grid));
            Ok(martingale_outputs(&c2, &g, checkpoints, compensated))
        },
        width,
        m,
        seed,
    )?;
    Ok(martingale_report(spec, grid, checkpoints, compensated, &set.states))
}

const MAGIC: &[u8; 8] = b"PGENSEM1";

/// Header of a binary ensemble file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub group: String,
    pub algebra_dim: usize,
    pub grid: TimeGrid,
    pub paths: u64,
    pub seed: u64,
    pub generator: String,
}

/// Writes increments of paths 0..M as little-endian f64 blocks, each
/// followed by its SHA-256; returns the hex digest over all block digests.
pub fn write_ensemble<W: Write>(mut w: W, header: &EnsembleHeader) -> Result<String> {
    let head = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(head.len() as u64).to_le_bytes())?;
    w.write_all(&head)?;
    let mut overall = Sha256::new();
    let mut buf = Vec::with_capacity(header.grid.steps * header.algebra_dim * 8);
    for i in 0..header.paths {
        let inc = NoiseStream::new(header.seed, i).bm_increments(header.algebra_dim, &header.grid);
        buf.clear();
        for v in &inc {
            for c in v.coords() {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        w.write_all(&i.to_le_bytes())?;
        w.write_all(&buf)?;
        w.write_all(&digest)?;
        overall.update(digest);
    }
    let total = overall.finalize();
    w.write_all(&total)?;
    w.flush()?;
    Ok(hex(&total))
}

/// Reads an ensemble, verifying every per-path checksum and the final digest.
pub fn read_ensemble<R: Read>(mut r: R) -> Result<(EnsembleHeader, Vec<AlgebraPath>, String)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format("header too large".into()));
    }
    let mut head = vec![0u8; len];
    r.read_exact(&mut head)?;
    let header: EnsembleHeader = serde_json::from_slice(&head)?;
    let d = header.algebra_dim;
    let n = header.grid.steps;
    let mut overall = Sha256::new();
    let mut paths = Vec::with_capacity(header.paths as usize);
    let mut buf = vec![0u8; n * d * 8];
    for i in 0..header.paths {
        let mut idx = [0u8; 8];
        r.read_exact(&mut idx)?;
        if u64::from_le_bytes(idx) != i {
            return Err(Error::Format(format!("path {i} out of order")));
        }
        r.read_exact(&mut buf)?;
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        if Sha256::digest(&buf).as_slice() != digest {
            return Err(Error::Format(format!("checksum mismatch on path {i}")));
        }
        overall.update(digest);
        let inc = buf
            .chunks_exact(8 * d)
            .map(|c| AlgebraVector(c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()));
        paths.push(AlgebraPath::from_increments(header.grid, d, inc));
    }
    let mut total = [0u8; 32];
    r.read_exact(&mut total)?;
    let expect = overall.finalize();
    if expect.as_slice() != total {
        return Err(Error::Format("ensemble digest mismatch".into()));
    }
    Ok((header, paths, hex(&total)))
}

pub fn ensemble_header(spec: &LieGroupSpec, grid: TimeGrid, paths: u64, seed: u64) -> EnsembleHeader {
    EnsembleHeader {
        group: spec.label(),
        algebra_dim: spec.algebra_dim(),
        grid,
        paths,
        seed,
        generator: GENERATOR_KIND.to_string(),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Matrix-entry test functional g ↦ g_T[i][j].
pub fn terminal_entry(g: &GroupPath, i: usize, j: usize) -> f64 {
    g.terminal().0[(i, j)]
}

/// trace(g_T).
pub fn terminal_trace(g: &GroupPath) -> f64 {
    g.terminal().0.trace()
}

/// Identity element helper for grid-level tests.
pub fn identity_path(spec: &LieGroupSpec, grid: &TimeGrid) -> GroupPath {
    GroupPath::constant_identity(*grid, spec.matrix_size)
}
