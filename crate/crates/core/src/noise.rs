//! Counter-based Gaussian noise addressed by (seed, path index, step).

use std::f64::consts::PI;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lie::AlgebraVector;
use crate::path::TimeGrid;

pub const GENERATOR_KIND: &str = "chacha8-box-muller";

/// Words of keystream consumed by one Box–Muller pair (two u64 draws).
const WORDS_PER_PAIR: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub index: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn kind(&self) -> &'static str {
        GENERATOR_KIND
    }

    fn rng_at(&self, word: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng.set_word_pos(word);
        rng
    }

    /// `count` standard normals starting at normal number `offset` of this stream.
    pub fn normals_from(&self, offset: u64, count: usize) -> Vec<f64> {
        let pair0 = offset / 2;
        let skip = (offset % 2) as usize;
        let mut rng = self.rng_at(pair0 as u128 * WORDS_PER_PAIR);
        let mut out = Vec::with_capacity(count + 1);
        while out.len() < count + skip {
            let (a, b) = box_muller(&mut rng);
            out.push(a);
            out.push(b);
        }
        out.drain(..skip);
        out.truncate(count);
        out
    }

    pub fn standard_normals(&self, count: usize) -> Vec<f64> {
        self.normals_from(0, count)
    }

    /// Brownian increments on `grid` in d coordinates, generated on a grid
    /// `refine` times finer and summed, so grids sharing a finest level are
    /// driven by the same underlying noise.
    pub fn bm_increments_refined(&self, d: usize, grid: &TimeGrid, refine: usize) -> Vec<AlgebraVector> {
        let fine = grid.steps * refine;
        let z = self.standard_normals(fine * d);
        let sd = (grid.horizon / fine as f64).sqrt();
        (0..grid.steps)
            .map(|k| {
                let mut v = AlgebraVector::zeros(d);
                for r in 0..refine {
                    let base = (k * refine + r) * d;
                    for i in 0..d {
                        v.0[i] += z[base + i] * sd;
                    }
                }
                v
            })
            .collect()
    }

    pub fn bm_increments(&self, d: usize, grid: &TimeGrid) -> Vec<AlgebraVector> {
        self.bm_increments_refined(d, grid, 1)
    }
}

#[inline]
fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let x = rng.next_u64();
    let y = rng.next_u64();
    let u1 = ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (y >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = NoiseStream::new(7, 3).standard_normals(100);
        let b = NoiseStream::new(7, 3).standard_normals(100);
        assert_eq!(a, b);
        let c = NoiseStream::new(7, 4).standard_normals(100);
        assert_ne!(a, c);
        let d = NoiseStream::new(8, 3).standard_normals(100);
        assert_ne!(a, d);
    }

    #[test]
    fn offsets_address_the_same_sequence() {
        let s = NoiseStream::new(1, 2);
        let all = s.standard_normals(50);
        for off in [0u64, 1, 2, 7, 20] {
            assert_eq!(s.normals_from(off, 10), all[off as usize..off as usize + 10].to_vec());
        }
    }

    #[test]
    fn normal_moments() {
        // Standardized sample means over many streams should look N(0, 1).
        let mut zs = Vec::new();
        for seed in 0..16 {
            let z = NoiseStream::new(seed, 0).standard_normals(50_000);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let kurt = z.iter().map(|v| v.powi(4)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
            assert!((kurt - 3.0).abs() < 4.0 * (96.0 / n).sqrt());
            zs.push(mean * n.sqrt());
        }
        assert!(zs.iter().all(|z| z.abs() < 4.0), "{zs:?}");
        let chi2: f64 = zs.iter().map(|z| z * z).sum();
        // χ²₁₆ central 99.8% range.
        assert!((4.0..40.0).contains(&chi2), "{chi2}");
    }

    #[test]
    fn coarse_increments_are_sums_of_fine_ones() {
        let s = NoiseStream::new(5, 9);
        let fine = TimeGrid::new(1.0, 40).unwrap();
        let coarse = TimeGrid::new(1.0, 10).unwrap();
        let f = s.bm_increments(2, &fine);
        let c = s.bm_increments_refined(2, &coarse, 4);
        for k in 0..10 {
            let mut sum = AlgebraVector::zeros(2);
            for r in 0..4 {
                sum.add_assign(&f[4 * k + r]);
            }
            assert!(sum.sub(&c[k]).max_abs() < 1e-14);
        }
    }
}
