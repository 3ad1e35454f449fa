//! Exact joint simulation of a Brownian motion `W` and the Riemann–Liouville
//! process `W^H_t = ∫_0^t (t - s)^(H - 1/2) dW_s` on a uniform grid.
//!
//! The pair `(W_{t_1..t_n}, W^H_{t_1..t_n})` is drawn from its exact Gaussian
//! law through one dense lower-triangular factor of the `2n × 2n` covariance.
//! The factor is computed once on the unit-spacing grid `1, 2, .., n`; by
//! self-similarity the grid with spacing `Δ` only rescales the rows, by `√Δ`
//! for `W` and `Δ^H` for `W^H`.
//!
//! Every path draws its normals from its own ChaCha stream (`stream = path
//! index`), so path `i` is identical whatever the batch or block size.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_finite, check_hurst, check_positive, Error, Result};
use crate::quad::{integrate_left_singular, Tolerance};

/// Largest supported number of grid steps (the covariance is `2n × 2n`).
pub const MAX_STEPS: usize = 2048;

/// Paths per simulation block. Blocks are the unit of parallel work.
pub const BLOCK_SIZE: usize = 1024;

/// Pivots below this fraction of the original diagonal are treated as exact
/// zeros (rank deficiency, e.g. `H = 1/2` where `W^H = W`).
pub const PIVOT_FLOOR: f64 = 1e-12;

const AUTOCOV_TOL: Tolerance = Tolerance::relative(1e-10);
const ORTHOGONAL_STREAM: u64 = 0x6f72_7468_6f67_6f6e;

#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    maturity: f64,
    times: Vec<f64>,
}

impl SimGrid {
    /// Uniform grid `Δ, 2Δ, .., n·Δ = maturity`. Time zero is implicit.
    pub fn uniform(maturity: f64, n_steps: usize) -> Result<Self> {
        check_positive("maturity", maturity)?;
        if n_steps == 0 || n_steps > MAX_STEPS {
            return Err(Error::InvalidInput(format!(
                "n_steps must be in 1..={MAX_STEPS}, got {n_steps}"
            )));
        }
        let dt = maturity / n_steps as f64;
        let mut times: Vec<f64> = (1..=n_steps).map(|i| i as f64 * dt).collect();
        times[n_steps - 1] = maturity;
        Ok(Self { maturity, times })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.times.len() as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Index of the grid time equal to `t` (relative tolerance `1e-9` of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = t / self.dt();
        let nearest = pos.round();
        if nearest < 1.0 || (pos - nearest).abs() > 1e-9 * pos.max(1.0) {
            return None;
        }
        let idx = nearest as usize - 1;
        (idx < self.times.len()).then_some(idx)
    }
}

/// `Cov(W^H_t, W^H_s) = ∫_0^{min(t,s)} (t-u)^(H-1/2) (s-u)^(H-1/2) du`.
pub fn volterra_autocovariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("s", s)?;
    check_hurst(hurst)?;
    let (lo, hi) = if t <= s { (t, s) } else { (s, t) };
    let two_h = 2.0 * hurst;
    if hi == lo {
        return Ok(lo.powf(two_h) / two_h);
    }
    if hurst == 0.5 {
        return Ok(lo);
    }
    let alpha = hurst - 0.5;
    let gap = hi - lo;
    // v = lo - u; integrand v^α (gap + v)^α on [0, lo]
    integrate_left_singular(|v| (gap + v).powf(alpha), 0.0, lo, alpha, AUTOCOV_TOL)
}

/// `Cov(W^H_t, W_s) = (t^(H+1/2) - (t - min(t,s))^(H+1/2)) / (H + 1/2)`.
pub fn volterra_cross_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    check_finite("t", t)?;
    check_finite("s", s)?;
    check_hurst(hurst)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::InvalidInput("times must be non-negative".into()));
    }
    let h1 = hurst + 0.5;
    let m = t.min(s);
    Ok((t.powf(h1) - (t - m).powf(h1)) / h1)
}

/// Lower-triangular factor of the unit-spacing joint covariance.
#[derive(Debug, Clone)]
pub struct VolterraFactor {
    hurst: f64,
    n_steps: usize,
    /// row-major `2n × 2n` lower-triangular factor
    rows: Vec<f64>,
    clamped_pivots: usize,
    largest_clamped: f64,
}

impl VolterraFactor {
    pub fn new(hurst: f64, n_steps: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if n_steps == 0 || n_steps > MAX_STEPS {
            return Err(Error::InvalidInput(format!(
                "n_steps must be in 1..={MAX_STEPS}, got {n_steps}"
            )));
        }
        let cov = unit_covariance(hurst, n_steps)?;
        let (rows, clamped_pivots, largest_clamped) = semidefinite_cholesky(&cov)?;
        Ok(Self {
            hurst,
            n_steps,
            rows,
            clamped_pivots,
            largest_clamped,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of pivots treated as zero during factorization.
    pub fn clamped_pivots(&self) -> usize {
        self.clamped_pivots
    }

    /// Largest relative magnitude among the clamped pivots.
    pub fn largest_clamped(&self) -> f64 {
        self.largest_clamped
    }

    pub fn lower(&self) -> DMatrix<f64> {
        let m = 2 * self.n_steps;
        DMatrix::from_row_slice(m, m, &self.rows)
    }

    /// Draws paths `first_path .. first_path + count` on the unit-spacing grid.
    pub fn sample_unit(&self, seed: u64, first_path: usize, count: usize) -> UnitPaths {
        let m = 2 * self.n_steps;
        let key = stream_key(seed);
        let mut normals = vec![0.0f64; count * m];
        for (p, zp) in normals.chunks_exact_mut(m).enumerate() {
            let mut rng = path_rng(&key, (first_path + p) as u64);
            for z in zp.iter_mut() {
                *z = rng.sample(StandardNormal);
            }
        }
        let mut joint = vec![0.0f64; count * m];
        self.apply(&normals, &mut joint);
        UnitPaths {
            hurst: self.hurst,
            n_steps: self.n_steps,
            seed,
            first_path,
            count,
            joint,
        }
    }

    /// Applies `f` to consecutive blocks of `BLOCK_SIZE` unit-grid paths in
    /// parallel and returns the results in block order.
    pub fn map_unit_blocks<R, F>(&self, n_paths: usize, seed: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(&UnitPaths) -> R + Sync,
    {
        let n_blocks = n_paths.div_ceil(BLOCK_SIZE);
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK_SIZE;
                let count = BLOCK_SIZE.min(n_paths - first);
                f(&self.sample_unit(seed, first, count))
            })
            .collect()
    }

    /// `out[p] = L · z[p]` for each path-major block of `2n` normals.
    ///
    /// Every output entry is one fixed-order dot product, so a path's values
    /// do not depend on which other paths share the call.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        let m = 2 * self.n_steps;
        const TILE: usize = 16;
        for (z_tile, out_tile) in z.chunks(TILE * m).zip(out.chunks_mut(TILE * m)) {
            for i in 0..m {
                let row = &self.rows[i * m..i * m + i + 1];
                for (zp, op) in z_tile.chunks_exact(m).zip(out_tile.chunks_exact_mut(m)) {
                    op[i] = lane_dot(row, &zp[..i + 1]);
                }
            }
        }
    }
}

/// Joint covariance of `(W_1..W_n, W^H_1..W^H_n)` at integer times.
pub fn unit_covariance(hurst: f64, n: usize) -> Result<DMatrix<f64>> {
    let mut cov = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        let ti = (i + 1) as f64;
        for j in 0..=i {
            let tj = (j + 1) as f64;
            let ww = tj;
            let hh = volterra_autocovariance(ti, tj, hurst)?;
            cov[(i, j)] = ww;
            cov[(j, i)] = ww;
            cov[(n + i, n + j)] = hh;
            cov[(n + j, n + i)] = hh;
        }
        for j in 0..n {
            let tj = (j + 1) as f64;
            let hw = volterra_cross_covariance(ti, tj, hurst)?;
            cov[(n + i, j)] = hw;
            cov[(j, n + i)] = hw;
        }
    }
    Ok(cov)
}

/// Cholesky factor of a symmetric PSD matrix. Pivots that fall below
/// `PIVOT_FLOOR` times the original diagonal are set to zero along with their
/// column; a pivot that is negative beyond the floor is an error.
fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.nrows();
    // row-major so that both rows in each dot product are contiguous
    let mut l = vec![0.0f64; n * n];
    let mut clamped = 0;
    let mut largest = 0.0f64;
    for j in 0..n {
        let (done, rest) = l.split_at_mut((j + 1) * n);
        let row_j = &mut done[j * n..];
        let d = a[(j, j)] - dot(&row_j[..j], &row_j[..j]);
        let scale = a[(j, j)].abs().max(f64::MIN_POSITIVE);
        if d <= PIVOT_FLOOR * scale {
            if d < -1e-8 * scale {
                return Err(Error::Factorization { pivot: j, value: d });
            }
            clamped += 1;
            largest = largest.max(d.abs() / scale);
            continue;
        }
        let pivot = d.sqrt();
        row_j[j] = pivot;
        let row_j = &row_j[..j];
        for (offset, row_i) in rest.chunks_mut(n).enumerate() {
            let i = j + 1 + offset;
            row_i[j] = (a[(i, j)] - dot(&row_i[..j], row_j)) / pivot;
        }
    }
    Ok((l, clamped, largest))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Dot product with eight independent accumulators (vectorizes, fixed order).
#[inline]
fn lane_dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let cx = x.chunks_exact(8);
    let cy = y.chunks_exact(8);
    let tail: f64 = cx.remainder().iter().zip(cy.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in cx.zip(cy) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Maps a master seed and an index to an independent sub-seed (SplitMix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        ^ index
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_key(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn path_rng(key: &[u8; 32], path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(path);
    rng
}

/// Jointly simulated increments of `W` and values of `W^H` for a contiguous
/// range of paths. Arrays are path-major with `n_steps` entries per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    grid: SimGrid,
    hurst: f64,
    seed: u64,
    first_path: usize,
    n_paths: usize,
    dw: Vec<f64>,
    wh: Vec<f64>,
}

impl PathBatch {
    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// Global index of the first path in this batch.
    pub fn first_path(&self) -> usize {
        self.first_path
    }

    /// Increments `W_{t_i} - W_{t_{i-1}}` of path `p` (with `t_0 = 0`).
    pub fn dw(&self, p: usize) -> &[f64] {
        let n = self.n_steps();
        &self.dw[p * n..(p + 1) * n]
    }

    /// `W^H` at the grid times for path `p`.
    pub fn wh(&self, p: usize) -> &[f64] {
        let n = self.n_steps();
        &self.wh[p * n..(p + 1) * n]
    }

    /// Increments of an independent Brownian motion `B` on the same grid,
    /// drawn from the sub-seed reserved for the orthogonal leg.
    pub fn orthogonal_increments(&self) -> Vec<f64> {
        let n = self.n_steps();
        let sqrt_dt = self.grid.dt().sqrt();
        let key = stream_key(derive_seed(self.seed, ORTHOGONAL_STREAM));
        let mut out = Vec::with_capacity(self.n_paths * n);
        for p in 0..self.n_paths {
            let mut rng = path_rng(&key, (self.first_path + p) as u64);
            out.extend((0..n).map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal)));
        }
        out
    }
}

/// Joint `(W, W^H)` values on the unit-spacing grid `1, .., n`.
///
/// By self-similarity the same draws give exact paths on any uniform grid
/// with `n` steps: `W` scales by `√Δ` and `W^H` by `Δ^H`.
#[derive(Debug, Clone)]
pub struct UnitPaths {
    hurst: f64,
    n_steps: usize,
    seed: u64,
    first_path: usize,
    count: usize,
    /// path-major: `W_1..W_n, W^H_1..W^H_n` per path
    joint: Vec<f64>,
}

impl UnitPaths {
    pub fn n_paths(&self) -> usize {
        self.count
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn first_path(&self) -> usize {
        self.first_path
    }

    /// Unit-grid `W` values of path `p`.
    pub fn w(&self, p: usize) -> &[f64] {
        let m = 2 * self.n_steps;
        &self.joint[p * m..p * m + self.n_steps]
    }

    /// Unit-grid `W^H` values of path `p`.
    pub fn wh(&self, p: usize) -> &[f64] {
        let m = 2 * self.n_steps;
        &self.joint[p * m + self.n_steps..(p + 1) * m]
    }

    /// Exact paths on `grid`, which must have the same number of steps.
    pub fn rescale(&self, grid: &SimGrid) -> Result<PathBatch> {
        let n = self.n_steps;
        if grid.n_steps() != n {
            return Err(Error::InvalidInput(format!(
                "unit paths have {n} steps, grid has {}",
                grid.n_steps()
            )));
        }
        let sqrt_dt = grid.dt().sqrt();
        let dt_h = grid.dt().powf(self.hurst);
        let mut dw = Vec::with_capacity(self.count * n);
        let mut wh = Vec::with_capacity(self.count * n);
        for p in 0..self.count {
            let mut prev = 0.0;
            for &x in self.w(p) {
                let w = x * sqrt_dt;
                dw.push(w - prev);
                prev = w;
            }
            wh.extend(self.wh(p).iter().map(|x| x * dt_h));
        }
        Ok(PathBatch {
            grid: grid.clone(),
            hurst: self.hurst,
            seed: self.seed,
            first_path: self.first_path,
            n_paths: self.count,
            dw,
            wh,
        })
    }
}

/// Path generator for one grid; cheap to clone and share across threads.
#[derive(Debug, Clone)]
pub struct JointSampler {
    grid: SimGrid,
    factor: Arc<VolterraFactor>,
}

impl JointSampler {
    pub fn new(grid: SimGrid, hurst: f64) -> Result<Self> {
        let factor = Arc::new(VolterraFactor::new(hurst, grid.n_steps())?);
        Self::with_factor(grid, factor)
    }

    /// Reuses a factor computed for the same `H` and step count.
    pub fn with_factor(grid: SimGrid, factor: Arc<VolterraFactor>) -> Result<Self> {
        if factor.n_steps() != grid.n_steps() {
            return Err(Error::InvalidInput(format!(
                "factor built for {} steps, grid has {}",
                factor.n_steps(),
                grid.n_steps()
            )));
        }
        Ok(Self { grid, factor })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.factor.hurst()
    }

    pub fn factor(&self) -> &VolterraFactor {
        &self.factor
    }

    /// Simulates paths `first_path .. first_path + count`.
    pub fn sample_range(&self, seed: u64, first_path: usize, count: usize) -> PathBatch {
        self.factor
            .sample_unit(seed, first_path, count)
            .rescale(&self.grid)
            .expect("sampler grid matches its factor")
    }

    /// Simulates `n_paths` paths in one batch.
    pub fn simulate(&self, n_paths: usize, seed: u64) -> PathBatch {
        let blocks = self.map_blocks(n_paths, seed, |b| b.clone());
        let n = self.grid.n_steps();
        let mut dw = Vec::with_capacity(n_paths * n);
        let mut wh = Vec::with_capacity(n_paths * n);
        for b in blocks {
            dw.extend_from_slice(&b.dw);
            wh.extend_from_slice(&b.wh);
        }
        PathBatch {
            grid: self.grid.clone(),
            hurst: self.factor.hurst(),
            seed,
            first_path: 0,
            n_paths,
            dw,
            wh,
        }
    }

    /// Applies `f` to consecutive blocks of `BLOCK_SIZE` paths in parallel and
    /// returns the results in block order.
    pub fn map_blocks<R, F>(&self, n_paths: usize, seed: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(&PathBatch) -> R + Sync,
    {
        let n_blocks = n_paths.div_ceil(BLOCK_SIZE);
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK_SIZE;
                let count = BLOCK_SIZE.min(n_paths - first);
                f(&self.sample_range(seed, first, count))
            })
            .collect()
    }
}

/// Simulates `n_paths` joint `(W, W^H)` paths on `grid`.
pub fn simulate_joint_paths(grid: &SimGrid, hurst: f64, n_paths: usize, seed: u64) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    let sampler = JointSampler::new(grid.clone(), hurst)?;
    Ok(sampler.simulate(n_paths, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_starts_after_zero_and_ends_at_maturity() {
        let g = SimGrid::uniform(0.3, 7).unwrap();
        assert!(g.times()[0] > 0.0);
        assert!(g.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*g.times().last().unwrap(), 0.3);
        assert_eq!(g.index_of(0.3), Some(6));
        assert_eq!(g.index_of(g.dt() * 3.0), Some(2));
        assert_eq!(g.index_of(0.31), None);
        assert_eq!(g.index_of(0.0), None);
        assert!(SimGrid::uniform(1.0, 0).is_err());
        assert!(SimGrid::uniform(1.0, MAX_STEPS + 1).is_err());
        assert!(SimGrid::uniform(-1.0, 4).is_err());
    }

    #[test]
    fn autocovariance_examples() {
        assert!((volterra_autocovariance(1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((volterra_autocovariance(2.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let tau: f64 = 0.37;
        for h in [0.1, 0.2, 0.5, 0.8] {
            let v = volterra_autocovariance(tau, tau, h).unwrap();
            assert!((v - tau.powf(2.0 * h) / (2.0 * h)).abs() < 1e-14);
        }
        // mpmath, 30 digits
        let v = volterra_autocovariance(2.0, 1.0, 0.2).unwrap();
        assert!((v / 1.299_445_066_664_162_8 - 1.0).abs() < 1e-10, "{v}");
        let v = volterra_autocovariance(1.0, 2.0, 0.7).unwrap();
        assert!((v / 0.906_672_750_807_359_8 - 1.0).abs() < 1e-10, "{v}");
        assert!(volterra_autocovariance(f64::NAN, 1.0, 0.2).is_err());
        assert!(volterra_autocovariance(1.0, 1.0, 1.2).is_err());
    }

    #[test]
    fn cross_covariance_examples() {
        assert!((volterra_cross_covariance(1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((volterra_cross_covariance(1.0, 1.0, 0.2).unwrap() - 1.0 / 0.7).abs() < 1e-14);
        assert!(volterra_cross_covariance(1.0, 1e-14, 0.3).unwrap().abs() < 1e-12);
        assert!(volterra_cross_covariance(f64::INFINITY, 1.0, 0.3).is_err());
    }

    #[test]
    fn factor_reproduces_covariance() {
        for h in [0.1, 0.2, 0.35, 0.8] {
            let n = 24;
            let cov = unit_covariance(h, n).unwrap();
            let f = VolterraFactor::new(h, n).unwrap();
            let rebuilt = f.lower() * f.lower().transpose();
            let err = (&rebuilt - &cov).abs().max();
            assert!(err < 1e-10 * cov.abs().max(), "H={h}: {err}");
            assert_eq!(f.clamped_pivots(), 0, "H={h}");
        }
    }

    #[test]
    fn half_hurst_is_rank_deficient_and_clamped() {
        let f = VolterraFactor::new(0.5, 16).unwrap();
        assert_eq!(f.clamped_pivots(), 16);
    }

    #[test]
    fn half_hurst_degenerates_to_brownian_motion() {
        let grid = SimGrid::uniform(0.5, 64).unwrap();
        let batch = simulate_joint_paths(&grid, 0.5, 50, 7).unwrap();
        for p in 0..batch.n_paths() {
            let mut w = 0.0;
            for (dw, wh) in batch.dw(p).iter().zip(batch.wh(p)) {
                w += dw;
                assert!((w - wh).abs() < 1e-10, "{w} vs {wh}");
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical_and_independent_of_blocking() {
        let grid = SimGrid::uniform(0.1, 16).unwrap();
        let sampler = JointSampler::new(grid, 0.2).unwrap();
        let a = sampler.simulate(BLOCK_SIZE + 10, 99);
        let b = sampler.simulate(BLOCK_SIZE + 10, 99);
        assert_eq!(a, b);
        let tail = sampler.sample_range(99, BLOCK_SIZE + 3, 2);
        assert_eq!(tail.dw(0), a.dw(BLOCK_SIZE + 3));
        assert_eq!(tail.wh(1), a.wh(BLOCK_SIZE + 4));
        let c = sampler.simulate(8, 100);
        assert_ne!(c.dw(0), a.dw(0));
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
