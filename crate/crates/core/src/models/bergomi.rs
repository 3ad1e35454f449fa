use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_hurst, check_positive, Error, Result};
use crate::gaussian::{PathBatch, SimGrid, UnitPaths, VolterraFactor};

/// Rough Bergomi parameters.
///
/// The variance process is `σ_t = σ0 · exp(ν √(2H) W^H_t − ½ ν² t^{2H})`,
/// so `E[σ_t²] = σ0² · exp(ν² t^{2H})`; the spot has correlation `rho` with
/// the Brownian motion driving `W^H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughBergomiParams {
    pub s0: f64,
    pub sigma0: f64,
    pub nu: f64,
    pub rho: f64,
    pub hurst: f64,
}

impl RoughBergomiParams {
    pub fn new(s0: f64, sigma0: f64, nu: f64, rho: f64, hurst: f64) -> Result<Self> {
        let p = Self {
            s0,
            sigma0,
            nu,
            rho,
            hurst,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("s0", self.s0)?;
        check_positive("sigma0", self.sigma0)?;
        check_finite("nu", self.nu)?;
        if self.nu < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: self.nu,
                reason: "must be non-negative",
            });
        }
        check_finite("rho", self.rho)?;
        if self.rho.abs() > 1.0 {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must lie in [-1, 1]",
            });
        }
        check_hurst(self.hurst)?;
        Ok(())
    }
}

/// Path summary at one time: `σ_t`, `∫_0^t σ² du` and `∫_0^t σ dW`.
///
/// Both integrals are left-point Itô sums over the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TerminalState {
    pub sigma: f64,
    pub int_var: f64,
    pub int_vol_dw: f64,
}

/// Per-path terminal states at a single maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct MaturitySample {
    maturity: f64,
    states: Vec<TerminalState>,
}

impl MaturitySample {
    pub fn new(maturity: f64, states: Vec<TerminalState>) -> Result<Self> {
        check_positive("maturity", maturity)?;
        if states.is_empty() {
            return Err(Error::InvalidInput("maturity sample has no paths".into()));
        }
        Ok(Self { maturity, states })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[TerminalState] {
        &self.states
    }
}

/// Volatility paths on a grid with their running integrals.
#[derive(Debug, Clone)]
pub struct SigmaPath {
    grid: SimGrid,
    n_paths: usize,
    sigma: Vec<f64>,
    int_var: Vec<f64>,
    int_vol_dw: Vec<f64>,
}

impl SigmaPath {
    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// `σ` at the grid times `t_1..t_n` of path `p`.
    pub fn sigma(&self, p: usize) -> &[f64] {
        let n = self.grid.n_steps();
        &self.sigma[p * n..(p + 1) * n]
    }

    /// Running `∫ σ² du` at the grid times.
    pub fn int_var(&self, p: usize) -> &[f64] {
        let n = self.grid.n_steps();
        &self.int_var[p * n..(p + 1) * n]
    }

    /// Running `∫ σ dW` at the grid times.
    pub fn int_vol_dw(&self, p: usize) -> &[f64] {
        let n = self.grid.n_steps();
        &self.int_vol_dw[p * n..(p + 1) * n]
    }

    /// Terminal states of every path at the grid time `maturity`.
    pub fn at(&self, maturity: f64) -> Result<MaturitySample> {
        let i = self.grid.index_of(maturity).ok_or(Error::MaturityOffGrid {
            requested: maturity,
            grid_maturity: self.grid.maturity(),
        })?;
        let n = self.grid.n_steps();
        let states = (0..self.n_paths)
            .map(|p| TerminalState {
                sigma: self.sigma[p * n + i],
                int_var: self.int_var[p * n + i],
                int_vol_dw: self.int_vol_dw[p * n + i],
            })
            .collect();
        MaturitySample::new(self.grid.times()[i], states)
    }
}

/// Precomputed per-grid constants for the exponential map.
struct VolKernel {
    sigma0: f64,
    scale: f64,
    dt: f64,
    sqrt_dt: f64,
    dt_h: f64,
    /// `½ ν² t_i^{2H}` at `t_1..t_n`
    compensator: Vec<f64>,
}

impl VolKernel {
    fn new(params: &RoughBergomiParams, grid: &SimGrid) -> Self {
        let h = params.hurst;
        Self {
            sigma0: params.sigma0,
            scale: params.nu * (2.0 * h).sqrt(),
            dt: grid.dt(),
            sqrt_dt: grid.dt().sqrt(),
            dt_h: grid.dt().powf(h),
            compensator: grid
                .times()
                .iter()
                .map(|t| 0.5 * params.nu * params.nu * t.powf(2.0 * h))
                .collect(),
        }
    }

    /// Walks one path given `dW` increments and `W^H` values, calling
    /// `visit(i, state)` at every grid time `t_{i+1}`.
    #[inline]
    fn walk(&self, dw: impl Iterator<Item = f64>, wh: &[f64], mut visit: impl FnMut(usize, TerminalState)) {
        let mut sigma = self.sigma0;
        let mut int_var = 0.0;
        let mut int_vol_dw = 0.0;
        for (i, (dwi, &whi)) in dw.zip(wh).enumerate() {
            int_var += sigma * sigma * self.dt;
            int_vol_dw += sigma * dwi;
            sigma = self.sigma0 * (self.scale * whi - self.compensator[i]).exp();
            visit(
                i,
                TerminalState {
                    sigma,
                    int_var,
                    int_vol_dw,
                },
            );
        }
    }
}

/// Builds `σ` and its running integrals from simulated `(W, W^H)` paths.
pub fn bergomi_sigma_path(batch: &PathBatch, params: &RoughBergomiParams) -> Result<SigmaPath> {
    params.validate()?;
    if batch.hurst() != params.hurst {
        return Err(Error::InvalidInput(format!(
            "paths simulated with H = {}, model has H = {}",
            batch.hurst(),
            params.hurst
        )));
    }
    let grid = batch.grid().clone();
    let kernel = VolKernel::new(params, &grid);
    let n = grid.n_steps();
    let total = batch.n_paths() * n;
    let mut sigma = Vec::with_capacity(total);
    let mut int_var = Vec::with_capacity(total);
    let mut int_vol_dw = Vec::with_capacity(total);
    for p in 0..batch.n_paths() {
        kernel.walk(batch.dw(p).iter().copied(), batch.wh(p), |_, s| {
            sigma.push(s.sigma);
            int_var.push(s.int_var);
            int_vol_dw.push(s.int_vol_dw);
        });
    }
    Ok(SigmaPath {
        grid,
        n_paths: batch.n_paths(),
        sigma,
        int_var,
        int_vol_dw,
    })
}

/// Terminal states of unit-grid paths rescaled to each grid in `grids`;
/// result `[g][p]` is path `p` at the last time of grid `g`.
pub(crate) fn unit_terminal_states(
    unit: &UnitPaths,
    grids: &[SimGrid],
    params: &RoughBergomiParams,
) -> Vec<Vec<TerminalState>> {
    let kernels: Vec<VolKernel> = grids.iter().map(|g| VolKernel::new(params, g)).collect();
    let mut out: Vec<Vec<TerminalState>> = grids.iter().map(|_| Vec::with_capacity(unit.n_paths())).collect();
    let n = unit.n_steps();
    let mut wh = vec![0.0; n];
    for p in 0..unit.n_paths() {
        let w = unit.w(p);
        for (k, kernel) in kernels.iter().enumerate() {
            for (dst, src) in wh.iter_mut().zip(unit.wh(p)) {
                *dst = src * kernel.dt_h;
            }
            let dw = (0..n).map(|i| (w[i] - if i == 0 { 0.0 } else { w[i - 1] }) * kernel.sqrt_dt);
            let mut last = TerminalState::default();
            kernel.walk(dw, &wh, |_, s| last = s);
            out[k].push(last);
        }
    }
    out
}

/// Simulates `n_paths` rough Bergomi paths and returns their terminal states
/// at each of `maturities`.
///
/// Each maturity gets its own uniform grid of `factor.n_steps()` steps; by
/// self-similarity all grids share one set of unit-grid Gaussian draws, so
/// estimates across maturities use common random numbers.
pub fn simulate_terminal_states(
    factor: &VolterraFactor,
    params: &RoughBergomiParams,
    maturities: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MaturitySample>> {
    params.validate()?;
    if factor.hurst() != params.hurst {
        return Err(Error::InvalidInput(format!(
            "factor built for H = {}, model has H = {}",
            factor.hurst(),
            params.hurst
        )));
    }
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    let grids = maturities
        .iter()
        .map(|&t| SimGrid::uniform(t, factor.n_steps()))
        .collect::<Result<Vec<_>>>()?;
    let blocks = factor.map_unit_blocks(n_paths, seed, |unit| unit_terminal_states(unit, &grids, params));
    let mut per_maturity: Vec<Vec<TerminalState>> = grids.iter().map(|_| Vec::with_capacity(n_paths)).collect();
    for block in blocks {
        for (dst, src) in per_maturity.iter_mut().zip(block) {
            dst.extend(src);
        }
    }
    grids
        .iter()
        .zip(per_maturity)
        .map(|(g, states)| MaturitySample::new(g.maturity(), states))
        .collect()
}

/// Simulates `n_paths` paths on the single grid `grid` and returns their
/// states at each of `times`, which must be grid times.
///
/// Unlike [`simulate_terminal_states`], every time shares one
/// discretization, so differences across maturities (calendar spreads) see
/// one discrete-time model rather than a different step size per maturity.
pub fn simulate_states_on_grid(
    factor: &VolterraFactor,
    params: &RoughBergomiParams,
    grid: &SimGrid,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MaturitySample>> {
    params.validate()?;
    if factor.hurst() != params.hurst || factor.n_steps() != grid.n_steps() {
        return Err(Error::InvalidInput(format!(
            "factor built for H = {} with {} steps, model has H = {} and the grid {} steps",
            factor.hurst(),
            factor.n_steps(),
            params.hurst,
            grid.n_steps()
        )));
    }
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    let indices = times
        .iter()
        .map(|&t| {
            grid.index_of(t).ok_or(Error::MaturityOffGrid {
                requested: t,
                grid_maturity: grid.maturity(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let kernel = VolKernel::new(params, grid);
    let n = grid.n_steps();
    let blocks = factor.map_unit_blocks(n_paths, seed, |unit| {
        let mut out: Vec<Vec<TerminalState>> = indices.iter().map(|_| Vec::with_capacity(unit.n_paths())).collect();
        let mut wh = vec![0.0; n];
        let mut states = vec![TerminalState::default(); n];
        for p in 0..unit.n_paths() {
            let w = unit.w(p);
            for (dst, src) in wh.iter_mut().zip(unit.wh(p)) {
                *dst = src * kernel.dt_h;
            }
            let dw = (0..n).map(|i| (w[i] - if i == 0 { 0.0 } else { w[i - 1] }) * kernel.sqrt_dt);
            kernel.walk(dw, &wh, |i, s| states[i] = s);
            for (dst, &i) in out.iter_mut().zip(&indices) {
                dst.push(states[i]);
            }
        }
        out
    });
    let mut per_time: Vec<Vec<TerminalState>> = indices.iter().map(|_| Vec::with_capacity(n_paths)).collect();
    for block in blocks {
        for (dst, src) in per_time.iter_mut().zip(block) {
            dst.extend(src);
        }
    }
    indices
        .iter()
        .zip(per_time)
        .map(|(&i, states)| MaturitySample::new(grid.times()[i], states))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{simulate_joint_paths, JointSampler};
    use std::sync::Arc;

    fn params(h: f64) -> RoughBergomiParams {
        RoughBergomiParams::new(100.0, 0.3, 1.1, -0.6, h).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RoughBergomiParams::new(100.0, 0.3, 1.1, -1.01, 0.2).is_err());
        assert!(RoughBergomiParams::new(100.0, 0.3, 1.1, -1.0, 0.2).is_ok());
        assert!(RoughBergomiParams::new(100.0, 0.0, 1.1, 0.0, 0.2).is_err());
        assert!(RoughBergomiParams::new(100.0, 0.3, -0.1, 0.0, 0.2).is_err());
        assert!(RoughBergomiParams::new(100.0, 0.3, 1.1, 0.0, 1.0).is_err());
        assert!(RoughBergomiParams::new(f64::NAN, 0.3, 1.1, 0.0, 0.2).is_err());
    }

    #[test]
    fn zero_vol_of_vol_is_flat() {
        let p = RoughBergomiParams::new(100.0, 0.25, 0.0, 0.3, 0.2).unwrap();
        let grid = SimGrid::uniform(1.0, 16).unwrap();
        let batch = simulate_joint_paths(&grid, 0.2, 4, 1).unwrap();
        let sp = bergomi_sigma_path(&batch, &p).unwrap();
        for q in 0..4 {
            assert!(sp.sigma(q).iter().all(|&s| s == 0.25));
            assert!((sp.int_var(q)[15] - 0.0625).abs() < 1e-15);
            let w_t: f64 = batch.dw(q).iter().sum();
            assert!((sp.int_vol_dw(q)[15] - 0.25 * w_t).abs() < 1e-14);
        }
    }

    #[test]
    fn off_grid_maturity_is_an_error() {
        let grid = SimGrid::uniform(1.0, 8).unwrap();
        let batch = simulate_joint_paths(&grid, 0.2, 2, 1).unwrap();
        let sp = bergomi_sigma_path(&batch, &params(0.2)).unwrap();
        assert!(sp.at(0.5).is_ok());
        assert!(matches!(sp.at(0.3), Err(Error::MaturityOffGrid { .. })));
    }

    #[test]
    fn mismatched_hurst_is_rejected() {
        let grid = SimGrid::uniform(1.0, 8).unwrap();
        let batch = simulate_joint_paths(&grid, 0.3, 2, 1).unwrap();
        assert!(bergomi_sigma_path(&batch, &params(0.2)).is_err());
    }

    fn mean_and_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn zero_noise_path_follows_the_compensator() {
        let p = params(0.2);
        let grid = SimGrid::uniform(1.0, 8).unwrap();
        let kernel = VolKernel::new(&p, &grid);
        let mut seen = Vec::new();
        kernel.walk(std::iter::repeat(0.0), &[0.0; 8], |i, s| seen.push((i, s.sigma)));
        for (i, s) in seen {
            let t = grid.times()[i];
            assert!((s - 0.3 * (-0.5 * 1.21 * t.powf(0.4)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn lognormal_moments() {
        // E[σ_t] = σ0 and E[σ_t²] = σ0² exp(ν² t^{2H})
        let h = 0.2;
        let grid = SimGrid::uniform(1.0, 32).unwrap();
        let batch = simulate_joint_paths(&grid, h, 100_000, 7).unwrap();
        let p = RoughBergomiParams::new(100.0, 0.3, 0.5, -0.6, h).unwrap();
        let sp = bergomi_sigma_path(&batch, &p).unwrap();
        for i in [0, 15, 31] {
            let t = grid.times()[i];
            let s: Vec<f64> = (0..sp.n_paths()).map(|q| sp.sigma(q)[i]).collect();
            let (m1, se1) = mean_and_se(&s);
            assert!((m1 - 0.3).abs() < 3.0 * se1, "t {t}: {m1} ± {se1}");
            let s2: Vec<f64> = s.iter().map(|x| x * x).collect();
            let (m2, se2) = mean_and_se(&s2);
            let want = 0.09 * (0.25 * t.powf(2.0 * h)).exp();
            assert!((m2 - want).abs() < 3.0 * se2, "t {t}: {m2} ± {se2} vs {want}");
        }
    }

    #[test]
    fn integrals_are_monotone_and_positive() {
        let grid = SimGrid::uniform(0.5, 16).unwrap();
        let batch = simulate_joint_paths(&grid, 0.1, 200, 3).unwrap();
        let sp = bergomi_sigma_path(&batch, &params(0.1)).unwrap();
        for q in 0..200 {
            assert!(sp.sigma(q).iter().all(|&s| s > 0.0));
            assert!(sp.int_var(q).windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn half_hurst_is_driven_by_w_itself() {
        // at H = ½, W^H = W and σ_t = σ0 exp(ν W_t − ½ν² t)
        let grid = SimGrid::uniform(1.0, 16).unwrap();
        let batch = simulate_joint_paths(&grid, 0.5, 20, 5).unwrap();
        let sp = bergomi_sigma_path(&batch, &params(0.5)).unwrap();
        for q in 0..20 {
            let mut w = 0.0;
            for i in 0..16 {
                w += batch.dw(q)[i];
                let t = grid.times()[i];
                let want = 0.3 * (1.1 * w - 0.5 * 1.21 * t).exp();
                assert!((sp.sigma(q)[i] - want).abs() < 1e-9 * want);
            }
        }
    }

    #[test]
    fn ladder_matches_per_grid_simulation() {
        let p = params(0.2);
        let factor = Arc::new(VolterraFactor::new(0.2, 16).unwrap());
        let mats = [0.01, 0.3, 1.0];
        let ladder = simulate_terminal_states(&factor, &p, &mats, 50, 11).unwrap();
        for (k, &t) in mats.iter().enumerate() {
            let sampler = JointSampler::with_factor(SimGrid::uniform(t, 16).unwrap(), factor.clone()).unwrap();
            let batch = sampler.simulate(50, 11);
            let direct = bergomi_sigma_path(&batch, &p).unwrap().at(t).unwrap();
            assert_eq!(ladder[k].maturity(), t);
            for (a, b) in ladder[k].states().iter().zip(direct.states()) {
                assert!((a.sigma - b.sigma).abs() <= 1e-14 * b.sigma);
                assert!((a.int_var - b.int_var).abs() <= 1e-13 * b.int_var);
                assert!((a.int_vol_dw - b.int_vol_dw).abs() <= 1e-13 * (1.0 + b.int_vol_dw.abs()));
            }
        }
    }

    #[test]
    fn common_grid_states_match_sigma_path() {
        let p = params(0.3);
        let grid = SimGrid::uniform(0.5, 20).unwrap();
        let factor = VolterraFactor::new(0.3, 20).unwrap();
        let got = simulate_states_on_grid(&factor, &p, &grid, &[0.1, 0.5], 300, 4).unwrap();
        let unit = factor.sample_unit(4, 0, 300);
        let sp = bergomi_sigma_path(&unit.rescale(&grid).unwrap(), &p).unwrap();
        for (sample, t) in got.iter().zip([0.1, 0.5]) {
            assert_eq!(sample.maturity(), t);
            for (a, b) in sample.states().iter().zip(sp.at(t).unwrap().states()) {
                assert!((a.sigma - b.sigma).abs() <= 1e-14 * b.sigma);
                assert!((a.int_var - b.int_var).abs() <= 1e-13 * b.int_var);
                assert!((a.int_vol_dw - b.int_vol_dw).abs() <= 1e-13 * (1.0 + b.int_vol_dw.abs()));
            }
        }
        assert!(matches!(
            simulate_states_on_grid(&factor, &p, &grid, &[0.11], 10, 4),
            Err(Error::MaturityOffGrid { .. })
        ));
    }
}
