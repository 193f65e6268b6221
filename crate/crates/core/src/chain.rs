//! Exact analysis of the discrete algorithm as a finite Markov chain.
//!
//! States are power vectors on the lattice, indexed in mixed radix with
//! the last link varying fastest. The random-scan chain picks a link
//! uniformly and resamples its level from the Gibbs conditional, so
//!
//! ```text
//! Pi(p, q) = (1/M) * sum_i Lambda_i(q_i | p_-i) * [p_-i == q_-i]
//! Omega_beta(p) ∝ exp(-beta / U(p))
//! ```
//!
//! Everything here is dense and meant for desk-scale instances.

use nalgebra::{DMatrix, DVector, Schur};
use thiserror::Error;

use crate::channel::{self, ChannelError, GainMatrix};
use crate::engine::TraceRecord;
use crate::sampler::{self, boltzmann, PowerGrid, Temperature};
use crate::utility::{UtilityError, UtilitySpec};

/// Largest state space for transition-matrix and spectral work.
pub const SPECTRAL_CAP: usize = 4096;
/// Largest state space for closed-form stationary quantities.
pub const STATIONARY_CAP: usize = 65536;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("state space has {size} states, cap is {cap}; raise the cap to at least {size}")]
    CapExceeded { size: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("grid has {grid} links, network has {network}")]
    GridMismatch { grid: usize, network: usize },
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

/// Mixed-radix enumeration of the power lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    grid: PowerGrid,
    strides: Vec<usize>,
    size: usize,
}

impl StateSpace {
    pub fn new(grid: &PowerGrid) -> Self {
        let counts = grid.level_counts();
        let mut strides = vec![1usize; counts.len()];
        let mut size = 1usize;
        for i in (0..counts.len()).rev() {
            strides[i] = size;
            size = size.saturating_mul(counts[i]);
        }
        Self {
            grid: grid.clone(),
            strides,
            size,
        }
    }

    /// Number of states (saturates at `usize::MAX`).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn links(&self) -> usize {
        self.strides.len()
    }

    pub fn grid(&self) -> &PowerGrid {
        &self.grid
    }

    pub fn index_of(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn level(&self, index: usize, link: usize) -> usize {
        (index / self.strides[link]) % self.grid.level_count(link)
    }

    pub fn levels_of(&self, index: usize) -> Vec<usize> {
        (0..self.links()).map(|i| self.level(index, i)).collect()
    }

    pub fn powers_of(&self, index: usize) -> Vec<f64> {
        (0..self.links())
            .map(|i| self.grid.power(i, self.level(index, i)))
            .collect()
    }

    /// Index of a power vector lying on the grid.
    pub fn index_of_powers(&self, powers: &[f64]) -> usize {
        powers
            .iter()
            .enumerate()
            .map(|(i, &p)| self.grid.level_of(i, p) * self.strides[i])
            .sum()
    }

    /// State reached from `index` by moving `link` to `level`.
    pub fn with_level(&self, index: usize, link: usize, level: usize) -> usize {
        let current = self.level(index, link);
        index - current * self.strides[link] + level * self.strides[link]
    }

    fn check_cap(&self, cap: usize) -> Result<(), ChainError> {
        if self.size > cap {
            return Err(ChainError::CapExceeded {
                size: self.size,
                cap,
            });
        }
        Ok(())
    }
}

/// System utility of every lattice state.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityLandscape {
    space: StateSpace,
    utilities: Vec<f64>,
    best: f64,
    worst: f64,
    optimal_set: Vec<usize>,
}

impl UtilityLandscape {
    pub fn new(g: &GainMatrix, grid: &PowerGrid, utility: &UtilitySpec, cap: usize) -> Result<Self, ChainError> {
        if grid.links() != g.links() {
            return Err(ChainError::GridMismatch {
                grid: grid.links(),
                network: g.links(),
            });
        }
        let space = StateSpace::new(grid);
        space.check_cap(cap)?;
        let utilities = (0..space.size())
            .map(|s| {
                let gamma = channel::sinr(g, &space.powers_of(s))?;
                Ok(utility.evaluate_all(&gamma)?)
            })
            .collect::<Result<Vec<f64>, ChainError>>()?;
        Ok(Self::from_utilities(space, utilities))
    }

    /// Landscape from precomputed utilities (one per state).
    pub fn from_utilities(space: StateSpace, utilities: Vec<f64>) -> Self {
        assert_eq!(space.size(), utilities.len());
        let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = utilities.iter().copied().fold(f64::INFINITY, f64::min);
        let optimal_set = sampler::argmax_set(&utilities);
        Self {
            space,
            utilities,
            best,
            worst,
            optimal_set,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    /// `U*`, the best utility on the lattice.
    pub fn best(&self) -> f64 {
        self.best
    }

    /// `U_*`, the worst utility on the lattice.
    pub fn worst(&self) -> f64 {
        self.worst
    }

    /// All states attaining `U*` (exact float ties).
    pub fn optimal_set(&self) -> &[usize] {
        &self.optimal_set
    }

    pub fn stationary(&self, beta: Temperature) -> Vec<f64> {
        boltzmann(&self.utilities, beta)
    }

    /// Stationary mass of a single optimal state.
    pub fn prob_optimal(&self, beta: Temperature) -> f64 {
        self.stationary(beta)[self.optimal_set[0]]
    }

    pub fn mean(&self, beta: Temperature) -> f64 {
        if beta == Temperature::Infinite {
            return self.best;
        }
        dot(&self.stationary(beta), &self.utilities)
    }

    pub fn variance(&self, beta: Temperature) -> f64 {
        if beta == Temperature::Infinite {
            return 0.0;
        }
        let omega = self.stationary(beta);
        let mean = dot(&omega, &self.utilities);
        omega
            .iter()
            .zip(&self.utilities)
            .map(|(w, u)| w * (u - mean).powi(2))
            .sum()
    }

    /// Decreasing upper bound on the variance:
    /// `U*^2 (1 - k W)^2 + (U* - U_*)^2 (1 - k W)` with `k` optimal states
    /// each of stationary mass `W`.
    pub fn variance_bound(&self, beta: Temperature) -> f64 {
        let off = self.off_optimal_mass(beta);
        let gap = self.best - self.worst;
        self.best.powi(2) * off.powi(2) + gap.powi(2) * off
    }

    /// `1 - |P*| Omega(p*)`, summed over the non-optimal states so that it
    /// does not cancel to zero while those states still carry mass.
    fn off_optimal_mass(&self, beta: Temperature) -> f64 {
        let omega = self.stationary(beta);
        let mut optimal = self.optimal_set.iter().peekable();
        let mut off = 0.0;
        for (s, w) in omega.iter().enumerate() {
            if optimal.peek() == Some(&&s) {
                optimal.next();
            } else {
                off += w;
            }
        }
        off
    }

    /// Expected inverse utility; states with zero mass contribute nothing.
    pub fn mean_inverse(&self, beta: Temperature) -> f64 {
        self.stationary(beta)
            .iter()
            .zip(&self.utilities)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, u)| w / u)
            .sum()
    }

    /// `d Omega(p*) / d beta = Omega(p*) (<1/U> - 1/U*)`.
    pub fn prob_optimal_derivative(&self, beta: Temperature) -> f64 {
        self.prob_optimal(beta) * (self.mean_inverse(beta) - 1.0 / self.best)
    }

    /// Smallest `beta` whose stationary mean reaches `target`, by bisection.
    ///
    /// Requires `mean(0) < target < U*`.
    pub fn beta_for_mean(&self, target: f64) -> Result<f64, ChainError> {
        let base = self.mean(Temperature::Finite(0.0));
        if !(base < target && target < self.best) {
            return Err(ChainError::Domain(format!(
                "target mean {target} outside ({base}, {})",
                self.best
            )));
        }
        let mean_at = |b: f64| self.mean(Temperature::Finite(b));
        let (mut lo, mut hi) = (0.0, 1.0);
        while mean_at(hi) < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(ChainError::Domain(format!(
                    "target mean {target} not reached at any representable beta"
                )));
            }
        }
        for _ in 0..400 {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mean_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Smallest `beta` with `variance_bound(beta) <= delta`.
    pub fn beta_for_variance(&self, delta: f64) -> Result<Temperature, ChainError> {
        if !(delta >= 0.0) {
            return Err(ChainError::Domain(format!("variance target {delta} < 0")));
        }
        let bound_at = |b: f64| self.variance_bound(Temperature::Finite(b));
        if delta >= bound_at(0.0) {
            return Ok(Temperature::Finite(0.0));
        }
        if delta == 0.0 {
            return Ok(Temperature::Infinite);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while bound_at(hi) > delta {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Ok(Temperature::Infinite);
            }
        }
        for _ in 0..400 {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if bound_at(mid) > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Temperature::Finite(hi))
    }

    /// Closed-form variance threshold, reported next to the numeric
    /// inversion.
    pub fn variance_threshold_check(&self, delta: f64) -> Result<VarianceThresholdCheck, ChainError> {
        let beta = self.beta_for_variance(delta)?;
        let k = self.optimal_set.len() as f64;
        let n = self.space.size() as f64;
        let u = self.best;
        let gap2 = (self.best - self.worst).powi(2);
        let printed = u * u * (1.0 + k / n).powi(2) + gap2 * (1.0 + k / n);
        let closed_form_prob_optimal = if delta >= self.variance_bound(Temperature::Finite(0.0)) {
            None
        } else {
            Some((1.0 + gap2 / (2.0 * u * u) - (delta / (u * u) + gap2 * gap2 / (4.0 * u.powi(4))).sqrt()) / k)
        };
        Ok(VarianceThresholdCheck {
            beta,
            printed_threshold: printed,
            attainable_threshold: self.variance_bound(Temperature::Finite(0.0)),
            closed_form_prob_optimal,
            prob_optimal_at_beta: self.prob_optimal(beta),
        })
    }
}

/// Numeric and closed-form answers to "which beta keeps the variance bound
/// below delta".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceThresholdCheck {
    /// Authoritative numeric answer.
    pub beta: Temperature,
    /// Zero-beta branch threshold with the published `+` signs.
    pub printed_threshold: f64,
    /// The bound at `beta = 0`, the largest value it attains.
    pub attainable_threshold: f64,
    /// `Omega(p*)` solving the bound's quadratic, when `beta > 0`.
    pub closed_form_prob_optimal: Option<f64>,
    pub prob_optimal_at_beta: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Omega_beta` over the whole lattice without building a matrix.
pub fn stationary_distribution(
    g: &GainMatrix,
    grid: &PowerGrid,
    utility: &UtilitySpec,
    beta: Temperature,
) -> Result<Vec<f64>, ChainError> {
    Ok(UtilityLandscape::new(g, grid, utility, STATIONARY_CAP)?.stationary(beta))
}

/// Exhaustive optimum: `(U*, argmax states)`.
pub fn brute_force_optimum(
    g: &GainMatrix,
    grid: &PowerGrid,
    utility: &UtilitySpec,
    cap: usize,
) -> Result<(f64, Vec<usize>), ChainError> {
    let l = UtilityLandscape::new(g, grid, utility, cap)?;
    Ok((l.best(), l.optimal_set().to_vec()))
}

/// Half the L1 distance.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64, ChainError> {
    if a.len() != b.len() {
        return Err(ChainError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// The chain at one temperature.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub landscape: UtilityLandscape,
    pub beta: Temperature,
    /// Row-stochastic transition matrix.
    pub pi: DMatrix<f64>,
    pub omega: Vec<f64>,
}

/// Random-scan transition matrix from the landscape.
pub fn transition_matrix(landscape: &UtilityLandscape, beta: Temperature) -> DMatrix<f64> {
    let space = landscape.space();
    let n = space.size();
    let m = space.links();
    let u = landscape.utilities();
    let mut pi = DMatrix::zeros(n, n);
    for s in 0..n {
        for i in 0..m {
            let count = space.grid().level_count(i);
            let targets: Vec<usize> = (0..count).map(|k| space.with_level(s, i, k)).collect();
            let cand: Vec<f64> = targets.iter().map(|&t| u[t]).collect();
            let levels = space.grid().powers(i);
            let sampler::UpdateDistribution::Discrete { probs, .. } =
                sampler::discrete_from_utilities(&levels, &cand, beta)
            else {
                unreachable!("discrete update is discrete")
            };
            for (t, p) in targets.into_iter().zip(probs) {
                pi[(s, t)] += p / m as f64;
            }
        }
    }
    pi
}

/// Builds `Pi` for the lattice, refusing state spaces above `cap`.
pub fn build_transition_matrix(
    g: &GainMatrix,
    grid: &PowerGrid,
    utility: &UtilitySpec,
    beta: Temperature,
    cap: usize,
) -> Result<ChainModel, ChainError> {
    let landscape = UtilityLandscape::new(g, grid, utility, cap)?;
    Ok(ChainModel::from_landscape(landscape, beta))
}

impl ChainModel {
    pub fn from_landscape(landscape: UtilityLandscape, beta: Temperature) -> Self {
        let pi = transition_matrix(&landscape, beta);
        let omega = landscape.stationary(beta);
        Self {
            landscape,
            beta,
            pi,
            omega,
        }
    }

    pub fn size(&self) -> usize {
        self.omega.len()
    }

    /// `||Omega Pi - Omega||_inf`.
    pub fn fixed_point_residual(&self) -> f64 {
        let next = self.step(&self.omega);
        next.iter()
            .zip(&self.omega)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_error(&self) -> f64 {
        self.pi
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// One step of the distribution: `d Pi`.
    pub fn step(&self, d: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(d);
        (self.pi.transpose() * v).iter().copied().collect()
    }

    /// True when every entry of `Pi^k` is positive.
    pub fn power_is_positive(&self, k: u32) -> bool {
        let mut acc = DMatrix::identity(self.size(), self.size());
        for _ in 0..k {
            acc = &acc * &self.pi;
        }
        acc.iter().all(|&x| x > 0.0)
    }

    /// Eigenvalue moduli of `Pi`, largest first.
    pub fn eigenvalue_moduli(&self) -> Result<Vec<f64>, ChainError> {
        let n = self.size();
        let schur = Schur::try_new(self.pi.clone(), 1e-14, 100_000).ok_or_else(|| {
            ChainError::Eigen(format!(
                "Schur iteration did not converge on a {n}x{n} matrix (row-sum error {:.3e}, min stationary mass {:.3e})",
                self.row_sum_error(),
                self.omega.iter().copied().fold(f64::INFINITY, f64::min)
            ))
        })?;
        let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        Ok(moduli)
    }

    /// Second-largest eigenvalue modulus. A repeated unit eigenvalue is
    /// reported as 1.
    pub fn lambda2(&self) -> Result<f64, ChainError> {
        let moduli = self.eigenvalue_moduli()?;
        Ok(moduli.get(1).copied().unwrap_or(0.0))
    }
}

/// TV distance to stationarity after each step, with the rate that bounds it.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    /// `tv[k] = ||initial Pi^k - Omega||_TV`, `k = 0..=k_max`.
    pub tv: Vec<f64>,
    pub lambda2: f64,
}

/// Iterates `initial Pi^k` and computes `|lambda_2|`.
pub fn mixing_analysis(chain: &ChainModel, initial: &[f64], k_max: usize) -> Result<MixingReport, ChainError> {
    if initial.len() != chain.size() {
        return Err(ChainError::DimensionMismatch {
            expected: chain.size(),
            found: initial.len(),
        });
    }
    let mass: f64 = initial.iter().sum();
    if (mass - 1.0).abs() > 1e-9 || initial.iter().any(|&x| x < 0.0) {
        return Err(ChainError::Domain(format!("initial distribution has mass {mass}")));
    }
    let lambda2 = chain.lambda2()?;
    if lambda2 >= 1.0 - 1e-12 {
        return Err(ChainError::Eigen(format!(
            "|lambda_2| = {lambda2}: the chain is not irreducible and aperiodic"
        )));
    }
    let mut tv = Vec::with_capacity(k_max + 1);
    let mut d = initial.to_vec();
    for k in 0..=k_max {
        if k > 0 {
            d = chain.step(&d);
        }
        tv.push(tv_distance(&d, &chain.omega)?);
    }
    Ok(MixingReport { tv, lambda2 })
}

/// Geometric decay rate of a TV sequence: `exp` of the least-squares slope
/// of `ln tv[k]` over the second half of the terms lying in `(floor, 1e-2)`.
pub fn decay_rate(tv: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = tv
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > floor && t < 1e-2)
        .map(|(k, &t)| (k as f64, t.ln()))
        .collect();
    let pts = &pts[pts.len() / 2..];
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Fraction of `records` spent in each lattice state.
pub fn empirical_occupancy(space: &StateSpace, records: &[TraceRecord]) -> Vec<f64> {
    let mut counts = vec![0.0; space.size()];
    for r in records {
        counts[space.index_of_powers(&r.powers)] += 1.0;
    }
    let total = records.len().max(1) as f64;
    counts.iter().map(|c| c / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::{Combine, TableUtility};

    fn two_link() -> GainMatrix {
        GainMatrix::new(vec![vec![1.0, 0.3], vec![0.2, 0.8]], vec![0.1, 0.1], vec![1.0, 1.0]).unwrap()
    }

    fn positive_utility() -> UtilitySpec {
        UtilitySpec::CustomTable(TableUtility::new(vec![1.0, 4.0], vec![0.5, 1.0, 2.5], Combine::Sum).unwrap())
    }

    #[test]
    fn state_space_indexing_round_trips() {
        let grid = PowerGrid::new(&[1.0, 2.0, 3.0], &[2, 3, 4]).unwrap();
        let s = StateSpace::new(&grid);
        assert_eq!(s.size(), 24);
        for idx in 0..24 {
            assert_eq!(s.index_of(&s.levels_of(idx)), idx);
            assert_eq!(s.index_of_powers(&s.powers_of(idx)), idx);
        }
        assert_eq!(s.levels_of(1), vec![0, 0, 1]);
        assert_eq!(s.with_level(0, 0, 1), 12);
    }

    #[test]
    fn single_link_zero_beta_rows_are_uniform() {
        let g = GainMatrix::new(vec![vec![1.0]], vec![0.1], vec![1.0]).unwrap();
        let grid = PowerGrid::uniform(&[1.0], 3).unwrap();
        let c = build_transition_matrix(&g, &grid, &UtilitySpec::TotalThroughput, Temperature::Finite(0.0), SPECTRAL_CAP).unwrap();
        for x in c.pi.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_coordinate_moves_are_impossible() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let c = build_transition_matrix(&g, &grid, &UtilitySpec::TotalThroughput, Temperature::Finite(1.0), SPECTRAL_CAP).unwrap();
        let s = c.landscape.space();
        for a in 0..9 {
            for b in 0..9 {
                let (la, lb) = (s.levels_of(a), s.levels_of(b));
                if la[0] != lb[0] && la[1] != lb[1] {
                    assert_eq!(c.pi[(a, b)], 0.0);
                }
            }
        }
        assert!(c.row_sum_error() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one_and_chain_is_irreducible() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let c = build_transition_matrix(&g, &grid, &positive_utility(), Temperature::Finite(1.0), SPECTRAL_CAP).unwrap();
        assert!(c.row_sum_error() < 1e-12);
        assert!(c.power_is_positive(2));
        assert!(!c.power_is_positive(1));
    }

    #[test]
    fn cap_is_enforced() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 10).unwrap();
        assert_eq!(
            build_transition_matrix(&g, &grid, &UtilitySpec::TotalThroughput, Temperature::Finite(1.0), 50).unwrap_err(),
            ChainError::CapExceeded { size: 100, cap: 50 }
        );
    }

    #[test]
    fn stationary_extremes() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let u = UtilitySpec::TotalThroughput;
        let uni = stationary_distribution(&g, &grid, &u, Temperature::Finite(0.0)).unwrap();
        assert!(uni.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
        let inf = stationary_distribution(&g, &grid, &u, Temperature::Infinite).unwrap();
        let (_, best) = brute_force_optimum(&g, &grid, &u, SPECTRAL_CAP).unwrap();
        assert_eq!(best.len(), 1);
        assert_eq!(inf[best[0]], 1.0);
        assert_eq!(inf.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn fixed_point_holds() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        for beta in [0.0, 0.5, 5.0, 50.0] {
            let c = build_transition_matrix(&g, &grid, &UtilitySpec::ProportionalFairness, Temperature::Finite(beta), SPECTRAL_CAP).unwrap();
            assert!(c.fixed_point_residual() <= 1e-8);
        }
    }

    #[test]
    fn moments_at_infinity_and_constant_utility() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let l = UtilityLandscape::new(&g, &grid, &UtilitySpec::TotalThroughput, SPECTRAL_CAP).unwrap();
        assert_eq!(l.mean(Temperature::Infinite), l.best());
        assert_eq!(l.variance(Temperature::Infinite), 0.0);
        assert_eq!(l.variance_bound(Temperature::Infinite), 0.0);
        let flat = UtilitySpec::CustomTable(TableUtility::new(vec![], vec![3.0], Combine::Min).unwrap());
        let l = UtilityLandscape::new(&g, &grid, &flat, SPECTRAL_CAP).unwrap();
        for b in [0.0, 1.0, 10.0] {
            assert_eq!(l.variance(Temperature::Finite(b)), 0.0);
        }
        assert_eq!(l.optimal_set().len(), 9);
        assert_eq!(l.beta_for_variance(0.0).unwrap(), Temperature::Finite(0.0));
    }

    #[test]
    fn mean_increases_on_small_instance() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 2).unwrap();
        let l = UtilityLandscape::new(&g, &grid, &UtilitySpec::TotalThroughput, SPECTRAL_CAP).unwrap();
        let means: Vec<f64> = [0.1, 1.0, 10.0, 100.0].iter().map(|&b| l.mean(Temperature::Finite(b))).collect();
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }

    #[test]
    fn threshold_solvers() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let l = UtilityLandscape::new(&g, &grid, &UtilitySpec::TotalThroughput, SPECTRAL_CAP).unwrap();
        let target = l.mean(Temperature::Finite(5.0));
        let b = l.beta_for_mean(target).unwrap();
        assert!((b - 5.0).abs() < 1e-6);
        assert!(l.beta_for_mean(l.mean(Temperature::Finite(0.0))).is_err());
        assert!(l.beta_for_mean(l.best()).is_err());
        let a = l.beta_for_mean(l.best() - 1e-3).unwrap();
        let c = l.beta_for_mean(l.best() - 1e-6).unwrap();
        assert!(c > a);

        let v0 = l.variance_bound(Temperature::Finite(0.0));
        assert_eq!(l.beta_for_variance(v0).unwrap(), Temperature::Finite(0.0));
        assert_eq!(l.beta_for_variance(v0 * 2.0).unwrap(), Temperature::Finite(0.0));
        assert_eq!(l.beta_for_variance(0.0).unwrap(), Temperature::Infinite);
        let half = l.variance_bound(Temperature::Finite(10.0)) / 2.0;
        match l.beta_for_variance(half).unwrap() {
            Temperature::Finite(b) => assert!(b > 10.0),
            Temperature::Infinite => panic!("finite target"),
        }
        assert!(l.beta_for_variance(-1.0).is_err());
    }

    #[test]
    fn closed_form_threshold_agrees_with_bisection() {
        let g = two_link();
        let grid = PowerGrid::uniform(&[1.0, 1.0], 3).unwrap();
        let l = UtilityLandscape::new(&g, &grid, &UtilitySpec::TotalThroughput, SPECTRAL_CAP).unwrap();
        let delta = l.variance_bound(Temperature::Finite(3.0));
        let check = l.variance_threshold_check(delta).unwrap();
        let w = check.closed_form_prob_optimal.unwrap();
        assert!((w - check.prob_optimal_at_beta).abs() < 1e-9);
        // The published zero-beta threshold sits above the bound's range.
        assert!(check.printed_threshold > check.attainable_threshold);
    }

    #[test]
    fn tv_distance_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_link_mixes_in_one_step() {
        let g = GainMatrix::new(vec![vec![1.0]], vec![0.1], vec![1.0]).unwrap();
        let grid = PowerGrid::uniform(&[1.0], 4).unwrap();
        let c = build_transition_matrix(&g, &grid, &positive_utility(), Temperature::Finite(1.0), SPECTRAL_CAP).unwrap();
        let r = mixing_analysis(&c, &[1.0, 0.0, 0.0, 0.0], 5).unwrap();
        assert!(r.lambda2 < 1e-12);
        assert!(r.tv[1..].iter().all(|&t| t < 1e-15));
        let from_stationary = mixing_analysis(&c, &c.omega.clone(), 5).unwrap();
        assert!(from_stationary.tv.iter().all(|&t| t < 1e-15));
    }

    #[test]
    fn decay_rate_recovers_geometric_sequence() {
        let tv: Vec<f64> = (0..200).map(|k| 0.3 * 0.8f64.powi(k)).collect();
        let r = decay_rate(&tv, 1e-13).unwrap();
        assert!((r - 0.8).abs() < 1e-9);
        assert_eq!(decay_rate(&[0.5, 0.1], 1e-13), None);
    }
}
