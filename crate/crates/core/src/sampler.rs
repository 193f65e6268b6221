//! Per-link Gibbs update kernels.
//!
//! A link resamples its power from a distribution proportional to
//! `exp(-beta / U)` over its candidate powers, where `U` is the system
//! utility the link predicts for each candidate. Weights are handled in the
//! log domain with max-subtraction; `beta = inf` is kept symbolic and means
//! "uniform over the argmax candidates".

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, Announcement, ChannelError};
use crate::utility::{UtilityError, UtilitySpec};

/// Smallest quadrature grid accepted for continuous updates.
pub const MIN_QUADRATURE_POINTS: usize = 16;
/// Quadrature grid used when none is configured.
pub const DEFAULT_QUADRATURE_POINTS: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("temperature must be a nonnegative number, got {0}")]
    InvalidTemperature(f64),
    #[error("continuous update needs at least {MIN_QUADRATURE_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("power grid: {0}")]
    InvalidGrid(String),
    #[error("link {link} is not in its own neighborhood")]
    MissingSelf { link: usize },
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Inverse temperature. Serialized as a plain float, with `inf` for the
/// symbolic limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Temperature {
    Finite(f64),
    Infinite,
}

impl Temperature {
    pub fn new(beta: f64) -> Result<Self, SamplerError> {
        if beta == f64::INFINITY {
            Ok(Temperature::Infinite)
        } else if beta.is_finite() && beta >= 0.0 {
            Ok(Temperature::Finite(beta))
        } else {
            Err(SamplerError::InvalidTemperature(beta))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Temperature::Finite(b) => b,
            Temperature::Infinite => f64::INFINITY,
        }
    }
}

impl TryFrom<f64> for Temperature {
    type Error = SamplerError;
    fn try_from(beta: f64) -> Result<Self, Self::Error> {
        Temperature::new(beta)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.value()
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Temperature::Finite(b) => write!(f, "{b}"),
            Temperature::Infinite => f.write_str("inf"),
        }
    }
}

/// Per-link discrete power levels `{0, dP, 2 dP, ..., P_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    max_power: Vec<f64>,
    levels: Vec<usize>,
}

impl PowerGrid {
    pub fn new(max_power: &[f64], levels: &[usize]) -> Result<Self, SamplerError> {
        if max_power.len() != levels.len() {
            return Err(SamplerError::InvalidGrid(format!(
                "{} links but {} level counts",
                max_power.len(),
                levels.len()
            )));
        }
        if let Some(l) = levels.iter().find(|&&l| l < 2) {
            return Err(SamplerError::InvalidGrid(format!("level count {l} < 2")));
        }
        Ok(Self {
            max_power: max_power.to_vec(),
            levels: levels.to_vec(),
        })
    }

    pub fn uniform(max_power: &[f64], levels: usize) -> Result<Self, SamplerError> {
        Self::new(max_power, &vec![levels; max_power.len()])
    }

    pub fn links(&self) -> usize {
        self.levels.len()
    }

    pub fn level_count(&self, link: usize) -> usize {
        self.levels[link]
    }

    pub fn level_counts(&self) -> &[usize] {
        &self.levels
    }

    pub fn step(&self, link: usize) -> f64 {
        self.max_power[link] / (self.levels[link] - 1) as f64
    }

    /// Power of level `k` on `link`; the top level is exactly `P_max`.
    pub fn power(&self, link: usize, k: usize) -> f64 {
        let top = self.levels[link] - 1;
        if k == top {
            self.max_power[link]
        } else {
            self.max_power[link] * k as f64 / top as f64
        }
    }

    pub fn powers(&self, link: usize) -> Vec<f64> {
        (0..self.levels[link]).map(|k| self.power(link, k)).collect()
    }

    /// Level index of a power on the grid (nearest level).
    pub fn level_of(&self, link: usize, power: f64) -> usize {
        let k = (power / self.step(link)).round();
        (k.max(0.0) as usize).min(self.levels[link] - 1)
    }
}

/// `-beta / U` as a log-weight. `U = 0` maps to `-inf` for `beta > 0`;
/// `beta = 0` gives weight one everywhere.
pub fn gibbs_log_weight(utility: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else if utility == 0.0 {
        f64::NEG_INFINITY
    } else {
        -beta / utility
    }
}

/// Normalizes log-weights with max-subtraction. All-zero weights fall back
/// to uniform.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / log_weights.len() as f64; log_weights.len()];
    }
    let w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Indices attaining the maximum, by exact float equality.
pub fn argmax_set(values: &[f64]) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&k| values[k] == max).collect()
}

/// Probability vector proportional to `exp(-beta / U)` over `utilities`.
pub fn boltzmann(utilities: &[f64], beta: Temperature) -> Vec<f64> {
    match beta {
        Temperature::Infinite => {
            let best = argmax_set(utilities);
            let mass = 1.0 / best.len() as f64;
            let mut p = vec![0.0; utilities.len()];
            for k in best {
                p[k] = mass;
            }
            p
        }
        Temperature::Finite(b) => {
            let lw: Vec<f64> = utilities.iter().map(|&u| gibbs_log_weight(u, b)).collect();
            normalize_log_weights(&lw)
        }
    }
}

/// Tabulated density on a uniform grid with its trapezoid CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    points: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl PiecewiseDensity {
    fn from_weights(points: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(points.len());
        cdf.push(0.0);
        for k in 1..points.len() {
            let h = points[k] - points[k - 1];
            let prev = cdf[k - 1];
            cdf.push(prev + 0.5 * h * (weights[k - 1] + weights[k]));
        }
        let z = *cdf.last().expect("grid has points");
        let density = weights.iter().map(|w| w / z).collect();
        let cdf = cdf.iter().map(|c| c / z).collect();
        Self {
            points,
            density,
            cdf,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// CDF at the grid points; starts at 0 and ends at 1.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Trapezoid integral of the tabulated density.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Inverse CDF with linear interpolation between grid points.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = *self.cdf.last().expect("grid has points");
        let target = u.clamp(0.0, 1.0) * total;
        let n = self.points.len();
        let k = self
            .cdf
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(n - 2);
        let width = self.cdf[k + 1] - self.cdf[k];
        let frac = if width > 0.0 {
            ((target - self.cdf[k]) / width).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.points[k] + frac * (self.points[k + 1] - self.points[k])
    }
}

/// Distribution a link draws its next power from.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateDistribution {
    Discrete { support: Vec<f64>, probs: Vec<f64> },
    Continuous(PiecewiseDensity),
}

impl UpdateDistribution {
    /// Total probability (discrete) or integral of the density (continuous).
    pub fn total_mass(&self) -> f64 {
        match self {
            UpdateDistribution::Discrete { probs, .. } => probs.iter().sum(),
            UpdateDistribution::Continuous(d) => d.integral(),
        }
    }

    /// Categorical draw or inverse-CDF draw; deterministic given the rng.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            UpdateDistribution::Discrete { support, probs } => {
                let idx = WeightedIndex::new(probs)
                    .expect("normalized distribution has positive mass")
                    .sample(rng);
                support[idx]
            }
            UpdateDistribution::Continuous(d) => d.quantile(rng.random::<f64>()),
        }
    }
}

/// Discrete update from candidate utilities (one per level).
pub fn discrete_from_utilities(
    levels: &[f64],
    utilities: &[f64],
    beta: Temperature,
) -> UpdateDistribution {
    debug_assert_eq!(levels.len(), utilities.len());
    UpdateDistribution::Discrete {
        support: levels.to_vec(),
        probs: boltzmann(utilities, beta),
    }
}

/// Discrete update: `candidate_sinrs[k]` is the SINR vector the link
/// predicts if it picks `levels[k]`.
pub fn discrete_update(
    levels: &[f64],
    candidate_sinrs: &[Vec<f64>],
    utility: &UtilitySpec,
    beta: Temperature,
) -> Result<UpdateDistribution, SamplerError> {
    if levels.len() != candidate_sinrs.len() {
        return Err(SamplerError::InvalidGrid(format!(
            "{} levels but {} candidate SINR vectors",
            levels.len(),
            candidate_sinrs.len()
        )));
    }
    let utilities = candidate_sinrs
        .iter()
        .map(|g| utility.evaluate_all(g))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(discrete_from_utilities(levels, &utilities, beta))
}

/// Uniform grid of `points` nodes over `[0, max_power]`.
pub fn quadrature_grid(max_power: f64, points: usize) -> Vec<f64> {
    let last = points - 1;
    (0..points)
        .map(|k| {
            if k == last {
                max_power
            } else {
                max_power * k as f64 / last as f64
            }
        })
        .collect()
}

/// Continuous update from a candidate-power to utility map.
///
/// The weight `exp(-beta / U)` is tabulated on a uniform grid and normalized
/// by the trapezoid rule. At `beta = inf` the result is uniform over the
/// argmax grid nodes.
pub fn continuous_from_utility_fn<F>(
    max_power: f64,
    points: usize,
    beta: Temperature,
    mut utility_at: F,
) -> Result<UpdateDistribution, SamplerError>
where
    F: FnMut(f64) -> Result<f64, SamplerError>,
{
    if points < MIN_QUADRATURE_POINTS {
        return Err(SamplerError::TooFewPoints(points));
    }
    let grid = quadrature_grid(max_power, points);
    let utilities = grid
        .iter()
        .map(|&p| utility_at(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match beta {
        Temperature::Infinite => {
            let best = argmax_set(&utilities);
            let mass = 1.0 / best.len() as f64;
            UpdateDistribution::Discrete {
                support: best.iter().map(|&k| grid[k]).collect(),
                probs: vec![mass; best.len()],
            }
        }
        Temperature::Finite(b) => {
            let lw: Vec<f64> = utilities.iter().map(|&u| gibbs_log_weight(u, b)).collect();
            let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights = if max == f64::NEG_INFINITY {
                vec![1.0; lw.len()]
            } else {
                lw.iter().map(|&l| (l - max).exp()).collect()
            };
            UpdateDistribution::Continuous(PiecewiseDensity::from_weights(grid, weights))
        }
    })
}

/// Continuous update where `sinr_fn` maps a candidate power to the full
/// predicted SINR vector.
pub fn continuous_update<F>(
    max_power: f64,
    points: usize,
    beta: Temperature,
    utility: &UtilitySpec,
    mut sinr_fn: F,
) -> Result<UpdateDistribution, SamplerError>
where
    F: FnMut(f64) -> Result<Vec<f64>, SamplerError>,
{
    continuous_from_utility_fn(max_power, points, beta, |p| {
        Ok(utility.evaluate_all(&sinr_fn(p)?)?)
    })
}

/// SINR estimate from possibly stale announcements; the same arithmetic as
/// the fresh incremental update.
pub fn iglad_sinr_estimate(
    i: usize,
    p_candidate: f64,
    p_old: f64,
    last_announced: &[Announcement],
    gain_row: &[f64],
) -> Result<Vec<f64>, ChannelError> {
    channel::sinr_after_own_change(i, p_candidate, p_old, last_announced, gain_row)
}

/// What a transmitter knows about one link when predicting SINRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownLink {
    pub link: usize,
    pub announcement: Announcement,
    /// Interference-plus-noise to assume when the announcement cannot supply
    /// it (zero SINR or zero power).
    pub fallback_interference: f64,
    /// Lower bound for reconstructed interference-plus-noise.
    pub noise: f64,
}

/// A transmitter's local knowledge: its own power and gain row plus the
/// links it hears (always including itself).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    pub link: usize,
    pub own_power: f64,
    pub gain_row: Vec<f64>,
    pub known: Vec<KnownLink>,
}

impl LocalView {
    /// Predicted SINR of `entry` if this link moves to `p_candidate`.
    ///
    /// Uses the incremental formula whenever it is defined. Otherwise a
    /// silent link stays at zero, and a zero own power rebuilds the own SINR
    /// from the fallback interference. Reconstructed interference never
    /// drops below the noise floor.
    pub fn estimate(&self, entry: &KnownLink, p_candidate: f64) -> f64 {
        let a = entry.announcement;
        let delta = p_candidate - self.own_power;
        if delta == 0.0 {
            return a.gamma;
        }
        if entry.link == self.link {
            if self.own_power > 0.0 {
                return a.gamma * p_candidate / self.own_power;
            }
            return self.gain_row[self.link] * p_candidate / entry.fallback_interference;
        }
        let s = a.signal_power;
        if s == 0.0 {
            return 0.0;
        }
        let base = if a.gamma > 0.0 {
            s / a.gamma
        } else {
            entry.fallback_interference
        };
        let denom = base + self.gain_row[entry.link] * delta;
        if denom < entry.noise {
            s / entry.noise
        } else {
            s / denom
        }
    }

    /// `(link, predicted SINR)` for every known link.
    pub fn candidate_sinrs(&self, p_candidate: f64) -> Vec<(usize, f64)> {
        self.known
            .iter()
            .map(|e| (e.link, self.estimate(e, p_candidate)))
            .collect()
    }

    /// The view restricted to a neighborhood.
    pub fn restricted(&self, neighborhood: &[usize]) -> Result<LocalView, SamplerError> {
        if !neighborhood.contains(&self.link) {
            return Err(SamplerError::MissingSelf { link: self.link });
        }
        Ok(LocalView {
            link: self.link,
            own_power: self.own_power,
            gain_row: self.gain_row.clone(),
            known: self
                .known
                .iter()
                .filter(|e| neighborhood.contains(&e.link))
                .copied()
                .collect(),
        })
    }

    fn utility_at(&self, utility: &UtilitySpec, p: f64) -> Result<f64, SamplerError> {
        Ok(utility.evaluate(&self.candidate_sinrs(p))?)
    }
}

/// Discrete update driven by a local view.
pub fn local_discrete_update(
    view: &LocalView,
    levels: &[f64],
    utility: &UtilitySpec,
    beta: Temperature,
) -> Result<UpdateDistribution, SamplerError> {
    let utilities = levels
        .iter()
        .map(|&p| view.utility_at(utility, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(discrete_from_utilities(levels, &utilities, beta))
}

/// Continuous update with SINRs estimated from (possibly stale)
/// announcements.
pub fn iglad_update(
    view: &LocalView,
    max_power: f64,
    points: usize,
    utility: &UtilitySpec,
    beta: Temperature,
) -> Result<UpdateDistribution, SamplerError> {
    continuous_from_utility_fn(max_power, points, beta, |p| view.utility_at(utility, p))
}

/// As [`iglad_update`], with the utility evaluated only over `neighborhood`.
pub fn niglad_update(
    view: &LocalView,
    neighborhood: &[usize],
    max_power: f64,
    points: usize,
    utility: &UtilitySpec,
    beta: Temperature,
) -> Result<UpdateDistribution, SamplerError> {
    let local = view.restricted(neighborhood)?;
    iglad_update(&local, max_power, points, utility, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{received_signal_power, sinr, GainMatrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn finite(b: f64) -> Temperature {
        Temperature::Finite(b)
    }

    fn discrete_probs(d: &UpdateDistribution) -> &[f64] {
        match d {
            UpdateDistribution::Discrete { probs, .. } => probs,
            _ => panic!("expected discrete"),
        }
    }

    fn density(d: &UpdateDistribution) -> &PiecewiseDensity {
        match d {
            UpdateDistribution::Continuous(p) => p,
            _ => panic!("expected continuous"),
        }
    }

    fn gains3() -> GainMatrix {
        GainMatrix::new(
            vec![
                vec![1.0, 0.3, 0.2],
                vec![0.1, 0.8, 0.25],
                vec![0.15, 0.05, 0.9],
            ],
            vec![0.05, 0.1, 0.08],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    /// Fresh view: announcements are the true current SINRs and powers.
    fn fresh_view(g: &GainMatrix, p: &[f64], i: usize) -> LocalView {
        let gamma = sinr(g, p).unwrap();
        let s = received_signal_power(g, p).unwrap();
        LocalView {
            link: i,
            own_power: p[i],
            gain_row: g.row(i).to_vec(),
            known: (0..p.len())
                .map(|j| KnownLink {
                    link: j,
                    announcement: Announcement {
                        gamma: gamma[j],
                        signal_power: s[j],
                    },
                    fallback_interference: g.interference(p, j),
                    noise: g.noise()[j],
                })
                .collect(),
        }
    }

    #[test]
    fn gibbs_weight_examples() {
        assert_eq!(gibbs_log_weight(3.0, 0.0), 0.0);
        assert_eq!(gibbs_log_weight(0.0, 1.0).exp(), 0.0);
        assert_eq!(gibbs_log_weight(4.0, 2.0), -0.5);
    }

    #[test]
    fn temperature_parsing() {
        assert_eq!(Temperature::new(f64::INFINITY), Ok(Temperature::Infinite));
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::Infinite.to_string(), "inf");
    }

    #[test]
    fn grid_levels_end_at_max_power() {
        let g = PowerGrid::uniform(&[1e-3, 3.0], 4).unwrap();
        assert_eq!(g.powers(0).last().copied(), Some(1e-3));
        assert_eq!(g.powers(1), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.level_of(1, 2.0), 2);
        assert!(PowerGrid::uniform(&[1.0], 1).is_err());
    }

    #[test]
    fn discrete_symmetry_and_zero_beta() {
        let d = discrete_from_utilities(&[0.0, 1.0], &[2.0, 2.0], finite(3.0));
        assert_eq!(discrete_probs(&d), &[0.5, 0.5]);
        let d = discrete_from_utilities(&[0.0, 1.0, 2.0], &[0.0, 1.0, 9.0], finite(0.0));
        for p in discrete_probs(&d) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_three_levels_hand_checked() {
        let d = discrete_from_utilities(&[0.0, 1.0, 2.0], &[1.0, 2.0, 4.0], finite(1.0));
        let w = [(-1.0f64).exp(), (-0.5f64).exp(), (-0.25f64).exp()];
        let z: f64 = w.iter().sum();
        for (p, wk) in discrete_probs(&d).iter().zip(w) {
            assert!((p - wk / z).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_utilities_fall_back_to_uniform() {
        let d = discrete_from_utilities(&[0.0, 1.0], &[0.0, 0.0], finite(5.0));
        assert_eq!(discrete_probs(&d), &[0.5, 0.5]);
    }

    #[test]
    fn infinite_beta_is_uniform_over_argmax() {
        let d = discrete_from_utilities(&[0.0, 1.0, 2.0, 3.0], &[1.0, 5.0, 2.0, 5.0], Temperature::Infinite);
        assert_eq!(discrete_probs(&d), &[0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn large_beta_does_not_underflow() {
        let d = discrete_from_utilities(&[0.0, 1.0], &[1.0, 1.001], finite(1e6));
        let p = discrete_probs(&d);
        assert!(p[1] > 0.99 && (p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_zero_beta_is_uniform_density() {
        let d = continuous_from_utility_fn(2.0, 64, finite(0.0), |p| Ok(p)).unwrap();
        let dens = density(&d);
        for &f in dens.density() {
            assert!((f - 0.5).abs() < 1e-12);
        }
        assert!((dens.quantile(0.25) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn continuous_rejects_small_grids() {
        assert_eq!(
            continuous_from_utility_fn(1.0, 8, finite(1.0), |_| Ok(1.0)).unwrap_err(),
            SamplerError::TooFewPoints(8)
        );
    }

    /// Exact TV distance between two piecewise-linear-CDF distributions,
    /// evaluated on the union of their breakpoints.
    fn tv_piecewise(a: &PiecewiseDensity, b: &PiecewiseDensity) -> f64 {
        let mut xs: Vec<f64> = a.points().iter().chain(b.points()).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let cdf_at = |d: &PiecewiseDensity, x: f64| -> f64 {
            let p = d.points();
            let k = p.partition_point(|&v| v <= x).saturating_sub(1).min(p.len() - 2);
            let t = (x - p[k]) / (p[k + 1] - p[k]);
            d.cdf()[k] + t * (d.cdf()[k + 1] - d.cdf()[k])
        };
        xs.windows(2)
            .map(|w| {
                let ma = cdf_at(a, w[1]) - cdf_at(a, w[0]);
                let mb = cdf_at(b, w[1]) - cdf_at(b, w[0]);
                (ma - mb).abs()
            })
            .sum::<f64>()
            / 2.0
    }

    #[test]
    fn continuous_refinement_changes_little() {
        let g = GainMatrix::new(vec![vec![1.0, 0.4], vec![0.3, 1.0]], vec![0.1, 0.1], vec![1.0, 1.0]).unwrap();
        let p = [0.6, 0.7];
        let u = UtilitySpec::TotalThroughput;
        let view = fresh_view(&g, &p, 0);
        let coarse = iglad_update(&view, 1.0, 512, &u, finite(3.0)).unwrap();
        let fine = iglad_update(&view, 1.0, 2048, &u, finite(3.0)).unwrap();
        let tv = tv_piecewise(density(&coarse), density(&fine));
        assert!(tv < 1e-3, "tv = {tv}");
    }

    #[test]
    fn fresh_iglad_matches_direct_continuous_update() {
        let g = gains3();
        let p = [0.4, 0.7, 0.2];
        let u = UtilitySpec::ProportionalFairness;
        for i in 0..3 {
            let view = fresh_view(&g, &p, i);
            let via_view = iglad_update(&view, 1.0, 128, &u, finite(2.0)).unwrap();
            let direct = continuous_update(1.0, 128, finite(2.0), &u, |q| {
                let gamma = sinr(&g, &p).unwrap();
                let s = received_signal_power(&g, &p).unwrap();
                let ann: Vec<_> = gamma
                    .iter()
                    .zip(&s)
                    .map(|(&gamma, &signal_power)| Announcement { gamma, signal_power })
                    .collect();
                Ok(channel::sinr_after_own_change(i, q, p[i], &ann, g.row(i))?)
            })
            .unwrap();
            let (a, b) = (density(&via_view), density(&direct));
            for (x, y) in a.density().iter().zip(b.density()) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_beta_ignores_staleness() {
        let g = gains3();
        let mut view = fresh_view(&g, &[0.4, 0.7, 0.2], 1);
        view.known[0].announcement.gamma *= 3.0;
        let d = iglad_update(&view, 1.0, 32, &UtilitySpec::TotalThroughput, finite(0.0)).unwrap();
        for &f in density(&d).density() {
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_estimate_misses_exactly_the_unannounced_change() {
        let g = gains3();
        // Link 0 announced under p_then; link 2 has since moved, link 0 did not re-announce.
        let p_then = [0.5, 0.6, 0.3];
        let p_now = [0.5, 0.6, 0.9];
        let i = 1;
        let gamma_then = sinr(&g, &p_then).unwrap();
        let s_now = received_signal_power(&g, &p_now).unwrap();
        let gamma_now = sinr(&g, &p_now).unwrap();
        let announced = vec![
            Announcement { gamma: gamma_then[0], signal_power: s_now[0] },
            Announcement { gamma: gamma_now[1], signal_power: s_now[1] },
            Announcement { gamma: gamma_now[2], signal_power: s_now[2] },
        ];
        let p_candidate = 0.2;
        let est = iglad_sinr_estimate(i, p_candidate, p_now[i], &announced, g.row(i)).unwrap();
        let mut p_true = p_now;
        p_true[i] = p_candidate;
        let truth = sinr(&g, &p_true).unwrap();
        // Interference bookkeeping at receiver 0.
        let missed = g.gain(2, 0) * (p_now[2] - p_then[2]);
        let lhs = s_now[0] / est[0] + missed;
        let rhs = s_now[0] / truth[0];
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        for j in 1..3 {
            assert!((est[j] - truth[j]).abs() <= 1e-12 * truth[j]);
        }
    }

    #[test]
    fn full_neighborhood_equals_iglad() {
        let g = gains3();
        let view = fresh_view(&g, &[0.3, 0.3, 0.8], 2);
        let u = UtilitySpec::TotalThroughput;
        let a = iglad_update(&view, 1.0, 64, &u, finite(1.5)).unwrap();
        let b = niglad_update(&view, &[0, 1, 2], 1.0, 64, &u, finite(1.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn own_only_neighborhood_prefers_max_power() {
        let g = gains3();
        let view = fresh_view(&g, &[0.3, 0.3, 0.8], 0);
        let d = niglad_update(&view, &[0], 1.0, 64, &UtilitySpec::TotalThroughput, finite(2.0)).unwrap();
        let dens = density(&d).density();
        let top = dens.iter().copied().fold(0.0, f64::max);
        assert_eq!(*dens.last().unwrap(), top);
        assert!(niglad_update(&view, &[1, 2], 1.0, 64, &UtilitySpec::TotalThroughput, finite(2.0)).is_err());
    }

    #[test]
    fn neighborhood_update_matches_direct_formula() {
        let g = GainMatrix::new(
            vec![
                vec![1.0, 0.2, 0.1, 0.05],
                vec![0.3, 0.9, 0.2, 0.1],
                vec![0.1, 0.1, 0.7, 0.3],
                vec![0.05, 0.2, 0.1, 1.1],
            ],
            vec![0.1; 4],
            vec![1.0; 4],
        )
        .unwrap();
        let p = [0.5, 0.4, 0.3, 0.6];
        let view = fresh_view(&g, &p, 1);
        let hood = [1usize, 3];
        let beta = 2.0;
        let n = 40;
        let d = niglad_update(&view, &hood, 1.0, n, &UtilitySpec::ProportionalFairness, finite(beta)).unwrap();
        // Independent evaluation: direct SINR on the modified vector, product over the neighborhood.
        let h = 1.0 / (n - 1) as f64;
        let w: Vec<f64> = (0..n)
            .map(|k| {
                let mut q = p;
                q[1] = k as f64 * h;
                let gamma = sinr(&g, &q).unwrap();
                let u = gamma[1] * gamma[3];
                if u == 0.0 { 0.0 } else { (-beta / u).exp() }
            })
            .collect();
        let z: f64 = w.windows(2).map(|x| 0.5 * h * (x[0] + x[1])).sum();
        for (got, wk) in density(&d).density().iter().zip(&w) {
            assert!((got - wk / z).abs() <= 1e-9 * (wk / z).max(1.0), "{got} vs {}", wk / z);
        }
    }

    #[test]
    fn silent_and_zero_power_links_use_fallbacks() {
        let g = gains3();
        let p = [0.0, 0.5, 0.0];
        let mut view = fresh_view(&g, &p, 0);
        // Link 0 at zero power: rebuild own SINR from the fallback interference.
        let est = view.candidate_sinrs(0.4);
        let mut q = p;
        q[0] = 0.4;
        let truth = sinr(&g, &q).unwrap();
        for (j, e) in est {
            assert!((e - truth[j]).abs() <= 1e-12 * truth[j].max(1e-300), "link {j}");
        }
        // Stale base that would make interference negative is clamped to noise.
        view.own_power = 0.9;
        view.known[1].announcement.gamma = 1e6;
        let entry = view.known[1];
        let e = view.estimate(&entry, 0.0);
        assert_eq!(e, entry.announcement.signal_power / entry.noise);
    }

    #[test]
    fn sample_point_mass_and_determinism() {
        let d = UpdateDistribution::Discrete { support: vec![1.0, 2.0, 3.0], probs: vec![0.0, 1.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| d.sample(&mut rng) == 2.0));
        let c = continuous_from_utility_fn(1.0, 32, finite(1.0), |p| Ok(1.0 + p)).unwrap();
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| c.sample(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn categorical_frequencies_within_three_sigma() {
        let probs = vec![0.2, 0.5, 0.3];
        let d = UpdateDistribution::Discrete { support: vec![0.0, 1.0, 2.0], probs: probs.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[d.sample(&mut rng) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma);
        }
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(
            u in prop::collection::vec(0.0f64..50.0, 2..12),
            beta in 0.0f64..500.0,
        ) {
            let levels: Vec<f64> = (0..u.len()).map(|k| k as f64).collect();
            let d = discrete_from_utilities(&levels, &u, finite(beta));
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
            let c = continuous_from_utility_fn(1.0, 16 + u.len(), finite(beta), |p| Ok(u[(p * (u.len() - 1) as f64) as usize])).unwrap();
            prop_assert!((c.total_mass() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn scaling_utility_and_beta_together_is_invariant(
            u in prop::collection::vec(0.01f64..50.0, 2..10),
            beta in 0.0f64..100.0,
            shift in -8i32..8,
        ) {
            // Powers of two scale without rounding, so equality is exact.
            let c = 2f64.powi(shift);
            let scaled: Vec<f64> = u.iter().map(|x| x * c).collect();
            prop_assert_eq!(boltzmann(&u, finite(beta)), boltzmann(&scaled, finite(beta * c)));
        }

        #[test]
        fn argmax_mass_grows_with_beta(u in prop::collection::vec(0.01f64..50.0, 2..10)) {
            let best = argmax_set(&u);
            let mut prev = 0.0;
            for beta in [0.0, 0.1, 0.5, 1.0, 5.0, 20.0, 100.0, 1e3] {
                let p = boltzmann(&u, finite(beta));
                let mass: f64 = best.iter().map(|&k| p[k]).sum();
                prop_assert!(mass >= prev - 1e-12);
                prev = mass;
            }
        }
    }
}
