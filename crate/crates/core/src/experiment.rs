//! Config-driven experiments: cells of (variant, seed, beta, gamma_bar),
//! CSV outputs and summaries.
//!
//! Units in the config file are mW, µW and dB; everything is converted to
//! Watts and linear ratios here and nowhere else.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{self, ChainError, ChainModel, UtilityLandscape, STATIONARY_CAP};
use crate::channel::{self, ChannelError, GainMatrix};
use crate::engine::{self, EngineError, Horizon, Messaging, PowerSpace, SimConfig, SimTrace, TraceSummary};
use crate::sampler::{PowerGrid, Temperature, DEFAULT_QUADRATURE_POINTS};
use crate::utility::UtilitySpec;

pub const SUMMARY_SCHEMA: &str = "# schema: glad-summary v1";
pub const ANALYSIS_SCHEMA: &str = "# schema: glad-analysis v1";
pub const MIXING_SCHEMA: &str = "# schema: glad-mixing v1";
pub const COMPARE_SCHEMA: &str = "# schema: glad-compare v1";
pub const OPTIMUM_SCHEMA: &str = "# schema: glad-optimum v1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn field_error(field: &'static str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field,
        message: message.into(),
    }
}

/// A value or a list of values; always serialized as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    GladDiscrete,
    GladContinuous,
    Iglad,
    Niglad,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::GladDiscrete => "glad-discrete",
            Variant::GladContinuous => "glad-continuous",
            Variant::Iglad => "iglad",
            Variant::Niglad => "niglad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySource {
    /// The built-in 8-link benchmark network.
    Table3,
    /// A gain-matrix file (noise and power budgets come from the file).
    File { path: PathBuf },
    /// Random placement with two-ray path loss. Without `seed` each run
    /// seed gets its own topology.
    Generated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        links: usize,
        area_side: f64,
        link_len_min: f64,
        link_len_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Discrete { levels: usize },
    Continuous {
        #[serde(default = "default_points")]
        points: usize,
    },
}

fn default_points() -> usize {
    DEFAULT_QUADRATURE_POINTS
}

fn default_noise_uw() -> f64 {
    0.1
}

fn default_max_power_mw() -> f64 {
    1.0
}

fn default_rate() -> f64 {
    1.0
}

fn default_tail() -> f64 {
    0.5
}

fn default_one() -> u64 {
    1
}

fn default_cap() -> usize {
    chain::SPECTRAL_CAP
}

fn default_mixing_steps() -> usize {
    200
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "variant", deserialize_with = "one_or_many")]
    pub variants: Vec<Variant>,
    #[serde(deserialize_with = "one_or_many")]
    pub beta: Vec<Temperature>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub gamma_bar_db: Vec<f64>,
    /// Number of power-update events per run.
    pub horizon: u64,
    #[serde(default = "default_seeds", deserialize_with = "one_or_many")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_one")]
    pub record_every: u64,
    #[serde(default)]
    pub per_link_columns: bool,
    /// Largest state space for transition-matrix work.
    #[serde(default = "default_cap")]
    pub chain_cap: usize,
    #[serde(default = "default_mixing_steps")]
    pub mixing_steps: usize,
    #[serde(default = "default_noise_uw")]
    pub noise_uw: f64,
    #[serde(default = "default_max_power_mw")]
    pub max_power_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctrl_power_mw: Option<f64>,
    pub topology: TopologySource,
    pub grid: GridSpec,
    pub utility: UtilitySpec,
}

/// dB to linear; `-inf` maps to 0.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let c: Self = toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Reads a config file; a relative topology path is taken relative to
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c = Self::from_toml_str(&text)?;
        if let TopologySource::File { path: p } = &mut c.topology {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.variants.is_empty() {
            return Err(field_error("variant", "at least one variant is required"));
        }
        if self.beta.is_empty() {
            return Err(field_error("beta", "at least one value is required"));
        }
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "at least one seed is required"));
        }
        if self.variants.contains(&Variant::Niglad) && self.gamma_bar_db.is_empty() {
            return Err(field_error("gamma_bar_db", "niglad requires a threshold"));
        }
        if let Some(g) = self.gamma_bar_db.iter().find(|g| g.is_nan() || **g == f64::INFINITY) {
            return Err(field_error("gamma_bar_db", format!("{g} is not a usable threshold")));
        }
        for v in &self.variants {
            match (v, &self.grid) {
                (Variant::GladDiscrete, GridSpec::Continuous { .. }) => {
                    return Err(field_error("grid", "glad-discrete needs a discrete grid"))
                }
                (Variant::GladContinuous, GridSpec::Discrete { .. }) => {
                    return Err(field_error("grid", "glad-continuous needs a continuous grid"))
                }
                _ => {}
            }
        }
        match self.grid {
            GridSpec::Discrete { levels } if levels < 2 => {
                return Err(field_error("grid.levels", format!("need at least 2 levels, got {levels}")))
            }
            GridSpec::Continuous { points } if points < crate::sampler::MIN_QUADRATURE_POINTS => {
                return Err(field_error(
                    "grid.points",
                    format!("need at least {} points, got {points}", crate::sampler::MIN_QUADRATURE_POINTS),
                ))
            }
            _ => {}
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(field_error("rate", format!("must be positive, got {}", self.rate)));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(field_error("tail_fraction", format!("must lie in (0, 1], got {}", self.tail_fraction)));
        }
        if self.record_every == 0 {
            return Err(field_error("record_every", "must be at least 1"));
        }
        if !(self.noise_uw > 0.0 && self.noise_uw.is_finite()) {
            return Err(field_error("noise_uw", format!("must be positive, got {}", self.noise_uw)));
        }
        if !(self.max_power_mw > 0.0 && self.max_power_mw.is_finite()) {
            return Err(field_error("max_power_mw", format!("must be positive, got {}", self.max_power_mw)));
        }
        if let Some(c) = self.ctrl_power_mw {
            if !(c > 0.0 && c.is_finite()) {
                return Err(field_error("ctrl_power_mw", format!("must be positive, got {c}")));
            }
        }
        if let TopologySource::Generated {
            links,
            area_side,
            link_len_min,
            link_len_max,
            ..
        } = self.topology
        {
            if links == 0 {
                return Err(field_error("topology.links", "must be at least 1"));
            }
            if !(area_side > 0.0 && link_len_min > 0.0 && link_len_min <= link_len_max) {
                return Err(field_error(
                    "topology",
                    format!("area {area_side} with link length [{link_len_min}, {link_len_max}] is invalid"),
                ));
            }
        }
        self.utility
            .validate()
            .map_err(|e| field_error("utility", e.to_string()))?;
        Ok(())
    }

    fn noise_w(&self) -> f64 {
        self.noise_uw * 1e-6
    }

    fn max_power_w(&self) -> f64 {
        self.max_power_mw * 1e-3
    }

    /// Whether the network depends on the run seed.
    pub fn topology_per_seed(&self) -> bool {
        matches!(self.topology, TopologySource::Generated { seed: None, .. })
    }

    /// Network used by runs with `seed`.
    pub fn gains(&self, seed: u64) -> Result<GainMatrix, ExperimentError> {
        Ok(match &self.topology {
            TopologySource::Table3 => channel::table_iii(self.noise_w(), self.max_power_w()),
            TopologySource::File { path } => GainMatrix::load(path)?,
            TopologySource::Generated {
                seed: fixed,
                links,
                area_side,
                link_len_min,
                link_len_max,
            } => {
                channel::generate_topology(
                    fixed.unwrap_or(seed),
                    *links,
                    *area_side,
                    (*link_len_min, *link_len_max),
                    self.noise_w(),
                    self.max_power_w(),
                )?
                .1
            }
        })
    }

    fn power_space(&self, g: &GainMatrix) -> Result<PowerSpace, ExperimentError> {
        Ok(match self.grid {
            GridSpec::Discrete { levels } => PowerSpace::Discrete(
                PowerGrid::uniform(g.max_power(), levels).map_err(|e| field_error("grid.levels", e.to_string()))?,
            ),
            GridSpec::Continuous { points } => PowerSpace::Continuous { points },
        })
    }

    /// Every (variant, seed, beta, gamma_bar) combination, in output order.
    pub fn cells(&self, seed_offset: u64) -> Vec<Cell> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            let gammas: Vec<Option<f64>> = if variant == Variant::Niglad {
                self.gamma_bar_db.iter().map(|&g| Some(g)).collect()
            } else {
                vec![None]
            };
            for &gamma_bar_db in &gammas {
                for &beta in &self.beta {
                    for &s in &self.seeds {
                        out.push(Cell {
                            variant,
                            seed: s.wrapping_add(seed_offset),
                            beta,
                            gamma_bar_db,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn sim_config(&self, cell: &Cell, g: &GainMatrix) -> Result<SimConfig, ExperimentError> {
        let messaging = match cell.variant {
            Variant::GladDiscrete | Variant::GladContinuous => Messaging::Glad,
            Variant::Iglad => Messaging::Iglad,
            Variant::Niglad => Messaging::Niglad {
                gamma_bar: db_to_linear(cell.gamma_bar_db.unwrap_or(f64::NEG_INFINITY)),
            },
        };
        let mut c = SimConfig::new(messaging, self.power_space(g)?, self.utility.clone(), cell.beta);
        c.rate = self.rate;
        c.horizon = Horizon::Events(self.horizon);
        c.seed = cell.seed;
        c.ctrl_power = self.ctrl_power_mw.map(|p| p * 1e-3);
        c.record_every = self.record_every;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub seed: u64,
    pub beta: Temperature,
    pub gamma_bar_db: Option<f64>,
}

impl Cell {
    fn file_stem(&self) -> String {
        let mut s = format!("trace_{}_s{}_b{}", self.variant.name(), self.seed, self.beta);
        if let Some(g) = self.gamma_bar_db {
            let _ = write!(s, "_g{g}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub summary: TraceSummary,
    /// Best lattice utility of the cell's network, when the grid is discrete
    /// and small enough.
    pub u_star: Option<f64>,
    pub trace: Option<SimTrace>,
}

/// What an experiment wrote and what it had to skip.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Human-readable summary.
    pub text: String,
}

fn optimum(config: &ExperimentConfig, g: &GainMatrix) -> Result<Option<UtilityLandscape>, ExperimentError> {
    let GridSpec::Discrete { levels } = config.grid else {
        return Ok(None);
    };
    let grid = PowerGrid::uniform(g.max_power(), levels).map_err(|e| field_error("grid.levels", e.to_string()))?;
    match UtilityLandscape::new(g, &grid, &config.utility, STATIONARY_CAP.max(config.chain_cap)) {
        Ok(l) => Ok(Some(l)),
        Err(ChainError::CapExceeded { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Runs every cell in parallel. Traces are kept only when `keep_traces`.
pub fn run_cells(config: &ExperimentConfig, seed_offset: u64, keep_traces: bool) -> Result<Vec<CellResult>, ExperimentError> {
    config.validate()?;
    let cells = config.cells(seed_offset);
    cells
        .par_iter()
        .map(|cell| {
            let g = config.gains(cell.seed)?;
            let trace = engine::run(&g, config.sim_config(cell, &g)?)?;
            let u_star = optimum(config, &g)?.map(|l| l.best());
            Ok(CellResult {
                cell: *cell,
                summary: trace.summary(config.tail_fraction),
                u_star,
                trace: keep_traces.then_some(trace),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-cell summary table.
pub fn summary_csv(results: &[CellResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_SCHEMA}");
    let _ = writeln!(
        s,
        "variant,seed,beta,gamma_bar_db,events,tail_mean,tail_variance,u_star,normalized_tail_mean,broadcasts,processed,mean_neighborhood"
    );
    for r in results {
        let m = &r.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell.variant.name(),
            r.cell.seed,
            r.cell.beta,
            opt(r.cell.gamma_bar_db),
            m.events,
            m.tail_mean,
            m.tail_variance,
            opt(r.u_star),
            opt(r.u_star.filter(|u| *u > 0.0).map(|u| m.tail_mean / u)),
            m.broadcasts,
            m.processed,
            m.mean_neighborhood
        );
    }
    s
}

/// Runs all cells and writes `summary.csv`, trace CSVs (when
/// `write_traces`) and the chain analysis for discrete grids.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    seed_offset: u64,
    write_traces: bool,
) -> Result<Report, ExperimentError> {
    ensure_dir(out)?;
    let results = run_cells(config, seed_offset, write_traces)?;
    let mut report = Report::default();
    if write_traces {
        for r in &results {
            let path = out.join(format!("{}.csv", r.cell.file_stem()));
            let trace = r.trace.as_ref().expect("traces kept");
            trace
                .write_csv(create(&path)?, config.per_link_columns)
                .map_err(|source| ExperimentError::Io {
                    path: path.clone(),
                    source,
                })?;
            report.files.push(path);
        }
    }
    let path = out.join("summary.csv");
    write_file(&path, &summary_csv(&results))?;
    report.files.push(path);
    for r in &results {
        let m = &r.summary;
        let _ = writeln!(
            report.text,
            "{} seed={} beta={}{}: events={} tail mean={:.6} tail variance={:.6e} broadcasts={} processed={}",
            r.cell.variant.name(),
            r.cell.seed,
            r.cell.beta,
            r.cell.gamma_bar_db.map(|g| format!(" gamma_bar={g}dB")).unwrap_or_default(),
            m.events,
            m.tail_mean,
            m.tail_variance,
            m.broadcasts,
            m.processed
        );
    }
    if matches!(config.grid, GridSpec::Discrete { .. }) {
        let a = write_analysis(config, out, seed_offset, false)?;
        report.files.extend(a.files);
        report.warnings.extend(a.warnings);
        report.text.push_str(&a.text);
    }
    Ok(report)
}

/// Exact chain quantities over the beta list, the brute-force optimum and,
/// within the chain cap, mixing curves from the all-minimum-power state.
pub fn analyze(config: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<Report, ExperimentError> {
    config.validate()?;
    if !matches!(config.grid, GridSpec::Discrete { .. }) {
        return Err(field_error("grid", "chain analysis needs a discrete grid"));
    }
    ensure_dir(out)?;
    write_analysis(config, out, seed_offset, true)
}

fn write_analysis(config: &ExperimentConfig, out: &Path, seed_offset: u64, mixing: bool) -> Result<Report, ExperimentError> {
    let mut report = Report::default();
    let seeds: Vec<Option<u64>> = if config.topology_per_seed() {
        config.seeds.iter().map(|s| Some(s.wrapping_add(seed_offset))).collect()
    } else {
        vec![None]
    };
    let mut optimum_csv = format!("{OPTIMUM_SCHEMA}\nseed,states,u_star,optimal_states,optimal_powers\n");
    for seed in seeds {
        let suffix = seed.map(|s| format!("_s{s}")).unwrap_or_default();
        let g = config.gains(seed.unwrap_or(0))?;
        let Some(landscape) = optimum(config, &g)? else {
            let GridSpec::Discrete { levels } = config.grid else { unreachable!() };
            report.warnings.push(format!(
                "chain analysis skipped{}: {levels}^{} states exceed the cap of {}",
                seed.map(|s| format!(" for seed {s}")).unwrap_or_default(),
                g.links(),
                STATIONARY_CAP.max(config.chain_cap)
            ));
            continue;
        };
        let space = landscape.space();
        let spectral = space.size() <= config.chain_cap;
        if !spectral {
            report.warnings.push(format!(
                "{} states exceed chain_cap {}; lambda2 and mixing curves skipped",
                space.size(),
                config.chain_cap
            ));
        }
        let opt_powers: Vec<String> = landscape
            .optimal_set()
            .iter()
            .map(|&s| {
                space
                    .powers_of(s)
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let _ = writeln!(
            optimum_csv,
            "{},{},{},{},{}",
            seed.map(|s| s.to_string()).unwrap_or_default(),
            space.size(),
            landscape.best(),
            landscape.optimal_set().len(),
            opt_powers.join(";")
        );
        let _ = writeln!(
            report.text,
            "U* = {} over {} states ({} optimal){}",
            landscape.best(),
            space.size(),
            landscape.optimal_set().len(),
            seed.map(|s| format!(" for seed {s}")).unwrap_or_default()
        );

        let rows: Vec<(Temperature, String, Option<Vec<f64>>)> = config
            .beta
            .par_iter()
            .map(|&beta| {
                let mut lambda2 = String::new();
                let mut tv = None;
                if spectral {
                    let chain = ChainModel::from_landscape(landscape.clone(), beta);
                    match chain.lambda2() {
                        Ok(l) => lambda2 = l.to_string(),
                        Err(e) => return Err(ExperimentError::from(e)),
                    }
                    if mixing {
                        let mut init = vec![0.0; chain.size()];
                        init[0] = 1.0;
                        tv = chain::mixing_analysis(&chain, &init, config.mixing_steps).ok().map(|r| r.tv);
                    }
                }
                let row = format!(
                    "{},{},{},{},{},{}",
                    beta,
                    landscape.mean(beta),
                    landscape.variance(beta),
                    landscape.variance_bound(beta),
                    landscape.prob_optimal(beta),
                    lambda2
                );
                Ok((beta, row, tv))
            })
            .collect::<Result<_, ExperimentError>>()?;

        let mut csv = format!("{ANALYSIS_SCHEMA}\nbeta,mean_utility,variance,variance_bound,prob_optimal,lambda2\n");
        for (beta, row, tv) in &rows {
            csv.push_str(row);
            csv.push('\n');
            if let Some(tv) = tv {
                let mut m = format!("{MIXING_SCHEMA}\nk,tv_distance\n");
                for (k, t) in tv.iter().enumerate() {
                    let _ = writeln!(m, "{k},{t}");
                }
                let path = out.join(format!("mixing{suffix}_b{beta}.csv"));
                write_file(&path, &m)?;
                report.files.push(path);
            } else if mixing && spectral {
                report
                    .warnings
                    .push(format!("beta={beta}: chain is not irreducible; mixing curve skipped"));
            }
        }
        let path = out.join(format!("analysis{suffix}.csv"));
        write_file(&path, &csv)?;
        report.files.push(path);
    }
    let path = out.join("optimum.csv");
    write_file(&path, &optimum_csv)?;
    report.files.push(path);
    Ok(report)
}

/// Seed-averaged statistics of one (variant, gamma_bar, beta) group.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub gamma_bar_db: Option<f64>,
    pub beta: Temperature,
    pub seeds: usize,
    pub tail_mean: f64,
    pub tail_variance: f64,
    pub broadcasts: f64,
    pub processed: f64,
    pub mean_neighborhood: f64,
}

/// Runs all cells and averages over seeds. All variants share the same
/// networks and random streams.
pub fn comparison_rows(config: &ExperimentConfig, seed_offset: u64) -> Result<Vec<ComparisonRow>, ExperimentError> {
    let results = run_cells(config, seed_offset, false)?;
    let per_group = config.seeds.len();
    Ok(results
        .chunks(per_group)
        .map(|group| {
            let n = group.len() as f64;
            let avg = |f: &dyn Fn(&TraceSummary) -> f64| group.iter().map(|r| f(&r.summary)).sum::<f64>() / n;
            let c = group[0].cell;
            ComparisonRow {
                variant: c.variant,
                gamma_bar_db: c.gamma_bar_db,
                beta: c.beta,
                seeds: group.len(),
                tail_mean: avg(&|s| s.tail_mean),
                tail_variance: avg(&|s| s.tail_variance),
                broadcasts: avg(&|s| s.broadcasts as f64),
                processed: avg(&|s| s.processed as f64),
                mean_neighborhood: avg(&|s| s.mean_neighborhood),
            }
        })
        .collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = format!(
        "{COMPARE_SCHEMA}\nvariant,gamma_bar_db,beta,seeds,tail_mean,tail_variance,broadcasts,processed,mean_neighborhood\n"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.variant.name(),
            opt(r.gamma_bar_db),
            r.beta,
            r.seeds,
            r.tail_mean,
            r.tail_variance,
            r.broadcasts,
            r.processed,
            r.mean_neighborhood
        );
    }
    s
}

/// Writes `comparison.csv`.
pub fn compare_variants(config: &ExperimentConfig, out: &Path, seed_offset: u64) -> Result<Report, ExperimentError> {
    ensure_dir(out)?;
    let rows = comparison_rows(config, seed_offset)?;
    let mut report = Report::default();
    let path = out.join("comparison.csv");
    write_file(&path, &comparison_csv(&rows))?;
    report.files.push(path);
    for r in &rows {
        let _ = writeln!(
            report.text,
            "{:<15} {:>8} beta={:<8} tail mean={:.6} broadcasts={:.1} processed={:.1} neighborhood={:.2}",
            r.variant.name(),
            r.gamma_bar_db.map(|g| format!("{g}dB")).unwrap_or_default(),
            r.beta.to_string(),
            r.tail_mean,
            r.broadcasts,
            r.processed,
            r.mean_neighborhood
        );
    }
    Ok(report)
}
