//! Asynchronous event-driven simulation of the distributed algorithm.
//!
//! Every link owns an independent Poisson clock. At each epoch the owning
//! transmitter predicts the SINR vector for each candidate power from the
//! control packets it has heard, draws a new power from the Gibbs update,
//! and the receivers announce according to the variant's broadcast rule.
//! Packets are delivered instantly and atomically before the next epoch.
//!
//! The engine keeps the true power vector; links only see packets.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::channel::{self, Announcement, ChannelError, GainMatrix};
use crate::sampler::{
    self, KnownLink, LocalView, PowerGrid, SamplerError, Temperature, UpdateDistribution,
};
use crate::utility::{UtilityError, UtilitySpec};

/// Column schema of trace CSV files.
pub const TRACE_SCHEMA: &str = "# schema: glad-trace v1";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

/// Which control packets are sent and which are processed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Messaging {
    /// Every receiver announces whenever its SINR or signal power changes.
    Glad,
    /// Only the updating link announces.
    Iglad,
    /// As `Iglad`, but transmitters drop packets whose control SNR is not
    /// above `gamma_bar` (linear scale).
    Niglad { gamma_bar: f64 },
}

/// What prompted a receiver to consider broadcasting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadcastTrigger {
    /// The link's own transmitter just finished a power update.
    OwnUpdate,
    /// The receiver measured a different SINR than it last announced.
    SensedSinrChange,
    /// The receiver measured a different signal power than it last announced.
    SensedPowerChange,
}

/// Whether a receiver broadcasts on `trigger` under `messaging`.
pub fn broadcast_rule(messaging: Messaging, trigger: BroadcastTrigger) -> bool {
    match messaging {
        Messaging::Glad => matches!(
            trigger,
            BroadcastTrigger::SensedSinrChange | BroadcastTrigger::SensedPowerChange
        ),
        Messaging::Iglad | Messaging::Niglad { .. } => trigger == BroadcastTrigger::OwnUpdate,
    }
}

/// Links whose control packets transmitter `i` processes: itself plus every
/// `j` with `G[j][i] * ctrl_power / n_i > gamma_bar`. The receiver-to-
/// transmitter gain is approximated by `G[j][i]`.
pub fn compute_neighborhood(i: usize, g: &GainMatrix, ctrl_power: f64, gamma_bar: f64) -> Vec<usize> {
    (0..g.links())
        .filter(|&j| j == i || g.gain(j, i) * ctrl_power / g.noise()[i] > gamma_bar)
        .collect()
}

/// Power values a link may choose from.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerSpace {
    Discrete(PowerGrid),
    /// `[0, P_max]` sampled through an `points`-node quadrature grid.
    Continuous { points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Events(u64),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub messaging: Messaging,
    pub power_space: PowerSpace,
    pub utility: UtilitySpec,
    pub beta: Temperature,
    /// Epoch rate of each link's Poisson clock (per second).
    pub rate: f64,
    pub horizon: Horizon,
    pub seed: u64,
    /// Control packet transmit power; defaults to the largest `P_max`.
    pub ctrl_power: Option<f64>,
    /// Keep every k-th event in the trace (the initial state is always kept).
    pub record_every: u64,
    /// Starting powers; random feasible powers when absent.
    pub initial_powers: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(messaging: Messaging, power_space: PowerSpace, utility: UtilitySpec, beta: Temperature) -> Self {
        Self {
            messaging,
            power_space,
            utility,
            beta,
            rate: 1.0,
            horizon: Horizon::Events(0),
            seed: 0,
            ctrl_power: None,
            record_every: 1,
            initial_powers: None,
        }
    }

    fn validate(&self, g: &GainMatrix) -> Result<(), EngineError> {
        let m = g.links();
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(EngineError::Config(format!("rate must be positive, got {}", self.rate)));
        }
        if self.record_every == 0 {
            return Err(EngineError::Config("record_every must be at least 1".into()));
        }
        if let Horizon::Time(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(EngineError::Config(format!("time horizon must be finite and >= 0, got {t}")));
            }
        }
        match &self.power_space {
            PowerSpace::Discrete(grid) => {
                if grid.links() != m {
                    return Err(EngineError::Config(format!(
                        "grid has {} links, network has {m}",
                        grid.links()
                    )));
                }
            }
            PowerSpace::Continuous { points } => {
                if *points < sampler::MIN_QUADRATURE_POINTS {
                    return Err(SamplerError::TooFewPoints(*points).into());
                }
            }
        }
        if let Messaging::Niglad { gamma_bar } = self.messaging {
            if !(gamma_bar >= 0.0) {
                return Err(EngineError::Config(format!("gamma_bar must be >= 0, got {gamma_bar}")));
            }
        }
        if let Some(c) = self.ctrl_power {
            if !(c > 0.0 && c.is_finite()) {
                return Err(EngineError::Config(format!("ctrl_power must be positive, got {c}")));
            }
        }
        if let Some(p) = &self.initial_powers {
            g.check_feasible(p)?;
        }
        self.utility.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Epoch {
    time: f64,
    link: usize,
}

impl Eq for Epoch {}

impl Ord for Epoch {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.link.cmp(&other.link))
    }
}

impl PartialOrd for Epoch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Merged update epochs of independent per-link Poisson clocks.
#[derive(Debug)]
pub struct EventQueue<R> {
    heap: BinaryHeap<Reverse<Epoch>>,
    gap: Exp<f64>,
    horizon: Horizon,
    emitted: u64,
    rng: R,
}

/// Starts one Poisson clock of rate `rate` per link.
pub fn schedule<R: Rng>(links: usize, rate: f64, horizon: Horizon, mut rng: R) -> Result<EventQueue<R>, EngineError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(EngineError::Config(format!("epoch rate must be positive, got {rate}")));
    }
    let gap = Exp::new(rate).map_err(|e| EngineError::Config(format!("epoch rate {rate}: {e}")))?;
    let heap = (0..links)
        .map(|link| {
            Reverse(Epoch {
                time: gap.sample(&mut rng),
                link,
            })
        })
        .collect();
    Ok(EventQueue {
        heap,
        gap,
        horizon,
        emitted: 0,
        rng,
    })
}

impl<R: Rng> Iterator for EventQueue<R> {
    /// `(time, link)`.
    type Item = (f64, usize);

    fn next(&mut self) -> Option<(f64, usize)> {
        if let Horizon::Events(n) = self.horizon {
            if self.emitted >= n {
                return None;
            }
        }
        let Reverse(e) = self.heap.pop()?;
        if let Horizon::Time(t) = self.horizon {
            if e.time > t {
                self.heap.push(Reverse(e));
                return None;
            }
        }
        let next = Epoch {
            time: e.time + self.gap.sample(&mut self.rng),
            link: e.link,
        };
        self.heap.push(Reverse(next));
        self.emitted += 1;
        Some((e.time, e.link))
    }
}

/// A receiver's announcement of its SINR and signal power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPacket {
    pub sender: usize,
    pub gamma: f64,
    pub signal_power: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeardEntry {
    pub gamma: f64,
    pub signal_power: f64,
    pub timestamp: f64,
}

/// A transmitter's local knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub own_power: f64,
    /// Last packet heard from each link, if any.
    pub heard: Vec<Option<HeardEntry>>,
    /// Interference-plus-noise last implied by a nonzero announcement of
    /// each link; the link's noise until one arrives.
    pub interference_hint: Vec<f64>,
    /// Links whose packets are processed; always contains the link itself.
    pub neighborhood: Vec<usize>,
}

impl LinkState {
    fn receive(&mut self, packet: &ControlPacket) {
        let j = packet.sender;
        self.heard[j] = Some(HeardEntry {
            gamma: packet.gamma,
            signal_power: packet.signal_power,
            timestamp: packet.timestamp,
        });
        if let Some(i) = (Announcement {
            gamma: packet.gamma,
            signal_power: packet.signal_power,
        })
        .interference()
        {
            self.interference_hint[j] = i;
        }
    }
}

/// One recorded event (or the initial state, with `link == None`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub link: Option<usize>,
    pub power: Option<f64>,
    pub powers: Vec<f64>,
    pub sinr: Vec<f64>,
    pub utility: f64,
    /// Update-triggered broadcasts so far.
    pub broadcasts: u64,
    /// Packet deliveries accepted by transmitters so far.
    pub processed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    /// Events simulated (records may be thinned).
    pub events: u64,
    pub broadcasts: u64,
    pub processed: u64,
    /// Neighborhood size of each link.
    pub neighborhood_sizes: Vec<usize>,
}

/// Tail-window statistics of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub events: u64,
    pub tail_mean: f64,
    pub tail_variance: f64,
    pub broadcasts: u64,
    pub processed: u64,
    pub mean_neighborhood: f64,
}

impl SimTrace {
    /// Records in the last `fraction` of the run, by event count. Falls back
    /// to the final record when the window is empty.
    pub fn tail(&self, fraction: f64) -> &[TraceRecord] {
        let n = self.records.len();
        let keep = ((n as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
        &self.records[n - keep.clamp(1, n)..]
    }

    pub fn summary(&self, tail_fraction: f64) -> TraceSummary {
        let tail = self.tail(tail_fraction);
        let n = tail.len() as f64;
        let mean = tail.iter().map(|r| r.utility).sum::<f64>() / n;
        let var = tail.iter().map(|r| (r.utility - mean).powi(2)).sum::<f64>() / n;
        let sizes = &self.neighborhood_sizes;
        TraceSummary {
            events: self.events,
            tail_mean: mean,
            tail_variance: var,
            broadcasts: self.broadcasts,
            processed: self.processed,
            mean_neighborhood: sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64,
        }
    }

    /// Writes the trace as CSV. `per_link` appends `power_j` and `sinr_j`
    /// columns.
    pub fn write_csv<W: Write>(&self, mut w: W, per_link: bool) -> io::Result<()> {
        let m = self.records.first().map_or(0, |r| r.powers.len());
        writeln!(w, "{TRACE_SCHEMA}")?;
        write!(w, "time,link,power,utility,broadcasts,processed")?;
        if per_link {
            for j in 0..m {
                write!(w, ",power_{j}")?;
            }
            for j in 0..m {
                write!(w, ",sinr_{j}")?;
            }
        }
        writeln!(w)?;
        for r in &self.records {
            let link = r.link.map(|l| l.to_string()).unwrap_or_default();
            let power = r.power.map(|p| p.to_string()).unwrap_or_default();
            write!(
                w,
                "{},{},{},{},{},{}",
                r.time, link, power, r.utility, r.broadcasts, r.processed
            )?;
            if per_link {
                for p in &r.powers {
                    write!(w, ",{p}")?;
                }
                for g in &r.sinr {
                    write!(w, ",{g}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Result of one power update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub new_power: f64,
    pub broadcasts: Vec<ControlPacket>,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Event-loop state of one trial.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    gains: &'a GainMatrix,
    config: SimConfig,
    powers: Vec<f64>,
    sinr: Vec<f64>,
    signal: Vec<f64>,
    /// What each receiver last put on the air.
    last_announced: Vec<Announcement>,
    links: Vec<LinkState>,
    broadcasts: u64,
    processed: u64,
    packet_log: Option<Vec<ControlPacket>>,
}

impl<'a> Simulation<'a> {
    /// Sets up initial powers and performs the bootstrap announcement round
    /// (not counted as update-triggered broadcasts).
    pub fn new(gains: &'a GainMatrix, config: SimConfig) -> Result<Self, EngineError> {
        config.validate(gains)?;
        let m = gains.links();
        let powers = match &config.initial_powers {
            Some(p) => p.clone(),
            None => {
                let mut rng = rng_stream(config.seed, 3);
                (0..m)
                    .map(|i| match &config.power_space {
                        PowerSpace::Discrete(grid) => {
                            grid.power(i, rng.random_range(0..grid.level_count(i)))
                        }
                        PowerSpace::Continuous { .. } => rng.random_range(0.0..=gains.max_power()[i]),
                    })
                    .collect()
            }
        };
        let ctrl_power = config
            .ctrl_power
            .unwrap_or_else(|| gains.max_power().iter().copied().fold(0.0, f64::max));
        let links = (0..m)
            .map(|i| LinkState {
                own_power: powers[i],
                heard: vec![None; m],
                interference_hint: gains.noise().to_vec(),
                neighborhood: match config.messaging {
                    Messaging::Niglad { gamma_bar } => compute_neighborhood(i, gains, ctrl_power, gamma_bar),
                    _ => (0..m).collect(),
                },
            })
            .collect();
        let mut sim = Self {
            gains,
            config,
            sinr: channel::sinr(gains, &powers)?,
            signal: channel::received_signal_power(gains, &powers)?,
            powers,
            last_announced: Vec::new(),
            links,
            broadcasts: 0,
            processed: 0,
            packet_log: None,
        };
        sim.last_announced = (0..m).map(|j| sim.measured(j)).collect();
        for j in 0..m {
            let packet = sim.packet(j, 0.0);
            sim.deliver(&packet);
        }
        sim.processed = 0;
        Ok(sim)
    }

    /// Keeps every emitted packet (including bootstrap) for inspection.
    pub fn enable_packet_log(&mut self) {
        let initial = (0..self.powers.len()).map(|j| self.packet(j, 0.0)).collect();
        self.packet_log = Some(initial);
    }

    pub fn packet_log(&self) -> Option<&[ControlPacket]> {
        self.packet_log.as_deref()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn sinr(&self) -> &[f64] {
        &self.sinr
    }

    pub fn link_state(&self, i: usize) -> &LinkState {
        &self.links[i]
    }

    pub fn broadcasts(&self) -> u64 {
        self.broadcasts
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn utility(&self) -> Result<f64, UtilityError> {
        self.config.utility.evaluate_all(&self.sinr)
    }

    fn measured(&self, j: usize) -> Announcement {
        Announcement {
            gamma: self.sinr[j],
            signal_power: self.signal[j],
        }
    }

    fn packet(&self, j: usize, timestamp: f64) -> ControlPacket {
        ControlPacket {
            sender: j,
            gamma: self.sinr[j],
            signal_power: self.signal[j],
            timestamp,
        }
    }

    fn accepts(&self, receiver: usize, sender: usize) -> bool {
        match self.config.messaging {
            Messaging::Niglad { .. } => self.links[receiver].neighborhood.contains(&sender),
            _ => true,
        }
    }

    fn deliver(&mut self, packet: &ControlPacket) {
        for k in 0..self.links.len() {
            if self.accepts(k, packet.sender) {
                self.links[k].receive(packet);
                self.processed += 1;
            }
        }
    }

    /// The local view transmitter `i` builds from its heard table.
    pub fn local_view(&self, i: usize) -> LocalView {
        let state = &self.links[i];
        let known = state
            .neighborhood
            .iter()
            .filter_map(|&j| {
                state.heard[j].map(|h| KnownLink {
                    link: j,
                    announcement: Announcement {
                        gamma: h.gamma,
                        signal_power: h.signal_power,
                    },
                    fallback_interference: state.interference_hint[j],
                    noise: self.gains.noise()[j],
                })
            })
            .collect();
        LocalView {
            link: i,
            own_power: state.own_power,
            gain_row: self.gains.row(i).to_vec(),
            known,
        }
    }

    /// Update distribution link `i` would draw from right now.
    pub fn update_distribution(&self, i: usize) -> Result<UpdateDistribution, EngineError> {
        let view = self.local_view(i);
        let cfg = &self.config;
        let dist = match &cfg.power_space {
            PowerSpace::Discrete(grid) => {
                sampler::local_discrete_update(&view, &grid.powers(i), &cfg.utility, cfg.beta)?
            }
            PowerSpace::Continuous { points } => {
                sampler::iglad_update(&view, self.gains.max_power()[i], *points, &cfg.utility, cfg.beta)?
            }
        };
        Ok(dist)
    }

    /// One update epoch of link `i` at `time`: sample, apply, announce.
    pub fn step<R: Rng + ?Sized>(&mut self, i: usize, time: f64, rng: &mut R) -> Result<StepOutcome, EngineError> {
        let dist = self.update_distribution(i)?;
        let new_power = dist.sample(rng);
        self.powers[i] = new_power;
        self.links[i].own_power = new_power;
        self.sinr = channel::sinr(self.gains, &self.powers)?;
        self.signal = channel::received_signal_power(self.gains, &self.powers)?;

        let messaging = self.config.messaging;
        let mut out = Vec::new();
        for j in 0..self.powers.len() {
            let now = self.measured(j);
            let last = self.last_announced[j];
            let send = (j == i && broadcast_rule(messaging, BroadcastTrigger::OwnUpdate))
                || (now.gamma != last.gamma && broadcast_rule(messaging, BroadcastTrigger::SensedSinrChange))
                || (now.signal_power != last.signal_power
                    && broadcast_rule(messaging, BroadcastTrigger::SensedPowerChange));
            if send {
                out.push(self.packet(j, time));
                self.last_announced[j] = now;
            }
        }
        for p in &out {
            self.deliver(p);
            if let Some(log) = &mut self.packet_log {
                log.push(*p);
            }
        }
        self.broadcasts += out.len() as u64;
        Ok(StepOutcome {
            new_power,
            broadcasts: out,
        })
    }

    fn record(&self, time: f64, link: Option<usize>) -> Result<TraceRecord, EngineError> {
        Ok(TraceRecord {
            time,
            link,
            power: link.map(|l| self.powers[l]),
            powers: self.powers.clone(),
            sinr: self.sinr.clone(),
            utility: self.utility()?,
            broadcasts: self.broadcasts,
            processed: self.processed,
        })
    }

    /// Runs the event loop to the configured horizon.
    pub fn run(mut self) -> Result<SimTrace, EngineError> {
        let mut sample_rng = rng_stream(self.config.seed, 2);
        let epochs = schedule(
            self.powers.len(),
            self.config.rate,
            self.config.horizon,
            rng_stream(self.config.seed, 1),
        )?;
        let mut records = vec![self.record(0.0, None)?];
        let mut events = 0u64;
        for (time, link) in epochs {
            self.step(link, time, &mut sample_rng)?;
            events += 1;
            if events % self.config.record_every == 0 {
                records.push(self.record(time, Some(link))?);
            }
        }
        Ok(SimTrace {
            records,
            events,
            broadcasts: self.broadcasts,
            processed: self.processed,
            neighborhood_sizes: self.links.iter().map(|l| l.neighborhood.len()).collect(),
        })
    }
}

/// Runs one trial.
pub fn run(gains: &GainMatrix, config: SimConfig) -> Result<SimTrace, EngineError> {
    Simulation::new(gains, config)?.run()
}
