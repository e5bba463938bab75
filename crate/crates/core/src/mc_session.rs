//! Multiple-configurations sessions: a sender keeps one output stream per
//! configuration and a receiver picks which stream to listen to from its own
//! unsolved count. Nothing flows back to the sender.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::switch_threshold;
use crate::codec::{generate_neighbors, xor_into, DecoderState, SourceBlock};
use crate::distributions::{DegreeDistribution, SolitonParams, SolitonTerms};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub config_id: u8,
    pub dist: DegreeDistribution,
}

/// A configuration becomes active once `u <= activate_at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub config_id: u8,
    pub activate_at: usize,
}

/// Configurations plus a piecewise-constant rule from unsolved count to stream.
#[derive(Debug, Clone, PartialEq)]
pub struct McScheme {
    k: usize,
    configs: Vec<Configuration>,
    stages: Vec<Stage>,
}

impl McScheme {
    /// `stages` must start with a stage active at `u = k` and have strictly
    /// decreasing thresholds; each stage names one of `configs`.
    pub fn new(configs: Vec<Configuration>, stages: Vec<Stage>) -> Result<Self> {
        let k = configs
            .first()
            .map(|c| c.dist.k())
            .ok_or_else(|| invalid("a scheme needs at least one configuration"))?;
        for (i, c) in configs.iter().enumerate() {
            if c.dist.k() != k {
                return Err(invalid("all configurations must share k"));
            }
            if configs[..i].iter().any(|o| o.config_id == c.config_id) {
                return Err(invalid(format!("duplicate config id {}", c.config_id)));
            }
        }
        let first = stages
            .first()
            .ok_or_else(|| invalid("a scheme needs at least one stage"))?;
        if first.activate_at < k {
            return Err(invalid(format!(
                "first stage activates at u <= {} but must cover u = {k}",
                first.activate_at
            )));
        }
        if stages.windows(2).any(|w| w[1].activate_at >= w[0].activate_at) {
            return Err(invalid("stage thresholds must be strictly decreasing"));
        }
        if let Some(s) = stages
            .iter()
            .find(|s| !configs.iter().any(|c| c.config_id == s.config_id))
        {
            return Err(invalid(format!("stage names unknown config {}", s.config_id)));
        }
        Ok(Self { k, configs, stages })
    }

    /// Pure LT: one configuration, always active.
    pub fn single(config_id: u8, dist: DegreeDistribution) -> Self {
        let k = dist.k();
        Self {
            k,
            configs: vec![Configuration { config_id, dist }],
            stages: vec![Stage {
                config_id,
                activate_at: k,
            }],
        }
    }

    /// Two configurations: `first` while `u > switch_at`, `second` once `u <= switch_at`.
    pub fn two_phase(first: DegreeDistribution, second: DegreeDistribution, switch_at: usize) -> Result<Self> {
        let k = first.k();
        if switch_at >= k {
            // The second configuration would be active from the start.
            return McScheme::new(
                vec![Configuration {
                    config_id: 2,
                    dist: second,
                }],
                vec![Stage {
                    config_id: 2,
                    activate_at: k,
                }],
            );
        }
        McScheme::new(
            vec![
                Configuration {
                    config_id: 1,
                    dist: first,
                },
                Configuration {
                    config_id: 2,
                    dist: second,
                },
            ],
            vec![
                Stage {
                    config_id: 1,
                    activate_at: k,
                },
                Stage {
                    config_id: 2,
                    activate_at: switch_at,
                },
            ],
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn config(&self, config_id: u8) -> Option<&Configuration> {
        self.configs.iter().find(|c| c.config_id == config_id)
    }

    fn config_index(&self, config_id: u8) -> usize {
        self.configs
            .iter()
            .position(|c| c.config_id == config_id)
            .expect("stage config validated at construction")
    }

    /// The configuration a receiver with `u` unsolved symbols listens to.
    pub fn select(&self, u: usize) -> u8 {
        self.stages
            .iter()
            .rev()
            .find(|s| u <= s.activate_at)
            .unwrap_or(&self.stages[0])
            .config_id
    }
}

/// Starter until `u <= ceil(R)`, then the closer.
pub fn standard_scheme(params: &SolitonParams) -> Result<McScheme> {
    let terms = SolitonTerms::new(params)?;
    McScheme::two_phase(terms.starter()?, terms.closer()?, switch_threshold(params)?)
}

pub fn select_stream(scheme: &McScheme, state: &DecoderState) -> u8 {
    scheme.select(state.unsolved())
}

/// Scheme labels used by the harness and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "robust")]
    Robust,
    #[serde(rename = "starter")]
    Starter,
    #[serde(rename = "starter+closer")]
    StarterCloser,
}

impl SchemeKind {
    pub fn build(self, params: &SolitonParams) -> Result<McScheme> {
        let terms = SolitonTerms::new(params)?;
        match self {
            SchemeKind::Robust => Ok(McScheme::single(1, terms.robust()?)),
            SchemeKind::Starter => Ok(McScheme::single(1, terms.starter()?)),
            SchemeKind::StarterCloser => standard_scheme(params),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Robust => "robust",
            SchemeKind::Starter => "starter",
            SchemeKind::StarterCloser => "starter+closer",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(SchemeKind::Robust),
            "starter" => Ok(SchemeKind::Starter),
            "starter+closer" | "starter-closer" => Ok(SchemeKind::StarterCloser),
            other => Err(invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Binary erasure channel.
#[derive(Debug, Clone)]
pub struct ErasureChannel {
    rate: f64,
    rng: SplitMix64,
}

impl ErasureChannel {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid(format!("erasure rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            rng: SplitMix64::new(seed),
        })
    }

    pub fn perfect() -> Self {
        Self {
            rate: 0.0,
            rng: SplitMix64::new(0),
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns `true` when the packet gets through.
    pub fn deliver(&mut self) -> bool {
        self.rate == 0.0 || !self.rng.chance(self.rate)
    }
}

/// One channel per configuration of `scheme`, all at `rate`, seeded from `seed`.
pub fn uniform_channels(scheme: &McScheme, rate: f64, seed: u64) -> Result<Vec<ErasureChannel>> {
    scheme
        .configs()
        .iter()
        .map(|c| ErasureChannel::new(rate, derive_seed(seed ^ 0xc4a7, c.config_id as u64)))
        .collect()
}

/// Seed of packet `index` on the stream of `config_id`.
pub fn stream_seed(session_seed: u64, config_id: u8, index: u64) -> u64 {
    derive_seed(derive_seed(session_seed, config_id as u64), index)
}

/// A packet as seen by the receiver side of a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub config_id: u8,
    /// Position of the packet in its configuration's stream.
    pub index: u64,
    pub seed: u64,
    pub neighbors: Vec<u32>,
    pub erased: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StopRule {
    /// Stop once this many packets have been received (erasures excluded).
    pub max_received: Option<usize>,
    /// Stop once this many packets have been generated across all streams.
    pub max_generated: Option<usize>,
}

impl StopRule {
    pub fn received(n: usize) -> Self {
        Self {
            max_received: Some(n),
            max_generated: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub received: usize,
    /// Received packets per configuration.
    pub per_config: BTreeMap<u8, usize>,
    /// Generated packets per configuration (erasures included).
    pub generated: BTreeMap<u8, usize>,
    pub final_unsolved: usize,
    pub success: bool,
    #[serde(skip)]
    pub recovered: Vec<bool>,
}

impl SessionReport {
    pub fn overhead(&self, k: usize) -> f64 {
        self.received as f64 / k as f64 - 1.0
    }
}

/// A sender/receiver pair evolving one packet at a time.
pub struct Session<'a> {
    scheme: &'a McScheme,
    block: Option<&'a SourceBlock>,
    channels: Vec<ErasureChannel>,
    seed: u64,
    next_index: Vec<u64>,
    decoder: DecoderState,
}

impl<'a> Session<'a> {
    /// `block = None` decodes structure only.
    pub fn new(
        scheme: &'a McScheme,
        block: Option<&'a SourceBlock>,
        channels: Vec<ErasureChannel>,
        seed: u64,
    ) -> Result<Self> {
        if channels.len() != scheme.configs().len() {
            return Err(invalid(format!(
                "{} channels for {} configurations",
                channels.len(),
                scheme.configs().len()
            )));
        }
        let decoder = match block {
            Some(b) => {
                if b.k() != scheme.k() {
                    return Err(invalid("block k differs from scheme k"));
                }
                DecoderState::new(b.k(), b.symbol_size())
            }
            None => DecoderState::symbolic(scheme.k()),
        };
        Ok(Self {
            scheme,
            block,
            channels,
            seed,
            next_index: vec![0; scheme.configs().len()],
            decoder,
        })
    }

    pub fn decoder(&self) -> &DecoderState {
        &self.decoder
    }

    pub fn into_decoder(self) -> DecoderState {
        self.decoder
    }

    pub fn generated(&self) -> u64 {
        self.next_index.iter().sum()
    }

    /// Pulls one packet from the stream `config_id`; ingests it unless erased.
    pub fn pull(&mut self, config_id: u8) -> Delivery {
        let ci = self.scheme.config_index(config_id);
        let index = self.next_index[ci];
        self.next_index[ci] += 1;
        let seed = stream_seed(self.seed, config_id, index);
        let dist = &self.scheme.configs()[ci].dist;
        let neighbors = generate_neighbors(dist, config_id, seed);
        let erased = !self.channels[ci].deliver();
        if !erased {
            match self.block {
                Some(b) => {
                    let mut payload = vec![0u8; b.symbol_size()];
                    for &n in &neighbors {
                        xor_into(&mut payload, b.symbol(n as usize));
                    }
                    self.decoder.ingest(config_id, &neighbors, &payload);
                }
                None => {
                    self.decoder.ingest(config_id, &neighbors, &[]);
                }
            }
        }
        Delivery {
            config_id,
            index,
            seed,
            neighbors,
            erased,
        }
    }

    /// Runs the scheme's own switching rule until completion or `stop`.
    pub fn run(&mut self, stop: StopRule, mut observe: impl FnMut(&Delivery, &DecoderState)) {
        let scheme = self.scheme;
        self.run_with_policy(stop, |d| scheme.select(d.unsolved()), &mut observe)
    }

    /// Like [`Session::run`] with an arbitrary receiver policy.
    pub fn run_with_policy(
        &mut self,
        stop: StopRule,
        mut policy: impl FnMut(&DecoderState) -> u8,
        mut observe: impl FnMut(&Delivery, &DecoderState),
    ) {
        loop {
            if self.decoder.is_complete() {
                break;
            }
            if stop.max_received.is_some_and(|m| self.decoder.received() >= m) {
                break;
            }
            if stop
                .max_generated
                .is_some_and(|m| self.generated() >= m as u64)
            {
                break;
            }
            let cfg = policy(&self.decoder);
            let delivery = self.pull(cfg);
            observe(&delivery, &self.decoder);
        }
    }

    pub fn report(&self) -> SessionReport {
        let mut per_config = BTreeMap::new();
        let mut generated = BTreeMap::new();
        for (c, n) in self.scheme.configs().iter().zip(&self.next_index) {
            per_config.insert(c.config_id, self.decoder.received_from(c.config_id));
            generated.insert(c.config_id, *n as usize);
        }
        SessionReport {
            received: self.decoder.received(),
            per_config,
            generated,
            final_unsolved: self.decoder.unsolved(),
            success: self.decoder.is_complete(),
            recovered: self.decoder.recovered_mask().to_vec(),
        }
    }
}

/// Runs one session carrying real payloads. Returns the report and the decoder.
pub fn run_session(
    block: &SourceBlock,
    scheme: &McScheme,
    channels: Vec<ErasureChannel>,
    stop: StopRule,
    seed: u64,
) -> Result<(SessionReport, DecoderState)> {
    let mut s = Session::new(scheme, Some(block), channels, seed)?;
    s.run(stop, |_, _| {});
    Ok((s.report(), s.into_decoder()))
}

/// Runs one structure-only session, calling `observe` after each packet.
pub fn run_symbolic_session(
    scheme: &McScheme,
    channels: Vec<ErasureChannel>,
    stop: StopRule,
    seed: u64,
    observe: impl FnMut(&Delivery, &DecoderState),
) -> Result<SessionReport> {
    let mut s = Session::new(scheme, None, channels, seed)?;
    s.run(stop, observe);
    Ok(s.report())
}
