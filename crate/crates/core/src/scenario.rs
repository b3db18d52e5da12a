//! JSON scenario files.
//!
//! Every time value is written as `{"value": <number>, "unit": "ps"|"ns"|"us"|"ms"|"s"}`
//! and lengths are plain metres. Files written by this crate always use
//! integer picoseconds, so a write/read cycle is exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::memory::{place_memories, MemoryPlacement};
use crate::sim::{ControllerConfig, DriftKind, DriftModel, SimConfig};
use crate::solver::DEFAULT_EPSILON;
use crate::strategy::StrategyKind;
use crate::time::{Picos, TimeQuantity};
use crate::topology::{
    validate_topology, Bounds, BsaSpec, ChannelKind, Endpoint, Link, LinkId, MemoryMode, MemorySpec, NetworkTopology,
    NodeId, NodeKind, NodeSpec, PumpControl, SourceSpec, ValidationReport,
};

type Tq = TimeQuantity;

fn tq(p: Picos) -> Tq {
    TimeQuantity::from_picos(p)
}

fn is_zero(t: &Tq) -> bool {
    t.to_picos() == Picos::ZERO
}

fn zero() -> Tq {
    tq(Picos::ZERO)
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub lo: Tq,
    pub hi: Tq,
}

impl BoundsDoc {
    fn from(b: Bounds) -> Self {
        BoundsDoc { lo: tq(b.lo), hi: tq(b.hi) }
    }
    fn to(self) -> Bounds {
        Bounds::new(self.lo.to_picos(), self.hi.to_picos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryModeDoc {
    HoldUntilReady,
    FixedDelay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryDoc {
    pub mode: MemoryModeDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_hold: Option<Tq>,
    /// Omitted means infinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherence_time: Option<Tq>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub capture_efficiency: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub release_efficiency: f64,
    #[serde(default = "zero", skip_serializing_if = "is_zero")]
    pub release_phase: Tq,
}

impl MemoryDoc {
    fn from(m: &MemorySpec) -> Self {
        let (mode, delay, max_hold) = match m.mode {
            MemoryMode::FixedDelayBuffer { delay } => (MemoryModeDoc::FixedDelay, Some(tq(delay)), None),
            MemoryMode::HoldUntilReady { max_hold } => (MemoryModeDoc::HoldUntilReady, None, max_hold.map(tq)),
        };
        MemoryDoc {
            mode,
            delay,
            max_hold,
            coherence_time: m.coherence_time.map(tq),
            capture_efficiency: m.capture_efficiency,
            release_efficiency: m.release_efficiency,
            release_phase: tq(m.release_phase),
        }
    }

    fn to(&self, owner: &str) -> Result<MemorySpec> {
        let mode = match self.mode {
            MemoryModeDoc::FixedDelay => MemoryMode::FixedDelayBuffer {
                delay: self
                    .delay
                    .ok_or_else(|| Error::Parse(format!("{owner}: fixed_delay memory needs 'delay'")))?
                    .to_picos(),
            },
            MemoryModeDoc::HoldUntilReady => MemoryMode::HoldUntilReady {
                max_hold: self.max_hold.map(|t| t.to_picos()),
            },
        };
        Ok(MemorySpec {
            coherence_time: self.coherence_time.map(|t| t.to_picos()),
            mode,
            capture_efficiency: self.capture_efficiency,
            release_efficiency: self.release_efficiency,
            release_phase: self.release_phase.to_picos(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindDoc {
    Source,
    Bsa,
    Memory,
    Detector,
}

/// A node. Fields that do not apply to `kind` are reported as unknown keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub kind: NodeKindDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_period: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emission_offset: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coincidence_window: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odl_bounds: Option<[BoundsDoc; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odl_setting: Option<[Tq; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryDoc>,
}

impl NodeDoc {
    fn new(id: &str, kind: NodeKindDoc) -> Self {
        NodeDoc {
            id: id.to_string(),
            kind,
            rep_period: None,
            emission_offset: None,
            coincidence_window: None,
            odl_bounds: None,
            odl_setting: None,
            memory: None,
        }
    }

    /// Keys present but irrelevant to `kind`.
    fn stray_keys(&self) -> Vec<&'static str> {
        let present = [
            ("rep_period", self.rep_period.is_some(), NodeKindDoc::Source),
            ("emission_offset", self.emission_offset.is_some(), NodeKindDoc::Source),
            ("coincidence_window", self.coincidence_window.is_some(), NodeKindDoc::Bsa),
            ("odl_bounds", self.odl_bounds.is_some(), NodeKindDoc::Bsa),
            ("odl_setting", self.odl_setting.is_some(), NodeKindDoc::Bsa),
            ("memory", self.memory.is_some(), NodeKindDoc::Memory),
        ];
        present
            .into_iter()
            .filter(|(_, set, kind)| *set && *kind != self.kind)
            .map(|(k, _, _)| k)
            .collect()
    }
}

fn required<T: Copy>(v: Option<T>, owner: &str, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parse(format!("{owner}: missing '{key}'")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointDoc {
    pub node: String,
    pub port: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelDoc {
    Quantum,
    ClassicalControl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpDoc {
    pub bounds: BoundsDoc,
    #[serde(default = "zero")]
    pub setting: Tq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDoc {
    pub id: String,
    pub from: EndpointDoc,
    pub to: EndpointDoc,
    #[serde(default = "quantum")]
    pub channel: ChannelDoc,
    pub length_m: f64,
    pub group_index: f64,
    #[serde(default = "zero", skip_serializing_if = "is_zero")]
    pub extra_fixed_delay: Tq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump: Option<PumpDoc>,
}

fn quantum() -> ChannelDoc {
    ChannelDoc::Quantum
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKindDoc {
    Static,
    Linear,
    Sinusoidal,
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModelDoc {
    pub id: String,
    pub kind: DriftKindDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Tq>,
    /// Dimensionless: seconds of delay per second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Tq>,
    /// Radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_std: Option<Tq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_interval: Option<Tq>,
}

fn secs(t: Tq) -> f64 {
    t.to_picos().as_seconds()
}

fn tq_secs(s: f64) -> Tq {
    tq(Picos::from_seconds(s))
}

impl DriftModelDoc {
    fn to(&self) -> Result<DriftModel> {
        let owner = format!("drift model '{}'", self.id);
        let t = |v: Option<Tq>, k: &str| required(v, &owner, k).map(secs);
        let kind = match self.kind {
            DriftKindDoc::Static => DriftKind::Static { offset: t(self.offset, "offset")? },
            DriftKindDoc::Linear => DriftKind::Linear { rate: required(self.rate, &owner, "rate")? },
            DriftKindDoc::Sinusoidal => DriftKind::Sinusoidal {
                amplitude: t(self.amplitude, "amplitude")?,
                period: t(self.period, "period")?,
                phase: self.phase.unwrap_or(0.0),
            },
            DriftKindDoc::RandomWalk => DriftKind::RandomWalk {
                step_std: t(self.step_std, "step_std")?,
                step_interval: t(self.step_interval, "step_interval")?,
            },
        };
        Ok(DriftModel { id: self.id.clone(), kind })
    }

    fn stray_keys(&self) -> Vec<&'static str> {
        use DriftKindDoc::*;
        let present: [(&str, bool, &[DriftKindDoc]); 7] = [
            ("offset", self.offset.is_some(), &[Static]),
            ("rate", self.rate.is_some(), &[Linear]),
            ("amplitude", self.amplitude.is_some(), &[Sinusoidal]),
            ("period", self.period.is_some(), &[Sinusoidal]),
            ("phase", self.phase.is_some(), &[Sinusoidal]),
            ("step_std", self.step_std.is_some(), &[RandomWalk]),
            ("step_interval", self.step_interval.is_some(), &[RandomWalk]),
        ];
        present
            .into_iter()
            .filter(|(_, set, kinds)| *set && !kinds.contains(&self.kind))
            .map(|(k, _, _)| k)
            .collect()
    }

    fn from(m: &DriftModel) -> Self {
        let mut d = DriftModelDoc {
            id: m.id.clone(),
            kind: DriftKindDoc::Static,
            offset: None,
            rate: None,
            amplitude: None,
            period: None,
            phase: None,
            step_std: None,
            step_interval: None,
        };
        match m.kind {
            DriftKind::Static { offset } => d.offset = Some(tq_secs(offset)),
            DriftKind::Linear { rate } => {
                d.kind = DriftKindDoc::Linear;
                d.rate = Some(rate);
            }
            DriftKind::Sinusoidal { amplitude, period, phase } => {
                d.kind = DriftKindDoc::Sinusoidal;
                d.amplitude = Some(tq_secs(amplitude));
                d.period = Some(tq_secs(period));
                d.phase = Some(phase);
            }
            DriftKind::RandomWalk { step_std, step_interval } => {
                d.kind = DriftKindDoc::RandomWalk;
                d.step_std = Some(tq_secs(step_std));
                d.step_interval = Some(tq_secs(step_interval));
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerDoc {
    pub gain: f64,
    pub estimate_window: usize,
    pub max_step: Tq,
}

/// Which simulation engine `simulate` and `sweep` use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    #[default]
    EventDriven,
    HopByHop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationDoc {
    pub slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_period: Option<Tq>,
    pub p_gen: f64,
    pub p0: f64,
    pub sigma: Tq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Tq>,
    #[serde(default = "zero", skip_serializing_if = "is_zero")]
    pub timing_jitter: Tq,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerDoc>,
    /// Link id to drift model id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drift: BTreeMap<String, String>,
    #[serde(default = "report_interval")]
    pub report_interval: u64,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deliveries: Option<u64>,
}

fn report_interval() -> u64 {
    SimConfig::default().report_interval
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySectionDoc {
    /// Sources that get a co-located memory on their port 1.
    pub placements: Vec<String>,
    pub buffer: MemoryDoc,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub p_swap_mem: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDoc {
    pub epsilon: Tq,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// The on-disk scenario layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift_models: Vec<DriftModelDoc>,
    pub strategy: StrategyKind,
    pub simulation: SimulationDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemorySectionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputDoc>,
}

/// A scenario in domain types.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: NetworkTopology,
    pub strategy: StrategyKind,
    pub simulation: SimConfig,
    pub seed: u64,
    pub engine: EngineKind,
    pub memory: Option<MemoryPlacement>,
    pub epsilon: Picos,
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    /// Unknown keys, as JSON paths; fatal in strict mode.
    pub unknown_keys: Vec<String>,
    /// Hex SHA-256 of the file bytes.
    pub hash: String,
}

pub fn scenario_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn topology_to_doc(t: &NetworkTopology) -> (Vec<NodeDoc>, Vec<LinkDoc>) {
    let nodes = t
        .nodes
        .iter()
        .map(|n| match &n.kind {
            NodeKind::Source(s) => NodeDoc {
                rep_period: Some(tq(s.rep_period)),
                emission_offset: (s.emission_offset != Picos::ZERO).then(|| tq(s.emission_offset)),
                ..NodeDoc::new(n.id.as_str(), NodeKindDoc::Source)
            },
            NodeKind::BsaSupport(b) => NodeDoc {
                coincidence_window: Some(tq(b.coincidence_window)),
                odl_bounds: Some(b.odl_bounds.map(BoundsDoc::from)),
                odl_setting: (b.odl_setting != [Picos::ZERO; 2]).then(|| b.odl_setting.map(tq)),
                ..NodeDoc::new(n.id.as_str(), NodeKindDoc::Bsa)
            },
            NodeKind::Memory(m) => NodeDoc {
                memory: Some(MemoryDoc::from(m)),
                ..NodeDoc::new(n.id.as_str(), NodeKindDoc::Memory)
            },
            NodeKind::EndDetector => NodeDoc::new(n.id.as_str(), NodeKindDoc::Detector),
        })
        .collect();
    let links = t
        .links
        .iter()
        .map(|l| LinkDoc {
            id: l.id.0.clone(),
            from: EndpointDoc { node: l.from.node.0.clone(), port: l.from.port },
            to: EndpointDoc { node: l.to.node.0.clone(), port: l.to.port },
            channel: match l.channel {
                ChannelKind::Quantum => ChannelDoc::Quantum,
                ChannelKind::ClassicalControl => ChannelDoc::ClassicalControl,
            },
            length_m: l.length_m,
            group_index: l.group_index,
            extra_fixed_delay: tq(l.extra_fixed_delay),
            drift: l.drift_ref.clone(),
            pump: l.pump.map(|p| PumpDoc { bounds: BoundsDoc::from(p.bounds), setting: tq(p.setting) }),
        })
        .collect();
    (nodes, links)
}

pub fn topology_from_doc(nodes: &[NodeDoc], links: &[LinkDoc]) -> Result<NetworkTopology> {
    let nodes = nodes
        .iter()
        .map(|n| {
            let owner = format!("node '{}'", n.id);
            let kind = match n.kind {
                NodeKindDoc::Source => NodeKind::Source(SourceSpec {
                    rep_period: required(n.rep_period, &owner, "rep_period")?.to_picos(),
                    emission_offset: n.emission_offset.map_or(Picos::ZERO, |t| t.to_picos()),
                }),
                NodeKindDoc::Bsa => NodeKind::BsaSupport(BsaSpec {
                    coincidence_window: required(n.coincidence_window, &owner, "coincidence_window")?.to_picos(),
                    odl_bounds: required(n.odl_bounds, &owner, "odl_bounds")?.map(BoundsDoc::to),
                    odl_setting: n.odl_setting.map_or([Picos::ZERO; 2], |s| s.map(|t| t.to_picos())),
                }),
                NodeKindDoc::Memory => NodeKind::Memory(
                    n.memory
                        .as_ref()
                        .ok_or_else(|| Error::Parse(format!("{owner}: missing 'memory'")))?
                        .to(&owner)?,
                ),
                NodeKindDoc::Detector => NodeKind::EndDetector,
            };
            Ok(NodeSpec { id: NodeId::new(n.id.clone()), kind })
        })
        .collect::<Result<Vec<_>>>()?;
    let links = links
        .iter()
        .map(|l| Link {
            id: LinkId::new(l.id.clone()),
            from: Endpoint::new(l.from.node.clone(), l.from.port),
            to: Endpoint::new(l.to.node.clone(), l.to.port),
            channel: match l.channel {
                ChannelDoc::Quantum => ChannelKind::Quantum,
                ChannelDoc::ClassicalControl => ChannelKind::ClassicalControl,
            },
            length_m: l.length_m,
            group_index: l.group_index,
            extra_fixed_delay: l.extra_fixed_delay.to_picos(),
            drift_ref: l.drift.clone(),
            pump: l.pump.as_ref().map(|p| PumpControl { bounds: p.bounds.to(), setting: p.setting.to_picos() }),
        })
        .collect();
    Ok(NetworkTopology { nodes, links })
}

impl ScenarioDocument {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let topology = topology_from_doc(&self.nodes, &self.links)?;
        let s = &self.simulation;
        let memory = self
            .memory
            .as_ref()
            .map(|m| {
                Ok::<_, Error>(MemoryPlacement {
                    sources: m.placements.iter().map(|p| NodeId::new(p.clone())).collect(),
                    spec: m.buffer.to("memory")?,
                })
            })
            .transpose()?;
        let simulation = SimConfig {
            slots: s.slots,
            rep_period: s.rep_period.map(|t| t.to_picos()),
            p_gen: s.p_gen,
            p0: s.p0,
            sigma: s.sigma.to_picos(),
            window: s.window.map(|t| t.to_picos()),
            timing_jitter: s.timing_jitter.to_picos(),
            controller: s.controller.map(|c| ControllerConfig {
                gain: c.gain,
                estimate_window: c.estimate_window,
                max_step: c.max_step.to_picos(),
            }),
            drift_models: self.drift_models.iter().map(DriftModelDoc::to).collect::<Result<_>>()?,
            drift_bindings: s.drift.iter().map(|(l, m)| (LinkId::new(l.clone()), m.clone())).collect(),
            report_interval: s.report_interval,
            record_photons: false,
            p_swap_mem: self.memory.as_ref().map_or(1.0, |m| m.p_swap_mem),
            max_deliveries: s.max_deliveries,
        };
        Ok(Scenario {
            topology,
            strategy: self.strategy,
            simulation,
            seed: s.seed,
            engine: s.engine,
            memory,
            epsilon: self.solver.as_ref().map_or(DEFAULT_EPSILON, |s| s.epsilon.to_picos()),
            output_dir: self.output.as_ref().and_then(|o| o.dir.clone()),
        })
    }
}

impl Scenario {
    /// A scenario around `topology` with default simulation settings.
    pub fn new(topology: NetworkTopology, strategy: StrategyKind) -> Self {
        Scenario {
            topology,
            strategy,
            simulation: SimConfig::default(),
            seed: 0,
            engine: EngineKind::default(),
            memory: None,
            epsilon: DEFAULT_EPSILON,
            output_dir: None,
        }
    }

    pub fn to_document(&self) -> ScenarioDocument {
        let (nodes, links) = topology_to_doc(&self.topology);
        let s = &self.simulation;
        ScenarioDocument {
            nodes,
            links,
            drift_models: s.drift_models.iter().map(DriftModelDoc::from).collect(),
            strategy: self.strategy,
            simulation: SimulationDoc {
                slots: s.slots,
                seed: self.seed,
                rep_period: s.rep_period.map(tq),
                p_gen: s.p_gen,
                p0: s.p0,
                sigma: tq(s.sigma),
                window: s.window.map(tq),
                timing_jitter: tq(s.timing_jitter),
                controller: s.controller.map(|c| ControllerDoc {
                    gain: c.gain,
                    estimate_window: c.estimate_window,
                    max_step: tq(c.max_step),
                }),
                drift: s.drift_bindings.iter().map(|(l, m)| (l.0.clone(), m.clone())).collect(),
                report_interval: s.report_interval,
                engine: self.engine,
                max_deliveries: s.max_deliveries,
            },
            memory: self.memory.as_ref().map(|m| MemorySectionDoc {
                placements: m.sources.iter().map(|n| n.0.clone()).collect(),
                buffer: MemoryDoc::from(&m.spec),
                p_swap_mem: s.p_swap_mem,
            }),
            solver: (self.epsilon != DEFAULT_EPSILON).then(|| SolverDoc { epsilon: tq(self.epsilon) }),
            output: self.output_dir.as_ref().map(|d| OutputDoc { dir: Some(d.clone()) }),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// The topology a run sees: memories placed.
    pub fn effective_topology(&self) -> Result<NetworkTopology> {
        match &self.memory {
            Some(p) => place_memories(&self.topology, p),
            None => Ok(self.topology.clone()),
        }
    }

    /// Structural and configuration problems, collected.
    pub fn validate(&self) -> ValidationReport {
        let mut r = validate_topology(&self.topology);
        if !r.is_empty() {
            return r;
        }
        let topo = match self.effective_topology() {
            Ok(t) => t,
            Err(e) => {
                r.push("memory", e.to_string());
                return r;
            }
        };
        if let Err(e) = self.simulation.prepare(&topo) {
            r.push("simulation", e.to_string());
        }
        if self.epsilon < Picos::ZERO {
            r.push("solver", "epsilon must be >= 0");
        }
        r
    }
}

/// Parses scenario text. Malformed JSON is [`Error::Parse`]; unknown keys
/// are an [`Error::Config`] when `strict`, otherwise reported back.
pub fn parse_scenario(text: &str, strict: bool) -> Result<LoadedScenario> {
    let mut unknown = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDocument = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (i, n) in doc.nodes.iter().enumerate() {
        unknown.extend(n.stray_keys().into_iter().map(|k| format!("nodes.{i}.{k}")));
    }
    for (i, d) in doc.drift_models.iter().enumerate() {
        unknown.extend(d.stray_keys().into_iter().map(|k| format!("drift_models.{i}.{k}")));
    }
    if strict && !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(LoadedScenario {
        scenario: doc.to_scenario()?,
        unknown_keys: unknown,
        hash: scenario_hash(text.as_bytes()),
    })
}

pub fn load_scenario(path: &Path, strict: bool) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, strict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_path_notation;

    fn sample() -> Scenario {
        let mut t = parse_path_notation("DSISISD", 12_345.678).unwrap();
        t.link_mut(&"q2".into()).unwrap().drift_ref = Some("wave".into());
        t.link_mut(&"q3".into()).unwrap().extra_fixed_delay = Picos(17);
        t.insert_memory(&"S3".into(), 1, "M", MemorySpec::fixed_delay(Picos::ns(2))).unwrap();
        let mut s = Scenario::new(t, StrategyKind::PumpPathAdjust);
        s.simulation.drift_models.push(DriftModel {
            id: "wave".into(),
            kind: DriftKind::Sinusoidal { amplitude: 1e-9, period: 1e-2, phase: 0.25 },
        });
        s.simulation.controller = Some(ControllerConfig { gain: 0.5, estimate_window: 20, max_step: Picos::ns(1) });
        s.seed = 99;
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        let text = s.to_json();
        let back = parse_scenario(&text, true).unwrap();
        assert!(back.unknown_keys.is_empty());
        assert_eq!(back.scenario, s);
        assert_eq!(back.scenario.to_json(), text);
    }

    #[test]
    fn units_are_honoured() {
        let mut doc = sample().to_document();
        doc.simulation.sigma = TimeQuantity { value: 0.25, unit: crate::time::TimeUnit::Ns };
        let s = doc.to_scenario().unwrap();
        assert_eq!(s.simulation.sigma, Picos(250));
    }

    #[test]
    fn unknown_keys_strict_and_lenient() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["nodes"][0]["colour"] = "blue".into();
        v["extra"] = 1.into();
        let text = v.to_string();
        assert!(matches!(parse_scenario(&text, true), Err(Error::Config(_))));
        let lenient = parse_scenario(&text, false).unwrap();
        assert_eq!(lenient.unknown_keys.len(), 2, "{:?}", lenient.unknown_keys);
        assert!(lenient.unknown_keys.iter().any(|k| k.contains("colour")));

        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        let bsa = v["nodes"].as_array().unwrap().iter().position(|n| n["kind"] == "bsa").unwrap();
        v["nodes"][bsa]["rep_period"] = serde_json::json!({"value": 1, "unit": "us"});
        let stray = parse_scenario(&v.to_string(), false).unwrap();
        assert_eq!(stray.unknown_keys, vec![format!("nodes.{bsa}.rep_period")]);
    }

    #[test]
    fn parse_errors() {
        let text = sample().to_json();
        assert!(matches!(parse_scenario(&text[..text.len() / 2], true), Err(Error::Parse(_))));
        let bad_unit = text.replacen("\"ps\"", "\"fortnight\"", 1);
        assert!(matches!(parse_scenario(&bad_unit, true), Err(Error::Parse(_))));
        let bad_strategy = text.replace("\"pump-path\"", "\"teleport\"");
        assert!(matches!(parse_scenario(&bad_strategy, true), Err(Error::Parse(_))));
    }

    #[test]
    fn hash_tracks_bytes() {
        let a = sample().to_json();
        let b = a.replace("12345.678", "12345.679");
        assert_eq!(scenario_hash(a.as_bytes()), parse_scenario(&a, true).unwrap().hash);
        assert_ne!(scenario_hash(a.as_bytes()), scenario_hash(b.as_bytes()));
        assert_eq!(scenario_hash(b"").len(), 64);
    }

    #[test]
    fn validation_collects_config_problems() {
        let mut s = sample();
        assert!(s.validate().is_empty(), "{}", s.validate());
        s.simulation.p_gen = 2.0;
        assert!(s.validate().mentions("p_gen"));
        let mut s = sample();
        s.memory = Some(MemoryPlacement { sources: vec!["I2".into()], spec: MemorySpec::hold_until_ready(None) });
        assert!(!s.validate().is_empty());
    }
}
