//! Network description: photon sources, BSA support nodes, memories, end
//! detectors, and the fiber links between them.
//!
//! Quantum links are directed along the photon's direction of travel.
//! Port conventions:
//!
//! | node kind    | ports                                   |
//! |--------------|-----------------------------------------|
//! | `Source`     | out 0 (left photon), out 1 (right photon) |
//! | `BsaSupport` | in 0 (left input), in 1 (right input)   |
//! | `Memory`     | in 0, out 1 (buffer on a quantum path)  |
//! | `EndDetector`| in 0                                    |
//!
//! Classical-control links carry the pump pulse or trigger from a BSA
//! support node to a source; a control link with [`PumpControl`] attached is
//! the adjustable pump path of that source.

mod notation;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{Picos, SPEED_OF_LIGHT};

pub use notation::{parse_path_notation, parse_path_notation_with, ring_topology, ChainParams, PathNotation};
pub use validate::{validate_topology, ValidationReport, Violation};

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl LinkId {
    pub fn new(s: impl Into<String>) -> Self {
        LinkId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<&str> for LinkId {
    fn from(s: &str) -> Self {
        LinkId(s.to_string())
    }
}

/// Closed interval of adjustable delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub lo: Picos,
    pub hi: Picos,
}

impl Bounds {
    pub const fn new(lo: Picos, hi: Picos) -> Self {
        Bounds { lo, hi }
    }

    pub fn contains(&self, v: Picos) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> Picos {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    /// Photon-pair emission repetition period.
    pub rep_period: Picos,
    /// Phase of emission within the period.
    pub emission_offset: Picos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BsaSpec {
    pub coincidence_window: Picos,
    /// Adjustable ODL range per input port.
    pub odl_bounds: [Bounds; 2],
    /// Current ODL setting per input port.
    pub odl_setting: [Picos; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MemoryMode {
    /// Re-emits every stored photon after exactly `delay`.
    FixedDelayBuffer { delay: Picos },
    /// Holds a photon until the next release instant of the memory's own
    /// clock phase; photons waiting longer than `max_hold` are lost.
    /// `None` means unbounded.
    HoldUntilReady { max_hold: Option<Picos> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemorySpec {
    /// `None` is an infinite coherence time.
    pub coherence_time: Option<Picos>,
    pub mode: MemoryMode,
    pub capture_efficiency: f64,
    pub release_efficiency: f64,
    /// Release phase within the period (hold mode only).
    pub release_phase: Picos,
}

impl MemorySpec {
    pub fn hold_until_ready(max_hold: Option<Picos>) -> Self {
        MemorySpec {
            coherence_time: None,
            mode: MemoryMode::HoldUntilReady { max_hold },
            capture_efficiency: 1.0,
            release_efficiency: 1.0,
            release_phase: Picos::ZERO,
        }
    }

    pub fn fixed_delay(delay: Picos) -> Self {
        MemorySpec {
            mode: MemoryMode::FixedDelayBuffer { delay },
            ..Self::hold_until_ready(None)
        }
    }

    pub fn is_hold(&self) -> bool {
        matches!(self.mode, MemoryMode::HoldUntilReady { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Source(SourceSpec),
    BsaSupport(BsaSpec),
    Memory(MemorySpec),
    EndDetector,
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Source(_) => "source",
            NodeKind::BsaSupport(_) => "bsa",
            NodeKind::Memory(_) => "memory",
            NodeKind::EndDetector => "detector",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl NodeSpec {
    pub fn as_source(&self) -> Option<&SourceSpec> {
        match &self.kind {
            NodeKind::Source(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bsa(&self) -> Option<&BsaSpec> {
        match &self.kind {
            NodeKind::BsaSupport(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_memory(&self) -> Option<&MemorySpec> {
        match &self.kind {
            NodeKind::Memory(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_source(&self) -> bool {
        self.as_source().is_some()
    }

    pub fn is_bsa(&self) -> bool {
        self.as_bsa().is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: u8,
}

impl Endpoint {
    pub fn new(node: impl Into<String>, port: u8) -> Self {
        Endpoint {
            node: NodeId(node.into()),
            port,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Quantum,
    ClassicalControl,
}

/// Adjustable delay on a pump/trigger path from a BSA support node to a source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PumpControl {
    pub bounds: Bounds,
    pub setting: Picos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: Endpoint,
    pub to: Endpoint,
    pub channel: ChannelKind,
    pub length_m: f64,
    pub group_index: f64,
    pub extra_fixed_delay: Picos,
    pub drift_ref: Option<String>,
    pub pump: Option<PumpControl>,
}

impl Link {
    pub fn quantum(id: &str, from: Endpoint, to: Endpoint, length_m: f64, group_index: f64) -> Self {
        Link {
            id: LinkId::new(id),
            from,
            to,
            channel: ChannelKind::Quantum,
            length_m,
            group_index,
            extra_fixed_delay: Picos::ZERO,
            drift_ref: None,
            pump: None,
        }
    }

    pub fn is_quantum(&self) -> bool {
        self.channel == ChannelKind::Quantum
    }

    pub fn touches(&self, node: &NodeId) -> bool {
        &self.from.node == node || &self.to.node == node
    }
}

/// Fixed propagation delay of a link in seconds: `length * n / c + extra`.
pub fn propagation_delay(link: &Link) -> f64 {
    link.length_m * link.group_index / SPEED_OF_LIGHT + link.extra_fixed_delay.as_seconds()
}

/// [`propagation_delay`] rounded to whole picoseconds.
pub fn propagation_delay_ps(link: &Link) -> Picos {
    Picos((link.length_m * link.group_index * 1e12 / SPEED_OF_LIGHT).round() as i64)
        + link.extra_fixed_delay
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkTopology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<Link>,
}

/// Where the timing of a photon arriving at a BSA originates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitterKind {
    Source,
    /// A hold-until-ready memory re-times the photon on its own phase.
    HoldMemory,
}

/// The quantum path from an emitter to a BSA input port.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonPath {
    pub emitter: NodeId,
    pub emitter_kind: EmitterKind,
    /// Links in travel order, emitter first.
    pub links: Vec<LinkId>,
    /// Σ propagation delay over `links` plus fixed-buffer memory delays.
    pub fixed_delay: Picos,
    /// The upstream source when the emitter is a hold memory.
    pub upstream_source: Option<NodeId>,
}

/// Where a photon leaving an emitter port ends up.
#[derive(Clone, Debug, PartialEq)]
pub enum Terminal {
    Bsa(NodeId, u8),
    Detector(NodeId),
    HoldMemory(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPath {
    pub links: Vec<LinkId>,
    /// Fixed-delay memories passed through, in order.
    pub buffers: Vec<NodeId>,
    pub terminal: Terminal,
}

impl NetworkTopology {
    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| &n.id == id)
    }

    pub fn link(&self, id: &LinkId) -> Option<&Link> {
        self.links.iter().find(|l| &l.id == id)
    }

    pub fn link_mut(&mut self, id: &LinkId) -> Option<&mut Link> {
        self.links.iter_mut().find(|l| &l.id == id)
    }

    /// BSA support node ids in ascending order.
    pub fn bsa_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.is_bsa())
            .map(|n| n.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Source ids in ascending order.
    pub fn source_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.is_source())
            .map(|n| n.id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn quantum_into(&self, node: &NodeId, port: u8) -> impl Iterator<Item = &Link> {
        let node = node.clone();
        self.links
            .iter()
            .filter(move |l| l.is_quantum() && l.to.node == node && l.to.port == port)
    }

    pub fn quantum_out_of(&self, node: &NodeId, port: u8) -> impl Iterator<Item = &Link> {
        let node = node.clone();
        self.links
            .iter()
            .filter(move |l| l.is_quantum() && l.from.node == node && l.from.port == port)
    }

    /// The pump control link feeding `source`, if it has one.
    pub fn pump_link_of(&self, source: &NodeId) -> Option<&Link> {
        self.links.iter().find(|l| {
            l.channel == ChannelKind::ClassicalControl && l.pump.is_some() && &l.to.node == source
        })
    }

    /// Common emission period of all sources, if any source exists.
    pub fn rep_period(&self) -> Option<Picos> {
        self.nodes
            .iter()
            .filter_map(|n| n.as_source())
            .map(|s| s.rep_period)
            .next()
    }

    /// Walks backwards from a BSA input port to the emitter that sets the
    /// photon's timing, passing through fixed-delay memories.
    pub fn trace_to_emitter(&self, bsa: &NodeId, port: u8) -> Result<PhotonPath> {
        let mut links = Vec::new();
        let mut fixed = Picos::ZERO;
        let mut at = Endpoint {
            node: bsa.clone(),
            port,
        };
        for _ in 0..=self.links.len() {
            let mut incoming = self.quantum_into(&at.node, at.port);
            let link = incoming.next().ok_or_else(|| {
                Error::InvalidTopology(format!("no quantum link into {}:{}", at.node, at.port))
            })?;
            if incoming.next().is_some() {
                return Err(Error::InvalidTopology(format!(
                    "several quantum links into {}:{}",
                    at.node, at.port
                )));
            }
            links.push(link.id.clone());
            fixed += propagation_delay_ps(link);
            let from = self
                .node(&link.from.node)
                .ok_or_else(|| Error::UnknownNode(link.from.node.0.clone()))?;
            match &from.kind {
                NodeKind::Source(_) => {
                    links.reverse();
                    return Ok(PhotonPath {
                        emitter: from.id.clone(),
                        emitter_kind: EmitterKind::Source,
                        links,
                        fixed_delay: fixed,
                        upstream_source: None,
                    });
                }
                NodeKind::Memory(m) => match m.mode {
                    MemoryMode::FixedDelayBuffer { delay } => {
                        fixed += delay;
                        at = Endpoint {
                            node: from.id.clone(),
                            port: 0,
                        };
                    }
                    MemoryMode::HoldUntilReady { .. } => {
                        links.reverse();
                        let upstream = self.trace_upstream_source(&from.id)?;
                        return Ok(PhotonPath {
                            emitter: from.id.clone(),
                            emitter_kind: EmitterKind::HoldMemory,
                            links,
                            fixed_delay: fixed,
                            upstream_source: Some(upstream),
                        });
                    }
                },
                other => {
                    return Err(Error::InvalidTopology(format!(
                        "quantum link '{}' leaves a {} node",
                        link.id,
                        other.label()
                    )))
                }
            }
        }
        Err(Error::InvalidTopology(format!(
            "memory loop upstream of {bsa}:{port}"
        )))
    }

    /// The source feeding a memory, walking back through any chain of memories.
    pub fn trace_upstream_source(&self, memory: &NodeId) -> Result<NodeId> {
        let mut at = memory.clone();
        for _ in 0..=self.links.len() {
            let link = self.quantum_into(&at, 0).next().ok_or_else(|| {
                Error::InvalidTopology(format!("memory '{at}' has no input"))
            })?;
            let from = self
                .node(&link.from.node)
                .ok_or_else(|| Error::UnknownNode(link.from.node.0.clone()))?;
            match from.kind {
                NodeKind::Source(_) => return Ok(from.id.clone()),
                NodeKind::Memory(_) => at = from.id.clone(),
                _ => {
                    return Err(Error::InvalidTopology(format!(
                        "memory '{at}' is not fed by a source"
                    )))
                }
            }
        }
        Err(Error::InvalidTopology(format!("memory loop at '{memory}'")))
    }

    /// Follows a photon leaving `node:port` until it reaches a BSA, a
    /// detector or a hold memory.
    pub fn trace_forward(&self, node: &NodeId, port: u8) -> Result<ForwardPath> {
        let mut links = Vec::new();
        let mut buffers = Vec::new();
        let mut at = Endpoint {
            node: node.clone(),
            port,
        };
        for _ in 0..=self.links.len() {
            let link = self.quantum_out_of(&at.node, at.port).next().ok_or_else(|| {
                Error::InvalidTopology(format!("no quantum link out of {}:{}", at.node, at.port))
            })?;
            links.push(link.id.clone());
            let to = self
                .node(&link.to.node)
                .ok_or_else(|| Error::UnknownNode(link.to.node.0.clone()))?;
            match &to.kind {
                NodeKind::BsaSupport(_) => {
                    return Ok(ForwardPath {
                        links,
                        buffers,
                        terminal: Terminal::Bsa(to.id.clone(), link.to.port),
                    })
                }
                NodeKind::EndDetector => {
                    return Ok(ForwardPath {
                        links,
                        buffers,
                        terminal: Terminal::Detector(to.id.clone()),
                    })
                }
                NodeKind::Memory(m) if m.is_hold() => {
                    return Ok(ForwardPath {
                        links,
                        buffers,
                        terminal: Terminal::HoldMemory(to.id.clone()),
                    })
                }
                NodeKind::Memory(_) => {
                    buffers.push(to.id.clone());
                    at = Endpoint {
                        node: to.id.clone(),
                        port: 1,
                    };
                }
                NodeKind::Source(_) => {
                    return Err(Error::InvalidTopology(format!(
                        "quantum link '{}' terminates on source '{}'",
                        link.id, to.id
                    )))
                }
            }
        }
        Err(Error::InvalidTopology(format!("memory loop after {node}:{port}")))
    }

    /// BSAs whose photons originate (through any memories) at `source`.
    pub fn bsas_fed_by_source(&self, source: &NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        for port in 0..2u8 {
            let mut at = (source.clone(), port);
            for _ in 0..=self.links.len() {
                let Ok(fwd) = self.trace_forward(&at.0, at.1) else {
                    break;
                };
                match fwd.terminal {
                    Terminal::Bsa(b, _) => {
                        out.push(b);
                        break;
                    }
                    Terminal::HoldMemory(m) => at = (m, 1),
                    Terminal::Detector(_) => break,
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Inserts a memory on the quantum path leaving `source:port`, co-located
    /// with the source (the new source→memory link has zero length).
    pub fn insert_memory(&mut self, source: &NodeId, port: u8, memory_id: &str, spec: MemorySpec) -> Result<()> {
        let idx = self
            .links
            .iter()
            .position(|l| l.is_quantum() && &l.from.node == source && l.from.port == port)
            .ok_or_else(|| Error::Config(format!("no quantum link out of {source}:{port}")))?;
        if self.node(&NodeId::new(memory_id)).is_some() {
            return Err(Error::Config(format!("node id '{memory_id}' already exists")));
        }
        let group_index = self.links[idx].group_index;
        let feed = Link::quantum(
            &format!("{}~{}", self.links[idx].id, memory_id),
            Endpoint::new(source.0.clone(), port),
            Endpoint::new(memory_id, 0),
            0.0,
            group_index,
        );
        self.links[idx].from = Endpoint::new(memory_id, 1);
        self.links.insert(idx, feed);
        self.nodes.push(NodeSpec {
            id: NodeId::new(memory_id),
            kind: NodeKind::Memory(spec),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(length: f64, n: f64, extra: Picos) -> Link {
        Link {
            extra_fixed_delay: extra,
            ..Link::quantum("l", Endpoint::new("a", 0), Endpoint::new("b", 0), length, n)
        }
    }

    #[test]
    fn delay_of_zero_length_is_zero() {
        assert_eq!(propagation_delay(&link(0.0, 1.468, Picos::ZERO)), 0.0);
        assert_eq!(propagation_delay_ps(&link(0.0, 1.468, Picos::ZERO)), Picos::ZERO);
    }

    #[test]
    fn one_light_second() {
        let d = propagation_delay(&link(299_792_458.0, 1.0, Picos::ZERO));
        assert_eq!(d, 1.0);
        assert_eq!(propagation_delay_ps(&link(299_792_458.0, 1.0, Picos::ZERO)), Picos(1_000_000_000_000));
    }

    #[test]
    fn ten_km_of_fiber() {
        // 10 000 * 1.468 / 299 792 458 = 4.89672...e-5 s
        let d = propagation_delay(&link(10_000.0, 1.468, Picos::ZERO));
        assert!((d - 4.8967e-5).abs() < 1e-9, "{d}");
        assert_eq!(propagation_delay_ps(&link(10_000.0, 1.468, Picos::ZERO)), Picos(48_967_209));
    }

    #[test]
    fn extra_delay_adds() {
        assert_eq!(propagation_delay_ps(&link(0.0, 1.0, Picos::ns(3))), Picos::ns(3));
    }

    #[test]
    fn memory_insertion_keeps_path() {
        let mut topo = parse_path_notation("DSISD", 1000.0).unwrap();
        let before = topo.trace_to_emitter(&"I2".into(), 1).unwrap();
        topo.insert_memory(&"S3".into(), 0, "M", MemorySpec::fixed_delay(Picos::ns(5)))
            .unwrap();
        let after = topo.trace_to_emitter(&"I2".into(), 1).unwrap();
        assert_eq!(after.emitter, before.emitter);
        assert_eq!(after.fixed_delay, before.fixed_delay + Picos::ns(5));
        assert!(validate_topology(&topo).is_empty());
    }
}
