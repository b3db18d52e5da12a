use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{ChannelKind, MemoryMode, NetworkTopology, NodeKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Node or link id the violation is about.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

/// Checks every structural invariant of a topology. Violations are
/// collected, never raised.
pub fn validate_topology(topo: &NetworkTopology) -> ValidationReport {
    let mut r = ValidationReport::default();

    let mut seen = BTreeSet::new();
    for n in &topo.nodes {
        if !seen.insert(n.id.clone()) {
            r.push(n.id.as_str(), "duplicate node id");
        }
    }
    let mut seen = BTreeSet::new();
    for l in &topo.links {
        if !seen.insert(l.id.clone()) {
            r.push(l.id.as_str(), "duplicate link id");
        }
    }

    let mut periods = BTreeSet::new();
    for n in &topo.nodes {
        let id = n.id.as_str();
        match &n.kind {
            NodeKind::Source(s) => {
                if s.rep_period.0 <= 0 {
                    r.push(id, "rep_period must be > 0");
                } else if s.emission_offset.0 < 0 || s.emission_offset >= s.rep_period {
                    r.push(id, "emission_offset outside [0, rep_period)");
                }
                periods.insert(s.rep_period);
            }
            NodeKind::BsaSupport(b) => {
                if b.coincidence_window.0 < 0 {
                    r.push(id, "coincidence_window < 0");
                }
                for (p, bounds) in b.odl_bounds.iter().enumerate() {
                    if bounds.lo.0 < 0 {
                        r.push(id, format!("odl port {p} lower bound < 0"));
                    }
                    if bounds.lo > bounds.hi {
                        r.push(id, format!("odl port {p} bounds lo > hi"));
                    } else if !bounds.contains(b.odl_setting[p]) {
                        r.push(id, format!("odl port {p} setting outside bounds"));
                    }
                }
            }
            NodeKind::Memory(m) => {
                if let Some(t) = m.coherence_time {
                    if t.0 <= 0 {
                        r.push(id, "coherence_time must be > 0");
                    }
                }
                for (name, e) in [
                    ("capture_efficiency", m.capture_efficiency),
                    ("release_efficiency", m.release_efficiency),
                ] {
                    if !(0.0..=1.0).contains(&e) {
                        r.push(id, format!("{name} outside [0, 1]"));
                    }
                }
                match m.mode {
                    MemoryMode::FixedDelayBuffer { delay } if delay.0 < 0 => {
                        r.push(id, "fixed buffer delay < 0")
                    }
                    MemoryMode::HoldUntilReady { max_hold: Some(h) } if h.0 <= 0 => {
                        r.push(id, "max_hold must be > 0")
                    }
                    _ => {}
                }
                if m.release_phase.0 < 0 {
                    r.push(id, "release_phase < 0");
                }
            }
            NodeKind::EndDetector => {}
        }
    }
    if periods.len() > 1 {
        r.push("sources", "all sources must share one rep_period");
    }

    // Per-port quantum degree bookkeeping.
    let mut q_in: BTreeMap<(&str, u8), usize> = BTreeMap::new();
    let mut q_out: BTreeMap<(&str, u8), usize> = BTreeMap::new();
    let mut pumps_per_source: BTreeMap<&str, usize> = BTreeMap::new();

    for l in &topo.links {
        let id = l.id.as_str();
        if !(l.length_m >= 0.0 && l.length_m.is_finite()) {
            r.push(id, "length < 0");
        }
        if !(l.group_index >= 1.0 && l.group_index.is_finite()) {
            r.push(id, "group_index < 1");
        }
        if l.extra_fixed_delay.0 < 0 {
            r.push(id, "extra_fixed_delay < 0");
        }
        let from = topo.node(&l.from.node);
        let to = topo.node(&l.to.node);
        if from.is_none() {
            r.push(id, format!("dangling endpoint '{}'", l.from.node));
        }
        if to.is_none() {
            r.push(id, format!("dangling endpoint '{}'", l.to.node));
        }
        let (Some(from), Some(to)) = (from, to) else {
            continue;
        };
        match l.channel {
            ChannelKind::Quantum => {
                if from.is_bsa() && to.is_bsa() {
                    r.push(id, "quantum link joins two BSA ports");
                    continue;
                }
                let out_ok = match &from.kind {
                    NodeKind::Source(_) => l.from.port < 2,
                    NodeKind::Memory(_) => l.from.port == 1,
                    _ => false,
                };
                if !out_ok {
                    r.push(
                        id,
                        format!(
                            "quantum link cannot leave {} port {}",
                            from.kind.label(),
                            l.from.port
                        ),
                    );
                }
                let in_ok = match &to.kind {
                    NodeKind::BsaSupport(_) => l.to.port < 2,
                    NodeKind::Memory(_) | NodeKind::EndDetector => l.to.port == 0,
                    NodeKind::Source(_) => false,
                };
                if !in_ok {
                    r.push(
                        id,
                        format!(
                            "quantum link cannot enter {} port {}",
                            to.kind.label(),
                            l.to.port
                        ),
                    );
                }
                *q_out.entry((from.id.as_str(), l.from.port)).or_default() += 1;
                *q_in.entry((to.id.as_str(), l.to.port)).or_default() += 1;
            }
            ChannelKind::ClassicalControl => {
                if let Some(p) = &l.pump {
                    if !(from.is_bsa() && to.is_source()) {
                        r.push(id, "pump control must run from a BSA to a source");
                    }
                    if p.bounds.lo > p.bounds.hi || p.bounds.lo.0 < 0 {
                        r.push(id, "pump bounds invalid");
                    } else if !p.bounds.contains(p.setting) {
                        r.push(id, "pump setting outside bounds");
                    }
                    *pumps_per_source.entry(to.id.as_str()).or_default() += 1;
                }
            }
        }
    }
    for (src, n) in pumps_per_source {
        if n > 1 {
            r.push(src, format!("{n} pump links feed one source"));
        }
    }

    for n in &topo.nodes {
        let id = n.id.as_str();
        let din = |p: u8| q_in.get(&(id, p)).copied().unwrap_or(0);
        let dout = |p: u8| q_out.get(&(id, p)).copied().unwrap_or(0);
        match &n.kind {
            NodeKind::BsaSupport(_) => {
                let total = din(0) + din(1);
                if total != 2 {
                    r.push(id, format!("quantum in-degree {total} ≠ 2"));
                } else if din(0) != 1 || din(1) != 1 {
                    r.push(id, "each BSA input port needs exactly one quantum link");
                }
            }
            NodeKind::Source(_) => {
                for p in 0..2 {
                    if dout(p) != 1 {
                        r.push(id, format!("source port {p} has {} quantum links, needs 1", dout(p)));
                    }
                }
            }
            NodeKind::Memory(_) => {
                if din(0) != 1 || dout(1) != 1 {
                    r.push(id, "memory needs one quantum input and one output");
                }
            }
            NodeKind::EndDetector => {
                if din(0) > 1 {
                    r.push(id, "detector has more than one quantum input");
                }
            }
        }
    }

    // Every BSA input must trace back to an emitter.
    if r.is_empty() {
        for b in topo.bsa_ids() {
            for port in 0..2 {
                if let Err(e) = topo.trace_to_emitter(&b, port) {
                    r.push(b.as_str(), e.to_string());
                }
            }
        }
    }
    r
}
