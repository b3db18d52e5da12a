use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::memory::survival_probability;
use crate::solver::static_arrival;
use crate::strategy::StrategyKind;
use crate::time::Picos;
use crate::topology::{propagation_delay_ps, EmitterKind, MemoryMode, NetworkTopology, NodeId, Terminal};

use super::{swap_probability, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub per_slot: f64,
    pub per_second: f64,
    /// Static Δ at each BSA, reduced modulo the period.
    pub static_delta: BTreeMap<NodeId, Picos>,
    pub swap_probability: BTreeMap<NodeId, f64>,
}

/// Static Δ at a BSA folded into one period, as the slot pairing sees it.
pub(crate) fn paired_delta(topo: &NetworkTopology, strategy: StrategyKind, bsa: &NodeId, period: Picos) -> Result<(Picos, i64)> {
    let d = static_arrival(topo, strategy, bsa, 0)? - static_arrival(topo, strategy, bsa, 1)?;
    let c = d.centered_mod(period);
    Ok((c, (d - c).0 / period.0))
}

/// Expected end-to-end successes per slot and per second for a memoryless
/// run without drift or feedback: every source fires, every BSA swaps at
/// its static Δ, and every hold memory keeps its photon.
pub fn end_to_end_rate_analytic(topo: &NetworkTopology, strategy: StrategyKind, cfg: &SimConfig) -> Result<RateEstimate> {
    let topo = cfg.prepare(topo)?;
    let period = topo.rep_period().ok_or_else(|| Error::InvalidTopology("no sources".into()))?;
    let mut per_slot = cfg.p_gen.powi(topo.source_ids().len() as i32);
    let mut static_delta = BTreeMap::new();
    let mut probs = BTreeMap::new();
    for b in topo.bsa_ids() {
        let (delta, _) = paired_delta(&topo, strategy, &b, period)?;
        let window = topo.node(&b).and_then(|n| n.as_bsa()).expect("bsa").coincidence_window;
        let p = if delta.abs() <= window {
            swap_probability(delta, cfg.p0, cfg.sigma)
        } else {
            0.0
        };
        per_slot *= p;
        static_delta.insert(b.clone(), delta);
        probs.insert(b.clone(), p);
        for port in 0..2 {
            let path = topo.trace_to_emitter(&b, port)?;
            if path.emitter_kind == EmitterKind::HoldMemory {
                per_slot *= hold_factor(&topo, strategy, &path.emitter, period)?;
            }
        }
    }
    Ok(RateEstimate {
        per_slot,
        per_second: per_slot / period.as_seconds(),
        static_delta,
        swap_probability: probs,
    })
}

fn hold_factor(topo: &NetworkTopology, strategy: StrategyKind, memory: &NodeId, period: Picos) -> Result<f64> {
    let spec = topo.node(memory).and_then(|n| n.as_memory()).expect("memory").clone();
    let source = topo.trace_upstream_source(memory)?;
    let mut arrive = crate::solver::emission_epoch(topo, &source, strategy)?;
    let fwd = (0..2u8)
        .filter_map(|port| topo.trace_forward(&source, port).ok())
        .find(|f| f.terminal == Terminal::HoldMemory(memory.clone()))
        .ok_or_else(|| Error::InvalidTopology(format!("memory '{memory}' is not reachable from '{source}'")))?;
    for l in &fwd.links {
        arrive += propagation_delay_ps(topo.link(l).expect("link"));
    }
    for buf in &fwd.buffers {
        if let Some(MemoryMode::FixedDelayBuffer { delay }) = topo.node(buf).and_then(|n| n.as_memory()).map(|m| m.mode) {
            arrive += delay;
        }
    }
    let wait = (spec.release_phase - arrive).rem_euclid(period);
    if let MemoryMode::HoldUntilReady { max_hold: Some(m) } = spec.mode {
        if wait > m {
            return Ok(0.0);
        }
    }
    Ok(spec.capture_efficiency * survival_probability(&spec, wait))
}
