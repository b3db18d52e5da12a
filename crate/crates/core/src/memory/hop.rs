use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{stream, swap_probability, BsaMetrics, RunMetrics, SimConfig};
use crate::solver::{build_constraints, static_arrival};
use crate::strategy::{capability_of, StrategyKind};
use crate::time::Picos;
use crate::topology::{MemoryMode, MemorySpec, NetworkTopology, NodeId, NodeKind, Terminal};

use super::buffer::QuantumBuffer;

/// Hold memories to co-locate with sources, on each source's port 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryPlacement {
    pub sources: Vec<NodeId>,
    pub spec: MemorySpec,
}

pub fn memory_id_for(source: &NodeId) -> String {
    format!("M_{source}")
}

/// Copy of `topo` with the placed memories inserted.
pub fn place_memories(topo: &NetworkTopology, placement: &MemoryPlacement) -> Result<NetworkTopology> {
    let mut t = topo.clone();
    for s in &placement.sources {
        if !t.node(s).is_some_and(|n| n.is_source()) {
            return Err(Error::Config(format!("memory placement names '{s}', which is not a source")));
        }
        match t.trace_forward(s, 1) {
            Ok(f) if matches!(f.terminal, Terminal::Bsa(..)) => {}
            _ => {
                return Err(Error::Config(format!(
                    "memory placement at '{s}': port 1 does not lead to a BSA"
                )))
            }
        }
        t.insert_memory(s, 1, &memory_id_for(s), placement.spec.clone())?;
    }
    Ok(t)
}

/// BSAs as nodes, joined when their constraints share an adjustable variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CouplingGraph {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn coupling_graph(topo: &NetworkTopology, strategy: StrategyKind) -> Result<CouplingGraph> {
    let sys = build_constraints(topo, &capability_of(strategy, topo))?;
    let mut edges = BTreeSet::new();
    for (_, used) in sys.uses() {
        for (i, &a) in used.iter().enumerate() {
            for &b in &used[i + 1..] {
                let (x, y) = (sys.constraints[a].bsa.clone(), sys.constraints[b].bsa.clone());
                if x != y {
                    edges.insert(if x < y { (x, y) } else { (y, x) });
                }
            }
        }
    }
    Ok(CouplingGraph {
        nodes: sys.constraints.iter().map(|c| c.bsa.clone()).collect(),
        edges: edges.into_iter().collect(),
    })
}

struct Segment {
    sources: Vec<NodeId>,
    bsas: Vec<(usize, f64)>,
    rng: ChaCha8Rng,
    /// Buffers this segment fills on success: (station, side).
    ends: Vec<(usize, usize)>,
    holding: bool,
}

struct Station {
    buffers: [QuantumBuffer<()>; 2],
    rng: ChaCha8Rng,
}

/// Component label over BSAs, sources and hold memories: a BSA joins the
/// emitters of both its inputs. Labels follow the smallest member id.
fn segments_of(topo: &NetworkTopology) -> Result<BTreeMap<NodeId, usize>> {
    let mut members: Vec<NodeId> = Vec::new();
    let mut edges = Vec::new();
    for b in topo.bsa_ids() {
        members.push(b.clone());
        for port in 0..2 {
            let e = topo.trace_to_emitter(&b, port)?.emitter;
            members.push(e.clone());
            edges.push((b.clone(), e));
        }
    }
    members.sort();
    members.dedup();
    let idx = |n: &NodeId| members.binary_search(n).expect("member");
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in &edges {
        let (ra, rb) = (find(&mut parent, idx(a)), find(&mut parent, idx(b)));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut label = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (i, m) in members.iter().enumerate() {
        let r = find(&mut parent, i);
        let next = label.len();
        let l = *label.entry(r).or_insert(next);
        out.insert(m.clone(), l);
    }
    Ok(out)
}

/// Hop-by-hop delivery with hold memories as stations.
///
/// Each segment (BSAs linked by shared sources) retries every slot until all
/// its sources fire and all its swaps succeed at their static Δ; its ends are
/// then captured in the adjacent station buffers. Once every segment holds,
/// each station releases both buffers and attempts a deferred swap with
/// probability `p_swap_mem`. Success on all stations is one delivery; any
/// failure clears everything.
pub fn run_hop_by_hop(topo: &NetworkTopology, strategy: StrategyKind, cfg: &SimConfig, seed: u64) -> Result<RunMetrics> {
    let topo = cfg.prepare(topo)?;
    let period = topo.rep_period().ok_or_else(|| Error::InvalidTopology("no sources".into()))?;
    let label = segments_of(&topo)?;
    let n_seg = label.values().copied().max().map_or(0, |m| m + 1);

    let bsa_ids = topo.bsa_ids();
    let mut segs: Vec<Segment> = (0..n_seg)
        .map(|_| Segment {
            sources: Vec::new(),
            bsas: Vec::new(),
            rng: stream(seed, "segment", ""),
            ends: Vec::new(),
            holding: false,
        })
        .collect();
    let mut first_bsa: Vec<Option<NodeId>> = vec![None; n_seg];
    for (i, b) in bsa_ids.iter().enumerate() {
        let s = label[b];
        let d = static_arrival(&topo, strategy, b, 0)? - static_arrival(&topo, strategy, b, 1)?;
        let d = d.centered_mod(period);
        let window = topo.node(b).and_then(|n| n.as_bsa()).expect("bsa").coincidence_window;
        let p = if d.abs() <= window { swap_probability(d, cfg.p0, cfg.sigma) } else { 0.0 };
        segs[s].bsas.push((i, p));
        first_bsa[s].get_or_insert_with(|| b.clone());
    }
    for n in &topo.nodes {
        if n.is_source() {
            if let Some(&s) = label.get(&n.id) {
                segs[s].sources.push(n.id.clone());
            }
        }
    }

    let mut stations = Vec::new();
    for n in &topo.nodes {
        let NodeKind::Memory(m) = &n.kind else { continue };
        if !m.is_hold() {
            continue;
        }
        let Some(&down) = label.get(&n.id) else { continue };
        let up_source = topo.trace_upstream_source(&n.id)?;
        let up = match label.get(&up_source) {
            Some(&s) => s,
            None => {
                // A source feeding only this memory and a detector is its own segment.
                segs.push(Segment {
                    sources: vec![up_source.clone()],
                    bsas: Vec::new(),
                    rng: stream(seed, "segment", ""),
                    ends: Vec::new(),
                    holding: false,
                });
                first_bsa.push(Some(up_source.clone()));
                segs.len() - 1
            }
        };
        let k = stations.len();
        segs[up].ends.push((k, 0));
        segs[down].ends.push((k, 1));
        stations.push(Station {
            buffers: [QuantumBuffer::new(n.id.clone(), m.clone()), QuantumBuffer::new(n.id.clone(), m.clone())],
            rng: stream(seed, "station", n.id.as_str()),
        });
    }
    for (s, name) in segs.iter_mut().zip(&first_bsa) {
        s.rng = stream(seed, "segment", name.as_ref().map_or("", |n| n.as_str()));
    }

    let mut metrics = RunMetrics {
        seed,
        slots: 0,
        bsas: bsa_ids
            .iter()
            .map(|b| BsaMetrics {
                bsa: b.clone(),
                ..BsaMetrics::default()
            })
            .collect(),
        ..RunMetrics::default()
    };
    let mut last = -1i64;
    let mut latency_sum = 0i64;
    for k in 0..cfg.slots as i64 {
        metrics.slots += 1;
        let now = Picos(period.0 * k);
        // Expire stored halves that outlived max_hold.
        for st in 0..stations.len() {
            for side in 0..2 {
                let b = &stations[st].buffers[side];
                let expired = match (b.stored_at(), b.spec.mode) {
                    (Some(at), MemoryMode::HoldUntilReady { max_hold: Some(m) }) => now - at > m,
                    _ => false,
                };
                if expired {
                    metrics.retention_losses += 1;
                    let owner = segs.iter().position(|s| s.ends.contains(&(st, side))).expect("owner");
                    reset_segment(&mut segs[owner], &mut stations);
                }
            }
        }

        let mut all_fired = true;
        for seg in segs.iter_mut() {
            if seg.holding {
                continue;
            }
            let mut ok = true;
            for _ in &seg.sources {
                let f = seg.rng.random::<f64>() < cfg.p_gen;
                ok &= f;
            }
            all_fired &= ok;
            for &(i, p) in &seg.bsas {
                let bm = &mut metrics.bsas[i];
                if ok {
                    bm.paired += 1;
                    bm.coincidences += u64::from(p > 0.0);
                }
                let swap = seg.rng.random::<f64>() < p;
                if ok && swap {
                    bm.swaps += 1;
                }
                ok &= swap;
            }
            if !ok {
                continue;
            }
            let mut captured = true;
            for &(st, side) in &seg.ends {
                let station = &mut stations[st];
                captured &= station.buffers[side].store((), now, &mut station.rng)?;
            }
            if captured {
                seg.holding = true;
            } else {
                metrics.capture_losses += 1;
                for &(st, side) in &seg.ends {
                    stations[st].buffers[side].clear();
                }
            }
        }
        if all_fired {
            metrics.all_sources_fired += 1;
        }

        if segs.iter().all(|s| s.holding) {
            let mut ok = true;
            for st in &mut stations {
                for side in 0..2 {
                    let out = st.buffers[side].release(now, &mut st.rng)?;
                    if out.payload.is_none() {
                        metrics.retention_losses += 1;
                        ok = false;
                    }
                }
                ok &= st.rng.random::<f64>() < cfg.p_swap_mem;
            }
            for s in &mut segs {
                s.holding = false;
            }
            if ok {
                metrics.end_to_end += 1;
                latency_sum += k - last;
                last = k;
                if cfg.max_deliveries.is_some_and(|m| metrics.end_to_end >= m) {
                    break;
                }
            }
        }
    }
    metrics.mean_delivery_latency_slots =
        (metrics.end_to_end > 0).then(|| latency_sum as f64 / metrics.end_to_end as f64);
    Ok(metrics)
}

fn reset_segment(seg: &mut Segment, stations: &mut [Station]) {
    seg.holding = false;
    for &(st, side) in &seg.ends {
        stations[st].buffers[side].clear();
    }
}
