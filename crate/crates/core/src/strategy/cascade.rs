use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::{build_constraints, solve, Solution, TimingAssignment, VarId, VarKind, DEFAULT_EPSILON};
use crate::topology::{ChannelKind, LinkId, NetworkTopology, NodeId, NodeKind, Terminal};

use super::{capability_of, StrategyKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CascadeReport {
    pub strategy: StrategyKind,
    pub perturbed_link: LinkId,
    pub delta_length_m: f64,
    /// Variables whose canonical value moved by more than the tolerance.
    pub affected_variables: Vec<VarId>,
    pub affected_bsas: Vec<NodeId>,
    /// BSA hops from the perturbed link to the farthest affected BSA.
    pub cascade_depth: usize,
    pub psd_partition: Vec<Vec<NodeId>>,
    pub infeasible_after_perturbation: bool,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Photonic synchronization domains: nodes whose timing variables are
/// mutually constrained under `strategy`.
///
/// Each BSA is joined with the nodes hosting the adjustable variables of
/// its constraint (the BSA for ODLs, the source for emission offsets,
/// source and commanding BSA for pump paths, the memory for hold phases).
/// A non-adjustable emitter that feeds only one BSA joins that BSA.
/// Everything else, detectors included, stays a singleton.
pub fn psd_of(topo: &NetworkTopology, strategy: StrategyKind) -> Result<Vec<Vec<NodeId>>> {
    let on_path: BTreeSet<&NodeId> = topo
        .links
        .iter()
        .filter(|l| l.is_quantum())
        .flat_map(|l| [&l.from.node, &l.to.node])
        .collect();
    let index: BTreeMap<&NodeId, usize> = on_path.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut dsu = Dsu::new(index.len());

    if !topo.bsa_ids().is_empty() {
        let sys = build_constraints(topo, &capability_of(strategy, topo))?;
        let mut feeds: BTreeMap<&NodeId, usize> = BTreeMap::new();
        for c in &sys.constraints {
            for e in [&c.left, &c.right] {
                *feeds.entry(&e.emitter).or_default() += 1;
            }
        }
        for c in &sys.constraints {
            let b = index[&c.bsa];
            for v in c.variables() {
                let hosts: Vec<NodeId> = match &sys.variables[v].kind {
                    VarKind::OdlDelay(n, _) | VarKind::EmissionOffset(n) | VarKind::HoldPhase(n) => vec![n.clone()],
                    VarKind::PumpPathDelay(l) => {
                        let link = topo.link(l).ok_or_else(|| Error::UnknownLink(l.0.clone()))?;
                        vec![link.to.node.clone(), link.from.node.clone()]
                    }
                };
                for h in hosts {
                    if let Some(&i) = index.get(&h) {
                        dsu.union(b, i);
                    }
                }
            }
            for e in [&c.left, &c.right] {
                if e.emitter_var.is_none() && feeds[&e.emitter] == 1 {
                    dsu.union(b, index[&e.emitter]);
                }
            }
        }
    }

    let mut cells: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (n, &i) in &index {
        let root = dsu.find(i);
        cells.entry(root).or_default().push((*n).clone());
    }
    let mut out: Vec<Vec<NodeId>> = cells.into_values().collect();
    for c in &mut out {
        c.sort();
    }
    out.sort();
    Ok(out)
}

/// BSAs whose inputs are timed directly by the perturbed link.
fn adjacent_bsas(topo: &NetworkTopology, link: &LinkId) -> Result<Vec<NodeId>> {
    let l = topo.link(link).ok_or_else(|| Error::UnknownLink(link.0.clone()))?;
    let mut out = Vec::new();
    match l.channel {
        ChannelKind::Quantum => {
            let to = topo.node(&l.to.node).ok_or_else(|| Error::UnknownNode(l.to.node.0.clone()))?;
            match &to.kind {
                NodeKind::BsaSupport(_) => out.push(to.id.clone()),
                NodeKind::Memory(_) => {
                    if let Terminal::Bsa(b, _) = topo.trace_forward(&to.id, 1)?.terminal {
                        out.push(b);
                    }
                }
                _ => {}
            }
        }
        ChannelKind::ClassicalControl => {
            if l.pump.is_some() {
                out = topo.bsas_fed_by_source(&l.to.node);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// BSA adjacency: two BSAs are neighbours when one source feeds both.
fn bsa_graph(topo: &NetworkTopology) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut g: BTreeMap<NodeId, BTreeSet<NodeId>> = topo.bsa_ids().into_iter().map(|b| (b, BTreeSet::new())).collect();
    for s in topo.source_ids() {
        let fed = topo.bsas_fed_by_source(&s);
        for a in &fed {
            for b in &fed {
                if a != b {
                    g.get_mut(a).expect("bsa").insert(b.clone());
                }
            }
        }
    }
    g
}

fn solve_for(topo: &NetworkTopology, strategy: StrategyKind) -> Result<(Solution, crate::solver::TimingConstraintSystem)> {
    let sys = build_constraints(topo, &capability_of(strategy, topo))?;
    Ok((solve(&sys, DEFAULT_EPSILON), sys))
}

/// Re-solves after lengthening `perturbed_link` by `delta_length` metres
/// (negative shortens) and reports how far the adjustment spreads.
pub fn analyze_cascade(
    topo: &NetworkTopology,
    strategy: StrategyKind,
    perturbed_link: &LinkId,
    delta_length: f64,
) -> Result<CascadeReport> {
    let eps = DEFAULT_EPSILON;
    let (base_sol, _) = solve_for(topo, strategy)?;
    let Solution::Feasible(base) = base_sol else {
        return Err(Error::BaselineInfeasible);
    };

    let mut perturbed = topo.clone();
    let link = perturbed
        .link_mut(perturbed_link)
        .ok_or_else(|| Error::UnknownLink(perturbed_link.0.clone()))?;
    link.length_m += delta_length;
    if !(link.length_m >= 0.0) {
        return Err(Error::Config(format!(
            "perturbation leaves link '{perturbed_link}' with negative length"
        )));
    }

    let (sol, sys) = solve_for(&perturbed, strategy)?;
    let infeasible = !sol.is_feasible();
    let after = sol.assignment().cloned().unwrap_or_else(TimingAssignment::default);

    let mut affected_variables: Vec<VarId> = Vec::new();
    if !infeasible {
        for (v, &x0) in &base.values {
            let x1 = after.values.get(v).copied().unwrap_or(x0);
            if (x1 - x0).abs() > eps {
                affected_variables.push(v.clone());
            }
        }
    }

    let mut affected: BTreeSet<NodeId> = BTreeSet::new();
    for c in &sys.constraints {
        let moved = c.residual(&base.values)? != base.residuals[&c.bsa];
        let touched = c.variables().any(|v| affected_variables.contains(v));
        if moved || touched {
            affected.insert(c.bsa.clone());
        }
    }

    let seeds = adjacent_bsas(topo, perturbed_link)?;
    let graph = bsa_graph(topo);
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut q: VecDeque<NodeId> = VecDeque::new();
    for s in &seeds {
        dist.insert(s.clone(), 0);
        q.push_back(s.clone());
    }
    while let Some(b) = q.pop_front() {
        let d = dist[&b];
        for n in &graph[&b] {
            if !dist.contains_key(n) {
                dist.insert(n.clone(), d + 1);
                q.push_back(n.clone());
            }
        }
    }
    let unreachable = graph.len();
    let cascade_depth = affected
        .iter()
        .map(|b| dist.get(b).copied().unwrap_or(unreachable))
        .max()
        .unwrap_or(0);

    Ok(CascadeReport {
        strategy,
        perturbed_link: perturbed_link.clone(),
        delta_length_m: delta_length,
        affected_variables,
        affected_bsas: affected.into_iter().collect(),
        cascade_depth,
        psd_partition: psd_of(topo, strategy)?,
        infeasible_after_perturbation: infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_path_notation;

    fn chain4() -> NetworkTopology {
        parse_path_notation("DSISISISD", 10_000.0).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<NodeId> {
        v.iter().map(|s| NodeId::from(*s)).collect()
    }

    #[test]
    fn odl_stays_local() {
        let r = analyze_cascade(&chain4(), StrategyKind::QuantumPathAdjustAtBsa, &"q1".into(), 150.0).unwrap();
        assert_eq!(r.affected_bsas, ids(&["I2"]));
        assert_eq!(r.cascade_depth, 0);
        assert!(r.affected_variables.iter().all(|v| v.as_str().starts_with("odl:I2")));
        assert!(!r.infeasible_after_perturbation);
    }

    #[test]
    fn pump_path_cascades_down_the_chain() {
        let r = analyze_cascade(&chain4(), StrategyKind::PumpPathAdjust, &"q1".into(), 150.0).unwrap();
        assert_eq!(r.affected_bsas, ids(&["I2", "I4", "I6"]));
        assert!(r.cascade_depth >= 2);
    }

    #[test]
    fn emission_offset_cascade_from_b() {
        // Shortening B's fibre makes B fire later; the lowest-id source
        // stays the anchor, so C and D follow.
        let r = analyze_cascade(&chain4(), StrategyKind::EmissionOffsetAdjust, &"q2".into(), -150.0).unwrap();
        for v in ["emit:S3", "emit:S5", "emit:S7"] {
            assert!(r.affected_variables.contains(&VarId::from(v)), "{v} in {:?}", r.affected_variables);
        }
        assert_eq!(r.affected_bsas, ids(&["I2", "I4", "I6"]));
        assert_eq!(r.cascade_depth, 2);
    }

    #[test]
    fn zero_perturbation_is_quiet() {
        for s in StrategyKind::ALL {
            let r = analyze_cascade(&chain4(), s, &"q3".into(), 0.0).unwrap();
            assert!(r.affected_bsas.is_empty() && r.affected_variables.is_empty(), "{s}");
            assert_eq!(r.cascade_depth, 0);
        }
    }

    #[test]
    fn psd_cells() {
        let t = parse_path_notation("DSISISD", 10_000.0).unwrap();
        let odl = psd_of(&t, StrategyKind::QuantumPathAdjustAtBsa).unwrap();
        assert_eq!(
            odl,
            vec![ids(&["D0"]), ids(&["D6"]), ids(&["I2", "S1"]), ids(&["I4", "S5"]), ids(&["S3"])]
        );
        let emit = psd_of(&t, StrategyKind::EmissionOffsetAdjust).unwrap();
        assert!(emit.contains(&ids(&["I2", "I4", "S1", "S3", "S5"])));
        let dsd = parse_path_notation("DSD", 10_000.0).unwrap();
        let cells = psd_of(&dsd, StrategyKind::EmissionOffsetAdjust).unwrap();
        assert_eq!(cells, vec![ids(&["D0"]), ids(&["D2"]), ids(&["S1"])]);
    }

    #[test]
    fn unknown_link() {
        assert!(matches!(
            analyze_cascade(&chain4(), StrategyKind::PumpPathAdjust, &"nope".into(), 1.0),
            Err(Error::UnknownLink(_))
        ));
    }
}
