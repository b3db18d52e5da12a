use super::*;
use crate::sim::SimConfig;
use crate::solver::{apply_assignment, build_constraints, solve, Solution, DEFAULT_EPSILON};
use crate::strategy::{capability_of, StrategyKind};
use crate::time::Picos;
use crate::topology::{parse_path_notation, MemorySpec, NetworkTopology, NodeId};

const ODL: StrategyKind = StrategyKind::QuantumPathAdjustAtBsa;

fn solved(topo: &NetworkTopology, s: StrategyKind) -> NetworkTopology {
    let sys = build_constraints(topo, &capability_of(s, topo)).unwrap();
    match solve(&sys, DEFAULT_EPSILON) {
        Solution::Feasible(a) => apply_assignment(topo, &a).unwrap(),
        other => panic!("{other:?}"),
    }
}

fn placement(sources: &[&str], spec: MemorySpec) -> MemoryPlacement {
    MemoryPlacement {
        sources: sources.iter().map(|s| NodeId::from(*s)).collect(),
        spec,
    }
}

fn cfg(p0: f64, slots: u64) -> SimConfig {
    SimConfig {
        p_gen: 1.0,
        p0,
        slots,
        ..SimConfig::default()
    }
}

#[test]
fn coupling_of_chain() {
    let t = parse_path_notation("DSISISISD", 10_000.0).unwrap();
    let g = coupling_graph(&t, StrategyKind::EmissionOffsetAdjust).unwrap();
    assert_eq!(g.nodes.len(), 3);
    assert_eq!(
        g.edges,
        vec![("I2".into(), "I4".into()), ("I4".into(), "I6".into())]
    );
    let held = place_memories(&t, &placement(&["S3", "S5"], MemorySpec::hold_until_ready(None))).unwrap();
    assert!(coupling_graph(&held, StrategyKind::EmissionOffsetAdjust).unwrap().edges.is_empty());
    let fixed = place_memories(&t, &placement(&["S3", "S5"], MemorySpec::fixed_delay(Picos::ns(3)))).unwrap();
    assert_eq!(coupling_graph(&fixed, StrategyKind::EmissionOffsetAdjust).unwrap().edges.len(), 2);
    assert!(coupling_graph(&t, ODL).unwrap().edges.is_empty());
}

#[test]
fn bad_placements() {
    let t = parse_path_notation("DSISD", 1_000.0).unwrap();
    let spec = MemorySpec::hold_until_ready(None);
    assert!(matches!(place_memories(&t, &placement(&["I2"], spec.clone())), Err(crate::Error::Config(_))));
    // S3's port 1 ends at a detector.
    assert!(matches!(place_memories(&t, &placement(&["S3"], spec.clone())), Err(crate::Error::Config(_))));
    assert!(place_memories(&t, &placement(&["S1"], spec)).is_ok());
}

#[test]
fn single_link_is_geometric() {
    let t = solved(&parse_path_notation("DSISD", 5_000.0).unwrap(), ODL);
    let q = 0.2;
    let c = SimConfig { max_deliveries: Some(5_000), ..cfg(q, 1_000_000) };
    let m = run_hop_by_hop(&t, ODL, &c, 1).unwrap();
    let mean = m.mean_delivery_latency_slots.unwrap();
    // Geometric(q): sd of the mean is sqrt(1-q)/q/sqrt(n).
    let sd = (1.0 - q).sqrt() / q / (m.end_to_end as f64).sqrt();
    assert!((mean - 1.0 / q).abs() < 4.0 * sd, "{mean}");
    let direct = crate::sim::run(&t, ODL, &cfg(q, 25_000), 1).unwrap();
    let lat = direct.mean_delivery_latency_slots.unwrap();
    assert!((lat - 1.0 / q).abs() < 4.0 * (1.0 - q).sqrt() / q / (direct.end_to_end as f64).sqrt(), "{lat}");
}

#[test]
fn two_links_with_memory() {
    let t = parse_path_notation("DSISISD", 5_000.0).unwrap();
    let t = solved(&place_memories(&t, &placement(&["S3"], MemorySpec::hold_until_ready(None))).unwrap(), ODL);
    let q: f64 = 0.1;
    let c = SimConfig { max_deliveries: Some(10_000), ..cfg(q, 10_000_000) };
    let m = run_hop_by_hop(&t, ODL, &c, 3).unwrap();
    let expect = 2.0 / q - 1.0 / (2.0 * q - q * q);
    let mean = m.mean_delivery_latency_slots.unwrap();
    assert!((mean / expect - 1.0).abs() < 0.05, "{mean} vs {expect}");
}

#[test]
fn decoupled_count_ignores_length_order() {
    let lengths = [3_000.0, 11_000.0, 7_000.0, 5_000.0];
    let build = |ls: [f64; 4]| {
        let mut t = parse_path_notation("DSISISD", 1_000.0).unwrap();
        for (i, l) in ls.iter().enumerate() {
            t.link_mut(&format!("q{}", i + 1).as_str().into()).unwrap().length_m = *l;
        }
        let t = place_memories(&t, &placement(&["S3"], MemorySpec::hold_until_ready(None))).unwrap();
        solved(&t, ODL)
    };
    let c = cfg(0.3, 20_000);
    let a = run_hop_by_hop(&build(lengths), ODL, &c, 5).unwrap();
    let b = run_hop_by_hop(&build([lengths[2], lengths[0], lengths[3], lengths[1]]), ODL, &c, 5).unwrap();
    assert_eq!(a.end_to_end, b.end_to_end);
    assert!(a.end_to_end > 0);
}

#[test]
fn shorter_coherence_loses_more() {
    let t = parse_path_notation("DSISISD", 5_000.0).unwrap();
    let mut counts = Vec::new();
    for tau in [None, Some(Picos::ms(10)), Some(Picos::ms(1))] {
        let spec = MemorySpec { coherence_time: tau, ..MemorySpec::hold_until_ready(None) };
        let t = solved(&place_memories(&t, &placement(&["S3"], spec)).unwrap(), ODL);
        let m = run_hop_by_hop(&t, ODL, &cfg(0.2, 50_000), 2).unwrap();
        counts.push((m.end_to_end, m.retention_losses));
    }
    assert!(counts[0].0 > counts[1].0 && counts[1].0 > counts[2].0, "{counts:?}");
    assert_eq!(counts[0].1, 0);
    assert!(counts[2].1 > counts[1].1);
}

#[test]
fn max_hold_expires() {
    let t = parse_path_notation("DSISISD", 5_000.0).unwrap();
    let spec = MemorySpec::hold_until_ready(Some(Picos::us(150)));
    let t = solved(&place_memories(&t, &placement(&["S3"], spec)).unwrap(), ODL);
    let m = run_hop_by_hop(&t, ODL, &cfg(0.1, 50_000), 2).unwrap();
    assert!(m.retention_losses > 0);
    let free = crate::sim::run(&t, ODL, &cfg(0.1, 50_000), 2).unwrap();
    assert!(m.end_to_end > free.end_to_end);
}
