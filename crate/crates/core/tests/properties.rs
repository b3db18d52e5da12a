use std::collections::BTreeMap;

use proptest::prelude::*;

use bsa_timing::memory::survival_probability;
use bsa_timing::scenario::{parse_scenario, Scenario};
use bsa_timing::sim::{run, swap_probability, SimConfig};
use bsa_timing::solver::{
    apply_assignment, build_constraints, static_arrival, solve, Solution, VarId, DEFAULT_EPSILON,
};
use bsa_timing::strategy::{analyze_cascade, capability_of, StrategyKind};
use bsa_timing::topology::{
    parse_path_notation_with, propagation_delay_ps, Bounds, ChainParams, Endpoint, Link, LinkId, MemorySpec,
    NetworkTopology, NodeId,
};
use bsa_timing::Picos;

const C: f64 = 299_792_458.0;

fn params(odl_hi: Picos) -> ChainParams {
    ChainParams {
        odl_bounds: Bounds::new(Picos::ZERO, odl_hi),
        ..ChainParams::default()
    }
}

/// A chain with `bsas` BSAs and the given quantum link lengths (cycled).
fn chain(bsas: usize, lengths: &[f64], odl_hi: Picos) -> NetworkTopology {
    let notation = format!("DS{}D", "IS".repeat(bsas - 1));
    let mut t = parse_path_notation_with(&notation, &params(odl_hi)).unwrap();
    for (l, len) in t.links.iter_mut().filter(|l| l.is_quantum()).zip(lengths.iter().cycle()) {
        l.length_m = *len;
    }
    t
}

fn arb_chain(odl_hi: Picos) -> impl Strategy<Value = NetworkTopology> {
    (1usize..=5, prop::collection::vec(1_000.0f64..50_000.0, 1..12)).prop_map(move |(b, ls)| chain(b, &ls, odl_hi))
}

const EXACT: [StrategyKind; 4] = [
    StrategyKind::PumpPathAdjust,
    StrategyKind::QuantumPathAdjustAtBsa,
    StrategyKind::EmissionOffsetAdjust,
    StrategyKind::Combined12,
];

fn rename(t: &NetworkTopology) -> NetworkTopology {
    let n = |id: &NodeId| NodeId(format!("n_{}", id.0));
    let ep = |e: &Endpoint| Endpoint { node: n(&e.node), port: e.port };
    let mut out = t.clone();
    for node in out.nodes.iter_mut() {
        node.id = n(&node.id);
    }
    for l in out.links.iter_mut() {
        l.id = LinkId(format!("l_{}", l.id.0));
        l.from = ep(&l.from);
        l.to = ep(&l.to);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_json_round_trips(t in arb_chain(Picos::us(50)), s in prop::sample::select(StrategyKind::ALL.to_vec()), p in 0.0f64..=1.0) {
        let mut sc = Scenario::new(t, s);
        sc.simulation.p_gen = p;
        let text = sc.to_json();
        let back = parse_scenario(&text, true).unwrap();
        prop_assert!(back.unknown_keys.is_empty());
        prop_assert_eq!(back.scenario.to_json(), text);
        prop_assert_eq!(back.scenario, sc);
    }

    #[test]
    fn delay_is_monotone_in_length(a in 0.0f64..1e6, b in 0.0f64..1e6, n in 1.0f64..2.0) {
        let mk = |len| Link::quantum("x", Endpoint::new("a", 0), Endpoint::new("b", 0), len, n);
        let (da, db) = (propagation_delay_ps(&mk(a)), propagation_delay_ps(&mk(b)));
        if a <= b { prop_assert!(da <= db) } else { prop_assert!(da >= db) }
        prop_assert!((da.0 - (a * n / C * 1e12).round() as i64).abs() == 0);
    }

    #[test]
    fn feasible_solutions_are_sound(t in arb_chain(Picos::us(300)), s in prop::sample::select(EXACT.to_vec())) {
        let sys = build_constraints(&t, &capability_of(s, &t)).unwrap();
        if let Solution::Feasible(a) = solve(&sys, DEFAULT_EPSILON) {
            for (id, v) in &sys.variables {
                let x = a.values[id];
                prop_assert!(v.bounds.contains(x), "{} = {} outside bounds", id, x);
            }
            for c in &sys.constraints {
                prop_assert!(c.residual(&a.values).unwrap().abs() <= DEFAULT_EPSILON);
            }
            let applied = apply_assignment(&t, &a).unwrap();
            for b in applied.bsa_ids() {
                let d = static_arrival(&applied, s, &b, 0).unwrap() - static_arrival(&applied, s, &b, 1).unwrap();
                prop_assert!(d.abs() <= DEFAULT_EPSILON);
            }
        }
    }

    /// With only ODLs, each BSA is feasible iff its fixed arrival gap fits
    /// in the ODL range, and the shorter side takes the whole gap.
    #[test]
    fn odl_matches_closed_form(t in arb_chain(Picos::us(60))) {
        let s = StrategyKind::QuantumPathAdjustAtBsa;
        let sys = build_constraints(&t, &capability_of(s, &t)).unwrap();
        let sol = solve(&sys, DEFAULT_EPSILON);
        let mut all_fit = true;
        let mut expect = BTreeMap::new();
        for b in t.bsa_ids() {
            let q = |port: u8| t.quantum_into(&b, port).next().unwrap().length_m;
            let gap = ((q(1) - q(0)) * 1.468 / C * 1e12).round() as i64;
            all_fit &= gap.abs() <= Picos::us(60).0 + DEFAULT_EPSILON.0;
            expect.insert(b, gap);
        }
        prop_assert_eq!(sol.is_feasible(), all_fit);
        if let Solution::Feasible(a) = sol {
            for (b, gap) in expect {
                let l = a.values[&VarId(format!("odl:{b}:0"))].0;
                let r = a.values[&VarId(format!("odl:{b}:1"))].0;
                prop_assert!(((l - r) - gap).abs() <= 1, "{b}: {l} - {r} vs {gap}");
                prop_assert!(l == 0 || r == 0);
            }
        }
    }

    #[test]
    fn solutions_survive_relabelling(t in arb_chain(Picos::us(300)), s in prop::sample::select(EXACT.to_vec())) {
        let u = rename(&t);
        let a = solve(&build_constraints(&t, &capability_of(s, &t)).unwrap(), DEFAULT_EPSILON);
        let b = solve(&build_constraints(&u, &capability_of(s, &u)).unwrap(), DEFAULT_EPSILON);
        prop_assert_eq!(a.is_feasible(), b.is_feasible());
        if let (Solution::Feasible(a), Solution::Feasible(b)) = (a, b) {
            let mut x: Vec<i64> = a.values.values().map(|p| p.0).collect();
            let mut y: Vec<i64> = b.values.values().map(|p| p.0).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn local_strategies_never_cascade(
        t in arb_chain(Picos::us(300)),
        s in prop::sample::select(vec![StrategyKind::QuantumPathAdjustAtBsa, StrategyKind::FrequencySyncQuantumAdjust]),
        pick in 0usize..100,
        d in -500.0f64..500.0,
    ) {
        let sys = build_constraints(&t, &capability_of(s, &t)).unwrap();
        prop_assume!(solve(&sys, DEFAULT_EPSILON).is_feasible());
        let links: Vec<LinkId> = t.links.iter().filter(|l| l.is_quantum()).map(|l| l.id.clone()).collect();
        let link = &links[pick % links.len()];
        let r = analyze_cascade(&t, s, link, d).unwrap();
        prop_assert_eq!(r.cascade_depth, 0);
        prop_assert!(r.affected_bsas.len() <= 1);
    }

    #[test]
    fn swap_law_is_even_and_decreasing(a in 0i64..2_000, b in 0i64..2_000, p0 in 0.0f64..=1.0, sigma in 1i64..500) {
        let f = |d: i64| swap_probability(Picos(d), p0, Picos(sigma));
        prop_assert_eq!(f(a), f(-a));
        if a <= b { prop_assert!(f(a) >= f(b)) }
        prop_assert!(f(a) <= p0 && f(a) >= 0.0);
    }

    #[test]
    fn retention_decreases_with_hold_time(
        tau in prop::option::of(1i64..1_000_000_000),
        eff in 0.0f64..=1.0,
        a in 0i64..10_000_000,
        b in 0i64..10_000_000,
    ) {
        let spec = MemorySpec { coherence_time: tau.map(Picos), release_efficiency: eff, ..MemorySpec::hold_until_ready(None) };
        let (pa, pb) = (survival_probability(&spec, Picos(a)), survival_probability(&spec, Picos(b)));
        if a <= b { prop_assert!(pa >= pb) }
        prop_assert!(pa <= eff + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fixed_buffer_is_a_longer_fibre(len in 1_000.0f64..20_000.0, d in 0i64..50_000, seed in 0u64..1_000, p in 0.3f64..1.0) {
        let s = StrategyKind::QuantumPathAdjustAtBsa;
        let t = chain(2, &[len], Picos::us(300));
        let mut with_mem = t.clone();
        with_mem.insert_memory(&NodeId::from("S3"), 1, "M", MemorySpec::fixed_delay(Picos(d))).unwrap();
        let mut longer = t.clone();
        longer.link_mut(&LinkId::from("q3")).unwrap().extra_fixed_delay += Picos(d);
        let cfg = SimConfig { slots: 500, p_gen: p, p0: 0.7, ..SimConfig::default() };
        let a = run(&with_mem, s, &cfg, seed).unwrap();
        let b = run(&longer, s, &cfg, seed).unwrap();
        prop_assert_eq!(a.bsas, b.bsas);
        prop_assert_eq!(a.end_to_end, b.end_to_end);
        prop_assert_eq!(a.series, b.series);
    }
}
