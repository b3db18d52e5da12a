#![allow(dead_code)]

use std::path::PathBuf;

use bsa_timing::memory::MemoryPlacement;
use bsa_timing::scenario::{EngineKind, Scenario};
use bsa_timing::sim::{ControllerConfig, DriftKind, DriftModel, SimConfig};
use bsa_timing::strategy::StrategyKind;
use bsa_timing::time::Picos;
use bsa_timing::topology::{
    parse_path_notation, parse_path_notation_with, ring_topology, Bounds, ChainParams, LinkId, MemorySpec, NodeId,
};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

pub fn dsisd_symmetric() -> Scenario {
    let t = parse_path_notation("DSISD", 10_000.0).unwrap();
    Scenario::new(t, StrategyKind::QuantumPathAdjustAtBsa)
}

pub fn fig1_symmetric() -> Scenario {
    let mut s = dsisd_symmetric();
    s.simulation = SimConfig {
        slots: 100_000,
        p_gen: 0.1,
        p0: 0.5,
        ..SimConfig::default()
    };
    s.seed = 1;
    s
}

pub fn asymmetric_12km_10km() -> Scenario {
    let mut s = dsisd_symmetric();
    s.topology.link_mut(&LinkId::from("q2")).unwrap().length_m = 12_000.0;
    s
}

pub fn fig5_chain4() -> Scenario {
    let t = parse_path_notation("DSISISISD", 10_000.0).unwrap();
    Scenario::new(t, StrategyKind::QuantumPathAdjustAtBsa)
}

/// Three-link chain under sinusoidal fibre drift with closed-loop ODLs.
pub fn fig7_continuous() -> Scenario {
    let p = ChainParams {
        link_length_m: 10_000.0,
        rep_period: Picos::us(1),
        odl_bounds: Bounds::new(Picos::ZERO, Picos::ns(5)),
        ..ChainParams::default()
    };
    let mut t = parse_path_notation_with("DSISISISD", &p).unwrap();
    for b in t.bsa_ids() {
        if let bsa_timing::topology::NodeKind::BsaSupport(spec) = &mut t.node_mut(&b).unwrap().kind {
            spec.odl_setting = [Picos::ns(2) + Picos(500); 2];
        }
    }
    let mut s = Scenario::new(t, StrategyKind::QuantumPathAdjustAtBsa);
    s.simulation = SimConfig {
        slots: 50_000,
        p_gen: 0.8,
        p0: 0.5,
        window: Some(Picos(100)),
        controller: Some(ControllerConfig {
            gain: 0.5,
            estimate_window: 20,
            max_step: Picos::ns(1),
        }),
        drift_models: vec![DriftModel {
            id: "diurnal".into(),
            kind: DriftKind::Sinusoidal {
                amplitude: 1e-9,
                period: 1e-2,
                phase: 0.0,
            },
        }],
        drift_bindings: [(LinkId::from("q1"), "diurnal".to_string())].into_iter().collect(),
        ..SimConfig::default()
    };
    s.seed = 7;
    s
}

fn ring(n: usize, odl_hi: Picos, extra: Picos) -> Scenario {
    let p = ChainParams {
        link_length_m: 1_000.0,
        odl_bounds: Bounds::new(Picos::ZERO, odl_hi),
        ..ChainParams::default()
    };
    let mut t = ring_topology(n, &p).unwrap();
    t.link_mut(&LinkId::from("q0a")).unwrap().extra_fixed_delay = extra;
    Scenario::new(t, StrategyKind::QuantumPathAdjustAtBsa)
}

/// Five-BSA loop: 10 ns imbalance against 5 x 0.8 ns of ODL.
pub fn fig8_cycle() -> Scenario {
    ring(5, Picos(800), Picos::ns(10))
}

pub fn triangle_bounded() -> Scenario {
    ring(3, Picos::ns(2), Picos::ns(10))
}

/// Two-link chain with a hold memory on the middle source.
pub fn memory_two_link() -> Scenario {
    let t = parse_path_notation("DSISISD", 5_000.0).unwrap();
    let mut s = Scenario::new(t, StrategyKind::QuantumPathAdjustAtBsa);
    s.engine = EngineKind::HopByHop;
    s.memory = Some(MemoryPlacement {
        sources: vec![NodeId::from("S3")],
        spec: MemorySpec::hold_until_ready(None),
    });
    s.simulation = SimConfig {
        slots: 10_000_000,
        p_gen: 1.0,
        p0: 0.1,
        max_deliveries: Some(10_000),
        ..SimConfig::default()
    };
    s.seed = 5;
    s
}

pub fn shipped() -> Vec<(&'static str, Scenario)> {
    vec![
        ("dsisd_symmetric", dsisd_symmetric()),
        ("fig1_symmetric", fig1_symmetric()),
        ("asymmetric_12km_10km", asymmetric_12km_10km()),
        ("fig5_chain4", fig5_chain4()),
        ("fig7_continuous", fig7_continuous()),
        ("fig8_cycle", fig8_cycle()),
        ("triangle_bounded", triangle_bounded()),
        ("memory_two_link", memory_two_link()),
    ]
}
