//! Delivery latency of a two-link chain with and without a hold memory.

use bsa_timing::memory::{coupling_graph, place_memories, run_hop_by_hop, MemoryPlacement};
use bsa_timing::sim::{run, SimConfig};
use bsa_timing::strategy::StrategyKind;
use bsa_timing::topology::{parse_path_notation, MemorySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = 0.1;
    let topo = parse_path_notation("DSISISD", 5_000.0)?;
    let s = StrategyKind::QuantumPathAdjustAtBsa;
    let cfg = SimConfig {
        slots: 2_000_000,
        p_gen: 1.0,
        p0: q,
        max_deliveries: Some(10_000),
        ..SimConfig::default()
    };

    let bare = run(&topo, s, &SimConfig { max_deliveries: None, ..cfg.clone() }, 1)?;
    println!("memoryless       {:>7.2} slots (1/q^2 = {:.0})", bare.mean_delivery_latency_slots.unwrap_or(f64::NAN), 1.0 / (q * q));

    let placement = MemoryPlacement {
        sources: vec!["S3".into()],
        spec: MemorySpec::hold_until_ready(None),
    };
    let held = place_memories(&topo, &placement)?;
    let m = run_hop_by_hop(&held, s, &cfg, 1)?;
    let expect = 2.0 / q - 1.0 / (2.0 * q - q * q);
    println!("hold memory      {:>7.2} slots ({expect:.2} expected)", m.mean_delivery_latency_slots.unwrap_or(f64::NAN));

    for (label, t) in [("without memory", &topo), ("with memory", &held)] {
        let g = coupling_graph(t, StrategyKind::EmissionOffsetAdjust)?;
        println!("emission-offset coupling {label}: {} edges", g.edges.len());
    }
    Ok(())
}
