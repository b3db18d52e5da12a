//! How far one link change spreads along a three-BSA chain, per strategy.

use bsa_timing::strategy::{analyze_cascade, psd_of, StrategyKind};
use bsa_timing::topology::parse_path_notation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topo = parse_path_notation("DSISISISD", 10_000.0)?;
    println!("{:<16} {:<6} {:>8} {:>6}  affected", "strategy", "link", "dL (m)", "depth");
    for strategy in StrategyKind::ALL {
        for (link, d) in [("q1", 150.0), ("q2", -150.0), ("q5", 40.0)] {
            let r = analyze_cascade(&topo, strategy, &link.into(), d)?;
            let names: Vec<&str> = r.affected_bsas.iter().map(|b| b.as_str()).collect();
            println!("{:<16} {link:<6} {d:>8} {:>6}  {}", strategy.name(), r.cascade_depth, names.join(" "));
        }
    }
    println!();
    for strategy in [StrategyKind::QuantumPathAdjustAtBsa, StrategyKind::EmissionOffsetAdjust] {
        let cells: Vec<String> = psd_of(&topo, strategy)?
            .iter()
            .map(|c| c.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(","))
            .collect();
        println!("{} domains: [{}]", strategy.name(), cells.join("] ["));
    }
    Ok(())
}
