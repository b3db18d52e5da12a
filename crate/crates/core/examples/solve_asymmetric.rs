//! Solve a 12 km / 10 km chain and apply the ODL settings.

use bsa_timing::solver::{apply_assignment, build_constraints, solve, static_arrival, Solution, DEFAULT_EPSILON};
use bsa_timing::strategy::{capability_of, StrategyKind};
use bsa_timing::topology::{parse_path_notation, LinkId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut topo = parse_path_notation("DSISD", 10_000.0)?;
    topo.link_mut(&LinkId::from("q2")).expect("link q2").length_m = 12_000.0;

    for strategy in [StrategyKind::QuantumPathAdjustAtBsa, StrategyKind::EmissionOffsetAdjust] {
        let sys = build_constraints(&topo, &capability_of(strategy, &topo))?;
        let Solution::Feasible(a) = solve(&sys, DEFAULT_EPSILON) else {
            println!("{strategy}: infeasible");
            continue;
        };
        println!("{strategy}:");
        for (v, x) in &a.values {
            println!("  {:<12} {:>12} ({:.4e} s)", v.as_str(), x.to_string(), x.as_seconds());
        }
        let fixed = apply_assignment(&topo, &a)?;
        let b = "I2".into();
        let gap = static_arrival(&fixed, strategy, &b, 0)? - static_arrival(&fixed, strategy, &b, 1)?;
        println!("  arrival gap after applying: {gap}");
    }
    Ok(())
}
