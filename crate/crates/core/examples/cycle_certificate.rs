//! A ring whose fibre loop cannot be closed by the available ODL range.

use bsa_timing::solver::{build_constraints, cycle_imbalance, solve, Solution, DEFAULT_EPSILON};
use bsa_timing::strategy::{capability_of, StrategyKind};
use bsa_timing::topology::{ring_topology, Bounds, ChainParams, LinkId};
use bsa_timing::Picos;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for odl_hi in [Picos(800), Picos::ns(11)] {
        let params = ChainParams {
            link_length_m: 1_000.0,
            odl_bounds: Bounds::new(Picos::ZERO, odl_hi),
            ..ChainParams::default()
        };
        let mut topo = ring_topology(5, &params)?;
        topo.link_mut(&LinkId::from("q0a")).expect("link q0a").extra_fixed_delay = Picos::ns(10);
        let s = StrategyKind::QuantumPathAdjustAtBsa;
        let sys = build_constraints(&topo, &capability_of(s, &topo))?;
        print!("ODL range {odl_hi} per input: ");
        match solve(&sys, DEFAULT_EPSILON) {
            Solution::Feasible(a) => println!("feasible, odl:I0:1 = {}", a.values[&"odl:I0:1".into()]),
            Solution::CycleInfeasible(c) => {
                println!("infeasible");
                println!("  loop      {:?}", c.cycle.iter().map(|l| l.as_str()).collect::<Vec<_>>());
                println!("  imbalance {} (recomputed {})", c.fixed_imbalance, cycle_imbalance(&topo, &c.cycle)?);
                println!("  range     {}", c.total_adjustable_range);
                println!("  certificate holds: {}", c.holds());
            }
            Solution::BoundsInfeasible(b) => println!("bounds infeasible at {:?}", b.bsas),
        }
    }
    Ok(())
}
