//! Seeded parallel sweep of the generation probability against the
//! analytic end-to-end rate.

use rayon::prelude::*;

use bsa_timing::sim::{end_to_end_rate_analytic, run, SimConfig};
use bsa_timing::strategy::StrategyKind;
use bsa_timing::topology::parse_path_notation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topo = parse_path_notation("DSISISD", 10_000.0)?;
    let s = StrategyKind::QuantumPathAdjustAtBsa;
    let grid: Vec<(f64, u64)> = [0.05, 0.1, 0.2, 0.4]
        .into_iter()
        .flat_map(|p| (1..=4).map(move |seed| (p, seed)))
        .collect();
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&(p, seed)| {
            let cfg = SimConfig { slots: 200_000, p_gen: p, p0: 0.5, ..SimConfig::default() };
            let m = run(&topo, s, &cfg, seed)?;
            let a = end_to_end_rate_analytic(&topo, s, &cfg)?;
            Ok::<_, bsa_timing::Error>((p, seed, m.end_to_end as f64 / cfg.slots as f64, a.per_slot))
        })
        .collect::<Result<_, _>>()?;
    println!("{:>6} {:>5} {:>12} {:>12}", "p_gen", "seed", "empirical", "analytic");
    for (p, seed, emp, ana) in rows {
        println!("{p:>6} {seed:>5} {emp:>12.3e} {ana:>12.3e}");
    }
    Ok(())
}
