//! Sinusoidal fibre drift with and without the ODL feedback loop.

use std::path::Path;

use bsa_timing::scenario::load_scenario;
use bsa_timing::sim::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/fig7_continuous.json");
    let s = load_scenario(&path, true)?.scenario;
    let mut open = s.simulation.clone();
    open.controller = None;

    for (label, cfg) in [("open loop", &open), ("closed loop", &s.simulation)] {
        let m = run(&s.topology, s.strategy, cfg, s.seed)?;
        println!("{label}:");
        for b in &m.bsas {
            println!(
                "  {}  coincident {:>6.2}%  mean |delta| {:>7.1} ps  updates {}",
                b.bsa.as_str(),
                100.0 * b.coincidences as f64 / b.paired.max(1) as f64,
                b.mean_abs_delta_ps.unwrap_or(f64::NAN),
                b.controller_updates
            );
        }
        println!("  end-to-end {} over {} slots", m.end_to_end, m.slots);
    }
    Ok(())
}
