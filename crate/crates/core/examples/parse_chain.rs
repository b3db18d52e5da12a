//! Expand chain notation into a topology and check it.
//!
//! `cargo run --example parse_chain -- DSISISD 25000`

use bsa_timing::topology::{parse_path_notation, propagation_delay_ps, validate_topology};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let notation = args.next().unwrap_or_else(|| "DSISISD".into());
    let length: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000.0);

    let topo = parse_path_notation(&notation, length)?;
    println!("{notation}: {} sources, {} BSAs", topo.source_ids().len(), topo.bsa_ids().len());
    for l in topo.links.iter().filter(|l| l.is_quantum()) {
        println!(
            "  {:<4} {}:{} -> {}:{}  {:>8.0} m  {}",
            l.id.as_str(),
            l.from.node.as_str(),
            l.from.port,
            l.to.node.as_str(),
            l.to.port,
            l.length_m,
            propagation_delay_ps(l)
        );
    }
    let report = validate_topology(&topo);
    println!("valid: {}", report.is_empty());

    if let Err(e) = parse_path_notation("DSSD", length) {
        println!("DSSD rejected: {e}");
    }
    Ok(())
}
