use crate::error::{Error, Result};
use crate::time::Picos;
use crate::topology::{propagation_delay_ps, Link, LinkId, MemoryMode, NetworkTopology, NodeId, NodeKind};

/// Signed sum of fixed delays around a closed source/BSA loop.
///
/// Links are walked in the given order. A link walked along the photon's
/// direction counts `+`, against it `-`. Fixed-delay buffers passed through
/// count with the sign of the direction of travel. Walking direction must
/// reverse at every source and BSA, and is kept through memories.
pub fn cycle_imbalance(topo: &NetworkTopology, cycle: &[LinkId]) -> Result<Picos> {
    let bad = |m: String| Error::NotACycle(m);
    if cycle.len() < 2 {
        return Err(bad("a loop needs at least two links".into()));
    }
    let links: Vec<&Link> = cycle
        .iter()
        .map(|id| topo.link(id).ok_or_else(|| Error::UnknownLink(id.0.clone())))
        .collect::<Result<_>>()?;
    if let Some(l) = links.iter().find(|l| !l.is_quantum()) {
        return Err(bad(format!("'{}' is not a quantum link", l.id)));
    }

    let start: NodeId = if links.len() == 2 {
        links[0].from.node.clone()
    } else if links[1].touches(&links[0].from.node) {
        links[0].to.node.clone()
    } else {
        links[0].from.node.clone()
    };

    let mut at = start.clone();
    // Direction of travel on the previous link (true = with the photon).
    let mut prev_forward: Option<bool> = None;
    let mut total = Picos::ZERO;
    let mut saw_bsa = false;
    for l in &links {
        let forward = if l.from.node == at && l.to.node != at {
            true
        } else if l.to.node == at {
            false
        } else {
            return Err(bad(format!("link '{}' does not continue from '{at}'", l.id)));
        };
        let node = topo.node(&at).ok_or_else(|| Error::UnknownNode(at.0.clone()))?;
        if let Some(pf) = prev_forward {
            let must_flip = match &node.kind {
                NodeKind::Source(_) => true,
                NodeKind::BsaSupport(_) => {
                    saw_bsa = true;
                    true
                }
                NodeKind::Memory(m) => match m.mode {
                    MemoryMode::FixedDelayBuffer { delay } => {
                        total += if pf { delay } else { -delay };
                        false
                    }
                    MemoryMode::HoldUntilReady { .. } => {
                        return Err(bad(format!("hold memory '{at}' re-times photons")));
                    }
                },
                NodeKind::EndDetector => return Err(bad(format!("detector '{at}' inside loop"))),
            };
            if must_flip == (pf == forward) {
                return Err(bad(format!("invalid turn at '{at}' before link '{}'", l.id)));
            }
        }
        let d = propagation_delay_ps(l);
        total += if forward { d } else { -d };
        at = if forward { l.to.node.clone() } else { l.from.node.clone() };
        prev_forward = Some(forward);
    }
    if at != start {
        return Err(bad(format!("loop ends at '{at}', not at '{start}'")));
    }
    // Closing turn at the start node.
    let node = topo.node(&at).ok_or_else(|| Error::UnknownNode(at.0.clone()))?;
    let first_forward = links[0].from.node == start && links[0].to.node != start;
    let closing_flip = match &node.kind {
        NodeKind::Source(_) => true,
        NodeKind::BsaSupport(_) => {
            saw_bsa = true;
            true
        }
        _ => return Err(bad(format!("loop must start at a source or BSA, not '{at}'"))),
    };
    if closing_flip == (prev_forward == Some(first_forward)) {
        return Err(bad(format!("invalid turn closing the loop at '{at}'")));
    }
    if !saw_bsa {
        return Err(bad("loop passes no BSA".into()));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{
        BsaSpec, Bounds, ChainParams, Endpoint, NodeSpec, SourceSpec, parse_path_notation,
    };

    /// Two sources, two BSAs, each source feeding both BSAs.
    fn square(lengths: [f64; 4]) -> NetworkTopology {
        let p = ChainParams::default();
        let src = |id: &str| NodeSpec {
            id: id.into(),
            kind: NodeKind::Source(SourceSpec {
                rep_period: p.rep_period,
                emission_offset: Picos::ZERO,
            }),
        };
        let bsa = |id: &str| NodeSpec {
            id: id.into(),
            kind: NodeKind::BsaSupport(BsaSpec {
                coincidence_window: Picos(100),
                odl_bounds: [Bounds::new(Picos::ZERO, Picos::ns(1)); 2],
                odl_setting: [Picos::ZERO; 2],
            }),
        };
        NetworkTopology {
            nodes: vec![src("A"), src("B"), bsa("X"), bsa("Y")],
            links: vec![
                Link::quantum("a1", Endpoint::new("A", 1), Endpoint::new("X", 0), lengths[0], 1.468),
                Link::quantum("b0", Endpoint::new("B", 0), Endpoint::new("X", 1), lengths[1], 1.468),
                Link::quantum("b1", Endpoint::new("B", 1), Endpoint::new("Y", 0), lengths[2], 1.468),
                Link::quantum("a0", Endpoint::new("A", 0), Endpoint::new("Y", 1), lengths[3], 1.468),
            ],
        }
    }

    fn ids(v: &[&str]) -> Vec<LinkId> {
        v.iter().map(|s| LinkId::from(*s)).collect()
    }

    #[test]
    fn equal_loop_is_balanced() {
        let t = square([1000.0; 4]);
        assert!(crate::topology::validate_topology(&t).is_empty());
        assert_eq!(cycle_imbalance(&t, &ids(&["a1", "b0", "b1", "a0"])).unwrap(), Picos::ZERO);
    }

    #[test]
    fn one_km_longer() {
        let t = square([2000.0, 1000.0, 1000.0, 1000.0]);
        let oracle = (1000.0_f64 * 1.468 / 299_792_458.0 * 1e12).round() as i64;
        assert_eq!(oracle, 4_896_721);
        assert_eq!(cycle_imbalance(&t, &ids(&["a1", "b0", "b1", "a0"])).unwrap(), Picos(oracle));
        // Reversed orientation flips the sign.
        assert_eq!(cycle_imbalance(&t, &ids(&["a0", "b1", "b0", "a1"])).unwrap(), Picos(-oracle));
    }

    #[test]
    fn rejects_open_paths() {
        let t = parse_path_notation("DSISISD", 1000.0).unwrap();
        assert!(matches!(
            cycle_imbalance(&t, &ids(&["q1", "q2", "q3", "q4"])),
            Err(Error::NotACycle(_))
        ));
        let sq = square([1000.0; 4]);
        // Two photons of one pair continuing the same way: no turn at A.
        assert!(cycle_imbalance(&sq, &ids(&["a1", "a0"])).is_err());
        assert!(matches!(cycle_imbalance(&sq, &ids(&["a1", "zz"])), Err(Error::UnknownLink(_))));
    }

    #[test]
    fn two_link_loop() {
        // One source feeding both inputs of one BSA.
        let mut t = square([1000.0, 1500.0, 1000.0, 1000.0]);
        t.links.retain(|l| l.id.as_str() == "a1");
        t.links.push(Link::quantum("a0", Endpoint::new("A", 0), Endpoint::new("X", 1), 1500.0, 1.468));
        let d = cycle_imbalance(&t, &ids(&["a1", "a0"])).unwrap();
        let oracle = ((1000.0_f64 - 1500.0) * 1.468 / 299_792_458.0 * 1e12).round() as i64;
        assert!((d.0 - oracle).abs() <= 1, "{d} vs {oracle}");
    }
}
