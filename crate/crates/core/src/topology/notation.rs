use crate::error::{Error, Result};
use crate::time::Picos;

use super::{
    BsaSpec, Bounds, ChannelKind, Endpoint, Link, LinkId, NetworkTopology, NodeId, NodeKind,
    NodeSpec, PumpControl, SourceSpec,
};

/// Chain text over `{D, S, I}` matching `D S (I S)* D`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathNotation {
    text: String,
}

impl PathNotation {
    pub fn parse(text: &str) -> Result<Self> {
        check_grammar(text)?;
        Ok(PathNotation {
            text: text.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn source_count(&self) -> usize {
        self.text.chars().filter(|&c| c == 'S').count()
    }

    pub fn bsa_count(&self) -> usize {
        self.text.chars().filter(|&c| c == 'I').count()
    }
}

/// Defaults applied when expanding chain notation into a topology.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainParams {
    pub link_length_m: f64,
    pub group_index: f64,
    pub rep_period: Picos,
    pub coincidence_window: Picos,
    pub odl_bounds: Bounds,
    pub pump_bounds: Bounds,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            link_length_m: 10_000.0,
            group_index: 1.468,
            rep_period: Picos::us(100),
            coincidence_window: Picos::ps(100),
            odl_bounds: Bounds::new(Picos::ZERO, Picos::us(50)),
            pump_bounds: Bounds::new(Picos::ZERO, Picos::us(50)),
        }
    }
}

fn check_grammar(text: &str) -> Result<()> {
    let err = |position: usize, message: String| Err(Error::Grammar { position, message });
    if text.is_empty() {
        return err(1, "empty path".into());
    }
    let chars: Vec<char> = text.chars().collect();
    // States: expecting the opening D, then S, then either I (loop) or D (close).
    #[derive(PartialEq)]
    enum Want {
        OpenD,
        S,
        IOrD,
        End,
    }
    let mut want = Want::OpenD;
    for (i, &c) in chars.iter().enumerate() {
        let pos = i + 1;
        want = match (want, c) {
            (Want::OpenD, 'D') => Want::S,
            (Want::OpenD, c) => return err(pos, format!("expected 'D', found '{c}'")),
            (Want::S, 'S') => Want::IOrD,
            (Want::S, c) => return err(pos, format!("expected 'S', found '{c}'")),
            (Want::IOrD, 'I') => Want::S,
            (Want::IOrD, 'D') => Want::End,
            (Want::IOrD, c) => return err(pos, format!("expected 'I' or 'D', found '{c}'")),
            (Want::End, c) => return err(pos, format!("unexpected '{c}' after closing 'D'")),
        };
    }
    if want != Want::End {
        return err(chars.len() + 1, "path ends before the closing 'D'".into());
    }
    Ok(())
}

/// Expands chain notation such as `DSISD` into a linear topology.
///
/// Each symbol becomes a node named by its letter and 0-based position
/// (`D0 S1 I2 S3 D4`). Consecutive symbols are joined by a quantum link
/// `q{i}` directed away from the source, and by a parallel control link
/// `c{i}`. Each source is pumped over the control link from its left BSA,
/// or its right BSA when it has no left one.
pub fn parse_path_notation(text: &str, default_link_length: f64) -> Result<NetworkTopology> {
    parse_path_notation_with(
        text,
        &ChainParams {
            link_length_m: default_link_length,
            ..ChainParams::default()
        },
    )
}

pub fn parse_path_notation_with(text: &str, params: &ChainParams) -> Result<NetworkTopology> {
    let notation = PathNotation::parse(text)?;
    let symbols: Vec<char> = notation.as_str().chars().collect();
    let id = |i: usize| NodeId(format!("{}{}", symbols[i], i));

    let nodes = symbols
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let kind = match c {
                'S' => NodeKind::Source(SourceSpec {
                    rep_period: params.rep_period,
                    emission_offset: Picos::ZERO,
                }),
                'I' => NodeKind::BsaSupport(BsaSpec {
                    coincidence_window: params.coincidence_window,
                    odl_bounds: [params.odl_bounds; 2],
                    odl_setting: [params.odl_bounds.lo; 2],
                }),
                _ => NodeKind::EndDetector,
            };
            NodeSpec { id: id(i), kind }
        })
        .collect();

    let mut links = Vec::new();
    for i in 0..symbols.len() - 1 {
        // Exactly one of each adjacent pair is a source.
        // A source feeds the left input of the BSA to its right and the
        // right input of the BSA to its left.
        let (src, dst, src_port, dst_port) = if symbols[i] == 'S' {
            (i, i + 1, 1u8, 0u8)
        } else {
            (i + 1, i, 0u8, u8::from(symbols[i] == 'I'))
        };
        links.push(Link::quantum(
            &format!("q{i}"),
            Endpoint::new(id(src).0, src_port),
            Endpoint::new(id(dst).0, dst_port),
            params.link_length_m,
            params.group_index,
        ));
        // Control links run from the BSA (or source, toward a detector).
        let (ctl_from, ctl_to) = if symbols[dst] == 'I' { (dst, src) } else { (src, dst) };
        let pumped = symbols[dst] == 'I' && pump_feeder(&symbols, src) == Some(dst);
        links.push(Link {
            id: LinkId(format!("c{i}")),
            from: Endpoint::new(id(ctl_from).0, 0),
            to: Endpoint::new(id(ctl_to).0, 0),
            channel: ChannelKind::ClassicalControl,
            length_m: params.link_length_m,
            group_index: params.group_index,
            extra_fixed_delay: Picos::ZERO,
            drift_ref: None,
            pump: pumped.then_some(PumpControl {
                bounds: params.pump_bounds,
                setting: params.pump_bounds.lo,
            }),
        });
    }
    Ok(NetworkTopology { nodes, links })
}

/// A closed ring of `n >= 2` sources and `n` BSAs.
///
/// BSA `I{k}` takes source `S{k}` on its left input (link `q{k}a`) and
/// source `S{k+1 mod n}` on its right input (link `q{k}b`). Each source is
/// pumped from the BSA on its left over control link `c{k}`.
pub fn ring_topology(n: usize, params: &ChainParams) -> Result<NetworkTopology> {
    if n < 2 {
        return Err(Error::Config("a ring needs at least two sources".into()));
    }
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for k in 0..n {
        nodes.push(NodeSpec {
            id: NodeId(format!("S{k}")),
            kind: NodeKind::Source(SourceSpec {
                rep_period: params.rep_period,
                emission_offset: Picos::ZERO,
            }),
        });
    }
    for k in 0..n {
        nodes.push(NodeSpec {
            id: NodeId(format!("I{k}")),
            kind: NodeKind::BsaSupport(BsaSpec {
                coincidence_window: params.coincidence_window,
                odl_bounds: [params.odl_bounds; 2],
                odl_setting: [params.odl_bounds.lo; 2],
            }),
        });
        let next = (k + 1) % n;
        links.push(Link::quantum(
            &format!("q{k}a"),
            Endpoint::new(format!("S{k}"), 1),
            Endpoint::new(format!("I{k}"), 0),
            params.link_length_m,
            params.group_index,
        ));
        links.push(Link::quantum(
            &format!("q{k}b"),
            Endpoint::new(format!("S{next}"), 0),
            Endpoint::new(format!("I{k}"), 1),
            params.link_length_m,
            params.group_index,
        ));
        links.push(Link {
            id: LinkId(format!("c{k}")),
            from: Endpoint::new(format!("I{k}"), 0),
            to: Endpoint::new(format!("S{next}"), 0),
            channel: ChannelKind::ClassicalControl,
            length_m: params.link_length_m,
            group_index: params.group_index,
            extra_fixed_delay: Picos::ZERO,
            drift_ref: None,
            pump: Some(PumpControl {
                bounds: params.pump_bounds,
                setting: params.pump_bounds.lo,
            }),
        });
    }
    Ok(NetworkTopology { nodes, links })
}

fn pump_feeder(symbols: &[char], source: usize) -> Option<usize> {
    if source > 0 && symbols[source - 1] == 'I' {
        Some(source - 1)
    } else if source + 1 < symbols.len() && symbols[source + 1] == 'I' {
        Some(source + 1)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::validate_topology;

    fn count(topo: &NetworkTopology, f: impl Fn(&NodeKind) -> bool) -> usize {
        topo.nodes.iter().filter(|n| f(&n.kind)).count()
    }

    #[test]
    fn dsd_has_one_source() {
        let t = parse_path_notation("DSD", 1000.0).unwrap();
        assert_eq!(count(&t, |k| matches!(k, NodeKind::Source(_))), 1);
        assert_eq!(count(&t, |k| matches!(k, NodeKind::BsaSupport(_))), 0);
        assert_eq!(count(&t, |k| matches!(k, NodeKind::EndDetector)), 2);
        assert_eq!(t.links.iter().filter(|l| l.is_quantum()).count(), 2);
        assert!(t.links.iter().all(|l| l.pump.is_none()));
    }

    #[test]
    fn dsisisd_counts() {
        let t = parse_path_notation("DSISISD", 1000.0).unwrap();
        assert_eq!(count(&t, |k| matches!(k, NodeKind::Source(_))), 3);
        assert_eq!(count(&t, |k| matches!(k, NodeKind::BsaSupport(_))), 2);
        assert_eq!(count(&t, |k| matches!(k, NodeKind::EndDetector)), 2);
        assert!(validate_topology(&t).is_empty());
        // one pump link per source
        assert_eq!(t.links.iter().filter(|l| l.pump.is_some()).count(), 3);
    }

    #[test]
    fn grammar_errors_report_position() {
        let pos = |s: &str| match parse_path_notation(s, 1.0) {
            Err(Error::Grammar { position, .. }) => position,
            other => panic!("expected grammar error for {s}, got {other:?}"),
        };
        assert_eq!(pos("DDS"), 2);
        assert_eq!(pos(""), 1);
        assert_eq!(pos("DSIS"), 5);
        assert_eq!(pos("DSID"), 4);
        assert_eq!(pos("DSDX"), 4);
        assert_eq!(pos("SD"), 1);
    }

    #[test]
    fn ports_follow_chain_orientation() {
        let t = parse_path_notation("DSISD", 1000.0).unwrap();
        let left = t.trace_to_emitter(&"I2".into(), 0).unwrap();
        let right = t.trace_to_emitter(&"I2".into(), 1).unwrap();
        assert_eq!(left.emitter, NodeId::from("S1"));
        assert_eq!(right.emitter, NodeId::from("S3"));
        assert_eq!(t.pump_link_of(&"S1".into()).unwrap().id, LinkId::from("c1"));
        assert_eq!(t.pump_link_of(&"S3".into()).unwrap().id, LinkId::from("c2"));
    }
}
