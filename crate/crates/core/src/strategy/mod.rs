//! Coordination strategies as capability maps: which timing variables may
//! move, which node commands them, and whether simultaneity is exact or
//! only modulo the emission period.

mod cascade;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::solver::{TimingVariable, VarKind};
use crate::time::Picos;
use crate::topology::{Bounds, NetworkTopology, NodeKind};

pub use cascade::{analyze_cascade, psd_of, CascadeReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    /// The BSA lengthens or shortens the pump path of a source.
    PumpPathAdjust,
    /// ODLs at the BSA align the two quantum inputs.
    QuantumPathAdjustAtBsa,
    /// Sources stagger their emission phase on BSA feedback.
    EmissionOffsetAdjust,
    /// Free-running sources at a shared frequency, ODLs at the BSA.
    FrequencySyncQuantumAdjust,
    /// Pump-path and ODL adjustment together.
    Combined12,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::PumpPathAdjust,
        StrategyKind::QuantumPathAdjustAtBsa,
        StrategyKind::EmissionOffsetAdjust,
        StrategyKind::FrequencySyncQuantumAdjust,
        StrategyKind::Combined12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::PumpPathAdjust => "pump-path",
            StrategyKind::QuantumPathAdjustAtBsa => "quantum-odl",
            StrategyKind::EmissionOffsetAdjust => "emission-offset",
            StrategyKind::FrequencySyncQuantumAdjust => "freq-sync",
            StrategyKind::Combined12 => "combined-1-2",
        }
    }

    /// Whether a source's emission epoch includes its pump path delay.
    pub fn pump_triggered(self) -> bool {
        matches!(self, StrategyKind::PumpPathAdjust | StrategyKind::Combined12)
    }

    pub fn constraint_mode(self) -> ConstraintMode {
        match self {
            StrategyKind::FrequencySyncQuantumAdjust => ConstraintMode::ModuloPeriod,
            _ => ConstraintMode::Exact,
        }
    }

    pub fn classes(self) -> Vec<(VariableClass, ControlSide)> {
        use ControlSide::*;
        use VariableClass::*;
        let mut v = match self {
            StrategyKind::PumpPathAdjust => vec![(PumpPathDelay, Bsa)],
            StrategyKind::QuantumPathAdjustAtBsa => vec![(OdlDelay, Bsa)],
            StrategyKind::EmissionOffsetAdjust => vec![(EmissionOffset, Source)],
            StrategyKind::FrequencySyncQuantumAdjust => vec![(OdlDelay, Bsa)],
            StrategyKind::Combined12 => vec![(PumpPathDelay, Bsa), (OdlDelay, Bsa)],
        };
        // Hold-until-ready memories always pick their own release phase.
        v.push((HoldPhase, Memory));
        v
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown strategy '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

impl Serialize for StrategyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for StrategyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableClass {
    EmissionOffset,
    OdlDelay,
    PumpPathDelay,
    HoldPhase,
}

/// Which kind of node issues the adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSide {
    Bsa,
    /// The source moves its own phase, driven by BSA-measured feedback.
    Source,
    Memory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    Exact,
    ModuloPeriod,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyCapability {
    pub strategy: StrategyKind,
    pub classes: Vec<(VariableClass, ControlSide)>,
    /// Concrete adjustable variables, sorted by id.
    pub variables: Vec<TimingVariable>,
    pub constraint_mode: ConstraintMode,
}

impl StrategyCapability {
    pub fn adjusts(&self, class: VariableClass) -> bool {
        self.classes.iter().any(|(c, _)| *c == class)
    }

    pub fn count(&self, class: VariableClass) -> usize {
        self.variables.iter().filter(|v| v.kind.class() == class).count()
    }
}

/// Every timing variable the topology could expose, adjustable or not.
pub fn variable_universe(topo: &NetworkTopology) -> Vec<TimingVariable> {
    let period = topo.rep_period().unwrap_or(Picos(1));
    let phase_bounds = Bounds::new(Picos::ZERO, Picos(period.0 - 1));
    let mut out = Vec::new();
    for n in &topo.nodes {
        match &n.kind {
            NodeKind::Source(_) => out.push(TimingVariable::new(
                VarKind::EmissionOffset(n.id.clone()),
                phase_bounds,
                n.id.clone(),
            )),
            NodeKind::BsaSupport(b) => {
                for port in 0..2u8 {
                    out.push(TimingVariable::new(
                        VarKind::OdlDelay(n.id.clone(), port),
                        b.odl_bounds[port as usize],
                        n.id.clone(),
                    ));
                }
            }
            NodeKind::Memory(m) if m.is_hold() => out.push(TimingVariable::new(
                VarKind::HoldPhase(n.id.clone()),
                phase_bounds,
                n.id.clone(),
            )),
            _ => {}
        }
    }
    for l in &topo.links {
        if let Some(p) = &l.pump {
            out.push(TimingVariable::new(
                VarKind::PumpPathDelay(l.id.clone()),
                p.bounds,
                l.from.node.clone(),
            ));
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Instantiates a strategy's capability table against a concrete topology.
pub fn capability_of(strategy: StrategyKind, topo: &NetworkTopology) -> StrategyCapability {
    let classes = strategy.classes();
    let variables = variable_universe(topo)
        .into_iter()
        .filter(|v| classes.iter().any(|(c, _)| *c == v.kind.class()))
        .collect();
    StrategyCapability {
        strategy,
        classes,
        variables,
        constraint_mode: strategy.constraint_mode(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_path_notation;

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("strategy-5".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn odl_capability_on_dsisd() {
        let t = parse_path_notation("DSISD", 10_000.0).unwrap();
        let c = capability_of(StrategyKind::QuantumPathAdjustAtBsa, &t);
        assert_eq!(c.count(VariableClass::OdlDelay), 2);
        assert_eq!(c.variables.len(), 2);
        assert!(c.variables.iter().all(|v| v.controller.as_str() == "I2"));
        assert_eq!(c.constraint_mode, ConstraintMode::Exact);
    }

    #[test]
    fn pump_capability_on_dsisd() {
        let t = parse_path_notation("DSISD", 10_000.0).unwrap();
        let c = capability_of(StrategyKind::PumpPathAdjust, &t);
        assert_eq!(c.count(VariableClass::PumpPathDelay), 2);
        assert_eq!(c.variables.len(), 2);
        assert!(c.classes.contains(&(VariableClass::PumpPathDelay, ControlSide::Bsa)));
    }

    #[test]
    fn emission_capability_on_dsisisd() {
        let t = parse_path_notation("DSISISD", 10_000.0).unwrap();
        let c = capability_of(StrategyKind::EmissionOffsetAdjust, &t);
        assert_eq!(c.count(VariableClass::EmissionOffset), 3);
        assert!(c.classes.contains(&(VariableClass::EmissionOffset, ControlSide::Source)));
    }

    #[test]
    fn freq_sync_is_modular() {
        let t = parse_path_notation("DSISD", 10_000.0).unwrap();
        let c = capability_of(StrategyKind::FrequencySyncQuantumAdjust, &t);
        assert_eq!(c.constraint_mode, ConstraintMode::ModuloPeriod);
        assert_eq!(c.count(VariableClass::OdlDelay), 2);
    }

    #[test]
    fn combined_merges_pump_and_odl() {
        let t = parse_path_notation("DSISISD", 10_000.0).unwrap();
        let c = capability_of(StrategyKind::Combined12, &t);
        assert_eq!(c.count(VariableClass::PumpPathDelay), 3);
        assert_eq!(c.count(VariableClass::OdlDelay), 4);
    }
}
