use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::strategy::{variable_universe, ConstraintMode, StrategyCapability, StrategyKind, VariableClass};
use crate::time::Picos;
use crate::topology::{
    propagation_delay_ps, Bounds, EmitterKind, LinkId, NetworkTopology, NodeId, PhotonPath,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub String);

impl VarId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId(s.to_string())
    }
}

impl Serialize for VarId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    EmissionOffset(NodeId),
    OdlDelay(NodeId, u8),
    PumpPathDelay(LinkId),
    /// Release phase of a hold-until-ready memory.
    HoldPhase(NodeId),
}

impl VarKind {
    pub fn id(&self) -> VarId {
        VarId(match self {
            VarKind::EmissionOffset(n) => format!("emit:{n}"),
            VarKind::OdlDelay(n, p) => format!("odl:{n}:{p}"),
            VarKind::PumpPathDelay(l) => format!("pump:{l}"),
            VarKind::HoldPhase(n) => format!("hold:{n}"),
        })
    }

    pub fn parse(id: &str) -> Option<VarKind> {
        let (tag, rest) = id.split_once(':')?;
        Some(match tag {
            "emit" => VarKind::EmissionOffset(NodeId::new(rest)),
            "pump" => VarKind::PumpPathDelay(LinkId::new(rest)),
            "hold" => VarKind::HoldPhase(NodeId::new(rest)),
            "odl" => {
                let (node, port) = rest.rsplit_once(':')?;
                let port: u8 = port.parse().ok()?;
                if port > 1 {
                    return None;
                }
                VarKind::OdlDelay(NodeId::new(node), port)
            }
            _ => return None,
        })
    }

    pub fn class(&self) -> VariableClass {
        match self {
            VarKind::EmissionOffset(_) => VariableClass::EmissionOffset,
            VarKind::OdlDelay(..) => VariableClass::OdlDelay,
            VarKind::PumpPathDelay(_) => VariableClass::PumpPathDelay,
            VarKind::HoldPhase(_) => VariableClass::HoldPhase,
        }
    }

    pub fn is_epoch(&self) -> bool {
        !matches!(self, VarKind::OdlDelay(..))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimingVariable {
    pub id: VarId,
    pub kind: VarKind,
    pub bounds: Bounds,
    /// Node that commands the adjustment.
    pub controller: NodeId,
}

impl TimingVariable {
    pub fn new(kind: VarKind, bounds: Bounds, controller: NodeId) -> Self {
        TimingVariable {
            id: kind.id(),
            kind,
            bounds,
            controller,
        }
    }
}

/// Current value of a variable as stored in the topology.
pub fn current_value(topo: &NetworkTopology, kind: &VarKind) -> Result<Picos> {
    let missing = || Error::UnknownVariable(kind.id().0);
    Ok(match kind {
        VarKind::EmissionOffset(n) => topo.node(n).and_then(|n| n.as_source()).ok_or_else(missing)?.emission_offset,
        VarKind::OdlDelay(n, p) => topo.node(n).and_then(|n| n.as_bsa()).ok_or_else(missing)?.odl_setting[*p as usize],
        VarKind::PumpPathDelay(l) => topo.link(l).and_then(|l| l.pump).ok_or_else(missing)?.setting,
        VarKind::HoldPhase(n) => {
            topo.node(n).and_then(|n| n.as_memory()).filter(|m| m.is_hold()).ok_or_else(missing)?.release_phase
        }
    })
}

/// Arrival time of one photon at a BSA input, relative to its slot start.
///
/// The value is `path_delay + trigger_delay + fixed_epoch + fixed_odl` plus
/// the current values of `emitter_var` and `odl_var` when present.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalExpr {
    pub emitter: NodeId,
    #[serde(skip)]
    pub emitter_kind: EmitterKind,
    pub links: Vec<LinkId>,
    /// Fiber propagation plus fixed-delay buffers.
    pub path_delay: Picos,
    /// Pump path propagation when the emission is pump triggered.
    pub trigger_delay: Picos,
    /// Non-adjustable parts of the emitter epoch at their current values.
    pub fixed_epoch: Picos,
    /// The port's ODL setting when it is not adjustable.
    pub fixed_odl: Picos,
    pub emitter_var: Option<VarId>,
    pub odl_var: Option<VarId>,
}

impl ArrivalExpr {
    pub fn fixed(&self) -> Picos {
        self.path_delay + self.trigger_delay + self.fixed_epoch + self.fixed_odl
    }

    pub fn terms(&self) -> impl Iterator<Item = &VarId> {
        self.emitter_var.iter().chain(self.odl_var.iter())
    }

    pub fn evaluate(&self, values: &BTreeMap<VarId, Picos>) -> Result<Picos> {
        let mut t = self.fixed();
        for v in self.terms() {
            t += *values.get(v).ok_or_else(|| Error::UnknownVariable(v.0.clone()))?;
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimultaneityConstraint {
    pub bsa: NodeId,
    pub left: ArrivalExpr,
    pub right: ArrivalExpr,
    /// Period for modular equivalence, when enabled.
    pub modulo: Option<Picos>,
}

impl SimultaneityConstraint {
    /// Signed residual `left - right`, reduced into `(-P/2, P/2]` in modular mode.
    pub fn residual(&self, values: &BTreeMap<VarId, Picos>) -> Result<Picos> {
        let r = self.left.evaluate(values)? - self.right.evaluate(values)?;
        Ok(match self.modulo {
            Some(p) => r.centered_mod(p),
            None => r,
        })
    }

    pub fn variables(&self) -> impl Iterator<Item = &VarId> {
        self.left.terms().chain(self.right.terms())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingConstraintSystem {
    pub strategy: StrategyKind,
    pub mode: ConstraintMode,
    pub rep_period: Picos,
    /// Adjustable variables by id.
    pub variables: BTreeMap<VarId, TimingVariable>,
    /// One constraint per BSA, in BSA id order.
    pub constraints: Vec<SimultaneityConstraint>,
}

impl TimingConstraintSystem {
    /// Current topology values of every adjustable variable.
    pub fn current_values(&self, topo: &NetworkTopology) -> Result<BTreeMap<VarId, Picos>> {
        self.variables
            .values()
            .map(|v| Ok((v.id.clone(), current_value(topo, &v.kind)?)))
            .collect()
    }

    /// Constraints (by index) that mention each adjustable variable.
    pub fn uses(&self) -> BTreeMap<VarId, Vec<usize>> {
        let mut m: BTreeMap<VarId, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.constraints.iter().enumerate() {
            for v in c.variables() {
                let e = m.entry(v.clone()).or_default();
                if e.last() != Some(&i) {
                    e.push(i);
                }
            }
        }
        m
    }

    /// Whether the graph joining emitters through the BSAs they feed
    /// contains a loop, i.e. some emitter epoch is over-determined.
    pub fn emitter_graph_has_cycle(&self) -> bool {
        let mut ids: BTreeMap<&NodeId, usize> = BTreeMap::new();
        for c in &self.constraints {
            for e in [&c.left.emitter, &c.right.emitter] {
                let n = ids.len();
                ids.entry(e).or_insert(n);
            }
        }
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in &self.constraints {
            let a = find(&mut parent, ids[&c.left.emitter]);
            let b = find(&mut parent, ids[&c.right.emitter]);
            if a == b {
                return true;
            }
            parent[a] = b;
        }
        false
    }
}

/// Emission epoch of a source: its offset, plus the pump path delay and
/// setting when emission is pump triggered.
pub fn emission_epoch(topo: &NetworkTopology, source: &NodeId, strategy: StrategyKind) -> Result<Picos> {
    let spec = topo
        .node(source)
        .and_then(|n| n.as_source())
        .ok_or_else(|| Error::UnknownNode(source.0.clone()))?;
    let mut t = spec.emission_offset;
    if strategy.pump_triggered() {
        if let Some(l) = topo.pump_link_of(source) {
            t += propagation_delay_ps(l) + l.pump.map(|p| p.setting).unwrap_or_default();
        }
    }
    Ok(t)
}

fn arrival_expr(
    topo: &NetworkTopology,
    caps: &BTreeSet<VarId>,
    strategy: StrategyKind,
    bsa: &NodeId,
    port: u8,
) -> Result<ArrivalExpr> {
    let PhotonPath {
        emitter,
        emitter_kind,
        links,
        fixed_delay,
        ..
    } = topo.trace_to_emitter(bsa, port)?;

    let mut trigger_delay = Picos::ZERO;
    let mut fixed_epoch = Picos::ZERO;
    let mut emitter_var = None;
    let mut epoch_part = |kind: VarKind, fixed_epoch: &mut Picos| -> Result<()> {
        let id = kind.id();
        if caps.contains(&id) {
            emitter_var = Some(id);
        } else {
            *fixed_epoch += current_value(topo, &kind)?;
        }
        Ok(())
    };
    match emitter_kind {
        EmitterKind::Source => {
            epoch_part(VarKind::EmissionOffset(emitter.clone()), &mut fixed_epoch)?;
            if strategy.pump_triggered() {
                if let Some(l) = topo.pump_link_of(&emitter) {
                    trigger_delay = propagation_delay_ps(l);
                    epoch_part(VarKind::PumpPathDelay(l.id.clone()), &mut fixed_epoch)?;
                }
            }
        }
        EmitterKind::HoldMemory => {
            epoch_part(VarKind::HoldPhase(emitter.clone()), &mut fixed_epoch)?;
        }
    }

    let odl = VarKind::OdlDelay(bsa.clone(), port);
    let (odl_var, fixed_odl) = if caps.contains(&odl.id()) {
        (Some(odl.id()), Picos::ZERO)
    } else {
        (None, current_value(topo, &odl)?)
    };

    Ok(ArrivalExpr {
        emitter,
        emitter_kind,
        links,
        path_delay: fixed_delay,
        trigger_delay,
        fixed_epoch,
        fixed_odl,
        emitter_var,
        odl_var,
    })
}

/// One simultaneity constraint per BSA over the variables `caps` lets move;
/// everything else enters as a constant at its current value.
pub fn build_constraints(topo: &NetworkTopology, caps: &StrategyCapability) -> Result<TimingConstraintSystem> {
    let universe: BTreeMap<VarId, crate::solver::TimingVariable> =
        variable_universe(topo).into_iter().map(|v| (v.id.clone(), v)).collect();
    for v in &caps.variables {
        if !universe.contains_key(&v.id) {
            return Err(Error::CapabilityMismatch(format!("variable '{}' does not exist in the topology", v.id)));
        }
        if v.bounds.is_empty() {
            return Err(Error::CapabilityMismatch(format!("variable '{}' has empty bounds", v.id)));
        }
    }
    let ids: BTreeSet<VarId> = caps.variables.iter().map(|v| v.id.clone()).collect();
    let rep_period = topo
        .rep_period()
        .ok_or_else(|| Error::InvalidTopology("no sources".into()))?;
    let modulo = (caps.constraint_mode == ConstraintMode::ModuloPeriod).then_some(rep_period);

    let mut constraints = Vec::new();
    for bsa in topo.bsa_ids() {
        constraints.push(SimultaneityConstraint {
            left: arrival_expr(topo, &ids, caps.strategy, &bsa, 0)?,
            right: arrival_expr(topo, &ids, caps.strategy, &bsa, 1)?,
            bsa,
            modulo,
        });
    }
    let system = TimingConstraintSystem {
        strategy: caps.strategy,
        mode: caps.constraint_mode,
        rep_period,
        variables: caps.variables.iter().map(|v| (v.id.clone(), v.clone())).collect(),
        constraints,
    };
    if modulo.is_some() {
        for (v, used) in system.uses() {
            let sides = system
                .constraints
                .iter()
                .flat_map(|c| [&c.left, &c.right])
                .filter(|e| e.emitter_var.as_ref() == Some(&v))
                .count();
            if sides > 1 || used.len() > 1 {
                return Err(Error::CapabilityMismatch(format!(
                    "modular constraints cannot share variable '{v}' across BSA inputs"
                )));
            }
        }
    }
    Ok(system)
}

/// Fixed arrival phase of a BSA input: every term at its current topology value.
pub fn static_arrival(topo: &NetworkTopology, strategy: StrategyKind, bsa: &NodeId, port: u8) -> Result<Picos> {
    let e = arrival_expr(topo, &BTreeSet::new(), strategy, bsa, port)?;
    Ok(e.fixed())
}
