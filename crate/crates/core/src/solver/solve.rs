use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::strategy::{variable_universe, ConstraintMode};
use crate::time::Picos;
use crate::topology::{Bounds, LinkId, NetworkTopology, NodeId, NodeKind};

use super::constraints::{SimultaneityConstraint, TimingConstraintSystem, VarId, VarKind};

/// Default solver tolerance.
pub const DEFAULT_EPSILON: Picos = Picos(1);

const INF: i64 = i64::MAX / 4;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TimingAssignment {
    pub values: BTreeMap<VarId, Picos>,
    /// Residual `left - right` per BSA under `values`.
    pub residuals: BTreeMap<NodeId, Picos>,
}

/// A closed loop whose fixed imbalance the adjustable range cannot cancel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InfeasibilityCertificate {
    /// Quantum links around the loop, in walking order.
    pub cycle: Vec<LinkId>,
    /// BSAs on the loop, in walking order.
    pub bsas: Vec<NodeId>,
    /// Signed path-delay imbalance of `cycle` (oriented to be `>= 0`).
    pub fixed_imbalance: Picos,
    /// Interval of loop-oriented ODL contribution `x`; the loop closes iff
    /// `fixed_imbalance + x` hits `0` (or a multiple of `modulo`) within `tolerance`.
    pub adjustable_min: Picos,
    pub adjustable_max: Picos,
    /// The part of that interval usable against the imbalance.
    pub total_adjustable_range: Picos,
    /// Accumulated per-BSA tolerance along the loop.
    pub tolerance: Picos,
    pub modulo: Option<Picos>,
}

impl InfeasibilityCertificate {
    /// Re-checks that the loop cannot be closed, using only the certificate.
    pub fn holds(&self) -> bool {
        let lo = self.adjustable_min - self.tolerance;
        let hi = self.adjustable_max + self.tolerance;
        !closes(-self.fixed_imbalance, lo, hi, self.modulo)
    }
}

fn closes(target: Picos, lo: Picos, hi: Picos, modulo: Option<Picos>) -> bool {
    match modulo {
        None => lo <= target && target <= hi,
        Some(p) => {
            // Is there an m with lo <= target + m p <= hi?
            let m = (lo.0 - target.0).div_euclid(p.0) + i64::from((lo.0 - target.0).rem_euclid(p.0) != 0);
            target.0 + m * p.0 <= hi.0
        }
    }
}

/// Over-tight bounds without a loop: the listed constraints demand more
/// adjustment than their variables can supply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundsCertificate {
    pub bsas: Vec<NodeId>,
    pub variables: Vec<VarId>,
    /// Missing adjustment range.
    pub shortfall: Picos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Solution {
    Feasible(TimingAssignment),
    CycleInfeasible(InfeasibilityCertificate),
    BoundsInfeasible(BoundsCertificate),
}

impl Solution {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Solution::Feasible(_))
    }

    pub fn assignment(&self) -> Option<&TimingAssignment> {
        match self {
            Solution::Feasible(a) => Some(a),
            _ => None,
        }
    }
}

/// Per-constraint view used by every phase.
struct Row<'a> {
    c: &'a SimultaneityConstraint,
    /// `left.fixed() - right.fixed()`.
    k: i64,
    /// Same, counting only paths and non-adjustable ODLs.
    k_relaxed: i64,
    path_diff: i64,
    fixed_odl_diff: i64,
    /// Variables resolved inside this constraint alone, per side.
    local: [Vec<(VarId, Bounds)>; 2],
    /// Epoch variables shared through the global graph, per side.
    global: [Option<VarId>; 2],
    /// ODL-only local range (relaxed screening).
    odl_range: (i64, i64),
}

impl Row<'_> {
    fn local_range(&self) -> (i64, i64, i64) {
        let sum = |v: &[(VarId, Bounds)], hi: bool| -> i64 {
            v.iter().map(|(_, b)| if hi { b.hi.0 } else { b.lo.0 }).sum()
        };
        let (l, r) = (&self.local[0], &self.local[1]);
        (sum(l, false) - sum(r, true), sum(l, true) - sum(r, false), sum(l, false) - sum(r, false))
    }
}

fn rows<'a>(sys: &'a TimingConstraintSystem) -> Vec<Row<'a>> {
    let periodic = sys.mode == ConstraintMode::ModuloPeriod;
    let bounds = |v: &VarId| sys.variables[v].bounds;
    sys.constraints
        .iter()
        .map(|c| {
            let mut local: [Vec<(VarId, Bounds)>; 2] = [Vec::new(), Vec::new()];
            let mut global: [Option<VarId>; 2] = [None, None];
            let mut odl = [(0i64, 0i64); 2];
            for (i, e) in [&c.left, &c.right].into_iter().enumerate() {
                if let Some(v) = &e.odl_var {
                    local[i].push((v.clone(), bounds(v)));
                    odl[i] = (bounds(v).lo.0, bounds(v).hi.0);
                }
                if let Some(v) = &e.emitter_var {
                    if periodic {
                        local[i].push((v.clone(), bounds(v)));
                    } else {
                        global[i] = Some(v.clone());
                    }
                }
                local[i].sort_by(|a, b| a.0.cmp(&b.0));
            }
            Row {
                c,
                k: (c.left.fixed() - c.right.fixed()).0,
                k_relaxed: (c.left.path_delay + c.left.fixed_odl - c.right.path_delay - c.right.fixed_odl).0,
                path_diff: (c.left.path_delay - c.right.path_delay).0,
                fixed_odl_diff: (c.left.fixed_odl - c.right.fixed_odl).0,
                local,
                global,
                odl_range: (odl[0].0 - odl[1].1, odl[0].1 - odl[1].0),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    from: usize,
    to: usize,
    w: i64,
    /// Constraint row and walking sign, or `None` for a bound edge.
    row: Option<(usize, i64)>,
}

/// Bellman-Ford from a virtual source; returns one negative cycle in
/// walking order if any exists.
fn negative_cycle(n: usize, edges: &[Edge]) -> Option<Vec<Edge>> {
    let mut dist = vec![0i64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _ in 0..n {
        last = None;
        for (i, e) in edges.iter().enumerate() {
            if dist[e.from] + e.w < dist[e.to] {
                dist[e.to] = dist[e.from] + e.w;
                pred[e.to] = Some(i);
                last = Some(e.to);
            }
        }
        last?;
    }
    let mut x = last?;
    for _ in 0..n {
        x = edges[pred[x]?].from;
    }
    let start = x;
    let mut cycle = Vec::new();
    loop {
        let e = edges[pred[x]?];
        cycle.push(e);
        x = e.from;
        if x == start {
            break;
        }
    }
    cycle.reverse();
    Some(cycle)
}

/// Builds a loop certificate from constraint steps `(row, sign)`; sign `+1`
/// walks from the left emitter to the right one.
fn loop_certificate(rows: &[Row], steps: &[(usize, i64)], eps: i64, modulo: Option<Picos>) -> InfeasibilityCertificate {
    let imbalance: i64 = steps.iter().map(|&(r, s)| s * rows[r].path_diff).sum();
    let mut steps = steps.to_vec();
    if imbalance < 0 {
        steps.reverse();
        for s in &mut steps {
            s.1 = -s.1;
        }
    }
    let mut cycle = Vec::new();
    let mut bsas = Vec::new();
    let (mut xmin, mut xmax, mut i_sum) = (0i64, 0i64, 0i64);
    for &(r, s) in &steps {
        let row = &rows[r];
        let (a, b) = if s > 0 { (&row.c.left, &row.c.right) } else { (&row.c.right, &row.c.left) };
        cycle.extend(a.links.iter().cloned());
        cycle.extend(b.links.iter().rev().cloned());
        bsas.push(row.c.bsa.clone());
        let (lo, hi) = (row.odl_range.0 + row.fixed_odl_diff, row.odl_range.1 + row.fixed_odl_diff);
        if s > 0 {
            xmin += lo;
            xmax += hi;
        } else {
            xmin -= hi;
            xmax -= lo;
        }
        i_sum += s * row.path_diff;
    }
    InfeasibilityCertificate {
        cycle,
        bsas,
        fixed_imbalance: Picos(i_sum),
        adjustable_min: Picos(xmin),
        adjustable_max: Picos(xmax),
        total_adjustable_range: Picos(if i_sum > 0 { -xmin } else { xmax }),
        tolerance: Picos(eps * steps.len() as i64),
        modulo,
    }
}

/// Emitter epochs free and unbounded: anything still infeasible is a loop.
fn screen_cycles(rows: &[Row], eps: i64, modulo: Option<Picos>) -> Option<InfeasibilityCertificate> {
    let mut idx: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for r in rows {
        for e in [&r.c.left.emitter, &r.c.right.emitter] {
            let n = idx.len();
            idx.entry(e).or_insert(n);
        }
    }
    // Self loops: one emitter feeding both inputs of a BSA.
    for (i, r) in rows.iter().enumerate() {
        if r.c.left.emitter == r.c.right.emitter {
            let cert = loop_certificate(rows, &[(i, 1)], eps, modulo);
            if cert.holds() {
                return Some(cert);
            }
        }
    }
    match modulo {
        None => {
            let mut edges = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                let (u, v) = (idx[&r.c.left.emitter], idx[&r.c.right.emitter]);
                if u == v {
                    continue;
                }
                let a = -eps - r.k_relaxed - r.odl_range.1;
                let b = eps - r.k_relaxed - r.odl_range.0;
                edges.push(Edge { from: v, to: u, w: b, row: Some((i, -1)) });
                edges.push(Edge { from: u, to: v, w: -a, row: Some((i, 1)) });
            }
            let cyc = negative_cycle(idx.len(), &edges)?;
            let steps: Vec<(usize, i64)> = cyc.iter().filter_map(|e| e.row).collect();
            Some(loop_certificate(rows, &steps, eps, None))
        }
        Some(_) => {
            // Fundamental cycles of a BFS spanning forest.
            let n = idx.len();
            let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
            for (i, r) in rows.iter().enumerate() {
                let (u, v) = (idx[&r.c.left.emitter], idx[&r.c.right.emitter]);
                if u != v {
                    adj[u].push((v, i));
                    adj[v].push((u, i));
                }
            }
            // parent[x] = (parent node, row, child is left side)
            let mut parent: Vec<Option<(usize, usize, bool)>> = vec![None; n];
            let mut depth = vec![usize::MAX; n];
            let mut tree_row = vec![false; rows.len()];
            for root in 0..n {
                if depth[root] != usize::MAX {
                    continue;
                }
                depth[root] = 0;
                let mut q = VecDeque::from([root]);
                while let Some(x) = q.pop_front() {
                    for &(y, i) in &adj[x] {
                        if depth[y] == usize::MAX {
                            depth[y] = depth[x] + 1;
                            parent[y] = Some((x, i, idx[&rows[i].c.left.emitter] == y));
                            tree_row[i] = true;
                            q.push_back(y);
                        }
                    }
                }
            }
            for (i, r) in rows.iter().enumerate() {
                let (u, v) = (idx[&r.c.left.emitter], idx[&r.c.right.emitter]);
                if u == v || tree_row[i] {
                    continue;
                }
                // Walk u -> v over this row, then v back up/down the tree to u.
                let mut up = Vec::new();
                let mut down = Vec::new();
                let (mut a, mut b) = (v, u);
                while a != b {
                    if depth[a] >= depth[b] {
                        let (p, row, child_left) = parent[a].expect("non-root");
                        up.push((row, if child_left { 1 } else { -1 }));
                        a = p;
                    } else {
                        let (p, row, child_left) = parent[b].expect("non-root");
                        down.push((row, if child_left { -1 } else { 1 }));
                        b = p;
                    }
                }
                down.reverse();
                let mut steps = vec![(i, 1)];
                steps.extend(up);
                steps.extend(down);
                let cert = loop_certificate(rows, &steps, eps, modulo);
                if cert.holds() {
                    return Some(cert);
                }
            }
            None
        }
    }
}

/// Splits a local adjustment `s = Σleft - Σright` among the row's local
/// variables. The correction lands on the earlier side; the later side
/// stays at its lower bounds.
fn split_local(row: &Row, s: i64, out: &mut BTreeMap<VarId, Picos>) {
    let (_, _, rest) = row.local_range();
    let lo_sum = |v: &[(VarId, Bounds)]| -> i64 { v.iter().map(|(_, b)| b.lo.0).sum() };
    let (raised, resting, total) = if s >= rest {
        (&row.local[0], &row.local[1], s + lo_sum(&row.local[1]))
    } else {
        (&row.local[1], &row.local[0], lo_sum(&row.local[0]) - s)
    };
    for (v, b) in resting {
        out.insert(v.clone(), b.lo);
    }
    let mut extra = total - lo_sum(raised);
    for (v, b) in raised {
        let add = extra.min(b.width().0).max(0);
        out.insert(v.clone(), b.lo + Picos(add));
        extra -= add;
    }
    debug_assert_eq!(extra, 0);
}

fn bounds_shortfall(a: i64, b: i64) -> i64 {
    if a > 0 {
        a
    } else {
        -b
    }
}

fn solve_exact(rows: &[Row], sys: &TimingConstraintSystem, eps: i64) -> Solution {
    // Node 0 is the fixed origin; then every epoch variable in id order.
    let epoch_vars: Vec<&VarId> = sys.variables.values().filter(|v| v.kind.is_epoch()).map(|v| &v.id).collect();
    let node_of: BTreeMap<&VarId, usize> = epoch_vars.iter().enumerate().map(|(i, v)| (*v, i + 1)).collect();
    let n = epoch_vars.len() + 1;
    let node = |g: &Option<VarId>| g.as_ref().map_or(0, |v| node_of[v]);

    let mut edges = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let (smin, smax, _) = r.local_range();
        let a = -eps - r.k - smax;
        let b = eps - r.k - smin;
        let (u, v) = (node(&r.global[0]), node(&r.global[1]));
        if u == v {
            if a > 0 || b < 0 {
                let mut variables: Vec<VarId> = r.c.variables().cloned().collect();
                variables.sort();
                variables.dedup();
                return Solution::BoundsInfeasible(BoundsCertificate {
                    bsas: vec![r.c.bsa.clone()],
                    variables,
                    shortfall: Picos(bounds_shortfall(a, b)),
                });
            }
            continue;
        }
        edges.push(Edge { from: v, to: u, w: b, row: Some((i, -1)) });
        edges.push(Edge { from: u, to: v, w: -a, row: Some((i, 1)) });
    }
    for v in &epoch_vars {
        let b = sys.variables[*v].bounds;
        let x = node_of[v];
        edges.push(Edge { from: 0, to: x, w: b.hi.0, row: None });
        edges.push(Edge { from: x, to: 0, w: -b.lo.0, row: None });
    }

    if let Some(cyc) = negative_cycle(n, &edges) {
        let mut bsas = Vec::new();
        let mut variables = Vec::new();
        for e in &cyc {
            for x in [e.from, e.to] {
                if x > 0 {
                    variables.push(epoch_vars[x - 1].clone());
                }
            }
            if let Some((r, _)) = e.row {
                if !bsas.contains(&rows[r].c.bsa) {
                    bsas.push(rows[r].c.bsa.clone());
                }
                variables.extend(rows[r].local.iter().flatten().map(|(v, _)| v.clone()));
            }
        }
        variables.sort();
        variables.dedup();
        let shortfall = -cyc.iter().map(|e| e.w).sum::<i64>();
        return Solution::BoundsInfeasible(BoundsCertificate { bsas, variables, shortfall: Picos(shortfall) });
    }

    // All-pairs shortest paths: x_j - x_i <= d[i][j].
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in &edges {
        if e.w < d[e.from][e.to] {
            d[e.from][e.to] = e.w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, r) in rows.iter().enumerate() {
        let (u, v) = (node(&r.global[0]), node(&r.global[1]));
        if u != v {
            adj[u].push((v, i));
            adj[v].push((u, i));
        }
    }
    for a in &mut adj {
        a.sort();
    }

    let mut x: Vec<Option<i64>> = vec![None; n];
    let interval = |x: &[Option<i64>], v: usize| -> (i64, i64) {
        let (mut lo, mut hi) = (-INF, INF);
        for (f, xf) in x.iter().enumerate() {
            if let Some(xf) = xf {
                if d[v][f] != INF {
                    lo = lo.max(xf - d[v][f]);
                }
                if d[f][v] != INF {
                    hi = hi.min(xf + d[f][v]);
                }
            }
        }
        (lo, hi)
    };
    let bfs = |x: &mut Vec<Option<i64>>, root: usize| {
        let mut q = VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            for &(v, i) in &adj[u] {
                if x[v].is_some() {
                    continue;
                }
                let r = &rows[i];
                let (_, _, rest) = r.local_range();
                let xu = x[u].expect("fixed");
                // Residual zero with local variables at rest.
                let want = if node(&r.global[0]) == v { xu - r.k - rest } else { xu + r.k + rest };
                let (lo, hi) = interval(x, v);
                x[v] = Some(want.clamp(lo, hi));
                q.push_back(v);
            }
        }
    };
    x[0] = Some(0);
    bfs(&mut x, 0);
    for v in 1..n {
        if x[v].is_none() {
            let (lo, hi) = interval(&x, v);
            let b = sys.variables[epoch_vars[v - 1]].bounds;
            x[v] = Some(b.lo.0.clamp(lo, hi));
            bfs(&mut x, v);
        }
    }

    let mut values = BTreeMap::new();
    for (v, xv) in epoch_vars.iter().zip(&x[1..]) {
        values.insert((*v).clone(), Picos(xv.expect("assigned")));
    }
    for r in rows {
        let (smin, smax, _) = r.local_range();
        let xl = x[node(&r.global[0])].expect("assigned");
        let xr = x[node(&r.global[1])].expect("assigned");
        let s = (-(xl - xr + r.k)).clamp(smin, smax);
        split_local(r, s, &mut values);
    }
    finish(sys, values, eps)
}

fn solve_periodic(rows: &[Row], sys: &TimingConstraintSystem, eps: i64) -> Solution {
    let p = sys.rep_period.0;
    let mut values = BTreeMap::new();
    for r in rows {
        let (smin, smax, rest) = r.local_range();
        let (lo, hi) = (r.k + smin, r.k + smax);
        // Feasible multiples m satisfy lo - eps <= m p <= hi + eps.
        let m_lo = (lo - eps).div_euclid(p) + i64::from((lo - eps).rem_euclid(p) != 0);
        let m_hi = (hi + eps).div_euclid(p);
        if m_lo > m_hi {
            let below = lo - (m_hi * p) - eps;
            let above = (m_lo * p) - hi - eps;
            let mut variables: Vec<VarId> = r.c.variables().cloned().collect();
            variables.sort();
            return Solution::BoundsInfeasible(BoundsCertificate {
                bsas: vec![r.c.bsa.clone()],
                variables,
                shortfall: Picos(below.min(above)),
            });
        }
        let m0 = (r.k + rest).div_euclid(p) + i64::from((r.k + rest).rem_euclid(p) * 2 >= p);
        let mut best: Option<(i64, i64)> = None;
        for m in [m0 - 1, m0, m0 + 1].map(|m| m.clamp(m_lo, m_hi)) {
            let s = (m * p - r.k).clamp(smin, smax);
            let key = (s - rest).abs();
            if best.is_none_or(|(_, k)| key < k) {
                best = Some((s, key));
            }
        }
        split_local(r, best.expect("candidate").0, &mut values);
    }
    for v in sys.variables.values() {
        values.entry(v.id.clone()).or_insert(v.bounds.lo);
    }
    finish(sys, values, eps)
}

fn finish(sys: &TimingConstraintSystem, mut values: BTreeMap<VarId, Picos>, eps: i64) -> Solution {
    for v in sys.variables.values() {
        values.entry(v.id.clone()).or_insert(v.bounds.lo);
    }
    let mut residuals = BTreeMap::new();
    for c in &sys.constraints {
        let r = c.residual(&values).expect("all variables assigned");
        debug_assert!(r.0.abs() <= eps, "residual {r} at {} exceeds tolerance", c.bsa);
        residuals.insert(c.bsa.clone(), r);
    }
    Solution::Feasible(TimingAssignment { values, residuals })
}

/// Solves the simultaneity system to within `epsilon`.
///
/// Returns the canonical assignment when one exists: the origin (every
/// non-adjustable emitter) anchors the epochs, other components anchor their
/// lowest-id epoch variable at its lower bound, and values propagate
/// breadth first in ascending id order with local ODLs at rest. Otherwise
/// returns a loop certificate or a bounds certificate.
///
/// Exact coincidence is preferred: the tolerance is only spent when no
/// zero-residual assignment exists.
pub fn solve(sys: &TimingConstraintSystem, epsilon: Picos) -> Solution {
    let eps = epsilon.0.max(0);
    if eps > 0 {
        if let exact @ Solution::Feasible(_) = solve_with(sys, 0) {
            return exact;
        }
    }
    solve_with(sys, eps)
}

fn solve_with(sys: &TimingConstraintSystem, eps: i64) -> Solution {
    let rows = rows(sys);
    let modulo = (sys.mode == ConstraintMode::ModuloPeriod).then_some(sys.rep_period);
    if let Some(cert) = screen_cycles(&rows, eps, modulo) {
        return Solution::CycleInfeasible(cert);
    }
    match sys.mode {
        ConstraintMode::Exact => solve_exact(&rows, sys, eps),
        ConstraintMode::ModuloPeriod => solve_periodic(&rows, sys, eps),
    }
}

/// Writes assignment values back into a copy of the topology.
pub fn apply_assignment(topo: &NetworkTopology, a: &TimingAssignment) -> Result<NetworkTopology> {
    let universe: BTreeMap<VarId, Bounds> = variable_universe(topo).into_iter().map(|v| (v.id, v.bounds)).collect();
    let mut out = topo.clone();
    for (id, &value) in &a.values {
        let unknown = || Error::UnknownVariable(id.0.clone());
        let kind = VarKind::parse(id.as_str()).ok_or_else(unknown)?;
        let b = universe.get(id).ok_or_else(unknown)?;
        if !b.contains(value) {
            return Err(Error::BoundsViolation { id: id.0.clone(), value, lo: b.lo, hi: b.hi });
        }
        match kind {
            VarKind::EmissionOffset(n) => {
                if let Some(NodeKind::Source(s)) = out.node_mut(&n).map(|n| &mut n.kind) {
                    s.emission_offset = value;
                }
            }
            VarKind::OdlDelay(n, p) => {
                if let Some(NodeKind::BsaSupport(b)) = out.node_mut(&n).map(|n| &mut n.kind) {
                    b.odl_setting[p as usize] = value;
                }
            }
            VarKind::PumpPathDelay(l) => {
                if let Some(pc) = out.link_mut(&l).and_then(|l| l.pump.as_mut()) {
                    pc.setting = value;
                }
            }
            VarKind::HoldPhase(n) => {
                if let Some(NodeKind::Memory(m)) = out.node_mut(&n).map(|n| &mut n.kind) {
                    m.release_phase = value;
                }
            }
        }
    }
    Ok(out)
}
