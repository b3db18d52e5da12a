use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::memory::QuantumBuffer;
use crate::solver::{build_constraints, VarId, VarKind};
use crate::strategy::{capability_of, StrategyKind};
use crate::time::Picos;
use crate::topology::{propagation_delay_ps, Bounds, MemoryMode, NetworkTopology, NodeId, NodeKind};

use super::drift::{DriftKind, DriftProcess};
use super::feedback::{estimate_delta, feedback_step, FeedbackController};
use super::metrics::{BsaMetrics, DeltaSample, IntervalRecord, PhotonRecord, RunMetrics};
use super::rates::paired_delta;
use super::{bsa_measure, stream, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Photon {
    source: u32,
    /// Slot the pair was emitted in.
    pair_slot: i64,
    /// Slot used for pairing; a hold memory re-tags it with its release slot.
    slot: i64,
    emitted: Picos,
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Tick(i64),
    Arrive { photon: Photon, node: usize, port: u8 },
    Release { node: usize },
}

struct Scheduled {
    time: Picos,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.seq).cmp(&(self.time, self.seq))
    }
}

struct LinkState {
    to: (usize, u8),
    delay: Picos,
    drift: Option<DriftProcess>,
}

impl LinkState {
    fn traverse(&mut self, t: Picos) -> Picos {
        let d = self.drift.as_mut().map(|p| p.value_ps(t)).unwrap_or_default();
        t + self.delay + d
    }
}

struct SourceState {
    node: usize,
    offset: Picos,
    /// Pump link index and setting when emission is pump triggered.
    pump: Option<(usize, Picos)>,
    rng: ChaCha8Rng,
    jitter: Option<(Normal<f64>, ChaCha8Rng)>,
}

#[derive(Clone, Copy, Debug)]
enum Knob {
    Odl(usize, usize),
    Emit(usize),
    Pump(usize),
    Hold(usize),
}

struct Control {
    ctrl: FeedbackController,
    knobs: [Option<(Knob, Bounds)>; 2],
    heralds: Vec<Picos>,
}

#[derive(Default)]
struct IntervalAcc {
    paired: u64,
    coincidences: u64,
    swaps: u64,
    sum: i128,
    min: Option<i64>,
    max: Option<i64>,
    settings: [Picos; 2],
}

struct BsaState {
    window: Picos,
    odl: [Picos; 2],
    shift: i64,
    pending: BTreeMap<i64, (u8, Picos, Photon)>,
    rng: ChaCha8Rng,
    control: Option<Control>,
    metrics: BsaMetrics,
    abs_sum: i128,
    intervals: BTreeMap<i64, IntervalAcc>,
    series: Vec<DeltaSample>,
}

enum MemState {
    Fixed(Picos),
    Hold {
        buffer: QuantumBuffer<Photon>,
        rng: ChaCha8Rng,
    },
}

/// Union-find over emitted pairs, joined by successful swaps.
#[derive(Default)]
struct PairTracker {
    index: HashMap<(u32, i64), usize>,
    parent: Vec<usize>,
    size: Vec<usize>,
    swaps: Vec<usize>,
    delivered: Vec<bool>,
}

impl PairTracker {
    fn id(&mut self, key: (u32, i64)) -> usize {
        let n = self.parent.len();
        let id = *self.index.entry(key).or_insert(n);
        if id == n {
            self.parent.push(n);
            self.size.push(1);
            self.swaps.push(0);
            self.delivered.push(false);
        }
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Records a swap joining two pairs; returns the merged root.
    fn join(&mut self, a: (u32, i64), b: (u32, i64)) -> usize {
        let (a, b) = (self.id(a), self.id(b));
        let (ra, rb) = (self.find(a), self.find(b));
        let root = if ra != rb {
            let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
            self.parent[small] = big;
            self.size[big] += self.size[small];
            self.swaps[big] += self.swaps[small];
            self.delivered[big] |= self.delivered[small];
            big
        } else {
            ra
        };
        self.swaps[root] += 1;
        root
    }
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    period: Picos,
    names: Vec<NodeId>,
    out: HashMap<(usize, u8), usize>,
    links: Vec<LinkState>,
    sources: Vec<SourceState>,
    bsas: Vec<BsaState>,
    bsa_of: HashMap<usize, usize>,
    memories: HashMap<usize, MemState>,
    detectors: Vec<bool>,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    horizon: i64,
    pairs: PairTracker,
    metrics: RunMetrics,
    last_delivery: i64,
    latency_sum: i64,
}

/// Simulates `cfg.slots` emission slots of `topo` under `strategy`.
///
/// Settings are taken from the topology as given; apply a solver assignment
/// first to simulate a synchronized network.
pub fn run(topo: &NetworkTopology, strategy: StrategyKind, cfg: &SimConfig, seed: u64) -> Result<RunMetrics> {
    let topo = cfg.prepare(topo)?;
    let mut e = Engine::new(&topo, strategy, cfg, seed)?;
    e.schedule(Picos::ZERO, Event::Tick(0));
    while let Some(s) = e.queue.pop() {
        e.handle(s.time, s.event)?;
    }
    e.flush(i64::MAX);
    Ok(e.finish())
}

impl<'a> Engine<'a> {
    fn new(topo: &NetworkTopology, strategy: StrategyKind, cfg: &'a SimConfig, seed: u64) -> Result<Self> {
        let period = topo.rep_period().ok_or_else(|| Error::InvalidTopology("no sources".into()))?;
        let names: Vec<NodeId> = topo.nodes.iter().map(|n| n.id.clone()).collect();
        let index: HashMap<NodeId, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();

        let total = Picos(period.0.saturating_mul(cfg.slots as i64));
        let mut drift_bound = Picos::ZERO;
        let mut links = Vec::new();
        let mut link_index = HashMap::new();
        let mut out = HashMap::new();
        for l in &topo.links {
            let drift = l.drift_ref.as_ref().map(|d| {
                let model = cfg.drift_model(d).expect("prepared").clone();
                let bound = match model.kind {
                    DriftKind::Static { offset } => offset.abs(),
                    DriftKind::Linear { rate } => rate.abs() * total.as_seconds(),
                    DriftKind::Sinusoidal { amplitude, .. } => amplitude,
                    DriftKind::RandomWalk { step_std, step_interval } => {
                        8.0 * step_std * (total.as_seconds() / step_interval).sqrt()
                    }
                };
                drift_bound = drift_bound.max(Picos::from_seconds(bound));
                DriftProcess::new(model, stream(seed, "drift", l.id.as_str()))
            });
            link_index.insert(l.id.clone(), links.len());
            if l.is_quantum() {
                out.insert((index[&l.from.node], l.from.port), links.len());
            }
            links.push(LinkState {
                to: (index[&l.to.node], l.to.port),
                delay: propagation_delay_ps(l),
                drift,
            });
        }

        let pump_triggered = strategy.pump_triggered();
        let jitter = (cfg.timing_jitter > Picos::ZERO)
            .then(|| Normal::new(0.0, cfg.timing_jitter.0 as f64).expect("jitter >= 0"));
        let mut sources = Vec::new();
        let mut memories = HashMap::new();
        let mut detectors = vec![false; names.len()];
        for (i, n) in topo.nodes.iter().enumerate() {
            match &n.kind {
                NodeKind::Source(s) => {
                    let pump = if pump_triggered {
                        topo.pump_link_of(&n.id).map(|l| (link_index[&l.id], l.pump.map(|p| p.setting).unwrap_or_default()))
                    } else {
                        None
                    };
                    sources.push(SourceState {
                        node: i,
                        offset: s.emission_offset,
                        pump,
                        rng: stream(seed, "emit", n.id.as_str()),
                        jitter: jitter.map(|j| (j, stream(seed, "jitter", n.id.as_str()))),
                    });
                }
                NodeKind::Memory(m) => {
                    let state = match m.mode {
                        MemoryMode::FixedDelayBuffer { delay } => MemState::Fixed(delay),
                        MemoryMode::HoldUntilReady { .. } => MemState::Hold {
                            buffer: QuantumBuffer::new(n.id.clone(), m.clone()),
                            rng: stream(seed, "memory", n.id.as_str()),
                        },
                    };
                    memories.insert(i, state);
                }
                NodeKind::EndDetector => detectors[i] = true,
                NodeKind::BsaSupport(_) => {}
            }
        }

        let caps = capability_of(strategy, topo);
        let system = build_constraints(topo, &caps)?;
        let mut bsas = Vec::new();
        let mut bsa_of = HashMap::new();
        let mut max_phase = Picos::ZERO;
        for c in &system.constraints {
            let spec = topo.node(&c.bsa).and_then(|n| n.as_bsa()).expect("bsa");
            let (_, shift) = paired_delta(topo, strategy, &c.bsa, period)?;
            max_phase = max_phase.max(c.left.fixed().abs()).max(c.right.fixed().abs());
            let control = cfg.controller.as_ref().and_then(|cc| {
                let mut knobs = [None, None];
                let mut targets = [VarId::from(""), VarId::from("")];
                for (side, expr) in [&c.left, &c.right].into_iter().enumerate() {
                    let Some(v) = expr.odl_var.as_ref().or(expr.emitter_var.as_ref()) else {
                        continue;
                    };
                    let var = &system.variables[v];
                    let knob = match &var.kind {
                        VarKind::OdlDelay(_, p) => Knob::Odl(bsas.len(), usize::from(*p)),
                        VarKind::EmissionOffset(s) => Knob::Emit(index[s]),
                        VarKind::PumpPathDelay(l) => Knob::Emit(index[&topo.link(l).expect("link").to.node]).pumped(),
                        VarKind::HoldPhase(m) => Knob::Hold(index[m]),
                    };
                    knobs[side] = Some((knob, var.bounds));
                    targets[side] = v.clone();
                }
                (knobs[0].is_some() || knobs[1].is_some()).then(|| Control {
                    ctrl: FeedbackController::new(c.bsa.clone(), cc, targets),
                    knobs,
                    heralds: Vec::new(),
                })
            });
            bsa_of.insert(index[&c.bsa], bsas.len());
            bsas.push(BsaState {
                window: spec.coincidence_window,
                odl: spec.odl_setting,
                shift,
                pending: BTreeMap::new(),
                rng: stream(seed, "swap", c.bsa.as_str()),
                control,
                metrics: BsaMetrics {
                    bsa: c.bsa.clone(),
                    ..BsaMetrics::default()
                },
                abs_sum: 0,
                intervals: BTreeMap::new(),
                series: Vec::new(),
            });
        }
        let slack = max_phase + drift_bound + Picos(period.0.saturating_mul(memories.len() as i64 + 1));
        let horizon = slack.0 / period.0 + 4;

        Ok(Engine {
            cfg,
            period,
            names,
            out,
            links,
            sources,
            bsas,
            bsa_of,
            memories,
            detectors,
            queue: BinaryHeap::new(),
            seq: 0,
            horizon,
            pairs: PairTracker::default(),
            metrics: RunMetrics {
                seed,
                slots: cfg.slots,
                ..RunMetrics::default()
            },
            last_delivery: -1,
            latency_sum: 0,
        })
    }

    fn schedule(&mut self, time: Picos, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled { time, seq: self.seq, event });
    }

    fn depart(&mut self, photon: Photon, node: usize, port: u8, t: Picos) {
        let Some(&l) = self.out.get(&(node, port)) else {
            return;
        };
        let link = &mut self.links[l];
        let at = link.traverse(t);
        let (to, to_port) = link.to;
        self.schedule(at, Event::Arrive { photon, node: to, port: to_port });
    }

    fn handle(&mut self, t: Picos, ev: Event) -> Result<()> {
        match ev {
            Event::Tick(k) => self.tick(k, t),
            Event::Arrive { photon, node, port } => self.arrive(photon, node, port, t),
            Event::Release { node } => self.release(node, t),
        }
    }

    fn emission_time(&mut self, s: usize, k: i64) -> Picos {
        let slot_start = Picos(self.period.0 * k);
        let src = &self.sources[s];
        let mut epoch = src.offset;
        if let Some((l, setting)) = src.pump {
            let link = &mut self.links[l];
            epoch += link.traverse(slot_start) - slot_start + setting;
        }
        slot_start + epoch
    }

    fn tick(&mut self, k: i64, _t: Picos) -> Result<()> {
        if k as u64 >= self.cfg.slots {
            return Ok(());
        }
        let mut all = true;
        for s in 0..self.sources.len() {
            let fire = self.sources[s].rng.random::<f64>() < self.cfg.p_gen;
            all &= fire;
            if !fire {
                continue;
            }
            let mut t = self.emission_time(s, k);
            if let Some((dist, rng)) = self.sources[s].jitter.as_mut() {
                t += Picos(dist.sample(rng).round() as i64);
            }
            let photon = Photon {
                source: s as u32,
                pair_slot: k,
                slot: k,
                emitted: t,
            };
            let node = self.sources[s].node;
            self.depart(photon, node, 0, t);
            self.depart(photon, node, 1, t);
        }
        if all {
            self.metrics.all_sources_fired += 1;
            if self.bsas.is_empty() {
                self.deliver(k);
            }
        }
        self.flush(k - self.horizon);
        self.schedule(Picos(self.period.0 * (k + 1)), Event::Tick(k + 1));
        Ok(())
    }

    fn arrive(&mut self, photon: Photon, node: usize, port: u8, t: Picos) -> Result<()> {
        if self.detectors[node] {
            self.metrics.detections += 1;
            return Ok(());
        }
        if let Some(&b) = self.bsa_of.get(&node) {
            self.at_bsa(b, photon, port, t);
            return Ok(());
        }
        let period = self.period;
        match self.memories.get_mut(&node) {
            Some(MemState::Fixed(d)) => {
                let d = *d;
                self.depart(photon, node, 1, t + d);
            }
            Some(MemState::Hold { buffer, rng }) => {
                if buffer.is_occupied() {
                    self.metrics.capture_losses += 1;
                    return Ok(());
                }
                if !buffer.store(photon, t, rng)? {
                    self.metrics.capture_losses += 1;
                    return Ok(());
                }
                let phase = buffer.spec.release_phase;
                let j = (t - phase).0.div_euclid(period.0) + i64::from((t - phase).0.rem_euclid(period.0) != 0);
                let at = Picos(j * period.0) + phase;
                self.schedule(at, Event::Release { node });
            }
            None => {
                return Err(Error::InvalidTopology(format!(
                    "photon arrived at '{}', which cannot receive it",
                    self.names[node]
                )))
            }
        }
        Ok(())
    }

    fn release(&mut self, node: usize, t: Picos) -> Result<()> {
        let Some(MemState::Hold { buffer, rng }) = self.memories.get_mut(&node) else {
            return Ok(());
        };
        let phase = buffer.spec.release_phase;
        let out = buffer.release(t, rng)?;
        match out.payload {
            Some(mut p) => {
                p.slot = (t - phase).0.div_euclid(self.period.0);
                self.depart(p, node, 1, t);
            }
            None => self.metrics.retention_losses += 1,
        }
        Ok(())
    }

    fn at_bsa(&mut self, b: usize, photon: Photon, port: u8, t: Picos) {
        let bsa = &mut self.bsas[b];
        let p = usize::from(port);
        let t = t + bsa.odl[p];
        bsa.metrics.arrivals[p] += 1;
        if self.cfg.record_photons {
            self.metrics.photons.push(PhotonRecord {
                source: self.names[self.sources[photon.source as usize].node].clone(),
                slot: photon.pair_slot,
                emitted: photon.emitted,
                bsa: bsa.metrics.bsa.clone(),
                port,
                arrival: t,
            });
        }
        let key = if port == 0 { photon.slot } else { photon.slot - bsa.shift };
        match bsa.pending.remove(&key) {
            Some((other, t0, p0)) if other != port => {
                let (l, r) = if port == 0 { ((t, photon), (t0, p0)) } else { ((t0, p0), (t, photon)) };
                self.measure(b, key, l, r);
            }
            _ => {
                bsa.pending.insert(key, (port, t, photon));
            }
        }
    }

    /// Drops unmatched photons whose partner can no longer arrive.
    fn flush(&mut self, before: i64) {
        for bsa in &mut self.bsas {
            while let Some((&k, _)) = bsa.pending.first_key_value() {
                if k >= before {
                    break;
                }
                bsa.pending.remove(&k);
            }
        }
    }

    fn knob_value(&self, k: Knob) -> Picos {
        match k {
            Knob::Odl(b, p) => self.bsas[b].odl[p],
            Knob::Emit(n) => self.source_at(n).offset,
            Knob::Pump(n) => self.source_at(n).pump.map(|p| p.1).unwrap_or_default(),
            Knob::Hold(m) => match &self.memories[&m] {
                MemState::Hold { buffer, .. } => buffer.spec.release_phase,
                MemState::Fixed(_) => Picos::ZERO,
            },
        }
    }

    fn source_at(&self, node: usize) -> &SourceState {
        self.sources.iter().find(|s| s.node == node).expect("source")
    }

    fn set_knob(&mut self, k: Knob, v: Picos) {
        match k {
            Knob::Odl(b, p) => self.bsas[b].odl[p] = v,
            Knob::Emit(n) => self.sources.iter_mut().find(|s| s.node == n).expect("source").offset = v,
            Knob::Pump(n) => {
                if let Some(p) = self.sources.iter_mut().find(|s| s.node == n).expect("source").pump.as_mut() {
                    p.1 = v;
                }
            }
            Knob::Hold(m) => {
                if let Some(MemState::Hold { buffer, .. }) = self.memories.get_mut(&m) {
                    buffer.spec.release_phase = v;
                }
            }
        }
    }

    fn settings(&self, b: usize) -> [Picos; 2] {
        match &self.bsas[b].control {
            Some(c) => {
                let mut s = self.bsas[b].odl;
                for (side, k) in c.knobs.iter().enumerate() {
                    if let Some((k, _)) = k {
                        s[side] = self.knob_value(*k);
                    }
                }
                s
            }
            None => self.bsas[b].odl,
        }
    }

    fn herald(&mut self, b: usize, delta: Picos) {
        if let Some(c) = self.bsas[b].control.as_mut() {
            c.heralds.push(delta);
            if c.heralds.len() >= c.ctrl.estimate_window {
                let est = estimate_delta(&c.heralds, c.ctrl.estimate_window).expect("enough heralds");
                c.heralds.clear();
                let knobs = c.knobs;
                let ctrl = c.ctrl.clone();
                let current = self.settings(b);
                let bounds = [0, 1].map(|s| knobs[s].map(|k| k.1).unwrap_or(Bounds::new(current[s], current[s])));
                let u = feedback_step(&ctrl, est, current, bounds);
                for (side, k) in knobs.iter().enumerate() {
                    if let Some((k, _)) = k {
                        self.set_knob(*k, u.settings[side]);
                    }
                }
                let bsa = &mut self.bsas[b];
                bsa.metrics.controller_updates += 1;
                bsa.metrics.saturations += u64::from(u.saturated);
            }
        }
    }

    fn measure(&mut self, b: usize, key: i64, l: (Picos, Photon), r: (Picos, Photon)) {
        let cfg = self.cfg;
        let bsa = &mut self.bsas[b];
        let m = bsa_measure(Some(l.0), Some(r.0), bsa.window, cfg.p0, cfg.sigma, &mut bsa.rng);
        let delta = m.delta.expect("both present");
        bsa.metrics.paired += 1;
        bsa.abs_sum += i128::from(delta.0.abs());
        bsa.metrics.coincidences += u64::from(m.coincidence);
        bsa.metrics.swaps += u64::from(m.swap_success);
        bsa.series.push(DeltaSample {
            slot: key,
            delta,
            coincidence: m.coincidence,
            swap: m.swap_success,
        });
        let iv = bsa.intervals.entry(key.div_euclid(cfg.report_interval as i64)).or_default();
        iv.paired += 1;
        iv.coincidences += u64::from(m.coincidence);
        iv.swaps += u64::from(m.swap_success);
        iv.sum += i128::from(delta.0);
        iv.min = Some(iv.min.map_or(delta.0, |x| x.min(delta.0)));
        iv.max = Some(iv.max.map_or(delta.0, |x| x.max(delta.0)));
        if m.coincidence {
            self.herald(b, delta);
        }
        let s = self.settings(b);
        self.interval_settings(b, key, s);
        if !m.swap_success {
            return;
        }

        let root = self.pairs.join((l.1.source, l.1.pair_slot), (r.1.source, r.1.pair_slot));
        if !self.pairs.delivered[root]
            && self.pairs.swaps[root] == self.bsas.len()
            && self.pairs.size[root] == self.sources.len()
        {
            self.pairs.delivered[root] = true;
            let slot = l.0.max(r.0).0.div_euclid(self.period.0);
            self.deliver(slot);
        }
    }

    fn interval_settings(&mut self, b: usize, key: i64, s: [Picos; 2]) {
        let every = self.cfg.report_interval as i64;
        if let Some(iv) = self.bsas[b].intervals.get_mut(&key.div_euclid(every)) {
            iv.settings = s;
        }
    }

    fn deliver(&mut self, slot: i64) {
        self.metrics.end_to_end += 1;
        let slot = slot.max(self.last_delivery + 1);
        self.latency_sum += slot - self.last_delivery;
        self.last_delivery = slot;
    }

    fn finish(mut self) -> RunMetrics {
        let every = self.cfg.report_interval as i64;
        let finals: Vec<[Picos; 2]> = (0..self.bsas.len()).map(|b| self.settings(b)).collect();
        let mut intervals = Vec::new();
        for (bsa, fin) in self.bsas.iter_mut().zip(finals) {
            bsa.metrics.final_settings = fin;
            bsa.metrics.mean_abs_delta_ps =
                (bsa.metrics.paired > 0).then(|| bsa.abs_sum as f64 / bsa.metrics.paired as f64);
            for (&i, acc) in &bsa.intervals {
                intervals.push(IntervalRecord {
                    bsa: bsa.metrics.bsa.clone(),
                    interval: i,
                    first_slot: i * every,
                    paired: acc.paired,
                    coincidences: acc.coincidences,
                    swaps: acc.swaps,
                    mean_delta_ps: (acc.paired > 0).then(|| acc.sum as f64 / acc.paired as f64),
                    min_delta_ps: acc.min,
                    max_delta_ps: acc.max,
                    settings: acc.settings,
                });
            }
            self.metrics.series.insert(bsa.metrics.bsa.clone(), std::mem::take(&mut bsa.series));
            self.metrics.bsas.push(bsa.metrics.clone());
        }
        intervals.sort_by(|a, b| (a.interval, &a.bsa).cmp(&(b.interval, &b.bsa)));
        self.metrics.intervals = intervals;
        self.metrics.mean_delivery_latency_slots =
            (self.metrics.end_to_end > 0).then(|| self.latency_sum as f64 / self.metrics.end_to_end as f64);
        self.metrics
    }
}

impl Knob {
    fn pumped(self) -> Knob {
        match self {
            Knob::Emit(n) => Knob::Pump(n),
            k => k,
        }
    }
}
