use std::collections::BTreeMap;

use serde::Serialize;

use crate::strategy::StrategyKind;
use crate::time::Picos;
use crate::topology::NodeId;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BsaMetrics {
    pub bsa: NodeId,
    pub arrivals: [u64; 2],
    /// Slots in which both inputs received a photon.
    pub paired: u64,
    pub coincidences: u64,
    pub swaps: u64,
    pub controller_updates: u64,
    pub saturations: u64,
    /// Actuated settings (left, right) at the end of the run.
    pub final_settings: [Picos; 2],
    pub mean_abs_delta_ps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub bsa: NodeId,
    pub interval: i64,
    pub first_slot: i64,
    pub paired: u64,
    pub coincidences: u64,
    pub swaps: u64,
    pub mean_delta_ps: Option<f64>,
    pub min_delta_ps: Option<i64>,
    pub max_delta_ps: Option<i64>,
    pub settings: [Picos; 2],
}

/// One paired slot at a BSA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DeltaSample {
    pub slot: i64,
    pub delta: Picos,
    pub coincidence: bool,
    pub swap: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhotonRecord {
    pub source: NodeId,
    pub slot: i64,
    pub emitted: Picos,
    pub bsa: NodeId,
    pub port: u8,
    /// Arrival at the interference point, ODL included.
    pub arrival: Picos,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub slots: u64,
    pub bsas: Vec<BsaMetrics>,
    pub intervals: Vec<IntervalRecord>,
    /// Slots in which every source emitted a pair.
    pub all_sources_fired: u64,
    /// Entanglement delivered across the whole network.
    pub end_to_end: u64,
    pub mean_delivery_latency_slots: Option<f64>,
    pub retention_losses: u64,
    pub capture_losses: u64,
    pub detections: u64,
    #[serde(skip)]
    pub series: BTreeMap<NodeId, Vec<DeltaSample>>,
    #[serde(skip)]
    pub photons: Vec<PhotonRecord>,
}

impl RunMetrics {
    pub fn bsa(&self, id: &str) -> Option<&BsaMetrics> {
        self.bsas.iter().find(|b| b.bsa.as_str() == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunHeader {
    pub version: String,
    pub strategy: StrategyKind,
    pub rep_period: Picos,
    pub scenario_hash: Option<String>,
}

impl RunHeader {
    pub fn new(strategy: StrategyKind, rep_period: Picos, scenario_hash: Option<String>) -> Self {
        RunHeader {
            version: env!("CARGO_PKG_VERSION").to_string(),
            strategy,
            rep_period,
            scenario_hash,
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Header {
        seed: u64,
        slots: u64,
        #[serde(flatten)]
        header: &'a RunHeader,
    },
    Interval(&'a IntervalRecord),
    Summary {
        bsas: &'a [BsaMetrics],
        all_sources_fired: u64,
        end_to_end: u64,
        mean_delivery_latency_slots: Option<f64>,
        retention_losses: u64,
        capture_losses: u64,
        detections: u64,
    },
}

/// Header, one line per interval record, then a summary line.
pub fn write_jsonl(header: &RunHeader, m: &RunMetrics) -> String {
    let mut lines = vec![Line::Header {
        seed: m.seed,
        slots: m.slots,
        header,
    }];
    lines.extend(m.intervals.iter().map(Line::Interval));
    lines.push(Line::Summary {
        bsas: &m.bsas,
        all_sources_fired: m.all_sources_fired,
        end_to_end: m.end_to_end,
        mean_delivery_latency_slots: m.mean_delivery_latency_slots,
        retention_losses: m.retention_losses,
        capture_losses: m.capture_losses,
        detections: m.detections,
    });
    let mut out = String::new();
    for l in &lines {
        out.push_str(&serde_json::to_string(l).expect("metrics serialize"));
        out.push('\n');
    }
    out
}
