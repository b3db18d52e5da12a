//! Slot-synchronous discrete-event simulation of photon arrivals, BSA
//! interference and feedback.

mod bsa;
mod drift;
mod engine;
mod feedback;
mod metrics;
mod rates;
mod rng;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bsa::{bsa_measure, swap_probability, Measurement};
pub use drift::{drift_value, DriftKind, DriftModel, DriftProcess};
pub use engine::run;
pub use feedback::{estimate_delta, feedback_step, ControllerConfig, FeedbackController, FeedbackUpdate};
pub use metrics::{write_jsonl, BsaMetrics, DeltaSample, IntervalRecord, PhotonRecord, RunHeader, RunMetrics};
pub use rates::{end_to_end_rate_analytic, RateEstimate};
pub use rng::stream;

use crate::error::{Error, Result};
use crate::time::Picos;
use crate::topology::{validate_topology, LinkId, NetworkTopology, NodeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slots: u64,
    /// Overrides every source's repetition period.
    pub rep_period: Option<Picos>,
    /// Per-slot pair generation probability of each source.
    pub p_gen: f64,
    /// Swap success at perfect overlap.
    pub p0: f64,
    /// Width of the interference visibility curve.
    pub sigma: Picos,
    /// Overrides every BSA's coincidence window.
    pub window: Option<Picos>,
    /// Gaussian emission-time jitter per photon pair.
    pub timing_jitter: Picos,
    pub controller: Option<ControllerConfig>,
    pub drift_models: Vec<DriftModel>,
    /// Link to drift-model bindings, taking precedence over `drift_ref`.
    pub drift_bindings: BTreeMap<LinkId, String>,
    /// Slots per interval record.
    pub report_interval: u64,
    pub record_photons: bool,
    /// Success probability of a deferred swap across two memories.
    pub p_swap_mem: f64,
    /// Hop-by-hop runs stop after this many deliveries.
    pub max_deliveries: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 10_000,
            rep_period: None,
            p_gen: 0.1,
            p0: 0.5,
            sigma: Picos(100),
            window: None,
            timing_jitter: Picos::ZERO,
            controller: None,
            drift_models: Vec::new(),
            drift_bindings: BTreeMap::new(),
            report_interval: 1_000,
            record_photons: false,
            p_swap_mem: 1.0,
            max_deliveries: None,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        probability("p_gen", self.p_gen)?;
        probability("p0", self.p0)?;
        probability("p_swap_mem", self.p_swap_mem)?;
        if self.sigma < Picos::ZERO || self.timing_jitter < Picos::ZERO {
            return Err(Error::Config("sigma and timing_jitter must be >= 0".into()));
        }
        if self.report_interval == 0 {
            return Err(Error::Config("report_interval must be >= 1".into()));
        }
        if let Some(p) = self.rep_period {
            if p <= Picos::ZERO {
                return Err(Error::Config("rep_period must be > 0".into()));
            }
        }
        if let Some(w) = self.window {
            if w < Picos::ZERO {
                return Err(Error::Config("window must be >= 0".into()));
            }
        }
        if let Some(c) = &self.controller {
            c.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.drift_models {
            m.validate()?;
            if !seen.insert(&m.id) {
                return Err(Error::Config(format!("duplicate drift model '{}'", m.id)));
            }
        }
        Ok(())
    }

    pub fn drift_model(&self, id: &str) -> Option<&DriftModel> {
        self.drift_models.iter().find(|m| m.id == id)
    }

    /// The topology a run actually uses: overrides applied, bindings resolved
    /// and the result validated.
    pub fn prepare(&self, topo: &NetworkTopology) -> Result<NetworkTopology> {
        self.validate()?;
        let mut t = topo.clone();
        for n in &mut t.nodes {
            match &mut n.kind {
                NodeKind::Source(s) => {
                    if let Some(p) = self.rep_period {
                        s.rep_period = p;
                    }
                }
                NodeKind::BsaSupport(b) => {
                    if let Some(w) = self.window {
                        b.coincidence_window = w;
                    }
                }
                _ => {}
            }
        }
        for (link, model) in &self.drift_bindings {
            let l = t.link_mut(link).ok_or_else(|| Error::UnknownLink(link.0.clone()))?;
            l.drift_ref = Some(model.clone());
        }
        for l in &t.links {
            if let Some(d) = &l.drift_ref {
                if self.drift_model(d).is_none() {
                    return Err(Error::Config(format!("link '{}' refers to unknown drift model '{d}'", l.id)));
                }
            }
        }
        let report = validate_topology(&t);
        if !report.is_empty() {
            return Err(Error::InvalidTopology(report.to_string()));
        }
        Ok(t)
    }
}
