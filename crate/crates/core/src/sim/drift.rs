//! Time-varying additive delay on fiber links.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Picos;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    /// Constant offset, seconds.
    Static { offset: f64 },
    /// Seconds of delay per second elapsed.
    Linear { rate: f64 },
    /// `amplitude * sin(2 pi t / period + phase)`; amplitude and period in seconds.
    Sinusoidal { amplitude: f64, period: f64, phase: f64 },
    /// Gaussian steps of `step_std` seconds every `step_interval` seconds.
    RandomWalk { step_std: f64, step_interval: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub id: String,
    #[serde(flatten)]
    pub kind: DriftKind,
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("drift model '{}': {m}", self.id)));
        match self.kind {
            DriftKind::Sinusoidal { amplitude, period, .. } => {
                if !(amplitude > 0.0) || !(period > 0.0) {
                    return bad("amplitude and period must be > 0");
                }
            }
            DriftKind::RandomWalk { step_std, step_interval } => {
                if !(step_interval > 0.0) || !(step_std >= 0.0) {
                    return bad("step_interval must be > 0 and step_std >= 0");
                }
            }
            DriftKind::Static { offset } if !offset.is_finite() => return bad("offset must be finite"),
            DriftKind::Linear { rate } if !rate.is_finite() => return bad("rate must be finite"),
            _ => {}
        }
        Ok(())
    }
}

/// Drift at time `t` seconds. A random walk is evolved from the start
/// of `rng`, so pass a fresh per-link stream for reproducible values.
pub fn drift_value(model: &DriftModel, t: f64, rng: &mut ChaCha8Rng) -> f64 {
    match model.kind {
        DriftKind::Static { offset } => offset,
        DriftKind::Linear { rate } => rate * t,
        DriftKind::Sinusoidal { amplitude, period, phase } => {
            amplitude * (std::f64::consts::TAU * t / period + phase).sin()
        }
        DriftKind::RandomWalk { step_std, step_interval } => {
            let steps = (t / step_interval).floor().max(0.0) as u64;
            let normal = Normal::new(0.0, step_std).expect("validated std");
            (0..steps).map(|_| normal.sample(rng)).sum()
        }
    }
}

/// Drift of one link as the simulation advances; caches random-walk steps
/// so queries at any time order cost amortised O(1).
#[derive(Clone, Debug)]
pub struct DriftProcess {
    model: DriftModel,
    rng: ChaCha8Rng,
    /// Cumulative walk values at step boundaries 0, 1, 2, ...
    walk: Vec<f64>,
}

impl DriftProcess {
    pub fn new(model: DriftModel, rng: ChaCha8Rng) -> Self {
        DriftProcess {
            model,
            rng,
            walk: vec![0.0],
        }
    }

    pub fn value(&mut self, t: f64) -> f64 {
        match self.model.kind {
            DriftKind::RandomWalk { step_std, step_interval } => {
                let k = (t / step_interval).floor().max(0.0) as usize;
                if k >= self.walk.len() {
                    let normal = Normal::new(0.0, step_std).expect("validated std");
                    while self.walk.len() <= k {
                        let last = *self.walk.last().expect("non-empty");
                        let step: f64 = normal.sample(&mut self.rng);
                        self.walk.push(last + step);
                    }
                }
                self.walk[k]
            }
            _ => drift_value(&self.model, t, &mut self.rng),
        }
    }

    pub fn value_ps(&mut self, t: Picos) -> Picos {
        Picos::from_seconds(self.value(t.as_seconds()))
    }
}
