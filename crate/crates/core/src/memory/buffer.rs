use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::time::Picos;
use crate::topology::{MemoryMode, MemorySpec, NodeId};

/// Probability that a photon held for `held` is released intact.
pub fn survival_probability(spec: &MemorySpec, held: Picos) -> f64 {
    let decay = match spec.coherence_time {
        Some(tau) if tau > Picos::ZERO => (-(held.0.max(0) as f64) / tau.0 as f64).exp(),
        Some(_) => 0.0,
        None => 1.0,
    };
    spec.release_efficiency * decay
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReleaseOutcome<T> {
    /// `None` when the photon was lost while stored or on release.
    pub payload: Option<T>,
    pub held: Picos,
    /// Lost because it was held longer than `max_hold`.
    pub expired: bool,
}

/// A single-slot quantum memory.
#[derive(Clone, Debug)]
pub struct QuantumBuffer<T> {
    pub node: NodeId,
    pub spec: MemorySpec,
    stored: Option<(T, Picos)>,
}

impl<T> QuantumBuffer<T> {
    pub fn new(node: NodeId, spec: MemorySpec) -> Self {
        QuantumBuffer { node, spec, stored: None }
    }

    pub fn is_occupied(&self) -> bool {
        self.stored.is_some()
    }

    pub fn stored_at(&self) -> Option<Picos> {
        self.stored.as_ref().map(|s| s.1)
    }

    /// Tries to capture a photon at `t`. `Ok(false)` is a capture failure.
    pub fn store(&mut self, payload: T, t: Picos, rng: &mut ChaCha8Rng) -> Result<bool> {
        if self.stored.is_some() {
            return Err(Error::BufferOccupied(self.node.0.clone()));
        }
        if rng.random::<f64>() >= self.spec.capture_efficiency {
            return Ok(false);
        }
        self.stored = Some((payload, t));
        Ok(true)
    }

    /// Empties the buffer at `t`, applying expiry, decay and release loss.
    pub fn release(&mut self, t: Picos, rng: &mut ChaCha8Rng) -> Result<ReleaseOutcome<T>> {
        let (payload, at) = self
            .stored
            .take()
            .ok_or_else(|| Error::BufferEmpty(self.node.0.clone()))?;
        let held = t - at;
        if let MemoryMode::HoldUntilReady { max_hold: Some(m) } = self.spec.mode {
            if held > m {
                return Ok(ReleaseOutcome { payload: None, held, expired: true });
            }
        }
        let keep = rng.random::<f64>() < survival_probability(&self.spec, held);
        Ok(ReleaseOutcome {
            payload: keep.then_some(payload),
            held,
            expired: false,
        })
    }

    /// Drops the contents without a release attempt.
    pub fn clear(&mut self) {
        self.stored = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::stream;

    #[test]
    fn occupancy_rules() {
        let mut rng = stream(1, "memory", "M");
        let mut b = QuantumBuffer::new("M".into(), MemorySpec::hold_until_ready(None));
        assert!(matches!(b.release(Picos(0), &mut rng), Err(Error::BufferEmpty(_))));
        assert!(b.store(1u32, Picos(0), &mut rng).unwrap());
        assert!(matches!(b.store(2, Picos(1), &mut rng), Err(Error::BufferOccupied(_))));
        let out = b.release(Picos(500), &mut rng).unwrap();
        assert_eq!(out.payload, Some(1));
        assert_eq!(out.held, Picos(500));
        assert!(!b.is_occupied());
    }

    #[test]
    fn expiry() {
        let mut rng = stream(1, "memory", "M");
        let mut b = QuantumBuffer::new("M".into(), MemorySpec::hold_until_ready(Some(Picos(100))));
        b.store((), Picos(0), &mut rng).unwrap();
        let out = b.release(Picos(101), &mut rng).unwrap();
        assert!(out.expired && out.payload.is_none());
    }

    #[test]
    fn decay_law() {
        let spec = MemorySpec {
            coherence_time: Some(Picos::us(1)),
            release_efficiency: 0.9,
            ..MemorySpec::hold_until_ready(None)
        };
        assert!((survival_probability(&spec, Picos::us(1)) - 0.9 * (-1f64).exp()).abs() < 1e-15);
        assert_eq!(survival_probability(&spec, Picos::ZERO), 0.9);
        assert!(survival_probability(&spec, Picos::us(2)) < survival_probability(&spec, Picos::us(1)));
    }
}
