//! Per-BSA feedback on arrival-time differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::VarId;
use crate::time::Picos;
use crate::topology::{Bounds, NodeId};

/// Controller tuning shared by every BSA in a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gain: f64,
    /// Heralds averaged per update.
    pub estimate_window: usize,
    pub max_step: Picos,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain <= 2.0) {
            return Err(Error::Config(format!("controller gain {} outside (0, 2]", self.gain)));
        }
        if self.estimate_window == 0 {
            return Err(Error::Config("controller estimate_window must be >= 1".into()));
        }
        if self.max_step <= Picos::ZERO {
            return Err(Error::Config("controller max_step must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackController {
    pub bsa: NodeId,
    pub gain: f64,
    pub estimate_window: usize,
    pub max_step: Picos,
    /// Actuated variables for the left and right inputs.
    pub targets: [VarId; 2],
}

impl FeedbackController {
    pub fn new(bsa: NodeId, cfg: &ControllerConfig, targets: [VarId; 2]) -> Self {
        FeedbackController {
            bsa,
            gain: cfg.gain,
            estimate_window: cfg.estimate_window,
            max_step: cfg.max_step,
            targets,
        }
    }
}

/// Mean of the last `n` herald Δ values, rounded to the nearest picosecond.
pub fn estimate_delta(deltas: &[Picos], n: usize) -> Result<Picos> {
    if n == 0 || deltas.len() < n {
        return Err(Error::InsufficientHeralds {
            needed: n.max(1),
            available: deltas.len(),
        });
    }
    let sum: i128 = deltas[deltas.len() - n..].iter().map(|d| i128::from(d.0)).sum();
    let n = n as i128;
    let q = (2 * sum + n * sum.signum()) / (2 * n);
    Ok(Picos(q as i64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeedbackUpdate {
    pub settings: [Picos; 2],
    /// Requested change of Δ that did not fit inside the bounds.
    pub unapplied: Picos,
    pub saturated: bool,
}

/// One controller update. A positive estimate means the left photon is
/// late: the right input is delayed first and, once it hits its upper
/// bound, the left input is advanced.
pub fn feedback_step(ctrl: &FeedbackController, estimate: Picos, settings: [Picos; 2], bounds: [Bounds; 2]) -> FeedbackUpdate {
    let want = Picos((ctrl.gain * estimate.0 as f64).round() as i64).clamp(-ctrl.max_step, ctrl.max_step);
    let mut s = settings;
    // `late` is the side to advance, `early` the side to delay.
    let (early, late) = if want >= Picos::ZERO { (1, 0) } else { (0, 1) };
    let mut rest = want.abs();
    let up = rest.min((bounds[early].hi - s[early]).max(Picos::ZERO));
    s[early] += up;
    rest -= up;
    let down = rest.min((s[late] - bounds[late].lo).max(Picos::ZERO));
    s[late] -= down;
    rest -= down;
    FeedbackUpdate {
        settings: s,
        unapplied: rest,
        saturated: rest > Picos::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctrl(gain: f64, max_step: Picos) -> FeedbackController {
        FeedbackController {
            bsa: "I".into(),
            gain,
            estimate_window: 4,
            max_step,
            targets: ["odl:I:0".into(), "odl:I:1".into()],
        }
    }

    #[test]
    fn mean_of_window() {
        let d = [Picos::ns(1), Picos::ns(2), Picos::ns(3), Picos::ns(6)];
        assert_eq!(estimate_delta(&d, 4).unwrap(), Picos::ns(3));
        assert_eq!(estimate_delta(&d, 2).unwrap(), Picos(4_500));
        assert_eq!(estimate_delta(&[Picos(1), Picos(2)], 2).unwrap(), Picos(2));
        assert_eq!(estimate_delta(&[Picos(-1), Picos(-2)], 2).unwrap(), Picos(-2));
        assert!(matches!(
            estimate_delta(&d[..3], 4),
            Err(Error::InsufficientHeralds { needed: 4, available: 3 })
        ));
    }

    #[test]
    fn full_correction_with_headroom() {
        let b = [Bounds::new(Picos::ZERO, Picos::ns(10)); 2];
        let u = feedback_step(&ctrl(1.0, Picos::ns(5)), Picos::ns(2), [Picos::ns(5); 2], b);
        assert_eq!(u.settings, [Picos::ns(5), Picos::ns(7)]);
        assert!(!u.saturated);
        // New Δ = old Δ + (left change) - (right change) = 0.
        let new_delta = Picos::ns(2) + (u.settings[0] - Picos::ns(5)) - (u.settings[1] - Picos::ns(5));
        assert_eq!(new_delta, Picos::ZERO);
    }

    #[test]
    fn spills_to_other_port_then_saturates() {
        let b = [Bounds::new(Picos::ZERO, Picos::ns(10)); 2];
        let u = feedback_step(&ctrl(1.0, Picos::ns(50)), Picos::ns(4), [Picos::ns(1), Picos::ns(8)], b);
        assert_eq!(u.settings, [Picos::ZERO, Picos::ns(10)]);
        assert_eq!(u.unapplied, Picos::ns(1));
        assert!(u.saturated);
    }

    #[test]
    fn gain_and_step_limit() {
        let b = [Bounds::new(Picos::ZERO, Picos::ns(10)); 2];
        let u = feedback_step(&ctrl(0.5, Picos::ns(5)), Picos::ns(-4), [Picos::ns(5); 2], b);
        assert_eq!(u.settings, [Picos::ns(7), Picos::ns(5)]);
        let v = feedback_step(&ctrl(1.0, Picos::ns(1)), Picos::ns(-4), [Picos::ns(5); 2], b);
        assert_eq!(v.settings, [Picos::ns(6), Picos::ns(5)]);
        assert!(!v.saturated);
    }

    #[test]
    fn config_validation() {
        let ok = ControllerConfig { gain: 0.5, estimate_window: 20, max_step: Picos::ns(1) };
        assert!(ok.validate().is_ok());
        assert!(ControllerConfig { gain: 0.0, ..ok }.validate().is_err());
        assert!(ControllerConfig { estimate_window: 0, ..ok }.validate().is_err());
    }
}
