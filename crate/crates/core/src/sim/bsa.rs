//! Two-photon interference at a BSA.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::time::Picos;

/// Swap success probability for arrival-time difference `delta`:
/// `p0 * exp(-delta^2 / (2 sigma^2))`.
pub fn swap_probability(delta: Picos, p0: f64, sigma: Picos) -> f64 {
    if sigma.0 == 0 {
        return if delta.0 == 0 { p0 } else { 0.0 };
    }
    let x = delta.0 as f64 / sigma.0 as f64;
    p0 * (-0.5 * x * x).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Measurement {
    /// `t_left - t_right` when both photons arrived.
    pub delta: Option<Picos>,
    pub coincidence: bool,
    pub swap_success: bool,
}

/// Outcome of one pairing attempt. Randomness is drawn only for
/// coincidences, so the stream advances once per coincidence.
pub fn bsa_measure(
    t_left: Option<Picos>,
    t_right: Option<Picos>,
    window: Picos,
    p0: f64,
    sigma: Picos,
    rng: &mut ChaCha8Rng,
) -> Measurement {
    let delta = match (t_left, t_right) {
        (Some(l), Some(r)) => Some(l - r),
        _ => None,
    };
    let coincidence = delta.is_some_and(|d| d.abs() <= window);
    let swap_success = coincidence && {
        let p = swap_probability(delta.expect("coincidence"), p0, sigma);
        rng.random::<f64>() < p
    };
    Measurement {
        delta,
        coincidence,
        swap_success,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::stream;

    #[test]
    fn gaussian_law() {
        let s = Picos(100);
        assert_eq!(swap_probability(Picos::ZERO, 0.5, s), 0.5);
        let one_sigma = swap_probability(Picos(100), 0.5, s);
        assert!((one_sigma - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(swap_probability(Picos(-70), 0.5, s), swap_probability(Picos(70), 0.5, s));
        assert_eq!(swap_probability(Picos(1), 0.5, Picos::ZERO), 0.0);
    }

    #[test]
    fn missing_photon_is_no_coincidence() {
        let mut r = stream(0, "swap", "I");
        let m = bsa_measure(Some(Picos(5)), None, Picos(100), 1.0, Picos(50), &mut r);
        assert_eq!(m.delta, None);
        assert!(!m.coincidence && !m.swap_success);
    }

    #[test]
    fn outside_window_never_swaps() {
        let mut r = stream(0, "swap", "I");
        for _ in 0..100 {
            let m = bsa_measure(Some(Picos(101)), Some(Picos(0)), Picos(100), 1.0, Picos(1000), &mut r);
            assert_eq!(m.delta, Some(Picos(101)));
            assert!(!m.coincidence && !m.swap_success);
        }
    }

    #[test]
    fn success_frequency() {
        let mut r = stream(3, "swap", "I");
        let n = 20_000;
        let p = swap_probability(Picos(80), 0.8, Picos(100));
        let hits = (0..n)
            .filter(|_| bsa_measure(Some(Picos(80)), Some(Picos(0)), Picos(500), 0.8, Picos(100), &mut r).swap_success)
            .count();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * sd);
    }
}
