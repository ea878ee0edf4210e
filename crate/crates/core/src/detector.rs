//! Gated Geiger-mode photon counter.
//!
//! A weak coherent pulse with mean `μ` at the diode gives a click with
//! probability `1 − exp(−ημ)`; a dark count fires independently with
//! probability `p_dark` per gate.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interferometer::db_to_transmission;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GatedDetectorConfig {
    pub efficiency: f64,
    pub dark_prob_per_gate: f64,
    pub gate_window_s: f64,
    /// Timing jitter. Carried for reporting only; gate coincidence is assumed.
    pub jitter_s: f64,
}

impl Default for GatedDetectorConfig {
    fn default() -> Self {
        Self { efficiency: 0.10, dark_prob_per_gate: 7e-6, gate_window_s: 300e-12, jitter_s: 100e-12 }
    }
}

impl GatedDetectorConfig {
    /// The 20 % efficiency operating point: 22 dark counts per million gates.
    pub fn high_efficiency() -> Self {
        Self { efficiency: 0.20, dark_prob_per_gate: 22e-6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("efficiency must lie in [0, 1], got {}", self.efficiency)));
        }
        if !(0.0..=1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::config(format!(
                "dark_prob_per_gate must lie in [0, 1], got {}",
                self.dark_prob_per_gate
            )));
        }
        if !(self.gate_window_s.is_finite() && self.gate_window_s > 0.0) {
            return Err(Error::config(format!("gate_window_s must be > 0, got {}", self.gate_window_s)));
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0) {
            return Err(Error::config(format!("jitter_s must be >= 0, got {}", self.jitter_s)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detection {
    Click,
    NoClick,
}

impl Detection {
    pub fn is_click(self) -> bool {
        self == Detection::Click
    }
}

pub fn click_probability(mu_eff: f64, cfg: &GatedDetectorConfig) -> Result<f64> {
    if mu_eff.is_nan() || mu_eff < 0.0 {
        return Err(Error::invalid(format!("mean photon number must be >= 0, got {mu_eff}")));
    }
    Ok(click_probability_unchecked(mu_eff, cfg))
}

#[inline]
fn click_probability_unchecked(mu_eff: f64, cfg: &GatedDetectorConfig) -> f64 {
    // 1 − (1 − p_dark)·e^{−ημ}, computed without cancellation at small ημ.
    let no_photon = (-cfg.efficiency * mu_eff).exp();
    let p = -(-cfg.efficiency * mu_eff).exp_m1() + cfg.dark_prob_per_gate * no_photon;
    p.clamp(0.0, 1.0)
}

/// One gate: a Bernoulli draw at the click probability.
pub fn gate<R: Rng + ?Sized>(mu_eff: f64, cfg: &GatedDetectorConfig, rng: &mut R) -> Result<Detection> {
    let p = click_probability(mu_eff, cfg)?;
    Ok(if rng.random::<f64>() < p { Detection::Click } else { Detection::NoClick })
}

/// Detector-induced error rate for equiprobable matched and mismatched
/// settings.
///
/// `mu_pair` is the pair intensity leaving Alice, attenuated by
/// `post_alice_loss_db` before the detector; `visibility` sets the
/// constructive and destructive means.
pub fn er_det_analytic(
    mu_pair: f64,
    post_alice_loss_db: f64,
    cfg: &GatedDetectorConfig,
    visibility: f64,
) -> Result<f64> {
    cfg.validate()?;
    if !(mu_pair.is_finite() && mu_pair >= 0.0) {
        return Err(Error::invalid(format!("mu_pair must be >= 0, got {mu_pair}")));
    }
    if !(post_alice_loss_db.is_finite() && post_alice_loss_db >= 0.0) {
        return Err(Error::invalid(format!("loss must be >= 0 dB, got {post_alice_loss_db}")));
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::invalid(format!("visibility must lie in [0, 1], got {visibility}")));
    }
    let mu = mu_pair * db_to_transmission(post_alice_loss_db);
    let p_sig = click_probability(mu * (1.0 + visibility) / 2.0, cfg)?;
    let p_err = click_probability(mu * (1.0 - visibility) / 2.0, cfg)?;
    if p_sig + p_err == 0.0 {
        return Err(Error::UndefinedRate("no clicks at either setting"));
    }
    Ok((0.5 * p_err) / (0.5 * p_sig + 0.5 * p_err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(eta: f64, dark: f64) -> GatedDetectorConfig {
        GatedDetectorConfig { efficiency: eta, dark_prob_per_gate: dark, ..Default::default() }
    }

    #[test]
    fn dark_only() {
        assert!((click_probability(0.0, &cfg(0.1, 7e-6)).unwrap() - 7e-6).abs() < 1e-18);
        assert_eq!(click_probability(5.0, &cfg(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_click_probability() {
        // 1 − (1 − 7e-6)·e^{−0.001} = 1.006493e-3
        let p = click_probability(0.01, &cfg(0.1, 7e-6)).unwrap();
        assert!((p - 1.00649e-3).abs() < 1e-8, "{p}");
    }

    #[test]
    fn negative_mean_rejected() {
        assert!(matches!(click_probability(-1e-3, &cfg(0.1, 0.0)), Err(Error::InvalidArgument(_))));
        assert!(click_probability(f64::NAN, &cfg(0.1, 0.0)).is_err());
    }

    #[test]
    fn linear_regime() {
        let c = cfg(0.1, 7e-6);
        for &mu in &[1e-4, 1e-3, 5e-3] {
            let p = click_probability(mu, &c).unwrap();
            let lin = c.dark_prob_per_gate + c.efficiency * mu;
            assert!(((p - lin) / p).abs() < 1e-3);
        }
    }

    #[test]
    fn noiseless_gate_never_clicks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg(0.1, 0.0);
        assert!((0..10_000).all(|_| gate(0.0, &c, &mut rng).unwrap() == Detection::NoClick));
    }

    #[test]
    fn gate_frequency_matches_probability() {
        let c = cfg(0.1, 7e-6);
        let mu = 0.01;
        let p = click_probability(mu, &c).unwrap();
        let n = 1_000_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let clicks = (0..n).filter(|_| gate(mu, &c, &mut rng).unwrap().is_click()).count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((clicks - n as f64 * p).abs() < 3.0 * sigma, "{clicks} vs {}", n as f64 * p);
    }

    #[test]
    fn gate_deterministic() {
        let c = cfg(0.5, 0.01);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000).map(|_| gate(0.3, &c, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn er_det_reference_constants() {
        let c = cfg(0.1, 7e-6);
        let e1 = er_det_analytic(0.1, 10.0, &c, 1.0).unwrap();
        assert!((e1 - 0.0069).abs() < 5e-5, "{e1}");
        let e2 = er_det_analytic(0.2, 10.0, &c, 1.0).unwrap();
        assert!((e2 - 0.0035).abs() < 5e-5, "{e2}");
        assert_eq!(er_det_analytic(0.1, 10.0, &cfg(0.1, 0.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn er_det_undefined_without_clicks() {
        assert!(matches!(er_det_analytic(0.1, 10.0, &cfg(0.0, 0.0), 1.0), Err(Error::UndefinedRate(_))));
    }

    #[test]
    fn lower_efficiency_point_wins() {
        let low = er_det_analytic(0.1, 10.0, &cfg(0.1, 7e-6), 1.0).unwrap();
        let high = er_det_analytic(0.1, 10.0, &GatedDetectorConfig::high_efficiency(), 1.0).unwrap();
        assert!(low / high < 1.0, "{low} vs {high}");
    }

    #[test]
    fn validation() {
        assert!(cfg(1.1, 0.0).validate().is_err());
        assert!(cfg(0.1, -0.1).validate().is_err());
        let bad = GatedDetectorConfig { gate_window_s: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
