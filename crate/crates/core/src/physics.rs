//! Bob's optical bench: the part of the simulation that stands in for the
//! fiber, the interference at C2 and the detector.
//!
//! It is the only code that reads `phase_a` from a returning pulse frame.
//! Bob's protocol layer sees nothing but the resulting [`Detection`].

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::{self, Detection, GatedDetectorConfig};
use crate::error::{Error, Result};
use crate::interferometer::{self, PolarizationModel, SetupConfig};
use crate::jones::{self, JonesMatrix, JonesVector};
use crate::transport::{FrameError, QFrameBack, QFrameOut};

/// Stream ids carved out of the physics seed.
const FIBER_STREAM: u64 = 0;
const DETECTOR_STREAM: u64 = 1;

pub struct BobPhysics {
    setup: SetupConfig,
    detector: GatedDetectorConfig,
    rng: ChaCha8Rng,
    line: JonesMatrix,
    line_back: JonesMatrix,
    short_arm: JonesMatrix,
    /// Laser polarization entering C2.
    input: JonesVector,
    /// P2 back at C2. It never depends on Alice's phase.
    p2_state: JonesVector,
    p2_at_alice: f64,
    pending: VecDeque<(u64, f64)>,
}

impl BobPhysics {
    /// Draws the link and delay-line birefringence from the physics seed.
    pub fn new(setup: &SetupConfig, detector: &GatedDetectorConfig, seed: u64) -> Result<Self> {
        let mut fiber_rng = ChaCha8Rng::seed_from_u64(seed);
        fiber_rng.set_stream(FIBER_STREAM);
        let line = jones::haar_random_unitary(&mut fiber_rng);
        let delay_line = jones::haar_random_unitary(&mut fiber_rng);
        Self::with_fibers(setup, detector, seed, line, delay_line)
    }

    pub fn with_fibers(
        setup: &SetupConfig,
        detector: &GatedDetectorConfig,
        seed: u64,
        line: JonesMatrix,
        delay_line: JonesMatrix,
    ) -> Result<Self> {
        setup.validate()?;
        detector.validate()?;
        let model = PolarizationModel::new(line, delay_line, setup);
        let input = JonesVector::HORIZONTAL;
        let (_, p2_state) = model.pair_states(&input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DETECTOR_STREAM);
        Ok(Self {
            setup: setup.clone(),
            detector: *detector,
            rng,
            line,
            line_back: jones::backward(&line),
            short_arm: model.short_arm()?,
            input,
            p2_state,
            p2_at_alice: interferometer::p2_photons_at_alice(setup),
            pending: VecDeque::new(),
        })
    }

    /// Fire pulse `index` with Bob's modulator set to `phase_b` for P1.
    pub fn emit(&mut self, index: u64, phase_b: f64) -> QFrameOut {
        self.pending.push_back((index, phase_b));
        QFrameOut { index, mean_photons: self.p2_at_alice, pol: (self.line * self.input).to_array() }
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    /// Interfere a returning pair at C2 and gate the detector.
    pub fn receive(&mut self, back: &QFrameBack) -> Result<Detection> {
        let &(expected, phase_b) = self.pending.front().ok_or_else(|| {
            FrameError::ProtocolViolation(format!("QFRAME_BACK {} with no pulse in flight", back.index))
        })?;
        if back.index != expected {
            return Err(FrameError::ProtocolViolation(format!(
                "QFRAME_BACK {} out of order, expected {expected}",
                back.index
            ))
            .into());
        }
        if !(back.mean_photons.is_finite() && back.mean_photons >= 0.0) || !back.phase_a.is_finite() {
            return Err(FrameError::ProtocolViolation(format!(
                "QFRAME_BACK {} carries non-physical values",
                back.index
            ))
            .into());
        }
        self.pending.pop_front();

        let returned = JonesVector::from_array(back.pol);
        let p1 = self.short_arm.apply(&(self.line_back * returned))?;
        let norm = (p1.norm_sqr() * self.p2_state.norm_sqr()).sqrt();
        let overlap = if norm > 0.0 { (self.p2_state.inner(&p1).norm() / norm).min(1.0) } else { 0.0 };

        let visibility = interferometer::setting_visibility(back.phase_a, phase_b, &self.setup) * overlap;
        let mu_eff =
            interferometer::pair_fringe_mean(2.0 * back.mean_photons, back.phase_a - phase_b, visibility, &self.setup);
        detector::gate(mu_eff, &self.detector, &mut self.rng)
    }
}

/// Turn Alice's returning frames into clicks, in order.
pub fn quantum_sim_boundary<'a, I>(physics: &mut BobPhysics, frames: I) -> Result<Vec<(u64, Detection)>>
where
    I: IntoIterator<Item = &'a QFrameBack>,
{
    frames.into_iter().map(|f| Ok((f.index, physics.receive(f)?))).collect()
}

/// What Alice's optics do to an incoming pulse: attenuate and reflect.
#[derive(Clone, Copy, Debug)]
pub struct AliceOptics {
    transmission: f64,
    mirror: JonesMatrix,
}

impl AliceOptics {
    pub fn new(setup: &SetupConfig) -> Result<Self> {
        let att = interferometer::attenuator_setting(setup)?;
        let mirror = match setup.alice_mirror {
            interferometer::MirrorKind::Faraday => jones::faraday_mirror(),
            interferometer::MirrorKind::Ordinary => jones::mirror(),
        };
        Ok(Self { transmission: interferometer::db_to_transmission(att), mirror })
    }

    pub fn reflect(&self, out: &QFrameOut, phase_a: f64) -> Result<QFrameBack> {
        if !(out.mean_photons.is_finite() && out.mean_photons >= 0.0) {
            return Err(Error::Protocol(format!("QFRAME_OUT {} carries non-physical intensity", out.index)));
        }
        let pol = self.mirror.apply(&JonesVector::from_array(out.pol))?;
        Ok(QFrameBack {
            index: out.index,
            mean_photons: out.mean_photons * self.transmission,
            phase_a,
            pol: pol.to_array(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn noiseless() -> GatedDetectorConfig {
        GatedDetectorConfig { efficiency: 1.0, dark_prob_per_gate: 0.0, ..Default::default() }
    }

    fn perfect_setup() -> SetupConfig {
        SetupConfig {
            alice_extinction_db: 400.0,
            bob_extinction_db: 400.0,
            c1_tap_db: 0.0,
            mu_pair: 5.0,
            ..Default::default()
        }
    }

    #[test]
    fn alice_returns_half_pair() {
        let setup = SetupConfig::default();
        let mut bob = BobPhysics::new(&setup, &GatedDetectorConfig::default(), 1).unwrap();
        let alice = AliceOptics::new(&setup).unwrap();
        let back = alice.reflect(&bob.emit(0, 0.0), 0.0).unwrap();
        assert!((back.mean_photons - 0.05).abs() < 1e-12);
        assert!(bob.receive(&back).is_ok());
    }

    #[test]
    fn destructive_setting_never_clicks_when_ideal() {
        let setup = perfect_setup();
        let mut bob = BobPhysics::new(&setup, &noiseless(), 3).unwrap();
        let alice = AliceOptics::new(&setup).unwrap();
        for i in 0..2000 {
            let back = alice.reflect(&bob.emit(i, 0.0), PI).unwrap();
            assert_eq!(bob.receive(&back).unwrap(), Detection::NoClick);
        }
    }

    #[test]
    fn out_of_order_back_is_violation() {
        let setup = SetupConfig::default();
        let mut bob = BobPhysics::new(&setup, &GatedDetectorConfig::default(), 1).unwrap();
        let alice = AliceOptics::new(&setup).unwrap();
        let _ = bob.emit(0, 0.0);
        let second = bob.emit(1, 0.0);
        let back = alice.reflect(&second, 0.0).unwrap();
        assert!(matches!(bob.receive(&back), Err(Error::Frame(FrameError::ProtocolViolation(_)))));
    }

    #[test]
    fn back_without_pulse_is_violation() {
        let setup = SetupConfig::default();
        let mut bob = BobPhysics::new(&setup, &GatedDetectorConfig::default(), 1).unwrap();
        let back = QFrameBack { index: 0, mean_photons: 0.05, phase_a: 0.0, pol: [1.0, 0.0, 0.0, 0.0] };
        assert!(bob.receive(&back).is_err());
    }

    #[test]
    fn ordinary_mirror_at_alice_loses_fringe() {
        // birefringent fibers, no compensation: destructive settings leak
        let setup = SetupConfig { alice_mirror: interferometer::MirrorKind::Ordinary, ..perfect_setup() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (line, delay) =
            std::iter::repeat_with(|| (jones::haar_random_unitary(&mut rng), jones::haar_random_unitary(&mut rng)))
                .find(|&(l, d)| PolarizationModel::new(l, d, &setup).overlap(&JonesVector::HORIZONTAL).unwrap() < 0.5)
                .unwrap();
        let mut bob = BobPhysics::with_fibers(&setup, &noiseless(), 5, line, delay).unwrap();
        let alice = AliceOptics::new(&setup).unwrap();
        let clicks = (0..2000)
            .filter(|&i| {
                let back = alice.reflect(&bob.emit(i, 0.0), PI).unwrap();
                bob.receive(&back).unwrap().is_click()
            })
            .count();
        assert!(clicks > 0);
    }
}
