//! The self-aligned interferometer: Bob's unbalanced Michelson (coupler C2,
//! short arm with mirrors) whose long arm is the link to Alice.
//!
//! Pulse P2 takes the short arm on the way out and P1 takes it on the way
//! back, so both cover identical paths and meet again at C2. Alice phase
//! shifts P2 only and Bob phase shifts P1 only; what reaches detector D0 is
//! a fringe in `φa − φb`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jones::{self, JonesMatrix, JonesVector};

/// Which reflector terminates an arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorKind {
    Faraday,
    Ordinary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetupConfig {
    /// Power fraction C2 sends into the short arm.
    pub c2_ratio: f64,
    /// Loss from C2 to D0 through coupler C1, dB.
    pub c1_tap_db: f64,
    /// Other losses between Alice's output and D0 (connectors etc.), dB.
    pub extra_loss_db: f64,
    /// One-way loss of the Bob to Alice link, dB.
    pub line_loss_db: f64,
    /// Emission to D0 gate, seconds.
    pub round_trip_delay_s: f64,
    /// P1 to P2 separation (short-arm round trip), seconds.
    pub pulse_separation_s: f64,
    pub alice_extinction_db: f64,
    pub bob_extinction_db: f64,
    pub pulse_rate_hz: f64,
    /// Mean photon number of the interfering pair leaving Alice.
    pub mu_pair: f64,
    /// Mean photons per laser pulse entering C2.
    pub laser_photons: f64,
    pub alice_mirror: MirrorKind,
    pub bob_mirror: MirrorKind,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            c2_ratio: 0.5,
            c1_tap_db: 10.0,
            extra_loss_db: 0.0,
            line_loss_db: 8.6,
            round_trip_delay_s: 230e-6,
            pulse_separation_s: 250e-9,
            alice_extinction_db: 27.0,
            bob_extinction_db: 30.0,
            pulse_rate_hz: 1000.0,
            mu_pair: 0.1,
            laser_photons: 1e6,
            alice_mirror: MirrorKind::Faraday,
            bob_mirror: MirrorKind::Faraday,
        }
    }
}

fn check_db(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be a finite value >= 0 dB, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl SetupConfig {
    pub fn validate(&self) -> Result<()> {
        check_db("c1_tap_db", self.c1_tap_db)?;
        check_db("extra_loss_db", self.extra_loss_db)?;
        check_db("line_loss_db", self.line_loss_db)?;
        check_db("alice_extinction_db", self.alice_extinction_db)?;
        check_db("bob_extinction_db", self.bob_extinction_db)?;
        if !(self.c2_ratio > 0.0 && self.c2_ratio < 1.0) {
            return Err(Error::config(format!("c2_ratio must lie in (0, 1), got {}", self.c2_ratio)));
        }
        check_positive("round_trip_delay_s", self.round_trip_delay_s)?;
        check_positive("pulse_separation_s", self.pulse_separation_s)?;
        check_positive("pulse_rate_hz", self.pulse_rate_hz)?;
        check_positive("laser_photons", self.laser_photons)?;
        if self.pulse_separation_s >= self.round_trip_delay_s {
            return Err(Error::config("pulse_separation_s must be shorter than round_trip_delay_s"));
        }
        if !(self.mu_pair.is_finite() && self.mu_pair >= 0.0) {
            return Err(Error::config(format!("mu_pair must be >= 0, got {}", self.mu_pair)));
        }
        Ok(())
    }

    /// Loss from the pair leaving Alice to the detector, dB.
    pub fn post_alice_loss_db(&self) -> f64 {
        self.c1_tap_db + self.extra_loss_db
    }

    pub fn alice_visibility(&self) -> f64 {
        visibility_from_db(self.alice_extinction_db)
    }

    pub fn bob_visibility(&self) -> f64 {
        visibility_from_db(self.bob_extinction_db)
    }

    /// Setting-independent visibility: geometric mean of the two modulators'.
    pub fn paired_visibility(&self) -> f64 {
        (self.alice_visibility() * self.bob_visibility()).sqrt()
    }

    /// Interference-leakage error rate of a session: mean of the leakage
    /// through Alice's and Bob's modulator settings.
    pub fn er_opt(&self) -> f64 {
        0.5 * ((1.0 - self.alice_visibility()) / 2.0 + (1.0 - self.bob_visibility()) / 2.0)
    }
}

fn visibility_from_db(x_db: f64) -> f64 {
    let r = 10f64.powf(x_db / 10.0);
    (r - 1.0) / (r + 1.0)
}

pub fn visibility_from_extinction_db(x_db: f64) -> Result<f64> {
    if !(x_db.is_finite() && x_db >= 0.0) {
        return Err(Error::invalid(format!("extinction must be >= 0 dB, got {x_db}")));
    }
    Ok(visibility_from_db(x_db))
}

/// Fraction of light in the destructive port, `(1 − V)/2`.
pub fn er_opt_from_visibility(v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("visibility must lie in [0, 1], got {v}")));
    }
    Ok((1.0 - v) / 2.0)
}

pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Mean photons at D0 for a fringe of visibility `visibility`.
pub fn fringe_mean(delta_phi: f64, visibility: f64, setup: &SetupConfig) -> f64 {
    pair_fringe_mean(setup.mu_pair, delta_phi, visibility, setup)
}

/// As [`fringe_mean`], for a pair of intensity `mu_pair` leaving Alice.
pub fn pair_fringe_mean(mu_pair: f64, delta_phi: f64, visibility: f64, setup: &SetupConfig) -> f64 {
    let t = db_to_transmission(setup.post_alice_loss_db());
    mu_pair * t * (1.0 + visibility * delta_phi.cos()) / 2.0
}

/// Mean photons at D0 for phase difference `delta_phi`, at the paired
/// visibility of the two modulators.
pub fn detection_mean(delta_phi: f64, setup: &SetupConfig) -> Result<f64> {
    setup.validate()?;
    Ok(fringe_mean(delta_phi, setup.paired_visibility(), setup))
}

fn is_zero_phase(phi: f64) -> bool {
    let r = phi.rem_euclid(2.0 * PI);
    r < 1e-12 || 2.0 * PI - r < 1e-12
}

/// Extinction-limited visibility of a particular modulator setting: the
/// extinction of whichever modulator is driven, or the paired value when
/// both or neither are.
pub fn setting_visibility(phase_a: f64, phase_b: f64, setup: &SetupConfig) -> f64 {
    match (is_zero_phase(phase_a), is_zero_phase(phase_b)) {
        (false, true) => setup.alice_visibility(),
        (true, false) => setup.bob_visibility(),
        _ => setup.paired_visibility(),
    }
}

/// Mean photons at D0 for explicit modulator phases and a polarization
/// overlap between the two pulses.
pub fn detection_mean_for_setting(phase_a: f64, phase_b: f64, polarization_overlap: f64, setup: &SetupConfig) -> f64 {
    let v = setting_visibility(phase_a, phase_b, setup) * polarization_overlap;
    fringe_mean(phase_a - phase_b, v, setup)
}

/// Timestamps for one trigger, seconds since the start of the measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseSchedule {
    pub emit: f64,
    pub p1_at_alice: f64,
    pub p2_at_alice: f64,
    pub alice_window_open: f64,
    pub alice_window_close: f64,
    pub bob_modulates_p1: f64,
    pub p1_at_c2: f64,
    pub p2_at_c2: f64,
    pub d0_gate: f64,
}

impl PulseSchedule {
    pub fn alice_window(&self) -> f64 {
        self.alice_window_close - self.alice_window_open
    }
}

pub fn schedule(pulse_index: u64, setup: &SetupConfig) -> PulseSchedule {
    let emit = pulse_index as f64 / setup.pulse_rate_hz;
    let short = setup.pulse_separation_s;
    let one_way = (setup.round_trip_delay_s - short) / 2.0;

    // P1: link out, link back, short arm. P2: short arm, link out, link back.
    let p1_at_alice = emit + one_way;
    let p2_at_alice = emit + short + one_way;
    let p1_back = p1_at_alice + one_way;
    let p1_at_c2 = p1_back + short;
    let p2_at_c2 = p2_at_alice + one_way;

    PulseSchedule {
        emit,
        p1_at_alice,
        p2_at_alice,
        alice_window_open: p1_at_alice,
        alice_window_close: p1_at_alice + short,
        bob_modulates_p1: p1_back,
        p1_at_c2,
        p2_at_c2,
        d0_gate: emit + setup.round_trip_delay_s,
    }
}

/// Attenuation Alice must apply, dB, so that P2 leaves her with
/// `mu_pair / 2` mean photons.
pub fn attenuator_setting(setup: &SetupConfig) -> Result<f64> {
    if setup.mu_pair.is_nan() || setup.mu_pair <= 0.0 {
        return Err(Error::config("mu_pair must be > 0 to set the attenuator"));
    }
    let incident = p2_photons_at_alice(setup);
    let target = setup.mu_pair / 2.0;
    let att = 10.0 * (incident / target).log10();
    if att < 0.0 {
        return Err(Error::config(format!(
            "P2 reaches Alice with {incident:.3e} photons, below the {target:.3e} target"
        )));
    }
    Ok(att)
}

/// Mean photons of P2 at Alice's attenuator: short arm, back through C2 into
/// the link, one pass of line loss.
pub fn p2_photons_at_alice(setup: &SetupConfig) -> f64 {
    setup.laser_photons * setup.c2_ratio * (1.0 - setup.c2_ratio) * db_to_transmission(setup.line_loss_db)
}

/// Polarization bookkeeping for the two pulses of a pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationModel {
    /// Birefringence of the link to Alice.
    pub line: JonesMatrix,
    /// Birefringence of Bob's short arm.
    pub delay_line: JonesMatrix,
    pub alice_mirror: MirrorKind,
    pub bob_mirror: MirrorKind,
}

impl PolarizationModel {
    pub fn ideal(setup: &SetupConfig) -> Self {
        Self::new(JonesMatrix::IDENTITY, JonesMatrix::IDENTITY, setup)
    }

    pub fn new(line: JonesMatrix, delay_line: JonesMatrix, setup: &SetupConfig) -> Self {
        Self { line, delay_line, alice_mirror: setup.alice_mirror, bob_mirror: setup.bob_mirror }
    }

    fn arm(fiber: &JonesMatrix, kind: MirrorKind) -> Result<JonesMatrix> {
        match kind {
            MirrorKind::Faraday => jones::round_trip(fiber),
            MirrorKind::Ordinary => jones::ordinary_mirror_round_trip(fiber),
        }
    }

    pub fn long_arm(&self) -> Result<JonesMatrix> {
        Self::arm(&self.line, self.alice_mirror)
    }

    pub fn short_arm(&self) -> Result<JonesMatrix> {
        Self::arm(&self.delay_line, self.bob_mirror)
    }

    /// Polarization states of (P1, P2) back at C2.
    pub fn pair_states(&self, input: &JonesVector) -> Result<(JonesVector, JonesVector)> {
        let long = self.long_arm()?;
        let short = self.short_arm()?;
        Ok(((short * long).apply(input)?, (long * short).apply(input)?))
    }

    /// `|⟨P2|P1⟩|` for normalized input: the factor by which polarization
    /// mismatch scales the fringe visibility.
    pub fn overlap(&self, input: &JonesVector) -> Result<f64> {
        let (p1, p2) = self.pair_states(input)?;
        Ok(p2.inner(&p1).norm())
    }
}
