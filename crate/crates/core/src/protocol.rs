//! BB92 and BB84 key exchange between Alice and Bob.
//!
//! Bob drives the session: he fires pulses in windows, interferes Alice's
//! returning frames on his bench, and after each window announces which
//! pulse indices clicked. In BB84 both then announce their bases for those
//! indices and keep the matches. An optional disclosure round sacrifices a
//! random subset of the sifted key to estimate the error rate.
//!
//! ```text
//! Bob                                   Alice
//!  SESSION_START ───────────────────────▶
//!  QFRAME_OUT × window ─────────────────▶
//!  ◀──────────────────── QFRAME_BACK × window
//!  DETECTIONS (+ BASES) ────────────────▶
//!  ◀────────────────────────────── (BASES)
//!  … next window …
//!  DISCLOSE ────────────────────────────▶
//!  ◀─────────────────────────── ER_REPORT
//!  TERMINATE ───────────────────────────▶
//! ```

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::PathBuf;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::detector::{Detection, GatedDetectorConfig};
use crate::error::{Error, Result};
use crate::interferometer::SetupConfig;
use crate::keyfile::{BitOrigin, BitSource};
use crate::physics::{AliceOptics, BobPhysics};
use crate::transport::{self, terminate_reason, Channel, ChannelMode, FrameError, Message};

pub const DEFAULT_WINDOW: u32 = 1024;

/// Stream of the Bob seed used to pick disclosed positions.
const DISCLOSURE_STREAM: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ProtocolVariant {
    #[serde(rename = "BB92")]
    Bb92,
    #[serde(rename = "BB84")]
    Bb84,
}

impl ProtocolVariant {
    pub fn alphabet(self) -> &'static [f64] {
        match self {
            ProtocolVariant::Bb92 => &[0.0, PI],
            ProtocolVariant::Bb84 => &[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
        }
    }

    pub fn wire_code(self) -> u8 {
        match self {
            ProtocolVariant::Bb92 => 0,
            ProtocolVariant::Bb84 => 1,
        }
    }

    pub fn from_wire(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ProtocolVariant::Bb92),
            1 => Ok(ProtocolVariant::Bb84),
            other => Err(Error::Protocol(format!("unknown variant code {other}"))),
        }
    }

    /// Random bits each station consumes per pulse.
    pub fn bits_per_pulse(self) -> u64 {
        match self {
            ProtocolVariant::Bb92 => 1,
            ProtocolVariant::Bb84 => 2,
        }
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolVariant::Bb92 => "BB92",
            ProtocolVariant::Bb84 => "BB84",
        })
    }
}

impl std::str::FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BB92" | "B92" => Ok(ProtocolVariant::Bb92),
            "BB84" => Ok(ProtocolVariant::Bb84),
            other => Err(Error::config(format!("unknown protocol variant {other:?}"))),
        }
    }
}

/// Phase for a bit. BB84 basis 0 uses {0, π}, basis 1 uses {π/2, 3π/2}.
pub fn encode_phase(bit: u8, basis: Option<u8>, variant: ProtocolVariant) -> Result<f64> {
    if bit > 1 {
        return Err(Error::Protocol(format!("bit value {bit} is not 0 or 1")));
    }
    match (variant, basis) {
        (ProtocolVariant::Bb92, None) => Ok(bit as f64 * PI),
        (ProtocolVariant::Bb92, Some(_)) => Err(Error::Protocol("BB92 takes no basis".into())),
        (ProtocolVariant::Bb84, Some(b @ 0..=1)) => Ok(b as f64 * FRAC_PI_2 + bit as f64 * PI),
        (ProtocolVariant::Bb84, Some(b)) => Err(Error::Protocol(format!("basis value {b} is not 0 or 1"))),
        (ProtocolVariant::Bb84, None) => Err(Error::Protocol("BB84 requires a basis".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub alice: u64,
    pub bob: u64,
    pub physics: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { alice: 1, bob: 2, physics: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionConfig {
    pub n_pulses: u64,
    pub variant: ProtocolVariant,
    pub setup: SetupConfig,
    pub detector: GatedDetectorConfig,
    pub seeds: Seeds,
    pub disclosure_fraction: f64,
    /// Pulses per flow-control window.
    pub window: u32,
    /// Key files to draw Alice's bits from instead of her seed.
    pub alice_key_files: Vec<PathBuf>,
    pub bob_key_files: Vec<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_pulses: 4_000_000,
            variant: ProtocolVariant::Bb92,
            setup: SetupConfig::default(),
            detector: GatedDetectorConfig::default(),
            seeds: Seeds::default(),
            disclosure_fraction: 0.0,
            window: DEFAULT_WINDOW,
            alice_key_files: Vec::new(),
            bob_key_files: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::config("n_pulses must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.disclosure_fraction) {
            return Err(Error::config(format!(
                "disclosure_fraction must lie in [0, 1], got {}",
                self.disclosure_fraction
            )));
        }
        if self.window == 0 {
            return Err(Error::config("window must be > 0"));
        }
        self.setup.validate()?;
        self.detector.validate()
    }

    pub fn alice_origin(&self) -> BitOrigin {
        origin(&self.alice_key_files, self.seeds.alice)
    }

    pub fn bob_origin(&self) -> BitOrigin {
        origin(&self.bob_key_files, self.seeds.bob)
    }

    /// SHA-256 over the parameters both stations must agree on, seeds
    /// included. Sent in SESSION_START so a mismatched peer is refused.
    pub fn commitment(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"fmqkd-session-v1");
        h.update(self.n_pulses.to_le_bytes());
        h.update([self.variant.wire_code()]);
        h.update(self.setup.mu_pair.to_le_bytes());
        h.update(self.seeds.alice.to_le_bytes());
        h.update(self.seeds.bob.to_le_bytes());
        h.update(self.seeds.physics.to_le_bytes());
        h.update(self.disclosure_fraction.to_le_bytes());
        h.update(self.window.to_le_bytes());
        h.finalize().into()
    }
}

fn origin(files: &[PathBuf], seed: u64) -> BitOrigin {
    if files.is_empty() {
        BitOrigin::Prng { seed }
    } else {
        BitOrigin::KeyFiles(files.to_vec())
    }
}

fn open_bits(origin: &BitOrigin, cfg: &SessionConfig, who: &str) -> Result<BitSource> {
    let src = BitSource::open(origin)?;
    src.ensure(cfg.n_pulses * cfg.variant.bits_per_pulse()).map_err(|e| Error::config(format!("{who}: {e}")))?;
    Ok(src)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PulseRecord {
    index: u64,
    bit: u8,
    basis: Option<u8>,
}

fn draw(bits: &mut BitSource, variant: ProtocolVariant, index: u64) -> Result<(PulseRecord, f64)> {
    let bit = bits.next_bit()?;
    let basis = match variant {
        ProtocolVariant::Bb92 => None,
        ProtocolVariant::Bb84 => Some(bits.next_bit()?),
    };
    let phase = encode_phase(bit, basis, variant)?;
    Ok((PulseRecord { index, bit, basis }, phase))
}

fn violation(msg: impl Into<String>) -> Error {
    FrameError::ProtocolViolation(msg.into()).into()
}

/// Records of `window` whose indices are listed in `indices`, in order.
/// Every index must be present.
fn select(window: &[PulseRecord], indices: &[u64]) -> Result<Vec<PulseRecord>> {
    let mut out = Vec::with_capacity(indices.len());
    let mut it = window.iter();
    for &i in indices {
        match it.by_ref().find(|r| r.index >= i) {
            Some(r) if r.index == i => out.push(*r),
            _ => return Err(violation(format!("detection index {i} is not in the current window"))),
        }
    }
    Ok(out)
}

/// Key material one station ends up with.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PartyOutcome {
    pub sifted_indices: Vec<u64>,
    pub sifted_key: Vec<u8>,
    pub clicks: u64,
    pub pulses_completed: u64,
    pub disclosed_indices: Vec<u64>,
    pub disclosed_er: Option<f64>,
    pub final_key: Vec<u8>,
}

impl PartyOutcome {
    fn finalize(&mut self) {
        let mut disclosed = self.disclosed_indices.iter().peekable();
        self.final_key = self
            .sifted_indices
            .iter()
            .zip(&self.sifted_key)
            .filter(|(i, _)| {
                if disclosed.peek() == Some(i) {
                    disclosed.next();
                    false
                } else {
                    true
                }
            })
            .map(|(_, &b)| b)
            .collect();
    }
}

/// A message-driven protocol participant.
pub trait Station {
    /// Messages to send before anything has been received.
    fn start(&mut self, out: &mut Vec<Message>) -> Result<()>;
    fn handle(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()>;
    fn is_done(&self) -> bool;
}

/// Pump `station` over `chan` until it finishes. On a local failure the
/// peer is sent TERMINATE with a reason code, best effort.
pub fn drive<S: Station + ?Sized, C: Channel + ?Sized>(station: &mut S, chan: &mut C) -> Result<()> {
    let res = pump(station, chan);
    if let Err(e) = &res {
        let reason = match e {
            Error::Frame(FrameError::ProtocolViolation(_)) | Error::Protocol(_) => {
                Some(terminate_reason::PROTOCOL_VIOLATION)
            }
            Error::Config(_) => Some(terminate_reason::CONFIG_MISMATCH),
            e if e.is_channel() => None,
            _ => Some(terminate_reason::ABORTED),
        };
        if let Some(reason) = reason {
            let _ = chan.send(Message::Terminate { reason });
            let _ = chan.flush();
        }
    }
    res
}

fn pump<S: Station + ?Sized, C: Channel + ?Sized>(station: &mut S, chan: &mut C) -> Result<()> {
    let mut out = Vec::new();
    station.start(&mut out)?;
    loop {
        for m in out.drain(..) {
            chan.send(m)?;
        }
        if station.is_done() {
            return chan.flush();
        }
        let msg = chan.recv()?;
        station.handle(msg, &mut out)?;
    }
}

fn peer_terminated(reason: u8) -> Error {
    match reason {
        terminate_reason::CONFIG_MISMATCH => Error::config("peer refused the session parameters"),
        terminate_reason::PROTOCOL_VIOLATION => Error::Protocol("peer reported a protocol violation".into()),
        r => Error::Protocol(format!("peer aborted the session (reason {r})")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AliceState {
    AwaitStart,
    Running,
    Done,
}

pub struct AliceStation {
    cfg: SessionConfig,
    bits: BitSource,
    optics: AliceOptics,
    state: AliceState,
    next_index: u64,
    window: Vec<PulseRecord>,
    awaiting_bases: Vec<PulseRecord>,
    kept: Vec<PulseRecord>,
    outcome: PartyOutcome,
}

impl AliceStation {
    pub fn new(cfg: &SessionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            bits: open_bits(&cfg.alice_origin(), cfg, "alice")?,
            optics: AliceOptics::new(&cfg.setup)?,
            cfg: cfg.clone(),
            state: AliceState::AwaitStart,
            next_index: 0,
            window: Vec::new(),
            awaiting_bases: Vec::new(),
            kept: Vec::new(),
            outcome: PartyOutcome::default(),
        })
    }

    pub fn into_outcome(mut self) -> PartyOutcome {
        self.outcome.sifted_indices = self.kept.iter().map(|r| r.index).collect();
        self.outcome.sifted_key = self.kept.iter().map(|r| r.bit).collect();
        self.outcome.finalize();
        self.outcome
    }

    fn on_start(&mut self, n_pulses: u64, variant: u8, mu_pair: f64, commitment: [u8; 32]) -> Result<()> {
        let variant = ProtocolVariant::from_wire(variant)?;
        if n_pulses != self.cfg.n_pulses
            || variant != self.cfg.variant
            || mu_pair.to_bits() != self.cfg.setup.mu_pair.to_bits()
            || commitment != self.cfg.commitment()
        {
            return Err(Error::config("SESSION_START does not match Alice's session configuration"));
        }
        self.state = AliceState::Running;
        Ok(())
    }

    fn on_detections(&mut self, indices: &[u64]) -> Result<()> {
        let clicked = select(&self.window, indices)?;
        self.outcome.clicks += clicked.len() as u64;
        self.window.clear();
        match self.cfg.variant {
            ProtocolVariant::Bb92 => self.kept.extend(clicked),
            ProtocolVariant::Bb84 => self.awaiting_bases = clicked,
        }
        Ok(())
    }

    fn on_bases(&mut self, bob_bases: &[u8], out: &mut Vec<Message>) -> Result<()> {
        if self.cfg.variant != ProtocolVariant::Bb84 {
            return Err(violation("BASES in a BB92 session"));
        }
        if bob_bases.len() != self.awaiting_bases.len() {
            return Err(violation(format!(
                "BASES lists {} entries for {} detections",
                bob_bases.len(),
                self.awaiting_bases.len()
            )));
        }
        let pending = std::mem::take(&mut self.awaiting_bases);
        out.push(Message::Bases { bases: pending.iter().map(|r| r.basis.unwrap_or(0)).collect() });
        self.kept.extend(pending.into_iter().zip(bob_bases).filter(|(r, &b)| r.basis == Some(b)).map(|(r, _)| r));
        Ok(())
    }

    fn on_disclose(&mut self, entries: &[(u64, u8)], out: &mut Vec<Message>) -> Result<()> {
        let mut errors = 0u64;
        let mut kept = self.kept.iter();
        for &(i, bob_bit) in entries {
            match kept.by_ref().find(|r| r.index >= i) {
                Some(r) if r.index == i => errors += u64::from(r.bit != bob_bit),
                _ => return Err(violation(format!("disclosed index {i} is not in the sifted key"))),
            }
        }
        let er = if entries.is_empty() { 0.0 } else { errors as f64 / entries.len() as f64 };
        self.outcome.disclosed_indices = entries.iter().map(|e| e.0).collect();
        self.outcome.disclosed_er = Some(er);
        out.push(Message::ErReport { er });
        Ok(())
    }
}

impl Station for AliceStation {
    fn start(&mut self, _out: &mut Vec<Message>) -> Result<()> {
        Ok(())
    }

    fn handle(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()> {
        match (self.state, msg) {
            (_, Message::Terminate { reason }) => {
                if reason != terminate_reason::COMPLETE {
                    return Err(peer_terminated(reason));
                }
                if self.state != AliceState::Running || self.next_index != self.cfg.n_pulses {
                    return Err(violation("session terminated before all pulses were exchanged"));
                }
                self.state = AliceState::Done;
            }
            (AliceState::AwaitStart, Message::SessionStart { n_pulses, variant, mu_pair, commitment }) => {
                self.on_start(n_pulses, variant, mu_pair, commitment)?;
            }
            (AliceState::Running, Message::QFrameOut(q)) => {
                if q.index != self.next_index || q.index >= self.cfg.n_pulses {
                    return Err(violation(format!(
                        "QFRAME_OUT {} out of order, expected {}",
                        q.index, self.next_index
                    )));
                }
                let (rec, phase_a) = draw(&mut self.bits, self.cfg.variant, q.index)?;
                self.window.push(rec);
                self.next_index += 1;
                self.outcome.pulses_completed = self.next_index;
                out.push(Message::QFrameBack(self.optics.reflect(&q, phase_a)?));
            }
            (AliceState::Running, Message::Detections { indices }) => self.on_detections(&indices)?,
            (AliceState::Running, Message::Bases { bases }) => self.on_bases(&bases, out)?,
            (AliceState::Running, Message::Disclose { entries }) => self.on_disclose(&entries, out)?,
            (state, msg) => {
                return Err(violation(format!("Alice cannot accept {} while {state:?}", msg.name())));
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.state == AliceState::Done
    }
}

/// Bob's classical side. It chooses his bits and sees only click/no-click
/// per pulse index; it has no access to Alice's frames.
pub struct BobProtocol {
    variant: ProtocolVariant,
    bits: BitSource,
    disclosure_rng: ChaCha8Rng,
    disclosure_fraction: f64,
    window: Vec<PulseRecord>,
    window_clicks: Vec<PulseRecord>,
    awaiting_bases: Vec<PulseRecord>,
    kept: Vec<PulseRecord>,
    outcome: PartyOutcome,
}

impl BobProtocol {
    pub fn new(cfg: &SessionConfig) -> Result<Self> {
        let mut disclosure_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.bob);
        disclosure_rng.set_stream(DISCLOSURE_STREAM);
        Ok(Self {
            variant: cfg.variant,
            bits: open_bits(&cfg.bob_origin(), cfg, "bob")?,
            disclosure_rng,
            disclosure_fraction: cfg.disclosure_fraction,
            window: Vec::new(),
            window_clicks: Vec::new(),
            awaiting_bases: Vec::new(),
            kept: Vec::new(),
            outcome: PartyOutcome::default(),
        })
    }

    /// Choose Bob's setting for pulse `index`; returns his modulator phase.
    pub fn prepare(&mut self, index: u64) -> Result<f64> {
        let (rec, phase) = draw(&mut self.bits, self.variant, index)?;
        self.window.push(rec);
        Ok(phase)
    }

    pub fn on_detection(&mut self, index: u64, detection: Detection) -> Result<()> {
        let rec = self
            .window
            .first()
            .and_then(|first| index.checked_sub(first.index))
            .and_then(|pos| self.window.get(pos as usize))
            .filter(|r| r.index == index && index == self.outcome.pulses_completed)
            .copied()
            .ok_or_else(|| violation(format!("detection for unexpected pulse {index}")))?;
        self.outcome.pulses_completed += 1;
        if detection.is_click() {
            self.outcome.clicks += 1;
            self.window_clicks.push(rec);
        }
        Ok(())
    }

    /// Announcements closing the current window.
    pub fn close_window(&mut self, out: &mut Vec<Message>) {
        self.window.clear();
        let clicks = std::mem::take(&mut self.window_clicks);
        out.push(Message::Detections { indices: clicks.iter().map(|r| r.index).collect() });
        match self.variant {
            ProtocolVariant::Bb92 => self.kept.extend(clicks),
            ProtocolVariant::Bb84 => {
                out.push(Message::Bases { bases: clicks.iter().map(|r| r.basis.unwrap_or(0)).collect() });
                self.awaiting_bases = clicks;
            }
        }
    }

    pub fn on_alice_bases(&mut self, alice_bases: &[u8]) -> Result<()> {
        if alice_bases.len() != self.awaiting_bases.len() {
            return Err(violation(format!(
                "Alice announced {} bases for {} detections",
                alice_bases.len(),
                self.awaiting_bases.len()
            )));
        }
        let pending = std::mem::take(&mut self.awaiting_bases);
        self.kept.extend(pending.into_iter().zip(alice_bases).filter(|(r, &a)| r.basis == Some(a)).map(|(r, _)| r));
        Ok(())
    }

    /// The disclosure announcement, if any bits are to be sacrificed.
    pub fn disclosure(&mut self) -> Option<Message> {
        let n = self.kept.len();
        let k = ((self.disclosure_fraction * n as f64).round() as usize).min(n);
        if k == 0 {
            return None;
        }
        let mut picks = index::sample(&mut self.disclosure_rng, n, k).into_vec();
        picks.sort_unstable();
        let entries: Vec<(u64, u8)> = picks.iter().map(|&p| (self.kept[p].index, self.kept[p].bit)).collect();
        self.outcome.disclosed_indices = entries.iter().map(|e| e.0).collect();
        Some(Message::Disclose { entries })
    }

    pub fn on_er_report(&mut self, er: f64) {
        self.outcome.disclosed_er = Some(er);
    }

    pub fn clicks(&self) -> u64 {
        self.outcome.clicks
    }

    pub fn pulses_completed(&self) -> u64 {
        self.outcome.pulses_completed
    }

    pub fn into_outcome(mut self) -> PartyOutcome {
        self.outcome.sifted_indices = self.kept.iter().map(|r| r.index).collect();
        self.outcome.sifted_key = self.kept.iter().map(|r| r.bit).collect();
        self.outcome.finalize();
        self.outcome
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BobState {
    Idle,
    AwaitBacks,
    AwaitBases,
    AwaitEr,
    Done,
}

pub struct BobStation {
    n_pulses: u64,
    window: u32,
    variant: ProtocolVariant,
    mu_pair: f64,
    commitment: [u8; 32],
    physics: BobPhysics,
    protocol: BobProtocol,
    state: BobState,
    next_out: u64,
    backs_due: u64,
}

impl BobStation {
    pub fn new(cfg: &SessionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            n_pulses: cfg.n_pulses,
            window: cfg.window,
            variant: cfg.variant,
            mu_pair: cfg.setup.mu_pair,
            commitment: cfg.commitment(),
            physics: BobPhysics::new(&cfg.setup, &cfg.detector, cfg.seeds.physics)?,
            protocol: BobProtocol::new(cfg)?,
            state: BobState::Idle,
            next_out: 0,
            backs_due: 0,
        })
    }

    pub fn partial(&self) -> PartialStats {
        PartialStats { pulses_completed: self.protocol.pulses_completed(), clicks: self.protocol.clicks() }
    }

    pub fn into_outcome(self) -> PartyOutcome {
        self.protocol.into_outcome()
    }

    fn send_window(&mut self, out: &mut Vec<Message>) -> Result<()> {
        let end = (self.next_out + u64::from(self.window)).min(self.n_pulses);
        for i in self.next_out..end {
            let phase_b = self.protocol.prepare(i)?;
            out.push(Message::QFrameOut(self.physics.emit(i, phase_b)));
        }
        self.backs_due = end - self.next_out;
        self.next_out = end;
        self.state = BobState::AwaitBacks;
        Ok(())
    }

    fn advance(&mut self, out: &mut Vec<Message>) -> Result<()> {
        if self.next_out < self.n_pulses {
            return self.send_window(out);
        }
        match self.protocol.disclosure() {
            Some(m) => {
                out.push(m);
                self.state = BobState::AwaitEr;
            }
            None => self.finish(out),
        }
        Ok(())
    }

    fn finish(&mut self, out: &mut Vec<Message>) {
        out.push(Message::Terminate { reason: terminate_reason::COMPLETE });
        self.state = BobState::Done;
    }
}

impl Station for BobStation {
    fn start(&mut self, out: &mut Vec<Message>) -> Result<()> {
        out.push(Message::SessionStart {
            n_pulses: self.n_pulses,
            variant: self.variant.wire_code(),
            mu_pair: self.mu_pair,
            commitment: self.commitment,
        });
        self.send_window(out)
    }

    fn handle(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()> {
        match (self.state, msg) {
            (_, Message::Terminate { reason }) => return Err(peer_terminated(reason)),
            (BobState::AwaitBacks, Message::QFrameBack(q)) => {
                // physics consumes the frame; the protocol layer gets the click only
                let detection = self.physics.receive(&q)?;
                self.protocol.on_detection(q.index, detection)?;
                self.backs_due -= 1;
                if self.backs_due == 0 {
                    self.protocol.close_window(out);
                    match self.variant {
                        ProtocolVariant::Bb92 => self.advance(out)?,
                        ProtocolVariant::Bb84 => self.state = BobState::AwaitBases,
                    }
                }
            }
            (BobState::AwaitBases, Message::Bases { bases }) => {
                self.protocol.on_alice_bases(&bases)?;
                self.advance(out)?;
            }
            (BobState::AwaitEr, Message::ErReport { er }) => {
                self.protocol.on_er_report(er);
                self.finish(out);
            }
            (state, msg) => {
                return Err(violation(format!("Bob cannot accept {} while {state:?}", msg.name())));
            }
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.state == BobState::Done
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PartialStats {
    pub pulses_completed: u64,
    pub clicks: u64,
}

/// A session that did not complete. No key material is returned.
#[derive(Debug)]
pub struct SessionError {
    pub partial: PartialStats,
    pub source: Error,
}

impl fmt::Display for SessionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "session aborted after {} pulses ({} clicks): {}",
            self.partial.pulses_completed, self.partial.clicks, self.source
        )
    }
}

impl std::error::Error for SessionError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<Error> for SessionError {
    fn from(source: Error) -> Self {
        SessionError { partial: PartialStats::default(), source }
    }
}

/// Run Alice alone over `chan` (two-process mode).
pub fn run_alice<C: Channel + ?Sized>(cfg: &SessionConfig, chan: &mut C) -> Result<PartyOutcome> {
    let mut alice = AliceStation::new(cfg)?;
    drive(&mut alice, chan)?;
    Ok(alice.into_outcome())
}

/// Run Bob alone over `chan` (two-process mode).
pub fn run_bob<C: Channel + ?Sized>(cfg: &SessionConfig, chan: &mut C) -> Result<PartyOutcome, SessionError> {
    let mut bob = BobStation::new(cfg)?;
    match drive(&mut bob, chan) {
        Ok(()) => Ok(bob.into_outcome()),
        Err(source) => Err(SessionError { partial: bob.partial(), source }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionResult {
    pub variant: ProtocolVariant,
    pub n_pulses: u64,
    pub mu_pair: f64,
    pub seeds: Seeds,
    /// Pulse numbers of the sifted bits.
    pub detected_indices: Vec<u64>,
    pub sifted_key_alice: Vec<u8>,
    pub sifted_key_bob: Vec<u8>,
    /// Raw clicks, before basis reconciliation.
    pub clicks: u64,
    pub matches: u64,
    pub mismatches: u64,
    /// Full-comparison error rate over the sifted key.
    pub measured_er: Option<f64>,
    pub disclosed_indices: Vec<u64>,
    pub disclosed_er: Option<f64>,
    pub final_key_alice: Vec<u8>,
    pub final_key_bob: Vec<u8>,
}

impl SessionResult {
    pub fn from_outcomes(cfg: &SessionConfig, alice: PartyOutcome, bob: PartyOutcome) -> Result<Self> {
        if alice.sifted_indices != bob.sifted_indices {
            return Err(Error::Protocol("Alice and Bob sifted different pulse indices".into()));
        }
        let mismatches = alice.sifted_key.iter().zip(&bob.sifted_key).filter(|(a, b)| a != b).count() as u64;
        let n = alice.sifted_key.len() as u64;
        Ok(SessionResult {
            variant: cfg.variant,
            n_pulses: cfg.n_pulses,
            mu_pair: cfg.setup.mu_pair,
            seeds: cfg.seeds,
            detected_indices: bob.sifted_indices,
            sifted_key_alice: alice.sifted_key,
            sifted_key_bob: bob.sifted_key,
            clicks: bob.clicks,
            matches: n - mismatches,
            mismatches,
            measured_er: (n > 0).then(|| mismatches as f64 / n as f64),
            disclosed_indices: bob.disclosed_indices,
            disclosed_er: alice.disclosed_er,
            final_key_alice: alice.final_key,
            final_key_bob: bob.final_key,
        })
    }

    pub fn sifted_bits(&self) -> usize {
        self.sifted_key_bob.len()
    }

    pub fn sift_rate_per_1000(&self) -> f64 {
        1000.0 * self.sifted_bits() as f64 / self.n_pulses as f64
    }
}

/// Run both stations over the given endpoints, each on its own thread.
pub fn run_session_over<A, B>(
    cfg: &SessionConfig,
    mut alice_end: A,
    mut bob_end: B,
) -> Result<SessionResult, SessionError>
where
    A: Channel,
    B: Channel,
{
    cfg.validate()?;
    // fail on bad inputs before anything touches the channel
    let mut alice = AliceStation::new(cfg)?;
    let mut bob = BobStation::new(cfg)?;

    let (alice_res, bob_res) = std::thread::scope(|s| {
        let a = s.spawn(move || {
            let r = drive(&mut alice, &mut alice_end);
            drop(alice_end);
            r.map(|()| alice)
        });
        let b = s.spawn(move || {
            let r = drive(&mut bob, &mut bob_end);
            drop(bob_end);
            (r, bob)
        });
        (a.join().expect("alice thread panicked"), b.join().expect("bob thread panicked"))
    });

    let (bob_res, bob) = bob_res;
    let partial = bob.partial();
    match (alice_res, bob_res) {
        (Ok(alice), Ok(())) => SessionResult::from_outcomes(cfg, alice.into_outcome(), bob.into_outcome())
            .map_err(|source| SessionError { partial, source }),
        (_, Err(source)) | (Err(source), Ok(())) => Err(SessionError { partial, source }),
    }
}

pub fn run_session(cfg: &SessionConfig, mode: &ChannelMode) -> Result<SessionResult, SessionError> {
    cfg.validate()?;
    let (alice_end, bob_end) = transport::open_channel(mode)?;
    run_session_over(cfg, alice_end, bob_end)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimation {
    /// Compare the whole sifted key.
    FullComparison,
    /// Sacrifice a random fraction of the sifted key.
    Disclosure { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub er: f64,
    pub compared: usize,
    pub errors: usize,
    pub remaining_alice: Vec<u8>,
    pub remaining_bob: Vec<u8>,
}

/// Error-rate estimate over a sifted key. In disclosure mode the compared
/// positions are removed from the returned keys.
pub fn sift_and_estimate<R: Rng + ?Sized>(result: &SessionResult, how: Estimation, rng: &mut R) -> Result<ErrorReport> {
    let a = &result.sifted_key_alice;
    let b = &result.sifted_key_bob;
    if a.len() != b.len() {
        return Err(Error::Protocol("sifted keys differ in length".into()));
    }
    if a.is_empty() {
        return Err(Error::UndefinedRate("sifted key is empty"));
    }
    match how {
        Estimation::FullComparison => {
            let errors = a.iter().zip(b).filter(|(x, y)| x != y).count();
            Ok(ErrorReport {
                er: errors as f64 / a.len() as f64,
                compared: a.len(),
                errors,
                remaining_alice: a.clone(),
                remaining_bob: b.clone(),
            })
        }
        Estimation::Disclosure { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid(format!("disclosure fraction must lie in [0, 1], got {fraction}")));
            }
            let k = ((fraction * a.len() as f64).round() as usize).min(a.len());
            if k == 0 {
                return Err(Error::UndefinedRate("disclosure selects no bits"));
            }
            let mut picked = vec![false; a.len()];
            for p in index::sample(rng, a.len(), k) {
                picked[p] = true;
            }
            let errors = (0..a.len()).filter(|&i| picked[i] && a[i] != b[i]).count();
            let keep = |k: &Vec<u8>| k.iter().zip(&picked).filter(|(_, &p)| !p).map(|(&x, _)| x).collect();
            Ok(ErrorReport {
                er: errors as f64 / k as f64,
                compared: k,
                errors,
                remaining_alice: keep(a),
                remaining_bob: keep(b),
            })
        }
    }
}
