use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmqkd::analysis;
use fmqkd::detector::GatedDetectorConfig;
use fmqkd::interferometer::SetupConfig;
use fmqkd::keyfile;
use fmqkd::physics::{AliceOptics, BobPhysics};
use fmqkd::protocol::{self, BobProtocol, ProtocolVariant, SessionConfig};
use fmqkd::transport::{Channel, ChannelMode, FrameError, InProcessChannel, Message};
use fmqkd::Error;

fn small(n_pulses: u64, seed: u64) -> SessionConfig {
    SessionConfig { n_pulses, ..analysis::table1_config(0.2, n_pulses, seed) }
}

#[test]
fn same_seeds_same_result() {
    let cfg = SessionConfig { disclosure_fraction: 0.25, ..small(100_000, 5) };
    let a = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    let b = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    assert_eq!(a, b);
    assert!(a.sifted_bits() > 0);
    let other = protocol::run_session(&small(100_000, 6), &ChannelMode::InProcess).unwrap();
    assert_ne!(a.sifted_key_alice, other.sifted_key_alice);
}

#[test]
fn socket_mode_matches_in_process() {
    let cfg = small(1000, 21);
    let socket = ChannelMode::Socket { host: "127.0.0.1".into(), port: 0 };
    let a = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    let b = protocol::run_session(&cfg, &socket).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.measured_er, b.measured_er);
}

#[test]
fn sifted_indices_are_unique_clicks() {
    let res = protocol::run_session(&small(50_000, 8), &ChannelMode::InProcess).unwrap();
    assert!(res.detected_indices.windows(2).all(|w| w[0] < w[1]));
    assert!(res.detected_indices.iter().all(|&i| i < 50_000));
    assert_eq!(res.clicks as usize, res.sifted_bits());
    assert_eq!(res.matches + res.mismatches, res.sifted_bits() as u64);
}

#[test]
fn window_size_does_not_change_the_result() {
    let a =
        protocol::run_session(&SessionConfig { window: 1024, ..small(20_000, 3) }, &ChannelMode::InProcess).unwrap();
    let b = protocol::run_session(&SessionConfig { window: 7, ..small(20_000, 3) }, &ChannelMode::InProcess).unwrap();
    assert_eq!(a, b);
}

#[test]
fn disclosure_removes_bits_from_final_key() {
    let cfg = SessionConfig { disclosure_fraction: 0.5, ..small(100_000, 9) };
    let res = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    let k = res.disclosed_indices.len();
    assert_eq!(k, (0.5 * res.sifted_bits() as f64).round() as usize);
    assert_eq!(res.final_key_alice.len(), res.sifted_bits() - k);
    assert_eq!(res.final_key_bob.len(), res.sifted_bits() - k);
    assert!(res.disclosed_er.is_some());
}

/// Passes messages through, then fails every send after `limit`
/// QFRAME_BACK frames, as a cut link would.
struct CutAfter<C> {
    inner: C,
    limit: usize,
    sent: usize,
}

impl<C: Channel> Channel for CutAfter<C> {
    fn send(&mut self, msg: Message) -> fmqkd::Result<()> {
        if matches!(msg, Message::QFrameBack(_)) {
            if self.sent == self.limit {
                return Err(Error::Channel("link cut".into()));
            }
            self.sent += 1;
        }
        self.inner.send(msg)
    }

    fn recv(&mut self) -> fmqkd::Result<Message> {
        self.inner.recv()
    }
}

#[test]
fn disconnect_mid_session_aborts_with_partial_stats() {
    let cfg = SessionConfig { window: 100, ..small(10_000, 4) };
    let (a, b) = InProcessChannel::pair();
    let err = protocol::run_session_over(&cfg, CutAfter { inner: a, limit: 2500, sent: 0 }, b).unwrap_err();
    assert!(err.source.is_channel(), "{err}");
    assert_eq!(err.partial.pulses_completed, 2500);
    assert!(err.to_string().contains("2500"));
}

/// Silently drops the QFRAME_BACK for one pulse.
struct DropBack<C> {
    inner: C,
    index: u64,
}

impl<C: Channel> Channel for DropBack<C> {
    fn send(&mut self, msg: Message) -> fmqkd::Result<()> {
        match &msg {
            Message::QFrameBack(q) if q.index == self.index => Ok(()),
            _ => self.inner.send(msg),
        }
    }

    fn recv(&mut self) -> fmqkd::Result<Message> {
        self.inner.recv()
    }
}

#[test]
fn dropped_qframe_back_aborts_at_that_index() {
    let cfg = small(5_000, 4);
    let (a, b) = InProcessChannel::pair();
    let err = protocol::run_session_over(&cfg, DropBack { inner: a, index: 1234 }, b).unwrap_err();
    assert!(matches!(err.source, Error::Frame(FrameError::ProtocolViolation(_))), "{err}");
    assert!(err.source.to_string().contains("1234"), "{err}");
    assert_eq!(err.partial.pulses_completed, 1234);
}

#[test]
fn mismatched_peer_config_is_refused() {
    let bob_cfg = small(1000, 4);
    let alice_cfg = SessionConfig { seeds: protocol::Seeds { physics: 99, ..bob_cfg.seeds }, ..bob_cfg.clone() };
    let (a, b) = InProcessChannel::pair();
    let h = std::thread::spawn(move || {
        let mut a = a;
        protocol::run_alice(&alice_cfg, &mut a)
    });
    let mut b = b;
    let bob = protocol::run_bob(&bob_cfg, &mut b).unwrap_err();
    let alice = h.join().unwrap().unwrap_err();
    assert!(matches!(alice, Error::Config(_)), "{alice}");
    assert!(matches!(bob.source, Error::Config(_)), "{bob}");
}

/// Records Alice's phase per pulse index from the frames Bob receives.
struct PhaseTap<C> {
    inner: C,
    phases: Arc<Mutex<HashMap<u64, f64>>>,
}

impl<C: Channel> Channel for PhaseTap<C> {
    fn send(&mut self, msg: Message) -> fmqkd::Result<()> {
        self.inner.send(msg)
    }

    fn recv(&mut self) -> fmqkd::Result<Message> {
        let msg = self.inner.recv()?;
        if let Message::QFrameBack(q) = &msg {
            self.phases.lock().unwrap().insert(q.index, q.phase_a);
        }
        Ok(msg)
    }
}

#[test]
fn bb92_errors_only_at_opposite_phases() {
    let cfg = small(200_000, 31);
    let phases = Arc::new(Mutex::new(HashMap::new()));
    let (a, b) = InProcessChannel::pair();
    let res = protocol::run_session_over(&cfg, a, PhaseTap { inner: b, phases: phases.clone() }).unwrap();
    let phases = phases.lock().unwrap();
    assert!(res.mismatches > 0, "need some errors to inspect");
    for (k, &i) in res.detected_indices.iter().enumerate() {
        let delta = (phases[&i] - PI * f64::from(res.sifted_key_bob[k])).rem_euclid(2.0 * PI);
        if res.sifted_key_alice[k] != res.sifted_key_bob[k] {
            assert!((delta - PI).abs() < 1e-12, "mismatch at {i} with delta {delta}");
        } else {
            assert!(delta.abs() < 1e-12 || (delta - 2.0 * PI).abs() < 1e-12);
        }
    }
}

#[test]
fn bob_protocol_never_sees_alice_phase() {
    // Detections are computed from the real frames; afterwards the phase
    // fields are scrambled. Bob's protocol decisions must not change.
    let cfg = SessionConfig { n_pulses: 5000, window: 5000, ..small(5000, 12) };
    let mut physics = BobPhysics::new(&cfg.setup, &cfg.detector, cfg.seeds.physics).unwrap();
    let optics = AliceOptics::new(&cfg.setup).unwrap();
    let mut plain = BobProtocol::new(&cfg).unwrap();
    let mut masked = BobProtocol::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut frames = Vec::new();
    let mut bob_phases = Vec::new();
    for i in 0..cfg.n_pulses {
        let phase_b = plain.prepare(i).unwrap();
        bob_phases.push(phase_b);
        assert_eq!(masked.prepare(i).unwrap(), phase_b);
        let phase_a = if rng.random::<bool>() { PI } else { 0.0 };
        frames.push(optics.reflect(&physics.emit(i, phase_b), phase_a).unwrap());
    }
    let detections = fmqkd::physics::quantum_sim_boundary(&mut physics, &frames).unwrap();
    for f in &mut frames {
        f.phase_a = f64::from_bits(f.phase_a.to_bits() ^ 0x5555_5555_5555_5555);
    }
    for &(i, d) in &detections {
        plain.on_detection(i, d).unwrap();
        masked.on_detection(i, d).unwrap();
    }
    let (mut out_plain, mut out_masked) = (Vec::new(), Vec::new());
    plain.close_window(&mut out_plain);
    masked.close_window(&mut out_masked);
    assert_eq!(out_plain, out_masked);
    assert_eq!(plain.into_outcome(), masked.into_outcome());

    // the mask does matter to the physics, so the audit is not vacuous
    let mut physics2 = BobPhysics::new(&cfg.setup, &cfg.detector, cfg.seeds.physics).unwrap();
    for (f, &phase_b) in frames.iter().zip(&bob_phases) {
        let _ = physics2.emit(f.index, phase_b);
    }
    assert_ne!(fmqkd::physics::quantum_sim_boundary(&mut physics2, &frames).unwrap(), detections);
}

#[test]
fn key_files_supply_the_bits() {
    let dir = tempfile::tempdir().unwrap();
    let alice_bits = keyfile::generate_block(100, 0, 30_000);
    let bob_bits = keyfile::generate_block(200, 0, 30_000);
    let (pa, pb) = (dir.path().join("a.qkdr"), dir.path().join("b.qkdr"));
    keyfile::write_key_file(&pa, &alice_bits).unwrap();
    keyfile::write_key_file(&pb, &bob_bits).unwrap();

    let cfg = SessionConfig { alice_key_files: vec![pa.clone()], bob_key_files: vec![pb.clone()], ..small(30_000, 2) };
    let res = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    assert!(res.sifted_bits() > 0);
    for (k, &i) in res.detected_indices.iter().enumerate() {
        assert_eq!(res.sifted_key_alice[k], alice_bits[i as usize]);
        assert_eq!(res.sifted_key_bob[k], bob_bits[i as usize]);
    }

    // one bit short: refused before any pulse is sent
    let cfg = SessionConfig { n_pulses: 30_001, ..cfg };
    let err = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap_err();
    assert!(matches!(err.source, Error::Config(_)), "{err}");
    assert_eq!(err.partial.pulses_completed, 0);
}

#[test]
fn key_files_concatenate_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let first = keyfile::generate_block(1, 0, 7);
    let second = keyfile::generate_block(1, 1, 9);
    let paths = [dir.path().join("0.qkdr"), dir.path().join("1.qkdr")];
    keyfile::write_key_file(&paths[0], &first).unwrap();
    keyfile::write_key_file(&paths[1], &second).unwrap();
    let mut src = keyfile::BitSource::from_key_files(&paths).unwrap();
    assert_eq!(src.remaining(), Some(16));
    let got: Vec<u8> = (0..16).map(|_| src.next_bit().unwrap()).collect();
    assert_eq!(got, [first, second].concat());
    assert!(src.next_bit().is_err());
}

#[test]
fn bb84_mismatched_bases_are_discarded() {
    let cfg = SessionConfig {
        variant: ProtocolVariant::Bb84,
        setup: SetupConfig {
            alice_extinction_db: 400.0,
            bob_extinction_db: 400.0,
            c1_tap_db: 0.0,
            mu_pair: 0.5,
            ..SetupConfig::default()
        },
        detector: GatedDetectorConfig { efficiency: 1.0, dark_prob_per_gate: 0.0, ..Default::default() },
        ..small(20_000, 40)
    };
    let res = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    assert!(res.sifted_bits() > 0 && (res.sifted_bits() as u64) < res.clicks);
    assert_eq!(res.mismatches, 0);
}

#[test]
fn measured_er_tracks_prediction_at_high_dark_rate() {
    // dark counts dominate, so the error rate is large and well resolved
    let cfg = SessionConfig {
        detector: GatedDetectorConfig { dark_prob_per_gate: 2e-4, ..Default::default() },
        ..small(400_000, 50)
    };
    let pred = analysis::predict(&cfg).unwrap();
    let res = protocol::run_session(&cfg, &ChannelMode::InProcess).unwrap();
    let (lo, hi) = analysis::three_sigma_band(pred.er_total(), res.sifted_bits());
    let er = res.measured_er.unwrap();
    assert!(lo <= er && er <= hi, "{er} not in [{lo}, {hi}]");
}
