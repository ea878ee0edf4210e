//! `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! once; unknown keys are rejected with their line number.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interferometer::MirrorKind;
use crate::protocol::{ProtocolVariant, SessionConfig};
use crate::transport::ChannelMode;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub session: SessionConfig,
    pub channel: ChannelMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { session: SessionConfig::default(), channel: ChannelMode::InProcess }
    }
}

const KEYS: &[&str] = &[
    "variant",
    "n_pulses",
    "mu_pair",
    "line_loss_db",
    "c1_tap_db",
    "extra_loss_db",
    "alice_extinction_db",
    "bob_extinction_db",
    "efficiency",
    "dark_prob_per_gate",
    "gate_window_s",
    "seeds",
    "seed_alice",
    "seed_bob",
    "seed_physics",
    "disclosure_fraction",
    "channel",
    "window",
    "pulse_rate_hz",
    "round_trip_delay_s",
    "pulse_separation_s",
    "laser_photons",
    "c2_ratio",
    "alice_mirror",
    "bob_mirror",
    "alice_key_files",
    "bob_key_files",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(format!("line {line}: cannot parse {key} = {value:?}")))
}

fn mirror(line: usize, value: &str) -> Result<MirrorKind> {
    match value {
        "faraday" => Ok(MirrorKind::Faraday),
        "ordinary" => Ok(MirrorKind::Ordinary),
        other => Err(Error::config(format!("line {line}: mirror must be faraday or ordinary, got {other:?}"))),
    }
}

fn paths(base: Option<&Path>, value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match base {
            Some(b) if Path::new(s).is_relative() => b.join(s),
            _ => PathBuf::from(s),
        })
        .collect()
}

impl RunConfig {
    /// Parse config text. Relative key-file paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: HashMap<String, usize> = HashMap::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) =
                trimmed.split_once('=').ok_or_else(|| Error::config(format!("line {line}: expected key = value")))?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(Error::config(format!("line {line}: unknown key {key:?}")));
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(Error::config(format!("line {line}: {key} already set on line {first}")));
            }

            let s = &mut cfg.session;
            match key {
                "variant" => s.variant = ProtocolVariant::from_str(value).map_err(|e| at_line(line, e))?,
                "n_pulses" => s.n_pulses = parse(line, key, value)?,
                "mu_pair" => s.setup.mu_pair = parse(line, key, value)?,
                "line_loss_db" => s.setup.line_loss_db = parse(line, key, value)?,
                "c1_tap_db" => s.setup.c1_tap_db = parse(line, key, value)?,
                "extra_loss_db" => s.setup.extra_loss_db = parse(line, key, value)?,
                "alice_extinction_db" => s.setup.alice_extinction_db = parse(line, key, value)?,
                "bob_extinction_db" => s.setup.bob_extinction_db = parse(line, key, value)?,
                "efficiency" => s.detector.efficiency = parse(line, key, value)?,
                "dark_prob_per_gate" => s.detector.dark_prob_per_gate = parse(line, key, value)?,
                "gate_window_s" => s.detector.gate_window_s = parse(line, key, value)?,
                "seeds" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 3 {
                        return Err(Error::config(format!("line {line}: seeds needs alice,bob,physics")));
                    }
                    s.seeds.alice = parse(line, key, parts[0])?;
                    s.seeds.bob = parse(line, key, parts[1])?;
                    s.seeds.physics = parse(line, key, parts[2])?;
                }
                "seed_alice" => s.seeds.alice = parse(line, key, value)?,
                "seed_bob" => s.seeds.bob = parse(line, key, value)?,
                "seed_physics" => s.seeds.physics = parse(line, key, value)?,
                "disclosure_fraction" => s.disclosure_fraction = parse(line, key, value)?,
                "channel" => cfg.channel = ChannelMode::from_str(value).map_err(|e| at_line(line, e))?,
                "window" => s.window = parse(line, key, value)?,
                "pulse_rate_hz" => s.setup.pulse_rate_hz = parse(line, key, value)?,
                "round_trip_delay_s" => s.setup.round_trip_delay_s = parse(line, key, value)?,
                "pulse_separation_s" => s.setup.pulse_separation_s = parse(line, key, value)?,
                "laser_photons" => s.setup.laser_photons = parse(line, key, value)?,
                "c2_ratio" => s.setup.c2_ratio = parse(line, key, value)?,
                "alice_mirror" => s.setup.alice_mirror = mirror(line, value)?,
                "bob_mirror" => s.setup.bob_mirror = mirror(line, value)?,
                "alice_key_files" => s.alice_key_files = paths(base, value),
                "bob_key_files" => s.bob_key_files = paths(base, value),
                _ => unreachable!("key list and match arms out of sync"),
            }
        }

        if let Err(e) = cfg.session.validate() {
            // point at the line that set the offending field, when there is one
            let msg = e.to_string();
            let line =
                seen.iter().filter(|(k, _)| msg.contains(k.as_str())).max_by_key(|(k, _)| k.len()).map(|(_, &l)| l);
            return Err(match line {
                Some(l) => at_line(l, e),
                None => e,
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }
}

fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
        other => Error::Config(format!("line {line}: {other}")),
    }
}
