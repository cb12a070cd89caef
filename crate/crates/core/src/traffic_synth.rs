//! Seeded generator of labeled CoAP/UDP traffic.
//!
//! The simulated LAN has four endpoints: a CoAP server that stores sensor
//! readings, a sensor that POSTs temperature and humidity, an observer client
//! subscribed to the server, and an attacker. Normal traffic is a Poisson
//! stream of request/response exchanges. Each attack window adds a second
//! Poisson stream of attack exchanges:
//!
//! * `dos`: the attacker spoofs the observer's address and sends GET requests
//!   with a tiny Block2 size; the server answers the victim with large blocks.
//! * `mitm`: the sensor's `/temp` request reaches the attacker (poisoned ARP),
//!   is re-emitted towards the server with the path rewritten to `/mitm`, and
//!   the server answers 4.04.
//! * `crossproto`: DNS responses sent from the server's address and CoAP port
//!   to the observer's CoAP port.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64`. The normal stream uses ChaCha stream 0 and attack window
//! `i` uses stream `i + 1`, so output is identical on every platform.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coap_wire::{
    content_format, encode_message, option, BlockValue, Code, CoapMessage, CoapOption, MessageType,
};

pub const COAP_PORT: u16 = 5683;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Dos,
    Mitm,
    #[serde(rename = "crossproto")]
    CrossProtocol,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Dos, AttackKind::Mitm, AttackKind::CrossProtocol];

    pub fn as_str(self) -> &'static str {
        Label::from(self).as_str()
    }

    /// Frames emitted by one attack exchange.
    fn frames_per_event(self) -> f64 {
        match self {
            AttackKind::Dos => 2.0,
            AttackKind::Mitm => 3.0,
            AttackKind::CrossProtocol => 1.0,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Label>()? {
            Label::Normal => Err("`normal` is not an attack kind".into()),
            Label::Attack(kind) => Ok(kind),
        }
    }
}

/// Ground-truth class of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Attack(AttackKind),
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Attack(AttackKind::Dos) => "dos",
            Label::Attack(AttackKind::Mitm) => "mitm",
            Label::Attack(AttackKind::CrossProtocol) => "crossproto",
        }
    }
}

impl From<AttackKind> for Label {
    fn from(kind: AttackKind) -> Self {
        Label::Attack(kind)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "normal" => Label::Normal,
            "dos" => Label::Attack(AttackKind::Dos),
            "mitm" => Label::Attack(AttackKind::Mitm),
            "crossproto" => Label::Attack(AttackKind::CrossProtocol),
            other => return Err(format!("unknown label `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub mac: [u8; 6],
    pub ip: IpAddr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(mac: [u8; 6], ip: [u8; 4], port: u16) -> Self {
        Endpoint {
            mac,
            ip: IpAddr::V4(Ipv4Addr::from(ip)),
            port,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub server: Endpoint,
    pub sensor: Endpoint,
    pub observer: Endpoint,
    pub attacker: Endpoint,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            server: Endpoint::new([0xdc, 0xa6, 0x32, 0x1a, 0x2b, 0x3c], [192, 168, 1, 10], COAP_PORT),
            sensor: Endpoint::new([0x5c, 0xcf, 0x7f, 0x0a, 0x41, 0x07], [192, 168, 1, 21], COAP_PORT),
            observer: Endpoint::new([0xb8, 0x27, 0xeb, 0x5d, 0x90, 0x12], [192, 168, 1, 30], 50712),
            attacker: Endpoint::new([0x08, 0x00, 0x27, 0xc4, 0x6e, 0x31], [192, 168, 1, 66], 56830),
        }
    }
}

/// An interval `[start_s, end_s)` during which one attack runs at `rate_hz`
/// expected frames per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackWindow {
    pub kind: AttackKind,
    pub start_s: f64,
    pub end_s: f64,
    pub rate_hz: f64,
}

impl AttackWindow {
    pub fn new(kind: AttackKind, start_s: f64, end_s: f64, rate_hz: f64) -> Self {
        AttackWindow {
            kind,
            start_s,
            end_s,
            rate_hz,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Expected normal frames per second.
    pub normal_rate_hz: f64,
    pub attack_windows: Vec<AttackWindow>,
    pub topology: Topology,
}

impl ScenarioConfig {
    pub fn new(seed: u64, duration_s: f64, normal_rate_hz: f64) -> Self {
        ScenarioConfig {
            seed,
            duration_s,
            normal_rate_hz,
            attack_windows: Vec::new(),
            topology: Topology::default(),
        }
    }

    pub fn with_window(mut self, window: AttackWindow) -> Self {
        self.attack_windows.push(window);
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |msg: String| Err(SynthError::InvalidConfig(msg));
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return invalid(format!("duration {} s", self.duration_s));
        }
        if !(self.normal_rate_hz.is_finite() && self.normal_rate_hz >= 0.0) {
            return invalid(format!("normal rate {} Hz", self.normal_rate_hz));
        }
        for w in &self.attack_windows {
            if !(w.start_s >= 0.0 && w.start_s < w.end_s && w.end_s <= self.duration_s) {
                return invalid(format!(
                    "{} window [{}, {}) outside [0, {})",
                    w.kind, w.start_s, w.end_s, self.duration_s
                ));
            }
            if !(w.rate_hz.is_finite() && w.rate_hz > 0.0) {
                return invalid(format!("{} window rate {} Hz", w.kind, w.rate_hz));
            }
        }
        Ok(())
    }

    fn expected_frames(&self) -> f64 {
        self.normal_rate_hz * self.duration_s
            + self
                .attack_windows
                .iter()
                .map(|w| w.rate_hz * (w.end_s - w.start_s))
                .sum::<f64>()
    }
}

/// One captured frame with its link/transport addressing and UDP payload.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub timestamp_s: f64,
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub udp_payload: Vec<u8>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

/// Named scenarios calibrated to the class ratios of the three reference captures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Dos,
    Mitm,
    CrossProtocol,
    /// The three scenarios above at a quarter of their length, back to back.
    Merged,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Dos, Preset::Mitm, Preset::CrossProtocol, Preset::Merged];
    const MERGED_SCALE: f64 = 0.25;

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dos => "dos-scenario",
            Preset::Mitm => "mitm-scenario",
            Preset::CrossProtocol => "crossproto-scenario",
            Preset::Merged => "merged",
        }
    }

    /// The scenario parts of this preset, in timeline order.
    pub fn scenarios(self, seed: u64) -> Vec<ScenarioConfig> {
        match self {
            Preset::Dos => vec![Self::single(AttackKind::Dos, seed, 1.0)],
            Preset::Mitm => vec![Self::single(AttackKind::Mitm, seed, 1.0)],
            Preset::CrossProtocol => vec![Self::single(AttackKind::CrossProtocol, seed, 1.0)],
            Preset::Merged => AttackKind::ALL
                .iter()
                .enumerate()
                .map(|(i, &kind)| Self::single(kind, seed ^ (i as u64) << 32, Self::MERGED_SCALE))
                .collect(),
        }
    }

    /// Capture sizes (normal, attack) the single-attack presets are tuned to.
    pub fn reference_counts(kind: AttackKind) -> (u32, u32) {
        match kind {
            AttackKind::Dos => (21269, 9050),
            AttackKind::Mitm => (21222, 3462),
            AttackKind::CrossProtocol => (60453, 2490),
        }
    }

    fn single(kind: AttackKind, seed: u64, scale: f64) -> ScenarioConfig {
        // (duration, windows) per attack; rates follow from the reference counts.
        let (duration, windows): (f64, &[(f64, f64)]) = match kind {
            AttackKind::Dos => (600.0, &[(120.0, 270.0), (360.0, 480.0)]),
            AttackKind::Mitm => (600.0, &[(150.0, 300.0), (400.0, 450.0)]),
            AttackKind::CrossProtocol => (1200.0, &[(300.0, 420.0), (800.0, 900.0)]),
        };
        let (normal, attack) = Self::reference_counts(kind);
        let window_total: f64 = windows.iter().map(|(s, e)| e - s).sum();
        let attack_rate = f64::from(attack) / window_total;
        let mut config = ScenarioConfig::new(seed, duration * scale, f64::from(normal) / duration);
        for &(start, end) in windows {
            config.attack_windows.push(AttackWindow::new(
                kind,
                start * scale,
                end * scale,
                attack_rate,
            ));
        }
        config
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

/// Generates every part of `preset` and lays the parts end to end in time.
pub fn synthesize_preset(preset: Preset, seed: u64) -> Vec<LabeledFrame> {
    let mut frames = Vec::new();
    let mut offset = 0.0;
    for config in preset.scenarios(seed) {
        let part = synthesize(&config).expect("presets are valid");
        frames.extend(part.into_iter().map(|mut f| {
            f.timestamp_s += offset;
            f
        }));
        offset += config.duration_s;
    }
    frames
}

/// Generates the labeled frames of one scenario, sorted by timestamp.
pub fn synthesize(config: &ScenarioConfig) -> Result<Vec<LabeledFrame>, SynthError> {
    config.validate()?;
    let mut frames = Vec::with_capacity(config.expected_frames().ceil() as usize + 16);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = DeviceState::new(&mut rng);

    generate_normal(config, &mut state, &mut rng, &mut frames);
    for (i, window) in config.attack_windows.iter().enumerate() {
        rng.set_stream(i as u64 + 1);
        rng.set_word_pos(0);
        generate_attack(config, window, &mut state, &mut rng, &mut frames);
    }

    frames.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    Ok(frames)
}

/// Per-device counters and fixed tokens.
struct DeviceState {
    sensor_mid: u16,
    server_mid: u16,
    attacker_mid: u16,
    observe_seq: u32,
    sensor_token: Vec<u8>,
    observe_token: Vec<u8>,
    attacker_tokens: [Vec<u8>; 3],
    temperature: f64,
    humidity: f64,
}

impl DeviceState {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        DeviceState {
            sensor_mid: rng.random(),
            server_mid: rng.random(),
            attacker_mid: rng.random(),
            observe_seq: rng.random_range(2..64),
            sensor_token: rng.random::<[u8; 2]>().to_vec(),
            observe_token: rng.random::<[u8; 4]>().to_vec(),
            attacker_tokens: [
                rng.random::<[u8; 8]>().to_vec(),
                rng.random::<[u8; 8]>().to_vec(),
                rng.random::<[u8; 8]>().to_vec(),
            ],
            temperature: 21.0 + rng.random::<f64>() * 4.0,
            humidity: 40.0 + rng.random::<f64>() * 15.0,
        }
    }

    fn next(counter: &mut u16) -> u16 {
        *counter = counter.wrapping_add(1);
        *counter
    }

    fn step_climate(&mut self, rng: &mut ChaCha8Rng) {
        self.temperature = (self.temperature + rng.random_range(-0.2..0.2)).clamp(15.0, 32.0);
        self.humidity = (self.humidity + rng.random_range(-0.5..0.5)).clamp(20.0, 80.0);
    }
}

fn frame(
    t: f64,
    from: &Endpoint,
    to: &Endpoint,
    payload: Vec<u8>,
    label: Label,
) -> LabeledFrame {
    LabeledFrame {
        timestamp_s: t,
        src_mac: from.mac,
        dst_mac: to.mac,
        src_ip: from.ip,
        dst_ip: to.ip,
        src_port: from.port,
        dst_port: to.port,
        udp_payload: payload,
        label,
    }
}

fn wire(msg: &CoapMessage) -> Vec<u8> {
    encode_message(msg).expect("generated messages satisfy codec invariants")
}

fn response_delay(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.002..0.020)
}

fn generate_normal(
    config: &ScenarioConfig,
    state: &mut DeviceState,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<LabeledFrame>,
) {
    if config.normal_rate_hz == 0.0 {
        return;
    }
    let topo = &config.topology;
    // two frames per exchange
    let gaps = Exp::new(config.normal_rate_hz / 2.0).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t >= config.duration_s {
            break;
        }
        state.step_climate(rng);
        let reply_at = t + response_delay(rng);
        match rng.random_range(0..3) {
            kind @ (0 | 1) => {
                let (path, reading) = if kind == 0 {
                    ("temp", format!("{:.1}", state.temperature))
                } else {
                    ("humidity", format!("{:.1}", state.humidity))
                };
                let mid = DeviceState::next(&mut state.sensor_mid);
                let request = CoapMessage::new(MessageType::Confirmable, Code::POST, mid)
                    .with_token(state.sensor_token.clone())
                    .with_uri_path(path)
                    .with_option(CoapOption::uint(option::CONTENT_FORMAT, content_format::TEXT_PLAIN))
                    .with_payload(reading);
                let ack = CoapMessage::new(MessageType::Acknowledgement, Code::CHANGED, mid)
                    .with_token(state.sensor_token.clone());
                out.push(frame(t, &topo.sensor, &topo.server, wire(&request), Label::Normal));
                if reply_at < config.duration_s {
                    out.push(frame(reply_at, &topo.server, &topo.sensor, wire(&ack), Label::Normal));
                }
            }
            _ => {
                state.observe_seq = (state.observe_seq + 1) & 0x00FF_FFFF;
                let mid = DeviceState::next(&mut state.server_mid);
                let notification = CoapMessage::new(MessageType::Confirmable, Code::CONTENT, mid)
                    .with_token(state.observe_token.clone())
                    .with_option(CoapOption::uint(option::OBSERVE, state.observe_seq))
                    .with_option(CoapOption::uint(option::CONTENT_FORMAT, content_format::TEXT_PLAIN))
                    .with_payload(format!("{:.1}", state.temperature));
                let ack = CoapMessage::new(MessageType::Acknowledgement, Code::EMPTY, mid);
                out.push(frame(t, &topo.server, &topo.observer, wire(&notification), Label::Normal));
                if reply_at < config.duration_s {
                    out.push(frame(reply_at, &topo.observer, &topo.server, wire(&ack), Label::Normal));
                }
            }
        }
    }
}

fn generate_attack(
    config: &ScenarioConfig,
    window: &AttackWindow,
    state: &mut DeviceState,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<LabeledFrame>,
) {
    let topo = &config.topology;
    let label = Label::Attack(window.kind);
    let gaps = Exp::new(window.rate_hz / window.kind.frames_per_event()).expect("positive rate");
    let mut t = window.start_s;
    loop {
        t += gaps.sample(rng);
        if t >= window.end_s {
            break;
        }
        // Follow-up frames that would spill past the window are not emitted.
        let emit = |at: f64, f: LabeledFrame, out: &mut Vec<LabeledFrame>| {
            if window.contains(at) {
                out.push(LabeledFrame { timestamp_s: at, ..f });
            }
        };
        match window.kind {
            AttackKind::Dos => {
                // Spoofed: attacker's MAC, victim's IP and port.
                let spoofed = Endpoint {
                    mac: topo.attacker.mac,
                    ..topo.observer.clone()
                };
                let victim = &topo.observer;
                let mid = DeviceState::next(&mut state.attacker_mid);
                let token = state.attacker_tokens[rng.random_range(0..3)].clone();
                let path = ["temp", "humidity"][rng.random_range(0..2)];
                let request = CoapMessage::new(MessageType::Confirmable, Code::GET, mid)
                    .with_token(token.clone())
                    .with_uri_path(path)
                    .with_option(BlockValue::new(0, false, 0).to_option(option::BLOCK2));
                let block_len = rng.random_range(512..=1024usize);
                let body: Vec<u8> = (0..block_len)
                    .map(|i| b"0123456789.,;"[(i + usize::from(mid)) % 13])
                    .collect();
                let response = CoapMessage::new(MessageType::Acknowledgement, Code::CONTENT, mid)
                    .with_token(token)
                    .with_option(CoapOption::uint(option::CONTENT_FORMAT, content_format::TEXT_PLAIN))
                    .with_option(BlockValue::new(0, true, 6).to_option(option::BLOCK2))
                    .with_payload(body);
                let reply_at = t + response_delay(rng);
                emit(t, frame(t, &spoofed, &topo.server, wire(&request), label), out);
                emit(reply_at, frame(reply_at, &topo.server, victim, wire(&response), label), out);
            }
            AttackKind::Mitm => {
                state.step_climate(rng);
                let mid = DeviceState::next(&mut state.sensor_mid);
                let original = CoapMessage::new(MessageType::Confirmable, Code::POST, mid)
                    .with_token(state.sensor_token.clone())
                    .with_uri_path("temp")
                    .with_option(CoapOption::uint(option::CONTENT_FORMAT, content_format::TEXT_PLAIN))
                    .with_payload(format!("{:.1}", state.temperature));
                let mut rewritten = original.clone();
                rewritten.options.retain(|o| o.number != option::URI_PATH);
                let rewritten = rewritten.with_uri_path("mitm");
                let not_found = CoapMessage::new(MessageType::Acknowledgement, Code::NOT_FOUND, mid)
                    .with_token(state.sensor_token.clone());

                // Sensor -> attacker, attacker -> server, server -> attacker.
                let sensor_to_attacker = Endpoint {
                    mac: topo.attacker.mac,
                    ..topo.server.clone()
                };
                let attacker_as_sensor = Endpoint {
                    mac: topo.attacker.mac,
                    ..topo.sensor.clone()
                };
                let forwarded_at = t + rng.random_range(0.0005..0.003);
                let reply_at = forwarded_at + response_delay(rng);
                emit(t, frame(t, &topo.sensor, &sensor_to_attacker, wire(&original), label), out);
                emit(
                    forwarded_at,
                    frame(forwarded_at, &attacker_as_sensor, &topo.server, wire(&rewritten), label),
                    out,
                );
                emit(
                    reply_at,
                    frame(reply_at, &topo.server, &attacker_as_sensor, wire(&not_found), label),
                    out,
                );
            }
            AttackKind::CrossProtocol => {
                let spoofed_server = Endpoint {
                    mac: topo.attacker.mac,
                    ..topo.server.clone()
                };
                let forged = format!("{:.1}", state.temperature + rng.random_range(20.0..60.0));
                let payload = dns_response(rng, "temp", forged.as_bytes());
                emit(t, frame(t, &spoofed_server, &topo.observer, payload, label), out);
            }
        }
    }
}

/// A minimal DNS response (one TXT answer) sized like a CoAP notification.
///
/// The transaction ID's high byte is forced to read as a CoAP header with a
/// token length of 9..=15, so CoAP decoding always rejects these payloads.
pub fn dns_response(rng: &mut impl Rng, name: &str, text: &[u8]) -> Vec<u8> {
    let id_high = (rng.random::<u8>() & 0xF0) | rng.random_range(9..=15u8);
    let id_low = rng.random::<u8>();
    let mut out = vec![
        id_high, id_low, // ID
        0x81, 0x80, // standard response, recursion available
        0x00, 0x01, // QDCOUNT
        0x00, 0x01, // ANCOUNT
        0x00, 0x00, // NSCOUNT
        0x00, 0x00, // ARCOUNT
    ];
    out.push(name.len() as u8);
    out.extend_from_slice(name.as_bytes());
    out.push(0);
    out.extend_from_slice(&[0x00, 0x10, 0x00, 0x01]); // TXT, IN
    out.extend_from_slice(&[0xC0, 0x0C]); // pointer to the question name
    out.extend_from_slice(&[0x00, 0x10, 0x00, 0x01]);
    out.extend_from_slice(&60u32.to_be_bytes()); // TTL
    out.extend_from_slice(&((text.len() + 1) as u16).to_be_bytes());
    out.push(text.len() as u8);
    out.extend_from_slice(text);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coap_wire::decode_message;

    fn attack_fraction(frames: &[LabeledFrame]) -> f64 {
        let attacks = frames.iter().filter(|f| f.label != Label::Normal).count();
        attacks as f64 / frames.len() as f64
    }

    #[test]
    fn no_windows_means_all_normal() {
        let frames = synthesize(&ScenarioConfig::new(3, 60.0, 20.0)).unwrap();
        assert!(!frames.is_empty());
        assert!(frames.iter().all(|f| f.label == Label::Normal));
    }

    #[test]
    fn zero_duration_is_empty() {
        assert!(synthesize(&ScenarioConfig::new(3, 0.0, 20.0)).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_windows() {
        let base = ScenarioConfig::new(1, 10.0, 5.0);
        for w in [
            AttackWindow::new(AttackKind::Dos, 5.0, 11.0, 1.0),
            AttackWindow::new(AttackKind::Dos, -1.0, 2.0, 1.0),
            AttackWindow::new(AttackKind::Dos, 4.0, 4.0, 1.0),
            AttackWindow::new(AttackKind::Dos, 1.0, 2.0, 0.0),
        ] {
            let err = synthesize(&base.clone().with_window(w)).unwrap_err();
            assert!(matches!(err, SynthError::InvalidConfig(_)));
        }
        assert!(synthesize(&ScenarioConfig::new(1, -1.0, 5.0)).is_err());
    }

    #[test]
    fn dos_preset_matches_capture_ratio() {
        let frames = synthesize_preset(Preset::Dos, 1);
        let fraction = attack_fraction(&frames);
        assert!((fraction - 0.30).abs() <= 0.02, "attack fraction {fraction}");
        // Reference capture: 30319 frames.
        assert!((frames.len() as f64 - 30319.0).abs() < 1000.0, "{}", frames.len());
    }

    #[test]
    fn single_presets_track_reference_ratios() {
        for (preset, kind) in [
            (Preset::Mitm, AttackKind::Mitm),
            (Preset::CrossProtocol, AttackKind::CrossProtocol),
        ] {
            let frames = synthesize_preset(preset, 5);
            let (normal, attack) = Preset::reference_counts(kind);
            let expected = f64::from(attack) / f64::from(normal + attack);
            let fraction = attack_fraction(&frames);
            assert!((fraction - expected).abs() < 0.02, "{preset}: {fraction} vs {expected}");
        }
    }

    #[test]
    fn merged_preset_has_four_classes_and_sorted_time() {
        let frames = synthesize_preset(Preset::Merged, 9);
        assert!((25_000..35_000).contains(&frames.len()), "{}", frames.len());
        for label in ["normal", "dos", "mitm", "crossproto"] {
            assert!(frames.iter().any(|f| f.label.as_str() == label), "missing {label}");
        }
        assert!(frames.windows(2).all(|w| w[0].timestamp_s <= w[1].timestamp_s));
    }

    #[test]
    fn deterministic_for_seed() {
        let config = ScenarioConfig::new(42, 30.0, 10.0)
            .with_window(AttackWindow::new(AttackKind::Mitm, 5.0, 15.0, 6.0));
        assert_eq!(synthesize(&config).unwrap(), synthesize(&config).unwrap());
        let other = ScenarioConfig { seed: 43, ..config.clone() };
        assert_ne!(synthesize(&config).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn labels_respect_windows_and_payload_kinds() {
        let config = ScenarioConfig::new(7, 120.0, 12.0)
            .with_window(AttackWindow::new(AttackKind::Dos, 10.0, 30.0, 10.0))
            .with_window(AttackWindow::new(AttackKind::Mitm, 40.0, 60.0, 9.0))
            .with_window(AttackWindow::new(AttackKind::CrossProtocol, 70.0, 90.0, 5.0));
        let attacker_mac = config.topology.attacker.mac;
        let frames = synthesize(&config).unwrap();
        for f in &frames {
            assert!(f.timestamp_s >= 0.0 && f.timestamp_s < config.duration_s);
            if let Label::Attack(kind) = f.label {
                assert!(config
                    .attack_windows
                    .iter()
                    .any(|w| w.kind == kind && w.contains(f.timestamp_s)));
            }
            if f.src_mac == attacker_mac {
                assert_ne!(f.label, Label::Normal);
            }
            let decoded = decode_message(&f.udp_payload);
            match f.label {
                Label::Attack(AttackKind::CrossProtocol) => assert!(decoded.is_err()),
                _ => assert!(decoded.is_ok(), "{:?}", decoded),
            }
        }
    }

    #[test]
    fn mitm_rewrites_path_and_server_answers_not_found() {
        let config = ScenarioConfig::new(2, 20.0, 1.0)
            .with_window(AttackWindow::new(AttackKind::Mitm, 0.0, 20.0, 30.0));
        let frames = synthesize(&config).unwrap();
        let mitm: Vec<_> = frames
            .iter()
            .filter(|f| f.label == Label::Attack(AttackKind::Mitm))
            .map(|f| decode_message(&f.udp_payload).unwrap())
            .collect();
        assert!(mitm.iter().any(|m| m.uri_path().as_deref() == Some("mitm")));
        assert!(mitm.iter().any(|m| m.uri_path().as_deref() == Some("temp")));
        assert!(mitm.iter().any(|m| m.code == Code::NOT_FOUND));
    }

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        for k in AttackKind::ALL {
            assert_eq!(k.as_str().parse::<AttackKind>().unwrap(), k);
        }
        assert!("normal".parse::<AttackKind>().is_err());
    }
}
