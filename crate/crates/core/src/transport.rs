//! Wire format and channels between Alice and Bob.
//!
//! Every frame is `version u8 | msg_type u8 | length u32 LE | payload`, all
//! integers and floats little-endian. Pulse frames carry the simulated
//! optical state; everything else is classical traffic.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;

use thiserror::Error;

use crate::error::{Error, Result};

pub const FRAME_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
/// Largest payload a peer may announce.
pub const MAX_PAYLOAD: u32 = 1 << 26;

pub mod msg_type {
    pub const SESSION_START: u8 = 0x01;
    pub const QFRAME_OUT: u8 = 0x02;
    pub const QFRAME_BACK: u8 = 0x03;
    pub const DETECTIONS: u8 = 0x04;
    pub const BASES: u8 = 0x05;
    pub const DISCLOSE: u8 = 0x06;
    pub const ER_REPORT: u8 = 0x07;
    pub const TERMINATE: u8 = 0x08;
}

pub mod terminate_reason {
    pub const COMPLETE: u8 = 0;
    pub const CONFIG_MISMATCH: u8 = 1;
    pub const PROTOCOL_VIOLATION: u8 = 2;
    pub const ABORTED: u8 = 3;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("incomplete frame: have {have} bytes, need {need}")]
    Incomplete { have: usize, need: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

fn violation(msg: impl Into<String>) -> FrameError {
    FrameError::ProtocolViolation(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QFrameOut {
    pub index: u64,
    pub mean_photons: f64,
    pub pol: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QFrameBack {
    pub index: u64,
    pub mean_photons: f64,
    pub phase_a: f64,
    pub pol: [f64; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    SessionStart {
        n_pulses: u64,
        variant: u8,
        mu_pair: f64,
        commitment: [u8; 32],
    },
    QFrameOut(QFrameOut),
    QFrameBack(QFrameBack),
    Detections {
        indices: Vec<u64>,
    },
    /// One basis bit per entry, packed LSB first.
    Bases {
        bases: Vec<u8>,
    },
    Disclose {
        entries: Vec<(u64, u8)>,
    },
    ErReport {
        er: f64,
    },
    Terminate {
        reason: u8,
    },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::SessionStart { .. } => SESSION_START,
            Message::QFrameOut(_) => QFRAME_OUT,
            Message::QFrameBack(_) => QFRAME_BACK,
            Message::Detections { .. } => DETECTIONS,
            Message::Bases { .. } => BASES,
            Message::Disclose { .. } => DISCLOSE,
            Message::ErReport { .. } => ER_REPORT,
            Message::Terminate { .. } => TERMINATE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::SessionStart { .. } => "SESSION_START",
            Message::QFrameOut(_) => "QFRAME_OUT",
            Message::QFrameBack(_) => "QFRAME_BACK",
            Message::Detections { .. } => "DETECTIONS",
            Message::Bases { .. } => "BASES",
            Message::Disclose { .. } => "DISCLOSE",
            Message::ErReport { .. } => "ER_REPORT",
            Message::Terminate { .. } => "TERMINATE",
        }
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn check_increasing<I: Iterator<Item = u64>>(it: I) -> Result<(), FrameError> {
    let mut prev: Option<u64> = None;
    for i in it {
        if prev.is_some_and(|p| i <= p) {
            return Err(violation("indices are not strictly increasing"));
        }
        prev = Some(i);
    }
    Ok(())
}

fn encode_payload(msg: &Message, out: &mut Vec<u8>) -> Result<(), FrameError> {
    match msg {
        Message::SessionStart { n_pulses, variant, mu_pair, commitment } => {
            out.extend_from_slice(&n_pulses.to_le_bytes());
            out.push(*variant);
            out.extend_from_slice(&mu_pair.to_le_bytes());
            out.extend_from_slice(commitment);
        }
        Message::QFrameOut(q) => {
            out.extend_from_slice(&q.index.to_le_bytes());
            put_f64s(out, &[q.mean_photons]);
            put_f64s(out, &q.pol);
        }
        Message::QFrameBack(q) => {
            out.extend_from_slice(&q.index.to_le_bytes());
            put_f64s(out, &[q.mean_photons, q.phase_a]);
            put_f64s(out, &q.pol);
        }
        Message::Detections { indices } => {
            check_increasing(indices.iter().copied())?;
            let count = u32::try_from(indices.len()).map_err(|_| violation("too many indices"))?;
            out.extend_from_slice(&count.to_le_bytes());
            for i in indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        Message::Bases { bases } => {
            let count = u32::try_from(bases.len()).map_err(|_| violation("too many bases"))?;
            out.extend_from_slice(&count.to_le_bytes());
            for chunk in bases.chunks(8) {
                let mut byte = 0u8;
                for (k, &b) in chunk.iter().enumerate() {
                    if b > 1 {
                        return Err(violation("basis value is not 0 or 1"));
                    }
                    byte |= b << k;
                }
                out.push(byte);
            }
        }
        Message::Disclose { entries } => {
            check_increasing(entries.iter().map(|e| e.0))?;
            let count = u32::try_from(entries.len()).map_err(|_| violation("too many entries"))?;
            out.extend_from_slice(&count.to_le_bytes());
            for &(i, b) in entries {
                if b > 1 {
                    return Err(violation("disclosed bit is not 0 or 1"));
                }
                out.extend_from_slice(&i.to_le_bytes());
                out.push(b);
            }
        }
        Message::ErReport { er } => out.extend_from_slice(&er.to_le_bytes()),
        Message::Terminate { reason } => out.push(*reason),
    }
    Ok(())
}

/// Append the frame for `msg` to `out`. Fails only for messages that break
/// a wire invariant (unordered indices, non-binary bits).
pub fn encode_frame_into(msg: &Message, out: &mut Vec<u8>) -> Result<(), FrameError> {
    let start = out.len();
    out.push(FRAME_VERSION);
    out.push(msg.msg_type());
    out.extend_from_slice(&[0; 4]);
    if let Err(e) = encode_payload(msg, out) {
        out.truncate(start);
        return Err(e);
    }
    let len = (out.len() - start - HEADER_LEN) as u32;
    out[start + 2..start + 6].copy_from_slice(&len.to_le_bytes());
    Ok(())
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::new();
    encode_frame_into(msg, &mut out)?;
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() - self.pos < n {
            return Err(violation("payload shorter than its fields"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FrameError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn pol(&mut self) -> Result<[f64; 4], FrameError> {
        Ok([self.f64()?, self.f64()?, self.f64()?, self.f64()?])
    }

    fn finish(&self) -> Result<(), FrameError> {
        if self.pos != self.buf.len() {
            return Err(violation(format!("{} trailing payload bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Exact payload size a counted message must have, checked before any
/// allocation sized by the untrusted count.
fn expect_len(payload: &[u8], want: usize) -> Result<(), FrameError> {
    if payload.len() != want {
        return Err(violation(format!("payload is {} bytes, expected {want}", payload.len())));
    }
    Ok(())
}

fn decode_payload(ty: u8, payload: &[u8]) -> Result<Message, FrameError> {
    use msg_type::*;
    let mut c = Cursor { buf: payload, pos: 0 };
    let msg = match ty {
        SESSION_START => {
            let n_pulses = c.u64()?;
            let variant = c.u8()?;
            if variant > 1 {
                return Err(violation(format!("unknown protocol variant {variant}")));
            }
            let mu_pair = c.f64()?;
            let commitment = c.take(32)?.try_into().unwrap();
            Message::SessionStart { n_pulses, variant, mu_pair, commitment }
        }
        QFRAME_OUT => Message::QFrameOut(QFrameOut { index: c.u64()?, mean_photons: c.f64()?, pol: c.pol()? }),
        QFRAME_BACK => Message::QFrameBack(QFrameBack {
            index: c.u64()?,
            mean_photons: c.f64()?,
            phase_a: c.f64()?,
            pol: c.pol()?,
        }),
        DETECTIONS => {
            let n = c.u32()? as usize;
            expect_len(payload, 4 + 8 * n)?;
            let indices = (0..n).map(|_| c.u64()).collect::<Result<Vec<_>, _>>()?;
            check_increasing(indices.iter().copied())?;
            Message::Detections { indices }
        }
        BASES => {
            let n = c.u32()? as usize;
            expect_len(payload, 4 + n.div_ceil(8))?;
            let packed = c.take(n.div_ceil(8))?;
            if !n.is_multiple_of(8) && packed[packed.len() - 1] >> (n % 8) != 0 {
                return Err(violation("basis bitmap padding is not zero"));
            }
            Message::Bases { bases: (0..n).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect() }
        }
        DISCLOSE => {
            let n = c.u32()? as usize;
            expect_len(payload, 4 + 9 * n)?;
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                let i = c.u64()?;
                let b = c.u8()?;
                if b > 1 {
                    return Err(violation("disclosed bit is not 0 or 1"));
                }
                entries.push((i, b));
            }
            check_increasing(entries.iter().map(|e| e.0))?;
            Message::Disclose { entries }
        }
        ER_REPORT => Message::ErReport { er: c.f64()? },
        TERMINATE => Message::Terminate { reason: c.u8()? },
        other => return Err(violation(format!("unknown message type 0x{other:02x}"))),
    };
    c.finish()?;
    Ok(msg)
}

/// Parse the header of a frame, returning its type and payload length.
pub fn decode_header(bytes: &[u8]) -> Result<(u8, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Incomplete { have: bytes.len(), need: HEADER_LEN });
    }
    if bytes[0] != FRAME_VERSION {
        return Err(violation(format!("unsupported frame version 0x{:02x}", bytes[0])));
    }
    let ty = bytes[1];
    if !(msg_type::SESSION_START..=msg_type::TERMINATE).contains(&ty) {
        return Err(violation(format!("unknown message type 0x{ty:02x}")));
    }
    let len = u32::from_le_bytes(bytes[2..6].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(violation(format!("payload length {len} exceeds limit")));
    }
    Ok((ty, len as usize))
}

/// Decode the first frame in `bytes`, returning the message and the number
/// of bytes it occupied.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    let (ty, len) = decode_header(bytes)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(FrameError::Incomplete { have: bytes.len(), need: total });
    }
    Ok((decode_payload(ty, &bytes[HEADER_LEN..total])?, total))
}

/// Ordered, reliable, duplex message link owned by one station.
pub trait Channel: Send {
    fn send(&mut self, msg: Message) -> Result<()>;

    /// Blocks until the next message arrives. Implementations flush pending
    /// output first.
    fn recv(&mut self) -> Result<Message>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, msg: Message) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message> {
        (**self).recv()
    }

    fn flush(&mut self) -> Result<()> {
        (**self).flush()
    }
}

/// FIFO queues between two endpoints in one process.
pub struct InProcessChannel {
    tx: mpsc::Sender<Message>,
    rx: mpsc::Receiver<Message>,
}

impl InProcessChannel {
    pub fn pair() -> (InProcessChannel, InProcessChannel) {
        let (tx_a, rx_b) = mpsc::channel();
        let (tx_b, rx_a) = mpsc::channel();
        (InProcessChannel { tx: tx_a, rx: rx_a }, InProcessChannel { tx: tx_b, rx: rx_b })
    }
}

impl Channel for InProcessChannel {
    fn send(&mut self, msg: Message) -> Result<()> {
        self.tx.send(msg).map_err(|_| Error::Channel("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Message> {
        self.rx.recv().map_err(|_| Error::Channel("peer disconnected".into()))
    }
}

/// Length-prefixed frames over a TCP stream.
pub struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    scratch: Vec<u8>,
}

fn io_to_channel(e: std::io::Error) -> Error {
    Error::Channel(e.to_string())
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        let writer = BufWriter::with_capacity(1 << 16, stream);
        Ok(Self { reader, writer, scratch: Vec::new() })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        Self::new(TcpStream::connect(addr).map_err(io_to_channel)?)
    }

    pub fn accept(listener: &TcpListener) -> Result<Self> {
        let (stream, _) = listener.accept().map_err(io_to_channel)?;
        Self::new(stream)
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: Message) -> Result<()> {
        self.scratch.clear();
        encode_frame_into(&msg, &mut self.scratch)?;
        self.writer.write_all(&self.scratch).map_err(io_to_channel)
    }

    fn recv(&mut self) -> Result<Message> {
        // Peers flush whole frames before blocking, so buffered input means
        // the rest of a frame is already on its way.
        if self.reader.buffer().is_empty() {
            self.flush()?;
        }
        let mut header = [0u8; HEADER_LEN];
        self.reader.read_exact(&mut header).map_err(io_to_channel)?;
        let (_, len) = decode_header(&header)?;
        self.scratch.clear();
        self.scratch.extend_from_slice(&header);
        self.scratch.resize(HEADER_LEN + len, 0);
        self.reader.read_exact(&mut self.scratch[HEADER_LEN..]).map_err(io_to_channel)?;
        Ok(decode_frame(&self.scratch)?.0)
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(io_to_channel)
    }
}

impl Drop for TcpChannel {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

/// How the two stations are connected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    InProcess,
    Socket { host: String, port: u16 },
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "in_process" {
            return Ok(ChannelMode::InProcess);
        }
        if let Some(rest) = s.strip_prefix("socket:") {
            let (host, port) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::config(format!("socket mode needs host:port, got {rest:?}")))?;
            let port = port.parse().map_err(|_| Error::config(format!("bad port {port:?}")))?;
            return Ok(ChannelMode::Socket { host: host.to_string(), port });
        }
        Err(Error::config(format!("unknown channel mode {s:?}")))
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelMode::InProcess => write!(f, "in_process"),
            ChannelMode::Socket { host, port } => write!(f, "socket:{host}:{port}"),
        }
    }
}

/// A connected duplex pair: `(alice_end, bob_end)`.
///
/// Socket mode listens on `host:port` (port 0 picks a free one) and connects
/// to it, so both endpoints live in this process.
pub fn open_channel(mode: &ChannelMode) -> Result<(Box<dyn Channel>, Box<dyn Channel>)> {
    match mode {
        ChannelMode::InProcess => {
            let (a, b) = InProcessChannel::pair();
            Ok((Box::new(a), Box::new(b)))
        }
        ChannelMode::Socket { host, port } => {
            let listener = TcpListener::bind((host.as_str(), *port)).map_err(io_to_channel)?;
            let addr = listener.local_addr()?;
            let bob = TcpChannel::connect(addr)?;
            let alice = TcpChannel::accept(&listener)?;
            Ok((Box::new(alice), Box::new(bob)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detections_golden_vector() {
        let bytes = encode_frame(&Message::Detections { indices: vec![3, 17] }).unwrap();
        let expected: Vec<u8> = [
            &[0x01, 0x04][..],
            &[0x14, 0, 0, 0],
            &[0x02, 0, 0, 0],
            &[0x03, 0, 0, 0, 0, 0, 0, 0],
            &[0x11, 0, 0, 0, 0, 0, 0, 0],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn short_input_is_incomplete() {
        assert_eq!(decode_frame(&[1, 4, 0]), Err(FrameError::Incomplete { have: 3, need: 6 }));
        let full = encode_frame(&Message::ErReport { er: 0.01 }).unwrap();
        assert!(matches!(decode_frame(&full[..full.len() - 1]), Err(FrameError::Incomplete { .. })));
    }

    #[test]
    fn bad_version_and_type() {
        let mut f = encode_frame(&Message::Terminate { reason: 0 }).unwrap();
        f[0] = 2;
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
        let mut f = encode_frame(&Message::Terminate { reason: 0 }).unwrap();
        f[1] = 0x09;
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
        f[1] = 0x00;
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
    }

    #[test]
    fn length_must_match_payload() {
        let mut f = encode_frame(&Message::Detections { indices: vec![1, 2] }).unwrap();
        // claim one index but ship two
        f[6] = 1;
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
        let mut f = encode_frame(&Message::Terminate { reason: 0 }).unwrap();
        f[2] = 2;
        f.push(0);
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
    }

    #[test]
    fn unordered_indices_rejected() {
        assert!(encode_frame(&Message::Detections { indices: vec![5, 5] }).is_err());
        let mut f = encode_frame(&Message::Detections { indices: vec![5, 6] }).unwrap();
        f[18] = 4; // second index 6 → 4
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
        assert!(encode_frame(&Message::Disclose { entries: vec![(9, 0), (2, 1)] }).is_err());
    }

    #[test]
    fn bases_padding_must_be_zero() {
        let mut f = encode_frame(&Message::Bases { bases: vec![1, 0, 1] }).unwrap();
        assert_eq!(f.len(), HEADER_LEN + 5);
        *f.last_mut().unwrap() |= 0x10;
        assert!(decode_frame(&f).is_err());
    }

    #[test]
    fn unknown_variant_rejected() {
        let m = Message::SessionStart { n_pulses: 1, variant: 7, mu_pair: 0.1, commitment: [0; 32] };
        let f = encode_frame(&m).unwrap();
        assert!(matches!(decode_frame(&f), Err(FrameError::ProtocolViolation(_))));
    }

    #[test]
    fn in_process_fifo() {
        let (mut a, mut b) = InProcessChannel::pair();
        for r in 0..5 {
            a.send(Message::Terminate { reason: r }).unwrap();
        }
        for r in 0..5 {
            assert_eq!(b.recv().unwrap(), Message::Terminate { reason: r });
        }
        drop(a);
        assert!(matches!(b.recv(), Err(Error::Channel(_))));
    }

    #[test]
    fn socket_pair_delivers_in_order() {
        let (mut a, mut b) = open_channel(&ChannelMode::Socket { host: "127.0.0.1".into(), port: 0 }).unwrap();
        let msgs: Vec<Message> = (0..100)
            .map(|i| Message::QFrameOut(QFrameOut { index: i, mean_photons: i as f64, pol: [1.0, 0.0, 0.0, 0.0] }))
            .collect();
        for m in &msgs {
            a.send(m.clone()).unwrap();
        }
        a.flush().unwrap();
        for m in &msgs {
            assert_eq!(&b.recv().unwrap(), m);
        }
    }

    #[test]
    fn channel_mode_parsing() {
        assert_eq!("in_process".parse::<ChannelMode>().unwrap(), ChannelMode::InProcess);
        assert_eq!(
            "socket:127.0.0.1:7000".parse::<ChannelMode>().unwrap(),
            ChannelMode::Socket { host: "127.0.0.1".into(), port: 7000 }
        );
        assert!("socket:nohost".parse::<ChannelMode>().is_err());
        assert!("pigeon".parse::<ChannelMode>().is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1e12f64..1e12
    }

    fn pol() -> impl Strategy<Value = [f64; 4]> {
        [finite(), finite(), finite(), finite()]
    }

    fn increasing() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::btree_set(any::<u64>(), 0..40).prop_map(|s| s.into_iter().collect())
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u64>(), 0u8..=1, finite(), any::<[u8; 32]>()).prop_map(|(n, v, mu, c)| {
                Message::SessionStart { n_pulses: n, variant: v, mu_pair: mu, commitment: c }
            }),
            (any::<u64>(), finite(), pol()).prop_map(|(index, mean_photons, pol)| Message::QFrameOut(QFrameOut {
                index,
                mean_photons,
                pol
            })),
            (any::<u64>(), finite(), finite(), pol()).prop_map(|(index, mean_photons, phase_a, pol)| {
                Message::QFrameBack(QFrameBack { index, mean_photons, phase_a, pol })
            }),
            increasing().prop_map(|indices| Message::Detections { indices }),
            prop::collection::vec(0u8..=1, 0..70).prop_map(|bases| Message::Bases { bases }),
            (increasing(), prop::collection::vec(0u8..=1, 40))
                .prop_map(|(ix, bits)| Message::Disclose { entries: ix.into_iter().zip(bits).collect() }),
            finite().prop_map(|er| Message::ErReport { er }),
            any::<u8>().prop_map(|reason| Message::Terminate { reason }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(m in message()) {
            let bytes = encode_frame(&m).unwrap();
            let (back, used) = decode_frame(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&back, &m);
            // canonical: re-encoding the decoded message gives the same bytes
            prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
        }

        #[test]
        fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_frame(&bytes);
        }
    }
}
