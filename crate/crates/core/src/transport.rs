//! Classical message plane: wire format, interchangeable channels, and the
//! trusted physics-oracle endpoint.
//!
//! A classical simulation cannot hand the quantum state to either party
//! without destroying the security story, so the joint state lives in a
//! referee component ([`GameOracle`]). "Sending box B" is modeled as granting
//! Bob the right to request operations on mode B; parties only ever see
//! classical outcomes. Wire frames are a 4-byte big-endian length prefix
//! followed by canonical key-sorted JSON, so semantically equal messages
//! encode to identical bytes.

use crate::quantum::{self, ModeLabel, Preparation, QuantumError, QuantumState};
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Map, Value};
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;
use thiserror::Error;

/// Hard cap on the JSON body of a single frame.
pub const MAX_FRAME_BODY: usize = 1 << 20;

/// Default TCP port for networked sessions.
pub const DEFAULT_PORT: u16 = 7201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Party::Alice => write!(f, "alice"),
            Party::Bob => write!(f, "bob"),
        }
    }
}

/// Classical protocol message exchanged between the parties.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    /// Bob opens a game, proposing the reward ratio.
    Hello { game_id: String, reward_ratio: f64 },
    Accept { game_id: String },
    /// Alice has prepared the particle; box B is (conceptually) with Bob.
    BoxBReady { game_id: String },
    /// Bob announces he found the particle in box B.
    ClaimWin { game_id: String },
    /// Alice reports what opening box A showed.
    OpenAResult { game_id: String, found_in_a: bool },
    RequestBoxA { game_id: String },
    BoxAReady { game_id: String },
    /// Bob reports the verification measurement (detected = projection failed).
    VerifyResult { game_id: String, detected: bool },
    /// Alice's settlement proposal; Bob echoes it back to confirm.
    Settle {
        game_id: String,
        outcome: String,
        bob_gain: f64,
        alice_gain: f64,
    },
    /// Result disagreement: the run is void.
    Cancel { game_id: String },
    Abort { game_id: String, reason: String },
}

impl WireMessage {
    pub fn game_id(&self) -> &str {
        match self {
            WireMessage::Hello { game_id, .. }
            | WireMessage::Accept { game_id }
            | WireMessage::BoxBReady { game_id }
            | WireMessage::ClaimWin { game_id }
            | WireMessage::OpenAResult { game_id, .. }
            | WireMessage::RequestBoxA { game_id }
            | WireMessage::BoxAReady { game_id }
            | WireMessage::VerifyResult { game_id, .. }
            | WireMessage::Settle { game_id, .. }
            | WireMessage::Cancel { game_id }
            | WireMessage::Abort { game_id, .. } => game_id,
        }
    }

    pub fn type_tag(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "HELLO",
            WireMessage::Accept { .. } => "ACCEPT",
            WireMessage::BoxBReady { .. } => "BOX_B_READY",
            WireMessage::ClaimWin { .. } => "CLAIM_WIN",
            WireMessage::OpenAResult { .. } => "OPEN_A_RESULT",
            WireMessage::RequestBoxA { .. } => "REQUEST_BOX_A",
            WireMessage::BoxAReady { .. } => "BOX_A_READY",
            WireMessage::VerifyResult { .. } => "VERIFY_RESULT",
            WireMessage::Settle { .. } => "SETTLE",
            WireMessage::Cancel { .. } => "CANCEL",
            WireMessage::Abort { .. } => "ABORT",
        }
    }

    fn payload(&self) -> Map<String, Value> {
        let mut map = Map::new();
        match self {
            WireMessage::Hello { reward_ratio, .. } => {
                map.insert("reward_ratio".into(), json!(reward_ratio));
            }
            WireMessage::OpenAResult { found_in_a, .. } => {
                map.insert("found_in_a".into(), json!(found_in_a));
            }
            WireMessage::VerifyResult { detected, .. } => {
                map.insert("detected".into(), json!(detected));
            }
            WireMessage::Settle {
                outcome,
                bob_gain,
                alice_gain,
                ..
            } => {
                // keys inserted in sorted order for canonical bytes
                map.insert("alice_gain".into(), json!(alice_gain));
                map.insert("bob_gain".into(), json!(bob_gain));
                map.insert("outcome".into(), json!(outcome));
            }
            WireMessage::Abort { reason, .. } => {
                map.insert("reason".into(), json!(reason));
            }
            _ => {}
        }
        map
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame incomplete: need {0} more bytes")]
    Incomplete(usize),
    #[error("frame body of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("invalid UTF-8 body: {0}")]
    Utf8(#[from] std::str::Utf8Error),
    #[error("malformed JSON body: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown message type tag {0:?} (incompatible peer version?)")]
    UnknownType(String),
    #[error("missing or mistyped field {0:?} for message type {1:?}")]
    MissingField(&'static str, String),
}

/// Encode a message as a length-prefixed canonical JSON frame.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, CodecError> {
    // top-level keys already in sorted order: game_id < payload < type
    let mut body = Map::new();
    body.insert("game_id".into(), json!(msg.game_id()));
    body.insert("payload".into(), Value::Object(msg.payload()));
    body.insert("type".into(), json!(msg.type_tag()));
    let bytes = serde_json::to_vec(&Value::Object(body))?;
    if bytes.len() > MAX_FRAME_BODY {
        return Err(CodecError::TooLarge(bytes.len()));
    }
    let mut frame = Vec::with_capacity(4 + bytes.len());
    frame.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    frame.extend_from_slice(&bytes);
    Ok(frame)
}

fn get_str(payload: &Map<String, Value>, key: &'static str, tag: &str) -> Result<String, CodecError> {
    payload
        .get(key)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| CodecError::MissingField(key, tag.to_owned()))
}

fn get_bool(payload: &Map<String, Value>, key: &'static str, tag: &str) -> Result<bool, CodecError> {
    payload
        .get(key)
        .and_then(Value::as_bool)
        .ok_or_else(|| CodecError::MissingField(key, tag.to_owned()))
}

fn get_f64(payload: &Map<String, Value>, key: &'static str, tag: &str) -> Result<f64, CodecError> {
    payload
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| CodecError::MissingField(key, tag.to_owned()))
}

/// Decode one complete frame. Returns the message and the number of bytes
/// consumed, or [`CodecError::Incomplete`] if more input is needed.
pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Incomplete(4 - bytes.len()));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_FRAME_BODY {
        return Err(CodecError::TooLarge(len));
    }
    if bytes.len() < 4 + len {
        return Err(CodecError::Incomplete(4 + len - bytes.len()));
    }
    let body = std::str::from_utf8(&bytes[4..4 + len])?;
    let value: Value = serde_json::from_str(body)?;
    let obj = value
        .as_object()
        .ok_or_else(|| CodecError::MissingField("type", "<non-object>".into()))?;
    let tag = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| CodecError::MissingField("type", "<missing>".into()))?
        .to_owned();
    let game_id = obj
        .get("game_id")
        .and_then(Value::as_str)
        .ok_or_else(|| CodecError::MissingField("game_id", tag.clone()))?
        .to_owned();
    let empty = Map::new();
    let payload = obj
        .get("payload")
        .and_then(Value::as_object)
        .unwrap_or(&empty);
    let msg = match tag.as_str() {
        "HELLO" => WireMessage::Hello {
            reward_ratio: get_f64(payload, "reward_ratio", &tag)?,
            game_id,
        },
        "ACCEPT" => WireMessage::Accept { game_id },
        "BOX_B_READY" => WireMessage::BoxBReady { game_id },
        "CLAIM_WIN" => WireMessage::ClaimWin { game_id },
        "OPEN_A_RESULT" => WireMessage::OpenAResult {
            found_in_a: get_bool(payload, "found_in_a", &tag)?,
            game_id,
        },
        "REQUEST_BOX_A" => WireMessage::RequestBoxA { game_id },
        "BOX_A_READY" => WireMessage::BoxAReady { game_id },
        "VERIFY_RESULT" => WireMessage::VerifyResult {
            detected: get_bool(payload, "detected", &tag)?,
            game_id,
        },
        "SETTLE" => WireMessage::Settle {
            outcome: get_str(payload, "outcome", &tag)?,
            bob_gain: get_f64(payload, "bob_gain", &tag)?,
            alice_gain: get_f64(payload, "alice_gain", &tag)?,
            game_id,
        },
        "CANCEL" => WireMessage::Cancel { game_id },
        "ABORT" => WireMessage::Abort {
            reason: get_str(payload, "reason", &tag)?,
            game_id,
        },
        _ => return Err(CodecError::UnknownType(tag)),
    };
    Ok((msg, 4 + len))
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("receive timed out")]
    Timeout,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("codec error: {0}")]
    Codec(#[from] CodecError),
}

/// Reliable, ordered, exactly-once message endpoint. Both implementations
/// satisfy the same contract, so sessions are transport-agnostic.
pub trait Endpoint: Send {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ChannelError>;
    fn recv(&mut self) -> Result<WireMessage, ChannelError>;
}

/// In-process endpoint backed by a pair of queues. Messages still pass
/// through the codec so both transports exercise the same bytes.
pub struct LocalEndpoint {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
    timeout: Duration,
}

/// Connected pair of in-process endpoints.
pub fn channel_pair() -> (LocalEndpoint, LocalEndpoint) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    let timeout = Duration::from_secs(10);
    (
        LocalEndpoint {
            tx: tx_a,
            rx: rx_a,
            timeout,
        },
        LocalEndpoint {
            tx: tx_b,
            rx: rx_b,
            timeout,
        },
    )
}

impl Endpoint for LocalEndpoint {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ChannelError> {
        let frame = encode(msg)?;
        self.tx.send(frame).map_err(|_| ChannelError::Disconnected)
    }

    fn recv(&mut self) -> Result<WireMessage, ChannelError> {
        let frame = self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            mpsc::RecvTimeoutError::Timeout => ChannelError::Timeout,
            mpsc::RecvTimeoutError::Disconnected => ChannelError::Disconnected,
        })?;
        let (msg, used) = decode(&frame)?;
        debug_assert_eq!(used, frame.len());
        Ok(msg)
    }
}

/// Framed stream-socket endpoint.
pub struct SocketEndpoint {
    stream: TcpStream,
    buf: VecDeque<u8>,
}

impl SocketEndpoint {
    pub fn new(stream: TcpStream) -> Result<Self, ChannelError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        Ok(SocketEndpoint {
            stream,
            buf: VecDeque::new(),
        })
    }
}

impl Endpoint for SocketEndpoint {
    fn send(&mut self, msg: &WireMessage) -> Result<(), ChannelError> {
        let frame = encode(msg)?;
        self.stream.write_all(&frame)?;
        Ok(())
    }

    fn recv(&mut self) -> Result<WireMessage, ChannelError> {
        loop {
            let contiguous: Vec<u8> = self.buf.iter().copied().collect();
            match decode(&contiguous) {
                Ok((msg, used)) => {
                    self.buf.drain(..used);
                    return Ok(msg);
                }
                Err(CodecError::Incomplete(_)) => {
                    let mut chunk = [0u8; 4096];
                    let n = self.stream.read(&mut chunk).map_err(|e| {
                        if e.kind() == std::io::ErrorKind::WouldBlock
                            || e.kind() == std::io::ErrorKind::TimedOut
                        {
                            ChannelError::Timeout
                        } else {
                            ChannelError::Io(e)
                        }
                    })?;
                    if n == 0 {
                        return Err(ChannelError::Disconnected);
                    }
                    self.buf.extend(&chunk[..n]);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Bind a listener for networked sessions.
pub fn listen(addr: impl ToSocketAddrs) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr)
}

/// Connect to a remote session host.
pub fn connect(addr: impl ToSocketAddrs) -> Result<SocketEndpoint, ChannelError> {
    let stream = TcpStream::connect(addr)?;
    SocketEndpoint::new(stream)
}

/// Request a party may send to the physics oracle. Requests must arrive in
/// protocol order per game: PREPARE, SPLIT, MEASURE_B, then OPEN_A or
/// PROJECT_VERIFY.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleRequest {
    Prepare(Preparation),
    Split { eta: f64 },
    MeasureB,
    OpenA,
    ProjectVerify { eta: f64 },
}

impl OracleRequest {
    pub fn type_tag(&self) -> &'static str {
        match self {
            OracleRequest::Prepare(_) => "ORACLE_PREPARE",
            OracleRequest::Split { .. } => "ORACLE_SPLIT",
            OracleRequest::MeasureB => "ORACLE_MEASURE_B",
            OracleRequest::OpenA => "ORACLE_OPEN_A",
            OracleRequest::ProjectVerify { .. } => "ORACLE_PROJECT_VERIFY",
        }
    }
}

/// Classical-only answer from the oracle. Never carries amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleResponse {
    Ack,
    Measurement { found: bool },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("request {got} out of order in phase {phase}")]
    OutOfOrder { got: String, phase: String },
    #[error("party {0} is not entitled to this request")]
    WrongParty(Party),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("oracle transport failure: {0}")]
    Transport(String),
}

/// Handle through which a session reaches the physics oracle, local or
/// remote.
pub trait OracleHandle {
    fn request(&mut self, party: Party, req: OracleRequest) -> Result<OracleResponse, OracleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OraclePhase {
    New,
    Prepared,
    Split,
    MeasuredB { found: bool },
    Terminal,
}

impl std::fmt::Display for OraclePhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OraclePhase::New => "new",
            OraclePhase::Prepared => "prepared",
            OraclePhase::Split => "split",
            OraclePhase::MeasuredB { .. } => "measured-b",
            OraclePhase::Terminal => "terminal",
        };
        write!(f, "{s}")
    }
}

/// The trusted referee for one game: holds the joint quantum state, enforces
/// request ordering, and answers each party with classical outcomes only.
pub struct GameOracle {
    state: Option<QuantumState>,
    phase: OraclePhase,
    rng: ChaCha12Rng,
}

impl GameOracle {
    pub fn new(rng: ChaCha12Rng) -> Self {
        GameOracle {
            state: None,
            phase: OraclePhase::New,
            rng,
        }
    }

    fn out_of_order(&self, req: &OracleRequest) -> OracleError {
        OracleError::OutOfOrder {
            got: req.type_tag().into(),
            phase: self.phase.to_string(),
        }
    }

    pub fn handle(
        &mut self,
        party: Party,
        req: OracleRequest,
    ) -> Result<OracleResponse, OracleError> {
        let entitled = match req {
            OracleRequest::Prepare(_) | OracleRequest::OpenA => Party::Alice,
            _ => Party::Bob,
        };
        if party != entitled {
            return Err(OracleError::WrongParty(party));
        }
        match (&req, self.phase) {
            (OracleRequest::Prepare(p), OraclePhase::New) => {
                self.state = Some(quantum::prepare(p)?);
                self.phase = OraclePhase::Prepared;
                Ok(OracleResponse::Ack)
            }
            (OracleRequest::Split { eta }, OraclePhase::Prepared) => {
                let s = self.state.take().expect("state present after prepare");
                self.state = Some(quantum::split_b(&s, *eta)?);
                self.phase = OraclePhase::Split;
                Ok(OracleResponse::Ack)
            }
            (OracleRequest::MeasureB, OraclePhase::Split) => {
                let s = self.state.take().expect("state present after split");
                let out = quantum::measure_mode(&s, ModeLabel::B, &mut self.rng)?;
                self.state = Some(out.post_state);
                self.phase = OraclePhase::MeasuredB { found: out.found };
                Ok(OracleResponse::Measurement { found: out.found })
            }
            (OracleRequest::OpenA, OraclePhase::MeasuredB { .. }) => {
                let s = self.state.take().expect("state present after measure");
                let out = quantum::measure_mode(&s, ModeLabel::A, &mut self.rng)?;
                self.state = Some(out.post_state);
                self.phase = OraclePhase::Terminal;
                Ok(OracleResponse::Measurement { found: out.found })
            }
            (OracleRequest::ProjectVerify { eta }, OraclePhase::MeasuredB { found: false }) => {
                let s = self.state.take().expect("state present after measure");
                let out = quantum::verify_preparation(&s, *eta, &mut self.rng)?;
                self.state = Some(out.post_state);
                self.phase = OraclePhase::Terminal;
                Ok(OracleResponse::Measurement { found: out.found })
            }
            _ => Err(self.out_of_order(&req)),
        }
    }
}

impl OracleHandle for GameOracle {
    fn request(&mut self, party: Party, req: OracleRequest) -> Result<OracleResponse, OracleError> {
        self.handle(party, req)
    }
}

// --- oracle wire codec (used only on the dedicated oracle connection) ---

fn complex_json(c: Complex64) -> Value {
    json!([c.re, c.im])
}

fn mode_json(m: ModeLabel) -> Value {
    match m {
        ModeLabel::A => json!("A"),
        ModeLabel::B => json!("B"),
        ModeLabel::BPrime => json!("BPRIME"),
        ModeLabel::C(i) => json!(format!("C{i}")),
    }
}

fn mode_from_str(s: &str) -> Option<ModeLabel> {
    match s {
        "A" => Some(ModeLabel::A),
        "B" => Some(ModeLabel::B),
        "BPRIME" => Some(ModeLabel::BPrime),
        _ => s.strip_prefix('C').and_then(|i| i.parse().ok().map(ModeLabel::C)),
    }
}

/// Encode an oracle request for the dedicated referee connection. Same
/// framing as the party channel, distinct tag namespace.
pub fn encode_oracle_request(game_id: &str, req: &OracleRequest) -> Result<Vec<u8>, CodecError> {
    let mut payload = Map::new();
    match req {
        OracleRequest::Prepare(Preparation::Epsilon(eps)) => {
            payload.insert("epsilon".into(), json!(eps));
        }
        OracleRequest::Prepare(Preparation::General {
            amplitudes,
            ancilla_dim,
        }) => {
            let amps: Vec<Value> = amplitudes
                .iter()
                .map(|((m, k), c)| json!([mode_json(*m), k, complex_json(*c)]))
                .collect();
            payload.insert("amplitudes".into(), Value::Array(amps));
            payload.insert("ancilla_dim".into(), json!(ancilla_dim));
        }
        OracleRequest::Split { eta } | OracleRequest::ProjectVerify { eta } => {
            payload.insert("eta".into(), json!(eta));
        }
        _ => {}
    }
    let mut body = Map::new();
    body.insert("game_id".into(), json!(game_id));
    body.insert("payload".into(), Value::Object(payload));
    body.insert("type".into(), json!(req.type_tag()));
    let bytes = serde_json::to_vec(&Value::Object(body))?;
    let mut frame = Vec::with_capacity(4 + bytes.len());
    frame.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    frame.extend_from_slice(&bytes);
    Ok(frame)
}

/// Decode one oracle request frame into (game_id, request, bytes consumed).
pub fn decode_oracle_request(bytes: &[u8]) -> Result<(String, OracleRequest, usize), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Incomplete(4 - bytes.len()));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if bytes.len() < 4 + len {
        return Err(CodecError::Incomplete(4 + len - bytes.len()));
    }
    let value: Value = serde_json::from_str(std::str::from_utf8(&bytes[4..4 + len])?)?;
    let tag = value["type"]
        .as_str()
        .ok_or(CodecError::MissingField("type", String::new()))?
        .to_owned();
    let game_id = value["game_id"]
        .as_str()
        .ok_or_else(|| CodecError::MissingField("game_id", tag.clone()))?
        .to_owned();
    let payload = &value["payload"];
    let req = match tag.as_str() {
        "ORACLE_PREPARE" => {
            if let Some(eps) = payload["epsilon"].as_f64() {
                OracleRequest::Prepare(Preparation::Epsilon(eps))
            } else {
                let amps = payload["amplitudes"]
                    .as_array()
                    .ok_or_else(|| CodecError::MissingField("amplitudes", tag.clone()))?;
                let mut amplitudes = Vec::with_capacity(amps.len());
                for entry in amps {
                    let mode = entry[0]
                        .as_str()
                        .and_then(mode_from_str)
                        .ok_or_else(|| CodecError::MissingField("amplitudes", tag.clone()))?;
                    let k = entry[1]
                        .as_u64()
                        .ok_or_else(|| CodecError::MissingField("amplitudes", tag.clone()))?
                        as usize;
                    let re = entry[2][0].as_f64().unwrap_or(0.0);
                    let im = entry[2][1].as_f64().unwrap_or(0.0);
                    amplitudes.push(((mode, k), Complex64::new(re, im)));
                }
                let ancilla_dim = payload["ancilla_dim"]
                    .as_u64()
                    .ok_or_else(|| CodecError::MissingField("ancilla_dim", tag.clone()))?
                    as usize;
                OracleRequest::Prepare(Preparation::General {
                    amplitudes,
                    ancilla_dim,
                })
            }
        }
        "ORACLE_SPLIT" => OracleRequest::Split {
            eta: payload["eta"]
                .as_f64()
                .ok_or_else(|| CodecError::MissingField("eta", tag.clone()))?,
        },
        "ORACLE_MEASURE_B" => OracleRequest::MeasureB,
        "ORACLE_OPEN_A" => OracleRequest::OpenA,
        "ORACLE_PROJECT_VERIFY" => OracleRequest::ProjectVerify {
            eta: payload["eta"]
                .as_f64()
                .ok_or_else(|| CodecError::MissingField("eta", tag.clone()))?,
        },
        _ => return Err(CodecError::UnknownType(tag)),
    };
    Ok((game_id, req, 4 + len))
}

/// Encode an oracle response ("RESULT" with optional found flag, or "ERROR").
pub fn encode_oracle_response(
    game_id: &str,
    resp: &Result<OracleResponse, String>,
) -> Result<Vec<u8>, CodecError> {
    let mut payload = Map::new();
    let tag = match resp {
        Ok(OracleResponse::Ack) => "ORACLE_ACK",
        Ok(OracleResponse::Measurement { found }) => {
            payload.insert("found".into(), json!(found));
            "ORACLE_RESULT"
        }
        Err(reason) => {
            payload.insert("reason".into(), json!(reason));
            "ORACLE_ERROR"
        }
    };
    let mut body = Map::new();
    body.insert("game_id".into(), json!(game_id));
    body.insert("payload".into(), Value::Object(payload));
    body.insert("type".into(), json!(tag));
    let bytes = serde_json::to_vec(&Value::Object(body))?;
    let mut frame = Vec::with_capacity(4 + bytes.len());
    frame.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    frame.extend_from_slice(&bytes);
    Ok(frame)
}

/// Decode one oracle response frame.
pub fn decode_oracle_response(
    bytes: &[u8],
) -> Result<(String, Result<OracleResponse, String>, usize), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Incomplete(4 - bytes.len()));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if bytes.len() < 4 + len {
        return Err(CodecError::Incomplete(4 + len - bytes.len()));
    }
    let value: Value = serde_json::from_str(std::str::from_utf8(&bytes[4..4 + len])?)?;
    let tag = value["type"]
        .as_str()
        .ok_or(CodecError::MissingField("type", String::new()))?
        .to_owned();
    let game_id = value["game_id"].as_str().unwrap_or_default().to_owned();
    let resp = match tag.as_str() {
        "ORACLE_ACK" => Ok(OracleResponse::Ack),
        "ORACLE_RESULT" => Ok(OracleResponse::Measurement {
            found: value["payload"]["found"]
                .as_bool()
                .ok_or_else(|| CodecError::MissingField("found", tag.clone()))?,
        }),
        "ORACLE_ERROR" => Err(value["payload"]["reason"]
            .as_str()
            .unwrap_or("unknown")
            .to_owned()),
        _ => return Err(CodecError::UnknownType(tag)),
    };
    Ok((game_id, resp, 4 + len))
}

/// Client-side oracle handle that forwards requests over a dedicated
/// referee connection.
pub struct RemoteOracle {
    stream: TcpStream,
    buf: VecDeque<u8>,
    game_id: String,
}

impl RemoteOracle {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ChannelError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        Ok(RemoteOracle {
            stream,
            buf: VecDeque::new(),
            game_id: String::new(),
        })
    }

    pub fn set_game(&mut self, game_id: &str) {
        self.game_id = game_id.to_owned();
    }
}

impl OracleHandle for RemoteOracle {
    fn request(&mut self, _party: Party, req: OracleRequest) -> Result<OracleResponse, OracleError> {
        let frame = encode_oracle_request(&self.game_id, &req)
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        self.stream
            .write_all(&frame)
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        loop {
            let contiguous: Vec<u8> = self.buf.iter().copied().collect();
            match decode_oracle_response(&contiguous) {
                Ok((_, resp, used)) => {
                    self.buf.drain(..used);
                    return resp.map_err(OracleError::Transport);
                }
                Err(CodecError::Incomplete(_)) => {
                    let mut chunk = [0u8; 4096];
                    let n = self
                        .stream
                        .read(&mut chunk)
                        .map_err(|e| OracleError::Transport(e.to_string()))?;
                    if n == 0 {
                        return Err(OracleError::Transport("referee disconnected".into()));
                    }
                    self.buf.extend(&chunk[..n]);
                }
                Err(e) => return Err(OracleError::Transport(e.to_string())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn sample_messages() -> Vec<WireMessage> {
        vec![
            WireMessage::Hello {
                game_id: "g1".into(),
                reward_ratio: 700.0,
            },
            WireMessage::Accept { game_id: "g1".into() },
            WireMessage::BoxBReady { game_id: "g1".into() },
            WireMessage::ClaimWin { game_id: "g1".into() },
            WireMessage::OpenAResult {
                game_id: "g1".into(),
                found_in_a: false,
            },
            WireMessage::RequestBoxA { game_id: "g1".into() },
            WireMessage::BoxAReady { game_id: "g1".into() },
            WireMessage::VerifyResult {
                game_id: "g1".into(),
                detected: true,
            },
            WireMessage::Settle {
                game_id: "g1".into(),
                outcome: "ALICE_WINS".into(),
                bob_gain: -1.0,
                alice_gain: 1.0,
            },
            WireMessage::Cancel { game_id: "g1".into() },
            WireMessage::Abort {
                game_id: "g1".into(),
                reason: "out-of-phase".into(),
            },
        ]
    }

    #[test]
    fn round_trip_all_message_types() {
        for msg in sample_messages() {
            let frame = encode(&msg).unwrap();
            let (decoded, used) = decode(&frame).unwrap();
            assert_eq!(used, frame.len());
            assert_eq!(decoded, msg);
        }
    }

    #[test]
    fn encoding_is_canonical() {
        let a = WireMessage::ClaimWin { game_id: "g7".into() };
        let b = WireMessage::ClaimWin { game_id: "g7".into() };
        assert_eq!(encode(&a).unwrap(), encode(&b).unwrap());
        let frame = encode(&a).unwrap();
        let body = std::str::from_utf8(&frame[4..]).unwrap();
        assert_eq!(body, r#"{"game_id":"g7","payload":{},"type":"CLAIM_WIN"}"#);
    }

    #[test]
    fn unknown_type_is_rejected_by_name() {
        let body = br#"{"game_id":"g1","payload":{},"type":"FOO"}"#;
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body);
        match decode(&frame) {
            Err(CodecError::UnknownType(tag)) => assert_eq!(tag, "FOO"),
            other => panic!("expected unknown-type error, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_signals_incomplete() {
        assert!(matches!(decode(&[]), Err(CodecError::Incomplete(4))));
    }

    #[test]
    fn missing_field_is_an_error() {
        let body = br#"{"game_id":"g1","payload":{},"type":"VERIFY_RESULT"}"#;
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body);
        assert!(matches!(decode(&frame), Err(CodecError::MissingField(_, _))));
    }

    #[test]
    fn truncated_frames_error_without_panicking() {
        for msg in sample_messages() {
            let frame = encode(&msg).unwrap();
            for cut in 0..frame.len() {
                match decode(&frame[..cut]) {
                    Err(CodecError::Incomplete(_)) => {}
                    other => panic!("cut={cut}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn corrupted_bodies_error_without_panicking() {
        let frame = encode(&sample_messages()[0]).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let mut bad = frame.clone();
            let i = 4 + rand::Rng::gen_range(&mut rng, 0..bad.len() - 4);
            bad[i] = rand::Rng::gen(&mut rng);
            let _ = decode(&bad); // must not panic
        }
    }

    proptest! {
        #[test]
        fn codec_round_trip_holds_for_generated_messages(
            id in "[a-z0-9]{1,12}",
            ratio in 0.1f64..1e7,
            flag: bool,
            gain in -1e6f64..1e6,
        ) {
            let candidates = vec![
                WireMessage::Hello { game_id: id.clone(), reward_ratio: ratio },
                WireMessage::OpenAResult { game_id: id.clone(), found_in_a: flag },
                WireMessage::VerifyResult { game_id: id.clone(), detected: flag },
                WireMessage::Settle {
                    game_id: id.clone(),
                    outcome: "BOB_FOUND_PARTICLE".into(),
                    bob_gain: gain,
                    alice_gain: -gain,
                },
            ];
            for msg in candidates {
                let frame = encode(&msg).unwrap();
                let (decoded, used) = decode(&frame).unwrap();
                prop_assert_eq!(used, frame.len());
                prop_assert_eq!(decoded, msg);
            }
        }
    }

    #[test]
    fn local_channel_delivers_in_order() {
        let (mut a, mut b) = channel_pair();
        for msg in sample_messages() {
            a.send(&msg).unwrap();
        }
        for msg in sample_messages() {
            assert_eq!(b.recv().unwrap(), msg);
        }
    }

    #[test]
    fn oracle_enforces_ordering_and_visibility() {
        let mut oracle = GameOracle::new(rand_chacha::ChaCha12Rng::seed_from_u64(1));
        // SPLIT before PREPARE
        assert!(matches!(
            oracle.handle(Party::Bob, OracleRequest::Split { eta: 0.5 }),
            Err(OracleError::OutOfOrder { .. })
        ));
        // Bob cannot prepare
        assert!(matches!(
            oracle.handle(Party::Bob, OracleRequest::Prepare(Preparation::Epsilon(0.0))),
            Err(OracleError::WrongParty(Party::Bob))
        ));
        oracle
            .handle(Party::Alice, OracleRequest::Prepare(Preparation::Epsilon(0.0)))
            .unwrap();
        // Alice cannot measure box B
        assert!(matches!(
            oracle.handle(Party::Alice, OracleRequest::MeasureB),
            Err(OracleError::WrongParty(Party::Alice))
        ));
        oracle
            .handle(Party::Bob, OracleRequest::Split { eta: 0.3 })
            .unwrap();
        let found = match oracle.handle(Party::Bob, OracleRequest::MeasureB).unwrap() {
            OracleResponse::Measurement { found } => found,
            other => panic!("{other:?}"),
        };
        if !found {
            // verification only after a negative box-B result
            oracle
                .handle(Party::Bob, OracleRequest::ProjectVerify { eta: 0.3 })
                .unwrap();
        }
    }

    #[test]
    fn oracle_request_codec_round_trips() {
        let reqs = vec![
            OracleRequest::Prepare(Preparation::Epsilon(0.25)),
            OracleRequest::Prepare(Preparation::General {
                amplitudes: vec![
                    ((ModeLabel::A, 0), Complex64::new(0.6, 0.1)),
                    ((ModeLabel::C(3), 1), Complex64::new(-0.3, 0.7)),
                ],
                ancilla_dim: 2,
            }),
            OracleRequest::Split { eta: 0.125 },
            OracleRequest::MeasureB,
            OracleRequest::OpenA,
            OracleRequest::ProjectVerify { eta: 0.125 },
        ];
        for req in reqs {
            let frame = encode_oracle_request("g3", &req).unwrap();
            let (id, decoded, used) = decode_oracle_request(&frame).unwrap();
            assert_eq!(id, "g3");
            assert_eq!(used, frame.len());
            assert_eq!(decoded, req);
        }
        for resp in [
            Ok(OracleResponse::Ack),
            Ok(OracleResponse::Measurement { found: true }),
            Err("boom".to_owned()),
        ] {
            let frame = encode_oracle_response("g3", &resp).unwrap();
            let (_, decoded, _) = decode_oracle_response(&frame).unwrap();
            assert_eq!(decoded, resp);
        }
    }

    #[test]
    fn responses_carry_no_amplitudes() {
        // API-level: the response type has no numeric state content at all.
        let frame = encode_oracle_response("g", &Ok(OracleResponse::Measurement { found: true }))
            .unwrap();
        let body = std::str::from_utf8(&frame[4..]).unwrap();
        assert!(!body.contains("amplitude"));
        assert_eq!(
            body,
            r#"{"game_id":"g","payload":{"found":true},"type":"ORACLE_RESULT"}"#
        );
    }
}
