//! Wire format: a 4-byte big-endian length followed by that many bytes of
//! compact UTF-8 JSON `{"payload":…,"timestamp":…,"type":…}` with keys sorted.

use std::fmt;
use std::str::FromStr;

use mobilisim::control::ControllerSpec;
use mobilisim::sensors::{CameraIntrinsics, ImuReading};
use mobilisim::scene::SceneSnapshot;
use mobilisim::Transform;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageType {
    Hello,
    Welcome,
    State,
    SetController,
    SetTarget,
    Attach,
    RenderRequest,
    RenderResponse,
    Imu,
    Ping,
    Pong,
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 12] = [
        MessageType::Hello,
        MessageType::Welcome,
        MessageType::State,
        MessageType::SetController,
        MessageType::SetTarget,
        MessageType::Attach,
        MessageType::RenderRequest,
        MessageType::RenderResponse,
        MessageType::Imu,
        MessageType::Ping,
        MessageType::Pong,
        MessageType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Hello => "HELLO",
            MessageType::Welcome => "WELCOME",
            MessageType::State => "STATE",
            MessageType::SetController => "SET_CONTROLLER",
            MessageType::SetTarget => "SET_TARGET",
            MessageType::Attach => "ATTACH",
            MessageType::RenderRequest => "RENDER_REQUEST",
            MessageType::RenderResponse => "RENDER_RESPONSE",
            MessageType::Imu => "IMU",
            MessageType::Ping => "PING",
            MessageType::Pong => "PONG",
            MessageType::Error => "ERROR",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageType::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| ProtocolError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("frame of {0} bytes exceeds the 64 MiB limit")]
    FrameTooLarge(usize),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub msg_type: MessageType,
    pub timestamp: f64,
    pub payload: Value,
}

impl WireMessage {
    pub fn new(msg_type: MessageType, timestamp: f64, payload: Value) -> Self {
        WireMessage { msg_type, timestamp, payload }
    }

    pub fn with<P: Serialize>(msg_type: MessageType, timestamp: f64, payload: &P) -> Self {
        let payload = serde_json::to_value(payload).expect("payload serializes");
        WireMessage { msg_type, timestamp, payload }
    }

    pub fn error(timestamp: f64, code: &str, message: impl Into<String>) -> Self {
        Self::with(MessageType::Error, timestamp, &ErrorPayload { code: code.to_string(), message: message.into() })
    }

    pub fn parse_payload<P: for<'de> Deserialize<'de>>(&self) -> Result<P, ProtocolError> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| ProtocolError::MalformedFrame(format!("{} payload: {e}", self.msg_type)))
    }
}

/// Compact JSON body of a frame, keys sorted at every level.
pub fn encode_body(msg: &WireMessage) -> Vec<u8> {
    let mut m = Map::new();
    m.insert("payload".into(), msg.payload.clone());
    m.insert("timestamp".into(), json!(msg.timestamp));
    m.insert("type".into(), json!(msg.msg_type.as_str()));
    serde_json::to_vec(&Value::Object(m)).expect("json value serializes")
}

pub fn encode_frame(msg: &WireMessage) -> Result<Vec<u8>, ProtocolError> {
    let body = encode_body(msg);
    if body.len() > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Parses one frame body.
pub fn decode_body(body: &[u8]) -> Result<WireMessage, ProtocolError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| ProtocolError::MalformedFrame(e.to_string()))?;
    let Value::Object(mut m) = v else {
        return Err(ProtocolError::MalformedFrame("frame body is not an object".into()));
    };
    let ty = match m.remove("type") {
        Some(Value::String(s)) => s,
        _ => return Err(ProtocolError::MalformedFrame("missing string `type`".into())),
    };
    let timestamp = m
        .remove("timestamp")
        .and_then(|t| t.as_f64())
        .ok_or_else(|| ProtocolError::MalformedFrame("missing numeric `timestamp`".into()))?;
    let payload = m.remove("payload").ok_or_else(|| ProtocolError::MalformedFrame("missing `payload`".into()))?;
    Ok(WireMessage { msg_type: ty.parse()?, timestamp, payload })
}

/// Decodes exactly one complete frame.
pub fn decode_frame(bytes: &[u8]) -> Result<WireMessage, ProtocolError> {
    if bytes.len() < 4 {
        return Err(ProtocolError::MalformedFrame(format!("{} bytes is shorter than the length prefix", bytes.len())));
    }
    let n = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if n > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(n));
    }
    if bytes.len() != 4 + n {
        return Err(ProtocolError::MalformedFrame(format!("prefix says {n} bytes, {} present", bytes.len() - 4)));
    }
    decode_body(&bytes[4..])
}

/// Incremental decoder over a byte stream.
///
/// After a malformed or oversized frame it scans forward one byte at a time
/// for the next offset whose length prefix is in range and whose body starts
/// with `{`. JSON text is ASCII, so its bytes never form an in-range prefix.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    resync: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    fn header_at(&self, i: usize) -> Option<usize> {
        let h = self.buf.get(i..i + 4)?;
        Some(u32::from_be_bytes([h[0], h[1], h[2], h[3]]) as usize)
    }

    fn plausible_at(&self, i: usize) -> Option<bool> {
        let n = self.header_at(i)?;
        let first = *self.buf.get(i + 4)?;
        Some(n >= 2 && n <= MAX_FRAME_LEN && first == b'{')
    }

    /// Next message or error, or `None` when more bytes are needed.
    pub fn next_message(&mut self) -> Option<Result<WireMessage, ProtocolError>> {
        if self.resync {
            let mut i = 0;
            loop {
                match self.plausible_at(i) {
                    None => {
                        self.buf.drain(..i);
                        return None;
                    }
                    Some(true) => break,
                    Some(false) => i += 1,
                }
            }
            self.buf.drain(..i);
            self.resync = false;
        }
        let n = self.header_at(0)?;
        if n > MAX_FRAME_LEN {
            self.buf.drain(..1);
            self.resync = true;
            return Some(Err(ProtocolError::FrameTooLarge(n)));
        }
        if self.buf.len() < 4 + n {
            return None;
        }
        match decode_body(&self.buf[4..4 + n]) {
            Err(ProtocolError::MalformedFrame(e)) => {
                self.buf.drain(..1);
                self.resync = true;
                Some(Err(ProtocolError::MalformedFrame(e)))
            }
            other => {
                self.buf.drain(..4 + n);
                Some(other)
            }
        }
    }
}

// ---- payloads ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub client: String,
    pub protocol: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDescription {
    pub name: String,
    pub kind: String,
    /// First index of this joint in the articulation's `q` vector.
    pub dof_offset: usize,
    pub dof: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationDescription {
    pub id: usize,
    pub name: String,
    pub dof: usize,
    pub links: Vec<String>,
    pub joints: Vec<JointDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyDescription {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelcomePayload {
    pub protocol: u32,
    pub dt: f64,
    pub sim_rate: f64,
    pub state_broadcast_rate: f64,
    pub realtime_factor: f64,
    pub articulations: Vec<ArticulationDescription>,
    pub bodies: Vec<BodyDescription>,
}

/// STATE carries a [`SceneSnapshot`].
pub type StatePayload = SceneSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetControllerPayload {
    pub articulation: usize,
    pub controller: ControllerSpec,
    /// Replace every existing controller instead of adding one.
    #[serde(default = "yes")]
    pub replace: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodyCommandWire {
    Idle,
    Wrench { force: [f64; 3], torque: [f64; 3] },
    Velocity { linear: [f64; 3], angular: [f64; 3] },
    Pose { target: Transform },
}

/// Either a joint-controller target (`articulation` + `target`, selecting the
/// controller by index or by its exact joint list) or a free-body command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SetTargetPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<BodyCommandWire>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachPayload {
    pub body: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub break_force: Option<f64>,
    /// Release the body's active attachment instead.
    #[serde(default)]
    pub detach: bool,
}

/// Server reply to SET_CONTROLLER, SET_TARGET and ATTACH, sent with the
/// request's type; the frame timestamp is the simulation time at which the
/// command took effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequestPayload {
    pub camera: Transform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponsePayload {
    pub width: u32,
    pub height: u32,
    /// Simulation time of the rendered scene state.
    pub captured_at: f64,
    /// Base64 of the binary sensor-frame dump.
    pub data: String,
}

/// IMU request (client) carries `link`; the reply adds the reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuPayload {
    pub link: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading: Option<ImuReading>,
}

/// A representative message of each type, used for the golden frames.
pub fn example_message(t: MessageType) -> WireMessage {
    use mobilisim::control::ControlMode;
    let pose = Transform::identity();
    match t {
        MessageType::Ping => WireMessage::new(t, 0.0, json!({})),
        MessageType::Pong => WireMessage::new(t, 0.5, json!({})),
        MessageType::Hello => WireMessage::with(t, 0.0, &HelloPayload { client: "example".into(), protocol: PROTOCOL_VERSION }),
        MessageType::Welcome => WireMessage::with(
            t,
            0.0,
            &WelcomePayload {
                protocol: PROTOCOL_VERSION,
                dt: 0.002,
                sim_rate: 500.0,
                state_broadcast_rate: 50.0,
                realtime_factor: 1.0,
                articulations: vec![ArticulationDescription {
                    id: 0,
                    name: "cabinet".into(),
                    dof: 1,
                    links: vec!["body".into(), "drawer".into()],
                    joints: vec![JointDescription {
                        name: "drawer_slide".into(),
                        kind: "slider".into(),
                        dof_offset: 0,
                        dof: 1,
                        lower: vec![0.0],
                        upper: vec![0.4],
                    }],
                }],
                bodies: vec![BodyDescription { id: 0, name: "gripper".into() }],
            },
        ),
        MessageType::State => WireMessage::new(
            t,
            0.02,
            json!({
                "time": 0.02, "step": 10,
                "articulations": [{"name": "cabinet", "q": [0.125], "qd": [0.25]}],
                "bodies": [{"name": "gripper", "pose": pose, "linear_velocity": [0.25, 0.0, 0.0], "angular_velocity": [0.0, 0.0, 0.0], "attached": true}]
            }),
        ),
        MessageType::SetController => WireMessage::with(
            t,
            0.0,
            &SetControllerPayload {
                articulation: 0,
                controller: mobilisim::control::ControllerSpec::new(&["drawer_slide"], ControlMode::Velocity),
                replace: true,
            },
        ),
        MessageType::SetTarget => WireMessage::with(
            t,
            0.0,
            &SetTargetPayload { articulation: Some(0), controller: Some(0), target: Some(vec![0.25]), ..Default::default() },
        ),
        MessageType::Attach => WireMessage::with(
            t,
            0.0,
            &AttachPayload { body: 0, articulation: Some(0), link: Some("drawer_handle".into()), break_force: Some(500.0), detach: false },
        ),
        MessageType::RenderRequest => WireMessage::with(
            t,
            0.0,
            &RenderRequestPayload { camera: pose, intrinsics: Some(CameraIntrinsics { width: 2, height: 2, fx: 2.0, fy: 2.0, cx: 1.0, cy: 1.0 }) },
        ),
        MessageType::RenderResponse => {
            WireMessage::with(t, 0.25, &RenderResponsePayload { width: 1, height: 1, captured_at: 0.25, data: "TVNGMQ==".into() })
        }
        MessageType::Imu => WireMessage::with(
            t,
            0.0,
            &ImuPayload {
                link: "drawer".into(),
                reading: Some(ImuReading {
                    orientation: mobilisim::Quat::identity(),
                    angular_velocity: [0.0, 0.0, 0.0],
                    linear_acceleration: [0.0, 0.0, 9.81],
                }),
            },
        ),
        MessageType::Error => WireMessage::error(0.0, "unknown_type", "unknown message type `NOPE`"),
    }
}
