//! WebSocket message schema. JSON text frames; every message carries
//! `"v": 1` and a `"type"` tag. Poses are mm and degrees on the wire.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fluoro::Polyline;
use crate::script::ScriptRow;
use crate::trajectory::TrajectoryRecord;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    DeviceInput(DeviceInput),
    CarmDelta { alpha: f64, beta: f64, gamma: f64 },
    SessionControl(SessionControl),
    /// Ask for a fluoro frame at the current C-arm pose.
    FluoroRequest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceInput {
    pub hc_px: f64,
    pub hc_py: f64,
    pub hc_pz: f64,
    pub hc_qa: f64,
    pub hc_qb: f64,
    pub hc_qg: f64,
    pub engaged: bool,
    #[serde(default)]
    pub grip: Option<f64>,
    /// mm/s and deg/s; all six or none.
    #[serde(default)]
    pub twist: Option<[f64; 6]>,
}

impl DeviceInput {
    /// The script row this input corresponds to at time `t`. The engine
    /// consumes inputs through this row so a recorded session replays
    /// bit for bit.
    pub fn to_row(&self, t: f64) -> ScriptRow {
        let mut row = ScriptRow {
            t,
            hc_px: self.hc_px,
            hc_py: self.hc_py,
            hc_pz: self.hc_pz,
            hc_qa: self.hc_qa,
            hc_qb: self.hc_qb,
            hc_qg: self.hc_qg,
            engaged: self.engaged,
            grip: self.grip,
            hc_vx: None,
            hc_vy: None,
            hc_vz: None,
            hc_wx: None,
            hc_wy: None,
            hc_wz: None,
        };
        if let Some(tw) = self.twist {
            row.set_twist_mm_deg(tw);
        }
        row
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionControl {
    Pause,
    Resume,
    Reset,
    SetParam { name: String, value: f64 },
}

/// Scene parameters adjustable at run time.
pub const SETTABLE_PARAMS: &[&str] = &[
    "max_v",
    "max_w",
    "k",
    "c",
    "f_max",
    "linear_stiffness",
    "linear_damping",
    "linear_force_limit",
    "rotary_stiffness",
    "rotary_damping",
    "rotary_force_limit",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit intensities.
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(TrajectoryRecord),
    FluoroFrame {
        /// C-arm extrinsic X-Y-Z angles, deg.
        carm: [f64; 3],
        mm_per_px: f64,
        overlay: Vec<Polyline>,
        raster: Raster,
    },
    Fault { code: FaultCode, detail: String },
    Ack { action: String, tick: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCode {
    MalformedMessage,
    UnsupportedVersion,
    UnknownType,
    InvalidValue,
    InputTokenHeld,
    Unreachable,
    KinematicsFault,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{code:?}: {detail}")]
pub struct ProtocolFault {
    pub code: FaultCode,
    pub detail: String,
}

impl ProtocolFault {
    pub fn new(code: FaultCode, detail: impl Into<String>) -> Self {
        Self { code, detail: detail.into() }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Fault { code: self.code, detail: self.detail.clone() }
    }
}

const CLIENT_TYPES: &[&str] = &["device_input", "carm_delta", "session_control", "fluoro_request"];

/// Parses and validates one client frame.
pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolFault> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| ProtocolFault::new(FaultCode::MalformedMessage, e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ProtocolFault::new(FaultCode::MalformedMessage, "message must be a JSON object"))?;
    match obj.remove("v") {
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(ProtocolFault::new(FaultCode::UnsupportedVersion, format!("unsupported version {v}"))),
        None => return Err(ProtocolFault::new(FaultCode::UnsupportedVersion, "missing \"v\"")),
    }
    match obj.get("type").and_then(Value::as_str) {
        Some(t) if CLIENT_TYPES.contains(&t) => {}
        Some(t) => return Err(ProtocolFault::new(FaultCode::UnknownType, format!("unknown message type {t:?}"))),
        None => return Err(ProtocolFault::new(FaultCode::MalformedMessage, "missing \"type\"")),
    }
    let msg: ClientMessage =
        serde_json::from_value(value).map_err(|e| ProtocolFault::new(FaultCode::MalformedMessage, e.to_string()))?;
    validate(&msg)?;
    Ok(msg)
}

fn validate(msg: &ClientMessage) -> Result<(), ProtocolFault> {
    let bad = |m: String| Err(ProtocolFault::new(FaultCode::InvalidValue, m));
    match msg {
        ClientMessage::DeviceInput(d) => {
            let pose = [d.hc_px, d.hc_py, d.hc_pz, d.hc_qa, d.hc_qb, d.hc_qg];
            if pose.iter().any(|v| !v.is_finite()) {
                return bad("pose values must be finite".into());
            }
            if let Some(g) = d.grip {
                if !(0.0..=1.0).contains(&g) {
                    return bad(format!("grip {g} outside [0, 1]"));
                }
            }
            if d.twist.is_some_and(|t| t.iter().any(|v| !v.is_finite())) {
                return bad("twist values must be finite".into());
            }
        }
        ClientMessage::CarmDelta { alpha, beta, gamma } => {
            if [alpha, beta, gamma].iter().any(|v| !v.is_finite()) {
                return bad("angles must be finite".into());
            }
        }
        ClientMessage::SessionControl(SessionControl::SetParam { name, value }) => {
            if !SETTABLE_PARAMS.contains(&name.as_str()) {
                return bad(format!("unknown parameter {name:?}"));
            }
            if !value.is_finite() {
                return bad("parameter value must be finite".into());
            }
        }
        _ => {}
    }
    Ok(())
}

/// Serializes a client message with the version field.
pub fn encode_client(msg: &ClientMessage) -> String {
    with_version(serde_json::to_value(msg).expect("messages serialize"))
}

/// Serializes a server message with the version field.
pub fn encode_server(msg: &ServerMessage) -> String {
    with_version(serde_json::to_value(msg).expect("messages serialize"))
}

fn with_version(mut v: Value) -> String {
    if let Value::Object(m) = &mut v {
        m.insert("v".into(), Value::from(PROTOCOL_VERSION));
    }
    v.to_string()
}

/// Parses a server frame; for clients and tests.
pub fn decode_server(text: &str) -> Result<ServerMessage, ProtocolFault> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| ProtocolFault::new(FaultCode::MalformedMessage, e.to_string()))?;
    match value.as_object_mut().and_then(|o| o.remove("v")) {
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        _ => return Err(ProtocolFault::new(FaultCode::UnsupportedVersion, "bad or missing \"v\"")),
    }
    serde_json::from_value(value).map_err(|e| ProtocolFault::new(FaultCode::MalformedMessage, e.to_string()))
}
