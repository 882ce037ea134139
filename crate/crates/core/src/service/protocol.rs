//! JSON messages exchanged with the control panel.
//!
//! Client to service: `{"id": <any>, "cmd": "<name>", "params": {...}}`.
//! Service to client: replies `{"id", "ok", "payload" | "error"}` and events
//! `{"seq", "event", "time", "data"}` with strictly increasing `seq`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calibration::ReferenceLevel;
use crate::error::{Error, Result};
use crate::session::SpecUpdate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default)]
    pub id: Value,
    pub cmd: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    /// Finer cause when `code` is a category, e.g. `not-saved` under `invalid-state`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        match e {
            Error::NotSaved(_) | Error::AnalysisPending(_) => ErrorBody {
                code: "invalid-state".into(),
                reason: Some(e.code().into()),
                message: e.to_string(),
            },
            _ => ErrorBody {
                code: e.code().into(),
                reason: None,
                message: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Reply {
    pub fn ok(id: Value, payload: Value) -> Self {
        Reply {
            id,
            ok: true,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn err(id: Value, e: &Error) -> Self {
        Reply {
            id,
            ok: false,
            payload: None,
            error: Some(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub event: String,
    /// Seconds since the service started.
    pub time: f64,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    ListDevices,
    SelectDevice { name: String },
    CalibStart,
    CalibStop,
    BindReference { reference: ReferenceLevel },
    ResetCalibration,
    SetSpec(SpecUpdate),
    SaveTestSignal,
    UpdateSettings { path: PathBuf },
    VoiceCheckStart,
    VoiceCheckStop,
    TestStart,
    TestStop,
    Play,
    PlayStop,
    Save,
    Memo5s,
    GetAnalysis { artifact: Option<String> },
    GetState,
    ListArtifacts,
}

#[derive(Deserialize)]
struct NameParams {
    name: String,
}

#[derive(Deserialize)]
struct ReferenceParams {
    reference: f64,
}

#[derive(Deserialize)]
struct PathParams {
    path: PathBuf,
}

#[derive(Deserialize, Default)]
struct ArtifactParams {
    #[serde(default)]
    artifact: Option<String>,
}

fn params<T: serde::de::DeserializeOwned>(cmd: &str, p: &Value) -> Result<T> {
    let p = if p.is_null() { Value::Object(Default::default()) } else { p.clone() };
    serde_json::from_value(p).map_err(|e| Error::InvalidInput(format!("{cmd}: {e}")))
}

impl Command {
    pub const NAMES: &'static [&'static str] = &[
        "list_devices",
        "select_device",
        "calib_start",
        "calib_stop",
        "bind_reference",
        "reset_calibration",
        "set_spec",
        "save_test_signal",
        "update_settings",
        "voice_check_start",
        "voice_check_stop",
        "test_start",
        "test_stop",
        "play",
        "play_stop",
        "save",
        "memo5s",
        "get_analysis",
        "get_state",
        "list_artifacts",
    ];

    pub fn parse(cmd: &str, p: &Value) -> Result<Command> {
        Ok(match cmd {
            "list_devices" => Command::ListDevices,
            "select_device" => Command::SelectDevice {
                name: params::<NameParams>(cmd, p)?.name,
            },
            "calib_start" => Command::CalibStart,
            "calib_stop" => Command::CalibStop,
            "bind_reference" => Command::BindReference {
                reference: ReferenceLevel::from_db(params::<ReferenceParams>(cmd, p)?.reference)?,
            },
            "reset_calibration" => Command::ResetCalibration,
            "set_spec" => Command::SetSpec(params(cmd, p)?),
            "save_test_signal" => Command::SaveTestSignal,
            "update_settings" => Command::UpdateSettings {
                path: params::<PathParams>(cmd, p)?.path,
            },
            "voice_check_start" => Command::VoiceCheckStart,
            "voice_check_stop" => Command::VoiceCheckStop,
            "test_start" => Command::TestStart,
            "test_stop" => Command::TestStop,
            "play" => Command::Play,
            "play_stop" => Command::PlayStop,
            "save" => Command::Save,
            "memo5s" => Command::Memo5s,
            "get_analysis" => Command::GetAnalysis {
                artifact: params::<ArtifactParams>(cmd, p)?.artifact,
            },
            "get_state" => Command::GetState,
            "list_artifacts" => Command::ListArtifacts,
            other => return Err(Error::UnknownCommand(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::ListDevices => "list_devices",
            Command::SelectDevice { .. } => "select_device",
            Command::CalibStart => "calib_start",
            Command::CalibStop => "calib_stop",
            Command::BindReference { .. } => "bind_reference",
            Command::ResetCalibration => "reset_calibration",
            Command::SetSpec(_) => "set_spec",
            Command::SaveTestSignal => "save_test_signal",
            Command::UpdateSettings { .. } => "update_settings",
            Command::VoiceCheckStart => "voice_check_start",
            Command::VoiceCheckStop => "voice_check_stop",
            Command::TestStart => "test_start",
            Command::TestStop => "test_stop",
            Command::Play => "play",
            Command::PlayStop => "play_stop",
            Command::Save => "save",
            Command::Memo5s => "memo5s",
            Command::GetAnalysis { .. } => "get_analysis",
            Command::GetState => "get_state",
            Command::ListArtifacts => "list_artifacts",
        }
    }

    /// Commands that leave a line in the action log when they succeed.
    pub fn changes_state(&self) -> bool {
        !matches!(
            self,
            Command::ListDevices | Command::GetAnalysis { .. } | Command::GetState | Command::ListArtifacts
        )
    }
}
