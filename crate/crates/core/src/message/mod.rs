//! Canonical, protocol-neutral envelopes and their three wire renderings.
//!
//! Every envelope can be rendered as a canonical SOAP-style XML document, a
//! REST exchange (query string or JSON body) or a length-prefixed socket
//! frame. Codecs are pure functions; [`encode`] is deterministic.

pub mod rest;
pub mod soap;
pub mod socket;

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::fault::{Fault, FaultCode};

pub use rest::{Method, RestRequest, RestResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Int,
    Float,
    Bool,
    Text,
    Bytes,
}

impl ParamKind {
    pub const ALL: [ParamKind; 5] = [
        ParamKind::Int,
        ParamKind::Float,
        ParamKind::Bool,
        ParamKind::Text,
        ParamKind::Bytes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Int => "int",
            ParamKind::Float => "float",
            ParamKind::Bool => "bool",
            ParamKind::Text => "text",
            ParamKind::Bytes => "bytes",
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown param kind `{s}`"))
    }
}

/// A typed literal. Floats are always finite.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Bytes(Vec<u8>),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn kind(&self) -> ParamKind {
        match self {
            Value::Int(_) => ParamKind::Int,
            Value::Float(_) => ParamKind::Float,
            Value::Bool(_) => ParamKind::Bool,
            Value::Text(_) => ParamKind::Text,
            Value::Bytes(_) => ParamKind::Bytes,
        }
    }

    /// Canonical text form shared by all textual grammars. Floats use the
    /// shortest decimal that parses back to the same bits.
    pub fn to_text(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => v.to_string(),
            Value::Bool(v) => v.to_string(),
            Value::Text(v) => v.clone(),
            Value::Bytes(v) => BASE64.encode(v),
        }
    }

    /// Parses canonical text as the given kind.
    pub fn parse(kind: ParamKind, text: &str) -> Result<Value, String> {
        match kind {
            ParamKind::Int => text
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| format!("`{text}` is not an int")),
            ParamKind::Float => parse_finite(text)
                .map(Value::Float)
                .ok_or_else(|| format!("`{text}` is not a finite decimal number")),
            ParamKind::Bool => match text {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => Err(format!("`{text}` is not a bool")),
            },
            ParamKind::Text => Ok(Value::Text(text.to_owned())),
            ParamKind::Bytes => BASE64
                .decode(text)
                .map(Value::Bytes)
                .map_err(|e| format!("invalid base64: {e}")),
        }
    }

    /// Best-effort typing of an untyped literal: bool, then int, then float,
    /// otherwise text.
    pub fn infer(text: &str) -> Value {
        match text {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            _ => {}
        }
        if let Ok(v) = text.parse::<i64>() {
            return Value::Int(v);
        }
        if text.bytes().any(|b| b.is_ascii_digit()) {
            if let Some(v) = parse_finite(text) {
                return Value::Float(v);
            }
        }
        Value::Text(text.to_owned())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Float(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(v) => Some(v),
            _ => None,
        }
    }
}

fn parse_finite(text: &str) -> Option<f64> {
    // Rust accepts "inf"/"NaN"; the grammar only admits decimal numbers.
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Returns true for `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamValue {
    pub name: String,
    pub value: Value,
}

impl ParamValue {
    pub fn new(name: impl Into<String>, value: Value) -> Self {
        ParamValue {
            name: name.into(),
            value,
        }
    }

    pub fn int(name: impl Into<String>, v: i64) -> Self {
        Self::new(name, Value::Int(v))
    }

    pub fn float(name: impl Into<String>, v: f64) -> Self {
        Self::new(name, Value::Float(v))
    }

    pub fn bool(name: impl Into<String>, v: bool) -> Self {
        Self::new(name, Value::Bool(v))
    }

    pub fn text(name: impl Into<String>, v: impl Into<String>) -> Self {
        Self::new(name, Value::Text(v.into()))
    }

    pub fn bytes(name: impl Into<String>, v: impl Into<Vec<u8>>) -> Self {
        Self::new(name, Value::Bytes(v.into()))
    }

    pub fn kind(&self) -> ParamKind {
        self.value.kind()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("param name `{}` is not an identifier", self.name));
        }
        match &self.value {
            Value::Float(v) if !v.is_finite() => {
                Err(format!("param `{}` is not a finite float", self.name))
            }
            Value::Text(t) if t.contains('\0') => {
                Err(format!("param `{}` contains a NUL character", self.name))
            }
            _ => Ok(()),
        }
    }
}

/// A `(name, kind)` pair from an operation signature. Grammars that do not
/// carry kinds on the wire (REST) use a list of these to type decoded values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.into(),
            kind,
        }
    }
}

fn validate_params(params: &[ParamValue]) -> Result<(), String> {
    for (i, p) in params.iter().enumerate() {
        p.validate()?;
        if params[..i].iter().any(|q| q.name == p.name) {
            return Err(format!("duplicate param `{}`", p.name));
        }
    }
    Ok(())
}

fn validate_token(field: &str, value: &str) -> Result<(), String> {
    if value.contains('\0') {
        return Err(format!("{field} contains a NUL character"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestEnvelope {
    pub message_id: String,
    /// Absent only on bind requests and on hops that do not carry it.
    pub session: Option<String>,
    pub source: String,
    /// Advisory: the router resolves the owner from the operation name.
    pub destination: String,
    pub operation: String,
    pub params: Vec<ParamValue>,
}

impl RequestEnvelope {
    /// A request with a fresh random message id.
    pub fn new(
        source: impl Into<String>,
        destination: impl Into<String>,
        operation: impl Into<String>,
        params: Vec<ParamValue>,
    ) -> Self {
        RequestEnvelope {
            message_id: new_message_id(),
            session: None,
            source: source.into(),
            destination: destination.into(),
            operation: operation.into(),
            params,
        }
    }

    pub fn with_session(mut self, session: impl Into<String>) -> Self {
        self.session = Some(session.into());
        self
    }

    pub fn param(&self, name: &str) -> Option<&Value> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.message_id.is_empty() {
            return Err("empty MessageId".into());
        }
        if self.operation.is_empty() {
            return Err("empty Operation".into());
        }
        validate_token("MessageId", &self.message_id)?;
        validate_token("Source", &self.source)?;
        validate_token("Destination", &self.destination)?;
        validate_token("Operation", &self.operation)?;
        if let Some(s) = &self.session {
            validate_token("Session", s)?;
        }
        validate_params(&self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "FAULT")]
    Fault,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::Fault => "FAULT",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "OK" => Some(Status::Ok),
            "FAULT" => Some(Status::Fault),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseEnvelope {
    pub message_id: String,
    pub correlation_id: String,
    pub status: Status,
    pub results: Vec<ParamValue>,
    pub fault: Option<Fault>,
}

impl ResponseEnvelope {
    pub fn ok(correlation_id: impl Into<String>, results: Vec<ParamValue>) -> Self {
        ResponseEnvelope {
            message_id: new_message_id(),
            correlation_id: correlation_id.into(),
            status: Status::Ok,
            results,
            fault: None,
        }
    }

    pub fn fault(correlation_id: impl Into<String>, fault: Fault) -> Self {
        ResponseEnvelope {
            message_id: new_message_id(),
            correlation_id: correlation_id.into(),
            status: Status::Fault,
            results: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn result(&self, name: &str) -> Option<&Value> {
        self.results.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn into_result(self) -> Result<Vec<ParamValue>, Fault> {
        match self.fault {
            Some(f) => Err(f),
            None => Ok(self.results),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.message_id.is_empty() {
            return Err("empty MessageId".into());
        }
        validate_token("MessageId", &self.message_id)?;
        validate_token("CorrelationId", &self.correlation_id)?;
        match (self.status, &self.fault) {
            (Status::Ok, None) => {}
            (Status::Fault, Some(f)) => {
                if !self.results.is_empty() {
                    return Err("fault response carries results".into());
                }
                validate_token("Fault", &f.detail)?;
            }
            (Status::Ok, Some(_)) => return Err("OK response carries a fault".into()),
            (Status::Fault, None) => return Err("FAULT response without fault info".into()),
        }
        validate_params(&self.results)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Request(RequestEnvelope),
    Response(ResponseEnvelope),
}

impl Envelope {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Envelope::Request(r) => r.validate(),
            Envelope::Response(r) => r.validate(),
        }
    }

    pub fn into_request(self) -> Result<RequestEnvelope, Fault> {
        match self {
            Envelope::Request(r) => Ok(r),
            Envelope::Response(_) => Err(Fault::validation("expected a request envelope")),
        }
    }

    pub fn into_response(self) -> Result<ResponseEnvelope, Fault> {
        match self {
            Envelope::Response(r) => Ok(r),
            Envelope::Request(_) => Err(Fault::validation("expected a response envelope")),
        }
    }
}

impl From<RequestEnvelope> for Envelope {
    fn from(r: RequestEnvelope) -> Self {
        Envelope::Request(r)
    }
}

impl From<ResponseEnvelope> for Envelope {
    fn from(r: ResponseEnvelope) -> Self {
        Envelope::Response(r)
    }
}

pub fn new_message_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProtocolKind {
    Soap,
    Rest,
    Socket,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Soap, ProtocolKind::Rest, ProtocolKind::Socket];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Soap => "SOAP",
            ProtocolKind::Rest => "REST",
            ProtocolKind::Socket => "SOCKET",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

/// A protocol-specific rendering of an envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// UTF-8 XML document.
    Soap(String),
    RestRequest(RestRequest),
    RestResponse(RestResponse),
    /// Complete frame including the 4-byte big-endian length prefix.
    Socket(Vec<u8>),
}

impl ProtocolMessage {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolMessage::Soap(_) => ProtocolKind::Soap,
            ProtocolMessage::RestRequest(_) | ProtocolMessage::RestResponse(_) => ProtocolKind::Rest,
            ProtocolMessage::Socket(_) => ProtocolKind::Socket,
        }
    }
}

/// Renders an envelope in the grammar of `kind`.
pub fn encode(env: &Envelope, kind: ProtocolKind) -> Result<ProtocolMessage, Fault> {
    Ok(match (kind, env) {
        (ProtocolKind::Soap, env) => ProtocolMessage::Soap(soap::encode(env)),
        (ProtocolKind::Rest, Envelope::Request(r)) => ProtocolMessage::RestRequest(rest::encode_request(r)),
        (ProtocolKind::Rest, Envelope::Response(r)) => {
            ProtocolMessage::RestResponse(rest::encode_response(r))
        }
        (ProtocolKind::Socket, env) => ProtocolMessage::Socket(socket::encode(env)),
    })
}

/// Parses a protocol message back into an envelope. REST values are typed by
/// inference; use [`decode_typed`] when the signature is known.
pub fn decode(msg: &ProtocolMessage, kind: ProtocolKind) -> Result<Envelope, Fault> {
    decode_typed(msg, kind, None)
}

/// Like [`decode`], typing REST values against `schema` when given.
pub fn decode_typed(
    msg: &ProtocolMessage,
    kind: ProtocolKind,
    schema: Option<&[ParamSpec]>,
) -> Result<Envelope, Fault> {
    if msg.kind() != kind {
        return Err(Fault::validation(format!(
            "expected a {kind} message, got {}",
            msg.kind()
        )));
    }
    let env = match msg {
        ProtocolMessage::Soap(xml) => soap::decode(xml)?,
        ProtocolMessage::RestRequest(r) => Envelope::Request(rest::decode_request(r, schema)?),
        ProtocolMessage::RestResponse(r) => Envelope::Response(rest::decode_response(r, schema)?),
        ProtocolMessage::Socket(frame) => socket::decode(frame)?,
    };
    env.validate().map_err(Fault::validation)?;
    Ok(env)
}

/// Checks well-formedness and required headers. Each diagnostic names the
/// violated rule; an empty list means the message is acceptable.
pub fn validate(msg: &ProtocolMessage) -> Vec<String> {
    match msg {
        ProtocolMessage::Soap(xml) => soap::validate(xml),
        ProtocolMessage::RestRequest(r) => rest::validate_request(r),
        ProtocolMessage::RestResponse(r) => rest::validate_response(r),
        ProtocolMessage::Socket(frame) => socket::validate(frame),
    }
}

pub(crate) fn fault_from_parts(code: &str, detail: String) -> Result<Fault, String> {
    let code = code
        .parse::<FaultCode>()
        .map_err(|_| format!("unknown fault code `{code}`"))?;
    Ok(Fault::new(code, detail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        assert!(is_identifier("mass"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn float_text_is_shortest_round_trip() {
        assert_eq!(Value::Float(5.0).to_text(), "5");
        assert_eq!(Value::Float(11.332).to_text(), "11.332");
        assert_eq!(Value::Float(0.1).to_text(), "0.1");
        for v in [1e300, -0.0, f64::MIN_POSITIVE, 5e-324, f64::MAX] {
            let back = Value::parse(ParamKind::Float, &Value::Float(v).to_text()).unwrap();
            assert_eq!(back, Value::Float(v));
        }
    }

    #[test]
    fn non_finite_floats_are_rejected() {
        for t in ["inf", "NaN", "-infinity", "", "1e999"] {
            assert!(Value::parse(ParamKind::Float, t).is_err(), "{t}");
        }
        assert!(ParamValue::float("x", f64::NAN).validate().is_err());
    }

    #[test]
    fn inference_prefers_narrow_kinds() {
        assert_eq!(Value::infer("5"), Value::Int(5));
        assert_eq!(Value::infer("5.5"), Value::Float(5.5));
        assert_eq!(Value::infer("true"), Value::Bool(true));
        assert_eq!(Value::infer("rock"), Value::Text("rock".into()));
        assert_eq!(Value::infer("e"), Value::Text("e".into()));
    }

    #[test]
    fn response_invariants() {
        let mut ok = ResponseEnvelope::ok("c", vec![ParamValue::float("v", 1.0)]);
        assert!(ok.validate().is_ok());
        ok.fault = Some(Fault::internal("x"));
        assert!(ok.validate().is_err());
        let mut bad = ResponseEnvelope::fault("c", Fault::internal("x"));
        assert!(bad.validate().is_ok());
        bad.results.push(ParamValue::int("n", 1));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn duplicate_param_names_are_rejected() {
        let env = RequestEnvelope::new(
            "rover",
            "S",
            "Op",
            vec![ParamValue::int("a", 1), ParamValue::int("a", 2)],
        );
        assert!(env.validate().is_err());
    }
}
