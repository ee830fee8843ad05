//! REST grammar.
//!
//! Requests are `GET /invoke/{operation}?{name}={value}&…` when every param
//! is scalar and `POST /invoke/{operation}` with a JSON object body when any
//! param is bytes. Message id and source travel in `X-Message-Id` /
//! `X-Source` headers. Responses are `200` plus a flat JSON object, or a
//! `4xx/5xx` status plus `{"fault": code, "detail": …}`.
//!
//! Session and destination are not carried: the adapter has already picked
//! the service. Param kinds are not carried either and are restored from the
//! operation signature when one is supplied.

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde_json::{Map, Number, Value as Json};

use super::{fault_from_parts, ParamKind, ParamSpec, ParamValue, RequestEnvelope, ResponseEnvelope, Status, Value};
use crate::fault::Fault;

/// Everything except RFC 3986 unreserved characters is escaped.
pub const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub const INVOKE_PREFIX: &str = "/invoke/";
pub const HDR_MESSAGE_ID: &str = "X-Message-Id";
pub const HDR_SOURCE: &str = "X-Source";
pub const HDR_CORRELATION_ID: &str = "X-Correlation-Id";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestRequest {
    pub method: Method,
    pub path: String,
    /// Raw, percent-encoded query string without the leading `?`.
    pub query: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl RestRequest {
    /// Path plus query, as it appears on the request line.
    pub fn target(&self) -> String {
        if self.query.is_empty() {
            self.path.clone()
        } else {
            format!("{}?{}", self.path, self.query)
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl RestResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

fn find_header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

pub fn pct(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

pub fn unpct(s: &str) -> Result<String, String> {
    percent_decode_str(s)
        .decode_utf8()
        .map(|c| c.into_owned())
        .map_err(|_| format!("`{s}` does not percent-decode to UTF-8"))
}

pub fn encode_request(env: &RequestEnvelope) -> RestRequest {
    let headers = vec![
        (HDR_MESSAGE_ID.to_string(), pct(&env.message_id)),
        (HDR_SOURCE.to_string(), pct(&env.source)),
    ];
    let path = format!("{INVOKE_PREFIX}{}", pct(&env.operation));
    if env.params.iter().any(|p| p.kind() == ParamKind::Bytes) {
        RestRequest {
            method: Method::Post,
            path,
            query: String::new(),
            headers,
            body: json_object(&env.params).into_bytes(),
        }
    } else {
        let query = env
            .params
            .iter()
            .map(|p| format!("{}={}", pct(&p.name), pct(&p.value.to_text())))
            .collect::<Vec<_>>()
            .join("&");
        RestRequest {
            method: Method::Get,
            path,
            query,
            headers,
            body: Vec::new(),
        }
    }
}

pub fn encode_response(env: &ResponseEnvelope) -> RestResponse {
    let headers = vec![
        (HDR_MESSAGE_ID.to_string(), pct(&env.message_id)),
        (HDR_CORRELATION_ID.to_string(), pct(&env.correlation_id)),
        ("Content-Type".to_string(), "application/json".to_string()),
    ];
    match &env.fault {
        Some(f) => {
            let mut obj = Map::new();
            obj.insert("fault".into(), Json::String(f.code.as_str().into()));
            obj.insert("detail".into(), Json::String(f.detail.clone()));
            RestResponse {
                status: f.code.http_status(),
                headers,
                body: Json::Object(obj).to_string().into_bytes(),
            }
        }
        None => RestResponse {
            status: 200,
            headers,
            body: json_object(&env.results).into_bytes(),
        },
    }
}

fn json_object(params: &[ParamValue]) -> String {
    let obj: Map<String, Json> = params
        .iter()
        .map(|p| (p.name.clone(), to_json(&p.value)))
        .collect();
    Json::Object(obj).to_string()
}

fn to_json(v: &Value) -> Json {
    match v {
        Value::Int(i) => Json::Number((*i).into()),
        Value::Float(f) => Number::from_f64(*f).map(Json::Number).unwrap_or(Json::Null),
        Value::Bool(b) => Json::Bool(*b),
        Value::Text(_) | Value::Bytes(_) => Json::String(v.to_text()),
    }
}

fn from_json(name: &str, json: &Json, kind: Option<ParamKind>) -> Result<Value, String> {
    let mismatch = |k: ParamKind| format!("`{name}` is not a JSON {k}");
    match kind {
        None => match json {
            Json::Bool(b) => Ok(Value::Bool(*b)),
            Json::Number(n) if n.is_i64() => Ok(Value::Int(n.as_i64().expect("is_i64"))),
            Json::Number(n) => n
                .as_f64()
                .filter(|f| f.is_finite())
                .map(Value::Float)
                .ok_or_else(|| mismatch(ParamKind::Float)),
            Json::String(s) => Ok(Value::Text(s.clone())),
            _ => Err(format!("`{name}` must be a scalar")),
        },
        Some(ParamKind::Int) => json.as_i64().map(Value::Int).ok_or_else(|| mismatch(ParamKind::Int)),
        Some(ParamKind::Float) => match json {
            Json::Number(n) => n
                .as_f64()
                .filter(|f| f.is_finite())
                .map(Value::Float)
                .ok_or_else(|| mismatch(ParamKind::Float)),
            _ => Err(mismatch(ParamKind::Float)),
        },
        Some(ParamKind::Bool) => json.as_bool().map(Value::Bool).ok_or_else(|| mismatch(ParamKind::Bool)),
        Some(k @ (ParamKind::Text | ParamKind::Bytes)) => match json {
            Json::String(s) => Value::parse(k, s),
            _ => Err(mismatch(k)),
        },
    }
}

fn kind_for(schema: Option<&[ParamSpec]>, name: &str) -> Option<ParamKind> {
    schema.and_then(|s| s.iter().find(|p| p.name == name).map(|p| p.kind))
}

fn typed(schema: Option<&[ParamSpec]>, name: &str, text: &str) -> Result<Value, String> {
    match kind_for(schema, name) {
        Some(kind) => Value::parse(kind, text).map_err(|e| format!("`{name}`: {e}")),
        None => Ok(Value::infer(text)),
    }
}

/// Splits a raw query string into percent-decoded pairs.
pub fn parse_query(query: &str) -> Result<Vec<(String, String)>, String> {
    if query.is_empty() {
        return Ok(Vec::new());
    }
    query
        .split('&')
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("query pair `{pair}` has no `=`"))?;
            Ok((unpct(k)?, unpct(v)?))
        })
        .collect()
}

fn parse_object(body: &[u8]) -> Result<Map<String, Json>, String> {
    match serde_json::from_slice::<Json>(body) {
        Ok(Json::Object(m)) => Ok(m),
        Ok(_) => Err("body must be a JSON object".into()),
        Err(e) => Err(format!("invalid JSON body: {e}")),
    }
}

fn required_header<'a>(headers: &'a [(String, String)], name: &str) -> Result<&'a str, String> {
    find_header(headers, name).ok_or_else(|| format!("missing required header {name}"))
}

pub fn decode_request(req: &RestRequest, schema: Option<&[ParamSpec]>) -> Result<RequestEnvelope, Fault> {
    let message_id = unpct(required_header(&req.headers, HDR_MESSAGE_ID).map_err(Fault::validation)?)
        .map_err(Fault::validation)?;
    let source = unpct(required_header(&req.headers, HDR_SOURCE).map_err(Fault::validation)?)
        .map_err(Fault::validation)?;
    let operation = req
        .path
        .strip_prefix(INVOKE_PREFIX)
        .ok_or_else(|| Fault::validation(format!("path must start with {INVOKE_PREFIX}")))
        .and_then(|op| unpct(op).map_err(Fault::validation))?;
    let params = match req.method {
        Method::Get => parse_query(&req.query)
            .map_err(Fault::validation)?
            .into_iter()
            .map(|(name, text)| Ok(ParamValue::new(name.clone(), typed(schema, &name, &text)?)))
            .collect::<Result<Vec<_>, String>>()
            .map_err(Fault::validation)?,
        Method::Post => parse_object(&req.body)
            .map_err(Fault::validation)?
            .iter()
            .map(|(name, json)| Ok(ParamValue::new(name.clone(), from_json(name, json, kind_for(schema, name))?)))
            .collect::<Result<Vec<_>, String>>()
            .map_err(Fault::validation)?,
    };
    Ok(RequestEnvelope {
        message_id,
        session: None,
        source,
        destination: String::new(),
        operation,
        params,
    })
}

pub fn decode_response(resp: &RestResponse, schema: Option<&[ParamSpec]>) -> Result<ResponseEnvelope, Fault> {
    let message_id = unpct(required_header(&resp.headers, HDR_MESSAGE_ID).map_err(Fault::validation)?)
        .map_err(Fault::validation)?;
    let correlation_id = unpct(required_header(&resp.headers, HDR_CORRELATION_ID).map_err(Fault::validation)?)
        .map_err(Fault::validation)?;
    let obj = parse_object(&resp.body).map_err(Fault::validation)?;
    if (200..300).contains(&resp.status) {
        let results = obj
            .iter()
            .map(|(name, json)| Ok(ParamValue::new(name.clone(), from_json(name, json, kind_for(schema, name))?)))
            .collect::<Result<Vec<_>, String>>()
            .map_err(Fault::validation)?;
        Ok(ResponseEnvelope {
            message_id,
            correlation_id,
            status: Status::Ok,
            results,
            fault: None,
        })
    } else {
        let code = obj
            .get("fault")
            .and_then(Json::as_str)
            .ok_or_else(|| Fault::validation("fault body lacks a `fault` code"))?;
        let detail = obj.get("detail").and_then(Json::as_str).unwrap_or_default();
        let fault = fault_from_parts(code, detail.to_owned()).map_err(Fault::validation)?;
        Ok(ResponseEnvelope {
            message_id,
            correlation_id,
            status: Status::Fault,
            results: Vec::new(),
            fault: Some(fault),
        })
    }
}

pub fn validate_request(req: &RestRequest) -> Vec<String> {
    let mut diags = Vec::new();
    for h in [HDR_MESSAGE_ID, HDR_SOURCE] {
        if req.header(h).is_none() {
            diags.push(format!("missing required header {h}"));
        }
    }
    match req.path.strip_prefix(INVOKE_PREFIX) {
        Some("") | None => diags.push(format!("path must be {INVOKE_PREFIX}{{operation}}")),
        Some(_) => {}
    }
    match req.method {
        Method::Get => {
            if let Err(e) = parse_query(&req.query) {
                diags.push(format!("unparseable query: {e}"));
            }
        }
        Method::Post => {
            if let Err(e) = parse_object(&req.body) {
                diags.push(e);
            }
        }
    }
    diags
}

pub fn validate_response(resp: &RestResponse) -> Vec<String> {
    let mut diags = Vec::new();
    for h in [HDR_MESSAGE_ID, HDR_CORRELATION_ID] {
        if resp.header(h).is_none() {
            diags.push(format!("missing required header {h}"));
        }
    }
    match parse_object(&resp.body) {
        Err(e) => diags.push(e),
        Ok(obj) if !(200..300).contains(&resp.status) => match obj.get("fault").and_then(Json::as_str) {
            None => diags.push("fault body lacks a `fault` code".into()),
            Some(code) if code.parse::<crate::fault::FaultCode>().is_err() => {
                diags.push(format!("unknown fault code `{code}`"))
            }
            Some(_) => {}
        },
        Ok(_) => {}
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::FaultCode;

    fn trace() -> RequestEnvelope {
        RequestEnvelope {
            message_id: "m-1".into(),
            session: Some("s".into()),
            source: "rover-1".into(),
            destination: "SpectrometryService".into(),
            operation: "AnalyzeParticlesSpeed".into(),
            params: vec![ParamValue::float("mass", 5.0), ParamValue::float("weight", 10.0)],
        }
    }

    #[test]
    fn scalar_params_go_in_the_query_string() {
        let req = encode_request(&trace());
        assert_eq!(req.method, Method::Get);
        assert_eq!(req.path, "/invoke/AnalyzeParticlesSpeed");
        assert_eq!(req.query, "mass=5&weight=10");
        assert_eq!(req.target(), "/invoke/AnalyzeParticlesSpeed?mass=5&weight=10");
        assert!(req.body.is_empty());
    }

    #[test]
    fn bytes_params_switch_to_a_post_body() {
        let mut env = trace();
        env.params.push(ParamValue::bytes("blob", vec![0u8, 1, 255]));
        let req = encode_request(&env);
        assert_eq!(req.method, Method::Post);
        assert!(req.query.is_empty());
        assert_eq!(
            String::from_utf8(req.body.clone()).unwrap(),
            r#"{"mass":5.0,"weight":10.0,"blob":"AAH/"}"#
        );
        let schema = [
            ParamSpec::new("mass", ParamKind::Float),
            ParamSpec::new("weight", ParamKind::Float),
            ParamSpec::new("blob", ParamKind::Bytes),
        ];
        let back = decode_request(&req, Some(&schema)).unwrap();
        assert_eq!(back.params, env.params);
    }

    #[test]
    fn query_values_are_percent_encoded() {
        let mut env = trace();
        env.params = vec![ParamValue::text("id", "a b&c=d/é")];
        let req = encode_request(&env);
        assert_eq!(req.query, "id=a%20b%26c%3Dd%2F%C3%A9");
        assert_eq!(decode_request(&req, None).unwrap().params, env.params);
    }

    #[test]
    fn untyped_decoding_infers_kinds() {
        let req = encode_request(&trace());
        let back = decode_request(&req, None).unwrap();
        assert_eq!(back.params, vec![ParamValue::int("mass", 5), ParamValue::int("weight", 10)]);
        let schema = [
            ParamSpec::new("mass", ParamKind::Float),
            ParamSpec::new("weight", ParamKind::Float),
        ];
        assert_eq!(decode_request(&req, Some(&schema)).unwrap().params, trace().params);
    }

    #[test]
    fn velocity_reply_decodes() {
        let resp = RestResponse {
            status: 200,
            headers: vec![
                (HDR_MESSAGE_ID.into(), "r-1".into()),
                (HDR_CORRELATION_ID.into(), "m-1".into()),
            ],
            body: br#"{"velocity": 11.332}"#.to_vec(),
        };
        let env = decode_response(&resp, None).unwrap();
        assert_eq!(env.status, Status::Ok);
        assert_eq!(env.results, vec![ParamValue::float("velocity", 11.332)]);
        assert_eq!(env.correlation_id, "m-1");
    }

    #[test]
    fn fault_replies_carry_code_and_status() {
        let env = ResponseEnvelope::fault("m-1", Fault::new(FaultCode::Validation, "mass must be > 0"));
        let resp = encode_response(&env);
        assert_eq!(resp.status, 400);
        let back = decode_response(&resp, None).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn malformed_inputs_are_validation_errors() {
        let mut req = encode_request(&trace());
        req.query = "mass".into();
        assert_eq!(decode_request(&req, None).unwrap_err().code, FaultCode::Validation);
        assert_eq!(validate_request(&req).len(), 1);
        req.query = "mass=%FF".into();
        assert!(decode_request(&req, None).is_err());

        let resp = RestResponse {
            status: 200,
            headers: vec![
                (HDR_MESSAGE_ID.into(), "r".into()),
                (HDR_CORRELATION_ID.into(), "m".into()),
            ],
            body: b"{not json".to_vec(),
        };
        assert_eq!(decode_response(&resp, None).unwrap_err().code, FaultCode::Validation);
    }

    #[test]
    fn typed_decoding_rejects_wrong_kinds() {
        let req = encode_request(&RequestEnvelope {
            params: vec![ParamValue::text("mass", "abc")],
            ..trace()
        });
        let schema = [ParamSpec::new("mass", ParamKind::Float)];
        assert!(decode_request(&req, Some(&schema)).is_err());
    }
}
