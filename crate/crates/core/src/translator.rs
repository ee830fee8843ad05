//! Request/response translation between the canonical envelope and a
//! service's protocol, checked against the registered signature.

use crate::fault::{Fault, FaultCode};
use crate::message::{self, Envelope, ParamSpec, ParamValue, ProtocolKind, ProtocolMessage, RequestEnvelope, ResponseEnvelope, Value};
use crate::registry::OperationSignature;

/// Coerces `value` to `spec.kind`. Only int-to-float widening is implicit.
fn coerce(value: &Value, spec: &ParamSpec) -> Option<Value> {
    if value.kind() == spec.kind {
        return Some(value.clone());
    }
    match (value, spec.kind) {
        (Value::Int(i), crate::ParamKind::Float) => Some(Value::Float(*i as f64)),
        _ => None,
    }
}

/// Checks `params` against `specs` and returns them in signature order.
pub fn conform_params(params: &[ParamValue], specs: &[ParamSpec]) -> Result<Vec<ParamValue>, Fault> {
    let mismatch = |name: &str, why: String| Fault::new(FaultCode::TypeMismatch, format!("{name}: {why}"));
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let p = params
            .iter()
            .find(|p| p.name == spec.name)
            .ok_or_else(|| mismatch(&spec.name, "missing".into()))?;
        let v = coerce(&p.value, spec)
            .ok_or_else(|| mismatch(&spec.name, format!("expected {}, got {}", spec.kind, p.kind())))?;
        out.push(ParamValue::new(spec.name.clone(), v));
    }
    if let Some(extra) = params.iter().find(|p| !specs.iter().any(|s| s.name == p.name)) {
        return Err(mismatch(&extra.name, "not a parameter of this operation".into()));
    }
    Ok(out)
}

/// Builds the service-bound message for a validated rover request.
pub fn translate_request(
    env: &RequestEnvelope,
    sig: &OperationSignature,
    target: ProtocolKind,
) -> Result<ProtocolMessage, Fault> {
    if env.operation != sig.name {
        return Err(Fault::new(
            FaultCode::UnknownOperation,
            format!("request names `{}`, signature is `{}`", env.operation, sig.name),
        ));
    }
    let outbound = RequestEnvelope {
        operation: sig.wire_name().to_owned(),
        params: conform_params(&env.params, &sig.params)?,
        ..env.clone()
    };
    message::encode(&Envelope::Request(outbound), target)
}

/// Turns a service reply into the canonical response for `request`.
pub fn translate_response(
    msg: &ProtocolMessage,
    source: ProtocolKind,
    request: &RequestEnvelope,
    returns: &[ParamSpec],
) -> Result<ResponseEnvelope, Fault> {
    let env = message::decode_typed(msg, source, Some(returns))
        .map_err(|f| Fault::translation(format!("service reply violates the {source} grammar: {}", f.detail)))?;
    let mut resp = match env {
        Envelope::Response(r) => r,
        Envelope::Request(_) => return Err(Fault::translation("service replied with a request envelope")),
    };
    if resp.correlation_id != request.message_id {
        return Err(Fault::translation(format!(
            "service reply correlates to `{}`, expected `{}`",
            resp.correlation_id, request.message_id
        )));
    }
    if resp.fault.is_none() {
        for p in &mut resp.results {
            if let Some(spec) = returns.iter().find(|s| s.name == p.name) {
                p.value = coerce(&p.value, spec).ok_or_else(|| {
                    Fault::translation(format!("result `{}` is {}, declared {}", p.name, p.kind(), spec.kind))
                })?;
            }
        }
    }
    resp.correlation_id = request.message_id.clone();
    Ok(resp)
}
