use proptest::collection::{btree_map, vec};
use proptest::prelude::*;

use rover_esb::message::rest::{Method, RestRequest, RestResponse};
use rover_esb::message::{self, Envelope, ProtocolMessage, Status};
use rover_esb::{Fault, FaultCode, ParamSpec, ParamValue, ProtocolKind, RequestEnvelope, ResponseEnvelope, Value};

const CASES: u32 = 1_000;

fn identifier() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,12}"
}

/// Arbitrary Unicode without NUL, including control characters, markup
/// characters and surrounding whitespace.
fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[ <>&\"'%=+#\\t\\r\\n\\\\a-z]{0,16}",
        Just(String::new()),
    ]
    .prop_map(|s| s.replace('\0', ""))
}

fn token() -> impl Strategy<Value = String> {
    text().prop_filter("non-empty", |s| !s.is_empty())
}

fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::Int),
        any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
        text().prop_map(Value::Text),
        vec(any::<u8>(), 0..48).prop_map(Value::Bytes),
    ]
}

fn params() -> impl Strategy<Value = Vec<ParamValue>> {
    btree_map(identifier(), value(), 0..6)
        .prop_map(|m| m.into_iter().map(|(n, v)| ParamValue::new(n, v)).collect::<Vec<_>>())
        .prop_shuffle()
}

fn request() -> impl Strategy<Value = RequestEnvelope> {
    (token(), proptest::option::of(token()), text(), text(), identifier(), params()).prop_map(
        |(message_id, session, source, destination, operation, params)| RequestEnvelope {
            message_id,
            session,
            source,
            destination,
            operation,
            params,
        },
    )
}

fn fault_code() -> impl Strategy<Value = FaultCode> {
    proptest::sample::select(FaultCode::ALL.to_vec())
}

fn response() -> impl Strategy<Value = ResponseEnvelope> {
    let ok = (token(), text(), params()).prop_map(|(message_id, correlation_id, results)| ResponseEnvelope {
        message_id,
        correlation_id,
        status: Status::Ok,
        results,
        fault: None,
    });
    let fault = (token(), text(), fault_code(), text()).prop_map(|(message_id, correlation_id, code, detail)| {
        ResponseEnvelope {
            message_id,
            correlation_id,
            status: Status::Fault,
            results: Vec::new(),
            fault: Some(Fault::new(code, detail)),
        }
    });
    prop_oneof![ok, fault]
}

fn schema(params: &[ParamValue]) -> Vec<ParamSpec> {
    params.iter().map(|p| ParamSpec::new(p.name.clone(), p.kind())).collect()
}

/// The fields every grammar must carry, with the context-supplied ones
/// (session, destination) blanked for the leaner grammars.
fn request_core(r: &RequestEnvelope, kind: ProtocolKind) -> RequestEnvelope {
    let mut core = r.clone();
    if kind != ProtocolKind::Soap {
        core.session = None;
        core.destination = String::new();
    }
    core
}

fn round_trip(env: &Envelope, kind: ProtocolKind) -> Result<Envelope, Fault> {
    let msg = message::encode(env, kind)?;
    assert_eq!(message::encode(env, kind)?, msg, "encoding is deterministic");
    assert!(message::validate(&msg).is_empty(), "{:?}", message::validate(&msg));
    let specs = match env {
        Envelope::Request(r) => schema(&r.params),
        Envelope::Response(r) => schema(&r.results),
    };
    message::decode_typed(&msg, kind, Some(&specs))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn requests_round_trip_over_soap(r in request()) {
        let back = round_trip(&Envelope::Request(r.clone()), ProtocolKind::Soap).unwrap();
        prop_assert_eq!(back, Envelope::Request(r));
    }

    #[test]
    fn requests_round_trip_over_rest(r in request()) {
        let back = round_trip(&Envelope::Request(r.clone()), ProtocolKind::Rest).unwrap().into_request().unwrap();
        prop_assert_eq!(back, request_core(&r, ProtocolKind::Rest));
    }

    #[test]
    fn requests_round_trip_over_socket(r in request()) {
        let back = round_trip(&Envelope::Request(r.clone()), ProtocolKind::Socket).unwrap().into_request().unwrap();
        prop_assert_eq!(back, request_core(&r, ProtocolKind::Socket));
    }

    #[test]
    fn responses_round_trip_over_every_protocol(r in response()) {
        for kind in ProtocolKind::ALL {
            let back = round_trip(&Envelope::Response(r.clone()), kind).unwrap();
            prop_assert_eq!(&back, &Envelope::Response(r.clone()), "{}", kind);
        }
    }

    #[test]
    fn floats_are_bit_exact(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let r = RequestEnvelope::new("s", "d", "Op", vec![ParamValue::float("x", v)]);
        for kind in ProtocolKind::ALL {
            let back = round_trip(&Envelope::Request(r.clone()), kind).unwrap().into_request().unwrap();
            prop_assert_eq!(back.params[0].value.as_f64().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn noise_never_decodes_to_an_invalid_envelope(bytes in vec(any::<u8>(), 0..256), status in 100u16..600) {
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let messages = [
            ProtocolMessage::Soap(text.clone()),
            ProtocolMessage::Socket(bytes.clone()),
            ProtocolMessage::RestRequest(RestRequest {
                method: Method::Get,
                path: format!("/invoke/{text}"),
                query: text.clone(),
                headers: vec![("x-message-id".into(), text.clone()), ("x-source".into(), "s".into())],
                body: Vec::new(),
            }),
            ProtocolMessage::RestRequest(RestRequest {
                method: Method::Post,
                path: "/invoke/Op".into(),
                query: String::new(),
                headers: vec![("x-message-id".into(), "m".into()), ("x-source".into(), "s".into())],
                body: bytes.clone(),
            }),
            ProtocolMessage::RestResponse(RestResponse {
                status,
                headers: vec![("x-message-id".into(), "m".into()), ("x-correlation-id".into(), "c".into())],
                body: bytes.clone(),
            }),
        ];
        for msg in &messages {
            match message::decode(msg, msg.kind()) {
                Ok(env) => prop_assert!(env.validate().is_ok()),
                Err(f) => prop_assert_eq!(f.code, FaultCode::Validation, "{}", f),
            }
        }
    }

    #[test]
    fn mutated_envelopes_are_rejected_or_valid(r in request(), cut in any::<prop::sample::Index>(), byte in any::<u8>()) {
        for kind in [ProtocolKind::Soap, ProtocolKind::Socket] {
            let msg = message::encode(&Envelope::Request(r.clone()), kind).unwrap();
            let mut raw = match &msg {
                ProtocolMessage::Soap(x) => x.clone().into_bytes(),
                ProtocolMessage::Socket(b) => b.clone(),
                _ => unreachable!(),
            };
            let i = cut.index(raw.len());
            raw[i] = byte;
            let mutated = match kind {
                ProtocolKind::Soap => ProtocolMessage::Soap(String::from_utf8_lossy(&raw).into_owned()),
                _ => ProtocolMessage::Socket(raw),
            };
            match message::decode(&mutated, kind) {
                Ok(env) => prop_assert!(env.validate().is_ok()),
                Err(f) => prop_assert_eq!(f.code, FaultCode::Validation),
            }
        }
    }
}

#[test]
fn trace_request_renders_as_the_expected_rest_call() {
    let r = RequestEnvelope::new(
        "rover-1",
        "SpectrometryService",
        "AnalyzeParticlesSpeed",
        vec![ParamValue::float("mass", 5.0), ParamValue::float("weight", 10.0)],
    );
    let ProtocolMessage::RestRequest(req) = message::encode(&Envelope::Request(r), ProtocolKind::Rest).unwrap() else {
        panic!("REST request expected");
    };
    assert_eq!(req.method, Method::Get);
    assert_eq!(req.target(), "/invoke/AnalyzeParticlesSpeed?mass=5&weight=10");
}

#[test]
fn rest_reply_body_decodes_to_a_float_result() {
    let resp = RestResponse {
        status: 200,
        headers: vec![("x-message-id".into(), "r".into()), ("x-correlation-id".into(), "m".into())],
        body: br#"{"velocity": 11.332}"#.to_vec(),
    };
    let env = message::decode(&ProtocolMessage::RestResponse(resp), ProtocolKind::Rest)
        .unwrap()
        .into_response()
        .unwrap();
    assert_eq!(env.status, Status::Ok);
    assert_eq!(env.results, vec![ParamValue::float("velocity", 11.332)]);
}
