//! Length-prefixed socket frames.
//!
//! A frame is a 4-byte big-endian payload length followed by UTF-8 text:
//!
//! ```text
//! REQ {message_id} {source} {operation}
//! {name} {kind} {value}
//! ```
//!
//! or `RSP {message_id} {correlation_id} {OK|FAULT}` followed by result lines,
//! or by one `FAULT {code} {detail}` line when the status is FAULT. Every
//! token except the kind and code is percent-encoded; each line ends in LF.

use tokio::io::{AsyncReadExt, AsyncWriteExt};

use super::rest::{pct, unpct};
use super::{fault_from_parts, Envelope, ParamKind, ParamValue, RequestEnvelope, ResponseEnvelope, Status, Value};
use crate::fault::Fault;

/// Frames larger than this are refused on read.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

pub fn encode(env: &Envelope) -> Vec<u8> {
    let mut text = String::new();
    match env {
        Envelope::Request(r) => {
            text.push_str(&format!(
                "REQ {} {} {}\n",
                pct(&r.message_id),
                pct(&r.source),
                pct(&r.operation)
            ));
            push_params(&mut text, &r.params);
        }
        Envelope::Response(r) => {
            text.push_str(&format!(
                "RSP {} {} {}\n",
                pct(&r.message_id),
                pct(&r.correlation_id),
                r.status.as_str()
            ));
            match &r.fault {
                Some(f) => text.push_str(&format!("FAULT {} {}\n", f.code, pct(&f.detail))),
                None => push_params(&mut text, &r.results),
            }
        }
    }
    frame(text.as_bytes())
}

fn push_params(text: &mut String, params: &[ParamValue]) {
    for p in params {
        text.push_str(&format!("{} {} {}\n", p.name, p.kind(), pct(&p.value.to_text())));
    }
}

/// Prefixes a payload with its 4-byte big-endian length.
pub fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Returns the payload of a single complete frame.
pub fn unframe(bytes: &[u8]) -> Result<&[u8], String> {
    if bytes.len() < 4 {
        return Err(format!("frame shorter than its 4-byte length prefix ({} bytes)", bytes.len()));
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    let available = bytes.len() - 4;
    if declared > available {
        return Err(format!("truncated frame: declared {declared} bytes, {available} available"));
    }
    if declared < available {
        return Err(format!("trailing bytes after frame: declared {declared}, {available} present"));
    }
    Ok(&bytes[4..])
}

fn parse_lines(payload: &[u8]) -> Result<Envelope, String> {
    let text = std::str::from_utf8(payload).map_err(|_| "frame payload is not UTF-8".to_string())?;
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| "frame payload must end with a newline".to_string())?;
    let mut lines = body.split('\n');
    let head: Vec<&str> = lines.next().unwrap_or_default().split(' ').collect();
    match head.as_slice() {
        ["REQ", id, source, op] => Ok(Envelope::Request(RequestEnvelope {
            message_id: unpct(id)?,
            session: None,
            source: unpct(source)?,
            destination: String::new(),
            operation: unpct(op)?,
            params: lines.map(parse_param).collect::<Result<_, _>>()?,
        })),
        ["RSP", id, corr, status] => {
            let status = Status::parse(status).ok_or_else(|| format!("bad status `{status}`"))?;
            let (results, fault) = match status {
                Status::Ok => (lines.map(parse_param).collect::<Result<_, _>>()?, None),
                Status::Fault => {
                    let line = lines.next().ok_or("FAULT frame without a FAULT line")?;
                    if lines.next().is_some() {
                        return Err("FAULT frame has lines after the FAULT line".into());
                    }
                    let parts: Vec<&str> = line.split(' ').collect();
                    match parts.as_slice() {
                        ["FAULT", code, detail] => (Vec::new(), Some(fault_from_parts(code, unpct(detail)?)?)),
                        _ => return Err(format!("malformed FAULT line `{line}`")),
                    }
                }
            };
            Ok(Envelope::Response(ResponseEnvelope {
                message_id: unpct(id)?,
                correlation_id: unpct(corr)?,
                status,
                results,
                fault,
            }))
        }
        _ => Err("first line must be `REQ id source operation` or `RSP id correlation status`".into()),
    }
}

fn parse_param(line: &str) -> Result<ParamValue, String> {
    let parts: Vec<&str> = line.split(' ').collect();
    let [name, kind, value] = parts.as_slice() else {
        return Err(format!("param line `{line}` must be `name kind value`"));
    };
    let kind: ParamKind = kind.parse()?;
    let value = Value::parse(kind, &unpct(value)?).map_err(|e| format!("`{name}`: {e}"))?;
    Ok(ParamValue::new(*name, value))
}

pub fn decode(bytes: &[u8]) -> Result<Envelope, Fault> {
    let payload = unframe(bytes).map_err(Fault::validation)?;
    parse_lines(payload).map_err(Fault::validation)
}

pub fn validate(bytes: &[u8]) -> Vec<String> {
    match unframe(bytes).and_then(parse_lines) {
        Ok(env) => env.validate().err().into_iter().collect(),
        Err(e) => vec![e],
    }
}

/// Reads one frame (prefix included in the returned buffer).
pub async fn read_frame<R: AsyncReadExt + Unpin>(reader: &mut R) -> std::io::Result<Vec<u8>> {
    let mut prefix = [0u8; 4];
    reader.read_exact(&mut prefix).await?;
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len + 4];
    buf[..4].copy_from_slice(&prefix);
    reader.read_exact(&mut buf[4..]).await?;
    Ok(buf)
}

/// Writes an already-framed buffer and flushes.
pub async fn write_frame<W: AsyncWriteExt + Unpin>(writer: &mut W, frame: &[u8]) -> std::io::Result<()> {
    writer.write_all(frame).await?;
    writer.flush().await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::FaultCode;

    #[test]
    fn request_frame_layout() {
        let env = RequestEnvelope {
            message_id: "m1".into(),
            session: Some("dropped".into()),
            source: "rover-1".into(),
            destination: "EnvironmentService".into(),
            operation: "MeasurePressure".into(),
            params: vec![ParamValue::text("note", "a b")],
        };
        let bytes = encode(&env.clone().into());
        let text = "REQ m1 rover-1 MeasurePressure\nnote text a%20b\n";
        assert_eq!(&bytes[..4], &(text.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], text.as_bytes());
        let back = decode(&bytes).unwrap().into_request().unwrap();
        assert_eq!(back.session, None);
        assert_eq!(back.destination, "");
        assert_eq!(back.params, env.params);
    }

    #[test]
    fn truncated_frame_is_a_validation_error() {
        let bytes = encode(&ResponseEnvelope::ok("m1", vec![ParamValue::float("v", 1.5)]).into());
        let err = decode(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(err.code, FaultCode::Validation);
        assert!(err.detail.contains("truncated"));
        assert!(decode(&[0, 0]).is_err());
        let mut long = bytes.clone();
        long.push(b'x');
        assert!(decode(&long).is_err());
    }

    #[test]
    fn fault_frames_carry_the_code() {
        let env = ResponseEnvelope::fault("m1", Fault::new(FaultCode::Timeout, "slow sensor"));
        let bytes = encode(&env.clone().into());
        assert!(std::str::from_utf8(&bytes[4..]).unwrap().ends_with("FAULT TIMEOUT slow%20sensor\n"));
        assert_eq!(decode(&bytes).unwrap(), Envelope::Response(env));
    }

    #[test]
    fn empty_strings_survive() {
        let env = RequestEnvelope {
            message_id: "m".into(),
            session: None,
            source: String::new(),
            destination: String::new(),
            operation: "Op".into(),
            params: vec![ParamValue::text("t", "")],
        };
        let back = decode(&encode(&env.clone().into())).unwrap();
        assert_eq!(back, Envelope::Request(env));
    }

    #[tokio::test]
    async fn frames_travel_over_a_stream() {
        let (mut a, mut b) = tokio::io::duplex(64);
        let bytes = encode(&ResponseEnvelope::ok("m1", vec![ParamValue::bool("ok", true)]).into());
        let expected = bytes.clone();
        let writer = tokio::spawn(async move { write_frame(&mut a, &bytes).await });
        let got = read_frame(&mut b).await.unwrap();
        writer.await.unwrap().unwrap();
        assert_eq!(got, expected);
    }
}
