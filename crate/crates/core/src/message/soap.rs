//! Canonical SOAP-style XML grammar.
//!
//! ```text
//! <Envelope xmlns="urn:rover-esb:1">
//!   <Header>
//!     <MessageId>…</MessageId>
//!     <Session>…</Session>
//!     <Source>…</Source>
//!     <Destination>…</Destination>
//!     <Operation>…</Operation>
//!   </Header>
//!   <Body>
//!     <Param name="…" kind="float">5</Param>
//!   </Body>
//! </Envelope>
//! ```
//!
//! Responses carry `MessageId`, `CorrelationId` and `Status` headers and a
//! body of `<Result>` elements or a single `<Fault code="…">`.

use std::fmt::Write as _;

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{fault_from_parts, Envelope, ParamKind, ParamValue, RequestEnvelope, ResponseEnvelope, Status, Value};
use crate::fault::Fault;

pub const NAMESPACE: &str = "urn:rover-esb:1";

pub const REQUEST_HEADERS: [&str; 4] = ["MessageId", "Source", "Destination", "Operation"];
pub const RESPONSE_HEADERS: [&str; 3] = ["MessageId", "CorrelationId", "Status"];

pub fn encode(env: &Envelope) -> String {
    let mut out = String::with_capacity(256);
    out.push_str("<Envelope xmlns=\"");
    out.push_str(NAMESPACE);
    out.push_str("\">\n  <Header>\n");
    match env {
        Envelope::Request(r) => {
            header(&mut out, "MessageId", &r.message_id);
            if let Some(s) = &r.session {
                header(&mut out, "Session", s);
            }
            header(&mut out, "Source", &r.source);
            header(&mut out, "Destination", &r.destination);
            header(&mut out, "Operation", &r.operation);
            out.push_str("  </Header>\n  <Body>\n");
            for p in &r.params {
                param(&mut out, "Param", p);
            }
        }
        Envelope::Response(r) => {
            header(&mut out, "MessageId", &r.message_id);
            header(&mut out, "CorrelationId", &r.correlation_id);
            header(&mut out, "Status", r.status.as_str());
            out.push_str("  </Header>\n  <Body>\n");
            if let Some(f) = &r.fault {
                let _ = writeln!(
                    out,
                    "    <Fault code=\"{}\">{}</Fault>",
                    f.code,
                    escape(&f.detail)
                );
            } else {
                for p in &r.results {
                    param(&mut out, "Result", p);
                }
            }
        }
    }
    out.push_str("  </Body>\n</Envelope>\n");
    out
}

fn header(out: &mut String, tag: &str, text: &str) {
    let _ = writeln!(out, "    <{tag}>{}</{tag}>", escape(text));
}

fn param(out: &mut String, tag: &str, p: &ParamValue) {
    let _ = writeln!(
        out,
        "    <{tag} name=\"{}\" kind=\"{}\">{}</{tag}>",
        escape(&p.name),
        p.kind(),
        escape(&p.value.to_text())
    );
}

/// Escapes markup characters plus control characters, so text survives a
/// parse unchanged.
fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "&#x{:X};", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub text: String,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    fn count(&self, name: &str) -> usize {
        self.children.iter().filter(|c| c.name == name).count()
    }
}

/// Parses a document into an element tree, rejecting anything that is not
/// well-formed.
pub(crate) fn parse_tree(xml: &str) -> Result<Element, String> {
    let mut reader = Reader::from_str(xml);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| format!("at byte {}: {e}", reader.error_position()))?;
        match event {
            Event::Start(start) | Event::Empty(start) if root.is_some() => {
                let _ = start;
                return Err("content after the root element".into());
            }
            Event::Start(start) => {
                stack.push(open_element(&start)?);
            }
            Event::Empty(start) => {
                let el = open_element(&start)?;
                close_element(&mut stack, &mut root, el);
            }
            Event::End(_) => {
                // quick-xml already checked that the end name matches.
                let el = stack.pop().ok_or("unexpected closing tag")?;
                close_element(&mut stack, &mut root, el);
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|e| e.to_string())?;
                push_text(&mut stack, &text)?;
            }
            Event::CData(t) => {
                let text = t.decode().map_err(|e| e.to_string())?;
                push_text(&mut stack, &text)?;
            }
            Event::GeneralRef(r) => {
                let resolved = match r.resolve_char_ref().map_err(|e| e.to_string())? {
                    Some(c) => c.to_string(),
                    None => {
                        let name = r.decode().map_err(|e| e.to_string())?;
                        predefined_entity(&name)
                            .ok_or_else(|| format!("undefined entity `&{name};`"))?
                            .to_string()
                    }
                };
                if stack.is_empty() {
                    return Err("entity reference outside the root element".into());
                }
                push_text(&mut stack, &resolved)?;
            }
            Event::Decl(_) | Event::PI(_) | Event::Comment(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(format!("unclosed element <{}>", open.name));
    }
    root.ok_or_else(|| "no root element".to_string())
}

fn predefined_entity(name: &str) -> Option<&'static str> {
    Some(match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        _ => return None,
    })
}

fn open_element(start: &quick_xml::events::BytesStart<'_>) -> Result<Element, String> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|e| e.to_string())?
        .to_owned();
    if name.is_empty() {
        return Err("empty element name".into());
    }
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| e.to_string())?
            .to_owned();
        let value = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        ..Element::default()
    })
}

fn close_element(stack: &mut [Element], root: &mut Option<Element>, el: Element) {
    match stack.last_mut() {
        Some(parent) => parent.children.push(el),
        None => *root = Some(el),
    }
}

fn push_text(stack: &mut [Element], text: &str) -> Result<(), String> {
    match stack.last_mut() {
        Some(el) => {
            el.text.push_str(text);
            Ok(())
        }
        None if text.trim().is_empty() => Ok(()),
        None => Err("text outside the root element".into()),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shape {
    Request,
    Response,
}

fn shape_of(header: &Element) -> Option<Shape> {
    if header.child("Operation").is_some() || header.child("Destination").is_some() {
        Some(Shape::Request)
    } else if header.child("CorrelationId").is_some() || header.child("Status").is_some() {
        Some(Shape::Response)
    } else {
        None
    }
}

/// Structural diagnostics for a parsed tree.
fn check_tree(root: &Element) -> Vec<String> {
    let mut diags = Vec::new();
    if root.name != "Envelope" {
        diags.push(format!("root element must be Envelope, found {}", root.name));
        return diags;
    }
    if root.attr("xmlns") != Some(NAMESPACE) {
        diags.push(format!("Envelope namespace must be {NAMESPACE}"));
    }
    let header = root.child("Header");
    let body = root.child("Body");
    if header.is_none() {
        diags.push("missing Header element".into());
    }
    if body.is_none() {
        diags.push("missing Body element".into());
    }
    let Some(header) = header else { return diags };
    let Some(shape) = shape_of(header) else {
        diags.push("cannot tell request from response: no Operation, Destination, CorrelationId or Status header".into());
        return diags;
    };
    let required: &[&str] = match shape {
        Shape::Request => &REQUEST_HEADERS,
        Shape::Response => &RESPONSE_HEADERS,
    };
    for name in required {
        match header.count(name) {
            0 => diags.push(format!("missing required header {name}")),
            1 => {}
            _ => diags.push(format!("duplicate header {name}")),
        }
    }
    for child in &header.children {
        let known = match shape {
            Shape::Request => REQUEST_HEADERS.contains(&child.name.as_str()) || child.name == "Session",
            Shape::Response => RESPONSE_HEADERS.contains(&child.name.as_str()),
        };
        if !known {
            diags.push(format!("unexpected header {}", child.name));
        } else if !child.children.is_empty() {
            diags.push(format!("header {} must hold text only", child.name));
        }
    }
    if shape == Shape::Response {
        if let Some(status) = header.child("Status") {
            if Status::parse(&status.text).is_none() {
                diags.push(format!("Status must be OK or FAULT, found `{}`", status.text));
            }
        }
    }
    if let Some(body) = body {
        check_body(body, shape, header, &mut diags);
    }
    diags
}

fn check_body(body: &Element, shape: Shape, header: &Element, diags: &mut Vec<String>) {
    if !body.text.trim().is_empty() {
        diags.push("Body must not hold bare text".into());
    }
    let faulted = header.child("Status").map(|s| s.text.as_str()) == Some("FAULT");
    for child in &body.children {
        match (shape, child.name.as_str()) {
            (Shape::Request, "Param") | (Shape::Response, "Result") => check_param(child, diags),
            (Shape::Response, "Fault") => match child.attr("code") {
                None => diags.push("Fault element missing code attribute".into()),
                Some(code) if code.parse::<crate::fault::FaultCode>().is_err() => {
                    diags.push(format!("unknown fault code `{code}`"))
                }
                Some(_) => {}
            },
            (_, other) => diags.push(format!("unexpected Body element {other}")),
        }
    }
    if shape == Shape::Response {
        let faults = body.count("Fault");
        let results = body.count("Result");
        if faulted && (faults != 1 || results != 0) {
            diags.push("FAULT response must hold exactly one Fault and no Result".into());
        }
        if !faulted && faults != 0 {
            diags.push("OK response must not hold a Fault".into());
        }
    }
}

fn check_param(el: &Element, diags: &mut Vec<String>) {
    let name = match el.attr("name") {
        Some(n) => n,
        None => {
            diags.push(format!("{} element missing name attribute", el.name));
            return;
        }
    };
    if !super::is_identifier(name) {
        diags.push(format!("{} name `{name}` is not an identifier", el.name));
    }
    let kind = match el.attr("kind").map(str::parse::<ParamKind>) {
        Some(Ok(k)) => k,
        Some(Err(e)) => {
            diags.push(format!("{} `{name}`: {e}", el.name));
            return;
        }
        None => {
            diags.push(format!("{} `{name}` missing kind attribute", el.name));
            return;
        }
    };
    if !el.children.is_empty() {
        diags.push(format!("{} `{name}` must hold text only", el.name));
    }
    if let Err(e) = Value::parse(kind, &el.text) {
        diags.push(format!("{} `{name}`: {e}", el.name));
    }
}

pub fn validate(xml: &str) -> Vec<String> {
    match parse_tree(xml) {
        Ok(root) => check_tree(&root),
        Err(e) => vec![format!("not well-formed: {e}")],
    }
}

pub fn decode(xml: &str) -> Result<Envelope, Fault> {
    let root = parse_tree(xml).map_err(|e| Fault::validation(format!("not well-formed: {e}")))?;
    let diags = check_tree(&root);
    if !diags.is_empty() {
        return Err(Fault::validation(diags.join("; ")));
    }
    // check_tree guarantees every lookup below succeeds.
    let header = root.child("Header").expect("checked");
    let body = root.child("Body").expect("checked");
    let text = |name: &str| header.child(name).map(|e| e.text.clone()).unwrap_or_default();
    let params = |tag: &str| -> Vec<ParamValue> {
        body.children
            .iter()
            .filter(|c| c.name == tag)
            .map(|c| {
                let kind: ParamKind = c.attr("kind").expect("checked").parse().expect("checked");
                ParamValue::new(
                    c.attr("name").expect("checked"),
                    Value::parse(kind, &c.text).expect("checked"),
                )
            })
            .collect()
    };
    match shape_of(header).expect("checked") {
        Shape::Request => Ok(Envelope::Request(RequestEnvelope {
            message_id: text("MessageId"),
            session: header.child("Session").map(|s| s.text.clone()),
            source: text("Source"),
            destination: text("Destination"),
            operation: text("Operation"),
            params: params("Param"),
        })),
        Shape::Response => {
            let status = Status::parse(&text("Status")).expect("checked");
            let fault = match body.child("Fault") {
                Some(f) => Some(
                    fault_from_parts(f.attr("code").expect("checked"), f.text.clone())
                        .map_err(Fault::validation)?,
                ),
                None => None,
            };
            Ok(Envelope::Response(ResponseEnvelope {
                message_id: text("MessageId"),
                correlation_id: text("CorrelationId"),
                status,
                results: params("Result"),
                fault,
            }))
        }
    }
}

/// Pulls the MessageId header out of a document that may be otherwise
/// invalid, so fault replies can still be correlated.
pub fn sniff_message_id(xml: &str) -> Option<String> {
    let root = parse_tree(xml).ok()?;
    let id = root.child("Header")?.child("MessageId")?.text.clone();
    (!id.is_empty() && !id.contains('\0')).then_some(id)
}
