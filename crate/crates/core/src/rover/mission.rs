//! Line-oriented mission scripts.
//!
//! ```text
//! # comment
//! discover [Operation...]        listing must contain each named operation
//! bind
//! policy timeout=<ms> retries=<n>
//! invoke <Operation> [name=value | name:kind=value | name=@file]...
//! expect <name> == <value>
//! expect <name> ~= <number> [tolerance]
//! expect fault <CODE>
//! expect ok
//! sleep <ms>
//! ```
//!
//! Untyped values are inferred: `true`/`false`, integers, decimals, else
//! text. `@file` reads bytes relative to the script. `expect` lines check
//! the most recent invoke.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::client::{Invocation, Policy, RoverClient};
use crate::fault::FaultCode;
use crate::message::{is_identifier, ParamKind, ParamValue, Value};

/// Default tolerance for `~=`.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Discover(Vec<String>),
    Bind,
    Policy(Policy),
    Invoke { operation: String, params: Vec<ParamValue> },
    ExpectEq { name: String, literal: String },
    ExpectApprox { name: String, value: f64, tolerance: f64 },
    ExpectFault(FaultCode),
    ExpectOk,
    Sleep(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionStep {
    pub line: usize,
    pub text: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mission {
    pub steps: Vec<MissionStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Parses `name=value`, `name:kind=value` or `name=@file`.
pub fn parse_param(token: &str, base_dir: Option<&Path>) -> Result<ParamValue, String> {
    let (lhs, literal) = token
        .split_once('=')
        .ok_or_else(|| format!("`{token}` is not name=value"))?;
    let (name, kind) = match lhs.split_once(':') {
        Some((n, k)) => (n, Some(k.parse::<ParamKind>()?)),
        None => (lhs, None),
    };
    if !is_identifier(name) {
        return Err(format!("`{name}` is not a parameter name"));
    }
    let value = if let Some(path) = literal.strip_prefix('@') {
        if kind.is_some_and(|k| k != ParamKind::Bytes) {
            return Err(format!("{name}: @file values are bytes"));
        }
        let path = match base_dir {
            Some(dir) => dir.join(path),
            None => path.into(),
        };
        Value::Bytes(std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?)
    } else {
        match kind {
            Some(k) => Value::parse(k, literal)?,
            None => Value::infer(literal),
        }
    };
    Ok(ParamValue::new(name, value))
}

fn parse_line(words: &[&str], base_dir: Option<&Path>) -> Result<Command, String> {
    let number = |s: &str| -> Result<f64, String> {
        match Value::infer(s).as_f64() {
            Some(v) => Ok(v),
            None => Err(format!("`{s}` is not a number")),
        }
    };
    let millis = |s: &str| s.parse::<u64>().map_err(|_| format!("`{s}` is not a millisecond count"));
    match words {
        ["discover", ops @ ..] => Ok(Command::Discover(ops.iter().map(|s| s.to_string()).collect())),
        ["bind"] => Ok(Command::Bind),
        ["policy", settings @ ..] => {
            let mut policy = Policy::default();
            for s in settings {
                match s.split_once('=') {
                    Some(("timeout", v)) => policy.timeout = Duration::from_millis(millis(v)?),
                    Some(("retries", v)) => policy.retries = v.parse().map_err(|_| format!("`{v}` is not a count"))?,
                    _ => return Err(format!("unknown policy setting `{s}`")),
                }
            }
            Ok(Command::Policy(policy))
        }
        ["invoke", op, args @ ..] => {
            let params = args
                .iter()
                .map(|a| parse_param(a, base_dir))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Command::Invoke {
                operation: op.to_string(),
                params,
            })
        }
        ["expect", "ok"] => Ok(Command::ExpectOk),
        ["expect", "fault", code] => Ok(Command::ExpectFault(
            code.parse().map_err(|_| format!("unknown fault code `{code}`"))?,
        )),
        ["expect", name, "==", literal] => Ok(Command::ExpectEq {
            name: name.to_string(),
            literal: literal.to_string(),
        }),
        ["expect", name, "~=", value] | ["expect", name, "~=", value, _] => Ok(Command::ExpectApprox {
            name: name.to_string(),
            value: number(value)?,
            tolerance: match words.get(4) {
                Some(t) => number(t)?,
                None => DEFAULT_TOLERANCE,
            },
        }),
        ["sleep", ms] => Ok(Command::Sleep(Duration::from_millis(millis(ms)?))),
        _ => Err(format!("cannot parse `{}`", words.join(" "))),
    }
}

impl Mission {
    /// Parses a script; `base_dir` anchors `@file` paths.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Mission, ParseError> {
        let mut steps = Vec::new();
        let mut seen_invoke = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let words: Vec<&str> = trimmed.split_whitespace().collect();
            let command = parse_line(&words, base_dir).map_err(|message| ParseError { line, message })?;
            match command {
                Command::Invoke { .. } => seen_invoke = true,
                Command::ExpectEq { .. } | Command::ExpectApprox { .. } | Command::ExpectFault(_) | Command::ExpectOk
                    if !seen_invoke =>
                {
                    return Err(ParseError {
                        line,
                        message: "expect before any invoke".into(),
                    })
                }
                _ => {}
            }
            steps.push(MissionStep {
                line,
                text: trimmed.to_owned(),
                command,
            });
        }
        Ok(Mission { steps })
    }

    pub fn load(path: &Path) -> Result<Mission, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Mission::parse(&text, path.parent())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub line: usize,
    pub command: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message_id: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MissionReport {
    pub passed: bool,
    pub steps: Vec<StepReport>,
    pub elapsed_ms: u64,
}

impl MissionReport {
    pub fn failures(&self) -> impl Iterator<Item = &StepReport> {
        self.steps.iter().filter(|s| !s.passed)
    }
}

impl fmt::Display for MissionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            write!(
                f,
                "{} line {:>3}  {}  -> {}",
                if s.passed { "PASS" } else { "FAIL" },
                s.line,
                s.command,
                s.detail
            )?;
            if let Some(id) = &s.message_id {
                write!(f, "  [{id}]")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "mission {} ({} steps, {} ms)",
            if self.passed { "passed" } else { "FAILED" },
            self.steps.len(),
            self.elapsed_ms
        )
    }
}

/// One-line rendering of a result list; byte values show only their size.
pub fn render(results: &[ParamValue]) -> String {
    results
        .iter()
        .map(|p| match &p.value {
            Value::Bytes(b) => format!("{}=<{} bytes>", p.name, b.len()),
            v => format!("{}={}", p.name, v.to_text()),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn check(command: &Command, last: &Invocation) -> (bool, String) {
    let result = |name: &str| -> Result<&Value, String> {
        match &last.result {
            Ok(rs) => rs
                .iter()
                .find(|p| p.name == name)
                .map(|p| &p.value)
                .ok_or_else(|| format!("no result `{name}`")),
            Err(f) => Err(format!("invoke faulted: {f}")),
        }
    };
    match command {
        Command::ExpectOk => match &last.result {
            Ok(_) => (true, "ok".into()),
            Err(f) => (false, format!("faulted: {f}")),
        },
        Command::ExpectFault(code) => match &last.result {
            Err(f) if f.code == *code => (true, format!("faulted {code}")),
            Err(f) => (false, format!("faulted {f}, expected {code}")),
            Ok(rs) => (false, format!("succeeded ({}), expected {code}", render(rs))),
        },
        Command::ExpectEq { name, literal } => match result(name) {
            Ok(got) => match Value::parse(got.kind(), literal) {
                Ok(want) if &want == got => (true, format!("{name}={}", got.to_text())),
                Ok(_) => (false, format!("{name}={}, expected {literal}", got.to_text())),
                Err(e) => (false, format!("{name} is {}: {e}", got.kind())),
            },
            Err(e) => (false, e),
        },
        Command::ExpectApprox { name, value, tolerance } => match result(name) {
            Ok(got) => match got.as_f64() {
                Some(v) if (v - value).abs() <= *tolerance => (true, format!("{name}={v} within {tolerance} of {value}")),
                Some(v) => (false, format!("{name}={v}, expected {value} ± {tolerance}")),
                None => (false, format!("{name} is {}, not numeric", got.kind())),
            },
            Err(e) => (false, e),
        },
        _ => unreachable!("not an expectation"),
    }
}

/// Executes the steps in order; failed steps do not stop the mission.
pub async fn run(mission: &Mission, client: &RoverClient, mut policy: Policy) -> MissionReport {
    let started = Instant::now();
    let mut reports = Vec::with_capacity(mission.steps.len());
    let mut last: Option<Invocation> = None;
    for (i, step) in mission.steps.iter().enumerate() {
        let mut message_id = None;
        let (passed, detail) = match &step.command {
            Command::Discover(wanted) => match client.discover(policy).await {
                Ok(ops) => {
                    let missing: Vec<&String> = wanted.iter().filter(|w| !ops.iter().any(|o| &o.name == *w)).collect();
                    if missing.is_empty() {
                        (true, format!("{} operations", ops.len()))
                    } else {
                        (false, format!("missing {missing:?}"))
                    }
                }
                Err(f) => (false, f.to_string()),
            },
            Command::Bind => match client.bind(policy).await {
                Ok(_) => (true, "session established".into()),
                Err(f) => (false, f.to_string()),
            },
            Command::Policy(p) => {
                policy = *p;
                (true, format!("timeout {} ms, {} retries", p.timeout.as_millis(), p.retries))
            }
            Command::Invoke { operation, params } => {
                let inv = client.invoke(operation, params.clone(), policy).await;
                message_id = inv.last_message_id().map(str::to_owned);
                let fault_expected = matches!(
                    mission.steps.get(i + 1).map(|s| &s.command),
                    Some(Command::ExpectFault(_))
                );
                let outcome = match &inv.result {
                    Ok(rs) => (true, render(rs)),
                    Err(f) => (fault_expected, f.to_string()),
                };
                last = Some(inv);
                outcome
            }
            Command::Sleep(d) => {
                tokio::time::sleep(*d).await;
                (true, format!("slept {} ms", d.as_millis()))
            }
            expectation => {
                let inv = last.as_ref().expect("parser rejects expect before invoke");
                message_id = inv.last_message_id().map(str::to_owned);
                check(expectation, inv)
            }
        };
        reports.push(StepReport {
            line: step.line,
            command: step.text.clone(),
            passed,
            detail,
            message_id,
        });
    }
    MissionReport {
        passed: reports.iter().all(|r| r.passed),
        steps: reports,
        elapsed_ms: started.elapsed().as_millis() as u64,
    }
}
