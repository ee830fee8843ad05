//! Helpers shared by the `esb`, `rover` and `rover-services` binaries.

use rover_esb::{Fault, ParamValue, Value};
use tracing_subscriber::EnvFilter;

/// Process exit statuses used by every binary.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAULT: u8 = 1;
    pub const USAGE: u8 = 2;
}

/// Logs to stderr, filtered by `RUST_LOG` or else `default`.
pub fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

pub fn json_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(i) => (*i).into(),
        Value::Float(f) => (*f).into(),
        Value::Bool(b) => (*b).into(),
        other => other.to_text().into(),
    }
}

pub fn json_results(results: &[ParamValue]) -> serde_json::Value {
    results
        .iter()
        .map(|p| (p.name.clone(), json_value(&p.value)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

pub fn json_fault(f: &Fault) -> serde_json::Value {
    serde_json::json!({ "code": f.code.as_str(), "detail": f.detail })
}

/// Resolves once the process receives Ctrl-C.
pub async fn interrupted() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!("cannot listen for Ctrl-C: {e}");
        std::future::pending::<()>().await;
    }
}
