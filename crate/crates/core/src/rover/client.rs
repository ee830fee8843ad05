use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use crate::esb::BIND_OPERATION;
use crate::fault::{Fault, FaultCode};
use crate::message::{soap, Envelope, ParamValue, RequestEnvelope, ResponseEnvelope};
use crate::registry::OperationEntry;

/// Per-invocation timeout and retry budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Policy {
    /// Budget for one attempt, covering both link directions.
    pub timeout: Duration,
    /// Extra attempts after the first, for TIMEOUT and SERVICE_DOWN only.
    pub retries: u32,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            timeout: Duration::from_secs(5),
            retries: 2,
        }
    }
}

/// What one `invoke` did.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub operation: String,
    pub result: Result<Vec<ParamValue>, Fault>,
    /// One fresh id per attempt, in order.
    pub message_ids: Vec<String>,
    pub elapsed: Duration,
}

impl Invocation {
    pub fn last_message_id(&self) -> Option<&str> {
        self.message_ids.last().map(String::as_str)
    }
}

/// A headless rover talking to the bus (directly or through the link proxy).
pub struct RoverClient {
    http: reqwest::Client,
    base_url: String,
    client_id: String,
    credential: String,
    session: RwLock<Option<String>>,
    owners: RwLock<HashMap<String, String>>,
    issued: Mutex<HashSet<String>>,
    discarded: AtomicU64,
    attempts: AtomicU64,
}

impl RoverClient {
    /// `base_url` is e.g. `http://127.0.0.1:7000`.
    pub fn new(base_url: impl Into<String>, client_id: impl Into<String>, credential: impl Into<String>) -> Self {
        RoverClient {
            http: crate::adapters::http_client(),
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            client_id: client_id.into(),
            credential: credential.into(),
            session: RwLock::new(None),
            owners: RwLock::new(HashMap::new()),
            issued: Mutex::new(HashSet::new()),
            discarded: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
        }
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn session(&self) -> Option<String> {
        self.session.read().expect("session lock").clone()
    }

    /// Responses dropped because they answered an earlier attempt.
    pub fn discarded(&self) -> u64 {
        self.discarded.load(Ordering::SeqCst)
    }

    /// Envelopes sent so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    /// Fetches the bus's operation listing and remembers each owner.
    pub async fn discover(&self, policy: Policy) -> Result<Vec<OperationEntry>, Fault> {
        let url = format!("{}/esb/wsdl", self.base_url);
        let mut last = None;
        for _ in 0..=policy.retries {
            let sent = self.http.get(&url).timeout(policy.timeout).send().await;
            let body = match sent {
                Ok(resp) if resp.status().is_success() => resp.bytes().await.map_err(|e| transport_fault(&url, e)),
                Ok(resp) => Err(Fault::new(FaultCode::ServiceDown, format!("{url}: HTTP {}", resp.status()))),
                Err(e) => Err(transport_fault(&url, e)),
            };
            match body {
                Ok(bytes) => {
                    let ops: Vec<OperationEntry> = serde_json::from_slice(&bytes)
                        .map_err(|e| Fault::translation(format!("operation listing: {e}")))?;
                    let mut owners = self.owners.write().expect("owner lock");
                    owners.clear();
                    owners.extend(ops.iter().map(|o| (o.name.clone(), o.service.clone())));
                    return Ok(ops);
                }
                Err(f) if f.code.is_retryable() => last = Some(f),
                Err(f) => return Err(f),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Authenticates with the shared credential and keeps the session.
    pub async fn bind(&self, policy: Policy) -> Result<String, Fault> {
        let inv = self
            .exchange(BIND_OPERATION, vec![ParamValue::text("credential", self.credential.clone())], None, policy)
            .await;
        let results = inv.result?;
        let session = results
            .iter()
            .find(|p| p.name == "session")
            .and_then(|p| p.value.as_text())
            .ok_or_else(|| Fault::translation("bind reply lacks a session"))?
            .to_owned();
        *self.session.write().expect("session lock") = Some(session.clone());
        Ok(session)
    }

    /// Invokes an operation under the current session.
    pub async fn invoke(&self, operation: &str, params: Vec<ParamValue>, policy: Policy) -> Invocation {
        let session = self.session();
        self.exchange(operation, params, session, policy).await
    }

    async fn exchange(&self, operation: &str, params: Vec<ParamValue>, session: Option<String>, policy: Policy) -> Invocation {
        let started = Instant::now();
        let destination = if operation == BIND_OPERATION {
            String::new()
        } else {
            self.owners
                .read()
                .expect("owner lock")
                .get(operation)
                .cloned()
                .unwrap_or_default()
        };
        let mut message_ids = Vec::new();
        let mut result = Err(Fault::internal("no attempt made"));
        for _ in 0..=policy.retries {
            let mut req = RequestEnvelope::new(self.client_id.clone(), destination.clone(), operation, params.clone());
            req.session = session.clone();
            message_ids.push(req.message_id.clone());
            result = self.attempt(&req, policy.timeout).await;
            match &result {
                Err(f) if f.code.is_retryable() => continue,
                _ => break,
            }
        }
        Invocation {
            operation: operation.to_owned(),
            result,
            message_ids,
            elapsed: started.elapsed(),
        }
    }

    async fn attempt(&self, req: &RequestEnvelope, timeout: Duration) -> Result<Vec<ParamValue>, Fault> {
        let url = format!("{}/esb", self.base_url);
        let xml = soap::encode(&Envelope::Request(req.clone()));
        self.issued.lock().expect("issued lock").insert(req.message_id.clone());
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let sent = self
            .http
            .post(&url)
            .header("Content-Type", "text/xml; charset=utf-8")
            .body(xml)
            .timeout(timeout)
            .send()
            .await
            .map_err(|e| transport_fault(&url, e))?;
        let status = sent.status();
        let body = sent.bytes().await.map_err(|e| transport_fault(&url, e))?;
        if status.is_server_error() && !body.starts_with(b"<") {
            return Err(Fault::new(FaultCode::ServiceDown, format!("{url}: HTTP {status}")));
        }
        let text = std::str::from_utf8(&body).map_err(|_| Fault::translation("reply is not UTF-8"))?;
        let resp: ResponseEnvelope = soap::decode(text)?.into_response()?;
        if resp.correlation_id != req.message_id {
            let ours = self.issued.lock().expect("issued lock").contains(&resp.correlation_id);
            if ours {
                // A late answer to an earlier attempt.
                self.discarded.fetch_add(1, Ordering::SeqCst);
                return Err(Fault::new(FaultCode::Timeout, "reply belonged to an earlier attempt"));
            }
            if !resp.correlation_id.is_empty() {
                self.discarded.fetch_add(1, Ordering::SeqCst);
                return Err(Fault::translation(format!(
                    "reply correlates to unknown message `{}`",
                    resp.correlation_id
                )));
            }
        }
        resp.into_result()
    }
}

fn transport_fault(url: &str, e: reqwest::Error) -> Fault {
    if e.is_timeout() {
        Fault::new(FaultCode::Timeout, format!("{url}: no reply in time"))
    } else {
        Fault::new(FaultCode::ServiceDown, format!("{url}: {e}"))
    }
}
