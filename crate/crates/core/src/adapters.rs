//! End-point connectors: one request/reply exchange per call, per protocol.
//!
//! Adapters never retry. Connection failures map to `SERVICE_DOWN`, a reply
//! that does not arrive within the timeout maps to `TIMEOUT`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::BoxFuture;
use tokio::net::TcpStream;

use crate::fault::{Fault, FaultCode};
use crate::message::socket::{read_frame, write_frame};
use crate::message::{Method, ProtocolKind, ProtocolMessage, RestResponse};
use crate::registry::parse_endpoint;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const PROBE_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone)]
pub struct AdapterResult {
    pub raw: ProtocolMessage,
    pub elapsed: Duration,
}

pub trait Adapter: Send + Sync {
    fn kind(&self) -> ProtocolKind;

    fn invoke<'a>(
        &'a self,
        endpoint: &'a str,
        msg: ProtocolMessage,
        timeout: Duration,
    ) -> BoxFuture<'a, Result<AdapterResult, Fault>>;
}

fn down(endpoint: &str, e: impl std::fmt::Display) -> Fault {
    Fault::new(FaultCode::ServiceDown, format!("{endpoint}: {e}"))
}

fn timed_out(endpoint: &str, timeout: Duration) -> Fault {
    Fault::new(
        FaultCode::Timeout,
        format!("{endpoint}: no reply within {} ms", timeout.as_millis()),
    )
}

fn wrong_kind(expected: ProtocolKind, msg: &ProtocolMessage) -> Fault {
    Fault::internal(format!("{expected} adapter handed a {} message", msg.kind()))
}

pub fn http_client() -> reqwest::Client {
    reqwest::Client::builder()
        .no_proxy()
        .pool_idle_timeout(Duration::from_secs(30))
        .build()
        .expect("http client")
}

fn map_reqwest(endpoint: &str, timeout: Duration, e: reqwest::Error) -> Fault {
    if e.is_timeout() {
        timed_out(endpoint, timeout)
    } else {
        down(endpoint, e)
    }
}

/// Posts the canonical XML envelope to `http://{endpoint}`.
#[derive(Clone)]
pub struct SoapAdapter {
    client: reqwest::Client,
}

impl SoapAdapter {
    pub fn new(client: reqwest::Client) -> Self {
        SoapAdapter { client }
    }
}

impl Adapter for SoapAdapter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Soap
    }

    fn invoke<'a>(
        &'a self,
        endpoint: &'a str,
        msg: ProtocolMessage,
        timeout: Duration,
    ) -> BoxFuture<'a, Result<AdapterResult, Fault>> {
        Box::pin(async move {
            let ProtocolMessage::Soap(xml) = msg else {
                return Err(wrong_kind(ProtocolKind::Soap, &msg));
            };
            let started = Instant::now();
            let exchange = async {
                let resp = self
                    .client
                    .post(format!("http://{endpoint}"))
                    .header("Content-Type", "text/xml; charset=utf-8")
                    .body(xml)
                    .timeout(timeout)
                    .send()
                    .await?;
                resp.bytes().await
            };
            let body = exchange.await.map_err(|e| map_reqwest(endpoint, timeout, e))?;
            let xml = String::from_utf8(body.to_vec())
                .map_err(|_| Fault::translation("service reply is not UTF-8"))?;
            Ok(AdapterResult {
                raw: ProtocolMessage::Soap(xml),
                elapsed: started.elapsed(),
            })
        })
    }
}

/// Issues `GET|POST http://{endpoint}/invoke/{op}` per the REST grammar.
#[derive(Clone)]
pub struct RestAdapter {
    client: reqwest::Client,
}

impl RestAdapter {
    pub fn new(client: reqwest::Client) -> Self {
        RestAdapter { client }
    }
}

impl Adapter for RestAdapter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Rest
    }

    fn invoke<'a>(
        &'a self,
        endpoint: &'a str,
        msg: ProtocolMessage,
        timeout: Duration,
    ) -> BoxFuture<'a, Result<AdapterResult, Fault>> {
        Box::pin(async move {
            let ProtocolMessage::RestRequest(req) = msg else {
                return Err(wrong_kind(ProtocolKind::Rest, &msg));
            };
            let base = endpoint.trim_end_matches('/');
            let url = format!("http://{base}{}", req.target());
            let started = Instant::now();
            let exchange = async {
                let mut builder = match req.method {
                    Method::Get => self.client.get(&url),
                    Method::Post => self
                        .client
                        .post(&url)
                        .header("Content-Type", "application/json")
                        .body(req.body.clone()),
                };
                for (k, v) in &req.headers {
                    builder = builder.header(k.as_str(), v.as_str());
                }
                let resp = builder.timeout(timeout).send().await?;
                let status = resp.status().as_u16();
                let headers = resp
                    .headers()
                    .iter()
                    .filter(|(k, _)| k.as_str().starts_with("x-"))
                    .filter_map(|(k, v)| Some((k.as_str().to_owned(), v.to_str().ok()?.to_owned())))
                    .collect();
                let body = resp.bytes().await?.to_vec();
                Ok::<_, reqwest::Error>(RestResponse { status, headers, body })
            };
            let resp = exchange.await.map_err(|e| map_reqwest(endpoint, timeout, e))?;
            Ok(AdapterResult {
                raw: ProtocolMessage::RestResponse(resp),
                elapsed: started.elapsed(),
            })
        })
    }
}

/// Connects, sends one frame, reads one frame, closes.
#[derive(Clone, Default)]
pub struct SocketAdapter;

impl Adapter for SocketAdapter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Socket
    }

    fn invoke<'a>(
        &'a self,
        endpoint: &'a str,
        msg: ProtocolMessage,
        timeout: Duration,
    ) -> BoxFuture<'a, Result<AdapterResult, Fault>> {
        Box::pin(async move {
            let ProtocolMessage::Socket(frame) = msg else {
                return Err(wrong_kind(ProtocolKind::Socket, &msg));
            };
            let (host, port, _) = parse_endpoint(endpoint).map_err(Fault::internal)?;
            let started = Instant::now();
            let exchange = async {
                let mut stream = TcpStream::connect((host.as_str(), port))
                    .await
                    .map_err(|e| down(endpoint, e))?;
                write_frame(&mut stream, &frame).await.map_err(|e| down(endpoint, e))?;
                let reply = read_frame(&mut stream).await.map_err(|e| {
                    if e.kind() == std::io::ErrorKind::InvalidData {
                        Fault::translation(format!("{endpoint}: {e}"))
                    } else {
                        down(endpoint, e)
                    }
                })?;
                Ok::<_, Fault>(reply)
            };
            let reply = tokio::time::timeout(timeout, exchange)
                .await
                .map_err(|_| timed_out(endpoint, timeout))??;
            Ok(AdapterResult {
                raw: ProtocolMessage::Socket(reply),
                elapsed: started.elapsed(),
            })
        })
    }
}

/// One adapter per protocol.
#[derive(Clone)]
pub struct AdapterSet {
    pub soap: Arc<dyn Adapter>,
    pub rest: Arc<dyn Adapter>,
    pub socket: Arc<dyn Adapter>,
}

impl AdapterSet {
    pub fn standard() -> Self {
        let client = http_client();
        AdapterSet {
            soap: Arc::new(SoapAdapter::new(client.clone())),
            rest: Arc::new(RestAdapter::new(client)),
            socket: Arc::new(SocketAdapter),
        }
    }

    pub fn for_kind(&self, kind: ProtocolKind) -> &Arc<dyn Adapter> {
        match kind {
            ProtocolKind::Soap => &self.soap,
            ProtocolKind::Rest => &self.rest,
            ProtocolKind::Socket => &self.socket,
        }
    }
}

/// True iff a TCP connection to the endpoint's host:port opens within 1 s.
pub async fn probe(endpoint: &str) -> bool {
    let Ok((host, port, _)) = parse_endpoint(endpoint) else {
        return false;
    };
    matches!(
        tokio::time::timeout(PROBE_TIMEOUT, TcpStream::connect((host.as_str(), port))).await,
        Ok(Ok(_))
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tokio::net::TcpListener;

    async fn closed_port() -> String {
        let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = l.local_addr().unwrap();
        drop(l);
        addr.to_string()
    }

    #[tokio::test]
    async fn nothing_listening_is_service_down() {
        let ep = closed_port().await;
        let set = AdapterSet::standard();
        let frame = ProtocolMessage::Socket(vec![0, 0, 0, 0]);
        let err = set.socket.invoke(&ep, frame, DEFAULT_TIMEOUT).await.unwrap_err();
        assert_eq!(err.code, FaultCode::ServiceDown);
        let err = set
            .soap
            .invoke(&format!("{ep}/service"), ProtocolMessage::Soap("<x/>".into()), DEFAULT_TIMEOUT)
            .await
            .unwrap_err();
        assert_eq!(err.code, FaultCode::ServiceDown);
    }

    #[tokio::test]
    async fn silent_socket_service_times_out() {
        let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let ep = l.local_addr().unwrap().to_string();
        let hold = tokio::spawn(async move {
            let (s, _) = l.accept().await.unwrap();
            tokio::time::sleep(Duration::from_secs(2)).await;
            drop(s);
        });
        let timeout = Duration::from_millis(300);
        let started = Instant::now();
        let err = SocketAdapter
            .invoke(&ep, ProtocolMessage::Socket(vec![0, 0, 0, 0]), timeout)
            .await
            .unwrap_err();
        let took = started.elapsed();
        assert_eq!(err.code, FaultCode::Timeout);
        assert!(took >= timeout.mul_f64(0.8) && took <= timeout.mul_f64(1.2), "{took:?}");
        hold.abort();
    }

    #[tokio::test]
    async fn mismatched_message_kind_is_internal() {
        let err = SocketAdapter
            .invoke("127.0.0.1:1", ProtocolMessage::Soap(String::new()), DEFAULT_TIMEOUT)
            .await
            .unwrap_err();
        assert_eq!(err.code, FaultCode::Internal);
    }

    #[tokio::test]
    async fn probe_sees_listeners() {
        let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let ep = l.local_addr().unwrap().to_string();
        assert!(probe(&ep).await);
        drop(l);
        assert!(!probe(&ep).await);
        assert!(!probe("not an endpoint").await);
    }
}
