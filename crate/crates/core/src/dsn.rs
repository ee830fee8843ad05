//! Simulated deep-space hop between rover and bus.
//!
//! Each transmitted payload is either dropped or delivered unmodified after
//! a delay drawn uniformly from `[one_way_delay, one_way_delay + jitter]`.
//! Draws come from a ChaCha8 generator seeded per message from
//! `seed ^ ordinal·0x9E3779B97F4A7C15`, so a fixed seed replays the same
//! drop/delay pattern. [`spawn_proxy`] puts the link in front of an HTTP
//! upstream so neither end needs to know about it.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

/// How long the proxy keeps a connection open after a drop before giving up.
pub const DROP_HOLD: Duration = Duration::from_secs(120);

const ORDINAL_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    pub one_way_delay_ms: u64,
    pub jitter_ms: u64,
    pub loss_probability: f64,
    pub seed: u64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            one_way_delay_ms: 200,
            jitter_ms: 50,
            loss_probability: 0.0,
            seed: 0,
        }
    }
}

impl LinkParams {
    pub fn transparent() -> Self {
        LinkParams {
            one_way_delay_ms: 0,
            jitter_ms: 0,
            loss_probability: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(format!("loss_probability {} outside [0, 1]", self.loss_probability));
        }
        Ok(())
    }

    /// The fate of message number `ordinal` under these parameters.
    pub fn outcome(&self, ordinal: u64) -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ordinal.wrapping_mul(ORDINAL_MIX));
        let draw: f64 = rng.random();
        if draw < self.loss_probability {
            return Outcome::Dropped;
        }
        let extra = if self.jitter_ms > 0 {
            rng.random_range(0..=self.jitter_ms)
        } else {
            0
        };
        Outcome::Delayed(Duration::from_millis(self.one_way_delay_ms + extra))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delayed(Duration),
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Delivered(Bytes),
    Dropped,
}

#[derive(Debug, Default)]
struct Counters {
    sent: AtomicU64,
    delivered: AtomicU64,
    dropped: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub uplink: DirectionStats,
    pub downlink: DirectionStats,
}

#[derive(Debug)]
pub struct DsnLink {
    params: RwLock<LinkParams>,
    ordinal: AtomicU64,
    uplink: Counters,
    downlink: Counters,
}

impl DsnLink {
    pub fn new(params: LinkParams) -> Self {
        DsnLink {
            params: RwLock::new(params),
            ordinal: AtomicU64::new(0),
            uplink: Counters::default(),
            downlink: Counters::default(),
        }
    }

    pub fn params(&self) -> LinkParams {
        *self.params.read().expect("link params lock")
    }

    /// Replaces the parameters and restarts the message ordinal, so a new
    /// seed replays from the beginning.
    pub fn set_params(&self, params: LinkParams) -> Result<(), String> {
        params.validate()?;
        *self.params.write().expect("link params lock") = params;
        self.ordinal.store(0, Ordering::SeqCst);
        Ok(())
    }

    fn counters(&self, dir: Direction) -> &Counters {
        match dir {
            Direction::Uplink => &self.uplink,
            Direction::Downlink => &self.downlink,
        }
    }

    /// Sends one payload across the link.
    pub async fn transmit(&self, payload: Bytes, dir: Direction) -> Delivery {
        let ordinal = self.ordinal.fetch_add(1, Ordering::SeqCst);
        let outcome = self.params().outcome(ordinal);
        let counters = self.counters(dir);
        counters.sent.fetch_add(1, Ordering::SeqCst);
        match outcome {
            Outcome::Dropped => {
                counters.dropped.fetch_add(1, Ordering::SeqCst);
                Delivery::Dropped
            }
            Outcome::Delayed(delay) => {
                if !delay.is_zero() {
                    tokio::time::sleep(delay).await;
                }
                counters.delivered.fetch_add(1, Ordering::SeqCst);
                Delivery::Delivered(payload)
            }
        }
    }

    pub fn stats(&self) -> LinkStats {
        let snap = |c: &Counters| {
            // Read delivered/dropped before sent so in_flight never underflows.
            let delivered = c.delivered.load(Ordering::SeqCst);
            let dropped = c.dropped.load(Ordering::SeqCst);
            let sent = c.sent.load(Ordering::SeqCst);
            DirectionStats {
                sent,
                delivered,
                dropped,
                in_flight: sent.saturating_sub(delivered + dropped),
            }
        };
        let up = snap(&self.uplink);
        let down = snap(&self.downlink);
        LinkStats {
            sent: up.sent + down.sent,
            delivered: up.delivered + down.delivered,
            dropped: up.dropped + down.dropped,
            in_flight: up.in_flight + down.in_flight,
            uplink: up,
            downlink: down,
        }
    }
}

struct ProxyState {
    link: Arc<DsnLink>,
    upstream: String,
    http: reqwest::Client,
}

pub struct ProxyHandle {
    pub addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ProxyHandle {
    pub fn shutdown(&self) {
        self.task.abort();
    }
}

impl Drop for ProxyHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Listens on `listen` and relays every HTTP request to `upstream`
/// (`host:port`) across the link, uplink for the request body and downlink
/// for the reply body.
pub async fn spawn_proxy(listen: SocketAddr, upstream: String, link: Arc<DsnLink>) -> std::io::Result<ProxyHandle> {
    let listener = TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    let state = Arc::new(ProxyState {
        link,
        upstream,
        http: crate::adapters::http_client(),
    });
    let app = Router::new().fallback(relay).with_state(state);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(ProxyHandle { addr, task })
}

async fn hold_dropped() -> Response {
    tokio::time::sleep(DROP_HOLD).await;
    StatusCode::GATEWAY_TIMEOUT.into_response()
}

async fn relay(State(st): State<Arc<ProxyState>>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let body = match st.link.transmit(body, Direction::Uplink).await {
        Delivery::Delivered(b) => b,
        Delivery::Dropped => return hold_dropped().await,
    };
    let target = uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    let mut req = st.http.request(method, format!("http://{}{target}", st.upstream)).body(body);
    if let Some(ct) = headers.get("content-type") {
        req = req.header("content-type", ct);
    }
    let (status, content_type, reply) = match req.send().await {
        Ok(resp) => {
            let status = resp.status();
            let ct = resp.headers().get("content-type").cloned();
            match resp.bytes().await {
                Ok(b) => (status, ct, b),
                Err(e) => (StatusCode::BAD_GATEWAY, None, Bytes::from(e.to_string())),
            }
        }
        Err(e) => (StatusCode::BAD_GATEWAY, None, Bytes::from(e.to_string())),
    };
    match st.link.transmit(reply, Direction::Downlink).await {
        Delivery::Delivered(b) => {
            let mut resp = Response::builder().status(status);
            if let Some(ct) = content_type {
                resp = resp.header("content-type", ct);
            }
            resp.body(axum::body::Body::from(b)).expect("valid response")
        }
        Delivery::Dropped => hold_dropped().await,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn transparent_link_is_immediate_and_exact() {
        let link = DsnLink::new(LinkParams::transparent());
        let payload = Bytes::from_static(b"\x00\x01payload\xff");
        let started = std::time::Instant::now();
        assert_eq!(link.transmit(payload.clone(), Direction::Uplink).await, Delivery::Delivered(payload));
        assert!(started.elapsed() < Duration::from_millis(50));
    }

    #[tokio::test]
    async fn total_loss_drops_everything() {
        let link = DsnLink::new(LinkParams {
            loss_probability: 1.0,
            ..LinkParams::transparent()
        });
        for _ in 0..20 {
            assert_eq!(link.transmit(Bytes::new(), Direction::Downlink).await, Delivery::Dropped);
        }
        let s = link.stats();
        assert_eq!((s.sent, s.dropped, s.delivered), (20, 20, 0));
        assert_eq!(s.downlink.dropped, 20);
        assert_eq!(s.uplink, DirectionStats::default());
    }

    #[tokio::test]
    async fn fresh_link_has_zero_stats() {
        assert_eq!(DsnLink::new(LinkParams::default()).stats(), LinkStats::default());
    }

    #[tokio::test]
    async fn counts_after_clean_transmits() {
        let link = DsnLink::new(LinkParams::transparent());
        for _ in 0..10 {
            link.transmit(Bytes::from_static(b"x"), Direction::Uplink).await;
        }
        let s = link.stats();
        assert_eq!((s.sent, s.delivered, s.dropped, s.in_flight), (10, 10, 0, 0));
    }

    #[tokio::test]
    async fn delay_is_respected() {
        let link = DsnLink::new(LinkParams {
            one_way_delay_ms: 80,
            ..LinkParams::transparent()
        });
        let started = std::time::Instant::now();
        link.transmit(Bytes::new(), Direction::Uplink).await;
        assert!(started.elapsed() >= Duration::from_millis(80));
    }

    #[test]
    fn jittered_delays_stay_in_range() {
        let p = LinkParams {
            one_way_delay_ms: 100,
            jitter_ms: 20,
            loss_probability: 0.0,
            seed: 42,
        };
        for n in 0..500 {
            let Outcome::Delayed(d) = p.outcome(n) else { panic!("no loss configured") };
            assert!((100..=120).contains(&(d.as_millis() as u64)));
        }
    }

    #[test]
    fn loss_probability_is_range_checked() {
        let link = DsnLink::new(LinkParams::default());
        assert!(link
            .set_params(LinkParams {
                loss_probability: 1.5,
                ..LinkParams::default()
            })
            .is_err());
    }
}
