//! The three reference services: imaging over canonical SOAP, spectrometry
//! over REST and environment sensing over TCP socket frames.
//!
//! Each service serves exactly the operations it declares and can publish
//! its descriptor to the bus management API on startup.

pub mod analysis;
pub mod image;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::http::{HeaderMap, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use crate::fault::{Fault, FaultCode};
use crate::message::{self, soap, socket, Envelope, Method, ParamKind, ParamValue, ProtocolKind, ProtocolMessage, RequestEnvelope, ResponseEnvelope, RestRequest};
use crate::registry::{OperationSignature, ServiceDescriptor};
use crate::translator::conform_params;

use analysis::{Channel, EnvironmentModel, ELEMENTS};
use image::Image;

pub const IMAGING: &str = "ImagingService";
pub const SPECTROMETRY: &str = "SpectrometryService";
pub const ENVIRONMENT: &str = "EnvironmentService";

/// Path the imaging service accepts SOAP envelopes on.
pub const SOAP_PATH: &str = "/service";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServiceKind {
    Imaging,
    Spectrometry,
    Environment,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 3] = [ServiceKind::Imaging, ServiceKind::Spectrometry, ServiceKind::Environment];

    pub fn service_name(self) -> &'static str {
        match self {
            ServiceKind::Imaging => IMAGING,
            ServiceKind::Spectrometry => SPECTROMETRY,
            ServiceKind::Environment => ENVIRONMENT,
        }
    }

    pub fn protocol(self) -> ProtocolKind {
        match self {
            ServiceKind::Imaging => ProtocolKind::Soap,
            ServiceKind::Spectrometry => ProtocolKind::Rest,
            ServiceKind::Environment => ProtocolKind::Socket,
        }
    }

    /// The operations this service implements.
    pub fn catalog(self) -> Vec<OperationSignature> {
        use ParamKind::*;
        let abundance = |op: OperationSignature| ELEMENTS.iter().fold(op, |op, e| op.returns(e, Float));
        match self {
            ServiceKind::Imaging => vec![
                OperationSignature::new("MagnifyImage", "Zoom and Increase the Image Size")
                    .param("image", Bytes)
                    .param("newWidth", Int)
                    .param("newHeight", Int)
                    .returns("image", Bytes),
                OperationSignature::new("NoiseReduction", "Filter and Correct Image Artifacts")
                    .param("image", Bytes)
                    .returns("image", Bytes),
                OperationSignature::new("SendImage", "Send Captured Image to the ESB")
                    .param("image", Bytes)
                    .returns("storage_id", Text),
            ],
            ServiceKind::Spectrometry => vec![
                OperationSignature::new(
                    "AnalyzeParticlesSpeed",
                    "Search for Water Minerals by Firing Beams of Neutrons and Measure Speed of Bounced Particles",
                )
                .param("mass", Float)
                .param("weight", Float)
                .returns("velocity", Float),
                abundance(
                    OperationSignature::new(
                        "AnalyzeReleasedXRays",
                        "Measure the Abundances of Various Chemical Elements by Shooting X-rays and Measuring their Release Amount",
                    )
                    .param("sample_id", Text),
                ),
                abundance(
                    OperationSignature::new(
                        "AnalyzeVaporizedBits",
                        "Measure the Composition of Rocks by Firing a laser at rocks and Analyzing the Structure of their Vaporized Bits",
                    )
                    .param("rock_id", Text)
                    .param("laser_power", Float),
                ),
                OperationSignature::new("ContainsCarbon", "Check if Underneath Soil Contains Carbon Element")
                    .param("sample_id", Text)
                    .returns("carbon", Bool),
                OperationSignature::new("ContainsOxygen", "Check if Underneath Soil Contains Oxygen Element")
                    .param("sample_id", Text)
                    .returns("oxygen", Bool),
            ],
            ServiceKind::Environment => vec![
                OperationSignature::new("MeasurePressure", "Measure the Atmospheric Pressure").returns("pressure", Float),
                OperationSignature::new("MeasureHumidity", "Measure the Atmospheric Humidity").returns("humidity", Float),
                OperationSignature::new("MeasureWindSpeed", "Measure the Atmospheric Wind Speed").returns("wind_speed", Float),
                OperationSignature::new("MeasureUltravioletRadiation", "Measure the Atmospheric Ultraviolet Radiations")
                    .returns("uv_index", Float),
            ],
        }
    }
}

/// Where and how a service reaches the bus management API.
#[derive(Debug, Clone)]
pub struct EsbContact {
    /// Base URL of the management API, e.g. `http://127.0.0.1:7001`.
    pub ops_url: String,
    pub credential: String,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub kind: ServiceKind,
    pub service_name: String,
    pub listen: SocketAddr,
    /// Operation subset to declare and serve; `None` means the full catalog.
    pub operations: Option<Vec<String>>,
    pub environment: EnvironmentModel,
    /// Artificial processing delay, for timeout testing.
    pub delay: Duration,
    pub esb: Option<EsbContact>,
}

impl ServiceConfig {
    pub fn new(kind: ServiceKind) -> Self {
        ServiceConfig {
            kind,
            service_name: kind.service_name().to_owned(),
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            operations: None,
            environment: EnvironmentModel::default(),
            delay: Duration::ZERO,
            esb: None,
        }
    }
}

/// Operation logic shared by all three transports.
struct Logic {
    kind: ServiceKind,
    operations: Vec<OperationSignature>,
    environment: EnvironmentModel,
    tick: AtomicU64,
    executions: AtomicU64,
    delay: Duration,
    esb: Option<EsbContact>,
    http: reqwest::Client,
}

impl Logic {
    async fn execute(&self, req: &RequestEnvelope) -> ResponseEnvelope {
        match self.run(req).await {
            Ok(results) => ResponseEnvelope::ok(req.message_id.clone(), results),
            Err(f) => ResponseEnvelope::fault(req.message_id.clone(), f),
        }
    }

    async fn run(&self, req: &RequestEnvelope) -> Result<Vec<ParamValue>, Fault> {
        let sig = self
            .operations
            .iter()
            .find(|o| o.name == req.operation)
            .ok_or_else(|| Fault::new(FaultCode::UnknownOperation, format!("{} is not served here", req.operation)))?;
        let params = conform_params(&req.params, &sig.params)?;
        self.executions.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let arg = |name: &str| params.iter().find(|p| p.name == name).map(|p| &p.value).expect("conformed");
        let image_arg = || Image::from_ppm(arg("image").as_bytes().expect("conformed"));
        let dim = |name: &str| -> Result<usize, Fault> {
            let v = arg(name).as_i64().expect("conformed");
            usize::try_from(v)
                .ok()
                .filter(|&v| (1..=8192).contains(&v))
                .ok_or_else(|| Fault::validation(format!("{name} must be in 1..=8192")))
        };
        let text = |name: &str| arg(name).as_text().expect("conformed").to_owned();
        let float = |name: &str| arg(name).as_f64().expect("conformed");
        let abundance = |a: [f64; 4]| ELEMENTS.iter().zip(a).map(|(e, v)| ParamValue::float(*e, v)).collect();
        let env_value = |c: Channel| {
            let t = self.tick.fetch_add(1, Ordering::SeqCst);
            self.environment.channel(c).value_at(t)
        };

        Ok(match sig.name.as_str() {
            "MagnifyImage" => {
                let out = image_arg()?.magnify(dim("newWidth")?, dim("newHeight")?)?;
                vec![ParamValue::bytes("image", out.to_ppm())]
            }
            "NoiseReduction" => vec![ParamValue::bytes("image", image_arg()?.median3().to_ppm())],
            "SendImage" => {
                let ppm = image_arg()?.to_ppm();
                vec![ParamValue::text("storage_id", self.send_image(ppm).await?)]
            }
            "AnalyzeParticlesSpeed" => vec![ParamValue::float(
                "velocity",
                analysis::particles_speed(float("mass"), float("weight"))?,
            )],
            "AnalyzeReleasedXRays" => abundance(analysis::released_xrays(&text("sample_id"))),
            "AnalyzeVaporizedBits" => abundance(analysis::vaporized_bits(&text("rock_id"), float("laser_power"))?),
            "ContainsCarbon" => vec![ParamValue::bool("carbon", analysis::contains_carbon(&text("sample_id")))],
            "ContainsOxygen" => vec![ParamValue::bool("oxygen", analysis::contains_oxygen(&text("sample_id")))],
            "MeasurePressure" => vec![ParamValue::float("pressure", env_value(Channel::Pressure))],
            "MeasureHumidity" => vec![ParamValue::float("humidity", env_value(Channel::Humidity))],
            "MeasureWindSpeed" => vec![ParamValue::float("wind_speed", env_value(Channel::WindSpeed))],
            "MeasureUltravioletRadiation" => vec![ParamValue::float("uv_index", env_value(Channel::Ultraviolet))],
            other => return Err(Fault::internal(format!("{other} declared without an implementation"))),
        })
    }

    /// Hands the image to the bus image store and returns its content id.
    async fn send_image(&self, ppm: Vec<u8>) -> Result<String, Fault> {
        let esb = self
            .esb
            .as_ref()
            .ok_or_else(|| Fault::new(FaultCode::ServiceDown, "no bus configured for SendImage"))?;
        let resp = self
            .http
            .post(format!("{}/ops/images", esb.ops_url.trim_end_matches('/')))
            .bearer_auth(&esb.credential)
            .header("Content-Type", "image/x-portable-pixmap")
            .body(ppm)
            .send()
            .await
            .map_err(|e| Fault::new(FaultCode::ServiceDown, format!("image store: {e}")))?;
        let status = resp.status();
        let body: serde_json::Value = resp
            .json()
            .await
            .map_err(|e| Fault::internal(format!("image store reply: {e}")))?;
        if !status.is_success() {
            let code = body
                .get("fault")
                .and_then(|c| c.as_str())
                .and_then(|c| c.parse().ok())
                .unwrap_or(FaultCode::Internal);
            let detail = body.get("detail").and_then(|d| d.as_str()).unwrap_or_default();
            return Err(Fault::new(code, detail));
        }
        body.get("storage_id")
            .and_then(|s| s.as_str())
            .map(str::to_owned)
            .ok_or_else(|| Fault::internal("image store reply lacks storage_id"))
    }
}

/// A running service instance.
pub struct ServiceHandle {
    addr: SocketAddr,
    descriptor: ServiceDescriptor,
    logic: Arc<Logic>,
    task: JoinHandle<()>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// The descriptor this instance publishes.
    pub fn descriptor(&self) -> &ServiceDescriptor {
        &self.descriptor
    }

    /// Number of operations actually executed (after parameter checks).
    pub fn executions(&self) -> u64 {
        self.logic.executions.load(Ordering::SeqCst)
    }

    /// Publishes the descriptor to the configured bus; returns the version.
    pub async fn register(&self) -> Result<u64, Fault> {
        let esb = self
            .logic
            .esb
            .as_ref()
            .ok_or_else(|| Fault::internal("no bus configured"))?;
        register(&self.logic.http, esb, &self.descriptor).await
    }

    /// Stops accepting connections.
    pub fn shutdown(&self) {
        self.task.abort();
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// POSTs a descriptor to `{ops_url}/ops/services`.
pub async fn register(http: &reqwest::Client, esb: &EsbContact, d: &ServiceDescriptor) -> Result<u64, Fault> {
    let resp = http
        .post(format!("{}/ops/services", esb.ops_url.trim_end_matches('/')))
        .bearer_auth(&esb.credential)
        .json(d)
        .send()
        .await
        .map_err(|e| Fault::new(FaultCode::ServiceDown, format!("registration: {e}")))?;
    let status = resp.status();
    let body: serde_json::Value = resp
        .json()
        .await
        .map_err(|e| Fault::internal(format!("registration reply: {e}")))?;
    if !status.is_success() {
        return Err(Fault::internal(format!("registration rejected ({status}): {body}")));
    }
    body.get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Fault::internal("registration reply lacks version"))
}

/// Binds and starts a service. Registration is separate ([`ServiceHandle::register`]).
pub async fn spawn(config: ServiceConfig) -> std::io::Result<ServiceHandle> {
    let mut operations = config.kind.catalog();
    if let Some(subset) = &config.operations {
        for name in subset {
            if !operations.iter().any(|o| &o.name == name) {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("{name} is not implemented by {:?}", config.kind),
                ));
            }
        }
        operations.retain(|o| subset.contains(&o.name));
    }
    config
        .environment
        .validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;

    let listener = TcpListener::bind(config.listen).await?;
    let addr = listener.local_addr()?;
    let endpoint = match config.kind.protocol() {
        ProtocolKind::Soap => format!("{addr}{SOAP_PATH}"),
        ProtocolKind::Rest | ProtocolKind::Socket => addr.to_string(),
    };
    let descriptor = ServiceDescriptor::new(config.service_name.clone(), config.kind.protocol(), endpoint, operations.clone());
    let logic = Arc::new(Logic {
        kind: config.kind,
        operations,
        environment: config.environment,
        tick: AtomicU64::new(0),
        executions: AtomicU64::new(0),
        delay: config.delay,
        esb: config.esb,
        http: crate::adapters::http_client(),
    });

    let task = match logic.kind.protocol() {
        ProtocolKind::Soap => {
            let app = Router::new()
                .route(SOAP_PATH, axum::routing::post(soap_handler))
                .with_state(Arc::clone(&logic));
            tokio::spawn(async move {
                let _ = axum::serve(listener, app).await;
            })
        }
        ProtocolKind::Rest => {
            let app = Router::new().fallback(rest_handler).with_state(Arc::clone(&logic));
            tokio::spawn(async move {
                let _ = axum::serve(listener, app).await;
            })
        }
        ProtocolKind::Socket => {
            let logic = Arc::clone(&logic);
            tokio::spawn(async move {
                loop {
                    let Ok((stream, _)) = listener.accept().await else { continue };
                    tokio::spawn(socket_connection(Arc::clone(&logic), stream));
                }
            })
        }
    };
    Ok(ServiceHandle {
        addr,
        descriptor,
        logic,
        task,
    })
}

async fn soap_handler(axum::extract::State(logic): axum::extract::State<Arc<Logic>>, body: Bytes) -> Response {
    let reply = match std::str::from_utf8(&body)
        .map_err(|_| Fault::validation("body is not UTF-8"))
        .and_then(soap::decode)
        .and_then(Envelope::into_request)
    {
        Ok(req) => logic.execute(&req).await,
        Err(f) => ResponseEnvelope::fault(String::new(), f),
    };
    (
        [("Content-Type", "text/xml; charset=utf-8")],
        soap::encode(&Envelope::Response(reply)),
    )
        .into_response()
}

async fn rest_handler(
    axum::extract::State(logic): axum::extract::State<Arc<Logic>>,
    method: HttpMethod,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let req = RestRequest {
        method,
        path: uri.path().to_owned(),
        query: uri.query().unwrap_or_default().to_owned(),
        headers: headers
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_owned(), v.to_str().ok()?.to_owned())))
            .collect(),
        body: body.to_vec(),
    };
    let correlation = req
        .header(message::rest::HDR_MESSAGE_ID)
        .and_then(|v| message::rest::unpct(v).ok())
        .unwrap_or_default();
    let op = req
        .path
        .strip_prefix(message::rest::INVOKE_PREFIX)
        .and_then(|p| message::rest::unpct(p).ok())
        .unwrap_or_default();
    let schema = logic.operations.iter().find(|o| o.name == op).map(|o| o.params.as_slice());
    let reply = match message::rest::decode_request(&req, schema) {
        Ok(env) => match env.validate() {
            Ok(()) => logic.execute(&env).await,
            Err(e) => ResponseEnvelope::fault(correlation, Fault::validation(e)),
        },
        Err(f) => ResponseEnvelope::fault(correlation, f),
    };
    let resp = message::rest::encode_response(&reply);
    let mut builder = Response::builder().status(resp.status);
    for (k, v) in &resp.headers {
        builder = builder.header(k.as_str(), v.as_str());
    }
    builder.body(axum::body::Body::from(resp.body)).expect("valid response")
}

async fn socket_connection(logic: Arc<Logic>, mut stream: TcpStream) {
    while let Ok(frame) = socket::read_frame(&mut stream).await {
        let reply = match message::decode(&ProtocolMessage::Socket(frame), ProtocolKind::Socket).and_then(Envelope::into_request) {
            Ok(req) => logic.execute(&req).await,
            Err(f) => ResponseEnvelope::fault(String::new(), f),
        };
        if socket::write_frame(&mut stream, &socket::encode(&Envelope::Response(reply))).await.is_err() {
            break;
        }
    }
}
