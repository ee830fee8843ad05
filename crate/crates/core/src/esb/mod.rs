//! The bus: session binding, the request pipeline, the audit trail and the
//! image sink. [`http`] puts it on the network.
//!
//! A request passes through validate, session check, lookup, status gate,
//! translate, route, execute and translate-back. Each step that completes
//! appends an audit record; the first failure appends `FAULTED` (naming the
//! step that was being attempted) and becomes a fault envelope.

pub mod audit;
pub mod config;
pub mod http;
pub mod images;
pub mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use tokio::sync::broadcast;

use crate::adapters::{self, AdapterSet};
use crate::dsn::{DsnLink, LinkParams};
use crate::fault::{Fault, FaultCode};
use crate::message::{new_message_id, soap, Envelope, ParamSpec, ParamValue, RequestEnvelope, ResponseEnvelope};
use crate::registry::{OperationEntry, Registry, RegistryError, ServiceDescriptor, ServiceStatus};
use crate::translator::{translate_request, translate_response};
use crate::ParamKind;

pub use audit::{is_well_ordered, AuditLog, AuditRecord, Step};
pub use config::EsbConfig;
pub use http::{start, start_with, EsbHandle};
pub use images::{content_id, ImageStore};
pub use session::{Session, Sessions};

/// Operation name the bus answers itself: `credential:text` in,
/// `session:text` out.
pub const BIND_OPERATION: &str = "Bind";

/// Everything pushed to management event subscribers.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EsbEvent {
    Published { service: String, version: u64 },
    Unpublished { service: String },
    Status { service: String, status: ServiceStatus, previous: ServiceStatus, reason: String },
    Audit(AuditRecord),
    Dsn { params: LinkParams },
}

impl EsbEvent {
    pub fn name(&self) -> &'static str {
        match self {
            EsbEvent::Published { .. } => "published",
            EsbEvent::Unpublished { .. } => "unpublished",
            EsbEvent::Status { .. } => "status",
            EsbEvent::Audit(_) => "audit",
            EsbEvent::Dsn { .. } => "dsn",
        }
    }
}

pub struct Esb {
    config: EsbConfig,
    registry: Registry,
    sessions: Sessions,
    audit: AuditLog,
    images: ImageStore,
    adapters: AdapterSet,
    dsn: Arc<DsnLink>,
    events: broadcast::Sender<EsbEvent>,
    down_streaks: Mutex<HashMap<String, u32>>,
}

/// Tracks which step a request is attempting, for the FAULTED record.
struct Trail<'a> {
    esb: &'a Esb,
    message_id: String,
    attempting: Step,
}

impl Trail<'_> {
    fn done(&mut self, step: Step, detail: impl Into<String>) {
        self.esb.record(&self.message_id, step, detail);
        if let Some(i) = Step::ORDER.iter().position(|s| *s == step) {
            self.attempting = Step::ORDER[(i + 1).min(Step::ORDER.len() - 1)];
        }
    }
}

impl Esb {
    pub fn new(config: EsbConfig) -> Result<Self, String> {
        Self::with_adapters(config, AdapterSet::standard())
    }

    /// Builds a bus with custom adapters (instrumented ones in tests).
    pub fn with_adapters(config: EsbConfig, adapters: AdapterSet) -> Result<Self, String> {
        config.validate()?;
        let audit = match &config.audit_file {
            Some(path) => AuditLog::with_file(config.audit_capacity, path)
                .map_err(|e| format!("audit file {}: {e}", path.display()))?,
            None => AuditLog::new(config.audit_capacity),
        };
        let images = ImageStore::open(&config.image_store_dir)
            .map_err(|e| format!("image store {}: {e}", config.image_store_dir.display()))?;
        let registry = Registry::new();
        if let Some(path) = &config.registry_file {
            if path.exists() {
                registry.restore_from(path).map_err(|e| e.to_string())?;
            }
        }
        let (events, _) = broadcast::channel(1024);
        Ok(Esb {
            sessions: Sessions::new(config.rover_secret.clone()),
            dsn: Arc::new(DsnLink::new(config.dsn)),
            config,
            registry,
            audit,
            images,
            adapters,
            events,
            down_streaks: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EsbConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn images(&self) -> &ImageStore {
        &self.images
    }

    pub fn dsn(&self) -> &Arc<DsnLink> {
        &self.dsn
    }

    pub fn subscribe(&self) -> broadcast::Receiver<EsbEvent> {
        self.events.subscribe()
    }

    fn emit(&self, event: EsbEvent) {
        // No subscribers is fine.
        let _ = self.events.send(event);
    }

    fn record(&self, message_id: &str, step: Step, detail: impl Into<String>) {
        let rec = self.audit.append(message_id, step, detail);
        self.emit(EsbEvent::Audit(rec));
    }

    pub fn bind(&self, client: &str, credential: &str) -> Result<Session, Fault> {
        self.sessions.bind(client, credential)
    }

    fn persist(&self) {
        if let Some(path) = &self.config.registry_file {
            if let Err(e) = self.registry.snapshot_to(path) {
                tracing::warn!("registry snapshot failed: {e}");
            }
        }
    }

    pub fn publish(&self, d: ServiceDescriptor) -> Result<u64, RegistryError> {
        if d.operation(BIND_OPERATION).is_some() {
            return Err(RegistryError::Invalid(format!("`{BIND_OPERATION}` is reserved by the bus")));
        }
        let service = d.service_name.clone();
        let version = self.registry.publish(d)?;
        self.down_streaks.lock().expect("streak lock").remove(&service);
        self.persist();
        tracing::info!(%service, version, "published");
        self.emit(EsbEvent::Published { service, version });
        Ok(version)
    }

    pub fn unpublish(&self, service: &str) -> Result<ServiceDescriptor, RegistryError> {
        let removed = self.registry.unpublish(service)?;
        self.down_streaks.lock().expect("streak lock").remove(service);
        self.persist();
        tracing::info!(%service, "unpublished");
        self.emit(EsbEvent::Unpublished {
            service: service.to_owned(),
        });
        Ok(removed)
    }

    pub fn set_status(&self, service: &str, status: ServiceStatus, reason: &str) -> Result<ServiceStatus, RegistryError> {
        let previous = self.registry.set_status(service, status)?;
        if status == ServiceStatus::Active {
            self.down_streaks.lock().expect("streak lock").remove(service);
        }
        self.persist();
        if previous != status {
            tracing::info!(%service, %reason, "status {} -> {}", previous.as_str(), status.as_str());
        }
        self.emit(EsbEvent::Status {
            service: service.to_owned(),
            status,
            previous,
            reason: reason.to_owned(),
        });
        Ok(previous)
    }

    /// Returns a service to ACTIVE, but only if its endpoint accepts
    /// connections.
    pub async fn fix(&self, service: &str) -> Result<ServiceStatus, Fault> {
        let d = self.registry.describe(service)?;
        if !adapters::probe(&d.endpoint).await {
            return Err(Fault::new(
                FaultCode::ServiceDown,
                format!("{service} is unreachable at {}", d.endpoint),
            ));
        }
        Ok(self.set_status(service, ServiceStatus::Active, "fixed by operator")?)
    }

    pub fn set_link(&self, params: LinkParams) -> Result<(), String> {
        self.dsn.set_params(params)?;
        self.emit(EsbEvent::Dsn { params });
        Ok(())
    }

    pub fn store_image(&self, payload: &[u8]) -> Result<String, Fault> {
        self.images.store(payload)
    }

    /// The operation listing offered to rovers.
    pub fn discover(&self) -> Vec<OperationEntry> {
        self.registry.list_operations()
    }

    /// Runs one rover request through the pipeline. Never fails: every
    /// problem becomes a fault envelope.
    pub async fn handle(&self, body: &[u8]) -> String {
        soap::encode(&Envelope::Response(self.process(body).await))
    }

    pub async fn process(&self, body: &[u8]) -> ResponseEnvelope {
        let text = std::str::from_utf8(body);
        let sniffed = text.ok().and_then(soap::sniff_message_id);
        let mut trail = Trail {
            esb: self,
            message_id: sniffed.clone().unwrap_or_else(|| format!("unidentified-{}", new_message_id())),
            attempting: Step::Received,
        };
        trail.done(Step::Received, format!("{} bytes", body.len()));
        let outcome = match text {
            Ok(xml) => self.pipeline(&mut trail, xml).await,
            Err(_) => Err(Fault::validation("request body is not UTF-8")),
        };
        match outcome {
            Ok(resp) if resp.fault.is_none() => {
                trail.done(Step::Delivered, format!("{} result(s)", resp.results.len()));
                resp
            }
            Ok(resp) => {
                let f = resp.fault.as_ref().expect("checked");
                self.record(&trail.message_id, Step::Faulted, format!("service fault: {f}"));
                resp
            }
            Err(f) => {
                self.record(&trail.message_id, Step::Faulted, format!("at {}: {f}", trail.attempting));
                ResponseEnvelope::fault(sniffed.unwrap_or_default(), f)
            }
        }
    }

    async fn pipeline(&self, trail: &mut Trail<'_>, xml: &str) -> Result<ResponseEnvelope, Fault> {
        let diagnostics = soap::validate(xml);
        if !diagnostics.is_empty() {
            return Err(Fault::validation(diagnostics.join("; ")));
        }
        let req = soap::decode(xml)?.into_request()?;
        trail.done(Step::Validated, format!("{} from {}", req.operation, req.source));

        if req.operation == BIND_OPERATION {
            return self.bind_request(trail, &req);
        }
        self.sessions.check(req.session.as_deref())?;

        let resolved = self.registry.lookup_by_operation(&req.operation)?;
        let service = resolved.service;
        if !req.destination.is_empty() && req.destination != service.service_name {
            return Err(Fault::new(
                FaultCode::UnknownService,
                format!("{} is served by {}, not {}", req.operation, service.service_name, req.destination),
            ));
        }
        trail.done(
            Step::Resolved,
            format!("{} -> {} v{} ({})", req.operation, service.service_name, service.version, service.protocol),
        );

        if service.status == ServiceStatus::Failed {
            return Err(Fault::new(FaultCode::ServiceDown, format!("{} is marked FAILED", service.service_name)));
        }
        let sig = resolved.operation;
        let outbound = RequestEnvelope {
            session: None,
            destination: service.service_name.clone(),
            ..req.clone()
        };
        let wire = translate_request(&outbound, &sig, service.protocol)?;
        trail.done(Step::Translated, format!("SOAP->{}", service.protocol));

        let adapter = self.adapters.for_kind(service.protocol);
        trail.done(Step::Routed, format!("{} adapter -> {}", service.protocol, service.endpoint));
        let reply = adapter.invoke(&service.endpoint, wire, self.config.timeout()).await;
        self.note_exchange(&service.service_name, reply.as_ref().err());
        let reply = reply?;
        trail.done(Step::Executed, format!("{} ms", reply.elapsed.as_millis()));

        let resp = translate_response(&reply.raw, service.protocol, &outbound, &sig.returns)?;
        trail.done(Step::ResponseTranslated, format!("{}->SOAP", service.protocol));
        Ok(resp)
    }

    fn bind_request(&self, trail: &mut Trail<'_>, req: &RequestEnvelope) -> Result<ResponseEnvelope, Fault> {
        let specs = [ParamSpec::new("credential", ParamKind::Text)];
        let params = crate::translator::conform_params(&req.params, &specs)?;
        trail.done(Step::Resolved, format!("{BIND_OPERATION} -> bus"));
        trail.attempting = Step::Executed;
        let credential = params[0].value.as_text().expect("conformed");
        let session = self.bind(&req.source, credential)?;
        trail.done(Step::Executed, format!("session issued to {}", req.source));
        Ok(ResponseEnvelope::ok(
            req.message_id.clone(),
            vec![ParamValue::text("session", session.session_id)],
        ))
    }

    /// Updates the consecutive-SERVICE_DOWN streak and marks the service
    /// FAILED once it reaches the threshold.
    fn note_exchange(&self, service: &str, error: Option<&Fault>) {
        let trip = {
            let mut streaks = self.down_streaks.lock().expect("streak lock");
            match error {
                Some(f) if f.code == FaultCode::ServiceDown => {
                    let n = streaks.entry(service.to_owned()).or_insert(0);
                    *n += 1;
                    *n >= self.config.failure_threshold
                }
                Some(_) => false,
                None => {
                    streaks.remove(service);
                    false
                }
            }
        };
        if trip {
            let reason = format!("{} consecutive SERVICE_DOWN", self.config.failure_threshold);
            if let Ok(ServiceStatus::Active) = self.set_status(service, ServiceStatus::Failed, &reason) {
                tracing::warn!(%service, "marked FAILED after {reason}");
            }
        }
    }
}
