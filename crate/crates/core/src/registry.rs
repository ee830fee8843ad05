//! The bus's internal registry of published service descriptors.
//!
//! Operation names are globally unique: the rover addresses operations, and
//! the registry resolves their owner. Readers take a shared lock over an
//! immutable snapshot of each descriptor, so an update is observed either
//! whole or not at all.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::fault::{Fault, FaultCode};
use crate::message::{is_identifier, ParamSpec, ProtocolKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationSignature {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub returns: Vec<ParamSpec>,
    /// Name the operation has at the service endpoint, when it differs from
    /// the published name (derived services re-export under a new name).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_name: Option<String>,
}

impl OperationSignature {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        OperationSignature {
            name: name.into(),
            description: description.into(),
            params: Vec::new(),
            returns: Vec::new(),
            remote_name: None,
        }
    }

    pub fn param(mut self, name: &str, kind: crate::ParamKind) -> Self {
        self.params.push(ParamSpec::new(name, kind));
        self
    }

    pub fn returns(mut self, name: &str, kind: crate::ParamKind) -> Self {
        self.returns.push(ParamSpec::new(name, kind));
        self
    }

    /// The operation name to put on the wire towards the service.
    pub fn wire_name(&self) -> &str {
        self.remote_name.as_deref().unwrap_or(&self.name)
    }

    fn validate(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("operation name `{}` is not an identifier", self.name));
        }
        if let Some(remote) = &self.remote_name {
            if !is_identifier(remote) {
                return Err(format!("remote name `{remote}` is not an identifier"));
            }
        }
        for (label, specs) in [("param", &self.params), ("return", &self.returns)] {
            for (i, p) in specs.iter().enumerate() {
                if !is_identifier(&p.name) {
                    return Err(format!("{}: {label} name `{}` is not an identifier", self.name, p.name));
                }
                if specs[..i].iter().any(|q| q.name == p.name) {
                    return Err(format!("{}: duplicate {label} `{}`", self.name, p.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ServiceStatus {
    Active,
    Failed,
}

impl ServiceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceStatus::Active => "ACTIVE",
            ServiceStatus::Failed => "FAILED",
        }
    }
}

/// A published service description; the JSON rendering is used by both the
/// management API and the snapshot file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_name: String,
    pub protocol: ProtocolKind,
    /// `host:port`, plus a base path for HTTP protocols.
    pub endpoint: String,
    #[serde(default)]
    pub version: u64,
    #[serde(default = "default_status")]
    pub status: ServiceStatus,
    pub operations: Vec<OperationSignature>,
}

fn default_status() -> ServiceStatus {
    ServiceStatus::Active
}

impl ServiceDescriptor {
    pub fn new(
        service_name: impl Into<String>,
        protocol: ProtocolKind,
        endpoint: impl Into<String>,
        operations: Vec<OperationSignature>,
    ) -> Self {
        ServiceDescriptor {
            service_name: service_name.into(),
            protocol,
            endpoint: endpoint.into(),
            version: 0,
            status: ServiceStatus::Active,
            operations,
        }
    }

    pub fn operation(&self, name: &str) -> Option<&OperationSignature> {
        self.operations.iter().find(|o| o.name == name)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !is_identifier(&self.service_name) {
            return Err(format!("service name `{}` is not an identifier", self.service_name));
        }
        parse_endpoint(&self.endpoint)?;
        for (i, op) in self.operations.iter().enumerate() {
            op.validate()?;
            if self.operations[..i].iter().any(|o| o.name == op.name) {
                return Err(format!("duplicate operation `{}`", op.name));
            }
        }
        Ok(())
    }
}

/// Splits `host:port[/path]` into its parts.
pub fn parse_endpoint(endpoint: &str) -> Result<(String, u16, String), String> {
    let (authority, path) = match endpoint.find('/') {
        Some(i) => (&endpoint[..i], &endpoint[i..]),
        None => (endpoint, ""),
    };
    let (host, port) = authority
        .rsplit_once(':')
        .ok_or_else(|| format!("endpoint `{endpoint}` is not host:port[/path]"))?;
    if host.is_empty() {
        return Err(format!("endpoint `{endpoint}` has an empty host"));
    }
    let port = port
        .parse::<u16>()
        .map_err(|_| format!("endpoint `{endpoint}` has an invalid port"))?;
    Ok((host.to_owned(), port, path.to_owned()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("operation `{operation}` is already owned by {owner}")]
    Conflict { operation: String, owner: String },
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("invalid descriptor: {0}")]
    Invalid(String),
    #[error("registry storage: {0}")]
    Storage(String),
}

impl RegistryError {
    /// Short machine-readable code; `CONFLICT` is registry-only.
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::Conflict { .. } => "CONFLICT",
            RegistryError::UnknownService(_) => FaultCode::UnknownService.as_str(),
            RegistryError::UnknownOperation(_) => FaultCode::UnknownOperation.as_str(),
            RegistryError::Invalid(_) => FaultCode::Validation.as_str(),
            RegistryError::Storage(_) => FaultCode::Internal.as_str(),
        }
    }
}

impl From<RegistryError> for Fault {
    fn from(e: RegistryError) -> Fault {
        let code = match &e {
            RegistryError::Conflict { .. } | RegistryError::Invalid(_) => FaultCode::Validation,
            RegistryError::UnknownService(_) => FaultCode::UnknownService,
            RegistryError::UnknownOperation(_) => FaultCode::UnknownOperation,
            RegistryError::Storage(_) => FaultCode::Internal,
        };
        Fault::new(code, e.to_string())
    }
}

/// One row of the flat operation listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationEntry {
    pub name: String,
    pub description: String,
    pub service: String,
    pub status: ServiceStatus,
    pub params: Vec<ParamSpec>,
    pub returns: Vec<ParamSpec>,
}

/// Result of a successful operation lookup.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub service: Arc<ServiceDescriptor>,
    pub operation: OperationSignature,
}

#[derive(Debug, Default)]
struct State {
    services: BTreeMap<String, Arc<ServiceDescriptor>>,
    /// operation name -> owning service name
    operations: BTreeMap<String, String>,
}

#[derive(Debug, Default)]
pub struct Registry {
    state: RwLock<State>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Publishes or replaces a descriptor, returning its new version.
    pub fn publish(&self, mut d: ServiceDescriptor) -> Result<u64, RegistryError> {
        d.validate().map_err(RegistryError::Invalid)?;
        let mut st = self.state.write().expect("registry lock");
        for op in &d.operations {
            if let Some(owner) = st.operations.get(&op.name) {
                if *owner != d.service_name {
                    return Err(RegistryError::Conflict {
                        operation: op.name.clone(),
                        owner: owner.clone(),
                    });
                }
            }
        }
        let version = match st.services.get(&d.service_name).cloned() {
            Some(old) => {
                for op in &old.operations {
                    st.operations.remove(&op.name);
                }
                old.version + 1
            }
            None => 1,
        };
        d.version = version;
        d.status = ServiceStatus::Active;
        for op in &d.operations {
            st.operations.insert(op.name.clone(), d.service_name.clone());
        }
        st.services.insert(d.service_name.clone(), Arc::new(d));
        Ok(version)
    }

    pub fn unpublish(&self, service_name: &str) -> Result<ServiceDescriptor, RegistryError> {
        let mut st = self.state.write().expect("registry lock");
        let removed = st
            .services
            .remove(service_name)
            .ok_or_else(|| RegistryError::UnknownService(service_name.to_owned()))?;
        for op in &removed.operations {
            st.operations.remove(&op.name);
        }
        Ok(Arc::unwrap_or_clone(removed))
    }

    /// Sets the status and returns the previous one.
    pub fn set_status(&self, service_name: &str, status: ServiceStatus) -> Result<ServiceStatus, RegistryError> {
        let mut st = self.state.write().expect("registry lock");
        let entry = st
            .services
            .get_mut(service_name)
            .ok_or_else(|| RegistryError::UnknownService(service_name.to_owned()))?;
        let previous = entry.status;
        if previous != status {
            Arc::make_mut(entry).status = status;
        }
        Ok(previous)
    }

    pub fn lookup_by_operation(&self, operation: &str) -> Result<Resolved, RegistryError> {
        let st = self.state.read().expect("registry lock");
        let service = st
            .operations
            .get(operation)
            .and_then(|owner| st.services.get(owner))
            .ok_or_else(|| RegistryError::UnknownOperation(operation.to_owned()))?;
        let op = service.operation(operation).expect("index coherent").clone();
        Ok(Resolved {
            service: Arc::clone(service),
            operation: op,
        })
    }

    pub fn describe(&self, service_name: &str) -> Result<ServiceDescriptor, RegistryError> {
        let st = self.state.read().expect("registry lock");
        st.services
            .get(service_name)
            .map(|d| (**d).clone())
            .ok_or_else(|| RegistryError::UnknownService(service_name.to_owned()))
    }

    pub fn services(&self) -> Vec<ServiceDescriptor> {
        let st = self.state.read().expect("registry lock");
        st.services.values().map(|d| (**d).clone()).collect()
    }

    /// Every published operation, sorted by name.
    pub fn list_operations(&self) -> Vec<OperationEntry> {
        let st = self.state.read().expect("registry lock");
        st.operations
            .iter()
            .map(|(name, owner)| {
                let svc = &st.services[owner];
                let op = svc.operation(name).expect("index coherent");
                OperationEntry {
                    name: name.clone(),
                    description: op.description.clone(),
                    service: owner.clone(),
                    status: svc.status,
                    params: op.params.clone(),
                    returns: op.returns.clone(),
                }
            })
            .collect()
    }

    pub fn clear(&self) {
        *self.state.write().expect("registry lock") = State::default();
    }

    /// Serializes the full registry state as a JSON document.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(&self.services()).expect("descriptors serialize")
    }

    pub fn snapshot_to(&self, path: &Path) -> Result<(), RegistryError> {
        std::fs::write(path, self.snapshot()).map_err(|e| RegistryError::Storage(format!("{}: {e}", path.display())))
    }

    /// Replaces the registry state with a snapshot, keeping stored versions
    /// and statuses.
    pub fn restore(&self, json: &str) -> Result<(), RegistryError> {
        let services: Vec<ServiceDescriptor> =
            serde_json::from_str(json).map_err(|e| RegistryError::Storage(format!("bad snapshot: {e}")))?;
        let mut fresh = State::default();
        for d in services {
            d.validate().map_err(RegistryError::Invalid)?;
            for op in &d.operations {
                if let Some(owner) = fresh.operations.insert(op.name.clone(), d.service_name.clone()) {
                    return Err(RegistryError::Conflict {
                        operation: op.name.clone(),
                        owner,
                    });
                }
            }
            fresh.services.insert(d.service_name.clone(), Arc::new(d));
        }
        *self.state.write().expect("registry lock") = fresh;
        Ok(())
    }

    pub fn restore_from(&self, path: &Path) -> Result<(), RegistryError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Storage(format!("{}: {e}", path.display())))?;
        self.restore(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ParamKind;

    fn spectrometry() -> ServiceDescriptor {
        ServiceDescriptor::new(
            "SpectrometryService",
            ProtocolKind::Rest,
            "127.0.0.1:9002",
            vec![
                OperationSignature::new("AnalyzeParticlesSpeed", "speed")
                    .param("mass", ParamKind::Float)
                    .param("weight", ParamKind::Float)
                    .returns("velocity", ParamKind::Float),
                OperationSignature::new("AnalyzeReleasedXRays", ""),
                OperationSignature::new("AnalyzeVaporizedBits", ""),
                OperationSignature::new("ContainsCarbon", ""),
                OperationSignature::new("ContainsOxygen", ""),
            ],
        )
    }

    fn environment() -> ServiceDescriptor {
        ServiceDescriptor::new(
            "EnvironmentService",
            ProtocolKind::Socket,
            "127.0.0.1:9003",
            vec![
                OperationSignature::new("MeasurePressure", ""),
                OperationSignature::new("MeasureHumidity", ""),
            ],
        )
    }

    #[test]
    fn publish_then_lookup() {
        let r = Registry::new();
        assert_eq!(r.publish(spectrometry()).unwrap(), 1);
        let found = r.lookup_by_operation("AnalyzeParticlesSpeed").unwrap();
        assert_eq!(found.service.service_name, "SpectrometryService");
        assert_eq!(found.service.protocol, ProtocolKind::Rest);
        assert_eq!(found.operation.params.len(), 2);
    }

    #[test]
    fn republish_bumps_version_and_replaces() {
        let r = Registry::new();
        r.publish(spectrometry()).unwrap();
        assert_eq!(r.publish(spectrometry()).unwrap(), 2);
        assert_eq!(r.services().len(), 1);
    }

    #[test]
    fn cross_service_operation_collision_is_a_conflict() {
        let r = Registry::new();
        r.publish(ServiceDescriptor::new(
            "ImagingService",
            ProtocolKind::Soap,
            "127.0.0.1:9001/service",
            vec![OperationSignature::new("MagnifyImage", "")],
        ))
        .unwrap();
        let clash = ServiceDescriptor::new(
            "OtherService",
            ProtocolKind::Rest,
            "127.0.0.1:9009",
            vec![OperationSignature::new("MagnifyImage", "")],
        );
        let err = r.publish(clash).unwrap_err();
        assert_eq!(err.code(), "CONFLICT");
        assert!(r.describe("OtherService").is_err());
    }

    #[test]
    fn unpublish_removes_operations() {
        let r = Registry::new();
        r.publish(environment()).unwrap();
        r.unpublish("EnvironmentService").unwrap();
        assert!(matches!(
            r.lookup_by_operation("MeasurePressure"),
            Err(RegistryError::UnknownOperation(_))
        ));
        assert!(matches!(r.unpublish("EnvironmentService"), Err(RegistryError::UnknownService(_))));
    }

    #[test]
    fn lifecycle_replay_restarts_version() {
        let r = Registry::new();
        r.publish(environment()).unwrap();
        r.publish(environment()).unwrap();
        r.unpublish("EnvironmentService").unwrap();
        assert_eq!(r.publish(environment()).unwrap(), 1);
        assert!(r.lookup_by_operation("MeasureHumidity").is_ok());
    }

    #[test]
    fn status_changes_report_previous() {
        let r = Registry::new();
        r.publish(spectrometry()).unwrap();
        assert_eq!(r.set_status("SpectrometryService", ServiceStatus::Failed).unwrap(), ServiceStatus::Active);
        assert_eq!(r.set_status("SpectrometryService", ServiceStatus::Failed).unwrap(), ServiceStatus::Failed);
        // Failed services stay discoverable.
        let found = r.lookup_by_operation("ContainsCarbon").unwrap();
        assert_eq!(found.service.status, ServiceStatus::Failed);
        assert!(r.set_status("Nope", ServiceStatus::Active).is_err());
        // Republishing resets to ACTIVE.
        r.publish(spectrometry()).unwrap();
        assert_eq!(r.describe("SpectrometryService").unwrap().status, ServiceStatus::Active);
    }

    #[test]
    fn shrinking_update_drops_operations() {
        let r = Registry::new();
        r.publish(spectrometry()).unwrap();
        let mut smaller = spectrometry();
        smaller.operations.retain(|o| o.name != "ContainsOxygen");
        r.publish(smaller).unwrap();
        assert!(r.lookup_by_operation("ContainsOxygen").is_err());
        assert_eq!(r.list_operations().len(), 4);
    }

    #[test]
    fn listing_is_sorted_and_shrinks_on_unpublish() {
        let r = Registry::new();
        assert!(r.list_operations().is_empty());
        r.publish(spectrometry()).unwrap();
        r.publish(environment()).unwrap();
        let names: Vec<_> = r.list_operations().into_iter().map(|e| e.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), 7);
        r.unpublish("EnvironmentService").unwrap();
        assert_eq!(r.list_operations().len(), 5);
        assert!(r.lookup_by_operation("").is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let r = Registry::new();
        r.publish(spectrometry()).unwrap();
        r.publish(environment()).unwrap();
        r.set_status("EnvironmentService", ServiceStatus::Failed).unwrap();
        let before = r.list_operations();
        let snap = r.snapshot();
        r.clear();
        assert!(r.list_operations().is_empty());
        r.restore(&snap).unwrap();
        assert_eq!(r.list_operations(), before);
        assert_eq!(r.snapshot(), snap);
    }

    #[test]
    fn restore_from_missing_file_is_internal() {
        let r = Registry::new();
        let err = r.restore_from(Path::new("/nonexistent/registry.json")).unwrap_err();
        assert_eq!(err.code(), "INTERNAL");
        assert_eq!(Fault::from(err).code, FaultCode::Internal);
    }

    #[test]
    fn invalid_descriptors_are_rejected() {
        let r = Registry::new();
        let mut bad = environment();
        bad.endpoint = "nowhere".into();
        assert!(matches!(r.publish(bad), Err(RegistryError::Invalid(_))));
        let mut dup = environment();
        dup.operations.push(OperationSignature::new("MeasurePressure", ""));
        assert!(r.publish(dup).is_err());
    }

    #[test]
    fn endpoints_parse() {
        assert_eq!(
            parse_endpoint("127.0.0.1:80/service").unwrap(),
            ("127.0.0.1".into(), 80, "/service".into())
        );
        assert_eq!(parse_endpoint("host:9").unwrap(), ("host".into(), 9, String::new()));
        assert!(parse_endpoint(":9").is_err());
        assert!(parse_endpoint("host:x").is_err());
    }
}
