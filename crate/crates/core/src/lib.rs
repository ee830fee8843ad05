//! Protocol-translating service bus between a simulated planetary rover and
//! heterogeneous remote services.
//!
//! The rover speaks one canonical SOAP-style envelope to the bus; the bus
//! validates it, resolves the owning service in its registry, translates the
//! call into that service's protocol (SOAP, REST or TCP socket frames),
//! delivers it through the matching adapter and translates the reply back.

pub mod adapters;
pub mod deployment;
pub mod dsn;
pub mod esb;
pub mod fault;
pub mod message;
pub mod registry;
pub mod rover;
pub mod services;
pub mod translator;

pub use fault::{Fault, FaultCode};
pub use message::{
    Envelope, ParamKind, ParamSpec, ParamValue, ProtocolKind, ProtocolMessage, RequestEnvelope,
    ResponseEnvelope, Status, Value,
};
pub use registry::{OperationSignature, Registry, ServiceDescriptor, ServiceStatus};
pub use rover::{Policy, RoverClient};
