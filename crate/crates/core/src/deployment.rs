//! One-call local deployment: a bus plus reference services that register
//! themselves through the management API.

use crate::esb::{self, EsbConfig, EsbHandle};
use crate::rover::RoverClient;
use crate::services::{self, EsbContact, ServiceConfig, ServiceHandle, ServiceKind};

pub struct Deployment {
    pub esb: EsbHandle,
    pub services: Vec<(ServiceKind, ServiceHandle)>,
}

impl Deployment {
    /// Starts the bus and each listed service, registering them in order.
    pub async fn start(config: EsbConfig, kinds: &[ServiceKind]) -> Result<Deployment, String> {
        let esb = esb::start(config).await?;
        let mut deployment = Deployment {
            esb,
            services: Vec::new(),
        };
        for &kind in kinds {
            let handle = deployment.spawn_service(ServiceConfig::new(kind)).await?;
            handle.register().await.map_err(|f| f.to_string())?;
            deployment.services.push((kind, handle));
        }
        Ok(deployment)
    }

    /// Starts a service wired to this bus without registering it.
    pub async fn spawn_service(&self, mut config: ServiceConfig) -> Result<ServiceHandle, String> {
        config.esb = Some(self.contact());
        services::spawn(config).await.map_err(|e| e.to_string())
    }

    pub fn contact(&self) -> EsbContact {
        EsbContact {
            ops_url: self.esb.ops_url(),
            credential: self.esb.esb.config().management_secret.clone(),
        }
    }

    pub fn service(&self, kind: ServiceKind) -> Option<&ServiceHandle> {
        self.services.iter().find(|(k, _)| *k == kind).map(|(_, h)| h)
    }

    /// A rover pointed at the link proxy if there is one, else straight at
    /// the bus.
    pub fn rover(&self, client_id: &str) -> RoverClient {
        RoverClient::new(self.esb.link_url(), client_id, self.esb.esb.config().rover_secret.clone())
    }
}
