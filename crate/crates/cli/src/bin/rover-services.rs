//! Runs the reference services, optionally registering them with a bus.

use std::net::SocketAddr;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rover_esb::services::{self, EsbContact, ServiceConfig, ServiceKind};
use rover_esb_cli::{exit, init_logging, interrupted};

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Imaging,
    Spectrometry,
    Environment,
    All,
}

#[derive(Parser)]
#[command(name = "rover-services", version, about = "Reference imaging, spectrometry and environment services")]
struct Cli {
    which: Which,
    /// Listen address; only valid for a single service. Default: an ephemeral loopback port.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Published service name; only valid for a single service.
    #[arg(long)]
    name: Option<String>,
    /// Management API base URL to register with, e.g. http://127.0.0.1:7001.
    #[arg(long, env = "ESB_OPS_URL")]
    ops_url: Option<String>,
    #[arg(long, env = "ESB_OPS_CREDENTIAL", default_value = "ops-secret")]
    credential: String,
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging("info");
    let kinds: Vec<ServiceKind> = match cli.which {
        Which::Imaging => vec![ServiceKind::Imaging],
        Which::Spectrometry => vec![ServiceKind::Spectrometry],
        Which::Environment => vec![ServiceKind::Environment],
        Which::All => ServiceKind::ALL.to_vec(),
    };
    if kinds.len() > 1 && (cli.listen.is_some() || cli.name.is_some()) {
        eprintln!("rover-services: --listen and --name need a single service");
        return ExitCode::from(exit::USAGE);
    }
    let contact = cli.ops_url.map(|url| EsbContact {
        ops_url: url.trim_end_matches('/').to_owned(),
        credential: cli.credential,
    });

    let mut handles = Vec::new();
    for kind in kinds {
        let mut config = ServiceConfig::new(kind);
        if let Some(addr) = cli.listen {
            config.listen = addr;
        }
        if let Some(name) = &cli.name {
            config.service_name = name.clone();
        }
        config.esb = contact.clone();
        let handle = match services::spawn(config).await {
            Ok(h) => h,
            Err(e) => {
                eprintln!("rover-services: {}: {e}", kind.service_name());
                return ExitCode::from(exit::FAULT);
            }
        };
        println!("{:<20} {} at {}", handle.descriptor().service_name, kind.protocol(), handle.addr());
        if contact.is_some() {
            match handle.register().await {
                Ok(version) => println!("{:<20} registered, version {version}", handle.descriptor().service_name),
                Err(f) => {
                    eprintln!("rover-services: registering {}: {f}", handle.descriptor().service_name);
                    return ExitCode::from(exit::FAULT);
                }
            }
        }
        handles.push(handle);
    }

    interrupted().await;
    ExitCode::from(exit::OK)
}
