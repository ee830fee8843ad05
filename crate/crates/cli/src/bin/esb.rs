//! The service bus daemon.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rover_esb::deployment::Deployment;
use rover_esb::esb::EsbConfig;
use rover_esb::services::ServiceKind;
use rover_esb_cli::{exit, init_logging, interrupted};

#[derive(Parser)]
#[command(name = "esb", version, about = "Protocol-translating service bus for the rover")]
struct Cli {
    /// TOML configuration file; built-in defaults otherwise.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Also start the three reference services in-process and register them.
    #[arg(long)]
    with_services: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging("info");
    let config = match &cli.config {
        Some(path) => EsbConfig::load(path),
        None => Ok(EsbConfig::default()),
    };
    let config = match config.and_then(|c| c.validate().map(|()| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("esb: {e}");
            return ExitCode::from(exit::USAGE);
        }
    };
    if cli.print_config {
        println!("{config:#?}");
        return ExitCode::from(exit::OK);
    }

    let kinds: &[ServiceKind] = if cli.with_services { &ServiceKind::ALL } else { &[] };
    let deployment = match Deployment::start(config, kinds).await {
        Ok(d) => d,
        Err(e) => {
            eprintln!("esb: {e}");
            return ExitCode::from(exit::FAULT);
        }
    };
    let handle = &deployment.esb;
    println!("{:<20} {}/esb", "rover endpoint", handle.rover_url());
    println!("{:<20} {}/ops", "management API", handle.ops_url());
    if let Some(addr) = handle.dsn_addr {
        println!("{:<20} http://{addr}/esb", "link proxy");
    }
    for (kind, svc) in &deployment.services {
        println!("{:<20} {} at {}", kind.service_name(), kind.protocol(), svc.addr());
    }

    interrupted().await;
    tracing::info!("shutting down");
    ExitCode::from(exit::OK)
}
