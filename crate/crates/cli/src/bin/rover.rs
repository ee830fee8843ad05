//! Headless rover: discover operations, invoke one, or run a mission script.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rover_esb::rover::{parse_param, render, run_mission, Mission};
use rover_esb::{Policy, RoverClient};
use rover_esb_cli::{exit, init_logging, json_fault, json_results};

#[derive(Parser)]
#[command(name = "rover", version, about = "Rover client for the service bus")]
struct Cli {
    /// Rover-facing base URL of the bus (or of the link proxy in front of it).
    #[arg(long, env = "ROVER_ESB_URL", default_value = "http://127.0.0.1:7000", global = true)]
    esb_url: String,
    #[arg(long, env = "ROVER_CLIENT_ID", default_value = "rover-1", global = true)]
    client_id: String,
    #[arg(long, env = "ROVER_CREDENTIAL", default_value = "rover-secret", global = true)]
    credential: String,
    /// Per-attempt timeout.
    #[arg(long, default_value_t = 5000, global = true)]
    timeout_ms: u64,
    /// Extra attempts after a TIMEOUT or SERVICE_DOWN.
    #[arg(long, default_value_t = 2, global = true)]
    retries: u32,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the operations the bus offers, sorted by name.
    Discover,
    /// Bind and invoke one operation.
    Invoke {
        operation: String,
        /// `name=value`, `name:kind=value` or `name=@file`.
        params: Vec<String>,
    },
    /// Run a mission script.
    Mission { file: PathBuf },
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging("warn");
    let policy = Policy {
        timeout: Duration::from_millis(cli.timeout_ms),
        retries: cli.retries,
    };
    let client = RoverClient::new(cli.esb_url.trim_end_matches('/'), &cli.client_id, &cli.credential);
    let code = match cli.command {
        Command::Discover => discover(&client, policy, cli.json).await,
        Command::Invoke { operation, params } => invoke(&client, policy, &operation, &params, cli.json).await,
        Command::Mission { file } => mission(&client, policy, &file, cli.json).await,
    };
    ExitCode::from(code)
}

async fn discover(client: &RoverClient, policy: Policy, json: bool) -> u8 {
    let mut ops = match client.discover(policy).await {
        Ok(ops) => ops,
        Err(f) => return fault(&f, json),
    };
    ops.sort_by(|a, b| a.name.cmp(&b.name));
    if json {
        println!("{}", serde_json::to_string_pretty(&ops).expect("listing serializes"));
    } else {
        for op in &ops {
            println!("{}", op.name);
        }
    }
    exit::OK
}

async fn invoke(client: &RoverClient, policy: Policy, operation: &str, params: &[String], json: bool) -> u8 {
    let mut values = Vec::with_capacity(params.len());
    for p in params {
        match parse_param(p, None) {
            Ok(v) => values.push(v),
            Err(e) => {
                eprintln!("rover: {e}");
                return exit::USAGE;
            }
        }
    }
    // Discovery tells the rover which service owns the operation; an
    // unknown operation is still sent so the bus can answer with a fault.
    if let Err(f) = client.discover(policy).await {
        return fault(&f, json);
    }
    if let Err(f) = client.bind(policy).await {
        return fault(&f, json);
    }
    let inv = client.invoke(operation, values, policy).await;
    match &inv.result {
        Ok(results) if json => {
            let out = serde_json::json!({
                "operation": operation,
                "message_id": inv.last_message_id(),
                "elapsed_ms": inv.elapsed.as_millis() as u64,
                "results": json_results(results),
            });
            println!("{out:#}");
            exit::OK
        }
        Ok(results) => {
            println!("{}", render(results));
            exit::OK
        }
        Err(f) => fault(f, json),
    }
}

async fn mission(client: &RoverClient, policy: Policy, file: &std::path::Path, json: bool) -> u8 {
    let mission = match Mission::load(file) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("rover: {}: {e}", file.display());
            return exit::USAGE;
        }
    };
    let report = run_mission(&mission, client, policy).await;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    if report.passed {
        exit::OK
    } else {
        exit::FAULT
    }
}

fn fault(f: &rover_esb::Fault, json: bool) -> u8 {
    if json {
        println!("{}", serde_json::json!({ "fault": json_fault(f) }));
    } else {
        eprintln!("rover: {f}");
    }
    exit::FAULT
}
