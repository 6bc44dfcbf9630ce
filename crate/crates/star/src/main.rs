use std::fs::File;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use star::aggregation::AggregationService;
use star::config::FileConfig;
use star::costs::{measured_deployment, published_deployment, report_costs, CostTable, PriceModel};
use star::harness::{self, BenchReport, Mode, SimulationSpec, Transport};
use star::http;
use star::randomness::{RandomnessOptions, RandomnessService};
use star::relay::Relay;
use star::store::EpochStore;
use star::{Result, StarError};
use star_core::field::FieldId;

#[derive(Parser)]
#[command(name = "star", version, about = "Threshold aggregation services and benchmarks")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a client population end to end and check the report.
    Simulate(SimulateArgs),
    /// Time aggregation over pre-built messages.
    BenchAggregate(BenchAggregateArgs),
    /// Time the client path and the randomness evaluator.
    BenchClient(BenchClientArgs),
    ServeRandomness(ServeArgs),
    ServeAggregation(ServeArgs),
    ServeRelay(ServeArgs),
    /// Print the monetary cost table.
    Costs(CostsArgs),
}

#[derive(Args)]
struct CampaignFlags {
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    field: Option<FieldId>,
    #[arg(long)]
    aux_len: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    campaign: CampaignFlags,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    transport: Option<Transport>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use loopback HTTP servers.
    #[arg(long)]
    network: bool,
    #[arg(long)]
    verbose: bool,
    /// Write the published report (JSON lines) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the bench report as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchAggregateArgs {
    #[arg(long, default_value_t = 100_000)]
    messages: usize,
    #[arg(long, default_value_t = 100)]
    threshold: usize,
    #[arg(long, default_value = "F129")]
    field: FieldId,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchClientArgs {
    #[command(flatten)]
    campaign: CampaignFlags,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 2000)]
    evaluations: usize,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    campaign: CampaignFlags,
    #[arg(long)]
    addr: Option<SocketAddr>,
    /// Aggregation data directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Aggregation server base URL, for the relay.
    #[arg(long)]
    upstream: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PricePreset {
    /// Inbound $0.02/GiB, outbound $0.09/GiB.
    Stated,
    /// Directions swapped, as in the published table.
    Tabulated,
}

#[derive(Args)]
struct CostsArgs {
    #[arg(long, default_value_t = 100_000)]
    clients: u64,
    #[arg(long, value_enum)]
    preset: Option<PricePreset>,
    /// Bench report (JSON) from `simulate`; published figures when absent.
    #[arg(long)]
    bench: Option<PathBuf>,
}

fn apply_campaign(cfg: &mut FileConfig, flags: &CampaignFlags) {
    if let Some(k) = flags.threshold {
        cfg.campaign.threshold = k;
    }
    if let Some(f) = flags.field {
        cfg.campaign.field = f;
    }
    if let Some(a) = flags.aux_len {
        cfg.campaign.aux_fixed_len = a;
    }
}

fn write_csv<T: serde::Serialize>(path: Option<&PathBuf>, row: &T) -> Result<()> {
    if let Some(p) = path {
        harness::write_csv(std::slice::from_ref(row), File::create(p)?)?;
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn simulate(mut cfg: FileConfig, args: SimulateArgs) -> Result<()> {
    apply_campaign(&mut cfg, &args.campaign);
    let sim = cfg.simulation;
    let spec = SimulationSpec {
        clients: args.clients.unwrap_or(sim.clients),
        campaign: cfg.campaign,
        mode: args.mode.unwrap_or(sim.mode),
        transport: args.transport.unwrap_or(sim.transport),
        seed: args.seed.unwrap_or(sim.seed),
        zipf_support: sim.zipf_support,
        zipf_exponent: sim.zipf_exponent,
        verbose: args.verbose || sim.verbose,
    };
    let result = if args.network || sim.network {
        harness::run_simulation_loopback(&spec)?
    } else {
        harness::run_simulation(&spec)?
    };
    if let Some(p) = &args.report {
        std::fs::write(p, &result.report_jsonl)?;
    }
    write_csv(args.csv.as_ref(), &result.bench)?;
    print_json(&result.bench)
}

fn print_costs(table: &CostTable) {
    println!("{:<12} {:>12} {:>12} {:>12} {:>12}", "server", "comms_in", "comms_out", "compute", "total");
    for (name, line) in [
        ("aggregation", &table.aggregation),
        ("randomness", &table.randomness),
        ("relay", &table.relay),
    ] {
        println!(
            "{name:<12} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            line.comms_in,
            line.comms_out,
            line.computation,
            line.total()
        );
    }
    println!("{:<12} {:>51.6}", "total", table.total());
}

fn costs(cfg: FileConfig, args: CostsArgs) -> Result<()> {
    let prices = match args.preset {
        Some(PricePreset::Stated) => PriceModel::EC2_2022,
        Some(PricePreset::Tabulated) => PriceModel::EC2_2022_TABULATED,
        None => cfg.prices,
    };
    let deployment = match &args.bench {
        Some(p) => {
            let bench: BenchReport = serde_json::from_slice(&std::fs::read(p)?)?;
            measured_deployment(&bench, args.clients)
        }
        None => published_deployment(args.clients),
    };
    print_costs(&report_costs(&deployment, &prices));
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

async fn serve_until_interrupted(router: axum::Router, addr: SocketAddr) -> Result<()> {
    let handle = http::spawn(router, addr).await?;
    log::info!("listening on {}", handle.addr);
    println!("listening on {}", handle.url());
    std::io::stdout().flush()?;
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}

fn serve_randomness(cfg: FileConfig, args: ServeArgs) -> Result<()> {
    let s = &cfg.services;
    let svc = Arc::new(RandomnessService::new(RandomnessOptions {
        grace: Duration::from_secs(s.grace_secs),
        rate_limit: s.rate_limit,
        first_epoch: s.first_epoch,
    })?);
    let addr = args.addr.unwrap_or(s.randomness_addr);
    let epoch_secs = s.epoch_secs;
    runtime()?.block_on(async move {
        if let Some(secs) = epoch_secs {
            let svc = svc.clone();
            tokio::spawn(async move {
                let mut tick = tokio::time::interval(Duration::from_secs(secs.max(1)));
                tick.tick().await;
                loop {
                    tick.tick().await;
                    match svc.rotate_epoch() {
                        Ok(e) => log::info!("rotated to epoch {e}"),
                        Err(e) => log::error!("rotation failed: {e}"),
                    }
                }
            });
        }
        serve_until_interrupted(http::randomness_router(svc), addr).await
    })
}

fn serve_aggregation(mut cfg: FileConfig, args: ServeArgs) -> Result<()> {
    apply_campaign(&mut cfg, &args.campaign);
    let s = &cfg.services;
    let store = match args.data_dir.as_ref().or(s.data_dir.as_ref()) {
        Some(dir) => EpochStore::open(dir)?,
        None => EpochStore::in_memory(),
    };
    let first = s.first_epoch + cfg.campaign.epoch_offset;
    let svc = Arc::new(AggregationService::new(cfg.campaign.clone(), store, first)?.with_verbose(s.verbose_reports));
    let addr = args.addr.unwrap_or(s.aggregation_addr);
    runtime()?.block_on(serve_until_interrupted(http::aggregation_router(svc), addr))
}

fn serve_relay(cfg: FileConfig, args: ServeArgs) -> Result<()> {
    let s = &cfg.services;
    let upstream = args.upstream.unwrap_or_else(|| s.aggregation_url.clone());
    let addr = args.addr.unwrap_or(s.relay_addr);
    runtime()?.block_on(async move {
        let state = http::RelayState::new(Arc::new(Relay::generate()), upstream);
        serve_until_interrupted(http::relay_router(state), addr).await
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => simulate(cfg, a),
        Command::BenchAggregate(a) => {
            let bench = harness::bench_aggregate(a.messages, a.threshold, a.field, a.repetitions, a.seed)?;
            write_csv(a.csv.as_ref(), &bench)?;
            print_json(&bench)?;
            if !bench.oracle_match {
                return Err(StarError::OracleMismatch("aggregation benchmark report".into()));
            }
            Ok(())
        }
        Command::BenchClient(a) => {
            apply_campaign(&mut cfg, &a.campaign);
            let bench = harness::bench_client(&cfg.campaign, a.samples, a.evaluations, a.repetitions, 0)?;
            write_csv(a.csv.as_ref(), &bench)?;
            print_json(&bench)
        }
        Command::ServeRandomness(a) => serve_randomness(cfg, a),
        Command::ServeAggregation(a) => serve_aggregation(cfg, a),
        Command::ServeRelay(a) => serve_relay(cfg, a),
        Command::Costs(a) => costs(cfg, a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
