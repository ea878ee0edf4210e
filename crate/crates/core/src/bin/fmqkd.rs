//! `fmqkd` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage error, 3 configuration
//! error, 4 channel error, 5 I/O or key-file error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use fmqkd::analysis::{self, Prediction, PUBLISHED};
use fmqkd::config::RunConfig;
use fmqkd::detector::{self, GatedDetectorConfig};
use fmqkd::interferometer;
use fmqkd::keyfile::{self, BLOCK_BITS};
use fmqkd::protocol::{self, PartyOutcome, SessionConfig, SessionError, SessionResult};
use fmqkd::report::{self, sig6, ReportRow, SessionLog};
use fmqkd::transport::{ChannelMode, TcpChannel};
use fmqkd::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_CHANNEL: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "fmqkd", version, about = "Plug-and-play QKD link simulator")]
#[command(after_help = "Exit codes: 0 ok, 1 other, 2 usage, 3 config, 4 channel, 5 I/O")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session from a config file and write report, keys and log.
    Simulate(SimulateArgs),
    /// Run both published operating points and compare with predictions.
    Table1(Table1Args),
    /// Fringe visibility over random fiber birefringence, FM vs ordinary mirror.
    FmCheck(FmCheckArgs),
    /// Print closed-form predictions.
    Analyze(AnalyzeArgs),
    /// Write seeded 65535-bit key-file blocks.
    Keygen(KeygenArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run only Alice, listening on the config's socket address.
    #[arg(long, conflicts_with = "bob")]
    alice: bool,
    /// Run only Bob, connecting to the config's socket address.
    #[arg(long)]
    bob: bool,
    /// Seconds Bob keeps retrying the connection.
    #[arg(long, default_value_t = 10.0)]
    connect_timeout: f64,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4_000_000)]
    pulses: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run the two rows in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct FmCheckArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    extinction_db: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Visibility and optical error rate for this extinction ratio.
    #[arg(long)]
    extinction_db: Option<f64>,
    /// Mean photons per pulse pair leaving Bob.
    #[arg(long, requires = "loss_db")]
    mu: Option<f64>,
    /// Loss after Alice's attenuator, dB.
    #[arg(long, requires = "mu")]
    loss_db: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 7e-6)]
    dark: f64,
    /// Predictions for a session config, as written to the report.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct KeygenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    blocks: u64,
    #[arg(long, default_value_t = BLOCK_BITS)]
    bits: u32,
}

/// A failure plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Config(_) => EXIT_CONFIG,
        Error::KeyFile(_) => EXIT_IO,
        e if e.is_channel() && !matches!(e, Error::Io(_)) => EXIT_CHANNEL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        // inside a session any I/O failure is the link's
        let code = if e.source.is_channel() { EXIT_CHANNEL } else { exit_code(&e.source) };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Table1(a) => table1(a),
        Command::FmCheck(a) => fm_check(a),
        Command::Analyze(a) => analyze(a),
        Command::Keygen(a) => keygen(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("fmqkd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[derive(Serialize)]
struct Summary {
    clicks: u64,
    sifted_bits: usize,
    mismatches: u64,
    measured_er: Option<f64>,
    disclosed_er: Option<f64>,
    final_bits: usize,
    sift_rate_per_1000: f64,
}

fn open_log(out: &Path) -> Result<SessionLog<BufWriter<File>>, Failure> {
    fs::create_dir_all(out)?;
    Ok(SessionLog::new(BufWriter::new(File::create(out.join("session.log"))?)))
}

fn simulate(args: SimulateArgs) -> CliResult {
    let run = RunConfig::load(&args.config)?;
    let cfg = &run.session;
    let mut log = open_log(&args.out)?;
    let role = if args.alice {
        "alice"
    } else if args.bob {
        "bob"
    } else {
        "both"
    };
    log.event(
        "session_start",
        &json!({ "role": role, "channel": run.channel.to_string(), "config": cfg, "commitment": hex(&cfg.commitment()) }),
    )?;

    if args.alice || args.bob {
        let ChannelMode::Socket { host, port } = &run.channel else {
            return Err(Error::Config("--alice/--bob need channel = socket:host:port".into()).into());
        };
        let addr = format!("{host}:{port}");
        return if args.alice {
            run_alice_role(cfg, &addr, &args.out, &mut log)
        } else {
            run_bob_role(cfg, &addr, Duration::from_secs_f64(args.connect_timeout.max(0.0)), &args.out, &mut log)
        };
    }

    let result = match protocol::run_session(cfg, &run.channel) {
        Ok(r) => r,
        Err(e) => {
            log.event("aborted", &json!({ "partial": e.partial, "error": e.source.to_string() }))?;
            return Err(e.into());
        }
    };
    write_outputs(cfg, &result, &args.out, &mut log)?;
    println!(
        "sifted_bits={} measured_er={} sift_rate_per_1000={}",
        result.sifted_bits(),
        result.measured_er.map_or("undefined".into(), sig6),
        sig6(result.sift_rate_per_1000())
    );
    Ok(())
}

fn write_outputs(
    cfg: &SessionConfig,
    result: &SessionResult,
    out: &Path,
    log: &mut SessionLog<BufWriter<File>>,
) -> CliResult {
    let prediction = analysis::predict(cfg)?;
    keyfile::write_key_file(&out.join("alice_sifted.qkdr"), &result.sifted_key_alice)?;
    keyfile::write_key_file(&out.join("bob_sifted.qkdr"), &result.sifted_key_bob)?;
    log.event(
        "session_end",
        &Summary {
            clicks: result.clicks,
            sifted_bits: result.sifted_bits(),
            mismatches: result.mismatches,
            measured_er: result.measured_er,
            disclosed_er: result.disclosed_er,
            final_bits: result.final_key_bob.len(),
            sift_rate_per_1000: result.sift_rate_per_1000(),
        },
    )?;
    log.event("prediction", &prediction)?;
    let row = ReportRow::new(cfg, result, &prediction)?;
    report::write_report(File::create(out.join("report.csv"))?, &[row])?;
    Ok(())
}

fn party_summary(p: &PartyOutcome) -> serde_json::Value {
    json!({
        "clicks": p.clicks,
        "pulses_completed": p.pulses_completed,
        "sifted_bits": p.sifted_key.len(),
        "disclosed": p.disclosed_indices.len(),
        "disclosed_er": p.disclosed_er,
        "final_bits": p.final_key.len(),
    })
}

fn run_alice_role(cfg: &SessionConfig, addr: &str, out: &Path, log: &mut SessionLog<BufWriter<File>>) -> CliResult {
    let listener = TcpListener::bind(addr).map_err(|e| Error::Channel(format!("bind {addr}: {e}")))?;
    log.event("listening", &json!({ "addr": addr }))?;
    let mut chan = TcpChannel::accept(&listener)?;
    let outcome = match protocol::run_alice(cfg, &mut chan) {
        Ok(o) => o,
        Err(e) => {
            log.event("aborted", &json!({ "error": e.to_string() }))?;
            return Err(e.into());
        }
    };
    keyfile::write_key_file(&out.join("alice_sifted.qkdr"), &outcome.sifted_key)?;
    log.event("session_end", &party_summary(&outcome))?;
    println!("sifted_bits={}", outcome.sifted_key.len());
    Ok(())
}

fn run_bob_role(
    cfg: &SessionConfig,
    addr: &str,
    timeout: Duration,
    out: &Path,
    log: &mut SessionLog<BufWriter<File>>,
) -> CliResult {
    let deadline = Instant::now() + timeout;
    let mut chan = loop {
        match TcpChannel::connect(addr) {
            Ok(c) => break c,
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    };
    let outcome = match protocol::run_bob(cfg, &mut chan) {
        Ok(o) => o,
        Err(e) => {
            log.event("aborted", &json!({ "partial": e.partial, "error": e.source.to_string() }))?;
            return Err(e.into());
        }
    };
    keyfile::write_key_file(&out.join("bob_sifted.qkdr"), &outcome.sifted_key)?;
    log.event("session_end", &party_summary(&outcome))?;

    // Bob alone only knows the error rate from disclosure.
    if let Some(er) = outcome.disclosed_er {
        let prediction = analysis::predict(cfg)?;
        log.event("prediction", &prediction)?;
        let row = ReportRow {
            mu: cfg.setup.mu_pair,
            measured_er: er,
            er_det_pred: prediction.er_det,
            er_opt_pred: prediction.er_opt,
            sifted_bits: outcome.sifted_key.len(),
            sift_rate_per_1000: 1000.0 * outcome.sifted_key.len() as f64 / cfg.n_pulses as f64,
        };
        report::write_report(File::create(out.join("report.csv"))?, &[row])?;
    }
    println!("sifted_bits={}", outcome.sifted_key.len());
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn table1(args: Table1Args) -> CliResult {
    if args.pulses == 0 {
        return Err(Error::InvalidArgument("--pulses must be > 0".into()).into());
    }
    let run_row = |i: usize| -> Result<analysis::Table1Row, Failure> {
        let published = &PUBLISHED[i];
        let cfg = analysis::table1_config(published.mu, args.pulses, args.seed.wrapping_add(10 * i as u64));
        let result = protocol::run_session(&cfg, &ChannelMode::InProcess)?;
        Ok(analysis::table1_row(published, &cfg, &result)?)
    };
    let rows: Vec<_> = if args.jobs > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..PUBLISHED.len()).map(|i| s.spawn(move || run_row(i))).collect();
            handles.into_iter().map(|h| h.join().expect("table1 worker panicked")).collect()
        })
    } else {
        (0..PUBLISHED.len()).map(run_row).collect()
    };
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    report::write_table1(File::create(&args.out)?, &rows)?;
    for r in &rows {
        println!(
            "mu={} measured_er={} predicted={} band=[{}, {}] sift_rate_per_1000={} ref_er={} {}",
            sig6(r.mu),
            sig6(r.measured_er),
            sig6(r.prediction.er_total()),
            sig6(r.band.0),
            sig6(r.band.1),
            sig6(r.sift_rate_per_1000),
            sig6(r.published.measured_er.value),
            if r.passed() { "pass" } else { "fail" }
        );
    }
    Ok(())
}

fn fm_check(args: FmCheckArgs) -> CliResult {
    let r = analysis::fm_check(args.samples, args.extinction_db, args.seed)?;
    println!("samples={}", r.samples);
    println!("max_visibility={}", sig6(r.max_visibility));
    println!("faraday min={} mean={} max={}", sig6(r.faraday.min), sig6(r.faraday.mean), sig6(r.faraday.max));
    println!("ordinary min={} mean={} max={}", sig6(r.ordinary.min), sig6(r.ordinary.mean), sig6(r.ordinary.max));
    println!("ordinary_worst_extinction_db={}", sig6(r.ordinary_worst_extinction_db));
    Ok(())
}

fn print_prediction(p: &Prediction) {
    println!("er_det={}", sig6(p.er_det));
    println!("er_opt={}", sig6(p.er_opt));
    println!("sift_rate_per_1000={}", sig6(p.sift_rate_per_1000));
}

fn analyze(args: AnalyzeArgs) -> CliResult {
    let mut printed = false;
    if let Some(db) = args.extinction_db {
        let v = interferometer::visibility_from_extinction_db(db)?;
        println!("visibility={}", sig6(v));
        println!("er_opt={}", sig6(interferometer::er_opt_from_visibility(v)?));
        printed = true;
    }
    if let (Some(mu), Some(loss)) = (args.mu, args.loss_db) {
        let det = GatedDetectorConfig { efficiency: args.eta, dark_prob_per_gate: args.dark, ..Default::default() };
        det.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let er = detector::er_det_analytic(mu, loss, &det, 1.0)?;
        println!("er_det={}", sig6(er));
        printed = true;
    }
    if let Some(path) = &args.config {
        let run = RunConfig::load(path)?;
        print_prediction(&analysis::predict(&run.session)?);
        printed = true;
    }
    if !printed {
        return Err(Error::InvalidArgument("give --extinction-db, --mu with --loss-db, or --config".into()).into());
    }
    Ok(())
}

fn keygen(args: KeygenArgs) -> CliResult {
    if args.blocks == 0 {
        return Err(Error::InvalidArgument("--blocks must be > 0".into()).into());
    }
    fs::create_dir_all(&args.out)?;
    for block in 0..args.blocks {
        let path = args.out.join(format!("key_{block:04}.qkdr"));
        keyfile::write_key_file(&path, &keyfile::generate_block(args.seed, block, args.bits))?;
        println!("{}", path.display());
    }
    Ok(())
}
