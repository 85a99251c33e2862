//! `gauntlet`: run, inspect and steer review campaigns.

mod campaign;
mod commands;
mod error;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gauntlet", version, about = "Adversarial stage-gated review of defect candidates")]
struct Cli {
    /// Directory holding `campaign/<id>/` stores.
    #[arg(long, global = true, env = "GAUNTLET_ROOT", default_value = ".")]
    root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scaffold a campaign directory with an editable config.
    Init(InitArgs),
    /// Run or resume a campaign.
    Run(RunArgs),
    /// Funnel snapshot and queue state.
    Status(CampaignArg),
    /// Funnel report, calibration and (with a world) precision/recall.
    Report(ReportArgs),
    /// Isolation audit and rule provenance closure.
    Audit(AuditArgs),
    /// Record a human override.
    Override(OverrideArgs),
    /// Generate, validate or enumerate world files.
    #[command(subcommand)]
    World(WorldCommand),
    /// Inspect a campaign's rule ledger.
    #[command(subcommand)]
    Rules(RulesCommand),
    /// Serve the HTTP API and event stream.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct InitArgs {
    pub campaign: String,
    #[arg(long, default_value = "example/target")]
    pub repository: String,
    /// Comma-separated subsystem names; at least one per hunter.
    #[arg(long, value_delimiter = ',', default_value = "parsing,memory,io")]
    pub subsystems: Vec<String>,
    /// Agent endpoint; makes the config use the live backend.
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Args)]
pub struct RunArgs {
    /// World file for the scripted backend.
    #[arg(long, conflicts_with = "live")]
    pub sim: Option<PathBuf>,
    /// Use the live backend from the campaign config.
    #[arg(long)]
    pub live: bool,
    /// Campaign config (defaults to the one written by `init`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Campaign id (defaults to the world file name).
    #[arg(long)]
    pub campaign: Option<String>,
    /// Continue a stored campaign.
    #[arg(long)]
    pub resume: bool,
    /// Rules file to import before the first wave.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Stamp events with wall-clock milliseconds instead of a logical clock.
    #[arg(long)]
    pub wall_clock: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct CampaignArg {
    #[arg(long)]
    pub campaign: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, conflicts_with = "log")]
    pub campaign: Option<String>,
    /// Candidate log (JSON lines) to report on instead of a stored campaign.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// World file with ground truth, for precision and recall.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub campaign: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct OverrideArgs {
    /// resurrect, force-kill, set-severity or approve-disclosure
    pub action: String,
    pub candidate: String,
    /// Justification, recorded verbatim.
    #[arg(long = "why")]
    pub why: String,
    #[arg(long)]
    pub campaign: Option<String>,
    #[arg(long, env = "USER", default_value = "operator")]
    pub operator: String,
    /// Re-entry stage for a resurrection (A, B or C).
    #[arg(long)]
    pub stage: Option<String>,
    /// CVSS v3.1 base vector for set-severity.
    #[arg(long)]
    pub vector: Option<String>,
}

#[derive(Subcommand)]
pub enum WorldCommand {
    /// Print a template world.
    Generate {
        #[arg(long, default_value_t = 6)]
        candidates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Parse and check a world file.
    Validate { path: PathBuf },
    /// Exact outcome distribution by enumeration, optionally checked by Monte Carlo.
    Oracle {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        trials: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
pub enum RulesCommand {
    /// One line per rule.
    List {
        #[arg(long)]
        campaign: Option<String>,
    },
    /// Rules as JSON lines, ready for another campaign's `--rules`.
    Export {
        #[arg(long)]
        campaign: Option<String>,
    },
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

fn main() -> ExitCode {
    // Piping into `head` should end the process quietly, not panic.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let root = cli.root;
    let result = match cli.command {
        Command::Init(a) => commands::init(&root, a),
        Command::Run(a) => commands::run(&root, a),
        Command::Status(a) => commands::status(&root, a),
        Command::Report(a) => commands::report(&root, a),
        Command::Audit(a) => commands::audit(&root, a),
        Command::Override(a) => commands::override_cmd(&root, a),
        Command::World(c) => commands::world(c),
        Command::Rules(c) => commands::rules(&root, c),
        Command::Serve(a) => serve::serve(root, &a.addr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
