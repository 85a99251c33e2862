use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use gauntlet_core::agent::live::LiveBackend;
use gauntlet_core::agent::{BackendKind, Gateway};
use gauntlet_core::candidate::Stage;
use gauntlet_core::context::audit_isolation;
use gauntlet_core::engine::{CampaignConfig, Engine};
use gauntlet_core::metrics::{self, CalibrationReport, FunnelReport, PrecisionRecall};
use gauntlet_core::overrides::{OverrideAction, OverrideRequest};
use gauntlet_core::rules::{export_rules, provenance_closure};
use gauntlet_core::sim::{self, Outcome, World, WorldSpec};
use gauntlet_core::state::CampaignState;
use gauntlet_core::store::{load_candidate_log, Store};
use gauntlet_core::util::{Clock, LogicalClock, SystemClock};
use serde::Serialize;

use crate::campaign::{self, CONFIG_FILE, WORLD_FILE};
use crate::error::{CliError, Result};
use crate::{AuditArgs, CampaignArg, InitArgs, OverrideArgs, ReportArgs, RulesCommand, RunArgs, WorldCommand};

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::new("Io", format!("{}: {e}", path.display())))
}

fn config_template(args: &InitArgs) -> String {
    let subsystems: Vec<String> = args.subsystems.iter().map(|s| format!("{s:?}")).collect();
    let mut text = format!(
        "campaign_id = {:?}\nbackend = {:?}\n\n[target]\nrepository = {:?}\nsubsystems = [{}]\ndomain_tags = []\n# local_path = \"/path/to/checkout\"\n\n[pipeline]\ndefault_family = \"family-1\"\ncritic_families = [\"family-2\"]\nhunters = 3\nmax_waves = 3\nreseed_cadence = 2\n",
        args.campaign,
        if args.endpoint.is_some() { "live" } else { "scripted" },
        args.repository,
        subsystems.join(", "),
    );
    if let Some(ep) = &args.endpoint {
        text.push_str(&format!(
            "\n[live]\nendpoint = {ep:?}\n# The token is read from this variable at dispatch time.\ntoken_env = \"GAUNTLET_API_TOKEN\"\n"
        ));
    }
    text
}

pub fn init(root: &Path, args: InitArgs) -> Result<()> {
    let dir = Store::campaign_dir(root, &args.campaign);
    let path = dir.join(CONFIG_FILE);
    if path.exists() || dir.join("campaign.json").exists() {
        return Err(CliError::new("CampaignExists", format!("{} already exists", dir.display())));
    }
    let text = config_template(&args);
    let config = CampaignConfig::from_toml(&text)?;
    config.validate()?;
    Store::create(root, &args.campaign)?;
    write(&path, &text)?;
    println!("initialized {}", dir.display());
    Ok(())
}

fn print_run(state: &CampaignState, as_json: bool) {
    let report = metrics::funnel(state);
    if as_json {
        println!("{}", json(&report));
    } else {
        let s = campaign::summary(state);
        println!(
            "campaign {}: {} candidates, {} disclosure-ready, {} killed, {} in flight",
            s.campaign_id, s.candidates, s.disclosure_ready, s.killed, s.in_flight
        );
        print!("{}", metrics::render_table(&report));
    }
}

pub fn run(root: &Path, args: RunArgs) -> Result<()> {
    if args.live || args.config.is_some() {
        return run_live(root, args);
    }
    let (spec, id, resume) = if args.resume {
        let id = campaign::pick(root, args.campaign.as_deref())?;
        let opened = campaign::open(root, &id)?;
        let world_path = match &args.sim {
            Some(p) => campaign::resolve_world(p),
            None => Store::campaign_dir(root, &id).join(WORLD_FILE),
        };
        (WorldSpec::load(&world_path)?, id, Some(opened))
    } else {
        let Some(path) = &args.sim else {
            return Err(CliError::new("Usage", "pass --sim <world> or --live"));
        };
        let path = campaign::resolve_world(path);
        let spec = WorldSpec::load(&path)?;
        let id = args.campaign.clone().unwrap_or_else(|| {
            path.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("campaign")
                .to_string()
        });
        (spec, id, None)
    };
    let seed = match &resume {
        Some((_, state)) => state.meta.seed,
        None => args.seed.unwrap_or(spec.seed),
    };
    let dir = Store::campaign_dir(root, &id);
    if resume.is_none() && dir.join("campaign.json").exists() {
        return Err(CliError::new(
            "CampaignExists",
            format!("{} already exists; pass --resume or another --campaign", dir.display()),
        ));
    }
    // A resumed store knows what is already on disk and appends only the rest.
    let (store, resume) = match resume {
        Some((store, state)) => (store, Some(state)),
        None => (Store::create(root, &id)?, None),
    };
    let mut config = spec.campaign_config(&id, seed);
    config.rules_file = args.rules.clone();
    if resume.is_none() {
        write(&dir.join(WORLD_FILE), &spec.to_toml())?;
    }
    let clock: Arc<dyn Clock> = if args.wall_clock {
        Arc::new(SystemClock)
    } else {
        Arc::new(LogicalClock::starting_at(resume.as_ref().map(campaign::last_timestamp).unwrap_or(0)))
    };
    let world = World::new(spec).with_seed(seed);
    let engine = sim::engine(&world, config).with_store(store).with_clock(clock);
    let state = engine.run_campaign(resume)?;
    print_run(&state, args.json);
    Ok(())
}

fn run_live(root: &Path, args: RunArgs) -> Result<()> {
    let (config_path, id) = match (&args.config, &args.campaign) {
        (Some(p), _) => (p.clone(), None),
        (None, c) => {
            let id = campaign::pick_with_config(root, c.as_deref())?;
            (Store::campaign_dir(root, &id).join(CONFIG_FILE), Some(id))
        }
    };
    let mut config = CampaignConfig::from_toml(&read(&config_path)?)?;
    if let Some(id) = id.or(args.campaign.clone()) {
        config.campaign_id = id;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.rules.is_some() {
        config.rules_file = args.rules.clone();
    }
    config.backend = BackendKind::Live;
    config.validate()?;
    let live = config.live.clone().expect("validated live config");
    let timeout = Duration::from_secs(config.pipeline.timeout_seconds);
    let gateway = Gateway::new(None, Some(Arc::new(LiveBackend::new(live, timeout))), timeout);
    let (store, resume) = if args.resume {
        let (store, state) = campaign::open(root, &config.campaign_id)?;
        (store, Some(state))
    } else {
        (Store::create(root, &config.campaign_id)?, None)
    };
    let state = Engine::new(config, gateway).with_store(store).run_campaign(resume)?;
    print_run(&state, args.json);
    Ok(())
}

pub fn status(root: &Path, args: CampaignArg) -> Result<()> {
    let id = campaign::pick(root, args.campaign.as_deref())?;
    let state = campaign::load(root, &id)?;
    let s = campaign::summary(&state);
    if args.json {
        println!("{}", json(&serde_json::json!({ "summary": s, "funnel": metrics::funnel(&state) })));
        return Ok(());
    }
    println!(
        "campaign {} ({}), window {}: {} candidates, {} disclosure-ready, {} killed, {} in flight, {} parked, {} deferred",
        s.campaign_id,
        if s.finished { "finished" } else { "open" },
        s.wave,
        s.candidates,
        s.disclosure_ready,
        s.killed,
        s.in_flight,
        s.parked,
        s.deferred
    );
    print!("{}", metrics::render_table(&metrics::funnel(&state)));
    for cid in &state.order {
        let c = &state.candidates[cid];
        if !c.state.is_terminal() {
            println!("  {cid}: {}", c.state.label());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FullReport {
    funnel: FunnelReport,
    calibration: CalibrationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision_recall: Option<PrecisionRecall>,
}

pub fn report(root: &Path, args: ReportArgs) -> Result<()> {
    let state = match &args.log {
        Some(path) => load_candidate_log(path)?,
        None => campaign::load(root, &campaign::pick(root, args.campaign.as_deref())?)?,
    };
    let truth = match &args.world {
        Some(p) => Some(WorldSpec::load(&campaign::resolve_world(p))?.truth()),
        None => None,
    };
    let report = FullReport {
        funnel: metrics::funnel(&state),
        calibration: metrics::calibration_report(&state),
        precision_recall: truth.map(|t| metrics::precision_recall(&state, &t)),
    };
    if args.json {
        println!("{}", json(&report));
        return Ok(());
    }
    print!("{}", metrics::render_table(&report.funnel));
    let c = &report.calibration;
    println!("severity recalibration: {} down, {} up, {} unchanged", c.down, c.up, c.unchanged);
    if let Some(pr) = &report.precision_recall {
        let pct = |x: Option<f64>| x.map(|v| format!("{:.3}", v)).unwrap_or_else(|| "-".into());
        println!("precision {}  recall {}", pct(pr.precision), pct(pr.recall));
        if !pr.false_kills.is_empty() {
            println!("false kills: {}", pr.false_kills.join(", "));
        }
    }
    Ok(())
}

#[derive(Serialize)]
pub struct AuditReport {
    pub campaign_id: String,
    pub violations: Vec<gauntlet_core::context::Violation>,
    pub unresolved_rules: Vec<String>,
    pub exposures: usize,
    pub review_dispatches: u64,
}

impl AuditReport {
    pub fn of(state: &CampaignState) -> Self {
        Self {
            campaign_id: state.campaign_id().to_string(),
            violations: audit_isolation(state),
            unresolved_rules: provenance_closure(state),
            exposures: state.exposures.len(),
            review_dispatches: state.meta.dispatches.review,
        }
    }

    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.unresolved_rules.is_empty() && self.exposures as u64 == self.review_dispatches
    }
}

pub fn audit(root: &Path, args: AuditArgs) -> Result<()> {
    let id = campaign::pick(root, args.campaign.as_deref())?;
    let state = campaign::load(root, &id)?;
    let r = AuditReport::of(&state);
    if args.json {
        println!("{}", json(&r));
    } else {
        println!("{} violations", r.violations.len());
        for v in &r.violations {
            println!(
                "  exposure {} {} on {}: {}",
                v.exposure_seq, v.agent_id, v.candidate_id, v.reason
            );
        }
        println!("{} unresolved rules", r.unresolved_rules.len());
        for id in &r.unresolved_rules {
            println!("  {id}");
        }
        println!("{} exposures for {} review dispatches", r.exposures, r.review_dispatches);
    }
    if !r.violations.is_empty() {
        return Err(CliError::new("IsolationViolation", format!("{} violations", r.violations.len())));
    }
    if !r.unresolved_rules.is_empty() {
        return Err(CliError::new("DanglingIncident", r.unresolved_rules.join(", ")));
    }
    if !r.clean() {
        return Err(CliError::new("LedgerIncomplete", "exposure ledger does not cover every review dispatch"));
    }
    Ok(())
}

pub fn override_cmd(root: &Path, args: OverrideArgs) -> Result<()> {
    let action = OverrideAction::parse(&args.action)
        .ok_or_else(|| CliError::new("UnknownAction", format!("unknown override action {}", args.action)))?;
    let target_stage = match &args.stage {
        Some(s) => Some(Stage::parse(s).ok_or_else(|| CliError::new("UnknownStage", format!("unknown stage {s}")))?),
        None => None,
    };
    let request = OverrideRequest {
        operator_id: args.operator,
        action,
        candidate_id: args.candidate,
        justification: args.why,
        target_stage,
        severity_vector: args.vector,
    };
    let (id, record) = campaign::submit_override(root, args.campaign.as_deref(), request)?;
    println!(
        "{} {:?} {} in {id}",
        record.override_id, record.action, record.candidate_id
    );
    Ok(())
}

fn outcome_name(o: Outcome) -> String {
    serde_json::to_value(o)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn world(cmd: WorldCommand) -> Result<()> {
    match cmd {
        WorldCommand::Generate { candidates, seed, out } => {
            let text = WorldSpec::template(candidates, seed).to_toml();
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
        WorldCommand::Validate { path } => {
            let spec = WorldSpec::load(&campaign::resolve_world(&path))?;
            spec.campaign_config("validate", spec.seed).validate()?;
            println!("ok: {} candidates", spec.candidates.len());
        }
        WorldCommand::Oracle { path, trials, json: as_json } => {
            let spec = WorldSpec::load(&campaign::resolve_world(&path))?;
            let exact = sim::oracle(&spec, &spec.pipeline)?;
            let mc = if trials > 0 {
                Some(sim::run_montecarlo(&spec, &spec.pipeline, trials)?)
            } else {
                None
            };
            if as_json {
                let deviation = mc.as_ref().map(|m| m.max_deviation(&exact));
                println!(
                    "{}",
                    json(&serde_json::json!({ "oracle": exact, "montecarlo": mc, "max_deviation": deviation }))
                );
                return Ok(());
            }
            for (cid, dist) in &exact.per_candidate {
                println!("{cid}");
                for (o, p) in dist.iter().filter(|(_, p)| **p > 0.0) {
                    match &mc {
                        Some(m) => println!("  {:<24}{:>10.6}{:>10.4}", outcome_name(*o), p, m.frequency(cid, *o)),
                        None => println!("  {:<24}{:>10.6}", outcome_name(*o), p),
                    }
                }
            }
            if let Some(m) = &mc {
                println!("max deviation {:.4} over {} trials", m.max_deviation(&exact), m.trials);
            }
        }
    }
    Ok(())
}

pub fn rules(root: &Path, cmd: RulesCommand) -> Result<()> {
    match cmd {
        RulesCommand::List { campaign } => {
            let state = campaign::load(root, &campaign::pick(root, campaign.as_deref())?)?;
            let unresolved = provenance_closure(&state);
            for r in &state.rules {
                let mark = if unresolved.contains(&r.rule_id) { " (unresolved)" } else { "" };
                println!("{} [{}] {}{mark}", r.rule_id, r.domain_tags.join(","), r.text);
            }
            println!("{} rules", state.rules.len());
        }
        RulesCommand::Export { campaign } => {
            let state = campaign::load(root, &campaign::pick(root, campaign.as_deref())?)?;
            print!("{}", export_rules(&state.rules));
        }
    }
    Ok(())
}
