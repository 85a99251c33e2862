//! Regenerates the recorded fixture logs under `fixtures/logs`.
//!
//! Funnel logs are built event by event so that their stage counts are exact;
//! the two-wave log is a recorded sim run.
//!
//!     cargo run -p gauntlet-core --example fixtures -- [out_dir]

use std::path::{Path, PathBuf};

use gauntlet_core::candidate::{
    Candidate, CandidateHeader, Claim, DefectClass, Event, EventKind, GateOutcome, Origin, SourceStratum, Stage,
    TargetRef,
};
use gauntlet_core::context::ViewPolicy;
use gauntlet_core::rules::{export_rules, Evidence, IncidentRef, Predicate, Rule, RuleKind};
use gauntlet_core::sim::{self, WorldSpec};
use gauntlet_core::state::CampaignMeta;
use gauntlet_core::store::{export_jsonl, state_from_candidates};
use gauntlet_core::util::canonical_digest;
use gauntlet_core::validation::ValidationStatus;

/// Where a scripted candidate stops.
#[derive(Clone, Copy)]
enum End {
    Killed(Stage),
    Survives,
}

struct Builder {
    candidate: Candidate,
    clock: u64,
    verdicts: u64,
}

impl Builder {
    fn new(id: &str, wave: u32, i: usize) -> Self {
        let strata = SourceStratum::ALL;
        let header = CandidateHeader {
            id: id.to_string(),
            target_ref: TargetRef {
                repository: "example/fixture".into(),
                revision: "v1.0.0".into(),
                development_head: false,
            },
            claim: Claim {
                title: format!("fixture candidate {id}"),
                defect_class: DefectClass::MemorySafety,
                claimed_severity: None,
                entry_points: vec![format!("src/f{}.c:{}", i % 7, 10 + i)],
                summary: format!("fixture candidate {id}"),
            },
            origin: Origin {
                hunter_id: format!("family-1/hunter.{}", i % 3 + 1),
                wave,
                source_stratum: strata[i % strata.len()],
                scope_stratum: format!("s{}", i % 3),
            },
        };
        let candidate = Candidate::generate(header, 0, "intake").expect("fixture claim is valid");
        Self {
            candidate,
            clock: 0,
            verdicts: 0,
        }
    }

    fn push(&mut self, kind: EventKind, payload: String) {
        self.clock += 1;
        let event = Event {
            seq: self.candidate.next_seq(),
            timestamp: self.clock,
            kind,
            payload_ref: payload,
        };
        self.candidate.apply(event).expect("fixture history is legal");
    }

    fn review(&mut self, stage: Stage) -> String {
        self.push(
            EventKind::Dispatched {
                stage,
                agent_id: format!("family-1/{}.reviewer", stage.to_string().to_lowercase()),
                window: self.candidate.origin.wave,
            },
            String::new(),
        );
        self.verdicts += 1;
        let vid = format!("{}-v{}", self.candidate.id, self.verdicts);
        self.push(EventKind::VerdictRecorded { stage }, vid.clone());
        vid
    }

    fn gate(&mut self, stage: Stage, outcome: GateOutcome) {
        let vid = self.review(stage);
        self.push(
            EventKind::GateDecided {
                stage,
                outcome,
                verdict_refs: vec![vid],
                unanimity_warning: false,
                reentry_target: None,
            },
            format!("{}-d{}", self.candidate.id, stage),
        );
    }

    fn validate(&mut self, status: ValidationStatus) {
        self.review(Stage::C);
        self.push(
            EventKind::Validated {
                status,
                unanimity_warning: false,
            },
            format!("{}-dC", self.candidate.id),
        );
    }

    fn run(mut self, end: End) -> Candidate {
        for stage in Stage::ALL {
            let killed_here = matches!(end, End::Killed(s) if s == stage);
            match stage {
                Stage::C => self.validate(if killed_here {
                    ValidationStatus::Refuted
                } else {
                    ValidationStatus::Confirmed
                }),
                _ => self.gate(stage, if killed_here { GateOutcome::Kill } else { GateOutcome::Promote }),
            }
            if killed_here {
                break;
            }
        }
        self.candidate
    }
}

/// A single-wave log whose per-stage kills are `kills` and whose remaining
/// candidates survive.
fn funnel_log(campaign: &str, entrants: usize, kills: [usize; 4]) -> String {
    let mut ends = vec![];
    for (s, n) in Stage::ALL.iter().zip(kills) {
        ends.extend(std::iter::repeat_n(End::Killed(*s), n));
    }
    ends.resize(entrants, End::Survives);
    let candidates: Vec<Candidate> = ends
        .into_iter()
        .enumerate()
        .map(|(i, end)| Builder::new(&format!("{campaign}-{:03}", i + 1), 1, i).run(end))
        .collect();
    let meta = CampaignMeta::new(campaign, 0, ViewPolicy::default());
    state_from_candidates(meta, candidates.clone()).expect("fixture candidates replay");
    export_jsonl(&candidates)
}

fn rules_fixture() -> String {
    let incident_event = Event {
        seq: 4,
        timestamp: 1_700_000_000,
        kind: EventKind::GateDecided {
            stage: Stage::A,
            outcome: GateOutcome::Kill,
            verdict_refs: vec!["v000031".into()],
            unanimity_warning: false,
            reentry_target: None,
        },
        payload_ref: "d000012".into(),
    };
    let evidence = Evidence {
        event_digest: canonical_digest(&incident_event),
        event: incident_event,
    };
    let shared: [&[&str]; 3] = [&["c"], &["c", "parsing"], &["memory-safety", "c"]];
    let foreign: [&[&str]; 3] = [&["javascript"], &["go", "web"], &["jvm"]];
    let rules: Vec<Rule> = (1..=56)
        .map(|n| {
            let transferable = n <= 30;
            let tags = if transferable {
                shared[n % shared.len()]
            } else {
                foreign[n % foreign.len()]
            };
            let compliance = n % 10 == 0;
            Rule {
                rule_id: format!("R{n:03}"),
                text: if compliance {
                    format!("Placeholder compliance rule {n}: a kill verdict cites at least one code location.")
                } else {
                    format!("Placeholder advisory rule {n} learned from a prior campaign.")
                },
                kind: if compliance {
                    RuleKind::ComplianceCheck
                } else {
                    RuleKind::Advisory
                },
                origin_incident: IncidentRef {
                    campaign_id: "prior-campaign".into(),
                    candidate_id: "prior-017".into(),
                    event_seq: 4,
                },
                evidence: evidence.clone(),
                domain_tags: tags.iter().map(|t| t.to_string()).collect(),
                created_at: 1_700_000_000 + n as u64,
                predicate: compliance.then_some(Predicate::KillRequiresEvidence),
                supersedes: None,
            }
        })
        .collect();
    export_rules(&rules)
}

fn two_wave_log(root: &Path) -> String {
    let spec = WorldSpec::load(&root.join("world_two_wave.toml")).expect("two-wave world loads");
    let state = sim::run_world(&spec, "two-wave", spec.seed).expect("two-wave world runs");
    let candidates: Vec<Candidate> = state.order.iter().map(|c| state.candidates[c].clone()).collect();
    export_jsonl(&candidates)
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| root.join("logs"));
    std::fs::create_dir_all(&out).expect("create output directory");
    let files = [
        ("funnel_171.jsonl", funnel_log("security", 171, [107, 27, 1, 0])),
        ("funnel_30.jsonl", funnel_log("subset", 30, [19, 5, 1, 0])),
        ("funnel_100.jsonl", funnel_log("stage-a", 100, [63, 16, 0, 0])),
        ("rules_56.jsonl", rules_fixture()),
        ("two_wave.jsonl", two_wave_log(&root)),
    ];
    for (name, text) in files {
        let path = out.join(name);
        std::fs::write(&path, text).expect("write fixture");
        println!("wrote {}", path.display());
    }
}
