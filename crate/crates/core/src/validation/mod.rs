//! Stage-C empirical checks.
//!
//! A check only counts if the signal it looks for is produced by the target.
//! Checks that compute their own observable are rejected before anything runs.

pub mod cvss;
pub mod sandbox;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::PreparedTarget;
pub use sandbox::{ContainerProvisioner, NoopProvisioner, ProbeOutput, Provisioner, SandboxLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidationStatus {
    Confirmed,
    Refuted,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationCheck {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSource {
    Target,
    PocInternal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Stdout,
    Stderr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "signal", rename_all = "snake_case")]
pub enum ExpectedSignal {
    /// First probe exits with this code.
    ExitCode { code: i32 },
    /// First probe's output contains the needle.
    Contains { stream: Stream, needle: String },
    /// At least two probes, and not all produce the same output. Identical
    /// outputs for distinct inputs refute an oracle claim.
    ProbesDiffer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    LocalExec,
    RemoteExec { provisioning: String },
    ScriptedOracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub candidate_id: String,
    #[serde(flatten)]
    pub kind: CheckKind,
    /// argv lists; `{target}` is replaced with the prepared target location.
    #[serde(default)]
    pub probes: Vec<Vec<String>>,
    pub expected_observable: String,
    pub expected: ExpectedSignal,
    pub observable_source: ObservableSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub status: ValidationStatus,
    pub transcript_ref: String,
    pub contamination_check: ContaminationCheck,
    pub runtime_seconds: f64,
}

/// Result plus the transcript body the caller persists under `transcript_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub result: ValidationResult,
    pub transcript: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("check observes its own computation: {0}")]
    ContaminatedCheck(String),
    #[error("invalid check: {0}")]
    InvalidCheck(String),
}

/// Ground-truth source for `scripted_oracle` checks (sim worlds, or a
/// human-entered outcome for spec defects).
pub trait ScriptedOracle: Send + Sync {
    fn judge(&self, candidate_id: &str, query: &OracleQuery) -> Option<ValidationStatus>;
}

/// Which validation attempt is being judged, so scripted outcomes stay
/// keyed to the attempt rather than to call order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleQuery {
    pub attempt: u32,
    pub round: u32,
    pub remote: bool,
}

/// Static screening. Runs before any execution.
pub fn screen(check: &CheckSpec) -> Result<(), ValidationError> {
    if check.expected_observable.trim().is_empty() {
        return Err(ValidationError::InvalidCheck("expected_observable is empty".into()));
    }
    if check.observable_source == ObservableSource::PocInternal {
        return Err(ValidationError::ContaminatedCheck(
            "observable_source is poc_internal".into(),
        ));
    }
    if let ExpectedSignal::Contains { needle, .. } = &check.expected {
        if needle.is_empty() {
            return Err(ValidationError::InvalidCheck("empty needle".into()));
        }
        // A probe that carries the needle in its own argv can print it without
        // the target ever producing it.
        if check.probes.iter().flatten().any(|arg| arg.contains(needle.as_str())) {
            return Err(ValidationError::ContaminatedCheck(format!(
                "needle {needle:?} appears in the probe command"
            )));
        }
    }
    match (&check.kind, &check.expected) {
        (CheckKind::RemoteExec { provisioning }, _) if provisioning.trim().is_empty() => {
            Err(ValidationError::InvalidCheck("remote_exec without provisioning descriptor".into()))
        }
        (CheckKind::LocalExec | CheckKind::RemoteExec { .. }, ExpectedSignal::ProbesDiffer)
            if check.probes.len() < 2 =>
        {
            Err(ValidationError::InvalidCheck("probes_differ needs two probes".into()))
        }
        (CheckKind::LocalExec | CheckKind::RemoteExec { .. }, _) if check.probes.is_empty() => {
            Err(ValidationError::InvalidCheck("no probes".into()))
        }
        _ => Ok(()),
    }
}

pub struct Validator<'a> {
    pub limits: SandboxLimits,
    pub provisioner: &'a dyn Provisioner,
    pub oracle: Option<&'a dyn ScriptedOracle>,
    pub query: OracleQuery,
    /// Reported runtime for scripted checks, which do not actually execute.
    pub scripted_runtime_seconds: f64,
}

impl Validator<'_> {
    pub fn execute(
        &self,
        check: &CheckSpec,
        target: &PreparedTarget,
        transcript_ref: &str,
    ) -> Result<Execution, ValidationError> {
        screen(check)?;
        let location = target.target_ref.repository.as_str();
        let probes: Vec<Vec<String>> = check
            .probes
            .iter()
            .map(|argv| argv.iter().map(|a| a.replace("{target}", location)).collect())
            .collect();
        let mut transcript = format!(
            "check {} for {}\nobservable: {}\n",
            kind_label(&check.kind),
            check.candidate_id,
            check.expected_observable
        );
        let started = std::time::Instant::now();
        let (status, runtime) = match &check.kind {
            CheckKind::ScriptedOracle => {
                let verdict = self.oracle.and_then(|o| o.judge(&check.candidate_id, &self.query));
                transcript.push_str(&format!("scripted oracle: {verdict:?}\n"));
                (
                    verdict.unwrap_or(ValidationStatus::Infeasible),
                    self.scripted_runtime_seconds,
                )
            }
            CheckKind::LocalExec => {
                let outputs = probes
                    .iter()
                    .map(|argv| sandbox::run_local(argv, &self.limits))
                    .collect::<Vec<_>>();
                let status = judge_outputs(&check.expected, &outputs, &mut transcript);
                (status, started.elapsed().as_secs_f64())
            }
            CheckKind::RemoteExec { provisioning } => {
                match self.provisioner.run(provisioning, &probes, &self.limits) {
                    Ok(outputs) => {
                        let outputs: Vec<_> = outputs.into_iter().map(Ok).collect();
                        let status = judge_outputs(&check.expected, &outputs, &mut transcript);
                        (status, started.elapsed().as_secs_f64())
                    }
                    Err(reason) => {
                        transcript.push_str(&format!("provisioning failed: {reason}\n"));
                        (ValidationStatus::Infeasible, started.elapsed().as_secs_f64())
                    }
                }
            }
        };
        transcript.push_str(&format!("status: {status:?}\n"));
        Ok(Execution {
            result: ValidationResult {
                status,
                transcript_ref: transcript_ref.to_string(),
                contamination_check: ContaminationCheck::Pass,
                runtime_seconds: runtime,
            },
            transcript,
        })
    }
}

fn kind_label(kind: &CheckKind) -> &'static str {
    match kind {
        CheckKind::LocalExec => "local_exec",
        CheckKind::RemoteExec { .. } => "remote_exec",
        CheckKind::ScriptedOracle => "scripted_oracle",
    }
}

fn judge_outputs(
    expected: &ExpectedSignal,
    outputs: &[Result<ProbeOutput, String>],
    transcript: &mut String,
) -> ValidationStatus {
    let mut ok = Vec::with_capacity(outputs.len());
    for (n, out) in outputs.iter().enumerate() {
        match out {
            Ok(o) => {
                transcript.push_str(&format!(
                    "probe {n}: exit={:?} stdout={:?} stderr={:?}{}\n",
                    o.exit_code,
                    o.stdout,
                    o.stderr,
                    if o.timed_out { " (timed out)" } else { "" }
                ));
                if o.timed_out {
                    return ValidationStatus::Infeasible;
                }
                ok.push(o);
            }
            Err(e) => {
                transcript.push_str(&format!("probe {n}: could not run: {e}\n"));
                return ValidationStatus::Infeasible;
            }
        }
    }
    let hit = match expected {
        ExpectedSignal::ExitCode { code } => ok[0].exit_code == Some(*code),
        ExpectedSignal::Contains { stream, needle } => match stream {
            Stream::Stdout => ok[0].stdout.contains(needle.as_str()),
            Stream::Stderr => ok[0].stderr.contains(needle.as_str()),
        },
        ExpectedSignal::ProbesDiffer => ok
            .windows(2)
            .any(|w| (&w[0].stdout, w[0].exit_code) != (&w[1].stdout, w[1].exit_code)),
    };
    if hit {
        ValidationStatus::Confirmed
    } else {
        ValidationStatus::Refuted
    }
}
