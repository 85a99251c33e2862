use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::live::LiveConfig;
use crate::agent::BackendKind;
use crate::context::{Hotspot, ViewPolicy};
use crate::validation::SandboxLimits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub default_family: String,
    pub critic_families: Vec<String>,
    /// Extra informed adversaries at Stage B.
    pub arbiter_panel: usize,
    pub arbiter_family: Option<String>,
    /// When false, Stage C records every candidate as Infeasible without running a check.
    pub empirical_gate: bool,
    pub assessors: usize,
    pub max_reentries: u32,
    pub reseed_cadence: u32,
    pub max_waves: u32,
    pub hunters: usize,
    pub parallelism: usize,
    pub timeout_seconds: u64,
    /// Retry locally infeasible validations on a remote provisioner in the next window.
    pub remote_validation: bool,
    pub resurrection_agent: bool,
    pub stage_a_creatives: usize,
    pub stage_a_adversaries: usize,
    pub stage_b_creatives: usize,
    pub stage_b_adversaries: usize,
    pub view_policy: ViewPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            default_family: "family-1".into(),
            critic_families: vec!["family-2".into()],
            arbiter_panel: 0,
            arbiter_family: None,
            empirical_gate: true,
            assessors: 2,
            max_reentries: 2,
            reseed_cadence: 2,
            max_waves: 3,
            hunters: 3,
            parallelism: 4,
            timeout_seconds: 600,
            remote_validation: false,
            resurrection_agent: false,
            stage_a_creatives: 1,
            stage_a_adversaries: 2,
            stage_b_creatives: 2,
            stage_b_adversaries: 3,
            view_policy: ViewPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetConfig {
    pub repository: String,
    /// Local checkout used for git probing and `{target}` substitution.
    pub local_path: Option<PathBuf>,
    pub subsystems: Vec<String>,
    pub domain_tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvisionerKind {
    #[default]
    Noop,
    Container,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub limits: SandboxLimits,
    pub provisioner: ProvisionerKind,
    pub container_runtime: String,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            limits: SandboxLimits::default(),
            provisioner: ProvisionerKind::Noop,
            container_runtime: "docker".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "scripted")]
    pub backend: BackendKind,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub live: Option<LiveConfig>,
    /// Rules file to import at campaign start.
    #[serde(default)]
    pub rules_file: Option<PathBuf>,
    /// Static hotspots used when no local checkout is available.
    #[serde(default)]
    pub hotspots: Vec<Hotspot>,
}

fn scripted() -> BackendKind {
    BackendKind::Scripted
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error("critic family {0} equals the campaign default family")]
    SameFamilyCritic(String),
    #[error("overlapping or insufficient scopes: {0}")]
    OverlappingScopes(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::InvalidRoster(_) => "InvalidRoster",
            ConfigError::SameFamilyCritic(_) => "SameFamilyCritic",
            ConfigError::OverlappingScopes(_) => "OverlappingScopes",
            ConfigError::Invalid(_) => "InvalidConfig",
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Checks that must pass before anything is dispatched.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if p.stage_a_creatives != 1 || p.stage_a_adversaries != 2 {
            return Err(ConfigError::InvalidRoster(format!(
                "stage A needs 1 creative and 2 adversaries, got {} and {}",
                p.stage_a_creatives, p.stage_a_adversaries
            )));
        }
        if p.stage_b_creatives != 2 || p.stage_b_adversaries != 3 {
            return Err(ConfigError::InvalidRoster(format!(
                "stage B needs 2 creatives and 3 adversaries, got {} and {}",
                p.stage_b_creatives, p.stage_b_adversaries
            )));
        }
        if p.critic_families.is_empty() {
            return Err(ConfigError::InvalidRoster("stage D needs at least one critic".into()));
        }
        if let Some(f) = p.critic_families.iter().find(|f| **f == p.default_family) {
            return Err(ConfigError::SameFamilyCritic(f.clone()));
        }
        if p.assessors == 0 {
            return Err(ConfigError::InvalidRoster("stage C needs at least one assessor".into()));
        }
        if p.hunters < 3 {
            return Err(ConfigError::InvalidRoster(format!(
                "generation needs at least 3 hunters, got {}",
                p.hunters
            )));
        }
        if p.reseed_cadence == 0 || p.max_waves == 0 || p.parallelism == 0 {
            return Err(ConfigError::Invalid(
                "reseed_cadence, max_waves and parallelism must be positive".into(),
            ));
        }
        let subs = &self.target.subsystems;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = subs.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(ConfigError::OverlappingScopes(format!("subsystem {dup} listed twice")));
        }
        if subs.len() < p.hunters {
            return Err(ConfigError::OverlappingScopes(format!(
                "{} subsystems for {} hunters",
                subs.len(),
                p.hunters
            )));
        }
        if self.backend == BackendKind::Live && self.live.is_none() {
            return Err(ConfigError::Invalid("live backend needs a [live] section".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> CampaignConfig {
        CampaignConfig {
            campaign_id: "t".into(),
            seed: 1,
            backend: BackendKind::Scripted,
            target: TargetConfig {
                repository: "r".into(),
                local_path: None,
                subsystems: vec!["a".into(), "b".into(), "c".into()],
                domain_tags: vec![],
            },
            pipeline: PipelineConfig::default(),
            validation: ValidationConfig::default(),
            live: None,
            rules_file: None,
            hotspots: vec![],
        }
    }

    #[test]
    fn defaults_are_valid() {
        config().validate().unwrap();
    }

    #[test]
    fn one_stage_a_adversary_is_rejected() {
        let mut c = config();
        c.pipeline.stage_a_adversaries = 1;
        assert!(matches!(c.validate(), Err(ConfigError::InvalidRoster(_))));
    }

    #[test]
    fn same_family_critic_is_rejected() {
        let mut c = config();
        c.pipeline.critic_families = vec!["family-1".into()];
        assert_eq!(c.validate(), Err(ConfigError::SameFamilyCritic("family-1".into())));
    }

    #[test]
    fn scopes_must_cover_hunters() {
        let mut c = config();
        c.target.subsystems = vec!["a".into(), "a".into(), "b".into()];
        assert!(matches!(c.validate(), Err(ConfigError::OverlappingScopes(_))));
    }

    #[test]
    fn parses_toml() {
        let c = CampaignConfig::from_toml(
            r#"
campaign_id = "demo"
seed = 9
[target]
repository = "demo/lib"
subsystems = ["a", "b", "c"]
[pipeline]
reseed_cadence = 3
"#,
        )
        .unwrap();
        assert_eq!(c.pipeline.reseed_cadence, 3);
        assert_eq!(c.pipeline.assessors, 2);
        c.validate().unwrap();
    }
}
