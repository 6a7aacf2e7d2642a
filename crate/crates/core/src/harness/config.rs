//! Experiment configuration: flat `section.key = value` text, strict schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, RewardKind};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Direct link never blocked.
    Ideal,
    /// Direct link always blocked.
    Blocked,
    /// Direct link blocked with probability one half.
    Mixed50,
}

impl ChannelMode {
    pub fn blockage_probability(self) -> f64 {
        match self {
            Self::Ideal => 0.0,
            Self::Blocked => 1.0,
            Self::Mixed50 => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_intervals: usize,
    pub n_seeds: usize,
    /// Overrides `scenario.blockage_probability` when set.
    pub channel_mode: Option<ChannelMode>,
    /// Number of agent-controlled surfaces; the rest keep their initial
    /// phases. Defaults to all of them.
    pub ris_count_override: Option<usize>,
    pub penalty_enabled: bool,
    /// Draw the channel once per seed and keep it.
    pub freeze_channel: bool,
    /// One schedule per user, `kind@start` segments separated by commas,
    /// e.g. `"acc@0,mse@500"`. A single schedule applies to every user.
    pub rewards: Vec<String>,
    pub output: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_intervals: 1000,
            n_seeds: 5,
            channel_mode: None,
            ris_count_override: None,
            penalty_enabled: false,
            freeze_channel: false,
            rewards: vec!["acc".into()],
            output: "metrics.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub learning_rate: f64,
    pub usage_learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub update_every: usize,
    pub updates_per_epoch: usize,
    pub relabel: bool,
    pub baseline_window: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        let p = AgentParams::default();
        Self {
            learning_rate: p.learning_rate,
            usage_learning_rate: p.usage_learning_rate,
            batch_size: p.batch_size,
            replay_capacity: p.replay_capacity,
            epsilon_start: p.epsilon_start,
            epsilon_end: p.epsilon_end,
            update_every: p.update_every,
            updates_per_epoch: p.updates_per_epoch,
            relabel: p.relabel,
            baseline_window: p.baseline_window,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentSection,
    pub agents: AgentSection,
}

/// `(start interval, kind)` segments in increasing order, first at 0.
pub type RewardSchedule = Vec<(usize, RewardKind)>;

pub fn parse_schedule(text: &str) -> Result<RewardSchedule> {
    let mut out: RewardSchedule = Vec::new();
    for seg in text.split(',') {
        let seg = seg.trim();
        let (kind, start) = match seg.split_once('@') {
            Some((k, s)) => (k, s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad interval in reward segment {seg:?}")))?),
            None => (seg, 0),
        };
        let kind: RewardKind = kind.parse()?;
        if let Some((prev, _)) = out.last() {
            if start <= *prev {
                return Err(Error::Config(format!("reward segments must start at increasing intervals: {text:?}")));
            }
        } else if start != 0 {
            return Err(Error::Config(format!("reward schedule {text:?} must start at interval 0")));
        }
        out.push((start, kind));
    }
    Ok(out)
}

pub fn kind_at(schedule: &RewardSchedule, interval: usize) -> RewardKind {
    schedule.iter().rev().find(|(s, _)| *s <= interval).map_or(schedule[0].1, |(_, k)| *k)
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is serializable")
    }

    /// Scenario with the channel mode applied.
    pub fn resolved_scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        if let Some(mode) = self.experiment.channel_mode {
            s.blockage_probability = mode.blockage_probability();
        }
        s
    }

    pub fn controlled_ris(&self) -> usize {
        self.experiment.ris_count_override.unwrap_or(self.scenario.n_ris)
    }

    pub fn agent_params(&self) -> AgentParams {
        let a = &self.agents;
        AgentParams {
            learning_rate: a.learning_rate,
            usage_learning_rate: a.usage_learning_rate,
            batch_size: a.batch_size,
            replay_capacity: a.replay_capacity,
            epsilon_start: a.epsilon_start,
            epsilon_end: a.epsilon_end,
            update_every: a.update_every,
            updates_per_epoch: a.updates_per_epoch,
            relabel: a.relabel,
            baseline_window: a.baseline_window,
            penalty_enabled: self.experiment.penalty_enabled,
        }
    }

    /// One schedule per user.
    pub fn schedules(&self) -> Result<Vec<RewardSchedule>> {
        let n = self.scenario.n_users;
        let parsed = self.experiment.rewards.iter().map(|r| parse_schedule(r)).collect::<Result<Vec<_>>>()?;
        match parsed.len() {
            1 => Ok(vec![parsed[0].clone(); n]),
            m if m == n => Ok(parsed),
            m => Err(Error::Config(format!("experiment.rewards lists {m} schedules for {n} users"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved_scenario().validate()?;
        let e = &self.experiment;
        if e.n_seeds == 0 {
            return Err(Error::Config("experiment.n_seeds must be at least 1".into()));
        }
        if self.controlled_ris() > self.scenario.n_ris {
            return Err(Error::Config(format!(
                "experiment.ris_count_override = {} exceeds scenario.n_ris = {}",
                self.controlled_ris(),
                self.scenario.n_ris
            )));
        }
        self.schedules()?;
        let a = &self.agents;
        if !(a.learning_rate >= 0.0) {
            return Err(Error::Config("agents.learning_rate must be nonnegative".into()));
        }
        if !(a.usage_learning_rate >= 0.0) {
            return Err(Error::Config("agents.usage_learning_rate must be nonnegative".into()));
        }
        if a.batch_size == 0 || a.update_every == 0 || a.replay_capacity < a.batch_size {
            return Err(Error::Config("agents.batch_size, update_every must be positive and replay_capacity >= batch_size".into()));
        }
        for (name, v) in [("epsilon_start", a.epsilon_start), ("epsilon_end", a.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("agents.{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg,
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    ExperimentSpec::from_toml(&text).map_err(|e| match e {
        Error::Config(message) => Error::ConfigParse { path: path.to_path_buf(), message },
        other => other,
    })
}
