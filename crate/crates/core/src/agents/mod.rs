//! Value-based controllers for RIS phases, stream mapping and row usage.
//!
//! Every agent is a [`DenseNetwork`] regressing the immediate reward of its
//! chosen action (discount 0). Phase agents, one per RIS row, see the
//! channel and phase blocks of the observation; stream agents, one per
//! semantic part and user, and usage agents, one per RIS, see all of it.

mod interval;

pub use interval::{run_time_interval, Environment, IntervalMetrics, Phase};

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_network, train_batch, Activation, Adam, DenseNetwork, Target};
use crate::ofdm::StreamPlan;
use crate::ris_channel::{CMatrix, RisConfig, PHASE_LEVELS};

/// Subcarriers sampled into the channel block of an observation.
pub const OBS_SUBCARRIERS: usize = 16;
pub const PHASE_DELTAS: [i32; 5] = [-3, -1, 0, 1, 3];
pub const ROW_PENALTY: f64 = 5.0;
pub const ACC_THRESHOLD: f64 = 0.85;
pub const MSE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Acc,
    Mse,
    Rate,
}

impl RewardKind {
    /// Requirement-aware kinds map semantic parts deliberately and may
    /// economize on RIS rows.
    pub fn is_semantic(self) -> bool {
        !matches!(self, Self::Rate)
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Acc => "acc",
            Self::Mse => "mse",
            Self::Rate => "rate",
        })
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "acc" => Ok(Self::Acc),
            "mse" => Ok(Self::Mse),
            "rate" => Ok(Self::Rate),
            other => Err(Error::Config(format!("unknown reward kind {other:?}"))),
        }
    }
}

pub fn compute_reward(kind: RewardKind, acc: f64, mse: f64, rate: f64, usage: &[bool], penalty_enabled: bool) -> f64 {
    let mse = mse.max(MSE_FLOOR);
    let base = match kind {
        RewardKind::Acc if acc > ACC_THRESHOLD => 10.0 * acc - 10.0 * mse.log10(),
        RewardKind::Acc => 10.0 * acc - 100.0,
        RewardKind::Mse => -10.0 * mse.log10(),
        RewardKind::Rate => rate,
    };
    let used = usage.iter().filter(|u| **u).count() as f64;
    if penalty_enabled {
        base - ROW_PENALTY * used
    } else {
        base
    }
}

pub fn joint_multiuser_reward(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseAction {
    pub delta: i32,
}

impl PhaseAction {
    pub fn from_index(i: usize) -> Self {
        Self { delta: PHASE_DELTAS[i] }
    }

    pub fn index(self) -> usize {
        PHASE_DELTAS.iter().position(|d| *d == self.delta).expect("delta from the action set")
    }
}

/// Block widths of the observation vector, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationLayout {
    pub channel: usize,
    pub phases: usize,
    pub streams: usize,
    pub usage: usize,
}

impl ObservationLayout {
    pub fn new(n_users: usize, n_bs: usize, n_ut: usize, n_ris: usize, rows: usize) -> Self {
        Self {
            channel: n_users * OBS_SUBCARRIERS * 2 * n_bs * n_ut,
            phases: n_ris * rows,
            streams: n_users * 4,
            usage: n_ris * rows,
        }
    }

    /// Width seen by phase agents: channel and phase blocks only.
    pub fn phase_len(&self) -> usize {
        self.channel + self.phases
    }

    pub fn len(&self) -> usize {
        self.channel + self.phases + self.streams + self.usage
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Feature vector:
/// 1. per user, per sampled subcarriers `k = i K / 16`, the `n_ut x n_bs`
///    response entries (row-major) as `(re, im)` pairs;
/// 2. every row's phase index over 64;
/// 3. per user, one-hot previous stream of the background then object part;
/// 4. previous row usage as 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub layout: ObservationLayout,
}

impl Observation {
    pub fn phase_features(&self) -> &[f64] {
        &self.features[..self.layout.phase_len()]
    }
}

pub fn build_observation(
    cfr: &[&[CMatrix]],
    ris: &RisConfig,
    prev_plans: &[StreamPlan],
    prev_usage: &[Vec<bool>],
) -> Result<Observation> {
    let (n_ut, n_bs) = cfr
        .first()
        .and_then(|c| c.first())
        .map(|m| m.shape())
        .ok_or_else(|| Error::Dimension("empty channel response".into()))?;
    if prev_plans.len() != cfr.len() {
        return Err(Error::Dimension(format!("{} stream plans for {} users", prev_plans.len(), cfr.len())));
    }
    if prev_usage.len() != ris.n_ris() || prev_usage.iter().any(|u| u.len() != ris.rows()) {
        return Err(Error::Dimension("usage block does not match RIS shape".into()));
    }
    let layout = ObservationLayout::new(cfr.len(), n_bs, n_ut, ris.n_ris(), ris.rows());
    let mut f = Vec::with_capacity(layout.len());
    for user in cfr {
        let k_total = user.len();
        if k_total < OBS_SUBCARRIERS {
            return Err(Error::Dimension(format!("{k_total} subcarriers, need at least {OBS_SUBCARRIERS}")));
        }
        for i in 0..OBS_SUBCARRIERS {
            let h = &user[i * k_total / OBS_SUBCARRIERS];
            if h.shape() != (n_ut, n_bs) {
                return Err(Error::Dimension("per-user channel shapes differ".into()));
            }
            for r in 0..n_ut {
                for c in 0..n_bs {
                    f.push(h[(r, c)].re);
                    f.push(h[(r, c)].im);
                }
            }
        }
    }
    for idx in ris.phase_index.iter().flatten() {
        f.push(f64::from(*idx) / f64::from(PHASE_LEVELS));
    }
    for plan in prev_plans {
        for stream in [plan.background, plan.object] {
            f.extend((0..2).map(|s| if s == stream { 1.0 } else { 0.0 }));
        }
    }
    f.extend(prev_usage.iter().flatten().map(|u| if *u { 1.0 } else { 0.0 }));
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation".into()));
    }
    Ok(Observation { features: f, layout })
}

/// Argmax with lowest-index tie-break.
pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

fn epsilon_greedy<R: Rng + ?Sized>(net: &DenseNetwork, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::OutOfRange(format!("epsilon {epsilon}")));
    }
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_size()));
    }
    Ok(greedy(&net.forward(obs)?))
}

pub fn act_phase<R: Rng + ?Sized>(net: &DenseNetwork, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<PhaseAction> {
    Ok(PhaseAction::from_index(epsilon_greedy(net, obs, epsilon, rng)?))
}

pub fn act_stream<R: Rng + ?Sized>(net: &DenseNetwork, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    epsilon_greedy(net, obs, epsilon, rng)
}

/// Sigmoid outputs thresholded at 0.5, boundary included.
pub fn act_rows(net: &DenseNetwork, obs: &[f64]) -> Result<Vec<bool>> {
    Ok(net.forward(obs)?.into_iter().map(|p| p >= 0.5).collect())
}

/// Raw per-user result of one known frame, kept so rewards can be
/// recomputed under the requirement in force at training time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub acc: f64,
    pub mse: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub observation: Observation,
    /// Per RIS row (`ris * rows + row`); `None` when the row was not adjusted.
    pub phase_actions: Vec<Option<usize>>,
    /// Per user `[background, object]`; `None` when not chosen by agents.
    pub stream_actions: Vec<Option<[usize; 2]>>,
    /// Per RIS; `None` when the usage agent was not consulted.
    pub usage: Vec<Option<Vec<bool>>>,
    /// Rows in use during the frame, `[ris][row]`.
    pub rows_in_use: Vec<Vec<bool>>,
    pub outcomes: Vec<Outcome>,
    /// Per-user rewards under the requirements at recording time.
    pub rewards: Vec<f64>,
}

impl Experience {
    /// Per-user rewards under `kinds`.
    pub fn rewards_under(&self, kinds: &[RewardKind], penalty_enabled: bool) -> Vec<f64> {
        let usage: Vec<bool> = self.rows_in_use.iter().flatten().copied().collect();
        self.outcomes
            .iter()
            .zip(kinds)
            .map(|(o, k)| compute_reward(*k, o.acc, o.mse, o.rate, &usage, penalty_enabled))
            .collect()
    }
}

/// FIFO replay memory.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    pub capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        if self.capacity > 0 {
            self.items.push_back(e);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub learning_rate: f64,
    /// Step size of the row-usage agents, whose labels are far noisier than
    /// the value targets.
    pub usage_learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Known frames between training epochs.
    pub update_every: usize,
    /// Gradient steps per training epoch.
    pub updates_per_epoch: usize,
    /// Recompute stored rewards under the current requirements.
    pub relabel: bool,
    /// Most recent experiences averaged for the usage baseline; 0 uses the
    /// whole replay.
    pub baseline_window: usize,
    pub penalty_enabled: bool,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            usage_learning_rate: 3e-4,
            batch_size: 8,
            replay_capacity: 1024,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            update_every: 8,
            updates_per_epoch: 8,
            relabel: true,
            baseline_window: 64,
            penalty_enabled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub net: DenseNetwork,
    pub opt: Adam,
}

impl Agent {
    fn new(net: DenseNetwork) -> Self {
        let opt = Adam::new(&net);
        Self { net, opt }
    }
}

pub fn phase_network<R: Rng + ?Sized>(inputs: usize, rng: &mut R) -> Result<DenseNetwork> {
    use Activation::*;
    init_network(&[inputs, 128, 256, 64, PHASE_DELTAS.len()], &[Relu, Relu, Relu, Linear], rng)
}

pub fn stream_network<R: Rng + ?Sized>(inputs: usize, rng: &mut R) -> Result<DenseNetwork> {
    use Activation::*;
    init_network(&[inputs, 128, 128, 2], &[Relu, Relu, Linear], rng)
}

pub fn usage_network<R: Rng + ?Sized>(inputs: usize, rows: usize, rng: &mut R) -> Result<DenseNetwork> {
    use Activation::*;
    init_network(&[inputs, 128, 128, rows], &[Relu, Relu, Sigmoid], rng)
}

/// Mean pre-step loss of each agent family in one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateLosses {
    pub phase: f64,
    pub stream: f64,
    pub usage: f64,
}

#[derive(Debug, Clone)]
pub struct AgentSet {
    pub params: AgentParams,
    pub layout: ObservationLayout,
    pub n_users: usize,
    pub n_ris: usize,
    pub rows: usize,
    /// Index `ris * rows + row`.
    pub phase: Vec<Agent>,
    /// Index `user * 2 + part`, part 0 background, 1 object.
    pub stream: Vec<Agent>,
    pub usage: Vec<Agent>,
    pub replay: ReplayBuffer,
    pub epsilon: f64,
    pending: usize,
}

impl AgentSet {
    pub fn new<R: Rng + ?Sized>(layout: ObservationLayout, n_users: usize, n_ris: usize, rows: usize, params: AgentParams, rng: &mut R) -> Result<Self> {
        if params.batch_size == 0 || params.update_every == 0 {
            return Err(Error::Config("batch_size and update_every must be positive".into()));
        }
        let phase = (0..n_ris * rows)
            .map(|_| phase_network(layout.phase_len(), rng).map(Agent::new))
            .collect::<Result<_>>()?;
        let stream = (0..2 * n_users)
            .map(|_| stream_network(layout.len(), rng).map(Agent::new))
            .collect::<Result<_>>()?;
        let usage = (0..n_ris)
            .map(|_| usage_network(layout.len(), rows, rng).map(Agent::new))
            .collect::<Result<_>>()?;
        Ok(Self {
            replay: ReplayBuffer::new(params.replay_capacity),
            epsilon: params.epsilon_start,
            params,
            layout,
            n_users,
            n_ris,
            rows,
            phase,
            stream,
            usage,
            pending: 0,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.phase.len() + self.stream.len() + self.usage.len()
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over `warmup`
    /// intervals, then constant.
    pub fn epsilon_at(&self, interval: usize, warmup: usize) -> f64 {
        let (a, b) = (self.params.epsilon_start, self.params.epsilon_end);
        if warmup == 0 || interval >= warmup {
            b
        } else {
            a + (b - a) * interval as f64 / warmup as f64
        }
    }

    /// Appends an experience and runs the training epochs it triggers.
    pub fn record<R: Rng + ?Sized>(&mut self, e: Experience, kinds: &[RewardKind], rng: &mut R) -> Result<Vec<UpdateLosses>> {
        if e.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward".into()));
        }
        self.replay.push(e);
        self.pending += 1;
        let mut out = Vec::new();
        while self.pending >= self.params.update_every {
            self.pending -= self.params.update_every;
            for _ in 0..self.params.updates_per_epoch {
                if self.replay.len() >= self.params.batch_size {
                    out.push(dqn_update(self, kinds, rng)?);
                }
            }
        }
        Ok(out)
    }

    /// Writes one checkpoint per agent and a manifest of roles.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (role, file, agent) in self.roles() {
            agent.net.save(&dir.join(&file))?;
            manifest.push_str(&format!("{role} {file}\n"));
        }
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    /// Restores parameters written by [`AgentSet::save`]; shapes must match.
    pub fn load(&mut self, dir: &Path) -> Result<()> {
        let manifest = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let expected: Vec<(String, String)> = self.roles().map(|(r, f, _)| (r, f)).collect();
        let listed: Vec<(String, String)> = manifest
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split_whitespace();
                (it.next().unwrap_or("").to_string(), it.next().unwrap_or("").to_string())
            })
            .collect();
        if listed != expected {
            return Err(Error::Checkpoint("manifest does not match this agent set".into()));
        }
        let all = self.phase.iter_mut().chain(self.stream.iter_mut()).chain(self.usage.iter_mut());
        for ((_, file), agent) in expected.iter().zip(all) {
            let net = DenseNetwork::load(&dir.join(file))?;
            if net.layers.iter().map(|l| (l.n_in, l.n_out)).ne(agent.net.layers.iter().map(|l| (l.n_in, l.n_out))) {
                return Err(Error::Checkpoint(format!("{file}: shape differs")));
            }
            *agent = Agent::new(net);
        }
        Ok(())
    }

    fn roles(&self) -> impl Iterator<Item = (String, String, &Agent)> {
        let rows = self.rows;
        let phase = self.phase.iter().enumerate().map(move |(i, a)| {
            (format!("phase:ris{}:row{}", i / rows, i % rows), format!("phase_{}_{}.bin", i / rows, i % rows), a)
        });
        let stream = self.stream.iter().enumerate().map(|(i, a)| {
            let part = if i % 2 == 0 { "background" } else { "object" };
            (format!("stream:user{}:{part}", i / 2), format!("stream_{}_{part}.bin", i / 2), a)
        });
        let usage = self.usage.iter().enumerate().map(|(i, a)| (format!("usage:ris{i}"), format!("usage_{i}.bin"), a));
        phase.chain(stream).chain(usage)
    }
}

/// One gradient step for every agent on a random batch from the replay.
///
/// Phase and usage agents learn from the joint reward, stream agents from
/// their own user's reward. Usage agents are pushed toward the row choice
/// they made when the joint reward beat the running mean of recent
/// experiences, and away from it otherwise.
pub fn dqn_update<R: Rng + ?Sized>(agents: &mut AgentSet, kinds: &[RewardKind], rng: &mut R) -> Result<UpdateLosses> {
    let need = agents.params.batch_size;
    if agents.replay.len() < need {
        return Err(Error::InsufficientReplay { have: agents.replay.len(), need });
    }
    let penalty = agents.params.penalty_enabled;
    let rewards_of = |e: &Experience| -> Vec<f64> {
        if agents.params.relabel {
            e.rewards_under(kinds, penalty)
        } else {
            e.rewards.clone()
        }
    };
    let window = match agents.params.baseline_window {
        0 => agents.replay.len(),
        w => w.min(agents.replay.len()),
    };
    let skip = agents.replay.len() - window;
    let recent: Vec<f64> = agents.replay.iter().skip(skip).map(|e| joint_multiuser_reward(&rewards_of(e))).collect();
    let baseline = recent.iter().sum::<f64>() / window as f64;
    let spread = (recent.iter().map(|r| (r - baseline).powi(2)).sum::<f64>() / window as f64).sqrt().max(1e-9);
    let picks = sample(rng, agents.replay.len(), need).into_vec();
    let batch: Vec<(&Experience, Vec<f64>)> = picks
        .iter()
        .map(|i| {
            let e = agents.replay.get(*i).expect("sampled index in range");
            (e, rewards_of(e))
        })
        .collect();
    let lr = agents.params.learning_rate;
    let mut losses = UpdateLosses::default();

    let mut trained = 0usize;
    for (a, agent) in agents.phase.iter_mut().enumerate() {
        let (xs, ts): (Vec<Vec<f64>>, Vec<Target>) = batch
            .iter()
            .filter_map(|(e, r)| {
                e.phase_actions[a].map(|act| {
                    (e.observation.phase_features().to_vec(), Target::Selected { index: act, value: joint_multiuser_reward(r) })
                })
            })
            .unzip();
        if !xs.is_empty() {
            losses.phase += train_batch(&mut agent.net, &xs, &ts, &mut agent.opt, lr)?;
            trained += 1;
        }
    }
    losses.phase /= trained.max(1) as f64;

    trained = 0;
    for (a, agent) in agents.stream.iter_mut().enumerate() {
        let (user, part) = (a / 2, a % 2);
        let (xs, ts): (Vec<Vec<f64>>, Vec<Target>) = batch
            .iter()
            .filter_map(|(e, r)| {
                e.stream_actions[user].map(|acts| (e.observation.features.clone(), Target::Selected { index: acts[part], value: r[user] }))
            })
            .unzip();
        if !xs.is_empty() {
            losses.stream += train_batch(&mut agent.net, &xs, &ts, &mut agent.opt, lr)?;
            trained += 1;
        }
    }
    losses.stream /= trained.max(1) as f64;

    trained = 0;
    for (s, agent) in agents.usage.iter_mut().enumerate() {
        let (xs, ts): (Vec<Vec<f64>>, Vec<Target>) = batch
            .iter()
            .filter_map(|(e, r)| {
                e.usage[s].as_ref().map(|used| {
                    let advantage = ((joint_multiuser_reward(r) - baseline) / spread).clamp(-2.0, 2.0);
                    let target = used.iter().map(|u| if *u { 1.0 } else { 0.0 }).collect();
                    (e.observation.features.clone(), Target::WeightedBinaryCrossEntropy { target, weight: advantage })
                })
            })
            .unzip();
        if !xs.is_empty() {
            losses.usage += train_batch(&mut agent.net, &xs, &ts, &mut agent.opt, agents.params.usage_learning_rate)?;
            trained += 1;
        }
    }
    losses.usage /= trained.max(1) as f64;
    Ok(losses)
}
