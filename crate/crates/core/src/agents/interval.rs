use rand::Rng;

use super::{
    act_phase, act_rows, act_stream, compute_reward, build_observation, AgentSet, Experience, Outcome, RewardKind,
};
use crate::codec::{classify, decode_frame, encode_frame, frame_mse, generate_source, N_CLASSES};
use crate::error::{Error, Result};
use crate::ofdm::{map_bits_to_streams, BITS_PER_PART, sum_rate, svd_subchannels, transmit_frame, StreamPlan};
use crate::ris_channel::{cascade, RisConfig, PHASE_LEVELS};
use crate::rng::{stream, SimRng};
use crate::scenario::{generate_multiuser_links, step_scenario, ChannelRealization, ScenarioConfig, UserState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Every frame is known and becomes an experience.
    Offline,
    /// Only the first `known_images_online` frames are known.
    Online,
    /// No learning, greedy actions.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMetrics {
    pub interval: usize,
    pub user: usize,
    pub reward_kind: RewardKind,
    pub blocked: bool,
    pub acc: f64,
    pub mse: f64,
    pub reward: f64,
    pub sum_rate: f64,
    pub rows_used: usize,
}

/// Everything a world needs besides its agents.
#[derive(Debug, Clone)]
pub struct Environment {
    pub config: ScenarioConfig,
    pub users: Vec<UserState>,
    pub ris: RisConfig,
    /// Surfaces driven by the agents; the others keep their initial phases.
    pub controlled: Vec<bool>,
    pub frozen_links: Option<Vec<ChannelRealization>>,
    pub prev_plans: Vec<StreamPlan>,
    pub prev_usage: Vec<Vec<bool>>,
    pub penalty_enabled: bool,
    pub interval: usize,
    scenario_rng: SimRng,
    link_rng: SimRng,
    source_rng: SimRng,
    noise_rng: SimRng,
    agent_rng: SimRng,
}

/// Stream mapping used when agents do not choose: codeword order over the
/// two strongest subchannels.
pub const DEFAULT_PLAN: StreamPlan = StreamPlan { background: 0, object: 1 };

impl Environment {
    pub fn new(config: ScenarioConfig, controlled_ris: usize, freeze_channel: bool, penalty_enabled: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let symbols = BITS_PER_PART / 2;
        if config.n_subcarriers < symbols {
            return Err(Error::Config(format!("frames need at least {symbols} subcarriers, got {}", config.n_subcarriers)));
        }
        if controlled_ris > config.n_ris {
            return Err(Error::Config(format!("{controlled_ris} controlled surfaces but only {} exist", config.n_ris)));
        }
        let mut scenario_rng = stream(seed, "scenario");
        let mut link_rng = stream(seed, "links");
        let mut ris_rng = stream(seed, "ris-init");
        let users: Vec<UserState> = (0..config.n_users).map(|_| UserState::initial(&config, &mut scenario_rng)).collect();
        let mut ris = RisConfig::new(config.n_ris, config.ris_rows);
        for (s, rows) in ris.phase_index.iter_mut().enumerate() {
            for p in rows.iter_mut() {
                *p = ris_rng.random_range(0..PHASE_LEVELS);
            }
            ris.row_in_use[s].iter_mut().for_each(|u| *u = s < controlled_ris);
        }
        let frozen_links = if freeze_channel {
            Some(generate_multiuser_links(&users, &config, &mut link_rng)?)
        } else {
            None
        };
        let controlled = (0..config.n_ris).map(|s| s < controlled_ris).collect();
        let prev_usage = ris.row_in_use.clone();
        Ok(Self {
            prev_plans: vec![DEFAULT_PLAN; config.n_users],
            prev_usage,
            users,
            ris,
            controlled,
            frozen_links,
            penalty_enabled,
            interval: 0,
            scenario_rng,
            link_rng,
            source_rng: stream(seed, "source"),
            noise_rng: stream(seed, "noise"),
            agent_rng: stream(seed, "agents"),
            config,
        })
    }

    pub fn agent_rng(&mut self) -> &mut SimRng {
        &mut self.agent_rng
    }
}

/// Runs one time interval and returns one metrics row per user.
pub fn run_time_interval(env: &mut Environment, agents: &mut AgentSet, phase: Phase, kinds: &[RewardKind]) -> Result<Vec<IntervalMetrics>> {
    let cfg = env.config.clone();
    let n_users = cfg.n_users;
    if kinds.len() != n_users {
        return Err(Error::Dimension(format!("{} reward kinds for {n_users} users", kinds.len())));
    }
    if env.frozen_links.is_none() && env.interval > 0 {
        env.users = env.users.iter().map(|u| step_scenario(u, &cfg, &mut env.scenario_rng)).collect();
    }
    let links = match &env.frozen_links {
        Some(l) => l.clone(),
        None => generate_multiuser_links(&env.users, &cfg, &mut env.link_rng)?,
    };

    let before: Vec<_> = links
        .iter()
        .map(|l| cascade(l, &env.ris, cfg.n_subcarriers))
        .collect::<Result<_>>()?;
    let cfrs: Vec<&[_]> = before.iter().map(|e| e.cfr.as_slice()).collect();
    let obs = build_observation(&cfrs, &env.ris, &env.prev_plans, &env.prev_usage)?;

    let epsilon = match phase {
        Phase::Frozen => 0.0,
        _ => agents.epsilon_at(env.interval, cfg.warmup_intervals),
    };
    agents.epsilon = epsilon;
    let rng = &mut env.agent_rng;

    // Row usage.
    let consult_usage = env.penalty_enabled && kinds.iter().any(|k| k.is_semantic());
    let mut usage: Vec<Option<Vec<bool>>> = vec![None; cfg.n_ris];
    for s in 0..cfg.n_ris {
        if !env.controlled[s] {
            continue;
        }
        let rows = if consult_usage {
            let mut rows = act_rows(&agents.usage[s].net, &obs.features)?;
            for r in rows.iter_mut() {
                if rng.random::<f64>() < epsilon {
                    *r = rng.random_bool(0.5);
                }
            }
            usage[s] = Some(rows.clone());
            rows
        } else {
            vec![true; cfg.ris_rows]
        };
        env.ris.row_in_use[s] = rows;
    }

    // Phase shifts for rows in use.
    let mut phase_actions = vec![None; cfg.n_ris * cfg.ris_rows];
    for s in 0..cfg.n_ris {
        for r in 0..cfg.ris_rows {
            if !env.ris.row_in_use[s][r] {
                continue;
            }
            let a = s * cfg.ris_rows + r;
            let act = act_phase(&agents.phase[a].net, obs.phase_features(), epsilon, rng)?;
            env.ris.apply_delta(s, r, act.delta);
            phase_actions[a] = Some(act.index());
        }
    }

    // Stream mapping per user.
    let mut stream_actions = vec![None; n_users];
    let mut plans = Vec::with_capacity(n_users);
    for (u, kind) in kinds.iter().enumerate() {
        if kind.is_semantic() {
            let bg = act_stream(&agents.stream[2 * u].net, &obs.features, epsilon, rng)?;
            let ob = act_stream(&agents.stream[2 * u + 1].net, &obs.features, epsilon, rng)?;
            stream_actions[u] = Some([bg, ob]);
            plans.push(StreamPlan::new(bg, ob)?);
        } else {
            plans.push(DEFAULT_PLAN);
        }
    }

    let usage_flat: Vec<bool> = env.ris.row_in_use.iter().flatten().copied().collect();
    let rows_used = usage_flat.iter().filter(|u| **u).count();

    // Transmission.
    let known = match phase {
        Phase::Offline => cfg.images_per_interval,
        Phase::Online => cfg.known_images_online.min(cfg.images_per_interval),
        Phase::Frozen => 0,
    };
    let mut per_frame: Vec<Vec<Outcome>> = vec![Vec::with_capacity(cfg.images_per_interval); n_users];
    let mut rates = Vec::with_capacity(n_users);
    for (u, l) in links.iter().enumerate() {
        let eff = cascade(l, &env.ris, cfg.n_subcarriers)?;
        let svd = svd_subchannels(&eff.cfr)?;
        let rate = sum_rate(&svd, cfg.snr_db);
        rates.push(rate);
        for _ in 0..cfg.images_per_interval {
            let label = env.source_rng.random_range(0..N_CLASSES as u8);
            let frame = generate_source(&mut env.source_rng, label)?;
            let enc = encode_frame(&frame);
            let tx = map_bits_to_streams(&enc.bits_background, &enc.bits_object, plans[u])?;
            let rx = transmit_frame(&tx, &svd, cfg.snr_db, &mut env.noise_rng)?;
            let dec = decode_frame(&rx.bits_background, &rx.bits_object, &frame.object_mask)?;
            let correct = classify(&dec, label).1;
            let mse = frame_mse(&frame.image, &dec.image)?;
            per_frame[u].push(Outcome { acc: if correct { 1.0 } else { 0.0 }, mse, rate });
        }
    }

    let n = cfg.images_per_interval.max(1) as f64;
    let metrics: Vec<IntervalMetrics> = (0..n_users)
        .map(|u| {
            let acc = per_frame[u].iter().map(|o| o.acc).sum::<f64>() / n;
            let mse = per_frame[u].iter().map(|o| o.mse).sum::<f64>() / n;
            IntervalMetrics {
                interval: env.interval,
                user: u,
                reward_kind: kinds[u],
                blocked: env.users[u].direct_link_blocked,
                acc,
                mse,
                reward: compute_reward(kinds[u], acc, mse, rates[u], &usage_flat, env.penalty_enabled),
                sum_rate: rates[u],
                rows_used,
            }
        })
        .collect();

    for k in 0..known {
        let outcomes: Vec<Outcome> = (0..n_users).map(|u| per_frame[u][k]).collect();
        let mut e = Experience {
            observation: obs.clone(),
            phase_actions: phase_actions.clone(),
            stream_actions: stream_actions.clone(),
            usage: usage.clone(),
            rows_in_use: env.ris.row_in_use.clone(),
            outcomes,
            rewards: Vec::new(),
        };
        e.rewards = e.rewards_under(kinds, env.penalty_enabled);
        agents.record(e, kinds, &mut env.agent_rng)?;
    }

    env.prev_plans = plans;
    env.prev_usage = env.ris.row_in_use.clone();
    env.interval += 1;
    Ok(metrics)
}
