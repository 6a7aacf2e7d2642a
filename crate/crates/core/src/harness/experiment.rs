//! Seed-parallel experiment runner and metrics CSV.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::config::{kind_at, ExperimentSpec};
use crate::agents::{run_time_interval, AgentSet, Environment, IntervalMetrics, ObservationLayout, Phase};
use crate::error::{Error, Result};
use crate::rng::world_seed;

pub const CSV_HEADER: &str = "seed,interval,user,reward_kind,blocked,acc,mse,reward,sum_rate,rows_used";
pub const TRUNCATION_MARKER: &str = "# truncated";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: usize,
    pub metrics: IntervalMetrics,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            m.interval,
            m.user,
            m.reward_kind,
            u8::from(m.blocked),
            m.acc,
            m.mse,
            m.reward,
            m.sum_rate,
            m.rows_used
        )
    }
}

/// Fresh world and agents for seed index `seed`.
pub fn build_world(spec: &ExperimentSpec, seed: usize) -> Result<(Environment, AgentSet)> {
    let ws = world_seed(spec.scenario.seed, seed as u64);
    let cfg = spec.resolved_scenario();
    let mut env = Environment::new(
        cfg.clone(),
        spec.controlled_ris(),
        spec.experiment.freeze_channel,
        spec.experiment.penalty_enabled,
        ws,
    )?;
    let layout = ObservationLayout::new(cfg.n_users, cfg.n_bs_antennas, cfg.n_ut_antennas_per_user, cfg.n_ris, cfg.ris_rows);
    let agents = AgentSet::new(layout, cfg.n_users, cfg.n_ris, cfg.ris_rows, spec.agent_params(), env.agent_rng())?;
    Ok((env, agents))
}

/// Runs one seed; on failure returns the rows produced so far with the error.
pub fn run_seed(spec: &ExperimentSpec, seed: usize) -> (Vec<MetricsRow>, Option<Error>) {
    let mut rows = Vec::with_capacity(spec.experiment.n_intervals * spec.scenario.n_users);
    let (mut env, mut agents) = match build_world(spec, seed) {
        Ok(w) => w,
        Err(e) => return (rows, Some(e)),
    };
    let schedules = match spec.schedules() {
        Ok(s) => s,
        Err(e) => return (rows, Some(e)),
    };
    for t in 0..spec.experiment.n_intervals {
        let kinds: Vec<_> = schedules.iter().map(|s| kind_at(s, t)).collect();
        let phase = if t < spec.scenario.warmup_intervals { Phase::Offline } else { Phase::Online };
        match run_time_interval(&mut env, &mut agents, phase, &kinds) {
            Ok(ms) => rows.extend(ms.into_iter().map(|metrics| MetricsRow { seed, metrics })),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

/// Runs every seed in parallel and returns rows sorted by (seed, interval,
/// user). The first error, if any, comes back with the partial rows.
pub fn run_rows(spec: &ExperimentSpec, n_seeds: usize) -> (Vec<MetricsRow>, Option<Error>) {
    let results: Vec<_> = (0..n_seeds).into_par_iter().map(|s| run_seed(spec, s)).collect();
    let mut rows = Vec::new();
    let mut first_err = None;
    for (r, e) in results {
        rows.extend(r);
        if first_err.is_none() {
            first_err = e;
        }
    }
    rows.sort_by_key(|r| (r.seed, r.metrics.interval, r.metrics.user));
    (rows, first_err)
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[MetricsRow], error: Option<&Error>) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    if let Some(e) = error {
        writeln!(out, "{TRUNCATION_MARKER}: {e}")?;
    }
    out.flush()
}

/// Runs the experiment and writes the metrics CSV to `out`.
pub fn run_experiment(spec: &ExperimentSpec, n_seeds: usize, out: &Path) -> Result<Vec<MetricsRow>> {
    let (rows, err) = run_rows(spec, n_seeds);
    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    write_csv(&mut file, &rows, err.as_ref())?;
    match err {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}
