//! Exhaustive phase search over at most two rows on a fixed channel.

use num_complex::Complex64;

use super::config::ExperimentSpec;
use super::experiment::build_world;
use crate::error::{Error, Result};
use crate::ofdm::{singular_values, sum_rate_from_gains};
use crate::ris_channel::{cascade_cir, cir_matrix_to_cfr, row_cir, CMatrix, RisConfig, PHASE_LEVELS};
use crate::scenario::{generate_multiuser_links, ChannelRealization};

/// Largest search space the oracle accepts.
pub const MAX_CONFIGS: u64 = 64 * 64;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best phase index of each searched row, in the order given.
    pub indices: Vec<u8>,
    pub value: f64,
}

/// Sum rate of the channel with the searched rows at `indices`, every other
/// row held at its phase in `ris`.
pub struct RowSearch {
    base: Vec<CMatrix>,
    /// `[searched row][phase] -> per-subcarrier contribution`.
    contrib: Vec<Vec<Vec<CMatrix>>>,
    snr_db: f64,
}

impl RowSearch {
    pub fn new(links: &ChannelRealization, ris: &RisConfig, rows: &[(usize, usize)], n_subcarriers: usize, snr_db: f64) -> Result<Self> {
        let space = (PHASE_LEVELS as u64).checked_pow(rows.len() as u32).unwrap_or(u64::MAX);
        if space > MAX_CONFIGS {
            return Err(Error::SearchSpaceTooLarge(space));
        }
        for (i, &(s, r)) in rows.iter().enumerate() {
            if s >= ris.n_ris() || r >= ris.rows() {
                return Err(Error::OutOfRange(format!("row ({s}, {r}) not on the surface")));
            }
            if rows[..i].contains(&(s, r)) {
                return Err(Error::Config(format!("row ({s}, {r}) listed twice")));
            }
        }
        let mut base_cir = cascade_cir(links, ris)?;
        for &(s, r) in rows {
            let cur = row_cir(links, s, r, ris.rows(), ris.phase_index[s][r])?;
            subtract(&mut base_cir, &cur);
        }
        let base = cir_matrix_to_cfr(&base_cir, n_subcarriers)?;
        let contrib = rows
            .iter()
            .map(|&(s, r)| {
                (0..PHASE_LEVELS)
                    .map(|p| cir_matrix_to_cfr(&row_cir(links, s, r, ris.rows(), p)?, n_subcarriers))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base, contrib, snr_db })
    }

    pub fn value(&self, indices: &[u8]) -> f64 {
        let lambda: Vec<Vec<f64>> = (0..self.base.len())
            .map(|k| {
                let mut h = self.base[k].clone();
                for (row, &p) in self.contrib.iter().zip(indices) {
                    h += &row[usize::from(p)][k];
                }
                singular_values(&h)
            })
            .collect();
        sum_rate_from_gains(&lambda, self.snr_db)
    }
}

fn subtract(a: &mut [Vec<Vec<Complex64>>], b: &[Vec<Vec<Complex64>>]) {
    for (ai, bi) in a.iter_mut().zip(b) {
        for (aj, bj) in ai.iter_mut().zip(bi) {
            for (x, y) in aj.iter_mut().zip(bj) {
                *x -= y;
            }
        }
    }
}

/// Enumerates every phase tuple of `rows` (at most 64^2) and returns the
/// sum-rate maximizer; ties go to the lexicographically smallest tuple.
pub fn exhaustive_oracle(
    links: &ChannelRealization,
    ris: &RisConfig,
    rows: &[(usize, usize)],
    n_subcarriers: usize,
    snr_db: f64,
) -> Result<OracleResult> {
    let search = RowSearch::new(links, ris, rows, n_subcarriers, snr_db)?;
    let n = rows.len() as u32;
    let total = (PHASE_LEVELS as u64).pow(n);
    let mut best = OracleResult { indices: vec![0; rows.len()], value: f64::NEG_INFINITY };
    let mut idx = vec![0u8; rows.len()];
    for code in 0..total {
        let mut c = code;
        for slot in idx.iter_mut().rev() {
            *slot = (c % PHASE_LEVELS as u64) as u8;
            c /= PHASE_LEVELS as u64;
        }
        let v = search.value(&idx);
        if v > best.value {
            best = OracleResult { indices: idx.clone(), value: v };
        }
    }
    Ok(best)
}

/// Oracle over the first `rows` rows (surface-major) of the configured seed-0
/// world, seen by the first user. Uses the frozen channel when there is one.
pub fn oracle_for_spec(spec: &ExperimentSpec, rows: usize) -> Result<OracleResult> {
    let (env, _) = build_world(spec, 0)?;
    let links = match &env.frozen_links {
        Some(l) => l[0].clone(),
        None => {
            let mut rng = crate::rng::stream(spec.scenario.seed, "oracle");
            generate_multiuser_links(&env.users, &env.config, &mut rng)?.remove(0)
        }
    };
    let all: Vec<(usize, usize)> = (0..env.config.n_ris).flat_map(|s| (0..env.config.ris_rows).map(move |r| (s, r))).collect();
    if rows > all.len() {
        return Err(Error::Config(format!("{rows} rows requested, {} available", all.len())));
    }
    exhaustive_oracle(&links, &env.ris, &all[..rows], env.config.n_subcarriers, env.config.snr_db)
}
