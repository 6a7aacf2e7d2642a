//! Configuration, experiment orchestration, the exhaustive RIS oracle and
//! built-in self checks.

mod config;
mod experiment;
mod oracle;
mod selftest;

pub use config::{kind_at, load_config, parse_schedule, AgentSection, ChannelMode, ExperimentSection, ExperimentSpec, RewardSchedule};
pub use experiment::{build_world, run_experiment, run_rows, run_seed, write_csv, MetricsRow, CSV_HEADER, TRUNCATION_MARKER};
pub use oracle::{exhaustive_oracle, oracle_for_spec, OracleResult, RowSearch, MAX_CONFIGS};
pub use selftest::{run_selftest, SelftestReport};
