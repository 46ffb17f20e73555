//! Configuration, seeded experiment commands, CSV metrics and the oracle
//! verification report behind the `flowtrust` binary.

mod commands;
mod config;
mod metrics;
mod verify;

pub use commands::{
    align, cmd_align, cmd_analyze_gradnorm, cmd_analyze_std, cmd_compare_kl, cmd_pretrain,
    gradnorm_table, std_regime_schedules, AlignOutcome, AlignOutput, CompareOutput, GradNormRow,
    PretrainOutput, StdRow,
};
pub use config::{
    AnalyzeSection, DataSection, GrpoSection, NetSection, PretrainSection, RewardSection,
    RunConfig, RunSection, ScheduleKind, ScheduleSection, SdeSection,
};
pub use metrics::{fmt_f64, metrics_header, CsvSink, MetricsRow};
pub use verify::{
    cmd_verify, gradient_checks, marginal_check, verify_with_sign, CheckResult, LevelReport,
    MarginalCheck, VerifyReport,
};
