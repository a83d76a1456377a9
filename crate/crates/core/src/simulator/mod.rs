//! Seeded campaign simulation.
//!
//! [`generate`] builds synthetic programs, [`mutation`] is the stochastic
//! execution model, [`campaign`] runs the fuzz loop under a chosen scheduler,
//! [`compare`] tabulates results across schedulers and seeds, and [`report`]
//! turns results into plot-ready CSV.

pub mod campaign;
pub mod compare;
pub mod generate;
pub mod mutation;
pub mod report;

pub use campaign::{
    run_campaign, run_campaign_with, Campaign, CampaignConfig, CampaignResult, SchedulerKind, SeriesPoint,
    TargetRecord, TimelineEntry, STANDARD_DURATION,
};
pub use compare::{compare_campaigns, compare_labeled, gini, rank_sum_p_value, ComparisonReport};
pub use generate::{generate_program, SyntheticProgramSpec, STANDARD_CAMPAIGN_SEEDS, STANDARD_PROGRAM_SEED};
pub use mutation::{execute_mutation, MutationModel, SimWorld};
