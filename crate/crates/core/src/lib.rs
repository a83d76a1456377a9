//! Directed-greybox-fuzzing seed scheduling.
//!
//! The crate models a program as call and control-flow graphs with planted
//! target labels ([`graph`]), precomputes function-to-function distances
//! ([`static_distance`]), measures seeds against functions and target sets at
//! run time ([`execution`]), tracks per-target progress ([`ranking`]), and
//! culls the seed queue in three phases ([`scheduler`]). The [`simulator`]
//! runs whole campaigns on synthetic programs so schedulers can be compared
//! deterministically.

pub mod error;
pub mod execution;
pub mod graph;
pub mod ids;
pub mod ranking;
pub mod scheduler;
pub mod simulator;
pub mod static_distance;

pub use error::{Error, Result};
pub use execution::{dsf, multi_target_distance, ExecutionTrace, Seed, TargetDistanceVector};
pub use graph::{load_program, save_program, ProgramGraph};
pub use ids::{BlockId, Distance, EdgeId, FunctionId, SeedId, TargetId};
pub use ranking::{TargetRanking, TargetState, TriggeredFilter, UpdateSummary};
pub use scheduler::{FunctionExplorationState, Phase, PhaseClock, SchedulerConfig};
pub use static_distance::{
    build_distance_map, harmonic_distance, load_distance_map, save_distance_map, StaticDistanceMap,
};
