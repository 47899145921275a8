//! Randomization inference for quantiles of individual treatment effects.
//!
//! The crate covers completely randomized and stratified designs, worst-case
//! sensitivity analysis for matched sets, intervals for all sample quantiles,
//! corrected simultaneous intervals, population quantiles and a simulation
//! harness for coverage studies.

pub mod cre;
pub mod error;
pub mod model;
pub mod population;
pub mod rank;
pub mod rng;
pub mod sim;
pub mod stratified;
pub mod tail;
pub mod worst_case;

pub use cre::{Inverter, NullPair, PValueMethod, PValueResult};
pub use error::{Error, Result};
pub use model::{
    load_experiment, ExperimentData, FamilyEntry, IntervalFamily, LoadOptions, MonteCarloConfig, OneSidedInterval,
    QuantileHypothesis, RankTransform, Scope, Strata, Target, TargetIndex, Warning,
};
pub use population::{PopulationKind, PopulationTarget, SampleScope};
pub use rank::{null_distribution, Design, NullDistribution, NullMode, NullOptions, Provenance};
pub use stratified::{SensitivityMode, SensitivityModel, SensitivityOptions};
pub use tail::{CorrectionMethod, CorrectionSpec, Hypergeometric, SamplingModel};
pub use worst_case::WorstCase;
