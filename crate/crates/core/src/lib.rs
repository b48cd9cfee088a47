//! Energy landscapes of the Ising pure p-spin model on small hypercubes.

pub mod bounds;
pub mod clustering;
pub mod disorder;
pub mod error;
pub mod gibbs;
pub mod landscape;
pub mod mogp;
pub mod rng;
pub mod tails;

pub use clustering::{check_ogp, cluster, components, ClusterReport, OgpCheck};
pub use disorder::{
    build_energy_table, build_energy_table_with, BuildLimits, CouplingTensor, EnergyTable,
    EnsembleAngle, MemoryBudget, Mode, SpinConfig,
};
pub use error::{Error, Result};
pub use gibbs::{band_dominance, log_partition, GibbsContext};
pub use landscape::{level_set, superlevel_set, EnergyUnit, LevelSet};
pub use mogp::{tune_mogp, MogpParams, MogpTuning};
pub use tails::TailSandwich;
