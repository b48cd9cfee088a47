//! Disorder realizations: spin configurations, coupling tensors and energy tables.

mod spin;
mod table;
mod tensor;

pub use spin::{SpinConfig, MAX_SPINS};
pub(crate) use spin::mask;
pub use table::{
    build_energy_table, build_energy_table_with, exact_energies, pspin_covariance, BuildLimits,
    EnergyTable, Mode,
};
pub use tensor::{CouplingTensor, EnsembleAngle, MemoryBudget, MEMORY_BUDGET_ENV};
