//! Setting grids, design plans, error tables and their execution.

pub mod grid;
pub mod plan;
pub mod run;
pub mod table;

pub use crate::rng::derive_seed;
pub use grid::{build_grid, Exclusion, Setting, SettingGrid};
pub use plan::{DesignPlan, DesignVariant, TableShape};
pub use run::{cell_seeds, cross_validate, run_design, setting_specs, CellSeeds};
pub use table::{ErrTable, TableMeta};
