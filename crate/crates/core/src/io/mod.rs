pub mod config;
pub mod csv;
pub mod vtk;

pub use config::{load_config, write_effective_config, RunConfig, Variant};
pub use csv::{read_history_csv, write_history_csv};
pub use vtk::{write_vtk, VtkImage};
