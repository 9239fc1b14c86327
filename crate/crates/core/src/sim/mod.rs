//! Application descriptors, configuration loading and the cost simulator.

pub mod app;
pub mod config;
pub mod model;

pub use app::{AppDescriptor, Metric};
pub use config::{load_app, load_costs, load_machine, ConfigError, CostParams};
pub use model::{simulate, Location, SimError, SimResult};
