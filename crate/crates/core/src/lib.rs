//! Discrete-velocity kinetic models of single- and two-population traffic.
//!
//! The crate builds the stochastic tables of games for a mixture of vehicle
//! classes, integrates the space-homogeneous kinetic equations to equilibrium
//! with a well-balanced loss term, evaluates the closed-form free-phase
//! equilibria, and sweeps occupancy to produce fundamental diagrams.

pub mod config;
pub mod diagrams;
pub mod error;
pub mod integrator;
pub mod kinetics;
pub mod oracle;
pub mod tables;

pub use config::{admissible, load_config, occupancy, Config, ModelParams, NumericsParams, PopulationSpec, SpeedLattice};
pub use error::{ConfigError, ModelError};
pub use integrator::{relax, relax_to_equilibrium, relax_with, step, RelaxationResult};
pub use kinetics::{moments, KineticSystem, LossForm, MixtureState, Moments};
pub use tables::{check_stochastic, GameTables, InteractionTable, TransitionProbabilities};
