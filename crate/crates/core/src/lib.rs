//! Agent-based SEIR+D epidemic simulator with a contact-confirming app.
//!
//! A run is a pure function of a validated [`ValidConfig`] and a seed:
//!
//! ```
//! use cocoa_abm::{run_simulation, validate_config, ScenarioConfig};
//!
//! let mut raw = ScenarioConfig::default();
//! raw.max_days = 5;
//! let config = validate_config(raw).unwrap();
//! let run = run_simulation(&config, 1);
//! assert_eq!(run.days.len(), 5);
//! assert_eq!(run, run_simulation(&config, 1));
//! ```

pub mod analysis;
pub mod app;
pub mod contact;
pub mod domain;
pub mod engine;
pub mod epidemic;
pub mod mobility;
pub mod rng;
pub mod sweep;

pub use domain::{validate_config, AppParams, ConfigError, ConfigFile, InfectionState, ScenarioConfig, ValidConfig};
pub use engine::{run_simulation, DailyRecord, RunResult};

// The guide's snippets run as doctests so the book cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/infection.md")]
    mod infection {}
    #[doc = include_str!("../../../book/src/contacts.md")]
    mod contacts {}
    #[doc = include_str!("../../../book/src/app.md")]
    mod app {}
    #[doc = include_str!("../../../book/src/random-streams.md")]
    mod random_streams {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
