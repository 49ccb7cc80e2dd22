use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentRole, Facility, FacilityKind};

/// Side length of the square world.
pub const WORLD_SIZE: f64 = 1000.0;

/// Steps per simulated day (10-minute steps).
pub const STEPS_PER_DAY: u32 = 144;

/// A value per agent role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleTable<T> {
    pub office_worker: T,
    pub homemaker: T,
    pub student: T,
}

impl<T> RoleTable<T> {
    pub fn get(&self, role: AgentRole) -> &T {
        match role {
            AgentRole::OfficeWorker => &self.office_worker,
            AgentRole::Homemaker => &self.homemaker,
            AgentRole::Student => &self.student,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> RoleTable<U> {
        RoleTable {
            office_worker: f(&self.office_worker),
            homemaker: f(&self.homemaker),
            student: f(&self.student),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentRole, &T)> {
        AgentRole::ALL.into_iter().map(move |r| (r, self.get(r)))
    }
}

/// Departure time distribution, in steps after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepartTime {
    pub mean_step: f64,
    pub std_steps: f64,
}

/// The three app parameters: usage rate, outing reduction on notification,
/// and registration rate of infectors. All probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AppParams {
    pub usage_rate: f64,
    pub outing_reduction: f64,
    pub registration_rate: f64,
}

impl AppParams {
    pub fn new(usage_rate: f64, outing_reduction: f64, registration_rate: f64) -> Self {
        AppParams {
            usage_rate,
            outing_reduction,
            registration_rate,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.usage_rate == 0.0 && self.outing_reduction == 0.0 && self.registration_rate == 0.0
    }
}

/// Full parameter set of a scenario, in internal units: probabilities in
/// `[0,1]`, times in 10-minute steps, durations in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub max_days: u32,
    pub n_houses: usize,
    pub n_initial_infected: usize,
    pub facilities: Vec<Facility>,
    pub ward_capacity: usize,
    pub go_out_prob_range: RoleTable<(f64, f64)>,
    pub depart_time: RoleTable<DepartTime>,
    /// Inclusive stay range in steps.
    pub stay_time: RoleTable<(u32, u32)>,
    pub hospital_prob: f64,
    pub sick_outing_reduction: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub incubation_set: Vec<u32>,
    pub infectious_set: Vec<u32>,
    pub app: AppParams,
    pub travel_speed: f64,
    pub contact_radius: f64,
    pub notification_days: u32,
    pub slope_epsilon: f64,
}

impl Default for ScenarioConfig {
    /// The published experiment conditions (999 people, 9 facilities, no
    /// isolation wards, app disabled).
    fn default() -> Self {
        super::ConfigFile::default()
            .to_config()
            .expect("built-in defaults convert")
    }
}

impl ScenarioConfig {
    pub fn population(&self) -> usize {
        3 * self.n_houses
    }

    /// Hospitalization can actually happen, so `gamma1` is in use.
    pub fn hospitals_enabled(&self) -> bool {
        self.ward_capacity > 0 && self.hospital_prob > 0.0
    }

    pub fn with_app(mut self, app: AppParams) -> Self {
        self.app = app;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0} out of [0,1]")]
    Probability(String),
    #[error("gamma0 < gamma1")]
    FatalityOrder,
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("invalid clock time {value:?} for {field} (expected HH:MM)")]
    Clock { field: String, value: String },
    #[error("invalid config JSON")]
    Json(#[from] serde_json::Error),
    #[error("could not read config")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// A configuration that passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidConfig {
    config: ScenarioConfig,
    population: usize,
}

impl ValidConfig {
    pub fn population(&self) -> usize {
        self.population
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn into_inner(self) -> ScenarioConfig {
        self.config
    }

    /// Same configuration with different app parameters. The app parameters
    /// are validated; nothing else changes.
    pub fn with_app(&self, app: AppParams) -> Result<ValidConfig, ConfigError> {
        check_app(&app)?;
        Ok(ValidConfig {
            config: self.config.clone().with_app(app),
            population: self.population,
        })
    }
}

impl Deref for ValidConfig {
    type Target = ScenarioConfig;

    fn deref(&self) -> &ScenarioConfig {
        &self.config
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::Probability(name.to_string()))
    }
}

fn check_app(app: &AppParams) -> Result<(), ConfigError> {
    check_prob("app.usage_rate", app.usage_rate)?;
    check_prob("app.outing_reduction", app.outing_reduction)?;
    check_prob("app.registration_rate", app.registration_rate)
}

fn role_name(role: AgentRole) -> &'static str {
    match role {
        AgentRole::OfficeWorker => "office_worker",
        AgentRole::Homemaker => "homemaker",
        AgentRole::Student => "student",
    }
}

/// Agent ids must fit in 32 bits.
const MAX_HOUSES: usize = (u32::MAX / 3) as usize;

/// Checks every configuration invariant in a fixed order and reports the
/// first one violated.
pub fn validate_config(raw: ScenarioConfig) -> Result<ValidConfig, ConfigError> {
    let c = &raw;
    if c.max_days < 1 {
        return Err(ConfigError::invalid("max_days", "must be at least 1"));
    }
    if c.n_houses < 1 {
        return Err(ConfigError::invalid("n_houses", "must be at least 1"));
    }
    if c.n_houses > MAX_HOUSES {
        return Err(ConfigError::invalid(
            "n_houses",
            format!("must be at most {MAX_HOUSES}"),
        ));
    }
    let population = c.population();
    if c.n_initial_infected > population {
        return Err(ConfigError::invalid(
            "n_initial_infected",
            format!("{} exceeds population {}", c.n_initial_infected, population),
        ));
    }
    for (idx, f) in c.facilities.iter().enumerate() {
        if f.id != idx {
            return Err(ConfigError::invalid("facilities", "ids must be 0..n in list order"));
        }
        if !f.location.within_world() {
            return Err(ConfigError::invalid(
                "facilities",
                format!("facility {idx} lies outside [0,{WORLD_SIZE}]^2"),
            ));
        }
    }
    for kind in [FacilityKind::Company, FacilityKind::Shop, FacilityKind::School] {
        if !c.facilities.iter().any(|f| f.kind == kind) {
            return Err(ConfigError::invalid(
                "facilities",
                format!("no facility of kind {kind:?}"),
            ));
        }
    }
    for (role, &(lo, hi)) in c.go_out_prob_range.iter() {
        let name = format!("go_out_prob_range.{}", role_name(role));
        check_prob(&name, lo)?;
        check_prob(&name, hi)?;
        if lo > hi {
            return Err(ConfigError::invalid(name, "lower bound exceeds upper bound"));
        }
    }
    for (role, d) in c.depart_time.iter() {
        if !(d.mean_step.is_finite() && d.std_steps.is_finite() && d.std_steps >= 0.0) {
            return Err(ConfigError::invalid(
                format!("depart_time.{}", role_name(role)),
                "mean and std must be finite, std non-negative",
            ));
        }
    }
    for (role, &(lo, hi)) in c.stay_time.iter() {
        if lo < 1 || lo > hi {
            return Err(ConfigError::invalid(
                format!("stay_time.{}", role_name(role)),
                "need 1 step <= lower bound <= upper bound",
            ));
        }
    }
    check_prob("hospital_prob", c.hospital_prob)?;
    check_prob("sick_outing_reduction", c.sick_outing_reduction)?;
    check_prob("beta", c.beta)?;
    check_prob("gamma0", c.gamma0)?;
    check_prob("gamma1", c.gamma1)?;
    if c.hospitals_enabled() && c.gamma0 < c.gamma1 {
        return Err(ConfigError::FatalityOrder);
    }
    for (name, set) in [
        ("incubation_set", &c.incubation_set),
        ("infectious_set", &c.infectious_set),
    ] {
        if set.is_empty() {
            return Err(ConfigError::invalid(name, "must not be empty"));
        }
        if set.contains(&0) {
            return Err(ConfigError::invalid(name, "durations must be at least 1 day"));
        }
    }
    check_app(&c.app)?;
    if !(c.travel_speed.is_finite() && c.travel_speed > 0.0) {
        return Err(ConfigError::invalid("travel_speed", "must be positive"));
    }
    if !(c.contact_radius.is_finite() && c.contact_radius > 0.0) {
        return Err(ConfigError::invalid("contact_radius", "must be positive"));
    }
    if c.notification_days < 1 {
        return Err(ConfigError::invalid("notification_days", "must be at least 1"));
    }
    if !(c.slope_epsilon.is_finite() && c.slope_epsilon >= 0.0) {
        return Err(ConfigError::invalid("slope_epsilon", "must be non-negative"));
    }
    Ok(ValidConfig {
        config: raw,
        population,
    })
}
