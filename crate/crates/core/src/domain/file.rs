//! JSON configuration documents.
//!
//! Field names match [`ScenarioConfig`] one to one. Probabilities are given
//! in percent and clock times as `"HH:MM"` strings; both are converted to
//! internal units by [`ConfigFile::to_config`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, DepartTime, RoleTable, ScenarioConfig};
use super::{AppParams, Facility, FacilityKind, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub kind: FacilityKind,
    pub location: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDepartTime {
    pub mean: String,
    pub std: String,
}

pub type FileRoleTable<T> = RoleTable<T>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub max_days: u32,
    pub n_houses: usize,
    pub n_initial_infected: usize,
    pub facilities: Vec<FacilityEntry>,
    pub ward_capacity: usize,
    /// Percent.
    pub go_out_prob_range: RoleTable<(f64, f64)>,
    pub depart_time: RoleTable<FileDepartTime>,
    pub stay_time: RoleTable<(String, String)>,
    /// Percent.
    pub hospital_prob: f64,
    /// Percent.
    pub sick_outing_reduction: f64,
    /// Percent per 10-minute step.
    pub beta: f64,
    /// Percent.
    pub gamma0: f64,
    /// Percent.
    pub gamma1: f64,
    pub incubation_set: Vec<u32>,
    pub infectious_set: Vec<u32>,
    /// Percent.
    pub app: AppParams,
    pub travel_speed: f64,
    pub contact_radius: f64,
    pub notification_days: u32,
    pub slope_epsilon: f64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let facility = |kind, x, y| FacilityEntry {
            id: None,
            kind,
            location: Point::new(x, y),
        };
        let depart = |mean: &str, std: &str| FileDepartTime {
            mean: mean.into(),
            std: std.into(),
        };
        let stay = |lo: &str, hi: &str| (lo.to_string(), hi.to_string());
        ConfigFile {
            max_days: 45,
            n_houses: 333,
            n_initial_infected: 10,
            facilities: vec![
                facility(FacilityKind::Company, 200.0, 800.0),
                facility(FacilityKind::Company, 500.0, 500.0),
                facility(FacilityKind::Company, 800.0, 100.0),
                facility(FacilityKind::Shop, 200.0, 500.0),
                facility(FacilityKind::Shop, 500.0, 100.0),
                facility(FacilityKind::Shop, 800.0, 800.0),
                facility(FacilityKind::School, 200.0, 100.0),
                facility(FacilityKind::School, 500.0, 800.0),
                facility(FacilityKind::School, 800.0, 500.0),
            ],
            ward_capacity: 0,
            go_out_prob_range: RoleTable {
                office_worker: (99.0, 100.0),
                homemaker: (50.0, 100.0),
                student: (99.0, 100.0),
            },
            depart_time: RoleTable {
                office_worker: depart("08:30", "01:30"),
                homemaker: depart("10:30", "01:30"),
                student: depart("08:30", "01:30"),
            },
            stay_time: RoleTable {
                office_worker: stay("06:00", "08:00"),
                homemaker: stay("00:10", "00:30"),
                student: stay("05:00", "06:00"),
            },
            hospital_prob: 0.0,
            sick_outing_reduction: 30.0,
            beta: 0.006,
            gamma0: 10.0,
            gamma1: 2.0,
            incubation_set: vec![3, 5, 7],
            infectious_set: vec![8, 10, 12],
            app: AppParams::default(),
            travel_speed: 100.0,
            contact_radius: 1.0,
            notification_days: 14,
            slope_epsilon: 0.01,
        }
    }
}

/// Parses `"HH:MM"` into minutes.
pub fn parse_clock(value: &str) -> Option<u32> {
    let (h, m) = value.trim().split_once(':')?;
    if h.is_empty() || m.len() != 2 {
        return None;
    }
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (m < 60).then_some(h * 60 + m)
}

fn clock_steps(field: &str, value: &str) -> Result<f64, ConfigError> {
    parse_clock(value)
        .map(|min| min as f64 / 10.0)
        .ok_or_else(|| ConfigError::Clock {
            field: field.to_string(),
            value: value.to_string(),
        })
}

fn whole_steps(field: &str, value: &str) -> Result<u32, ConfigError> {
    let minutes = parse_clock(value).ok_or_else(|| ConfigError::Clock {
        field: field.to_string(),
        value: value.to_string(),
    })?;
    if minutes % 10 != 0 {
        return Err(ConfigError::invalid(
            field,
            format!("{value} is not a whole number of 10-minute steps"),
        ));
    }
    Ok(minutes / 10)
}

fn pct(p: f64) -> f64 {
    p / 100.0
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Converts units. Range checks are left to `validate_config`.
    pub fn to_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut facilities = Vec::with_capacity(self.facilities.len());
        for (idx, f) in self.facilities.iter().enumerate() {
            if f.id.is_some_and(|id| id != idx) {
                return Err(ConfigError::invalid("facilities", "ids must be 0..n in list order"));
            }
            facilities.push(Facility {
                id: idx,
                kind: f.kind,
                location: f.location,
            });
        }
        let mut depart = Vec::new();
        for (role, d) in self.depart_time.iter() {
            let field = format!("depart_time.{role:?}");
            depart.push(DepartTime {
                mean_step: clock_steps(&field, &d.mean)?,
                std_steps: clock_steps(&field, &d.std)?,
            });
        }
        let mut stay = Vec::new();
        for (role, (lo, hi)) in self.stay_time.iter() {
            let field = format!("stay_time.{role:?}");
            stay.push((whole_steps(&field, lo)?, whole_steps(&field, hi)?));
        }
        Ok(ScenarioConfig {
            max_days: self.max_days,
            n_houses: self.n_houses,
            n_initial_infected: self.n_initial_infected,
            facilities,
            ward_capacity: self.ward_capacity,
            go_out_prob_range: self.go_out_prob_range.map(|&(lo, hi)| (pct(lo), pct(hi))),
            depart_time: RoleTable {
                office_worker: depart[0],
                homemaker: depart[1],
                student: depart[2],
            },
            stay_time: RoleTable {
                office_worker: stay[0],
                homemaker: stay[1],
                student: stay[2],
            },
            hospital_prob: pct(self.hospital_prob),
            sick_outing_reduction: pct(self.sick_outing_reduction),
            beta: pct(self.beta),
            gamma0: pct(self.gamma0),
            gamma1: pct(self.gamma1),
            incubation_set: self.incubation_set.clone(),
            infectious_set: self.infectious_set.clone(),
            app: AppParams::new(
                pct(self.app.usage_rate),
                pct(self.app.outing_reduction),
                pct(self.app.registration_rate),
            ),
            travel_speed: self.travel_speed,
            contact_radius: self.contact_radius,
            notification_days: self.notification_days,
            slope_epsilon: self.slope_epsilon,
        })
    }
}
