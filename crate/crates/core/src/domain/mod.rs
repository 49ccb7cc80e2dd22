//! Agents, houses, facilities and scenario configuration.

mod config;
mod file;
mod population;

pub use config::{
    validate_config, AppParams, ConfigError, DepartTime, RoleTable, ScenarioConfig, ValidConfig, STEPS_PER_DAY,
    WORLD_SIZE,
};
pub use file::{parse_clock, ConfigFile, FacilityEntry, FileDepartTime, FileRoleTable};
pub use population::{build_population, House, Population};

use serde::{Deserialize, Serialize};

/// Compartment of the SEIR+D model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InfectionState {
    S,
    E,
    I,
    R,
    D,
}

impl InfectionState {
    pub const ALL: [InfectionState; 5] = [
        InfectionState::S,
        InfectionState::E,
        InfectionState::I,
        InfectionState::R,
        InfectionState::D,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether `self -> next` is an edge of the transition graph (self loops
    /// included).
    pub fn can_become(self, next: InfectionState) -> bool {
        use InfectionState::*;
        self == next || matches!((self, next), (S, E) | (E, I) | (I, R) | (I, D))
    }

    /// Counted in the cumulative ever-infected total.
    pub fn ever_infected(self) -> bool {
        self != InfectionState::S
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    OfficeWorker,
    Homemaker,
    Student,
}

impl AgentRole {
    /// Household order: each house holds these three roles in this order.
    pub const ALL: [AgentRole; 3] = [AgentRole::OfficeWorker, AgentRole::Homemaker, AgentRole::Student];

    pub fn facility_kind(self) -> FacilityKind {
        match self {
            AgentRole::OfficeWorker => FacilityKind::Company,
            AgentRole::Homemaker => FacilityKind::Shop,
            AgentRole::Student => FacilityKind::School,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FacilityKind {
    Company,
    Shop,
    School,
}

/// A location in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn within_world(self) -> bool {
        (0.0..=WORLD_SIZE).contains(&self.x) && (0.0..=WORLD_SIZE).contains(&self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub id: usize,
    pub kind: FacilityKind,
    pub location: Point,
}

/// Where an agent is within its daily outing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AtHome,
    Outbound,
    AtFacility,
    Inbound,
}

/// One day's outing decision. `progress` counts steps spent in the current
/// phase (travel steps while moving, stay steps at the facility).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayPlan {
    pub goes_out: bool,
    pub depart_step: u32,
    pub stay_steps: u32,
    pub phase: Phase,
    pub progress: u32,
}

impl DayPlan {
    pub fn stay_home() -> Self {
        DayPlan {
            goes_out: false,
            depart_step: 0,
            stay_steps: 0,
            phase: Phase::AtHome,
            progress: 0,
        }
    }

    /// Still away from home, or about to leave.
    pub fn in_progress(&self) -> bool {
        self.phase != Phase::AtHome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub role: AgentRole,
    pub house_id: usize,
    pub facility_id: usize,
    pub state: InfectionState,
    pub days_in_state: u32,
    pub incubation_days: u32,
    pub infectious_days: u32,
    pub base_go_out_prob: f64,
    pub hospitalized: bool,
    pub app_user: bool,
    pub registered: bool,
    pub notified_until_day: Option<u32>,
    pub position: Point,
    pub plan: Option<DayPlan>,
}

impl Agent {
    /// Present in space: alive and not in an isolation ward.
    pub fn in_space(&self) -> bool {
        self.state != InfectionState::D && !self.hospitalized
    }

    /// Can infect or trigger a notification this step.
    pub fn is_active_infector(&self) -> bool {
        self.state == InfectionState::I && !self.hospitalized
    }

    /// Checks the per-agent invariants that must hold between steps.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.registered && !self.app_user {
            return Err(format!("agent {} registered without the app", self.id));
        }
        if self.registered && self.state != InfectionState::I {
            return Err(format!("agent {} registered outside state I", self.id));
        }
        if self.hospitalized && self.state != InfectionState::I {
            return Err(format!("agent {} hospitalized outside state I", self.id));
        }
        if self.notified_until_day.is_some() && !self.app_user {
            return Err(format!("agent {} notified without the app", self.id));
        }
        Ok(())
    }
}
