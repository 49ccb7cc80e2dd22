//! Daily outing decisions and per-step movement.
//!
//! Each day starts with a plan for every agent at home: go out or not, and
//! if so when to leave and how long to stay. During the day an agent walks a
//! straight segment to its facility at `travel_speed` units per step, stays,
//! and walks back. A trip still under way at midnight is finished before the
//! agent can plan again.

use crate::app::is_notification_active;
use crate::domain::{Agent, DayPlan, InfectionState, Phase, Point, ScenarioConfig, STEPS_PER_DAY};
use crate::rng::RngStream;

/// Step of the day, `0..144`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(u32);

impl ClockTime {
    pub fn new(step: u32) -> Option<Self> {
        (step < STEPS_PER_DAY).then_some(ClockTime(step))
    }

    pub fn step(self) -> u32 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ClockTime> {
        (0..STEPS_PER_DAY).map(ClockTime)
    }
}

pub fn effective_go_out_probability(
    base: f64,
    state: InfectionState,
    hospitalized: bool,
    sick_reduction: f64,
    notified_active: bool,
    outing_reduction: f64,
) -> f64 {
    if hospitalized || state == InfectionState::D {
        return 0.0;
    }
    let mut p = base;
    if state == InfectionState::I {
        p -= sick_reduction;
    }
    if notified_active {
        p -= outing_reduction;
    }
    p.clamp(0.0, 1.0)
}

/// Whether the agent may draw a new plan at the start of a day.
pub fn needs_plan(agent: &Agent) -> bool {
    agent.in_space() && agent.plan.is_none_or(|p| !p.in_progress())
}

/// Draws the day's plan from the agent's schedule stream.
///
/// Consumes one word for the outing decision; if the agent goes out, two
/// more for the departure time and one for the stay length.
pub fn plan_day(agent: &Agent, day: u32, config: &ScenarioConfig, schedule: &mut RngStream) -> DayPlan {
    let p = effective_go_out_probability(
        agent.base_go_out_prob,
        agent.state,
        agent.hospitalized,
        config.sick_outing_reduction,
        is_notification_active(agent, day),
        config.app.outing_reduction,
    );
    let goes_out = schedule.next_uniform() < p;
    if !goes_out {
        return DayPlan::stay_home();
    }
    let depart = config.depart_time.get(agent.role);
    let raw = schedule
        .next_gaussian(depart.mean_step, depart.std_steps)
        .expect("validated std");
    let depart_step = raw.round().clamp(0.0, (STEPS_PER_DAY - 1) as f64) as u32;
    let (lo, hi) = *config.stay_time.get(agent.role);
    let stay_steps = lo + schedule.next_index((hi - lo + 1) as usize).expect("non-empty") as u32;
    DayPlan {
        goes_out: true,
        depart_step,
        stay_steps,
        phase: Phase::AtHome,
        progress: 0,
    }
}

/// Steps needed to cover `distance` (at least one).
pub fn travel_steps(distance: f64, speed: f64) -> u32 {
    ((distance / speed).ceil() as u32).max(1)
}

/// Position after `k` steps on the segment `from -> to`, and whether the
/// walker has arrived.
fn leg_position(from: Point, to: Point, k: u32, speed: f64) -> (Point, bool) {
    let distance = from.distance(to);
    if k >= travel_steps(distance, speed) {
        return (to, true);
    }
    let f = k as f64 * speed / distance;
    (
        Point::new(from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f),
        false,
    )
}

/// Runs one step of the agent's phase machine and returns its new position.
pub fn advance_position(agent: &mut Agent, step: ClockTime, home: Point, facility: Point, speed: f64) -> Point {
    let Some(plan) = agent.plan.as_mut() else {
        agent.position = home;
        return home;
    };
    let mut finished = false;
    let position = match plan.phase {
        Phase::AtHome if plan.goes_out && step.step() == plan.depart_step => {
            plan.phase = Phase::Outbound;
            plan.progress = 1;
            let (pos, arrived) = leg_position(home, facility, 1, speed);
            if arrived {
                plan.phase = Phase::AtFacility;
                plan.progress = 0;
            }
            pos
        }
        Phase::AtHome => home,
        Phase::Outbound => {
            plan.progress += 1;
            let (pos, arrived) = leg_position(home, facility, plan.progress, speed);
            if arrived {
                plan.phase = Phase::AtFacility;
                plan.progress = 0;
            }
            pos
        }
        Phase::AtFacility if plan.progress < plan.stay_steps => {
            plan.progress += 1;
            facility
        }
        Phase::AtFacility | Phase::Inbound => {
            if plan.phase == Phase::AtFacility {
                plan.phase = Phase::Inbound;
                plan.progress = 0;
            }
            plan.progress += 1;
            let (pos, arrived) = leg_position(facility, home, plan.progress, speed);
            finished = arrived;
            pos
        }
    };
    if finished {
        agent.plan = None;
    }
    agent.position = position;
    position
}

/// Steps until `advance_position` next moves the agent or changes phase,
/// counted from the step it just ran. `None` if the agent stays where it is
/// until it plans again.
pub fn steps_until_next_move(plan: &DayPlan) -> Option<u32> {
    match plan.phase {
        Phase::Outbound | Phase::Inbound => Some(1),
        Phase::AtFacility => Some(1 + plan.stay_steps - plan.progress),
        Phase::AtHome => None,
    }
}

/// Applies `n` steps during which the agent neither moves nor changes phase,
/// as `n` calls of `advance_position` would.
pub fn skip_idle_steps(agent: &mut Agent, n: u32) {
    if let Some(plan) = agent.plan.as_mut() {
        if plan.phase == Phase::AtFacility {
            plan.progress += n;
            debug_assert!(plan.progress <= plan.stay_steps);
        }
    }
}
