//! One simulation run: the 1-day process followed by 144 1-step processes,
//! repeated for `max_days` days.
//!
//! Every per-agent loop walks agents in ascending id. Randomness comes from
//! per-agent streams (`Schedule`, `Epidemic`, `Hospital`, `App`) so a run is
//! a pure function of `(config, seed)`, and app-side draws never shift the
//! epidemic or schedule sequences.

use std::io;

use serde::{Deserialize, Serialize};

use crate::app::{
    apply_notifications, is_notification_active, maybe_register, process_contacts, ContactLog, ContactLogEntry,
};
use crate::contact::{ContactEvent, ContactScanner, OccupancyGrid};
use crate::domain::{
    build_population, Agent, AppParams, InfectionState, Point, Population, ValidConfig, STEPS_PER_DAY,
};
use crate::epidemic::{day_transition_e, day_transition_i, step_transition_s};
use crate::mobility::{advance_position, needs_plan, plan_day, skip_idle_steps, steps_until_next_move, ClockTime};
use crate::rng::{Domain, RngStream};

/// Number of agents per compartment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StateCounts([u32; 5]);

impl StateCounts {
    pub fn get(&self, state: InfectionState) -> u32 {
        self.0[state.index()]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// E + I + R + D.
    pub fn ever_infected(&self) -> u32 {
        self.total() - self.get(InfectionState::S)
    }

    fn tally<'a>(agents: impl IntoIterator<Item = &'a Agent>) -> Self {
        let mut c = [0u32; 5];
        for a in agents {
            c[a.state.index()] += 1;
        }
        StateCounts(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyRecord {
    pub day: u32,
    pub counts: StateCounts,
    pub n_ip: u32,
    /// S→E transitions during the day.
    pub new_infections: u32,
    /// Distinct agents whose notification window was opened or refreshed.
    pub notifications_issued: u32,
    pub hospitalized: u32,
    pub active_notified: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub app: AppParams,
    pub seed: u64,
    pub days: Vec<DailyRecord>,
}

impl RunResult {
    pub fn final_n_ip(&self) -> u32 {
        self.days.last().map_or(0, |d| d.n_ip)
    }

    pub fn n_ip_series(&self) -> Vec<u32> {
        self.days.iter().map(|d| d.n_ip).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = RunRow> + '_ {
        self.days.iter().map(move |d| RunRow {
            seed: self.seed,
            p1: self.app.usage_rate,
            p2: self.app.outing_reduction,
            p3: self.app.registration_rate,
            day: d.day,
            s: d.counts.get(InfectionState::S),
            e: d.counts.get(InfectionState::E),
            i: d.counts.get(InfectionState::I),
            r: d.counts.get(InfectionState::R),
            d: d.counts.get(InfectionState::D),
            n_ip: d.n_ip,
            new_infections: d.new_infections,
            notifications_issued: d.notifications_issued,
            hospitalized: d.hospitalized,
        })
    }

    /// Writes the per-day CSV (with header).
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows(self.rows(), out)
    }
}

/// One CSV row of a run's day series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub seed: u64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub day: u32,
    #[serde(rename = "S")]
    pub s: u32,
    #[serde(rename = "E")]
    pub e: u32,
    #[serde(rename = "I")]
    pub i: u32,
    #[serde(rename = "R")]
    pub r: u32,
    #[serde(rename = "D")]
    pub d: u32,
    pub n_ip: u32,
    pub new_infections: u32,
    pub notifications_issued: u32,
    pub hospitalized: u32,
}

pub fn write_rows<W: io::Write>(rows: impl IntoIterator<Item = RunRow>, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: io::Read>(input: R) -> csv::Result<Vec<RunRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every contact between two app users for export.
    pub record_contacts: bool,
    /// Tick every agent every step and probe every agent for contacts.
    /// Slow; gives the same results and exists to cross-check the default
    /// event-driven stepping.
    pub reference: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub contact_log: Vec<ContactLogEntry>,
}

struct AgentStreams {
    schedule: Vec<RngStream>,
    epidemic: Vec<RngStream>,
    hospital: Vec<RngStream>,
    app: Vec<RngStream>,
}

impl AgentStreams {
    fn new(seed: u64, n: usize) -> Self {
        let make = |domain| (0..n).map(|k| RngStream::for_agent(seed, domain, k)).collect();
        AgentStreams {
            schedule: make(Domain::Schedule),
            epidemic: make(Domain::Epidemic),
            hospital: make(Domain::Hospital),
            app: make(Domain::App),
        }
    }
}

/// A run in progress, advanced one day at a time.
pub struct Simulation<'a> {
    config: &'a ValidConfig,
    seed: u64,
    population: Population,
    homes: Vec<Point>,
    destinations: Vec<Point>,
    streams: AgentStreams,
    scanner: ContactScanner,
    grid: OccupancyGrid,
    // Agents are only advanced at steps where they move or change phase;
    // idle steps in between are applied in bulk on waking.
    wakes: WakeQueue,
    wake_at: Vec<u64>,
    last_tick: Vec<u64>,
    due: Vec<usize>,
    events: Vec<ContactEvent>,
    beds_used: usize,
    notice_day: Vec<u32>,
    infectors: Vec<usize>,
    day: u32,
    records: Vec<DailyRecord>,
    options: RunOptions,
    retained: ContactLog,
    audit: Vec<ContactLogEntry>,
    step_log: Vec<ContactLogEntry>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a ValidConfig, seed: u64, options: RunOptions) -> Self {
        let population = build_population(config, seed);
        let n = population.agents.len();
        let homes = population.agents.iter().map(|a| population.home_of(a)).collect();
        let destinations = population
            .agents
            .iter()
            .map(|a| config.facilities[a.facility_id].location)
            .collect();
        Simulation {
            config,
            seed,
            population,
            homes,
            destinations,
            streams: AgentStreams::new(seed, n),
            scanner: ContactScanner::new(config.contact_radius),
            grid: OccupancyGrid::new(config.contact_radius),
            wakes: WakeQueue::default(),
            wake_at: vec![NEVER; n],
            last_tick: vec![0; n],
            due: Vec::new(),
            events: Vec::new(),
            beds_used: 0,
            notice_day: vec![0; n],
            infectors: Vec::new(),
            day: 0,
            records: Vec::with_capacity(config.max_days as usize),
            options,
            retained: ContactLog::new(config.notification_days),
            audit: Vec::new(),
            step_log: Vec::new(),
        }
    }

    /// Agents as of the last completed day. Positions are exact; the stay
    /// counter of an agent at its facility may lag behind until it leaves.
    pub fn agents(&self) -> &[Agent] {
        &self.population.agents
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    /// Last completed day (0 before the first).
    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn beds_used(&self) -> usize {
        self.beds_used
    }

    /// Contacts between app users from the last `notification_days` days.
    /// Empty unless contact recording is enabled.
    pub fn contact_log(&self) -> &ContactLog {
        &self.retained
    }

    pub fn is_finished(&self) -> bool {
        self.day >= self.config.max_days
    }

    /// Runs one full day and returns its record.
    pub fn run_day(&mut self) -> &DailyRecord {
        self.day += 1;
        let day = self.day;
        self.retained.prune(day);
        self.day_process(day);
        let mut new_infections = 0;
        let mut notified = 0;
        for step in ClockTime::all() {
            let (inf, not) = self.step_process(day, step);
            new_infections += inf;
            notified += not;
        }
        let agents = &self.population.agents;
        let counts = StateCounts::tally(agents);
        self.records.push(DailyRecord {
            day,
            counts,
            n_ip: counts.ever_infected(),
            new_infections,
            notifications_issued: notified,
            hospitalized: agents.iter().filter(|a| a.hospitalized).count() as u32,
            active_notified: agents.iter().filter(|a| is_notification_active(a, day)).count() as u32,
        });
        self.records.last().expect("just pushed")
    }

    fn day_process(&mut self, day: u32) {
        let cfg = self.config;
        let agents = &mut self.population.agents;

        // Agents enter their state with days_in_state = 0 and count whole
        // days from the next boundary; the initial infectors enter on day 1.
        if day > 1 {
            for a in agents.iter_mut() {
                if matches!(a.state, InfectionState::E | InfectionState::I) {
                    a.days_in_state += 1;
                }
            }
        }

        let mut onset = Vec::new();
        for a in agents.iter_mut() {
            match a.state {
                InfectionState::E => {
                    if day_transition_e(a.days_in_state, a.incubation_days) == InfectionState::I {
                        a.state = InfectionState::I;
                        a.days_in_state = 0;
                        onset.push(a.id);
                    }
                }
                InfectionState::I if a.days_in_state == a.infectious_days => {
                    let u = self.streams.epidemic[a.id].next_uniform();
                    let next = day_transition_i(
                        a.days_in_state,
                        a.infectious_days,
                        a.hospitalized,
                        cfg.gamma0,
                        cfg.gamma1,
                        u,
                    );
                    if a.hospitalized {
                        self.beds_used -= 1;
                        a.hospitalized = false;
                    }
                    a.state = next;
                    a.days_in_state = 0;
                    a.registered = false;
                    if next == InfectionState::D {
                        a.plan = None;
                        a.position = self.homes[a.id];
                        self.wake_at[a.id] = NEVER;
                    }
                }
                _ => {}
            }
        }

        for id in onset {
            let registered = maybe_register(&agents[id], cfg.app.registration_rate, &mut self.streams.app[id]);
            agents[id].registered = registered;
        }

        for a in agents
            .iter_mut()
            .filter(|a| a.state == InfectionState::I && !a.hospitalized)
        {
            let attempt = self.streams.hospital[a.id]
                .next_bernoulli(cfg.hospital_prob)
                .expect("validated");
            if attempt && self.beds_used < cfg.ward_capacity {
                self.beds_used += 1;
                a.hospitalized = true;
                a.plan = None;
                a.position = self.homes[a.id];
                self.wake_at[a.id] = NEVER;
            }
        }

        let day_start = global_step(day, 0);
        for a in agents.iter_mut() {
            if needs_plan(a) {
                let plan = plan_day(a, day, cfg, &mut self.streams.schedule[a.id]);
                a.plan = Some(plan);
                self.wake_at[a.id] = NEVER;
                if plan.goes_out {
                    let g = day_start + u64::from(plan.depart_step);
                    self.wake_at[a.id] = g;
                    self.wakes.push(g, a.id);
                }
            }
        }
        if !self.options.reference {
            self.grid.rebuild(agents);
        }

        self.infectors.clear();
        self.infectors
            .extend(agents.iter().filter(|a| a.is_active_infector()).map(|a| a.id));
    }

    /// Returns (new infections, newly notified agents) for the step.
    fn step_process(&mut self, day: u32, step: ClockTime) -> (u32, u32) {
        let cfg = self.config;
        self.events.clear();
        if self.options.reference {
            let agents = &mut self.population.agents;
            for ((a, &home), &dest) in agents.iter_mut().zip(&self.homes).zip(&self.destinations) {
                if a.in_space() {
                    advance_position(a, step, home, dest, cfg.travel_speed);
                }
            }
            self.scanner
                .scan_among(agents, &self.infectors, day, step, &mut self.events);
        } else {
            self.advance_woken(global_step(day, step.step()), step);
            let agents = &self.population.agents;
            self.grid
                .contacts(agents, &self.infectors, cfg.contact_radius, day, step, &mut self.events);
        }
        let agents = &mut self.population.agents;
        if self.events.is_empty() {
            return (0, 0);
        }

        let mut new_infections = 0;
        let mut last = usize::MAX;
        for e in &self.events {
            if e.other_id == last {
                continue;
            }
            last = e.other_id;
            let a = &mut agents[e.other_id];
            if a.state != InfectionState::S {
                continue;
            }
            let u = self.streams.epidemic[a.id].next_uniform();
            if step_transition_s(true, cfg.beta, u) == InfectionState::E {
                a.state = InfectionState::E;
                a.days_in_state = 0;
                new_infections += 1;
            }
        }

        let log = self.options.record_contacts.then_some(&mut self.step_log);
        let updates = process_contacts(&self.events, agents, &cfg.app, day, cfg.notification_days, log);
        apply_notifications(agents, &updates);
        let mut newly_notified = 0;
        for u in &updates {
            if self.notice_day[u.agent_id] != day {
                self.notice_day[u.agent_id] = day;
                newly_notified += 1;
            }
        }
        for entry in self.step_log.drain(..) {
            self.retained.push(entry);
            self.audit.push(entry);
        }
        (new_infections, newly_notified)
    }

    fn advance_woken(&mut self, g: u64, step: ClockTime) {
        let speed = self.config.travel_speed;
        let mut due = std::mem::take(&mut self.due);
        self.wakes.take_due(g, &mut due);
        for &id in &due {
            if self.wake_at[id] != g {
                continue;
            }
            let a = &mut self.population.agents[id];
            debug_assert!(a.in_space());
            skip_idle_steps(a, (g - self.last_tick[id]).saturating_sub(1) as u32);
            let from = a.position;
            advance_position(a, step, self.homes[id], self.destinations[id], speed);
            self.grid.relocate(id, from, a.position);
            self.last_tick[id] = g;
            self.wake_at[id] = match a.plan.as_ref().and_then(steps_until_next_move) {
                Some(k) => {
                    let next = g + u64::from(k);
                    self.wakes.push(next, id);
                    next
                }
                None => NEVER,
            };
        }
        self.due = due;
    }

    pub fn finish(mut self) -> RunOutput {
        while !self.is_finished() {
            self.run_day();
        }
        RunOutput {
            result: RunResult {
                app: self.config.app,
                seed: self.seed,
                days: self.records,
            },
            contact_log: self.audit,
        }
    }
}

const NEVER: u64 = u64::MAX;

/// Calendar queue of `(global step, agent)` wake-ups. Almost every wake-up
/// lands within two days, so a ring of per-step buckets avoids heap
/// overhead; later ones wait in their bucket for the next lap.
#[derive(Debug)]
struct WakeQueue {
    buckets: Vec<Vec<(u64, usize)>>,
}

impl Default for WakeQueue {
    fn default() -> Self {
        WakeQueue {
            buckets: vec![Vec::new(); 2 * STEPS_PER_DAY as usize],
        }
    }
}

impl WakeQueue {
    fn slot(&self, g: u64) -> usize {
        (g % self.buckets.len() as u64) as usize
    }

    fn push(&mut self, g: u64, id: usize) {
        let k = self.slot(g);
        self.buckets[k].push((g, id));
    }

    /// Moves the agents due at `g` into `out` (cleared first), in any order.
    fn take_due(&mut self, g: u64, out: &mut Vec<usize>) {
        out.clear();
        let k = self.slot(g);
        self.buckets[k].retain(|&(at, id)| {
            debug_assert!(at >= g);
            if at == g {
                out.push(id);
                false
            } else {
                true
            }
        });
    }
}

fn global_step(day: u32, step: u32) -> u64 {
    u64::from(day - 1) * u64::from(STEPS_PER_DAY) + u64::from(step)
}

/// Runs `config` with master seed `seed` to completion.
pub fn run_simulation(config: &ValidConfig, seed: u64) -> RunResult {
    Simulation::new(config, seed, RunOptions::default()).finish().result
}

pub fn run_simulation_with(config: &ValidConfig, seed: u64, options: RunOptions) -> RunOutput {
    Simulation::new(config, seed, options).finish()
}
