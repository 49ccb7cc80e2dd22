use rand::seq::index;

use super::config::{ValidConfig, WORLD_SIZE};
use super::{Agent, AgentRole, InfectionState, Point};
use crate::app::maybe_register;
use crate::rng::{Domain, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct House {
    pub id: usize,
    pub location: Point,
}

/// Agents and houses of one run. Agent `3h + r` lives in house `h` and has
/// role `AgentRole::ALL[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub houses: Vec<House>,
}

impl Population {
    pub fn home_of(&self, agent: &Agent) -> Point {
        self.houses[agent.house_id].location
    }
}

/// Builds the initial population for `seed`.
///
/// Geometry, facility assignment, go-out probabilities, disease durations and
/// the initial infectors are drawn from the global `Init` stream. App users
/// are picked from the global `App` stream, and initial infectors who use
/// the app draw their registration from their own `App` stream, so the app
/// parameters never change anything drawn from `Init`.
pub fn build_population(config: &ValidConfig, seed: u64) -> Population {
    let mut init = RngStream::global(seed, Domain::Init);
    let n = config.population();

    let houses: Vec<House> = (0..config.n_houses)
        .map(|id| {
            let x = init.next_uniform() * WORLD_SIZE;
            let y = init.next_uniform() * WORLD_SIZE;
            House {
                id,
                location: Point::new(x, y),
            }
        })
        .collect();

    let facilities_of = AgentRole::ALL.map(|role| {
        config
            .facilities
            .iter()
            .filter(|f| f.kind == role.facility_kind())
            .map(|f| f.id)
            .collect::<Vec<_>>()
    });

    let pick = |set: &[u32], s: &mut RngStream| set[s.next_index(set.len()).expect("non-empty set")];

    let mut agents = Vec::with_capacity(n);
    for house in &houses {
        for (r, role) in AgentRole::ALL.into_iter().enumerate() {
            let choices = &facilities_of[r];
            let facility_id = choices[init.next_index(choices.len()).expect("validated")];
            let (lo, hi) = *config.go_out_prob_range.get(role);
            let base_go_out_prob = init.next_range(lo, hi);
            let incubation_days = pick(&config.incubation_set, &mut init);
            let infectious_days = pick(&config.infectious_set, &mut init);
            agents.push(Agent {
                id: agents.len(),
                role,
                house_id: house.id,
                facility_id,
                state: InfectionState::S,
                days_in_state: 0,
                incubation_days,
                infectious_days,
                base_go_out_prob,
                hospitalized: false,
                app_user: false,
                registered: false,
                notified_until_day: None,
                position: house.location,
                plan: None,
            });
        }
    }

    for idx in sorted_sample(&mut init, n, config.n_initial_infected) {
        agents[idx].state = InfectionState::I;
    }

    let n_users = (config.app.usage_rate * n as f64).round() as usize;
    let mut app = RngStream::global(seed, Domain::App);
    for idx in sorted_sample(&mut app, n, n_users.min(n)) {
        agents[idx].app_user = true;
    }

    for agent in agents.iter_mut().filter(|a| a.state == InfectionState::I) {
        let mut stream = RngStream::for_agent(seed, Domain::App, agent.id);
        agent.registered = maybe_register(agent, config.app.registration_rate, &mut stream);
    }

    Population { agents, houses }
}

fn sorted_sample(stream: &mut RngStream, n: usize, k: usize) -> Vec<usize> {
    let mut picked = index::sample(stream, n, k).into_vec();
    picked.sort_unstable();
    picked
}
