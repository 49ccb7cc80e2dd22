//! State-transition kernel of the SEIR+D model.
//!
//! S→E is evaluated once per 10-minute step; E→I and I→{R,D} are evaluated
//! at day boundaries against the number of whole days spent in the state.
//! R and D are absorbing. Contact `C` is binary: any number of infectious
//! neighbours yields a single Bernoulli(β) trial per step.

use crate::domain::InfectionState;
use crate::rng::RngStream;

/// Conditioning variables of one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelInputs {
    pub state: InfectionState,
    pub contact: bool,
    pub days_in_state: u32,
    pub hospitalized: bool,
}

/// Parameters of one agent's kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub beta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub incubation_days: u32,
    pub infectious_days: u32,
}

pub fn step_transition_s(contact: bool, beta: f64, u: f64) -> InfectionState {
    if contact && u < beta {
        InfectionState::E
    } else {
        InfectionState::S
    }
}

pub fn day_transition_e(days_in_state: u32, incubation_days: u32) -> InfectionState {
    if days_in_state == incubation_days {
        InfectionState::I
    } else {
        InfectionState::E
    }
}

pub fn day_transition_i(
    days_in_state: u32,
    infectious_days: u32,
    hospitalized: bool,
    gamma0: f64,
    gamma1: f64,
    u: f64,
) -> InfectionState {
    if days_in_state != infectious_days {
        return InfectionState::I;
    }
    let fatality = if hospitalized { gamma1 } else { gamma0 };
    if u < fatality {
        InfectionState::D
    } else {
        InfectionState::R
    }
}

/// Exact next-state probabilities, indexed by [`InfectionState::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDistribution([f64; 5]);

impl TransitionDistribution {
    fn point(state: InfectionState) -> Self {
        let mut p = [0.0; 5];
        p[state.index()] = 1.0;
        TransitionDistribution(p)
    }

    fn split(stay: InfectionState, stay_p: f64, go: InfectionState, go_p: f64) -> Self {
        let mut p = [0.0; 5];
        p[stay.index()] = stay_p;
        p[go.index()] += go_p;
        TransitionDistribution(p)
    }

    pub fn get(&self, state: InfectionState) -> f64 {
        self.0[state.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (InfectionState, f64)> + '_ {
        InfectionState::ALL.into_iter().map(|s| (s, self.0[s.index()]))
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn kernel_distribution(inputs: KernelInputs, params: &KernelParams) -> TransitionDistribution {
    use InfectionState::*;
    match inputs.state {
        S if inputs.contact => TransitionDistribution::split(S, 1.0 - params.beta, E, params.beta),
        S => TransitionDistribution::point(S),
        E => TransitionDistribution::point(day_transition_e(inputs.days_in_state, params.incubation_days)),
        I if inputs.days_in_state == params.infectious_days => {
            let fatality = if inputs.hospitalized {
                params.gamma1
            } else {
                params.gamma0
            };
            TransitionDistribution::split(R, 1.0 - fatality, D, fatality)
        }
        I => TransitionDistribution::point(I),
        R => TransitionDistribution::point(R),
        D => TransitionDistribution::point(D),
    }
}

/// Draws one transition using the sampling routines. Always consumes one
/// uniform for S and I (so sampled frequencies can be compared against
/// [`kernel_distribution`]); none for the other states.
pub fn sample_transition(inputs: KernelInputs, params: &KernelParams, stream: &mut RngStream) -> InfectionState {
    match inputs.state {
        InfectionState::S => step_transition_s(inputs.contact, params.beta, stream.next_uniform()),
        InfectionState::E => day_transition_e(inputs.days_in_state, params.incubation_days),
        InfectionState::I => day_transition_i(
            inputs.days_in_state,
            params.infectious_days,
            inputs.hospitalized,
            params.gamma0,
            params.gamma1,
            stream.next_uniform(),
        ),
        other => other,
    }
}
