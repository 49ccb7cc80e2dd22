use cocoa_abm::epidemic::{kernel_distribution, sample_transition, KernelInputs, KernelParams};
use cocoa_abm::rng::{derive_stream, Domain};
use cocoa_abm::InfectionState;
use proptest::prelude::*;

const PARAMS: [KernelParams; 2] = [
    KernelParams {
        beta: 0.00125,
        gamma0: 0.1,
        gamma1: 0.02,
        incubation_days: 5,
        infectious_days: 10,
    },
    KernelParams {
        beta: 0.3,
        gamma0: 0.5,
        gamma1: 0.25,
        incubation_days: 3,
        infectious_days: 8,
    },
];

fn all_inputs() -> impl Iterator<Item = KernelInputs> {
    InfectionState::ALL.into_iter().flat_map(|state| {
        [false, true].into_iter().flat_map(move |contact| {
            (0..=20).flat_map(move |days_in_state| {
                [false, true].into_iter().map(move |hospitalized| KernelInputs {
                    state,
                    contact,
                    days_in_state,
                    hospitalized,
                })
            })
        })
    })
}

#[test]
fn distributions_sum_to_one_exactly() {
    for params in &PARAMS {
        for inputs in all_inputs() {
            let d = kernel_distribution(inputs, params);
            assert_eq!(d.total(), 1.0, "{inputs:?}");
            assert!(d.iter().all(|(_, p)| (0.0..=1.0).contains(&p)));
        }
    }
}

#[test]
fn sampled_frequencies_within_three_sigma() {
    const DRAWS: u32 = 100_000;
    for (k, params) in PARAMS.iter().enumerate() {
        for (cell, inputs) in all_inputs().enumerate() {
            let d = kernel_distribution(inputs, params);
            // Deterministic cells need no sampling beyond a few checks.
            let draws = if d.iter().any(|(_, p)| p == 1.0) { 100 } else { DRAWS };
            let mut stream = derive_stream(k as u64 + 1, Domain::Epidemic, cell as u64);
            let mut counts = [0u32; 5];
            for _ in 0..draws {
                counts[sample_transition(inputs, params, &mut stream).index()] += 1;
            }
            for (state, p) in d.iter() {
                let n = f64::from(draws);
                let observed = f64::from(counts[state.index()]);
                let sigma = (n * p * (1.0 - p)).sqrt();
                assert!(
                    (observed - n * p).abs() <= 3.0 * sigma,
                    "{inputs:?} -> {state:?}: {observed} vs {}",
                    n * p
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn samples_follow_model_edges(
        s in 0usize..5,
        contact: bool,
        days in 0u32..25,
        hospitalized: bool,
        seed: u64,
    ) {
        let inputs = KernelInputs {
            state: InfectionState::ALL[s],
            contact,
            days_in_state: days,
            hospitalized,
        };
        let mut stream = derive_stream(seed, Domain::Epidemic, 0);
        for params in &PARAMS {
            let next = sample_transition(inputs, params, &mut stream);
            prop_assert!(inputs.state.can_become(next), "{:?} -> {:?}", inputs.state, next);
            prop_assert!(kernel_distribution(inputs, params).get(next) > 0.0);
        }
    }

    #[test]
    fn app_draws_leave_other_streams_alone(seed: u64, entity in 0u64..2000, burn in 0usize..64) {
        let mut app = derive_stream(seed, Domain::App, entity);
        for _ in 0..burn {
            app.next_uniform();
        }
        let mut a = derive_stream(seed, Domain::Epidemic, entity);
        let mut b = derive_stream(seed, Domain::Epidemic, entity);
        let mut sa = derive_stream(seed, Domain::Schedule, entity);
        let mut sb = derive_stream(seed, Domain::Schedule, entity);
        for _ in 0..16 {
            prop_assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
            prop_assert_eq!(sa.next_uniform().to_bits(), sb.next_uniform().to_bits());
        }
    }
}

#[test]
fn uniforms_pass_kolmogorov_smirnov() {
    let mut s = derive_stream(42, Domain::Init, 0);
    let n = 100_000;
    let mut xs: Vec<f64> = (0..n).map(|_| s.next_uniform()).collect();
    xs.sort_by(f64::total_cmp);
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64 - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    // 1% critical value for large n.
    assert!(d < 1.628 / (n as f64).sqrt(), "D = {d}");
}
