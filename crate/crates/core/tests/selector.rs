mod common;

use cnma_core::network::{add_interaction_columns, build_combination_matrix, interaction_name, Network};
use cnma_core::selector::{candidate_interactions, forward_select, is_estimable, SelectionOptions, StopReason};
use cnma_core::simulator::{generate_network, Mode, Scenario, ScenarioConfig};
use common::{integer_rank, random_network};
use proptest::prelude::*;

fn simulated(scenario: Scenario, seed: u64) -> Network {
    let config = ScenarioConfig::new(scenario, 0.0, Mode::Connected, 1, seed);
    generate_network(&config, &mut config.run_rng(0)).unwrap().network
}

fn placebo() -> Vec<String> {
    vec!["P".to_string()]
}

#[test]
fn simulated_layout_pool() {
    let net = simulated(Scenario::A, 1);
    let base = build_combination_matrix(net.interventions(), &placebo());
    let names: Vec<String> = candidate_interactions(&base)
        .iter()
        .map(|(a, b)| interaction_name(a, b))
        .collect();
    assert_eq!(names, ["A*B", "A*C", "C*D"]);
    let trace = forward_select(&net, &SelectionOptions::with_inactive(&placebo())).unwrap();
    assert_eq!(trace.pool, ["A*B", "A*C", "C*D"]);
    assert!(trace.inestimable.is_empty());
    // three interactions would reproduce the NMA, so at most two are ever fitted
    assert!(trace.steps.iter().all(|s| s.cardinality <= 2));
}

#[test]
fn zero_threshold_keeps_additive() {
    for seed in 0..10 {
        let net = simulated(Scenario::C1, seed);
        let options = SelectionOptions {
            threshold: 0.0,
            ..SelectionOptions::with_inactive(&placebo())
        };
        let trace = forward_select(&net, &options).unwrap();
        assert!(trace.selected.is_empty());
        assert_eq!(trace.stopped_because, StopReason::Threshold);
        assert_eq!(trace.model_label(), "additive");
    }
}

#[test]
fn strong_interaction_is_found() {
    // A*B with interaction ratio 2 is selected in most replications
    let hits = (0..40)
        .filter(|&seed| {
            let trace = forward_select(&simulated(Scenario::C1, seed), &SelectionOptions::with_inactive(&placebo())).unwrap();
            trace.selected.first().map(String::as_str) == Some("A*B")
        })
        .count();
    assert!(hits >= 24, "{hits}");
}

#[test]
fn network_without_combinations_has_no_candidates() {
    let net = random_network(3, 5, 3);
    let singles: Vec<_> = net
        .records()
        .into_iter()
        .map(|mut r| {
            r.treat1 = r.treat1.replace('+', "_");
            r.treat2 = r.treat2.replace('+', "_");
            r
        })
        .collect();
    let net = Network::from_records(&singles, '+').unwrap();
    let trace = forward_select(&net, &SelectionOptions::with_inactive(&placebo())).unwrap();
    assert_eq!(trace.stopped_because, StopReason::NoCandidates);
    assert!(trace.steps.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimability_matches_exact_rank(seed in any::<u64>(), n in 4usize..12, extra in 0usize..10) {
        let net = random_network(seed, n, extra);
        let base = build_combination_matrix(net.interventions(), &placebo());
        let b = net.incidence_matrix();
        let base_rank = integer_rank(&(&b * base.entries()));
        for pair in candidate_interactions(&base) {
            let ext = add_interaction_columns(&base, &[pair.clone()]).unwrap();
            let exact = integer_rank(&(&b * ext.entries())) > base_rank;
            prop_assert_eq!(is_estimable(&net, &base, &pair), exact);
        }
    }

    #[test]
    fn selection_trace_is_consistent(seed in any::<u64>(), n in 5usize..10, extra in 4usize..12) {
        let net = random_network(seed, n, extra);
        let options = SelectionOptions::with_inactive(&placebo());
        let trace = forward_select(&net, &options).unwrap();
        let accepted = trace.steps.iter().filter(|s| s.accepted).count();
        prop_assert_eq!(accepted, trace.selected.len());
        for s in &trace.steps {
            let best = &s.candidates[s.best.unwrap()];
            prop_assert!(s.candidates.iter().all(|c| c.q >= best.q - 1e-10));
            prop_assert_eq!(s.accepted, best.p_vs_incumbent.is_some_and(|p| p < options.threshold));
        }
        prop_assert!(trace.final_model.q() <= trace.additive.q + 1e-9 * trace.additive.q.max(1.0));
    }
}
