mod common;

use cnma_core::estimator::{
    fit_cnma, fit_model, fit_nma, fit_separate_nmas, fit_wls, q_difference_test, ModelKind,
};
use cnma_core::network::{CombinationMatrix, ContrastRecord, DfModel, Network};
use cnma_core::selector::candidate_interactions;
use cnma_core::{build_combination_matrix, degrees_of_freedom};
use common::{max_rel_diff, oracle_wls, random_network};
use nalgebra::DVector;
use proptest::prelude::*;

fn inactive() -> Vec<String> {
    vec!["P".to_string()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wls_matches_rank_factorization_oracle(
        seed in any::<u64>(), n in 3usize..9, extra in 0usize..5, tau2 in prop_oneof![Just(0.0), 0.0..0.3]
    ) {
        let net = random_network(seed, n, extra);
        let c = build_combination_matrix(net.interventions(), &inactive());
        let x = net.incidence_matrix() * c.entries();
        let se = net.standard_errors();
        let d = net.effects();
        let fit = fit_wls(&x.map(|v| v as f64), &d, &se, tau2).unwrap();
        let w = se.map(|s| 1.0 / (s * s + tau2));
        let (beta, fitted) = oracle_wls(&x, &d, &w);
        prop_assert!(max_rel_diff(&fit.beta, &beta) < 1e-10, "beta {} vs {}", fit.beta, beta);
        prop_assert!(max_rel_diff(&fit.fitted, &fitted) < 1e-10);
    }

    #[test]
    fn nesting_orders_q_and_df(seed in any::<u64>(), n in 4usize..12, extra in 2usize..12) {
        let net = random_network(seed, n, extra);
        let p = net.index_of("P").unwrap();
        let nma = fit_nma(&net, p).unwrap();
        let add = fit_cnma(&net, &inactive(), &[]).unwrap();
        let tol = 1e-9 * add.q().max(1.0);
        prop_assert!(nma.q() <= add.q() + tol);
        for pair in candidate_interactions(&add.combination) {
            let int = fit_cnma(&net, &inactive(), &[pair]).unwrap();
            prop_assert!(nma.q() <= int.q() + tol);
            prop_assert!(int.q() <= add.q() + tol);
            let gained = int.rank - add.rank;
            prop_assert!(gained <= 1);
            prop_assert_eq!(add.df() - int.df(), gained);
            if gained == 1 {
                let t = q_difference_test(&add, &int).unwrap();
                prop_assert_eq!(t.df, 1);
            }
        }
    }

    #[test]
    fn fitted_effects_ignore_column_order(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let c = build_combination_matrix(net.interventions(), &inactive());
        let x = (net.incidence_matrix() * c.entries()).map(|v| v as f64);
        let rev: Vec<usize> = (0..x.ncols()).rev().collect();
        let xr = x.select_columns(&rev);
        let a = fit_wls(&x, &net.effects(), &net.standard_errors(), 0.0).unwrap();
        let b = fit_wls(&xr, &net.effects(), &net.standard_errors(), 0.0).unwrap();
        prop_assert!(max_rel_diff(&a.fitted, &b.fitted) < 1e-10);
        prop_assert!((a.q - b.q).abs() < 1e-9 * a.q.max(1.0));
    }

    #[test]
    fn nma_effects_are_consistent(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let fit = fit_nma(&net, 0).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let ij = fit.relative_effect(i, j).unwrap().estimate;
                    let jk = fit.relative_effect(j, k).unwrap().estimate;
                    let ik = fit.relative_effect(i, k).unwrap().estimate;
                    prop_assert!((ij + jk - ik).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn reference_choice_does_not_change_the_nma(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let a = fit_nma(&net, 0).unwrap();
        let b = fit_nma(&net, n - 1).unwrap();
        prop_assert!(max_rel_diff(&a.delta, &b.delta) < 1e-10);
        prop_assert_eq!(a.df(), b.df());
    }
}

#[test]
fn separate_nmas_sum_to_joint_fit() {
    for seed in 0..50u64 {
        let left = random_network(seed, 5, 3);
        let right = random_network(seed + 1000, 4, 2);
        let mut recs = left.records();
        for mut r in right.records() {
            r.study_id = format!("r{}", r.study_id);
            r.treat1 = format!("{}+X", r.treat1);
            r.treat2 = format!("{}+X", r.treat2);
            recs.push(r);
        }
        let net = Network::from_records(&recs, '+').unwrap();
        assert_eq!(net.n_subnetworks(), 2);
        let p = net.index_of("P").unwrap();
        let sep = fit_separate_nmas(&net, p).unwrap();
        let parts: f64 = sep.parts.iter().map(|s| s.fit.q()).sum();
        assert!((sep.heterogeneity.q - parts).abs() <= 1e-10 * parts.max(1.0));
        // one joint least squares fit with a reference per subnetwork gives the same Q
        let refs: Vec<usize> = net.connectivity(Some(p)).iter().map(|m| m[0]).collect();
        let joint = fit_model(&net, &CombinationMatrix::nma(net.interventions(), &refs), ModelKind::Nma).unwrap();
        assert!((joint.q() - parts).abs() <= 1e-10 * parts.max(1.0), "{} vs {parts}", joint.q());
        assert_eq!(sep.heterogeneity.df, degrees_of_freedom(&net, DfModel::SeparateNmas).unwrap());
        assert_eq!(joint.df(), sep.heterogeneity.df);
    }
}

#[test]
fn additive_equals_nma_without_combinations() {
    let recs: Vec<ContrastRecord> = [
        ("s1", "A", "P", 0.3), ("s2", "B", "P", 0.1), ("s3", "B", "A", -0.25),
        ("s4", "C", "A", 0.4), ("s5", "C", "P", 0.5), ("s6", "C", "B", 0.2),
    ]
    .iter()
    .map(|&(s, a, b, d)| ContrastRecord { study_id: s.into(), treat1: a.into(), treat2: b.into(), effect: d, se: 0.2 + d.abs() / 10.0 })
    .collect();
    let net = Network::from_records(&recs, '+').unwrap();
    let nma = fit_nma(&net, net.index_of("P").unwrap()).unwrap();
    let add = fit_cnma(&net, &inactive(), &[]).unwrap();
    assert!(max_rel_diff(&nma.delta, &add.delta) < 1e-12);
    assert!((nma.q() - add.q()).abs() < 1e-12);
    assert_eq!(nma.df(), add.df());
    assert!((nma.tau2 - add.tau2).abs() < 1e-12);
}

#[test]
fn tau2_is_zero_for_homogeneous_data() {
    // data that fit exactly: every Q residual vanishes
    let recs: Vec<ContrastRecord> = [("s1", "A", "P", 0.3), ("s2", "B", "P", 0.1), ("s3", "B", "A", -0.2), ("s4", "A", "P", 0.3)]
        .iter()
        .map(|&(s, a, b, d)| ContrastRecord { study_id: s.into(), treat1: a.into(), treat2: b.into(), effect: d, se: 0.25 })
        .collect();
    let net = Network::from_records(&recs, '+').unwrap();
    let fit = fit_nma(&net, 0).unwrap();
    assert!(fit.q() < 1e-20);
    assert_eq!(fit.tau2, 0.0);
    let d = DVector::from_vec(vec![0.3, 0.1, -0.2, 0.3]);
    assert!(max_rel_diff(&d, &fit.delta) < 1e-12);
}
