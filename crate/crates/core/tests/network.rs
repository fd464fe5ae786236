mod common;

use cnma_core::network::{
    add_interaction_columns, build_combination_matrix, degrees_of_freedom, ContrastRecord,
    DesignMatrices, DfModel, Network,
};
use common::{integer_rank, random_network};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shuffled(net: &Network, seed: u64) -> Network {
    let mut recs = net.records();
    recs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // swap arm order in every other record; effects flip sign
    let recs: Vec<ContrastRecord> = recs
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if i % 2 == 0 {
                r
            } else {
                ContrastRecord {
                    treat1: r.treat2,
                    treat2: r.treat1,
                    effect: -r.effect,
                    ..r
                }
            }
        })
        .collect();
    Network::from_records(&recs, '+').unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incidence_rows_sum_to_zero(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let b = net.incidence_matrix();
        for row in b.row_iter() {
            prop_assert_eq!(row.iter().sum::<i32>(), 0);
            prop_assert_eq!(row.iter().filter(|&&v| v != 0).count(), 2);
        }
    }

    #[test]
    fn design_is_incidence_times_combination(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let p = net.index_of("P").unwrap();
        let c = build_combination_matrix(net.interventions(), &["P".into()]);
        let dm = DesignMatrices::new(&net, &c, p);
        let b = net.incidence_matrix();
        for i in 0..b.nrows() {
            for j in 0..c.entries().ncols() {
                let expected: i32 = (0..b.ncols()).map(|t| b[(i, t)] * c.entries()[(t, j)]).sum();
                prop_assert_eq!(dm.cnma[(i, j)], expected);
            }
        }
        prop_assert_eq!(dm.rank, integer_rank(&dm.cnma));
        prop_assert_eq!(integer_rank(&dm.nma), n - 1);
    }

    #[test]
    fn counts_do_not_depend_on_input_order(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8) {
        let net = random_network(seed, n, extra);
        let other = shuffled(&net, seed ^ 0x5a5a);
        prop_assert_eq!(net.n_subnetworks(), other.n_subnetworks());
        let inactive = ["P".to_string()];
        let rank = |net: &Network| {
            let c = build_combination_matrix(net.interventions(), &inactive);
            DesignMatrices::new(net, &c, net.index_of("P").unwrap()).rank
        };
        prop_assert_eq!(rank(&net), rank(&other));
        prop_assert_eq!(
            degrees_of_freedom(&net, DfModel::Nma).unwrap(),
            degrees_of_freedom(&other, DfModel::Nma).unwrap()
        );
    }

    #[test]
    fn interaction_columns_are_products(seed in any::<u64>(), n in 4usize..12) {
        let net = random_network(seed, n, 2);
        let base = build_combination_matrix(net.interventions(), &["P".into()]);
        let comps: Vec<String> = base.column_names();
        prop_assume!(comps.len() >= 2);
        let pair = (comps[0].clone(), comps[1].clone());
        let ci = add_interaction_columns(&base, &[pair]).unwrap();
        let last = ci.entries().ncols() - 1;
        for i in 0..ci.entries().nrows() {
            prop_assert_eq!(ci.entries()[(i, last)], base.entries()[(i, 0)] * base.entries()[(i, 1)]);
        }
    }
}

#[test]
fn equal_components_cancel_in_the_design() {
    // "A" and "A+P" differ only by the inactive placebo, so their comparison has a zero row.
    let recs = [
        ContrastRecord { study_id: "s1".into(), treat1: "A".into(), treat2: "P".into(), effect: 0.2, se: 0.3 },
        ContrastRecord { study_id: "s2".into(), treat1: "A+P".into(), treat2: "A".into(), effect: 0.1, se: 0.3 },
        ContrastRecord { study_id: "s3".into(), treat1: "A+B".into(), treat2: "A".into(), effect: 0.4, se: 0.3 },
    ];
    let net = Network::from_records(&recs, '+').unwrap();
    let c = build_combination_matrix(net.interventions(), &["P".into()]);
    let dm = DesignMatrices::new(&net, &c, net.index_of("P").unwrap());
    let zero_rows: Vec<usize> = (0..dm.cnma.nrows())
        .filter(|&i| dm.cnma.row(i).iter().all(|&v| v == 0))
        .collect();
    assert_eq!(zero_rows, vec![1]);
}

#[test]
fn separate_nma_df_counts_every_subnetwork() {
    let recs = [
        ContrastRecord { study_id: "s1".into(), treat1: "A".into(), treat2: "P".into(), effect: 0.2, se: 0.3 },
        ContrastRecord { study_id: "s2".into(), treat1: "A".into(), treat2: "P".into(), effect: 0.1, se: 0.3 },
        ContrastRecord { study_id: "s3".into(), treat1: "B".into(), treat2: "C".into(), effect: 0.4, se: 0.3 },
        ContrastRecord { study_id: "s4".into(), treat1: "B".into(), treat2: "C".into(), effect: 0.3, se: 0.3 },
    ];
    let net = Network::from_records(&recs, '+').unwrap();
    assert_eq!(net.n_subnetworks(), 2);
    // n_a - k - (n - n_c) = 8 - 4 - (4 - 2)
    assert_eq!(degrees_of_freedom(&net, DfModel::SeparateNmas).unwrap(), 2);
}
