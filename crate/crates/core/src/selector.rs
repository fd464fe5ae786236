//! Candidate interactions, estimability checks and forward CNMA model selection.
//!
//! Selection starts from the additive model. At each cardinality every estimable set of that
//! many interactions is fitted and the set with the smallest Q is compared with the model
//! chosen at the previous cardinality through the Q difference test. The step is accepted
//! when that p-value is below the threshold (0.157, the AIC-equivalent level for one
//! degree of freedom).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{fit_model, q_difference, ModelFit, ModelKind};
use crate::linalg::numerical_rank;
use crate::network::{
    add_interaction_columns, build_combination_matrix, interaction_name, CombinationMatrix,
    Network,
};

/// p-value threshold equivalent to AIC for a one-parameter step.
pub const AIC_THRESHOLD: f64 = 0.157;

const Q_TIE_TOL: f64 = 1e-10;

/// Every unordered pair of active components that occurs together in some intervention,
/// in lexicographic order.
pub fn candidate_interactions(combination: &CombinationMatrix) -> Vec<(String, String)> {
    let mut pairs = BTreeSet::new();
    let names: Vec<(usize, String)> = combination
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(j, c)| match c {
            crate::network::Column::Component(name) => Some((j, name.clone())),
            _ => None,
        })
        .collect();
    let entries = combination.entries();
    for row in 0..entries.nrows() {
        let present: Vec<&String> = names
            .iter()
            .filter(|(j, _)| entries[(row, *j)] != 0)
            .map(|(_, n)| n)
            .collect();
        for (i, a) in present.iter().enumerate() {
            for b in &present[i + 1..] {
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                pairs.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    pairs.into_iter().collect()
}

fn design_rank(net: &Network, combination: &CombinationMatrix) -> usize {
    let design = net.incidence_matrix() * combination.entries();
    numerical_rank(&design.map(|v| v as f64))
}

/// Whether appending `interaction` to `base` strictly increases the design rank.
pub fn is_estimable(net: &Network, base: &CombinationMatrix, interaction: &(String, String)) -> bool {
    let Ok(extended) = add_interaction_columns(base, core::slice::from_ref(interaction)) else {
        return false;
    };
    if extended.is_zero_column(extended.columns().len() - 1) {
        return false;
    }
    design_rank(net, &extended) > design_rank(net, base)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    /// Accept a step when its difference-test p-value is below this.
    pub threshold: f64,
    /// Largest number of interactions to consider; `None` for no limit.
    pub max_cardinality: Option<usize>,
    /// Best-subset search is used while the pool has at most this many interactions...
    pub subset_pool_cap: usize,
    /// ...and the cardinality is at most this; otherwise steps add one interaction greedily.
    pub subset_cardinality_cap: usize,
    /// Components without a column (placebo).
    pub inactive: Vec<String>,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            threshold: AIC_THRESHOLD,
            max_cardinality: None,
            subset_pool_cap: 12,
            subset_cardinality_cap: 4,
            inactive: Vec::new(),
        }
    }
}

impl SelectionOptions {
    pub fn with_inactive(inactive: &[String]) -> Self {
        Self {
            inactive: inactive.to_vec(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The best model of the next cardinality was not significantly better.
    Threshold,
    /// No estimable interaction set of the next cardinality exists.
    NoCandidates,
    /// Every estimable set of the next cardinality would leave no degrees of freedom or
    /// saturate the design.
    DfExhausted,
    /// The configured maximum cardinality was reached.
    MaxCardinality,
}

/// One fitted candidate model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub interactions: Vec<String>,
    #[serde(rename = "Q")]
    pub q: f64,
    pub df: usize,
    pub p_heterogeneity: Option<f64>,
    /// Difference test against the model chosen at the previous cardinality.
    pub p_vs_incumbent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    pub cardinality: usize,
    pub candidates_evaluated: usize,
    pub greedy: bool,
    pub candidates: Vec<CandidateResult>,
    /// Index into `candidates` of the minimum-Q set, if any.
    pub best: Option<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace {
    pub pool: Vec<String>,
    pub inestimable: Vec<String>,
    pub additive: CandidateResult,
    pub steps: Vec<SelectionStep>,
    pub selected: Vec<String>,
    pub stopped_because: StopReason,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub final_model: ModelFit,
}

impl SelectionTrace {
    /// Label such as `additive` or `A*B+C*D`.
    pub fn model_label(&self) -> String {
        model_label(&self.selected)
    }
}

pub fn model_label(interactions: &[String]) -> String {
    if interactions.is_empty() {
        "additive".to_string()
    } else {
        interactions.join("+")
    }
}

fn candidate_result(fit: &ModelFit, names: Vec<String>, incumbent: Option<&ModelFit>) -> CandidateResult {
    CandidateResult {
        interactions: names,
        q: fit.q(),
        df: fit.df(),
        p_heterogeneity: fit.heterogeneity.p,
        p_vs_incumbent: incumbent.and_then(|inc| q_difference(inc, fit)).and_then(|t| t.p),
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Forward selection of two-way interactions starting from the additive CNMA.
pub fn forward_select(net: &Network, options: &SelectionOptions) -> Result<SelectionTrace> {
    let base = build_combination_matrix(net.interventions(), &options.inactive);
    let base_rank = design_rank(net, &base);
    let saturated_rank = net.n_interventions() - net.n_subnetworks();
    let m = net.n_comparisons();

    let mut pool = Vec::new();
    let mut inestimable = Vec::new();
    for pair in candidate_interactions(&base) {
        if is_estimable(net, &base, &pair) {
            pool.push(pair);
        } else {
            inestimable.push(interaction_name(&pair.0, &pair.1));
        }
    }
    let pool_names: Vec<String> = pool.iter().map(|(a, b)| interaction_name(a, b)).collect();

    let additive = fit_model(net, &base, ModelKind::Cnma)?;
    let additive_row = candidate_result(&additive, Vec::new(), None);
    let mut incumbent = additive;
    let mut incumbent_set: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    let max_card = options.max_cardinality.unwrap_or(pool.len()).min(pool.len());

    let mut stop = StopReason::MaxCardinality;
    if pool.is_empty() {
        stop = StopReason::NoCandidates;
    }
    for card in 1..=max_card {
        let best_subset =
            pool.len() <= options.subset_pool_cap && card <= options.subset_cardinality_cap;
        let subsets: Vec<Vec<usize>> = if best_subset {
            combinations(pool.len(), card)
        } else {
            warnings.push(format!(
                "cardinality {card}: pool of {} interactions exceeds best-subset cap; adding \
                 interactions greedily",
                pool.len()
            ));
            (0..pool.len())
                .filter(|i| !incumbent_set.contains(i))
                .map(|i| {
                    let mut s = incumbent_set.clone();
                    s.push(i);
                    s.sort_unstable();
                    s
                })
                .collect()
        };

        let mut any_estimable = false;
        let mut fitted: Vec<(Vec<usize>, ModelFit)> = Vec::new();
        for subset in subsets {
            let pairs: Vec<(String, String)> = subset.iter().map(|&i| pool[i].clone()).collect();
            let combination = add_interaction_columns(&base, &pairs)?;
            let rank = design_rank(net, &combination);
            if rank != base_rank + card {
                continue;
            }
            any_estimable = true;
            if rank >= saturated_rank || rank >= m {
                continue;
            }
            fitted.push((subset, fit_model(net, &combination, ModelKind::Cnma)?));
        }
        if fitted.is_empty() {
            stop = if any_estimable {
                StopReason::DfExhausted
            } else {
                StopReason::NoCandidates
            };
            break;
        }

        let candidates: Vec<CandidateResult> = fitted
            .iter()
            .map(|(s, fit)| {
                let names = s.iter().map(|&i| pool_names[i].clone()).collect();
                candidate_result(fit, names, Some(&incumbent))
            })
            .collect();
        // subsets arrive in lexicographic order, so the first minimum wins ties
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate().skip(1) {
            if c.q < candidates[best].q - Q_TIE_TOL {
                best = i;
            }
        }
        let p = candidates[best].p_vs_incumbent;
        let accepted = matches!(p, Some(p) if p < options.threshold);
        steps.push(SelectionStep {
            cardinality: card,
            candidates_evaluated: candidates.len(),
            greedy: !best_subset,
            candidates,
            best: Some(best),
            accepted,
        });
        if !accepted {
            stop = StopReason::Threshold;
            break;
        }
        let (subset, fit) = fitted.swap_remove(best);
        incumbent = fit;
        incumbent_set = subset;
    }

    Ok(SelectionTrace {
        pool: pool_names.clone(),
        inestimable,
        additive: additive_row,
        steps,
        selected: incumbent_set.iter().map(|&i| pool_names[i].clone()).collect(),
        stopped_because: stop,
        warnings,
        final_model: incumbent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ContrastRecord;
    use alloc::vec;

    fn rec(study: &str, t1: &str, t2: &str, d: f64) -> ContrastRecord {
        ContrastRecord {
            study_id: study.into(),
            treat1: t1.into(),
            treat2: t2.into(),
            effect: d,
            se: 0.2,
        }
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(2, 3).is_empty());
        assert_eq!(combinations(10, 3).len(), 120);
    }

    #[test]
    fn no_combinations_means_no_candidates() {
        let net = Network::from_records(
            &[rec("s1", "A", "P", 0.1), rec("s2", "B", "P", 0.2), rec("s3", "A", "B", 0.0)],
            '+',
        )
        .unwrap();
        let trace = forward_select(&net, &SelectionOptions::with_inactive(&["P".into()])).unwrap();
        assert_eq!(trace.stopped_because, StopReason::NoCandidates);
        assert!(trace.selected.is_empty());
        assert_eq!(trace.model_label(), "additive");
    }

    #[test]
    fn component_only_in_combination_is_inestimable() {
        // V only appears inside A+V, so A*V is confounded with V.
        let net = Network::from_records(
            &[
                rec("s1", "A", "P", 0.1),
                rec("s2", "A+V", "P", 0.2),
                rec("s3", "A+V", "A", 0.1),
            ],
            '+',
        )
        .unwrap();
        let base = build_combination_matrix(net.interventions(), &["P".into()]);
        let pairs = candidate_interactions(&base);
        assert_eq!(pairs, vec![("A".to_string(), "V".to_string())]);
        assert!(!is_estimable(&net, &base, &pairs[0]));
        assert!(!is_estimable(&net, &base, &("A".into(), "P".into())));
    }
}
