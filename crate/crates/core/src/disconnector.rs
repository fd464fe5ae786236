//! Construction of disconnected networks from a connected one by removing the studies that
//! bridge a main subnetwork (holding the reference) and the remaining auxiliary subnetworks.
//!
//! Interventions compared only with the reference must stay with it (the minimal set). Every
//! superset of the minimal set is a candidate main subnetwork; a candidate is kept when no
//! intervention loses all of its comparisons and the main subnetwork stays connected.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Above this many non-minimal interventions enumeration must be forced.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkCounts {
    pub k: usize,
    pub m: usize,
    pub n_c: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisconnectedDesign {
    /// 1-based position in the sorted enumeration.
    pub id: usize,
    pub main_set: Vec<String>,
    pub auxiliary_partition: Vec<Vec<String>>,
    pub removed_studies: Vec<String>,
    pub resulting_counts: NetworkCounts,
    /// Studies and comparisons inside the main subnetwork.
    pub main_counts: NetworkCounts,
}

fn check_reference(net: &Network, reference: usize) -> Result<()> {
    if reference >= net.n_interventions() {
        return Err(Error::UnknownIntervention(alloc::format!("#{reference}")));
    }
    Ok(())
}

/// The reference plus every intervention whose comparisons are all with the reference.
pub fn minimal_set(net: &Network, reference: usize) -> Result<BTreeSet<usize>> {
    check_reference(net, reference)?;
    let n = net.n_interventions();
    let mut only_ref = vec![true; n];
    let mut seen = vec![false; n];
    for c in net.comparisons() {
        for (a, b) in [(c.treat1, c.treat2), (c.treat2, c.treat1)] {
            seen[a] = true;
            if b != reference {
                only_ref[a] = false;
            }
        }
    }
    Ok((0..n)
        .filter(|&i| i == reference || (seen[i] && only_ref[i]))
        .collect())
}

/// Whether `in_main` describes a valid split; returns the indices of the removed comparisons.
pub fn split_predicate(net: &Network, reference: usize, in_main: &[bool]) -> Option<Vec<usize>> {
    let n = net.n_interventions();
    if !in_main[reference] || in_main.iter().all(|&b| b) {
        return None;
    }
    let mut removed = Vec::new();
    let mut degree = vec![0usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (idx, c) in net.comparisons().iter().enumerate() {
        if in_main[c.treat1] != in_main[c.treat2] {
            removed.push(idx);
            continue;
        }
        degree[c.treat1] += 1;
        degree[c.treat2] += 1;
        if in_main[c.treat1] {
            let (a, b) = (find(&mut parent, c.treat1), find(&mut parent, c.treat2));
            parent[a] = b;
        }
    }
    if removed.is_empty() || degree.iter().any(|&d| d == 0) {
        return None;
    }
    let root = find(&mut parent, reference);
    for v in 0..n {
        if in_main[v] && find(&mut parent, v) != root {
            return None;
        }
    }
    Some(removed)
}

fn design_from_split(net: &Network, reference: usize, in_main: &[bool], removed: &[usize]) -> DisconnectedDesign {
    let removed_set: BTreeSet<usize> = removed.iter().copied().collect();
    let mut remaining = Vec::new();
    let mut main_comparisons = Vec::new();
    for (idx, c) in net.comparisons().iter().enumerate() {
        if removed_set.contains(&idx) {
            continue;
        }
        remaining.push(c);
        if in_main[c.treat1] {
            main_comparisons.push(c);
        }
    }
    let studies = |cs: &[&crate::network::Comparison]| {
        cs.iter().map(|c| c.study_id.as_str()).collect::<BTreeSet<_>>().len()
    };
    let reduced = net.filter_comparisons(|c| in_main[c.treat1] == in_main[c.treat2]);
    let parts = reduced.connectivity(Some(reference));
    let labels = |members: &[usize]| -> Vec<String> {
        members.iter().map(|&i| net.label(i).to_string()).collect()
    };
    let removed_studies: BTreeSet<String> = removed
        .iter()
        .map(|&i| net.comparisons()[i].study_id.clone())
        .collect();
    DisconnectedDesign {
        id: 0,
        main_set: labels(&parts[0]),
        auxiliary_partition: parts[1..].iter().map(|p| labels(p)).collect(),
        removed_studies: removed_studies.into_iter().collect(),
        resulting_counts: NetworkCounts {
            k: studies(&remaining),
            m: remaining.len(),
            n_c: parts.len(),
        },
        main_counts: NetworkCounts {
            k: studies(&main_comparisons),
            m: main_comparisons.len(),
            n_c: 1,
        },
    }
}

/// All distinct disconnected networks whose main subnetwork contains the minimal set, sorted
/// by decreasing comparisons, studies, and comparisons in the main subnetwork.
pub fn enumerate_disconnected(
    net: &Network,
    reference: usize,
    force: bool,
) -> Result<Vec<DisconnectedDesign>> {
    check_reference(net, reference)?;
    let n_c = net.n_subnetworks();
    if n_c > 1 {
        return Err(Error::AlreadyDisconnected(n_c));
    }
    let minimal = minimal_set(net, reference)?;
    let free: Vec<usize> = (0..net.n_interventions())
        .filter(|i| !minimal.contains(i))
        .collect();
    if free.len() > ENUMERATION_CAP && !force {
        return Err(Error::EnumerationTooLarge(free.len(), ENUMERATION_CAP));
    }
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut designs = Vec::new();
    let mut in_main = vec![false; net.n_interventions()];
    for mask in 0u64..(1u64 << free.len()) {
        in_main.iter_mut().for_each(|b| *b = false);
        for &i in &minimal {
            in_main[i] = true;
        }
        for (bit, &i) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                in_main[i] = true;
            }
        }
        let Some(removed) = split_predicate(net, reference, &in_main) else {
            continue;
        };
        let design = design_from_split(net, reference, &in_main, &removed);
        if seen.insert(design.removed_studies.clone()) {
            designs.push(design);
        }
    }
    designs.sort_by(|a, b| {
        b.resulting_counts
            .m
            .cmp(&a.resulting_counts.m)
            .then(b.resulting_counts.k.cmp(&a.resulting_counts.k))
            .then(b.main_counts.m.cmp(&a.main_counts.m))
            .then(a.main_set.cmp(&b.main_set))
    });
    for (i, d) in designs.iter_mut().enumerate() {
        d.id = i + 1;
    }
    Ok(designs)
}

/// Remove the bridging studies of `design` from `net`.
pub fn apply_disconnect(net: &Network, design: &DisconnectedDesign) -> Result<Network> {
    if design.removed_studies.is_empty() {
        return Err(Error::NotDisconnected);
    }
    let present: BTreeSet<&str> = net.comparisons().iter().map(|c| c.study_id.as_str()).collect();
    for s in &design.removed_studies {
        if !present.contains(s.as_str()) {
            return Err(Error::StaleDesign(s.clone()));
        }
    }
    let removed: BTreeSet<&str> = design.removed_studies.iter().map(String::as_str).collect();
    let out = net.filter_comparisons(|c| !removed.contains(c.study_id.as_str()));
    let n_c = out.n_subnetworks();
    if n_c < 2 {
        return Err(Error::NotDisconnected);
    }
    Ok(out)
}

/// Uniform draw from a non-empty list of designs.
pub fn sample_disconnected<'a, R: Rng + ?Sized>(
    designs: &'a [DisconnectedDesign],
    rng: &mut R,
) -> Result<&'a DisconnectedDesign> {
    if designs.is_empty() {
        return Err(Error::NoDesigns);
    }
    Ok(&designs[rng.random_range(0..designs.len())])
}
