//! Treatment networks, intervention labels, combination matrices and design matrices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;

pub const COMPONENT_SEPARATOR: char = '+';
pub const INTERACTION_SEPARATOR: char = '*';

/// An intervention and the components it is made of, sorted so that "B+A" and "A+B" agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Intervention {
    label: String,
    components: Vec<String>,
}

impl Intervention {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn contains(&self, component: &str) -> bool {
        self.components.iter().any(|c| c == component)
    }
}

/// Split a label such as `onda+scop` into its components.
pub fn parse_intervention_label(label: &str, separator: char) -> Result<Intervention> {
    let err = |reason| Error::InvalidLabel {
        label: label.to_string(),
        reason,
    };
    if label.trim().is_empty() {
        return Err(err("empty label"));
    }
    let mut components: Vec<String> = Vec::new();
    for part in label.split(separator) {
        let part = part.trim();
        if part.is_empty() {
            return Err(err("empty component"));
        }
        if components.iter().any(|c| c == part) {
            return Err(err("duplicate component"));
        }
        components.push(part.to_string());
    }
    components.sort();
    let mut canonical = String::new();
    for (i, c) in components.iter().enumerate() {
        if i > 0 {
            canonical.push(separator);
        }
        canonical.push_str(c);
    }
    Ok(Intervention {
        label: canonical,
        components,
    })
}

/// One row of contrast-level input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRecord {
    pub study_id: String,
    pub treat1: String,
    pub treat2: String,
    pub effect: f64,
    pub se: f64,
}

/// A two-arm comparison: `effect` is treat1 relative to treat2 on the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub study_id: String,
    pub treat1: usize,
    pub treat2: usize,
    pub effect: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    interventions: Vec<Intervention>,
    comparisons: Vec<Comparison>,
    separator: char,
}

impl Network {
    /// Build a network from contrast records. Interventions are ordered by canonical label.
    pub fn from_records(records: &[ContrastRecord], separator: char) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let mut parsed = Vec::with_capacity(records.len());
        let mut by_label: BTreeMap<String, Intervention> = BTreeMap::new();
        for r in records {
            let t1 = parse_intervention_label(&r.treat1, separator)?;
            let t2 = parse_intervention_label(&r.treat2, separator)?;
            by_label.insert(t1.label.clone(), t1.clone());
            by_label.insert(t2.label.clone(), t2.clone());
            parsed.push((t1.label, t2.label));
        }
        let interventions: Vec<Intervention> = by_label.into_values().collect();
        let index = |label: &str| {
            interventions
                .binary_search_by(|i| i.label.as_str().cmp(label))
                .expect("label registered above")
        };
        let comparisons = records
            .iter()
            .zip(parsed)
            .map(|(r, (l1, l2))| Comparison {
                study_id: r.study_id.clone(),
                treat1: index(&l1),
                treat2: index(&l2),
                effect: r.effect,
                se: r.se,
            })
            .collect();
        let net = Self {
            interventions,
            comparisons,
            separator,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.comparisons {
            let bad = |reason: &str| Error::InvalidComparison {
                study: c.study_id.clone(),
                reason: reason.to_string(),
            };
            if c.treat1 == c.treat2 {
                return Err(bad("treat1 and treat2 are the same intervention"));
            }
            if !c.effect.is_finite() {
                return Err(bad("effect is not finite"));
            }
            if !(c.se.is_finite() && c.se > 0.0) {
                return Err(bad("standard error must be positive and finite"));
            }
            if !seen.insert(c.study_id.as_str()) {
                return Err(Error::MultiArmStudy(c.study_id.clone()));
            }
        }
        Ok(())
    }

    pub fn interventions(&self) -> &[Intervention] {
        &self.interventions
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn separator(&self) -> char {
        self.separator
    }

    pub fn n_interventions(&self) -> usize {
        self.interventions.len()
    }

    pub fn n_comparisons(&self) -> usize {
        self.comparisons.len()
    }

    pub fn n_studies(&self) -> usize {
        self.comparisons
            .iter()
            .map(|c| c.study_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Number of intervention arms; two per study.
    pub fn arm_count(&self) -> usize {
        2 * self.n_studies()
    }

    /// Index of an intervention given any spelling of its label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let canonical = parse_intervention_label(label, self.separator).ok()?;
        self.interventions
            .binary_search_by(|i| i.label.as_str().cmp(canonical.label.as_str()))
            .ok()
    }

    pub fn require_index(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::UnknownIntervention(label.to_string()))
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.interventions[idx].label
    }

    pub fn effects(&self) -> DVector<f64> {
        DVector::from_iterator(self.comparisons.len(), self.comparisons.iter().map(|c| c.effect))
    }

    pub fn standard_errors(&self) -> DVector<f64> {
        DVector::from_iterator(self.comparisons.len(), self.comparisons.iter().map(|c| c.se))
    }

    /// Comparison-incidence matrix B: +1 for treat1, -1 for treat2.
    pub fn incidence_matrix(&self) -> DMatrix<i32> {
        let mut b = DMatrix::zeros(self.comparisons.len(), self.interventions.len());
        for (row, c) in self.comparisons.iter().enumerate() {
            b[(row, c.treat1)] = 1;
            b[(row, c.treat2)] = -1;
        }
        b
    }

    /// Connected components of the comparison graph. The component holding `reference`
    /// comes first, the rest by decreasing size then smallest member.
    pub fn connectivity(&self, reference: Option<usize>) -> Vec<Vec<usize>> {
        let n = self.interventions.len();
        let mut adjacency = vec![Vec::new(); n];
        for c in &self.comparisons {
            adjacency[c.treat1].push(c.treat2);
            adjacency[c.treat2].push(c.treat1);
        }
        let mut label = vec![usize::MAX; n];
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = parts.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let v = members[head];
                head += 1;
                for &w in &adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        members.push(w);
                    }
                }
            }
            members.sort_unstable();
            parts.push(members);
        }
        let ref_part = reference.map(|r| label[r]);
        let mut order: Vec<usize> = (0..parts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = Some(a) == ref_part;
            let rb = Some(b) == ref_part;
            rb.cmp(&ra)
                .then(parts[b].len().cmp(&parts[a].len()))
                .then(parts[a][0].cmp(&parts[b][0]))
        });
        order.into_iter().map(|i| core::mem::take(&mut parts[i])).collect()
    }

    pub fn n_subnetworks(&self) -> usize {
        self.connectivity(None).len()
    }

    pub fn is_connected(&self) -> bool {
        self.n_subnetworks() == 1
    }

    /// Keep only comparisons accepted by `keep`; the intervention list is unchanged.
    pub(crate) fn filter_comparisons(&self, keep: impl Fn(&Comparison) -> bool) -> Network {
        Network {
            interventions: self.interventions.clone(),
            comparisons: self.comparisons.iter().filter(|c| keep(c)).cloned().collect(),
            separator: self.separator,
        }
    }

    /// The network restricted to a set of interventions and the comparisons among them.
    pub fn subnetwork(&self, members: &[usize]) -> Network {
        let mut sorted: Vec<usize> = members.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut remap = vec![usize::MAX; self.interventions.len()];
        for (new, &old) in sorted.iter().enumerate() {
            remap[old] = new;
        }
        let comparisons = self
            .comparisons
            .iter()
            .filter(|c| remap[c.treat1] != usize::MAX && remap[c.treat2] != usize::MAX)
            .map(|c| Comparison {
                treat1: remap[c.treat1],
                treat2: remap[c.treat2],
                ..c.clone()
            })
            .collect();
        Network {
            interventions: sorted.iter().map(|&i| self.interventions[i].clone()).collect(),
            comparisons,
            separator: self.separator,
        }
    }

    /// Same structure with new effects and standard errors (one per comparison).
    pub fn with_data(&self, effects: &[f64], ses: &[f64]) -> Result<Network> {
        if effects.len() != self.comparisons.len() || ses.len() != self.comparisons.len() {
            return Err(Error::Dimension("one effect and se per comparison"));
        }
        let mut net = self.clone();
        for (c, (&d, &s)) in net.comparisons.iter_mut().zip(effects.iter().zip(ses)) {
            c.effect = d;
            c.se = s;
        }
        net.validate()?;
        Ok(net)
    }

    pub fn records(&self) -> Vec<ContrastRecord> {
        self.comparisons
            .iter()
            .map(|c| ContrastRecord {
                study_id: c.study_id.clone(),
                treat1: self.label(c.treat1).to_string(),
                treat2: self.label(c.treat2).to_string(),
                effect: c.effect,
                se: c.se,
            })
            .collect()
    }
}

/// A column of the combination matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    Component(String),
    /// Two-way interaction; the names are stored in lexicographic order.
    Interaction(String, String),
    /// Indicator of a single intervention (standard NMA parameterization).
    Intervention(String),
}

impl Column {
    pub fn name(&self) -> String {
        match self {
            Column::Component(c) | Column::Intervention(c) => c.clone(),
            Column::Interaction(a, b) => interaction_name(a, b),
        }
    }
}

pub fn interaction_name(a: &str, b: &str) -> String {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let mut s = String::with_capacity(a.len() + b.len() + 1);
    s.push_str(a);
    s.push(INTERACTION_SEPARATOR);
    s.push_str(b);
    s
}

/// Parse `a*b` into an ordered component pair.
pub fn parse_interaction(name: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = name.split(INTERACTION_SEPARATOR).map(str::trim).collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) || parts[0] == parts[1] {
        return Err(Error::InvalidLabel {
            label: name.to_string(),
            reason: "interaction must name two distinct components as a*b",
        });
    }
    let (a, b) = (parts[0].to_string(), parts[1].to_string());
    Ok(if a <= b { (a, b) } else { (b, a) })
}

/// n x (c + l) 0/1 matrix mapping interventions to component and interaction columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    rows: Vec<Intervention>,
    columns: Vec<Column>,
    entries: DMatrix<i32>,
}

/// Combination matrix over all components except `inactive` ones, columns sorted by name.
pub fn build_combination_matrix(
    interventions: &[Intervention],
    inactive: &[String],
) -> CombinationMatrix {
    let components: BTreeSet<&str> = interventions
        .iter()
        .flat_map(|i| i.components.iter().map(String::as_str))
        .filter(|c| !inactive.iter().any(|x| x == c))
        .collect();
    let columns: Vec<Column> = components
        .into_iter()
        .map(|c| Column::Component(c.to_string()))
        .collect();
    let entries = DMatrix::from_fn(interventions.len(), columns.len(), |i, j| match &columns[j] {
        Column::Component(c) => interventions[i].contains(c) as i32,
        _ => unreachable!(),
    });
    CombinationMatrix {
        rows: interventions.to_vec(),
        columns,
        entries,
    }
}

/// Append interaction columns; each is the elementwise product of its parent columns.
pub fn add_interaction_columns(
    base: &CombinationMatrix,
    interactions: &[(String, String)],
) -> Result<CombinationMatrix> {
    let mut out = base.clone();
    for (a, b) in interactions {
        let ia = base
            .component_index(a)
            .ok_or_else(|| Error::UnknownComponent(a.clone()))?;
        let ib = base
            .component_index(b)
            .ok_or_else(|| Error::UnknownComponent(b.clone()))?;
        if a == b {
            return Err(Error::InvalidLabel {
                label: interaction_name(a, b),
                reason: "interaction of a component with itself",
            });
        }
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let column = Column::Interaction(a.clone(), b.clone());
        if out.columns.contains(&column) {
            return Err(Error::DuplicateInteraction(column.name()));
        }
        let values: Vec<i32> = (0..out.rows.len())
            .map(|i| base.entries[(i, ia)] * base.entries[(i, ib)])
            .collect();
        let n_cols = out.columns.len();
        out.entries = out.entries.insert_column(n_cols, 0);
        for (i, v) in values.into_iter().enumerate() {
            out.entries[(i, n_cols)] = v;
        }
        out.columns.push(column);
    }
    Ok(out)
}

impl CombinationMatrix {
    /// Standard NMA parameterization: one indicator column per intervention, omitting one
    /// reference per subnetwork.
    pub fn nma(interventions: &[Intervention], references: &[usize]) -> CombinationMatrix {
        let kept: Vec<usize> = (0..interventions.len())
            .filter(|i| !references.contains(i))
            .collect();
        let columns = kept
            .iter()
            .map(|&i| Column::Intervention(interventions[i].label.clone()))
            .collect();
        let entries = DMatrix::from_fn(interventions.len(), kept.len(), |i, j| (kept[j] == i) as i32);
        CombinationMatrix {
            rows: interventions.to_vec(),
            columns,
            entries,
        }
    }

    pub fn rows(&self) -> &[Intervention] {
        &self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn entries(&self) -> &DMatrix<i32> {
        &self.entries
    }

    pub fn n_components(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, Column::Component(_)))
            .count()
    }

    pub fn n_interactions(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, Column::Interaction(..)))
            .count()
    }

    pub fn interactions(&self) -> Vec<(String, String)> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                Column::Interaction(a, b) => Some((a.clone(), b.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| matches!(c, Column::Component(x) if x == name))
    }

    pub fn is_zero_column(&self, j: usize) -> bool {
        self.entries.column(j).iter().all(|&v| v == 0)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.entries.map(|v| v as f64)
    }
}

/// Design matrices of a network under one combination matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// m x n comparison-incidence matrix.
    pub incidence: DMatrix<i32>,
    /// m x (n - 1) contrasts against the reference.
    pub nma: DMatrix<i32>,
    /// m x (c + l) design `B * C_int`.
    pub cnma: DMatrix<i32>,
    /// Numerical rank of `cnma`.
    pub rank: usize,
}

impl DesignMatrices {
    pub fn new(net: &Network, combination: &CombinationMatrix, reference: usize) -> Self {
        let incidence = net.incidence_matrix();
        let nma = incidence.clone().remove_column(reference);
        let cnma = &incidence * combination.entries();
        let rank = numerical_rank(&cnma.map(|v| v as f64));
        Self {
            incidence,
            nma,
            cnma,
            rank,
        }
    }
}

/// Which model the degrees of freedom are counted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfModel {
    /// Standard NMA on a connected network: `n_a - k - (n - 1)`.
    Nma,
    /// (C)NMA with a design of the given rank: `n_a - k - r`.
    Cnma { rank: usize },
    /// Separate NMAs per subnetwork: `n_a - k - (n - n_c)`.
    SeparateNmas,
}

pub fn degrees_of_freedom(net: &Network, model: DfModel) -> Result<usize> {
    let base = net.arm_count() as i64 - net.n_studies() as i64;
    let params = match model {
        DfModel::Nma => net.n_interventions() as i64 - 1,
        DfModel::Cnma { rank } => rank as i64,
        DfModel::SeparateNmas => net.n_interventions() as i64 - net.n_subnetworks() as i64,
    };
    let df = base - params;
    if df < 0 {
        Err(Error::NegativeDf(df))
    } else {
        Ok(df as usize)
    }
}
