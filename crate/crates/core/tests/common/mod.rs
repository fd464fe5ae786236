//! Test oracles: random networks, exact integer rank, a rank-factorization pseudoinverse and
//! a brute-force enumeration of disconnected networks. None of these share code with the
//! library's solvers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use cnma_core::network::{ContrastRecord, Network};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const COMPONENTS: [&str; 4] = ["A", "B", "C", "D"];
pub const PLACEBO: &str = "P";

/// Random connected two-arm network: `n` interventions (placebo plus distinct component
/// combinations), a random spanning tree, then `extra` additional comparisons.
pub fn random_network(seed: u64, n: usize, extra: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<String> = (1u32..16)
        .map(|mask| {
            COMPONENTS
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, c)| *c)
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect();
    pool.shuffle(&mut rng);
    let mut labels = vec![PLACEBO.to_string()];
    labels.extend(pool.into_iter().take(n - 1));
    labels.shuffle(&mut rng);

    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let mut v = rng.random_range(0..n - 1);
        if v >= u {
            v += 1;
        }
        edges.push((u, v));
    }
    edges.shuffle(&mut rng);
    let records: Vec<ContrastRecord> = edges
        .iter()
        .enumerate()
        .map(|(i, &(u, v))| ContrastRecord {
            study_id: format!("s{i:03}"),
            treat1: labels[u].clone(),
            treat2: labels[v].clone(),
            effect: rng.random_range(-1.5..1.5),
            se: rng.random_range(0.1..0.6),
        })
        .collect();
    Network::from_records(&records, '+').expect("generated network is valid")
}

/// Exact rank of an integer matrix by integer row elimination with gcd reduction.
pub fn integer_rank(a: &DMatrix<i32>) -> usize {
    fn gcd(a: i128, b: i128) -> i128 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }
    let mut m: Vec<Vec<i128>> = (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] as i128).collect())
        .collect();
    let (rows, cols) = (a.nrows(), a.ncols());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..rows {
            let (top, here) = (m[rank][col], m[r][col]);
            if here == 0 {
                continue;
            }
            let mut g = 0;
            for c in 0..cols {
                m[r][c] = m[r][c] * top - m[rank][c] * here;
                g = gcd(g, m[r][c]);
            }
            if g > 1 {
                m[r].iter_mut().for_each(|v| *v /= g);
            }
        }
        rank += 1;
    }
    rank
}

/// Indices of a maximal set of linearly independent columns (greedy, exact).
pub fn independent_columns(x: &DMatrix<i32>) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let mut cols = keep.clone();
        cols.push(j);
        let sub = x.select_columns(&cols);
        if integer_rank(&sub) == cols.len() {
            keep.push(j);
        }
    }
    keep
}

/// Weighted least squares through a rank factorization `X = F G` (F full column rank, G full
/// row rank): `(X'WX)^+ = G^+ (F'WF)^{-1} (G')^+`, `G^+ = G'(GG')^{-1}`. Returns `(beta, fitted)`.
pub fn oracle_wls(x: &DMatrix<i32>, d: &DVector<f64>, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let cols = independent_columns(x);
    let xf = x.map(|v| v as f64);
    let f = xf.select_columns(&cols);
    let ftf = f.transpose() * &f;
    let g = ftf.clone().lu().solve(&(f.transpose() * &xf)).expect("F has full column rank");
    let wm = DMatrix::from_diagonal(w);
    let core = (f.transpose() * &wm * &f).try_inverse().expect("F'WF invertible");
    let ggt_inv = (&g * g.transpose()).try_inverse().expect("G has full row rank");
    let g_pinv = g.transpose() * &ggt_inv;
    let gram_pinv = &g_pinv * core * g_pinv.transpose();
    let beta = gram_pinv * xf.transpose() * &wm * d;
    let fitted = &xf * &beta;
    (beta, fitted)
}

pub fn max_rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

/// One valid split found by brute force.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteSplit {
    pub removed_studies: BTreeSet<String>,
    pub k: usize,
    pub m: usize,
    pub n_c: usize,
}

fn components_of(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([s]);
        label[s] = next;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if label[u] == usize::MAX {
                    label[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    label
}

/// Every main set containing the reference and all interventions compared only with it,
/// excluding the full set, kept when the crossing comparisons are non-empty, each
/// intervention keeps a comparison and the main set is connected on its own. Keyed by the
/// removed-study set.
pub fn brute_force_splits(net: &Network, reference: usize) -> BTreeMap<BTreeSet<String>, BruteSplit> {
    let n = net.n_interventions();
    let edges: Vec<(usize, usize, String)> = net
        .comparisons()
        .iter()
        .map(|c| (c.treat1, c.treat2, c.study_id.clone()))
        .collect();
    let mut neighbours = vec![BTreeSet::new(); n];
    for (a, b, _) in &edges {
        neighbours[*a].insert(*b);
        neighbours[*b].insert(*a);
    }
    let forced: Vec<usize> = (0..n)
        .filter(|&v| v == reference || neighbours[v] == BTreeSet::from([reference]))
        .collect();
    let mut out = BTreeMap::new();
    for mask in 0u32..(1 << n) {
        let inside = |v: usize| mask >> v & 1 == 1;
        if mask == (1 << n) - 1 || !forced.iter().all(|&v| inside(v)) {
            continue;
        }
        let kept: Vec<&(usize, usize, String)> =
            edges.iter().filter(|(a, b, _)| inside(*a) == inside(*b)).collect();
        if kept.len() == edges.len() {
            continue;
        }
        if (0..n).any(|v| !kept.iter().any(|(a, b, _)| *a == v || *b == v)) {
            continue;
        }
        let pairs: Vec<(usize, usize)> = kept.iter().map(|(a, b, _)| (*a, *b)).collect();
        let comp = components_of(n, &pairs);
        if (0..n).any(|v| inside(v) && comp[v] != comp[reference]) {
            continue;
        }
        let removed: BTreeSet<String> = edges
            .iter()
            .filter(|(a, b, _)| inside(*a) != inside(*b))
            .map(|(_, _, s)| s.clone())
            .collect();
        let studies: BTreeSet<&String> = kept.iter().map(|(_, _, s)| s).collect();
        let n_c = comp.iter().collect::<BTreeSet<_>>().len();
        out.entry(removed.clone()).or_insert(BruteSplit {
            removed_studies: removed,
            k: studies.len(),
            m: kept.len(),
            n_c,
        });
    }
    out
}
