//! Weighted least squares estimation of NMA and CNMA models, heterogeneity and Q tests.
//!
//! All models are fitted through one path: a combination matrix `C` maps interventions to
//! parameters, the design is `X = B C`, and the coefficients are the minimum-norm solution of
//! the weighted normal equations. The standard NMA is the special case where `C` has one
//! indicator column per non-reference intervention.
//!
//! Q statistics always use common-effect weights `1 / se^2`. Estimates, covariances and
//! intervals use random-effects weights `1 / (se^2 + tau^2)` with `tau^2` from the
//! method-of-moments estimator of the same model.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use libm::{log, sqrt};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, TruncatedSvd};
use crate::network::{
    add_interaction_columns, build_combination_matrix, degrees_of_freedom, CombinationMatrix,
    DfModel, Network,
};
use crate::stats::{chi_square_sf, normal_quantile};

/// Relative squared distance from the design row space below which a contrast is estimable.
const ESTIMABILITY_TOL: f64 = 1e-8;

/// Log odds ratio and its standard error from two binomial arms.
///
/// When any arm has zero events or only events, 0.5 is added to all four cells.
pub fn pairwise_from_binary(e1: u64, n1: u64, e2: u64, n2: u64) -> Result<(f64, f64)> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidCounts("arm size must be at least 1"));
    }
    if e1 > n1 || e2 > n2 {
        return Err(Error::InvalidCounts("events exceed arm size"));
    }
    let (mut a, mut b) = (e1 as f64, (n1 - e1) as f64);
    let (mut c, mut d) = (e2 as f64, (n2 - e2) as f64);
    if e1 == 0 || e2 == 0 || e1 == n1 || e2 == n2 {
        a += 0.5;
        b += 0.5;
        c += 0.5;
        d += 0.5;
    }
    let lor = log(a * d) - log(c * b);
    let se = sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
    Ok((lor, se))
}

/// Wald interval `estimate +/- z * se`.
pub fn confidence_interval(estimate: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if !(se > 0.0) || !se.is_finite() || !estimate.is_finite() {
        return Err(Error::NonFinite("interval needs finite estimate and positive se"));
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    Ok((estimate - z * se, estimate + z * se))
}

/// Format a p-value the way reports print it.
pub fn format_p(p: Option<f64>) -> String {
    match p {
        None => "n/a".to_string(),
        Some(p) if p < 1e-4 => "< 0.0001".to_string(),
        Some(p) => format!("{p:.4}"),
    }
}

/// Result of a weighted least squares solve.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    /// `(X^T W X)^+`
    pub coef_cov: DMatrix<f64>,
    /// `X (X^T W X)^+ X^T`
    pub fitted_cov: DMatrix<f64>,
    pub q: f64,
    pub rank: usize,
    pub weights: DVector<f64>,
    svd: TruncatedSvd,
}

impl WlsFit {
    /// Squared relative distance of `c` from the design row space.
    pub fn row_space_residual(&self, c: &DVector<f64>) -> f64 {
        self.svd.row_space_residual(c)
    }
}

fn check_inputs(x: &DMatrix<f64>, d: &DVector<f64>, se: &DVector<f64>, tau2: f64) -> Result<()> {
    if x.nrows() != d.len() || d.len() != se.len() {
        return Err(Error::Dimension("design rows, effects and standard errors must agree"));
    }
    if x.iter().any(|v| !v.is_finite()) || d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design or effects"));
    }
    if se.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::NonFinite("standard errors must be positive and finite"));
    }
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(Error::NonFinite("tau2 must be finite and non-negative"));
    }
    Ok(())
}

/// Weighted least squares with weights `1 / (se^2 + tau2)`.
pub fn fit_wls(x: &DMatrix<f64>, d: &DVector<f64>, se: &DVector<f64>, tau2: f64) -> Result<WlsFit> {
    check_inputs(x, d, se, tau2)?;
    let rank = numerical_rank(x);
    fit_wls_with_rank(x, d, se, tau2, rank)
}

fn fit_wls_with_rank(
    x: &DMatrix<f64>,
    d: &DVector<f64>,
    se: &DVector<f64>,
    tau2: f64,
    rank: usize,
) -> Result<WlsFit> {
    let weights = se.map(|s| 1.0 / (s * s + tau2));
    let sqrt_w = weights.map(sqrt);
    let mut a = x.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= sqrt_w[i];
    }
    let svd = TruncatedSvd::new(&a, rank);
    let beta = svd.solve(&d.component_mul(&sqrt_w));
    let fitted = x * &beta;
    let coef_cov = svd.gram_pinv();
    let fitted_cov = x * &coef_cov * x.transpose();
    let resid = d - &fitted;
    let q = resid.component_mul(&resid).dot(&weights);
    if !q.is_finite() || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("weighted least squares produced non-finite values"));
    }
    Ok(WlsFit {
        beta,
        fitted,
        coef_cov,
        fitted_cov,
        q,
        rank,
        weights,
        svd,
    })
}

/// Moment estimator of the between-study variance:
/// `max(0, (Q - df) / (tr W - tr((X^T W X)^+ X^T W^2 X)))` at common-effect weights.
pub fn estimate_tau2(x: &DMatrix<f64>, d: &DVector<f64>, se: &DVector<f64>) -> Result<f64> {
    let fe = fit_wls(x, d, se, 0.0)?;
    Ok(tau2_from_common_effect(x, &fe))
}

fn tau2_from_common_effect(x: &DMatrix<f64>, fe: &WlsFit) -> f64 {
    let df = x.nrows() as i64 - fe.rank as i64;
    if df <= 0 {
        return 0.0;
    }
    let trace_w: f64 = fe.weights.iter().sum();
    let mut trace_p = 0.0;
    for (j, row) in x.row_iter().enumerate() {
        let h = (row * &fe.coef_cov).dot(&row);
        trace_p += fe.weights[j] * fe.weights[j] * h;
    }
    let denom = trace_w - trace_p;
    if !(denom > 0.0) {
        return 0.0;
    }
    ((fe.q - df as f64) / denom).max(0.0)
}

/// Q statistic with its degrees of freedom and upper-tail p-value (absent when df = 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QTest {
    #[serde(rename = "Q")]
    pub q: f64,
    pub df: usize,
    pub p: Option<f64>,
}

impl QTest {
    pub fn new(q: f64, df: usize) -> Self {
        let p = (df > 0).then(|| chi_square_sf(q, df as f64));
        Self { q, df, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nma,
    Cnma,
}

/// An estimated relative effect with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

impl Estimate {
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        confidence_interval(self.estimate, self.se, level)
    }
}

/// One fitted (C)NMA model.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub combination: CombinationMatrix,
    /// `B C`, m x p.
    pub design: DMatrix<f64>,
    pub beta: DVector<f64>,
    /// Intervention effects `C beta`.
    pub theta: DVector<f64>,
    /// Fitted relative effects of the comparisons.
    pub delta: DVector<f64>,
    pub cov_delta: DMatrix<f64>,
    pub heterogeneity: QTest,
    pub tau2: f64,
    pub rank: usize,
    pub weights_fe: DVector<f64>,
    effects: DVector<f64>,
    ses: DVector<f64>,
    random: WlsFit,
}

impl ModelFit {
    pub fn q(&self) -> f64 {
        self.heterogeneity.q
    }

    pub fn df(&self) -> usize {
        self.heterogeneity.df
    }

    pub fn columns(&self) -> Vec<String> {
        self.combination.column_names()
    }

    pub fn interactions(&self) -> Vec<(String, String)> {
        self.combination.interactions()
    }

    /// Effect of intervention `i` relative to `j`, or `None` when the contrast is not in the
    /// row space of the design.
    pub fn relative_effect(&self, i: usize, j: usize) -> Option<Estimate> {
        let c = self.combination.entries();
        let contrast =
            DVector::from_iterator(c.ncols(), (0..c.ncols()).map(|k| (c[(i, k)] - c[(j, k)]) as f64));
        if self.random.row_space_residual(&contrast) > ESTIMABILITY_TOL {
            return None;
        }
        let estimate = self.theta[i] - self.theta[j];
        let var = (&self.random.coef_cov * &contrast).dot(&contrast).max(0.0);
        Some(Estimate {
            estimate,
            se: sqrt(var),
        })
    }

    /// Serializable summary with effects of every intervention against `reference`.
    pub fn report(&self, net: &Network, reference: usize, level: f64) -> Result<FitReport> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidLevel(level));
        }
        let effects = (0..net.n_interventions())
            .filter(|&i| i != reference)
            .map(|i| {
                let est = self.relative_effect(i, reference);
                let (low, high) = match est {
                    Some(e) if e.se > 0.0 => {
                        let (l, h) = e.interval(level)?;
                        (Some(l), Some(h))
                    }
                    Some(e) => (Some(e.estimate), Some(e.estimate)),
                    None => (None, None),
                };
                Ok(EffectReport {
                    treat1: net.label(i).to_string(),
                    treat2: net.label(reference).to_string(),
                    estimate: est.map(|e| e.estimate),
                    se: est.map(|e| e.se),
                    low,
                    high,
                    estimable: est.is_some(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FitReport {
            kind: self.kind,
            columns: self.columns(),
            beta: self.beta.iter().copied().collect(),
            interventions: net.interventions().iter().map(|i| i.label().to_string()).collect(),
            theta: self.theta.iter().copied().collect(),
            q: self.heterogeneity.q,
            df: self.heterogeneity.df,
            p: self.heterogeneity.p,
            tau2: self.tau2,
            rank: self.rank,
            effects,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectReport {
    pub treat1: String,
    pub treat2: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub estimable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub kind: ModelKind,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub interventions: Vec<String>,
    pub theta: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: f64,
    pub df: usize,
    pub p: Option<f64>,
    pub tau2: f64,
    pub rank: usize,
    pub effects: Vec<EffectReport>,
}

/// Fit the model defined by `combination` on `net`: common-effect stage for Q and tau^2,
/// random-effects stage for estimates.
pub fn fit_model(net: &Network, combination: &CombinationMatrix, kind: ModelKind) -> Result<ModelFit> {
    if combination.rows().len() != net.n_interventions() {
        return Err(Error::Dimension("combination matrix rows must match interventions"));
    }
    let design_int = net.incidence_matrix() * combination.entries();
    let design = design_int.map(|v| v as f64);
    let d = net.effects();
    let se = net.standard_errors();
    check_inputs(&design, &d, &se, 0.0)?;
    let rank = numerical_rank(&design);
    let df = degrees_of_freedom(net, DfModel::Cnma { rank })?;
    let fe = fit_wls_with_rank(&design, &d, &se, 0.0, rank)?;
    let tau2 = tau2_from_common_effect(&design, &fe);
    let random = if tau2 > 0.0 {
        fit_wls_with_rank(&design, &d, &se, tau2, rank)?
    } else {
        fe.clone()
    };
    let theta = combination.to_f64() * &random.beta;
    Ok(ModelFit {
        kind,
        combination: combination.clone(),
        beta: random.beta.clone(),
        theta,
        delta: random.fitted.clone(),
        cov_delta: random.fitted_cov.clone(),
        heterogeneity: QTest::new(fe.q, df),
        tau2,
        rank,
        weights_fe: fe.weights,
        design,
        effects: d,
        ses: se,
        random,
    })
}

/// Standard NMA relative to `reference`. Fails on disconnected networks.
pub fn fit_nma(net: &Network, reference: usize) -> Result<ModelFit> {
    if reference >= net.n_interventions() {
        return Err(Error::Dimension("reference index out of range"));
    }
    let n_c = net.n_subnetworks();
    if n_c > 1 {
        return Err(Error::Disconnected(n_c));
    }
    let combination = CombinationMatrix::nma(net.interventions(), &[reference]);
    fit_model(net, &combination, ModelKind::Nma)
}

/// One NMA within a subnetwork.
#[derive(Debug, Clone)]
pub struct SubnetworkFit {
    pub members: Vec<String>,
    pub reference: String,
    pub network: Network,
    pub fit: ModelFit,
}

/// Separate NMAs for every subnetwork; Q and df are sums over the parts.
#[derive(Debug, Clone)]
pub struct SeparateNmaFit {
    pub parts: Vec<SubnetworkFit>,
    pub heterogeneity: QTest,
}

/// Fit one NMA per connected component. The subnetwork holding `reference` uses it; the
/// others use their first intervention in label order.
pub fn fit_separate_nmas(net: &Network, reference: usize) -> Result<SeparateNmaFit> {
    let mut parts = Vec::new();
    let mut q = 0.0;
    for members in net.connectivity(Some(reference)) {
        let sub = net.subnetwork(&members);
        let local_ref = members.iter().position(|&m| m == reference).unwrap_or(0);
        let fit = fit_nma(&sub, local_ref)?;
        q += fit.q();
        parts.push(SubnetworkFit {
            members: members.iter().map(|&m| net.label(m).to_string()).collect(),
            reference: sub.label(local_ref).to_string(),
            network: sub,
            fit,
        });
    }
    let df = degrees_of_freedom(net, DfModel::SeparateNmas)?;
    Ok(SeparateNmaFit {
        parts,
        heterogeneity: QTest::new(q, df),
    })
}

/// Additive CNMA (no interactions) or interaction CNMA. Components listed in `inactive`
/// (e.g. placebo) get no column.
pub fn fit_cnma(
    net: &Network,
    inactive: &[String],
    interactions: &[(String, String)],
) -> Result<ModelFit> {
    let base = build_combination_matrix(net.interventions(), inactive);
    let combination = add_interaction_columns(&base, interactions)?;
    for (j, col) in combination.columns().iter().enumerate().skip(base.columns().len()) {
        if combination.is_zero_column(j) {
            return Err(Error::ZeroInteraction(col.name()));
        }
    }
    fit_model(net, &combination, ModelKind::Cnma)
}

/// Heterogeneity test of a fitted model.
pub fn cochran_q(fit: &ModelFit) -> QTest {
    fit.heterogeneity
}

/// Q difference test without the nesting check, used when stepping between interaction sets
/// of consecutive sizes that need not contain each other. A negative difference is reported
/// as zero.
pub fn q_difference(sparse: &ModelFit, rich: &ModelFit) -> Option<QTest> {
    let df_diff = sparse.df() as i64 - rich.df() as i64;
    (df_diff > 0).then(|| QTest::new((sparse.q() - rich.q()).max(0.0), df_diff as usize))
}

/// Chi-square test of the Q difference between a sparse model and a richer model that
/// contains it.
pub fn q_difference_test(sparse: &ModelFit, rich: &ModelFit) -> Result<QTest> {
    if sparse.effects != rich.effects || sparse.ses != rich.ses {
        return Err(Error::NotNested("models were fitted to different data"));
    }
    let (m, p_rich) = rich.design.shape();
    let mut joint = DMatrix::zeros(m, p_rich + sparse.design.ncols());
    joint.columns_mut(0, p_rich).copy_from(&rich.design);
    joint
        .columns_mut(p_rich, sparse.design.ncols())
        .copy_from(&sparse.design);
    if numerical_rank(&joint) != rich.rank {
        return Err(Error::NotNested("sparse design is not in the column space of the rich design"));
    }
    let df_diff = sparse.df() as i64 - rich.df() as i64;
    if df_diff <= 0 {
        return Err(Error::NoDfToTest(df_diff));
    }
    let mut q = sparse.q() - rich.q();
    if q < 0.0 {
        if q < -1e-9 * sparse.q().max(1.0) {
            return Err(Error::Numerical("rich model has larger Q than nested sparse model"));
        }
        q = 0.0;
    }
    Ok(QTest::new(q, df_diff as usize))
}
