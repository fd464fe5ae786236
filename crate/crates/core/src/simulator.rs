//! Simulation study kernels: the eight-intervention two-arm network, binary data generation
//! under additive or interacting true effects, per-run model fitting, and aggregation of
//! selection frequencies, mean squared errors and coverage.
//!
//! Runs are independent. Run `r` of a scenario draws from a ChaCha8 stream selected by `r`
//! under a key derived from the master seed, scenario and tau^2, so results do not depend on
//! execution order. Connected and disconnected modes of the same scenario see the same
//! generated data.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use libm::{exp, log, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::disconnector::{apply_disconnect, enumerate_disconnected, sample_disconnected};
use crate::error::{Error, Result};
use crate::estimator::{fit_cnma, fit_nma, pairwise_from_binary, q_difference_test, ModelFit};
use crate::network::{ContrastRecord, Network};
use crate::selector::{forward_select, SelectionOptions, AIC_THRESHOLD};
use crate::stats::normal_quantile;

pub const PLACEBO: &str = "P";

/// Active interventions in reporting order.
pub const ACTIVE: [&str; 7] = ["A", "B", "C", "D", "A+B", "A+C", "C+D"];

/// Selection outcomes that appear as columns of the summary tables.
pub const TABLE_MODELS: [&str; 7] = [
    "additive",
    "A*B",
    "A*C",
    "C*D",
    "A*B+C*D",
    "A*B+A*C",
    "A*C+C*D",
];

/// Two-arm studies of the simulated network as (treatment, baseline arm). Every pair of the
/// eight interventions is compared except A-B, A-(A+B), A-(C+D) and B-(A+C); A, B, A+B and A+C
/// have two placebo-controlled studies each. 28 studies in total.
pub const STUDY_LAYOUT: [(&str, &str); 28] = [
    ("A", "P"),
    ("A", "P"),
    ("B", "P"),
    ("B", "P"),
    ("C", "P"),
    ("D", "P"),
    ("A+B", "P"),
    ("A+B", "P"),
    ("A+C", "P"),
    ("A+C", "P"),
    ("C+D", "P"),
    ("C", "A"),
    ("D", "A"),
    ("A+C", "A"),
    ("C", "B"),
    ("D", "B"),
    ("A+B", "B"),
    ("C+D", "B"),
    ("D", "C"),
    ("A+B", "C"),
    ("A+C", "C"),
    ("C+D", "C"),
    ("A+B", "D"),
    ("A+C", "D"),
    ("C+D", "D"),
    ("A+C", "A+B"),
    ("C+D", "A+B"),
    ("C+D", "A+C"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B1,
    B2,
    C1,
    C2,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::A, Scenario::B1, Scenario::B2, Scenario::C1, Scenario::C2];

    /// Interaction ratio of the scenario: none, mild (1.5) or strong (2.0).
    pub fn interaction_ratio(self) -> f64 {
        match self {
            Scenario::A => 1.0,
            Scenario::B1 | Scenario::B2 => 1.5,
            Scenario::C1 | Scenario::C2 => 2.0,
        }
    }

    /// The combination carrying the interaction, if any.
    pub fn interacting_combination(self) -> Option<&'static str> {
        match self {
            Scenario::A => None,
            Scenario::B1 | Scenario::C1 => Some("A+B"),
            Scenario::B2 | Scenario::C2 => Some("C+D"),
        }
    }

    /// The interaction model that matches the truth.
    pub fn correct_model(self) -> &'static str {
        match self {
            Scenario::A => "additive",
            Scenario::B1 | Scenario::C1 => "A*B",
            Scenario::B2 | Scenario::C2 => "C*D",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B1 => "B1",
            Scenario::B2 => "B2",
            Scenario::C1 => "C1",
            Scenario::C2 => "C2",
        }
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl core::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Connected,
    Disconnected,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Connected => "connected",
            Mode::Disconnected => "disconnected",
        }
    }
}

impl core::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "connected" => Ok(Mode::Connected),
            "disconnected" => Ok(Mode::Disconnected),
            _ => Err(Error::InvalidConfig(format!("unknown mode '{s}'"))),
        }
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub tau2: f64,
    pub mode: Mode,
    pub runs: usize,
    pub seed: u64,
    /// Odds ratios of A, B, C, D against placebo.
    pub odds_ratios: [f64; 4],
    /// Overrides the scenario's interaction ratio when set.
    pub interaction_ratio: Option<f64>,
    pub baseline_p: f64,
    /// Inclusive range of the per-arm sample size.
    pub arm_size: (u64, u64),
    pub threshold: f64,
    pub level: f64,
    /// Whether placebo has no component column (otherwise it is a component of its own).
    pub placebo_inactive: bool,
    /// Studies as (treatment arm, baseline arm); defaults to `STUDY_LAYOUT`.
    pub layout: Vec<(String, String)>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, tau2: f64, mode: Mode, runs: usize, seed: u64) -> Self {
        Self {
            scenario,
            tau2,
            mode,
            runs,
            seed,
            odds_ratios: [1.40, 1.20, 2.30, 1.50],
            interaction_ratio: None,
            baseline_p: 0.1,
            arm_size: (50, 200),
            threshold: AIC_THRESHOLD,
            level: 0.95,
            placebo_inactive: true,
            layout: default_layout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.tau2.is_finite() && self.tau2 >= 0.0) {
            return bad("tau2 must be finite and non-negative");
        }
        if !(self.baseline_p > 0.0 && self.baseline_p < 1.0) {
            return bad("baseline probability must lie in (0, 1)");
        }
        if self.arm_size.0 == 0 || self.arm_size.0 > self.arm_size.1 {
            return bad("arm size range must satisfy 1 <= low <= high");
        }
        if self.odds_ratios.iter().any(|&o| !(o.is_finite() && o > 0.0)) {
            return bad("odds ratios must be positive");
        }
        if let Some(ir) = self.interaction_ratio {
            if !(ir.is_finite() && ir > 0.0) {
                return bad("interaction ratio must be positive");
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("confidence level must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("selection threshold must lie in [0, 1]");
        }
        if self.layout.is_empty() {
            return bad("layout has no studies");
        }
        for (t1, t2) in &self.layout {
            for t in [t1, t2] {
                if t != PLACEBO && !ACTIVE.contains(&t.as_str()) {
                    return Err(Error::InvalidConfig(format!("unknown layout intervention '{t}'")));
                }
            }
            if t1 == t2 {
                return bad("layout study compares an intervention with itself");
            }
        }
        Ok(())
    }

    pub fn interaction_ratio(&self) -> f64 {
        self.interaction_ratio
            .unwrap_or_else(|| self.scenario.interaction_ratio())
    }

    /// Key of the random stream family; independent of mode so both modes share data.
    pub fn stream_key(&self) -> u64 {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ self.scenario.code());
        splitmix64(h ^ self.tau2.to_bits())
    }

    /// Generator of run `run`.
    pub fn run_rng(&self, run: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.stream_key());
        rng.set_stream(run as u64);
        rng
    }
}

pub fn default_layout() -> Vec<(String, String)> {
    STUDY_LAYOUT
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// True log odds ratios of the seven active interventions against placebo, in `ACTIVE` order.
pub fn true_effects(config: &ScenarioConfig) -> [f64; 7] {
    let [a, b, c, d] = config.odds_ratios.map(log);
    let lambda = log(config.interaction_ratio());
    let target = config.scenario.interacting_combination();
    let extra = |label: &str| if Some(label) == target { lambda } else { 0.0 };
    [a, b, c, d, a + b + extra("A+B"), a + c + extra("A+C"), c + d + extra("C+D")]
}

fn effect_of(label: &str, truth: &[f64; 7]) -> f64 {
    if label == PLACEBO {
        return 0.0;
    }
    ACTIVE
        .iter()
        .position(|&a| a == label)
        .map(|i| truth[i])
        .expect("layout uses known labels")
}

/// Event probability of an arm with log odds ratio `d` against a baseline with probability
/// `baseline_p`.
pub fn arm_probability(d: f64, baseline_p: f64) -> f64 {
    let e = exp(d);
    baseline_p * e / (1.0 - baseline_p * (1.0 - e))
}

/// Arm-level data of one simulated study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyArms {
    pub study_id: String,
    pub treat1: String,
    pub treat2: String,
    pub events1: u64,
    pub events2: u64,
    pub n: u64,
    pub p1: f64,
    pub p2: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub network: Network,
    pub arms: Vec<StudyArms>,
}

/// Generate one network of two-arm studies following the configured layout.
///
/// For each study a study-specific log odds ratio is drawn from `N(true difference, tau2)`;
/// the baseline arm uses its true effect against placebo and the other arm adds the drawn
/// log odds ratio.
pub fn generate_network<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<GeneratedNetwork> {
    config.validate()?;
    let truth = true_effects(config);
    let noise = Normal::new(0.0, sqrt(config.tau2))
        .map_err(|_| Error::InvalidConfig("tau2".to_string()))?;
    let mut arms = Vec::with_capacity(config.layout.len());
    let mut records = Vec::with_capacity(config.layout.len());
    for (i, (t1, t2)) in config.layout.iter().enumerate() {
        let (t1, t2) = (t1.as_str(), t2.as_str());
        let base = effect_of(t2, &truth);
        let mean = effect_of(t1, &truth) - base;
        let drawn = if config.tau2 > 0.0 { mean + noise.sample(rng) } else { mean };
        let n = rng.random_range(config.arm_size.0..=config.arm_size.1);
        let p1 = arm_probability(base + drawn, config.baseline_p);
        let p2 = arm_probability(base, config.baseline_p);
        let e1 = draw_binomial(n, p1, rng)?;
        let e2 = draw_binomial(n, p2, rng)?;
        let (effect, se) = pairwise_from_binary(e1, n, e2, n)?;
        let study_id = format!("s{:02}", i + 1);
        records.push(ContrastRecord {
            study_id: study_id.clone(),
            treat1: t1.to_string(),
            treat2: t2.to_string(),
            effect,
            se,
        });
        arms.push(StudyArms {
            study_id,
            treat1: t1.to_string(),
            treat2: t2.to_string(),
            events1: e1,
            events2: e2,
            n,
            p1,
            p2,
        });
    }
    Ok(GeneratedNetwork {
        network: Network::from_records(&records, '+')?,
        arms,
    })
}

fn draw_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numerical("arm probability outside (0, 1)"));
    }
    let dist = Binomial::new(n, p).map_err(|_| Error::Numerical("binomial parameters"))?;
    Ok(dist.sample(rng))
}

/// Estimate and confidence limits of one effect against placebo; `None` when inestimable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectInterval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

pub type EffectSet = [Option<EffectInterval>; 7];

/// Everything recorded from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub selected: String,
    /// Whether the additive-vs-NMA Q difference is significant at 5% (connected mode only).
    pub q_diff_significant: Option<bool>,
    /// (model name, effects) for `nma` (connected only), `additive` and `selected`.
    pub estimates: Vec<(&'static str, EffectSet)>,
    /// Design id drawn in disconnected mode.
    pub design: Option<usize>,
}

fn effects_against_placebo(fit: &ModelFit, net: &Network, level: f64) -> Result<EffectSet> {
    let p = net.require_index(PLACEBO)?;
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let mut out = [None; 7];
    for (slot, label) in out.iter_mut().zip(ACTIVE) {
        let i = net.require_index(label)?;
        *slot = fit.relative_effect(i, p).map(|e| EffectInterval {
            estimate: e.estimate,
            low: e.estimate - z * e.se,
            high: e.estimate + z * e.se,
        });
    }
    Ok(out)
}

/// Run replication `run` of a scenario.
pub fn run_replication(config: &ScenarioConfig, run: usize) -> Result<RunOutcome> {
    let mut rng = config.run_rng(run);
    let generated = generate_network(config, &mut rng)?;
    let inactive: Vec<String> = if config.placebo_inactive {
        alloc::vec![PLACEBO.to_string()]
    } else {
        Vec::new()
    };
    let options = SelectionOptions {
        threshold: config.threshold,
        ..SelectionOptions::with_inactive(&inactive)
    };
    let net = generated.network;
    let reference = net.require_index(PLACEBO)?;
    match config.mode {
        Mode::Connected => {
            let nma = fit_nma(&net, reference)?;
            let additive = fit_cnma(&net, &inactive, &[])?;
            let diff = q_difference_test(&additive, &nma)?;
            let trace = forward_select(&net, &options)?;
            Ok(RunOutcome {
                run,
                selected: trace.model_label(),
                q_diff_significant: Some(matches!(diff.p, Some(p) if p < 0.05)),
                estimates: alloc::vec![
                    ("nma", effects_against_placebo(&nma, &net, config.level)?),
                    ("additive", effects_against_placebo(&additive, &net, config.level)?),
                    ("selected", effects_against_placebo(&trace.final_model, &net, config.level)?),
                ],
                design: None,
            })
        }
        Mode::Disconnected => {
            let designs = enumerate_disconnected(&net, reference, false)?;
            let design = sample_disconnected(&designs, &mut rng)?;
            let dnet = apply_disconnect(&net, design)?;
            let additive = fit_cnma(&dnet, &inactive, &[])?;
            let trace = forward_select(&dnet, &options)?;
            Ok(RunOutcome {
                run,
                selected: trace.model_label(),
                q_diff_significant: None,
                estimates: alloc::vec![
                    ("additive", effects_against_placebo(&additive, &dnet, config.level)?),
                    ("selected", effects_against_placebo(&trace.final_model, &dnet, config.level)?),
                ],
                design: Some(design.id),
            })
        }
    }
}

/// Average over runs of the per-run mean squared error across the estimable effects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseSummary {
    pub average: f64,
    pub by_comparison: Vec<Option<f64>>,
    /// Number of (run, effect) pairs that were inestimable and left out.
    pub inestimable: usize,
}

pub fn mse_summary(estimates: &[[Option<f64>; 7]], truth: &[f64; 7]) -> MseSummary {
    let mut total = 0.0;
    let mut runs = 0usize;
    let mut sums = [0.0; 7];
    let mut counts = [0usize; 7];
    let mut inestimable = 0;
    for run in estimates {
        let mut run_sum = 0.0;
        let mut run_n = 0usize;
        for (j, est) in run.iter().enumerate() {
            match est {
                Some(e) => {
                    let sq = (e - truth[j]) * (e - truth[j]);
                    run_sum += sq;
                    run_n += 1;
                    sums[j] += sq;
                    counts[j] += 1;
                }
                None => inestimable += 1,
            }
        }
        if run_n > 0 {
            total += run_sum / run_n as f64;
            runs += 1;
        }
    }
    MseSummary {
        average: if runs > 0 { total / runs as f64 } else { f64::NAN },
        by_comparison: sums
            .iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect(),
        inestimable,
    }
}

/// Average over runs of the share of intervals that contain the true effect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub average: f64,
    pub by_comparison: Vec<Option<f64>>,
    pub limits: (f64, f64),
    pub within_limits: bool,
}

pub fn coverage_summary(intervals: &[[Option<(f64, f64)>; 7]], truth: &[f64; 7]) -> CoverageSummary {
    let mut total = 0.0;
    let mut runs = 0usize;
    let mut hits = [0usize; 7];
    let mut counts = [0usize; 7];
    for run in intervals {
        let mut run_hits = 0usize;
        let mut run_n = 0usize;
        for (j, ci) in run.iter().enumerate() {
            if let Some((low, high)) = ci {
                let covered = *low <= truth[j] && truth[j] <= *high;
                run_hits += covered as usize;
                run_n += 1;
                hits[j] += covered as usize;
                counts[j] += 1;
            }
        }
        if run_n > 0 {
            total += run_hits as f64 / run_n as f64;
            runs += 1;
        }
    }
    let average = if runs > 0 { total / runs as f64 } else { f64::NAN };
    let limits = monte_carlo_limits(intervals.len().max(1), 0.95);
    CoverageSummary {
        average,
        by_comparison: hits
            .iter()
            .zip(counts)
            .map(|(&h, c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        limits,
        within_limits: average >= limits.0 && average <= limits.1,
    }
}

/// 95% Monte-Carlo band for an observed coverage of nominal level `nominal` over `runs` runs.
pub fn monte_carlo_limits(runs: usize, nominal: f64) -> (f64, f64) {
    let z = normal_quantile(0.975);
    let half = z * sqrt(nominal * (1.0 - nominal) / runs as f64);
    (nominal - half, nominal + half)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPerformance {
    pub mse: MseSummary,
    pub coverage: CoverageSummary,
}

/// Aggregated results of one scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub scenario: Scenario,
    pub tau2: f64,
    pub mode: Mode,
    pub runs: usize,
    pub seed: u64,
    pub comparisons: Vec<String>,
    pub true_effects: Vec<f64>,
    pub selection_counts: BTreeMap<String, usize>,
    pub n_diff: Option<usize>,
    pub models: BTreeMap<String, ModelPerformance>,
    pub monte_carlo_limits: (f64, f64),
}

impl SimulationSummary {
    pub fn selection_fraction(&self, model: &str) -> f64 {
        *self.selection_counts.get(model).unwrap_or(&0) as f64 / self.runs as f64
    }
}

/// Fold run outcomes (in run order) into a summary.
pub fn summarize(config: &ScenarioConfig, outcomes: &[RunOutcome]) -> SimulationSummary {
    let truth = true_effects(config);
    let mut selection_counts: BTreeMap<String, usize> =
        TABLE_MODELS.iter().map(|m| (m.to_string(), 0)).collect();
    let mut n_diff = None;
    let mut per_model: BTreeMap<&'static str, Vec<EffectSet>> = BTreeMap::new();
    for o in outcomes {
        *selection_counts.entry(o.selected.clone()).or_insert(0) += 1;
        if let Some(sig) = o.q_diff_significant {
            *n_diff.get_or_insert(0usize) += sig as usize;
        }
        for (name, set) in &o.estimates {
            per_model.entry(name).or_default().push(*set);
        }
    }
    let models = per_model
        .into_iter()
        .map(|(name, sets)| {
            let est: Vec<[Option<f64>; 7]> =
                sets.iter().map(|s| s.map(|e| e.map(|e| e.estimate))).collect();
            let ci: Vec<[Option<(f64, f64)>; 7]> =
                sets.iter().map(|s| s.map(|e| e.map(|e| (e.low, e.high)))).collect();
            (
                name.to_string(),
                ModelPerformance {
                    mse: mse_summary(&est, &truth),
                    coverage: coverage_summary(&ci, &truth),
                },
            )
        })
        .collect();
    SimulationSummary {
        scenario: config.scenario,
        tau2: config.tau2,
        mode: config.mode,
        runs: outcomes.len(),
        seed: config.seed,
        comparisons: ACTIVE.iter().map(|a| format!("{a}:{PLACEBO}")).collect(),
        true_effects: truth.to_vec(),
        selection_counts,
        n_diff,
        models,
        monte_carlo_limits: monte_carlo_limits(outcomes.len().max(1), 0.95),
    }
}

/// Run every replication of a scenario sequentially.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let outcomes = (0..config.runs)
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config, &outcomes))
}
