//! Plain-text reports. Q is printed with 2 decimals and p-values with 4.

use std::fmt::Write;

use cnma_core::disconnector::DisconnectedDesign;
use cnma_core::estimator::{format_p, EffectReport, FitReport, ModelKind};
use cnma_core::selector::{CandidateResult, SelectionTrace};

/// Effect measure used to display estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Estimates as supplied (e.g. mean differences or log odds ratios).
    Raw,
    /// Log odds ratios shown as odds ratios.
    OddsRatio,
}

fn fmt_num(v: Option<f64>, scale: Scale) -> String {
    match v {
        None => "-".into(),
        Some(v) => match scale {
            Scale::Raw => format!("{v:.4}"),
            Scale::OddsRatio => format!("{:.4}", v.exp()),
        },
    }
}

pub fn heterogeneity_line(q: f64, df: usize, p: Option<f64>) -> String {
    format!("Q = {q:.2}, df = {df}, p = {}", format_p(p))
}

fn effects_table(out: &mut String, effects: &[EffectReport], scale: Scale, level: f64) {
    let measure = match scale {
        Scale::Raw => "TE",
        Scale::OddsRatio => "OR",
    };
    let ci = format!("{:.0}%-CI", level * 100.0);
    let w = effects
        .iter()
        .map(|e| e.treat1.len() + e.treat2.len() + 4)
        .max()
        .unwrap_or(10)
        .max(10);
    let _ = writeln!(out, "{:<w$} {:>10} {:>8} {:>23}", "Comparison", measure, "SE", ci);
    for e in effects {
        let name = format!("{} vs {}", e.treat1, e.treat2);
        let interval = if e.estimable {
            format!("[{}; {}]", fmt_num(e.low, scale), fmt_num(e.high, scale))
        } else {
            "inestimable".to_string()
        };
        let se = e.se.map_or("-".to_string(), |s| format!("{s:.4}"));
        let _ = writeln!(out, "{:<w$} {:>10} {:>8} {:>23}", name, fmt_num(e.estimate, scale), se, interval);
    }
}

pub fn render_fit(report: &FitReport, reference: &str, scale: Scale, level: f64) -> String {
    let mut out = String::new();
    let kind = match report.kind {
        ModelKind::Nma => "Standard NMA".to_string(),
        ModelKind::Cnma => {
            let interactions: Vec<&String> = report.columns.iter().filter(|c| c.contains('*')).collect();
            if interactions.is_empty() {
                "Additive CNMA".to_string()
            } else {
                format!(
                    "Interaction CNMA ({})",
                    interactions.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                )
            }
        }
    };
    let _ = writeln!(out, "{kind}, reference {reference}");
    let _ = writeln!(out, "Interventions: {}", report.interventions.len());
    if report.kind == ModelKind::Cnma {
        let _ = writeln!(out, "Columns: {}", report.columns.join(", "));
    }
    let _ = writeln!(out, "Design rank: {}", report.rank);
    let _ = writeln!(out, "Heterogeneity: {}", heterogeneity_line(report.q, report.df, report.p));
    let _ = writeln!(out, "tau^2 = {:.4}", report.tau2);
    out.push('\n');
    effects_table(&mut out, &report.effects, scale, level);
    out
}

/// Separate NMAs, one block per subnetwork, followed by the pooled heterogeneity.
pub fn render_separate(
    parts: &[(Vec<String>, String, FitReport)],
    q: f64,
    df: usize,
    p: Option<f64>,
    scale: Scale,
    level: f64,
) -> String {
    let mut out = String::new();
    for (i, (members, reference, report)) in parts.iter().enumerate() {
        let _ = writeln!(out, "Subnetwork {} ({}):", i + 1, members.join(", "));
        out.push_str(&render_fit(report, reference, scale, level));
        out.push('\n');
    }
    let _ = writeln!(out, "Separate NMAs combined: {}", heterogeneity_line(q, df, p));
    out
}

fn candidate_row(out: &mut String, mark: &str, c: &CandidateResult) {
    let name = if c.interactions.is_empty() {
        "additive".to_string()
    } else {
        c.interactions.join(" + ")
    };
    let _ = writeln!(
        out,
        "{mark:1} {name:<28} {:>9.2} {:>5} {:>14} {:>14}",
        c.q,
        c.df,
        format_p(c.p_heterogeneity),
        format_p(c.p_vs_incumbent)
    );
}

/// Selection trace laid out like a table of interaction models with Q, df, heterogeneity
/// p-value and the p-value of the difference test against the previously selected model.
pub fn render_selection(trace: &SelectionTrace, threshold: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Forward selection of interactions (threshold p < {threshold})");
    let pool = if trace.pool.is_empty() { "none".to_string() } else { trace.pool.join(", ") };
    let _ = writeln!(out, "Estimable interactions: {pool}");
    if !trace.inestimable.is_empty() {
        let _ = writeln!(out, "Inestimable interactions: {}", trace.inestimable.join(", "));
    }
    for w in &trace.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "  {:<28} {:>9} {:>5} {:>14} {:>14}",
        "Interactions", "Q", "df", "p(hetero)", "p(diff)"
    );
    candidate_row(&mut out, "", &trace.additive);
    for step in &trace.steps {
        let mode = if step.greedy { ", greedy" } else { "" };
        let _ = writeln!(
            out,
            "-- {} interaction(s): {} candidate model(s){mode}",
            step.cardinality, step.candidates_evaluated
        );
        for (i, c) in step.candidates.iter().enumerate() {
            let mark = if Some(i) == step.best { "*" } else { "" };
            candidate_row(&mut out, mark, c);
        }
        let verdict = if step.accepted { "accepted" } else { "not accepted" };
        let _ = writeln!(out, "   best model {verdict}");
    }
    out.push('\n');
    let _ = writeln!(out, "Selected model: {}", trace.model_label());
    let reason = serde_json::to_value(trace.stopped_because)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let _ = writeln!(out, "Stopped: {reason}");
    out
}

pub fn render_designs(designs: &[DisconnectedDesign]) -> String {
    let mut out = String::new();
    if designs.is_empty() {
        let _ = writeln!(out, "No disconnected network can be built: every valid split would leave an intervention without comparisons or remove nothing.");
        return out;
    }
    let _ = writeln!(
        out,
        "{:>4} {:>4} {:>4} {:>4} {:>7} {:>7}  {}",
        "id", "k", "m", "n_c", "main k", "main m", "main subnetwork | removed studies"
    );
    for d in designs {
        let _ = writeln!(
            out,
            "{:>4} {:>4} {:>4} {:>4} {:>7} {:>7}  {} | {}",
            d.id,
            d.resulting_counts.k,
            d.resulting_counts.m,
            d.resulting_counts.n_c,
            d.main_counts.k,
            d.main_counts.m,
            d.main_set.join(", "),
            d.removed_studies.join(", ")
        );
    }
    out
}

pub fn designs_csv(designs: &[DisconnectedDesign]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "id", "k", "m", "n_c", "main_k", "main_m", "main_size", "main_set", "auxiliary", "removed_studies",
    ]);
    for d in designs {
        let aux: Vec<String> = d.auxiliary_partition.iter().map(|p| p.join(";")).collect();
        let _ = w.write_record([
            d.id.to_string(),
            d.resulting_counts.k.to_string(),
            d.resulting_counts.m.to_string(),
            d.resulting_counts.n_c.to_string(),
            d.main_counts.k.to_string(),
            d.main_counts.m.to_string(),
            d.main_set.len().to_string(),
            d.main_set.join(";"),
            aux.join("|"),
            d.removed_studies.join(";"),
        ]);
    }
    w.into_inner().unwrap_or_default()
}
