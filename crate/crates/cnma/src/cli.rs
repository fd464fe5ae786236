//! Command-line interface. Every command writes its outputs plus a run manifest, either
//! next to the input or into `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnma_core::disconnector::{apply_disconnect, enumerate_disconnected};
use cnma_core::estimator::{fit_cnma, fit_nma, fit_separate_nmas, FitReport};
use cnma_core::network::{parse_interaction, Network};
use cnma_core::selector::{forward_select, SelectionOptions, AIC_THRESHOLD};
use cnma_core::simulator::{generate_network, Mode, Scenario, ScenarioConfig};
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::io::{network_csv, read_network, InputFormat};
use crate::manifest::RunManifest;
use crate::report::{self, Scale};
use crate::simulate::{self, SimulationConfig, SummaryFile, DEFAULT_SEED, SUMMARY_SCHEMA_VERSION};

pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "cnma", version, about = "Component network meta-analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a standard NMA, an additive CNMA or an interaction CNMA.
    Fit(FitArgs),
    /// Forward selection of two-way interactions.
    Select(SelectArgs),
    /// Enumerate or build disconnected networks.
    Disconnect(DisconnectArgs),
    /// Run simulation scenarios from a config file.
    Simulate(SimulateArgs),
    /// Write one simulated data set as CSV.
    Generate(GenerateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Contrast-level (studlab,treat1,treat2,TE,seTE) or arm-level
    /// (studlab,treat1,event1,n1,treat2,event2,n2) CSV.
    pub input: PathBuf,
    /// Reference intervention.
    #[arg(long)]
    pub reference: String,
    /// Components without an effect of their own [default: components of the reference];
    /// an empty value (`--inactive ''`) gives every component its own effect.
    #[arg(long, value_delimiter = ',')]
    pub inactive: Option<Vec<String>>,
    /// Separator of components in intervention labels.
    #[arg(long, default_value_t = '+')]
    pub separator: char,
    /// Output directory [default: next to the input].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummaryMeasure {
    #[value(name = "OR", alias = "or")]
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Nma,
    Additive,
    Interactions(Vec<(String, String)>),
}

impl std::str::FromStr for ModelSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nma" => Ok(ModelSpec::Nma),
            "additive" => Ok(ModelSpec::Additive),
            _ => {
                let list = s
                    .strip_prefix("interactions=")
                    .ok_or("expected nma, additive or interactions=a*b,...")?;
                let pairs = list
                    .split(',')
                    .map(|p| parse_interaction(p.trim()).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(ModelSpec::Interactions(pairs))
            }
        }
    }
}

impl ModelSpec {
    fn name(&self) -> String {
        match self {
            ModelSpec::Nma => "nma".into(),
            ModelSpec::Additive => "additive".into(),
            ModelSpec::Interactions(p) => format!(
                "interactions={}",
                p.iter().map(|(a, b)| format!("{a}*{b}")).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// nma, additive, or interactions=a*b,c*d
    #[arg(long, default_value = "nma")]
    pub model: ModelSpec,
    /// Summary measure for display; arm-level input is always analysed as log odds ratios.
    #[arg(long, value_enum)]
    pub sm: Option<SummaryMeasure>,
    /// Fit a separate NMA in every subnetwork of a disconnected network.
    #[arg(long)]
    pub per_subnetwork: bool,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Accept an interaction step when the difference test has p below this.
    #[arg(long, default_value_t = AIC_THRESHOLD)]
    pub threshold: f64,
    /// Stop after this many interactions.
    #[arg(long)]
    pub max_cardinality: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DisconnectArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// List every disconnected network (JSON and CSV summary).
    #[arg(long, conflicts_with = "apply", required_unless_present = "apply")]
    pub enumerate: bool,
    /// Write the network of design ID as contrast-level CSV.
    #[arg(long, value_name = "ID")]
    pub apply: Option<usize>,
    /// Enumerate even above the size cap.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON config: {"scenario", "tau2", "mode", "runs", "seed", ...overrides}.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Master seed; overrides the config [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: <config stem>.results next to the config].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 0.0)]
    pub tau2: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Replication index within the scenario's random streams.
    #[arg(long, default_value_t = 0)]
    pub run: usize,
    /// Write contrast-level rows instead of arm-level counts.
    #[arg(long)]
    pub contrast: bool,
    /// Output CSV.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `argv` (without the program name) and run the command.
pub fn run(argv: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("cnma".to_string()).chain(argv.iter().cloned()))
        .map_err(CliError::Clap)?;
    match cli.command {
        Command::Fit(a) => cmd_fit(&a, argv),
        Command::Select(a) => cmd_select(&a, argv),
        Command::Disconnect(a) => cmd_disconnect(&a, argv),
        Command::Simulate(a) => cmd_simulate(&a, argv),
        Command::Generate(a) => cmd_generate(&a, argv),
        Command::Replay(a) => cmd_replay(&a),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn output_path(args: &NetworkArgs, suffix: &str) -> PathBuf {
    let stem = args
        .input
        .file_stem()
        .map_or_else(|| "network".into(), |s| s.to_string_lossy().into_owned());
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    dir.join(format!("{stem}.{suffix}"))
}

struct Loaded {
    net: Network,
    format: InputFormat,
    reference: usize,
    inactive: Vec<String>,
}

fn load(args: &NetworkArgs) -> Result<Loaded> {
    let (net, format) = read_network(&args.input, args.separator)?;
    let reference = net.require_index(&args.reference)?;
    let inactive = match &args.inactive {
        Some(list) => list.iter().filter(|c| !c.is_empty()).cloned().collect(),
        None => net.interventions()[reference].components().to_vec(),
    };
    Ok(Loaded {
        net,
        format,
        reference,
        inactive,
    })
}

fn finish(mut manifest: RunManifest, outputs: Vec<(PathBuf, Vec<u8>)>, manifest_path: PathBuf) -> Result<()> {
    for (path, bytes) in &outputs {
        write(path, bytes)?;
        manifest.outputs.push(path.clone());
    }
    write(&manifest_path, &json_bytes(&manifest))
}

fn network_config(args: &NetworkArgs, inactive: &[String]) -> Value {
    json!({
        "input": args.input,
        "reference": args.reference,
        "inactive": inactive,
        "separator": args.separator.to_string(),
    })
}

fn with_schema(report: &FitReport, reference: &str) -> Value {
    let mut v = serde_json::to_value(report).expect("serializable");
    if let Value::Object(map) = &mut v {
        map.insert("schema_version".into(), json!(JSON_SCHEMA_VERSION));
        map.insert("reference".into(), json!(reference));
    }
    v
}

pub fn cmd_fit(args: &FitArgs, argv: &[String]) -> Result<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level {} must lie in (0, 1)", args.level)));
    }
    let l = load(&args.network)?;
    let scale = match (args.sm, l.format) {
        (Some(SummaryMeasure::Or), _) | (None, InputFormat::Arm) => Scale::OddsRatio,
        (None, InputFormat::Contrast) => Scale::Raw,
    };
    let ref_label = l.net.label(l.reference).to_string();
    let mut config = network_config(&args.network, &l.inactive);
    config["model"] = json!(args.model.name());
    config["sm"] = json!(if scale == Scale::OddsRatio { "OR" } else { "none" });
    config["per_subnetwork"] = json!(args.per_subnetwork);
    config["level"] = json!(args.level);

    let (text, json_out) = if args.per_subnetwork {
        if args.model != ModelSpec::Nma {
            return Err(CliError::Usage("--per-subnetwork applies to --model nma only".into()));
        }
        let sep = fit_separate_nmas(&l.net, l.reference)?;
        let mut parts = Vec::new();
        let mut json_parts = Vec::new();
        for part in &sep.parts {
            let local = part.network.require_index(&part.reference)?;
            let report = part.fit.report(&part.network, local, args.level)?;
            let mut v = with_schema(&report, &part.reference);
            v["members"] = json!(part.members);
            json_parts.push(v);
            parts.push((part.members.clone(), part.reference.clone(), report));
        }
        let h = sep.heterogeneity;
        let text = report::render_separate(&parts, h.q, h.df, h.p, scale, args.level);
        let v = json!({
            "schema_version": JSON_SCHEMA_VERSION,
            "kind": "separate_nma",
            "Q": h.q,
            "df": h.df,
            "p": h.p,
            "subnetworks": json_parts,
        });
        (text, v)
    } else {
        let fit = match &args.model {
            ModelSpec::Nma => fit_nma(&l.net, l.reference)?,
            ModelSpec::Additive => fit_cnma(&l.net, &l.inactive, &[])?,
            ModelSpec::Interactions(p) => fit_cnma(&l.net, &l.inactive, p)?,
        };
        let report = fit.report(&l.net, l.reference, args.level)?;
        (
            report::render_fit(&report, &ref_label, scale, args.level),
            with_schema(&report, &ref_label),
        )
    };
    print!("{text}");
    let mut manifest = RunManifest::new("fit", argv, config, None);
    manifest.add_input(&args.network.input)?;
    finish(
        manifest,
        vec![
            (output_path(&args.network, "fit.json"), json_bytes(&json_out)),
            (output_path(&args.network, "fit.txt"), text.into_bytes()),
        ],
        output_path(&args.network, "fit.manifest.json"),
    )
}

pub fn cmd_select(args: &SelectArgs, argv: &[String]) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage(format!("--threshold {} must lie in [0, 1]", args.threshold)));
    }
    let l = load(&args.network)?;
    let options = SelectionOptions {
        threshold: args.threshold,
        max_cardinality: args.max_cardinality,
        ..SelectionOptions::with_inactive(&l.inactive)
    };
    let trace = forward_select(&l.net, &options)?;
    let text = report::render_selection(&trace, args.threshold);
    print!("{text}");
    let ref_label = l.net.label(l.reference).to_string();
    let final_report = trace.final_model.report(&l.net, l.reference, 0.95)?;
    let mut v = serde_json::to_value(&trace).expect("serializable");
    v["schema_version"] = json!(JSON_SCHEMA_VERSION);
    v["final_model"] = with_schema(&final_report, &ref_label);
    let mut config = network_config(&args.network, &l.inactive);
    config["threshold"] = json!(args.threshold);
    config["max_cardinality"] = json!(args.max_cardinality);
    config["subset_pool_cap"] = json!(options.subset_pool_cap);
    config["subset_cardinality_cap"] = json!(options.subset_cardinality_cap);
    let mut manifest = RunManifest::new("select", argv, config, None);
    manifest.add_input(&args.network.input)?;
    finish(
        manifest,
        vec![
            (output_path(&args.network, "select.json"), json_bytes(&v)),
            (output_path(&args.network, "select.txt"), text.into_bytes()),
        ],
        output_path(&args.network, "select.manifest.json"),
    )
}

pub fn cmd_disconnect(args: &DisconnectArgs, argv: &[String]) -> Result<()> {
    let l = load(&args.network)?;
    let designs = enumerate_disconnected(&l.net, l.reference, args.force)?;
    let mut config = network_config(&args.network, &l.inactive);
    config["force"] = json!(args.force);
    let outputs = match args.apply {
        None => {
            let text = report::render_designs(&designs);
            print!("{text}");
            config["action"] = json!("enumerate");
            let v = json!({ "schema_version": JSON_SCHEMA_VERSION, "designs": designs });
            vec![
                (output_path(&args.network, "designs.json"), json_bytes(&v)),
                (output_path(&args.network, "designs.csv"), report::designs_csv(&designs)),
            ]
        }
        Some(id) => {
            let design = designs.iter().find(|d| d.id == id).ok_or_else(|| {
                CliError::Usage(format!(
                    "no disconnected design with id {id} ({} designs available)",
                    designs.len()
                ))
            })?;
            let out = apply_disconnect(&l.net, design)?;
            println!(
                "Design {id}: removed {} ({} studies, {} comparisons, {} subnetworks remain)",
                design.removed_studies.join(", "),
                out.n_studies(),
                out.n_comparisons(),
                out.n_subnetworks()
            );
            config["action"] = json!("apply");
            config["id"] = json!(id);
            vec![(
                output_path(&args.network, &format!("disconnected-{id}.csv")),
                network_csv(&out)?,
            )]
        }
    };
    let mut manifest = RunManifest::new("disconnect", argv, config, None);
    manifest.add_input(&args.network.input)?;
    finish(manifest, outputs, output_path(&args.network, "disconnect.manifest.json"))
}

pub fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let sim = SimulationConfig::read(&args.config)?;
    let cells = sim.cells(args.seed)?;
    let jobs = match args.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let seed = cells[0].seed;
    eprintln!("seed {seed}, {} cell(s), {} run(s) each, {jobs} thread(s)", cells.len(), sim.runs);
    let mut summaries = Vec::with_capacity(cells.len());
    for cell in &cells {
        let summary = simulate::run_cell(cell, &pool)?;
        eprintln!(
            "{} {} tau2={}: {}",
            cell.mode.name(),
            cell.scenario.name(),
            cell.tau2,
            summary
                .selection_counts
                .iter()
                .map(|(m, n)| format!("{m}={n}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        summaries.push(summary);
    }
    let dir = args.out.clone().unwrap_or_else(|| {
        let stem = args
            .config
            .file_stem()
            .map_or_else(|| "simulation".into(), |s| s.to_string_lossy().into_owned());
        args.config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
            .join(format!("{stem}.results"))
    });
    let summary_file = SummaryFile {
        schema_version: SUMMARY_SCHEMA_VERSION,
        cells: &summaries,
    };
    let config = json!({ "cells": cells, "jobs": jobs });
    let mut manifest = RunManifest::new("simulate", argv, config, Some(seed));
    manifest.add_input(&args.config)?;
    finish(
        manifest,
        vec![
            (dir.join("summary.json"), json_bytes(&summary_file)),
            (dir.join("selection.csv"), simulate::selection_table(&summaries)),
            (dir.join("performance.csv"), simulate::performance_table(&summaries)),
            (dir.join("effects.csv"), simulate::effects_table(&summaries)),
        ],
        dir.join("manifest.json"),
    )
}

pub fn cmd_generate(args: &GenerateArgs, argv: &[String]) -> Result<()> {
    let config = ScenarioConfig::new(args.scenario, args.tau2, Mode::Connected, args.run + 1, args.seed);
    let generated = generate_network(&config, &mut config.run_rng(args.run))?;
    let bytes = if args.contrast {
        network_csv(&generated.network)?
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Usage(e.to_string());
        w.write_record(["studlab", "treat1", "event1", "n1", "treat2", "event2", "n2"])
            .map_err(err)?;
        for a in &generated.arms {
            w.write_record([
                a.study_id.clone(),
                a.treat1.clone(),
                a.events1.to_string(),
                a.n.to_string(),
                a.treat2.clone(),
                a.events2.to_string(),
                a.n.to_string(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?
    };
    let mut manifest_path = args.output.clone().into_os_string();
    manifest_path.push(".manifest.json");
    let manifest = RunManifest::new(
        "generate",
        argv,
        json!({ "scenario": config, "run": args.run, "contrast": args.contrast }),
        Some(args.seed),
    );
    finish(manifest, vec![(args.output.clone(), bytes)], manifest_path.into())
}

/// `argv` with any `--out` option removed.
fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    manifest.verify_inputs()?;
    if manifest.argv.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("manifest records a replay; replay its source instead".into()));
    }
    let mut argv = manifest.argv.clone();
    if let Some(out) = &args.out {
        if manifest.command == "generate" {
            return Err(CliError::Usage("generate writes to --output; replay it without --out".into()));
        }
        argv = strip_out(&argv);
        argv.push("--out".into());
        argv.push(out.to_string_lossy().into_owned());
    }
    run(&argv)
}
