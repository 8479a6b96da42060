//! `refvos` command-line front end.
//!
//! Exit codes: 0 on success, 1 when any expression failed in a backend
//! stage, 2 for usage, configuration, input and I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use refvos_core::agentic::{self, AgenticConfig, RefinePolicy};
use refvos_core::backend::{BackendEndpoint, BackendKind, TransportKind};
use refvos_core::harness::{
    run_ablation, CorruptionSpec, Scenario, Suite, SuiteSpec, Variant,
};
use refvos_core::metadata::{self, load_expressions, load_predictions, write_predictions};
use refvos_core::metrics::{self, aggregate, evaluate, BoundaryTolerance};
use refvos_core::orchestrator::{GatePolicy, Pipeline, PipelineConfig};
use refvos_core::MaskTrajectory;

pub const EXIT_OK: u8 = 0;
pub const EXIT_EXPRESSION_FAILURES: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Environment variables that override backend addresses with HTTP
/// endpoints.
pub const ENDPOINT_ENV: [(BackendKind, &str); 4] = [
    (BackendKind::Asr, "REFVOS_ASR_URL"),
    (BackendKind::Judge, "REFVOS_JUDGE_URL"),
    (BackendKind::Segment, "REFVOS_SEGMENT_URL"),
    (BackendKind::Refine, "REFVOS_REFINE_URL"),
];

#[derive(Debug, Parser)]
#[command(name = "refvos", version, about = "Audio-referring video object segmentation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write a prediction manifest.
    Run(RunArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Run only transcription and the existence gate.
    Gate(GateArgs),
    /// Print reliability reports for a trajectory or a manifest.
    Inspect(InspectArgs),
    /// Generate a synthetic dataset with scripted backend fixtures.
    Simulate(SimulateArgs),
}

fn parse_refine_policy(s: &str) -> Result<RefinePolicy, String> {
    match s {
        "never" => Ok(RefinePolicy::Never),
        "first_non_empty" => Ok(RefinePolicy::FirstNonEmpty),
        "agentic" => Ok(RefinePolicy::Agentic),
        _ => Err(format!("unknown refine policy `{s}` (expected never, first_non_empty or agentic)")),
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Expression metadata (JSON).
    #[arg(long)]
    pub expressions: PathBuf,
    /// Override `gate_policy`: metadata_first, always_judge or off.
    #[arg(long)]
    pub gate_policy: Option<GatePolicy>,
    /// Override `parallelism`.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output directory for the manifest and trajectories.
    #[arg(long)]
    pub out: PathBuf,
    /// Override `refine_policy`: never, first_non_empty or agentic.
    #[arg(long, value_parser = parse_refine_policy)]
    pub refine_policy: Option<RefinePolicy>,
    /// Also write per-expression stage traces as JSON lines.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction manifest or its directory.
    #[arg(long, requires = "gt", conflicts_with = "scores")]
    pub pred: Option<PathBuf>,
    /// Ground-truth manifest or its directory.
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// Aggregate precomputed per-expression scores instead.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Write the machine-readable report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed boundary tolerance in pixels instead of 0.8% of the diagonal.
    #[arg(long)]
    pub tolerance: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write decisions as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A trajectory document, a manifest, or a manifest directory.
    pub path: PathBuf,
    /// Take reliability thresholds from this pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print reports as JSON.
    #[arg(long)]
    pub json: bool,
    /// Dump every frame as a PGM image under this directory.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub expressions: usize,
    #[arg(long, default_value_t = 0.3)]
    pub absent_fraction: f64,
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    /// Frame height and width.
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    /// Perfect backends: no corruption, no hallucination.
    #[arg(long)]
    pub clean: bool,
    /// Use these scenarios (JSON list) instead of random ones.
    #[arg(long, conflicts_with_all = ["expressions", "absent_fraction", "frames", "size", "clean"])]
    pub scenarios: Option<PathBuf>,
    /// Also compare the four pipeline variants over this many seeds,
    /// starting at `--seed`.
    #[arg(long)]
    pub ablation_seeds: Option<usize>,
}

/// Runs one command, writing human-readable output to `out`, and returns
/// the exit code. Errors map to exit code 2.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Gate(a) => cmd_gate(a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
    }
}

/// Replaces endpoint addresses with HTTP URLs from the environment.
pub fn apply_env_overrides(cfg: &mut PipelineConfig, var: impl Fn(&str) -> Option<String>) {
    for (kind, name) in ENDPOINT_ENV {
        if let Some(url) = var(name).filter(|u| !u.trim().is_empty()) {
            let ep = cfg.endpoints.get_mut(kind);
            ep.transport = TransportKind::Http;
            ep.address = url.trim().to_string();
        }
    }
}

fn load_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    if !path.is_file() {
        bail!("config file {} does not exist", path.display());
    }
    let mut cfg = PipelineConfig::load(path)?;
    apply_env_overrides(&mut cfg, |k| std::env::var(k).ok());
    Ok(cfg)
}

fn build_pipeline(
    args: &PipelineArgs,
    tweak: impl FnOnce(&mut PipelineConfig),
) -> anyhow::Result<(Pipeline, Vec<metadata::ExpressionRecord>)> {
    let mut cfg = load_config(&args.config)?;
    if let Some(g) = args.gate_policy {
        cfg.gate_policy = g;
    }
    if let Some(p) = args.parallel {
        cfg.parallelism = p;
    }
    tweak(&mut cfg);
    let base = args
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let pipeline = Pipeline::connect(cfg, base)?;
    let records = load_expressions(&args.expressions)?;
    Ok((pipeline, records))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let (pipeline, records) = build_pipeline(&a.pipeline, |cfg| {
        if let Some(p) = a.refine_policy {
            cfg.refine_policy = p;
        }
    })?;
    let result = pipeline.run_dataset(&records)?;
    write_predictions(&result.predictions, &a.out)?;
    if let Some(path) = &a.traces {
        let mut text = String::new();
        for t in &result.traces {
            text.push_str(&serde_json::to_string(t)?);
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let no_object = result.predictions.iter().filter(|p| p.is_no_object()).count();
    let failed = result.failures();
    let refined = result.traces.iter().filter(|t| t.refine_invoked).count();
    writeln!(
        out,
        "{} expressions: {} segmented ({} refined), {} no-object, {} failed",
        records.len(),
        records.len() - no_object - failed,
        refined,
        no_object,
        failed
    )?;
    for t in result.traces.iter().filter(|t| t.failed()) {
        let stage = t.failed_stage.expect("failed");
        let detail = t.stages.last().map(|s| s.detail.as_str()).unwrap_or("");
        writeln!(out, "failed {} at {stage}: {detail}", t.expression_id)?;
    }
    writeln!(out, "manifest: {}", metadata::manifest_path(&a.out).display())?;
    Ok(if failed > 0 {
        EXIT_EXPRESSION_FAILURES
    } else {
        EXIT_OK
    })
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let tolerance = a
        .tolerance
        .map(BoundaryTolerance::Fixed)
        .unwrap_or_default();
    let result = match (&a.pred, &a.gt, &a.scores) {
        (Some(pred), Some(gt), None) => {
            let p = load_predictions(pred)?;
            let g = load_predictions(gt)?;
            evaluate(&p, &g, tolerance)?
        }
        (None, None, Some(scores)) => {
            let text = fs::read_to_string(scores)
                .with_context(|| format!("reading {}", scores.display()))?;
            aggregate(metrics::load_scores(&text, &scores.display().to_string())?)?
        }
        _ => bail!("pass either --pred and --gt, or --scores"),
    };
    write!(out, "{}", result.to_table())?;
    if let Some(path) = &a.out {
        fs::write(path, result.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(EXIT_OK)
}

fn cmd_gate(a: &GateArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let (pipeline, records) = build_pipeline(&a.pipeline, |_| {})?;
    let mut decisions = Vec::with_capacity(records.len());
    let mut failed = 0;
    for rec in &records {
        let trace = pipeline.gate_expression(rec);
        match (trace.gate, trace.failed_stage) {
            (_, Some(stage)) => {
                failed += 1;
                let detail = trace.stages.last().map(|s| s.detail.clone()).unwrap_or_default();
                writeln!(out, "{}\tfailed at {stage}: {detail}", rec.expression_id)?;
                decisions.push(json!({"expression_id": rec.expression_id, "failed_stage": stage}));
            }
            (Some(g), None) => {
                let source = serde_json::to_value(g.source)?;
                writeln!(
                    out,
                    "{}\texists={}\t{}",
                    rec.expression_id,
                    g.exists,
                    source.as_str().unwrap_or_default()
                )?;
                decisions.push(json!({
                    "expression_id": rec.expression_id,
                    "exists": g.exists,
                    "source": source,
                }));
            }
            (None, None) => unreachable!("the gate stage always decides or fails"),
        }
    }
    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&json!({ "decisions": decisions }))? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failed > 0 {
        EXIT_EXPRESSION_FAILURES
    } else {
        EXIT_OK
    })
}

fn print_report(
    out: &mut dyn Write,
    label: &str,
    traj: &MaskTrajectory,
    cfg: &AgenticConfig,
    as_json: bool,
) -> anyhow::Result<()> {
    let r = agentic::assess(traj, cfg);
    if as_json {
        writeln!(out, "{}", json!({"id": label, "report": r}))?;
        return Ok(());
    }
    writeln!(out, "{label}")?;
    writeln!(out, "  frame_count: {}", r.frame_count)?;
    writeln!(out, "  non_empty_frames: {}", r.non_empty_frames)?;
    writeln!(out, "  coverage: {:.4}", r.coverage)?;
    writeln!(out, "  area_smoothness: {:.4}", r.area_smoothness)?;
    writeln!(out, "  fragmentation: {:.4}", r.fragmentation)?;
    writeln!(out, "  solidity: {:.4}", r.solidity)?;
    match r.anchor {
        Some(a) => writeln!(out, "  anchor: {a}")?,
        None => writeln!(out, "  anchor: none")?,
    }
    writeln!(out, "  refine_recommended: {}", r.refine_recommended)?;
    Ok(())
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?.agentic,
        None => AgenticConfig::default(),
    };
    let path = metadata::manifest_path(&a.path);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not JSON", path.display()))?;
    if doc.get("predictions").is_some() {
        for p in load_predictions(&path)? {
            let label = if p.meta_text.is_empty() {
                p.expression_id.clone()
            } else {
                format!("{} [{}]", p.expression_id, p.meta_text)
            };
            print_report(out, &label, &p.trajectory, &cfg, a.json)?;
            if let Some(dir) = &a.pgm {
                p.trajectory.dump_pgm(&dir.join(p.expression_id.replace('/', "_")))?;
            }
        }
    } else {
        let traj = MaskTrajectory::from_json(&text, &path.display().to_string())?;
        print_report(out, &path.display().to_string(), &traj, &cfg, a.json)?;
        if let Some(dir) = &a.pgm {
            traj.dump_pgm(dir)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> anyhow::Result<u8> {
    let suite = match &a.scenarios {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let scenarios: Vec<Scenario> = serde_json::from_str(&text)
                .with_context(|| format!("parsing scenarios in {}", path.display()))?;
            Suite::from_scenarios(scenarios)?
        }
        None => Suite::generate(&SuiteSpec {
            seed: a.seed,
            expressions: a.expressions,
            absent_fraction: a.absent_fraction,
            frames: a.frames,
            height: a.size,
            width: a.size,
            corruption: if a.clean {
                CorruptionSpec::none()
            } else {
                CorruptionSpec::ablation_regime()
            },
        })?,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let write = |name: &str, text: String| -> anyhow::Result<()> {
        let path = a.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write("fixtures.json", suite.fixtures().to_json())?;
    write("expressions.json", metadata::expressions_to_json(&suite.records())?)?;
    let scenarios: Vec<&Scenario> = suite.cases.iter().map(|c| &c.scenario).collect();
    write("scenarios.json", serde_json::to_string_pretty(&scenarios)? + "\n")?;
    let cfg = PipelineConfig::new(refvos_core::backend::Endpoints::uniform(BackendEndpoint::scripted(
        "fixtures.json",
    )));
    write("config.toml", cfg.to_toml())?;
    write_predictions(&suite.ground_truth(), &a.out.join("gt"))?;
    writeln!(
        out,
        "{} scenarios ({} target-absent) written to {}",
        suite.cases.len(),
        suite.cases.iter().filter(|c| !c.scenario.gt_present).count(),
        a.out.display()
    )?;

    if let Some(n) = a.ablation_seeds {
        let suites = (0..n as u64)
            .map(|i| {
                Suite::generate(&SuiteSpec {
                    seed: a.seed + i,
                    ..SuiteSpec::ablation(0)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let arms: Vec<_> = Variant::ALL.iter().map(|v| v.arm()).collect();
        let report = run_ablation(&arms, &suites)?;
        write!(out, "{}", report.to_table())?;
        write("ablation.json", serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(EXIT_OK)
}
