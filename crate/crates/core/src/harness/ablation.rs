use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Suite;
use crate::agentic::RefinePolicy;
use crate::backend::{BackendEndpoint, Backends, Endpoints, ScriptedTransport};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, BoundaryTolerance, EvalResult};
use crate::orchestrator::{GatePolicy, Pipeline, PipelineConfig};

/// The four pipeline arms compared in the ablation, weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoGate,
    Gate,
    GateRefine,
    GateRefinePlanner,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NoGate,
        Variant::Gate,
        Variant::GateRefine,
        Variant::GateRefinePlanner,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::NoGate => "no-gate",
            Variant::Gate => "gate",
            Variant::GateRefine => "gate+refine",
            Variant::GateRefinePlanner => "gate+refine+planner",
        }
    }

    /// Refinement without the planner always starts from the first
    /// non-empty frame; with it, only when the report asks for it and from
    /// the scored anchor.
    pub fn config(self) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(Endpoints::uniform(BackendEndpoint::scripted("fixtures.json")));
        (cfg.gate_policy, cfg.refine_policy) = match self {
            Variant::NoGate => (GatePolicy::Off, RefinePolicy::Never),
            Variant::Gate => (GatePolicy::MetadataFirst, RefinePolicy::Never),
            Variant::GateRefine => (GatePolicy::MetadataFirst, RefinePolicy::FirstNonEmpty),
            Variant::GateRefinePlanner => (GatePolicy::MetadataFirst, RefinePolicy::Agentic),
        };
        cfg
    }

    pub fn arm(self) -> AblationVariant {
        AblationVariant {
            name: self.label().to_string(),
            config: self.config(),
        }
    }
}

/// A named pipeline configuration. Its endpoints are ignored; each suite
/// supplies its own scripted backends.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    pub n_acc: f64,
    pub t_acc: f64,
    pub final_score: f64,
    /// Final per suite, in suite order.
    pub finals: Vec<f64>,
}

impl VariantSummary {
    fn from_results(name: &str, results: &[EvalResult]) -> Self {
        let n = results.len() as f64;
        let mean = |f: fn(&EvalResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        Self {
            name: name.to_string(),
            j: mean(|r| r.j),
            f: mean(|r| r.f),
            jf: mean(|r| r.jf),
            n_acc: mean(|r| r.n_acc),
            t_acc: mean(|r| r.t_acc),
            final_score: mean(|r| r.final_score),
            finals: results.iter().map(|r| r.final_score).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub suites: usize,
    pub variants: Vec<VariantSummary>,
}

impl AblationReport {
    pub fn get(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// True when mean Final strictly increases across the first `n`
    /// variants, in the order they were given.
    pub fn strictly_increasing(&self, n: usize) -> bool {
        self.variants
            .iter()
            .take(n)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0].final_score < w[1].final_score)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "variant", "J&F", "J", "F", "N-acc.", "T-acc.", "Final"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<22} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                v.name, v.jf, v.j, v.f, v.n_acc, v.t_acc, v.final_score
            );
        }
        let _ = writeln!(out, "({} suites)", self.suites);
        out
    }
}

/// Runs every variant over every suite against the suite's scripted
/// backends and reports mean scores per variant.
pub fn run_ablation(variants: &[AblationVariant], suites: &[Suite]) -> Result<AblationReport> {
    if variants.len() < 2 {
        return Err(Error::Usage("an ablation needs at least two variants".into()));
    }
    if suites.is_empty() {
        return Err(Error::Usage("an ablation needs at least one suite".into()));
    }
    let per_suite: Vec<Vec<EvalResult>> = suites
        .par_iter()
        .map(|suite| {
            let transport = Arc::new(ScriptedTransport::new(suite.fixtures()));
            let records = suite.records();
            let gt = suite.ground_truth();
            variants
                .iter()
                .map(|v| {
                    let mut cfg = v.config.clone();
                    cfg.parallelism = 1;
                    let backends = Backends::shared(transport.clone(), cfg.judge_samples);
                    let out = Pipeline::new(cfg, backends).run_dataset(&records)?;
                    evaluate(&out.predictions, &gt, BoundaryTolerance::default())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let variants = variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let results: Vec<EvalResult> = per_suite.iter().map(|s| s[i].clone()).collect();
            VariantSummary::from_results(&v.name, &results)
        })
        .collect();
    Ok(AblationReport {
        suites: suites.len(),
        variants,
    })
}
