//! Runs the staged pipeline for each expression:
//!
//! ```text
//! transcript -> existence gate -> prompt -> coarse segmentation
//!            -> reliability assessment -> optional refinement -> fusion
//! ```
//!
//! A target judged absent short-circuits to an all-zero trajectory with
//! [`NO_OBJECT_META`] and no segmentation or refinement calls. A backend
//! failure also yields an all-zero trajectory, tagged
//! `[META:ERROR] <stage>`, so a run always produces a complete submission.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agentic::{self, AgenticConfig, RefinePolicy, RefinementPlanner, ReliabilityReport};
use crate::backend::{Backends, Endpoints, VideoRef, DEFAULT_JUDGE_SAMPLES};
use crate::error::{Error, Result};
use crate::mask::MaskTrajectory;
use crate::metadata::{ExpressionRecord, PredictionRecord, ERROR_META_PREFIX, NO_OBJECT_META};
use crate::prompt::QuestionHeuristic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    /// Use `presence_info.target_exists` when the metadata has it, and ask
    /// the judge otherwise.
    #[default]
    MetadataFirst,
    /// Ask the judge for every expression.
    AlwaysJudge,
    /// Skip the existence gate; every expression is segmented.
    Off,
}

impl std::str::FromStr for GatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metadata_first" => Ok(GatePolicy::MetadataFirst),
            "always_judge" => Ok(GatePolicy::AlwaysJudge),
            "off" => Ok(GatePolicy::Off),
            other => Err(Error::Usage(format!(
                "unknown gate policy `{other}` (expected metadata_first, always_judge or off)"
            ))),
        }
    }
}

fn default_parallelism() -> usize {
    1
}

fn default_judge_samples() -> usize {
    DEFAULT_JUDGE_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub endpoints: Endpoints,
    #[serde(default)]
    pub gate_policy: GatePolicy,
    #[serde(default)]
    pub refine_policy: RefinePolicy,
    /// Maximum number of expressions in flight.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Frames sampled uniformly for the existence judge.
    #[serde(default = "default_judge_samples")]
    pub judge_samples: usize,
    #[serde(default)]
    pub agentic: AgenticConfig,
    #[serde(default)]
    pub prompt: QuestionHeuristic,
}

impl PipelineConfig {
    pub fn new(endpoints: Endpoints) -> Self {
        Self {
            endpoints,
            gate_policy: GatePolicy::default(),
            refine_policy: RefinePolicy::default(),
            parallelism: default_parallelism(),
            judge_samples: default_judge_samples(),
            agentic: AgenticConfig::default(),
            prompt: QuestionHeuristic::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes to TOML")
    }

    pub fn check(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.judge_samples == 0 {
            return Err(Error::Config("judge_samples must be at least 1".into()));
        }
        let a = &self.agentic;
        for (name, v) in [
            ("coverage_min", a.coverage_min),
            ("smoothness_min", a.smoothness_min),
            ("solidity_min", a.solidity_min),
            ("confidence_min", a.confidence_min),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("agentic.{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Transcript,
    Gate,
    Prompt,
    Segment,
    Assess,
    Refine,
    Fuse,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Transcript => "transcript",
            Stage::Gate => "gate",
            Stage::Prompt => "prompt",
            Stage::Segment => "segment",
            Stage::Assess => "assess",
            Stage::Refine => "refine",
            Stage::Fuse => "fuse",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub duration_us: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSource {
    Metadata,
    Judge,
    EmptyTranscript,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub exists: bool,
    pub source: GateSource,
}

/// What happened to one expression, stage by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub expression_id: String,
    pub stages: Vec<StageRecord>,
    pub gate: Option<GateDecision>,
    pub report: Option<ReliabilityReport>,
    pub anchor: Option<usize>,
    pub refine_invoked: bool,
    pub failed_stage: Option<Stage>,
}

impl StageTrace {
    fn new(expression_id: &str) -> Self {
        Self {
            expression_id: expression_id.to_string(),
            stages: Vec::new(),
            gate: None,
            report: None,
            anchor: None,
            refine_invoked: false,
            failed_stage: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.failed_stage.is_some()
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.stages.iter().any(|s| s.stage == stage)
    }

    fn push(&mut self, stage: Stage, status: StageStatus, started: Instant, detail: impl Into<String>) {
        self.stages.push(StageRecord {
            stage,
            status,
            duration_us: started.elapsed().as_micros() as u64,
            detail: detail.into(),
        });
    }
}

/// Outcome of a dataset run, sorted by (video_id, expression_id).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub predictions: Vec<PredictionRecord>,
    pub traces: Vec<StageTrace>,
}

impl RunOutput {
    pub fn failures(&self) -> usize {
        self.traces.iter().filter(|t| t.failed()).count()
    }
}

struct Failure {
    stage: Stage,
    error: Error,
}

fn at(stage: Stage) -> impl Fn(Error) -> Failure {
    move |error| Failure { stage, error }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    backends: Backends,
    planner: Arc<dyn RefinementPlanner>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, backends: Backends) -> Self {
        let planner = Arc::new(cfg.refine_policy);
        Self {
            cfg,
            backends,
            planner,
        }
    }

    /// Connects to the configured endpoints; relative fixture paths are
    /// resolved against `base_dir`.
    pub fn connect(cfg: PipelineConfig, base_dir: &Path) -> Result<Self> {
        cfg.check()?;
        let backends = cfg.endpoints.connect(base_dir, cfg.judge_samples)?;
        Ok(Self::new(cfg, backends))
    }

    /// Replaces the refinement planner derived from `refine_policy`.
    pub fn with_planner(mut self, planner: Arc<dyn RefinementPlanner>) -> Self {
        self.planner = planner;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run_expression(&self, rec: &ExpressionRecord) -> (PredictionRecord, StageTrace) {
        let mut trace = StageTrace::new(&rec.expression_id);
        let outcome = self.execute(rec, &mut trace);
        let (meta_text, trajectory) = match outcome {
            Ok(Some(traj)) => (String::new(), traj),
            Ok(None) => (NO_OBJECT_META.to_string(), zeros_for(rec)),
            Err(Failure { stage, error }) => {
                tracing::warn!(expression = %rec.expression_id, %stage, %error, "stage failed");
                trace.failed_stage = Some(stage);
                if let Some(last) = trace.stages.last_mut().filter(|s| s.stage == stage) {
                    last.status = StageStatus::Failed;
                    last.detail = error.to_string();
                } else {
                    trace.stages.push(StageRecord {
                        stage,
                        status: StageStatus::Failed,
                        duration_us: 0,
                        detail: error.to_string(),
                    });
                }
                (format!("{ERROR_META_PREFIX} {stage}"), zeros_for(rec))
            }
        };
        if let Ok(json) = serde_json::to_string(&trace) {
            tracing::info!(target: "refvos::trace", expression = %rec.expression_id, trace = %json);
        }
        let prediction = PredictionRecord {
            video_id: rec.video_id.clone(),
            expression_id: rec.expression_id.clone(),
            meta_text,
            trajectory,
        };
        (prediction, trace)
    }

    /// Runs only the transcript and existence-gate stages. The decision is
    /// in `trace.gate`; a backend failure sets `trace.failed_stage`.
    pub fn gate_expression(&self, rec: &ExpressionRecord) -> StageTrace {
        let mut trace = StageTrace::new(&rec.expression_id);
        if let Err(Failure { stage, error }) = self.front(rec, &mut trace) {
            trace.failed_stage = Some(stage);
            trace.stages.push(StageRecord {
                stage,
                status: StageStatus::Failed,
                duration_us: 0,
                detail: error.to_string(),
            });
        }
        trace
    }

    /// Transcript and gate. `Ok(None)` means the target was gated off.
    fn front(
        &self,
        rec: &ExpressionRecord,
        trace: &mut StageTrace,
    ) -> std::result::Result<Option<(VideoRef, String)>, Failure> {
        let video = VideoRef {
            video_id: rec.video_id.clone(),
            frame_count: rec.frame_count,
            height: rec.height,
            width: rec.width,
        };
        let metadata_gate = self.cfg.gate_policy == GatePolicy::MetadataFirst;

        if metadata_gate && rec.target_exists == Some(false) {
            let t = Instant::now();
            trace.gate = Some(GateDecision {
                exists: false,
                source: GateSource::Metadata,
            });
            trace.push(Stage::Gate, StageStatus::Ok, t, "metadata: target absent");
            return Ok(None);
        }

        let t = Instant::now();
        let transcript = match rec.transcript.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            Some(text) => {
                trace.push(Stage::Transcript, StageStatus::Ok, t, "metadata");
                Some(text.to_string())
            }
            None => match &rec.audio_id {
                Some(audio) => {
                    let text = self.backends.asr.transcribe(audio).map_err(at(Stage::Transcript))?;
                    trace.push(Stage::Transcript, StageStatus::Ok, t, format!("asr: {audio}"));
                    text
                }
                None => {
                    trace.push(Stage::Transcript, StageStatus::Ok, t, "no transcript or audio");
                    None
                }
            },
        };

        let t = Instant::now();
        let Some(transcript) = transcript else {
            trace.gate = Some(GateDecision {
                exists: false,
                source: GateSource::EmptyTranscript,
            });
            trace.push(Stage::Gate, StageStatus::Ok, t, "empty transcript: not groundable");
            return Ok(None);
        };
        let decision = match (self.cfg.gate_policy, rec.target_exists) {
            (GatePolicy::Off, _) => GateDecision {
                exists: true,
                source: GateSource::Disabled,
            },
            (GatePolicy::MetadataFirst, Some(exists)) => GateDecision {
                exists,
                source: GateSource::Metadata,
            },
            _ => {
                let verdict = self
                    .backends
                    .judge
                    .judge(&video, &transcript)
                    .map_err(at(Stage::Gate))?;
                GateDecision {
                    exists: verdict.exists,
                    source: GateSource::Judge,
                }
            }
        };
        trace.gate = Some(decision);
        trace.push(
            Stage::Gate,
            StageStatus::Ok,
            t,
            format!("{:?}: exists={}", decision.source, decision.exists).to_lowercase(),
        );
        Ok(decision.exists.then_some((video, transcript)))
    }

    /// `Ok(None)` means the target was gated off.
    fn execute(
        &self,
        rec: &ExpressionRecord,
        trace: &mut StageTrace,
    ) -> std::result::Result<Option<MaskTrajectory>, Failure> {
        let Some((video, transcript)) = self.front(rec, trace)? else {
            return Ok(None);
        };

        let t = Instant::now();
        let prompt = self.cfg.prompt.build_prompt(&transcript).map_err(at(Stage::Prompt))?;
        trace.push(Stage::Prompt, StageStatus::Ok, t, format!("template {}", prompt.template_id as u8));

        let t = Instant::now();
        let coarse = self
            .backends
            .segment
            .segment_video(&video, &prompt)
            .map_err(at(Stage::Segment))?;
        trace.push(Stage::Segment, StageStatus::Ok, t, format!("{} frames", coarse.frame_count()));

        let t = Instant::now();
        let report = agentic::assess(&coarse, &self.cfg.agentic);
        let plan = self.planner.plan(&coarse, &report);
        trace.push(
            Stage::Assess,
            StageStatus::Ok,
            t,
            format!(
                "coverage={:.3} smoothness={:.3} fragmentation={:.3} solidity={:.3}",
                report.coverage, report.area_smoothness, report.fragmentation, report.solidity
            ),
        );
        trace.report = Some(report);

        let t = Instant::now();
        let Some(anchor) = plan else {
            trace.push(Stage::Refine, StageStatus::Skipped, t, "coarse trajectory kept");
            return Ok(Some(coarse));
        };
        trace.anchor = Some(anchor);
        let geometric = agentic::derive_prompt(&coarse, anchor).map_err(at(Stage::Refine))?;
        trace.refine_invoked = true;
        let refined = self
            .backends
            .refine
            .refine(&video, &geometric)
            .map_err(at(Stage::Refine))?;
        trace.push(
            Stage::Refine,
            StageStatus::Ok,
            t,
            format!("anchor {anchor}, {} refined frames", refined.frames.len()),
        );

        let t = Instant::now();
        let fused = agentic::fuse(&coarse, &refined, self.cfg.agentic.confidence_min)
            .map_err(at(Stage::Fuse))?;
        trace.push(Stage::Fuse, StageStatus::Ok, t, "");
        Ok(Some(fused))
    }

    /// Runs every expression independently with at most `parallelism`
    /// expressions in flight. The result does not depend on parallelism.
    pub fn run_dataset(&self, records: &[ExpressionRecord]) -> Result<RunOutput> {
        let mut results: Vec<(PredictionRecord, StageTrace)> = if self.cfg.parallelism <= 1 {
            records.iter().map(|r| self.run_expression(r)).collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.cfg.parallelism)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
                .install(|| records.par_iter().map(|r| self.run_expression(r)).collect())
        };
        results.sort_by(|(a, _), (b, _)| {
            (a.video_id.as_str(), a.expression_id.as_str())
                .cmp(&(b.video_id.as_str(), b.expression_id.as_str()))
        });
        let (predictions, traces) = results.into_iter().unzip();
        Ok(RunOutput {
            predictions,
            traces,
        })
    }
}

fn zeros_for(rec: &ExpressionRecord) -> MaskTrajectory {
    MaskTrajectory::zeros(rec.frame_count.max(1), rec.height.max(1), rec.width.max(1))
        .expect("positive dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendEndpoint, BackendKind, CountingTransport, FixtureSet, ScriptedTransport};
    use crate::mask::BinaryMask;
    use crate::prompt::build_prompt;
    use serde_json::json;

    const FRAMES: usize = 4;

    fn record(id: &str, transcript: Option<&str>, exists: Option<bool>) -> ExpressionRecord {
        ExpressionRecord {
            video_id: "v1".into(),
            expression_id: id.into(),
            transcript: transcript.map(String::from),
            audio_id: Some(format!("{id}.wav")),
            target_exists: exists,
            frame_count: FRAMES,
            height: 8,
            width: 8,
        }
    }

    fn blob(side: u32) -> BinaryMask {
        BinaryMask::from_fn(8, 8, |r, c| r < side && c < side).unwrap()
    }

    fn solid_trajectory() -> MaskTrajectory {
        MaskTrajectory::new(vec![blob(4); FRAMES]).unwrap()
    }

    fn fixtures() -> FixtureSet {
        let mut f = FixtureSet::default();
        f.push(BackendKind::Asr, json!({"audio_id": "heard.wav"}), json!({"transcript": "the cat"}));
        f.push(BackendKind::Asr, json!({"audio_id": "silent.wav"}), json!({"transcript": ""}));
        f.push(BackendKind::Judge, json!({"phrase": "the ghost"}), json!({"exists": false}));
        f.push(BackendKind::Judge, json!({}), json!({"exists": true}));
        f.push(
            BackendKind::Segment,
            json!({"prompt": build_prompt("the jumpy dog").unwrap().text}),
            json!({"trajectory": MaskTrajectory::new(vec![blob(6), blob(1), blob(6), blob(1)]).unwrap()}),
        );
        f.push(BackendKind::Segment, json!({}), json!({"trajectory": solid_trajectory()}));
        f.push(
            BackendKind::Refine,
            json!({"video_id": "v1"}),
            json!({"anchor": 0, "frames": [
                {"frame_index": 0, "mask": blob(5), "confidence": 1.0},
                {"frame_index": 1, "mask": blob(5), "confidence": 1.0},
                {"frame_index": 2, "mask": blob(5), "confidence": 0.1}
            ]}),
        );
        f
    }

    fn pipeline(policy: GatePolicy) -> (Pipeline, Arc<CountingTransport<ScriptedTransport>>) {
        let counting = Arc::new(CountingTransport::new(ScriptedTransport::new(fixtures())));
        let mut cfg = PipelineConfig::new(Endpoints::uniform(BackendEndpoint::scripted("unused")));
        cfg.gate_policy = policy;
        let p = Pipeline::new(cfg, Backends::shared(counting.clone(), 8));
        (p, counting)
    }

    #[test]
    fn metadata_absent_short_circuits() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let (pred, trace) = p.run_expression(&record("e", Some("the cat"), Some(false)));
        assert_eq!(pred.meta_text, "[META:NO_OBJ] target_exists=false");
        assert!(pred.trajectory.is_all_empty());
        assert_eq!(pred.trajectory.frame_count(), FRAMES);
        assert!(!trace.has_stage(Stage::Segment) && !trace.has_stage(Stage::Refine));
        assert!(calls.counts().values().all(|&n| n == 0));
    }

    #[test]
    fn clean_path_keeps_coarse() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let (pred, trace) = p.run_expression(&record("e", Some("the cat"), Some(true)));
        assert_eq!(pred.meta_text, "");
        assert_eq!(pred.trajectory, solid_trajectory());
        assert!(!trace.refine_invoked);
        assert_eq!(calls.count(BackendKind::Judge), 0);
        assert_eq!(calls.count(BackendKind::Refine), 0);
        let order: Vec<Stage> = trace.stages.iter().map(|s| s.stage).collect();
        assert_eq!(
            order,
            [Stage::Transcript, Stage::Gate, Stage::Prompt, Stage::Segment, Stage::Assess, Stage::Refine]
        );
    }

    #[test]
    fn unknown_presence_consults_judge() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let (pred, trace) = p.run_expression(&record("e", Some("the ghost"), None));
        assert!(pred.is_no_object());
        assert_eq!(trace.gate.unwrap().source, GateSource::Judge);
        assert_eq!(calls.count(BackendKind::Judge), 1);
        assert_eq!(calls.count(BackendKind::Segment), 0);
    }

    #[test]
    fn always_judge_overrides_metadata() {
        let (p, _) = pipeline(GatePolicy::AlwaysJudge);
        let (pred, _) = p.run_expression(&record("e", Some("the ghost"), Some(true)));
        assert!(pred.is_no_object());
    }

    #[test]
    fn gate_off_segments_everything() {
        let (p, calls) = pipeline(GatePolicy::Off);
        let (pred, _) = p.run_expression(&record("e", Some("the ghost"), None));
        assert!(!pred.is_no_object());
        assert_eq!(calls.count(BackendKind::Judge), 0);
        assert_eq!(calls.count(BackendKind::Segment), 1);
    }

    #[test]
    fn asr_transcript_and_empty_transcript() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let (pred, _) = p.run_expression(&record("heard", None, None));
        assert_eq!(pred.trajectory, solid_trajectory());
        assert_eq!(calls.count(BackendKind::Asr), 1);
        let (pred, trace) = p.run_expression(&record("silent", None, Some(true)));
        assert!(pred.is_no_object());
        assert_eq!(trace.gate.unwrap().source, GateSource::EmptyTranscript);
    }

    #[test]
    fn unreliable_trajectory_is_refined_and_fused() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let (pred, trace) = p.run_expression(&record("e", Some("the jumpy dog"), Some(true)));
        assert!(trace.refine_invoked);
        assert_eq!(trace.anchor, Some(0));
        assert_eq!(calls.count(BackendKind::Refine), 1);
        // frames 0,1 refined; frame 2 below confidence; frame 3 not covered
        let expected = vec![blob(5), blob(5), blob(6), blob(1)];
        assert_eq!(pred.trajectory.masks(), expected.as_slice());
        assert!(trace.has_stage(Stage::Fuse));
    }

    #[test]
    fn backend_failure_is_fail_safe() {
        let (p, _) = pipeline(GatePolicy::MetadataFirst);
        let (pred, trace) = p.run_expression(&record("missing", None, None));
        assert_eq!(pred.meta_text, "[META:ERROR] transcript");
        assert!(pred.trajectory.is_all_empty());
        assert_eq!(trace.failed_stage, Some(Stage::Transcript));
        assert_eq!(trace.stages.last().unwrap().status, StageStatus::Failed);
    }

    #[test]
    fn dataset_order_is_independent_of_parallelism() {
        let records: Vec<_> = (0..12)
            .rev()
            .map(|i| {
                let exists = [Some(true), Some(false), None][i % 3];
                record(&format!("e{i:02}"), Some(if i % 2 == 0 { "the cat" } else { "the jumpy dog" }), exists)
            })
            .collect();
        let (mut p, _) = pipeline(GatePolicy::MetadataFirst);
        let one = p.run_dataset(&records).unwrap();
        p.cfg.parallelism = 8;
        let eight = p.run_dataset(&records).unwrap();
        assert_eq!(one.predictions, eight.predictions);
        let ids: Vec<_> = one.predictions.iter().map(|r| r.expression_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(one.failures(), 0);
    }

    #[test]
    fn gate_only() {
        let (p, calls) = pipeline(GatePolicy::MetadataFirst);
        let trace = p.gate_expression(&record("e", Some("the ghost"), None));
        assert_eq!(
            trace.gate,
            Some(GateDecision {
                exists: false,
                source: GateSource::Judge
            })
        );
        let trace = p.gate_expression(&record("missing", None, None));
        assert_eq!(trace.failed_stage, Some(Stage::Transcript));
        let trace = p.gate_expression(&record("e", Some("the cat"), None));
        assert!(trace.gate.unwrap().exists);
        assert_eq!(calls.count(BackendKind::Segment), 0);
    }

    #[test]
    fn empty_dataset() {
        let (p, _) = pipeline(GatePolicy::MetadataFirst);
        let out = p.run_dataset(&[]).unwrap();
        assert!(out.predictions.is_empty() && out.traces.is_empty());
    }

    #[test]
    fn config_toml() {
        let text = r#"
            gate_policy = "always_judge"
            parallelism = 4

            [endpoints.asr]
            transport = "scripted"
            address = "fixtures.json"
            [endpoints.judge]
            transport = "http"
            address = "http://127.0.0.1:9000"
            timeout_secs = 5
            [endpoints.segment]
            transport = "scripted"
            address = "fixtures.json"
            [endpoints.refine]
            transport = "scripted"
            address = "fixtures.json"

            [agentic]
            smoothness_min = 0.8
        "#;
        let cfg = PipelineConfig::from_toml(text, "cfg").unwrap();
        assert_eq!(cfg.gate_policy, GatePolicy::AlwaysJudge);
        assert_eq!(cfg.parallelism, 4);
        assert_eq!(cfg.agentic.smoothness_min, 0.8);
        assert_eq!(cfg.agentic.fragmentation_max, 1.5);
        assert_eq!(cfg.judge_samples, 8);
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml(), "again").unwrap(), cfg);

        let missing = "gate_policy = \"off\"";
        assert!(matches!(PipelineConfig::from_toml(missing, "cfg"), Err(Error::Config(_))));
        let zero = text.replace("parallelism = 4", "parallelism = 0");
        assert!(matches!(PipelineConfig::from_toml(&zero, "cfg"), Err(Error::Config(_))));
    }
}
