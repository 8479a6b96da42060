use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{generate, CorruptionSpec, Generated, Scenario};
use crate::backend::{BackendKind, FixtureSet};
use crate::error::{Error, Result};
use crate::metadata::{ExpressionRecord, PredictionRecord, NO_OBJECT_META};
use crate::prompt::build_prompt;

/// Parameters for a batch of random scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub seed: u64,
    pub expressions: usize,
    /// Share of scenarios whose target is absent, rounded to a count.
    pub absent_fraction: f64,
    pub frames: usize,
    pub height: u32,
    pub width: u32,
    pub corruption: CorruptionSpec,
}

impl SuiteSpec {
    /// Ten 12-frame 64x64 expressions, three of them absent, under
    /// [`CorruptionSpec::ablation_regime`].
    pub fn ablation(seed: u64) -> Self {
        Self {
            seed,
            expressions: 10,
            absent_fraction: 0.3,
            frames: 12,
            height: 64,
            width: 64,
            corruption: CorruptionSpec::ablation_regime(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub scenario: Scenario,
    pub generated: Generated,
}

impl SuiteCase {
    pub fn video_id(&self) -> String {
        self.scenario.video_id()
    }

    pub fn expression_id(&self) -> String {
        format!("{}/0", self.video_id())
    }

    pub fn audio_id(&self) -> String {
        format!("{}.wav", self.video_id())
    }
}

/// One video and one spoken expression per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub cases: Vec<SuiteCase>,
}

impl Suite {
    pub fn generate(spec: &SuiteSpec) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.absent_fraction) {
            return Err(Error::Config(format!(
                "absent_fraction must be in [0, 1], got {}",
                spec.absent_fraction
            )));
        }
        let absent_count = (spec.absent_fraction * spec.expressions as f64).round() as usize;
        let mut order: Vec<usize> = (0..spec.expressions).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
        let mut present = vec![true; spec.expressions];
        for &i in &order[..absent_count] {
            present[i] = false;
        }
        let scenarios = (0..spec.expressions)
            .map(|i| {
                Scenario::random(
                    spec.seed.wrapping_mul(1000).wrapping_add(i as u64),
                    spec.frames,
                    (spec.height, spec.width),
                    present[i],
                    spec.corruption,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_scenarios(scenarios)
    }

    pub fn from_scenarios(scenarios: Vec<Scenario>) -> Result<Self> {
        let mut ids: Vec<String> = scenarios.iter().map(Scenario::video_id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("two scenarios share video id `{}`", w[0])));
        }
        let cases = scenarios
            .into_par_iter()
            .map(|scenario| {
                let generated = generate(&scenario)?;
                Ok(SuiteCase {
                    scenario,
                    generated,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cases })
    }

    /// Expression metadata as the pipeline sees it: audio only, presence
    /// unknown.
    pub fn records(&self) -> Vec<ExpressionRecord> {
        self.cases
            .iter()
            .map(|c| ExpressionRecord {
                video_id: c.video_id(),
                expression_id: c.expression_id(),
                transcript: None,
                audio_id: Some(c.audio_id()),
                target_exists: None,
                frame_count: c.scenario.frames,
                height: c.scenario.height,
                width: c.scenario.width,
            })
            .collect()
    }

    pub fn ground_truth(&self) -> Vec<PredictionRecord> {
        self.cases
            .iter()
            .map(|c| PredictionRecord {
                video_id: c.video_id(),
                expression_id: c.expression_id(),
                meta_text: if c.scenario.gt_present {
                    String::new()
                } else {
                    NO_OBJECT_META.to_string()
                },
                trajectory: c.generated.gt.clone(),
            })
            .collect()
    }

    /// Scripted backends for the whole suite:
    ///
    /// * ASR returns the noisy transcript for the expression's audio id.
    /// * The judge answers the true presence for (video, transcript).
    /// * The segmenter returns the corrupted trajectory for the prompt built
    ///   from the transcript.
    /// * The refiner, prompted on any non-empty coarse frame, tracks the
    ///   object that frame was drawn from over the whole video at
    ///   confidence 1.
    pub fn fixtures(&self) -> FixtureSet {
        let mut f = FixtureSet::default();
        for c in &self.cases {
            let video_id = c.video_id();
            let g = &c.generated;
            f.push(
                BackendKind::Asr,
                json!({"audio_id": c.audio_id()}),
                json!({"transcript": g.transcript}),
            );
            f.push(
                BackendKind::Judge,
                json!({"video_id": video_id, "phrase": g.transcript}),
                json!({"exists": c.scenario.gt_present}),
            );
            if let Ok(prompt) = build_prompt(&g.transcript) {
                f.push(
                    BackendKind::Segment,
                    json!({"video_id": video_id, "prompt": prompt.text}),
                    json!({"trajectory": g.coarse}),
                );
            }
            for (t, src) in g.sources.iter().enumerate() {
                let Some(src) = src else { continue };
                let frames: Vec<_> = g.objects[*src]
                    .masks()
                    .iter()
                    .enumerate()
                    .map(|(i, m)| json!({"frame_index": i, "mask": m, "confidence": 1.0}))
                    .collect();
                f.push(
                    BackendKind::Refine,
                    json!({"video_id": video_id, "prompt": {"frame_index": t}}),
                    json!({"anchor": t, "frames": frames}),
                );
            }
        }
        f
    }
}
