//! Synthetic videos of moving discs and rectangles with exact ground truth,
//! plus corruption models that stand in for imperfect backends.
//!
//! Everything is a pure function of the scenario seed. [`Suite`] turns a
//! batch of scenarios into expression metadata, ground truth and scripted
//! backend fixtures; [`run_ablation`] runs pipeline variants over suites.

mod ablation;
mod suite;

pub use ablation::{run_ablation, AblationReport, AblationVariant, Variant, VariantSummary};
pub use suite::{Suite, SuiteCase, SuiteSpec};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, MaskTrajectory};

/// Smallest frame side a random scenario is drawn for.
pub const MIN_RANDOM_SIDE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Rect { half_height: f64, half_width: f64 },
}

impl Shape {
    /// Signed distance from a point at offset (`dr`, `dc`) from the shape
    /// center; negative inside.
    pub fn sdf(&self, dr: f64, dc: f64) -> f64 {
        match *self {
            Shape::Disc { radius } => dr.hypot(dc) - radius,
            Shape::Rect {
                half_height,
                half_width,
            } => {
                let qr = dr.abs() - half_height;
                let qc = dc.abs() - half_width;
                qr.max(0.0).hypot(qc.max(0.0)) + qr.max(qc).min(0.0)
            }
        }
    }

    /// Half extents along rows and columns.
    pub fn extent(&self) -> (f64, f64) {
        match *self {
            Shape::Disc { radius } => (radius, radius),
            Shape::Rect {
                half_height,
                half_width,
            } => (half_height, half_width),
        }
    }
}

/// A shape translating at constant velocity from `start` to `end`, both
/// given as (row, col) centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub shape: Shape,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl Track {
    pub fn center(&self, frame: usize, frames: usize) -> (f64, f64) {
        let s = if frames > 1 {
            frame as f64 / (frames - 1) as f64
        } else {
            0.0
        };
        (
            self.start.0 + (self.end.0 - self.start.0) * s,
            self.start.1 + (self.end.1 - self.start.1) * s,
        )
    }

    pub fn sdf(&self, frame: usize, frames: usize, row: u32, col: u32) -> f64 {
        let (cr, cc) = self.center(frame, frames);
        self.shape.sdf(row as f64 - cr, col as f64 - cc)
    }

    pub fn rasterize(&self, frame: usize, frames: usize, height: u32, width: u32) -> BinaryMask {
        BinaryMask::from_fn(height, width, |r, c| self.sdf(frame, frames, r, c) <= 0.0)
            .expect("positive dimensions")
    }

    pub fn trajectory(&self, frames: usize, height: u32, width: u32) -> MaskTrajectory {
        MaskTrajectory::new((0..frames).map(|t| self.rasterize(t, frames, height, width)).collect())
            .expect("at least one frame")
    }

    fn fits(&self, height: u32, width: u32) -> bool {
        let (er, ec) = self.shape.extent();
        [self.start, self.end].iter().all(|&(r, c)| {
            er > 0.0
                && ec > 0.0
                && r - er >= 0.0
                && c - ec >= 0.0
                && r + er <= (height - 1) as f64
                && c + ec <= (width - 1) as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    /// Half-width in pixels of the band around the true boundary whose
    /// pixels are redrawn at random.
    pub boundary_jitter: f64,
    /// Probability that a frame is emptied.
    pub dropout_rate: f64,
    /// Probability that a frame segments a distractor instead.
    pub distractor_swap_rate: f64,
    /// Probability that each transcript word is misrecognized.
    pub asr_word_sub_rate: f64,
    /// Probability that a segmenter asked about an absent target returns a
    /// distractor's track instead of empty masks.
    pub absent_hallucination_rate: f64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// The noisy regime used for variant comparisons.
    pub fn ablation_regime() -> Self {
        Self {
            boundary_jitter: 2.0,
            dropout_rate: 0.05,
            distractor_swap_rate: 0.15,
            asr_word_sub_rate: 0.2,
            absent_hallucination_rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_jitter.is_finite() && self.boundary_jitter >= 0.0) {
            return Err(Error::Config(format!(
                "boundary_jitter must be a non-negative number, got {}",
                self.boundary_jitter
            )));
        }
        for (name, v) in [
            ("dropout_rate", self.dropout_rate),
            ("distractor_swap_rate", self.distractor_swap_rate),
            ("asr_word_sub_rate", self.asr_word_sub_rate),
            ("absent_hallucination_rate", self.absent_hallucination_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub frames: usize,
    pub height: u32,
    pub width: u32,
    pub object: Track,
    pub distractors: Vec<Track>,
    pub gt_present: bool,
    /// Clean referring phrase for `object`.
    pub phrase: String,
    #[serde(default)]
    pub corruption: CorruptionSpec,
}

const COLORS: &[&str] = &["red", "blue", "green", "white", "black", "brown", "yellow"];
const NOUNS: &[&str] = &["cat", "dog", "ball", "car", "bird", "box", "horse", "sheep"];
/// Words a noisy recognizer may hear instead.
const CONFUSIONS: &[&str] = &[
    "the", "a", "hat", "cap", "bat", "log", "bowl", "cart", "red", "bed", "dock", "fox", "right",
    "light", "lift", "up", "cup", "down", "town", "moving", "boxing",
];

fn direction(track: &Track) -> &'static str {
    let dr = track.end.0 - track.start.0;
    let dc = track.end.1 - track.start.1;
    if dc.abs() >= dr.abs() {
        if dc >= 0.0 {
            "right"
        } else {
            "left"
        }
    } else if dr >= 0.0 {
        "down"
    } else {
        "up"
    }
}

fn random_track(rng: &mut ChaCha8Rng, height: u32, width: u32) -> Track {
    let side = height.min(width) as f64;
    let shape = if rng.gen_bool(0.5) {
        Shape::Disc {
            radius: rng.gen_range(0.10 * side..0.18 * side),
        }
    } else {
        Shape::Rect {
            half_height: rng.gen_range(0.08 * side..0.18 * side),
            half_width: rng.gen_range(0.08 * side..0.18 * side),
        }
    };
    let (er, ec) = shape.extent();
    let mut point = || {
        (
            rng.gen_range(er.ceil()..=((height - 1) as f64 - er).floor()),
            rng.gen_range(ec.ceil()..=((width - 1) as f64 - ec).floor()),
        )
    };
    let start = point();
    let end = point();
    Track { shape, start, end }
}

impl Scenario {
    /// Draws shapes, paths, one or two distractors and a phrase from `seed`.
    pub fn random(
        seed: u64,
        frames: usize,
        dims: (u32, u32),
        gt_present: bool,
        corruption: CorruptionSpec,
    ) -> Result<Self> {
        let (height, width) = dims;
        if height.min(width) < MIN_RANDOM_SIDE {
            return Err(Error::Config(format!(
                "frames of {height}x{width} are too small for random shapes (need at least {MIN_RANDOM_SIDE} per side)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let object = random_track(&mut rng, height, width);
        let n_distractors = rng.gen_range(1..=2);
        let distractors = (0..n_distractors)
            .map(|_| random_track(&mut rng, height, width))
            .collect();
        let color = COLORS.choose(&mut rng).expect("non-empty");
        let noun = NOUNS.choose(&mut rng).expect("non-empty");
        let dir = direction(&object);
        let phrase = if rng.gen_bool(0.25) {
            format!("which {color} {noun} is moving {dir}?")
        } else {
            format!("the {color} {noun} moving {dir}")
        };
        let scenario = Self {
            seed,
            frames,
            height,
            width,
            object,
            distractors,
            gt_present,
            phrase,
            corruption,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn video_id(&self) -> String {
        format!("syn{:04}", self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.corruption.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("a scenario needs at least one frame".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("frame dimensions must be positive".into()));
        }
        if self.phrase.trim().is_empty() {
            return Err(Error::Config("scenario phrase is empty".into()));
        }
        if !self.gt_present && self.distractors.is_empty() && self.corruption.absent_hallucination_rate > 0.0 {
            return Err(Error::Config(
                "hallucinating an absent target needs at least one distractor".into(),
            ));
        }
        for (i, track) in std::iter::once(&self.object).chain(&self.distractors).enumerate() {
            if !track.fits(self.height, self.width) {
                return Err(Error::Config(format!(
                    "shape {i} does not fit inside {}x{} frames along its path",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }

    /// Every scene object: the referred object first, then distractors.
    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        std::iter::once(&self.object).chain(&self.distractors)
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub gt: MaskTrajectory,
    /// What a noisy segmenter returns for the scenario.
    pub coarse: MaskTrajectory,
    /// The phrase as a noisy recognizer transcribed it.
    pub transcript: String,
    /// Clean rasterization of each scene object, indexed like
    /// [`Scenario::tracks`].
    pub objects: Vec<MaskTrajectory>,
    /// Which object each coarse frame was drawn from; `None` for empty
    /// frames.
    pub sources: Vec<Option<usize>>,
}

fn jittered(track: &Track, frame: usize, s: &Scenario, rng: &mut ChaCha8Rng) -> BinaryMask {
    let jitter = s.corruption.boundary_jitter;
    if jitter == 0.0 {
        return track.rasterize(frame, s.frames, s.height, s.width);
    }
    BinaryMask::from_fn(s.height, s.width, |r, c| {
        let d = track.sdf(frame, s.frames, r, c);
        if d.abs() <= jitter {
            rng.gen_bool(0.5)
        } else {
            d < 0.0
        }
    })
    .expect("positive dimensions")
}

fn noisy_transcript(phrase: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<String> = phrase
        .split_whitespace()
        .map(|word| {
            let core = word.trim_end_matches('?');
            let tail = &word[core.len()..];
            if rng.gen::<f64>() < rate {
                let choices: Vec<&&str> = CONFUSIONS.iter().filter(|w| **w != core).collect();
                format!("{}{tail}", choices.choose(rng).expect("non-empty"))
            } else {
                word.to_string()
            }
        })
        .collect();
    words.join(" ")
}

/// Rasterizes the scenario and applies its corruption. Pure in the
/// scenario.
pub fn generate(s: &Scenario) -> Result<Generated> {
    s.validate()?;
    let c = &s.corruption;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x9e37_79b9_7f4a_7c15);
    let tracks: Vec<&Track> = s.tracks().collect();
    let objects: Vec<MaskTrajectory> = tracks
        .iter()
        .map(|t| t.trajectory(s.frames, s.height, s.width))
        .collect();
    let gt = if s.gt_present {
        objects[0].clone()
    } else {
        MaskTrajectory::zeros(s.frames, s.height, s.width)?
    };

    let hallucinate = rng.gen::<f64>() < c.absent_hallucination_rate;
    let base = match (s.gt_present, hallucinate) {
        (true, _) => Some(0),
        (false, true) if tracks.len() > 1 => Some(1),
        _ => None,
    };
    let mut masks = Vec::with_capacity(s.frames);
    let mut sources = Vec::with_capacity(s.frames);
    for t in 0..s.frames {
        let swap = rng.gen::<f64>() < c.distractor_swap_rate;
        let pick: f64 = rng.gen();
        let drop = rng.gen::<f64>() < c.dropout_rate;
        let mut src = base;
        if swap {
            let others: Vec<usize> = (1..tracks.len()).filter(|&i| Some(i) != base).collect();
            if let (Some(_), false) = (src, others.is_empty()) {
                src = Some(others[(pick * others.len() as f64) as usize]);
            }
        }
        if drop {
            src = None;
        }
        let mask = match src {
            Some(i) => jittered(tracks[i], t, s, &mut rng),
            None => BinaryMask::zeros(s.height, s.width)?,
        };
        sources.push(src.filter(|_| !mask.is_empty()));
        masks.push(mask);
    }
    let transcript = noisy_transcript(&s.phrase, c.asr_word_sub_rate, &mut rng);
    Ok(Generated {
        gt,
        coarse: MaskTrajectory::new(masks)?,
        transcript,
        objects,
        sources,
    })
}
