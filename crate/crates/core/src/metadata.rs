//! Expression metadata in, prediction manifests out.
//!
//! Expression documents follow the meta-expressions layout (videos, then
//! expressions per video); see `docs/schema.md`. Prediction output is a
//! `manifest.json` plus one trajectory document per expression.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskTrajectory;

/// Meta text emitted for an expression whose target was judged absent.
pub const NO_OBJECT_META: &str = "[META:NO_OBJ] target_exists=false";

/// Prefix of the meta text emitted when a stage failed; followed by the
/// stage label.
pub const ERROR_META_PREFIX: &str = "[META:ERROR]";

pub const MANIFEST_FILE: &str = "manifest.json";
const TRAJECTORY_DIR: &str = "trajectories";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub video_id: String,
    pub expression_id: String,
    /// ASR transcript, when already available.
    pub transcript: Option<String>,
    /// Audio reference for the ASR backend when there is no transcript.
    pub audio_id: Option<String>,
    /// `None` when the metadata carries no presence information.
    pub target_exists: Option<bool>,
    pub frame_count: usize,
    pub height: u32,
    pub width: u32,
}

impl ExpressionRecord {
    pub fn presence_known(&self) -> bool {
        self.target_exists.is_some()
    }
}

/// JSON map read as an ordered list of entries so repeated keys survive
/// long enough to be reported.
struct Entries<T>(Vec<(String, T)>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Entries<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for EntriesVisitor<T> {
            type Value = Entries<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor(PhantomData))
    }
}

#[derive(Deserialize)]
struct MetaDoc {
    videos: Entries<VideoDoc>,
}

#[derive(Deserialize)]
struct VideoDoc {
    #[serde(default)]
    frame_count: Option<usize>,
    #[serde(default)]
    frames: Option<Vec<serde_json::Value>>,
    height: u32,
    width: u32,
    expressions: Entries<ExpressionDoc>,
}

#[derive(Deserialize)]
struct ExpressionDoc {
    #[serde(default)]
    exp: Option<String>,
    #[serde(default)]
    audio_id: Option<String>,
    #[serde(default)]
    expression_id: Option<String>,
    #[serde(default)]
    presence_info: Option<PresenceDoc>,
}

#[derive(Deserialize)]
struct PresenceDoc {
    #[serde(default)]
    target_exists: Option<bool>,
}

pub fn parse_expressions(text: &str, origin: &str) -> Result<Vec<ExpressionRecord>> {
    let doc: MetaDoc = crate::json::parse(text, origin)?;
    let mut records = Vec::new();
    let mut seen_videos = HashSet::new();
    for (video_id, video) in doc.videos.0 {
        if !seen_videos.insert(video_id.clone()) {
            return Err(Error::Integrity(format!("video `{video_id}` appears twice")));
        }
        let frame_count = match (video.frame_count, &video.frames) {
            (Some(n), Some(frames)) if n != frames.len() => {
                return Err(Error::Integrity(format!(
                    "video `{video_id}`: frame_count {n} disagrees with {} listed frames",
                    frames.len()
                )))
            }
            (Some(n), _) => n,
            (None, Some(frames)) => frames.len(),
            (None, None) => {
                return Err(Error::Integrity(format!(
                    "video `{video_id}` has neither frame_count nor frames"
                )))
            }
        };
        if frame_count == 0 || video.height == 0 || video.width == 0 {
            return Err(Error::Integrity(format!(
                "video `{video_id}` has an empty frame count or zero-sized frames"
            )));
        }
        for (key, e) in video.expressions.0 {
            let expression_id = e
                .expression_id
                .unwrap_or_else(|| format!("{video_id}/{key}"));
            if e.exp.is_none() && e.audio_id.is_none() {
                return Err(Error::Integrity(format!(
                    "expression `{expression_id}` has neither exp nor audio_id"
                )));
            }
            records.push(ExpressionRecord {
                video_id: video_id.clone(),
                expression_id,
                transcript: e.exp,
                audio_id: e.audio_id,
                target_exists: e.presence_info.and_then(|p| p.target_exists),
                frame_count,
                height: video.height,
                width: video.width,
            });
        }
    }
    check_unique(records.iter().map(|r| r.expression_id.as_str()))?;
    Ok(records)
}

pub fn load_expressions(path: &Path) -> Result<Vec<ExpressionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_expressions(&text, &path.display().to_string())
}

/// Inverse of [`parse_expressions`]; ids are written out explicitly.
pub fn expressions_to_json(records: &[ExpressionRecord]) -> Result<String> {
    #[derive(Serialize)]
    struct Presence {
        target_exists: bool,
    }
    #[derive(Serialize)]
    struct Expr<'a> {
        expression_id: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        exp: Option<&'a str>,
        #[serde(skip_serializing_if = "Option::is_none")]
        audio_id: Option<&'a str>,
        #[serde(skip_serializing_if = "Option::is_none")]
        presence_info: Option<Presence>,
    }
    #[derive(Serialize)]
    struct Video<'a> {
        frame_count: usize,
        height: u32,
        width: u32,
        expressions: BTreeMap<&'a str, Expr<'a>>,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        videos: BTreeMap<&'a str, Video<'a>>,
    }

    check_unique(records.iter().map(|r| r.expression_id.as_str()))?;
    let mut videos: BTreeMap<&str, Video> = BTreeMap::new();
    for r in records {
        let video = videos.entry(&r.video_id).or_insert_with(|| Video {
            frame_count: r.frame_count,
            height: r.height,
            width: r.width,
            expressions: BTreeMap::new(),
        });
        if (video.frame_count, video.height, video.width) != (r.frame_count, r.height, r.width) {
            return Err(Error::Integrity(format!(
                "expressions of video `{}` disagree on frame layout",
                r.video_id
            )));
        }
        video.expressions.insert(
            &r.expression_id,
            Expr {
                expression_id: &r.expression_id,
                exp: r.transcript.as_deref(),
                audio_id: r.audio_id.as_deref(),
                presence_info: r.target_exists.map(|target_exists| Presence { target_exists }),
            },
        );
    }
    Ok(crate::json::to_pretty(&Doc { videos }))
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Integrity(format!("duplicate expression_id `{id}`")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub video_id: String,
    pub expression_id: String,
    pub meta_text: String,
    pub trajectory: MaskTrajectory,
}

impl PredictionRecord {
    pub fn is_no_object(&self) -> bool {
        self.meta_text == NO_OBJECT_META
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub expression_id: String,
    pub meta_text: String,
    /// Trajectory document, relative to the manifest.
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub predictions: Vec<ManifestEntry>,
}

/// File-name-safe, injective encoding of an expression id.
fn file_stem(expression_id: &str) -> String {
    let mut out = String::with_capacity(expression_id.len());
    for b in expression_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// Sorts records by (video_id, expression_id).
pub fn sort_predictions(records: &mut [PredictionRecord]) {
    records.sort_by(|a, b| {
        (a.video_id.as_str(), a.expression_id.as_str())
            .cmp(&(b.video_id.as_str(), b.expression_id.as_str()))
    });
}

pub fn write_predictions(records: &[PredictionRecord], out: &Path) -> Result<Manifest> {
    check_unique(records.iter().map(|r| r.expression_id.as_str()))?;
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.video_id.as_str(), a.expression_id.as_str())
            .cmp(&(b.video_id.as_str(), b.expression_id.as_str()))
    });

    let traj_dir = out.join(TRAJECTORY_DIR);
    fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
    let mut manifest = Manifest::default();
    for r in sorted {
        let rel = format!("{TRAJECTORY_DIR}/{}.json", file_stem(&r.expression_id));
        r.trajectory.save(&out.join(&rel))?;
        manifest.predictions.push(ManifestEntry {
            video_id: r.video_id.clone(),
            expression_id: r.expression_id.clone(),
            meta_text: r.meta_text.clone(),
            trajectory: rel,
        });
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, crate::json::to_pretty(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Accepts either the manifest file or the directory holding it.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let path = manifest_path(path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = crate::json::parse(&text, &path.display().to_string())?;
    check_unique(manifest.predictions.iter().map(|e| e.expression_id.as_str()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest
        .predictions
        .into_iter()
        .map(|e| {
            Ok(PredictionRecord {
                trajectory: MaskTrajectory::load(&base.join(&e.trajectory))?,
                video_id: e.video_id,
                expression_id: e.expression_id,
                meta_text: e.meta_text,
            })
        })
        .collect()
}
