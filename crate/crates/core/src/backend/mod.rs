//! Typed clients for the four model backends (speech recognition,
//! existence judge, coarse video segmenter, promptable refiner).
//!
//! Every client speaks one request/response document pair per endpoint
//! over a [`Transport`]: HTTP for real model servers, or a
//! [`ScriptedTransport`] answering from fixture files. Responses are
//! validated before they are returned, so malformed backend output never
//! reaches the pipeline. A transport failure is retried exactly once;
//! protocol violations are not retried.

mod transport;
mod wire;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use transport::{
    canonicalize, request_matches, CountingTransport, FixtureEntry, FixtureSet, HttpTransport,
    ScriptedTransport, Transport, TransportError,
};
pub use wire::{
    AsrRequest, AsrResponse, JudgeRequest, JudgeResponse, JudgeVerdict, RefineRequest,
    RefineResponse, RefineResult, RefinedFrameDoc, RefinedMask, SegmentRequest, SegmentResponse,
    VideoRef,
};

use crate::error::{Error, Result};
use crate::mask::{GeometricPrompt, MaskTrajectory};
use crate::prompt::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Asr = 0,
    Judge = 1,
    Segment = 2,
    Refine = 3,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] = [
        BackendKind::Asr,
        BackendKind::Judge,
        BackendKind::Segment,
        BackendKind::Refine,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Asr => "asr",
            BackendKind::Judge => "judge",
            BackendKind::Segment => "segment",
            BackendKind::Refine => "refine",
        }
    }

    pub fn path(self) -> &'static str {
        match self {
            BackendKind::Asr => "/asr",
            BackendKind::Judge => "/judge",
            BackendKind::Segment => "/segment",
            BackendKind::Refine => "/refine",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Http,
    Scripted,
}

/// Where one backend lives. For scripted transport `address` is a fixture
/// file, resolved against the config file's directory when relative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub transport: TransportKind,
    pub address: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    60.0
}

impl BackendEndpoint {
    pub fn http(address: impl Into<String>) -> Self {
        Self {
            transport: TransportKind::Http,
            address: address.into(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn scripted(path: impl Into<String>) -> Self {
        Self {
            transport: TransportKind::Scripted,
            address: path.into(),
            timeout_secs: default_timeout(),
        }
    }

    fn fixture_path(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.address);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }
}

/// One endpoint per backend kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub asr: BackendEndpoint,
    pub judge: BackendEndpoint,
    pub segment: BackendEndpoint,
    pub refine: BackendEndpoint,
}

impl Endpoints {
    /// All four kinds served by the same endpoint.
    pub fn uniform(endpoint: BackendEndpoint) -> Self {
        Self {
            asr: endpoint.clone(),
            judge: endpoint.clone(),
            segment: endpoint.clone(),
            refine: endpoint,
        }
    }

    pub fn get(&self, kind: BackendKind) -> &BackendEndpoint {
        match kind {
            BackendKind::Asr => &self.asr,
            BackendKind::Judge => &self.judge,
            BackendKind::Segment => &self.segment,
            BackendKind::Refine => &self.refine,
        }
    }

    pub fn get_mut(&mut self, kind: BackendKind) -> &mut BackendEndpoint {
        match kind {
            BackendKind::Asr => &mut self.asr,
            BackendKind::Judge => &mut self.judge,
            BackendKind::Segment => &mut self.segment,
            BackendKind::Refine => &mut self.refine,
        }
    }

    pub fn validate(&self, base_dir: &Path) -> Result<()> {
        for kind in BackendKind::ALL {
            let ep = self.get(kind);
            match ep.transport {
                TransportKind::Scripted => {
                    let path = ep.fixture_path(base_dir);
                    if !path.is_file() {
                        return Err(Error::Config(format!(
                            "{kind} endpoint: fixture file {} does not exist",
                            path.display()
                        )));
                    }
                }
                TransportKind::Http => {
                    if !(ep.address.starts_with("http://") || ep.address.starts_with("https://")) {
                        return Err(Error::Config(format!(
                            "{kind} endpoint: `{}` is not an http(s) URL",
                            ep.address
                        )));
                    }
                }
            }
            if !(ep.timeout_secs.is_finite() && ep.timeout_secs > 0.0) {
                return Err(Error::Config(format!("{kind} endpoint: timeout must be positive")));
            }
        }
        Ok(())
    }

    /// Builds one transport per kind. Endpoints sharing a fixture file or
    /// URL share a transport.
    pub fn connect(&self, base_dir: &Path, judge_samples: usize) -> Result<Backends> {
        self.validate(base_dir)?;
        let mut cache: HashMap<(TransportKind, String), Arc<dyn Transport>> = HashMap::new();
        let mut transports = Vec::with_capacity(4);
        for kind in BackendKind::ALL {
            let ep = self.get(kind);
            let key = match ep.transport {
                TransportKind::Scripted => {
                    (ep.transport, ep.fixture_path(base_dir).display().to_string())
                }
                TransportKind::Http => (ep.transport, format!("{}@{}", ep.address, ep.timeout_secs)),
            };
            let transport = match cache.get(&key) {
                Some(t) => t.clone(),
                None => {
                    let t: Arc<dyn Transport> = match ep.transport {
                        TransportKind::Scripted => {
                            Arc::new(ScriptedTransport::from_path(&ep.fixture_path(base_dir))?)
                        }
                        TransportKind::Http => Arc::new(HttpTransport::new(
                            &ep.address,
                            Duration::from_secs_f64(ep.timeout_secs),
                        )),
                    };
                    cache.insert(key, t.clone());
                    t
                }
            };
            transports.push(transport);
        }
        let mut it = transports.into_iter();
        let mut next = || it.next().expect("four transports");
        Ok(Backends {
            asr: AsrClient::new(next()),
            judge: JudgeClient::new(next()).with_samples(judge_samples),
            segment: SegmentClient::new(next()),
            refine: RefineClient::new(next()),
        })
    }
}

/// Shared request path: serialize, exchange with one retry, decode.
#[derive(Clone)]
struct Client {
    kind: BackendKind,
    transport: Arc<dyn Transport>,
}

impl Client {
    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, request: &Req) -> Result<Resp> {
        let doc = serde_json::to_value(request).expect("requests serialize to JSON");
        let response = match self.transport.exchange(self.kind, &doc) {
            Ok(v) => v,
            Err(first) if first.retryable() => {
                tracing::warn!(kind = %self.kind, error = %first, "retrying backend request");
                self.transport
                    .exchange(self.kind, &doc)
                    .map_err(|e| self.backend_error(e))?
            }
            Err(e) => return Err(self.backend_error(e)),
        };
        serde_json::from_value(response)
            .map_err(|e| Error::protocol(self.kind, format!("malformed response: {e}")))
    }

    fn backend_error(&self, e: TransportError) -> Error {
        Error::Backend {
            kind: self.kind,
            retryable: e.retryable(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone)]
pub struct AsrClient(Client);

impl AsrClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self(Client {
            kind: BackendKind::Asr,
            transport,
        })
    }

    /// `Ok(None)` is the explicit empty-transcript signal.
    pub fn transcribe(&self, audio_id: &str) -> Result<Option<String>> {
        let resp: AsrResponse = self.0.call(&AsrRequest {
            audio_id: audio_id.to_string(),
        })?;
        let text = resp.transcript.trim();
        Ok((!text.is_empty()).then(|| text.to_string()))
    }
}

pub const DEFAULT_JUDGE_SAMPLES: usize = 8;

/// `k` frame indices spread uniformly over `[0, frame_count)`, taking the
/// middle of each of `k` equal slices. Short videos use every frame.
pub fn sample_frames(frame_count: usize, k: usize) -> Vec<usize> {
    if frame_count <= k {
        return (0..frame_count).collect();
    }
    (0..k).map(|i| (2 * i + 1) * frame_count / (2 * k)).collect()
}

#[derive(Clone)]
pub struct JudgeClient {
    client: Client,
    samples: usize,
}

impl JudgeClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            client: Client {
                kind: BackendKind::Judge,
                transport,
            },
            samples: DEFAULT_JUDGE_SAMPLES,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples.max(1);
        self
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Samples frames uniformly and asks whether `phrase` can be grounded
    /// in them.
    pub fn judge(&self, video: &VideoRef, phrase: &str) -> Result<JudgeVerdict> {
        let frames = sample_frames(video.frame_count, self.samples);
        self.judge_exists(video, &frames, phrase)
    }

    pub fn judge_exists(&self, video: &VideoRef, frames: &[usize], phrase: &str) -> Result<JudgeVerdict> {
        if frames.is_empty() {
            return Err(Error::Usage("the judge needs at least one sampled frame".into()));
        }
        if phrase.trim().is_empty() {
            return Err(Error::Usage("the judge needs a non-empty phrase".into()));
        }
        let resp: JudgeResponse = self.client.call(&JudgeRequest {
            video_id: video.video_id.clone(),
            frame_indices: frames.to_vec(),
            phrase: phrase.to_string(),
        })?;
        wire::validate_verdict(resp, frames, video.frame_count)
    }
}

#[derive(Clone)]
pub struct SegmentClient(Client);

impl SegmentClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self(Client {
            kind: BackendKind::Segment,
            transport,
        })
    }

    pub fn segment_video(&self, video: &VideoRef, prompt: &Prompt) -> Result<MaskTrajectory> {
        let resp: SegmentResponse = self.0.call(&SegmentRequest {
            video_id: video.video_id.clone(),
            prompt: prompt.text.clone(),
            template_id: prompt.template_id as u8,
            frame_count: video.frame_count,
            height: video.height,
            width: video.width,
        })?;
        wire::validate_trajectory(&resp.trajectory, video)?;
        Ok(resp.trajectory)
    }
}

#[derive(Clone)]
pub struct RefineClient(Client);

impl RefineClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self(Client {
            kind: BackendKind::Refine,
            transport,
        })
    }

    pub fn refine(&self, video: &VideoRef, prompt: &GeometricPrompt) -> Result<RefineResult> {
        if prompt.frame_index >= video.frame_count {
            return Err(Error::Usage(format!(
                "anchor {} is outside the video's {} frames",
                prompt.frame_index, video.frame_count
            )));
        }
        let resp: RefineResponse = self.0.call(&RefineRequest {
            video_id: video.video_id.clone(),
            frame_count: video.frame_count,
            prompt: *prompt,
        })?;
        wire::validate_refine(resp, prompt, video)
    }
}

/// The four clients a pipeline run needs.
#[derive(Clone)]
pub struct Backends {
    pub asr: AsrClient,
    pub judge: JudgeClient,
    pub segment: SegmentClient,
    pub refine: RefineClient,
}

impl Backends {
    /// Every client on the same transport.
    pub fn shared(transport: Arc<dyn Transport>, judge_samples: usize) -> Self {
        Self {
            asr: AsrClient::new(transport.clone()),
            judge: JudgeClient::new(transport.clone()).with_samples(judge_samples),
            segment: SegmentClient::new(transport.clone()),
            refine: RefineClient::new(transport),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{BBox, BinaryMask, Point};
    use crate::prompt::build_prompt;
    use serde_json::{json, Value};
    use std::sync::Mutex;

    /// Fails the first `failures` exchanges with `error`, then delegates.
    struct Flaky<T> {
        inner: T,
        error: TransportError,
        failures: Mutex<usize>,
    }

    impl<T: Transport> Transport for Flaky<T> {
        fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError> {
            let mut left = self.failures.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(self.error.clone());
            }
            self.inner.exchange(kind, request)
        }
    }

    fn video(frames: usize) -> VideoRef {
        VideoRef {
            video_id: "v1".into(),
            frame_count: frames,
            height: 4,
            width: 4,
        }
    }

    fn fixtures() -> FixtureSet {
        let mut f = FixtureSet::default();
        f.push(BackendKind::Asr, json!({"audio_id": "a01"}), json!({"transcript": "the brown dog"}));
        f.push(BackendKind::Asr, json!({"audio_id": "silent"}), json!({"transcript": "  "}));
        f.push(
            BackendKind::Judge,
            json!({"video_id": "v1", "phrase": "the brown dog"}),
            json!({"exists": false, "rationale": "no dog visible"}),
        );
        f.push(
            BackendKind::Judge,
            json!({"video_id": "v1", "phrase": "bad frames"}),
            json!({"exists": true, "sampled_frames": [0, 99]}),
        );
        f.push(BackendKind::Judge, json!({"video_id": "v1", "phrase": "garbled"}), json!({"exist": 1}));
        f
    }

    fn scripted(f: FixtureSet) -> Arc<dyn Transport> {
        Arc::new(ScriptedTransport::new(f))
    }

    fn one_pixel(r: u32, c: u32) -> BinaryMask {
        BinaryMask::from_fn(4, 4, |y, x| (y, x) == (r, c)).unwrap()
    }

    fn prompt_at(frame: usize) -> GeometricPrompt {
        GeometricPrompt {
            frame_index: frame,
            bbox: BBox { row_min: 1, col_min: 1, row_max: 1, col_max: 1 },
            point: Point { row: 1, col: 1 },
        }
    }

    fn refine_with(response: Value) -> Result<RefineResult> {
        let mut f = FixtureSet::default();
        f.push(BackendKind::Refine, json!({"video_id": "v1"}), response);
        RefineClient::new(scripted(f)).refine(&video(5), &prompt_at(2))
    }

    fn frame_doc(t: usize, conf: f64) -> Value {
        serde_json::to_value(RefinedFrameDoc {
            frame_index: t,
            mask: one_pixel(1, 1),
            confidence: conf,
        })
        .unwrap()
    }

    #[test]
    fn asr_fixture_echo_and_unknown_id() {
        let asr = AsrClient::new(scripted(fixtures()));
        assert_eq!(asr.transcribe("a01").unwrap().as_deref(), Some("the brown dog"));
        assert_eq!(asr.transcribe("silent").unwrap(), None);
        assert!(matches!(
            asr.transcribe("zzz"),
            Err(Error::Backend { kind: BackendKind::Asr, retryable: false, .. })
        ));
    }

    #[test]
    fn judge_fixture_and_validation() {
        let judge = JudgeClient::new(scripted(fixtures()));
        let v = judge.judge(&video(20), "the brown dog").unwrap();
        assert!(!v.exists);
        assert_eq!(v.sampled_frames, sample_frames(20, 8));
        assert!(matches!(judge.judge(&video(20), "bad frames"), Err(Error::Protocol { .. })));
        assert!(matches!(judge.judge(&video(20), "garbled"), Err(Error::Protocol { .. })));
        assert!(matches!(judge.judge_exists(&video(20), &[], "x"), Err(Error::Usage(_))));
        assert!(matches!(judge.judge(&video(20), " "), Err(Error::Usage(_))));
    }

    #[test]
    fn uniform_sampling() {
        assert_eq!(sample_frames(3, 8), vec![0, 1, 2]);
        assert_eq!(sample_frames(16, 8), vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert_eq!(sample_frames(100, 4), vec![12, 37, 62, 87]);
    }

    #[test]
    fn segment_checks_frame_count() {
        let traj = MaskTrajectory::zeros(3, 4, 4).unwrap();
        let mut f = FixtureSet::default();
        f.push(BackendKind::Segment, json!({"video_id": "v1"}), json!({"trajectory": traj}));
        let seg = SegmentClient::new(scripted(f));
        let prompt = build_prompt("the dog").unwrap();
        assert_eq!(seg.segment_video(&video(3), &prompt).unwrap(), traj);
        assert!(matches!(seg.segment_video(&video(4), &prompt), Err(Error::Protocol { .. })));
        let wide = VideoRef { width: 5, ..video(3) };
        assert!(matches!(seg.segment_video(&wide, &prompt), Err(Error::Protocol { .. })));
    }

    #[test]
    fn refine_accepts_anchor_only_window() {
        let r = refine_with(json!({"anchor": 2, "frames": [frame_doc(2, 0.9)]})).unwrap();
        assert_eq!(r.anchor, 2);
        assert_eq!(r.frames.len(), 1);
    }

    #[test]
    fn refine_rejects_bad_windows() {
        let missing_anchor = json!({"anchor": 2, "frames": [frame_doc(3, 0.9)]});
        let gap = json!({"anchor": 2, "frames": [frame_doc(1, 1.0), frame_doc(2, 1.0), frame_doc(4, 1.0)]});
        let outside = json!({"anchor": 2, "frames": [frame_doc(2, 1.0), frame_doc(5, 1.0)]});
        let wrong_anchor = json!({"anchor": 1, "frames": [frame_doc(1, 1.0)]});
        let bad_conf = json!({"anchor": 2, "frames": [frame_doc(2, 1.5)]});
        for resp in [missing_anchor, gap, outside, wrong_anchor, bad_conf] {
            assert!(matches!(refine_with(resp), Err(Error::Protocol { kind: BackendKind::Refine, .. })));
        }
    }

    #[test]
    fn single_retry_on_transport_failure() {
        let counting = Arc::new(CountingTransport::new(Flaky {
            inner: ScriptedTransport::new(fixtures()),
            error: TransportError::Timeout,
            failures: Mutex::new(1),
        }));
        let asr = AsrClient::new(counting.clone());
        assert_eq!(asr.transcribe("a01").unwrap().as_deref(), Some("the brown dog"));
        assert_eq!(counting.count(BackendKind::Asr), 2);

        let counting = Arc::new(CountingTransport::new(Flaky {
            inner: ScriptedTransport::new(fixtures()),
            error: TransportError::Unreachable("down".into()),
            failures: Mutex::new(2),
        }));
        let asr = AsrClient::new(counting.clone());
        assert!(matches!(asr.transcribe("a01"), Err(Error::Backend { retryable: true, .. })));
        assert_eq!(counting.count(BackendKind::Asr), 2);
    }

    #[test]
    fn no_retry_on_protocol_error() {
        let counting = Arc::new(CountingTransport::new(ScriptedTransport::new(fixtures())));
        let judge = JudgeClient::new(counting.clone());
        assert!(judge.judge(&video(8), "garbled").is_err());
        assert_eq!(counting.count(BackendKind::Judge), 1);
    }

    #[test]
    fn scripted_responses_are_deterministic() {
        let t = ScriptedTransport::new(fixtures());
        let req = json!({"video_id": "v1", "phrase": "the brown dog", "frame_indices": [0, 1]});
        let a = serde_json::to_vec(&t.exchange(BackendKind::Judge, &req).unwrap()).unwrap();
        let b = serde_json::to_vec(&t.exchange(BackendKind::Judge, &req).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn endpoint_validation() {
        let dir = tempfile::tempdir().unwrap();
        let missing = Endpoints::uniform(BackendEndpoint::scripted("nope.json"));
        assert!(matches!(missing.validate(dir.path()), Err(Error::Config(_))));
        fixtures().save(&dir.path().join("f.json")).unwrap();
        let ok = Endpoints::uniform(BackendEndpoint::scripted("f.json"));
        assert!(ok.connect(dir.path(), 8).is_ok());
        let bad_url = Endpoints::uniform(BackendEndpoint::http("localhost:80"));
        assert!(matches!(bad_url.validate(dir.path()), Err(Error::Config(_))));
    }
}
