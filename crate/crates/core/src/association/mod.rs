//! Detection-to-track association and the three-stage matching cascade.
//!
//! Each frame runs:
//!
//! 1. prediction of every live track's box and confidence;
//! 2. high-confidence detections (`score >= tau_high`) against predicted
//!    boxes, optionally fused with appearance similarity;
//! 3. low-confidence detections (`tau_low < score < tau_high`) against the
//!    tracks still unmatched;
//! 4. a last-chance pass of leftover high-confidence detections against the
//!    last observed box of the tracks still unmatched;
//!
//! then ages unmatched tracks, births new tracks from leftover
//! high-confidence detections and drops tracks unseen for more than
//! `max_age` frames.

pub mod cost;
pub mod hungarian;
pub mod track;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{iou, AssocMetric, BoundingBox, FishIouParams, GeometryError};
use crate::motion::{MotionError, MotionKind, UkfConfig};
pub use cost::{build_cost, embedding_similarity, CostMatrix, Stage};
pub use hungarian::{hungarian, Assignment};
pub use track::{Track, TrackStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("detection score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("embedding must have unit L2 norm (got {0})")]
    EmbeddingNotNormalized(f64),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    EmbeddingDimension { expected: usize, found: usize },
    #[error("frame {frame} presented after frame {last}; frames must strictly increase")]
    OutOfOrderFrame { frame: u32, last: u32 },
    #[error("frame indices start at 1")]
    ZeroFrame,
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    /// Appearance embedding, unit length.
    pub embedding: Option<Vec<f64>>,
}

impl Detection {
    pub fn new(bbox: BoundingBox, score: f64) -> Result<Self, AssociationError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(AssociationError::InvalidScore(score));
        }
        Ok(Self { bbox, score, embedding: None })
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Result<Self, AssociationError> {
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(AssociationError::EmbeddingNotNormalized(norm));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub tau_high: f64,
    pub tau_low: f64,
    /// Acceptance gate on the association similarity; `None` uses the
    /// metric's default (0.45 for FishIoU).
    pub tau_iou: Option<f64>,
    pub max_age: u32,
    pub min_hits: u32,
    pub reid_enabled: bool,
    /// Stage-1 weight on geometry when fusing appearance.
    pub w_cost_iou: f64,
    /// Stage-1 weight on appearance.
    pub w_cost_emb: f64,
    /// Stage-2 weight on appearance.
    pub lambda_emb: f64,
    /// Weight of the `1 − |score − predicted score|` term; 0 disables it.
    pub score_cost_weight: f64,
    pub embedding_momentum: f64,
    pub motion: MotionKind,
    pub assoc: AssocMetric,
    pub fish_iou: FishIouParams,
    pub ukf: UkfConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_high: 0.6,
            tau_low: 0.1,
            tau_iou: None,
            max_age: 30,
            min_hits: 3,
            reid_enabled: false,
            w_cost_iou: 1.0,
            w_cost_emb: 0.25,
            lambda_emb: 0.25,
            score_cost_weight: 0.0,
            embedding_momentum: 0.9,
            motion: MotionKind::Ukf,
            assoc: AssocMetric::FishIou,
            fish_iou: FishIouParams::default(),
            ukf: UkfConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn gate(&self) -> f64 {
        self.tau_iou.unwrap_or_else(|| self.assoc.default_gate())
    }

    pub fn validate(&self) -> Result<(), AssociationError> {
        let bad = |m: &str| Err(AssociationError::InvalidConfig(m.to_string()));
        if !(0.0 <= self.tau_low && self.tau_low < self.tau_high && self.tau_high <= 1.0) {
            return bad("thresholds must satisfy 0 <= tau_low < tau_high <= 1");
        }
        if self.max_age < 1 {
            return bad("max_age must be at least 1");
        }
        if self.tau_iou.is_some_and(|t| !t.is_finite()) {
            return bad("tau_iou must be finite");
        }
        let weights = [self.w_cost_iou, self.w_cost_emb, self.lambda_emb, self.score_cost_weight];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("fusion weights must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.embedding_momentum) {
            return bad("embedding_momentum must lie in [0, 1]");
        }
        self.fish_iou.validate()?;
        self.ukf.validate()?;
        Ok(())
    }
}

/// One emitted track for one frame: the identity with the box and score
/// of the detection it was matched to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackerStats {
    pub born: u64,
    pub removed: u64,
    pub stage_matches: [u64; 3],
}

/// Single-sequence tracker; frames must be fed in strictly increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    frame_count: u32,
    last_frame: u32,
    stats: TrackerStats,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, AssociationError> {
        cfg.validate()?;
        Ok(Self { cfg, tracks: Vec::new(), next_id: 1, frame_count: 0, last_frame: 0, stats: TrackerStats::default() })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    /// Processes frame `frame`. Skipped frames are treated as frames with no
    /// detections.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackOutput>, AssociationError> {
        if frame == 0 {
            return Err(AssociationError::ZeroFrame);
        }
        if frame <= self.last_frame {
            return Err(AssociationError::OutOfOrderFrame { frame, last: self.last_frame });
        }
        for skipped in (self.last_frame + 1)..frame {
            self.advance(skipped, &[])?;
        }
        self.advance(frame, detections)
    }

    fn advance(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackOutput>, AssociationError> {
        self.last_frame = frame;
        self.frame_count += 1;
        let cfg = &self.cfg;
        let gate = cfg.gate();

        for t in &mut self.tracks {
            t.predict()?;
        }

        let high: Vec<usize> = (0..detections.len()).filter(|&i| detections[i].score >= cfg.tau_high).collect();
        let low: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].score > cfg.tau_low && detections[i].score < cfg.tau_high)
            .collect();

        let mut matched: Vec<(usize, usize)> = Vec::new();

        // stage 1
        let all_tracks: Vec<usize> = (0..self.tracks.len()).collect();
        let (m1, mut open_high, mut open_tracks) =
            self.match_stage(detections, &high, &all_tracks, Stage::High, gate)?;
        self.stats.stage_matches[0] += m1.len() as u64;
        matched.extend(m1);

        // stage 2
        let (m2, _, rest) = self.match_stage(detections, &low, &open_tracks, Stage::Low, gate)?;
        self.stats.stage_matches[1] += m2.len() as u64;
        matched.extend(m2);
        open_tracks = rest;

        // stage 3
        let (m3, rest_high, rest) =
            self.match_stage(detections, &open_high, &open_tracks, Stage::LastChance, gate)?;
        self.stats.stage_matches[2] += m3.len() as u64;
        matched.extend(m3);
        open_high = rest_high;
        open_tracks = rest;

        for &(d, t) in &matched {
            self.tracks[t].update(&detections[d], &self.cfg)?;
        }
        for &t in &open_tracks {
            self.tracks[t].mark_missed();
        }

        // (track, detection) pairs that may be emitted this frame
        let mut emitted: Vec<(usize, usize)> = matched.iter().map(|&(d, t)| (t, d)).collect();
        for &d in &open_high {
            let track = track::Track::birth(self.next_id, &detections[d], &self.cfg)?;
            self.next_id += 1;
            self.stats.born += 1;
            emitted.push((self.tracks.len(), d));
            self.tracks.push(track);
        }

        let warmup = self.frame_count <= self.cfg.min_hits;
        let mut outputs = Vec::new();
        for (t, d) in emitted {
            let track = &self.tracks[t];
            if track.status == TrackStatus::Confirmed || warmup {
                let det = &detections[d];
                outputs.push(TrackOutput { frame, id: track.id, bbox: det.bbox, score: det.score });
            }
        }
        outputs.sort_by_key(|o| o.id);

        let max_age = self.cfg.max_age;
        for t in &mut self.tracks {
            if t.time_since_update > max_age {
                t.status = TrackStatus::Removed;
            }
        }
        let before = self.tracks.len();
        self.tracks.retain(|t| t.status != TrackStatus::Removed);
        self.stats.removed += (before - self.tracks.len()) as u64;

        Ok(outputs)
    }

    /// Runs one assignment round. Returns accepted `(detection, track)` pairs
    /// plus the detections and tracks left open, all as indices into the
    /// frame's detection list and the tracker's track list.
    #[allow(clippy::type_complexity)]
    fn match_stage(
        &self,
        detections: &[Detection],
        det_idx: &[usize],
        track_idx: &[usize],
        stage: Stage,
        gate: f64,
    ) -> Result<(Vec<(usize, usize)>, Vec<usize>, Vec<usize>), AssociationError> {
        if det_idx.is_empty() || track_idx.is_empty() {
            return Ok((Vec::new(), det_idx.to_vec(), track_idx.to_vec()));
        }
        let dets: Vec<&Detection> = det_idx.iter().map(|&i| &detections[i]).collect();
        let tracks: Vec<&Track> = track_idx.iter().map(|&j| &self.tracks[j]).collect();
        let cost = build_cost(&dets, &tracks, &self.cfg, stage)?;
        let assignment = hungarian(&cost.similarity);

        // stage 1 only refuses pairs whose boxes do not overlap at all
        let accept = |r: usize, c: usize| match stage {
            Stage::High => iou(&dets[r].bbox, &tracks[c].predicted_box) > 0.0,
            Stage::Low | Stage::LastChance => cost.similarity[(r, c)] > gate,
        };
        let mut det_used = vec![false; det_idx.len()];
        let mut track_used = vec![false; track_idx.len()];
        let mut accepted = Vec::new();
        for &(r, c) in &assignment.matches {
            if accept(r, c) {
                det_used[r] = true;
                track_used[c] = true;
                accepted.push((det_idx[r], track_idx[c]));
            }
        }
        let open_dets = det_idx.iter().zip(&det_used).filter(|(_, u)| !**u).map(|(i, _)| *i).collect();
        let open_tracks = track_idx.iter().zip(&track_used).filter(|(_, u)| !**u).map(|(j, _)| *j).collect();
        Ok((accepted, open_dets, open_tracks))
    }
}

/// Runs a fresh tracker over every frame of `detections` in order.
pub fn track_sequence(
    cfg: &TrackerConfig,
    detections: &BTreeMap<u32, Vec<Detection>>,
) -> Result<(Vec<TrackOutput>, TrackerStats), AssociationError> {
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut outputs = Vec::new();
    for (&frame, dets) in detections {
        outputs.extend(tracker.step(frame, dets)?);
    }
    Ok((outputs, tracker.stats()))
}
