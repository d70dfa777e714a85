use crate::geometry::BoundingBox;
use crate::motion::{BoxFilter, MotionError, ScoreFilter};

use super::{Detection, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub filter: BoxFilter,
    pub score_filter: ScoreFilter,
    /// Box predicted for the current frame.
    pub predicted_box: BoundingBox,
    pub predicted_score: f64,
    /// Most recent matched detection box.
    pub last_observation: BoundingBox,
    pub last_score: f64,
    /// Running average of matched embeddings, unit length.
    pub embedding: Option<Vec<f64>>,
    pub time_since_update: u32,
    pub hit_streak: u32,
    pub hits: u32,
    pub status: TrackStatus,
}

impl Track {
    pub(crate) fn birth(id: u64, det: &Detection, cfg: &TrackerConfig) -> Result<Self, MotionError> {
        let filter = BoxFilter::new(cfg.motion, &cfg.ukf, &det.bbox)?;
        let status = if cfg.min_hits <= 1 { TrackStatus::Confirmed } else { TrackStatus::Tentative };
        Ok(Self {
            id,
            filter,
            score_filter: ScoreFilter::new(det.score)?,
            predicted_box: det.bbox,
            predicted_score: det.score,
            last_observation: det.bbox,
            last_score: det.score,
            embedding: det.embedding.clone(),
            time_since_update: 0,
            hit_streak: 1,
            hits: 1,
            status,
        })
    }

    pub(crate) fn predict(&mut self) -> Result<(), MotionError> {
        self.filter.predict()?;
        self.predicted_box = self.filter.current_box()?;
        self.predicted_score = self.score_filter.predict();
        Ok(())
    }

    pub(crate) fn update(&mut self, det: &Detection, cfg: &TrackerConfig) -> Result<(), MotionError> {
        self.filter.update(&det.bbox)?;
        self.score_filter.update(det.score)?;
        self.last_observation = det.bbox;
        self.last_score = det.score;
        if let Some(e) = &det.embedding {
            self.embedding = Some(match self.embedding.take() {
                Some(prev) if prev.len() == e.len() => blend(&prev, e, cfg.embedding_momentum),
                _ => e.clone(),
            });
        }
        self.time_since_update = 0;
        self.hits += 1;
        self.hit_streak += 1;
        if self.hit_streak >= cfg.min_hits {
            self.status = TrackStatus::Confirmed;
        }
        Ok(())
    }

    pub(crate) fn mark_missed(&mut self) {
        self.time_since_update += 1;
        self.hit_streak = 0;
    }

    pub fn current_box(&self) -> Result<BoundingBox, MotionError> {
        self.filter.current_box()
    }
}

fn blend(prev: &[f64], new: &[f64], momentum: f64) -> Vec<f64> {
    let mut out: Vec<f64> = prev.iter().zip(new).map(|(p, n)| momentum * p + (1.0 - momentum) * n).collect();
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}
