use nalgebra::DMatrix;

use super::track::Track;
use super::{AssociationError, Detection, TrackerConfig};

/// Which cascade stage a cost matrix is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// High-confidence detections against predicted boxes.
    High,
    /// Low-confidence detections against predicted boxes of tracks left over.
    Low,
    /// Leftover high-confidence detections against last observed boxes.
    LastChance,
}

/// Detection-by-track similarities (higher is better).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    /// Fused similarity the assignment maximizes.
    pub similarity: DMatrix<f64>,
    /// Geometry-only term of each entry.
    pub geometry: DMatrix<f64>,
}

/// Cosine similarity; both inputs are expected to be unit length.
pub fn embedding_similarity(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

pub fn build_cost(
    dets: &[&Detection],
    tracks: &[&Track],
    cfg: &TrackerConfig,
    stage: Stage,
) -> Result<CostMatrix, AssociationError> {
    check_embedding_dims(dets, tracks)?;
    let metric = cfg.assoc;
    let geometry = DMatrix::from_fn(dets.len(), tracks.len(), |i, j| {
        let reference = match stage {
            Stage::High | Stage::Low => &tracks[j].predicted_box,
            Stage::LastChance => &tracks[j].last_observation,
        };
        metric.similarity(&dets[i].bbox, reference, &cfg.fish_iou)
    });

    let mut similarity = geometry.clone();
    if stage == Stage::LastChance {
        return Ok(CostMatrix { similarity, geometry });
    }
    for (i, det) in dets.iter().enumerate() {
        for (j, track) in tracks.iter().enumerate() {
            let mut entry = geometry[(i, j)];
            if cfg.reid_enabled {
                if let (Some(de), Some(te)) = (&det.embedding, &track.embedding) {
                    let cos = embedding_similarity(de, te);
                    entry = match stage {
                        Stage::High => cfg.w_cost_iou * entry + cfg.w_cost_emb * cos,
                        _ => entry + cfg.lambda_emb * cos,
                    };
                }
            }
            if cfg.score_cost_weight > 0.0 {
                entry += cfg.score_cost_weight * (1.0 - (det.score - track.predicted_score).abs());
            }
            similarity[(i, j)] = entry;
        }
    }
    Ok(CostMatrix { similarity, geometry })
}

fn check_embedding_dims(dets: &[&Detection], tracks: &[&Track]) -> Result<(), AssociationError> {
    let mut dim: Option<usize> = None;
    let all = dets
        .iter()
        .filter_map(|d| d.embedding.as_ref())
        .chain(tracks.iter().filter_map(|t| t.embedding.as_ref()));
    for e in all {
        match dim {
            None => dim = Some(e.len()),
            Some(d) if d != e.len() => {
                return Err(AssociationError::EmbeddingDimension { expected: d, found: e.len() })
            }
            _ => {}
        }
    }
    Ok(())
}
