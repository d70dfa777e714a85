use std::collections::BTreeMap;

use thiserror::Error;

use crate::association::TrackOutput;
use crate::geometry::BoundingBox;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("frame indices start at 1")]
    ZeroFrame,
    #[error("identity {id} appears twice in frame {frame}")]
    DuplicateIdentity { frame: u32, id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub id: u64,
    pub bbox: BoundingBox,
    pub score: Option<f64>,
}

/// Boxes with identities, keyed by 1-based frame index. Entries within a
/// frame keep insertion order; identities are unique per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySet {
    frames: BTreeMap<u32, Vec<TrajectoryEntry>>,
}

impl TrajectorySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: u32, id: u64, bbox: BoundingBox, score: Option<f64>) -> Result<(), TrajectoryError> {
        if frame == 0 {
            return Err(TrajectoryError::ZeroFrame);
        }
        let entries = self.frames.entry(frame).or_default();
        if entries.iter().any(|e| e.id == id) {
            return Err(TrajectoryError::DuplicateIdentity { frame, id });
        }
        entries.push(TrajectoryEntry { id, bbox, score });
        Ok(())
    }

    pub fn from_outputs<'a>(outputs: impl IntoIterator<Item = &'a TrackOutput>) -> Result<Self, TrajectoryError> {
        let mut set = Self::new();
        for o in outputs {
            set.insert(o.frame, o.id, o.bbox, Some(o.score))?;
        }
        Ok(set)
    }

    pub fn frame(&self, frame: u32) -> &[TrajectoryEntry] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Non-empty frames in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &[TrajectoryEntry])> {
        self.frames.iter().filter(|(_, v)| !v.is_empty()).map(|(f, v)| (*f, v.as_slice()))
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.iter().last().map(|(f, _)| f)
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn identities(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.frames.values().flatten().map(|e| e.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Per identity, its `(frame, box)` samples in frame order.
    pub fn by_identity(&self) -> BTreeMap<u64, Vec<(u32, BoundingBox)>> {
        let mut out: BTreeMap<u64, Vec<(u32, BoundingBox)>> = BTreeMap::new();
        for (f, entries) in &self.frames {
            for e in entries {
                out.entry(e.id).or_default().push((*f, e.bbox));
            }
        }
        out
    }

    /// Same entries with identities renamed through `map`.
    pub fn relabeled(&self, map: impl Fn(u64) -> u64) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|(f, v)| (*f, v.iter().map(|e| TrajectoryEntry { id: map(e.id), ..*e }).collect()))
            .collect();
        Self { frames }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_frame_zero() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut t = TrajectorySet::new();
        t.insert(1, 3, b, None).unwrap();
        assert_eq!(t.insert(1, 3, b, None), Err(TrajectoryError::DuplicateIdentity { frame: 1, id: 3 }));
        assert_eq!(t.insert(0, 4, b, None), Err(TrajectoryError::ZeroFrame));
        t.insert(4, 3, b, None).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.last_frame(), Some(4));
        assert_eq!(t.by_identity()[&3].len(), 2);
    }
}
