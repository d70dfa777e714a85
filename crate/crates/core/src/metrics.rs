//! CLEAR MOT and identity metrics.
//!
//! Box correspondence uses plain IoU at a configurable threshold so the
//! evaluation does not depend on the tracker's association measure.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::association::hungarian;
use crate::geometry::iou;
use crate::trajectory::TrajectorySet;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClearMetrics {
    pub mota: f64,
    pub matches: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
    pub frag: u64,
    pub gt_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdMetrics {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub clear: ClearMetrics,
    pub id: IdMetrics,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "MOTA,IDF1,IDP,IDR,IDSW,IDFP,IDFN,IDTP,Frag,FP,FN,GT";

    pub fn csv_row(&self) -> String {
        let (c, i) = (&self.clear, &self.id);
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{}",
            c.mota, i.idf1, i.idp, i.idr, c.idsw, i.idfp, i.idfn, i.idtp, c.frag, c.fp, c.fn_, c.gt_count
        )
    }
}

pub fn evaluate(gt: &TrajectorySet, pred: &TrajectorySet, iou_threshold: f64) -> EvalReport {
    EvalReport { clear: clear_metrics(gt, pred, iou_threshold), id: id_metrics(gt, pred, iou_threshold) }
}

fn all_frames(gt: &TrajectorySet, pred: &TrajectorySet) -> Vec<u32> {
    let mut frames: Vec<u32> = gt.iter().map(|(f, _)| f).chain(pred.iter().map(|(f, _)| f)).collect();
    frames.sort_unstable();
    frames.dedup();
    frames
}

/// CLEAR MOT counts. Correspondences from earlier frames are kept while
/// they still pass the threshold; the remaining boxes are matched by
/// maximum-cardinality, maximum-IoU assignment.
pub fn clear_metrics(gt: &TrajectorySet, pred: &TrajectorySet, iou_threshold: f64) -> ClearMetrics {
    let mut m = ClearMetrics::default();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let mut was_tracked: HashMap<u64, bool> = HashMap::new();

    for frame in all_frames(gt, pred) {
        let g = gt.frame(frame);
        let p = pred.frame(frame);
        m.gt_count += g.len() as u64;

        let ious = DMatrix::from_fn(g.len(), p.len(), |i, j| iou(&g[i].bbox, &p[j].bbox));
        let valid = |i: usize, j: usize| ious[(i, j)] >= iou_threshold;
        let mut g_match: Vec<Option<usize>> = vec![None; g.len()];
        let mut p_taken = vec![false; p.len()];

        for (i, ge) in g.iter().enumerate() {
            if let Some(&pid) = last_match.get(&ge.id) {
                if let Some(j) = p.iter().position(|pe| pe.id == pid) {
                    if !p_taken[j] && valid(i, j) {
                        g_match[i] = Some(j);
                        p_taken[j] = true;
                    }
                }
            }
        }

        let open_g: Vec<usize> = (0..g.len()).filter(|&i| g_match[i].is_none()).collect();
        let open_p: Vec<usize> = (0..p.len()).filter(|&j| !p_taken[j]).collect();
        if !open_g.is_empty() && !open_p.is_empty() {
            // 1 + IoU for valid pairs favors more matches before better ones
            let w = DMatrix::from_fn(open_g.len(), open_p.len(), |a, b| {
                let (i, j) = (open_g[a], open_p[b]);
                if valid(i, j) { 1.0 + ious[(i, j)] } else { 0.0 }
            });
            for (a, b) in hungarian(&w).matches {
                let (i, j) = (open_g[a], open_p[b]);
                if valid(i, j) {
                    let gid = g[i].id;
                    let pid = p[j].id;
                    if last_match.get(&gid).is_some_and(|&prev| prev != pid) {
                        m.idsw += 1;
                    }
                    g_match[i] = Some(j);
                    p_taken[j] = true;
                }
            }
        }

        for (i, ge) in g.iter().enumerate() {
            let tracked = g_match[i].is_some();
            if let Some(j) = g_match[i] {
                last_match.insert(ge.id, p[j].id);
                m.matches += 1;
            } else {
                m.fn_ += 1;
            }
            if was_tracked.get(&ge.id).copied().unwrap_or(false) && !tracked {
                m.frag += 1;
            }
            was_tracked.insert(ge.id, tracked);
        }
        m.fp += p_taken.iter().filter(|t| !**t).count() as u64;
    }

    let errors = (m.fn_ + m.fp + m.idsw) as f64;
    m.mota = if m.gt_count > 0 {
        1.0 - errors / m.gt_count as f64
    } else if errors == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    m
}

/// Per `(gt identity, predicted identity)`, the number of frames in which
/// their boxes overlap at or above the threshold.
pub fn identity_overlaps(gt: &TrajectorySet, pred: &TrajectorySet, iou_threshold: f64) -> BTreeMap<(u64, u64), u64> {
    let mut counts = BTreeMap::new();
    for (frame, g) in gt.iter() {
        for ge in g {
            for pe in pred.frame(frame) {
                if iou(&ge.bbox, &pe.bbox) >= iou_threshold {
                    *counts.entry((ge.id, pe.id)).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

pub fn id_metrics(gt: &TrajectorySet, pred: &TrajectorySet, iou_threshold: f64) -> IdMetrics {
    let gt_ids = gt.identities();
    let pred_ids = pred.identities();
    let overlaps = identity_overlaps(gt, pred, iou_threshold);
    let w = DMatrix::from_fn(gt_ids.len(), pred_ids.len(), |i, j| {
        overlaps.get(&(gt_ids[i], pred_ids[j])).copied().unwrap_or(0) as f64
    });
    let idtp: u64 = hungarian(&w).matches.iter().map(|&(i, j)| w[(i, j)] as u64).sum();
    id_report(idtp, gt.len() as u64, pred.len() as u64)
}

pub(crate) fn id_report(idtp: u64, gt_total: u64, pred_total: u64) -> IdMetrics {
    let idfn = gt_total - idtp;
    let idfp = pred_total - idtp;
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    IdMetrics {
        idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
        idp: ratio(idtp, idtp + idfp),
        idr: ratio(idtp, idtp + idfn),
        idtp,
        idfp,
        idfn,
    }
}
