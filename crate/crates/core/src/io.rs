//! MOT-style text formats, the embedding sidecar and the TOML config file.
//!
//! Files use `(left, top, width, height)` boxes and 1-based frames; this
//! module is the only place that converts them to corner boxes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::association::{AssociationError, Detection, TrackOutput, TrackerConfig};
use crate::geometry::{AssocMetric, BoundingBox, FishIouParams, FrontEdge};
use crate::motion::{MotionKind, UkfConfig};
use crate::sim::SimParams;
use crate::trajectory::TrajectorySet;

pub type FrameDetections = BTreeMap<u32, Vec<Detection>>;
/// Per frame, embedding vectors keyed by detection position in that frame.
pub type FrameEmbeddings = BTreeMap<u32, BTreeMap<usize, Vec<f64>>>;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Bundle(String),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn at(path: &Path) -> impl Fn(ParseError) -> IoError + '_ {
    move |source| IoError::Parse { path: path.to_path_buf(), source }
}

/// Non-blank lines with their 1-based line numbers, split on commas.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn num(line: usize, field: &str, name: &str) -> Result<f64, ParseError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::new(line, format!("{name}: expected a finite number, found {field:?}"))),
    }
}

fn int<T: std::str::FromStr>(line: usize, field: &str, name: &str) -> Result<T, ParseError> {
    field.parse().map_err(|_| ParseError::new(line, format!("{name}: expected an integer, found {field:?}")))
}

fn frame_index(line: usize, field: &str) -> Result<u32, ParseError> {
    let f: u32 = int(line, field, "frame")?;
    if f == 0 {
        return Err(ParseError::new(line, "frame indices start at 1"));
    }
    Ok(f)
}

fn ltwh(line: usize, f: &[&str]) -> Result<BoundingBox, ParseError> {
    let (l, t) = (num(line, f[0], "bb_left")?, num(line, f[1], "bb_top")?);
    let (w, h) = (num(line, f[2], "bb_width")?, num(line, f[3], "bb_height")?);
    if w <= 0.0 || h <= 0.0 {
        return Err(ParseError::new(line, format!("box width and height must be positive (got {w} x {h})")));
    }
    BoundingBox::from_ltwh(l, t, w, h).map_err(|e| ParseError::new(line, e.to_string()))
}

fn field_count(line: usize, f: &[&str], allowed: &[usize]) -> Result<(), ParseError> {
    if allowed.contains(&f.len()) {
        Ok(())
    } else {
        let expected: Vec<String> = allowed.iter().map(usize::to_string).collect();
        Err(ParseError::new(line, format!("expected {} fields, found {}", expected.join(" or "), f.len())))
    }
}

/// Parses `frame,-1,left,top,width,height,conf[,x,y,z]`. Frames may be
/// sparse and in any order; within a frame, file order is kept.
pub fn parse_detections(text: &str) -> Result<FrameDetections, ParseError> {
    let mut out = FrameDetections::new();
    for (line, f) in rows(text) {
        field_count(line, &f, &[7, 10])?;
        let frame = frame_index(line, f[0])?;
        let id: i64 = int(line, f[1], "id")?;
        if id != -1 {
            return Err(ParseError::new(line, format!("detection id must be -1, found {id}")));
        }
        let bbox = ltwh(line, &f[2..6])?;
        let score = num(line, f[6], "conf")?;
        let det = Detection::new(bbox, score).map_err(|e| ParseError::new(line, e.to_string()))?;
        out.entry(frame).or_default().push(det);
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<FrameDetections, IoError> {
    parse_detections(&read_text(path)?).map_err(at(path))
}

/// Exact text form: coordinates and scores use shortest round-trip
/// formatting, so parsing reproduces the input bit for bit.
pub fn format_detections(dets: &FrameDetections) -> String {
    let mut s = String::new();
    for (frame, ds) in dets {
        for d in ds {
            let b = &d.bbox;
            writeln!(s, "{frame},-1,{},{},{},{},{},-1,-1,-1", b.x1(), b.y1(), b.width(), b.height(), d.score)
                .expect("writing to a String cannot fail");
        }
    }
    s
}

pub fn write_detections(dets: &FrameDetections, path: &Path) -> Result<(), IoError> {
    write_text(path, &format_detections(dets))
}

/// Parses `frame,id,left,top,width,height,flag[,class,visibility]`,
/// skipping rows whose flag is 0.
pub fn parse_gt(text: &str) -> Result<TrajectorySet, ParseError> {
    let mut out = TrajectorySet::new();
    for (line, f) in rows(text) {
        field_count(line, &f, &[7, 8, 9])?;
        let frame = frame_index(line, f[0])?;
        let id: u64 = int(line, f[1], "id")?;
        let bbox = ltwh(line, &f[2..6])?;
        let flag = num(line, f[6], "flag")?;
        if flag == 0.0 {
            continue;
        }
        out.insert(frame, id, bbox, None).map_err(|e| ParseError::new(line, e.to_string()))?;
    }
    Ok(out)
}

pub fn read_gt(path: &Path) -> Result<TrajectorySet, IoError> {
    parse_gt(&read_text(path)?).map_err(at(path))
}

pub fn format_gt(t: &TrajectorySet) -> String {
    let mut s = String::new();
    for (frame, entries) in t.iter() {
        for e in entries {
            let b = &e.bbox;
            writeln!(s, "{frame},{},{},{},{},{},1,1,1", e.id, b.x1(), b.y1(), b.width(), b.height())
                .expect("writing to a String cannot fail");
        }
    }
    s
}

pub fn write_gt(t: &TrajectorySet, path: &Path) -> Result<(), IoError> {
    write_text(path, &format_gt(t))
}

/// Parses tracker output `frame,id,left,top,width,height,conf,-1,-1,-1`.
pub fn parse_results(text: &str) -> Result<TrajectorySet, ParseError> {
    let mut out = TrajectorySet::new();
    for (line, f) in rows(text) {
        field_count(line, &f, &[7, 10])?;
        let frame = frame_index(line, f[0])?;
        let id: u64 = int(line, f[1], "id")?;
        let bbox = ltwh(line, &f[2..6])?;
        let score = num(line, f[6], "conf")?;
        out.insert(frame, id, bbox, Some(score)).map_err(|e| ParseError::new(line, e.to_string()))?;
    }
    Ok(out)
}

pub fn read_results(path: &Path) -> Result<TrajectorySet, IoError> {
    parse_results(&read_text(path)?).map_err(at(path))
}

/// One line per output sorted by frame then id; 2 decimals for
/// coordinates, 4 for confidence.
pub fn format_results(outputs: &[TrackOutput]) -> String {
    let mut sorted: Vec<&TrackOutput> = outputs.iter().collect();
    sorted.sort_by_key(|o| (o.frame, o.id));
    let mut s = String::new();
    for o in sorted {
        let b = &o.bbox;
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.4},-1,-1,-1",
            o.frame,
            o.id,
            b.x1(),
            b.y1(),
            b.width(),
            b.height(),
            o.score
        )
        .expect("writing to a String cannot fail");
    }
    s
}

pub fn write_results(outputs: &[TrackOutput], path: &Path) -> Result<(), IoError> {
    write_text(path, &format_results(outputs))
}

/// Parses `frame,det_index,v1,...,vd`. The dimension is fixed by the first
/// row; every vector is scaled to unit length.
pub fn parse_embeddings(text: &str) -> Result<FrameEmbeddings, ParseError> {
    let mut out = FrameEmbeddings::new();
    let mut dim: Option<usize> = None;
    for (line, f) in rows(text) {
        if f.len() < 3 {
            return Err(ParseError::new(line, format!("expected frame, det_index and a vector, found {} fields", f.len())));
        }
        let frame = frame_index(line, f[0])?;
        let index: usize = int(line, f[1], "det_index")?;
        let v = f[2..].iter().map(|x| num(line, x, "embedding value")).collect::<Result<Vec<f64>, _>>()?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(ParseError::new(line, format!("embedding dimension {} differs from {d}", v.len())));
            }
            _ => {}
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ParseError::new(line, "embedding has zero norm"));
        }
        if (norm - 1.0).abs() > 1e-3 {
            log::warn!("embedding for frame {frame}, detection {index} has norm {norm:.6}; normalizing");
        }
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if out.entry(frame).or_default().insert(index, unit).is_some() {
            return Err(ParseError::new(line, format!("duplicate embedding for frame {frame}, detection {index}")));
        }
    }
    Ok(out)
}

pub fn read_embeddings(path: &Path) -> Result<FrameEmbeddings, IoError> {
    parse_embeddings(&read_text(path)?).map_err(at(path))
}

/// Detections with embeddings attached and optional ground truth for one
/// sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceBundle {
    pub detections: FrameDetections,
    pub gt: Option<TrajectorySet>,
    /// Last frame referenced by detections or ground truth.
    pub frame_count: u32,
    pub fps: Option<f64>,
}

impl SequenceBundle {
    /// Attaches each embedding to the detection at its position. Detections
    /// without an embedding row keep none.
    pub fn new(
        mut detections: FrameDetections,
        embeddings: Option<&FrameEmbeddings>,
        gt: Option<TrajectorySet>,
    ) -> Result<Self, IoError> {
        if let Some(emb) = embeddings {
            for (frame, vectors) in emb {
                let dets = detections.get_mut(frame);
                let available = dets.as_ref().map_or(0, |d| d.len());
                let dets = match dets {
                    Some(d) => d,
                    None => {
                        return Err(IoError::Bundle(format!("embedding for frame {frame}, which has no detections")));
                    }
                };
                for (&index, v) in vectors {
                    let Some(det) = dets.get_mut(index) else {
                        return Err(IoError::Bundle(format!(
                            "embedding for frame {frame}, detection {index}; frame has {available} detections"
                        )));
                    };
                    det.embedding = Some(v.clone());
                }
            }
        }
        let last_det = detections.keys().next_back().copied().unwrap_or(0);
        let last_gt = gt.as_ref().and_then(TrajectorySet::last_frame).unwrap_or(0);
        Ok(Self { detections, gt, frame_count: last_det.max(last_gt), fps: None })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub tracker: TrackerConfig,
    pub sim: SimParams,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrackerSection {
    tau_high: f64,
    tau_low: f64,
    tau_iou: Option<f64>,
    max_age: u32,
    min_hits: u32,
    reid_enabled: bool,
    w_cost_iou: f64,
    w_cost_emb: f64,
    lambda_emb: f64,
    score_cost_weight: f64,
    embedding_momentum: f64,
    motion: MotionKind,
    assoc: AssocMetric,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let d = TrackerConfig::default();
        Self {
            tau_high: d.tau_high,
            tau_low: d.tau_low,
            tau_iou: d.tau_iou,
            max_age: d.max_age,
            min_hits: d.min_hits,
            reid_enabled: d.reid_enabled,
            w_cost_iou: d.w_cost_iou,
            w_cost_emb: d.w_cost_emb,
            lambda_emb: d.lambda_emb,
            score_cost_weight: d.score_cost_weight,
            embedding_momentum: d.embedding_momentum,
            motion: d.motion,
            assoc: d.assoc,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FishIouSection {
    alpha: f64,
    beta: f64,
    gamma: f64,
    w1: f64,
    w2: f64,
    w3: f64,
    w4: f64,
    w5: f64,
    small_target_area: f64,
    front: FrontEdge,
}

impl Default for FishIouSection {
    fn default() -> Self {
        let d = FishIouParams::default();
        let [w1, w2, w3, w4, w5] = d.weights;
        Self {
            alpha: d.front_inset,
            beta: d.vertical_inset,
            gamma: d.rear_inset,
            w1,
            w2,
            w3,
            w4,
            w5,
            small_target_area: d.small_target_area,
            front: d.front,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    tracker: TrackerSection,
    fishiou: FishIouSection,
    ukf: UkfConfig,
    sim: SimParams,
}

/// Parses a TOML config with optional `[tracker]`, `[fishiou]`, `[ukf]`
/// and `[sim]` sections. Missing keys take defaults; unknown keys and
/// out-of-range values are errors.
pub fn parse_config(text: &str) -> Result<Config, String> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
    let t = file.tracker;
    let f = file.fishiou;
    let tracker = TrackerConfig {
        tau_high: t.tau_high,
        tau_low: t.tau_low,
        tau_iou: t.tau_iou,
        max_age: t.max_age,
        min_hits: t.min_hits,
        reid_enabled: t.reid_enabled,
        w_cost_iou: t.w_cost_iou,
        w_cost_emb: t.w_cost_emb,
        lambda_emb: t.lambda_emb,
        score_cost_weight: t.score_cost_weight,
        embedding_momentum: t.embedding_momentum,
        motion: t.motion,
        assoc: t.assoc,
        fish_iou: FishIouParams {
            front_inset: f.alpha,
            vertical_inset: f.beta,
            rear_inset: f.gamma,
            weights: [f.w1, f.w2, f.w3, f.w4, f.w5],
            small_target_area: f.small_target_area,
            front: f.front,
        },
        ukf: file.ukf,
    };
    tracker.validate().map_err(|e: AssociationError| e.to_string())?;
    file.sim.validate().map_err(|e| e.to_string())?;
    Ok(Config { tracker, sim: file.sim })
}

pub fn load_config(path: &Path) -> Result<Config, IoError> {
    parse_config(&read_text(path)?).map_err(|message| IoError::Config { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{corrupt, simulate};

    #[test]
    fn detection_line() {
        let d = parse_detections("1,-1,10,20,30,40,0.9,-1,-1,-1\n").unwrap();
        assert_eq!(d[&1].len(), 1);
        assert_eq!(d[&1][0].bbox, BoundingBox::new(10.0, 20.0, 40.0, 60.0).unwrap());
        assert_eq!(d[&1][0].score, 0.9);
    }

    #[test]
    fn empty_detection_file() {
        assert!(parse_detections("").unwrap().is_empty());
        assert!(parse_detections("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn malformed_detection_lines() {
        assert_eq!(parse_detections("1,-1,10,20,30,40\n").unwrap_err().line, 1);
        let bad_size = parse_detections("1,-1,0,0,5,5,0.5\n2,-1,0,0,0,5,0.5\n").unwrap_err();
        assert_eq!(bad_size.line, 2);
        assert!(parse_detections("1,-1,0,0,5,5,abc\n").is_err());
        assert!(parse_detections("0,-1,0,0,5,5,0.5\n").is_err());
        assert!(parse_detections("1,4,0,0,5,5,0.5\n").is_err());
        assert!(parse_detections("1,-1,0,0,5,5,1.5\n").is_err());
        assert!(parse_detections("1,-1,0,0,5,NaN,0.5\n").is_err());
    }

    #[test]
    fn detection_frames_sorted_on_load() {
        let d = parse_detections("5,-1,0,0,5,5,0.5\n2,-1,0,0,5,5,0.6\n5,-1,9,0,5,5,0.7\n").unwrap();
        assert_eq!(d.keys().copied().collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(d[&5].iter().map(|x| x.score).collect::<Vec<_>>(), vec![0.5, 0.7]);
    }

    #[test]
    fn gt_lines() {
        let t = parse_gt("5,3,0,0,10,10,1,1,1.0\n6,3,0,0,10,10,0,1,1.0\n").unwrap();
        assert_eq!(t.len(), 1);
        let e = t.frame(5)[0];
        assert_eq!(e.id, 3);
        assert_eq!(e.bbox, BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap());
        assert!(parse_gt("1,1,0,0,1,1,1\n1,1,0,0,1,1,1\n").is_err());
    }

    #[test]
    fn gt_round_trip() {
        let p = SimParams { n_fish: 3, n_frames: 60, ..Default::default() };
        let gt = simulate(&p).unwrap();
        assert_eq!(parse_gt(&format_gt(&gt)).unwrap(), gt);
        let dets = corrupt(&gt, &p).unwrap();
        let parsed = parse_detections(&format_detections(&dets)).unwrap();
        let nonempty: FrameDetections = dets.into_iter().filter(|(_, d)| !d.is_empty()).collect();
        assert_eq!(parsed, nonempty);
    }

    #[test]
    fn result_line_format() {
        let o = TrackOutput { frame: 1, id: 1, bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), score: 0.9 };
        assert_eq!(format_results(&[o]), "1,1,0.00,0.00,10.00,10.00,0.9000,-1,-1,-1\n");
        assert_eq!(format_results(&[]), "");
    }

    #[test]
    fn results_sorted_and_fixpoint() {
        let b = |x: f64| BoundingBox::new(x, 1.0 / 3.0, x + 7.123, 9.0).unwrap();
        let outs = vec![
            TrackOutput { frame: 2, id: 1, bbox: b(1.0), score: 0.5 },
            TrackOutput { frame: 1, id: 4, bbox: b(2.0), score: 0.61234 },
            TrackOutput { frame: 1, id: 2, bbox: b(3.0), score: 0.7 },
        ];
        let first = format_results(&outs);
        assert!(first.starts_with("1,2,"));
        let reread = parse_results(&first).unwrap();
        let again: Vec<TrackOutput> = reread
            .iter()
            .flat_map(|(f, es)| {
                es.iter().map(move |e| TrackOutput { frame: f, id: e.id, bbox: e.bbox, score: e.score.unwrap() })
            })
            .collect();
        assert_eq!(format_results(&again), first);
    }

    #[test]
    fn embeddings_normalized_and_dimension_enforced() {
        let e = parse_embeddings("1,0,1,0,0,0\n1,1,2,0,0,0\n").unwrap();
        assert_eq!(e[&1][&1], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(parse_embeddings("1,0,1,0,0,0\n2,0,1,0,0\n").unwrap_err().line, 2);
        assert!(parse_embeddings("1,0,0,0\n").is_err());
    }

    #[test]
    fn bundle_attaches_embeddings() {
        let dets = parse_detections("1,-1,0,0,5,5,0.9\n1,-1,9,0,5,5,0.8\n").unwrap();
        let emb = parse_embeddings("1,1,0,3,4\n").unwrap();
        let bundle = SequenceBundle::new(dets.clone(), Some(&emb), None).unwrap();
        assert_eq!(bundle.detections[&1][0].embedding, None);
        assert_eq!(bundle.detections[&1][1].embedding, Some(vec![0.0, 0.6, 0.8]));
        assert_eq!(bundle.frame_count, 1);
        let stray = parse_embeddings("1,2,1,0\n").unwrap();
        assert!(SequenceBundle::new(dets, Some(&stray), None).is_err());
    }

    #[test]
    fn empty_config_is_default() {
        let c = parse_config("").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn config_sections_override() {
        let c = parse_config(
            "[tracker]\nmax_age = 10\nmotion = \"kf\"\nassoc = \"iou\"\n\
             [fishiou]\nw1=1.0\nw2=0.3\nw3=0.1\nw4=0.2\nw5=0.4\nfront = \"right\"\n\
             [ukf]\nalpha = 0.5\n[sim]\nn_fish = 3\nrng = \"chacha20\"\n",
        )
        .unwrap();
        assert_eq!(c.tracker.max_age, 10);
        assert_eq!(c.tracker.motion, MotionKind::Kf);
        assert_eq!(c.tracker.assoc, AssocMetric::Iou);
        assert_eq!(c.tracker.fish_iou.weights, [1.0, 0.3, 0.1, 0.2, 0.4]);
        assert_eq!(c.tracker.fish_iou.front, FrontEdge::Right);
        assert_eq!(c.tracker.ukf.alpha, 0.5);
        assert_eq!(c.sim.n_fish, 3);
    }

    #[test]
    fn config_rejects_unknown_and_invalid() {
        let err = parse_config("[tracker]\nmax_aeg = 3\n").unwrap_err();
        assert!(err.contains("max_aeg"), "{err}");
        assert!(parse_config("[trackr]\n").is_err());
        assert!(parse_config("[fishiou]\nalpha = 0.6\ngamma = 0.5\n").is_err());
        assert!(parse_config("[tracker]\ntau_low = 0.7\n").is_err());
        assert!(parse_config("[sim]\nmiss_prob = 2.0\n").is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_detections(Path::new("/nonexistent/dets.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dets.txt"));
    }
}
