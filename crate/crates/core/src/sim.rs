//! Seeded synthetic fish sequences and kinematic summaries.
//!
//! Each fish follows constant turn-rate and velocity kinematics whose speed
//! and turn rate are Ornstein–Uhlenbeck processes, reflecting off the arena
//! walls. A separate detector model drops, jitters and scores the ground
//! truth and sprinkles false positives. Every fish and the detector layer
//! draw from their own stream of a counter-based ChaCha generator, so adding
//! fish never perturbs existing ones.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha12Rng, ChaCha20Rng, ChaCha8Rng};
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::Detection;
use crate::geometry::BoundingBox;
use crate::motion::ukf::wrap_angle;
use crate::trajectory::TrajectorySet;

/// Box corners are snapped to multiples of this so MOT text files written
/// with shortest round-trip formatting reproduce them exactly.
pub const COORD_QUANTUM: f64 = 1.0 / 256.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RngAlgorithm {
    #[default]
    ChaCha8,
    ChaCha12,
    ChaCha20,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub rng: RngAlgorithm,
    pub seed: u64,
    pub n_fish: usize,
    pub n_frames: u32,
    pub arena_width: f64,
    pub arena_height: f64,
    /// Long-run mean speed, px/frame.
    pub speed_mean: f64,
    /// Per-frame pull toward the mean, in (0, 1].
    pub speed_reversion: f64,
    /// Long-run standard deviation of speed, px/frame.
    pub speed_sigma: f64,
    pub turn_reversion: f64,
    /// Long-run standard deviation of turn rate, rad/frame.
    pub turn_sigma: f64,
    /// Mean body box area, px².
    pub area_mean: f64,
    /// Log-normal spread of per-fish area.
    pub area_jitter: f64,
    /// Mean width/height ratio.
    pub aspect_mean: f64,
    pub aspect_jitter: f64,
    /// Detector center noise, px.
    pub det_center_sigma: f64,
    /// Detector width/height noise, fraction.
    pub det_size_sigma: f64,
    pub miss_prob: f64,
    /// Mean false positives per frame.
    pub fp_rate: f64,
    pub score_mean: f64,
    pub score_sigma: f64,
    pub fp_score_mean: f64,
    pub fp_score_sigma: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            rng: RngAlgorithm::ChaCha8,
            seed: 0,
            n_fish: 10,
            n_frames: 500,
            arena_width: 1280.0,
            arena_height: 720.0,
            speed_mean: 4.0,
            speed_reversion: 0.05,
            speed_sigma: 1.0,
            turn_reversion: 0.1,
            turn_sigma: 0.05,
            area_mean: 800.0,
            area_jitter: 0.2,
            aspect_mean: 2.5,
            aspect_jitter: 0.3,
            det_center_sigma: 1.0,
            det_size_sigma: 0.05,
            miss_prob: 0.05,
            fp_rate: 0.5,
            score_mean: 0.85,
            score_sigma: 0.08,
            fp_score_mean: 0.35,
            fp_score_sigma: 0.15,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if !(self.arena_width > 0.0 && self.arena_height > 0.0) {
            return bad("arena must have positive width and height".into());
        }
        for (name, v) in [("miss_prob", self.miss_prob), ("score_mean", self.score_mean), ("fp_score_mean", self.fp_score_mean)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1] (got {v})"));
            }
        }
        for (name, v) in [("speed_reversion", self.speed_reversion), ("turn_reversion", self.turn_reversion)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must lie in (0, 1] (got {v})"));
            }
        }
        let non_negative = [
            ("speed_mean", self.speed_mean),
            ("speed_sigma", self.speed_sigma),
            ("turn_sigma", self.turn_sigma),
            ("area_jitter", self.area_jitter),
            ("aspect_jitter", self.aspect_jitter),
            ("det_center_sigma", self.det_center_sigma),
            ("det_size_sigma", self.det_size_sigma),
            ("fp_rate", self.fp_rate),
            ("score_sigma", self.score_sigma),
            ("fp_score_sigma", self.fp_score_sigma),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative (got {v})"));
            }
        }
        if !(self.area_mean >= 4.0 && self.aspect_mean > 0.0) {
            return bad("area_mean must be at least 4 px² and aspect_mean positive".into());
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> Box<dyn RngCore> {
        match self.rng {
            RngAlgorithm::ChaCha8 => {
                let mut r = ChaCha8Rng::seed_from_u64(self.seed);
                r.set_stream(stream);
                Box::new(r)
            }
            RngAlgorithm::ChaCha12 => {
                let mut r = ChaCha12Rng::seed_from_u64(self.seed);
                r.set_stream(stream);
                Box::new(r)
            }
            RngAlgorithm::ChaCha20 => {
                let mut r = ChaCha20Rng::seed_from_u64(self.seed);
                r.set_stream(stream);
                Box::new(r)
            }
        }
    }

    fn body_size(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let area = self.area_mean * (self.area_jitter * normal(rng)).exp();
        let aspect = (self.aspect_mean + self.aspect_jitter * normal(rng)).max(0.2);
        ((area * aspect).sqrt(), (area / aspect).sqrt())
    }
}

const DETECTOR_STREAM: u64 = 0;

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn quantize(v: f64) -> f64 {
    (v / COORD_QUANTUM).round() * COORD_QUANTUM
}

fn quantized_box(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    let (x1, x2) = (quantize(cx - w / 2.0), quantize(cx + w / 2.0));
    let (y1, y2) = (quantize(cy - h / 2.0), quantize(cy + h / 2.0));
    // sizes are at least a couple of pixels, so snapping keeps x2 > x1
    BoundingBox::new(x1, y1, x2.max(x1 + COORD_QUANTUM), y2.max(y1 + COORD_QUANTUM))
        .expect("snapped box keeps positive extent")
}

/// Innovation scale that makes `sigma` the stationary standard deviation
/// of `x ← x + r (mean − x) + s·N(0, 1)`.
fn ou_innovation(sigma: f64, reversion: f64) -> f64 {
    sigma * (1.0 - (1.0 - reversion).powi(2)).sqrt()
}

fn reflect(pos: f64, limit: f64) -> (f64, bool) {
    if pos < 0.0 {
        ((-pos).min(limit), true)
    } else if pos > limit {
        ((2.0 * limit - pos).max(0.0), true)
    } else {
        (pos, false)
    }
}

/// Ground-truth trajectories: identities `1..=n_fish`, frames `1..=n_frames`.
pub fn simulate(p: &SimParams) -> Result<TrajectorySet, SimError> {
    p.validate()?;
    let mut gt = TrajectorySet::new();
    let speed_step = ou_innovation(p.speed_sigma, p.speed_reversion);
    let turn_step = ou_innovation(p.turn_sigma, p.turn_reversion);

    for fish in 0..p.n_fish {
        let id = fish as u64 + 1;
        let mut rng = p.rng(id);
        let rng = rng.as_mut();
        let (w, h) = p.body_size(rng);
        let mut x = rng.random_range(0.1..0.9) * p.arena_width;
        let mut y = rng.random_range(0.1..0.9) * p.arena_height;
        let mut heading = rng.random_range(-PI..PI);
        let mut speed = (p.speed_mean + p.speed_sigma * normal(rng)).max(0.0);
        let mut turn = p.turn_sigma * normal(rng);

        for frame in 1..=p.n_frames {
            gt.insert(frame, id, quantized_box(x, y, w, h), None).expect("one entry per fish per frame");

            speed = (speed + p.speed_reversion * (p.speed_mean - speed) + speed_step * normal(rng)).max(0.0);
            turn += -p.turn_reversion * turn + turn_step * normal(rng);
            let next_heading = heading + turn;
            if turn.abs() > 1e-9 {
                x += speed / turn * (next_heading.sin() - heading.sin());
                y += speed / turn * (heading.cos() - next_heading.cos());
            } else {
                x += speed * heading.cos();
                y += speed * heading.sin();
            }
            heading = next_heading;
            let (rx, hit_x) = reflect(x, p.arena_width);
            let (ry, hit_y) = reflect(y, p.arena_height);
            x = rx;
            y = ry;
            if hit_x {
                heading = PI - heading;
            }
            if hit_y {
                heading = -heading;
            }
            heading = wrap_angle(heading);
        }
    }
    Ok(gt)
}

/// Detector model over `gt`: per-frame detections in gt order followed by
/// false positives. Frames run from 1 to the later of `n_frames` and the
/// last gt frame.
pub fn corrupt(gt: &TrajectorySet, p: &SimParams) -> Result<BTreeMap<u32, Vec<Detection>>, SimError> {
    p.validate()?;
    let mut rng = p.rng(DETECTOR_STREAM);
    let rng = rng.as_mut();
    let fp_count = if p.fp_rate > 0.0 {
        Some(Poisson::new(p.fp_rate).map_err(|e| SimError::InvalidParams(e.to_string()))?)
    } else {
        None
    };
    let exact = p.det_center_sigma == 0.0 && p.det_size_sigma == 0.0;
    let last = p.n_frames.max(gt.last_frame().unwrap_or(0));
    let score = |rng: &mut dyn RngCore, mean: f64, sigma: f64| (mean + sigma * normal(rng)).clamp(0.0, 1.0);

    let mut out = BTreeMap::new();
    for frame in 1..=last {
        let mut dets = Vec::new();
        for e in gt.frame(frame) {
            if rng.random::<f64>() < p.miss_prob {
                continue;
            }
            let bbox = if exact {
                e.bbox
            } else {
                let (cx, cy) = e.bbox.center();
                let cx = cx + p.det_center_sigma * normal(rng);
                let cy = cy + p.det_center_sigma * normal(rng);
                let w = e.bbox.width() * (1.0 + p.det_size_sigma * normal(rng)).max(0.2);
                let h = e.bbox.height() * (1.0 + p.det_size_sigma * normal(rng)).max(0.2);
                quantized_box(cx, cy, w, h)
            };
            let s = score(rng, p.score_mean, p.score_sigma);
            dets.push(Detection::new(bbox, s).expect("score clamped to [0, 1]"));
        }
        if let Some(poisson) = &fp_count {
            let n = poisson.sample(rng) as usize;
            for _ in 0..n {
                let (w, h) = p.body_size(rng);
                let cx = rng.random_range(0.0..=p.arena_width);
                let cy = rng.random_range(0.0..=p.arena_height);
                let s = score(rng, p.fp_score_mean, p.fp_score_sigma);
                dets.push(Detection::new(quantized_box(cx, cy, w, h), s).expect("score clamped to [0, 1]"));
            }
        }
        out.insert(frame, dets);
    }
    Ok(out)
}

/// Per-frame averages over all identities with a defined value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameKinematics {
    pub frame: u32,
    pub mean_speed: Option<f64>,
    pub mean_abs_angular_velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicStats {
    pub series: Vec<FrameKinematics>,
    /// Counts of displacement headings in equal bins over `(−π, π]`.
    pub direction_histogram: Vec<u64>,
    /// Mean over every speed sample.
    pub mean_speed: Option<f64>,
    /// Mean over every |angular velocity| sample.
    pub mean_abs_angular_velocity: Option<f64>,
}

pub const DEFAULT_DIRECTION_BINS: usize = 36;

/// Speed is the center displacement between consecutive frames; angular
/// velocity is the wrapped change in displacement heading over two
/// consecutive displacements, undefined when either displacement is zero.
pub fn kinematic_stats(t: &TrajectorySet, direction_bins: usize) -> KinematicStats {
    let bins = direction_bins.max(1);
    let mut per_frame: BTreeMap<u32, (f64, u32, f64, u32)> = BTreeMap::new();
    let mut histogram = vec![0u64; bins];
    let (mut speed_sum, mut speed_n, mut ang_sum, mut ang_n) = (0.0, 0u64, 0.0, 0u64);

    for samples in t.by_identity().values() {
        let mut prev: Option<(u32, (f64, f64))> = None;
        let mut prev_heading: Option<(u32, f64)> = None;
        for &(frame, b) in samples {
            let c = b.center();
            if let Some((pf, pc)) = prev {
                if pf + 1 == frame {
                    let (dx, dy) = (c.0 - pc.0, c.1 - pc.1);
                    let speed = dx.hypot(dy);
                    let slot = per_frame.entry(frame).or_default();
                    slot.0 += speed;
                    slot.1 += 1;
                    speed_sum += speed;
                    speed_n += 1;
                    if speed > 1e-12 {
                        let heading = dy.atan2(dx);
                        let idx = (((heading + PI) / (2.0 * PI)) * bins as f64).floor() as usize;
                        histogram[idx.min(bins - 1)] += 1;
                        if let Some((hf, ph)) = prev_heading {
                            if hf + 1 == frame {
                                let w = wrap_angle(heading - ph).abs();
                                slot.2 += w;
                                slot.3 += 1;
                                ang_sum += w;
                                ang_n += 1;
                            }
                        }
                        prev_heading = Some((frame, heading));
                    } else {
                        prev_heading = None;
                    }
                } else {
                    prev_heading = None;
                }
            }
            prev = Some((frame, c));
        }
    }

    let mean = |s: f64, n: u64| if n > 0 { Some(s / n as f64) } else { None };
    let series = match (t.iter().next(), t.last_frame()) {
        (Some((first, _)), Some(last)) => (first..=last)
            .map(|frame| {
                let (ss, sn, aa, an) = per_frame.get(&frame).copied().unwrap_or_default();
                FrameKinematics {
                    frame,
                    mean_speed: mean(ss, sn as u64),
                    mean_abs_angular_velocity: mean(aa, an as u64),
                }
            })
            .collect(),
        _ => Vec::new(),
    };
    KinematicStats {
        series,
        direction_histogram: histogram,
        mean_speed: mean(speed_sum, speed_n),
        mean_abs_angular_velocity: mean(ang_sum, ang_n),
    }
}
