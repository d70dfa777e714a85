//! Per-track motion and confidence filtering.
//!
//! [`BoxFilter`] wraps either the CTRV unscented filter (the default) or the
//! linear constant-velocity Kalman baseline behind one box-in, box-out
//! interface. Noise covariances are scaled to the box at track birth.

pub mod ctrv;
pub mod kf;
pub mod linalg;
pub mod score;
pub mod ukf;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use ctrv::{box_to_measurement, measurement_to_box, CtrvModel, MotionState};
use kf::LinearKalman;
pub use linalg::psd_repair;
pub use score::ScoreFilter;
pub use ukf::{generate_sigma_points, SigmaSet, StateEstimate, UkfParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Unscented filter over constant turn-rate and velocity dynamics.
    #[default]
    Ukf,
    /// Linear constant-velocity Kalman filter.
    Kf,
}

/// Filter tuning. Standard deviations marked "× diag" scale with the box
/// diagonal at birth, "× area" with its area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to `3 − n`.
    pub kappa: Option<f64>,
    /// Measurement position std, × diag.
    pub meas_pos: f64,
    /// Measurement area std, × area.
    pub meas_area: f64,
    /// Measurement aspect std, × aspect.
    pub meas_aspect: f64,
    pub proc_pos: f64,
    /// Speed (or velocity) random walk std per frame, × diag.
    pub proc_speed: f64,
    /// Radians per frame.
    pub proc_heading: f64,
    /// Turn-rate random walk std, rad/frame per frame.
    pub proc_turn: f64,
    pub proc_area: f64,
    pub proc_area_rate: f64,
    pub proc_aspect: f64,
    /// Initial speed std, × diag.
    pub init_speed: f64,
    /// Initial heading std, radians.
    pub init_heading: f64,
    pub init_turn: f64,
    pub init_area_rate: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: None,
            meas_pos: 0.05,
            meas_area: 0.1,
            meas_aspect: 0.1,
            proc_pos: 0.02,
            proc_speed: 0.01,
            proc_heading: 0.03,
            proc_turn: 0.06,
            proc_area: 0.01,
            proc_area_rate: 0.005,
            proc_aspect: 0.01,
            init_speed: 0.25,
            init_heading: PI / 2.0,
            init_turn: 0.1,
            init_area_rate: 0.02,
        }
    }
}

impl UkfConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        let stds = [
            self.meas_pos,
            self.meas_area,
            self.meas_aspect,
            self.proc_pos,
            self.proc_speed,
            self.proc_heading,
            self.proc_turn,
            self.proc_area,
            self.proc_area_rate,
            self.proc_aspect,
            self.init_speed,
            self.init_heading,
            self.init_turn,
            self.init_area_rate,
        ];
        if stds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(MotionError::InvalidParams("noise scales must be finite and non-negative".into()));
        }
        if [self.meas_pos, self.meas_area, self.meas_aspect].iter().any(|s| *s <= 0.0) {
            return Err(MotionError::InvalidParams("measurement noise must be strictly positive".into()));
        }
        let params = UkfParams {
            alpha: self.alpha,
            beta: self.beta,
            kappa: self.kappa.unwrap_or(3.0 - ctrv::STATE_DIM as f64),
            process_noise: DMatrix::zeros(0, 0),
            measurement_noise: DMatrix::zeros(0, 0),
        };
        params.validate(ctrv::STATE_DIM)
    }

    fn measurement_noise(&self, b: &BoundingBox) -> DMatrix<f64> {
        let pos = self.meas_pos * b.diagonal();
        let area = self.meas_area * b.area();
        let aspect = self.meas_aspect * b.aspect();
        DMatrix::from_diagonal(&DVector::from_vec(vec![pos * pos, pos * pos, area * area, aspect * aspect]))
    }

    /// Per-track unscented filter parameters for a track born on `b`.
    pub fn ukf_params_for(&self, b: &BoundingBox) -> UkfParams {
        let d = b.diagonal();
        let a = b.area();
        let q = [
            self.proc_pos * d,
            self.proc_pos * d,
            self.proc_speed * d,
            self.proc_heading,
            self.proc_turn,
            self.proc_area * a,
            self.proc_area_rate * a,
            self.proc_aspect * b.aspect(),
        ];
        UkfParams {
            alpha: self.alpha,
            beta: self.beta,
            kappa: self.kappa.unwrap_or(3.0 - ctrv::STATE_DIM as f64),
            process_noise: DMatrix::from_diagonal(&DVector::from_iterator(8, q.iter().map(|s| s * s))),
            measurement_noise: self.measurement_noise(b),
        }
    }

    fn ukf_initial_covariance(&self, b: &BoundingBox) -> DMatrix<f64> {
        let d = b.diagonal();
        let pos = self.meas_pos * d;
        let a = b.area();
        let stds = [
            pos,
            pos,
            self.init_speed * d,
            self.init_heading,
            self.init_turn,
            self.meas_area * a,
            self.init_area_rate * a,
            self.meas_aspect * b.aspect(),
        ];
        DMatrix::from_diagonal(&DVector::from_iterator(8, stds.iter().map(|s| s * s)))
    }

    fn kf_for(&self, b: &BoundingBox) -> LinearKalman {
        let d = b.diagonal();
        let a = b.area();
        let r = b.aspect();
        let z = box_to_measurement(b);
        let mean = DVector::from_vec(vec![z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        let pos = self.meas_pos * d;
        let init = [
            pos,
            pos,
            self.meas_area * a,
            self.meas_aspect * r,
            self.init_speed * d,
            self.init_speed * d,
            self.init_area_rate * a,
        ];
        let q = [
            self.proc_pos * d,
            self.proc_pos * d,
            self.proc_area * a,
            self.proc_aspect * r,
            self.proc_speed * d,
            self.proc_speed * d,
            self.proc_area_rate * a,
        ];
        let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|s| s * s)));
        LinearKalman {
            estimate: StateEstimate::new(mean, diag(&init)),
            transition: kf::transition_matrix(1.0),
            observation: kf::observation_matrix(),
            process_noise: diag(&q),
            measurement_noise: self.measurement_noise(b),
        }
    }
}

/// CTRV unscented filter for one box track.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfBoxFilter {
    pub estimate: StateEstimate,
    pub params: UkfParams,
    updates: u32,
    frames_since_update: u32,
    last_center: (f64, f64),
}

impl UkfBoxFilter {
    pub fn new(cfg: &UkfConfig, b: &BoundingBox) -> Result<Self, MotionError> {
        let params = cfg.ukf_params_for(b);
        params.validate(ctrv::STATE_DIM)?;
        Ok(Self {
            estimate: StateEstimate::new(MotionState::from_box(b).to_vector(), cfg.ukf_initial_covariance(b)),
            params,
            updates: 0,
            frames_since_update: 0,
            last_center: b.center(),
        })
    }

    pub fn state(&self) -> MotionState {
        MotionState::from_vector(&self.estimate.mean)
    }

    pub fn predict(&mut self) -> Result<(), MotionError> {
        self.estimate = ukf::predict(&CtrvModel, &self.estimate, &self.params, 1.0)?;
        self.frames_since_update += 1;
        Ok(())
    }

    pub fn update(&mut self, b: &BoundingBox) -> Result<(), MotionError> {
        let z = box_to_measurement(b);
        self.estimate = ukf::update(&CtrvModel, &self.estimate, &z, &self.params)?;
        let center = b.center();
        if self.updates == 0 && self.frames_since_update > 0 {
            // Speed and heading are unobservable from a zero-speed start:
            // sigma points spread along speed and heading separately never
            // produce motion off the initial axis. Seed them from the first
            // displacement instead.
            let gap = self.frames_since_update as f64;
            let (dx, dy) = (center.0 - self.last_center.0, center.1 - self.last_center.1);
            self.estimate.mean[ctrv::IDX_SPEED] = dx.hypot(dy) / gap;
            self.estimate.mean[ctrv::IDX_HEADING] = dy.atan2(dx);
        }
        self.updates += 1;
        self.frames_since_update = 0;
        self.last_center = center;
        Ok(())
    }
}

/// Motion filter for one track.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxFilter {
    Ukf(Box<UkfBoxFilter>),
    Kf(Box<LinearKalman>),
}

impl BoxFilter {
    pub fn new(kind: MotionKind, cfg: &UkfConfig, b: &BoundingBox) -> Result<Self, MotionError> {
        Ok(match kind {
            MotionKind::Ukf => BoxFilter::Ukf(Box::new(UkfBoxFilter::new(cfg, b)?)),
            MotionKind::Kf => BoxFilter::Kf(Box::new(cfg.kf_for(b))),
        })
    }

    pub fn predict(&mut self) -> Result<(), MotionError> {
        match self {
            BoxFilter::Ukf(f) => f.predict(),
            BoxFilter::Kf(f) => {
                f.predict();
                Ok(())
            }
        }
    }

    pub fn update(&mut self, b: &BoundingBox) -> Result<(), MotionError> {
        match self {
            BoxFilter::Ukf(f) => f.update(b),
            BoxFilter::Kf(f) => f.update(&box_to_measurement(b)),
        }
    }

    /// Current estimate as `[cx, cy, area, aspect]`.
    pub fn measurement(&self) -> DVector<f64> {
        match self {
            BoxFilter::Ukf(f) => ctrv::measure(&f.state()),
            BoxFilter::Kf(f) => f.estimate.mean.rows(0, 4).into_owned(),
        }
    }

    /// Box implied by the current estimate; area and aspect are clamped to
    /// the ranges the filter keeps them in.
    pub fn current_box(&self) -> Result<BoundingBox, MotionError> {
        let mut z = self.measurement();
        z[2] = z[2].max(ctrv::MIN_AREA);
        z[3] = z[3].clamp(ctrv::MIN_ASPECT, ctrv::MAX_ASPECT);
        measurement_to_box(&z)
            .map_err(|e| MotionError::NumericalDegeneracy(format!("estimate yields no valid box: {e}")))
    }

    pub fn center(&self) -> (f64, f64) {
        let z = self.measurement();
        (z[0], z[1])
    }
}

/// Root-mean-square one-step-ahead center prediction error of a filter run
/// over a single trajectory. `truth[k]` is the true box at frame `k`;
/// `observed[k]` the (possibly missing) measurement fed to the filter. The
/// filter is born on the first observation and scored on every later frame
/// that has a true box.
pub fn one_step_prediction_errors(
    kind: MotionKind,
    cfg: &UkfConfig,
    truth: &[Option<BoundingBox>],
    observed: &[Option<BoundingBox>],
) -> Result<Vec<f64>, MotionError> {
    let mut errors = Vec::new();
    let mut filter: Option<BoxFilter> = None;
    for (t, o) in truth.iter().zip(observed) {
        if let Some(f) = filter.as_mut() {
            f.predict()?;
            if let Some(t) = t {
                let (px, py) = f.center();
                let (tx, ty) = t.center();
                errors.push((px - tx).hypot(py - ty));
            }
            if let Some(o) = o {
                f.update(o)?;
            }
        } else if let Some(o) = o {
            filter = Some(BoxFilter::new(kind, cfg, o)?);
        }
    }
    Ok(errors)
}
