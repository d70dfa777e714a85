//! Linear constant-velocity Kalman filter in the SORT layout
//! `[cx, cy, area, aspect, vx, vy, v_area]`, used as the motion baseline.

use nalgebra::{DMatrix, DVector};

use super::linalg::{psd_repair, symmetrize};
use super::ukf::StateEstimate;
use super::MotionError;

pub const KF_STATE_DIM: usize = 7;

/// Transition matrix for a step of `dt` frames.
pub fn transition_matrix(dt: f64) -> DMatrix<f64> {
    let mut f = DMatrix::identity(KF_STATE_DIM, KF_STATE_DIM);
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    f[(2, 6)] = dt;
    f
}

pub fn observation_matrix() -> DMatrix<f64> {
    let mut h = DMatrix::zeros(4, KF_STATE_DIM);
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearKalman {
    pub estimate: StateEstimate,
    pub transition: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
}

impl LinearKalman {
    pub fn predict(&mut self) {
        let f = &self.transition;
        let mean = f * &self.estimate.mean;
        let cov = f * &self.estimate.covariance * f.transpose() + &self.process_noise;
        self.estimate = StateEstimate::new(mean, symmetrize(&cov));
    }

    pub fn update(&mut self, z: &DVector<f64>) -> Result<(), MotionError> {
        let h = &self.observation;
        let p = &self.estimate.covariance;
        let s = symmetrize(&(h * p * h.transpose() + &self.measurement_noise));
        let s_inv = s
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| MotionError::NumericalDegeneracy("innovation covariance is singular".into()))?;
        let gain = p * h.transpose() * s_inv;
        let mean = &self.estimate.mean + &gain * (z - h * &self.estimate.mean);
        let n = p.nrows();
        let cov = (DMatrix::identity(n, n) - &gain * h) * p;
        self.estimate = StateEstimate::new(mean, psd_repair(&cov));
        Ok(())
    }
}
