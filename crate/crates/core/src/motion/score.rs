use nalgebra::{Matrix2, Vector2};

use super::MotionError;

/// Constant-velocity Kalman filter over a track's detection confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFilter {
    pub score: f64,
    pub score_rate: f64,
    pub covariance: Matrix2<f64>,
    process_noise: Matrix2<f64>,
    measurement_noise: f64,
}

impl ScoreFilter {
    pub fn new(initial_score: f64) -> Result<Self, MotionError> {
        check_score(initial_score)?;
        Ok(Self {
            score: initial_score,
            score_rate: 0.0,
            covariance: Matrix2::new(0.1, 0.0, 0.0, 0.01),
            process_noise: Matrix2::new(1e-4, 0.0, 0.0, 1e-5),
            measurement_noise: 0.01,
        })
    }

    /// Predicted score for the next frame, clamped to `[0, 1]`.
    pub fn predicted(&self) -> f64 {
        (self.score + self.score_rate).clamp(0.0, 1.0)
    }

    /// Advances the filter one frame and returns the clamped predicted score.
    pub fn predict(&mut self) -> f64 {
        let f = Matrix2::new(1.0, 1.0, 0.0, 1.0);
        let x = f * Vector2::new(self.score, self.score_rate);
        self.score = x[0].clamp(0.0, 1.0);
        self.score_rate = x[1];
        self.covariance = f * self.covariance * f.transpose() + self.process_noise;
        self.score
    }

    pub fn update(&mut self, observed: f64) -> Result<(), MotionError> {
        check_score(observed)?;
        let p = self.covariance;
        let s = p[(0, 0)] + self.measurement_noise;
        let k = Vector2::new(p[(0, 0)] / s, p[(1, 0)] / s);
        let innovation = observed - self.score;
        self.score += k[0] * innovation;
        self.score_rate += k[1] * innovation;
        let h = Vector2::new(1.0, 0.0).transpose();
        let updated = (Matrix2::identity() - k * h) * p;
        self.covariance = (updated + updated.transpose()) * 0.5;
        Ok(())
    }
}

fn check_score(s: f64) -> Result<(), MotionError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(MotionError::ScoreOutOfRange(s))
    }
}
