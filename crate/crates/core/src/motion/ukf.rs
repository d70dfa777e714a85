//! Unscented Kalman filter over an arbitrary process/measurement model.
//!
//! Sigma points use the scaled unscented transform: `λ = α²(n + κ) − n`,
//! mean weights `λ/(n+λ)` and `1/(2(n+λ))`, and a covariance center weight
//! of `λ/(n+λ) + 1 − α² + β`. The square root of `(n+λ)P` is the lower
//! Cholesky factor.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::linalg::{psd_factor, psd_repair, symmetrize};
use super::MotionError;

/// Mean and covariance of a Gaussian state belief.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl StateEstimate {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        debug_assert_eq!(mean.len(), covariance.nrows());
        Self { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Process noise `Q`, added after propagation.
    pub process_noise: DMatrix<f64>,
    /// Measurement noise `R`; must be positive definite.
    pub measurement_noise: DMatrix<f64>,
}

impl UkfParams {
    /// Defaults `α = 1`, `β = 2`, `κ = 3 − n`.
    pub fn with_noise(process_noise: DMatrix<f64>, measurement_noise: DMatrix<f64>) -> Self {
        let n = process_noise.nrows() as f64;
        Self { alpha: 1.0, beta: 2.0, kappa: 3.0 - n, process_noise, measurement_noise }
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }

    pub fn validate(&self, n: usize) -> Result<(), MotionError> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.kappa.is_finite()) {
            return Err(MotionError::InvalidParams("alpha, beta and kappa must be finite".into()));
        }
        if n as f64 + self.lambda(n) <= 0.0 {
            return Err(MotionError::InvalidParams(format!(
                "n + lambda must be positive (n = {n}, lambda = {})",
                self.lambda(n)
            )));
        }
        Ok(())
    }
}

/// `2n + 1` sigma points (one per row) with their mean and covariance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: DMatrix<f64>,
    pub mean_weights: DVector<f64>,
    pub cov_weights: DVector<f64>,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Weighted mean and covariance of the points (plain linear space).
    pub fn reconstruct(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.points.ncols();
        let mut mean = DVector::zeros(n);
        for i in 0..self.len() {
            mean += self.point(i) * self.mean_weights[i];
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..self.len() {
            let d = self.point(i) - &mean;
            cov += &d * d.transpose() * self.cov_weights[i];
        }
        (mean, cov)
    }
}

pub fn generate_sigma_points(e: &StateEstimate, p: &UkfParams) -> Result<SigmaSet, MotionError> {
    let n = e.dim();
    p.validate(n)?;
    let lambda = p.lambda(n);
    let spread = n as f64 + lambda;

    let scaled = symmetrize(&e.covariance) * spread;
    let root = match psd_factor(&scaled) {
        Some(l) => l,
        None => psd_factor(&psd_repair(&scaled)).ok_or_else(|| {
            MotionError::NumericalDegeneracy("covariance could not be factored after repair".into())
        })?,
    };

    let mut points = DMatrix::zeros(2 * n + 1, n);
    points.row_mut(0).copy_from(&e.mean.transpose());
    for i in 0..n {
        let col = root.column(i);
        points.row_mut(i + 1).copy_from(&(&e.mean + col).transpose());
        points.row_mut(i + 1 + n).copy_from(&(&e.mean - col).transpose());
    }

    let w = 1.0 / (2.0 * spread);
    let mut mean_weights = DVector::from_element(2 * n + 1, w);
    let mut cov_weights = DVector::from_element(2 * n + 1, w);
    mean_weights[0] = lambda / spread;
    cov_weights[0] = lambda / spread + (1.0 - p.alpha * p.alpha + p.beta);

    Ok(SigmaSet { points, mean_weights, cov_weights })
}

/// Nonlinear dynamics and observation functions driven by the filter.
pub trait ProcessModel {
    fn transition(&self, x: &DVector<f64>, dt: f64) -> DVector<f64>;
    fn measure(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Index of a state component that lives on the circle `(−π, π]`.
    fn heading_index(&self) -> Option<usize> {
        None
    }

    /// Clamps applied to the mean after each predict and update.
    fn constrain(&self, _x: &mut DVector<f64>) {}
}

pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

fn weighted_mean(
    rows: &[DVector<f64>],
    weights: &DVector<f64>,
    heading: Option<usize>,
) -> DVector<f64> {
    let mut mean = DVector::zeros(rows[0].len());
    for (row, &w) in rows.iter().zip(weights.iter()) {
        mean += row * w;
    }
    if let Some(k) = heading {
        let (mut s, mut c) = (0.0, 0.0);
        for (row, &w) in rows.iter().zip(weights.iter()) {
            s += w * row[k].sin();
            c += w * row[k].cos();
        }
        mean[k] = s.atan2(c);
    }
    mean
}

fn residual(a: &DVector<f64>, b: &DVector<f64>, heading: Option<usize>) -> DVector<f64> {
    let mut d = a - b;
    if let Some(k) = heading {
        d[k] = wrap_angle(d[k]);
    }
    d
}

pub fn predict<M: ProcessModel + ?Sized>(
    model: &M,
    e: &StateEstimate,
    p: &UkfParams,
    dt: f64,
) -> Result<StateEstimate, MotionError> {
    let sigma = generate_sigma_points(e, p)?;
    let heading = model.heading_index();
    let propagated: Vec<DVector<f64>> =
        (0..sigma.len()).map(|i| model.transition(&sigma.point(i), dt)).collect();

    let mut mean = weighted_mean(&propagated, &sigma.mean_weights, heading);
    let n = e.dim();
    let mut cov = p.process_noise.clone();
    for (x, &w) in propagated.iter().zip(sigma.cov_weights.iter()) {
        let d = residual(x, &mean, heading);
        cov += &d * d.transpose() * w;
    }
    debug_assert_eq!(cov.nrows(), n);
    model.constrain(&mut mean);
    let covariance = psd_repair(&cov);
    check_finite(&mean, &covariance)?;
    Ok(StateEstimate { mean, covariance })
}

pub fn update<M: ProcessModel + ?Sized>(
    model: &M,
    e: &StateEstimate,
    z: &DVector<f64>,
    p: &UkfParams,
) -> Result<StateEstimate, MotionError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(MotionError::InvalidMeasurement("measurement has non-finite entries".into()));
    }
    let m = p.measurement_noise.nrows();
    if z.len() != m {
        return Err(MotionError::InvalidMeasurement(format!(
            "expected measurement of length {m}, got {}",
            z.len()
        )));
    }
    let sigma = generate_sigma_points(e, p)?;
    let heading = model.heading_index();
    let states: Vec<DVector<f64>> = (0..sigma.len()).map(|i| sigma.point(i)).collect();
    let observed: Vec<DVector<f64>> = states.iter().map(|x| model.measure(x)).collect();

    let z_hat = weighted_mean(&observed, &sigma.mean_weights, None);
    let n = e.dim();
    let mut p_zz = p.measurement_noise.clone();
    let mut p_xz = DMatrix::zeros(n, m);
    for ((x, zi), &w) in states.iter().zip(&observed).zip(sigma.cov_weights.iter()) {
        let dz = zi - &z_hat;
        let dx = residual(x, &e.mean, heading);
        p_zz += &dz * dz.transpose() * w;
        p_xz += &dx * dz.transpose() * w;
    }
    let p_zz = symmetrize(&p_zz);
    let p_zz_inv = p_zz
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| p_zz.clone().try_inverse())
        .ok_or_else(|| MotionError::NumericalDegeneracy("innovation covariance is singular".into()))?;

    let gain = &p_xz * p_zz_inv;
    let mut mean = &e.mean + &gain * (z - &z_hat);
    if let Some(k) = heading {
        mean[k] = wrap_angle(mean[k]);
    }
    model.constrain(&mut mean);
    let cov = &e.covariance - &gain * &p_zz * gain.transpose();
    let covariance = psd_repair(&cov);
    check_finite(&mean, &covariance)?;
    Ok(StateEstimate { mean, covariance })
}

fn check_finite(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<(), MotionError> {
    if mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MotionError::NumericalDegeneracy("state estimate became non-finite".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::linalg::{asymmetry, min_eigenvalue};
    use proptest::prelude::*;

    fn params(n: usize, alpha: f64, kappa: f64) -> UkfParams {
        UkfParams {
            alpha,
            beta: 2.0,
            kappa,
            process_noise: DMatrix::zeros(n, n),
            measurement_noise: DMatrix::identity(1, 1),
        }
    }

    #[test]
    fn scalar_sigma_points() {
        // λ = 1·(1+2) − 1 = 2, so points are 0, ±√3 and weights 2/3, 1/6, 1/6
        let e = StateEstimate::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1));
        let s = generate_sigma_points(&e, &params(1, 1.0, 2.0)).unwrap();
        let r3 = 3f64.sqrt();
        assert_eq!(s.points[(0, 0)], 0.0);
        assert!((s.points[(1, 0)] - r3).abs() < 1e-15);
        assert!((s.points[(2, 0)] + r3).abs() < 1e-15);
        assert!((s.mean_weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.mean_weights[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((s.mean_weights[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_covariance_collapses_points() {
        let x = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let e = StateEstimate::new(x.clone(), DMatrix::zeros(3, 3));
        let s = generate_sigma_points(&e, &params(3, 1.0, 0.0)).unwrap();
        for i in 0..s.len() {
            assert_eq!(s.point(i), x);
        }
    }

    #[test]
    fn rejects_nonpositive_spread() {
        let e = StateEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2));
        assert!(matches!(
            generate_sigma_points(&e, &params(2, 1.0, -2.0)),
            Err(MotionError::InvalidParams(_))
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    struct Linear {
        f: DMatrix<f64>,
        h: DMatrix<f64>,
    }

    impl ProcessModel for Linear {
        fn transition(&self, x: &DVector<f64>, _dt: f64) -> DVector<f64> {
            &self.f * x
        }
        fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
            &self.h * x
        }
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let model = Linear { f: DMatrix::identity(2, 2), h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]) };
        let e = StateEstimate::new(DVector::from_vec(vec![2.0, 1.0]), DMatrix::identity(2, 2));
        let p = UkfParams::with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1));
        let z = model.measure(&e.mean);
        let post = update(&model, &e, &z, &p).unwrap();
        assert!((&post.mean - &e.mean).abs().max() < 1e-12);
    }

    #[test]
    fn huge_measurement_noise_keeps_prior() {
        let model = Linear { f: DMatrix::identity(2, 2), h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]) };
        let e = StateEstimate::new(DVector::from_vec(vec![2.0, 1.0]), DMatrix::identity(2, 2));
        let p = UkfParams::with_noise(DMatrix::zeros(2, 2), DMatrix::from_element(1, 1, 1e12));
        let post = update(&model, &e, &DVector::from_element(1, 50.0), &p).unwrap();
        assert!((&post.mean - &e.mean).abs().max() < 1e-9);
        assert!((&post.covariance - &e.covariance).abs().max() < 1e-9);
    }

    #[test]
    fn update_rejects_bad_measurement() {
        let model = Linear { f: DMatrix::identity(2, 2), h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]) };
        let e = StateEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2));
        let p = UkfParams::with_noise(DMatrix::zeros(2, 2), DMatrix::identity(1, 1));
        assert!(update(&model, &e, &DVector::from_element(1, f64::NAN), &p).is_err());
        assert!(update(&model, &e, &DVector::zeros(2), &p).is_err());
    }

    fn arb_psd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose()
        })
    }

    proptest! {
        #[test]
        fn sigma_set_reconstructs_moments(p_mat in arb_psd(8), x in proptest::collection::vec(-50.0..50.0f64, 8)) {
            let e = StateEstimate::new(DVector::from_vec(x), p_mat);
            let s = generate_sigma_points(&e, &UkfParams::with_noise(DMatrix::zeros(8, 8), DMatrix::identity(4, 4))).unwrap();
            prop_assert!((s.mean_weights.sum() - 1.0).abs() < 1e-12);
            prop_assert_eq!(s.point(0), e.mean.clone());
            for i in 1..=8 {
                let pair = s.point(i) + s.point(i + 8) - &e.mean * 2.0;
                prop_assert!(pair.abs().max() < 1e-9);
            }
            let (m, c) = s.reconstruct();
            prop_assert!((m - &e.mean).abs().max() < 1e-8);
            prop_assert!((c - &e.covariance).abs().max() < 1e-8);
        }

        #[test]
        fn linear_steps_keep_covariance_healthy(p_mat in arb_psd(3), zs in proptest::collection::vec(-10.0..10.0f64, 10)) {
            let model = Linear {
                f: DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.9]),
                h: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]),
            };
            let p = UkfParams::with_noise(DMatrix::identity(3, 3) * 0.01, DMatrix::identity(1, 1) * 0.5);
            let mut e = StateEstimate::new(DVector::zeros(3), p_mat + DMatrix::identity(3, 3) * 1e-3);
            for z in zs {
                e = predict(&model, &e, &p, 1.0).unwrap();
                prop_assert!(asymmetry(&e.covariance) <= 1e-9);
                prop_assert!(min_eigenvalue(&e.covariance) >= -1e-9);
                e = update(&model, &e, &DVector::from_element(1, z), &p).unwrap();
                prop_assert!(asymmetry(&e.covariance) <= 1e-9);
                prop_assert!(min_eigenvalue(&e.covariance) >= -1e-9);
            }
        }
    }
}
