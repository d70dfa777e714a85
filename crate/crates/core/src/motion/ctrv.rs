//! Constant turn-rate and velocity dynamics with a box-scale extension.
//!
//! State layout (n = 8): `[cx, cy, speed, heading, turn_rate, area,
//! area_rate, aspect]`. Measurements are `[cx, cy, area, aspect]`.

use nalgebra::DVector;

use super::ukf::{wrap_angle, ProcessModel};
use crate::geometry::{BoundingBox, GeometryError};

pub const STATE_DIM: usize = 8;
pub const MEAS_DIM: usize = 4;

pub const IDX_CX: usize = 0;
pub const IDX_CY: usize = 1;
pub const IDX_SPEED: usize = 2;
pub const IDX_HEADING: usize = 3;
pub const IDX_TURN: usize = 4;
pub const IDX_AREA: usize = 5;
pub const IDX_AREA_RATE: usize = 6;
pub const IDX_ASPECT: usize = 7;

/// Below this turn rate (rad/frame) the straight-line limit is used.
pub const TURN_EPS: f64 = 1e-6;

pub const MIN_AREA: f64 = 1.0;
pub const MIN_ASPECT: f64 = 0.05;
pub const MAX_ASPECT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub cx: f64,
    pub cy: f64,
    /// Pixels per frame along `heading`.
    pub speed: f64,
    pub heading: f64,
    /// Radians per frame.
    pub turn_rate: f64,
    pub area: f64,
    pub area_rate: f64,
    /// Width over height.
    pub aspect: f64,
}

impl MotionState {
    /// Stationary state centered on `b`.
    pub fn from_box(b: &BoundingBox) -> Self {
        let (cx, cy) = b.center();
        Self {
            cx,
            cy,
            speed: 0.0,
            heading: 0.0,
            turn_rate: 0.0,
            area: b.area(),
            area_rate: 0.0,
            aspect: b.aspect(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.cx,
            self.cy,
            self.speed,
            self.heading,
            self.turn_rate,
            self.area,
            self.area_rate,
            self.aspect,
        ])
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            cx: v[IDX_CX],
            cy: v[IDX_CY],
            speed: v[IDX_SPEED],
            heading: v[IDX_HEADING],
            turn_rate: v[IDX_TURN],
            area: v[IDX_AREA],
            area_rate: v[IDX_AREA_RATE],
            aspect: v[IDX_ASPECT],
        }
    }

    pub fn to_box(&self) -> Result<BoundingBox, GeometryError> {
        BoundingBox::from_center_area_aspect(
            self.cx,
            self.cy,
            self.area.max(MIN_AREA),
            self.aspect.clamp(MIN_ASPECT, MAX_ASPECT),
        )
    }
}

pub fn ctrv_transition(s: &MotionState, dt: f64) -> MotionState {
    let mut next = *s;
    let heading_next = s.heading + s.turn_rate * dt;
    if s.turn_rate.abs() > TURN_EPS {
        let r = s.speed / s.turn_rate;
        next.cx += r * (heading_next.sin() - s.heading.sin());
        next.cy += r * (s.heading.cos() - heading_next.cos());
    } else {
        next.cx += s.speed * dt * s.heading.cos();
        next.cy += s.speed * dt * s.heading.sin();
    }
    next.heading = wrap_angle(heading_next);
    next.area += s.area_rate * dt;
    next
}

/// `[cx, cy, area, aspect]`.
pub fn measure(s: &MotionState) -> DVector<f64> {
    DVector::from_vec(vec![s.cx, s.cy, s.area, s.aspect])
}

pub fn box_to_measurement(b: &BoundingBox) -> DVector<f64> {
    let (cx, cy) = b.center();
    DVector::from_vec(vec![cx, cy, b.area(), b.aspect()])
}

pub fn measurement_to_box(z: &DVector<f64>) -> Result<BoundingBox, GeometryError> {
    BoundingBox::from_center_area_aspect(z[0], z[1], z[2], z[3])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CtrvModel;

impl ProcessModel for CtrvModel {
    fn transition(&self, x: &DVector<f64>, dt: f64) -> DVector<f64> {
        ctrv_transition(&MotionState::from_vector(x), dt).to_vector()
    }

    fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        measure(&MotionState::from_vector(x))
    }

    fn heading_index(&self) -> Option<usize> {
        Some(IDX_HEADING)
    }

    fn constrain(&self, x: &mut DVector<f64>) {
        x[IDX_HEADING] = wrap_angle(x[IDX_HEADING]);
        x[IDX_AREA] = x[IDX_AREA].max(MIN_AREA);
        x[IDX_ASPECT] = x[IDX_ASPECT].clamp(MIN_ASPECT, MAX_ASPECT);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn state(speed: f64, heading: f64, turn_rate: f64) -> MotionState {
        MotionState { cx: 0.0, cy: 0.0, speed, heading, turn_rate, area: 100.0, area_rate: 0.0, aspect: 1.0 }
    }

    #[test]
    fn straight_line_limit() {
        let s = ctrv_transition(&state(5.0, 0.0, 0.0), 1.0);
        assert_eq!((s.cx, s.cy), (5.0, 0.0));
    }

    #[test]
    fn quarter_turn_arc() {
        let s = ctrv_transition(&state(1.0, 0.0, FRAC_PI_2), 1.0);
        let r = 2.0 / PI;
        assert!((s.cx - r).abs() < 1e-12);
        assert!((s.cy - r).abs() < 1e-12);
        assert!((s.heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn straight_steps_compose() {
        let mut s = state(3.0, 0.7, 0.0);
        s.area_rate = 2.0;
        let twice = ctrv_transition(&ctrv_transition(&s, 1.0), 1.0);
        let once = ctrv_transition(&s, 2.0);
        assert!((twice.cx - once.cx).abs() < 1e-12);
        assert!((twice.cy - once.cy).abs() < 1e-12);
        assert!((twice.area - once.area).abs() < 1e-12);
    }

    #[test]
    fn tiny_turn_rate_matches_straight_branch() {
        let a = ctrv_transition(&state(4.0, 0.3, 2e-6), 1.0);
        let b = ctrv_transition(&state(4.0, 0.3, 0.0), 1.0);
        assert!((a.cx - b.cx).abs() < 1e-4 && (a.cy - b.cy).abs() < 1e-4);
    }

    #[test]
    fn heading_stays_wrapped() {
        let mut s = state(1.0, 3.0, 0.9);
        for _ in 0..100 {
            s = ctrv_transition(&s, 1.0);
            assert!(s.heading > -PI && s.heading <= PI);
        }
    }

    #[test]
    fn measurement_round_trip() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        let z = box_to_measurement(&b);
        assert_eq!(z.as_slice(), &[5.0, 10.0, 200.0, 0.5]);
        let back = measurement_to_box(&z).unwrap();
        for (a, e) in [back.x1(), back.y1(), back.x2(), back.y2()].iter().zip([0.0, 0.0, 10.0, 20.0]) {
            assert!((a - e).abs() < 1e-12);
        }
        let s = MotionState::from_box(&b);
        assert_eq!(measure(&s), z);
    }
}
