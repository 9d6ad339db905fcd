//! Random-walk draws, motor noise and IR obstacle sensing.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arena::SIDE_M;

/// Body radius in metres (half the 33 mm robot length).
pub const BODY_RADIUS_M: f64 = 0.0165;
/// Sensor axes relative to the heading.
pub const SENSOR_AXES_RAD: [f64; 3] = [-25.0 * PI / 180.0, 0.0, 25.0 * PI / 180.0];
/// Half of the 27 degree field of view.
pub const SENSOR_HALF_FOV_RAD: f64 = 13.5 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
}

/// Cauchy quantile `gamma0 + gamma * tan(pi (u - 0.5))`, clamped to `[min_ms, max_ms]`.
pub fn cauchy_duration_from_uniform(
    gamma0_ms: f64,
    gamma_ms: f64,
    u: f64,
    min_ms: f64,
    max_ms: f64,
) -> f64 {
    let t = gamma0_ms + gamma_ms * (PI * (u - 0.5)).tan();
    if t.is_nan() {
        return min_ms;
    }
    t.clamp(min_ms, max_ms)
}

/// Draws a forward-drive duration: location `gamma0`, scale `gamma`.
pub fn cauchy_drive_duration<R: Rng + ?Sized>(
    gamma0_ms: f64,
    gamma_ms: f64,
    min_ms: f64,
    max_ms: f64,
    rng: &mut R,
) -> f64 {
    let u: f64 = rng.random();
    cauchy_duration_from_uniform(gamma0_ms, gamma_ms, u, min_ms, max_ms)
}

/// Uniform turn angle on `(-pi, pi)`; positive turns counter-clockwise.
pub fn random_turn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let phi = rng.random_range(-PI..PI);
        if phi != -PI {
            return phi;
        }
    }
}

/// Per-robot motor speed offsets, fixed for a whole trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorOffsets {
    /// Common speed scale, `U(0.95, 1.05)`.
    pub r_v: f64,
    /// Left/right asymmetry, `U(-0.125, 0.125)`.
    pub r_a: f64,
}

impl MotorOffsets {
    pub const IDENTITY: Self = Self { r_v: 1.0, r_a: 0.0 };

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            r_v: rng.random_range(0.95..1.05),
            r_a: rng.random_range(-0.125..0.125),
        }
    }
}

/// `(left * r_v * (1 - r_a), right * r_v * (1 + r_a))`.
pub fn apply_motor_noise(left: f64, right: f64, offsets: MotorOffsets) -> (f64, f64) {
    (
        left * offsets.r_v * (1.0 - offsets.r_a),
        right * offsets.r_v * (1.0 + offsets.r_a),
    )
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn dist_to_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// A sensor cone: apex, axis direction, half-angle and range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub x: f64,
    pub y: f64,
    pub axis: f64,
    pub half_angle: f64,
    pub range: f64,
}

impl Sector {
    /// Whether the sector intersects the disc at `(cx, cy)` with radius `r`.
    ///
    /// The sector is convex (half-angle below 90 degrees), so once the centre
    /// is outside it this reduces to a distance test against the boundary.
    pub fn hits_disc(&self, cx: f64, cy: f64, r: f64) -> bool {
        let (dx, dy) = (cx - self.x, cy - self.y);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist > self.range + r {
            return false;
        }
        let within_angle =
            dist == 0.0 || wrap_angle(dy.atan2(dx) - self.axis).abs() <= self.half_angle;
        if within_angle && dist <= self.range + r {
            // centre inside, or disc overlapping the arc
            return true;
        }
        [self.axis - self.half_angle, self.axis + self.half_angle]
            .iter()
            .any(|&edge| {
                let ex = self.x + self.range * edge.cos();
                let ey = self.y + self.range * edge.sin();
                dist_to_segment(cx, cy, self.x, self.y, ex, ey) <= r
            })
    }

    /// Whether the sector reaches a wall of the unit arena.
    pub fn hits_wall(&self) -> bool {
        let clearance = self.x.min(self.y).min(SIDE_M - self.x).min(SIDE_M - self.y);
        if clearance > self.range {
            return false;
        }
        let reaches = |a: f64| {
            let x = self.x + self.range * a.cos();
            let y = self.y + self.range * a.sin();
            x <= 0.0 || x >= SIDE_M || y <= 0.0 || y >= SIDE_M
        };
        reaches(self.axis - self.half_angle)
            || reaches(self.axis + self.half_angle)
            || [0.0, PI / 2.0, PI, -PI / 2.0]
                .into_iter()
                .any(|normal| wrap_angle(normal - self.axis).abs() <= self.half_angle && reaches(normal))
    }
}

/// Three forward IR cones of range `theta_c_mm`, measured from the robot centre.
/// True if any cone meets another robot's body or a wall.
pub fn ir_detect(pose: Pose, others: &[(f64, f64)], theta_c_mm: f64) -> bool {
    let range = theta_c_mm / 1000.0;
    SENSOR_AXES_RAD.iter().any(|&offset| {
        let cone = Sector {
            x: pose.x,
            y: pose.y,
            axis: pose.heading + offset,
            half_angle: SENSOR_HALF_FOV_RAD,
            range,
        };
        cone.hits_wall()
            || others
                .iter()
                .any(|&(cx, cy)| cone.hits_disc(cx, cy, BODY_RADIUS_M))
    })
}
