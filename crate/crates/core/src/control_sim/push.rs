//! Planar pushing: a rigid polygonal object sliding on the ground, pushed by
//! a square pusher attached to the end effector.

use serde::{Deserialize, Serialize};

use super::contact::{polygon_contacts, ContactParams, Polygon};
use crate::math::{wrap_angle, Pose, Quat, Vec3};

pub const GRAVITY: f64 = 9.81;

/// Slip speed (m/s) below which pusher friction is viscous.
pub const SLIP_SPEED: f64 = 1e-3;

/// Planar rigid body. The state is the pose and velocity of the centre of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PushObject {
    /// Outline around the geometric centre (centroid), counter-clockwise.
    pub shape: Polygon,
    /// Centre of mass relative to the centroid, body frame.
    pub com_offset: [f64; 2],
    pub mass: f64,
    pub inertia: f64,
    /// Ground support points relative to the centre of mass, body frame.
    pub supports: Vec<[f64; 2]>,
    /// Fraction of the weight carried by each support.
    pub loads: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub w: f64,
}

impl PushObject {
    /// `shape` is given around its centroid; the body starts at rest with the
    /// centroid at `(x, y)`.
    pub fn new(shape: Polygon, com_offset: [f64; 2], mass: f64, x: f64, y: f64, yaw: f64) -> Self {
        let c = shape.centroid();
        let shape = Polygon {
            vertices: shape.vertices.iter().map(|v| [v[0] - c[0], v[1] - c[1]]).collect(),
        };
        let inertia = polar_moment(&shape, mass);
        let supports: Vec<[f64; 2]> = shape
            .vertices
            .iter()
            .map(|v| [v[0] - com_offset[0], v[1] - com_offset[1]])
            .collect();
        let loads = support_loads(&supports);
        let (s, co) = yaw.sin_cos();
        Self {
            x: x + co * com_offset[0] - s * com_offset[1],
            y: y + s * com_offset[0] + co * com_offset[1],
            shape,
            com_offset,
            mass,
            inertia,
            supports,
            loads,
            yaw,
            vx: 0.0,
            vy: 0.0,
            w: 0.0,
        }
    }

    /// Right triangle with legs `a` along x and `b` along y.
    pub fn right_triangle(a: f64, b: f64) -> Polygon {
        Polygon {
            vertices: vec![[0.0, 0.0], [a, 0.0], [0.0, b]],
        }
    }

    /// Pose of the geometric centre: `(x, y, yaw)`.
    pub fn centre(&self) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let [ox, oy] = self.com_offset;
        [self.x - (c * ox - s * oy), self.y - (s * ox + c * oy), self.yaw]
    }

    pub fn pose(&self, z: f64) -> Pose<f64> {
        let [x, y, yaw] = self.centre();
        Pose::new(Vec3::new(x, y, z), Quat::from_yaw(yaw))
    }

    pub fn outline(&self) -> Polygon {
        let [x, y, yaw] = self.centre();
        self.shape.transformed(x, y, yaw)
    }

    pub fn point_velocity(&self, p: [f64; 2]) -> [f64; 2] {
        let rx = p[0] - self.x;
        let ry = p[1] - self.y;
        [self.vx - self.w * ry, self.vy + self.w * rx]
    }

    /// Integrates one step under the applied force and torque about the
    /// centre of mass, with ground friction resolved implicitly.
    pub fn step(&mut self, force: [f64; 2], torque: f64, mu: f64, dt: f64) {
        self.vx += dt * force[0] / self.mass;
        self.vy += dt * force[1] / self.mass;
        self.w += dt * torque / self.inertia;
        self.resolve_friction(mu, dt);
        self.x += self.vx * dt;
        self.y += self.vy * dt;
        self.yaw = wrap_angle(self.yaw + self.w * dt);
    }

    /// Projected Gauss-Seidel over the support points with impulses bounded by
    /// `mu * N_i * dt`. When no support saturates the body sticks.
    fn resolve_friction(&mut self, mu: f64, dt: f64) {
        let (s, c) = self.yaw.sin_cos();
        let arms: Vec<[f64; 2]> = self
            .supports
            .iter()
            .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
            .collect();
        let limits: Vec<f64> = self.loads.iter().map(|l| mu * l * self.mass * GRAVITY * dt).collect();
        let mut impulses = vec![[0.0f64; 2]; arms.len()];
        let (m, inv_i) = (self.mass, 1.0 / self.inertia);
        for _ in 0..200 {
            let mut change = 0.0f64;
            for (k, r) in arms.iter().enumerate() {
                let u = [self.vx - self.w * r[1], self.vy + self.w * r[0]];
                // scalar step with the largest eigenvalue of the contact
                // mobility keeps saturated impulses opposite to the slip
                let mobility = 1.0 / m + (r[0] * r[0] + r[1] * r[1]) * inv_i;
                let mut p = [impulses[k][0] - u[0] / mobility, impulses[k][1] - u[1] / mobility];
                let mag = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if mag > limits[k] {
                    p = [p[0] * limits[k] / mag, p[1] * limits[k] / mag];
                }
                let delta = [p[0] - impulses[k][0], p[1] - impulses[k][1]];
                impulses[k] = p;
                self.vx += delta[0] / m;
                self.vy += delta[1] / m;
                self.w += (r[0] * delta[1] - r[1] * delta[0]) * inv_i;
                change = change.max(delta[0].abs().max(delta[1].abs()));
            }
            if change < 1e-16 {
                break;
            }
        }
        let stuck = impulses
            .iter()
            .zip(&limits)
            .all(|(p, l)| (p[0] * p[0] + p[1] * p[1]).sqrt() < l * (1.0 - 1e-9));
        if stuck {
            self.vx = 0.0;
            self.vy = 0.0;
            self.w = 0.0;
        }
    }
}

/// Polar moment of inertia of a uniform polygon about the origin.
pub fn polar_moment(shape: &Polygon, mass: f64) -> f64 {
    let v = &shape.vertices;
    let n = v.len();
    let (mut num, mut area2) = (0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = v[i];
        let [x1, y1] = v[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        area2 += cross;
        num += cross * (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1);
    }
    mass * num / (6.0 * area2)
}

/// Minimum-norm non-negative weights placing the load centroid at the origin.
fn support_loads(supports: &[[f64; 2]]) -> Vec<f64> {
    let n = supports.len();
    // w = A^T (A A^T)^-1 b with rows (1, x, y) and b = (1, 0, 0)
    let mut aat = crate::math::Matrix::<f64>::zeros(3, 3);
    for s in supports {
        let row = [1.0, s[0], s[1]];
        for i in 0..3 {
            for j in 0..3 {
                aat[(i, j)] += row[i] * row[j];
            }
        }
    }
    let y = crate::math::solve_dense(&aat, &[1.0, 0.0, 0.0]).unwrap_or_else(|| vec![1.0 / n as f64, 0.0, 0.0]);
    let mut w: Vec<f64> = supports
        .iter()
        .map(|s| (y[0] + y[1] * s[0] + y[2] * s[1]).max(0.0))
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushTolerance {
    /// Position error (m).
    pub position: f64,
    /// Rotation error (rad).
    pub rotation: f64,
}

impl Default for PushTolerance {
    fn default() -> Self {
        Self {
            position: 0.01,
            rotation: 5f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushEnv {
    pub object: PushObject,
    /// Pusher outline around the end effector.
    pub pusher: Polygon,
    /// Pusher contact; its friction acts between pusher and object.
    pub contact: ContactParams,
    pub ground_friction: f64,
    /// Goal of the geometric centre: `(x, y, yaw)`.
    pub goal: [f64; 3],
    pub tolerance: PushTolerance,
    pub succeeded: bool,
}

impl PushEnv {
    pub fn new(object: PushObject, pusher_side: f64, goal: [f64; 3], contact: ContactParams) -> Self {
        Self {
            object,
            pusher: Polygon::square(pusher_side),
            ground_friction: contact.friction,
            contact: ContactParams {
                friction: 0.0,
                ..contact
            },
            goal,
            tolerance: PushTolerance::default(),
            succeeded: false,
        }
    }

    /// Sets the pusher-object friction coefficient (zero by default).
    pub fn with_pusher_friction(mut self, mu: f64) -> Self {
        self.contact.friction = mu;
        self
    }

    /// `(position error, rotation error)` of the object relative to the goal.
    pub fn error(&self) -> (f64, f64) {
        let [x, y, yaw] = self.object.centre();
        let d = ((x - self.goal[0]).powi(2) + (y - self.goal[1]).powi(2)).sqrt();
        (d, wrap_angle(yaw - self.goal[2]).abs())
    }

    pub fn at_goal(&self) -> bool {
        let (d, r) = self.error();
        d < self.tolerance.position && r < self.tolerance.rotation
    }

    /// Advances the object by `dt` and returns the planar force acting on the
    /// pusher.
    pub fn step(&mut self, ee: &Pose<f64>, ee_velocity: Vec3<f64>, ee_spin: f64, dt: f64) -> [f64; 2] {
        let pusher = self
            .pusher
            .transformed(ee.position.x, ee.position.y, ee.orientation.yaw());
        let outline = self.object.outline();
        let mut on_pusher = [0.0, 0.0];
        let mut on_object = [0.0, 0.0];
        let mut torque = 0.0;
        for (p, n, depth) in polygon_contacts(&pusher, &outline) {
            let rx = p[0] - ee.position.x;
            let ry = p[1] - ee.position.y;
            let vp = [ee_velocity.x - ee_spin * ry, ee_velocity.y + ee_spin * rx];
            let vo = self.object.point_velocity(p);
            let rel = [vp[0] - vo[0], vp[1] - vo[1]];
            let closing = -(rel[0] * n[0] + rel[1] * n[1]);
            let normal = (self.contact.stiffness * depth + self.contact.damping * closing).max(0.0);
            let mut f = [normal * n[0], normal * n[1]];
            let slip = [rel[0] + closing * n[0], rel[1] + closing * n[1]];
            let speed = (slip[0] * slip[0] + slip[1] * slip[1]).sqrt();
            if self.contact.friction > 0.0 && speed > 1e-12 {
                // regularized below SLIP_SPEED so sticking does not chatter
                let k = self.contact.friction * normal / speed.max(SLIP_SPEED);
                f[0] -= k * slip[0];
                f[1] -= k * slip[1];
            }
            on_pusher[0] += f[0];
            on_pusher[1] += f[1];
            on_object[0] -= f[0];
            on_object[1] -= f[1];
            let ax = p[0] - self.object.x;
            let ay = p[1] - self.object.y;
            torque += ax * (-f[1]) - ay * (-f[0]);
        }
        self.object.step(on_object, torque, self.ground_friction, dt);
        if self.at_goal() {
            self.succeeded = true;
        }
        on_pusher
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_loads_balance_the_weight() {
        let obj = PushObject::new(PushObject::right_triangle(0.15, 0.3), [0.01, -0.02], 2.5, 0.0, 0.0, 0.0);
        let total: f64 = obj.loads.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mx: f64 = obj.loads.iter().zip(&obj.supports).map(|(w, s)| w * s[0]).sum();
        let my: f64 = obj.loads.iter().zip(&obj.supports).map(|(w, s)| w * s[1]).sum();
        assert!(mx.abs() < 1e-12 && my.abs() < 1e-12);
    }

    #[test]
    fn centre_round_trip_with_com_offset() {
        let obj = PushObject::new(PushObject::right_triangle(0.15, 0.3), [0.02, 0.01], 2.5, 0.4, -0.1, 0.7);
        let c = obj.centre();
        assert!((c[0] - 0.4).abs() < 1e-12 && (c[1] + 0.1).abs() < 1e-12 && (c[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn polar_moment_of_square() {
        let i = polar_moment(&Polygon::square(0.2), 3.0);
        assert!((i - 3.0 * 0.04 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sliding_decelerates_at_mu_g() {
        let mut obj = PushObject::new(Polygon::square(0.1), [0.0, 0.0], 1.0, 0.0, 0.0, 0.0);
        obj.vx = 1.0;
        obj.step([0.0, 0.0], 0.0, 0.4, 0.002);
        assert!((obj.vx - (1.0 - 0.4 * GRAVITY * 0.002)).abs() < 1e-9);
        assert!(obj.w.abs() < 1e-12 && obj.vy.abs() < 1e-12);
    }
}
