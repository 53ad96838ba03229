//! Motion generator: a linearly moving attractor plus planar search overlays.

use serde::{Deserialize, Serialize};

use crate::math::{Pose, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Overlay {
    #[default]
    None,
    /// Constant radius circle around the reference, traversed at `path_velocity`.
    Circular { radius: f64, path_velocity: f64 },
    /// Archimedes spiral whose radius grows by `pitch` per turn until it
    /// reaches `radius`, then continues on that circle.
    Spiral {
        radius: f64,
        path_velocity: f64,
        pitch: f64,
    },
}

impl Overlay {
    pub fn path_velocity(&self) -> f64 {
        match *self {
            Overlay::None => 0.0,
            Overlay::Circular { path_velocity, .. } | Overlay::Spiral { path_velocity, .. } => path_velocity,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Overlay::None => 0.0,
            Overlay::Circular { radius, .. } | Overlay::Spiral { radius, .. } => radius,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Overlay::None => true,
            Overlay::Circular { radius, path_velocity } => {
                radius >= 0.0 && radius.is_finite() && path_velocity >= 0.0 && path_velocity.is_finite()
            }
            Overlay::Spiral {
                radius,
                path_velocity,
                pitch,
            } => {
                radius >= 0.0
                    && radius.is_finite()
                    && path_velocity >= 0.0
                    && path_velocity.is_finite()
                    && pitch > 0.0
                    && pitch.is_finite()
            }
        }
    }

    /// Planar offset after travelling arc length `s` along the overlay path.
    pub fn offset(&self, s: f64) -> [f64; 2] {
        match *self {
            Overlay::None => [0.0, 0.0],
            Overlay::Circular { radius, .. } => {
                if radius <= 0.0 {
                    return [0.0, 0.0];
                }
                let a = s / radius;
                [radius * a.cos(), radius * a.sin()]
            }
            Overlay::Spiral { radius, pitch, .. } => {
                if radius <= 0.0 || pitch <= 0.0 {
                    return [0.0, 0.0];
                }
                let b = pitch / std::f64::consts::TAU;
                let phi_max = radius / b;
                let s_max = spiral_arc_length(b, phi_max);
                let (r, angle) = if s < s_max {
                    let phi = spiral_angle(b, s, phi_max);
                    (b * phi, phi)
                } else {
                    (radius, phi_max + (s - s_max) / radius)
                };
                [r * angle.cos(), r * angle.sin()]
            }
        }
    }
}

/// Arc length of `r = b * phi` from 0 to `phi`.
pub fn spiral_arc_length(b: f64, phi: f64) -> f64 {
    0.5 * b * (phi * (1.0 + phi * phi).sqrt() + phi.asinh())
}

/// Inverse of [`spiral_arc_length`] by Newton iteration.
fn spiral_angle(b: f64, s: f64, phi_max: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let mut phi = (2.0 * s / b).sqrt().min(phi_max);
    for _ in 0..50 {
        let f = spiral_arc_length(b, phi) - s;
        let df = b * (1.0 + phi * phi).sqrt();
        let next = (phi - f / df).clamp(0.0, phi_max);
        if (next - phi).abs() < 1e-15 * (1.0 + phi) {
            return next;
        }
        phi = next;
    }
    phi
}

/// Attractor command issued by a skill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionCommand {
    pub goal: Pose<f64>,
    /// Translational (N/m) then rotational (Nm/rad) stiffness.
    pub stiffness: [f64; 6],
    /// Commanded force (N) then torque (Nm).
    pub wrench: [f64; 6],
    pub overlay: Overlay,
    /// Speed of the linear attractor motion (m/s).
    pub path_speed: f64,
}

impl MotionCommand {
    pub fn hold(goal: Pose<f64>, stiffness: [f64; 6]) -> Self {
        Self {
            goal,
            stiffness,
            wrench: [0.0; 6],
            overlay: Overlay::None,
            path_speed: 0.1,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.goal.is_finite()
            && (self.goal.orientation.norm() - 1.0).abs() < 1e-6
            && self.stiffness.iter().all(|k| *k >= 0.0 && k.is_finite())
            && self.wrench.iter().all(|w| w.is_finite())
            && self.path_speed >= 0.0
            && self.path_speed.is_finite()
            && self.overlay.is_valid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionGenerator {
    /// Linearly moving attractor without overlay.
    pub base: Pose<f64>,
    overlay: Overlay,
    /// Arc length travelled along the current overlay.
    arc: f64,
    /// Angular speed of the attractor orientation (rad/s).
    pub rot_speed: f64,
}

impl MotionGenerator {
    pub fn new(start: Pose<f64>) -> Self {
        Self {
            base: start,
            overlay: Overlay::None,
            arc: 0.0,
            rot_speed: 1.0,
        }
    }

    pub fn arc_length(&self) -> f64 {
        self.arc
    }

    pub fn overlay(&self) -> Overlay {
        self.overlay
    }

    /// Current attractor: base pose plus overlay offset.
    pub fn reference(&self) -> Pose<f64> {
        let [dx, dy] = self.overlay.offset(self.arc);
        let mut r = self.base;
        r.position.x += dx;
        r.position.y += dy;
        r
    }

    /// Advances by `dt` under `cmd` and returns the new attractor.
    pub fn step(&mut self, cmd: &MotionCommand, dt: f64) -> Pose<f64> {
        let to_goal = cmd.goal.position - self.base.position;
        let dist = to_goal.norm();
        let reach = cmd.path_speed * dt;
        if dist <= reach {
            self.base.position = cmd.goal.position;
        } else {
            self.base.position += to_goal.scale(reach / dist);
        }
        let rel = (cmd.goal.orientation * self.base.orientation.conjugate()).to_rotation_vector();
        let angle = rel.norm();
        let turn = self.rot_speed * dt;
        if angle <= turn {
            self.base.orientation = cmd.goal.orientation;
        } else {
            let q = Quat::from_rotation_vector(rel.scale(turn / angle));
            self.base.orientation = (q * self.base.orientation).normalized();
        }
        if cmd.overlay != self.overlay {
            self.overlay = cmd.overlay;
            self.arc = 0.0;
        } else {
            self.arc += self.overlay.path_velocity() * dt;
        }
        self.reference()
    }
}

/// Point on the segment from `a` to `b` at parameter `t` in [0, 1].
pub fn lerp(a: Vec3<f64>, b: Vec3<f64>, t: f64) -> Vec3<f64> {
    a + (b - a).scale(t)
}
