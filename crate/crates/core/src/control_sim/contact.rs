//! Penalty contact and Coulomb friction.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Penalty stiffness (N/m).
    pub stiffness: f64,
    /// Penalty damping (Ns/m).
    pub damping: f64,
    /// Coulomb coefficient.
    pub friction: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 1e4,
            damping: 100.0,
            friction: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactForce {
    /// Normal force magnitude (N), never negative.
    pub normal: f64,
    /// Force on the body: normal part plus sliding friction.
    pub force: Vec3<f64>,
}

impl ContactForce {
    pub fn tangential(&self, n: Vec3<f64>) -> Vec3<f64> {
        self.force - n.scale(self.force.dot(n))
    }
}

/// Force on a body touching a surface with outward normal `n` (unit),
/// penetration depth `penetration` and body velocity `velocity` relative to the
/// surface. Friction is kinetic: magnitude `mu * N` against the slip direction.
pub fn contact_force(params: &ContactParams, n: Vec3<f64>, penetration: f64, velocity: Vec3<f64>) -> ContactForce {
    if penetration <= 0.0 {
        return ContactForce::default();
    }
    let closing = -velocity.dot(n);
    let normal = (params.stiffness * penetration + params.damping * closing).max(0.0);
    let slip = velocity - n.scale(velocity.dot(n));
    let speed = slip.norm();
    let friction = if speed > 1e-12 && normal > 0.0 {
        slip.scale(-params.friction * normal / speed)
    } else {
        Vec3::zeros()
    };
    ContactForce {
        normal,
        force: n.scale(normal) + friction,
    }
}

/// Implicit Coulomb friction for a single point mass in a plane: given the
/// friction-free tangential velocity `v`, returns the velocity after friction
/// with limit impulse `mu * N * dt` and mass `m`. Stick is exact.
pub fn friction_velocity(v: [f64; 2], mu_n_dt: f64, m: f64) -> [f64; 2] {
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let dv = mu_n_dt / m;
    if speed <= dv {
        [0.0, 0.0]
    } else {
        let s = (speed - dv) / speed;
        [v[0] * s, v[1] * s]
    }
}

/// Convex polygon in the plane, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

/// Deepest edge of `poly` penetrated by point `p`: `(depth, outward normal)`.
pub fn point_penetration(poly: &Polygon, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let n = poly.vertices.len();
    let mut best: Option<(f64, [f64; 2])> = None;
    for i in 0..n {
        let a = poly.vertices[i];
        let b = poly.vertices[(i + 1) % n];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = (ex * ex + ey * ey).sqrt();
        let normal = [ey / len, -ex / len];
        let s = (p[0] - a[0]) * normal[0] + (p[1] - a[1]) * normal[1];
        if s > 0.0 {
            return None;
        }
        let depth = -s;
        if best.is_none_or(|(d, _)| depth < d) {
            best = Some((depth, normal));
        }
    }
    best
}

/// Penalty contacts between two polygons: vertices of either polygon inside
/// the other. Each item is `(point, normal, depth)` where `normal` points from
/// `b` towards `a`, the direction of the force acting on `a`.
pub fn polygon_contacts(a: &Polygon, b: &Polygon) -> Vec<([f64; 2], [f64; 2], f64)> {
    let mut out = Vec::new();
    for &p in &a.vertices {
        if let Some((d, n)) = point_penetration(b, p) {
            out.push((p, n, d));
        }
    }
    for &p in &b.vertices {
        if let Some((d, n)) = point_penetration(a, p) {
            out.push((p, [-n[0], -n[1]], d));
        }
    }
    out
}

impl Polygon {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        point_penetration(self, p).is_some()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut area2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            let cross = x0 * y1 - x1 * y0;
            area2 += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        [cx / (3.0 * area2), cy / (3.0 * area2)]
    }

    pub fn transformed(&self, x: f64, y: f64, yaw: f64) -> Polygon {
        let (s, c) = yaw.sin_cos();
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|&[px, py]| [x + c * px - s * py, y + s * px + c * py])
                .collect(),
        }
    }

    /// Axis-aligned square of side `side` centred at the origin.
    pub fn square(side: f64) -> Polygon {
        let h = side / 2.0;
        Polygon {
            vertices: vec![[-h, -h], [h, -h], [h, h], [-h, h]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separation_gives_zero_force() {
        let f = contact_force(
            &ContactParams::default(),
            Vec3::new(0.0, 0.0, 1.0),
            0.0,
            Vec3::new(0.1, 0.0, -1.0),
        );
        assert_eq!(f, ContactForce::default());
    }

    #[test]
    fn normal_force_is_clamped() {
        // separating quickly: damping term would pull
        let f = contact_force(
            &ContactParams::default(),
            Vec3::new(0.0, 0.0, 1.0),
            1e-4,
            Vec3::new(0.0, 0.0, 1.0),
        );
        assert_eq!(f.normal, 0.0);
    }

    #[test]
    fn square_contains_and_penetrates() {
        let sq = Polygon::square(1.0);
        assert!(sq.contains([0.2, 0.1]));
        assert!(!sq.contains([0.6, 0.0]));
        let (d, n) = point_penetration(&sq, [0.45, 0.0]).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
        assert_eq!(n, [1.0, 0.0]);
        let c = sq.transformed(1.0, 2.0, 0.3).centroid();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }
}
