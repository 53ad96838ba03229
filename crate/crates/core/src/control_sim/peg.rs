//! Peg-in-hole: a vertical cylindrical peg held by the end effector above a
//! flat box surface with a circular hole.

use serde::{Deserialize, Serialize};

use super::contact::{contact_force, ContactParams};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PegGeometry {
    pub peg_radius: f64,
    pub hole_radius: f64,
    pub hole_depth: f64,
}

impl PegGeometry {
    /// Lateral play of the peg inside the hole.
    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.peg_radius
    }

    /// Whether a peg centred at horizontal offset `d` from the hole axis fits.
    pub fn admits(&self, d: f64) -> bool {
        d <= self.clearance()
    }
}

/// Contact forces on the end effector from the peg environment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PegContact {
    /// Penalty forces, including wall friction.
    pub force: Vec3<f64>,
    /// Normal load of the surface contact, resolved by implicit friction.
    pub surface_load: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PegEnv {
    pub geometry: PegGeometry,
    /// Hole axis at the surface height.
    pub hole: Vec3<f64>,
    pub contact: ContactParams,
    /// Friction coefficient between peg and surface.
    pub surface_friction: f64,
    pub in_hole: bool,
}

impl PegEnv {
    pub fn new(geometry: PegGeometry, hole: Vec3<f64>, contact: ContactParams) -> Self {
        Self {
            geometry,
            hole,
            surface_friction: contact.friction,
            contact,
            in_hole: false,
        }
    }

    /// Depth of the peg tip below the surface.
    pub fn depth(&self, tip: Vec3<f64>) -> f64 {
        self.hole.z - tip.z
    }

    pub fn inserted_depth(&self, tip: Vec3<f64>) -> f64 {
        if self.in_hole {
            self.depth(tip).max(0.0)
        } else {
            0.0
        }
    }

    pub fn contact(&mut self, tip: Vec3<f64>, velocity: Vec3<f64>) -> PegContact {
        let depth = self.depth(tip);
        let dx = tip.x - self.hole.x;
        let dy = tip.y - self.hole.y;
        let d = (dx * dx + dy * dy).sqrt();
        if self.in_hole && depth < 0.0 {
            self.in_hole = false;
        }
        if !self.in_hole && depth > 0.0 && self.geometry.admits(d) {
            self.in_hole = true;
        }
        if !self.in_hole {
            if depth <= 0.0 {
                return PegContact::default();
            }
            let up = Vec3::new(0.0, 0.0, 1.0);
            let mut normal_only = self.contact;
            normal_only.friction = 0.0;
            let f = contact_force(&normal_only, up, depth, velocity);
            return PegContact {
                force: f.force,
                surface_load: f.normal,
            };
        }
        let mut force = Vec3::zeros();
        let pen = d - self.geometry.clearance();
        if pen > 0.0 {
            let inward = Vec3::new(-dx / d, -dy / d, 0.0);
            force += contact_force(&self.contact, inward, pen, velocity).force;
        }
        let bottom = depth - self.geometry.hole_depth;
        if bottom > 0.0 {
            let mut normal_only = self.contact;
            normal_only.friction = 0.0;
            force += contact_force(&normal_only, Vec3::new(0.0, 0.0, 1.0), bottom, velocity).force;
        }
        PegContact {
            force,
            surface_load: 0.0,
        }
    }
}
