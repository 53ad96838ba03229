//! Task-space control laws and serial-chain kinematics.

use crate::math::{Matrix, Pose, Quat, Real, Vec3};

/// `J^T (-K x_e - D J qdot)`
pub fn impedance_torque<T: Real>(
    jacobian: &Matrix<T>,
    qdot: &[T],
    x_e: &[T],
    stiffness: &Matrix<T>,
    damping: &Matrix<T>,
) -> Vec<T> {
    let xdot = jacobian.mul_vec(qdot);
    let kx = stiffness.mul_vec(x_e);
    let dx = damping.mul_vec(&xdot);
    let f: Vec<T> = kx.iter().zip(&dx).map(|(&a, &b)| -a - b).collect();
    jacobian.tr_mul_vec(&f)
}

/// `J^T F_ext`
pub fn external_wrench_torque<T: Real>(jacobian: &Matrix<T>, wrench: &[T]) -> Vec<T> {
    jacobian.tr_mul_vec(wrench)
}

/// Planar chain of revolute joints; the end-effector state is `(x, y, phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarChain<T> {
    pub lengths: Vec<T>,
}

impl<T: Real> PlanarChain<T> {
    pub fn new(lengths: Vec<T>) -> Self {
        Self { lengths }
    }

    pub fn dof(&self) -> usize {
        self.lengths.len()
    }

    pub fn forward(&self, q: &[T]) -> [T; 3] {
        let (mut x, mut y, mut phi) = (T::zero(), T::zero(), T::zero());
        for (l, &qi) in self.lengths.iter().zip(q) {
            phi += qi;
            x += *l * phi.cos();
            y += *l * phi.sin();
        }
        [x, y, phi]
    }

    /// 3 x n Jacobian of [`forward`](Self::forward).
    pub fn jacobian(&self, q: &[T]) -> Matrix<T> {
        let n = self.dof();
        let mut phis = Vec::with_capacity(n);
        let mut acc = T::zero();
        for &qi in q.iter().take(n) {
            acc += qi;
            phis.push(acc);
        }
        let mut j = Matrix::zeros(3, n);
        for i in 0..n {
            for k in i..n {
                j[(0, i)] -= self.lengths[k] * phis[k].sin();
                j[(1, i)] += self.lengths[k] * phis[k].cos();
            }
            j[(2, i)] = T::one();
        }
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint<T> {
    /// Translation from the previous joint frame, in that frame.
    pub offset: Vec3<T>,
    /// Rotation axis in the joint frame (unit).
    pub axis: Vec3<T>,
}

/// Spatial chain of revolute joints with a geometric Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialChain<T> {
    pub base: Pose<T>,
    pub joints: Vec<Joint<T>>,
    /// Tool point offset in the last joint frame.
    pub tool: Vec3<T>,
}

impl<T: Real> SpatialChain<T> {
    /// Seven joints with alternating vertical and horizontal axes, link
    /// lengths of a typical light-weight collaborative arm.
    pub fn seven_dof() -> Self {
        let z = Vec3::new(T::zero(), T::zero(), T::one());
        let y = Vec3::new(T::zero(), T::one(), T::zero());
        let ny = -y;
        let up = |h: f64| Vec3::new(T::zero(), T::zero(), T::lit(h));
        let joints = vec![
            Joint {
                offset: up(0.34),
                axis: z,
            },
            Joint {
                offset: up(0.0),
                axis: y,
            },
            Joint {
                offset: up(0.40),
                axis: z,
            },
            Joint {
                offset: up(0.0),
                axis: ny,
            },
            Joint {
                offset: up(0.40),
                axis: z,
            },
            Joint {
                offset: up(0.0),
                axis: y,
            },
            Joint {
                offset: up(0.0),
                axis: z,
            },
        ];
        Self {
            base: Pose::default(),
            joints,
            tool: up(0.126),
        }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// World positions and axes of all joints, and the tool pose.
    fn frames(&self, q: &[T]) -> (Vec<(Vec3<T>, Vec3<T>)>, Pose<T>) {
        let mut p = self.base.position;
        let mut r = self.base.orientation;
        let mut out = Vec::with_capacity(self.dof());
        for (j, &qi) in self.joints.iter().zip(q) {
            p += r.rotate(j.offset);
            let axis = r.rotate(j.axis);
            out.push((p, axis));
            r = (r * Quat::from_axis_angle(j.axis, qi)).normalized();
        }
        let tip = p + r.rotate(self.tool);
        (out, Pose::new(tip, r))
    }

    pub fn forward(&self, q: &[T]) -> Pose<T> {
        self.frames(q).1
    }

    /// 6 x n geometric Jacobian: linear rows over angular rows.
    pub fn jacobian(&self, q: &[T]) -> Matrix<T> {
        let (frames, tip) = self.frames(q);
        let mut j = Matrix::zeros(6, self.dof());
        for (i, (p, z)) in frames.iter().enumerate() {
            let lin = z.cross(tip.position - *p);
            for (r, v) in [lin.x, lin.y, lin.z, z.x, z.y, z.z].into_iter().enumerate() {
                j[(r, i)] = v;
            }
        }
        j
    }

    /// Damped least-squares inverse kinematics from `seed`.
    pub fn inverse(&self, target: &Pose<T>, seed: &[T], iterations: usize) -> Vec<T> {
        let n = self.dof();
        let mut q = seed.to_vec();
        let lambda = T::lit(1e-4);
        for _ in 0..iterations {
            let e = self.forward(&q).error_to(target);
            if e.iter().all(|v| v.abs() < T::lit(1e-12)) {
                break;
            }
            let j = self.jacobian(&q);
            // dq = J^T (J J^T + lambda I)^-1 (-e)
            let mut jjt = j.matmul(&j.transpose());
            for k in 0..6 {
                jjt[(k, k)] += lambda;
            }
            let rhs: Vec<T> = e.iter().map(|v| -*v).collect();
            let Some(ch) = jjt.cholesky() else { break };
            let y = ch.solve(&rhs);
            let dq = j.tr_mul_vec(&y);
            for k in 0..n {
                q[k] += dq[k];
            }
        }
        q
    }
}
