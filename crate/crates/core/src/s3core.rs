//! Quaternions on the unit 3-sphere, helicoidal motions, the Hopf frame,
//! the Berger metric and stereographic projection.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Element of the ambient space R^4, components in (w,x,y,z) order.
pub type AmbientVector = Vector4<f64>;

const UNIT_TOL: f64 = 1e-9;

/// Unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S3Point {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl S3Point {
    pub const IDENTITY: S3Point = S3Point { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the given components. Panics on the zero vector.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::from_vector(&Vector4::new(w, x, y, z))
    }

    pub fn from_vector(v: &AmbientVector) -> Self {
        let n = v.norm();
        assert!(n > 0.0, "cannot normalize the zero quaternion");
        S3Point { w: v[0] / n, x: v[1] / n, y: v[2] / n, z: v[3] / n }
    }

    pub fn to_vector(self) -> AmbientVector {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn dot(self, other: S3Point) -> f64 {
        self.to_vector().dot(&other.to_vector())
    }
}

/// Hamilton product of arbitrary quaternions stored as 4-vectors. Bilinear,
/// so it also serves for product-rule jets.
pub fn qmul(p: &AmbientVector, q: &AmbientVector) -> AmbientVector {
    let (a1, b1, c1, d1) = (p[0], p[1], p[2], p[3]);
    let (a2, b2, c2, d2) = (q[0], q[1], q[2], q[3]);
    Vector4::new(
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )
}

pub fn qconj(q: &AmbientVector) -> AmbientVector {
    Vector4::new(q[0], -q[1], -q[2], -q[3])
}

/// Hamilton product, renormalized to the sphere.
pub fn quat_mul(p: S3Point, q: S3Point) -> S3Point {
    debug_assert!((p.norm() - 1.0).abs() < UNIT_TOL && (q.norm() - 1.0).abs() < UNIT_TOL);
    S3Point::from_vector(&qmul(&p.to_vector(), &q.to_vector()))
}

pub fn quat_conj(q: S3Point) -> S3Point {
    S3Point { w: q.w, x: -q.x, y: -q.y, z: -q.z }
}

/// Vector n with <n, x> = det[a; b; c; x] for every x.
pub fn cross3(a: &AmbientVector, b: &AmbientVector, c: &AmbientVector) -> AmbientVector {
    let minor = |i: usize| {
        let cols: Vec<usize> = (0..4).filter(|&k| k != i).collect();
        Matrix3::new(
            a[cols[0]], a[cols[1]], a[cols[2]],
            b[cols[0]], b[cols[1]], b[cols[2]],
            c[cols[0]], c[cols[1]], c[cols[2]],
        )
        .determinant()
    };
    Vector4::new(-minor(0), minor(1), -minor(2), minor(3))
}

/// One-parameter group composing a rotation of rate `beta` in the (x3,x4)
/// plane with a translation of rate `alpha` along the (x1,x2) great circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelicoidalMotion {
    pub alpha: f64,
    pub beta: f64,
}

impl HelicoidalMotion {
    pub fn new(alpha: f64, beta: f64) -> Self {
        HelicoidalMotion { alpha, beta }
    }

    /// k-th derivative in t of the motion matrix.
    pub fn matrix_derivative(&self, t: f64, k: u32) -> Matrix4<f64> {
        let block = |rate: f64| {
            let phase = rate * t + k as f64 * std::f64::consts::FRAC_PI_2;
            let s = rate.powi(k as i32);
            (s * phase.cos(), s * phase.sin())
        };
        let (c1, s1) = block(self.alpha);
        let (c2, s2) = block(self.beta);
        #[rustfmt::skip]
        let m = Matrix4::new(
            c1, -s1, 0.0, 0.0,
            s1, c1, 0.0, 0.0,
            0.0, 0.0, c2, -s2,
            0.0, 0.0, s2, c2,
        );
        m
    }

    pub fn matrix(&self, t: f64) -> Matrix4<f64> {
        self.matrix_derivative(t, 0)
    }

    pub fn apply(&self, t: f64, q: S3Point) -> S3Point {
        S3Point::from_vector(&(self.matrix(t) * q.to_vector()))
    }
}

pub fn motion_matrix(m: HelicoidalMotion, t: f64) -> Matrix4<f64> {
    m.matrix(t)
}

/// (E1, E2, E3) at q; E1 is tangent to the Hopf fibers.
pub fn hopf_frame_vec(q: &AmbientVector) -> [AmbientVector; 3] {
    let (a, b, c, d) = (q[0], q[1], q[2], q[3]);
    [
        Vector4::new(-b, a, -d, c),
        Vector4::new(-d, -c, b, a),
        Vector4::new(-c, d, a, -b),
    ]
}

pub fn hopf_frame(q: S3Point) -> [AmbientVector; 3] {
    hopf_frame_vec(&q.to_vector())
}

/// Hopf projection conj(q)·i·q in (i,j,k) components. Constant along the
/// integral curves of E1, which are left multiplication by exp(it).
pub fn hopf_map(q: S3Point) -> Vector3<f64> {
    let v = q.to_vector();
    let h = qmul(&qmul(&qconj(&v), &Vector4::new(0.0, 1.0, 0.0, 0.0)), &v);
    Vector3::new(h[1], h[2], h[3])
}

pub fn berger_inner(eps: f64, q: S3Point, x: &AmbientVector, y: &AmbientVector) -> Result<f64> {
    let qv = q.to_vector();
    for v in [x, y] {
        let d = v.dot(&qv);
        if d.abs() > UNIT_TOL {
            return Err(GeomError::NotTangent(d));
        }
    }
    let e1 = hopf_frame_vec(&qv)[0];
    Ok(x.dot(y) + (eps * eps - 1.0) * x.dot(&e1) * y.dot(&e1))
}

/// Stereographic chart from a pole, with an orthonormal basis of the
/// orthogonal complement obtained by Gram-Schmidt on the standard basis
/// after dropping the index of the pole's largest component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stereographic {
    pub pole: AmbientVector,
    pub basis: [AmbientVector; 3],
}

pub const POLE_TOL: f64 = 1e-8;

impl Stereographic {
    pub fn new(pole: S3Point) -> Self {
        let p = pole.to_vector();
        let drop = (0..4).max_by(|&i, &j| p[i].abs().total_cmp(&p[j].abs())).unwrap();
        let mut basis = [Vector4::zeros(); 3];
        let mut k = 0;
        for i in (0..4).filter(|&i| i != drop) {
            let mut e = Vector4::zeros();
            e[i] = 1.0;
            e -= p * p.dot(&e);
            for b in basis.iter().take(k) {
                e -= b * b.dot(&e);
            }
            basis[k] = e.normalize();
            k += 1;
        }
        Stereographic { pole: p, basis }
    }

    /// 1 - <P,q>; the projection blows up as this approaches zero.
    pub fn pole_distance(&self, q: &AmbientVector) -> f64 {
        1.0 - self.pole.dot(q)
    }

    pub fn project(&self, q: S3Point) -> Result<Vector3<f64>> {
        let qv = q.to_vector();
        let denom = self.pole_distance(&qv);
        if denom < POLE_TOL {
            return Err(GeomError::PoleProximity(denom));
        }
        let perp = qv - self.pole * self.pole.dot(&qv);
        Ok(Vector3::new(
            perp.dot(&self.basis[0]),
            perp.dot(&self.basis[1]),
            perp.dot(&self.basis[2]),
        ) / denom)
    }

    pub fn inverse(&self, y: &Vector3<f64>) -> S3Point {
        let r2 = y.norm_squared();
        let v = self.pole * ((r2 - 1.0) / (r2 + 1.0))
            + (self.basis[0] * y[0] + self.basis[1] * y[1] + self.basis[2] * y[2]) * (2.0 / (r2 + 1.0));
        S3Point::from_vector(&v)
    }
}

pub fn stereographic(q: S3Point, pole: S3Point) -> Result<Vector3<f64>> {
    Stereographic::new(pole).project(q)
}
