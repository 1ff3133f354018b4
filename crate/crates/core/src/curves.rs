//! Curves in S^3 with jets up to order three: base curves of constant
//! curvature, the rigid copies used by the product construction, profile
//! curves in the upper hemisphere of the totally geodesic 2-sphere x4 = 0,
//! and a Frenet apparatus.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::s3core::{cross3, qmul, AmbientVector, S3Point};

/// Value and first three derivatives.
pub type CurveJet = [AmbientVector; 4];

/// Default finite-difference step for curves without a closed-form jet.
pub const CURVE_FD_STEP: f64 = 1e-3;

type MapFn = dyn Fn(f64) -> AmbientVector + Send + Sync;
type JetFn = dyn Fn(f64) -> CurveJet + Send + Sync;

#[derive(Clone)]
pub struct CurveS3 {
    pub tag: String,
    pub params: Vec<(String, f64)>,
    map: Arc<MapFn>,
    jet: Option<Arc<JetFn>>,
}

impl fmt::Debug for CurveS3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveS3")
            .field("tag", &self.tag)
            .field("params", &self.params)
            .field("closed_form", &self.jet.is_some())
            .finish()
    }
}

impl CurveS3 {
    /// Curve known only through its values; derivatives by finite differences.
    pub fn from_map(tag: &str, map: impl Fn(f64) -> AmbientVector + Send + Sync + 'static) -> Self {
        CurveS3 { tag: tag.into(), params: vec![], map: Arc::new(map), jet: None }
    }

    /// Curve with a closed-form jet.
    pub fn from_jet(tag: &str, params: Vec<(String, f64)>, jet: impl Fn(f64) -> CurveJet + Send + Sync + 'static) -> Self {
        let jet: Arc<JetFn> = Arc::new(jet);
        let j = jet.clone();
        CurveS3 { tag: tag.into(), params, map: Arc::new(move |t| j(t)[0]), jet: Some(jet) }
    }

    pub fn has_closed_form(&self) -> bool {
        self.jet.is_some()
    }

    pub fn value(&self, t: f64) -> AmbientVector {
        (self.map)(t)
    }

    pub fn point(&self, t: f64) -> S3Point {
        S3Point::from_vector(&self.value(t))
    }

    pub fn jet(&self, t: f64) -> CurveJet {
        match &self.jet {
            Some(j) => j(t),
            None => self.fd_jet(t, CURVE_FD_STEP),
        }
    }

    /// Central differences with one Richardson level, O(h^4) in the first
    /// two derivatives and O(h^4) truncation in the third.
    pub fn fd_jet(&self, t: f64, h: f64) -> CurveJet {
        let f = |s: f64| self.value(s);
        let f0 = f(t);
        let level = |h: f64| {
            let (p1, m1, p2, m2) = (f(t + h), f(t - h), f(t + 2.0 * h), f(t - 2.0 * h));
            [
                (p1 - m1) / (2.0 * h),
                (p1 - f0 * 2.0 + m1) / (h * h),
                (p2 - p1 * 2.0 + m1 * 2.0 - m2) / (2.0 * h * h * h),
            ]
        };
        let coarse = level(h);
        let fine = level(h / 2.0);
        let r = |k: usize| (fine[k] * 4.0 - coarse[k]) / 3.0;
        [f0, r(0), r(1), r(2)]
    }

    /// t -> g·c(t), a rigid motion of S^3.
    pub fn left_mul(&self, g: AmbientVector, tag: &str) -> CurveS3 {
        self.transform(tag, move |v| qmul(&g, v))
    }

    /// t -> c(t)·g.
    pub fn right_mul(&self, g: AmbientVector, tag: &str) -> CurveS3 {
        self.transform(tag, move |v| qmul(v, &g))
    }

    pub fn map_linear(&self, m: Matrix4<f64>, tag: &str) -> CurveS3 {
        self.transform(tag, move |v| m * v)
    }

    fn transform(&self, tag: &str, lin: impl Fn(&AmbientVector) -> AmbientVector + Send + Sync + Clone + 'static) -> CurveS3 {
        let base = self.clone();
        let l = lin.clone();
        let map: Arc<MapFn> = Arc::new(move |t| l(&base.value(t)));
        let jet: Option<Arc<JetFn>> = self.jet.as_ref().map(|j| {
            let j = j.clone();
            Arc::new(move |t: f64| j(t).map(|v| lin(&v))) as Arc<JetFn>
        });
        CurveS3 { tag: tag.into(), params: self.params.clone(), map, jet }
    }
}

/// k-th derivative of amp·(cos(w t), sin(w t)).
fn circle_derivative(amp: f64, w: f64, t: f64, k: i32) -> (f64, f64) {
    let phase = w * t + k as f64 * std::f64::consts::FRAC_PI_2;
    let s = amp * w.powi(k);
    (s * phase.cos(), s * phase.sin())
}

fn base_jet(r: f64, u: f64) -> CurveJet {
    let n = (1.0 + r * r).sqrt();
    let mut out = [Vector4::zeros(); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let (a, b) = circle_derivative(r / n, 1.0 / r, u, k as i32);
        let (c, d) = circle_derivative(1.0 / n, r, u, k as i32);
        *slot = Vector4::new(a, b, c, d);
    }
    out
}

/// Unit-speed curve of constant curvature (r^2-1)/r and unit torsion.
pub fn base_curve(r: f64) -> Result<CurveS3> {
    if !(r > 1.0) {
        return Err(GeomError::Domain(format!("base curve needs r > 1, got {r}")));
    }
    Ok(CurveS3::from_jet("base", vec![("r".into(), r)], move |u| base_jet(r, u)))
}

/// Swap of the last two coordinates.
pub fn swap34() -> Matrix4<f64> {
    #[rustfmt::skip]
    let t = Matrix4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    );
    t
}

/// Left factor g_a = (a,0,-1,0)/sqrt(1+a^2), chosen so that c_a(0) = 1.
pub fn left_factor(a: f64) -> AmbientVector {
    Vector4::new(a, 0.0, -1.0, 0.0) / (1.0 + a * a).sqrt()
}

/// Right factor g_b = (b,0,0,-1)/sqrt(1+b^2), chosen so that c_b(0) = 1.
pub fn right_factor(b: f64) -> AmbientVector {
    Vector4::new(b, 0.0, 0.0, -1.0) / (1.0 + b * b).sqrt()
}

/// c_a(u) = g_a·γ_a(u); torsion +1.
pub fn curve_ca(a: f64) -> Result<CurveS3> {
    let c = base_curve(a)?.left_mul(left_factor(a), "ca");
    Ok(c)
}

/// c_b(v) = T(γ_b(v))·g_b with T the swap of the last two coordinates;
/// torsion -1.
pub fn curve_cb(b: f64) -> Result<CurveS3> {
    let c = base_curve(b)?.map_linear(swap34(), "cb").right_mul(right_factor(b), "cb");
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetData {
    pub kappa: f64,
    pub tau: f64,
}

/// Geodesic curvature and torsion of a unit-speed curve. The binormal is
/// cross3(γ, T, N), which fixes the sign of τ.
pub fn frenet(c: &CurveS3, t: f64) -> Result<FrenetData> {
    let [g, d1, d2, d3] = c.jet(t);
    let tangent = d1.normalize();
    let p = d2 - g * d2.dot(&g) - tangent * d2.dot(&tangent);
    let kappa = p.norm();
    if kappa < 1e-8 {
        return Err(GeomError::DegenerateFrame(kappa));
    }
    let n = p / kappa;
    let b = cross3(&g, &tangent, &n);
    Ok(FrenetData { kappa, tau: d3.dot(&b) / kappa })
}

/// (value, first, second derivative) of a profile function.
pub type Jet1D = [f64; 3];

/// A profile in the totally geodesic 2-sphere x4 = 0, in spherical
/// coordinates (φ latitude, θ longitude).
pub trait Profile: Send + Sync {
    fn phi_theta(&self, s: f64) -> (Jet1D, Jet1D);
    fn range(&self) -> (f64, f64);
}

type ScalarJetFn = dyn Fn(f64) -> Jet1D + Send + Sync;

#[derive(Clone)]
pub struct ClosedProfile {
    phi: Arc<ScalarJetFn>,
    theta: Arc<ScalarJetFn>,
    range: (f64, f64),
}

impl ClosedProfile {
    pub fn new(
        phi: impl Fn(f64) -> Jet1D + Send + Sync + 'static,
        theta: impl Fn(f64) -> Jet1D + Send + Sync + 'static,
        range: (f64, f64),
    ) -> Self {
        ClosedProfile { phi: Arc::new(phi), theta: Arc::new(theta), range }
    }

    /// φ ≡ phi0 with θ(s) = s/cos(phi0), an arc-length parallel.
    pub fn latitude(phi0: f64, range: (f64, f64)) -> Self {
        let w = 1.0 / phi0.cos();
        ClosedProfile::new(move |_| [phi0, 0.0, 0.0], move |s| [w * s, w, 0.0], range)
    }
}

impl Profile for ClosedProfile {
    fn phi_theta(&self, s: f64) -> (Jet1D, Jet1D) {
        ((self.phi)(s), (self.theta)(s))
    }
    fn range(&self) -> (f64, f64) {
        self.range
    }
}

/// γ, γ', γ'' of (cosφ cosθ, cosφ sinθ, sinφ, 0).
pub fn profile_point_jet(phi: Jet1D, theta: Jet1D) -> [AmbientVector; 3] {
    let (a, b) = (phi[0].cos(), phi[0].sin());
    let (da, db) = (-b * phi[1], a * phi[1]);
    let (dda, ddb) = (-a * phi[1] * phi[1] - b * phi[2], -b * phi[1] * phi[1] + a * phi[2]);
    let (c, s) = (theta[0].cos(), theta[0].sin());
    let (dc, ds) = (-s * theta[1], c * theta[1]);
    let (ddc, dds) = (-c * theta[1] * theta[1] - s * theta[2], -s * theta[1] * theta[1] + c * theta[2]);
    [
        Vector4::new(a * c, a * s, b, 0.0),
        Vector4::new(da * c + a * dc, da * s + a * ds, db, 0.0),
        Vector4::new(dda * c + 2.0 * da * dc + a * ddc, dda * s + 2.0 * da * ds + a * dds, ddb, 0.0),
    ]
}

pub const PROFILE_ARC_TOL: f64 = 1e-6;
const PROFILE_SAMPLES: usize = 64;

/// Max of |φ'^2 + θ'^2 cos^2 φ - 1| and min of sin φ over sample midpoints
/// of the profile range.
pub fn profile_defects(p: &dyn Profile) -> (f64, f64) {
    let (lo, hi) = p.range();
    let mut arc: f64 = 0.0;
    let mut min_sin = f64::INFINITY;
    for i in 0..PROFILE_SAMPLES {
        let s = lo + (i as f64 + 0.5) * (hi - lo) / PROFILE_SAMPLES as f64;
        let (phi, theta) = p.phi_theta(s);
        let speed2 = phi[1] * phi[1] + theta[1] * theta[1] * phi[0].cos().powi(2);
        arc = arc.max((speed2 - 1.0).abs());
        min_sin = min_sin.min(phi[0].sin());
    }
    (arc, min_sin)
}

/// Profile curve, validated for arc length and for lying in x3 > 0.
pub fn profile_curve(p: Arc<dyn Profile>) -> Result<CurveS3> {
    let (arc, min_sin) = profile_defects(p.as_ref());
    if arc > PROFILE_ARC_TOL {
        return Err(GeomError::ArcLengthViolation(arc));
    }
    if min_sin <= 0.0 {
        return Err(GeomError::HemisphereViolation(min_sin));
    }
    Ok(profile_curve_unchecked(p))
}

/// Profile curve without validation; the third derivative is a central
/// difference of the closed-form second derivative.
pub fn profile_curve_unchecked(p: Arc<dyn Profile>) -> CurveS3 {
    CurveS3::from_jet("profile", vec![], move |s| {
        let j = |s: f64| {
            let (phi, theta) = p.phi_theta(s);
            profile_point_jet(phi, theta)
        };
        let [g, d1, d2] = j(s);
        let h = CURVE_FD_STEP;
        let diff = |h: f64| (j(s + h)[2] - j(s - h)[2]) / (2.0 * h);
        let d3 = (diff(h / 2.0) * 4.0 - diff(h)) / 3.0;
        [g, d1, d2, d3]
    })
}
