//! Surface constructions: quaternionic products of the rigid base curves,
//! the explicit two-parameter family Y(a,b), helicoidal surfaces swept by a
//! profile, the Hopf cylinder, the constant-angle representation and the
//! reconstruction of (a,b) from a flat helicoidal profile.
//!
//! Constructions built from these recipes carry orientation -1: their unit
//! normal is -cross3(f, f_u, f_v)/|...|, which is the normal written out for
//! the helicoidal and Hopf-cylinder cases.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::curves::{frenet, left_factor, profile_curve, right_factor, swap34, CurveJet, CurveS3, Profile};
use crate::error::{GeomError, Result};
use crate::forms::{Domain, FormSource, GridSpec, PatchJet, SurfacePatch};
use crate::profile_ode::{in_band, ProfileSample, ProfileSolution};
use crate::s3core::{qmul, AmbientVector, HelicoidalMotion};

/// Orientation used by every construction in this module.
pub const CONSTRUCTION_ORIENTATION: f64 = -1.0;

fn product_jet(a: &CurveJet, b: &CurveJet) -> PatchJet {
    [
        qmul(&a[0], &b[0]),
        qmul(&a[1], &b[0]),
        qmul(&a[0], &b[1]),
        qmul(&a[2], &b[0]),
        qmul(&a[1], &b[1]),
        qmul(&a[0], &b[2]),
    ]
}

/// X(u,v) = c_a(u)·c_b(v) after checking the hypotheses of the product
/// construction: unit speed, torsions +1 and -1, both curves through the
/// identity, and independent initial velocities.
pub fn bianchi_spivak(ca: &CurveS3, cb: &CurveS3) -> Result<SurfacePatch> {
    let one = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let (ja, jb) = (ca.jet(0.0), cb.jet(0.0));
    if (ja[0] - one).amax() > 1e-9 || (jb[0] - one).amax() > 1e-9 {
        return Err(GeomError::Precondition("both curves must start at (1,0,0,0)".into()));
    }
    for (name, c) in [("first", ca), ("second", cb)] {
        for k in 0..8 {
            let speed = c.jet(0.37 * k as f64)[1].norm();
            if (speed - 1.0).abs() > 1e-8 {
                return Err(GeomError::Precondition(format!("{name} curve is not unit speed (|c'| = {speed})")));
            }
        }
    }
    let (ta, tb) = (frenet(ca, 0.0)?.tau, frenet(cb, 0.0)?.tau);
    if (ta - 1.0).abs() > 1e-6 || (tb + 1.0).abs() > 1e-6 {
        return Err(GeomError::Precondition(format!("torsions must be +1 and -1, got {ta} and {tb}")));
    }
    let m = nalgebra::Matrix4x2::from_columns(&[ja[1], jb[1]]);
    if m.rank(1e-8) < 2 {
        return Err(GeomError::Precondition("initial velocities are parallel".into()));
    }
    let (ca, cb) = (ca.clone(), cb.clone());
    let mut params = ca.params.clone();
    params.extend(cb.params.clone());
    let patch = SurfacePatch::from_jet("bianchi-spivak", params, Domain::PLANE, move |u, v| product_jet(&ca.jet(u), &cb.jet(v)));
    Ok(patch.with_orientation(CONSTRUCTION_ORIENTATION))
}

fn check_gt_one(name: &str, x: f64) -> Result<()> {
    if x > 1.0 && x.is_finite() {
        Ok(())
    } else {
        Err(GeomError::Domain(format!("{name} must satisfy {name} > 1, got {x}")))
    }
}

/// k-th derivative of amp·(cos(w t), sin(w t)).
fn circle(amp: f64, w: f64, t: f64, k: i32) -> (f64, f64) {
    let phase = w * t + k as f64 * FRAC_PI_2;
    let s = amp * w.powi(k);
    (s * phase.cos(), s * phase.sin())
}

/// Base-curve jet without the r > 1 check (r = 1 gives the Hopf cylinder).
fn raw_base_jet(r: f64, u: f64) -> CurveJet {
    let n = (1.0 + r * r).sqrt();
    let mut out = [Vector4::zeros(); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let (a, b) = circle(r / n, 1.0 / r, u, k as i32);
        let (c, d) = circle(1.0 / n, r, u, k as i32);
        *slot = Vector4::new(a, b, c, d);
    }
    out
}

fn y_jet(a: f64, b: f64, u: f64, v: f64) -> PatchJet {
    let t = swap34();
    product_jet(&raw_base_jet(a, u), &raw_base_jet(b, v).map(|x| t * x))
}

/// Y(u,v) = γ_a(u)·T(γ_b(v)), whose components are
/// (ab cos(u/a+v/b) − sin(au+bv), ab sin(u/a+v/b) + cos(au+bv),
///  b cos(au−v/b) − a sin(u/a−bv), b sin(au−v/b) + a cos(u/a−bv))
/// over √((1+a²)(1+b²)). With `full` the patch is g_a·Y·g_b = c_a(u)·c_b(v).
pub fn theorem1_patch(a: f64, b: f64, full: bool) -> Result<SurfacePatch> {
    check_gt_one("a", a)?;
    check_gt_one("b", b)?;
    let params = vec![("a".to_string(), a), ("b".to_string(), b)];
    let patch = if full {
        let (ga, gb) = (left_factor(a), right_factor(b));
        SurfacePatch::from_jet("theorem1-full", params, Domain::PLANE, move |u, v| {
            y_jet(a, b, u, v).map(|x| qmul(&qmul(&ga, &x), &gb))
        })
    } else {
        SurfacePatch::from_jet("theorem1", params, Domain::PLANE, move |u, v| y_jet(a, b, u, v))
    };
    Ok(patch.with_orientation(CONSTRUCTION_ORIENTATION))
}

/// Printed component formula of Y, used as an independent check of the
/// product form.
pub fn y_components(a: f64, b: f64, u: f64, v: f64) -> AmbientVector {
    let n = ((1.0 + a * a) * (1.0 + b * b)).sqrt();
    Vector4::new(
        a * b * (u / a + v / b).cos() - (a * u + b * v).sin(),
        a * b * (u / a + v / b).sin() + (a * u + b * v).cos(),
        b * (a * u - v / b).cos() - a * (u / a - b * v).sin(),
        b * (a * u - v / b).sin() + a * (u / a - b * v).cos(),
    ) / n
}

/// Angle-function slopes of Y(a,b) in the construction orientation:
/// ω = ((1−a²)/a) u + ((1−b²)/b) v − π/2.
pub fn theorem1_slopes(a: f64, b: f64) -> (f64, f64) {
    ((1.0 - a * a) / a, (1.0 - b * b) / b)
}

/// Rate α and the linear parameter shifts z(t) = z_rate·t, w(t) = w_rate·t
/// under which Y(a,b) is invariant: M(t)·Y(u,v) = Y(u + z(t), v + w(t)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelicoidalParams {
    pub alpha: f64,
    pub beta: f64,
    pub z_rate: f64,
    pub w_rate: f64,
}

impl HelicoidalParams {
    pub fn motion(&self) -> HelicoidalMotion {
        HelicoidalMotion::new(self.alpha, self.beta)
    }
    pub fn z(&self, t: f64) -> f64 {
        self.z_rate * t
    }
    pub fn w(&self, t: f64) -> f64 {
        self.w_rate * t
    }
}

pub fn helicoidal_params(a: f64, b: f64, beta: f64) -> Result<HelicoidalParams> {
    check_gt_one("a", a)?;
    check_gt_one("b", b)?;
    let d = a * a * b * b - 1.0;
    if d.abs() < 1e-12 {
        return Err(GeomError::DegenerateDenominator("a^2 b^2 = 1".into()));
    }
    Ok(HelicoidalParams {
        alpha: beta * (b * b - a * a) / d,
        beta,
        z_rate: beta * a * (b * b - 1.0) / d,
        w_rate: beta * b * (1.0 - a * a) / d,
    })
}

/// Largest componentwise |M(t)·Y(u,v) − Y(u+z(t), v+w(t))| over `samples`
/// seeded random draws of (u,v,t) in [-π,π]^2 × [-1,1].
pub fn invariance_defect(a: f64, b: f64, beta: f64, samples: usize, seed: u64) -> Result<f64> {
    let hp = helicoidal_params(a, b, beta)?;
    let y = theorem1_patch(a, b, false)?;
    let m = hp.motion();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (u, v, t) = (rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-1.0..1.0));
        let lhs = m.matrix(t) * y.value(u, v);
        let rhs = y.value(u + hp.z(t), v + hp.w(t));
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(worst)
}

/// X(t,s) = M(t)·γ(s) for a profile curve γ in x4 = 0; (u,v) = (t,s).
pub fn helicoidal_patch_from_curve(alpha: f64, beta: f64, gamma: CurveS3, s_range: (f64, f64)) -> SurfacePatch {
    let m = HelicoidalMotion::new(alpha, beta);
    let patch = SurfacePatch::from_jet(
        "helicoidal",
        vec![("alpha".into(), alpha), ("beta".into(), beta)],
        Domain::new(f64::NEG_INFINITY, f64::INFINITY, s_range.0, s_range.1),
        move |t, s| {
            let [g, g1, g2, _] = gamma.jet(s);
            let (m0, m1, m2) = (m.matrix(t), m.matrix_derivative(t, 1), m.matrix_derivative(t, 2));
            [m0 * g, m1 * g, m0 * g1, m2 * g, m1 * g1, m0 * g2]
        },
    );
    patch.with_orientation(CONSTRUCTION_ORIENTATION)
}

/// Helicoidal patch over a validated profile.
pub fn helicoidal_patch(alpha: f64, beta: f64, profile: Arc<dyn Profile>) -> Result<SurfacePatch> {
    let range = profile.range();
    let gamma = profile_curve(profile)?;
    Ok(helicoidal_patch_from_curve(alpha, beta, gamma, range))
}

/// The explicit normal field of a helicoidal surface:
/// M(t)·(βx3(x2'x3 − x2x3'), βx3(x1x3' − x1'x3), βx3(x1'x2 − x1x2'), −αx3'),
/// unnormalized.
pub fn helicoidal_normal(alpha: f64, beta: f64, t: f64, x: &AmbientVector, dx: &AmbientVector) -> AmbientVector {
    let n = Vector4::new(
        beta * x[2] * (dx[1] * x[2] - x[1] * dx[2]),
        beta * x[2] * (x[0] * dx[2] - dx[0] * x[2]),
        beta * x[2] * (dx[0] * x[1] - x[0] * dx[1]),
        -alpha * dx[2],
    );
    HelicoidalMotion::new(alpha, beta).matrix(t) * n
}

/// The a = 1 member of the family, a flat Hopf cylinder.
pub fn hopf_cylinder_patch(b: f64) -> Result<SurfacePatch> {
    check_gt_one("b", b)?;
    let p = SurfacePatch::from_jet("hopf-cylinder", vec![("b".into(), b)], Domain::PLANE, move |u, v| y_jet(1.0, b, u, v));
    Ok(p.with_orientation(CONSTRUCTION_ORIENTATION))
}

/// Closed-form unit normal of the Hopf cylinder,
/// (−b sin(u+v/b) + cos(u+bv), b cos(u+v/b) + sin(u+bv),
///  b sin(u−v/b) − cos(u−bv), −b cos(u−v/b) − sin(u−bv)) / √(2(1+b²)).
pub fn hopf_cylinder_normal(b: f64, u: f64, v: f64) -> AmbientVector {
    Vector4::new(
        -b * (u + v / b).sin() + (u + b * v).cos(),
        b * (u + v / b).cos() + (u + b * v).sin(),
        b * (u - v / b).sin() - (u - b * v).cos(),
        -b * (u - v / b).cos() - (u - b * v).sin(),
    ) / (2.0 * (1.0 + b * b)).sqrt()
}

/// ξ(v) = slope·v + offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFn {
    pub slope: f64,
    pub offset: f64,
}

impl LinearFn {
    pub fn eval(&self, v: f64) -> f64 {
        self.slope * v + self.offset
    }
}

/// Constant-angle data: angle ν with E1, Berger parameter ε, the constants
/// B, c1, c2, α1, α2 of the generating curve b(u), and the angles of the
/// rotation family A(v). ξ1 is constant; ξ2 and ξ3 are linear in v.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MOData {
    pub nu: f64,
    pub eps: f64,
    pub big_b: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub xi: f64,
    pub xi1: f64,
    pub xi2: LinearFn,
    pub xi3: LinearFn,
}

pub fn mo_constants(nu: f64, eps: f64) -> Result<MOData> {
    let cos = nu.cos();
    let big_b = 1.0 + (eps * eps - 1.0) * cos * cos;
    if !(big_b > 0.0) || eps == 0.0 {
        return Err(GeomError::Domain(format!("need B > 0 and eps != 0, got B = {big_b}")));
    }
    let c1 = 0.5 - eps * cos / (2.0 * big_b.sqrt());
    let c2 = 0.5 + eps * cos / (2.0 * big_b.sqrt());
    if !(c1 > 0.0 && c1 < 1.0 && c2 > 0.0 && c2 < 1.0) {
        return Err(GeomError::Domain(format!("c1 = {c1}, c2 = {c2} must lie in (0,1)")));
    }
    Ok(MOData {
        nu,
        eps,
        big_b,
        c1,
        c2,
        alpha1: 2.0 * big_b * c2 / eps,
        alpha2: 2.0 * big_b * c1 / eps,
        xi: FRAC_PI_2,
        xi1: 0.0,
        xi2: LinearFn { slope: 0.0, offset: 0.0 },
        xi3: LinearFn { slope: 0.0, offset: 0.0 },
    })
}

impl MOData {
    /// cos²ξ1 ξ2' − sin²ξ1 ξ3'.
    pub fn xis_defect(&self) -> f64 {
        self.xi1.cos().powi(2) * self.xi2.slope - self.xi1.sin().powi(2) * self.xi3.slope
    }

    /// ξ1'² + ξ2'²cos²ξ1 + ξ3'²sin²ξ1 − sin²ν.
    pub fn angle_relation_defect(&self) -> f64 {
        self.xi2.slope.powi(2) * self.xi1.cos().powi(2) + self.xi3.slope.powi(2) * self.xi1.sin().powi(2) - self.nu.sin().powi(2)
    }

    /// k-th u-derivative of b(u) = (√c1 e^{iα1 u}, √c2 e^{iα2 u}).
    pub fn curve_b(&self, u: f64, k: i32) -> AmbientVector {
        let (a, b) = circle(self.c1.sqrt(), self.alpha1, u, k);
        let (c, d) = circle(self.c2.sqrt(), self.alpha2, u, k);
        Vector4::new(a, b, c, d)
    }

    /// k-th v-derivative of the rotation A(v).
    pub fn rotation(&self, v: f64, k: i32) -> Matrix4<f64> {
        let (c1, s1) = (self.xi1.cos(), self.xi1.sin());
        let (cc2, ss2) = circle(1.0, self.xi2.slope, v, k);
        let (cc3, ss3) = circle(1.0, self.xi3.slope, v, k);
        // rotate the phases by the offsets
        let (o2c, o2s) = (self.xi2.offset.cos(), self.xi2.offset.sin());
        let (o3c, o3s) = (self.xi3.offset.cos(), self.xi3.offset.sin());
        let (c2, s2) = (cc2 * o2c - ss2 * o2s, ss2 * o2c + cc2 * o2s);
        let (c3, s3) = (cc3 * o3c - ss3 * o3s, ss3 * o3c + cc3 * o3s);
        #[rustfmt::skip]
        let m = Matrix4::new(
            c1 * c2, -c1 * s2, s1 * c3, -s1 * s3,
            c1 * s2, c1 * c2, s1 * s3, s1 * c3,
            -s1 * c3, -s1 * s3, c1 * c2, c1 * s2,
            s1 * s3, -s1 * c3, -c1 * s2, c1 * c2,
        );
        m
    }
}

/// F(u,v) = A(v)·b(u). Orientation +1, so the Hopf angle equals cos ν.
pub fn mo_patch(data: &MOData) -> Result<SurfacePatch> {
    if (data.c1 + data.c2 - 1.0).abs() > 1e-12 {
        return Err(GeomError::Precondition(format!("c1 + c2 = {}", data.c1 + data.c2)));
    }
    let defect = data.xis_defect();
    if defect.abs() > 1e-9 {
        return Err(GeomError::ConstraintViolation(defect));
    }
    let d = *data;
    Ok(SurfacePatch::from_jet(
        "constant-angle",
        vec![("nu".into(), d.nu), ("eps".into(), d.eps)],
        Domain::PLANE,
        move |u, v| {
            let (a0, a1, a2) = (d.rotation(v, 0), d.rotation(v, 1), d.rotation(v, 2));
            let (b0, b1, b2) = (d.curve_b(u, 0), d.curve_b(u, 1), d.curve_b(u, 2));
            [a0 * b0, a0 * b1, a1 * b0, a0 * b2, a1 * b1, a2 * b0]
        },
    ))
}

/// Output of the reconstruction pipeline.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub a: f64,
    pub b: f64,
    /// Angle between E1 and the profile surface's normal.
    pub nu: f64,
    pub nu_stddev: f64,
    /// Whether (c1, c2) were exchanged to obtain a > 1.
    pub swapped_labeling: bool,
    pub data: MOData,
    /// Constant-angle patch in the coordinates of Y(a,b).
    pub patch: SurfacePatch,
    pub residuals: Vec<(String, f64)>,
}

impl ReconstructionResult {
    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.0 == name).map(|r| r.1)
    }
}

pub const NU_CONSTANCY_TOL: f64 = 1e-7;

/// Recovers (a,b) of the family member congruent to the helicoidal surface
/// of a flat profile, builds the constant-angle patch and compares its
/// fundamental forms with those of Y(a,b).
pub fn reconstruct(alpha: f64, beta: f64, profile: &ProfileSolution) -> Result<ReconstructionResult> {
    if (alpha.abs() - beta.abs()).abs() <= 1e-12 * beta.abs().max(1.0) {
        return Err(GeomError::Domain("alpha = ±beta is a Clifford translation; need alpha != ±beta".into()));
    }
    let cos: Vec<f64> = profile
        .samples
        .iter()
        .map(|p| crate::profile_ode::hopf_cos_nu(p.phi, p.dphi, alpha, beta))
        .collect();
    let n = cos.len() as f64;
    let mean = cos.iter().sum::<f64>() / n;
    let sd = (cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd <= NU_CONSTANCY_TOL) {
        return Err(GeomError::NonConstantAngle(sd));
    }
    let nu = mean.clamp(-1.0, 1.0).acos();

    let mut consts = mo_constants(nu, 1.0)?;
    let swapped = consts.c1 < consts.c2;
    if swapped {
        consts = mo_constants(PI - nu, 1.0)?;
    }
    let a = (consts.c1 / consts.c2).sqrt();
    if (a - 1.0).abs() < 1e-9 {
        return Err(GeomError::Domain("recovered a = 1: Hopf cylinder, outside the family a > 1".into()));
    }
    let a2 = a * a;
    let inv_b2 = (a2 * alpha - beta) / (alpha - a2 * beta);
    if !(inv_b2 > 0.0 && inv_b2 < 1.0) {
        return Err(GeomError::Domain(format!(
            "recovered 1/b^2 = {inv_b2} leaves (0,1): b <= 1 (Clifford or Hopf degeneracy)"
        )));
    }
    let b = 1.0 / inv_b2.sqrt();
    let sigma = nu.sin();
    let data = MOData {
        xi1: (1.0 / (1.0 + b * b).sqrt()).asin(),
        xi2: LinearFn { slope: sigma / b, offset: -FRAC_PI_2 },
        xi3: LinearFn { slope: b * sigma, offset: 0.0 },
        ..consts
    };
    let orientation = if swapped { -1.0 } else { 1.0 };
    let patch = mo_patch(&data)?
        .linear_reparam(Matrix2::new(1.0 / sigma, 0.0, 0.0, 1.0 / sigma), Vector2::zeros(), "reconstructed")
        .with_orientation(orientation);

    let mut residuals = vec![("nu_stddev".to_string(), sd)];
    let target = theorem1_patch(a, b, false)?.with_orientation(orientation);
    let grid = GridSpec::square(9, 9);
    let mut worst = [0.0f64; 6];
    for (u, v) in grid.points() {
        let (p, q) = match (patch.forms(u, v), target.forms(u, v)) {
            (Ok(p), Ok(q)) => (p, q),
            (Err(GeomError::DegenerateImmersion { .. }), _) | (_, Err(GeomError::DegenerateImmersion { .. })) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let d = [p.ee - q.ee, p.ff - q.ff, p.gg - q.gg, p.l - q.l, p.m - q.m, p.n - q.n];
        for k in 0..6 {
            worst[k] = worst[k].max(d[k].abs());
        }
    }
    for (name, w) in ["form_E", "form_F", "form_G", "form_e", "form_f", "form_g"].iter().zip(worst) {
        residuals.push((name.to_string(), w));
    }
    residuals.push(("angle_relation".into(), data.angle_relation_defect().abs()));
    residuals.push(("xis_constraint".into(), data.xis_defect().abs()));
    residuals.push(("shift_equations".into(), shift_defect(a, b, alpha, beta)));
    Ok(ReconstructionResult { a, b, nu, nu_stddev: sd, swapped_labeling: swapped, data, patch, residuals })
}

/// Largest defect of the four linear relations tying the parameter shifts
/// z(t), w(t) to the motion rates: z/a + w/b = az + bw = αt and
/// z/a − bw = az − w/b = βt, over a fixed set of t.
pub fn shift_defect(a: f64, b: f64, alpha: f64, beta: f64) -> f64 {
    let d = a * a * b * b - 1.0;
    let mut worst: f64 = 0.0;
    for k in 0..11 {
        let t = -1.0 + 0.2 * k as f64;
        let z = beta * t * a * (b * b - 1.0) / d;
        let w = beta * t * b * (1.0 - a * a) / d;
        for e in [z / a + w / b - alpha * t, a * z + b * w - alpha * t, z / a - b * w - beta * t, a * z - w / b - beta * t] {
            worst = worst.max(e.abs());
        }
    }
    worst
}

/// Guard band of the orbit profile: sampling stops once φ' comes within
/// this distance of ±1, where the profile of the front Y(a,b) has a cusp.
pub const ORBIT_GUARD: f64 = 1e-2;

/// Profile of the helicoidal surface Y(a,b) under the motion with rate
/// `beta`: the curve σ ↦ M(t(σ))·Y(σ,0) with t(σ) chosen so the point lands
/// in x4 = 0, x3 > 0, resampled at uniform arc length s ∈ [0, s_max].
/// Stops early, with `truncated` set, at the guard band.
pub fn theorem1_orbit_profile(a: f64, b: f64, beta: f64, s_max: f64, h: f64) -> Result<ProfileSolution> {
    let hp = helicoidal_params(a, b, beta)?;
    let m = hp.motion();
    let y = theorem1_patch(a, b, false)?;
    // point P(σ) and dP/dσ, with the x3-x4 angle lifted next to `reference`
    let orbit = |sigma: f64, reference: f64| {
        let [f, fu, ..] = y.raw_jet(sigma, 0.0, 0.0).expect("closed-form jet");
        let raw = f[3].atan2(f[2]);
        let angle = raw + 2.0 * PI * ((reference - raw) / (2.0 * PI)).round();
        let t = -angle / beta;
        let r2 = f[2] * f[2] + f[3] * f[3];
        let dt = -(f[2] * fu[3] - f[3] * fu[2]) / (beta * r2);
        let p = m.matrix(t) * f;
        let dp = m.matrix_derivative(t, 1) * f * dt + m.matrix(t) * fu;
        (p, dp, angle)
    };
    let speed = |sigma: f64, reference: f64| orbit(sigma, reference).1.norm();
    let n = (s_max / h).round() as usize;
    let mut sigma = 0.0;
    let mut reference = orbit(0.0, 0.0).2;
    let mut theta_ref = 0.0;
    let mut samples = Vec::with_capacity(n + 1);
    let mut truncated = false;
    for i in 0..=n {
        let (p, dp, angle) = orbit(sigma, reference);
        reference = angle;
        let phi = p[2].asin();
        let raw_theta = p[1].atan2(p[0]);
        let theta = raw_theta + 2.0 * PI * ((theta_ref - raw_theta) / (2.0 * PI)).round();
        let dphi = dp[2] / dp.norm() / phi.cos();
        if !in_band([phi, dphi], ORBIT_GUARD) {
            if i == 0 {
                return Err(GeomError::SingularInitialData(format!("orbit starts outside the guard band (phi = {phi}, phi' = {dphi})")));
            }
            truncated = true;
            break;
        }
        theta_ref = theta;
        samples.push(ProfileSample { s: i as f64 * h, phi, dphi, theta });
        // dσ/ds = 1/|P'(σ)| by one RK4 step
        let k1 = 1.0 / speed(sigma, reference);
        let k2 = 1.0 / speed(sigma + 0.5 * h * k1, reference);
        let k3 = 1.0 / speed(sigma + 0.5 * h * k2, reference);
        let k4 = 1.0 / speed(sigma + h * k3, reference);
        sigma += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let theta_sign = if samples.len() > 1 && samples[1].theta < samples[0].theta { -1.0 } else { 1.0 };
    Ok(ProfileSolution { alpha: hp.alpha, beta, step: h, samples, truncated, theta_sign })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{base_curve, curve_ca, curve_cb, ClosedProfile};
    use crate::forms::{angle_grid, continued_normals, fit_linear_angle, fit_plane, hopf_angle, intrinsic_curvature, jet};
    use crate::profile_ode::integrate;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    #[test]
    fn y_at_origin() {
        let y = theorem1_patch(2.0, 3.0, false).unwrap();
        let expected = Vector4::new(6.0, 1.0, 3.0, 2.0) / 50f64.sqrt();
        assert!((y.value(0.0, 0.0) - expected).amax() < 1e-15);
    }

    #[test]
    fn product_form_matches_components() {
        for (a, b) in [(2.0, 3.0), (SQRT_2, 3.0), (3f64.sqrt(), SQRT_2), (1.0, 2.0)] {
            for (u, v) in [(0.3, -1.2), (2.5, 0.7), (-3.0, 3.0)] {
                let j = y_jet(a, b, u, v);
                assert!((j[0] - y_components(a, b, u, v)).amax() < 1e-14);
                // the printed normal belongs to the a = 1 member
                let _ = j;
            }
        }
    }

    #[test]
    fn full_patch_is_product_of_curves() {
        let x = theorem1_patch(2.0, 3.0, true).unwrap();
        let bs = bianchi_spivak(&curve_ca(2.0).unwrap(), &curve_cb(3.0).unwrap()).unwrap();
        assert!((bs.value(0.0, 0.0) - Vector4::new(1.0, 0.0, 0.0, 0.0)).amax() < 1e-15);
        for (u, v) in [(0.3, -1.2), (2.5, 0.7), (-3.0, 3.0)] {
            assert!((x.value(u, v) - bs.value(u, v)).amax() < 1e-10);
        }
    }

    #[test]
    fn bianchi_spivak_rejects_bad_inputs() {
        let ca = curve_ca(2.0).unwrap();
        let base = base_curve(2.0).unwrap();
        assert!(matches!(bianchi_spivak(&ca, &base), Err(GeomError::Precondition(_))));
        assert!(matches!(bianchi_spivak(&ca, &ca), Err(GeomError::Precondition(_))));
    }

    #[test]
    fn bianchi_spivak_is_flat_with_expected_slopes() {
        let bs = bianchi_spivak(&curve_ca(2.0).unwrap(), &curve_cb(3.0).unwrap()).unwrap();
        for (u, v) in [(0.3, 0.2), (1.1, -0.4)] {
            let c = bs.forms(u, v).unwrap();
            assert!((c.ee - 1.0).abs() < 1e-12 && (c.gg - 1.0).abs() < 1e-12);
            assert!(intrinsic_curvature(&bs, u, v).unwrap().abs() < 1e-6);
        }
        // In the construction orientation the slopes are (1−a²)/a and (1−b²)/b.
        let fit = fit_linear_angle(&bs, &GridSpec::square(15, 15)).unwrap();
        assert!((fit.lambda1 + 1.5).abs() < 1e-8 && (fit.lambda2 + 8.0 / 3.0).abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn slopes_flip_with_orientation_only_together() {
        // Reversing the normal negates ω and keeps both slopes of equal sign.
        let y = theorem1_patch(2.0, 3.0, false).unwrap().with_orientation(1.0);
        let fit = fit_linear_angle(&y, &GridSpec::square(15, 15)).unwrap();
        assert!((fit.lambda1 - 1.5).abs() < 1e-8 && (fit.lambda2 - 8.0 / 3.0).abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn helicoidal_parameter_examples() {
        let hp = helicoidal_params(2.0, 3.0, 35.0).unwrap();
        assert!((hp.alpha - 5.0).abs() < 1e-13);
        assert!((hp.z(1.0) - 16.0).abs() < 1e-13 && (hp.w(1.0) + 9.0).abs() < 1e-13);
        assert_eq!(helicoidal_params(2.5, 2.5, 7.0).unwrap().alpha, 0.0);
        assert!(invariance_defect(2.0, 3.0, 35.0, 100, 1).unwrap() < 1e-12);
    }

    #[test]
    fn hopf_cylinder_normal_and_angle() {
        let p = hopf_cylinder_patch(2.0).unwrap();
        let grid = GridSpec::square(10, 10);
        // F = cos ω = ±1 on the columns v = ±π, ±π/3 of this grid
        let normals = continued_normals(&p, &grid).unwrap();
        assert_eq!(normals.iter().filter(|n| n.is_none()).count(), 40);
        let pts = grid.points();
        let k = normals.iter().position(Option::is_some).unwrap();
        let sign = normals[k].unwrap().dot(&hopf_cylinder_normal(2.0, pts[k].0, pts[k].1)).signum();
        for (n, &(u, v)) in normals.iter().zip(&pts) {
            let Some(n) = n else { continue };
            assert!((n * sign - hopf_cylinder_normal(2.0, u, v)).amax() < 1e-12);
            assert!(hopf_angle(&p, u, v).unwrap().abs() < 1e-12);
        }
        let g = angle_grid(&p, &grid).unwrap();
        let fit = fit_plane(&g.grid, &g.values).unwrap();
        assert!(fit.lambda1.abs() < 1e-10 && (fit.lambda2 + 1.5).abs() < 1e-10, "{fit:?}");
    }

    #[test]
    fn helicoidal_clifford_torus() {
        let prof = Arc::new(ClosedProfile::latitude(FRAC_PI_4, (0.0, 3.0)));
        let p = helicoidal_patch(1.0, 1.0, prof).unwrap();
        let c = p.forms(0.4, 1.0).unwrap();
        assert!((c.ee - 1.0).abs() < 1e-12 && (c.ff - 0.5 * SQRT_2).abs() < 1e-12 && (c.gg - 1.0).abs() < 1e-12);
        assert!(intrinsic_curvature(&p, 0.4, 1.0).unwrap().abs() < 1e-6);
        let m = HelicoidalMotion::new(1.0, 1.0);
        for (t, s, tau) in [(0.1, 0.5, 0.7), (-1.0, 2.0, 2.2)] {
            assert!((p.value(t + tau, s) - m.matrix(tau) * p.value(t, s)).amax() < 1e-15);
        }
    }

    #[test]
    fn helicoidal_first_form_on_latitude() {
        let (alpha, beta) = (3.0, 7.0);
        let prof = Arc::new(ClosedProfile::latitude(FRAC_PI_4, (0.0, 3.0)));
        let p = helicoidal_patch(alpha, beta, prof).unwrap();
        let c = p.forms(0.2, 1.0).unwrap();
        assert!((c.ee - (alpha * alpha + beta * beta) / 2.0).abs() < 1e-9);
        assert!((c.ff - alpha * SQRT_2 / 2.0).abs() < 1e-9);
        assert!((c.gg - 1.0).abs() < 1e-9);
    }

    #[test]
    fn helicoidal_normal_matches_cross_product() {
        let sol = Arc::new(integrate(5.0, 35.0, FRAC_PI_4, 0.1, 0.5, 1e-3).unwrap());
        let p = helicoidal_patch(5.0, 35.0, sol.clone()).unwrap();
        let gamma = profile_curve(sol).unwrap();
        for (t, s) in [(0.1, 0.1), (-0.7, 0.25), (1.3, 0.4)] {
            let j = jet(&p, t, s, 1e-3).unwrap();
            let [x, dx, ..] = gamma.jet(s);
            let n = helicoidal_normal(5.0, 35.0, t, &x, &dx);
            assert!((j.n - n / n.norm()).amax() < 1e-7);
            for v in [j.f, j.f_u, j.f_v] {
                assert!(n.dot(&v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ode_helicoidal_surface_is_flat() {
        let sol = Arc::new(integrate(5.0, 35.0, FRAC_PI_4, 0.1, 0.5, 1e-3).unwrap());
        let p = helicoidal_patch(5.0, 35.0, sol).unwrap();
        for (t, s) in GridSpec::new(-1.0, 1.0, 0.05, 0.45, 5, 5).points() {
            assert!(intrinsic_curvature(&p, t, s).unwrap().abs() < 1e-5);
        }
    }

    #[test]
    fn mo_constant_examples() {
        let d = mo_constants(FRAC_PI_2, 1.0).unwrap();
        assert!((d.big_b - 1.0).abs() < 1e-15 && (d.c1 - 0.5).abs() < 1e-15 && (d.alpha1 - 1.0).abs() < 1e-15 && (d.alpha2 - 1.0).abs() < 1e-15);
        let d = mo_constants((-0.6f64).acos(), 1.0).unwrap();
        assert!((d.c1 - 0.8).abs() < 1e-15 && (d.c2 - 0.2).abs() < 1e-15);
        assert!((d.alpha1 - 0.4).abs() < 1e-15 && (d.alpha2 - 1.6).abs() < 1e-15);
        for u in [0.0, 0.7, 2.9] {
            assert!((d.curve_b(u, 1).norm() - 2.0 * (d.c1 * d.c2).sqrt()).abs() < 1e-15);
        }
        assert!(matches!(mo_constants(0.0, 1.0), Err(GeomError::Domain(_))));
    }

    #[test]
    fn mo_rotation_is_orthogonal_with_consistent_derivatives() {
        let d = MOData {
            xi1: 0.3,
            xi2: LinearFn { slope: 0.7, offset: -0.4 },
            xi3: LinearFn { slope: 1.9, offset: 0.2 },
            ..mo_constants(1.1, 1.0).unwrap()
        };
        let a = d.rotation(0.8, 0);
        assert!((a.transpose() * a - Matrix4::identity()).amax() < 1e-14);
        assert!((a.determinant() - 1.0).abs() < 1e-14);
        let h = 1e-5;
        let fd = (d.rotation(0.8 + h, 0) - d.rotation(0.8 - h, 0)) / (2.0 * h);
        assert!((fd - d.rotation(0.8, 1)).amax() < 1e-9);
    }

    #[test]
    fn mo_patch_rejects_constraint_violation() {
        let d = MOData { xi1: 0.3, xi2: LinearFn { slope: 1.0, offset: 0.0 }, ..mo_constants(1.1, 1.0).unwrap() };
        assert!(matches!(mo_patch(&d), Err(GeomError::ConstraintViolation(_))));
    }

    #[test]
    fn orbit_profile_round_trip() {
        let prof = theorem1_orbit_profile(2.0, 3.0, 35.0, 0.5, 1e-3).unwrap();
        assert!((prof.alpha - 5.0).abs() < 1e-12);
        // the profile has a cusp near s = 0.27
        assert!(prof.truncated && prof.s_max() > 0.25);
        assert!(prof.samples.iter().all(|p| p.phi > 0.0));
        // the arc-length check differences θ centrally, so its defect is
        // O(h²) truncation and must drop fourfold when h halves
        let fine = theorem1_orbit_profile(2.0, 3.0, 35.0, 0.5, 5e-4).unwrap();
        let ratio = prof.arc_length_defect() / fine.arc_length_defect();
        assert!(prof.arc_length_defect() < 2e-5 && (3.5..4.5).contains(&ratio), "{ratio}");
        let r = reconstruct(5.0, 35.0, &prof).unwrap();
        assert!((r.a - 2.0).abs() < 1e-6 && (r.b - 3.0).abs() < 1e-6, "{} {}", r.a, r.b);
        assert!(r.swapped_labeling);
        assert!((r.nu.cos() - 0.6).abs() < 1e-9);
        for (name, value) in &r.residuals {
            assert!(*value < 1e-6, "{name} = {value}");
        }
        // the constant-angle patch is a rotated, rescaled copy of Y
        let rot = Matrix4::new(0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0);
        let y = theorem1_patch(2.0, 3.0, false).unwrap();
        for (u, v) in [(0.2, 0.3), (-1.0, 2.0)] {
            assert!((r.patch.value(u, v) - rot * y.value(u, v)).amax() < 1e-9);
        }
        // with the normal continued across the degenerate lines the angle
        // with E1 is one constant, cos ν of the data
        let mo = mo_patch(&r.data).unwrap();
        let grid = GridSpec::square(21, 21);
        let normals = continued_normals(&mo, &grid).unwrap();
        for (n, (u, v)) in normals.iter().zip(grid.points()) {
            let Some(n) = n else { continue };
            let f = mo.value(u, v);
            let e1 = Vector4::new(-f[1], f[0], -f[3], f[2]);
            assert!((n.dot(&e1) - r.data.nu.cos()).abs() < 1e-9, "{u} {v} {}", n.dot(&e1));
        }
    }

    #[test]
    fn reconstruct_rejects_clifford_rates() {
        let prof = theorem1_orbit_profile(2.0, 3.0, 35.0, 0.1, 1e-3).unwrap();
        assert!(matches!(reconstruct(35.0, 35.0, &prof), Err(GeomError::Domain(_))));
        assert!(matches!(reconstruct(-35.0, 35.0, &prof), Err(GeomError::Domain(_))));
    }

    #[test]
    fn reconstruct_rejects_non_flat_profile() {
        let mut prof = integrate(5.0, 35.0, FRAC_PI_4, 0.1, 0.3, 1e-3).unwrap();
        for (i, p) in prof.samples.iter_mut().enumerate() {
            p.dphi += 1e-3 * i as f64 / 300.0;
        }
        assert!(matches!(reconstruct(5.0, 35.0, &prof), Err(GeomError::NonConstantAngle(_))));
    }
}
