//! Order-2 jets of surface patches, unit normals, fundamental forms,
//! intrinsic and extrinsic curvature, the Hopf angle, and extraction and
//! fitting of the angle function of asymptotic Tschebycheff coordinates.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::s3core::{cross3, hopf_frame_vec, AmbientVector, S3Point};

/// Default step for finite-difference jets and metric derivatives.
pub const DEFAULT_H: f64 = 1e-3;

/// Threshold on |f ∧ f_u ∧ f_v| below which the immersion is degenerate.
pub const IMMERSION_TOL: f64 = 1e-10;

/// Tolerance on the asymptotic Tschebycheff normal form.
pub const ASYMPTOTIC_TOL: f64 = 1e-6;

/// f, f_u, f_v, f_uu, f_uv, f_vv.
pub type PatchJet = [AmbientVector; 6];

type MapFn = dyn Fn(f64, f64) -> AmbientVector + Send + Sync;
type JetFn = dyn Fn(f64, f64) -> PatchJet + Send + Sync;

/// Parameter rectangle on which a patch is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub umin: f64,
    pub umax: f64,
    pub vmin: f64,
    pub vmax: f64,
}

impl Domain {
    pub const PLANE: Domain = Domain {
        umin: f64::NEG_INFINITY,
        umax: f64::INFINITY,
        vmin: f64::NEG_INFINITY,
        vmax: f64::INFINITY,
    };

    pub fn new(umin: f64, umax: f64, vmin: f64, vmax: f64) -> Self {
        Domain { umin, umax, vmin, vmax }
    }

    pub fn contains(&self, u: f64, v: f64, margin: f64) -> bool {
        u - margin >= self.umin && u + margin <= self.umax && v - margin >= self.vmin && v + margin <= self.vmax
    }
}

/// Immersion (u,v) -> S^3 with optional closed-form jet. `orientation` is
/// +1 or -1 and multiplies the normal cross3(f, f_u, f_v).
#[derive(Clone)]
pub struct SurfacePatch {
    pub tag: String,
    pub params: Vec<(String, f64)>,
    pub domain: Domain,
    pub orientation: f64,
    map: Arc<MapFn>,
    jet: Option<Arc<JetFn>>,
}

impl fmt::Debug for SurfacePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfacePatch")
            .field("tag", &self.tag)
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("orientation", &self.orientation)
            .field("closed_form", &self.jet.is_some())
            .finish()
    }
}

impl SurfacePatch {
    pub fn from_map(tag: &str, domain: Domain, map: impl Fn(f64, f64) -> AmbientVector + Send + Sync + 'static) -> Self {
        SurfacePatch { tag: tag.into(), params: vec![], domain, orientation: 1.0, map: Arc::new(map), jet: None }
    }

    pub fn from_jet(
        tag: &str,
        params: Vec<(String, f64)>,
        domain: Domain,
        jet: impl Fn(f64, f64) -> PatchJet + Send + Sync + 'static,
    ) -> Self {
        let jet: Arc<JetFn> = Arc::new(jet);
        let j = jet.clone();
        SurfacePatch { tag: tag.into(), params, domain, orientation: 1.0, map: Arc::new(move |u, v| j(u, v)[0]), jet: Some(jet) }
    }

    pub fn with_orientation(mut self, sign: f64) -> Self {
        self.orientation = sign.signum();
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn has_closed_form(&self) -> bool {
        self.jet.is_some()
    }

    pub fn value(&self, u: f64, v: f64) -> AmbientVector {
        (self.map)(u, v)
    }

    pub fn point(&self, u: f64, v: f64) -> S3Point {
        S3Point::from_vector(&self.value(u, v))
    }

    /// Closed-form jet when available, else central differences with step h
    /// and one Richardson level (the point then needs a margin of 2h).
    pub fn raw_jet(&self, u: f64, v: f64, h: f64) -> Result<PatchJet> {
        match &self.jet {
            Some(j) => Ok(j(u, v)),
            None => {
                if !self.domain.contains(u, v, 2.0 * h) {
                    return Err(GeomError::OutsideDomain(2.0 * h));
                }
                Ok(self.fd_jet(u, v, h))
            }
        }
    }

    pub fn fd_jet(&self, u: f64, v: f64, h: f64) -> PatchJet {
        let f = |a: f64, b: f64| self.value(u + a, v + b);
        let f0 = f(0.0, 0.0);
        let level = |h: f64| {
            let (up, um, vp, vm) = (f(h, 0.0), f(-h, 0.0), f(0.0, h), f(0.0, -h));
            [
                (up - um) / (2.0 * h),
                (vp - vm) / (2.0 * h),
                (up - f0 * 2.0 + um) / (h * h),
                (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h),
                (vp - f0 * 2.0 + vm) / (h * h),
            ]
        };
        let coarse = level(h);
        let fine = level(h / 2.0);
        let r = |k: usize| (fine[k] * 4.0 - coarse[k]) / 3.0;
        [f0, r(0), r(1), r(2), r(3), r(4)]
    }

    /// Composition with a fixed linear map of R^4 (an isometry when orthogonal).
    pub fn compose_linear(&self, m: Matrix4<f64>, tag: &str) -> SurfacePatch {
        let base = self.clone();
        let map: Arc<MapFn> = Arc::new(move |u, v| m * base.value(u, v));
        let jet = self.jet.as_ref().map(|j| {
            let j = j.clone();
            Arc::new(move |u: f64, v: f64| j(u, v).map(|x| m * x)) as Arc<JetFn>
        });
        SurfacePatch { tag: tag.into(), map, jet, ..self.clone() }
    }

    /// New patch (s,t) -> f(m·(s,t) + offset).
    pub fn linear_reparam(&self, m: Matrix2<f64>, offset: Vector2<f64>, tag: &str) -> SurfacePatch {
        let base = self.clone();
        let old = move |s: f64, t: f64| m * Vector2::new(s, t) + offset;
        let map: Arc<MapFn> = Arc::new(move |s, t| {
            let p = old(s, t);
            base.value(p[0], p[1])
        });
        let jet = self.jet.as_ref().map(|j| {
            let j = j.clone();
            Arc::new(move |s: f64, t: f64| {
                let p = old(s, t);
                let [f, fu, fv, fuu, fuv, fvv] = j(p[0], p[1]);
                let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
                // d/ds = a d/du + c d/dv, d/dt = b d/du + d d/dv
                [
                    f,
                    fu * a + fv * c,
                    fu * b + fv * d,
                    fuu * (a * a) + fuv * (2.0 * a * c) + fvv * (c * c),
                    fuu * (a * b) + fuv * (a * d + b * c) + fvv * (c * d),
                    fuu * (b * b) + fuv * (2.0 * b * d) + fvv * (d * d),
                ]
            }) as Arc<JetFn>
        });
        let inv = m.try_inverse().unwrap_or_else(Matrix2::identity);
        let corners = [
            (self.domain.umin, self.domain.vmin),
            (self.domain.umax, self.domain.vmin),
            (self.domain.umin, self.domain.vmax),
            (self.domain.umax, self.domain.vmax),
        ];
        let domain = if corners.iter().all(|c| c.0.is_finite() && c.1.is_finite()) {
            let pts: Vec<Vector2<f64>> = corners.iter().map(|c| inv * (Vector2::new(c.0, c.1) - offset)).collect();
            let fold = |k: usize, max: bool| {
                pts.iter().map(|p| p[k]).fold(if max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| if max { a.max(b) } else { a.min(b) })
            };
            Domain::new(fold(0, false), fold(0, true), fold(1, false), fold(1, true))
        } else {
            Domain::PLANE
        };
        SurfacePatch { tag: tag.into(), domain, map, jet, ..self.clone() }
    }
}

/// Jet with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetSample {
    pub f: AmbientVector,
    pub f_u: AmbientVector,
    pub f_v: AmbientVector,
    pub f_uu: AmbientVector,
    pub f_uv: AmbientVector,
    pub f_vv: AmbientVector,
    pub n: AmbientVector,
}

pub fn jet(p: &SurfacePatch, u: f64, v: f64, h: f64) -> Result<JetSample> {
    let [f, f_u, f_v, f_uu, f_uv, f_vv] = p.raw_jet(u, v, h)?;
    let c = cross3(&f, &f_u, &f_v);
    let norm = c.norm();
    if norm < IMMERSION_TOL {
        return Err(GeomError::DegenerateImmersion { u, v });
    }
    Ok(JetSample { f, f_u, f_v, f_uu, f_uv, f_vv, n: c * (p.orientation / norm) })
}

/// |a ∧ b|^2 = |a|^2|b|^2 - <a,b>^2 summed over 2x2 minors, which keeps its
/// relative accuracy when a and b are nearly parallel.
pub fn wedge_norm2(a: &AmbientVector, b: &AmbientVector) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let m = a[i] * b[j] - a[j] * b[i];
            s += m * m;
        }
    }
    s
}

/// First form (ee, ff, gg) = (E, F, G) and second form (l, m, n) = (e, f, g).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormCoefficients {
    pub ee: f64,
    pub ff: f64,
    pub gg: f64,
    pub l: f64,
    pub m: f64,
    pub n: f64,
    /// EG - F^2.
    pub det: f64,
    pub k_ext: Option<f64>,
    pub k_int: Option<f64>,
}

impl FormCoefficients {
    pub fn new(ee: f64, ff: f64, gg: f64, l: f64, m: f64, n: f64) -> Self {
        Self::with_det(ee, ff, gg, l, m, n, ee * gg - ff * ff)
    }

    fn with_det(ee: f64, ff: f64, gg: f64, l: f64, m: f64, n: f64, det: f64) -> Self {
        let k_ext = (det > 0.0).then(|| (l * n - m * m) / det);
        FormCoefficients { ee, ff, gg, l, m, n, det, k_ext, k_int: None }
    }

    /// Largest deviation from E = G = 1, e = g = 0.
    pub fn asymptotic_defect(&self) -> f64 {
        [(self.ee - 1.0).abs(), (self.gg - 1.0).abs(), self.l.abs(), self.n.abs()].into_iter().fold(0.0, f64::max)
    }

    /// Forms in new coordinates x = m·x'.
    pub fn pulled_back(&self, m: &Matrix2<f64>) -> FormCoefficients {
        let first = m.transpose() * Matrix2::new(self.ee, self.ff, self.ff, self.gg) * m;
        let second = m.transpose() * Matrix2::new(self.l, self.m, self.m, self.n) * m;
        FormCoefficients::new(first[(0, 0)], first[(0, 1)], first[(1, 1)], second[(0, 0)], second[(0, 1)], second[(1, 1)])
    }
}

pub fn fundamental_forms(j: &JetSample) -> FormCoefficients {
    FormCoefficients::with_det(
        j.f_u.dot(&j.f_u),
        j.f_u.dot(&j.f_v),
        j.f_v.dot(&j.f_v),
        j.f_uu.dot(&j.n),
        j.f_uv.dot(&j.n),
        j.f_vv.dot(&j.n),
        wedge_norm2(&j.f_u, &j.f_v),
    )
}

/// Anything that yields both fundamental forms at a parameter point.
pub trait FormSource: Sync {
    fn forms(&self, u: f64, v: f64) -> Result<FormCoefficients>;

    /// Forms together with the unit normal they were computed against, for
    /// sources that have one.
    fn forms_with_normal(&self, u: f64, v: f64) -> Result<(FormCoefficients, Option<AmbientVector>)> {
        Ok((self.forms(u, v)?, None))
    }
}

impl FormSource for SurfacePatch {
    fn forms(&self, u: f64, v: f64) -> Result<FormCoefficients> {
        Ok(fundamental_forms(&jet(self, u, v, DEFAULT_H)?))
    }

    fn forms_with_normal(&self, u: f64, v: f64) -> Result<(FormCoefficients, Option<AmbientVector>)> {
        let j = jet(self, u, v, DEFAULT_H)?;
        Ok((fundamental_forms(&j), Some(j.n)))
    }
}

/// First form and its first partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricJet {
    pub ee: f64,
    pub ff: f64,
    pub gg: f64,
    pub det: f64,
    pub ee_u: f64,
    pub ee_v: f64,
    pub ff_u: f64,
    pub ff_v: f64,
    pub gg_u: f64,
    pub gg_v: f64,
}

/// A first fundamental form. The default partials are central differences
/// with one Richardson level.
pub trait MetricField: Sync {
    fn metric(&self, u: f64, v: f64) -> Result<[f64; 3]>;

    fn metric_jet(&self, u: f64, v: f64) -> Result<MetricJet> {
        let [ee, ff, gg] = self.metric(u, v)?;
        let d = |du: f64, dv: f64| -> Result<[f64; 3]> {
            let rich = |h: f64| -> Result<[f64; 3]> {
                let p = self.metric(u + du * h, v + dv * h)?;
                let m = self.metric(u - du * h, v - dv * h)?;
                Ok([0, 1, 2].map(|k| (p[k] - m[k]) / (2.0 * h)))
            };
            let (c, f) = (rich(DEFAULT_H)?, rich(DEFAULT_H / 2.0)?);
            Ok([0, 1, 2].map(|k| (4.0 * f[k] - c[k]) / 3.0))
        };
        let du = d(1.0, 0.0)?;
        let dv = d(0.0, 1.0)?;
        Ok(MetricJet {
            ee,
            ff,
            gg,
            det: ee * gg - ff * ff,
            ee_u: du[0],
            ee_v: dv[0],
            ff_u: du[1],
            ff_v: dv[1],
            gg_u: du[2],
            gg_v: dv[2],
        })
    }
}

/// Metric partials come straight from the order-2 jet, so only the second
/// partials in the curvature formula are differenced.
impl MetricField for SurfacePatch {
    fn metric(&self, u: f64, v: f64) -> Result<[f64; 3]> {
        let [_, fu, fv, ..] = self.raw_jet(u, v, DEFAULT_H)?;
        Ok([fu.dot(&fu), fu.dot(&fv), fv.dot(&fv)])
    }

    fn metric_jet(&self, u: f64, v: f64) -> Result<MetricJet> {
        let [_, fu, fv, fuu, fuv, fvv] = self.raw_jet(u, v, DEFAULT_H)?;
        Ok(MetricJet {
            ee: fu.dot(&fu),
            ff: fu.dot(&fv),
            gg: fv.dot(&fv),
            det: wedge_norm2(&fu, &fv),
            ee_u: 2.0 * fuu.dot(&fu),
            ee_v: 2.0 * fuv.dot(&fu),
            ff_u: fuu.dot(&fv) + fu.dot(&fuv),
            ff_v: fuv.dot(&fv) + fu.dot(&fvv),
            gg_u: 2.0 * fuv.dot(&fv),
            gg_v: 2.0 * fvv.dot(&fv),
        })
    }
}

/// Gauss curvature from the first form alone (Brioschi), with the second
/// partials E_vv, F_uv, G_uu taken by central differences of the first
/// partials (step h, one Richardson level).
pub fn brioschi_curvature(field: &dyn MetricField, u: f64, v: f64, h: f64) -> Result<f64> {
    let j = field.metric_jet(u, v)?;
    if j.det < IMMERSION_TOL * IMMERSION_TOL {
        return Err(GeomError::DegenerateImmersion { u, v });
    }
    let diff = |du: f64, dv: f64, pick: fn(&MetricJet) -> f64| -> Result<f64> {
        let level = |h: f64| -> Result<f64> {
            let p = field.metric_jet(u + du * h, v + dv * h)?;
            let m = field.metric_jet(u - du * h, v - dv * h)?;
            Ok((pick(&p) - pick(&m)) / (2.0 * h))
        };
        Ok((4.0 * level(h / 2.0)? - level(h)?) / 3.0)
    };
    let ee_vv = diff(0.0, 1.0, |m| m.ee_v)?;
    let gg_uu = diff(1.0, 0.0, |m| m.gg_u)?;
    let ff_uv = 0.5 * (diff(0.0, 1.0, |m| m.ff_u)? + diff(1.0, 0.0, |m| m.ff_v)?);
    let MetricJet { ee, ff, gg, det, ee_u, ee_v, ff_u, ff_v, gg_u, gg_v } = j;
    let num = ee * (ee_v * gg_v - 2.0 * ff_u * gg_v + gg_u * gg_u)
        + gg * (ee_u * gg_u - 2.0 * ee_u * ff_v + ee_v * ee_v)
        + ff * (ee_u * gg_v - ee_v * gg_u - 2.0 * ee_v * ff_v + 4.0 * ff_u * ff_v - 2.0 * ff_u * gg_u)
        - 2.0 * det * (ee_vv - 2.0 * ff_uv + gg_uu);
    Ok(num / (4.0 * det * det))
}

pub fn intrinsic_curvature(p: &SurfacePatch, u: f64, v: f64) -> Result<f64> {
    brioschi_curvature(p, u, v, DEFAULT_H)
}

/// Forms with both curvatures filled in.
pub fn full_forms(p: &SurfacePatch, u: f64, v: f64) -> Result<FormCoefficients> {
    let mut c = p.forms(u, v)?;
    c.k_int = Some(intrinsic_curvature(p, u, v)?);
    Ok(c)
}

/// cos of the angle between the unit normal and the Hopf field E1.
pub fn hopf_angle(p: &SurfacePatch, u: f64, v: f64) -> Result<f64> {
    let j = jet(p, u, v, DEFAULT_H)?;
    Ok(j.n.dot(&hopf_frame_vec(&j.f.normalize())[0]))
}

/// Principal value atan2(f, F) of the angle function.
pub fn extract_angle(src: &dyn FormSource, u: f64, v: f64) -> Result<f64> {
    let c = src.forms(u, v)?;
    let defect = c.asymptotic_defect();
    if defect > ASYMPTOTIC_TOL {
        return Err(GeomError::NotAsymptotic { u, v, defect });
    }
    Ok(c.m.atan2(c.ff))
}

/// Rectangular grid with `nu` samples in u and `nv` in v, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub umin: f64,
    pub umax: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub nu: usize,
    pub nv: usize,
}

impl GridSpec {
    pub fn new(umin: f64, umax: f64, vmin: f64, vmax: f64, nu: usize, nv: usize) -> Self {
        GridSpec { umin, umax, vmin, vmax, nu, nv }
    }

    /// [-π, π]^2.
    pub fn square(nu: usize, nv: usize) -> Self {
        GridSpec::new(-PI, PI, -PI, PI, nu, nv)
    }

    fn coord(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn u(&self, i: usize) -> f64 {
        Self::coord(self.umin, self.umax, self.nu, i)
    }

    pub fn v(&self, j: usize) -> f64 {
        Self::coord(self.vmin, self.vmax, self.nv, j)
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order, index i·nv + j.
    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.nu).flat_map(|i| (0..self.nv).map(move |j| (i, j))).map(|(i, j)| (self.u(i), self.v(j))).collect()
    }
}

/// Angle samples over a grid lifted to one continuous branch. Points where
/// the immersion degenerates carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub grid: GridSpec,
    pub values: Vec<Option<f64>>,
    /// Whether the seed sample (see `grid_walk`) lies in (0, π).
    pub seed_in_principal_range: bool,
}

fn lift(reference: f64, value: f64) -> f64 {
    value + 2.0 * PI * ((reference - value) / (2.0 * PI)).round()
}

/// Breadth-first traversal of the usable grid points from the seed, the
/// usable point nearest the grid centre (lowest index on ties). Each entry is (point, parent); neighbours are the nearest usable points
/// in the four axis directions, so isolated or whole lines of unusable
/// points are stepped over.
pub fn grid_walk(grid: &GridSpec, usable: &[bool]) -> Vec<(usize, Option<usize>)> {
    let idx = |i: usize, j: usize| i * grid.nv + j;
    let mut seen = vec![false; usable.len()];
    let mut order = vec![];
    let mut queue = VecDeque::new();
    let (ci, cj) = ((grid.nu as f64 - 1.0) / 2.0, (grid.nv as f64 - 1.0) / 2.0);
    let centre_dist = |k: usize| ((k / grid.nv) as f64 - ci).powi(2) + ((k % grid.nv) as f64 - cj).powi(2);
    let seed = (0..usable.len()).filter(|&k| usable[k]).min_by(|&a, &b| centre_dist(a).total_cmp(&centre_dist(b)));
    if let Some(seed) = seed {
        seen[seed] = true;
        order.push((seed, None));
        queue.push_back(seed);
    }
    while let Some(p) = queue.pop_front() {
        let (i, j) = ((p / grid.nv) as isize, (p % grid.nv) as isize);
        for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (mut a, mut b) = (i + di, j + dj);
            while a >= 0 && b >= 0 && (a as usize) < grid.nu && (b as usize) < grid.nv {
                let q = idx(a as usize, b as usize);
                if usable[q] {
                    if !seen[q] {
                        seen[q] = true;
                        order.push((q, Some(p)));
                        queue.push_back(q);
                    }
                    break;
                }
                a += di;
                b += dj;
            }
        }
    }
    order
}

/// Grid samples of the forms and normal; degenerate points are `None`.
fn sample_forms(src: &dyn FormSource, grid: &GridSpec) -> Result<Vec<Option<(FormCoefficients, Option<AmbientVector>)>>> {
    grid.points()
        .par_iter()
        .map(|&(u, v)| match src.forms_with_normal(u, v) {
            Ok(s) => Ok(Some(s)),
            Err(GeomError::DegenerateImmersion { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Angle function over a grid, lifted to one continuous branch along
/// `grid_walk`. The normal cross3(f, f_u, f_v)/|...| reverses wherever f_u
/// and f_v pass through parallel, which folds atan2(f, F) back into (0, π);
/// so when the source reports normals, each sample's normal is flipped to
/// agree with its parent's (negating f) before the angle is taken. The seed
/// keeps the source's own orientation.
pub fn angle_grid(src: &dyn FormSource, grid: &GridSpec) -> Result<AngleGrid> {
    let samples = sample_forms(src, grid)?;
    for (k, s) in samples.iter().enumerate() {
        if let Some((c, _)) = s {
            let defect = c.asymptotic_defect();
            if defect > ASYMPTOTIC_TOL {
                let (u, v) = (grid.u(k / grid.nv), grid.v(k % grid.nv));
                return Err(GeomError::NotAsymptotic { u, v, defect });
            }
        }
    }
    let usable: Vec<bool> = samples.iter().map(Option::is_some).collect();
    let mut values: Vec<Option<f64>> = vec![None; samples.len()];
    let mut normals: Vec<Option<AmbientVector>> = vec![None; samples.len()];
    let mut seed_in_principal_range = false;
    for (p, parent) in grid_walk(grid, &usable) {
        let (c, n) = samples[p].expect("walk visits usable points");
        let flip = match (parent.and_then(|q| normals[q]), n) {
            (Some(reference), Some(n)) if reference.dot(&n) < 0.0 => -1.0,
            _ => 1.0,
        };
        normals[p] = n.map(|n| n * flip);
        let w = (flip * c.m).atan2(c.ff);
        values[p] = Some(match parent {
            Some(q) => lift(values[q].expect("parents are lifted first"), w),
            None => {
                seed_in_principal_range = w > 0.0 && w < PI;
                w
            }
        });
    }
    Ok(AngleGrid { grid: *grid, values, seed_in_principal_range })
}

/// Unit normals over a grid made continuous along `grid_walk`, starting
/// from the patch's orientation at the seed.
pub fn continued_normals(p: &SurfacePatch, grid: &GridSpec) -> Result<Vec<Option<AmbientVector>>> {
    let samples = sample_forms(p, grid)?;
    let usable: Vec<bool> = samples.iter().map(Option::is_some).collect();
    let mut normals: Vec<Option<AmbientVector>> = vec![None; samples.len()];
    for (k, parent) in grid_walk(grid, &usable) {
        let n = samples[k].and_then(|s| s.1).expect("patches report normals");
        let flip = parent.and_then(|q| normals[q]).map_or(1.0, |r| if r.dot(&n) < 0.0 { -1.0 } else { 1.0 });
        normals[k] = Some(n * flip);
    }
    Ok(normals)
}

/// ⟨N, E1⟩ over a grid with N continued as in `continued_normals`;
/// degenerate points are `None`.
pub fn hopf_angle_grid(p: &SurfacePatch, grid: &GridSpec) -> Result<Vec<Option<f64>>> {
    let normals = continued_normals(p, grid)?;
    Ok(normals
        .iter()
        .zip(grid.points())
        .map(|(n, (u, v))| n.map(|n| n.dot(&hopf_frame_vec(&p.value(u, v).normalize())[0])))
        .collect())
}

/// Least-squares plane ω ≈ λ1 u + λ2 v + λ3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleFit {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub rms_residual: f64,
    pub samples: usize,
    /// Grid points skipped because the immersion degenerates there.
    pub skipped: usize,
}

pub fn fit_plane(grid: &GridSpec, values: &[Option<f64>]) -> Result<AngleFit> {
    let pts: Vec<(f64, f64, f64)> = grid
        .points()
        .into_iter()
        .zip(values)
        .filter_map(|((u, v), w)| w.map(|w| (u, v, w)))
        .collect();
    if pts.len() < 3 {
        return Err(GeomError::Precondition("fewer than three usable angle samples".into()));
    }
    let a = DMatrix::from_fn(pts.len(), 3, |r, c| match c {
        0 => pts[r].0,
        1 => pts[r].1,
        _ => 1.0,
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.2));
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| GeomError::Precondition(format!("least squares failed: {e}")))?;
    let r = &a * &x - &b;
    Ok(AngleFit {
        lambda1: x[0],
        lambda2: x[1],
        lambda3: x[2],
        rms_residual: (r.norm_squared() / pts.len() as f64).sqrt(),
        samples: pts.len(),
        skipped: values.len() - pts.len(),
    })
}

pub fn fit_linear_angle(src: &dyn FormSource, grid: &GridSpec) -> Result<AngleFit> {
    let g = angle_grid(src, grid)?;
    fit_plane(grid, &g.values)
}

/// Tschebycheff asymptotic forms I = du² + 2cos ω dudv + dv²,
/// II = 2 sin ω dudv for a prescribed angle function.
#[derive(Clone)]
pub struct TschebycheffForms {
    omega: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl TschebycheffForms {
    pub fn new(omega: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        TschebycheffForms { omega: Arc::new(omega) }
    }
}

impl FormSource for TschebycheffForms {
    fn forms(&self, u: f64, v: f64) -> Result<FormCoefficients> {
        let w = (self.omega)(u, v);
        Ok(FormCoefficients::new(1.0, w.cos(), 1.0, 0.0, w.sin(), 0.0))
    }
}

impl MetricField for TschebycheffForms {
    fn metric(&self, u: f64, v: f64) -> Result<[f64; 3]> {
        Ok([1.0, (self.omega)(u, v).cos(), 1.0])
    }
}

/// Forms of `inner` read in new coordinates x = m·x'.
pub struct LinearChange<S> {
    pub inner: S,
    pub m: Matrix2<f64>,
}

impl<S: FormSource> FormSource for LinearChange<S> {
    fn forms(&self, u: f64, v: f64) -> Result<FormCoefficients> {
        let x = self.m * Vector2::new(u, v);
        Ok(self.inner.forms(x[0], x[1])?.pulled_back(&self.m))
    }
}
