//! Check suites behind `s3flat verify`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{rngs::StdRng, Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{
    bianchi_spivak, helicoidal_params, helicoidal_patch, helicoidal_patch_from_curve, hopf_cylinder_normal, hopf_cylinder_patch,
    invariance_defect, shift_defect, theorem1_orbit_profile, theorem1_patch, theorem1_slopes,
};
use crate::curves::{curve_ca, curve_cb, profile_curve_unchecked, profile_defects, ClosedProfile, Profile};
use crate::error::{GeomError, Result};
use crate::forms::{
    angle_grid, continued_normals, fit_plane, hopf_angle_grid, intrinsic_curvature, GridSpec, SurfacePatch, DEFAULT_H,
};
use crate::lame::{
    asymptotic_forms, asymptotic_from_curvature_line, guichard_residual, lame_residuals, sample_phis, system_residual, LameSolution,
    Perturbation,
};
use crate::profile_ode::{convergence_order, integrate, ProfileSolution};
use crate::report::{Check, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Theorem1,
    BianchiSpivak,
    HopfCylinder,
    Helicoidal,
    Ode,
    NegativeControl,
    Lame,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::Theorem1, Kind::BianchiSpivak, Kind::HopfCylinder, Kind::Helicoidal, Kind::Ode, Kind::NegativeControl, Kind::Lame];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Theorem1 => "theorem1",
            Kind::BianchiSpivak => "bianchi-spivak",
            Kind::HopfCylinder => "hopf-cylinder",
            Kind::Helicoidal => "helicoidal",
            Kind::Ode => "ode",
            Kind::NegativeControl => "negative-control",
            Kind::Lame => "lame",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown kind '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// Parameters shared by every kind; each kind reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyInput {
    pub kind: Kind,
    pub a: f64,
    pub b: f64,
    /// Motion rates; `alpha` is derived from (a, b, beta) where the kind
    /// fixes it.
    pub alpha: f64,
    pub beta: f64,
    pub phi0: f64,
    pub dphi0: f64,
    pub s_max: f64,
    pub h: f64,
    pub grid: GridSpec,
}

impl VerifyInput {
    pub fn new(kind: Kind) -> Self {
        let beta = 35.0;
        VerifyInput {
            kind,
            a: 2.0,
            b: 3.0,
            alpha: 5.0,
            beta,
            phi0: FRAC_PI_4,
            dphi0: 0.1,
            s_max: 0.5,
            h: 1e-3,
            grid: default_grid(kind, beta),
        }
    }
}

/// [-π,π]² for patches in asymptotic coordinates. Helicoidal kinds use
/// (t, s): t spans half a turn of the x3x4 rotation, [-π/|β|, π/|β|], so
/// neighbouring samples stay close; s is clipped to the profile later.
pub fn default_grid(kind: Kind, beta: f64) -> GridSpec {
    match kind {
        Kind::Helicoidal | Kind::Ode | Kind::NegativeControl => {
            let t = PI / beta.abs().max(1.0);
            GridSpec::new(-t, t, -PI, PI, 21, 21)
        }
        _ => GridSpec::square(21, 21),
    }
}

pub const TOL_SPHERE: f64 = 1e-12;
pub const TOL_FIRST_FORM: f64 = 1e-9;
pub const TOL_SECOND_FORM: f64 = 1e-8;
/// K_int comes from differentiated metric partials; see `brioschi_curvature`.
pub const TOL_FLAT: f64 = 1e-5;
pub const TOL_SLOPE: f64 = 1e-6;
pub const TOL_RMS: f64 = 1e-8;
pub const TOL_HOPF_CONST: f64 = 1e-8;
pub const TOL_INVARIANCE: f64 = 1e-12;
pub const TOL_SHIFT: f64 = 1e-9;
pub const TOL_NORMAL: f64 = 1e-9;
pub const TOL_ODE: f64 = 1e-8;
pub const TOL_ARC: f64 = 1e-6;
pub const TOL_ODE_HOPF: f64 = 1e-6;
pub const TOL_COS_NU: f64 = 1e-9;
pub const MIN_RK_ORDER: f64 = 3.8;
pub const TOL_LAME: f64 = 1e-9;
pub const TOL_PERTURBATION: f64 = 1e-4;
pub const TOL_LAME_FIT: f64 = 1e-8;

fn max_abs<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    xs.into_iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn stddev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Pointwise geometry of a patch over a grid.
struct GridGeometry {
    sphere: f64,
    first_form: f64,
    second_form: f64,
    k_int: f64,
    gauss: f64,
    samples: usize,
    skipped: usize,
}

fn grid_geometry(p: &SurfacePatch, grid: &GridSpec) -> Result<GridGeometry> {
    let rows: Vec<Option<[f64; 5]>> = grid
        .points()
        .par_iter()
        .map(|&(u, v)| {
            let j = match crate::forms::jet(p, u, v, DEFAULT_H) {
                Ok(j) => j,
                Err(GeomError::DegenerateImmersion { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let c = crate::forms::fundamental_forms(&j);
            let k = match intrinsic_curvature(p, u, v) {
                Ok(k) => k,
                Err(GeomError::DegenerateImmersion { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let k_ext = c.k_ext.unwrap_or(f64::NAN);
            Ok(Some([
                (j.f.norm() - 1.0).abs(),
                (c.ee - 1.0).abs().max((c.gg - 1.0).abs()),
                c.l.abs().max(c.n.abs()),
                k.abs(),
                (k - 1.0 - k_ext).abs(),
            ]))
        })
        .collect::<Result<_>>()?;
    let ok: Vec<[f64; 5]> = rows.iter().flatten().copied().collect();
    let col = |k: usize| max_abs(ok.iter().map(|r| &r[k]));
    Ok(GridGeometry {
        sphere: col(0),
        first_form: col(1),
        second_form: col(2),
        k_int: col(3),
        gauss: col(4),
        samples: ok.len(),
        skipped: rows.len() - ok.len(),
    })
}

fn geometry_checks(p: &SurfacePatch, grid: &GridSpec, asymptotic: bool) -> Result<Vec<Check>> {
    let g = grid_geometry(p, grid)?;
    let mut out = vec![Check::upper("sphere_containment", g.sphere, TOL_SPHERE)];
    if asymptotic {
        out.push(Check::upper("first_form_unit", g.first_form, TOL_FIRST_FORM));
        out.push(Check::upper("second_form_asymptotic", g.second_form, TOL_SECOND_FORM));
    }
    out.push(Check::upper("flatness_k_int", g.k_int, TOL_FLAT));
    out.push(Check::upper("gauss_equation", g.gauss, TOL_FLAT));
    Ok(out.into_iter().map(|c| c.counts(g.samples, g.skipped)).collect())
}

fn angle_checks(p: &SurfacePatch, grid: &GridSpec, expected: (f64, f64), tol: f64) -> Result<Vec<Check>> {
    let g = angle_grid(p, grid)?;
    let fit = fit_plane(grid, &g.values)?;
    let counts = |c: Check| c.counts(fit.samples, fit.skipped);
    Ok(vec![
        counts(Check::upper("angle_slope_u", (fit.lambda1 - expected.0).abs(), tol).note(format!("lambda1 = {:.12}", fit.lambda1))),
        counts(Check::upper("angle_slope_v", (fit.lambda2 - expected.1).abs(), tol).note(format!("lambda2 = {:.12}", fit.lambda2))),
        counts(Check::upper("angle_fit_rms", fit.rms_residual, TOL_RMS)),
    ])
}

fn hopf_constancy(p: &SurfacePatch, grid: &GridSpec, tol: f64) -> Result<Check> {
    let values = hopf_angle_grid(p, grid)?;
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let mean = ok.iter().sum::<f64>() / ok.len().max(1) as f64;
    Ok(Check::upper("hopf_angle_constancy", stddev(&ok), tol)
        .counts(ok.len(), values.len() - ok.len())
        .note(format!("mean <N,E1> = {mean:.12}")))
}

fn family_checks(a: f64, b: f64, beta: f64) -> Result<Vec<Check>> {
    let hp = helicoidal_params(a, b, beta)?;
    Ok(vec![
        Check::upper("helicoidal_invariance", invariance_defect(a, b, beta, 100, 1)?, TOL_INVARIANCE).counts(100, 0),
        Check::upper("shift_equations", shift_defect(a, b, hp.alpha, beta), TOL_SHIFT).counts(11, 0),
    ])
}

fn verify_theorem1(inp: &VerifyInput) -> Result<Vec<Check>> {
    let p = theorem1_patch(inp.a, inp.b, false)?;
    let mut checks = geometry_checks(&p, &inp.grid, true)?;
    checks.extend(angle_checks(&p, &inp.grid, theorem1_slopes(inp.a, inp.b), TOL_SLOPE)?);
    checks.push(hopf_constancy(&p, &inp.grid, TOL_HOPF_CONST)?);
    checks.extend(family_checks(inp.a, inp.b, inp.beta)?);
    Ok(checks)
}

fn verify_bianchi_spivak(inp: &VerifyInput) -> Result<Vec<Check>> {
    let p = bianchi_spivak(&curve_ca(inp.a)?, &curve_cb(inp.b)?)?;
    let mut checks = vec![Check::upper("identity_at_origin", max_abs((p.value(0.0, 0.0) - crate::s3core::S3Point::IDENTITY.to_vector()).iter()), TOL_SPHERE)];
    checks.extend(geometry_checks(&p, &inp.grid, true)?);
    checks.extend(angle_checks(&p, &inp.grid, theorem1_slopes(inp.a, inp.b), TOL_SLOPE)?);
    let y = theorem1_patch(inp.a, inp.b, true)?;
    let diff = inp.grid.points().iter().map(|&(u, v)| max_abs((p.value(u, v) - y.value(u, v)).iter())).fold(0.0, f64::max);
    checks.push(Check::upper("matches_factored_family", diff, 1e-10).counts(inp.grid.len(), 0));
    Ok(checks)
}

fn verify_hopf_cylinder(inp: &VerifyInput) -> Result<Vec<Check>> {
    let b = inp.b;
    let p = hopf_cylinder_patch(b)?;
    let mut checks = geometry_checks(&p, &inp.grid, true)?;
    let normals = continued_normals(&p, &inp.grid)?;
    let pts = inp.grid.points();
    let seed = normals.iter().position(Option::is_some).ok_or_else(|| GeomError::Precondition("no regular grid point".into()))?;
    let sign = normals[seed].unwrap().dot(&hopf_cylinder_normal(b, pts[seed].0, pts[seed].1)).signum();
    let dev = normals
        .iter()
        .zip(&pts)
        .filter_map(|(n, &(u, v))| n.map(|n| max_abs((n * sign - hopf_cylinder_normal(b, u, v)).iter())))
        .fold(0.0, f64::max);
    let used = normals.iter().flatten().count();
    checks.push(Check::upper("normal_closed_form", dev, TOL_NORMAL).counts(used, normals.len() - used));
    checks.extend(angle_checks(&p, &inp.grid, (0.0, (1.0 - b * b) / b), 1e-8)?);
    checks.push(hopf_constancy(&p, &inp.grid, TOL_NORMAL)?);
    Ok(checks)
}

/// Grid over (t, s) with s clipped to the sampled profile range, kept a few
/// steps inside its ends.
pub fn profile_grid(grid: &GridSpec, s_range: (f64, f64), h: f64) -> Result<GridSpec> {
    let margin = 4.0 * DEFAULT_H.max(h);
    let (lo, hi) = (grid.vmin.max(s_range.0 + margin), grid.vmax.min(s_range.1 - margin));
    if !(hi > lo) {
        return Err(GeomError::Domain(format!("profile range [{}, {}] too short for the grid", s_range.0, s_range.1)));
    }
    Ok(GridSpec::new(grid.umin, grid.umax, lo, hi, grid.nu, grid.nv))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn cos_nu_check(prof: &ProfileSolution) -> Check {
    let c = prof.cos_nu_samples();
    Check::upper("cos_nu_constancy", stddev(&c), TOL_COS_NU).counts(c.len(), 0).note(format!("cos nu = {:.12}", mean(&c)))
}

/// Hopf angle of the swept surface against the closed form from the profile.
fn hopf_checks(p: &SurfacePatch, grid: &GridSpec, prof_cos: f64) -> Result<Vec<Check>> {
    let values = hopf_angle_grid(p, grid)?;
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = values.len() - ok.len();
    let m = mean(&ok);
    Ok(vec![
        Check::upper("hopf_angle_constancy", stddev(&ok), TOL_ODE_HOPF).counts(ok.len(), skipped).note(format!("mean <N,E1> = {m:.12}")),
        Check::upper("hopf_angle_matches_profile", (m - prof_cos).abs(), TOL_ODE_HOPF).counts(ok.len(), skipped),
    ])
}

fn verify_helicoidal(inp: &VerifyInput) -> Result<Vec<Check>> {
    let (a, b, beta) = (inp.a, inp.b, inp.beta);
    let prof = theorem1_orbit_profile(a, b, beta, inp.s_max.max(2.0), inp.h)?;
    let range = (prof.samples[0].s, prof.s_max());
    let mut checks = vec![cos_nu_check(&prof)];
    let cos = mean(&prof.cos_nu_samples());
    let p = helicoidal_patch(prof.alpha, beta, Arc::new(prof))?;
    let grid = profile_grid(&inp.grid, range, inp.h)?;
    checks.extend(geometry_checks(&p, &grid, false)?);
    checks.extend(hopf_checks(&p, &grid, cos)?);
    checks.extend(family_checks(a, b, beta)?);
    Ok(checks)
}

fn verify_ode(inp: &VerifyInput) -> Result<Vec<Check>> {
    let (alpha, beta) = (inp.alpha, inp.beta);
    let prof = integrate(alpha, beta, inp.phi0, inp.dphi0, inp.s_max, inp.h)?;
    let n = prof.samples.len();
    let mut checks = vec![
        Check::upper("ode_residual", prof.ode_residual_max(), TOL_ODE).counts(n, 0),
        Check::upper("profile_arc_length", prof.arc_length_defect(), TOL_ARC).counts(n, 0),
        cos_nu_check(&prof),
    ];
    let order = convergence_order(alpha, beta, inp.phi0, inp.dphi0, inp.s_max.min(0.5), 0.05)?;
    checks.push(Check::lower("rk4_convergence_order", order, MIN_RK_ORDER).counts(3, 0));
    let range = (prof.samples[0].s, prof.s_max());
    let truncated = prof.truncated;
    let cos = mean(&prof.cos_nu_samples());
    let p = helicoidal_patch(alpha, beta, Arc::new(prof))?;
    let grid = profile_grid(&inp.grid, range, inp.h)?;
    checks.extend(geometry_checks(&p, &grid, false)?);
    checks.extend(hopf_checks(&p, &grid, cos)?);
    if truncated {
        for c in checks.iter_mut() {
            c.note.get_or_insert_with(|| format!("profile truncated at the guard band, s <= {:.6}", range.1));
        }
    }
    Ok(checks)
}

/// The latitude φ ≡ π/4 traversed with θ(s) = √2 s + 0.05 sin 4s, which is
/// not arc length.
pub fn negative_control_profile() -> ClosedProfile {
    let k = std::f64::consts::SQRT_2;
    ClosedProfile::new(
        |_| [FRAC_PI_4, 0.0, 0.0],
        move |s| [k * s + 0.05 * (4.0 * s).sin(), k + 0.2 * (4.0 * s).cos(), -0.8 * (4.0 * s).sin()],
        (0.0, 1.0),
    )
}

fn verify_negative_control(inp: &VerifyInput) -> Result<Vec<Check>> {
    let prof = Arc::new(negative_control_profile());
    let (arc, min_sin) = profile_defects(prof.as_ref());
    let range = prof.range();
    let p = helicoidal_patch_from_curve(inp.alpha, inp.beta, profile_curve_unchecked(prof), range);
    let mut checks = vec![Check::upper("profile_arc_length", arc, crate::curves::PROFILE_ARC_TOL).counts(64, 0)];
    checks.push(Check::lower("profile_upper_hemisphere", min_sin, 0.0).counts(64, 0));
    checks.extend(geometry_checks(&p, &profile_grid(&inp.grid, range, inp.h)?, false)?);
    Ok(checks)
}

fn lame_points(sol: &LameSolution, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        if sol.values(&x).iter().all(|l| l.abs() > 0.05) {
            out.push(x);
        }
    }
    out
}

/// The Lamé solutions exercised by the `lame` kind.
pub fn lame_cases() -> Result<Vec<(String, LameSolution)>> {
    let mut cases = vec![
        ("a".to_string(), LameSolution::family_a(1.0, 2.0, 0.3, 1.0, 1.0)?),
        ("b1".to_string(), LameSolution::family_b1(1.0, 1.0, 0.0, 1.0, 2.0)?),
        ("c".to_string(), LameSolution::family_c(0.7, -1.3, 0.2, 0.5, 1.5)?),
    ];
    for (name, phi) in sample_phis() {
        cases.push((format!("b2[{name}]"), LameSolution::family_b2(1.3, 0.8, -0.8, name, move |x| phi(x))?));
    }
    Ok(cases)
}

fn verify_lame(_inp: &VerifyInput) -> Result<Vec<Check>> {
    let mut checks = vec![];
    for (name, sol) in lame_cases()? {
        let pts = lame_points(&sol, 100, 11);
        let mut lame: f64 = 0.0;
        let mut guich: f64 = 0.0;
        for x in &pts {
            lame = lame.max(max_abs(&lame_residuals(&sol, x)?));
            guich = guich.max(guichard_residual(&sol, x).abs());
        }
        checks.push(Check::upper(&format!("lame_{name}"), lame, TOL_LAME).counts(pts.len(), 0));
        checks.push(Check::upper(&format!("guichard_{name}"), guich, TOL_LAME).counts(pts.len(), 0));
    }
    let base = LameSolution::family_b1(1.0, 1.0, 0.0, 1.0, 2.0)?;
    for (name, p) in [
        ("perturbation_scaled_detected", Perturbation { scale: 1.01, slope: [0.0; 3] }),
        ("perturbation_tilted_detected", Perturbation { scale: 1.0, slope: [0.01, 0.0, 0.0] }),
    ] {
        let sol = base.clone().perturbed(p);
        let pts = lame_points(&sol, 100, 11);
        let worst = pts.iter().map(|x| system_residual(&sol, x)).collect::<Result<Vec<_>>>()?;
        checks.push(Check::lower(name, max_abs(&worst), TOL_PERTURBATION).counts(pts.len(), 0));
    }
    let grid = GridSpec::square(21, 21);
    for (a1, a3, x0) in [(1.0, 0.0, 0.0), (0.3, -0.2, 0.4), (0.5, 0.5, 0.1)] {
        let (l1, l2, l3) = asymptotic_from_curvature_line(a1, a3, x0);
        let g = angle_grid(&asymptotic_forms(a1, a3, x0), &grid)?;
        let fit = fit_plane(&grid, &g.values)?;
        let k = ((fit.lambda3 - l3) / (2.0 * PI)).round();
        let dev = [fit.lambda1 - l1, fit.lambda2 - l2, fit.lambda3 - l3 - 2.0 * PI * k];
        checks.push(
            Check::upper(&format!("curvature_line_fit[{a1},{a3},{x0}]"), max_abs(&dev), TOL_LAME_FIT)
                .counts(fit.samples, fit.skipped)
                .note("lambda3 compared modulo 2 pi"),
        );
    }
    Ok(checks)
}

pub fn verify(inp: &VerifyInput) -> Result<VerificationReport> {
    let checks = match inp.kind {
        Kind::Theorem1 => verify_theorem1(inp)?,
        Kind::BianchiSpivak => verify_bianchi_spivak(inp)?,
        Kind::HopfCylinder => verify_hopf_cylinder(inp)?,
        Kind::Helicoidal => verify_helicoidal(inp)?,
        Kind::Ode => verify_ode(inp)?,
        Kind::NegativeControl => verify_negative_control(inp)?,
        Kind::Lame => verify_lame(inp)?,
    };
    let input = serde_json::to_value(inp).expect("inputs serialize");
    Ok(VerificationReport::new(input, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in Kind::ALL {
            assert_eq!(k.name().parse::<Kind>().unwrap(), k);
        }
        assert!("sphere".parse::<Kind>().is_err());
    }

    #[test]
    fn negative_control_fails_on_arc_length_only_by_name() {
        let r = verify(&VerifyInput::new(Kind::NegativeControl)).unwrap();
        assert!(!r.pass);
        assert!(!r.check("profile_arc_length").unwrap().pass);
        // the image is still the flat latitude surface
        assert!(r.check("flatness_k_int").unwrap().pass);
    }

    #[test]
    fn hopf_cylinder_passes() {
        let mut inp = VerifyInput::new(Kind::HopfCylinder);
        inp.b = 2.0;
        inp.grid = GridSpec::square(10, 10);
        let r = verify(&inp).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }

    #[test]
    fn lame_passes() {
        let r = verify(&VerifyInput::new(Kind::Lame)).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }
}
