//! Acceptance suite. Each test prints one PASS/FAIL line to stderr, which the
//! test harness does not capture.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::io::Write;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};
use s3flat_core::construct::{helicoidal_params, hopf_cylinder_normal, invariance_defect, theorem1_orbit_profile};
use s3flat_core::forms::{angle_grid, continued_normals, fit_linear_angle, fit_plane, full_forms, hopf_angle_grid, intrinsic_curvature};
use s3flat_core::lame::{asymptotic_forms, asymptotic_from_curvature_line, guichard_residual, lame_residuals, system_residual, Perturbation};
use s3flat_core::profile_ode::convergence_order;
use s3flat_core::verify::{lame_cases, profile_grid};
use s3flat_core::{
    helicoidal_patch, hopf_cylinder_patch, integrate, reconstruct, theorem1_patch, GridSpec, LameSolution, ProfileSolution, SurfacePatch,
};

const CASES: [(f64, f64); 3] = [(2.0, 3.0), (SQRT_2, 3.0), (1.7320508075688772, SQRT_2)];

fn report(n: usize, pass: bool, detail: &str) {
    let line = format!("acceptance criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn stddev(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn max_k_int(p: &SurfacePatch, grid: &GridSpec) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (u, v) in grid.points() {
        match intrinsic_curvature(p, u, v) {
            Ok(k) => worst = if k.is_nan() { f64::NAN } else { worst.max(k.abs()) },
            Err(_) => skipped += 1,
        }
    }
    (worst, skipped)
}

fn hopf_stddev(p: &SurfacePatch, grid: &GridSpec) -> f64 {
    let vals: Vec<f64> = hopf_angle_grid(p, grid).unwrap().into_iter().flatten().collect();
    stddev(&vals)
}

#[test]
fn criterion_1_theorem1_family() {
    let grid = GridSpec::square(21, 21);
    let mut pass = true;
    let mut parts = vec![];
    for (a, b) in CASES {
        let start = Instant::now();
        let p = theorem1_patch(a, b, false).unwrap();
        let (mut first, mut second, mut skipped) = (0.0f64, 0.0f64, 0);
        for (u, v) in grid.points() {
            match full_forms(&p, u, v) {
                Ok(c) => {
                    first = first.max((c.ee - 1.0).abs()).max((c.gg - 1.0).abs());
                    second = second.max(c.l.abs()).max(c.n.abs());
                }
                Err(_) => skipped += 1,
            }
        }
        let (k_int, _) = max_k_int(&p, &grid);
        let fit = fit_linear_angle(&p, &grid).unwrap();
        let (l1, l2) = ((1.0 - a * a) / a, (b * b - 1.0) / b);
        let secs = start.elapsed().as_secs_f64();
        let ok = first < 1e-9
            && second < 1e-8
            && k_int < 1e-6
            && (fit.lambda1 - l1).abs() < 1e-6
            && (fit.lambda2 - l2).abs() < 1e-6
            && fit.rms_residual < 1e-8
            && secs < 5.0;
        pass &= ok;
        parts.push(format!(
            "(a={a:.4},b={b:.4}) |E-1|,|G-1|={first:.1e} |e|,|g|={second:.1e} K_int={k_int:.1e} skipped={skipped} \
             lambda1={:.9} (want {l1:.9}) lambda2={:.9} (want {l2:.9}) rms={:.1e} {secs:.2}s",
            fit.lambda1, fit.lambda2, fit.rms_residual
        ));
    }
    report(1, pass, &parts.join("; "));
}

#[test]
fn criterion_2_helicoidal_invariance() {
    let mut worst: f64 = 0.0;
    for (k, (a, b)) in CASES.into_iter().enumerate() {
        worst = worst.max(invariance_defect(a, b, 35.0, 100, 100 + k as u64).unwrap());
    }
    let equal = [2.0, SQRT_2, 3.0].map(|a| helicoidal_params(a, a, 35.0).unwrap().alpha);
    let pass = worst < 1e-12 && equal.iter().all(|&x| x == 0.0);
    report(2, pass, &format!("max |M(t)Y(u,v) - Y(u+z,v+w)| = {worst:.2e} over 3x100 samples; alpha(a=b) = {equal:?}"));
}

#[test]
fn criterion_3_ode_pipeline() {
    let (alpha, beta) = (5.0, 35.0);
    let grid = GridSpec::new(-PI / beta, PI / beta, -PI, PI, 21, 21);
    let run = |prof: ProfileSolution| {
        let range = (prof.samples[0].s, prof.s_max());
        let g = profile_grid(&grid, range, 1e-3).unwrap();
        let p = helicoidal_patch(alpha, beta, Arc::new(prof)).unwrap();
        (max_k_int(&p, &g).0, hopf_stddev(&p, &g))
    };
    let (k, hs) = run(integrate(alpha, beta, FRAC_PI_4, 0.1, 0.5, 1e-3).unwrap());
    let (k0, hs0) = run(ProfileSolution::constant(alpha, beta, FRAC_PI_4, 0.5, 1e-3).unwrap());
    let order = convergence_order(alpha, beta, FRAC_PI_4, 0.1, 0.5, 0.05).unwrap();
    let pass = k < 1e-5 && hs < 1e-6 && k0 < 1e-5 && hs0 < 1e-6 && order >= 3.8;
    report(
        3,
        pass,
        &format!("K_int={k:.1e} hopf stddev={hs:.1e}; constant profile K_int={k0:.1e} hopf stddev={hs0:.1e}; RK order={order:.3}"),
    );
}

#[test]
fn criterion_4_reconstruction_round_trip() {
    let beta = 35.0;
    let alpha = helicoidal_params(2.0, 3.0, beta).unwrap().alpha;
    let prof = theorem1_orbit_profile(2.0, 3.0, beta, 2.0, 1e-3).unwrap();
    let r = reconstruct(alpha, beta, &prof).unwrap();
    let forms = max_abs(["form_E", "form_F", "form_G", "form_e", "form_f", "form_g"].map(|n| r.residual(n).unwrap()));
    let relation = r.residual("angle_relation").unwrap();
    let xis = r.residual("xis_constraint").unwrap();
    let pass = (r.a - 2.0).abs() < 1e-6 && (r.b - 3.0).abs() < 1e-6 && forms < 1e-6 && relation < 1e-8 && xis < 1e-8;
    report(
        4,
        pass,
        &format!("a={:.9} b={:.9} nu={:.9} forms={forms:.1e} angle relation={relation:.1e} xis={xis:.1e}", r.a, r.b, r.nu),
    );
}

#[test]
fn criterion_5_hopf_cylinder() {
    let b = 2.0;
    let p = hopf_cylinder_patch(b).unwrap();
    let grid = GridSpec::square(10, 10);
    let pts = grid.points();
    let normals = continued_normals(&p, &grid).unwrap();
    let seed = normals.iter().position(Option::is_some).unwrap();
    let sign = normals[seed].unwrap().dot(&hopf_cylinder_normal(b, pts[seed].0, pts[seed].1)).signum();
    let dev = max_abs(
        normals.iter().zip(&pts).filter_map(|(n, &(u, v))| n.map(|n| max_abs((n * sign - hopf_cylinder_normal(b, u, v)).iter().copied()))),
    );
    let skipped = normals.iter().filter(|n| n.is_none()).count();
    let fit = fit_plane(&grid, &angle_grid(&p, &grid).unwrap().values).unwrap();
    let want = (1.0 - b * b) / b;
    let pass = dev < 1e-9 && fit.lambda1.abs() < 1e-8 && (fit.lambda2 - want).abs() < 1e-8;
    report(
        5,
        pass,
        &format!(
            "normal deviation={dev:.1e} ({skipped} degenerate points skipped); omega_u={:.1e} omega_v={:.12} (want {want})",
            fit.lambda1, fit.lambda2
        ),
    );
}

fn lame_points(sol: &LameSolution, rng: &mut StdRng) -> Vec<[f64; 3]> {
    let mut out = vec![];
    while out.len() < 100 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if sol.values(&x.into()).iter().all(|l| l.abs() > 0.05) {
            out.push(x);
        }
    }
    out
}

#[test]
fn criterion_6_lame_guichard() {
    let mut rng = StdRng::seed_from_u64(6);
    let cases = lame_cases().unwrap();
    let mut worst: f64 = 0.0;
    for (_, sol) in &cases {
        for x in lame_points(sol, &mut rng) {
            let x = x.into();
            worst = worst.max(max_abs(lame_residuals(sol, &x).unwrap())).max(guichard_residual(sol, &x).abs());
        }
    }
    let base = LameSolution::family_b1(1.0, 1.0, 0.0, 1.0, 2.0).unwrap();
    let perturbed = base.perturbed(Perturbation { scale: 1.0, slope: [0.01, 0.0, 0.0] });
    let detected = max_abs(lame_points(&perturbed, &mut rng).into_iter().map(|x| system_residual(&perturbed, &x.into()).unwrap()));
    let grid = GridSpec::square(21, 21);
    let mut fit_dev: f64 = 0.0;
    for (a1, a3, x0) in [(1.0, 0.0, 0.0), (0.3, -0.2, 0.4), (0.5, 0.5, 0.1)] {
        let (l1, l2, l3) = asymptotic_from_curvature_line(a1, a3, x0);
        let fit = fit_plane(&grid, &angle_grid(&asymptotic_forms(a1, a3, x0), &grid).unwrap().values).unwrap();
        let wrapped = fit.lambda3 - l3 - 2.0 * PI * ((fit.lambda3 - l3) / (2.0 * PI)).round();
        fit_dev = fit_dev.max(max_abs([fit.lambda1 - l1, fit.lambda2 - l2, wrapped]));
    }
    let pass = cases.len() == 6 && worst < 1e-9 && detected > 1e-4 && fit_dev < 1e-8;
    report(
        6,
        pass,
        &format!(
            "{} solutions, max Lame/Guichard residual={worst:.1e}; perturbed residual={detected:.1e}; curvature-line fit deviation={fit_dev:.1e}",
            cases.len()
        ),
    );
}

fn s3flat(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_s3flat")).args(args).output().expect("binary runs")
}

#[test]
fn criterion_7_tooling() {
    let mut problems = vec![];
    let mut runs = 0;
    for (a, b) in CASES {
        let (a, b) = (a.to_string(), b.to_string());
        for kind in ["theorem1", "bianchi-spivak", "helicoidal"] {
            runs += 1;
            let code = s3flat(&["verify", "--kind", kind, "--a", &a, "--b", &b, "-q"]).status.code();
            if code != Some(0) {
                problems.push(format!("verify {kind} ({a},{b}) exited {code:?}"));
            }
        }
    }
    for args in [vec!["--kind", "hopf-cylinder", "--b", "2"], vec!["--kind", "ode"], vec!["--kind", "lame"]] {
        runs += 1;
        let code = s3flat(&[&["verify", "-q"][..], &args].concat()).status.code();
        if code != Some(0) {
            problems.push(format!("verify {args:?} exited {code:?}"));
        }
    }
    let neg = s3flat(&["verify", "--kind", "negative-control"]);
    if neg.status.code() != Some(1) || !String::from_utf8_lossy(&neg.stdout).contains("FAIL profile_arc_length") {
        problems.push(format!("negative control exited {:?} without naming profile_arc_length", neg.status.code()));
    }
    for (a, b) in CASES {
        let (a, b) = (a.to_string(), b.to_string());
        let gen = || s3flat(&["gen", "--kind", "bianchi-spivak", "--a", &a, "--b", &b, "--grid", "64x64"]);
        let (first, second) = (gen(), gen());
        let text = String::from_utf8_lossy(&first.stdout);
        let verts: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
        let faces = text.lines().filter(|l| l.starts_with("f ")).count();
        let finite = verts.iter().all(|l| l[2..].split(' ').all(|t| t.parse::<f64>().is_ok_and(f64::is_finite)));
        if first.status.code() != Some(0) || verts.len() != 4096 || faces != 7938 || !finite || first.stdout != second.stdout {
            problems.push(format!("gen ({a},{b}): {} vertices, {faces} faces, finite={finite}", verts.len()));
        }
    }
    let detail = if problems.is_empty() {
        format!("{runs} verify runs exit 0, negative control exits 1, 3 figure meshes 4096/7938 deterministic")
    } else {
        problems.join("; ")
    };
    report(7, problems.is_empty(), &detail);
}
