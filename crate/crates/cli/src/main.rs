use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use s3flat_core::construct::{helicoidal_params, theorem1_orbit_profile};
use s3flat_core::mesh::DEFAULT_POLE;
use s3flat_core::verify::{default_grid, profile_grid};
use s3flat_core::{
    helicoidal_patch, hopf_cylinder_patch, integrate, mesh_from_patch, reconstruct, theorem1_patch, verify, GeomError, GridSpec, Kind,
    ProfileSolution, S3Point, SurfacePatch, VerifyInput,
};

#[derive(Parser)]
#[command(name = "s3flat", version, about = "Flat and helicoidal surfaces in the 3-sphere", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a surface and write its stereographic mesh.
    Gen(GenArgs),
    /// Run the numerical checks for a construction and write a JSON report.
    Verify(VerifyArgs),
    /// Integrate the helicoidal flatness ODE and dump the profile as CSV.
    Ode(OdeArgs),
    /// Recover (a, b, nu) from a flat helicoidal profile.
    Reconstruct(ReconstructArgs),
}

#[derive(Args, Clone)]
struct Params {
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 3.0)]
    b: f64,
    /// Defaults to 5, or for orbit profiles of Y(a, b) to the rate that
    /// leaves Y invariant.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 35.0)]
    beta: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    phi0: f64,
    #[arg(long, default_value_t = 0.1)]
    dphi0: f64,
    /// Arc length to integrate the profile over.
    #[arg(long, default_value_t = 0.5)]
    smax: f64,
    /// Profile step.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Samples as MxN.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    umin: Option<f64>,
    #[arg(long)]
    umax: Option<f64>,
    #[arg(long)]
    vmin: Option<f64>,
    #[arg(long)]
    vmax: Option<f64>,
}

impl Params {
    fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(5.0)
    }
}

impl GridArgs {
    fn apply(&self, mut g: GridSpec) -> GridSpec {
        if let Some((m, n)) = self.grid {
            g.nu = m;
            g.nv = n;
        }
        g.umin = self.umin.unwrap_or(g.umin);
        g.umax = self.umax.unwrap_or(g.umax);
        g.vmin = self.vmin.unwrap_or(g.vmin);
        g.vmax = self.vmax.unwrap_or(g.vmax);
        g
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Obj,
    Ply,
}

#[derive(Args)]
struct GenArgs {
    /// bianchi-spivak (alias theorem1), helicoidal, hopf-cylinder or ode.
    #[arg(long, default_value = "bianchi-spivak")]
    kind: Kind,
    #[command(flatten)]
    params: Params,
    #[command(flatten)]
    grid: GridArgs,
    /// Projection pole as w,x,y,z.
    #[arg(long, value_parser = parse_pole, allow_hyphen_values = true)]
    pole: Option<S3Point>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Obj)]
    format: Format,
    /// Use the product c_a(u)·c_b(v) instead of its normalized form Y.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "theorem1")]
    kind: Kind,
    #[command(flatten)]
    params: Params,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record the wall-clock time in the report.
    #[arg(long)]
    timestamp: bool,
    /// Print only the summary line.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct OdeArgs {
    #[command(flatten)]
    params: Params,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    params: Params,
    /// Use the orbit profile of Y(a, b) under the motion with rate --beta.
    #[arg(long)]
    from_theorem1: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Pole(String),
    Checks,
    Io(String),
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::PoleProximity(_) => Failure::Pole(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s.split_once(['x', 'X']).ok_or_else(|| format!("grid must look like MxN, got '{s}'"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad grid size '{t}': {e}"));
    let (m, n) = (parse(m)?, parse(n)?);
    if m < 2 || n < 2 {
        return Err(format!("grid needs at least 2x2 samples, got {m}x{n}"));
    }
    Ok((m, n))
}

fn parse_pole(s: &str) -> Result<S3Point, String> {
    let c: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad pole component '{t}': {e}"))).collect::<Result<_, _>>()?;
    match c[..] {
        [w, x, y, z] if w * w + x * x + y * y + z * z > 0.0 => Ok(S3Point::new(w, x, y, z)),
        [_, _, _, _] => Err("pole must be nonzero".into()),
        _ => Err(format!("pole needs four components w,x,y,z, got {}", c.len())),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn with_output(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn orbit_profile(p: &Params) -> Result<ProfileSolution, GeomError> {
    theorem1_orbit_profile(p.a, p.b, p.beta, p.smax.max(2.0), p.h)
}

fn profile_patch(prof: ProfileSolution, alpha: f64, beta: f64, grid: &GridSpec, h: f64) -> Result<(SurfacePatch, GridSpec), GeomError> {
    let range = (prof.samples[0].s, prof.s_max());
    if prof.truncated {
        eprintln!("profile truncated at s = {:.6}", range.1);
    }
    let grid = profile_grid(grid, range, h)?;
    Ok((helicoidal_patch(alpha, beta, Arc::new(prof))?, grid))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let p = &args.params;
    let (patch, grid) = match args.kind {
        Kind::Theorem1 | Kind::BianchiSpivak => (theorem1_patch(p.a, p.b, args.full)?, args.grid.apply(GridSpec::square(64, 64))),
        Kind::HopfCylinder => (hopf_cylinder_patch(p.b)?, args.grid.apply(GridSpec::square(64, 64))),
        Kind::Helicoidal => {
            let prof = orbit_profile(p)?;
            let alpha = prof.alpha;
            let grid = args.grid.apply(GridSpec { nu: 64, nv: 64, ..default_grid(Kind::Helicoidal, p.beta) });
            profile_patch(prof, alpha, p.beta, &grid, p.h)?
        }
        Kind::Ode => {
            let prof = integrate(p.alpha(), p.beta, p.phi0, p.dphi0, p.smax, p.h)?;
            let grid = args.grid.apply(GridSpec { nu: 64, nv: 64, ..default_grid(Kind::Ode, p.beta) });
            profile_patch(prof, p.alpha(), p.beta, &grid, p.h)?
        }
        k => return Err(Failure::Usage(format!("gen does not support kind '{k}' (use bianchi-spivak, helicoidal, hopf-cylinder or ode)"))),
    };
    let mesh = mesh_from_patch(&patch, &grid, args.pole.unwrap_or(DEFAULT_POLE))?;
    let q = mesh.pole;
    eprintln!(
        "{}: {} vertices, {} faces, pole {},{},{},{}{}",
        mesh.tag,
        mesh.vertices.len(),
        mesh.faces.len(),
        q.w,
        q.x,
        q.y,
        q.z,
        if mesh.pole_reselected { " (reselected)" } else { "" }
    );
    with_output(args.out.as_deref(), |w| match args.format {
        Format::Obj => mesh.write_obj(w),
        Format::Ply => mesh.write_ply(w),
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let p = &args.params;
    let mut inp = VerifyInput::new(args.kind);
    inp.a = p.a;
    inp.b = p.b;
    inp.alpha = p.alpha();
    inp.beta = p.beta;
    inp.phi0 = p.phi0;
    inp.dphi0 = p.dphi0;
    inp.s_max = p.smax;
    inp.h = p.h;
    inp.grid = args.grid.apply(default_grid(args.kind, p.beta));
    let mut report = verify(&inp)?;
    if args.timestamp {
        report = report.with_timestamp();
    }
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        writeln!(w, "{}", report.to_json())?;
        w.flush()?;
    }
    if !args.quiet {
        for c in &report.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            let cmp = match c.bound {
                s3flat_core::report::Bound::Upper => "<=",
                s3flat_core::report::Bound::Lower => ">",
            };
            let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
            println!("{tag} {:<40} {:.3e} {cmp} {:.1e}{note}", c.name, c.max_abs_residual, c.tolerance);
        }
    }
    let failed = report.failed().count();
    println!("{} {}: {} checks, {failed} failed", if report.pass { "PASS" } else { "FAIL" }, args.kind, report.checks.len());
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_ode(args: OdeArgs) -> Result<(), Failure> {
    let p = &args.params;
    let prof = integrate(p.alpha(), p.beta, p.phi0, p.dphi0, p.smax, p.h)?;
    let cos = prof.cos_nu_samples();
    let mean = cos.iter().sum::<f64>() / cos.len() as f64;
    eprintln!(
        "{} samples, s in [0, {:.6}]{}, cos nu = {mean:.12}",
        prof.samples.len(),
        prof.s_max(),
        if prof.truncated { " (truncated at the guard band)" } else { "" }
    );
    with_output(args.out.as_deref(), |w| prof.write_csv(w))
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Failure> {
    let p = &args.params;
    let (alpha, prof) = if args.from_theorem1 {
        let alpha = match p.alpha {
            Some(x) => x,
            None => helicoidal_params(p.a, p.b, p.beta)?.alpha,
        };
        (alpha, orbit_profile(p)?)
    } else {
        (p.alpha(), integrate(p.alpha(), p.beta, p.phi0, p.dphi0, p.smax, p.h)?)
    };
    let r = reconstruct(alpha, p.beta, &prof)?;
    println!("a = {:.12}", r.a);
    println!("b = {:.12}", r.b);
    println!("nu = {:.12}", r.nu);
    println!("nu_stddev = {:.3e}", r.nu_stddev);
    println!("swapped_labeling = {}", r.swapped_labeling);
    for (name, value) in &r.residuals {
        println!("residual {name} = {value:.3e}");
    }
    if let Some(path) = &args.report {
        let residuals: serde_json::Map<String, serde_json::Value> = r.residuals.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
        let json = serde_json::json!({
            "schema": s3flat_core::report::REPORT_SCHEMA,
            "tool": "s3flat",
            "tool_version": s3flat_core::report::TOOL_VERSION,
            "input": {"alpha": alpha, "beta": p.beta, "from_theorem1": args.from_theorem1, "a": p.a, "b": p.b,
                      "phi0": p.phi0, "dphi0": p.dphi0, "s_max": p.smax, "h": p.h},
            "a": r.a,
            "b": r.b,
            "nu": r.nu,
            "nu_stddev": r.nu_stddev,
            "swapped_labeling": r.swapped_labeling,
            "residuals": residuals,
        });
        let mut w = create(path)?;
        writeln!(w, "{}", serde_json::to_string_pretty(&json).expect("json"))?;
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Ode(a) => cmd_ode(a),
        Cmd::Reconstruct(a) => cmd_reconstruct(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pole(m)) => {
            eprintln!("error: {m}; every signed basis pole is too close to the surface");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
