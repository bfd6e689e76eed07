//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration or input-format
//! error, 3 convergence failure, 4 certification failure, 5 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{branch_audit, upsilon_sweep};
use crate::config::{parse_override, RunConfig};
use crate::continuation::{
    bifurcation_data, detect_singularity, signed_singularity, trace_branch, Branch,
    EnforcementPolicy, HaltReason,
};
use crate::equations::{condition_suite, identity_add_check, residual_system, IDENTITY_REL_TOL};
use crate::error::Error;
use crate::kernel::{conjecture_scan, lemma1_verify, log_grid};
use crate::reconstruction::{
    build_flow, build_strip_map, current_profile, default_heights, default_levels, physical_checks,
    CurrentProfile, FlowField, PhysicalReport,
};
use crate::spectral::GridSpec;

/// Polyline in plot coordinates.
type Curve = Vec<(f64, f64)>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CERTIFICATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Relative tolerance for the flow-side checks.
pub const PHYSICAL_TOL: f64 = 1e-8;
/// Bound on the stacked residual accepted by `verify`.
pub const VERIFY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "cvwaves",
    version,
    about = "Steady periodic water waves with constant vorticity"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set continuation.max_points=60`.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["warn", "halt"])]
    policy: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    upsilon: Option<f64>,
    #[arg(long, global = true)]
    modes: Option<usize>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also render PNG images.
    #[arg(long, global = true)]
    render: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check kernel positivity, monotonicity and the lower bound at pi/2.
    KernelStudy,
    /// Bifurcation points and the singular-value table around them.
    Bifurcate,
    /// Trace the primary branch.
    Trace,
    /// Re-check every point of a branch file.
    Verify {
        /// Branch JSON written by `trace`.
        input: PathBuf,
    },
    /// Export the flow under one branch point.
    Reconstruct {
        /// Branch JSON written by `trace`.
        input: PathBuf,
        /// Point index; defaults to the last point.
        #[arg(long)]
        point: Option<usize>,
    },
    /// Trace branches over a list of vorticities.
    Sweep,
    /// Print the effective configuration.
    ShowConfig,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

type CliResult<T> = std::result::Result<T, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidGrid(_)
            | Error::InvalidParams(_)
            | Error::LengthMismatch { .. }
            | Error::NonFinite(_)
            | Error::GridMismatch { .. }
            | Error::NonZeroMean(_)
            | Error::Constraint(_) => EXIT_CONFIG,
            Error::Certification(_) => EXIT_CERTIFICATION,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONVERGENCE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn cert_fail(message: String) -> Failure {
    Failure {
        code: EXIT_CERTIFICATION,
        message,
    }
}

/// Parse arguments, run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(g: &GlobalArgs) -> CliResult<RunConfig> {
    let mut overrides = g
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut push = |k: &str, v: String| overrides.push((k.to_string(), v));
    if let Some(o) = &g.out {
        push("output.dir", toml_string(&o.to_string_lossy()));
    }
    if let Some(p) = &g.policy {
        push("policy", toml_string(p));
    }
    if let Some(u) = g.upsilon {
        push("physics.upsilon", format!("{u:?}"));
    }
    if let Some(n) = g.modes {
        push("grid.modes", n.to_string());
    }
    if let Some(n) = g.nodes {
        push("grid.nodes", n.to_string());
    }
    if let Some(n) = g.workers {
        push("sweep.workers", n.to_string());
    }
    if g.render {
        push("output.render", "true".into());
    }
    if let Some(p) = &g.config {
        if !p.exists() {
            return Err(io_fail(p, "configuration file not found"));
        }
    }
    Ok(RunConfig::load(g.config.as_deref(), &overrides)?)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.provenance());
            Ok(())
        }
        Command::KernelStudy => kernel_study(&cfg),
        Command::Bifurcate => bifurcate(&cfg),
        Command::Trace => trace(&cfg),
        Command::Verify { input } => verify(&cfg, &input),
        Command::Reconstruct { input, point } => reconstruct(&cfg, &input, point),
        Command::Sweep => sweep(&cfg),
    }
}

/// Output directory plus provenance for every file written in it.
struct Output {
    dir: PathBuf,
    provenance: String,
    render: bool,
}

impl Output {
    fn new(cfg: &RunConfig, extra: Option<String>) -> CliResult<Self> {
        let dir = cfg.output.dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_fail(&dir, e))?;
        let mut provenance = cfg.provenance();
        if let Some(x) = extra {
            provenance.push_str(&x);
        }
        Ok(Self {
            dir,
            provenance,
            render: cfg.output.render,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a text file that starts with `#`-commented provenance.
    fn commented<F>(&self, name: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        for line in self.provenance.lines() {
            let _ = writeln!(buf, "# {line}");
        }
        let path = self.path(name);
        body(&mut buf).map_err(|e| io_fail(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_fail(&path, e))?;
        Ok(path)
    }

    /// Write a JSON document `{"provenance": ..., "data": ...}`.
    fn json<T: Serialize>(&self, name: &str, data: &T) -> CliResult<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            provenance: &'a str,
            data: &'a T,
        }
        let text = serde_json::to_string_pretty(&Doc {
            provenance: &self.provenance,
            data,
        })
        .map_err(|e| io_fail(&self.path(name), e))?;
        self.raw(name, text.as_bytes())
    }

    fn raw(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| io_fail(&path, e))?;
        Ok(path)
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn kernel_study(cfg: &RunConfig) -> CliResult<()> {
    let ks = &cfg.kernel_study;
    let kc = cfg.kernel_config();
    let lemma = lemma1_verify(&ks.depths, &kc)?;
    let scan = conjecture_scan(&log_grid(ks.scan_min, ks.scan_max, ks.scan_count), &kc)?;
    let out = Output::new(cfg, None)?;
    let mut report = String::new();
    let _ = writeln!(report, "lemma depths: {}", lemma.rows.len());
    let _ = writeln!(report, "lemma violations: {}", lemma.violations.len());
    for v in lemma.violations.iter().chain(&scan.violations) {
        let _ = writeln!(report, "  d = {} s = {}: {}", v.d, v.s, v.what);
    }
    let _ = writeln!(
        report,
        "min strpos margin: {:.6e}",
        lemma.min_margin.min(scan.min_margin)
    );
    let _ = writeln!(report, "scan min beta(pi/2): {:.12}", scan.min_beta_half_pi);
    let _ = writeln!(
        report,
        "beta(pi/2) >= 1 on scan grid (reported only): {}",
        scan.conjecture_holds
    );
    let _ = writeln!(
        report,
        "|beta(pi/2) - 1| at largest d: {:.3e}",
        scan.limit_distance
    );
    let paths = vec![
        out.commented("kernel_lemma.csv", |w| lemma.write_csv(w))?,
        out.commented("kernel_scan.csv", |w| scan.write_csv(w))?,
        out.commented("kernel_report.txt", |w| w.write_all(report.as_bytes()))?,
    ];
    print!("{report}");
    announce(&paths);
    if !(lemma.all_ok() && scan.all_ok()) {
        return Err(cert_fail("kernel lemma violated".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SingularRow {
    m: f64,
    sigma_min: f64,
    signed: f64,
}

fn bifurcate(cfg: &RunConfig) -> CliResult<()> {
    let params = cfg.physics;
    let grid = cfg.continuation.grid(&params)?;
    let bif = bifurcation_data(&params)?;
    let sign = cfg.continuation.sign;
    let centre = bif.m(sign);
    let b = &cfg.bifurcate;
    let mut rows = Vec::with_capacity(b.samples);
    for i in 0..b.samples {
        let t = -1.0 + 2.0 * i as f64 / (b.samples - 1) as f64;
        let m = centre + b.half_width * t;
        rows.push(SingularRow {
            m,
            sigma_min: detect_singularity(&params, m, &grid)?,
            signed: signed_singularity(&params, m, &grid)?,
        });
    }
    let at_centre = detect_singularity(&params, centre, &grid)?;
    let out = Output::new(cfg, None)?;
    let paths = vec![
        out.json("bifurcation.json", &bif)?,
        out.commented("singularity.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["m", "sigma_min", "signed_sigma"])?;
            for r in &rows {
                c.write_record([
                    r.m.to_string(),
                    r.sigma_min.to_string(),
                    r.signed.to_string(),
                ])?;
            }
            c.flush()
        })?,
    ];
    println!(
        "m_minus = {:.12} Q_minus = {:.12}\nm_plus = {:.12} Q_plus = {:.12}",
        bif.m_minus, bif.q_minus, bif.m_plus, bif.q_plus
    );
    println!("scaled sigma_min at m* ({sign:?}) = {at_centre:.3e}");
    announce(&paths);
    if at_centre >= 1e-8 {
        return Err(cert_fail(format!(
            "sigma_min {at_centre:e} at the bifurcation point is not small"
        )));
    }
    Ok(())
}

fn load_branch(input: &Path) -> CliResult<Branch> {
    let text = fs::read_to_string(input).map_err(|e| io_fail(input, e))?;
    Ok(Branch::from_json(&text)?)
}

fn surface_profiles(
    branch: &Branch,
    grid: &GridSpec,
    count: usize,
) -> CliResult<Vec<(usize, Curve)>> {
    let n = branch.len();
    let mut picks: Vec<usize> = (0..count.min(n))
        .map(|i| {
            if count <= 1 {
                n - 1
            } else {
                i * (n - 1) / (count - 1)
            }
        })
        .collect();
    picks.dedup();
    picks
        .into_iter()
        .map(|i| {
            let map = build_strip_map(&branch.points[i].point, &[0.0], grid)?;
            let curve = map.u[0]
                .iter()
                .copied()
                .zip(map.v[0].iter().copied())
                .collect();
            Ok((i, curve))
        })
        .collect()
}

fn trace(cfg: &RunConfig) -> CliResult<()> {
    let kc = cfg.kernel_config();
    let branch = trace_branch(&cfg.physics, &cfg.continuation, &kc)?;
    if branch.is_empty() {
        return Err(Failure {
            code: EXIT_CONVERGENCE,
            message: format!("no branch point accepted (halt: {:?})", branch.halt),
        });
    }
    let grid = branch.grid()?;
    let out = Output::new(cfg, None)?;
    let profiles = surface_profiles(&branch, &grid, 6)?;
    let mut paths = vec![
        out.commented("branch.csv", |w| branch.write_csv(w, None))?,
        out.raw(
            "branch.json",
            branch.to_json(Some(out.provenance.clone())).as_bytes(),
        )?,
        out.commented("branch_diagram.dat", |w| {
            writeln!(w, "# s m Q amplitude bound min_q2gv")?;
            for p in &branch.points {
                let d = &p.diagnostics;
                writeln!(
                    w,
                    "{:e} {:e} {:e} {:e} {:e} {:e}",
                    p.s, p.point.m, p.point.q, d.amplitude, d.bound, d.min_q2gv
                )?;
            }
            Ok(())
        })?,
        out.commented("profiles.dat", |w| {
            for (i, curve) in &profiles {
                writeln!(w, "# point {i} s = {:e}", branch.points[*i].s)?;
                writeln!(w, "# X Y")?;
                for (x, y) in curve {
                    writeln!(w, "{x:e} {y:e}")?;
                }
                writeln!(w)?;
                writeln!(w)?;
            }
            Ok(())
        })?,
    ];
    if out.render {
        let diagram: Vec<(f64, f64)> = branch
            .points
            .iter()
            .map(|p| (p.diagnostics.amplitude, p.point.q))
            .collect();
        paths.push(render(&out.path("branch_diagram.png"), &[diagram])?);
        let curves: Vec<Vec<(f64, f64)>> = profiles.iter().map(|(_, c)| c.clone()).collect();
        paths.push(render(&out.path("profiles.png"), &curves)?);
    }
    let last = branch.points.last().expect("non-empty");
    let failed: Vec<usize> = branch
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.diagnostics.certified())
        .map(|(i, _)| i)
        .collect();
    println!(
        "points: {}  halt: {:?}  final min(Q - 2gv)/Q: {:.4e}  certified: {}/{}",
        branch.len(),
        branch.halt,
        last.diagnostics.min_q2gv / last.point.q,
        branch.len() - failed.len(),
        branch.len()
    );
    announce(&paths);
    for &i in &failed {
        eprintln!(
            "warning: point {i} not certified: {:?}",
            branch.points[i].diagnostics.failed_conditions
        );
    }
    if branch.halt == HaltReason::CertificationFailure
        || (!failed.is_empty() && cfg.policy() == EnforcementPolicy::Halt)
    {
        return Err(cert_fail(format!(
            "{} uncertified branch points",
            failed.len()
        )));
    }
    Ok(())
}

/// Per-point outcome of `verify`.
#[derive(Debug, Serialize)]
struct PointCheck {
    index: usize,
    s: f64,
    residual: f64,
    identity_residual: f64,
    failed: Vec<String>,
    physical: Option<PhysicalReport>,
}

fn flow_for(p: &crate::SolutionPoint, grid: &GridSpec) -> crate::Result<FlowField> {
    let map = build_strip_map(p, &default_levels(p.params.depth()), grid)?;
    build_flow(p, map, grid)
}

fn verify(cfg: &RunConfig, input: &Path) -> CliResult<()> {
    let branch = load_branch(input)?;
    let grid = branch.grid()?;
    let sign = branch.config.sign;
    let mut checks = Vec::with_capacity(branch.len());
    for (i, bp) in branch.points.iter().enumerate() {
        let p = &bp.point;
        let (field, scalar) = residual_system(p, &grid)?;
        let residual = field.max_abs_coeff().hypot(scalar);
        let mut failed: Vec<String> = condition_suite(p, &grid, sign)?
            .failures()
            .into_iter()
            .map(String::from)
            .collect();
        if residual >= VERIFY_RESIDUAL_TOL {
            failed.push("stacked_residual".into());
        }
        let identity = identity_add_check(p, &grid)?;
        if identity >= IDENTITY_REL_TOL * p.q && !failed.iter().any(|f| f == "bernoulli_identity") {
            failed.push("bernoulli_identity".into());
        }
        let physical = match flow_for(p, &grid).and_then(|f| physical_checks(p, &f, &grid)) {
            Ok(r) => {
                if !r.passes(PHYSICAL_TOL) {
                    failed.push("physical_flow".into());
                }
                Some(r)
            }
            Err(e) => {
                failed.push(format!("flow_reconstruction ({e})"));
                None
            }
        };
        checks.push(PointCheck {
            index: i,
            s: bp.s,
            residual,
            identity_residual: identity,
            failed,
            physical,
        });
    }
    let audit = branch_audit(&branch, &cfg.kernel.for_depth(branch.params.depth()));
    let mut summary = String::new();
    let bad: Vec<&PointCheck> = checks.iter().filter(|c| !c.failed.is_empty()).collect();
    for c in &bad {
        let _ = writeln!(
            summary,
            "point {} (s = {:e}): failed {}",
            c.index,
            c.s,
            c.failed.join(", ")
        );
    }
    let audit_msg = match &audit {
        Ok(a) if a.all_ok() => None,
        Ok(_) => Some("branch audit: proof replay failed".to_string()),
        Err(e) => Some(format!("branch audit: {e}")),
    };
    if let Some(m) = &audit_msg {
        let _ = writeln!(summary, "{m}");
    }
    let ok = bad.is_empty() && audit_msg.is_none();
    let _ = writeln!(
        summary,
        "verified {} points: {}",
        branch.len(),
        if ok { "all pass" } else { "FAILED" }
    );
    let out = Output::new(cfg, Some(format!("input = {}\n", input.display())))?;
    let paths = vec![
        out.commented("verify_report.txt", |w| w.write_all(summary.as_bytes()))?,
        out.json("verify_points.json", &checks)?,
    ];
    print!("{summary}");
    announce(&paths);
    if !ok {
        return Err(cert_fail(format!(
            "{} of {} points failed verification{}",
            bad.len(),
            branch.len(),
            if audit_msg.is_some() {
                ", branch audit failed"
            } else {
                ""
            }
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ReconstructReport<'a> {
    point: usize,
    s: f64,
    physical: &'a PhysicalReport,
    current: &'a CurrentProfile,
}

fn reconstruct(cfg: &RunConfig, input: &Path, point: Option<usize>) -> CliResult<()> {
    let branch = load_branch(input)?;
    if branch.is_empty() {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "branch file has no points".into(),
        });
    }
    let index = point.or(cfg.reconstruct.point).unwrap_or(branch.len() - 1);
    let bp = branch.points.get(index).ok_or_else(|| Failure {
        code: EXIT_CONFIG,
        message: format!("point {index} out of range (branch has {})", branch.len()),
    })?;
    let grid = branch.grid()?;
    let p = &bp.point;
    let flow = flow_for(p, &grid)?;
    let physical = physical_checks(p, &flow, &grid)?;
    let heights = default_heights(p, cfg.reconstruct.heights, cfg.reconstruct.height_fraction);
    let current = current_profile(p, &flow, &heights)?;
    let out = Output::new(
        cfg,
        Some(format!("input = {}\npoint = {index}\n", input.display())),
    )?;
    let mut paths = vec![
        out.commented("surface.dat", |w| flow.write_surface(w))?,
        out.commented("velocity.dat", |w| flow.write_velocity(w))?,
        out.commented("current_profile.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["Y", "mean_u"])?;
            for (y, u) in &current.samples {
                c.write_record([y.to_string(), u.to_string()])?;
            }
            c.flush()
        })?,
        out.json(
            "reconstruct_report.json",
            &ReconstructReport {
                point: index,
                s: bp.s,
                physical: &physical,
                current: &current,
            },
        )?,
    ];
    if out.render {
        let curve: Vec<(f64, f64)> = flow
            .surface_u
            .iter()
            .copied()
            .zip(flow.surface_v.iter().copied())
            .collect();
        paths.push(render(&out.path("surface.png"), &[curve])?);
    }
    let ups = p.params.upsilon;
    let slope_err = (current.slope - ups).abs();
    println!(
        "point {index}: bernoulli {:.2e}  pressure {:.2e}  max psi_Y {:.4}  slope {:.12} (|err| {:.1e})",
        physical.bernoulli_residual, physical.pressure_residual, physical.max_psi_y, current.slope, slope_err
    );
    announce(&paths);
    let mut failed = Vec::new();
    if !physical.passes(PHYSICAL_TOL) {
        failed.push("physical_flow");
    }
    if slope_err > PHYSICAL_TOL * ups.abs().max(1.0)
        || current.max_deviation > PHYSICAL_TOL * ups.abs().max(1.0)
    {
        failed.push("affine_current");
    }
    if !failed.is_empty() {
        return Err(cert_fail(format!(
            "point {index} failed {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn sweep(cfg: &RunConfig) -> CliResult<()> {
    let table = upsilon_sweep(
        &cfg.physics,
        &cfg.sweep.upsilons,
        &cfg.continuation,
        &cfg.kernel_config(),
        cfg.sweep.workers,
    )?;
    let out = Output::new(cfg, None)?;
    let paths = vec![out.commented("sweep.csv", |w| table.write_csv(w))?];
    for r in &table.rows {
        println!(
            "upsilon {:>6}: bound {:.6}  max amplitude {:.6}  points {}  halt {:?}{}",
            r.upsilon,
            r.bound,
            r.max_amplitude,
            r.points_traced,
            r.halt,
            r.error
                .as_deref()
                .map(|e| format!("  error: {e}"))
                .unwrap_or_default()
        );
    }
    announce(&paths);
    if let Some(r) = table.rows.iter().find(|r| r.error.is_some()) {
        return Err(Failure {
            code: EXIT_CONVERGENCE,
            message: format!("sweep row upsilon = {} failed", r.upsilon),
        });
    }
    if !table.amplitudes_below_bound() {
        return Err(cert_fail("observed amplitude exceeds the bound".into()));
    }
    if !table.bound_decreasing() {
        return Err(cert_fail("bound is not decreasing in the vorticity".into()));
    }
    Ok(())
}

/// Minimal line plot of one or more polylines.
fn render(path: &Path, series: &[Vec<(f64, f64)>]) -> CliResult<PathBuf> {
    const W: u32 = 800;
    const H: u32 = 500;
    const PAD: f64 = 30.0;
    const COLOURS: [[u8; 3]; 6] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
    ];
    let pts = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let mut img = image::RgbImage::from_pixel(W, H, image::Rgb([255, 255, 255]));
    let to_px = |x: f64, y: f64| {
        (
            PAD + (x - x0) / (x1 - x0) * (W as f64 - 2.0 * PAD),
            H as f64 - PAD - (y - y0) / (y1 - y0) * (H as f64 - 2.0 * PAD),
        )
    };
    let put = |x: f64, y: f64, c: [u8; 3], img: &mut image::RgbImage| {
        let (i, j) = (x.round(), y.round());
        if i >= 0.0 && j >= 0.0 && i < W as f64 && j < H as f64 {
            img.put_pixel(i as u32, j as u32, image::Rgb(c));
        }
    };
    let segment = |a: (f64, f64), b: (f64, f64), c: [u8; 3], img: &mut image::RgbImage| {
        let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
        for t in 0..=steps {
            let f = t as f64 / steps as f64;
            put(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1), c, img);
        }
    };
    let (l, r, t, b) = (PAD, W as f64 - PAD, PAD, H as f64 - PAD);
    for (a, c) in [
        ((l, t), (r, t)),
        ((r, t), (r, b)),
        ((r, b), (l, b)),
        ((l, b), (l, t)),
    ] {
        segment(a, c, [0, 0, 0], &mut img);
    }
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        for w in s.windows(2) {
            segment(
                to_px(w[0].0, w[0].1),
                to_px(w[1].0, w[1].1),
                colour,
                &mut img,
            );
        }
    }
    img.save(path).map_err(|e| io_fail(path, e))?;
    Ok(path.to_path_buf())
}
