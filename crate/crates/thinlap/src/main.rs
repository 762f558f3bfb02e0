//! Command-line entry point: parse a run configuration from flags and an
//! optional flat JSON file, dispatch the solve / diagram / lgtest
//! subcommands, and write config echo, report, CSV and VTK artifacts.
//!
//! Exit codes: 0 converged, 2 configuration error (nothing written),
//! 3 solver non-convergence (artifacts still written).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use thinlap::fem::{BoundaryData, P1Space, Profile, ScalingParams};
use thinlap::harness::{run_diagram, HarnessOptions};
use thinlap::leastgradient::{lg_reference, p_to_1_study};
use thinlap::mesh::{disk_mesh, extrude, rect_mesh, TriMesh};
use thinlap::onelaplace::{solve_tv, trace_csv, PDOptions};
use thinlap::plaplace::{solve_p, PSolveOptions};
use thinlap::vtk::{self, VtkDataset};

#[derive(Parser)]
#[command(name = "thinlap", version, disable_help_subcommand = true)]
#[command(about = "Anisotropic p-Laplace and total-variation solvers on thin cylinders")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a single problem (p > 1 Dirichlet or p = 1 relaxed)
    Solve(CommonArgs),
    /// Fill the (p, eps) minimum matrix and report commutation defects
    Diagram(CommonArgs),
    /// p -> 1 study against the analytic least-gradient reference
    Lgtest(CommonArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// domain spec: disk:<refinements> or rect:<nx>,<ny>
    #[arg(long)]
    domain: Option<String>,
    /// extrusion layers for 3D runs
    #[arg(long)]
    n_layers: Option<u32>,
    /// p value (solve) or comma-separated descending list (diagram, lgtest)
    #[arg(long)]
    p: Option<String>,
    /// eps value or comma-separated descending list
    #[arg(long)]
    eps: Option<String>,
    /// solve the planar (eps = 0 limit) problem on the cross-section
    #[arg(long)]
    planar: bool,
    /// boundary data: const:<c> | affine:<a>,<b>,<c> |
    /// mono:identity|cubic|ramp:<k> | fourier:<a1>,<b1>[,<a2>,<b2>,...]
    #[arg(long)]
    bc: Option<String>,
    /// reference profile for lgtest: identity | cubic | ramp:<k>
    #[arg(long)]
    profile: Option<String>,
    /// output directory
    #[arg(long)]
    out: Option<String>,
    /// flat JSON config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// single-threaded execution for bit-reproducible artifacts
    #[arg(long)]
    deterministic: bool,
    /// primal-dual iteration budget
    #[arg(long)]
    max_iters: Option<u64>,
    /// relative duality-gap tolerance
    #[arg(long)]
    gap_tol: Option<f64>,
    /// outer Kacanov budget per regularization stage
    #[arg(long)]
    max_outer: Option<u64>,
    /// conjugate-gradient tolerance
    #[arg(long)]
    cg_tol: Option<f64>,
}

/// Flat JSON mirror of the flags; unknown keys are rejected.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    domain: Option<String>,
    n_layers: Option<u32>,
    p: Option<String>,
    eps: Option<String>,
    planar: Option<bool>,
    bc: Option<String>,
    profile: Option<String>,
    out: Option<String>,
    deterministic: Option<bool>,
    max_iters: Option<u64>,
    gap_tol: Option<f64>,
    max_outer: Option<u64>,
    cg_tol: Option<f64>,
}

struct ConfigError(String);

impl ConfigError {
    fn new(key: &str, msg: impl std::fmt::Display) -> Self {
        ConfigError(format!("{key}: {msg}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Domain {
    Disk(u32),
    Rect(u32, u32),
}

impl Domain {
    fn spec(&self) -> String {
        match self {
            Domain::Disk(n) => format!("disk:{n}"),
            Domain::Rect(nx, ny) => format!("rect:{nx},{ny}"),
        }
    }

    fn build(&self) -> TriMesh<f64> {
        match *self {
            Domain::Disk(n) => disk_mesh(n as usize),
            Domain::Rect(nx, ny) => rect_mesh(nx as usize, ny as usize),
        }
    }
}

/// Fully resolved configuration; also the normalized echo written to the
/// output directory.
#[derive(Serialize)]
struct RunConfig {
    subcommand: String,
    domain: String,
    n_layers: u32,
    p_list: Vec<f64>,
    eps_list: Vec<f64>,
    planar: bool,
    bc: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<String>,
    out: String,
    deterministic: bool,
    max_iters: usize,
    gap_tol: f64,
    max_outer: usize,
    cg_tol: f64,
    #[serde(skip)]
    parsed_domain: Domain,
    #[serde(skip)]
    parsed_bc: BoundaryData<f64>,
    #[serde(skip)]
    parsed_profile: Profile<f64>,
}

fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::new(key, format!("invalid number '{t}'")))
        })
        .collect()
}

fn parse_domain(s: &str) -> Result<Domain, ConfigError> {
    let key = "domain";
    if let Some(rest) = s.strip_prefix("disk:") {
        let n: u32 = rest
            .parse()
            .map_err(|_| ConfigError::new(key, format!("invalid refinement count '{rest}'")))?;
        if n > 8 {
            return Err(ConfigError::new(key, "disk refinement must be <= 8"));
        }
        return Ok(Domain::Disk(n));
    }
    if let Some(rest) = s.strip_prefix("rect:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            let nx = parts[0].parse::<u32>();
            let ny = parts[1].parse::<u32>();
            if let (Ok(nx), Ok(ny)) = (nx, ny) {
                if nx >= 1 && ny >= 1 {
                    return Ok(Domain::Rect(nx, ny));
                }
            }
        }
        return Err(ConfigError::new(key, format!("invalid rect spec '{rest}'")));
    }
    Err(ConfigError::new(
        key,
        format!("expected disk:<n> or rect:<nx>,<ny>, got '{s}'"),
    ))
}

fn parse_profile(key: &str, s: &str) -> Result<Profile<f64>, ConfigError> {
    match s {
        "identity" => Ok(Profile::Identity),
        "cubic" => Ok(Profile::Cubic),
        _ => {
            if let Some(rest) = s.strip_prefix("ramp:") {
                let k: f64 = rest
                    .parse()
                    .map_err(|_| ConfigError::new(key, format!("invalid ramp slope '{rest}'")))?;
                if !(k > 0.0) {
                    return Err(ConfigError::new(key, "ramp slope must be positive"));
                }
                Ok(Profile::Ramp(k))
            } else {
                Err(ConfigError::new(
                    key,
                    format!("expected identity, cubic or ramp:<k>, got '{s}'"),
                ))
            }
        }
    }
}

fn parse_bc(s: &str) -> Result<BoundaryData<f64>, ConfigError> {
    let key = "bc";
    if let Some(rest) = s.strip_prefix("const:") {
        let c: f64 = rest
            .parse()
            .map_err(|_| ConfigError::new(key, format!("invalid constant '{rest}'")))?;
        return Ok(BoundaryData::Constant(c));
    }
    if let Some(rest) = s.strip_prefix("affine:") {
        let v = parse_f64_list(key, rest)?;
        if v.len() != 3 {
            return Err(ConfigError::new(key, "affine needs exactly 3 coefficients"));
        }
        return Ok(BoundaryData::Affine(v[0], v[1], v[2]));
    }
    if let Some(rest) = s.strip_prefix("mono:") {
        return Ok(BoundaryData::MonotoneX1(parse_profile(key, rest)?));
    }
    if let Some(rest) = s.strip_prefix("fourier:") {
        let v = parse_f64_list(key, rest)?;
        if v.is_empty() || v.len() % 2 != 0 {
            return Err(ConfigError::new(
                key,
                "fourier needs coefficient pairs a_k,b_k",
            ));
        }
        let a = v.iter().step_by(2).copied().collect();
        let b = v.iter().skip(1).step_by(2).copied().collect();
        return Ok(BoundaryData::Fourier { a, b });
    }
    Err(ConfigError::new(
        key,
        format!("expected const:, affine:, mono: or fourier: spec, got '{s}'"),
    ))
}

fn load_file_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::new("config", e))
}

fn resolve(sub: &str, args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let file = match &args.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };

    let domain_spec = args
        .domain
        .clone()
        .or(file.domain)
        .ok_or_else(|| ConfigError::new("domain", "missing (use --domain)"))?;
    let parsed_domain = parse_domain(&domain_spec)?;

    let n_layers = args.n_layers.or(file.n_layers).unwrap_or(1);
    if n_layers == 0 {
        return Err(ConfigError::new("n_layers", "must be >= 1"));
    }

    let planar = args.planar || file.planar.unwrap_or(false);
    let eps_spec = args.eps.clone().or(file.eps);
    let eps_list = match (&eps_spec, planar) {
        (Some(s), _) => parse_f64_list("eps", s)?,
        (None, true) => Vec::new(),
        (None, false) => {
            return Err(ConfigError::new("eps", "missing (use --eps or --planar)"));
        }
    };
    for &e in &eps_list {
        if !(e > 0.0 && e <= 1.0) {
            return Err(ConfigError::new("eps", format!("must lie in (0, 1], got {e}")));
        }
    }

    let profile_spec = args.profile.clone().or(file.profile);
    let parsed_profile = match &profile_spec {
        Some(s) => parse_profile("profile", s)?,
        None => Profile::Identity,
    };

    let bc_spec = match sub {
        // the study's boundary data is determined by the profile
        "lgtest" => format!(
            "mono:{}",
            profile_spec.clone().unwrap_or_else(|| "identity".into())
        ),
        _ => args
            .bc
            .clone()
            .or(file.bc)
            .ok_or_else(|| ConfigError::new("bc", "missing (use --bc)"))?,
    };
    let parsed_bc = parse_bc(&bc_spec)?;

    let p_spec = args
        .p
        .clone()
        .or(file.p)
        .ok_or_else(|| ConfigError::new("p", "missing (use --p)"))?;
    let p_list = parse_f64_list("p", &p_spec)?;
    if p_list.is_empty() {
        return Err(ConfigError::new("p", "empty list"));
    }
    match sub {
        "solve" => {
            if p_list.len() != 1 {
                return Err(ConfigError::new("p", "solve takes a single p value"));
            }
            let p = p_list[0];
            if !(p == 1.0 || (p > 1.0 && p <= 2.0)) {
                return Err(ConfigError::new(
                    "p",
                    format!("must be 1 (total variation) or in (1, 2], got {p}"),
                ));
            }
            if eps_list.len() > 1 {
                return Err(ConfigError::new("eps", "solve takes a single eps value"));
            }
        }
        _ => {
            for &p in &p_list {
                if !(p > 1.0 && p < 2.0) {
                    return Err(ConfigError::new(
                        "p",
                        format!("list entries must lie in (1, 2), got {p}"),
                    ));
                }
            }
        }
    }
    if sub == "diagram" && eps_list.is_empty() {
        return Err(ConfigError::new("eps", "diagram needs an eps list"));
    }
    if sub == "lgtest" && eps_list.len() > 1 {
        return Err(ConfigError::new("eps", "lgtest takes a single eps value"));
    }
    if sub == "lgtest" && parsed_domain.spec().starts_with("rect") {
        return Err(ConfigError::new(
            "domain",
            "lgtest references are defined on the disk only",
        ));
    }

    let deterministic = args.deterministic || file.deterministic.unwrap_or(false);
    let pd_defaults = PDOptions::<f64>::default();
    let p_defaults = PSolveOptions::<f64>::default();
    Ok(RunConfig {
        subcommand: sub.to_string(),
        domain: parsed_domain.spec(),
        n_layers,
        p_list,
        eps_list,
        planar,
        bc: bc_spec,
        profile: if sub == "lgtest" { profile_spec } else { None },
        out: args.out.clone().or(file.out).unwrap_or_else(|| "out".into()),
        deterministic,
        max_iters: args.max_iters.or(file.max_iters).unwrap_or(pd_defaults.max_iters as u64)
            as usize,
        gap_tol: args.gap_tol.or(file.gap_tol).unwrap_or(pd_defaults.gap_tol),
        max_outer: args.max_outer.or(file.max_outer).unwrap_or(p_defaults.max_outer as u64)
            as usize,
        cg_tol: args.cg_tol.or(file.cg_tol).unwrap_or(p_defaults.cg_tol),
        parsed_domain,
        parsed_bc,
        parsed_profile,
    })
}

impl RunConfig {
    fn pd_opts(&self) -> PDOptions<f64> {
        PDOptions {
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            ..Default::default()
        }
    }

    fn p_opts(&self) -> PSolveOptions<f64> {
        PSolveOptions {
            max_outer: self.max_outer,
            cg_tol: self.cg_tol,
            ..Default::default()
        }
    }

    fn out_dir(&self) -> &Path {
        Path::new(&self.out)
    }

    fn write(&self, name: &str, content: &str) -> std::io::Result<()> {
        vtk::write_file(&self.out_dir().join(name), content)
    }
}

#[derive(Serialize)]
struct SolveReport {
    solver: &'static str,
    converged: bool,
    iters: usize,
    energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kkt_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    div_residual: Option<f64>,
}

fn run_solve(cfg: &RunConfig) -> std::io::Result<u8> {
    let base = cfg.parsed_domain.build();
    let p = cfg.p_list[0];
    let scaling = if cfg.planar {
        ScalingParams::Planar
    } else {
        ScalingParams::thin(cfg.eps_list[0])
    };
    let tet;
    let space = if cfg.planar {
        P1Space::from_tri(&base)
    } else {
        tet = extrude(&base, cfg.n_layers as usize).expect("n_layers validated");
        P1Space::from_tet(&tet)
    };

    let (report, u, trace) = if p > 1.0 {
        let sol = solve_p(&space, &cfg.parsed_bc, p, &scaling, &cfg.p_opts())
            .expect("p validated");
        let mut energy_csv = String::from("iter,energy\n");
        for (i, e) in sol.energy_trace.iter().enumerate() {
            energy_csv.push_str(&format!("{},{}\n", i + 1, e));
        }
        (
            SolveReport {
                solver: "kacanov",
                converged: sol.converged,
                iters: sol.outer_iters,
                energy: sol.energy,
                kkt_residual: Some(sol.kkt_residual),
                dual: None,
                gap: None,
                div_residual: None,
            },
            sol.u,
            energy_csv,
        )
    } else {
        let sol = solve_tv(&space, &cfg.parsed_bc, &scaling, &cfg.pd_opts());
        (
            SolveReport {
                solver: "primal-dual",
                converged: sol.converged,
                iters: sol.iters,
                energy: sol.primal,
                kkt_residual: None,
                dual: Some(sol.dual),
                gap: Some(sol.gap),
                div_residual: Some(sol.div_residual),
            },
            sol.u,
            trace_csv(&sol.trace),
        )
    };

    cfg.write(
        "report.json",
        &serde_json::to_string_pretty(&report).expect("report"),
    )?;
    cfg.write("trace.csv", &trace)?;
    let data = VtkDataset {
        point_scalars: vec![("u", &u)],
        cell_vectors: vec![],
    };
    let vtk_text = if cfg.planar {
        vtk::tri_mesh_to_vtk(&base, &data)
    } else {
        let tet = extrude(&base, cfg.n_layers as usize).expect("n_layers validated");
        vtk::tet_mesh_to_vtk(&tet, &data)
    };
    cfg.write("u.vtk", &vtk_text)?;
    Ok(if report.converged { 0 } else { 3 })
}

fn run_diagram_cmd(cfg: &RunConfig) -> std::io::Result<u8> {
    let base = cfg.parsed_domain.build();
    let opts = HarnessOptions {
        p_opts: cfg.p_opts(),
        pd_opts: cfg.pd_opts(),
        threads: if cfg.deterministic { Some(1) } else { None },
    };
    let rep = run_diagram(
        &base,
        cfg.n_layers as usize,
        &cfg.parsed_bc,
        &cfg.p_list,
        &cfg.eps_list,
        &opts,
    );
    cfg.write("report.json", &rep.to_json())?;
    cfg.write("diagram.csv", &rep.to_csv())?;
    let ok = rep.converged.iter().all(|row| row.iter().all(|&c| c))
        && rep.values.iter().flatten().all(|v| v.is_finite());
    Ok(if ok { 0 } else { 3 })
}

#[derive(Serialize)]
struct LgReport {
    profile: String,
    tv_value: f64,
    final_sup_error: f64,
    final_l1_error: f64,
    all_converged: bool,
}

fn run_lgtest(cfg: &RunConfig) -> std::io::Result<u8> {
    let base = cfg.parsed_domain.build();
    let tet;
    let (space, scaling) = if cfg.planar {
        (P1Space::from_tri(&base), ScalingParams::Planar)
    } else {
        tet = extrude(&base, cfg.n_layers as usize).expect("n_layers validated");
        (
            P1Space::from_tet(&tet),
            ScalingParams::thin(cfg.eps_list[0]),
        )
    };
    let table = p_to_1_study(
        &space,
        cfg.parsed_profile,
        &cfg.p_list,
        &scaling,
        &cfg.p_opts(),
    )
    .expect("disk domain validated");
    let last = table.rows.last().expect("nonempty p list");
    let report = LgReport {
        profile: cfg.profile.clone().unwrap_or_else(|| "identity".into()),
        tv_value: lg_reference::<f64>(cfg.parsed_profile).tv_value,
        final_sup_error: last.sup_error,
        final_l1_error: last.l1_error,
        all_converged: table.rows.iter().all(|r| r.converged),
    };
    cfg.write("study.csv", &table.to_csv())?;
    cfg.write(
        "report.json",
        &serde_json::to_string_pretty(&report).expect("report"),
    )?;
    Ok(if report.all_converged { 0 } else { 3 })
}

fn dispatch(cfg: &RunConfig) -> std::io::Result<u8> {
    std::fs::create_dir_all(cfg.out_dir())?;
    cfg.write(
        "config.json",
        &serde_json::to_string_pretty(cfg).expect("config echo"),
    )?;
    match cfg.subcommand.as_str() {
        "solve" => run_solve(cfg),
        "diagram" => run_diagram_cmd(cfg),
        "lgtest" => run_lgtest(cfg),
        _ => unreachable!("subcommands are fixed"),
    }
}

fn run(cli: Cli) -> u8 {
    let (sub, args) = match &cli.cmd {
        Cmd::Solve(a) => ("solve", a),
        Cmd::Diagram(a) => ("diagram", a),
        Cmd::Lgtest(a) => ("lgtest", a),
    };
    let cfg = match resolve(sub, args) {
        Ok(cfg) => cfg,
        Err(ConfigError(msg)) => {
            eprintln!("config error: {msg}");
            return 2;
        }
    };
    match dispatch(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("io error: {e}");
            2
        }
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli) as i32);
}
