//! Command-line driver: mesh generation, single solves, optimization
//! runs, convergence studies, and the verification suite.

use clap::{Args, Parser, Subcommand};
use nonlocal_design::experiments::{
    design_field_text, parse_source, run_study, state_field_text, write_atomic, StudyConfig,
};
use nonlocal_design::forms::{DesignField, FormKind, StateField};
use nonlocal_design::mesh::{
    build_disk_mesh, build_disk_mesh_rings, build_interval_mesh, disk_rings_for_dofs,
    extend_with_horizon, Mesh,
};
use nonlocal_design::optimizer::{run_pgd, CacheMode, PgdConfig};
use nonlocal_design::oracle::{bbm_limit_probe, dense_fractional_assembly_1d, korn_probe};
use nonlocal_design::quad::QuadConfig;
use nonlocal_design::solver::design_to_state;
use nonlocal_design::Result;
use rand::{Rng, SeedableRng};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nldesign",
    about = "Optimal design with nonlocal state equations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mesh and write it in the text format.
    Mesh(MeshArgs),
    /// Solve one state equation on a mesh.
    Solve(SolveArgs),
    /// Run one projected-gradient-descent optimization.
    Optimize(OptimizeArgs),
    /// Run a study described by a config file.
    Study {
        /// Key-value config file (see README for the schema).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the verification suite and print a report.
    Check {
        /// Random seed for the probe samples.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// 1D: number of elements.
    #[arg(long)]
    elements: Option<usize>,
    /// 2D: interior DOF target ((2m-1)^2).
    #[arg(long)]
    dofs: Option<usize>,
    /// 2D: mesh size target (alternative to --dofs).
    #[arg(long)]
    target_h: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Horizon layer width.
    #[arg(long, default_value_t = 0.0)]
    horizon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Mesh file (must carry a horizon layer for fractional solves).
    #[arg(long)]
    mesh: PathBuf,
    /// Fractional order; 1 selects the local operator.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    horizon: f64,
    /// Source: const:C or ball:C:RAD:X:Y.
    #[arg(long, default_value = "const:1")]
    f: String,
    /// Constant design coefficient.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value = "0.1:2.0")]
    bounds: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    horizon: f64,
    #[arg(long, default_value = "const:1")]
    f: String,
    #[arg(long, default_value = "0.1:2.0")]
    bounds: String,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Pair cache policy: auto, on, off.
    #[arg(long, default_value = "auto")]
    cache: String,
    /// Output directory for design/state/log files.
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_bounds(text: &str) -> Result<(f64, f64)> {
    let err = || nonlocal_design::Error::Parse(format!("bad bounds: {text}"));
    let (lo, hi) = text.split_once(':').ok_or_else(err)?;
    Ok((
        lo.parse().map_err(|_| err())?,
        hi.parse().map_err(|_| err())?,
    ))
}

fn parse_cache(text: &str) -> Result<CacheMode> {
    match text {
        "auto" => Ok(CacheMode::Auto),
        "on" => Ok(CacheMode::On),
        "off" => Ok(CacheMode::Off),
        _ => Err(nonlocal_design::Error::Parse(format!(
            "bad cache mode: {text}"
        ))),
    }
}

fn kind_for(s: f64, horizon: f64) -> FormKind {
    if s == 1.0 {
        FormKind::LocalConductivity
    } else {
        FormKind::FractionalConductivity { s, r_horizon: horizon }
    }
}

fn cmd_mesh(args: MeshArgs) -> Result<()> {
    let base = if args.dim == 1 {
        let n = args.elements.ok_or_else(|| {
            nonlocal_design::Error::Parameter("1D meshes need --elements".into())
        })?;
        build_interval_mesh(0.0, 1.0, n)?
    } else if let Some(dofs) = args.dofs {
        build_disk_mesh_rings(args.radius, disk_rings_for_dofs(dofs)?)?
    } else if let Some(h) = args.target_h {
        build_disk_mesh(args.radius, h)?
    } else {
        return Err(nonlocal_design::Error::Parameter(
            "2D meshes need --dofs or --target-h".into(),
        ));
    };
    let mesh = extend_with_horizon(&base, args.horizon)?;
    mesh.write_file(&args.out)?;
    println!(
        "mesh: dim {} vertices {} elements {} interior DOFs {} h {:.5} quasi-uniformity {:.2}",
        mesh.dimension(),
        mesh.n_vertices(),
        mesh.n_elements(),
        mesh.n_interior_vertices(),
        mesh.h(),
        mesh.quasi_uniformity_ratio()
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mesh = Mesh::read_file(&args.mesh)?;
    let bounds = parse_bounds(&args.bounds)?;
    let source = parse_source(&args.f)
        .ok_or_else(|| nonlocal_design::Error::Parse(format!("bad source: {}", args.f)))?;
    let design = DesignField::uniform(&mesh, args.a, bounds)?;
    let quad = QuadConfig::default();
    let u = design_to_state(&mesh, &design, kind_for(args.s, args.horizon), &source, 1e-10, &quad)?;
    write_atomic(&args.out, &state_field_text(&mesh, &u))?;
    println!("state: L2 norm {:.6}", u.l2_norm(&mesh));
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let mesh = Mesh::read_file(&args.mesh)?;
    let bounds = parse_bounds(&args.bounds)?;
    let source = parse_source(&args.f)
        .ok_or_else(|| nonlocal_design::Error::Parse(format!("bad source: {}", args.f)))?;
    let mut cfg = PgdConfig::new(kind_for(args.s, args.horizon), source, bounds);
    cfg.tau = args.tau;
    cfg.max_iterations = args.iterations;
    cfg.lambda = args.lambda;
    cfg.q = args.q;
    cfg.cache_mode = parse_cache(&args.cache)?;
    let out = run_pgd(&mesh, &cfg).map_err(nonlocal_design::Error::from)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_atomic(
        &args.out_dir.join("design.txt"),
        &design_field_text(&mesh, &out.final_design),
    )?;
    write_atomic(
        &args.out_dir.join("state.txt"),
        &state_field_text(&mesh, &out.final_state),
    )?;
    write_atomic(&args.out_dir.join("iterations.csv"), &out.iteration_log)?;
    println!(
        "optimize: {} iterations, cost {:.6} -> {:.6} (solve {:.1}s, sweeps {:.1}s)",
        out.iterations_run,
        out.cost_history.first().unwrap(),
        out.cost_history.last().unwrap(),
        out.solve_time,
        out.gradient_sweep_time
    );
    Ok(())
}

fn cmd_study(config: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&config)?;
    let cfg = StudyConfig::parse(&text)?;
    let report = run_study(&cfg)?;
    print!("{}", report.csv);
    for (k, r) in report.records.iter().enumerate() {
        eprintln!("rung {k}: {:.1}s", r.wall_time);
    }
    if !report.state_errors.is_empty() || !report.cost_errors.is_empty() {
        println!("state_errors: {:?}", report.state_errors);
        println!("cost_errors: {:?}", report.cost_errors);
        if let Some(mono) = report.errors_decrease {
            println!("errors decrease along ladder: {mono}");
        }
    }
    Ok(())
}

struct CheckReport {
    failures: usize,
}

impl CheckReport {
    fn line(&mut self, name: &str, pass: bool, detail: String) {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn cmd_check(seed: u64) -> Result<ExitCode> {
    let mut report = CheckReport { failures: 0 };
    let fine = QuadConfig::fine_1d();

    // Fast fractional assembly against the dense adaptive oracle.
    {
        let base = build_interval_mesh(0.0, 1.0, 8)?;
        let r = 0.3;
        let mesh = extend_with_horizon(&base, r)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..mesh.n_elements()).map(|_| rng.gen_range(0.1..2.0)).collect();
        let design = DesignField::from_values(&mesh, vals, 1.05, (0.1, 2.0))?;
        let mut worst: f64 = 0.0;
        for s in [0.25, 0.5, 0.75] {
            let oracle = dense_fractional_assembly_1d(&mesh, &design, s, r, 1e-9)?;
            let fast = nonlocal_design::forms::assemble_stiffness(
                &mesh,
                &design,
                FormKind::FractionalConductivity { s, r_horizon: r },
                &fine,
            )?;
            for i in 0..oracle.nrows() {
                for j in 0..oracle.ncols() {
                    let o = oracle[(i, j)];
                    let rel = (o - fast.get(i, j)).abs() / o.abs().max(1e-30);
                    worst = worst.max(rel);
                }
            }
        }
        report.line(
            "oracle equivalence",
            worst <= 1e-6,
            format!("max entrywise relative error {worst:.3e} (tolerance 1e-6)"),
        );
    }

    // BBM limit probe.
    {
        let base = build_interval_mesh(0.0, 1.0, 8)?;
        let mesh = extend_with_horizon(&base, 1.0)?;
        let n = mesh.n_interior_vertices();
        let hat = StateField::from_values(
            &mesh,
            1,
            (0..n).map(|i| if i == n / 2 { 1.0 } else { 0.0 }).collect(),
        )?;
        let probe = bbm_limit_probe(&mesh, &hat, &[0.5, 0.9, 0.99, 0.999], &fine)?;
        let gaps = probe.gaps();
        let final_gap = *gaps.last().unwrap();
        let ok = probe.final_gap_is_minimal() && final_gap <= 0.1 * probe.local_energy;
        report.line(
            "BBM limit probe",
            ok,
            format!(
                "gaps {:?}, local energy {:.4}",
                gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>(),
                probe.local_energy
            ),
        );
    }

    // Korn probe.
    {
        let base = build_disk_mesh_rings(1.0, 3)?;
        let mesh = extend_with_horizon(&base, 0.5)?;
        let rungs = korn_probe(&mesh, &[0.3, 0.6, 0.9], &QuadConfig::default(), 20, seed)?;
        let min_ratio = rungs.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
        report.line(
            "Korn probe",
            min_ratio > 0.01,
            format!(
                "minimum energy ratio {min_ratio:.4} across s in {:?}",
                rungs.iter().map(|&(s, _)| s).collect::<Vec<_>>()
            ),
        );
    }

    // Coefficient bracket on a fractional matrix.
    {
        let base = build_interval_mesh(0.0, 1.0, 12)?;
        let mesh = extend_with_horizon(&base, 0.25)?;
        let quad = QuadConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
        let (a_min, a_max) = (0.1, 2.0);
        let unit = DesignField::uniform(&mesh, 1.0, (a_min, a_max))?;
        let kind = FormKind::FractionalConductivity { s: 0.5, r_horizon: 0.25 };
        let k1 = nonlocal_design::forms::assemble_stiffness(&mesh, &unit, kind, &quad)?;
        let vals: Vec<f64> = (0..mesh.n_elements())
            .map(|_| rng.gen_range(a_min..a_max))
            .collect();
        let design = DesignField::from_values(&mesh, vals, 1.05, (a_min, a_max))?;
        let ka = nonlocal_design::forms::assemble_stiffness(&mesh, &design, kind, &quad)?;
        let mut ok = true;
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let v: Vec<f64> = (0..k1.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q1 = k1.quadratic_form(&v);
            let qa = ka.quadratic_form(&v);
            let lo = a_min * q1 - 1e-12 * q1.abs();
            let hi = a_max * q1 + 1e-12 * q1.abs();
            if qa < lo || qa > hi {
                ok = false;
                worst = worst.max((lo - qa).max(qa - hi));
            }
        }
        report.line(
            "coercivity bracket",
            ok,
            format!("a_min v'K[1]v <= v'K[a]v <= a_max v'K[1]v, worst violation {worst:.2e}"),
        );
    }

    // Partition of unity for the gradient sweep.
    {
        let base = build_interval_mesh(0.0, 1.0, 16)?;
        let mesh = extend_with_horizon(&base, 0.2)?;
        let quad = QuadConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
        let n = mesh.n_interior_vertices();
        let u =
            StateField::from_values(&mesh, 1, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let kind = FormKind::FractionalConductivity { s: 0.5, r_horizon: 0.2 };
        let g = nonlocal_design::forms::element_gradient_values(&mesh, &u, kind, &quad)?;
        let unit = DesignField::uniform(&mesh, 1.0, (0.1, 2.0))?;
        let k1 = nonlocal_design::forms::assemble_stiffness(&mesh, &unit, kind, &quad)?;
        let total: f64 = g.iter().sum();
        let energy = k1.quadratic_form(u.values());
        let rel = (total - energy).abs() / energy.abs();
        report.line(
            "partition identity",
            rel <= 1e-10,
            format!("sum of element energies vs B[1](u,u): relative gap {rel:.3e}"),
        );
    }

    println!(
        "check: {}",
        if report.failures == 0 {
            "all checks passed".to_string()
        } else {
            format!("{} check(s) failed", report.failures)
        }
    );
    Ok(if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mesh(args) => cmd_mesh(args).map(|()| ExitCode::SUCCESS),
        Command::Solve(args) => cmd_solve(args).map(|()| ExitCode::SUCCESS),
        Command::Optimize(args) => cmd_optimize(args).map(|()| ExitCode::SUCCESS),
        Command::Study { config } => cmd_study(config).map(|()| ExitCode::SUCCESS),
        Command::Check { seed } => cmd_check(seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
