//! Command-line driver: geometry generation, static solves, convergence
//! studies, dynamic simulations and pencil analysis, with reproducible
//! file outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use strutnet_core::dynamics::{DynamicOperator, InitialData};
use strutnet_core::fields::MixedSolution;
use strutnet_core::layout::FeOrders;
use strutnet_core::loads::Load;
use strutnet_core::network::{zigzag_cylinder, StentNetwork};
use strutnet_core::rod::{CrossSection, Material};
use strutnet_core::solver::{
    check_solution, convergence_study, solve_static, FactorPath, SolverOptions, StaticProblem,
};
use strutnet_core::{csvio, vtk};

#[derive(Parser)]
#[command(
    name = "strutnet",
    about = "Mixed finite-element statics and dynamics of elastic strut networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a network file.
    Generate(GenerateArgs),
    /// Solve the stationary problem and write solution files.
    Static(StaticArgs),
    /// Run a refinement convergence study.
    Converge(ConvergeArgs),
    /// Integrate the evolution problem.
    Dynamic(DynamicArgs),
    /// Canonical-form analysis of the (E, K) pencil.
    AnalyzeDae(AnalyzeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Reference stent geometry (12 x 12 rings with end ring, r = 1.5 mm,
    /// length 16.8 mm, steel, square 0.1 mm section).
    #[arg(long)]
    palmaz: bool,
    /// Points per ring.
    #[arg(long, default_value_t = 12)]
    n_circ: usize,
    /// Number of rings.
    #[arg(long, default_value_t = 12)]
    n_long: usize,
    #[arg(long, default_value_t = 1.5e-3)]
    radius: f64,
    #[arg(long, default_value_t = 1.68e-2)]
    length: f64,
    /// Add circumferential struts on the first boundary ring.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    end_ring: bool,
    #[arg(long, default_value_t = 1e-4)]
    width: f64,
    #[arg(long, default_value_t = 1e-4)]
    thickness: f64,
    #[arg(long, default_value_t = 2.1e11)]
    young: f64,
    #[arg(long, default_value_t = 0.26506)]
    poisson: f64,
    #[arg(long, default_value_t = 7850.0)]
    density: f64,
    /// Split every strut into this many pieces after generation.
    #[arg(long, default_value_t = 1)]
    split: usize,
    /// Output network file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct LoadArgs {
    /// One of: f1, f2, radial-quadratic, constant, traveling-wave.
    #[arg(long, default_value = "f1")]
    load: String,
    /// Amplitude override (meaning depends on the load).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Direction of the constant load, as "x,y,z".
    #[arg(long, default_value = "0,0,1")]
    direction: String,
    /// Center of the radial polynomial load.
    #[arg(long, default_value_t = 0.0)]
    center: f64,
    /// Power of the radial polynomial load.
    #[arg(long, default_value_t = 2)]
    power: i32,
    #[arg(long, default_value_t = 0.0075)]
    wave_speed: f64,
    #[arg(long, default_value_t = 0.5)]
    wave_onset: f64,
    #[arg(long, default_value_t = 0.003)]
    wave_support: f64,
}

#[derive(Args)]
struct StaticArgs {
    /// Network JSON file.
    #[arg(short, long)]
    net: PathBuf,
    /// Multiplier polynomial degree; the primal degree is k + 1.
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    load: LoadArgs,
    /// Split every strut before solving.
    #[arg(long, default_value_t = 1)]
    split: usize,
    /// Force a factorization path: auto, dense, sparse.
    #[arg(long, default_value = "auto")]
    solver: String,
    /// Displacement scale of the deformed geometry output.
    #[arg(long, default_value_t = 1.0)]
    deform_scale: f64,
    /// Also write the assembled matrix as `matrix.txt` triplets.
    #[arg(long)]
    export_matrix: bool,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(short, long)]
    net: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    load: LoadArgs,
    /// Comma-separated split counts, e.g. "1,2,4,8".
    #[arg(long, default_value = "1,2,4,8")]
    levels: String,
    /// Reference split; must be a multiple of every level.
    #[arg(long, default_value_t = 32)]
    reference: usize,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DynamicArgs {
    #[arg(short, long)]
    net: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long, default_value_t = 0.03125)]
    dt: f64,
    #[arg(long, default_value_t = 2.0)]
    t_end: f64,
    /// Comma-separated snapshot times for VTK output, e.g. "1,2,3".
    #[arg(long, default_value = "")]
    snapshots: String,
    /// Reuse one factorization of the step matrix across all steps.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    ldlt_reuse: bool,
    /// Transform the trajectory with the canonical form and report the
    /// constrained component norms.
    #[arg(long)]
    canonical_check: bool,
    #[arg(long, default_value_t = 1.0)]
    deform_scale: f64,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(short, long)]
    net: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    k: usize,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Static(args) => cmd_static(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Dynamic(args) => cmd_dynamic(args),
        Command::AnalyzeDae(args) => cmd_analyze(args),
    }
}

fn thread_cap() -> usize {
    std::env::var("STRUTNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(4)
}

fn axial_extent(net: &StentNetwork) -> f64 {
    let xs: Vec<f64> = net.vertices.iter().map(|v| v.position.x).collect();
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max - min
}

fn parse_load(args: &LoadArgs, net: &StentNetwork) -> Result<Load> {
    let axial = axial_extent(net);
    let load = match args.load.as_str() {
        "f1" => {
            let mut l = Load::bell_f1(axial);
            if let (Load::Bell { amplitude, .. }, Some(a)) = (&mut l, args.amplitude) {
                *amplitude = a;
            }
            l
        }
        "f2" => {
            let mut l = Load::parabola_f2(axial);
            if let (Load::TransverseParabola { amplitude, .. }, Some(a)) = (&mut l, args.amplitude)
            {
                *amplitude = a;
            }
            l
        }
        "radial-quadratic" | "radial-custom" => Load::RadialPolynomial {
            amplitude: args.amplitude.unwrap_or(2.5e7),
            center: args.center,
            power: args.power,
        },
        "constant" => {
            let parts: Vec<f64> = args
                .direction
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .context("parsing --direction")?;
            if parts.len() != 3 {
                bail!("--direction needs three components");
            }
            let scale = args.amplitude.unwrap_or(1.0);
            Load::Constant {
                direction: [parts[0] * scale, parts[1] * scale, parts[2] * scale],
            }
        }
        "traveling-wave" => Load::TravelingWave {
            amplitude: args.amplitude.unwrap_or(5e-8),
            speed: args.wave_speed,
            onset: args.wave_onset,
            support_width: args.wave_support,
        },
        other => bail!("unknown load {other:?}"),
    };
    Ok(load)
}

fn parse_solver(name: &str) -> Result<FactorPath> {
    Ok(match name {
        "auto" => FactorPath::Auto,
        "dense" => FactorPath::Dense,
        "sparse" => FactorPath::Sparse,
        other => bail!("unknown solver path {other:?}"),
    })
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().context("parsing list"))
        .collect()
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let (n_circ, n_long, radius, length, end_ring) = if args.palmaz {
        (12, 12, 1.5e-3, 1.68e-2, true)
    } else {
        (
            args.n_circ,
            args.n_long,
            args.radius,
            args.length,
            args.end_ring,
        )
    };
    let section = CrossSection::new(args.width, args.thickness);
    let material = Material::from_poisson(args.young, args.poisson, args.density);
    let mut net = zigzag_cylinder(n_circ, n_long, radius, length, end_ring, section, material)?;
    if args.split > 1 {
        net = net.refine(args.split);
    }
    net.save(&args.output)?;
    println!(
        "generated network: {} vertices, {} struts, total length {:.6e} m -> {}",
        net.n_vertices(),
        net.n_struts(),
        net.total_length(),
        args.output.display()
    );
    Ok(())
}

fn load_network(path: &Path, split: usize) -> Result<StentNetwork> {
    let net = StentNetwork::load(path)
        .with_context(|| format!("loading network {}", path.display()))?;
    Ok(if split > 1 { net.refine(split) } else { net })
}

fn cmd_static(args: StaticArgs) -> Result<()> {
    let net = load_network(&args.net, args.split)?;
    let orders = FeOrders::new(args.k);
    let load = parse_load(&args.load, &net)?;
    let options = SolverOptions {
        path: parse_solver(&args.solver)?,
        ..Default::default()
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let sol = solve_static(&StaticProblem {
        net: &net,
        orders,
        load,
        options,
    })?;
    println!("system dimension: {}", sol.dim);
    println!("relative residual: {:.3e}", sol.residual);
    let diag = check_solution(&net, orders, &sol.fields);
    println!(
        "constraint residuals: kinematic {:.3e}, balance {:.3e}, mean {:.3e} (relative {:.3e})",
        diag.kinematic_residual,
        diag.balance_residual,
        diag.mean_residual,
        diag.worst_relative()
    );
    println!(
        "timings: assemble {:.3}s, factorize {:.3}s",
        sol.assemble_seconds, sol.factor_seconds
    );
    csvio::write_solution_csv(&args.out_dir.join("solution.csv"), &net, orders, &sol.fields)?;
    vtk::write_polydata(
        &args.out_dir.join("deformed.vtk"),
        &net,
        orders,
        Some(&sol.fields),
        args.deform_scale,
    )?;
    if args.export_matrix {
        let asm = strutnet_core::assembly::Assembler::new(&net, orders)?;
        let sys = asm.system(&Load::Constant { direction: [0.0; 3] }, 0.0);
        sys.export_triplets(&args.out_dir.join("matrix.txt"))?;
    }
    if diag.worst_relative() > 1e-9 {
        bail!("constraint residuals exceed 1e-9 of scale");
    }
    Ok(())
}

fn cmd_converge(args: ConvergeArgs) -> Result<()> {
    let net = load_network(&args.net, 1)?;
    let orders = FeOrders::new(args.k);
    let load = parse_load(&args.load, &net)?;
    let levels: Vec<usize> = parse_list(&args.levels)?;
    if levels.is_empty() {
        bail!("no levels given");
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let table = convergence_study(
        &net,
        orders,
        &load,
        &levels,
        args.reference,
        &SolverOptions::default(),
        thread_cap(),
    )?;
    csvio::write_errors_csv(&args.out_dir.join("errors.csv"), &table)?;
    for row in &table.rows {
        let rate = row
            .rate
            .map(|r| format!("{r:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "split {:3}  h {:.4e}  {:6} {:7}  error {:.6e}  rate {}",
            row.split, row.h, row.quantity, row.norm, row.error, rate
        );
    }
    Ok(())
}

fn cmd_dynamic(args: DynamicArgs) -> Result<()> {
    let net = load_network(&args.net, 1)?;
    let orders = FeOrders::new(args.k);
    let load = parse_load(&args.load, &net)?;
    if args.dt <= 0.0 || args.t_end < args.dt {
        bail!("need dt > 0 and t_end >= dt");
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let options = SolverOptions::default();
    let op = DynamicOperator::new(&net, orders)?;
    println!("system dimension: {}", op.dim());
    let init = op.consistent_initial_state(&load, &InitialData::default(), None)?;
    if init.u_correction > 0.0 || init.u_dot_correction > 0.0 {
        eprintln!(
            "warning: initial data projected (|du| = {:.3e}, |dv| = {:.3e})",
            init.u_correction, init.u_dot_correction
        );
    }
    let steps = (args.t_end / args.dt).round() as usize;
    let handle = if args.ldlt_reuse {
        Some(op.precompute_factorization(args.dt, &options)?)
    } else {
        None
    };
    let traj = op.integrate_midpoint(
        &load,
        args.dt,
        steps,
        &init.state,
        handle.as_ref(),
        &options,
    )?;
    // trajectory.csv: junction displacements and rotations over time
    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(
            args.out_dir.join("trajectory.csv"),
        )?);
        writeln!(out, "t,vertex,Ux,Uy,Uz,Ox,Oy,Oz")?;
        for state in &traj.states {
            let fields = MixedSolution::decode(&state.z, &op.asm.layout);
            for v in 0..net.n_vertices() {
                let u = fields.vertex_u[v];
                let w = fields.vertex_omega[v];
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csvio::fmt(state.t),
                    v,
                    csvio::fmt(u.x),
                    csvio::fmt(u.y),
                    csvio::fmt(u.z),
                    csvio::fmt(w.x),
                    csvio::fmt(w.y),
                    csvio::fmt(w.z)
                )?;
            }
        }
    }
    let snapshot_times: Vec<f64> = parse_list(&args.snapshots)?;
    for (i, t_snap) in snapshot_times.iter().enumerate() {
        let idx = ((t_snap / args.dt).round() as usize).min(traj.states.len() - 1);
        let fields = MixedSolution::decode(&traj.states[idx].z, &op.asm.layout);
        vtk::write_polydata(
            &args.out_dir.join(format!("snapshot_{i:03}.vtk")),
            &net,
            orders,
            Some(&fields),
            args.deform_scale,
        )?;
    }
    let (alg_res, alg_scale) = op.algebraic_residual(traj.last(), &load);
    println!(
        "algebraic residual at t = {:.3}: {:.3e} (scale {:.3e})",
        traj.last().t,
        alg_res,
        alg_scale
    );
    csvio::write_timings_csv(
        &args.out_dir.join("timings.csv"),
        &[
            ("factorize".to_string(), op.dim(), traj.factor_seconds),
            ("iterate".to_string(), op.dim(), traj.step_seconds),
        ],
    )?;
    if args.canonical_check {
        let canon = op.canonical_form()?;
        let mut worst = [0.0f64; 3];
        let mut zmax = 0.0f64;
        for state in &traj.states {
            let norms = canon.component_norms(&state.z);
            let znorm = state.z.norm();
            zmax = zmax.max(znorm);
            for (slot, idx) in worst.iter_mut().zip([0usize, 2, 4]) {
                *slot = slot.max(norms[idx]);
            }
        }
        println!(
            "canonical check: max |z1| {:.3e}, |z3| {:.3e}, |z5| {:.3e} over |z| <= {:.3e}",
            worst[0], worst[1], worst[2], zmax
        );
        println!(
            "congruence residuals: E {:.3e}, K {:.3e}",
            canon.residual_e, canon.residual_k
        );
    }
    if alg_scale > 0.0 && alg_res > 1e-8 * alg_scale {
        bail!("trajectory violates algebraic constraints: {alg_res:e} vs scale {alg_scale:e}");
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let net = load_network(&args.net, 1)?;
    let orders = FeOrders::new(args.k);
    let op = DynamicOperator::new(&net, orders)?;
    let canon = op.canonical_form()?;
    println!("block sizes: {:?}", canon.sizes);
    println!(
        "congruence residuals: E {:.3e}, K {:.3e}; zero-pattern defect {:.3e}",
        canon.residual_e, canon.residual_k, canon.zero_pattern_defect
    );
    for w in &canon.rank_warnings {
        println!("warning: {w}");
    }
    let eig = canon.reduced_stiffness().symmetric_eigen();
    println!(
        "reduced stiffness spectrum: min {:.3e}, max {:.3e}",
        eig.eigenvalues.min(),
        eig.eigenvalues.max()
    );
    if canon.zero_pattern_defect > 1e-10 {
        bail!("canonical form defect exceeds 1e-10 of scale");
    }
    Ok(())
}
