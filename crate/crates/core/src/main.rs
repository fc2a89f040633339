use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjb_pcpt::harness::{
    mv_bounded_study, mv_control_study, mv_grid_study, parse_interp, run_study, uv_cost_study,
    uv_reference_study, uv_sweep, write_plot_data, write_table_file, CostSpec, PlotPoint,
    SolverKind, StudyConfig, StudyOutcome, StudySpec, UvMethod, UV_REFERENCE,
};
use hjb_pcpt::mesh::Mesh1D;
use hjb_pcpt::models::mv::mv_exact_moments;
use hjb_pcpt::models::{HjbProblem, UncertainVolatility, UvParams};
use hjb_pcpt::Result;

#[derive(Parser)]
#[command(version, about = "Convergence studies for piecewise constant policy timestepping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of refinement levels.
    #[arg(long)]
    levels: Option<usize>,
    /// `linear` or `cubic`.
    #[arg(long, default_value = "linear")]
    interp: String,
    /// `direct` or `reference`.
    #[arg(long, default_value = "direct")]
    routing: String,
    /// Switching cost: `0.1`, `1/40` or `schedule:<kappa>` for `kappa * h^(4/3)`.
    #[arg(long)]
    cost: Option<String>,
    /// Number of control values (overrides the study's own ladder).
    #[arg(long)]
    policies: Option<usize>,
    /// `pcpt`, `direct` or `fixed:<q>`.
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Uncertain volatility butterfly: switching-cost tables and a reference value.
    UvTable2(Common),
    /// Error-versus-timestep data for the uncertain volatility plots.
    UvFigures(Common),
    /// Mean-variance with unbounded leverage: control and grid refinement.
    MvUnbounded(Common),
    /// Mean-variance with no bankruptcy and bounded leverage.
    MvBounded(Common),
    /// Study described by a TOML file.
    Custom {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::UvTable2(c) => uv_table2(&c),
        Command::UvFigures(c) => uv_figures(&c),
        Command::MvUnbounded(c) => mv_unbounded(&c),
        Command::MvBounded(c) => mv_bounded(&c),
        Command::Custom { config, out } => {
            let spec = StudyConfig::from_file(&config)?.to_spec()?;
            let name = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into());
            report(&out, &name, &spec, &run_study(&spec)?)
        }
    }
}

fn report(dir: &Path, name: &str, spec: &StudySpec, outcome: &StudyOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    write_table_file(&path, &outcome.rows)?;
    println!("{name} ({})", path.display());
    println!("{:>5} {:>6} {:>7} {:>5} {:>12} {:>12} {:>10} {:>8}", "level", "N", "M", "J", "value", "error", "incr", "ratio");
    for (row, res) in outcome.rows.iter().zip(&outcome.results) {
        let f = |x: Option<f64>, p: usize| x.map(|v| format!("{v:.p$}")).unwrap_or_default();
        print!(
            "{:>5} {:>6} {:>7} {:>5} {:>12} {:>12} {:>10} {:>8}",
            row.level,
            row.n,
            row.m,
            row.j,
            f(row.value, 6),
            f(row.error, 6),
            f(row.increment, 5),
            f(row.ratio, 2)
        );
        match res {
            Ok(r) => {
                if let Some(m) = r.moments(spec.mv.gamma) {
                    print!("  E[W_T]={:.4} std={:.4}", m.expected, m.variance.sqrt());
                }
                if let Some(it) = r.max_iterations {
                    print!("  iterations<={it}");
                }
                println!("  ({:.1}s)", r.elapsed.as_secs_f64());
            }
            Err(e) => println!("  failed: {e}"),
        }
    }
    if let Some(x) = outcome.extrapolated() {
        println!("extrapolated: {x:.6}");
    }
    println!();
    Ok(())
}

fn apply_common(spec: &mut StudySpec, c: &Common) -> Result<()> {
    if let Some(s) = &c.solver {
        spec.solver = s.parse()?;
        if let SolverKind::Fixed(_) = spec.solver {
            spec.ladder.iter_mut().for_each(|l| l.j = 1);
        }
    }
    if let Some(j) = c.policies {
        spec.ladder.iter_mut().for_each(|l| l.j = j);
    }
    if let Some(cost) = &c.cost {
        let cost: CostSpec = cost.parse()?;
        let hs: Vec<f64> = spec.ladder.iter().map(|l| spec.spacing(l.n)).collect();
        spec.ladder.iter_mut().zip(hs).for_each(|(l, h)| l.c = cost.at(h));
    }
    Ok(())
}

fn uv_interp(c: &Common, finest: usize) -> Result<hjb_pcpt::interp::InterpKind> {
    let (lo, hi) = UncertainVolatility::new(UvParams::default()).shared_domain();
    parse_interp(&c.interp, &c.routing, Some(Mesh1D::uniform(lo, hi, finest + 1)?))
}

fn uv_table2(c: &Common) -> Result<()> {
    let levels = c.levels.unwrap_or(8);
    let costs: Vec<(String, CostSpec)> = match &c.cost {
        Some(s) => vec![(s.replace(['/', ':'], "_"), s.parse()?)],
        None => ["1/10", "1/40", "1/160", "1/640", "0"]
            .iter()
            .map(|s| Ok((s.replace('/', "_"), s.parse()?)))
            .collect::<Result<_>>()?,
    };
    let interp = uv_interp(c, 32 << (levels - 1))?;
    for (label, cost) in costs {
        let spec = uv_cost_study(cost, levels, interp.clone());
        report(&c.out, &format!("uv_table2_c{label}"), &spec, &run_study(&spec)?)?;
    }
    let solver = match &c.solver {
        Some(s) => s.parse()?,
        None => SolverKind::Pcpt,
    };
    let spec = uv_reference_study(levels.min(5), solver);
    let outcome = run_study(&spec)?;
    report(&c.out, "uv_reference", &spec, &outcome)?;
    if let Some(x) = outcome.extrapolated() {
        println!("reference: computed {x:.5}, expected {UV_REFERENCE:.5}");
    }
    Ok(())
}

fn uv_figures(c: &Common) -> Result<()> {
    let steps = c.levels.unwrap_or(10);
    let uv = UvParams::default();
    let hs: Vec<f64> = (2..=10).map(|k| 2f64.powi(-k)).collect();
    let mut points: Vec<PlotPoint> = Vec::new();
    for kappa in [20.0, 80.0, 320.0, 640.0] {
        points.extend(uv_sweep("cost", &format!("c=1/{kappa}"), UvMethod::SharedMesh, uv, &[1.0 / 1024.0], steps, 1.0 / kappa)?);
    }
    for method in UvMethod::ALL {
        points.extend(uv_sweep("mesh", method.name(), method, uv, &hs, steps, 0.0)?);
    }
    std::fs::create_dir_all(&c.out)?;
    let path = c.out.join("uv_figures.csv");
    write_plot_data(std::fs::File::create(&path)?, &points)?;
    println!("wrote {} points to {}", points.len(), path.display());
    Ok(())
}

fn mv_unbounded(c: &Common) -> Result<()> {
    let mut control = mv_control_study(c.levels.unwrap_or(9));
    apply_common(&mut control, c)?;
    report(&c.out, "mv_unbounded_controls", &control, &run_study(&control)?)?;
    let mut grid = mv_grid_study(c.levels.unwrap_or(5), c.policies.unwrap_or(40));
    apply_common(&mut grid, c)?;
    grid.track_mean = grid.solver == SolverKind::Pcpt;
    let outcome = run_study(&grid)?;
    report(&c.out, "mv_unbounded_grid", &grid, &outcome)?;
    let m = mv_exact_moments(&grid.mv);
    println!(
        "closed form: objective {:.6}, E[W_T] {:.6}, std {:.6}",
        m.objective,
        m.expected,
        m.variance.sqrt()
    );
    Ok(())
}

fn mv_bounded(c: &Common) -> Result<()> {
    let levels = c.levels.unwrap_or(5);
    let solvers = match &c.solver {
        Some(s) => vec![s.parse()?],
        None => vec![SolverKind::Pcpt, SolverKind::Direct, SolverKind::Fixed(1.5)],
    };
    for solver in solvers {
        let mut spec = mv_bounded_study(levels, solver);
        if let Some(j) = c.policies {
            spec.ladder.iter_mut().for_each(|l| l.j = j);
        }
        let name = format!("mv_bounded_{}", solver.to_string().replace([':', '.'], "_"));
        report(&c.out, &name, &spec, &run_study(&spec)?)?;
    }
    Ok(())
}
