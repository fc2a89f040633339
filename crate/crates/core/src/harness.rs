//! Convergence studies: refinement ladders, increment/ratio tables, CSV output and
//! long-format plot data.
//!
//! Ladder levels use `N` for the number of spatial intervals (so `N + 1` nodes) and
//! `M` for the number of timesteps. `J` is the number of control values.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::howard::{solve_direct, HowardConfig};
use crate::interp::{InterpKind, InterpVariant, Routing};
use crate::mesh::{Mesh1D, TimeGrid};
use crate::models::mv::MvMoments;
use crate::models::{
    HjbProblem, MeanVarianceBounded, MeanVarianceUnbounded, MvParams, UncertainVolatility, UvParams,
};
use crate::pcpt::{
    discretize_control_set, solve_pcpt_with, Companion, ControlSet, MeshStrategy,
    PcptSolution, SwitchingConfig,
};

/// Reference value of the uncertain volatility butterfly at `(S0, 0)`.
pub const UV_REFERENCE: f64 = 1.67012;

/// Significant digits kept in tables and CSV files.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn compute_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs()
}

/// First-order extrapolation from two levels with halved `h` and `dt`.
pub fn richardson_extrapolate(last: f64, prev: f64) -> f64 {
    2.0 * last - prev
}

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Increments `V_k - V_{k-1}` and ratios `(V_{k-1} - V_{k-2}) / (V_k - V_{k-1})`.
///
/// A ratio near 2 signals first-order convergence under halving. Missing values
/// break the chain; a zero increment leaves the next ratio empty.
pub fn increments_and_ratios(values: &[Option<f64>]) -> Vec<(Option<f64>, Option<f64>)> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev_inc: Option<f64> = None;
    for k in 0..values.len() {
        let inc = match (k.checked_sub(1).and_then(|i| values[i]), values[k]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        let ratio = match (prev_inc, inc) {
            (Some(p), Some(i)) if i != 0.0 => Some(p / i),
            _ => None,
        };
        out.push((inc, ratio));
        prev_inc = inc;
    }
    out
}

/// Observed order `log(ratio) / log(refinement)` from the finest available ratio.
pub fn observed_order(ratio: f64, refinement: f64) -> f64 {
    ratio.abs().ln() / refinement.ln()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    /// Spatial intervals.
    pub n: usize,
    /// Timesteps.
    pub m: usize,
    /// Control values.
    pub j: usize,
    /// Switching cost.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub n: usize,
    pub m: usize,
    pub j: usize,
    pub c: f64,
    pub value: Option<f64>,
    pub error: Option<f64>,
    pub increment: Option<f64>,
    pub ratio: Option<f64>,
}

/// Rows for `values` at `levels`, rounded to [`SIGNIFICANT_DIGITS`].
pub fn build_table(
    levels: &[Level],
    values: &[Option<f64>],
    reference: Option<f64>,
) -> Result<Vec<ConvergenceRow>> {
    if levels.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: levels.len(),
            found: values.len(),
        });
    }
    let r = |x: Option<f64>| x.map(|v| round_sig(v, SIGNIFICANT_DIGITS));
    Ok(levels
        .iter()
        .zip(values)
        .zip(increments_and_ratios(values))
        .enumerate()
        .map(|(k, ((lv, &value), (increment, ratio)))| ConvergenceRow {
            level: k + 1,
            n: lv.n,
            m: lv.m,
            j: lv.j,
            c: lv.c,
            value: r(value),
            error: r(value.zip(reference).map(|(v, re)| compute_error(v, re))),
            increment: r(increment),
            ratio: r(ratio),
        })
        .collect())
}

pub const CSV_HEADER: [&str; 9] = [
    "level", "N", "M", "J", "c", "value", "error", "increment", "ratio",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| round_sig(v, SIGNIFICANT_DIGITS).to_string())
        .unwrap_or_default()
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidConfig(format!("bad number {s:?}")))
}

pub fn write_table<W: Write>(out: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.j.to_string(),
            cell(Some(r.c)),
            cell(r.value),
            cell(r.error),
            cell(r.increment),
            cell(r.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Vec<ConvergenceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidConfig("unexpected CSV header".into()));
    }
    let int = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer {s:?}")))
    };
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ConvergenceRow {
                level: int(&rec[0])?,
                n: int(&rec[1])?,
                m: int(&rec[2])?,
                j: int(&rec[3])?,
                c: parse_cell(&rec[4])?.unwrap_or(0.0),
                value: parse_cell(&rec[5])?,
                error: parse_cell(&rec[6])?,
                increment: parse_cell(&rec[7])?,
                ratio: parse_cell(&rec[8])?,
            })
        })
        .collect()
}

pub fn write_table_file(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    write_table(std::fs::File::create(path)?, rows)
}

pub fn read_table_file(path: &Path) -> Result<Vec<ConvergenceRow>> {
    read_table(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Uv,
    MvUnbounded,
    MvBounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Pcpt,
    Direct,
    /// A single control held fixed.
    Fixed(f64),
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcpt" => Ok(SolverKind::Pcpt),
            "direct" => Ok(SolverKind::Direct),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|q| q.parse().ok())
                .map(SolverKind::Fixed)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown solver {s:?}"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Pcpt => write!(f, "pcpt"),
            SolverKind::Direct => write!(f, "direct"),
            SolverKind::Fixed(q) => write!(f, "fixed:{q}"),
        }
    }
}

/// Switching cost per level: a constant, or `kappa * h^{4/3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostSpec {
    Fixed(f64),
    Schedule { kappa: f64 },
}

impl CostSpec {
    pub fn at(self, h: f64) -> f64 {
        match self {
            CostSpec::Fixed(c) => c,
            CostSpec::Schedule { kappa } => kappa * h.powf(4.0 / 3.0),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for CostSpec {
    type Err = Error;

    /// `0.1`, `1/40` or `schedule:<kappa>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad cost {s:?}"));
        let spec = match s.strip_prefix("schedule:") {
            Some(k) => CostSpec::Schedule {
                kappa: parse_number(k).ok_or_else(bad)?,
            },
            None => CostSpec::Fixed(parse_number(s).ok_or_else(bad)?),
        };
        let v = match spec {
            CostSpec::Fixed(c) => c,
            CostSpec::Schedule { kappa } => kappa,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(bad());
        }
        Ok(spec)
    }
}

/// Which number a PCPT solution reports at the query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    /// The component of the first control.
    FirstComponent,
    /// The best component.
    Envelope,
}

#[derive(Debug, Clone)]
pub struct StudySpec {
    pub model: ModelKind,
    pub solver: SolverKind,
    pub ladder: Vec<Level>,
    pub interp: InterpKind,
    pub mesh_strategy: MeshStrategy,
    pub extraction: Extraction,
    pub uv: UvParams,
    pub mv: MvParams,
    pub reference: Option<f64>,
    /// Propagate `E[W_T]` alongside the value (mean-variance PCPT on a shared mesh).
    pub track_mean: bool,
}

impl StudySpec {
    pub fn new(model: ModelKind, solver: SolverKind, ladder: Vec<Level>) -> Self {
        Self {
            model,
            solver,
            ladder,
            interp: InterpKind::linear(),
            mesh_strategy: MeshStrategy::SharedMesh,
            extraction: match model {
                ModelKind::Uv => Extraction::FirstComponent,
                _ => Extraction::Envelope,
            },
            uv: UvParams::default(),
            mv: MvParams::default(),
            reference: (model == ModelKind::Uv).then_some(UV_REFERENCE),
            track_mean: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::InvalidConfig("ladder is empty".into()));
        }
        if let Some(l) = self.ladder.iter().find(|l| l.n == 0 || l.m == 0 || l.j == 0) {
            return Err(Error::InvalidConfig(format!("N, M, J must be positive: {l:?}")));
        }
        if self.ladder.iter().any(|l| l.c.is_nan() || l.c < 0.0) {
            return Err(Error::InvalidConfig("switching cost must be >= 0".into()));
        }
        if self.solver != SolverKind::Pcpt && self.mesh_strategy != MeshStrategy::SharedMesh {
            return Err(Error::InvalidConfig(
                "per-policy meshes need the pcpt solver".into(),
            ));
        }
        if self.track_mean
            && (self.model != ModelKind::MvUnbounded || self.mesh_strategy != MeshStrategy::SharedMesh)
        {
            return Err(Error::InvalidConfig(
                "mean tracking is available for mv-unbounded on a shared mesh".into(),
            ));
        }
        match self.model {
            ModelKind::Uv => self.uv.validate(),
            _ => self.mv.validate(),
        }
    }

    fn problem(&self) -> Box<dyn HjbProblem> {
        match self.model {
            ModelKind::Uv => Box::new(UncertainVolatility::new(self.uv)),
            ModelKind::MvUnbounded => Box::new(MeanVarianceUnbounded::new(self.mv)),
            ModelKind::MvBounded => Box::new(MeanVarianceBounded::new(self.mv)),
        }
    }

    fn control_range(&self) -> (f64, f64) {
        match self.model {
            ModelKind::Uv => (self.uv.sigma_min, self.uv.sigma_max),
            ModelKind::MvUnbounded => (self.mv.q_lo, self.mv.q_hi),
            ModelKind::MvBounded => (0.0, self.mv.p_max),
        }
    }

    fn controls(&self, j: usize) -> Result<ControlSet> {
        match self.solver {
            SolverKind::Fixed(q) => ControlSet::from_values(vec![q]),
            _ => {
                let (lo, hi) = self.control_range();
                discretize_control_set(lo, hi, j)
            }
        }
    }

    /// Mesh spacing of the shared domain at `n` intervals.
    pub fn spacing(&self, n: usize) -> f64 {
        let (lo, hi) = self.problem().shared_domain();
        (hi - lo) / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelResult {
    pub value: f64,
    /// `E[W_T]` under the computed policy, when tracked.
    pub mean: Option<f64>,
    /// Largest number of policy iterations in any step (direct solver).
    pub max_iterations: Option<usize>,
    pub elapsed: Duration,
}

impl LevelResult {
    /// Mean-variance moments implied by the value and the tracked mean.
    pub fn moments(&self, gamma: f64) -> Option<MvMoments> {
        self.mean.map(|e| MvMoments::from_objective(self.value, e, gamma))
    }
}

fn extract(sol: &PcptSolution, x: f64, how: Extraction) -> Result<f64> {
    match how {
        Extraction::FirstComponent => sol.value_at(0, x),
        Extraction::Envelope => sol.envelope_at(x),
    }
}

/// Runs one level of `spec` end to end.
pub fn run_level(spec: &StudySpec, level: &Level) -> Result<LevelResult> {
    let start = Instant::now();
    let problem = spec.problem();
    let controls = spec.controls(level.j)?;
    let time = TimeGrid::new(problem.horizon(), level.m)?;
    let nodes = level.n + 1;
    let x = problem.query_point();
    let (value, mean, max_iterations) = match spec.solver {
        SolverKind::Direct => {
            let sol = solve_direct(problem.as_ref(), &controls, nodes, time, &HowardConfig::default())?;
            (sol.value_at(x)?, None, sol.iterations.iter().copied().max())
        }
        SolverKind::Pcpt | SolverKind::Fixed(_) => {
            let cfg = SwitchingConfig {
                cost: level.c,
                direction: problem.direction(),
                interp: spec.interp.clone(),
                mesh_strategy: spec.mesh_strategy,
            };
            let companion = if spec.track_mean {
                let mv = MeanVarianceUnbounded::new(spec.mv);
                let (lo, hi) = mv.shared_domain();
                Some(Companion {
                    initial: Mesh1D::uniform(lo, hi, nodes)?.nodes().to_vec(),
                    edges: mv.mean_wealth_edges(),
                })
            } else {
                None
            };
            let sol = solve_pcpt_with(problem.as_ref(), &controls, nodes, time, &cfg, companion)?;
            let value = extract(&sol, x, spec.extraction)?;
            (value, sol.companion_at(x)?, None)
        }
    };
    Ok(LevelResult {
        value,
        mean,
        max_iterations,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub results: Vec<Result<LevelResult>>,
}

impl StudyOutcome {
    pub fn values(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Values of the two finest successful levels extrapolated to the limit.
    pub fn extrapolated(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.value).collect();
        (v.len() >= 2).then(|| richardson_extrapolate(v[v.len() - 1], v[v.len() - 2]))
    }
}

/// Runs every level (concurrently) and tabulates the results in level order.
pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome> {
    spec.validate()?;
    let results: Vec<Result<LevelResult>> =
        spec.ladder.par_iter().map(|l| run_level(spec, l)).collect();
    let values: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().map(|x| x.value)).collect();
    let rows = build_table(&spec.ladder, &values, spec.reference)?;
    Ok(StudyOutcome { rows, results })
}

/// `levels` doublings of `(n0, m0)` with fixed `j` and cost.
pub fn doubling_ladder(n0: usize, m0: usize, levels: usize, j: usize, c: f64) -> Vec<Level> {
    (0..levels)
        .map(|k| Level {
            n: n0 << k,
            m: m0 << k,
            j,
            c,
        })
        .collect()
}

/// `ceil(5 * sqrt(2)^{k-1})` for `k = 1, 2, ...`: 5, 8, 10, 15, 20, 29, 40, 57, 80.
pub fn sqrt2_control_ladder(levels: usize) -> Vec<usize> {
    (0..levels)
        .map(|k| {
            let base = 5usize << (k / 2);
            if k % 2 == 0 {
                base
            } else {
                (base as f64 * std::f64::consts::SQRT_2).ceil() as usize
            }
        })
        .collect()
}

/// Uncertain volatility cost study: per-policy meshes, `N = 32 * 2^{k-1}`, `M = 512 * 2^{k-1}`.
pub fn uv_cost_study(cost: CostSpec, levels: usize, interp: InterpKind) -> StudySpec {
    let mut spec = StudySpec::new(ModelKind::Uv, SolverKind::Pcpt, Vec::new());
    spec.ladder = (0..levels)
        .map(|k| {
            let n = 32 << k;
            Level {
                n,
                m: 512 << k,
                j: 2,
                c: cost.at(spec.spacing(n)),
            }
        })
        .collect();
    spec.interp = interp;
    spec.mesh_strategy = MeshStrategy::PerPolicyMeshes;
    spec
}

/// Shared-mesh reference study for the uncertain volatility value.
pub fn uv_reference_study(levels: usize, solver: SolverKind) -> StudySpec {
    StudySpec::new(
        ModelKind::Uv,
        solver,
        doubling_ladder(64, 1024, levels, 2, 0.0),
    )
}

/// Control refinement on a fixed grid, `N = 480`, `M = 120`.
///
/// Level `k` uses `5 * 2^{k-1} + 1` control values: 6, 11, 21, ..., 1281.
pub fn mv_control_study(levels: usize) -> StudySpec {
    let ladder = (0..levels)
        .map(|k| Level {
            n: 480,
            m: 120,
            j: (5 << k) + 1,
            c: 0.0,
        })
        .collect();
    StudySpec::new(ModelKind::MvUnbounded, SolverKind::Pcpt, ladder)
}

/// Grid refinement with `j` equally spaced controls, `N = 480 * 2^{k-1}`, `M = 120 * 2^{k-1}`.
pub fn mv_grid_study(levels: usize, j: usize) -> StudySpec {
    let mut spec = StudySpec::new(
        ModelKind::MvUnbounded,
        SolverKind::Pcpt,
        doubling_ladder(480, 120, levels, j, 0.0),
    );
    spec.track_mean = true;
    spec
}

/// No-bankruptcy ladder: `N = 50 * 2^{k-1}`, `M = 800 * 2^{k-1}`, and
/// `J_k + 1` controls with `J_k = ceil(5 sqrt(2)^{k-1})`.
pub fn mv_bounded_study(levels: usize, solver: SolverKind) -> StudySpec {
    let js = sqrt2_control_ladder(levels);
    let ladder = (0..levels)
        .map(|k| Level {
            n: 50 << k,
            m: 800 << k,
            j: match solver {
                SolverKind::Fixed(_) => 1,
                _ => js[k] + 1,
            },
            c: 0.0,
        })
        .collect();
    StudySpec::new(ModelKind::MvBounded, solver, ladder)
}

/// One point of an error-versus-timestep sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub figure: String,
    pub series: String,
    pub h: f64,
    pub dt: f64,
    pub step_level: usize,
    pub value: f64,
    pub error: f64,
}

pub const PLOT_HEADER: [&str; 7] = ["figure", "series", "h", "dt", "m", "value", "error"];

pub fn write_plot_data<W: Write>(out: W, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for p in points {
        w.write_record([
            p.figure.clone(),
            p.series.clone(),
            cell(Some(p.h)),
            cell(Some(p.dt)),
            p.step_level.to_string(),
            cell(Some(p.value)),
            cell(Some(p.error)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Uncertain volatility solver variants compared in the error plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UvMethod {
    SharedMesh,
    Direct,
    Linear,
    LinearReference,
    Cubic,
    CubicReference,
}

impl UvMethod {
    pub const ALL: [UvMethod; 6] = [
        UvMethod::SharedMesh,
        UvMethod::Direct,
        UvMethod::Linear,
        UvMethod::LinearReference,
        UvMethod::Cubic,
        UvMethod::CubicReference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UvMethod::SharedMesh => "shared-mesh",
            UvMethod::Direct => "direct",
            UvMethod::Linear => "linear",
            UvMethod::LinearReference => "linear-reference",
            UvMethod::Cubic => "cubic",
            UvMethod::CubicReference => "cubic-reference",
        }
    }

    fn variant(self) -> InterpVariant {
        match self {
            UvMethod::Cubic | UvMethod::CubicReference => InterpVariant::LimitedCubicHermite,
            _ => InterpVariant::Linear,
        }
    }

    /// Study for this method with `n` intervals per mesh and cost `c`.
    pub fn spec(self, uv: UvParams, n: usize, steps: usize, c: f64) -> Result<StudySpec> {
        let solver = if self == UvMethod::Direct {
            SolverKind::Direct
        } else {
            SolverKind::Pcpt
        };
        let mut spec = StudySpec::new(ModelKind::Uv, solver, vec![Level { n, m: steps, j: 2, c }]);
        spec.uv = uv;
        let routing = match self {
            UvMethod::LinearReference | UvMethod::CubicReference => {
                let (lo, hi) = UncertainVolatility::new(uv).shared_domain();
                Routing::ViaReferenceMesh(Mesh1D::uniform(lo, hi, n + 1)?)
            }
            _ => Routing::Direct,
        };
        spec.interp = InterpKind {
            variant: self.variant(),
            routing,
        };
        if !matches!(self, UvMethod::SharedMesh | UvMethod::Direct) {
            spec.mesh_strategy = MeshStrategy::PerPolicyMeshes;
        }
        Ok(spec)
    }
}

/// Value at one `(h, dt)` point; every mesh gets `N = width / h` intervals, with the
/// width of the shared domain.
pub fn uv_sweep_point(method: UvMethod, uv: UvParams, h: f64, steps: usize, c: f64) -> Result<f64> {
    let (lo, hi) = UncertainVolatility::new(uv).shared_domain();
    let n = ((hi - lo) / h).round().max(2.0) as usize;
    let spec = method.spec(uv, n, steps, c)?;
    Ok(run_level(&spec, &spec.ladder[0])?.value)
}

/// Error sweeps over `dt = 2^{-3-m}` for every `h` in `hs` and `m < step_levels`.
pub fn uv_sweep(
    figure: &str,
    series: &str,
    method: UvMethod,
    uv: UvParams,
    hs: &[f64],
    step_levels: usize,
    c: f64,
) -> Result<Vec<PlotPoint>> {
    let grid: Vec<(f64, usize)> = hs
        .iter()
        .flat_map(|&h| (0..step_levels).map(move |m| (h, m)))
        .collect();
    grid.par_iter()
        .map(|&(h, m)| {
            let steps = 8usize << m;
            let value = uv_sweep_point(method, uv, h, steps, c)?;
            Ok(PlotPoint {
                figure: figure.into(),
                series: series.into(),
                h,
                dt: uv.t / steps as f64,
                step_level: m,
                value,
                error: compute_error(value, UV_REFERENCE),
            })
        })
        .collect()
}

/// Study configuration read from a TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: ModelKind,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default = "default_interp")]
    pub interp: String,
    #[serde(default = "default_routing")]
    pub routing: String,
    #[serde(default)]
    pub mesh_strategy: Option<MeshStrategy>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Spatial intervals at the coarsest level.
    pub n0: usize,
    /// Timesteps at the coarsest level.
    pub m0: usize,
    /// Control values at the coarsest level.
    #[serde(default = "default_j0")]
    pub j0: usize,
    /// `fixed`, `double` or `sqrt2`.
    #[serde(default = "default_j_rule")]
    pub j_rule: String,
    /// Count `j0` as intervals of the control range (one more value).
    #[serde(default)]
    pub j_intervals: bool,
    #[serde(default = "default_true")]
    pub refine_grid: bool,
    #[serde(default = "default_cost")]
    pub cost: String,
    #[serde(default)]
    pub reference: Option<f64>,
    #[serde(default)]
    pub track_mean: bool,
    #[serde(default)]
    pub uv: UvParams,
    #[serde(default)]
    pub mv: MvParams,
}

fn default_solver() -> String {
    "pcpt".into()
}
fn default_interp() -> String {
    "linear".into()
}
fn default_routing() -> String {
    "direct".into()
}
fn default_levels() -> usize {
    4
}
fn default_j0() -> usize {
    2
}
fn default_j_rule() -> String {
    "fixed".into()
}
fn default_true() -> bool {
    true
}
fn default_cost() -> String {
    "0".into()
}

pub fn parse_interp(variant: &str, routing: &str, reference: Option<Mesh1D>) -> Result<InterpKind> {
    let variant = match variant {
        "linear" => InterpVariant::Linear,
        "cubic" => InterpVariant::LimitedCubicHermite,
        other => return Err(Error::InvalidConfig(format!("unknown interp {other:?}"))),
    };
    let routing = match (routing, reference) {
        ("direct", _) => Routing::Direct,
        ("reference", Some(m)) => Routing::ViaReferenceMesh(m),
        ("reference", None) => {
            return Err(Error::InvalidConfig("reference routing needs a reference mesh".into()))
        }
        (other, _) => return Err(Error::InvalidConfig(format!("unknown routing {other:?}"))),
    };
    Ok(InterpKind { variant, routing })
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_spec(&self) -> Result<StudySpec> {
        let solver: SolverKind = self.solver.parse()?;
        let cost: CostSpec = self.cost.parse()?;
        let mut spec = StudySpec::new(self.model, solver, Vec::new());
        spec.uv = self.uv;
        spec.mv = self.mv;
        if let Some(r) = self.reference {
            spec.reference = Some(r);
        }
        spec.track_mean = self.track_mean;
        spec.mesh_strategy = self.mesh_strategy.unwrap_or(MeshStrategy::SharedMesh);
        let js: Vec<usize> = match self.j_rule.as_str() {
            "fixed" => vec![self.j0; self.levels],
            "double" => (0..self.levels).map(|k| self.j0 << k).collect(),
            "sqrt2" => (0..self.levels)
                .map(|k| (self.j0 as f64 * std::f64::consts::SQRT_2.powi(k as i32) - 1e-9).ceil() as usize)
                .collect(),
            other => return Err(Error::InvalidConfig(format!("unknown j_rule {other:?}"))),
        };
        let mut ladder = Vec::with_capacity(self.levels);
        for (k, j) in js.into_iter().enumerate() {
            let scale = if self.refine_grid { 1 << k } else { 1 };
            let n = self.n0 * scale;
            ladder.push(Level {
                n,
                m: self.m0 * scale,
                j: j + usize::from(self.j_intervals),
                c: cost.at(spec.spacing(n)),
            });
        }
        spec.ladder = ladder;
        let finest = spec.ladder.last().map(|l| l.n).unwrap_or(1);
        let (lo, hi) = spec.problem().shared_domain();
        spec.interp = parse_interp(&self.interp, &self.routing, Some(Mesh1D::uniform(lo, hi, finest + 1)?))?;
        spec.validate()?;
        Ok(spec)
    }
}
