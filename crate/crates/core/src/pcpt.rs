//! Piecewise constant policy timestepping as a switching system.
//!
//! Each control `q_j` owns one component `u_j` of the system, possibly on its own
//! mesh. A timestep first couples the components explicitly,
//!
//! ```text
//! u_j^{n+1/2} = opt( u_j^n, opt_{k != j} ( interp_j(u_k^n) -/+ c ) )
//! ```
//!
//! and then advances every component independently with one implicit Euler step of
//! its own linear operator. With `c = 0` on a shared mesh this is the classical
//! piecewise constant policy method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{DiscreteOperator, EdgeConditions, ImplicitStepper};
use crate::interp::{interp_linear, transfer, InterpKind};
use crate::mesh::{Mesh1D, TimeGrid};
use crate::models::HjbProblem;

/// Whether the HJB takes the supremum or the infimum over controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

impl Direction {
    /// `a` strictly preferable to `b`.
    #[inline]
    pub fn improves(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Max => a > b,
            Direction::Min => a < b,
        }
    }

    /// Value of switching into a component worth `u`.
    #[inline]
    pub fn after_cost(self, u: f64, cost: f64) -> f64 {
        match self {
            Direction::Max => u - cost,
            Direction::Min => u + cost,
        }
    }

    pub fn worst(self) -> f64 {
        match self {
            Direction::Max => f64::NEG_INFINITY,
            Direction::Min => f64::INFINITY,
        }
    }
}

/// Finite, sorted set of control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    values: Vec<f64>,
    density: f64,
}

impl ControlSet {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidControlSet("empty control set".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidControlSet("non-finite control".into()));
        }
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidControlSet("duplicate control".into()));
        }
        let density = values
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(0.0, f64::max);
        Ok(Self { values, density })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest distance from a point of the convex hull to the nearest control.
    pub fn density(&self) -> f64 {
        self.density
    }
}

/// `count` equally spaced controls covering `[lo, hi]`, endpoints included.
pub fn discretize_control_set(lo: f64, hi: f64, count: usize) -> Result<ControlSet> {
    if hi.is_nan() || lo.is_nan() || hi < lo {
        return Err(Error::InvalidControlSet(format!("need lo <= hi, got [{lo}, {hi}]")));
    }
    match count {
        0 => Err(Error::InvalidControlSet("need at least one control".into())),
        1 if hi > lo => Err(Error::InvalidControlSet(
            "a single control cannot cover a nondegenerate interval".into(),
        )),
        1 => ControlSet::from_values(vec![lo]),
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            let mut values: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
            values[count - 1] = hi;
            let mut set = ControlSet::from_values(values)?;
            set.density = 0.5 * step;
            Ok(set)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshStrategy {
    SharedMesh,
    PerPolicyMeshes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingConfig {
    pub cost: f64,
    pub direction: Direction,
    pub interp: InterpKind,
    pub mesh_strategy: MeshStrategy,
}

impl SwitchingConfig {
    pub fn shared(direction: Direction) -> Self {
        Self {
            cost: 0.0,
            direction,
            interp: InterpKind::linear(),
            mesh_strategy: MeshStrategy::SharedMesh,
        }
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "switching cost must be finite and >= 0, got {}",
                self.cost
            )));
        }
        Ok(())
    }
}

/// Per-policy solution vectors at time level `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingState {
    pub values: Vec<Vec<f64>>,
    pub step: usize,
}

/// Coupled right-hand sides plus, per node, the component each value came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupled {
    pub values: Vec<Vec<f64>>,
    pub source: Vec<Vec<usize>>,
}

fn check_state(state: &SwitchingState, meshes: &[Mesh1D]) -> Result<()> {
    if state.values.len() != meshes.len() {
        return Err(Error::LengthMismatch {
            expected: meshes.len(),
            found: state.values.len(),
        });
    }
    for (u, m) in state.values.iter().zip(meshes) {
        if u.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                found: u.len(),
            });
        }
    }
    Ok(())
}

/// Explicit switching step: every component may jump to any other at cost `c`.
pub fn coupling_stage(
    state: &SwitchingState,
    meshes: &[Mesh1D],
    cfg: &SwitchingConfig,
) -> Result<Coupled> {
    cfg.validate()?;
    check_state(state, meshes)?;
    let shared = cfg.mesh_strategy == MeshStrategy::SharedMesh
        || meshes.windows(2).all(|w| w[0] == w[1]);
    if shared {
        Ok(couple_shared(&state.values, cfg))
    } else {
        couple_transferred(&state.values, meshes, cfg)
    }
}

/// Shared mesh: the best other component per node from the two best overall.
fn couple_shared(values: &[Vec<f64>], cfg: &SwitchingConfig) -> Coupled {
    let dir = cfg.direction;
    let count = values.len();
    let n = values[0].len();
    let mut out = values.to_vec();
    let mut source: Vec<Vec<usize>> = (0..count).map(|j| vec![j; n]).collect();
    if count < 2 {
        return Coupled { values: out, source };
    }
    for i in 0..n {
        let (mut first, mut second) = (usize::MAX, usize::MAX);
        for (k, u) in values.iter().enumerate() {
            let v = u[i];
            if first == usize::MAX || dir.improves(v, values[first][i]) {
                second = first;
                first = k;
            } else if second == usize::MAX || dir.improves(v, values[second][i]) {
                second = k;
            }
        }
        for j in 0..count {
            let k = if j == first { second } else { first };
            let candidate = dir.after_cost(values[k][i], cfg.cost);
            if dir.improves(candidate, values[j][i]) {
                out[j][i] = candidate;
                source[j][i] = k;
            }
        }
    }
    Coupled { values: out, source }
}

fn couple_transferred(
    values: &[Vec<f64>],
    meshes: &[Mesh1D],
    cfg: &SwitchingConfig,
) -> Result<Coupled> {
    let dir = cfg.direction;
    let count = values.len();
    let per_target: Vec<(Vec<f64>, Vec<usize>)> = (0..count)
        .into_par_iter()
        .map(|j| {
            let mut best = values[j].clone();
            let mut src = vec![j; best.len()];
            for k in (0..count).filter(|&k| k != j) {
                let moved = transfer(&meshes[k], &values[k], &meshes[j], &cfg.interp)?;
                for (i, v) in moved.into_iter().enumerate() {
                    let candidate = dir.after_cost(v, cfg.cost);
                    if dir.improves(candidate, best[i]) {
                        best[i] = candidate;
                        src[i] = k;
                    }
                }
            }
            Ok((best, src))
        })
        .collect::<Result<_>>()?;
    let (values, source) = per_target.into_iter().unzip();
    Ok(Coupled { values, source })
}

/// One component of the switching system: its control, mesh and implicit step.
#[derive(Debug, Clone)]
pub struct PolicyBlock {
    pub control: f64,
    pub mesh: Mesh1D,
    pub stepper: ImplicitStepper,
}

impl PolicyBlock {
    pub fn new(
        control: f64,
        mesh: Mesh1D,
        operator: &DiscreteOperator,
        edges: &EdgeConditions,
        dt: f64,
    ) -> Result<Self> {
        let stepper = ImplicitStepper::new(operator, &mesh, edges, dt)?;
        Ok(Self {
            control,
            mesh,
            stepper,
        })
    }
}

fn meshes_of(blocks: &[PolicyBlock]) -> Vec<Mesh1D> {
    blocks.iter().map(|b| b.mesh.clone()).collect()
}

fn solve_all(blocks: &[PolicyBlock], rhs: &[Vec<f64>], tau_new: f64) -> Result<Vec<Vec<f64>>> {
    blocks
        .par_iter()
        .zip(rhs.par_iter())
        .map(|(b, r)| b.stepper.step(r, tau_new))
        .collect()
}

/// Coupling followed by one implicit solve per component.
pub fn pcpt_step(
    state: &SwitchingState,
    blocks: &[PolicyBlock],
    tau_new: f64,
    cfg: &SwitchingConfig,
) -> Result<SwitchingState> {
    Ok(pcpt_step_traced(state, blocks, tau_new, cfg)?.0)
}

fn pcpt_step_traced(
    state: &SwitchingState,
    blocks: &[PolicyBlock],
    tau_new: f64,
    cfg: &SwitchingConfig,
) -> Result<(SwitchingState, Coupled)> {
    let coupled = coupling_stage(state, &meshes_of(blocks), cfg)?;
    let values = solve_all(blocks, &coupled.values, tau_new)?;
    Ok((
        SwitchingState {
            values,
            step: state.step + 1,
        },
        coupled,
    ))
}

/// A linear functional of the controlled path carried alongside the value, e.g.
/// `E[W_T]` under the policy the value function selects.
#[derive(Debug, Clone)]
pub struct Companion {
    pub initial: Vec<f64>,
    pub edges: EdgeConditions,
}

#[derive(Debug, Clone)]
pub struct PcptSolution {
    pub controls: ControlSet,
    pub meshes: Vec<Mesh1D>,
    pub state: SwitchingState,
    pub direction: Direction,
    pub companion: Option<Vec<Vec<f64>>>,
}

impl PcptSolution {
    /// Component `j` at `x` by linear interpolation on its mesh.
    pub fn value_at(&self, component: usize, x: f64) -> Result<f64> {
        let mesh = self.meshes.get(component).ok_or(Error::LengthMismatch {
            expected: self.meshes.len(),
            found: component + 1,
        })?;
        interp_linear(mesh, &self.state.values[component], x)
    }

    /// Best component at `x` without switching cost.
    pub fn envelope_at(&self, x: f64) -> Result<f64> {
        let mut best = self.direction.worst();
        for j in 0..self.meshes.len() {
            let v = self.value_at(j, x)?;
            if self.direction.improves(v, best) {
                best = v;
            }
        }
        Ok(best)
    }

    /// Companion quantity of the best component at `x`.
    pub fn companion_at(&self, x: f64) -> Result<Option<f64>> {
        let Some(comp) = &self.companion else {
            return Ok(None);
        };
        let j = self.best_component_at(x)?;
        Ok(Some(interp_linear(&self.meshes[j], &comp[j], x)?))
    }

    fn best_component_at(&self, x: f64) -> Result<usize> {
        let mut best = (0, self.value_at(0, x)?);
        for j in 1..self.meshes.len() {
            let v = self.value_at(j, x)?;
            if self.direction.improves(v, best.1) {
                best = (j, v);
            }
        }
        Ok(best.0)
    }

    /// Control of the best component at every node of the first mesh.
    pub fn policy(&self) -> Result<Vec<f64>> {
        self.meshes[0]
            .nodes()
            .iter()
            .map(|&x| Ok(self.controls.values()[self.best_component_at(x)?]))
            .collect()
    }
}

/// Builds the component meshes and implicit steppers for `problem`.
pub fn build_blocks(
    problem: &dyn HjbProblem,
    controls: &ControlSet,
    node_count: usize,
    dt: f64,
    strategy: MeshStrategy,
    edges: &EdgeConditions,
) -> Result<Vec<PolicyBlock>> {
    let shared = {
        let (lo, hi) = problem.shared_domain();
        Mesh1D::uniform(lo, hi, node_count)?
    };
    controls
        .values()
        .par_iter()
        .map(|&q| {
            let mesh = match strategy {
                MeshStrategy::SharedMesh => shared.clone(),
                MeshStrategy::PerPolicyMeshes => {
                    let (lo, hi) = problem.policy_domain(q);
                    Mesh1D::uniform(lo, hi, node_count)?
                }
            };
            let coeffs = problem.operator_coefficients(q, &mesh)?;
            let op = DiscreteOperator::assemble(&coeffs, &mesh)?;
            PolicyBlock::new(q, mesh, &op, edges, dt)
        })
        .collect()
}

/// Runs the switching system from the terminal data over the whole time grid.
pub fn solve_pcpt(
    problem: &dyn HjbProblem,
    controls: &ControlSet,
    node_count: usize,
    time: TimeGrid,
    cfg: &SwitchingConfig,
) -> Result<PcptSolution> {
    solve_pcpt_with(problem, controls, node_count, time, cfg, None)
}

/// As [`solve_pcpt`], also propagating `companion` under the selected policy.
///
/// The companion is only supported on a shared mesh.
pub fn solve_pcpt_with(
    problem: &dyn HjbProblem,
    controls: &ControlSet,
    node_count: usize,
    time: TimeGrid,
    cfg: &SwitchingConfig,
    companion: Option<Companion>,
) -> Result<PcptSolution> {
    cfg.validate()?;
    let dt = time.dt();
    let blocks = build_blocks(
        problem,
        controls,
        node_count,
        dt,
        cfg.mesh_strategy,
        &problem.edges(),
    )?;
    let meshes = meshes_of(&blocks);
    let mut state = SwitchingState {
        values: meshes
            .iter()
            .map(|m| m.nodes().iter().map(|&x| problem.terminal(x)).collect())
            .collect(),
        step: 0,
    };

    let mut tracked = match companion {
        None => None,
        Some(c) => {
            if cfg.mesh_strategy != MeshStrategy::SharedMesh {
                return Err(Error::InvalidConfig(
                    "companion propagation needs a shared mesh".into(),
                ));
            }
            if c.initial.len() != node_count {
                return Err(Error::LengthMismatch {
                    expected: node_count,
                    found: c.initial.len(),
                });
            }
            let steppers = blocks
                .iter()
                .map(|b| {
                    let coeffs = problem.operator_coefficients(b.control, &b.mesh)?;
                    let op = DiscreteOperator::assemble(&coeffs, &b.mesh)?;
                    PolicyBlock::new(b.control, b.mesh.clone(), &op, &c.edges, dt)
                })
                .collect::<Result<Vec<_>>>()?;
            Some((steppers, vec![c.initial; blocks.len()]))
        }
    };

    for n in 0..time.steps() {
        let tau_new = time.tau(n + 1);
        let (next, coupled) = pcpt_step_traced(&state, &blocks, tau_new, cfg)?;
        if let Some((steppers, values)) = tracked.as_mut() {
            let rhs: Vec<Vec<f64>> = coupled
                .source
                .iter()
                .map(|src| src.iter().enumerate().map(|(i, &k)| values[k][i]).collect())
                .collect();
            *values = solve_all(steppers, &rhs, tau_new)?;
        }
        state = next;
    }

    Ok(PcptSolution {
        controls: controls.clone(),
        meshes,
        state,
        direction: cfg.direction,
        companion: tracked.map(|(_, v)| v),
    })
}
