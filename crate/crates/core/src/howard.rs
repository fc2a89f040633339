//! Direct control: fully implicit Euler with the control optimized nodewise at the
//! new time level, solved by policy iteration.
//!
//! For the minimizing problem each step solves `max_q [(I - dt L_q) u - u_n] = 0`
//! row by row (the maximizing problem with `min`). Starting from policy index 0, a
//! policy-improvement step picks at every interior node the control that optimizes
//! `(L_q u)_i` over the whole control set. The linear systems are M-matrices, so
//! the iterates move monotonically towards the solution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fd::{DiscreteOperator, EdgeConditions, ImplicitStepper};
use crate::interp::interp_linear;
use crate::mesh::{Mesh1D, TimeGrid};
use crate::models::HjbProblem;
use crate::pcpt::{ControlSet, Direction};

/// Per-node control index at one time level.
pub type PolicyField = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowardConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for HowardConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HowardStep {
    pub values: Vec<f64>,
    pub policy: PolicyField,
    pub iterations: usize,
}

fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Control index optimizing `(L_q u)_i` at every interior node; ends keep index 0.
pub fn improve_policy(ops: &[DiscreteOperator], u: &[f64], direction: Direction) -> PolicyField {
    let n = u.len();
    (0..n)
        .into_par_iter()
        .with_min_len(512)
        .map(|i| {
            if i == 0 || i == n - 1 {
                return 0;
            }
            let mut best = (0, ops[0].apply_at(u, i));
            for (k, op) in ops.iter().enumerate().skip(1) {
                let v = op.apply_at(u, i);
                if direction.improves(v, best.1) {
                    best = (k, v);
                }
            }
            best.0
        })
        .collect()
}

/// One implicit step of `u_tau = opt_q L_q u` from `prev`.
///
/// `ops` holds one assembled operator per control on `mesh`.
#[allow(clippy::too_many_arguments)]
pub fn howard_step(
    prev: &[f64],
    ops: &[DiscreteOperator],
    mesh: &Mesh1D,
    edges: &EdgeConditions,
    dt: f64,
    tau_new: f64,
    direction: Direction,
    cfg: &HowardConfig,
) -> Result<HowardStep> {
    if ops.is_empty() {
        return Err(Error::InvalidControlSet("no controls".into()));
    }
    if cfg.tolerance.is_nan() || cfg.tolerance <= 0.0 {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let solve = |policy: &[usize]| -> Result<Vec<f64>> {
        let op = DiscreteOperator::mixed(ops, policy)?;
        ImplicitStepper::new(&op, mesh, edges, dt)?.step(prev, tau_new)
    };

    let mut policy = vec![0; mesh.len()];
    let mut u = solve(&policy)?;
    if ops.len() == 1 {
        return Ok(HowardStep {
            values: u,
            policy,
            iterations: 1,
        });
    }
    for iteration in 2..=cfg.max_iterations {
        policy = improve_policy(ops, &u, direction);
        let next = solve(&policy)?;
        let scale = sup_norm(&next).max(1.0);
        let slack = 1e-12 * scale;
        debug_assert!(
            next.iter().zip(&u).all(|(a, b)| match direction {
                Direction::Min => *a <= b + slack,
                Direction::Max => *a >= b - slack,
            }),
            "policy iteration moved against the optimization direction"
        );
        let change = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        if change <= cfg.tolerance * scale {
            return Ok(HowardStep {
                values: u,
                policy,
                iterations: iteration,
            });
        }
    }
    Err(Error::NotConverged {
        step: 0,
        iterations: cfg.max_iterations,
    })
}

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub controls: ControlSet,
    pub mesh: Mesh1D,
    pub values: Vec<f64>,
    pub policy: PolicyField,
    /// Policy iterations used at each timestep.
    pub iterations: Vec<usize>,
}

impl DirectSolution {
    pub fn value_at(&self, x: f64) -> Result<f64> {
        interp_linear(&self.mesh, &self.values, x)
    }

    /// Control values of the final policy field.
    pub fn policy_values(&self) -> Vec<f64> {
        self.policy.iter().map(|&k| self.controls.values()[k]).collect()
    }
}

/// Marches the direct-control scheme over the time grid on the shared domain.
pub fn solve_direct(
    problem: &dyn HjbProblem,
    controls: &ControlSet,
    node_count: usize,
    time: TimeGrid,
    cfg: &HowardConfig,
) -> Result<DirectSolution> {
    let (lo, hi) = problem.shared_domain();
    let mesh = Mesh1D::uniform(lo, hi, node_count)?;
    let ops = controls
        .values()
        .par_iter()
        .map(|&q| DiscreteOperator::assemble(&problem.operator_coefficients(q, &mesh)?, &mesh))
        .collect::<Result<Vec<_>>>()?;
    let edges = problem.edges();
    let direction = problem.direction();
    let mut values: Vec<f64> = mesh.nodes().iter().map(|&x| problem.terminal(x)).collect();
    let mut policy = vec![0; mesh.len()];
    let mut iterations = Vec::with_capacity(time.steps());
    for n in 0..time.steps() {
        let step = howard_step(
            &values,
            &ops,
            &mesh,
            &edges,
            time.dt(),
            time.tau(n + 1),
            direction,
            cfg,
        )
        .map_err(|e| match e {
            Error::NotConverged { iterations, .. } => Error::NotConverged {
                step: n + 1,
                iterations,
            },
            other => other,
        })?;
        values = step.values;
        policy = step.policy;
        iterations.push(step.iterations);
    }
    Ok(DirectSolution {
        controls: controls.clone(),
        mesh,
        values,
        policy,
        iterations,
    })
}
