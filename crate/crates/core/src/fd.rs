//! Positive-coefficient finite differences for
//! `L u = a u_xx + b u_x - r u + f` on a uniform mesh, and the implicit Euler step
//! `(I - dt L_h) u_new = u_old` solved with the Thomas algorithm.
//!
//! Central differences are used wherever both off-diagonal weights are nonnegative;
//! otherwise the drift is upwinded at that node. All assembled step matrices are
//! M-matrices, so the step is monotone and does not amplify the max norm.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;

/// Coefficients of the linear operator at a single node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeCoefficients {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub f: f64,
}

/// Per-node diffusion `a`, drift `b`, discount `r` and source `f` for one control.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub r: Vec<f64>,
    pub f: Vec<f64>,
}

impl OperatorCoefficients {
    pub fn new(a: Vec<f64>, b: Vec<f64>, r: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let n = a.len();
        for len in [b.len(), r.len(), f.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        for (node, &value) in a.iter().enumerate() {
            if value < 0.0 {
                return Err(Error::NegativeDiffusion { node, value });
            }
        }
        if a.iter().chain(&b).chain(&r).chain(&f).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite operator coefficient".into()));
        }
        Ok(Self { a, b, r, f })
    }

    /// Samples `coeff(x)` at every mesh node.
    pub fn from_fn(mesh: &Mesh1D, coeff: impl Fn(f64) -> NodeCoefficients) -> Result<Self> {
        let n = mesh.len();
        let (mut a, mut b, mut r, mut f) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for &x in mesh.nodes() {
            let c = coeff(x);
            a.push(c.a);
            b.push(c.b);
            r.push(c.r);
            f.push(c.f);
        }
        Self::new(a, b, r, f)
    }

    pub fn constant(n: usize, c: NodeCoefficients) -> Result<Self> {
        Self::new(vec![c.a; n], vec![c.b; n], vec![c.r; n], vec![c.f; n])
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn at(&self, i: usize) -> NodeCoefficients {
        NodeCoefficients {
            a: self.a[i],
            b: self.b[i],
            r: self.r[i],
            f: self.f[i],
        }
    }
}

/// Off-diagonal weights of one interior row of `L_h`; `diag = -(sub + sup)`
/// excludes the discount term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowWeights {
    pub sub: f64,
    pub diag: f64,
    pub sup: f64,
}

/// Stencil weights for diffusion `a` and drift `b` at spacing `h`.
pub fn row_weights(a: f64, b: f64, h: f64) -> Result<RowWeights> {
    if a < 0.0 {
        return Err(Error::NegativeDiffusion { node: 0, value: a });
    }
    let diffusion = a / (h * h);
    let half = b / (2.0 * h);
    let (sub, sup) = if diffusion - half >= 0.0 && diffusion + half >= 0.0 {
        (diffusion - half, diffusion + half)
    } else if b > 0.0 {
        (diffusion, diffusion + b / h)
    } else {
        (diffusion - b / h, diffusion)
    };
    Ok(RowWeights {
        sub,
        diag: -(sub + sup),
        sup,
    })
}

/// Row weights of interior node `i`.
pub fn assemble_row_weights(
    coeffs: &OperatorCoefficients,
    mesh: &Mesh1D,
    i: usize,
) -> Result<RowWeights> {
    if i == 0 || i + 1 >= mesh.len() {
        return Err(Error::InvalidMesh(format!("node {i} is not interior")));
    }
    row_weights(coeffs.a[i], coeffs.b[i], mesh.spacing())
        .map_err(|_| Error::NegativeDiffusion {
            node: i,
            value: coeffs.a[i],
        })
}

/// Time-dependent quadratic `alpha(tau) x^2 + beta(tau) x + delta(tau)`.
pub trait QuadraticProfile: Send + Sync + fmt::Debug {
    fn coefficients(&self, tau: f64) -> [f64; 3];

    fn value(&self, x: f64, tau: f64) -> f64 {
        let [alpha, beta, delta] = self.coefficients(tau);
        (alpha * x + beta) * x + delta
    }
}

#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    /// `u_tau = -rate * u` at the endpoint.
    DiscountOde { rate: f64 },
    /// `u_tau = drift * u_x`, one-sided difference taken from the interior.
    UpwindDriftOde { drift: f64 },
    /// Time-dependent Dirichlet value from a closed-form quadratic.
    AsymptoticQuadratic(Arc<dyn QuadraticProfile>),
}

impl BoundaryCondition {
    fn dirichlet_value(&self, x: f64, tau: f64) -> Option<f64> {
        match self {
            BoundaryCondition::Dirichlet(v) => Some(*v),
            BoundaryCondition::AsymptoticQuadratic(p) => Some(p.value(x, tau)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeConditions {
    pub lower: BoundaryCondition,
    pub upper: BoundaryCondition,
}

/// Interior stencils of `L_h` for one control on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    sub: Vec<f64>,
    sup: Vec<f64>,
    rate: Vec<f64>,
    source: Vec<f64>,
}

impl DiscreteOperator {
    pub fn assemble(coeffs: &OperatorCoefficients, mesh: &Mesh1D) -> Result<Self> {
        let n = mesh.len();
        if coeffs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: coeffs.len(),
            });
        }
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 1..n - 1 {
            let w = assemble_row_weights(coeffs, mesh, i)?;
            sub[i] = w.sub;
            sup[i] = w.sup;
        }
        Ok(Self {
            sub,
            sup,
            rate: coeffs.r.clone(),
            source: coeffs.f.clone(),
        })
    }

    /// Operator whose row `i` is row `i` of `ops[choice[i]]`.
    pub fn mixed(ops: &[DiscreteOperator], choice: &[usize]) -> Result<Self> {
        let n = choice.len();
        if let Some(bad) = ops.iter().find(|op| op.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let pick = |f: fn(&DiscreteOperator) -> &Vec<f64>| -> Vec<f64> {
            choice.iter().enumerate().map(|(i, &k)| f(&ops[k])[i]).collect()
        };
        Ok(Self {
            sub: pick(|o| &o.sub),
            sup: pick(|o| &o.sup),
            rate: pick(|o| &o.rate),
            source: pick(|o| &o.source),
        })
    }

    pub fn len(&self) -> usize {
        self.sub.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub.is_empty()
    }

    pub fn weights(&self, i: usize) -> (f64, f64) {
        (self.sub[i], self.sup[i])
    }

    /// `(L_h u)_i` at an interior node.
    #[inline]
    pub fn apply_at(&self, u: &[f64], i: usize) -> f64 {
        self.sub[i] * (u[i - 1] - u[i]) + self.sup[i] * (u[i + 1] - u[i]) - self.rate[i] * u[i]
            + self.source[i]
    }

    /// `L_h u` on interior nodes; the endpoint entries are zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = self.apply_at(u, i);
        }
        out
    }
}

/// Sub-, main- and super-diagonal plus right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    fn check(&self) -> Result<usize> {
        let n = self.diag.len();
        for len in [self.sub.len(), self.sup.len(), self.rhs.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if n == 0 {
            return Err(Error::InvalidConfig("empty tridiagonal system".into()));
        }
        Ok(n)
    }

    /// `A x - rhs`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i] - self.rhs[i];
                if i > 0 {
                    s += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Thomas algorithm. `sub[0]` and `sup[n - 1]` are ignored.
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    sys.check()?;
    let lu = TridiagonalLu::factor(&sys.sub, &sys.diag, &sys.sup)?;
    let mut x = vec![0.0; sys.diag.len()];
    lu.solve_into(&sys.rhs, &mut x);
    debug_assert!(
        max_abs(&sys.residual(&x)) <= 1e-10 * (max_abs(&sys.rhs) + 1.0),
        "tridiagonal residual too large"
    );
    Ok(x)
}

/// Thomas forward-elimination factors, reusable across right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalLu {
    sub: Vec<f64>,
    sup_scaled: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut sup_scaled = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = if i == 0 { diag[0] } else { diag[i] - sub[i] * prev };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                sup_scaled[i] = sup[i] * inv_pivot[i];
            }
            prev = sup_scaled[i];
        }
        Ok(Self {
            sub: sub.to_vec(),
            sup_scaled,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_into(&self, rhs: &[f64], x: &mut [f64]) {
        let n = self.inv_pivot.len();
        x[0] = rhs[0] * self.inv_pivot[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.sub[i] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.sup_scaled[i] * x[i + 1];
        }
    }
}

/// Matrix of `I - dt L_h` with boundary rows, ready for repeated implicit steps.
#[derive(Debug, Clone)]
pub struct ImplicitStepper {
    lu: TridiagonalLu,
    system: TridiagonalSystem,
    bc: EdgeConditions,
    source: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ImplicitStepper {
    pub fn new(op: &DiscreteOperator, mesh: &Mesh1D, bc: &EdgeConditions, dt: f64) -> Result<Self> {
        let n = mesh.len();
        if op.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: op.len(),
            });
        }
        let h = mesh.spacing();
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        for i in 1..n - 1 {
            sub[i] = -dt * op.sub[i];
            sup[i] = -dt * op.sup[i];
            diag[i] = 1.0 + dt * (op.sub[i] + op.sup[i] + op.rate[i]);
        }
        match &bc.lower {
            BoundaryCondition::DiscountOde { rate } => diag[0] = 1.0 + dt * rate,
            BoundaryCondition::UpwindDriftOde { drift } => {
                let w = dt * drift.max(0.0) / h;
                diag[0] = 1.0 + w;
                sup[0] = -w;
            }
            _ => {}
        }
        match &bc.upper {
            BoundaryCondition::DiscountOde { rate } => diag[n - 1] = 1.0 + dt * rate,
            BoundaryCondition::UpwindDriftOde { drift } => {
                let w = dt * (-drift).max(0.0) / h;
                diag[n - 1] = 1.0 + w;
                sub[n - 1] = -w;
            }
            _ => {}
        }
        let lu = TridiagonalLu::factor(&sub, &diag, &sup)?;
        let source = op.source.iter().map(|f| dt * f).collect();
        Ok(Self {
            lu,
            system: TridiagonalSystem {
                sub,
                diag,
                sup,
                rhs: Vec::new(),
            },
            bc: bc.clone(),
            source,
            lo: mesh.lo(),
            hi: mesh.hi(),
        })
    }

    /// The assembled system for right-hand side `rhs` at new time level `tau_new`.
    pub fn system(&self, rhs: &[f64], tau_new: f64) -> TridiagonalSystem {
        let mut sys = self.system.clone();
        sys.rhs = self.full_rhs(rhs, tau_new);
        sys
    }

    fn full_rhs(&self, rhs: &[f64], tau_new: f64) -> Vec<f64> {
        let n = rhs.len();
        let mut b: Vec<f64> = rhs.iter().zip(&self.source).map(|(u, s)| u + s).collect();
        b[0] = self
            .bc
            .lower
            .dirichlet_value(self.lo, tau_new)
            .unwrap_or(rhs[0]);
        b[n - 1] = self
            .bc
            .upper
            .dirichlet_value(self.hi, tau_new)
            .unwrap_or(rhs[n - 1]);
        b
    }

    pub fn step(&self, rhs: &[f64], tau_new: f64) -> Result<Vec<f64>> {
        let n = self.lu.len();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let b = self.full_rhs(rhs, tau_new);
        let mut x = vec![0.0; n];
        self.lu.solve_into(&b, &mut x);
        Ok(x)
    }
}

/// One implicit Euler step `(I - dt L_h) u_new = rhs + dt f` with boundary rows.
pub fn implicit_euler_step(
    coeffs: &OperatorCoefficients,
    mesh: &Mesh1D,
    bc: &EdgeConditions,
    dt: f64,
    tau_new: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let op = DiscreteOperator::assemble(coeffs, mesh)?;
    ImplicitStepper::new(&op, mesh, bc, dt)?.step(rhs, tau_new)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense Gaussian elimination with partial pivoting.
    pub(crate) fn dense_solve(sys: &TridiagonalSystem) -> Vec<f64> {
        let n = sys.diag.len();
        let mut m = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            m[i][i] = sys.diag[i];
            if i > 0 {
                m[i][i - 1] = sys.sub[i];
            }
            if i + 1 < n {
                m[i][i + 1] = sys.sup[i];
            }
            m[i][n] = sys.rhs[i];
        }
        for col in 0..n {
            let p = (col..n)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, p);
            for row in col + 1..n {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    fn discount_edges(rate: f64) -> EdgeConditions {
        EdgeConditions {
            lower: BoundaryCondition::DiscountOde { rate },
            upper: BoundaryCondition::DiscountOde { rate },
        }
    }

    #[test]
    fn central_weights_for_low_volatility() {
        let w = row_weights(0.045, 0.005, 0.1).unwrap();
        assert!((w.sub - 4.475).abs() < 1e-12);
        assert!((w.sup - 4.525).abs() < 1e-12);
        assert!((w.diag + 9.0).abs() < 1e-12);
    }

    #[test]
    fn pure_advection_upwinds() {
        let w = row_weights(0.0, 1.0, 0.1).unwrap();
        assert_eq!(w.sub, 0.0);
        assert!((w.sup - 10.0).abs() < 1e-12);
        let w = row_weights(0.0, -1.0, 0.1).unwrap();
        assert!((w.sub - 10.0).abs() < 1e-12);
        assert_eq!(w.sup, 0.0);
        let w = row_weights(0.0, 0.0, 0.1).unwrap();
        assert_eq!((w.sub, w.diag, w.sup), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_diffusion_rejected() {
        assert!(row_weights(-1e-3, 0.0, 0.1).is_err());
        assert!(matches!(
            OperatorCoefficients::new(vec![0.1, -0.2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]),
            Err(Error::NegativeDiffusion { node: 1, .. })
        ));
    }

    #[test]
    fn zero_operator_is_identity() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 9).unwrap();
        let coeffs = OperatorCoefficients::constant(9, NodeCoefficients::default()).unwrap();
        let rhs: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let out = implicit_euler_step(&coeffs, &mesh, &discount_edges(0.0), 0.1, 0.1, &rhs).unwrap();
        assert_eq!(out, rhs);
    }

    #[test]
    fn pure_discount_scales_constants() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 9).unwrap();
        let coeffs = OperatorCoefficients::constant(
            9,
            NodeCoefficients {
                r: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        let out =
            implicit_euler_step(&coeffs, &mesh, &discount_edges(0.05), 0.1, 0.1, &[2.0; 9]).unwrap();
        for v in out {
            assert!((v - 2.0 / 1.005).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_preserved_without_discount() {
        let mesh = Mesh1D::uniform(-1.0, 1.0, 21).unwrap();
        let coeffs = OperatorCoefficients::from_fn(&mesh, |x| NodeCoefficients {
            a: 0.3 + x * x,
            b: 2.0 * x - 0.5,
            r: 0.0,
            f: 0.0,
        })
        .unwrap();
        let edges = EdgeConditions {
            lower: BoundaryCondition::Dirichlet(4.0),
            upper: BoundaryCondition::UpwindDriftOde { drift: -1.0 },
        };
        let out = implicit_euler_step(&coeffs, &mesh, &edges, 0.05, 0.05, &[4.0; 21]).unwrap();
        for v in out {
            assert!((v - 4.0).abs() < 1e-13);
        }
    }

    #[test]
    fn dirichlet_rows_take_boundary_values() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 11).unwrap();
        let coeffs = OperatorCoefficients::constant(
            11,
            NodeCoefficients {
                a: 0.5,
                b: 0.1,
                r: 0.05,
                f: 0.0,
            },
        )
        .unwrap();
        let edges = EdgeConditions {
            lower: BoundaryCondition::Dirichlet(-3.0),
            upper: BoundaryCondition::Dirichlet(7.0),
        };
        let out = implicit_euler_step(&coeffs, &mesh, &edges, 0.01, 0.01, &[1.0; 11]).unwrap();
        assert_eq!(out[0], -3.0);
        assert_eq!(out[10], 7.0);
    }

    #[test]
    fn upwind_drift_boundary_row() {
        // u_tau = pi u_x at the lower end, with u = 1 + x: exact forward difference
        let mesh = Mesh1D::uniform(0.0, 1.0, 11).unwrap();
        let coeffs = OperatorCoefficients::constant(11, NodeCoefficients::default()).unwrap();
        let edges = EdgeConditions {
            lower: BoundaryCondition::UpwindDriftOde { drift: 0.1 },
            upper: BoundaryCondition::DiscountOde { rate: 0.0 },
        };
        let rhs: Vec<f64> = mesh.nodes().iter().map(|x| 1.0 + x).collect();
        let out = implicit_euler_step(&coeffs, &mesh, &edges, 0.5, 0.5, &rhs).unwrap();
        // (1 + w) u0 - w u1 = 1 with u1 = 1.1, w = 0.5 * 0.1 / 0.1
        assert!((out[0] - (1.0 + 0.5 * 1.1) / 1.5).abs() < 1e-14);
        assert_eq!(&out[1..], &rhs[1..]);
    }

    #[test]
    fn source_enters_rhs() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 5).unwrap();
        let coeffs = OperatorCoefficients::constant(
            5,
            NodeCoefficients {
                f: 2.0,
                ..Default::default()
            },
        )
        .unwrap();
        let out = implicit_euler_step(&coeffs, &mesh, &discount_edges(0.0), 0.25, 0.25, &[1.0; 5])
            .unwrap();
        assert_eq!(out[2], 1.5);
    }

    #[test]
    fn identity_system() {
        let sys = TridiagonalSystem {
            sub: vec![0.0; 4],
            diag: vec![1.0; 4],
            sup: vec![0.0; 4],
            rhs: vec![1.0, -2.0, 3.0, 0.5],
        };
        assert_eq!(solve_tridiagonal(&sys).unwrap(), sys.rhs);
    }

    #[test]
    fn three_by_three_by_hand() {
        let sys = TridiagonalSystem {
            sub: vec![-1.0; 3],
            diag: vec![3.0; 3],
            sup: vec![-1.0; 3],
            rhs: vec![1.0; 3],
        };
        let x = solve_tridiagonal(&sys).unwrap();
        let expected = [4.0 / 7.0, 5.0 / 7.0, 4.0 / 7.0];
        for (a, b) in x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn size_mismatch_and_zero_pivot() {
        let sys = TridiagonalSystem {
            sub: vec![0.0; 2],
            diag: vec![1.0; 3],
            sup: vec![0.0; 3],
            rhs: vec![1.0; 3],
        };
        assert!(matches!(
            solve_tridiagonal(&sys),
            Err(Error::LengthMismatch { .. })
        ));
        let sys = TridiagonalSystem {
            sub: vec![0.0, 1.0],
            diag: vec![1.0, 1.0],
            sup: vec![1.0, 0.0],
            rhs: vec![1.0; 2],
        };
        assert!(matches!(solve_tridiagonal(&sys), Err(Error::ZeroPivot { row: 1 })));
    }

    /// Consistency error of the assembled operator against a smooth cubic.
    fn consistency_error(a: f64, b: f64, h: f64) -> f64 {
        let phi = |x: f64| x * x * x - 2.0 * x * x + 0.5 * x;
        let d1 = |x: f64| 3.0 * x * x - 4.0 * x + 0.5;
        let d2 = |x: f64| 6.0 * x - 4.0;
        let (r, f) = (0.07, 0.3);
        let x0 = 0.4;
        let mesh = Mesh1D::uniform(x0 - h, x0 + h, 3).unwrap();
        let coeffs = OperatorCoefficients::constant(3, NodeCoefficients { a, b, r, f }).unwrap();
        let op = DiscreteOperator::assemble(&coeffs, &mesh).unwrap();
        let u: Vec<f64> = mesh.nodes().iter().map(|&x| phi(x)).collect();
        let exact = a * d2(x0) + b * d1(x0) - r * phi(x0) + f;
        (op.apply_at(&u, 1) - exact).abs()
    }

    #[test]
    fn central_stencil_second_order() {
        let e: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| consistency_error(0.045, 0.005, h))
            .collect();
        assert!(e[0] / e[1] >= 1.9 && e[1] / e[2] >= 1.9, "{e:?}");
        assert!((e[1] / e[2] - 4.0).abs() < 0.1);
    }

    #[test]
    fn upwind_stencil_first_order() {
        let e: Vec<f64> = [0.01, 0.005, 0.0025]
            .iter()
            .map(|&h| consistency_error(1e-4, 2.0, h))
            .collect();
        assert!(e[0] / e[1] >= 1.9 && e[1] / e[2] >= 1.9, "{e:?}");
        assert!((e[1] / e[2] - 2.0).abs() < 0.2);
    }

    fn random_problem() -> impl Strategy<Value = (Vec<(f64, f64, f64)>, f64, Vec<f64>)> {
        (3usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec((0.0f64..2.0, -5.0f64..5.0, 0.0f64..0.5), n),
                0.001f64..1.0,
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    fn build(coeffs: &[(f64, f64, f64)]) -> (Mesh1D, OperatorCoefficients) {
        let n = coeffs.len();
        let mesh = Mesh1D::uniform(0.0, 1.0, n).unwrap();
        let c = OperatorCoefficients::new(
            coeffs.iter().map(|c| c.0).collect(),
            coeffs.iter().map(|c| c.1).collect(),
            coeffs.iter().map(|c| c.2).collect(),
            vec![0.0; n],
        )
        .unwrap();
        (mesh, c)
    }

    proptest! {
        #[test]
        fn assembled_rows_are_m_matrix_rows((coeffs, dt, rhs) in random_problem()) {
            let (mesh, c) = build(&coeffs);
            let op = DiscreteOperator::assemble(&c, &mesh).unwrap();
            let stepper = ImplicitStepper::new(&op, &mesh, &discount_edges(0.1), dt).unwrap();
            let sys = stepper.system(&rhs, dt);
            for i in 1..rhs.len() - 1 {
                prop_assert!(sys.sub[i] <= 0.0 && sys.sup[i] <= 0.0);
                prop_assert!(sys.diag[i] >= 1.0 + c.r[i] * dt - 1e-12);
                prop_assert!(sys.diag[i] + 1e-12 >= 1.0 + sys.sub[i].abs() + sys.sup[i].abs());
            }
        }

        #[test]
        fn implicit_step_is_monotone(
            (coeffs, dt, rhs) in random_problem(),
            bumps in prop::collection::vec(0.0f64..3.0, 30),
        ) {
            let (mesh, c) = build(&coeffs);
            let edges = EdgeConditions {
                lower: BoundaryCondition::UpwindDriftOde { drift: 0.3 },
                upper: BoundaryCondition::DiscountOde { rate: 0.05 },
            };
            let raised: Vec<f64> = rhs.iter().zip(&bumps).map(|(a, b)| a + b).collect();
            let base = implicit_euler_step(&c, &mesh, &edges, dt, dt, &rhs).unwrap();
            let up = implicit_euler_step(&c, &mesh, &edges, dt, dt, &raised).unwrap();
            for (a, b) in base.iter().zip(&up) {
                prop_assert!(*b >= *a - 1e-12);
            }
        }

        #[test]
        fn implicit_step_is_max_norm_stable(
            (coeffs, dt, rhs) in random_problem(),
            g in -10.0f64..10.0,
        ) {
            let (mesh, c) = build(&coeffs);
            let edges = EdgeConditions {
                lower: BoundaryCondition::Dirichlet(g),
                upper: BoundaryCondition::DiscountOde { rate: 0.0 },
            };
            let out = implicit_euler_step(&c, &mesh, &edges, dt, dt, &rhs).unwrap();
            let bound = max_abs(&rhs).max(g.abs());
            prop_assert!(max_abs(&out) <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn thomas_matches_dense_elimination(
            rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 2..40),
        ) {
            let sys = TridiagonalSystem {
                sub: rows.iter().map(|r| -r.0).collect(),
                sup: rows.iter().map(|r| -r.1).collect(),
                diag: rows.iter().map(|r| 1.0 + r.0 + r.1 + r.2).collect(),
                rhs: rows.iter().map(|r| r.3).collect(),
            };
            let x = solve_tridiagonal(&sys).unwrap();
            let y = dense_solve(&sys);
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
