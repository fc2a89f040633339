//! Concrete control problems.
//!
//! A problem supplies everything the solvers need: terminal data, the
//! per-control coefficients of the linear operator, control-independent boundary
//! conditions and the computational domain.

pub mod mv;
pub mod uv;

use crate::error::Result;
use crate::fd::{EdgeConditions, NodeCoefficients, OperatorCoefficients};
use crate::mesh::Mesh1D;
use crate::pcpt::Direction;

pub use mv::{MeanVarianceBounded, MeanVarianceUnbounded, MvParams, WealthScale};
pub use uv::{UncertainVolatility, UvParams};

/// `V_tau = opt_q L_q V` on a bounded one-dimensional domain, `tau` time-to-go.
pub trait HjbProblem: Sync {
    fn direction(&self) -> Direction;

    fn horizon(&self) -> f64;

    /// `V(x, 0)` in solver coordinates.
    fn terminal(&self, x: f64) -> f64;

    fn coefficients(&self, control: f64, x: f64) -> NodeCoefficients;

    fn edges(&self) -> EdgeConditions;

    /// Point at which the scalar result is reported, in solver coordinates.
    fn query_point(&self) -> f64;

    /// Domain used when all policies share one mesh.
    fn shared_domain(&self) -> (f64, f64);

    /// Domain of the mesh carrying the component for `control`.
    fn policy_domain(&self, _control: f64) -> (f64, f64) {
        self.shared_domain()
    }

    fn operator_coefficients(&self, control: f64, mesh: &Mesh1D) -> Result<OperatorCoefficients> {
        OperatorCoefficients::from_fn(mesh, |x| self.coefficients(control, x))
    }
}
