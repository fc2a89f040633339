//! Uncertain volatility butterfly in log-price coordinates `X = log S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{BoundaryCondition, EdgeConditions, NodeCoefficients};
use crate::models::HjbProblem;
use crate::pcpt::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UvParams {
    pub r: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
}

impl Default for UvParams {
    fn default() -> Self {
        Self {
            r: 0.05,
            sigma_min: 0.3,
            sigma_max: 0.5,
            t: 1.0,
            k: 100.0,
            k1: 80.0,
            k2: 120.0,
            s0: 100.0,
        }
    }
}

impl UvParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.sigma_min && self.sigma_min < self.sigma_max) {
            return Err(Error::InvalidConfig(
                "need 0 < sigma_min < sigma_max".into(),
            ));
        }
        if !(self.k1 < self.k && self.k < self.k2) {
            return Err(Error::InvalidConfig("need K1 < K < K2".into()));
        }
        if !(self.t > 0.0 && self.s0 > 0.0 && self.k1 > 0.0) {
            return Err(Error::InvalidConfig("need T, S0, K1 positive".into()));
        }
        Ok(())
    }

    pub fn sigma_mid(&self) -> f64 {
        0.5 * (self.sigma_min + self.sigma_max)
    }
}

pub fn uv_payoff(s: f64, p: &UvParams) -> f64 {
    (s - p.k1).max(0.0) - 2.0 * (s - p.k).max(0.0) + (s - p.k2).max(0.0)
}

/// `a = sigma^2 / 2`, `b = r - sigma^2 / 2`, discount `r`, no source.
pub fn uv_coefficients(sigma: f64, p: &UvParams) -> NodeCoefficients {
    let a = 0.5 * sigma * sigma;
    NodeCoefficients {
        a,
        b: p.r - a,
        r: p.r,
        f: 0.0,
    }
}

/// Pure discounting at `S_min`, zero at `S_max`.
pub fn uv_edges(p: &UvParams) -> EdgeConditions {
    EdgeConditions {
        lower: BoundaryCondition::DiscountOde { rate: p.r },
        upper: BoundaryCondition::Dirichlet(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainVolatility {
    pub params: UvParams,
    pub direction: Direction,
}

impl UncertainVolatility {
    /// Worst case (minimum) over the volatility band.
    pub fn new(params: UvParams) -> Self {
        Self {
            params,
            direction: Direction::Min,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    fn log_strike(&self) -> f64 {
        self.params.k.ln()
    }
}

impl HjbProblem for UncertainVolatility {
    fn direction(&self) -> Direction {
        self.direction
    }

    fn horizon(&self) -> f64 {
        self.params.t
    }

    fn terminal(&self, x: f64) -> f64 {
        uv_payoff(x.exp(), &self.params)
    }

    fn coefficients(&self, sigma: f64, _x: f64) -> NodeCoefficients {
        uv_coefficients(sigma, &self.params)
    }

    fn edges(&self) -> EdgeConditions {
        uv_edges(&self.params)
    }

    fn query_point(&self) -> f64 {
        self.params.s0.ln()
    }

    fn shared_domain(&self) -> (f64, f64) {
        let half = 4.0 * self.params.sigma_mid();
        (self.log_strike() - half, self.log_strike() + half)
    }

    fn policy_domain(&self, sigma: f64) -> (f64, f64) {
        (self.log_strike() - 4.0 * sigma, self.log_strike() + 4.0 * sigma)
    }
}
