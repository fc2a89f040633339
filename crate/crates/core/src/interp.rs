//! Mesh-to-mesh transfer.
//!
//! Every interpolant here is a convex combination of the two bracketing nodal
//! values: linear interpolation by construction, and the monotone cubic Hermite
//! interpolant after an unconditional clamp to the bracketing values. Points beyond
//! the source domain take the nearest endpoint value.

use crate::error::{Error, Result};
use crate::mesh::Mesh1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpVariant {
    Linear,
    LimitedCubicHermite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Routing {
    Direct,
    /// Every transfer goes source -> reference -> destination.
    ViaReferenceMesh(Mesh1D),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpKind {
    pub variant: InterpVariant,
    pub routing: Routing,
}

impl InterpKind {
    pub fn linear() -> Self {
        Self {
            variant: InterpVariant::Linear,
            routing: Routing::Direct,
        }
    }

    pub fn cubic() -> Self {
        Self {
            variant: InterpVariant::LimitedCubicHermite,
            routing: Routing::Direct,
        }
    }

    pub fn via(self, reference: Mesh1D) -> Self {
        Self {
            routing: Routing::ViaReferenceMesh(reference),
            ..self
        }
    }
}

impl Default for InterpKind {
    fn default() -> Self {
        Self::linear()
    }
}

fn check_len(src: &Mesh1D, values: &[f64]) -> Result<()> {
    if values.len() != src.len() {
        return Err(Error::LengthMismatch {
            expected: src.len(),
            found: values.len(),
        });
    }
    Ok(())
}

pub fn interp_linear(src: &Mesh1D, values: &[f64], x: f64) -> Result<f64> {
    check_len(src, values)?;
    let (i, j) = src.locate_bracket(x)?;
    Ok(linear_between(src, values, i, j, x))
}

#[inline]
fn linear_between(src: &Mesh1D, values: &[f64], i: usize, j: usize, x: f64) -> f64 {
    if i == j {
        return values[i];
    }
    let nodes = src.nodes();
    let w = (x - nodes[i]) / (nodes[j] - nodes[i]);
    (1.0 - w) * values[i] + w * values[j]
}

/// Monotone (Fritsch-Carlson) cubic Hermite value, clamped between the two
/// bracketing nodal values.
pub fn interp_limited_cubic(src: &Mesh1D, values: &[f64], x: f64) -> Result<f64> {
    check_len(src, values)?;
    let (i, j) = src.locate_bracket(x)?;
    Ok(cubic_between(src, values, i, j, x))
}

#[inline]
fn cubic_between(src: &Mesh1D, values: &[f64], i: usize, j: usize, x: f64) -> f64 {
    if i == j {
        return values[i];
    }
    let nodes = src.nodes();
    let h = nodes[j] - nodes[i];
    let t = (x - nodes[i]) / h;
    let d0 = node_slope(src, values, i);
    let d1 = node_slope(src, values, j);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * values[i] + h10 * h * d0 + h01 * values[j] + h11 * h * d1;
    let (lo, hi) = if values[i] <= values[j] {
        (values[i], values[j])
    } else {
        (values[j], values[i])
    };
    v.clamp(lo, hi)
}

#[inline]
fn secant(nodes: &[f64], values: &[f64], k: usize) -> f64 {
    (values[k + 1] - values[k]) / (nodes[k + 1] - nodes[k])
}

/// Fritsch-Carlson derivative estimate at node `k`.
fn node_slope(src: &Mesh1D, values: &[f64], k: usize) -> f64 {
    let nodes = src.nodes();
    let n = nodes.len();
    if k == 0 {
        endpoint_slope(
            nodes[1] - nodes[0],
            nodes[2] - nodes[1],
            secant(nodes, values, 0),
            secant(nodes, values, 1),
        )
    } else if k == n - 1 {
        endpoint_slope(
            nodes[n - 1] - nodes[n - 2],
            nodes[n - 2] - nodes[n - 3],
            secant(nodes, values, n - 2),
            secant(nodes, values, n - 3),
        )
    } else {
        let s0 = secant(nodes, values, k - 1);
        let s1 = secant(nodes, values, k);
        if s0 == 0.0 || s1 == 0.0 || (s0 > 0.0) != (s1 > 0.0) {
            return 0.0;
        }
        let h0 = nodes[k] - nodes[k - 1];
        let h1 = nodes[k + 1] - nodes[k];
        let w0 = 2.0 * h1 + h0;
        let w1 = h1 + 2.0 * h0;
        (w0 + w1) / (w0 / s0 + w1 / s1)
    }
}

/// One-sided three-point estimate, clipped to keep the end segment monotone.
fn endpoint_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d == 0.0 || s0 == 0.0 || (d > 0.0) != (s0 > 0.0) {
        0.0
    } else if (s0 > 0.0) != (s1 > 0.0) && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

fn transfer_direct(
    src: &Mesh1D,
    values: &[f64],
    dst: &Mesh1D,
    variant: InterpVariant,
) -> Result<Vec<f64>> {
    check_len(src, values)?;
    if src == dst {
        return Ok(values.to_vec());
    }
    let first = values[0];
    let last = values[values.len() - 1];
    dst.nodes()
        .iter()
        .map(|&x| {
            if x <= src.lo() {
                return Ok(first);
            }
            if x >= src.hi() {
                return Ok(last);
            }
            let (i, j) = src.locate_bracket(x)?;
            Ok(match variant {
                InterpVariant::Linear => linear_between(src, values, i, j, x),
                InterpVariant::LimitedCubicHermite => cubic_between(src, values, i, j, x),
            })
        })
        .collect()
}

/// Values of the interpolant of `values` (on `src`) at every node of `dst`.
pub fn transfer(src: &Mesh1D, values: &[f64], dst: &Mesh1D, kind: &InterpKind) -> Result<Vec<f64>> {
    match &kind.routing {
        Routing::Direct => transfer_direct(src, values, dst, kind.variant),
        Routing::ViaReferenceMesh(reference) => {
            let on_ref = transfer_direct(src, values, reference, kind.variant)?;
            transfer_direct(reference, &on_ref, dst, kind.variant)
        }
    }
}
