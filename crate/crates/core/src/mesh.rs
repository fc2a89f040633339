//! Uniform spatial meshes and the constant-step time grid.

use crate::error::{Error, Result};

/// Sorted, uniformly spaced nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    lo: f64,
    hi: f64,
    spacing: f64,
}

impl Mesh1D {
    /// Builds `count` equally spaced nodes with both endpoints included.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidMesh(format!(
                "need finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if count < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 nodes, got {count}"
            )));
        }
        let spacing = (hi - lo) / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| lo + i as f64 * spacing).collect();
        nodes[count - 1] = hi;
        Ok(Self {
            nodes,
            lo,
            hi,
            spacing,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Adjacent node indices `(i, i + 1)` with `nodes[i] <= x <= nodes[i + 1]`.
    ///
    /// A point that coincides with a node returns that node twice. Points outside
    /// `[lo, hi]` are rejected; callers clamp explicitly.
    pub fn locate_bracket(&self, x: f64) -> Result<(usize, usize)> {
        if !self.contains(x) {
            return Err(Error::OutOfDomain {
                x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let last = self.nodes.len() - 1;
        let mut i = (((x - self.lo) / self.spacing).floor() as usize).min(last - 1);
        // index arithmetic can be off by one near a node
        if x < self.nodes[i] {
            i -= 1;
        } else if x > self.nodes[i + 1] {
            i += 1;
        }
        if x == self.nodes[i] {
            Ok((i, i))
        } else if x == self.nodes[i + 1] {
            Ok((i + 1, i + 1))
        } else {
            Ok((i, i + 1))
        }
    }
}

/// `steps` implicit timesteps of size `horizon / steps`, in time-to-go.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "time grid needs horizon > 0 and steps > 0, got ({horizon}, {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time-to-go after `n` steps.
    pub fn tau(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_interval_five_nodes() {
        let m = Mesh1D::uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.spacing(), 0.25);
    }

    #[test]
    fn wealth_domain_three_nodes() {
        let m = Mesh1D::uniform(-40.0, 40.0, 3).unwrap();
        assert_eq!(m.nodes(), &[-40.0, 0.0, 40.0]);
    }

    #[test]
    fn log_price_domain_spacing() {
        let c = 100f64.ln();
        let m = Mesh1D::uniform(c - 1.6, c + 1.6, 1025).unwrap();
        assert!((m.spacing() - 3.2 / 1024.0).abs() < 1e-15);
        assert_eq!(m.nodes()[0], c - 1.6);
        assert_eq!(*m.nodes().last().unwrap(), c + 1.6);
    }

    #[test]
    fn rejects_bad_meshes() {
        assert!(Mesh1D::uniform(0.0, 1.0, 2).is_err());
        assert!(Mesh1D::uniform(1.0, 1.0, 5).is_err());
        assert!(Mesh1D::uniform(2.0, 1.0, 5).is_err());
    }

    #[test]
    fn bracket_examples() {
        let m = Mesh1D::uniform(0.0, 2.0, 3).unwrap();
        assert_eq!(m.locate_bracket(0.5).unwrap(), (0, 1));
        assert_eq!(m.locate_bracket(1.0).unwrap(), (1, 1));
        assert_eq!(m.locate_bracket(2.0).unwrap(), (2, 2));
        assert_eq!(m.locate_bracket(0.0).unwrap(), (0, 0));
        assert!(matches!(
            m.locate_bracket(2.1),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(m.locate_bracket(-1e-12).is_err());
    }

    #[test]
    fn time_grid() {
        let t = TimeGrid::new(20.0, 480).unwrap();
        assert!((t.dt() * 480.0 - 20.0).abs() < 1e-12);
        assert_eq!(t.tau(480), 20.0);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    proptest! {
        #[test]
        fn bracket_always_contains_point(
            lo in -50.0f64..50.0,
            width in 0.01f64..100.0,
            count in 3usize..500,
            frac in 0.0f64..=1.0,
        ) {
            let m = Mesh1D::uniform(lo, lo + width, count).unwrap();
            let x = (lo + frac * width).min(m.hi());
            let (i, j) = m.locate_bracket(x).unwrap();
            prop_assert!(m.nodes()[i] <= x && x <= m.nodes()[j]);
            prop_assert!(j == i || j == i + 1);
        }

        #[test]
        fn uniform_spacing_is_constant(
            lo in -50.0f64..50.0,
            width in 0.01f64..100.0,
            count in 3usize..2000,
        ) {
            let m = Mesh1D::uniform(lo, lo + width, count).unwrap();
            let tol = 4.0 * f64::EPSILON * (m.hi().abs() + m.lo().abs()).max(width);
            for w in m.nodes().windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!(((w[1] - w[0]) - m.spacing()).abs() <= tol);
            }
        }
    }
}
