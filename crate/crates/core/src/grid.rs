//! Uniform mass grid, discrete norms and the auxiliary linear operators.
//!
//! Cells `j = 0..n` carry `tau`, `a0`, `b`; nodes `i = 0..=n` carry `u`.
//! Cell `j` spans nodes `j` and `j + 1`. Grid functions are told apart by
//! length: `n` values live on cells (midpoint quadrature), `n + 1` values
//! live on nodes (trapezoid quadrature).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Cell,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassGrid {
    n: usize,
    dy: f64,
}

impl MassGrid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Err(Error::InvalidParam(format!(
                "grid needs at least {} cells, got {n}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self {
            n,
            dy: 1.0 / n as f64,
        })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.dy
    }

    #[inline]
    pub fn node_coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    #[inline]
    pub fn cell_coord(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n as f64
    }

    pub fn node_coords(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node_coord(i)).collect()
    }

    pub fn cell_coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.cell_coord(j)).collect()
    }

    pub fn locate(&self, f: &[f64]) -> Result<Location> {
        match f.len() {
            0 => Err(Error::EmptyInput),
            l if l == self.n => Ok(Location::Cell),
            l if l == self.n + 1 => Ok(Location::Node),
            l => Err(Error::LengthMismatch {
                expected: self.n,
                got: l,
            }),
        }
    }

    /// Quadrature of a grid function over (0, 1).
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        Ok(match self.locate(f)? {
            Location::Cell => f.iter().sum::<f64>() * self.dy,
            Location::Node => trapezoid(f) * self.dy,
        })
    }

    pub fn mean(&self, f: &[f64]) -> Result<f64> {
        self.integrate(f)
    }

    pub fn l2_norm(&self, f: &[f64]) -> Result<f64> {
        Ok(match self.locate(f)? {
            Location::Cell => (f.iter().map(|v| v * v).sum::<f64>() * self.dy).sqrt(),
            Location::Node => {
                let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
                (trapezoid(&sq) * self.dy).sqrt()
            }
        })
    }

    pub fn linf_norm(&self, f: &[f64]) -> Result<f64> {
        self.locate(f)?;
        Ok(f.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// Forward-difference H1 seminorm.
    pub fn h1_seminorm(&self, f: &[f64]) -> Result<f64> {
        self.locate(f)?;
        let s: f64 = f
            .windows(2)
            .map(|w| {
                let d = (w[1] - w[0]) / self.dy;
                d * d
            })
            .sum();
        Ok((s * self.dy).sqrt())
    }

    /// Full discrete H1 norm, `sqrt(|f|_L2^2 + |f|_H1^2)`.
    pub fn h1_norm(&self, f: &[f64]) -> Result<f64> {
        let l2 = self.l2_norm(f)?;
        let semi = self.h1_seminorm(f)?;
        Ok((l2 * l2 + semi * semi).sqrt())
    }

    /// Shift difference `f[j + k] - f[j]` of a cell function for `h = k dy`.
    /// The result has `n - k` entries.
    pub fn diff_quotient(&self, f: &[f64], h: f64) -> Result<Vec<f64>> {
        if self.locate(f)? != Location::Cell {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        let k = self.shift_cells(h)?;
        Ok(f.iter().zip(&f[k..]).map(|(a, b)| b - a).collect())
    }

    /// Converts a shift `h` into a whole number of cells.
    pub fn shift_cells(&self, h: f64) -> Result<usize> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParam(format!("shift h must lie in (0,1), got {h}")));
        }
        let k = (h / self.dy).round();
        if (k * self.dy - h).abs() > 1e-9 * self.dy || k < 1.0 || k as usize >= self.n {
            return Err(Error::InvalidParam(format!(
                "shift h = {h} is not a multiple of dy = {}",
                self.dy
            )));
        }
        Ok(k as usize)
    }

    /// Zero-mean antiderivative of a cell function, evaluated at nodes.
    ///
    /// `W[i] = sum_{j < i} w[j] dy`, then the trapezoid mean of `W` is removed.
    pub fn j_omega(&self, w: &[f64]) -> Result<Vec<f64>> {
        if self.locate(w)? != Location::Cell {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: w.len(),
            });
        }
        let mut acc = Vec::with_capacity(self.n + 1);
        let mut s = 0.0;
        acc.push(0.0);
        for v in w {
            s += v * self.dy;
            acc.push(s);
        }
        let mean = trapezoid(&acc) * self.dy;
        acc.iter_mut().for_each(|v| *v -= mean);
        Ok(acc)
    }

    /// Zero-mean antiderivative of a node function, evaluated at cell centres.
    ///
    /// Nodes are the midpoints between neighbouring cell centres, so
    /// `W[j] - W[j-1] = w[j] dy`. Any constant offset is removed by the mean.
    pub fn j_omega_dual(&self, w: &[f64]) -> Result<Vec<f64>> {
        if self.locate(w)? != Location::Node {
            return Err(Error::LengthMismatch {
                expected: self.n + 1,
                got: w.len(),
            });
        }
        let mut acc = Vec::with_capacity(self.n);
        let mut s = 0.5 * self.dy * 0.5 * (w[0] + w[1]);
        acc.push(s);
        for v in &w[1..self.n] {
            s += v * self.dy;
            acc.push(s);
        }
        let mean = acc.iter().sum::<f64>() * self.dy;
        acc.iter_mut().for_each(|v| *v -= mean);
        Ok(acc)
    }
}

fn trapezoid(f: &[f64]) -> f64 {
    let n = f.len();
    let inner: f64 = f[1..n - 1].iter().sum();
    inner + 0.5 * (f[0] + f[n - 1])
}
