use serde::{Deserialize, Serialize};

use super::PerEdge;
use crate::linalg::trapezoid_weights;
use crate::{Error, Result};

/// Relative tolerance for "lies on a grid line".
const GRID_TOL: f64 = 1e-9;

/// Tensor grid of a rectangle [x0, x0 + nx·hx] × [0, ny·hy] plus stored PML
/// layers. Node (i, j) sits at (x0 + i·hx, j·hy); physical nodes have
/// 0 ≤ i ≤ nx, 0 ≤ j ≤ ny, PML nodes extend the index ranges by `pml` layers.
/// The node one layer beyond the last PML layer carries a homogeneous
/// Dirichlet condition and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub nx: usize,
    pub ny: usize,
    pub height: f64,
    pub pml: PerEdge<usize>,
    /// One row, no tangential derivatives (the 1-D strip mode).
    pub collapsed: bool,
}

impl Grid {
    pub fn i_min(&self) -> isize {
        -(self.pml.left as isize)
    }

    pub fn i_max(&self) -> isize {
        (self.nx + self.pml.right) as isize
    }

    pub fn j_min(&self) -> isize {
        if self.collapsed {
            0
        } else {
            -(self.pml.bottom as isize)
        }
    }

    pub fn j_max(&self) -> isize {
        if self.collapsed {
            0
        } else {
            (self.ny + self.pml.top) as isize
        }
    }

    /// Stored nodes along x.
    pub fn ni(&self) -> usize {
        (self.i_max() - self.i_min() + 1) as usize
    }

    /// Stored nodes along y.
    pub fn nj(&self) -> usize {
        (self.j_max() - self.j_min() + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.ni() * self.nj()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: isize, j: isize) -> bool {
        i >= self.i_min() && i <= self.i_max() && j >= self.j_min() && j <= self.j_max()
    }

    pub fn index(&self, i: isize, j: isize) -> usize {
        debug_assert!(self.contains(i, j), "node ({i}, {j}) outside grid");
        ((i - self.i_min()) as usize) * self.nj() + (j - self.j_min()) as usize
    }

    pub fn x(&self, i: isize) -> f64 {
        self.x0 + i as f64 * self.hx
    }

    pub fn y(&self, j: isize) -> f64 {
        j as f64 * self.hy
    }

    /// Number of physical nodes on a vertical line.
    pub fn rows(&self) -> usize {
        if self.collapsed {
            1
        } else {
            self.ny + 1
        }
    }

    /// Quadrature weights of a vertical line over the physical rows.
    pub fn line_weights(&self) -> Vec<f64> {
        if self.collapsed {
            vec![self.height]
        } else {
            trapezoid_weights(self.ny, self.hy)
        }
    }

    /// Weights of a vertical line over every stored row. A physical end row
    /// gets half a cell; rows continuing into a PML get a full cell, the
    /// Dirichlet node beyond the layer closing the line.
    pub fn stored_line_weights(&self) -> Vec<f64> {
        if self.collapsed {
            return vec![self.height];
        }
        let mut w = vec![self.hy; self.nj()];
        if self.pml.bottom == 0 {
            w[0] *= 0.5;
        }
        if self.pml.top == 0 {
            *w.last_mut().unwrap() *= 0.5;
        }
        w
    }

    /// Column index of the vertical grid line through `x`.
    pub fn column_of(&self, x: f64) -> Result<isize> {
        let t = (x - self.x0) / self.hx;
        let i = t.round();
        if (t - i).abs() > GRID_TOL * t.abs().max(1.0) * 10.0 {
            return Err(Error::SegmentOffGrid(format!("x = {x} is not a grid line (hx = {})", self.hx)));
        }
        let i = i as isize;
        if i < self.i_min() || i > self.i_max() {
            return Err(Error::SegmentOffGrid(format!("x = {x} outside the grid")));
        }
        Ok(i)
    }

    /// Node positions (x, y) of every stored node, in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        let (j0, j1) = (self.j_min(), self.j_max());
        (self.i_min()..=self.i_max()).flat_map(move |i| (j0..=j1).map(move |j| (i, j)))
    }
}

/// Grid spacing whose multiples hit every mark exactly.
///
/// `marks` are positive lengths measured from the left end; the largest one is
/// the total width. The cell count is searched outward from `width / h0`
/// so the returned spacing is the admissible one closest to `h0`.
pub fn snap_spacing(marks: &[f64], h0: f64) -> Result<(f64, Vec<usize>)> {
    let width = marks.iter().cloned().fold(0.0, f64::max);
    if !(width > 0.0) || !(h0 > 0.0) {
        return Err(Error::InvalidGeometry(format!("cannot grid width {width} with spacing {h0}")));
    }
    let n0 = ((width / h0).round() as usize).max(1);
    let fits = |n: usize| -> Option<Vec<usize>> {
        let hx = width / n as f64;
        let mut idx = Vec::with_capacity(marks.len());
        for &m in marks {
            let t = m / hx;
            let r = t.round();
            if (t - r).abs() > GRID_TOL * t.max(1.0) {
                return None;
            }
            idx.push(r as usize);
        }
        Some(idx)
    };
    for step in 0..=n0 {
        for n in [n0 + step, n0.wrapping_sub(step)] {
            if n == 0 || n > 2 * n0 || 2 * n < n0 {
                continue;
            }
            if let Some(idx) = fits(n) {
                let hx = width / n as f64;
                if step > 0 {
                    log::info!("grid snapped: {n} cells instead of {n0} (hx = {hx:.6e}, target {h0:.6e})");
                }
                return Ok((hx, idx));
            }
        }
    }
    Err(Error::InconsistentGeometry(format!(
        "no spacing within a factor 2 of {h0} puts all of {marks:?} on grid lines"
    )))
}

/// Indices of `marks` for an externally pinned spacing.
pub fn pinned_indices(marks: &[f64], hx: f64) -> Result<Vec<usize>> {
    marks
        .iter()
        .map(|&m| {
            let t = m / hx;
            let r = t.round();
            if (t - r).abs() > GRID_TOL * t.max(1.0) {
                Err(Error::InconsistentGeometry(format!("{m} is not a multiple of the pinned spacing {hx}")))
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}
