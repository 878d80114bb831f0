//! Finite-difference Helmholtz solver on rectangles.
//!
//! Interior rows discretize ∂x((s_y/s_x)∂x u) + ∂y((s_x/s_y)∂y u) + k² s_x s_y u = −s_x s_y f
//! with the standard 5-point stencil; s_x, s_y are the PML stretches (1 in the
//! physical box).
//!
//! Impedance data on every edge is written in outgoing form with outward
//! normal n:
//!
//! ```text
//! (1/(i k_d)) ∂_n u − u = G
//! ```
//!
//! The ghost node outside the edge is eliminated with the centered difference
//! and the interior equation is kept on the boundary node. `k_d = k·√(1−(k h_n)²/4)`
//! is the wavenumber seen by the centered difference of a discrete plane
//! wave, which makes the condition exactly transparent for normally incident
//! discrete waves while staying second-order accurate. The interior traces use
//! the same `k_d`.

mod grid;
mod pml;

pub use grid::{pinned_indices, snap_spacing, Grid};
pub use pml::{AxisStretch, PmlProfile, DEFAULT_ROUND_TRIP};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{trapezoid_weights, weighted_norm, SparseBuilder, SparseLu, SparseMatrix};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// The rectangle D = (0, d_l + d_r) × (0, h) with Γ_l at x₁ = 0, Γ_i at
/// x₁ = d_l and Γ_r at x₁ = d_l + d_r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub h: f64,
    pub d_l: f64,
    pub d_r: f64,
    pub k: f64,
}

impl CellGeometry {
    pub fn new(h: f64, d_l: f64, d_r: f64, k: f64) -> Result<Self> {
        let g = Self { h, d_l, d_r, k };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.h, self.d_l, self.d_r, self.k].iter().all(|v| v.is_finite());
        if !finite || self.h <= 0.0 || self.d_l <= 0.0 || self.d_r < 0.0 || self.k <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "need h > 0, d_l > 0, d_r >= 0, k > 0; got h={}, d_l={}, d_r={}, k={}",
                self.h, self.d_l, self.d_r, self.k
            )));
        }
        Ok(())
    }

    pub fn hbar(&self) -> f64 {
        1.0 / self.k
    }

    pub fn width(&self) -> f64 {
        self.d_l + self.d_r
    }

    /// The box [0, d_l + d_r] × [0, h] with Γ_i as a grid mark.
    pub fn box_spec(&self) -> BoxSpec {
        BoxSpec { x0: 0.0, width: self.width(), height: self.h, k: self.k, marks: vec![self.d_l], collapsed: false }
    }

    /// arctan(h/d_l): the steepest ray from Γ_l that still reaches Γ_i.
    pub fn theta_max(&self) -> f64 {
        (self.h / self.d_l).atan()
    }
}

/// Impedance sign ι in (ħD_{x₁} + ι).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_value(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::InvalidArgument(format!("impedance sign must be +1 or -1, got {v}"))),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Top, Edge::Bottom];
}

/// One value per edge of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerEdge<T> {
    pub left: T,
    pub right: T,
    pub top: T,
    pub bottom: T,
}

impl<T> PerEdge<T> {
    pub fn uniform(v: T) -> Self
    where
        T: Clone,
    {
        Self { left: v.clone(), right: v.clone(), top: v.clone(), bottom: v }
    }

    pub fn get(&self, e: Edge) -> &T {
        match e {
            Edge::Left => &self.left,
            Edge::Right => &self.right,
            Edge::Top => &self.top,
            Edge::Bottom => &self.bottom,
        }
    }

    pub fn get_mut(&mut self, e: Edge) -> &mut T {
        match e {
            Edge::Left => &mut self.left,
            Edge::Right => &mut self.right,
            Edge::Top => &mut self.top,
            Edge::Bottom => &mut self.bottom,
        }
    }
}

/// Samples of a function on one grid line with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub samples: Vec<C64>,
    pub weights: Vec<f64>,
    pub segment: String,
}

impl BoundaryTrace {
    pub fn new(samples: Vec<C64>, weights: Vec<f64>, segment: impl Into<String>) -> Result<Self> {
        if samples.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples but {} weights",
                samples.len(),
                weights.len()
            )));
        }
        Ok(Self { samples, weights, segment: segment.into() })
    }

    /// Samples on a uniform line of `n_cells` cells of width `hy`.
    pub fn on_line(samples: Vec<C64>, hy: f64, segment: impl Into<String>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty trace".into()));
        }
        Self::new(samples, trapezoid_weights(n - 1, hy), segment)
    }

    pub fn zeros_like(other: &BoundaryTrace) -> Self {
        Self {
            samples: vec![C64::new(0.0, 0.0); other.len()],
            weights: other.weights.clone(),
            segment: other.segment.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Discrete L² norm √(Σ w|g|²).
    pub fn norm(&self) -> f64 {
        weighted_norm(&self.samples, &self.weights)
    }

    /// Σ w, the segment length.
    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * a).collect(),
            weights: self.weights.clone(),
            segment: self.segment.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeKind {
    /// Outgoing-form impedance data G (see the module docs), one sample per
    /// physical node of the edge.
    ImpedanceInhomogeneous(BoundaryTrace),
    ImpedanceHomogeneous,
    PmlAbsorbing,
}

impl EdgeKind {
    pub fn is_pml(&self) -> bool {
        matches!(self, EdgeKind::PmlAbsorbing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCondition {
    pub edge: Edge,
    pub kind: EdgeKind,
}

impl EdgeCondition {
    pub fn new(edge: Edge, kind: EdgeKind) -> Self {
        Self { edge, kind }
    }
}

/// Collects a condition list into one kind per edge.
pub fn conditions_per_edge(conditions: &[EdgeCondition]) -> Result<PerEdge<EdgeKind>> {
    let mut slots: PerEdge<Option<EdgeKind>> = PerEdge::default();
    for c in conditions {
        let slot = slots.get_mut(c.edge);
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!("edge {:?} given twice", c.edge)));
        }
        *slot = Some(c.kind.clone());
    }
    let take = |o: Option<EdgeKind>, e: Edge| o.ok_or_else(|| Error::InvalidArgument(format!("edge {e:?} has no condition")));
    Ok(PerEdge {
        left: take(slots.left, Edge::Left)?,
        right: take(slots.right, Edge::Right)?,
        top: take(slots.top, Edge::Top)?,
        bottom: take(slots.bottom, Edge::Bottom)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub points_per_wavelength: u32,
    /// PML widths in wavelengths, used on edges that are absorbing.
    pub pml_widths: PerEdge<f64>,
    /// Peak stretch σ₀; `None` picks the 1e-6 round-trip value.
    pub pml_strength: Option<f64>,
    pub pml_order: u32,
    /// Pinned hx. Shared interfaces across separately assembled systems
    /// need identical grids.
    pub spacing_x: Option<f64>,
    /// Pinned hy.
    pub spacing_y: Option<f64>,
}

impl Default for Discretization {
    fn default() -> Self {
        Self { points_per_wavelength: 20, pml_widths: PerEdge::uniform(1.0), pml_strength: None, pml_order: 2, spacing_x: None, spacing_y: None }
    }
}

impl Discretization {
    pub fn with_ppw(ppw: u32) -> Self {
        Self { points_per_wavelength: ppw, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_wavelength < 6 {
            return Err(Error::InvalidDiscretization(format!(
                "points_per_wavelength = {} < 6",
                self.points_per_wavelength
            )));
        }
        for e in Edge::ALL {
            let w = *self.pml_widths.get(e);
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidDiscretization(format!("PML width on {e:?} must be positive, got {w}")));
            }
        }
        if let Some(s) = self.pml_strength {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidDiscretization(format!("PML strength must be positive, got {s}")));
            }
        }
        if self.pml_order == 0 {
            return Err(Error::InvalidDiscretization("PML order must be >= 1".into()));
        }
        for h in [self.spacing_x, self.spacing_y].into_iter().flatten() {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidDiscretization(format!("pinned spacing must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Target spacing 2π/(k·ppw) before snapping.
    pub fn target_spacing(&self, k: f64) -> f64 {
        2.0 * PI / (k * self.points_per_wavelength as f64)
    }

    /// Number of stored PML layers on `edge` for spacing `h`.
    pub fn pml_layers(&self, edge: Edge, k: f64, h: f64) -> usize {
        let w = self.pml_widths.get(edge) * 2.0 * PI / k;
        ((w / h).round() as usize).max(1)
    }

    fn profile(&self, k: f64, layers: usize, h: f64) -> PmlProfile {
        let width = layers as f64 * h;
        let strength = self.pml_strength.unwrap_or_else(|| PmlProfile::default_strength(k, width, self.pml_order));
        PmlProfile { width, strength, order: self.pml_order }
    }
}

/// Centered-difference wavenumber k·√(1 − (k h)²/4).
pub fn discrete_wavenumber(k: f64, h: f64) -> f64 {
    let t = 1.0 - 0.25 * (k * h).powi(2);
    if t <= 0.0 {
        // below two points per wavelength; validated away upstream
        return f64::NAN;
    }
    k * t.sqrt()
}

/// Rectangle [x0, x0+width] × [0, height] to be gridded. `marks` are x
/// offsets (from x0) that must fall on grid lines.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    pub x0: f64,
    pub width: f64,
    pub height: f64,
    pub k: f64,
    pub marks: Vec<f64>,
    pub collapsed: bool,
}

impl BoxSpec {
    pub fn grid(&self, disc: &Discretization, kinds: &PerEdge<EdgeKind>) -> Result<Grid> {
        disc.validate()?;
        if !(self.width > 0.0 && self.height > 0.0 && self.k > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "box needs positive width, height and k; got {}, {}, {}",
                self.width, self.height, self.k
            )));
        }
        let mut marks = self.marks.clone();
        marks.push(self.width);
        let h0 = disc.target_spacing(self.k);
        let (hx, nx) = match disc.spacing_x {
            Some(hx) => (hx, *pinned_indices(&marks, hx)?.last().unwrap()),
            None => {
                let (hx, idx) = snap_spacing(&marks, h0)?;
                (hx, *idx.last().unwrap())
            }
        };
        let (hy, ny) = if self.collapsed {
            (hx, 0)
        } else {
            match disc.spacing_y {
                Some(hy) => (hy, pinned_indices(&[self.height], hy)?[0]),
                None => {
                    let (hy, iy) = snap_spacing(&[self.height], h0)?;
                    (hy, iy[0])
                }
            }
        };
        if self.k * hx.max(if self.collapsed { 0.0 } else { hy }) >= 2.0 {
            return Err(Error::InvalidDiscretization("fewer than π points per wavelength".into()));
        }
        let layers = |e: Edge, h: f64| if kinds.get(e).is_pml() { disc.pml_layers(e, self.k, h) } else { 0 };
        let pml = PerEdge {
            left: layers(Edge::Left, hx),
            right: layers(Edge::Right, hx),
            top: if self.collapsed { 0 } else { layers(Edge::Top, hy) },
            bottom: if self.collapsed { 0 } else { layers(Edge::Bottom, hy) },
        };
        Ok(Grid { hx, hy, x0: self.x0, nx, ny, height: self.height, pml, collapsed: self.collapsed })
    }
}

/// Assembled system A u = b on a grid.
pub struct LinearSystem {
    pub grid: Grid,
    pub matrix: SparseMatrix,
    pub rhs: Vec<C64>,
    pub k: f64,
    kinds: PerEdge<bool>,
    /// s_x s_y on every stored node.
    volume_scale: Vec<C64>,
    /// Ghost-elimination coefficient of each stored node along an impedance
    /// edge (1 in the physical box, the stretch ratio inside a PML).
    edge_scale: PerEdge<Vec<C64>>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// k_d for the normal direction of `edge`.
    pub fn edge_wavenumber(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => discrete_wavenumber(self.k, self.grid.hx),
            Edge::Top | Edge::Bottom => discrete_wavenumber(self.k, self.grid.hy),
        }
    }

    /// Physical nodes of an edge, in increasing coordinate order.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        let g = &self.grid;
        match edge {
            Edge::Left => (0..g.rows() as isize).map(|j| g.index(0, j)).collect(),
            Edge::Right => (0..g.rows() as isize).map(|j| g.index(g.nx as isize, j)).collect(),
            Edge::Top => (0..=g.nx as isize).map(|i| g.index(i, g.ny as isize)).collect(),
            Edge::Bottom => (0..=g.nx as isize).map(|i| g.index(i, 0)).collect(),
        }
    }

    /// Right-hand side produced by impedance data `data` on `edge` alone.
    pub fn impedance_rhs(&self, edge: Edge, data: &[C64]) -> Result<Vec<C64>> {
        let mut b = vec![C64::new(0.0, 0.0); self.dim()];
        self.add_impedance_rhs(&mut b, edge, data)?;
        Ok(b)
    }

    pub fn add_impedance_rhs(&self, b: &mut [C64], edge: Edge, data: &[C64]) -> Result<()> {
        if !*self.kinds.get(edge) {
            return Err(Error::InvalidArgument(format!("edge {edge:?} is not an impedance edge")));
        }
        let nodes = self.edge_nodes(edge);
        if nodes.len() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "edge {edge:?} has {} nodes, data has {}",
                nodes.len(),
                data.len()
            )));
        }
        let hn = match edge {
            Edge::Left | Edge::Right => self.grid.hx,
            Edge::Top | Edge::Bottom => self.grid.hy,
        };
        let c = -2.0 * I * self.edge_wavenumber(edge) / hn;
        for (p, g) in nodes.into_iter().zip(data) {
            b[p] += c * g;
        }
        Ok(())
    }

    /// Every stored node along an edge, PML rows included, in increasing
    /// coordinate order.
    pub fn edge_nodes_stored(&self, edge: Edge) -> Vec<usize> {
        let g = &self.grid;
        match edge {
            Edge::Left => (g.j_min()..=g.j_max()).map(|j| g.index(g.i_min(), j)).collect(),
            Edge::Right => (g.j_min()..=g.j_max()).map(|j| g.index(g.i_max(), j)).collect(),
            Edge::Top => (g.i_min()..=g.i_max()).map(|i| g.index(i, g.j_max())).collect(),
            Edge::Bottom => (g.i_min()..=g.i_max()).map(|i| g.index(i, g.j_min())).collect(),
        }
    }

    /// As [`add_impedance_rhs`](Self::add_impedance_rhs) with one sample per
    /// stored node of the edge. Inside a crossing PML the data is scaled
    /// like the eliminated ghost.
    pub fn add_impedance_rhs_stored(&self, b: &mut [C64], edge: Edge, data: &[C64]) -> Result<()> {
        if !*self.kinds.get(edge) {
            return Err(Error::InvalidArgument(format!("edge {edge:?} is not an impedance edge")));
        }
        let nodes = self.edge_nodes_stored(edge);
        let scale = self.edge_scale.get(edge);
        if nodes.len() != data.len() || scale.len() != nodes.len() {
            return Err(Error::DimensionMismatch(format!(
                "edge {edge:?} stores {} nodes, data has {}",
                nodes.len(),
                data.len()
            )));
        }
        let hn = match edge {
            Edge::Left | Edge::Right => self.grid.hx,
            Edge::Top | Edge::Bottom => self.grid.hy,
        };
        let c = -2.0 * I * self.edge_wavenumber(edge) / hn;
        for ((p, g), s) in nodes.into_iter().zip(data).zip(scale) {
            b[p] += c * s * g;
        }
        Ok(())
    }

    /// Right-hand side of a volume source f sampled on every stored node.
    pub fn source_rhs(&self, f: &[C64]) -> Result<Vec<C64>> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("source has {} samples, grid has {}", f.len(), self.dim())));
        }
        Ok(f.iter().zip(&self.volume_scale).map(|(f, s)| -s * f).collect())
    }

    pub fn factor(&self) -> Result<Factored> {
        let lu = self.matrix.factor(self.k)?;
        Ok(Factored { lu })
    }

    pub fn solve(&self) -> Result<ComplexField> {
        let u = self.factor()?.lu.solve(&self.rhs)?;
        Ok(ComplexField { grid: self.grid.clone(), k: self.k, values: u })
    }
}

/// A factorized system; solves are read-only and may run concurrently.
pub struct Factored {
    pub lu: SparseLu,
}

impl Factored {
    pub fn solve(&self, grid: &Grid, k: f64, rhs: &[C64]) -> Result<ComplexField> {
        Ok(ComplexField { grid: grid.clone(), k, values: self.lu.solve(rhs)? })
    }
}

/// Builds the system for a box with per-edge conditions and an optional
/// volume source sampled on every stored node.
pub fn build_box_system(
    spec: &BoxSpec,
    disc: &Discretization,
    conditions: &[EdgeCondition],
    source: Option<&[C64]>,
) -> Result<LinearSystem> {
    let kinds = conditions_per_edge(conditions)?;
    let grid = spec.grid(disc, &kinds)?;
    assemble(grid, spec.k, disc, &kinds, source)
}

/// Builds the cell system of the maps: Γ_i at x₁ = d_l is kept on a grid line.
pub fn build_system(geom: &CellGeometry, disc: &Discretization, conditions: &[EdgeCondition]) -> Result<LinearSystem> {
    geom.validate()?;
    let spec = geom.box_spec();
    build_box_system(&spec, disc, conditions, None)
}


fn assemble(grid: Grid, k: f64, disc: &Discretization, kinds: &PerEdge<EdgeKind>, source: Option<&[C64]>) -> Result<LinearSystem> {
    let n = grid.len();
    if let Some(f) = source {
        if f.len() != n {
            return Err(Error::DimensionMismatch(format!("source has {} samples, grid has {n}", f.len())));
        }
    }
    let (hx, hy) = (grid.hx, grid.hy);
    let prof = |h: f64, layers: usize| (layers > 0).then(|| disc.profile(k, layers, h));
    let sx = AxisStretch {
        lo: grid.x0,
        hi: grid.x(grid.nx as isize),
        below: prof(hx, grid.pml.left),
        above: prof(hx, grid.pml.right),
    };
    let sy = AxisStretch {
        lo: 0.0,
        hi: grid.height,
        below: prof(hy, grid.pml.bottom),
        above: prof(hy, grid.pml.top),
    };
    let kdx = discrete_wavenumber(k, hx);
    let kdy = discrete_wavenumber(k, hy);
    let imp = PerEdge {
        left: !kinds.left.is_pml(),
        right: !kinds.right.is_pml(),
        top: !kinds.top.is_pml(),
        bottom: !kinds.bottom.is_pml(),
    };

    let mut a = SparseBuilder::new(n);
    let mut rhs = vec![C64::new(0.0, 0.0); n];
    let mut volume_scale = Vec::with_capacity(n);
    let mut edge_scale: PerEdge<Vec<C64>> = PerEdge::default();
    let (ilo, ihi) = (grid.i_min(), grid.i_max());
    let (jlo, jhi) = (grid.j_min(), grid.j_max());
    for (i, j) in grid.nodes() {
        let p = grid.index(i, j);
        let (x, y) = (grid.x(i), grid.y(j));
        let sxi = sx.at(x);
        let syj = if grid.collapsed { C64::new(1.0, 0.0) } else { sy.at(y) };
        let mut diag = k * k * sxi * syj;

        // x direction
        let ar = syj / sx.at(x + 0.5 * hx);
        let al = syj / sx.at(x - 0.5 * hx);
        let on_left = i == ilo && imp.left;
        let on_right = i == ihi && imp.right;
        if on_left || on_right {
            // ghost elimination; s_x = 1 on an impedance edge
            let inner = if on_left { i + 1 } else { i - 1 };
            let c = if on_left { ar } else { al };
            edge_scale.get_mut(if on_left { Edge::Left } else { Edge::Right }).push(c);
            if on_left && on_right {
                return Err(Error::InvalidGeometry("box must be at least one cell wide".into()));
            }
            a.add(p, grid.index(inner, j), 2.0 * c / (hx * hx));
            diag += c * (-2.0 + 2.0 * I * hx * kdx) / (hx * hx);
        } else {
            diag -= (ar + al) / (hx * hx);
            if i < ihi {
                a.add(p, grid.index(i + 1, j), ar / (hx * hx));
            }
            if i > ilo {
                a.add(p, grid.index(i - 1, j), al / (hx * hx));
            }
        }

        // y direction
        if !grid.collapsed {
            let bu = sxi / sy.at(y + 0.5 * hy);
            let bd = sxi / sy.at(y - 0.5 * hy);
            let on_bottom = j == jlo && imp.bottom;
            let on_top = j == jhi && imp.top;
            if on_bottom || on_top {
                if on_bottom && on_top {
                    return Err(Error::InvalidGeometry("box must be at least one cell high".into()));
                }
                let inner = if on_bottom { j + 1 } else { j - 1 };
                let c = if on_bottom { bu } else { bd };
                edge_scale.get_mut(if on_bottom { Edge::Bottom } else { Edge::Top }).push(c);
                a.add(p, grid.index(i, inner), 2.0 * c / (hy * hy));
                diag += c * (-2.0 + 2.0 * I * hy * kdy) / (hy * hy);
            } else {
                diag -= (bu + bd) / (hy * hy);
                if j < jhi {
                    a.add(p, grid.index(i, j + 1), bu / (hy * hy));
                }
                if j > jlo {
                    a.add(p, grid.index(i, j - 1), bd / (hy * hy));
                }
            }
        }
        a.add(p, p, diag);
        volume_scale.push(sxi * syj);
        if let Some(f) = source {
            rhs[p] -= sxi * syj * f[p];
        }
    }
    let matrix = a.build()?;
    let mut sys = LinearSystem { grid, matrix, rhs, k, kinds: imp, volume_scale, edge_scale };
    for e in Edge::ALL {
        if let EdgeKind::ImpedanceInhomogeneous(data) = kinds.get(e) {
            if sys.grid.collapsed && matches!(e, Edge::Top | Edge::Bottom) {
                continue;
            }
            let mut b = std::mem::take(&mut sys.rhs);
            sys.add_impedance_rhs(&mut b, e, &data.samples)?;
            sys.rhs = b;
        }
    }
    Ok(sys)
}

/// Complex field on every stored node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub k: f64,
    pub values: Vec<C64>,
}

impl ComplexField {
    pub fn from_fn(grid: &Grid, k: f64, f: impl Fn(f64, f64) -> C64) -> Self {
        let values = grid.nodes().map(|(i, j)| f(grid.x(i), grid.y(j))).collect();
        Self { grid: grid.clone(), k, values }
    }

    pub fn at(&self, i: isize, j: isize) -> C64 {
        self.values[self.grid.index(i, j)]
    }

    /// Trapezoid-weighted L² norm over the physical box [x_a, x_b] × [0, h]
    /// (column indices inclusive).
    pub fn l2_norm_columns(&self, ia: isize, ib: isize) -> f64 {
        let g = &self.grid;
        let wy = g.line_weights();
        let mut s = 0.0;
        for i in ia..=ib {
            let wx = if i == ia || i == ib { 0.5 * g.hx } else { g.hx };
            for (j, w) in wy.iter().enumerate() {
                s += wx * w * self.at(i, j as isize).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn l2_norm_physical(&self) -> f64 {
        self.l2_norm_columns(0, self.grid.nx as isize)
    }
}

/// Model 1: (ħD_{x₁}+1)u = g on Γ_l, PML on Γ_t, Γ_b and Γ_r.
pub fn model1_conditions(g: &BoundaryTrace) -> Vec<EdgeCondition> {
    vec![
        EdgeCondition::new(Edge::Left, EdgeKind::ImpedanceInhomogeneous(g.scaled(C64::new(-1.0, 0.0)))),
        EdgeCondition::new(Edge::Right, EdgeKind::PmlAbsorbing),
        EdgeCondition::new(Edge::Top, EdgeKind::PmlAbsorbing),
        EdgeCondition::new(Edge::Bottom, EdgeKind::PmlAbsorbing),
    ]
}

/// Model 2: as Model 1 but (−ħD_{x₁}+1)u = 0 on Γ_r.
pub fn model2_conditions(g: &BoundaryTrace) -> Vec<EdgeCondition> {
    let mut c = model1_conditions(g);
    c[1] = EdgeCondition::new(Edge::Right, EdgeKind::ImpedanceHomogeneous);
    c
}

pub fn solve_model1(geom: &CellGeometry, disc: &Discretization, g: &BoundaryTrace) -> Result<ComplexField> {
    build_system(geom, disc, &model1_conditions(g))?.solve()
}

pub fn solve_model2(geom: &CellGeometry, disc: &Discretization, g: &BoundaryTrace) -> Result<ComplexField> {
    if geom.d_r <= 0.0 {
        return Err(Error::InvalidGeometry("Model 2 needs d_r > 0".into()));
    }
    build_system(geom, disc, &model2_conditions(g))?.solve()
}

/// General subdomain solve with a volume source (Δ + k²)u = −f.
pub fn solve_subdomain(
    spec: &BoxSpec,
    disc: &Discretization,
    conditions: &[EdgeCondition],
    source: Option<&[C64]>,
) -> Result<ComplexField> {
    build_box_system(spec, disc, conditions, source)?.solve()
}

/// Samples of (1/(i k_d)) ∂_{x₁}u + ι u on the vertical grid line through `x`.
pub fn trace(field: &ComplexField, x: f64, iota: Sign) -> Result<BoundaryTrace> {
    let i = field.grid.column_of(x)?;
    trace_at_column(field, i, iota)
}

pub fn trace_at_column(field: &ComplexField, i: isize, iota: Sign) -> Result<BoundaryTrace> {
    let samples = trace_values(&field.grid, field.k, &field.values, i, iota)?;
    BoundaryTrace::new(samples, field.grid.line_weights(), format!("x={:.9}", field.grid.x(i)))
}

/// Trace samples on column `i` of a raw solution vector laid out on `grid`.
pub fn trace_values(grid: &Grid, k: f64, values: &[C64], i: isize, iota: Sign) -> Result<Vec<C64>> {
    column_trace(grid, k, values, i, iota, 0, grid.rows() as isize - 1)
}

/// Trace samples on every stored row of column `i`, PML rows included.
pub fn trace_values_stored(grid: &Grid, k: f64, values: &[C64], i: isize, iota: Sign) -> Result<Vec<C64>> {
    column_trace(grid, k, values, i, iota, grid.j_min(), grid.j_max())
}

fn column_trace(grid: &Grid, k: f64, values: &[C64], i: isize, iota: Sign, j0: isize, j1: isize) -> Result<Vec<C64>> {
    if i <= grid.i_min() || i >= grid.i_max() {
        return Err(Error::SegmentOffGrid(format!("column {i} has no neighbours on both sides")));
    }
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} values on a grid of {}", values.len(), grid.len())));
    }
    let c = 1.0 / (I * discrete_wavenumber(k, grid.hx) * 2.0 * grid.hx);
    Ok((j0..=j1)
        .map(|j| c * (values[grid.index(i + 1, j)] - values[grid.index(i - 1, j)]) + iota.value() * values[grid.index(i, j)])
        .collect())
}

/// Relative reflected energy |R|² of a discrete plane wave meeting a PML edge
/// at `incidence` radians from the normal, with the layer the 2-D grid would
/// get at spacing `disc.target_spacing(k)`.
///
/// For a plane wave with tangential symbol k² sin²θ the 5-point problem
/// separates, leaving the one-row problem with wavenumber k cos θ and the same
/// stretch. That row is solved with transparent impedance data at the far end,
/// so everything other than the incident wave is reflection.
pub fn pml_reflection(k: f64, incidence: f64, disc: &Discretization) -> Result<f64> {
    let row = separated_row(k, incidence, disc)?;
    let (mut refl, mut inc) = (0.0, 0.0);
    for i in 0..=row.field.grid.nx as isize {
        let w = I * row.kappa * row.field.grid.x(i);
        refl += (row.field.at(i, 0) - w.exp()).norm_sqr();
        inc += 1.0;
    }
    Ok(refl / inc)
}

/// Relative physical L² error of the discrete solution on (0, ½)² with
/// impedance data taken from the exact field
/// e^{ik(x cos θ + y sin θ)} + r e^{ik(−x cos θ + y sin θ)}, r = (cos θ − 1)/(cos θ + 1).
pub fn manufactured_two_wave_error(k: f64, theta: f64, disc: &Discretization) -> Result<f64> {
    let geom = CellGeometry::new(0.5, 0.5, 0.0, k)?;
    let (c, s) = (theta.cos(), theta.sin());
    let r = (c - 1.0) / (c + 1.0);
    let waves = move |x: f64, y: f64| {
        (C64::from_polar(1.0, k * (c * x + s * y)), r * C64::from_polar(1.0, k * (-c * x + s * y)))
    };
    let exact = move |x: f64, y: f64| {
        let (a, b) = waves(x, y);
        a + b
    };
    let homogeneous: Vec<_> = Edge::ALL.iter().map(|&e| EdgeCondition::new(e, EdgeKind::ImpedanceHomogeneous)).collect();
    let grid = build_system(&geom, disc, &homogeneous)?.grid;
    let mut cond = Vec::with_capacity(4);
    for e in Edge::ALL {
        let (pts, normal, h): (Vec<(f64, f64)>, (f64, f64), f64) = match e {
            Edge::Left => ((0..=grid.ny).map(|j| (0.0, j as f64 * grid.hy)).collect(), (-1.0, 0.0), grid.hx),
            Edge::Right => ((0..=grid.ny).map(|j| (0.5, j as f64 * grid.hy)).collect(), (1.0, 0.0), grid.hx),
            Edge::Top => ((0..=grid.nx).map(|i| (i as f64 * grid.hx, 0.5)).collect(), (0.0, 1.0), grid.hy),
            Edge::Bottom => ((0..=grid.nx).map(|i| (i as f64 * grid.hx, 0.0)).collect(), (0.0, -1.0), grid.hy),
        };
        let kd = discrete_wavenumber(k, h);
        let samples: Vec<C64> = pts
            .iter()
            .map(|&(x, y)| {
                let (a, b) = waves(x, y);
                let (gx, gy) = (I * k * c * (a - b), I * k * s * (a + b));
                (gx * normal.0 + gy * normal.1) / (I * kd) - (a + b)
            })
            .collect();
        let w = vec![1.0; samples.len()];
        cond.push(EdgeCondition::new(e, EdgeKind::ImpedanceInhomogeneous(BoundaryTrace::new(samples, w, "edge")?)));
    }
    let u = build_system(&geom, disc, &cond)?.solve()?;
    let ex = ComplexField::from_fn(&u.grid, k, exact);
    let diff = ComplexField { grid: u.grid.clone(), k, values: u.values.iter().zip(&ex.values).map(|(a, b)| a - b).collect() };
    Ok(diff.l2_norm_physical() / ex.l2_norm_physical())
}

struct SeparatedRow {
    field: ComplexField,
    kappa: f64,
}

fn separated_row(k: f64, incidence: f64, disc: &Discretization) -> Result<SeparatedRow> {
    disc.validate()?;
    if !(0.0..PI / 2.0).contains(&incidence) {
        return Err(Error::InvalidArgument(format!("incidence {incidence} outside [0, π/2)")));
    }
    let h = disc.target_spacing(k);
    let layers = disc.pml_layers(Edge::Right, k, h);
    let profile = disc.profile(k, layers, h);
    let kn = k * incidence.cos();
    let cells = 2 * disc.points_per_wavelength;
    let mut row = Discretization { spacing_x: Some(h), pml_strength: Some(profile.strength), ..disc.clone() };
    // same number of layers when measured in wavelengths of kn
    row.pml_widths.right = layers as f64 * h * kn / (2.0 * PI);
    let spec = BoxSpec { x0: 0.0, width: cells as f64 * h, height: 1.0, k: kn, marks: vec![], collapsed: true };
    // the discrete incident wave has G = −2 exactly on the left edge
    let data = BoundaryTrace::new(vec![C64::new(-2.0, 0.0)], vec![1.0], "l")?;
    let cond = vec![
        EdgeCondition::new(Edge::Left, EdgeKind::ImpedanceInhomogeneous(data)),
        EdgeCondition::new(Edge::Right, EdgeKind::PmlAbsorbing),
        EdgeCondition::new(Edge::Top, EdgeKind::ImpedanceHomogeneous),
        EdgeCondition::new(Edge::Bottom, EdgeKind::ImpedanceHomogeneous),
    ];
    let field = solve_subdomain(&spec, &row, &cond, None)?;
    debug_assert_eq!(field.grid.pml.right, layers);
    Ok(SeparatedRow { field, kappa: 2.0 / h * (0.5 * kn * h).asin() })
}
