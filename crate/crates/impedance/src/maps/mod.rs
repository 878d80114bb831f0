//! Impedance-to-impedance maps as dense matrices on interface nodes.
//!
//! A map sends nodal samples of g on Γ_l to nodal samples of the trace
//! (ħD_{x₁} + ι)u on Γ_i. Norms are taken in the trapezoid-weighted discrete
//! L² on both sides, so the matrix itself stays nodal-to-nodal and the
//! weights are applied only when a norm is needed.

mod coherent;
mod norm;
mod projection;

pub use coherent::{coherent_state, cutoff, gaussian_tail, CoherentState, CUTOFF_TAIL_LIMIT};
pub use norm::{operator_norm, operator_norm_dense, NormEstimate, NormMethod, NORM_MAX_ITER, NORM_TOL};
pub use projection::{project_away_zero, projection_matrix, projection_multiplier, psi, PAD_FACTOR};

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::DMat;
use crate::solver::{
    build_system, snap_spacing, trace_values, trace_values_stored, BoundaryTrace, CellGeometry, Discretization, Edge, EdgeCondition,
    EdgeKind, Sign,
};
use crate::{Error, Result, C64};

/// Columns per block solve during assembly.
const ASSEMBLY_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// PML on Γ_t, Γ_b and Γ_r.
    Model1,
    /// (−ħD_{x₁}+1)u = 0 on Γ_r, PML on Γ_t and Γ_b.
    Model2,
    /// Homogeneous impedance on every edge but Γ_l.
    CanonicalAllImpedance,
}

impl Model {
    /// Tag used by the binary map format.
    pub fn tag(self) -> u32 {
        match self {
            Model::Model1 => 1,
            Model::Model2 => 2,
            Model::CanonicalAllImpedance => 3,
        }
    }

    pub fn from_tag(t: u32) -> Option<Model> {
        match t {
            1 => Some(Model::Model1),
            2 => Some(Model::Model2),
            3 => Some(Model::CanonicalAllImpedance),
            _ => None,
        }
    }

    /// Edge conditions with Γ_l left homogeneous; map columns put their
    /// data in through the right-hand side.
    pub fn conditions(self) -> Vec<EdgeCondition> {
        let (right, tb) = match self {
            Model::Model1 => (EdgeKind::PmlAbsorbing, EdgeKind::PmlAbsorbing),
            Model::Model2 => (EdgeKind::ImpedanceHomogeneous, EdgeKind::PmlAbsorbing),
            Model::CanonicalAllImpedance => (EdgeKind::ImpedanceHomogeneous, EdgeKind::ImpedanceHomogeneous),
        };
        vec![
            EdgeCondition::new(Edge::Left, EdgeKind::ImpedanceHomogeneous),
            EdgeCondition::new(Edge::Right, right),
            EdgeCondition::new(Edge::Top, tb.clone()),
            EdgeCondition::new(Edge::Bottom, tb),
        ]
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Model1 => "model1",
            Model::Model2 => "model2",
            Model::CanonicalAllImpedance => "canonical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub model: Model,
    pub geom: CellGeometry,
    pub iota: Sign,
    pub disc: Discretization,
}

impl MapSpec {
    pub fn new(model: Model, geom: CellGeometry, iota: Sign, disc: Discretization) -> Result<Self> {
        let s = Self { model, geom, iota, disc };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.geom.validate()?;
        self.disc.validate()?;
        if self.model != Model::Model1 && self.geom.d_r <= 0.0 {
            return Err(Error::InvalidGeometry(format!("{} needs d_r > 0 so that Γ_i is interior", self.model)));
        }
        Ok(())
    }

    /// Number of nodes and spacing of Γ_l (equal to those of Γ_i).
    pub fn interface(&self) -> Result<(usize, f64)> {
        let kinds = crate::solver::conditions_per_edge(&self.model.conditions())?;
        let grid = self.geom.box_spec().grid(&self.disc, &kinds)?;
        Ok((grid.rows(), grid.hy))
    }
}

/// Where a map matrix came from; carried into exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MapOrigin {
    Assembled(MapSpec),
    Composite { word: SignWord, k: f64 },
    Derived(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceMapMatrix {
    /// Rows: Γ_i nodes, columns: Γ_l nodes.
    pub entries: DMat,
    pub in_weights: Vec<f64>,
    pub out_weights: Vec<f64>,
    pub origin: MapOrigin,
}

impl ImpedanceMapMatrix {
    pub fn new(entries: DMat, in_weights: Vec<f64>, out_weights: Vec<f64>, origin: MapOrigin) -> Result<Self> {
        if entries.ncols() != in_weights.len() || entries.nrows() != out_weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix with {} output and {} input weights",
                entries.nrows(),
                entries.ncols(),
                out_weights.len(),
                in_weights.len()
            )));
        }
        if in_weights.iter().chain(&out_weights).any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(Self { entries, in_weights, out_weights, origin })
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn apply(&self, g: &BoundaryTrace) -> Result<BoundaryTrace> {
        if g.len() != self.cols() {
            return Err(Error::DimensionMismatch(format!("map takes {} samples, got {}", self.cols(), g.len())));
        }
        let out = &self.entries * nalgebra::DVector::from_column_slice(&g.samples);
        BoundaryTrace::new(out.as_slice().to_vec(), self.out_weights.clone(), "i")
    }

    /// ‖M g‖ / ‖g‖ in the weighted norms.
    pub fn ratio(&self, g: &BoundaryTrace) -> Result<f64> {
        let n = g.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("ratio of a zero trace".into()));
        }
        Ok(self.apply(g)?.norm() / n)
    }

    /// W_out^{1/2} M W_in^{−1/2}: its spectral norm is the operator norm.
    pub fn weighted(&self) -> DMat {
        let mut s = self.entries.clone();
        for (c, wi) in self.in_weights.iter().enumerate() {
            let f = 1.0 / wi.sqrt();
            for (r, wo) in self.out_weights.iter().enumerate() {
                s[(r, c)] *= wo.sqrt() * f;
            }
        }
        s
    }

    /// `next ∘ self`: self's output is fed to `next` as Γ_l data.
    pub fn then(&self, next: &ImpedanceMapMatrix) -> Result<ImpedanceMapMatrix> {
        same_weights(&self.out_weights, &next.in_weights)?;
        Ok(ImpedanceMapMatrix {
            entries: &next.entries * &self.entries,
            in_weights: self.in_weights.clone(),
            out_weights: next.out_weights.clone(),
            origin: MapOrigin::Derived("product".into()),
        })
    }

    /// M ∘ Π^k_λ on the input side.
    pub fn with_projection(&self, lambda: f64, k: f64) -> Result<ImpedanceMapMatrix> {
        let hy = spacing_of(&self.in_weights)?;
        let p = projection_matrix(self.cols(), hy, lambda, k)?;
        Ok(ImpedanceMapMatrix {
            entries: &self.entries * p,
            in_weights: self.in_weights.clone(),
            out_weights: self.out_weights.clone(),
            origin: MapOrigin::Derived(format!("projected lambda={lambda}")),
        })
    }

    pub fn norm(&self) -> NormEstimate {
        operator_norm(self)
    }
}

fn same_weights(a: &[f64], b: &[f64]) -> Result<()> {
    let ok = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "interface discretizations differ ({} vs {} nodes or unequal spacing)",
            a.len(),
            b.len()
        )))
    }
}

/// Uniform spacing recovered from trapezoid weights.
fn spacing_of(w: &[f64]) -> Result<f64> {
    match w.len() {
        0 | 1 => Err(Error::DimensionMismatch("need at least two interface nodes".into())),
        2 => Ok(2.0 * w[0]),
        _ => Ok(w[1]),
    }
}

/// Which rows of Γ_l and Γ_i a map acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterfaceRows {
    /// The physical segment [0, h].
    Physical,
    /// The segment continued through the top and bottom PML, as seen by a
    /// strip subdomain whose interfaces cross the layers.
    Stored,
}

/// Assembles the map column by column: one factorization, one block of
/// right-hand sides per chunk of Γ_l nodes.
pub fn assemble_map(spec: &MapSpec) -> Result<ImpedanceMapMatrix> {
    assemble_map_rows(spec, InterfaceRows::Physical)
}

pub fn assemble_map_rows(spec: &MapSpec, rows: InterfaceRows) -> Result<ImpedanceMapMatrix> {
    spec.validate()?;
    let sys = build_system(&spec.geom, &spec.disc, &spec.model.conditions())?;
    let fac = sys.factor()?;
    let grid = &sys.grid;
    let col = grid.column_of(spec.geom.d_l)?;
    let n = match rows {
        InterfaceRows::Physical => grid.rows(),
        InterfaceRows::Stored => grid.nj(),
    };
    let dim = sys.dim();
    // unit g at node j enters as G = −g
    let unit: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(-1.0, 0.0);
            e
        })
        .collect();
    let starts: Vec<usize> = (0..n).step_by(ASSEMBLY_CHUNK).collect();
    let blocks: Vec<Vec<Vec<C64>>> = starts
        .par_iter()
        .map(|&c0| -> Result<Vec<Vec<C64>>> {
            let c1 = (c0 + ASSEMBLY_CHUNK).min(n);
            let mut block = Vec::with_capacity(dim * (c1 - c0));
            for e in &unit[c0..c1] {
                match rows {
                    InterfaceRows::Physical => block.extend(sys.impedance_rhs(Edge::Left, e)?),
                    InterfaceRows::Stored => {
                        let mut b = vec![C64::new(0.0, 0.0); dim];
                        sys.add_impedance_rhs_stored(&mut b, Edge::Left, e)?;
                        block.extend(b);
                    }
                }
            }
            fac.lu.solve_block_in_place(&mut block, c1 - c0).map_err(|e| match e {
                Error::SolveFailure { k, reason } => {
                    Error::SolveFailure { k, reason: format!("columns {c0}..{c1}: {reason}") }
                }
                other => other,
            })?;
            block
                .chunks(dim)
                .map(|u| match rows {
                    InterfaceRows::Physical => trace_values(grid, sys.k, u, col, spec.iota),
                    InterfaceRows::Stored => trace_values_stored(grid, sys.k, u, col, spec.iota),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut entries = DMat::zeros(n, n);
    for (c, t) in blocks.into_iter().flatten().enumerate() {
        for (r, v) in t.into_iter().enumerate() {
            entries[(r, c)] = v;
        }
    }
    let w = match rows {
        InterfaceRows::Physical => grid.line_weights(),
        InterfaceRows::Stored => grid.stored_line_weights(),
    };
    ImpedanceMapMatrix::new(entries, w.clone(), w, MapOrigin::Assembled(spec.clone()))
}

/// (d_l, d_r) of the cells used for one sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideGeometry {
    pub d_l: f64,
    pub d_r: f64,
}

/// A word σ ∈ {+,−}ⁿ with per-sign cell geometries of common height h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignWord {
    pub signs: Vec<Sign>,
    pub h: f64,
    pub plus: SideGeometry,
    pub minus: SideGeometry,
}

impl SignWord {
    pub fn new(signs: Vec<Sign>, h: f64, plus: SideGeometry, minus: SideGeometry) -> Result<Self> {
        let w = Self { signs, h, plus, minus };
        w.validate()?;
        Ok(w)
    }

    /// Parses a word such as "+-+".
    pub fn parse(word: &str, h: f64, plus: SideGeometry, minus: SideGeometry) -> Result<Self> {
        let signs = word
            .chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' | '−' => Ok(Sign::Minus),
                _ => Err(Error::InvalidArgument(format!("bad sign {c:?} in word {word:?}"))),
            })
            .collect::<Result<_>>()?;
        Self::new(signs, h, plus, minus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signs.is_empty() {
            return Err(Error::InvalidArgument("sign word must be non-empty".into()));
        }
        for s in [self.plus, self.minus] {
            if !(s.d_l > 0.0 && s.d_r > 0.0 && self.h > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "word cells need h, d_l, d_r > 0; got h={}, d_l={}, d_r={}",
                    self.h, s.d_l, s.d_r
                )));
            }
        }
        Ok(())
    }

    pub fn side(&self, s: Sign) -> SideGeometry {
        match s {
            Sign::Plus => self.plus,
            Sign::Minus => self.minus,
        }
    }

    pub fn geometry(&self, s: Sign, k: f64) -> Result<CellGeometry> {
        let g = self.side(s);
        CellGeometry::new(self.h, g.d_l, g.d_r, k)
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

impl fmt::Display for SignWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.signs {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Interface spacing for a composite: the pinned `spacing_y` if set,
/// otherwise h snapped once at the target spacing.
pub fn interface_spacing(h: f64, k: f64, disc: &Discretization) -> Result<f64> {
    match disc.spacing_y {
        Some(hy) => Ok(hy),
        None => Ok(snap_spacing(&[h], disc.target_spacing(k))?.0),
    }
}

/// 𝓘^σ = 𝓘₂^{σ(n)} ⋯ 𝓘₂^{σ(1)}; the first letter acts first. Each distinct
/// sign is assembled once.
pub fn compose(word: &SignWord, k: f64, disc: &Discretization) -> Result<ImpedanceMapMatrix> {
    word.validate()?;
    let hy = interface_spacing(word.h, k, disc)?;
    let pinned = Discretization { spacing_y: Some(hy), ..disc.clone() };
    let mut cache: HashMap<Sign, ImpedanceMapMatrix> = HashMap::new();
    for &s in &word.signs {
        if !cache.contains_key(&s) {
            let spec = MapSpec::new(Model::Model2, word.geometry(s, k)?, s, pinned.clone())?;
            cache.insert(s, assemble_map(&spec)?);
        }
    }
    compose_from(word, k, &cache)
}

/// Product over a word from already assembled per-sign factors.
pub fn compose_from(word: &SignWord, k: f64, factors: &HashMap<Sign, ImpedanceMapMatrix>) -> Result<ImpedanceMapMatrix> {
    let get = |s: Sign| {
        factors.get(&s).ok_or_else(|| Error::InvalidArgument(format!("no factor for sign {s}")))
    };
    let mut acc = get(word.signs[0])?.clone();
    for &s in &word.signs[1..] {
        acc = acc.then(get(s)?)?;
    }
    acc.origin = MapOrigin::Composite { word: word.clone(), k };
    Ok(acc)
}
