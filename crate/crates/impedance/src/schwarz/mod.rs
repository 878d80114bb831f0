//! Parallel overlapping Schwarz method with impedance transmission on strips.
//!
//! Transmission data is carried in the solver's outgoing form
//! G = (1/(i k_d)) ∂_n u − u with n the outward normal of the receiving
//! strip, on every stored row of the interface column (the rows inside a
//! top or bottom PML included, so the discrete global solution is an exact
//! fixed point). In unscaled form the data (1/i)∂_n u − k u is k_d·G.
//!
//! An interior strip end is an interface slot: slot (ℓ, −) is Γ_ℓ^−, the left
//! end of Ω_ℓ for ℓ ≥ 2, and slot (ℓ, +) is Γ_ℓ^+ for ℓ ≤ N−1.

mod decomposition;

pub use decomposition::{
    build_decomposition, build_decomposition_explicit, smoothstep, PartitionOfUnity, StripDecomposition,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{vec_norm, DMat};
use crate::solver::{
    discrete_wavenumber, pinned_indices, snap_spacing, trace_values_stored, BoxSpec, Discretization, Edge,
    EdgeCondition, EdgeKind, Factored, Grid, LinearSystem, Sign,
};
use crate::{Error, Result, C64};

/// Refinement steps of the power-norm estimate.
pub const POWER_REFINEMENT_STEPS: usize = 20;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Impedance data g on ∂Ω.
    ImpedanceExterior,
    /// PML beyond every edge of ∂Ω.
    OutgoingExterior,
}

impl Regime {
    fn exterior_kind(self) -> EdgeKind {
        match self {
            Regime::ImpedanceExterior => EdgeKind::ImpedanceHomogeneous,
            Regime::OutgoingExterior => EdgeKind::PmlAbsorbing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub subdomain: usize,
    pub side: Side,
}

/// Impedance data on every interface slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceDataVector {
    pub slots: Vec<Slot>,
    pub traces: Vec<Vec<C64>>,
    /// Quadrature weights of one interface column.
    pub weights: Vec<f64>,
    /// k_d of the normal direction; unscaled data is k_d·G.
    pub kd: f64,
}

impl ImpedanceDataVector {
    pub fn zeros(slots: Vec<Slot>, weights: Vec<f64>, kd: f64) -> Self {
        let traces = vec![vec![ZERO; weights.len()]; slots.len()];
        Self { slots, traces, weights, kd }
    }

    pub fn slot_index(&self, slot: Slot) -> Option<usize> {
        self.slots.iter().position(|s| *s == slot)
    }

    /// Flattened samples, slot by slot.
    pub fn flatten(&self) -> Vec<C64> {
        self.traces.concat()
    }

    pub fn with_flat(&self, flat: &[C64]) -> Result<Self> {
        let m = self.weights.len();
        if flat.len() != m * self.slots.len() {
            return Err(Error::DimensionMismatch(format!("{} samples for {} slots of {m}", flat.len(), self.slots.len())));
        }
        Ok(Self { traces: flat.chunks(m).map(|c| c.to_vec()).collect(), ..self.clone() })
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self { traces: self.traces.iter().map(|t| t.iter().map(|z| a * z).collect()).collect(), ..self.clone() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.slots != other.slots || self.weights.len() != other.weights.len() {
            return Err(Error::DimensionMismatch("data vectors on different layouts".into()));
        }
        let traces =
            self.traces.iter().zip(&other.traces).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        Ok(Self { traces, ..self.clone() })
    }

    /// ‖(1/i)∂_n v − k v‖ on one slot.
    pub fn slot_norm(&self, s: usize) -> f64 {
        self.kd * self.traces[s].iter().zip(&self.weights).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// √(Σ_ℓ ‖(1/i)∂_n v_ℓ − k v_ℓ‖²) over every interface slot.
pub fn error_norm(data: &ImpedanceDataVector) -> f64 {
    (0..data.slots.len()).map(|s| data.slot_norm(s).powi(2)).sum::<f64>().sqrt()
}

/// Impedance data g on the physical nodes of ∂Ω, in outgoing form.
/// `top` and `bottom` have one sample per global column 0..=nx.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExteriorData {
    pub left: Vec<C64>,
    pub right: Vec<C64>,
    pub top: Vec<C64>,
    pub bottom: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwarzConfig {
    pub k: f64,
    pub regime: Regime,
    pub disc: Discretization,
    /// One grid row without tangential terms: the 1-D strip.
    pub collapsed: bool,
}

struct Subdomain {
    /// Global column of local column 0.
    offset: isize,
    system: LinearSystem,
    factored: Factored,
    slots: Vec<(usize, Side)>,
}

/// A decomposition gridded at one wavenumber with every strip factorized.
pub struct SchwarzProblem {
    pub decomp: StripDecomposition,
    pub config: SchwarzConfig,
    pub grid: Grid,
    /// (A_ℓ, B_ℓ): strip ends as global column indices.
    pub ends: Vec<(isize, isize)>,
    pub pou: PartitionOfUnity,
    subs: Vec<Subdomain>,
    slots: Vec<Slot>,
    /// Global system with the same exterior conditions, built on demand.
    global: std::sync::OnceLock<(LinearSystem, Factored)>,
}

/// Per-strip fields of one iterate and the data each was solved with.
#[derive(Debug, Clone, PartialEq)]
pub struct SchwarzState {
    pub n: usize,
    pub regime: Regime,
    pub fields: Vec<Vec<C64>>,
    /// Transmission data the fields were solved with (or, for an initial
    /// global iterate, its own impedance data).
    pub data: ImpedanceDataVector,
    /// Σ_ℓ χ_ℓ u_ℓ on the global grid.
    pub glued: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub n: usize,
    pub error_norm: f64,
    pub error_l2: f64,
    pub per_subdomain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNormEstimate {
    pub m: usize,
    pub estimate: f64,
    /// Data attaining the estimate, unit norm.
    pub data: ImpedanceDataVector,
    pub trials: usize,
}

impl SchwarzProblem {
    pub fn new(decomp: StripDecomposition, config: SchwarzConfig) -> Result<Self> {
        decomp.validate()?;
        config.disc.validate()?;
        let k = config.k;
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("k must be positive, got {k}")));
        }
        let marks = decomp.marks();
        let hx = match config.disc.spacing_x {
            Some(hx) => {
                pinned_indices(&marks, hx)?;
                hx
            }
            None => snap_spacing(&marks, config.disc.target_spacing(k))?.0,
        };
        let mut disc = config.disc.clone();
        disc.spacing_x = Some(hx);
        if !config.collapsed && disc.spacing_y.is_none() {
            disc.spacing_y = Some(snap_spacing(&[decomp.height], disc.target_spacing(k))?.0);
        }
        let ends: Vec<(isize, isize)> = decomp
            .bounds
            .iter()
            .map(|&(a, b)| ((a / hx).round() as isize, (b / hx).round() as isize))
            .collect();
        // snap the coordinates to the grid lines they fall on
        let decomp = StripDecomposition {
            bounds: ends.iter().map(|&(a, b)| (a as f64 * hx, b as f64 * hx)).collect(),
            ..decomp
        };
        let n = decomp.n();
        let ext = config.regime.exterior_kind();
        let tb = if config.collapsed { EdgeKind::ImpedanceHomogeneous } else { ext.clone() };
        let strip_conditions = |l: usize| {
            vec![
                EdgeCondition::new(Edge::Left, if l == 0 { ext.clone() } else { EdgeKind::ImpedanceHomogeneous }),
                EdgeCondition::new(Edge::Right, if l + 1 == n { ext.clone() } else { EdgeKind::ImpedanceHomogeneous }),
                EdgeCondition::new(Edge::Top, tb.clone()),
                EdgeCondition::new(Edge::Bottom, tb.clone()),
            ]
        };
        let global_spec = BoxSpec {
            x0: 0.0,
            width: decomp.length,
            height: decomp.height,
            k,
            marks: decomp.marks(),
            collapsed: config.collapsed,
        };
        let global_conditions = vec![
            EdgeCondition::new(Edge::Left, ext.clone()),
            EdgeCondition::new(Edge::Right, ext.clone()),
            EdgeCondition::new(Edge::Top, tb.clone()),
            EdgeCondition::new(Edge::Bottom, tb.clone()),
        ];
        let grid = global_spec.grid(&disc, &crate::solver::conditions_per_edge(&global_conditions)?)?;
        let pou = PartitionOfUnity::new(&ends, grid.i_min(), grid.i_max())?;

        let subs = (0..n)
            .into_par_iter()
            .map(|l| -> Result<Subdomain> {
                let (a, b) = decomp.bounds[l];
                let spec = BoxSpec { x0: a, width: b - a, height: decomp.height, k, marks: vec![], collapsed: config.collapsed };
                let system = crate::solver::build_box_system(&spec, &disc, &strip_conditions(l), None)?;
                let factored = system.factor().map_err(|e| with_subdomain(e, l))?;
                let mut slots = Vec::new();
                if l > 0 {
                    slots.push((l, Side::Minus));
                }
                if l + 1 < n {
                    slots.push((l, Side::Plus));
                }
                Ok(Subdomain { offset: ends[l].0, system, factored, slots })
            })
            .collect::<Result<Vec<_>>>()?;
        for s in &subs {
            if s.system.grid.nj() != grid.nj() {
                return Err(Error::DimensionMismatch("strip and global grids have different rows".into()));
            }
        }
        let slots = subs.iter().flat_map(|s| s.slots.iter().map(|&(subdomain, side)| Slot { subdomain, side })).collect();
        let config = SchwarzConfig { disc, ..config };
        Ok(Self { decomp, config, grid, ends, pou, subs, slots, global: std::sync::OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.subs.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn kd(&self) -> f64 {
        discrete_wavenumber(self.config.k, self.grid.hx)
    }

    pub fn zero_data(&self) -> ImpedanceDataVector {
        ImpedanceDataVector::zeros(self.slots.clone(), self.grid.stored_line_weights(), self.kd())
    }

    /// Complex Gaussian data, every sample independent.
    pub fn random_data(&self, rng: &mut ChaCha8Rng) -> ImpedanceDataVector {
        let mut d = self.zero_data();
        for t in &mut d.traces {
            for z in t.iter_mut() {
                *z = C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
            }
        }
        d
    }

    pub fn subdomain_grid(&self, l: usize) -> &Grid {
        &self.subs[l].system.grid
    }

    /// Global column of an interface slot.
    pub fn slot_column(&self, slot: Slot) -> isize {
        match slot.side {
            Side::Minus => self.ends[slot.subdomain].0,
            Side::Plus => self.ends[slot.subdomain].1,
        }
    }

    /// Outgoing-form data of a field on `grid` at column `i` for the slot's
    /// outward normal: −(trace with ι=+1) on a left end, trace with ι=−1 on a
    /// right end.
    fn slot_trace(&self, grid: &Grid, values: &[C64], i: isize, side: Side) -> Result<Vec<C64>> {
        let k = self.config.k;
        Ok(match side {
            Side::Minus => trace_values_stored(grid, k, values, i, Sign::Plus)?.into_iter().map(|z| -z).collect(),
            Side::Plus => trace_values_stored(grid, k, values, i, Sign::Minus)?,
        })
    }

    /// Impedance data of a global field on every slot.
    pub fn transmission_data(&self, global: &[C64]) -> Result<ImpedanceDataVector> {
        let mut d = self.zero_data();
        for (s, slot) in self.slots.iter().enumerate() {
            d.traces[s] = self.slot_trace(&self.grid, global, self.slot_column(*slot), slot.side)?;
        }
        Ok(d)
    }

    fn local_rhs(&self, l: usize, data: &ImpedanceDataVector) -> Result<Vec<C64>> {
        let sub = &self.subs[l];
        let mut b = vec![ZERO; sub.system.dim()];
        for &(sl, side) in &sub.slots {
            let s = data.slot_index(Slot { subdomain: sl, side }).ok_or_else(|| {
                Error::DimensionMismatch(format!("data vector has no slot ({}, {side:?})", sl + 1))
            })?;
            let edge = if side == Side::Minus { Edge::Left } else { Edge::Right };
            sub.system.add_impedance_rhs_stored(&mut b, edge, &data.traces[s])?;
        }
        Ok(b)
    }

    /// Field of Ω_ℓ with transmission data `data` and homogeneous exterior
    /// conditions.
    pub fn solve_with_data(&self, l: usize, data: &ImpedanceDataVector) -> Result<Vec<C64>> {
        let b = self.local_rhs(l, data)?;
        self.subs[l].factored.lu.solve(&b).map_err(|e| with_subdomain(e, l))
    }

    fn restrict(&self, l: usize, global: &[C64]) -> Vec<C64> {
        let g = &self.subs[l].system.grid;
        g.nodes().map(|(i, j)| global[self.grid.index(i + self.subs[l].offset, j)]).collect()
    }

    /// Σ_ℓ χ_ℓ u_ℓ on the global grid.
    pub fn glue(&self, fields: &[Vec<C64>]) -> Result<Vec<C64>> {
        if fields.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("{} fields for {} strips", fields.len(), self.n())));
        }
        let mut u = vec![ZERO; self.grid.len()];
        for (l, f) in fields.iter().enumerate() {
            let sub = &self.subs[l];
            if f.len() != sub.system.dim() {
                return Err(Error::DimensionMismatch(format!("field of Ω_{} has wrong length", l + 1)));
            }
            for ((i, j), v) in sub.system.grid.nodes().zip(f) {
                let gi = i + sub.offset;
                let c = self.pou.at(l, gi);
                if c != 0.0 {
                    u[self.grid.index(gi, j)] += c * v;
                }
            }
        }
        Ok(u)
    }

    fn check_exterior(&self, g: Option<&ExteriorData>) -> Result<()> {
        let Some(g) = g else { return Ok(()) };
        if self.config.regime == Regime::OutgoingExterior {
            return Err(Error::InvalidArgument("exterior data given in the outgoing regime".into()));
        }
        let rows = self.grid.rows();
        let cols = self.grid.nx + 1;
        let ok_tb = |v: &Vec<C64>| v.is_empty() || (!self.config.collapsed && v.len() == cols);
        let ok_lr = |v: &Vec<C64>| v.is_empty() || v.len() == rows;
        if ok_lr(&g.left) && ok_lr(&g.right) && ok_tb(&g.top) && ok_tb(&g.bottom) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("exterior data does not match the global edges".into()))
        }
    }

    /// Right-hand side of Ω_ℓ from the source and the exterior data alone.
    fn forcing_rhs(&self, l: usize, f: Option<&[C64]>, g: Option<&ExteriorData>) -> Result<Vec<C64>> {
        let sub = &self.subs[l];
        let mut b = match f {
            Some(f) => sub.system.source_rhs(&self.restrict(l, f))?,
            None => vec![ZERO; sub.system.dim()],
        };
        if let Some(g) = g {
            let n = self.n();
            if l == 0 && !g.left.is_empty() {
                sub.system.add_impedance_rhs(&mut b, Edge::Left, &g.left)?;
            }
            if l + 1 == n && !g.right.is_empty() {
                sub.system.add_impedance_rhs(&mut b, Edge::Right, &g.right)?;
            }
            let (a, e) = (self.ends[l].0 as usize, self.ends[l].1 as usize);
            if !g.top.is_empty() {
                sub.system.add_impedance_rhs(&mut b, Edge::Top, &g.top[a..=e])?;
            }
            if !g.bottom.is_empty() {
                sub.system.add_impedance_rhs(&mut b, Edge::Bottom, &g.bottom[a..=e])?;
            }
        }
        Ok(b)
    }

    /// The global problem's solution on the global grid.
    pub fn exact_solution(&self, f: Option<&[C64]>, g: Option<&ExteriorData>) -> Result<Vec<C64>> {
        self.check_exterior(g)?;
        let (sys, fac) = self.global_system()?;
        let mut b = match f {
            Some(f) => sys.source_rhs(f)?,
            None => vec![ZERO; sys.dim()],
        };
        if let Some(g) = g {
            for (edge, v) in [(Edge::Left, &g.left), (Edge::Right, &g.right), (Edge::Top, &g.top), (Edge::Bottom, &g.bottom)] {
                if !v.is_empty() {
                    sys.add_impedance_rhs(&mut b, edge, v)?;
                }
            }
        }
        fac.lu.solve(&b)
    }

    fn global_system(&self) -> Result<&(LinearSystem, Factored)> {
        if let Some(s) = self.global.get() {
            return Ok(s);
        }
        let ext = self.config.regime.exterior_kind();
        let tb = if self.config.collapsed { EdgeKind::ImpedanceHomogeneous } else { ext.clone() };
        let spec = BoxSpec {
            x0: 0.0,
            width: self.decomp.length,
            height: self.decomp.height,
            k: self.config.k,
            marks: self.decomp.marks(),
            collapsed: self.config.collapsed,
        };
        let conditions = vec![
            EdgeCondition::new(Edge::Left, ext.clone()),
            EdgeCondition::new(Edge::Right, ext),
            EdgeCondition::new(Edge::Top, tb.clone()),
            EdgeCondition::new(Edge::Bottom, tb),
        ];
        let sys = crate::solver::build_box_system(&spec, &self.config.disc, &conditions, None)?;
        let fac = sys.factor()?;
        let _ = self.global.set((sys, fac));
        Ok(self.global.get().expect("global system was just set"))
    }

    /// State for an arbitrary global first iterate u⁰.
    pub fn state_from_global(&self, u0: Vec<C64>) -> Result<SchwarzState> {
        if u0.len() != self.grid.len() {
            return Err(Error::DimensionMismatch(format!("u0 has {} values, grid has {}", u0.len(), self.grid.len())));
        }
        let fields = (0..self.n()).map(|l| self.restrict(l, &u0)).collect();
        let data = self.transmission_data(&u0)?;
        Ok(SchwarzState { n: 0, regime: self.config.regime, fields, data, glued: u0 })
    }

    /// State whose strip fields solve the homogeneous problems with `data`.
    pub fn state_from_data(&self, data: &ImpedanceDataVector) -> Result<SchwarzState> {
        let fields = (0..self.n()).into_par_iter().map(|l| self.solve_with_data(l, data)).collect::<Result<Vec<_>>>()?;
        let glued = self.glue(&fields)?;
        Ok(SchwarzState { n: 0, regime: self.config.regime, fields, data: data.clone(), glued })
    }

    /// One parallel Schwarz step: every strip solves with the impedance data
    /// of the current global iterate on its interfaces, then the strips are
    /// glued with the partition of unity.
    pub fn iterate(&self, state: &SchwarzState, f: Option<&[C64]>, g: Option<&ExteriorData>) -> Result<SchwarzState> {
        self.check_exterior(g)?;
        if let Some(f) = f {
            if f.len() != self.grid.len() {
                return Err(Error::DimensionMismatch(format!("source has {} values, grid has {}", f.len(), self.grid.len())));
            }
        }
        let data = self.transmission_data(&state.glued)?;
        let fields = (0..self.n())
            .into_par_iter()
            .map(|l| -> Result<Vec<C64>> {
                let mut b = self.forcing_rhs(l, f, g)?;
                for (x, y) in b.iter_mut().zip(self.local_rhs(l, &data)?) {
                    *x += y;
                }
                self.subs[l].factored.lu.solve(&b).map_err(|e| with_subdomain(e, l))
            })
            .collect::<Result<Vec<_>>>()?;
        let glued = self.glue(&fields)?;
        Ok(SchwarzState { n: state.n + 1, regime: state.regime, fields, data, glued })
    }

    /// Impedance data of the strip errors u|Ω_ℓ − u_ℓⁿ.
    pub fn error_data(&self, state: &SchwarzState, exact: &[C64]) -> Result<ImpedanceDataVector> {
        self.transmission_data(exact)?.sub(&state.data)
    }

    /// Contributions of Ω_ℓ's field: 𝔅_j(χ_ℓ v) on every slot whose column
    /// lies strictly inside Ω_ℓ's stored grid.
    fn contributions(&self, l: usize, v: &[C64]) -> Result<Vec<(usize, Vec<C64>)>> {
        let sub = &self.subs[l];
        let g = &sub.system.grid;
        let chiv: Vec<C64> = g.nodes().zip(v).map(|((i, _), z)| self.pou.at(l, i + sub.offset) * z).collect();
        let mut out = Vec::new();
        for (s, slot) in self.slots.iter().enumerate() {
            let col = self.slot_column(*slot) - sub.offset;
            if col > g.i_min() && col < g.i_max() {
                out.push((s, self.slot_trace(g, &chiv, col, slot.side)?));
            }
        }
        // only the neighbours' slots can sit inside Ω_ℓ
        for (s, _) in &out {
            let j = self.slots[*s].subdomain;
            if j + 1 != l && j != l + 1 {
                return Err(Error::LayoutInvalid(format!("𝓣 block ({}, {}) is not structurally zero", j + 1, l + 1)));
            }
        }
        Ok(out)
    }

    /// 𝓣 applied to data: each v_ℓ is rebuilt from its data by one strip
    /// solve, then χ_ℓ v_ℓ is traced on the neighbouring interfaces.
    pub fn apply_t(&self, data: &ImpedanceDataVector) -> Result<ImpedanceDataVector> {
        let parts = (0..self.n())
            .into_par_iter()
            .map(|l| -> Result<Vec<(usize, Vec<C64>)>> {
                let v = self.solve_with_data(l, data)?;
                self.contributions(l, &v)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = self.zero_data();
        for (s, t) in parts.into_iter().flatten() {
            for (a, b) in out.traces[s].iter_mut().zip(t) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// 𝓣 as a dense matrix on the flattened data vector.
    pub fn t_matrix(&self) -> Result<DMat> {
        let m = self.grid.nj();
        let dim = m * self.slots.len();
        let columns = (0..self.n())
            .into_par_iter()
            .map(|l| -> Result<Vec<(usize, Vec<(usize, Vec<C64>)>)>> {
                let sub = &self.subs[l];
                let mut cols = Vec::new();
                for &(sl, side) in &sub.slots {
                    let s = self.slots.iter().position(|x| *x == Slot { subdomain: sl, side }).unwrap();
                    let edge = if side == Side::Minus { Edge::Left } else { Edge::Right };
                    let n = sub.system.dim();
                    let mut block = Vec::with_capacity(n * m);
                    for r in 0..m {
                        let mut e = vec![ZERO; m];
                        e[r] = C64::new(1.0, 0.0);
                        let mut b = vec![ZERO; n];
                        sub.system.add_impedance_rhs_stored(&mut b, edge, &e)?;
                        block.extend(b);
                    }
                    sub.factored.lu.solve_block_in_place(&mut block, m).map_err(|e| with_subdomain(e, l))?;
                    for (r, v) in block.chunks(n).enumerate() {
                        cols.push((s * m + r, self.contributions(l, v)?));
                    }
                }
                Ok(cols)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut t = DMat::zeros(dim, dim);
        for (c, parts) in columns.into_iter().flatten() {
            for (s, trace) in parts {
                for (r, z) in trace.into_iter().enumerate() {
                    t[(s * m + r, c)] += z;
                }
            }
        }
        Ok(t)
    }

    /// √w on the flattened layout; the constant k_d cancels in ratios.
    fn sqrt_weights(&self) -> Vec<f64> {
        let w = self.grid.stored_line_weights();
        (0..self.slots.len()).flat_map(|_| w.iter().map(|x| x.sqrt())).collect()
    }

    /// W^{1/2} 𝓣^M W^{−1/2}.
    fn weighted_power(&self, m: usize) -> Result<DMat> {
        let t = self.t_matrix()?;
        let mut a = DMat::identity(t.nrows(), t.ncols());
        for _ in 0..m {
            a = &t * a;
        }
        let sw = self.sqrt_weights();
        Ok(DMat::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * (sw[r] / sw[c])))
    }

    /// Lower estimate of ‖𝓣^M‖ in ‖·‖_{1,k,∂}: the best ratio over random
    /// Gaussian starts, each refined by power iteration on the normal matrix.
    pub fn power_norm_estimate(&self, m: usize, trials: usize, seed: u64) -> Result<PowerNormEstimate> {
        if trials == 0 {
            return Err(Error::InvalidArgument("power_norm_estimate needs trials >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if m == 0 {
            let d = self.random_data(&mut rng);
            let n = error_norm(&d);
            return Ok(PowerNormEstimate { m, estimate: 1.0, data: d.scaled(C64::new(1.0 / n, 0.0)), trials });
        }
        let s = self.weighted_power(m)?;
        let sh = s.adjoint();
        let dim = s.ncols();
        let (mut best, mut arg) = (0.0, vec![ZERO; dim]);
        for _ in 0..trials {
            let mut x: Vec<C64> =
                (0..dim).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
            for step in 0..=POWER_REFINEMENT_STEPS {
                let nx = vec_norm(&x);
                if nx == 0.0 {
                    break;
                }
                let xv = nalgebra::DVector::from_iterator(dim, x.iter().map(|z| z / nx));
                let y = &s * &xv;
                let ratio = vec_norm(y.as_slice());
                if ratio > best {
                    best = ratio;
                    arg = xv.as_slice().to_vec();
                }
                if step < POWER_REFINEMENT_STEPS {
                    x = (&sh * y).as_slice().to_vec();
                }
            }
        }
        let sw = self.sqrt_weights();
        let kd = self.kd();
        let flat: Vec<C64> = arg.iter().zip(&sw).map(|(z, w)| z / (w * kd)).collect();
        Ok(PowerNormEstimate { m, estimate: best, data: self.zero_data().with_flat(&flat)?, trials })
    }

    /// ‖𝓣^M‖ by dense SVD.
    pub fn power_norm_exact(&self, m: usize) -> Result<f64> {
        if m == 0 {
            return Ok(1.0);
        }
        Ok(self.weighted_power(m)?.singular_values().max())
    }

    /// Error history of the iteration from u⁰ = 0 for n = 0..=iterations.
    pub fn convergence_history(
        &self,
        f: Option<&[C64]>,
        g: Option<&ExteriorData>,
        iterations: usize,
    ) -> Result<Vec<HistoryRecord>> {
        let exact = self.exact_solution(f, g)?;
        let mut state = self.state_from_global(vec![ZERO; self.grid.len()])?;
        let mut out = Vec::with_capacity(iterations + 1);
        for n in 0..=iterations {
            if n > 0 {
                state = self.iterate(&state, f, g)?;
            }
            out.push(self.record(&state, &exact)?);
        }
        Ok(out)
    }

    /// History of a homogeneous iteration started from strip fields that
    /// solve with `data`; the errors are then −uⁿ and in the space 𝓣 acts on.
    pub fn homogeneous_history(&self, data: &ImpedanceDataVector, iterations: usize) -> Result<Vec<HistoryRecord>> {
        let exact = vec![ZERO; self.grid.len()];
        let mut state = self.state_from_data(data)?;
        let mut out = Vec::with_capacity(iterations + 1);
        for n in 0..=iterations {
            if n > 0 {
                state = self.iterate(&state, None, None)?;
            }
            out.push(self.record(&state, &exact)?);
        }
        Ok(out)
    }

    fn record(&self, state: &SchwarzState, exact: &[C64]) -> Result<HistoryRecord> {
        let e = self.error_data(state, exact)?;
        let per_subdomain = (0..self.n())
            .map(|l| {
                (0..e.slots.len()).filter(|&s| e.slots[s].subdomain == l).map(|s| e.slot_norm(s).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        let diff: Vec<C64> = exact.iter().zip(&state.glued).map(|(a, b)| a - b).collect();
        let field = crate::solver::ComplexField { grid: self.grid.clone(), k: self.config.k, values: diff };
        Ok(HistoryRecord { n: state.n, error_norm: error_norm(&e), error_l2: field.l2_norm_physical(), per_subdomain })
    }
}

fn with_subdomain(e: Error, l: usize) -> Error {
    match e {
        Error::SolveFailure { k, reason } => Error::SolveFailure { k, reason: format!("subdomain {}: {reason}", l + 1) },
        other => other,
    }
}

/// Normalized Gaussian source (k/π)·e^{−k|x−x₀|²} on the physical nodes.
pub fn gaussian_source(grid: &Grid, k: f64, x0: f64, y0: f64) -> Vec<C64> {
    let ny = grid.ny as isize;
    grid.nodes()
        .map(|(i, j)| {
            let inside = i >= 0 && i <= grid.nx as isize && (grid.collapsed || (j >= 0 && j <= ny));
            if !inside {
                return ZERO;
            }
            let (x, y) = (grid.x(i), if grid.collapsed { y0 } else { grid.y(j) });
            let r2 = (x - x0).powi(2) + (y - y0).powi(2);
            C64::new(k / std::f64::consts::PI * (-k * r2).exp(), 0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests;
