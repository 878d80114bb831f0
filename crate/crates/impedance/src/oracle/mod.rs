//! High-frequency predictor: weighted Diracs on interface phase space carried
//! by straight rays, with impedance reflection weights.
//!
//! Masses are those of the (ħD_{x₁}+1)u measure on the walls and of the
//! (ħD_{x₁}+ι)u measure on Γ_i. In that normalization a reflection at Γ_l is
//! lossless, and a reflection at Γ_r multiplies the mass by R (the published
//! weighting) or by R² (the plane-wave computation), where
//! R = ((1−√r)/(1+√r))² and r = 1 − ξ′².

pub mod tracer;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::maps::SignWord;
use crate::solver::{CellGeometry, Sign};
use crate::{Error, Result};

pub const DEFAULT_MAX_BOUNCES: usize = 64;
pub const DEFAULT_MASS_FLOOR: f64 = 1e-12;
/// Landings closer than this to a corner mark the atom corner-critical.
pub const CORNER_BAND: f64 = 1e-8;
/// Atoms closer than this in (x′, ξ′) are merged.
const MERGE_TOL: f64 = 1e-13;
const WITNESS_MIN_XI: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Tangential position x′.
    pub x: f64,
    /// Tangential frequency ξ′.
    pub xi: f64,
}

impl PhasePoint {
    pub fn new(x: f64, xi: f64) -> Result<Self> {
        let p = Self { x, xi };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !(self.r() > 0.0) {
            return Err(Error::GlancingRay { xi: self.xi });
        }
        Ok(())
    }

    pub fn r(&self) -> f64 {
        1.0 - self.xi * self.xi
    }

    pub fn sqrt_r(&self) -> f64 {
        self.r().sqrt()
    }
}

/// 1 − √r without cancellation near normal incidence.
fn one_minus_sqrt_r(xi: f64) -> f64 {
    let s = (1.0 - xi * xi).sqrt();
    xi * xi / (1.0 + s)
}

/// ((1−√r)/(1+√r))².
pub fn reflection_factor(xi: f64) -> f64 {
    let s = (1.0 - xi * xi).sqrt();
    (one_minus_sqrt_r(xi) / (1.0 + s)).powi(2)
}

/// Trace factor of a ray crossing Γ_i rightward: ((ι+√r)/(1+√r))².
pub fn trace_factor_in(xi: f64, iota: Sign) -> f64 {
    let s = (1.0 - xi * xi).sqrt();
    match iota {
        Sign::Plus => 1.0,
        Sign::Minus => (one_minus_sqrt_r(xi) / (1.0 + s)).powi(2),
    }
}

/// Trace factor of a ray crossing Γ_i leftward: ((ι−√r)/(1−√r))².
pub fn trace_factor_out(xi: f64, iota: Sign) -> f64 {
    let s = (1.0 - xi * xi).sqrt();
    match iota {
        Sign::Plus => 1.0,
        Sign::Minus => ((1.0 + s) / one_minus_sqrt_r(xi)).powi(2),
    }
}

/// Mass law of a reflection at Γ_r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallLaw {
    /// R per Γ_r reflection, as in the published Dirac propagation formula.
    #[default]
    Published,
    /// R² per Γ_r reflection, from the plane-wave reflection coefficient.
    Physical,
}

impl WallLaw {
    pub fn right_wall(self, xi: f64) -> f64 {
        let r = reflection_factor(xi);
        match self {
            WallLaw::Published => r,
            WallLaw::Physical => r * r,
        }
    }

    pub fn left_wall(self, _xi: f64) -> f64 {
        1.0
    }
}

impl fmt::Display for WallLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WallLaw::Published => "published",
            WallLaw::Physical => "physical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interface {
    L,
    I,
    R,
}

/// Travel direction: `In` along +x₁, `Out` along −x₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedDirac {
    pub point: PhasePoint,
    pub mass: f64,
    pub interface: Interface,
    pub direction: Direction,
    /// Wall reflections on the path that produced the atom.
    pub bounces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEnsemble {
    pub interface: Interface,
    pub atoms: Vec<WeightedDirac>,
    /// Input atoms with some landing within `CORNER_BAND` of a corner.
    pub corner_critical: Vec<PhasePoint>,
}

impl MeasureEnsemble {
    pub fn new(interface: Interface) -> Self {
        Self { interface, atoms: Vec::new(), corner_critical: Vec::new() }
    }

    /// Data atoms on Γ_l, all travelling into the cell.
    pub fn data(points: &[(PhasePoint, f64)]) -> Result<Self> {
        let mut e = Self::new(Interface::L);
        for &(p, m) in points {
            p.check()?;
            if !(m >= 0.0) {
                return Err(Error::InvalidArgument(format!("atom mass must be non-negative, got {m}")));
            }
            e.push(WeightedDirac { point: p, mass: m, interface: Interface::L, direction: Direction::In, bounces: 0 });
        }
        Ok(e)
    }

    /// Adds an atom, merging it into a coincident one.
    pub fn push(&mut self, atom: WeightedDirac) {
        if let Some(a) = self.atoms.iter_mut().find(|a| {
            a.direction == atom.direction
                && (a.point.x - atom.point.x).abs() <= MERGE_TOL
                && (a.point.xi - atom.point.xi).abs() <= MERGE_TOL
        }) {
            log::warn!("coincident atoms at x'={}, xi'={} merged", atom.point.x, atom.point.xi);
            a.mass += atom.mass;
            a.bounces = a.bounces.min(atom.bounces);
            return;
        }
        self.atoms.push(atom);
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The same atoms read as data on the next cell's Γ_l.
    pub fn as_next_data(&self) -> MeasureEnsemble {
        let mut e = MeasureEnsemble::new(Interface::L);
        for a in &self.atoms {
            e.push(WeightedDirac { interface: Interface::L, direction: Direction::In, bounces: 0, ..*a });
        }
        e
    }
}

/// Result of transporting a phase point to another vertical line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    Reached(PhasePoint),
    /// Left through Γ_t or Γ_b before the line.
    Absorbed,
    /// Landed exactly on x′ ∈ {0, h}.
    Corner,
}

impl Flow {
    pub fn point(self) -> Option<PhasePoint> {
        match self {
            Flow::Reached(p) => Some(p),
            _ => None,
        }
    }
}

/// Straight ray from the line x₁ = `from` to x₁ = `to` in the strip
/// 0 < x′ < h; the vertical displacement is |to − from|·ξ′/√r.
pub fn flow_to_line(p: PhasePoint, from: f64, to: f64, h: f64) -> Result<Flow> {
    p.check()?;
    if from == to {
        return Err(Error::InvalidArgument("flow needs distinct lines".into()));
    }
    let y = p.x + (to - from).abs() * p.xi / p.sqrt_r();
    Ok(if y > 0.0 && y < h {
        Flow::Reached(PhasePoint { x: y, xi: p.xi })
    } else if y == 0.0 || y == h {
        Flow::Corner
    } else {
        Flow::Absorbed
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub max_bounces: usize,
    pub mass_floor: f64,
    pub law: WallLaw,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { max_bounces: DEFAULT_MAX_BOUNCES, mass_floor: DEFAULT_MASS_FLOOR, law: WallLaw::Published }
    }
}

impl PropagationOptions {
    /// Model 1 has no right wall: only the direct crossing.
    pub fn model1() -> Self {
        Self { max_bounces: 0, ..Self::default() }
    }
}

/// Deposits on Γ_i of every data atom on Γ_l, following the bounce path
/// Γ_l → Γ_i → Γ_r → Γ_i → Γ_l → … until the ray leaves the strip, the
/// reflection count exceeds `max_bounces`, or the carried mass drops below
/// `mass_floor`.
pub fn propagate_to_interface(
    data: &MeasureEnsemble,
    geom: &CellGeometry,
    iota: Sign,
    opts: &PropagationOptions,
) -> Result<MeasureEnsemble> {
    geom.validate()?;
    if data.interface != Interface::L {
        return Err(Error::InvalidArgument("propagation starts from data on Γ_l".into()));
    }
    let (h, dl, w) = (geom.h, geom.d_l, geom.width());
    let mut out = MeasureEnsemble::new(Interface::I);
    for atom in &data.atoms {
        atom.point.check()?;
        let xi = atom.point.xi;
        let mut critical = false;
        let mut step = |p: PhasePoint, from: f64, to: f64| -> Result<Option<PhasePoint>> {
            let f = flow_to_line(p, from, to, h)?;
            let y = p.x + (to - from).abs() * p.xi / p.sqrt_r();
            if y.abs() < CORNER_BAND || (y - h).abs() < CORNER_BAND {
                critical = true;
            }
            Ok(f.point())
        };
        let mut p = atom.point;
        let mut weight = 1.0;
        let mut bounces = 0;
        loop {
            // Γ_l → Γ_i, rightward
            let Some(pi) = step(p, 0.0, dl)? else { break };
            let dep = atom.mass * weight * trace_factor_in(xi, iota);
            out.push(WeightedDirac { point: pi, mass: dep, interface: Interface::I, direction: Direction::In, bounces });
            if bounces + 1 > opts.max_bounces {
                break;
            }
            // Γ_i → Γ_r and reflection
            let Some(pr) = step(pi, dl, w)? else { break };
            bounces += 1;
            weight *= opts.law.right_wall(xi);
            if atom.mass * weight < opts.mass_floor {
                break;
            }
            // Γ_r → Γ_i, leftward
            let Some(pi) = step(pr, w, dl)? else { break };
            let dep = atom.mass * weight * trace_factor_out(xi, iota);
            out.push(WeightedDirac { point: pi, mass: dep, interface: Interface::I, direction: Direction::Out, bounces });
            if bounces + 1 > opts.max_bounces {
                break;
            }
            // Γ_i → Γ_l and reflection
            let Some(pl) = step(pi, dl, 0.0)? else { break };
            bounces += 1;
            weight *= opts.law.left_wall(xi);
            if atom.mass * weight < opts.mass_floor {
                break;
            }
            p = pl;
        }
        if critical {
            out.corner_critical.push(atom.point);
        }
    }
    Ok(out)
}

/// Upper limit of ‖𝓘₁^ι‖: (1 + ι cos θ_max)/(1 + cos θ_max).
pub fn model1_norm_prediction(geom: &CellGeometry, iota: Sign) -> f64 {
    let c = geom.theta_max().cos();
    (1.0 + iota.value() * c) / (1.0 + c)
}

/// n₀(λ) = h·min(d_l⁺, d_l⁻)⁻¹·λ⁻¹·√(1−λ²).
pub fn nilpotence_index(h: f64, d_l_plus: f64, d_l_minus: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange(format!("λ = {lambda} not in (0, 1)")));
    }
    Ok(h / d_l_plus.min(d_l_minus) / lambda * (1.0 - lambda * lambda).sqrt())
}

/// Which term of the Dirac propagation a witness follows in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessPath {
    /// Γ_l → Γ_i.
    Direct,
    /// Γ_l → Γ_r → Γ_i.
    FirstReflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: PhasePoint,
    pub paths: Vec<WitnessPath>,
    /// Mass carried by the designated path after each letter.
    pub masses: Vec<f64>,
}

/// Path whose deposit has unit mass under the published weighting: the
/// direct crossing for ι = +1, the first reflection for ι = −1.
pub fn witness_path(s: Sign) -> WitnessPath {
    match s {
        Sign::Plus => WitnessPath::Direct,
        Sign::Minus => WitnessPath::FirstReflection,
    }
}

/// x′ = h/2 and the largest ξ′ = 2^{−m}, m ≥ 1, whose designated path stays
/// inside (0, h) through every letter of the word.
pub fn witness_data(word: &SignWord, law: WallLaw) -> Result<Witness> {
    word.validate()?;
    let h = word.h;
    let mut xi = 0.5;
    while xi >= WITNESS_MIN_XI {
        if let Some(masses) = follow_witness(word, h, xi, law)? {
            return Ok(Witness {
                point: PhasePoint { x: 0.5 * h, xi },
                paths: word.signs.iter().map(|&s| witness_path(s)).collect(),
                masses,
            });
        }
        xi *= 0.5;
    }
    Err(Error::NoWitnessFound(format!("no ξ' ≥ {WITNESS_MIN_XI} keeps the path of {word} inside the cell")))
}

fn follow_witness(word: &SignWord, h: f64, xi: f64, law: WallLaw) -> Result<Option<Vec<f64>>> {
    let mut p = PhasePoint { x: 0.5 * h, xi };
    let mut mass = 1.0;
    let mut masses = Vec::with_capacity(word.len());
    for &s in &word.signs {
        let g = word.side(s);
        let (dl, w) = (g.d_l, g.d_l + g.d_r);
        let next = match witness_path(s) {
            WitnessPath::Direct => {
                mass *= trace_factor_in(xi, s);
                flow_to_line(p, 0.0, dl, h)?.point()
            }
            WitnessPath::FirstReflection => {
                mass *= law.right_wall(xi) * trace_factor_out(xi, s);
                flow_to_line(p, 0.0, dl, h)?
                    .point()
                    .map(|q| flow_to_line(q, dl, w, h))
                    .transpose()?
                    .and_then(Flow::point)
                    .map(|q| flow_to_line(q, w, dl, h))
                    .transpose()?
                    .and_then(Flow::point)
            }
        };
        match next {
            Some(q) => p = q,
            None => return Ok(None),
        }
        masses.push(mass);
    }
    Ok(Some(masses))
}

/// Propagates through the cells of a word; each letter's Γ_i measure is the
/// next letter's Γ_l data.
pub fn composite_ensemble(data: &MeasureEnsemble, word: &SignWord, opts: &PropagationOptions) -> Result<MeasureEnsemble> {
    word.validate()?;
    let mut cur = data.clone();
    let mut critical = Vec::new();
    for &s in &word.signs {
        let g = word.side(s);
        // k plays no role in ray transport
        let geom = CellGeometry::new(word.h, g.d_l, g.d_r, 1.0)?;
        let out = propagate_to_interface(&cur, &geom, s, opts)?;
        critical.extend(out.corner_critical.iter().copied());
        cur = out.as_next_data();
    }
    cur.interface = Interface::I;
    cur.corner_critical = critical;
    Ok(cur)
}

/// Total mass on the last Γ_i: the limit of ‖𝓘^σ g‖² for data with this
/// measure.
pub fn composite_prediction(data: &MeasureEnsemble, word: &SignWord, opts: &PropagationOptions) -> Result<f64> {
    Ok(composite_ensemble(data, word, opts)?.total_mass())
}

#[cfg(test)]
mod tests;
