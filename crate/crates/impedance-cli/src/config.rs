//! TOML experiment configuration and its per-experiment resolution.
//!
//! Every field is optional in the file. Resolution moves each field an
//! experiment reads from the input into a fresh config, filling defaults on
//! the way; anything left behind is reported as unused. The filled-in copy is
//! what gets written next to the results.

use std::collections::BTreeMap;
use std::fmt;

use impedance::maps::{Model, SideGeometry, SignWord};
use impedance::schwarz::{build_decomposition, Regime};
use impedance::solver::{CellGeometry, Discretization, PerEdge, Sign};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Solve,
    Model1Norm,
    Model2Norm,
    Composite,
    OracleCheck,
    SchwarzConverge,
    SchwarzPowerNorm,
    SolverConvergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Model1Norm => "model1-norm",
            Experiment::Model2Norm => "model2-norm",
            Experiment::Composite => "composite",
            Experiment::OracleCheck => "oracle-check",
            Experiment::SchwarzConverge => "schwarz-converge",
            Experiment::SchwarzPowerNorm => "schwarz-power-norm",
            Experiment::SolverConvergence => "solver-convergence",
        }
    }

    /// Label stored with the outputs.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Solve => "single cell solve with coherent-state data",
            Experiment::Model1Norm => "Model 1 impedance map norms",
            Experiment::Model2Norm => "Model 2 witness ratios",
            Experiment::Composite => "composite maps: witness mass and projected norms",
            Experiment::OracleCheck => "numeric trace against the ray oracle",
            Experiment::SchwarzConverge => "parallel Schwarz error history",
            Experiment::SchwarzPowerNorm => "norm of powers of the Schwarz error operator",
            Experiment::SolverConvergence => "solver convergence and PML reflection",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl From<impedance::Error> for ConfigError {
    fn from(e: impedance::Error) -> Self {
        ConfigError(e.to_string())
    }
}

/// Coherent-state cutoff width; 0.1 leaves too much Gaussian tail at k = 80.
pub const DEFAULT_ETA: f64 = 0.05;

type CResult<T> = std::result::Result<T, ConfigError>;

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub geometry: GeometryBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub discretization: DiscretizationBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub map: MapBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub coherent: CoherentBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub schwarz: SchwarzBlock,
    #[serde(default, skip_serializing_if = "is_default")]
    pub solver: SolverBlock,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_l_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_r_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_l_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_r_minus: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppw: Option<u32>,
    /// Wavelengths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pml_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pml_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pml_strength: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeMode {
    Witness,
    Projected,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBlock {
    /// "model1", "model2" or "canonical".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota: Option<Vec<Sign>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CompositeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_word_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_maps: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchwarzBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapsed: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppw: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CResult<Self> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// Named acceptance thresholds of one experiment.
pub type Thresholds = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub h: f64,
    pub plus: SideGeometry,
    pub minus: SideGeometry,
}

impl Cell {
    pub fn side(&self, s: Sign) -> SideGeometry {
        match s {
            Sign::Plus => self.plus,
            Sign::Minus => self.minus,
        }
    }

    pub fn geometry(&self, s: Sign, k: f64) -> impedance::Result<CellGeometry> {
        let g = self.side(s);
        CellGeometry::new(self.h, g.d_l, g.d_r, k)
    }

    pub fn word(&self, w: &str) -> impedance::Result<SignWord> {
        SignWord::parse(w, self.h, self.plus, self.minus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coherent {
    pub theta0: f64,
    pub y0: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Solve { k: f64, model: Model, geom: CellGeometry, disc: Discretization, coherent: Coherent, iota: Vec<Sign> },
    Model1Norm { ks: Vec<f64>, h: f64, d_l: f64, d_r: f64, disc: Discretization, iota: Vec<Sign>, save_maps: bool },
    Model2Norm { ks: Vec<f64>, cell: Cell, disc: Discretization, iota: Vec<Sign>, eta: f64, save_maps: bool },
    Composite { ks: Vec<f64>, cell: Cell, disc: Discretization, words: Vec<String>, mode: CompositeMode, lambda: Option<f64>, eta: f64 },
    OracleCheck { ks: Vec<f64>, model: Model, geom: CellGeometry, disc: Discretization, coherent: Coherent, iota: Vec<Sign> },
    SchwarzConverge { k: f64, n: usize, length: f64, delta: f64, regime: Regime, disc: Discretization, iterations: usize, source: (f64, f64), collapsed: bool },
    SchwarzPowerNorm { k: f64, n: usize, length: f64, delta: f64, regime: Regime, disc: Discretization, m: Vec<usize>, trials: usize, seed: u64, collapsed: bool },
    SolverConvergence { k: f64, theta: f64, ppw: Vec<u32>, angles_deg: Vec<f64>, disc: Discretization },
}

/// A validated experiment: what to run, the thresholds it is judged by and
/// the config with every default written out.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub plan: Plan,
    pub thresholds: Thresholds,
    pub config: ExperimentConfig,
}

fn take<T: Clone>(src: &mut Option<T>, dst: &mut Option<T>) -> Option<T> {
    let v = src.take();
    dst.clone_from(&v);
    v
}

fn need<T: Clone>(src: &mut Option<T>, dst: &mut Option<T>, name: &str) -> CResult<T> {
    take(src, dst).ok_or_else(|| ConfigError(format!("missing required field `{name}`")))
}

fn or<T: Clone>(src: &mut Option<T>, dst: &mut Option<T>, default: T) -> T {
    let v = src.take().unwrap_or(default);
    *dst = Some(v.clone());
    v
}

fn positive(v: f64, name: &str) -> CResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError(format!("`{name}` must be positive and finite, got {v}")))
    }
}

fn parse_model(s: &str) -> CResult<Model> {
    match s {
        "model1" => Ok(Model::Model1),
        "model2" => Ok(Model::Model2),
        "canonical" => Ok(Model::CanonicalAllImpedance),
        _ => Err(ConfigError(format!("unknown model {s:?}; expected model1, model2 or canonical"))),
    }
}

/// All words over {+,−} of length 1..=n.
pub fn all_words(n: usize) -> Vec<String> {
    let mut out = vec![];
    for len in 1..=n {
        for bits in 0..(1u32 << len) {
            out.push((0..len).map(|b| if bits >> b & 1 == 1 { '-' } else { '+' }).collect());
        }
    }
    out
}

fn default_thresholds(e: Experiment) -> Thresholds {
    let pairs: &[(&str, f64)] = match e {
        Experiment::Solve => &[],
        Experiment::Model1Norm => &[("minus_max", 0.25), ("minus_limit_band", 0.05), ("plus_min", 0.90), ("plus_max", 1.05)],
        Experiment::Model2Norm => &[("witness_ratio_min", 0.7)],
        Experiment::Composite => &[("oracle_mass_min", 1.0 - 1e-12), ("squared_ratio_min", 0.5), ("projected_norm_max", 0.3)],
        Experiment::OracleCheck => &[("relative_gap_max", 0.15)],
        Experiment::SchwarzConverge => &[("step_ratio_max", 1.0)],
        Experiment::SchwarzPowerNorm => &[("estimate_max", 1.0)],
        Experiment::SolverConvergence => &[("ratio_min", 3.2), ("ratio_max", 4.8), ("pml_max", 1e-3)],
    };
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

struct Resolver {
    src: ExperimentConfig,
    dst: ExperimentConfig,
}

impl Resolver {
    fn ks(&mut self) -> CResult<Vec<f64>> {
        let ks = need(&mut self.src.k, &mut self.dst.k, "k")?;
        if ks.is_empty() {
            return Err(ConfigError("`k` is empty".into()));
        }
        for &k in &ks {
            positive(k, "k")?;
        }
        Ok(ks)
    }

    fn single_k(&mut self) -> CResult<f64> {
        let ks = self.ks()?;
        if ks.len() != 1 {
            return Err(ConfigError(format!("this experiment takes a single k, got {}", ks.len())));
        }
        Ok(ks[0])
    }

    fn disc(&mut self) -> CResult<Discretization> {
        let (s, d) = (&mut self.src.discretization, &mut self.dst.discretization);
        let base = Discretization::default();
        let disc = Discretization {
            points_per_wavelength: or(&mut s.ppw, &mut d.ppw, base.points_per_wavelength),
            pml_widths: PerEdge::uniform(or(&mut s.pml_width, &mut d.pml_width, base.pml_widths.left)),
            pml_order: or(&mut s.pml_order, &mut d.pml_order, base.pml_order),
            pml_strength: take(&mut s.pml_strength, &mut d.pml_strength),
            ..base
        };
        disc.validate()?;
        Ok(disc)
    }

    fn iota(&mut self) -> CResult<Vec<Sign>> {
        let v = or(&mut self.src.map.iota, &mut self.dst.map.iota, vec![Sign::Minus, Sign::Plus]);
        if v.is_empty() {
            return Err(ConfigError("`map.iota` is empty".into()));
        }
        Ok(v)
    }

    fn model(&mut self, default: Model) -> CResult<Model> {
        let s = or(&mut self.src.map.model, &mut self.dst.map.model, default.to_string());
        parse_model(&s)
    }

    fn height(&mut self) -> CResult<f64> {
        positive(need(&mut self.src.geometry.h, &mut self.dst.geometry.h, "geometry.h")?, "geometry.h")
    }

    /// h, d_l, d_r of a single cell; `d_r` falls back to `d_r_default` when given.
    fn cell_geometry(&mut self, k: f64, d_r_default: Option<f64>) -> CResult<CellGeometry> {
        let h = self.height()?;
        let (s, d) = (&mut self.src.geometry, &mut self.dst.geometry);
        let d_l = need(&mut s.d_l, &mut d.d_l, "geometry.d_l")?;
        let d_r = match d_r_default {
            Some(v) => or(&mut s.d_r, &mut d.d_r, v),
            None => need(&mut s.d_r, &mut d.d_r, "geometry.d_r")?,
        };
        Ok(CellGeometry::new(h, d_l, d_r, k)?)
    }

    /// Per-sign cells; `d_l_plus` etc. default to the shared `d_l`, `d_r`.
    fn cell(&mut self) -> CResult<Cell> {
        let h = self.height()?;
        let (s, d) = (&mut self.src.geometry, &mut self.dst.geometry);
        let d_l = take(&mut s.d_l, &mut d.d_l);
        let d_r = take(&mut s.d_r, &mut d.d_r);
        let side = |src: &mut Option<f64>, dst: &mut Option<f64>, shared: Option<f64>, name: &str| -> CResult<f64> {
            let v = match src.take().or(shared) {
                Some(v) => v,
                None => return Err(ConfigError(format!("missing required field `geometry.{name}` (or the shared value)"))),
            };
            // the per-sign value is written out only when it differs from the shared one
            if shared != Some(v) {
                *dst = Some(v);
            }
            positive(v, name)
        };
        let plus = SideGeometry {
            d_l: side(&mut s.d_l_plus, &mut d.d_l_plus, d_l, "d_l_plus")?,
            d_r: side(&mut s.d_r_plus, &mut d.d_r_plus, d_r, "d_r_plus")?,
        };
        let minus = SideGeometry {
            d_l: side(&mut s.d_l_minus, &mut d.d_l_minus, d_l, "d_l_minus")?,
            d_r: side(&mut s.d_r_minus, &mut d.d_r_minus, d_r, "d_r_minus")?,
        };
        Ok(Cell { h, plus, minus })
    }

    fn coherent(&mut self, theta_default: Option<f64>) -> CResult<Coherent> {
        let (s, d) = (&mut self.src.coherent, &mut self.dst.coherent);
        let theta0 = match theta_default {
            Some(v) => or(&mut s.theta0, &mut d.theta0, v),
            None => need(&mut s.theta0, &mut d.theta0, "coherent.theta0")?,
        };
        let y0 = need(&mut s.y0, &mut d.y0, "coherent.y0")?;
        let eta = positive(or(&mut s.eta, &mut d.eta, DEFAULT_ETA), "coherent.eta")?;
        if !(theta0.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(ConfigError(format!("`coherent.theta0` = {theta0} not in (−π/2, π/2)")));
        }
        Ok(Coherent { theta0, y0, eta })
    }

    fn eta(&mut self) -> CResult<f64> {
        positive(or(&mut self.src.coherent.eta, &mut self.dst.coherent.eta, DEFAULT_ETA), "coherent.eta")
    }

    fn save_maps(&mut self) -> bool {
        or(&mut self.src.map.save_maps, &mut self.dst.map.save_maps, false)
    }

    fn strips(&mut self) -> CResult<(usize, f64, f64, Regime, bool)> {
        let (s, d) = (&mut self.src.schwarz, &mut self.dst.schwarz);
        let n = need(&mut s.n, &mut d.n, "schwarz.n")?;
        let length = need(&mut s.length, &mut d.length, "schwarz.length")?;
        let delta = need(&mut s.delta, &mut d.delta, "schwarz.delta")?;
        let regime = or(&mut s.regime, &mut d.regime, Regime::OutgoingExterior);
        let collapsed = or(&mut s.collapsed, &mut d.collapsed, false);
        build_decomposition(n, length, delta)?;
        Ok((n, length, delta, regime, collapsed))
    }

    fn plan(&mut self, e: Experiment, seed: u64) -> CResult<Plan> {
        Ok(match e {
            Experiment::Solve => {
                let k = self.single_k()?;
                let model = self.model(Model::Model2)?;
                if model == Model::CanonicalAllImpedance {
                    return Err(ConfigError("`solve` supports model1 and model2".into()));
                }
                let geom = self.cell_geometry(k, None)?;
                Plan::Solve { k, model, geom, disc: self.disc()?, coherent: self.coherent(None)?, iota: self.iota()? }
            }
            Experiment::Model1Norm => {
                let ks = self.ks()?;
                let g = self.cell_geometry(ks[0], Some(0.25))?;
                Plan::Model1Norm {
                    ks,
                    h: g.h,
                    d_l: g.d_l,
                    d_r: g.d_r,
                    disc: self.disc()?,
                    iota: self.iota()?,
                    save_maps: self.save_maps(),
                }
            }
            Experiment::Model2Norm => Plan::Model2Norm {
                ks: self.ks()?,
                cell: self.cell()?,
                disc: self.disc()?,
                iota: self.iota()?,
                eta: self.eta()?,
                save_maps: self.save_maps(),
            },
            Experiment::Composite => {
                let ks = self.ks()?;
                let cell = self.cell()?;
                let disc = self.disc()?;
                let (s, d) = (&mut self.src.map, &mut self.dst.map);
                let mode = need(&mut s.mode, &mut d.mode, "map.mode")?;
                let words = match take(&mut s.words, &mut d.words) {
                    Some(w) => w,
                    None => all_words(or(&mut s.max_word_len, &mut d.max_word_len, 2)),
                };
                if words.is_empty() {
                    return Err(ConfigError("no words to compose".into()));
                }
                for w in &words {
                    cell.word(w)?;
                }
                let lambda = match mode {
                    CompositeMode::Projected => {
                        let l = need(&mut self.src.lambda, &mut self.dst.lambda, "lambda")?;
                        if !(l > 0.0 && l < 1.0) {
                            return Err(ConfigError(format!("`lambda` = {l} not in (0, 1)")));
                        }
                        Some(l)
                    }
                    CompositeMode::Witness => None,
                };
                Plan::Composite { ks, cell, disc, words, mode, lambda, eta: self.eta()? }
            }
            Experiment::OracleCheck => {
                let ks = self.ks()?;
                let model = self.model(Model::Model2)?;
                if model == Model::CanonicalAllImpedance {
                    return Err(ConfigError("`oracle-check` supports model1 and model2".into()));
                }
                let geom = self.cell_geometry(ks[0], None)?;
                Plan::OracleCheck { ks, model, geom, disc: self.disc()?, coherent: self.coherent(None)?, iota: self.iota()? }
            }
            Experiment::SchwarzConverge => {
                let k = self.single_k()?;
                let (n, length, delta, regime, collapsed) = self.strips()?;
                let disc = self.disc()?;
                let (s, d) = (&mut self.src.schwarz, &mut self.dst.schwarz);
                let iterations = or(&mut s.iterations, &mut d.iterations, 6);
                let source = (or(&mut s.source_x, &mut d.source_x, 0.5 * length), or(&mut s.source_y, &mut d.source_y, 0.5));
                Plan::SchwarzConverge { k, n, length, delta, regime, disc, iterations, source, collapsed }
            }
            Experiment::SchwarzPowerNorm => {
                let k = self.single_k()?;
                let (n, length, delta, regime, collapsed) = self.strips()?;
                let disc = self.disc()?;
                let (s, d) = (&mut self.src.schwarz, &mut self.dst.schwarz);
                let m = or(&mut s.m, &mut d.m, vec![1, 2]);
                let trials = or(&mut s.trials, &mut d.trials, 4);
                if m.is_empty() || trials == 0 {
                    return Err(ConfigError("`schwarz.m` and `schwarz.trials` must be non-empty".into()));
                }
                self.dst.seed = Some(seed);
                Plan::SchwarzPowerNorm { k, n, length, delta, regime, disc, m, trials, seed, collapsed }
            }
            Experiment::SolverConvergence => {
                let k = self.single_k()?;
                let disc = self.disc()?;
                let (s, d) = (&mut self.src.solver, &mut self.dst.solver);
                let theta = or(&mut s.theta, &mut d.theta, 0.5);
                let ppw = or(&mut s.ppw, &mut d.ppw, vec![10, 20]);
                let angles_deg = or(&mut s.angles_deg, &mut d.angles_deg, vec![0.0, 15.0, 30.0, 45.0, 60.0]);
                if ppw.len() < 2 {
                    return Err(ConfigError("`solver.ppw` needs at least two resolutions".into()));
                }
                if let Some(a) = angles_deg.iter().find(|a| !(0.0..90.0).contains(*a)) {
                    return Err(ConfigError(format!("angle {a} outside [0, 90)")));
                }
                for &p in &ppw {
                    Discretization { points_per_wavelength: p, ..disc.clone() }.validate()?;
                }
                Plan::SolverConvergence { k, theta, ppw, angles_deg, disc }
            }
        })
    }
}

/// Dotted names of every field still set in `c`.
fn set_fields(c: &ExperimentConfig) -> Vec<String> {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&name, v, out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = vec![];
    if let Ok(v) = toml::Value::try_from(c) {
        walk("", &v, &mut out);
    }
    out
}

/// Validates `config` for `experiment` without running anything.
///
/// `seed` overrides the file's seed.
pub fn resolve(experiment: Experiment, config: ExperimentConfig, seed: Option<u64>) -> CResult<Resolved> {
    let mut src = config;
    if let Some(name) = src.experiment.take() {
        if name != experiment.name() {
            return Err(ConfigError(format!("config is for `{name}`, not `{experiment}`")));
        }
    }
    let seed = seed.or(src.seed.take()).unwrap_or(0);
    src.out = None;
    let overrides = std::mem::take(&mut src.thresholds);
    let mut r = Resolver { src, dst: ExperimentConfig { experiment: Some(experiment.name().into()), ..Default::default() } };
    let plan = r.plan(experiment, seed)?;
    let unused = set_fields(&r.src);
    if !unused.is_empty() {
        return Err(ConfigError(format!("fields not used by `{experiment}`: {}", unused.join(", "))));
    }
    let mut thresholds = default_thresholds(experiment);
    for (name, v) in overrides {
        match thresholds.get_mut(&name) {
            Some(t) => *t = v,
            None => return Err(ConfigError(format!("unknown threshold `{name}` for `{experiment}`"))),
        }
    }
    r.dst.thresholds = thresholds.clone();
    Ok(Resolved { experiment, plan, thresholds, config: r.dst })
}
