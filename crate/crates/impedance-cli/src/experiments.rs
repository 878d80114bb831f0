//! Experiment runners. Each turns a validated [`Plan`] into results, a CSV
//! detail table, threshold checks and optional extra files.

use std::collections::HashMap;

use impedance::io::{self, NormRecord, PowerNormRecord};
use impedance::maps::{
    assemble_map, coherent_state, compose_from, interface_spacing, ImpedanceMapMatrix, MapSpec, Model,
};
use impedance::oracle::{
    composite_prediction, model1_norm_prediction, nilpotence_index, propagate_to_interface, witness_data,
    MeasureEnsemble, PhasePoint, PropagationOptions, WallLaw,
};
use impedance::schwarz::{build_decomposition, gaussian_source, SchwarzConfig, SchwarzProblem};
use impedance::solver::{
    manufactured_two_wave_error, pml_reflection, solve_model1, solve_model2, trace, CellGeometry, Discretization, Sign,
};
use impedance::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Cell, Coherent, CompositeMode, Plan, Resolved, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Op {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<")]
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: Op,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, op: Op, limit: f64) -> Self {
        let passed = match op {
            Op::AtMost => value <= limit,
            Op::AtLeast => value >= limit,
            Op::Below => value < limit,
        };
        Self { name: name.into(), value, op, limit, passed }
    }

    fn threshold(t: &Thresholds, name: &str, value: f64, op: Op) -> Self {
        Self::new(name, value, op, t[name])
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    /// detail.csv contents.
    pub detail: Vec<u8>,
    pub checks: Vec<Check>,
    /// Additional files, by name.
    pub extras: Vec<(String, Vec<u8>)>,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn sign_name(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}

fn map_file(prefix: &str, s: &str, k: f64, map: &ImpedanceMapMatrix) -> Result<(String, Vec<u8>)> {
    let mut buf = vec![];
    io::write_map_binary(&mut buf, map)?;
    Ok((format!("map_{prefix}_{s}_k{k}.bin"), buf))
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

/// Largest step v[i+1] − v[i]; negative when strictly decreasing.
fn largest_increase(v: &[f64]) -> f64 {
    max(v.windows(2).map(|w| w[1] - w[0]))
}

/// Model 2 maps for the given signs, assembled on one interface grid.
fn model2_factors(cell: &Cell, k: f64, disc: &Discretization, signs: &[Sign]) -> Result<HashMap<Sign, ImpedanceMapMatrix>> {
    let hy = interface_spacing(cell.h, k, disc)?;
    let pinned = Discretization { spacing_y: Some(hy), ..disc.clone() };
    signs
        .iter()
        .map(|&s| Ok((s, assemble_map(&MapSpec::new(Model::Model2, cell.geometry(s, k)?, s, pinned.clone())?)?)))
        .collect()
}

/// ‖M g‖/‖g‖ for the coherent state on the map's input grid.
fn coherent_ratio(map: &ImpedanceMapMatrix, h: f64, y0: f64, theta0: f64, k: f64, eta: f64) -> Result<f64> {
    map.ratio(&coherent_state(h, map.cols() - 1, y0, theta0, k, eta)?)
}

pub fn run(r: &Resolved) -> Result<Outcome> {
    let t = &r.thresholds;
    match &r.plan {
        Plan::Solve { k, model, geom, disc, coherent, iota } => solve(*k, *model, geom, disc, coherent, iota),
        Plan::Model1Norm { ks, h, d_l, d_r, disc, iota, save_maps } => {
            model1_norm(t, ks, (*h, *d_l, *d_r), disc, iota, *save_maps)
        }
        Plan::Model2Norm { ks, cell, disc, iota, eta, save_maps } => model2_norm(t, ks, cell, disc, iota, *eta, *save_maps),
        Plan::Composite { ks, cell, disc, words, mode, lambda, eta } => match mode {
            CompositeMode::Witness => composite_witness(t, ks, cell, disc, words, *eta),
            CompositeMode::Projected => composite_projected(t, ks, cell, disc, words, lambda.unwrap_or(0.6)),
        },
        Plan::OracleCheck { ks, model, geom, disc, coherent, iota } => oracle_check(t, ks, *model, geom, disc, coherent, iota),
        Plan::SchwarzConverge { k, n, length, delta, regime, disc, iterations, source, collapsed } => {
            let p = problem(*k, *n, *length, *delta, *regime, disc, *collapsed)?;
            schwarz_converge(t, &p, *iterations, *source)
        }
        Plan::SchwarzPowerNorm { k, n, length, delta, regime, disc, m, trials, seed, collapsed } => {
            let p = problem(*k, *n, *length, *delta, *regime, disc, *collapsed)?;
            schwarz_power_norm(t, &p, (*n, *k, *delta, *length), m, *trials, *seed)
        }
        Plan::SolverConvergence { k, theta, ppw, angles_deg, disc } => solver_convergence(t, *k, *theta, ppw, angles_deg, disc),
    }
}

#[derive(Serialize)]
struct TraceRow {
    iota: String,
    y: f64,
    re: f64,
    im: f64,
}

fn solve(k: f64, model: Model, geom: &CellGeometry, disc: &Discretization, c: &Coherent, iota: &[Sign]) -> Result<Outcome> {
    let (rows, hy) = MapSpec::new(model, *geom, Sign::Minus, disc.clone())?.interface()?;
    let g = coherent_state(geom.h, rows - 1, c.y0, c.theta0, k, c.eta)?;
    let field = match model {
        Model::Model1 => solve_model1(geom, disc, &g)?,
        _ => solve_model2(geom, disc, &g)?,
    };
    let mut detail = vec![];
    let mut traces = vec![];
    for &s in iota {
        let tr = trace(&field, geom.d_l, s)?;
        for (j, v) in tr.samples.iter().enumerate() {
            detail.push(TraceRow { iota: s.to_string(), y: j as f64 * hy, re: v.re, im: v.im });
        }
        traces.push(json!({ "iota": s, "norm": tr.norm(), "ratio": tr.norm() / g.norm() }));
    }
    let mut bin = vec![];
    io::write_field_binary(&mut bin, &field)?;
    let mut text = vec![];
    io::write_field_csv(&mut text, &field)?;
    Ok(Outcome {
        results: json!({ "k": k, "model": model.to_string(), "data_norm": g.norm(), "traces": traces }),
        detail: csv_bytes(&detail)?,
        checks: vec![],
        extras: vec![("field.bin".into(), bin), ("field.csv".into(), text)],
    })
}

fn model1_norm(
    t: &Thresholds,
    ks: &[f64],
    (h, d_l, d_r): (f64, f64, f64),
    disc: &Discretization,
    iota: &[Sign],
    save_maps: bool,
) -> Result<Outcome> {
    let jobs: Vec<(f64, Sign)> = iota.iter().flat_map(|&s| ks.iter().map(move |&k| (k, s))).collect();
    let maps = jobs
        .par_iter()
        .map(|&(k, s)| {
            let geom = CellGeometry::new(h, d_l, d_r, k)?;
            assemble_map(&MapSpec::new(Model::Model1, geom, s, disc.clone())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = vec![];
    let mut extras = vec![];
    for (&(k, s), map) in jobs.iter().zip(&maps) {
        records.push(NormRecord {
            model: "model1".into(),
            iota: s.to_string(),
            k,
            h,
            d_l,
            d_r,
            ppw: disc.points_per_wavelength,
            norm: map.norm().value,
            witness_angle: None,
        });
        if save_maps {
            extras.push(map_file("model1", sign_name(s), k, map)?);
        }
    }
    let geom = CellGeometry::new(h, d_l, d_r, ks[0])?;
    let mut checks = vec![];
    let mut predictions = serde_json::Map::new();
    for &s in iota {
        let pred = model1_norm_prediction(&geom, s);
        predictions.insert(s.to_string(), json!(pred));
        let norms: Vec<f64> = records.iter().filter(|r| r.iota == s.to_string()).map(|r| r.norm).collect();
        match s {
            Sign::Minus => {
                checks.push(Check::threshold(t, "minus_max", max(norms.iter().copied()), Op::AtMost));
                if norms.len() > 1 {
                    checks.push(Check::new("minus_nonincreasing", largest_increase(&norms), Op::AtMost, 0.0));
                }
                let last = norms[norms.len() - 1];
                checks.push(Check::threshold(t, "minus_limit_band", (last - pred).abs(), Op::AtMost));
            }
            Sign::Plus => {
                checks.push(Check::threshold(t, "plus_min", min(norms.iter().copied()), Op::AtLeast));
                checks.push(Check::threshold(t, "plus_max", max(norms.iter().copied()), Op::AtMost));
            }
        }
    }
    Ok(Outcome {
        results: json!({ "norms": records, "limits": predictions }),
        detail: csv_bytes(&records)?,
        checks,
        extras,
    })
}

#[derive(Serialize)]
struct WitnessRow {
    k: f64,
    iota: String,
    norm: f64,
    witness_y: f64,
    witness_xi: f64,
    witness_angle: f64,
    witness_ratio: f64,
}

fn model2_norm(
    t: &Thresholds,
    ks: &[f64],
    cell: &Cell,
    disc: &Discretization,
    iota: &[Sign],
    eta: f64,
    save_maps: bool,
) -> Result<Outcome> {
    let witnesses = iota
        .iter()
        .map(|&s| witness_data(&cell.word(&s.to_string())?, WallLaw::Published))
        .collect::<Result<Vec<_>>>()?;
    let per_k = ks
        .par_iter()
        .map(|&k| {
            let f = model2_factors(cell, k, disc, iota)?;
            let mut rows = vec![];
            let mut files = vec![];
            for (&s, w) in iota.iter().zip(&witnesses) {
                let map = &f[&s];
                let angle = w.point.xi.asin();
                rows.push(WitnessRow {
                    k,
                    iota: s.to_string(),
                    norm: map.norm().value,
                    witness_y: w.point.x,
                    witness_xi: w.point.xi,
                    witness_angle: angle,
                    witness_ratio: coherent_ratio(map, cell.h, w.point.x, angle, k, eta)?,
                });
                if save_maps {
                    files.push(map_file("model2", sign_name(s), k, map)?);
                }
            }
            Ok((rows, files))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, extras): (Vec<_>, Vec<_>) = per_k.into_iter().unzip();
    let rows: Vec<WitnessRow> = rows.into_iter().flatten().collect();
    let k_max = ks[ks.len() - 1];
    let last = min(rows.iter().filter(|r| r.k == k_max).map(|r| r.witness_ratio));
    Ok(Outcome {
        results: json!({ "rows": rows, "witnesses": witnesses }),
        detail: csv_bytes(&rows)?,
        checks: vec![Check::threshold(t, "witness_ratio_min", last, Op::AtLeast)],
        extras: extras.into_iter().flatten().collect(),
    })
}

fn signs_in(words: &[String]) -> Vec<Sign> {
    let mut out = vec![];
    if words.iter().any(|w| w.contains('+')) {
        out.push(Sign::Plus);
    }
    if words.iter().any(|w| w.contains(['-', '−'])) {
        out.push(Sign::Minus);
    }
    out
}

#[derive(Serialize)]
struct CompositeWitnessRow {
    k: f64,
    word: String,
    witness_y: f64,
    witness_xi: f64,
    oracle_mass: f64,
    squared_ratio: f64,
}

fn composite_witness(t: &Thresholds, ks: &[f64], cell: &Cell, disc: &Discretization, words: &[String], eta: f64) -> Result<Outcome> {
    let oracle = words
        .iter()
        .map(|w| {
            let sw = cell.word(w)?;
            let wit = witness_data(&sw, WallLaw::Published)?;
            let data = MeasureEnsemble::data(&[(wit.point, 1.0)])?;
            let mass = composite_prediction(&data, &sw, &PropagationOptions::default())?;
            Ok((sw, wit.point, mass))
        })
        .collect::<Result<Vec<_>>>()?;
    let signs = signs_in(words);
    let per_k = ks
        .par_iter()
        .map(|&k| {
            let f = model2_factors(cell, k, disc, &signs)?;
            words
                .iter()
                .zip(&oracle)
                .map(|(w, (sw, p, mass))| {
                    let m = compose_from(sw, k, &f)?;
                    Ok(CompositeWitnessRow {
                        k,
                        word: w.clone(),
                        witness_y: p.x,
                        witness_xi: p.xi,
                        oracle_mass: *mass,
                        squared_ratio: coherent_ratio(&m, cell.h, p.x, p.xi.asin(), k, eta)?.powi(2),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = per_k.into_iter().flatten().collect();
    let k_max = ks[ks.len() - 1];
    let checks = vec![
        Check::threshold(t, "oracle_mass_min", min(oracle.iter().map(|o| o.2)), Op::AtLeast),
        Check::threshold(t, "squared_ratio_min", min(rows.iter().filter(|r| r.k == k_max).map(|r| r.squared_ratio)), Op::AtLeast),
    ];
    Ok(Outcome { results: json!({ "mode": "witness", "rows": rows }), detail: csv_bytes(&rows)?, checks, extras: vec![] })
}

#[derive(Serialize)]
struct ProjectedRow {
    k: f64,
    word: String,
    lambda: f64,
    projected_norm: f64,
}

fn composite_projected(t: &Thresholds, ks: &[f64], cell: &Cell, disc: &Discretization, words: &[String], lambda: f64) -> Result<Outcome> {
    let n0 = nilpotence_index(cell.h, cell.plus.d_l, cell.minus.d_l, lambda)?;
    let signs = signs_in(words);
    let per_k = ks
        .par_iter()
        .map(|&k| {
            let f = model2_factors(cell, k, disc, &signs)?;
            words
                .iter()
                .map(|w| {
                    let m = compose_from(&cell.word(w)?, k, &f)?.with_projection(lambda, k)?;
                    Ok(ProjectedRow { k, word: w.clone(), lambda, projected_norm: m.norm().value })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = per_k.into_iter().flatten().collect();
    let k_max = ks[ks.len() - 1];
    let mut checks =
        vec![Check::threshold(t, "projected_norm_max", max(rows.iter().filter(|r| r.k == k_max).map(|r| r.projected_norm)), Op::AtMost)];
    if ks.len() > 1 {
        let rise = max(words.iter().map(|w| {
            let v: Vec<f64> = rows.iter().filter(|r| &r.word == w).map(|r| r.projected_norm).collect();
            largest_increase(&v)
        }));
        checks.push(Check::new("projected_decreasing", rise, Op::Below, 0.0));
    }
    Ok(Outcome {
        results: json!({ "mode": "projected", "lambda": lambda, "n0": n0, "rows": rows }),
        detail: csv_bytes(&rows)?,
        checks,
        extras: vec![],
    })
}

#[derive(Serialize)]
struct OracleRow {
    k: f64,
    iota: String,
    numeric_norm: f64,
    numeric_norm_sq: f64,
    oracle_prediction: f64,
    relative_gap: f64,
}

fn oracle_check(
    t: &Thresholds,
    ks: &[f64],
    model: Model,
    geom: &CellGeometry,
    disc: &Discretization,
    c: &Coherent,
    iota: &[Sign],
) -> Result<Outcome> {
    // build every coherent state first so bad data fails before any assembly
    let data = ks
        .iter()
        .map(|&k| {
            let g = CellGeometry { k, ..*geom };
            let (rows, _) = MapSpec::new(model, g, Sign::Minus, disc.clone())?.interface()?;
            coherent_state(g.h, rows - 1, c.y0, c.theta0, k, c.eta)
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = if model == Model::Model1 { PropagationOptions::model1() } else { PropagationOptions::default() };
    let atoms = MeasureEnsemble::data(&[(PhasePoint::new(c.y0, c.theta0.sin())?, 1.0)])?;
    let mut extras = vec![];
    let mut predictions = vec![];
    for &s in iota {
        let ens = propagate_to_interface(&atoms, geom, s, &opts)?;
        predictions.push(ens.total_mass());
        let mut text = vec![];
        io::write_ensemble_csv(&mut text, &ens)?;
        extras.push((format!("ensemble_{}.csv", sign_name(s)), text));
        let mut json_out = vec![];
        io::write_ensemble_json(&mut json_out, &ens)?;
        extras.push((format!("ensemble_{}.json", sign_name(s)), json_out));
    }
    let jobs: Vec<(usize, usize)> = (0..ks.len()).flat_map(|a| (0..iota.len()).map(move |b| (a, b))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(a, b)| {
            let (k, s) = (ks[a], iota[b]);
            let map = assemble_map(&MapSpec::new(model, CellGeometry { k, ..*geom }, s, disc.clone())?)?;
            let ratio = map.ratio(&data[a])?;
            let numeric = ratio * ratio;
            let predicted = predictions[b];
            Ok(OracleRow {
                k,
                iota: s.to_string(),
                numeric_norm: ratio,
                numeric_norm_sq: numeric,
                oracle_prediction: predicted,
                relative_gap: (numeric - predicted).abs() / predicted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k_max = ks[ks.len() - 1];
    let gap = max(rows.iter().filter(|r| r.k == k_max).map(|r| r.relative_gap));
    Ok(Outcome {
        results: json!({ "model": model.to_string(), "rows": rows }),
        detail: csv_bytes(&rows)?,
        checks: vec![Check::threshold(t, "relative_gap_max", gap, Op::AtMost)],
        extras,
    })
}

fn problem(
    k: f64,
    n: usize,
    length: f64,
    delta: f64,
    regime: impedance::schwarz::Regime,
    disc: &Discretization,
    collapsed: bool,
) -> Result<SchwarzProblem> {
    SchwarzProblem::new(build_decomposition(n, length, delta)?, SchwarzConfig { k, regime, disc: disc.clone(), collapsed })
}

fn schwarz_converge(t: &Thresholds, p: &SchwarzProblem, iterations: usize, (sx, sy): (f64, f64)) -> Result<Outcome> {
    let f = gaussian_source(&p.grid, p.config.k, sx, sy);
    let history = p.convergence_history(Some(&f), None, iterations)?;
    let mut detail = vec![];
    io::write_history_csv(&mut detail, &history)?;
    let steps: Vec<f64> = history.iter().skip(1).map(|h| h.error_norm).collect();
    let worst = max(steps.windows(2).map(|w| w[1] / w[0]));
    let checks = if steps.len() > 1 { vec![Check::threshold(t, "step_ratio_max", worst, Op::Below)] } else { vec![] };
    Ok(Outcome { results: json!({ "kd": p.kd(), "history": history }), detail, checks, extras: vec![] })
}

fn schwarz_power_norm(
    t: &Thresholds,
    p: &SchwarzProblem,
    (n, k, delta, length): (usize, f64, f64, f64),
    ms: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Outcome> {
    let records = ms
        .iter()
        .map(|&m| {
            let e = p.power_norm_estimate(m, trials, seed)?;
            Ok(PowerNormRecord { n, k, delta, length, m, regime: p.config.regime, estimate: e.estimate })
        })
        .collect::<Result<Vec<_>>>()?;
    let top = records.iter().max_by_key(|r| r.m).map_or(f64::NAN, |r| r.estimate);
    Ok(Outcome {
        results: json!({ "estimates": records, "trials": trials, "seed": seed }),
        detail: csv_bytes(&records)?,
        checks: vec![Check::threshold(t, "estimate_max", top, Op::Below)],
        extras: vec![],
    })
}

#[derive(Serialize)]
struct SolverRow {
    quantity: &'static str,
    ppw: Option<u32>,
    angle_deg: Option<f64>,
    value: f64,
}

fn solver_convergence(t: &Thresholds, k: f64, theta: f64, ppw: &[u32], angles: &[f64], disc: &Discretization) -> Result<Outcome> {
    let errors = ppw
        .par_iter()
        .map(|&p| manufactured_two_wave_error(k, theta, &Discretization { points_per_wavelength: p, ..disc.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let refl = angles.iter().map(|a| pml_reflection(k, a.to_radians(), disc)).collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let mut rows: Vec<SolverRow> = ppw
        .iter()
        .zip(&errors)
        .map(|(&p, &e)| SolverRow { quantity: "l2_error", ppw: Some(p), angle_deg: None, value: e })
        .collect();
    rows.extend(angles.iter().zip(&refl).map(|(&a, &r)| SolverRow { quantity: "pml_reflection", ppw: None, angle_deg: Some(a), value: r }));
    let last = ratios[ratios.len() - 1];
    let checks = vec![
        Check::threshold(t, "ratio_min", last, Op::AtLeast),
        Check::threshold(t, "ratio_max", last, Op::AtMost),
        Check::threshold(t, "pml_max", max(refl.iter().copied()), Op::AtMost),
    ];
    Ok(Outcome {
        results: json!({ "k": k, "theta": theta, "ppw": ppw, "l2_errors": errors, "ratios": ratios, "angles_deg": angles, "pml_reflection": refl }),
        detail: csv_bytes(&rows)?,
        checks,
        extras: vec![],
    })
}
