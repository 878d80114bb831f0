//! Export formats.
//!
//! Binary files are little-endian with a fixed 64-byte header. CSV output goes
//! through the `csv` crate (shortest round-trip float formatting, '.' decimal)
//! and JSON through `serde_json`, so identical inputs give identical bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::DMat;
use crate::maps::{ImpedanceMapMatrix, MapOrigin};
use crate::oracle::{Direction, Interface, MeasureEnsemble, Witness};
use crate::schwarz::{HistoryRecord, Regime};
use crate::solver::ComplexField;
use crate::{Error, Result, C64};

pub const FIELD_MAGIC: &[u8; 4] = b"IMPL";
pub const MAP_MAGIC: &[u8; 4] = b"IMPM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

/// Little-endian cursor over a header block.
struct Header {
    buf: [u8; HEADER_LEN],
    pos: usize,
}

impl Header {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = [0u8; HEADER_LEN];
        buf[..4].copy_from_slice(magic);
        Self { buf, pos: 4 }
    }

    fn read(r: &mut impl Read, magic: &[u8; 4]) -> Result<Self> {
        let mut buf = [0u8; HEADER_LEN];
        r.read_exact(&mut buf)?;
        if &buf[..4] != magic {
            return Err(Error::Io(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf[..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { buf, pos: 4 })
    }

    fn put(&mut self, bytes: &[u8]) {
        self.buf[self.pos..self.pos + bytes.len()].copy_from_slice(bytes);
        self.pos += bytes.len();
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn write_complex(w: &mut impl Write, z: &[C64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 * z.len());
    for v in z {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_complex(r: &mut impl Read, n: usize) -> Result<Vec<C64>> {
    Ok(read_f64s(r, 2 * n)?.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}

/// Physical part of a field as stored in a field file: node (i, j) at
/// (x0 + i·hx, j·hy), row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub k: f64,
    pub x0: f64,
    pub values: Vec<C64>,
}

impl FieldFile {
    pub fn from_field(field: &ComplexField) -> Self {
        let g = &field.grid;
        let ny = if g.collapsed { 0 } else { g.ny };
        let mut values = Vec::with_capacity((g.nx + 1) * (ny + 1));
        for j in 0..=ny as isize {
            for i in 0..=g.nx as isize {
                values.push(field.at(i, j));
            }
        }
        Self { nx: g.nx, ny, hx: g.hx, hy: g.hy, k: field.k, x0: g.x0, values }
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[j * (self.nx + 1) + i]
    }
}

/// Header: magic, version u32, nx u64, ny u64, hx, hy, k, x0, zero padding.
pub fn write_field_binary(w: &mut impl Write, field: &ComplexField) -> Result<()> {
    let f = FieldFile::from_field(field);
    let mut h = Header::new(FIELD_MAGIC);
    h.put(&FORMAT_VERSION.to_le_bytes());
    h.put(&(f.nx as u64).to_le_bytes());
    h.put(&(f.ny as u64).to_le_bytes());
    for v in [f.hx, f.hy, f.k, f.x0] {
        h.put(&v.to_le_bytes());
    }
    w.write_all(&h.buf)?;
    write_complex(w, &f.values)
}

pub fn read_field_binary(r: &mut impl Read) -> Result<FieldFile> {
    let mut h = Header::read(r, FIELD_MAGIC)?;
    let version = h.u32();
    if version != FORMAT_VERSION {
        return Err(Error::Io(format!("unsupported field format version {version}")));
    }
    let nx = h.u64() as usize;
    let ny = h.u64() as usize;
    let (hx, hy, k, x0) = (h.f64(), h.f64(), h.f64(), h.f64());
    let values = read_complex(r, (nx + 1) * (ny + 1))?;
    Ok(FieldFile { nx, ny, hx, hy, k, x0, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub re: f64,
    pub im: f64,
}

pub fn write_field_csv(w: impl Write, field: &ComplexField) -> Result<()> {
    let f = FieldFile::from_field(field);
    let mut out = csv::Writer::from_writer(w);
    for j in 0..=f.ny {
        for i in 0..=f.nx {
            let z = f.at(i, j);
            let row = FieldRow { x: f.x0 + i as f64 * f.hx, y: j as f64 * f.hy, re: z.re, im: z.im };
            out.serialize(row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_field_csv(r: impl Read) -> Result<Vec<FieldRow>> {
    csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

/// Scalar metadata of a map file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapHeader {
    pub rows: usize,
    pub cols: usize,
    pub k: f64,
    /// `Model::tag`, 0 for composites and derived maps.
    pub model_tag: u32,
    /// ±1, 0 when the map has no single impedance sign.
    pub iota: i32,
    pub h: f64,
    pub d_l: f64,
    pub d_r: f64,
}

impl MapHeader {
    pub fn of(map: &ImpedanceMapMatrix) -> Self {
        let (rows, cols) = (map.rows(), map.cols());
        match &map.origin {
            MapOrigin::Assembled(spec) => Self {
                rows,
                cols,
                k: spec.geom.k,
                model_tag: spec.model.tag(),
                iota: spec.iota.value() as i32,
                h: spec.geom.h,
                d_l: spec.geom.d_l,
                d_r: spec.geom.d_r,
            },
            MapOrigin::Composite { word, k } => {
                Self { rows, cols, k: *k, model_tag: 0, iota: 0, h: word.h, d_l: f64::NAN, d_r: f64::NAN }
            }
            MapOrigin::Derived(_) => Self {
                rows,
                cols,
                k: f64::NAN,
                model_tag: 0,
                iota: 0,
                h: f64::NAN,
                d_l: f64::NAN,
                d_r: f64::NAN,
            },
        }
    }
}

/// Header: magic, version u32, rows u64, cols u64, k, model tag u32, ι i32,
/// h, d_l, d_r. Body: entries row-major as re/im pairs, then the input
/// weights (cols) and output weights (rows).
pub fn write_map_binary(w: &mut impl Write, map: &ImpedanceMapMatrix) -> Result<()> {
    let m = MapHeader::of(map);
    let mut h = Header::new(MAP_MAGIC);
    h.put(&FORMAT_VERSION.to_le_bytes());
    h.put(&(m.rows as u64).to_le_bytes());
    h.put(&(m.cols as u64).to_le_bytes());
    h.put(&m.k.to_le_bytes());
    h.put(&m.model_tag.to_le_bytes());
    h.put(&m.iota.to_le_bytes());
    for v in [m.h, m.d_l, m.d_r] {
        h.put(&v.to_le_bytes());
    }
    w.write_all(&h.buf)?;
    let row_major: Vec<C64> = (0..m.rows).flat_map(|r| (0..m.cols).map(move |c| (r, c))).map(|(r, c)| map.entries[(r, c)]).collect();
    write_complex(w, &row_major)?;
    let mut bytes = Vec::new();
    for v in map.in_weights.iter().chain(&map.out_weights) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_map_binary(r: &mut impl Read) -> Result<(MapHeader, ImpedanceMapMatrix)> {
    let mut h = Header::read(r, MAP_MAGIC)?;
    let version = h.u32();
    if version != FORMAT_VERSION {
        return Err(Error::Io(format!("unsupported map format version {version}")));
    }
    let rows = h.u64() as usize;
    let cols = h.u64() as usize;
    let k = h.f64();
    let model_tag = h.u32();
    let iota = h.i32();
    let (hh, d_l, d_r) = (h.f64(), h.f64(), h.f64());
    let header = MapHeader { rows, cols, k, model_tag, iota, h: hh, d_l, d_r };
    let entries = read_complex(r, rows * cols)?;
    let in_weights = read_f64s(r, cols)?;
    let out_weights = read_f64s(r, rows)?;
    let m = DMat::from_row_slice(rows, cols, &entries);
    let map = ImpedanceMapMatrix::new(m, in_weights, out_weights, MapOrigin::Derived("read from map file".into()))?;
    Ok((header, map))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapEntryRow {
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

pub fn write_map_csv(w: impl Write, map: &ImpedanceMapMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            let z = map.entries[(row, col)];
            out.serialize(MapEntryRow { row, col, re: z.re, im: z.im }).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_map_csv(r: impl Read) -> Result<Vec<MapEntryRow>> {
    csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub interface: Interface,
    pub x: f64,
    pub xi: f64,
    pub mass: f64,
    pub direction: Direction,
    pub bounces: usize,
}

pub fn write_ensemble_csv(w: impl Write, ensemble: &MeasureEnsemble) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for a in &ensemble.atoms {
        let row = AtomRow {
            interface: a.interface,
            x: a.point.x,
            xi: a.point.xi,
            mass: a.mass,
            direction: a.direction,
            bounces: a.bounces,
        };
        out.serialize(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ensemble_csv(r: impl Read) -> Result<Vec<AtomRow>> {
    csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}

pub fn write_ensemble_json(w: impl Write, ensemble: &MeasureEnsemble) -> Result<()> {
    serde_json::to_writer_pretty(w, ensemble).map_err(json_err)
}

pub fn read_ensemble_json(r: impl Read) -> Result<MeasureEnsemble> {
    serde_json::from_reader(r).map_err(json_err)
}

/// One operator norm from a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub model: String,
    /// "+", "-" or a sign word.
    pub iota: String,
    pub k: f64,
    pub h: f64,
    pub d_l: f64,
    pub d_r: f64,
    pub ppw: u32,
    pub norm: f64,
    /// Incidence angle of the witness data, when there is one.
    pub witness_angle: Option<f64>,
}

/// Oracle prediction for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub claim: String,
    pub geometry: serde_json::Value,
    pub prediction: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNormRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: f64,
    pub delta: f64,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub regime: Regime,
    pub estimate: f64,
}

pub fn write_json<T: Serialize>(w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(w, value).map_err(json_err)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(r: impl Read) -> Result<T> {
    serde_json::from_reader(r).map_err(json_err)
}

/// Columns n, error_norm, error_l2, omega_1, ..., omega_N.
pub fn write_history_csv(w: impl Write, history: &[HistoryRecord]) -> Result<()> {
    let n_sub = history.first().map_or(0, |h| h.per_subdomain.len());
    if history.iter().any(|h| h.per_subdomain.len() != n_sub) {
        return Err(Error::DimensionMismatch("history rows have different subdomain counts".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["n".to_string(), "error_norm".into(), "error_l2".into()];
    head.extend((1..=n_sub).map(|l| format!("omega_{l}")));
    out.write_record(&head).map_err(csv_err)?;
    // Debug formatting of f64 is the shortest exact round trip
    for h in history {
        let mut rec = vec![h.n.to_string(), format!("{:?}", h.error_norm), format!("{:?}", h.error_l2)];
        rec.extend(h.per_subdomain.iter().map(|v| format!("{v:?}")));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history_csv(r: impl Read) -> Result<Vec<HistoryRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Io(format!("bad number {s:?}: {e}")));
        let n = rec.get(0).unwrap_or("").parse::<usize>().map_err(|e| Error::Io(e.to_string()))?;
        let vals: Vec<f64> = rec.iter().skip(1).map(num).collect::<Result<_>>()?;
        if vals.len() < 2 {
            return Err(Error::Io(format!("history row {n} is too short")));
        }
        out.push(HistoryRecord { n, error_norm: vals[0], error_l2: vals[1], per_subdomain: vals[2..].to_vec() });
    }
    Ok(out)
}
