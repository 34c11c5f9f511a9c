//! File formats.
//!
//! Measure JSON:
//! `{"type":"discrete","dim":m,"points":[[..]..],"weights":[..]}` or
//! `{"type":"grid","ranges":[[lo,hi]..],"cells":[..],"density":[..]}`
//! (density row-major, last axis fastest).
//!
//! Cost JSON: `{"type":"quadratic"}`,
//! `{"type":"embedded","curve":{"kind":"segment"|"arc"|"poly", ..},"form":"sqdist"|"dot"}`
//! or `{"type":"tabulated","matrix":[[..]..]}`.
//!
//! CSV point clouds: one point per row; an optional header names the columns
//! and may declare a trailing `weight` column. Headerless files are all
//! coordinates with uniform weights.
//!
//! All writers emit floats with 17 significant digits, which round-trips
//! `f64` exactly.

use crate::cost::CostSpec;
use crate::measures::{Coupling, DiscreteMeasure, GridMeasure, SplitFunction, TriCoupling};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A measure file is either a point cloud or a grid density.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Measure {
    Discrete {
        dim: usize,
        points: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    },
    Grid {
        ranges: Vec<[f64; 2]>,
        cells: Vec<usize>,
        density: Vec<f64>,
    },
}

/// Parsed measure, validated.
#[derive(Debug, Clone)]
pub enum AnyMeasure {
    Discrete(DiscreteMeasure),
    Grid(GridMeasure),
}

impl AnyMeasure {
    /// The measure as a point cloud, converting grids by the midpoint rule.
    pub fn into_discrete(self) -> Result<DiscreteMeasure> {
        match self {
            AnyMeasure::Discrete(d) => Ok(d),
            AnyMeasure::Grid(g) => g.to_discrete(),
        }
    }

    pub fn as_grid(&self) -> Result<&GridMeasure> {
        match self {
            AnyMeasure::Grid(g) => Ok(g),
            AnyMeasure::Discrete(_) => {
                Err(Error::Validation("expected a grid measure, got a point cloud".into()))
            }
        }
    }
}

/// File format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            other => Err(Error::Validation(format!(
                "cannot infer format from extension {other:?}; use .json or .csv"
            ))),
        }
    }
}

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.to_string() }
}

/// Loads a measure from JSON or CSV. Without `renormalize`, total mass must
/// already be 1 within 1e-9.
pub fn load_measure(path: &Path, format: Format, renormalize: bool) -> Result<AnyMeasure> {
    match format {
        Format::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
            let parsed: Measure = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
            measure_from_parsed(parsed, renormalize)
        }
        Format::Csv => load_csv_cloud(path, renormalize).map(AnyMeasure::Discrete),
    }
}

fn measure_from_parsed(m: Measure, renormalize: bool) -> Result<AnyMeasure> {
    match m {
        Measure::Discrete { dim, points, weights } => {
            if let Some(p) = points.iter().find(|p| p.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            let weights = weights.unwrap_or_else(|| vec![1.0 / points.len() as f64; points.len()]);
            let d = if renormalize {
                DiscreteMeasure::new_renormalized(points, weights)?
            } else {
                DiscreteMeasure::new(points, weights)?
            };
            Ok(AnyMeasure::Discrete(d))
        }
        Measure::Grid { ranges, cells, density } => {
            let g = if renormalize {
                GridMeasure::new_renormalized(ranges, cells, density)?
            } else {
                GridMeasure::new(ranges, cells, density)?
            };
            Ok(AnyMeasure::Grid(g))
        }
    }
}

fn load_csv_cloud(path: &Path, renormalize: bool) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(parse_err(path, "empty CSV"));
    }
    // A header is any first row that does not parse as all-numeric.
    let first_numeric = rows[0].iter().all(|s| s.parse::<f64>().is_ok());
    let (header, data_start): (Option<&[String]>, usize) =
        if first_numeric { (None, 0) } else { (Some(&rows[0]), 1) };
    let weight_col = header.and_then(|h| {
        h.iter().position(|name| name.eq_ignore_ascii_case("weight"))
    });
    if rows.len() == data_start {
        return Err(parse_err(path, "CSV has a header but no data rows"));
    }
    let width = rows[data_start].len();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (line, row) in rows[data_start..].iter().enumerate() {
        if row.len() != width {
            return Err(parse_err(path, format!("row {}: ragged width {}", line + data_start + 1, row.len())));
        }
        let mut coords = Vec::with_capacity(width);
        let mut w = None;
        for (col, cell) in row.iter().enumerate() {
            let val: f64 = cell.parse().map_err(|_| {
                parse_err(path, format!("row {}, column {}: not a number: {cell:?}", line + data_start + 1, col + 1))
            })?;
            if Some(col) == weight_col {
                w = Some(val);
            } else {
                coords.push(val);
            }
        }
        points.push(coords);
        if let Some(w) = w {
            weights.push(w);
        }
    }
    let n = points.len();
    let weights = if weights.is_empty() { vec![1.0 / n as f64; n] } else { weights };
    if renormalize {
        DiscreteMeasure::new_renormalized(points, weights)
    } else {
        DiscreteMeasure::new(points, weights)
    }
}

/// Saves a measure as JSON (17-significant-digit floats).
pub fn save_measure_json(path: &Path, m: &AnyMeasure) -> Result<()> {
    let parsed = match m {
        AnyMeasure::Discrete(d) => Measure::Discrete {
            dim: d.dim(),
            points: d.points().to_vec(),
            weights: Some(d.weights().to_vec()),
        },
        AnyMeasure::Grid(g) => Measure::Grid {
            ranges: g.ranges().to_vec(),
            cells: g.cells().to_vec(),
            density: g.density().to_vec(),
        },
    };
    write_json_value(path, &serde_json::to_value(&parsed).map_err(|e| parse_err(path, e))?)
}

/// Saves a point cloud as CSV with a header and trailing weight column.
pub fn save_measure_csv(path: &Path, d: &DiscreteMeasure) -> Result<()> {
    let mut out = String::new();
    for i in 0..d.dim() {
        out.push_str(&format!("x{i},"));
    }
    out.push_str("weight\n");
    for (p, &w) in d.points().iter().zip(d.weights()) {
        for c in p {
            out.push_str(&fmt_f64(*c));
            out.push(',');
        }
        out.push_str(&fmt_f64(w));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| parse_err(path, e))
}

pub fn load_cost(path: &Path) -> Result<CostSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let c: CostSpec = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    c.validate()?;
    Ok(c)
}

pub fn save_cost(path: &Path, c: &CostSpec) -> Result<()> {
    write_json_value(path, &serde_json::to_value(c).map_err(|e| parse_err(path, e))?)
}

pub fn load_coupling(path: &Path) -> Result<Coupling> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let c: Coupling = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    // Re-validate: serde bypasses the constructor.
    Coupling::new(c.first().clone(), c.second().clone(), c.entries().to_vec(), c.cost_value())
}

pub fn save_coupling(path: &Path, c: &Coupling) -> Result<()> {
    write_json_value(path, &serde_json::to_value(c).map_err(|e| parse_err(path, e))?)
}

pub fn load_tricoupling(path: &Path) -> Result<TriCoupling> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let g: TriCoupling = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    TriCoupling::new(g.nu().clone(), g.mu0().clone(), g.mu1().clone(), g.entries().to_vec())
}

pub fn save_tricoupling(path: &Path, g: &TriCoupling) -> Result<()> {
    write_json_value(path, &serde_json::to_value(g).map_err(|e| parse_err(path, e))?)
}

pub fn load_split_function(path: &Path) -> Result<SplitFunction> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    let k: SplitFunction = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    SplitFunction::new(k.interval(), k.grid().to_vec(), k.values().to_vec(), k.bounds())
}

pub fn save_split_function(path: &Path, k: &SplitFunction) -> Result<()> {
    write_json_value(path, &serde_json::to_value(k).map_err(|e| parse_err(path, e))?)
}

fn write_json_value(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut out = String::new();
    render_json(v, &mut out);
    out.push('\n');
    std::fs::write(path, out).map_err(|e| parse_err(path, e))
}

/// Renders a JSON value with floats at 17 significant digits. Key order is
/// whatever `serde_json::Value` holds (struct-derived values keep field
/// order is not guaranteed by maps, so reports that need byte-stable output
/// should be built from structs serialized directly to `Value` once).
pub fn render_json(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        serde_json::Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (idx, item) in items.iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                render_json(item, out);
            }
            out.push(']');
        }
        serde_json::Value::Object(map) => {
            out.push('{');
            for (idx, (k, val)) in map.iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serialization"));
                out.push(':');
                render_json(val, out);
            }
            out.push('}');
        }
    }
}

/// Formats an `f64` with 17 significant digits (lossless round-trip).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
