//! Grid files.
//!
//! CSV layout: one `# axis <i>: <lower> <upper> <count> [periodic]` line per
//! axis, then one `<index...>,<coord...>,<value>` row per node in row-major
//! order. Other `#` lines are comments. The JSON variant is the serde form of
//! [`LevelGrid`].

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{GridGeometry, LevelGrid};
use crate::{Error, Result};

pub fn write_grid_csv(grid: &LevelGrid, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let g = &grid.geometry;
    let mut emit = || -> std::io::Result<()> {
        for axis in 0..g.dims() {
            write!(w, "# axis {axis}: {} {} {}", g.lower[axis], g.upper[axis], g.counts[axis])?;
            if g.periodic[axis] {
                write!(w, " periodic")?;
            }
            writeln!(w)?;
        }
        let names: Vec<String> = (0..g.dims())
            .map(|a| format!("i{a}"))
            .chain((0..g.dims()).map(|a| format!("x{a}")))
            .collect();
        writeln!(w, "# columns: {},value", names.join(","))?;
        for (flat, value) in grid.values.iter().enumerate() {
            let idx = g.unravel(flat);
            for i in &idx {
                write!(w, "{i},")?;
            }
            for (axis, &i) in idx.iter().enumerate() {
                write!(w, "{},", g.coordinate(axis, i))?;
            }
            writeln!(w, "{value}")?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

pub fn write_grid_json(grid: &LevelGrid, path: &Path) -> Result<()> {
    let text = serde_json::to_string(grid).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_grid_csv(path: &Path) -> Result<LevelGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn parse_csv(text: &str, path: &Path) -> Result<LevelGrid> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut counts = Vec::new();
    let mut periodic = Vec::new();
    let mut geometry: Option<GridGeometry> = None;
    let mut values = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let Some(spec) = rest.strip_prefix("axis") else { continue };
            if geometry.is_some() {
                return Err(parse_err(path, line_no, "axis header after data rows"));
            }
            let (index, fields) = spec
                .split_once(':')
                .ok_or_else(|| parse_err(path, line_no, "expected `# axis <i>: lower upper count`"))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad axis index `{}`", index.trim())))?;
            if index != lower.len() {
                return Err(parse_err(path, line_no, format!("expected axis {}, found axis {index}", lower.len())));
            }
            let parts: Vec<&str> = fields.split_whitespace().collect();
            if !(parts.len() == 3 || (parts.len() == 4 && parts[3] == "periodic")) {
                return Err(parse_err(path, line_no, "expected `lower upper count [periodic]`"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(path, line_no, format!("bad number `{s}`")))
            };
            lower.push(num(parts[0])?);
            upper.push(num(parts[1])?);
            counts.push(
                parts[2]
                    .parse::<usize>()
                    .map_err(|_| parse_err(path, line_no, format!("bad count `{}`", parts[2])))?,
            );
            periodic.push(parts.len() == 4);
            continue;
        }
        let g = match &geometry {
            Some(g) => g,
            None => {
                let g = GridGeometry::new(lower.clone(), upper.clone(), counts.clone(), periodic.clone())
                    .map_err(|e| parse_err(path, line_no, e.to_string()))?;
                geometry.insert(g)
            }
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let d = g.dims();
        if fields.len() != 2 * d + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} columns, found {}", 2 * d + 1, fields.len()),
            ));
        }
        let expected = g.unravel(values.len());
        if values.len() >= g.len() {
            return Err(parse_err(path, line_no, "more rows than grid nodes"));
        }
        for (axis, field) in fields[..d].iter().enumerate() {
            let i: usize = field
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad index `{field}`")))?;
            if i != expected[axis] {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("rows out of order: expected index {:?}", expected),
                ));
            }
        }
        let value: f64 = fields[2 * d]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad value `{}`", fields[2 * d])))?;
        if !value.is_finite() {
            return Err(parse_err(path, line_no, "non-finite value"));
        }
        values.push(value);
    }
    let last = text.lines().count();
    let geometry = geometry.ok_or_else(|| parse_err(path, last, "no data rows"))?;
    if values.len() != geometry.len() {
        return Err(parse_err(
            path,
            last,
            format!("found {} rows, grid has {} nodes", values.len(), geometry.len()),
        ));
    }
    LevelGrid::new(geometry, values)
}

pub fn read_grid_json(path: &Path) -> Result<LevelGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let grid: LevelGrid = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    LevelGrid::new(grid.geometry, grid.values).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Dispatches on the extension: `.json` or CSV otherwise.
pub fn read_grid(path: &Path) -> Result<LevelGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_grid_json(path),
        _ => read_grid_csv(path),
    }
}
