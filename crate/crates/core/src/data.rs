//! Generating data tables and moving them through CSV.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::SurfacePoint;
use crate::error::{Error, Result};
use crate::expr::{self, Arity};
use crate::grid::{DataTable, DomainGrid, NoiseKind, NoiseSpec, Provenance};

/// Evaluate `expression` over the grid and add seeded integer noise.
pub fn generate(expression: &str, dims: &[usize], noise: &NoiseSpec) -> Result<DataTable> {
    noise.validate()?;
    let grid = DomainGrid::new(dims.to_vec())?;
    let ast = expr::parse(expression, Arity::new(dims.len(), 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gaussian = match noise.kind {
        NoiseKind::Gaussian { sigma } => Some(
            Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("gaussian noise: {e}")))?,
        ),
        _ => None,
    };
    let mut values = Vec::with_capacity(grid.len());
    for x in grid.points() {
        let clean = ast.evaluate(&x, &[])?;
        let e = match (noise.kind, &gaussian) {
            (NoiseKind::None, _) => 0,
            (NoiseKind::Uniform { half_width }, _) => rng.gen_range(-half_width..=half_width),
            (NoiseKind::Gaussian { .. }, Some(n)) => n.sample(&mut rng).round() as i64,
            (NoiseKind::Gaussian { .. }, None) => unreachable!(),
        };
        values.push(clean.checked_add(e).ok_or_else(|| Error::Overflow {
            expr: format!("{expression} + noise"),
        })?);
    }
    DataTable::new(
        grid,
        values,
        Provenance::Generated {
            expression: expression.to_string(),
            noise: *noise,
        },
    )
}

fn data_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Read a table with header `x1,…,xd,f`. Rows may come in any order but must
/// cover the grid `{0..n1-1} × … × {0..nd-1}` exactly once.
pub fn read_csv(path: &Path) -> Result<DataTable> {
    let file = std::fs::File::open(path).map_err(|e| data_error(path, e.to_string()))?;
    read_csv_from(file, path)
}

pub fn read_csv_from(reader: impl Read, path: &Path) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| data_error(path, e.to_string()))?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["f".to_string()]).collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(data_error(
            path,
            format!("header must be {}, found {}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows: Vec<(Vec<i64>, i64, u64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| data_error(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut coords = Vec::with_capacity(d);
        for (j, field) in record.iter().take(d).enumerate() {
            let c: i64 = field
                .parse()
                .map_err(|_| data_error(path, format!("row {line}: x{} = `{field}` is not an integer", j + 1)))?;
            if c < 0 {
                return Err(data_error(path, format!("row {line}: x{} = {c} is negative", j + 1)));
            }
            coords.push(c);
        }
        let fv = &record[d];
        let value: i64 = fv
            .parse()
            .map_err(|_| data_error(path, format!("row {line}: f = `{fv}` is not an integer")))?;
        rows.push((coords, value, line));
    }
    if rows.is_empty() {
        return Err(data_error(path, "no data rows"));
    }
    let dims: Vec<usize> = (0..d)
        .map(|j| rows.iter().map(|r| r.0[j]).max().unwrap_or(0) as usize + 1)
        .collect();
    let grid = DomainGrid::new(dims).map_err(|e| data_error(path, e.to_string()))?;
    let mut slots: Vec<Option<i64>> = vec![None; grid.len()];
    let mut seen: HashMap<usize, u64> = HashMap::new();
    for (coords, value, line) in &rows {
        let index = grid.index_of(coords).expect("coordinates lie inside the inferred grid");
        if let Some(first) = seen.insert(index, *line) {
            return Err(data_error(
                path,
                format!("row {line}: duplicate grid point {coords:?} (first at row {first})"),
            ));
        }
        slots[index] = Some(*value);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(data_error(
            path,
            format!(
                "incomplete grid: point {:?} is missing ({} of {} rows present)",
                grid.point(missing),
                rows.len(),
                grid.len()
            ),
        ));
    }
    DataTable::new(grid, slots.into_iter().flatten().collect(), Provenance::Ingested)
}

pub fn write_csv(table: &DataTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_to(table, std::io::BufWriter::new(file))
}

pub fn write_csv_to(table: &DataTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = table.grid().ndim();
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["f".to_string()]).collect();
    w.write_record(&header).map_err(csv_io)?;
    for (x, v) in table.grid().points().zip(table.values()) {
        let row: Vec<String> = x.iter().map(i64::to_string).chain([v.to_string()]).collect();
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Surface points as CSV: `r,ystar,p_zero,low,mid,high,max_weight`.
pub fn write_surface(points: &[SurfacePoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["r", "ystar", "p_zero", "low", "mid", "high", "max_weight"])
        .map_err(csv_io)?;
    for p in points {
        w.write_record([
            p.r.to_string(),
            format!("{:.6}", p.ystar),
            format!("{:.12}", p.p_zero),
            format!("{:.12}", p.weights[0]),
            format!("{:.12}", p.weights[1]),
            format!("{:.12}", p.weights[2]),
            format!("{:.12}", p.max_weight()),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
