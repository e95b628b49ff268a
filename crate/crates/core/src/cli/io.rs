use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{AdaptedLattice, LatticeProcess, Measure};
use crate::solver::TraceEntry;

pub const PROCESS_HEADER: [&str; 5] = ["path", "k", "exchange", "component", "value"];
pub const MEASURE_HEADER: [&str; 2] = ["path", "weight"];

/// Writes one row per `(path, k, exchange, component)` in lexicographic
/// path order. Values use the shortest representation that parses back
/// to the same `f64`.
pub fn write_process_csv(w: impl Write, g: &LatticeProcess) -> Result<()> {
    let lattice = g.lattice();
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(PROCESS_HEADER)?;
    for path in 0..lattice.num_paths() {
        let label = lattice.path_label(path);
        for k in 0..=lattice.depth() {
            let node = g.value(k, path);
            for i in 0..g.exchanges() {
                for c in 0..g.dim() {
                    out.write_record([
                        label.clone(),
                        k.to_string(),
                        i.to_string(),
                        c.to_string(),
                        node[i * g.dim() + c].to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

struct Row {
    line: usize,
    digits: Vec<usize>,
    k: usize,
    exchange: usize,
    component: usize,
    value: f64,
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    record[i]
        .parse()
        .map_err(|_| Error::Ingestion(format!("line {line}: bad {} {:?}", PROCESS_HEADER[i], &record[i])))
}

/// Reads a process file. Branching, depth, exchange count and dimension
/// are inferred; every cell must appear exactly once and the data must be
/// adapted.
pub fn read_process_csv(r: impl Read) -> Result<LatticeProcess> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != PROCESS_HEADER {
        return Err(Error::Ingestion(format!(
            "expected header `{}`, got `{}`",
            PROCESS_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        let digits = record[0]
            .chars()
            .map(|c| c.to_digit(36).map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .filter(|d| !d.is_empty())
            .ok_or_else(|| Error::Ingestion(format!("line {line}: bad path {:?}", &record[0])))?;
        let value: f64 = field(&record, 4, line)?;
        if !value.is_finite() {
            return Err(Error::Ingestion(format!("line {line}: value {value} is not finite")));
        }
        rows.push(Row {
            line,
            digits,
            k: field(&record, 1, line)?,
            exchange: field(&record, 2, line)?,
            component: field(&record, 3, line)?,
            value,
        });
    }
    let first = rows.first().ok_or_else(|| Error::Ingestion("process file has no rows".into()))?;
    let depth = first.digits.len();
    if let Some(r) = rows.iter().find(|r| r.digits.len() != depth) {
        return Err(Error::Ingestion(format!("line {}: path length differs from {depth}", r.line)));
    }
    let branching = rows.iter().flat_map(|r| r.digits.iter().copied()).max().unwrap_or(0) + 1;
    let lattice = AdaptedLattice::new(branching.max(2), depth).map_err(|e| Error::Ingestion(e.to_string()))?;
    let exchanges = rows.iter().map(|r| r.exchange).max().unwrap_or(0) + 1;
    let dim = rows.iter().map(|r| r.component).max().unwrap_or(0) + 1;
    let width = exchanges * dim;
    let paths = lattice.num_paths();
    let expected = paths * (depth + 1) * width;
    if rows.len() != expected {
        return Err(Error::Ingestion(format!(
            "expected {expected} rows for {paths} paths, {} time levels and {width} values, got {}",
            depth + 1,
            rows.len()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut values = vec![vec![0.0; paths * width]; depth + 1];
    for r in &rows {
        if r.k > depth {
            return Err(Error::Ingestion(format!("line {}: time index {} exceeds depth {depth}", r.line, r.k)));
        }
        let path = lattice.path_from_digits(&r.digits)?;
        if !seen.insert((path, r.k, r.exchange, r.component)) {
            return Err(Error::Ingestion(format!("line {}: duplicate entry", r.line)));
        }
        values[r.k][path * width + r.exchange * dim + r.component] = r.value;
    }
    LatticeProcess::from_path_values(lattice, exchanges, dim, &values)
}

pub fn write_measure_csv(w: impl Write, lattice: &AdaptedLattice, q: &Measure) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(MEASURE_HEADER)?;
    for (path, weight) in q.weights().iter().enumerate() {
        out.write_record([lattice.path_label(path), weight.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a measure file; every path of `lattice` must appear once.
pub fn read_measure_csv(r: impl Read, lattice: &AdaptedLattice) -> Result<Measure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != MEASURE_HEADER {
        return Err(Error::Ingestion(format!("expected header `{}`", MEASURE_HEADER.join(","))));
    }
    let mut weights = vec![None; lattice.num_paths()];
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        let path = lattice
            .parse_path_label(&record[0])
            .map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        let w: f64 = record[1]
            .parse()
            .map_err(|_| Error::Ingestion(format!("line {line}: bad weight {:?}", &record[1])))?;
        if weights[path].replace(w).is_some() {
            return Err(Error::Ingestion(format!("line {line}: duplicate path {}", &record[0])));
        }
    }
    let weights = weights
        .into_iter()
        .enumerate()
        .map(|(p, w)| w.ok_or_else(|| Error::Ingestion(format!("path {} is missing", lattice.path_label(p)))))
        .collect::<Result<Vec<_>>>()?;
    Measure::new(weights)
}

pub fn write_trace_csv(w: impl Write, trace: &[TraceEntry]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["iteration", "value", "step", "max_violation"])?;
    for t in trace {
        out.write_record([t.iteration.to_string(), t.value.to_string(), t.step.to_string(), t.max_violation.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline; key order follows the struct.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_process_file(path: &Path) -> Result<LatticeProcess> {
    read_process_csv(fs::File::open(path)?)
}

pub fn write_process_file(path: &Path, g: &LatticeProcess) -> Result<()> {
    let mut buf = Vec::new();
    write_process_csv(&mut buf, g)?;
    fs::write(path, buf)?;
    Ok(())
}
