use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::{Error, Result};

use super::episode::SimulationTrace;

/// Column-named numeric table; `None` marks cells that do not apply to a row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TraceTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::IncompleteTrace(format!("missing column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Bitwise comparison that treats NaN cells as equal to each other.
    pub fn same_values(&self, other: &TraceTable) -> bool {
        let bits = |v: &Option<f64>| v.map(f64::to_bits);
        self.headers == other.headers
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.iter().map(bits).eq(b.iter().map(bits)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Dims {
    n: usize,
    m: usize,
    p: usize,
    hops: usize,
}

fn dims(trace: &SimulationTrace) -> Dims {
    trace
        .loops
        .iter()
        .filter_map(|l| l.steps.first().map(|s| (l.hops, s)))
        .fold(Dims::default(), |d, (hops, s)| Dims {
            n: d.n.max(s.x.len()),
            m: d.m.max(s.y.len()),
            p: d.p.max(s.u.len()),
            hops: d.hops.max(hops),
        })
}

pub fn trace_headers(trace: &SimulationTrace) -> Vec<String> {
    let d = dims(trace);
    let mut h = vec!["k".to_string(), "loop".to_string()];
    fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
        (0..count).map(move |i| format!("{prefix}{i}"))
    }
    h.extend(indexed("x", d.n));
    h.extend(indexed("y", d.m));
    h.extend(indexed("u", d.p));
    h.extend(indexed("zeta", d.n));
    for j in 1..=d.hops + 1 {
        h.extend(indexed(&format!("xhat{j}_"), d.n));
    }
    h.extend((1..=d.hops + 1).map(|j| format!("aoi{j}")));
    h.extend((1..=d.hops).map(|j| format!("raoi{j}")));
    for j in 1..=d.hops {
        h.extend(indexed(&format!("xtilde{j}_"), d.n));
    }
    h.extend((1..=d.hops).map(|j| format!("dvoi{j}")));
    h.extend((1..=d.hops).map(|j| format!("delta{j}")));
    h.push("stage_cost".to_string());
    h
}

/// One row per `(k, loop)`, time-major.
pub fn trace_table(trace: &SimulationTrace) -> TraceTable {
    let d = dims(trace);
    let headers = trace_headers(trace);
    let mut rows = Vec::new();
    for k in 0..trace.horizon {
        for lt in &trace.loops {
            let Some(s) = lt.steps.get(k) else { continue };
            let mut row: Vec<Option<f64>> = Vec::with_capacity(headers.len());
            let push_vec = |row: &mut Vec<Option<f64>>, v: Option<&DVector<f64>>, width: usize| {
                for i in 0..width {
                    row.push(v.and_then(|v| v.get(i).copied()));
                }
            };
            row.push(Some(k as f64));
            row.push(Some(lt.loop_index as f64));
            push_vec(&mut row, Some(&s.x), d.n);
            push_vec(&mut row, Some(&s.y), d.m);
            push_vec(&mut row, Some(&s.u), d.p);
            push_vec(&mut row, Some(&s.zeta), d.n);
            for j in 0..=d.hops {
                push_vec(&mut row, s.xhat.get(j), d.n);
            }
            row.extend((0..=d.hops).map(|j| s.aoi.get(j).map(|&a| a as f64)));
            row.extend((0..d.hops).map(|j| s.raoi.get(j).map(|&a| a as f64)));
            for j in 0..d.hops {
                push_vec(&mut row, s.xtilde.get(j), d.n);
            }
            row.extend((0..d.hops).map(|j| s.dvoi.get(j).copied()));
            row.extend((0..d.hops).map(|j| s.delta.get(j).map(|&b| if b { 1.0 } else { 0.0 })));
            row.push(Some(s.stage_cost));
            rows.push(row);
        }
    }
    TraceTable { headers, rows }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Csv(csv::Error::from(std::io::Error::other(format!("{}: {kind:?}", path.display())))),
    }
}

/// Integers print without a fractional part; other values use the shortest
/// representation that parses back to the same bits.
fn format_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_table<W: Write>(table: &TraceTable, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(&table.headers)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|&v| format_cell(v)))?;
    }
    writer.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn export_trace(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    write_table(&trace_table(trace), BufWriter::new(file)).map_err(|e| match e {
        Error::Csv(c) => csv_error(path, c),
        other => other,
    })
}

pub fn read_table(path: &Path) -> Result<TraceTable> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::IncompleteTrace(format!("{}: bad cell '{cell}'", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(TraceTable { headers, rows })
}

pub fn export_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(io_error(path))
}

pub fn export_summary(metrics: &super::monte_carlo::SummaryMetrics, path: &Path) -> Result<()> {
    export_json(metrics, path)
}
