//! CSV and JSON writers. Every per-coin table uses the columns
//! `c,count,fraction`, with `count` blank when the values are not counts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{Distribution, StateSet, TransitionMatrix};
use crate::combinatorics::{ratio_to_f64, ExactPMF};
use crate::error::OutputError;
use crate::meanfield::{MeanFieldState, Trajectory};

pub const HISTOGRAM_COLUMNS: [&str; 3] = ["c", "count", "fraction"];

/// One row of the shared per-coin table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub c: i64,
    pub count: Option<u64>,
    pub fraction: f64,
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).has_headers(false).from_writer(w)
}

pub fn histogram_rows(hist: &BTreeMap<i64, u64>) -> Vec<HistogramRow> {
    let total: u64 = hist.values().sum();
    hist.iter()
        .map(|(&c, &n)| HistogramRow { c, count: Some(n), fraction: if total == 0 { 0.0 } else { n as f64 / total as f64 } })
        .collect()
}

pub fn distribution_rows(dist: &Distribution) -> Vec<HistogramRow> {
    dist.iter().map(|(&c, &f)| HistogramRow { c, count: None, fraction: f }).collect()
}

pub fn write_histogram_csv<W: Write>(w: W, rows: &[HistogramRow]) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(HISTOGRAM_COLUMNS)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the shared per-coin table back, checking the header.
pub fn read_histogram_csv<R: Read>(r: R) -> Result<Vec<HistogramRow>, OutputError> {
    let mut input = csv::ReaderBuilder::new().from_reader(r);
    let header = input.headers()?.clone();
    for (k, expected) in HISTOGRAM_COLUMNS.iter().enumerate() {
        let found = header.get(k).unwrap_or("");
        if found != *expected {
            return Err(OutputError::Header { expected: expected.to_string(), found: found.to_string() });
        }
    }
    let mut rows = Vec::new();
    for (k, record) in input.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |i: usize| OutputError::Value { column: HISTOGRAM_COLUMNS[i].into(), row: k + 1, value: field(i).into() };
        let c = field(0).parse().map_err(|_| bad(0))?;
        let count = match field(1) {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(1))?),
        };
        let fraction = field(2).parse().map_err(|_| bad(2))?;
        rows.push(HistogramRow { c, count, fraction });
    }
    Ok(rows)
}

/// `c,numerator,denominator,float64`, masses reduced to lowest terms.
pub fn write_exact_pmf_csv<W: Write>(w: W, pmf: &ExactPMF) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(["c", "numerator", "denominator", "float64"])?;
    for (c, m) in pmf.masses() {
        out.write_record([c.to_string(), m.numer().to_string(), m.denom().to_string(), ratio_to_f64(m).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Exact masses with big integers as decimal strings.
pub fn exact_pmf_json(pmf: &ExactPMF) -> Value {
    let masses: Vec<Value> = pmf
        .masses()
        .iter()
        .map(|(c, m)| {
            json!({
                "c": c,
                "numerator": m.numer().to_string(),
                "denominator": m.denom().to_string(),
                "float64": ratio_to_f64(m),
            })
        })
        .collect();
    let mean = pmf.mean();
    json!({
        "support": pmf.support().map(|(lo, hi)| vec![lo, hi]),
        "mean": format!("{}/{}", mean.numer(), mean.denom()),
        "mean_float64": ratio_to_f64(&mean),
        "masses": masses,
    })
}

/// Bank-summed profile as a per-coin table.
pub fn profile_rows(state: &MeanFieldState) -> Vec<HistogramRow> {
    state.profile().into_iter().map(|(c, u)| HistogramRow { c, count: None, fraction: u }).collect()
}

/// `t,c,u_c` for every snapshot, skipping exact zeros.
pub fn write_trajectory_csv<W: Write>(w: W, trajectory: &Trajectory) -> Result<(), OutputError> {
    let mut out = writer(w);
    out.write_record(["t", "c", "u_c"])?;
    for (t, state) in &trajectory.snapshots {
        for (c, u) in state.profile() {
            if u != 0.0 {
                out.write_record([t.to_string(), c.to_string(), u.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `from,to,numerator,denominator`, states written as `;`-joined coin vectors.
pub fn write_transition_csv<W: Write>(w: W, states: &StateSet, matrix: &TransitionMatrix) -> Result<(), OutputError> {
    let name = |s: &[i64]| s.iter().map(i64::to_string).collect::<Vec<_>>().join(";");
    let mut out = writer(w);
    out.write_record(["from", "to", "numerator", "denominator"])?;
    for (i, s) in states.states().iter().enumerate() {
        for &(j, p) in matrix.row(i) {
            out.write_record([name(s), name(&states.states()[j]), p.numer().to_string(), p.denom().to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<(), OutputError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
