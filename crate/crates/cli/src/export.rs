//! CSV artifacts: solutions, PDE snapshots, iteration traces, and the vector
//! files read by `certify`.

use std::fmt::Write as _;
use std::path::Path;

use ballcrit::pde::RectDomain;
use ballcrit::solvers::TraceRow;
use ballcrit::{CriticalPoint, GridShape, GridVector};

use crate::error::CliError;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// `i,j,u` rows in canonical order; `u` at full precision.
pub fn solution_csv(values: &GridVector) -> String {
    let shape = values.shape();
    let mut out = String::from("i,j,u\n");
    for (k, u) in values.values().iter().enumerate() {
        let (i, j) = shape.site(k);
        writeln!(out, "{i},{j},{u}").unwrap();
    }
    out
}

/// Writes `point` as an `i,j,u` CSV. Nothing is created when the shapes differ.
pub fn export_solution(point: &CriticalPoint, shape: GridShape, path: &Path) -> Result<(), CliError> {
    if point.point.shape() != shape {
        return Err(CliError::Validation(format!(
            "shape mismatch: point is {}, export requested {}",
            point.point.shape(),
            shape
        )));
    }
    write_file(path, &solution_csv(&point.point))
}

/// `x,y,u` rows at the nodes of `dom`.
pub fn export_snapshot(dom: &RectDomain, values: &[f64], path: &Path) -> Result<(), CliError> {
    if values.len() != dom.interior().dim() {
        return Err(CliError::Validation(format!(
            "snapshot has {} values, domain has {} nodes",
            values.len(),
            dom.interior().dim()
        )));
    }
    let mut out = String::from("x,y,u\n");
    let shape = dom.interior();
    for (k, u) in values.iter().enumerate() {
        let (i, j) = shape.site(k);
        let (x, y) = dom.node(i, j);
        writeln!(out, "{x},{y},{u}").unwrap();
    }
    write_file(path, &out)
}

/// One block of trace rows tagged with the λ index and solver stage.
pub struct TraceBlock<'a> {
    pub lambda_index: usize,
    pub stage: &'a str,
    pub rows: &'a [TraceRow],
}

pub fn export_traces(blocks: &[TraceBlock<'_>], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("lambda_index,stage,iteration,value,residual,norm\n");
    for b in blocks {
        for r in b.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                b.lambda_index, b.stage, r.iteration, r.value, r.residual, r.norm
            )
            .unwrap();
        }
    }
    write_file(path, &out)
}

/// Reads a candidate vector: either an `i,j,u` CSV or plain numbers in
/// canonical order separated by whitespace or commas.
pub fn read_vector(path: &Path, shape: GridShape) -> Result<GridVector, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read vector file {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Io(format!("unreadable vector file {}: {msg}", path.display()));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    let values = if lines.peek().map(|l| l.replace(' ', "")) == Some("i,j,u".into()) {
        lines.next();
        let mut values = vec![f64::NAN; shape.dim()];
        let mut seen = vec![false; shape.dim()];
        for (row, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad(format!("row {} has {} fields", row + 1, f.len())));
            }
            let parse_idx = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("row {}: {e}", row + 1)));
            let (i, j) = (parse_idx(f[0])?, parse_idx(f[1])?);
            if !(1..=shape.m).contains(&i) || !(1..=shape.n).contains(&j) {
                return Err(bad(format!("row {}: site ({i},{j}) outside {shape}", row + 1)));
            }
            let k = shape.index(i, j);
            if seen[k] {
                return Err(bad(format!("site ({i},{j}) listed twice")));
            }
            seen[k] = true;
            values[k] = f[2].parse().map_err(|e| bad(format!("row {}: {e}", row + 1)))?;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let (i, j) = shape.site(k);
            return Err(bad(format!("site ({i},{j}) missing")));
        }
        values
    } else {
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    GridVector::from_vec(shape, values).map_err(|e| bad(e.to_string()))
}
