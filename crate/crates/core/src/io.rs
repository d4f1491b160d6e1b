//! On-disk formats: field CSVs with JSON sidecars, record directories,
//! trajectory CSVs and pretty JSON reports.
//!
//! Numbers are written in Rust's shortest round-trip form so identical
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::AwSample;
use crate::error::{BohmError, Result};
use crate::evolution::EvolutionRecord;
use crate::grid::{Axis, Boundary, Grid};
use crate::guidance::Trajectory;
use crate::wavefunction::{Units, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub axes: Vec<Axis>,
    pub boundary: Boundary,
    pub time: f64,
    pub hbar: f64,
    pub mass: f64,
    pub components: usize,
    pub complex: bool,
}

impl FieldMeta {
    fn of(psi: &WaveFunction) -> Self {
        Self {
            axes: psi.grid().axes().to_vec(),
            boundary: psi.grid().boundary(),
            time: psi.time,
            hbar: psi.units.hbar,
            mass: psi.units.mass,
            components: psi.components(),
            complex: true,
        }
    }
}

fn index_header(dims: usize) -> Vec<String> {
    ["i", "j"][..dims].iter().map(|s| s.to_string()).collect()
}

fn push_index(line: &mut String, grid: &Grid, flat: usize) {
    let idx = grid.multi_index(flat);
    for i in idx.iter().take(grid.dims()) {
        let _ = write!(line, "{i},");
    }
}

/// CSV of a complex multi-component field: index columns, then re/im per
/// component.
pub fn field_csv(grid: &Grid, data: &[Complex64], components: usize) -> String {
    let n = grid.len();
    let mut cols = index_header(grid.dims());
    if components == 1 {
        cols.extend(["re".into(), "im".into()]);
    } else {
        for c in 0..components {
            cols.push(format!("re{c}"));
            cols.push(format!("im{c}"));
        }
    }
    let mut out = cols.join(",");
    out.push('\n');
    for flat in 0..n {
        let mut line = String::new();
        push_index(&mut line, grid, flat);
        let vals: Vec<String> = (0..components)
            .flat_map(|c| {
                let z = data[c * n + flat];
                [format!("{:e}", z.re), format!("{:e}", z.im)]
            })
            .collect();
        line.push_str(&vals.join(","));
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// CSV of a real field: index columns and `value`.
pub fn real_field_csv(grid: &Grid, values: &[f64]) -> String {
    let mut out = index_header(grid.dims()).join(",");
    out.push_str(",value\n");
    for (flat, v) in values.iter().enumerate() {
        push_index(&mut out, grid, flat);
        let _ = writeln!(out, "{v:e}");
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `stem.csv` and its sidecar `stem.json` into `dir`.
pub fn write_wave_function(dir: &Path, stem: &str, psi: &WaveFunction) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(format!("{stem}.csv")),
        field_csv(psi.grid(), psi.amplitudes(), psi.components()),
    )?;
    write_json(&dir.join(format!("{stem}.json")), &FieldMeta::of(psi))
}

/// Reads back a field written by [`write_wave_function`].
pub fn read_wave_function(dir: &Path, stem: &str) -> Result<WaveFunction> {
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let grid = Grid::new(meta.axes.clone(), meta.boundary)?;
    let text = fs::read_to_string(dir.join(format!("{stem}.csv")))?;
    let n = grid.len();
    let dims = grid.dims();
    let mut data = vec![Complex64::new(0.0, 0.0); n * meta.components];
    let mut rows = 0;
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims + 2 * meta.components {
            return Err(BohmError::Shape(format!("{stem}.csv line {}: {} columns", line_no + 1, fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| BohmError::Shape(format!("{stem}.csv line {}: bad number `{s}`", line_no + 1)))
        };
        let mut idx = [0usize; 2];
        for a in 0..dims {
            idx[a] = fields[a]
                .parse()
                .map_err(|_| BohmError::Shape(format!("{stem}.csv line {}: bad index", line_no + 1)))?;
        }
        let flat = grid.flat_index(&idx[..dims]);
        for c in 0..meta.components {
            data[c * n + flat] = Complex64::new(num(fields[dims + 2 * c])?, num(fields[dims + 2 * c + 1])?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(BohmError::Shape(format!("{stem}.csv has {rows} rows, grid has {n} points")));
    }
    let units = Units {
        hbar: meta.hbar,
        mass: meta.mass,
    };
    Ok(WaveFunction::new(grid, meta.components, data, units)?.with_time(meta.time))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub method: String,
    pub dt: f64,
    pub stride: usize,
    pub potential: String,
    pub times: Vec<f64>,
    pub files: Vec<String>,
}

/// Writes a record as `record.json` plus one field dump per snapshot.
pub fn write_record(dir: &Path, record: &EvolutionRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(record.len());
    for (i, s) in record.snapshots().iter().enumerate() {
        let stem = format!("snapshot_{i:05}");
        write_wave_function(dir, &stem, s)?;
        files.push(stem);
    }
    let meta = RecordMeta {
        method: record.method().to_string(),
        dt: record.dt(),
        stride: record.stride(),
        potential: record.potential().name().to_string(),
        times: record.snapshots().iter().map(|s| s.time).collect(),
        files,
    };
    write_json(&dir.join("record.json"), &meta)
}

/// Trajectory CSV with columns t, q…, v…, rho and one a_w column per
/// `(label, samples)` entry. Missing values (nodes) are left blank.
pub fn trajectory_csv(traj: &Trajectory, dims: usize, aw: &[(String, Vec<AwSample>)]) -> Result<String> {
    for (label, s) in aw {
        if s.len() != traj.len() {
            return Err(BohmError::Shape(format!(
                "a_w column `{label}` has {} rows, trajectory has {}",
                s.len(),
                traj.len()
            )));
        }
    }
    let axes = ["x", "y"];
    let mut cols = vec!["t".to_string()];
    cols.extend(axes[..dims].iter().map(|a| format!("q_{a}")));
    cols.extend(axes[..dims].iter().map(|a| format!("v_{a}")));
    cols.push("rho".into());
    cols.extend(aw.iter().map(|(l, _)| format!("a_w[{l}]")));
    let mut out = cols.join(",");
    out.push('\n');
    for (i, s) in traj.samples.iter().enumerate() {
        let mut row = vec![format!("{:e}", s.t)];
        row.extend(s.q[..dims].iter().map(|x| format!("{x:e}")));
        row.extend(s.v[..dims].iter().map(|x| format!("{x:e}")));
        row.push(format!("{:e}", s.rho));
        for (_, samples) in aw {
            row.push(samples[i].weak.as_ref().map(|w| format!("{:e}", w.a_w)).unwrap_or_default());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}
