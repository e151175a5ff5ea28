//! CSV tables, binary snapshots and JSON reports.
//!
//! Snapshot layout: one line of compact JSON (the header), a newline, then
//! little-endian `f64` values in row-major order. Fields have shape
//! `[n; d] x components`, particle clouds `N x (x_1..x_d, v_1..v_d, w)`
//! with unwrapped positions, phase grids `n_x x n_v`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use kinetofluid_core::fields::{Grid, VectorField};
use kinetofluid_core::vlasov::{ParticleCloud, PhaseGrid};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// A numeric table; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Shortest round-trip decimal form keeps values bit-exact through text.
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(CliError::csv(path))?;
        w.write_record(&self.header).map_err(CliError::csv(path))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.map_or(String::new(), |x| x.to_string())))
                .map_err(CliError::csv(path))?;
        }
        w.flush().map_err(CliError::io(path))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
        let header = r.headers().map_err(CliError::csv(path))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(CliError::csv(path))?;
            let row = rec
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|_| CliError::Format {
                            path: path.to_path_buf(),
                            message: format!("row {}: `{c}` is not a number", k + 1),
                        })
                    }
                })
                .collect::<CliResult<_>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn write_snapshot(path: &Path, header: &Value, data: impl Iterator<Item = f64>) -> CliResult<()> {
    let mut buf = serde_json::to_vec(header).expect("JSON values always serialize");
    buf.push(b'\n');
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(CliError::io(path))
}

fn read_snapshot(path: &Path) -> CliResult<(Value, Vec<f64>)> {
    let bad = |message: String| CliError::Format { path: path.to_path_buf(), message };
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut r = BufReader::new(file);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(CliError::io(path))?;
    let header: Value = serde_json::from_slice(&line).map_err(|e| bad(format!("header: {e}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(CliError::io(path))?;
    if bytes.len() % 8 != 0 {
        return Err(bad(format!("payload of {} bytes is not a whole number of reals", bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((header, data))
}

fn header_usize(h: &Value, key: &str, path: &Path) -> CliResult<usize> {
    h[key].as_u64().map(|x| x as usize).ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: format!("header field `{key}` missing or not an integer"),
    })
}

fn header_f64(h: &Value, key: &str, path: &Path) -> CliResult<f64> {
    h[key].as_f64().ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: format!("header field `{key}` missing or not a number"),
    })
}

fn component_names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|a| format!("{prefix}{a}")).collect()
}

pub fn write_field(path: &Path, u: &VectorField, time: f64) -> CliResult<()> {
    let g = u.grid;
    let header = json!({
        "kind": "field",
        "d": g.dim(),
        "n": g.n(),
        "L": g.length(),
        "components": component_names("u", u.dim()),
        "time": time,
    });
    write_snapshot(path, &header, (0..g.len()).flat_map(|p| u.comps.iter().map(move |c| c[p])))
}

pub fn read_field(path: &Path) -> CliResult<(f64, VectorField)> {
    let (h, data) = read_snapshot(path)?;
    let d = header_usize(&h, "d", path)?;
    let n = header_usize(&h, "n", path)?;
    let grid = Grid::new(d, n, header_f64(&h, "L", path)?).map_err(CliError::Core)?;
    let m = h["components"].as_array().map_or(0, Vec::len);
    if data.len() != grid.len() * m || m != d {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("expected {} x {d} reals, found {}", grid.len(), data.len()),
        });
    }
    let mut u = VectorField::zeros(grid);
    for (k, x) in data.into_iter().enumerate() {
        u.comps[k % m][k / m] = x;
    }
    Ok((header_f64(&h, "time", path)?, u))
}

/// Node coordinates and values for `d <= 2`.
pub fn write_field_csv(path: &Path, u: &VectorField) -> CliResult<()> {
    let g = u.grid;
    let mut names = component_names("x", g.dim());
    names.extend(component_names("u", u.dim()));
    let mut t = Table { header: names, rows: Vec::with_capacity(g.len()) };
    for p in 0..g.len() {
        let x = g.coord(p);
        let mut row: Vec<Option<f64>> = x[..g.dim()].iter().map(|&v| Some(v)).collect();
        row.extend(u.comps.iter().map(|c| Some(c[p])));
        t.rows.push(row);
    }
    t.write(path)
}

pub fn write_particles(path: &Path, c: &ParticleCloud, time: f64) -> CliResult<()> {
    let d = c.dim();
    let mut comps = component_names("x", d);
    comps.extend(component_names("v", d));
    comps.push("w".into());
    let header = json!({ "kind": "particles", "d": d, "n": c.len(), "L": c.length(), "components": comps, "time": time });
    let rows = (0..c.len()).flat_map(|i| {
        let x = c.unwrapped(i);
        let mut row = x[..d].to_vec();
        row.extend_from_slice(c.velocity(i));
        row.push(c.weights()[i]);
        row
    });
    write_snapshot(path, &header, rows)
}

pub fn read_particles(path: &Path) -> CliResult<(f64, ParticleCloud)> {
    let (h, data) = read_snapshot(path)?;
    let d = header_usize(&h, "d", path)?;
    let n = header_usize(&h, "n", path)?;
    let width = 2 * d + 1;
    if data.len() != n * width {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("expected {n} x {width} reals, found {}", data.len()),
        });
    }
    let (mut x, mut v, mut w) = (Vec::with_capacity(n * d), Vec::with_capacity(n * d), Vec::with_capacity(n));
    for row in data.chunks_exact(width) {
        x.extend_from_slice(&row[..d]);
        v.extend_from_slice(&row[d..2 * d]);
        w.push(row[2 * d]);
    }
    let cloud = ParticleCloud::new(d, header_f64(&h, "L", path)?, x, v, w)?;
    Ok((header_f64(&h, "time", path)?, cloud))
}

pub fn write_phase(path: &Path, f: &PhaseGrid, time: f64) -> CliResult<()> {
    let header = json!({
        "kind": "phase",
        "d": 1,
        "n": [f.nx(), f.nv()],
        "L": f.length(),
        "v_max": f.v_max(),
        "components": ["f"],
        "time": time,
    });
    write_snapshot(path, &header, f.values().iter().copied())
}

/// Snapshot file names for output step `k`.
pub fn snapshot_path(dir: &Path, what: &str, k: usize) -> PathBuf {
    dir.join(format!("{what}_{k:05}.bin"))
}

/// Creates a file for free-form text output.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(text.as_bytes()).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 8, 3.0).unwrap();
        let u = VectorField::from_fn(g, |x, o| {
            o[0] = x[0].sin() + 0.1;
            o[1] = x[1] * x[0];
        });
        let p = dir.path().join("u.bin");
        write_field(&p, &u, 0.25).unwrap();
        let (t, back) = read_field(&p).unwrap();
        assert_eq!((t, back), (0.25, u));
    }

    #[test]
    fn particle_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = ParticleCloud::new(2, 2.0, vec![0.5, 3.5, -0.25, 1.0], vec![1.0, -2.0, 0.5, 0.0], vec![0.3, 0.7]).unwrap();
        let p = dir.path().join("p.bin");
        write_particles(&p, &c, 1.5).unwrap();
        let (t, back) = read_particles(&p).unwrap();
        assert_eq!(t, 1.5);
        assert_eq!(back.weights(), c.weights());
        assert_eq!(back.velocities(), c.velocities());
        for i in 0..2 {
            assert_eq!(back.unwrapped(i), c.unwrapped(i));
        }
    }

    #[test]
    fn tables_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Some(0.1 + 0.2), None]);
        t.push(vec![Some(-1e-300), Some(std::f64::consts::PI)]);
        let p = dir.path().join("t.csv");
        t.write(&p).unwrap();
        assert_eq!(Table::read(&p).unwrap(), t);
    }
}
