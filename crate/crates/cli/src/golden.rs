//! Golden-file regeneration and comparison.

use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::output::{create_dir, Table};

/// Columns that depend on the machine rather than the numerics.
pub const VOLATILE: &[&str] = &["theta_wall_time"];

pub const TOLERANCE: f64 = 1e-10;

fn stable(t: &Table) -> Table {
    let keep: Vec<usize> = (0..t.header.len()).filter(|&i| !VOLATILE.contains(&t.header[i].as_str())).collect();
    Table {
        header: keep.iter().map(|&i| t.header[i].clone()).collect(),
        rows: t.rows.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect(),
    }
}

/// Writes the stable columns of each table into `dir`.
pub fn regenerate(dir: &Path, tables: &[(&str, &Table)]) -> CliResult<()> {
    create_dir(dir)?;
    for (name, t) in tables {
        stable(t).write(&dir.join(name))?;
    }
    Ok(())
}

/// Largest absolute difference over all golden files, or a description of
/// every structural mismatch and every cell off by more than `tol`.
pub fn compare(dir: &Path, tables: &[(&str, &Table)], tol: f64) -> CliResult<f64> {
    let mut problems = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, produced) in tables {
        let golden = Table::read(&dir.join(name))?;
        let mut cols = Vec::new();
        for h in &golden.header {
            match produced.column(h) {
                Some(c) => cols.push(c),
                None => problems.push(format!("{name}: column `{h}` missing from output")),
            }
        }
        if cols.len() != golden.header.len() {
            continue;
        }
        if golden.rows.len() != produced.rows.len() {
            problems.push(format!("{name}: {} rows, golden has {}", produced.rows.len(), golden.rows.len()));
            continue;
        }
        for (r, (g, p)) in golden.rows.iter().zip(&produced.rows).enumerate() {
            for (k, &c) in cols.iter().enumerate() {
                let diff = match (g[k], p[c]) {
                    (None, None) => 0.0,
                    (Some(a), Some(b)) if a == b => 0.0,
                    (Some(a), Some(b)) => (a - b).abs(),
                    _ => f64::INFINITY,
                };
                if !(diff <= tol) {
                    problems.push(format!(
                        "{name}: row {}, column `{}`: {:?} vs golden {:?}",
                        r + 1,
                        golden.header[k],
                        p[c],
                        g[k]
                    ));
                }
                if diff.is_finite() {
                    worst = worst.max(diff);
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(worst)
    } else {
        Err(CliError::Golden(problems.join("\n")))
    }
}
