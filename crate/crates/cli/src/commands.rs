//! The `simulate`, `contraction` and `wasserstein` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kinetofluid_core::coupling::{
    contraction_ratio, fixed_point_solve_timed, small_data_run, validate_small_data, FixedPointRun, Kinetic,
};
use kinetofluid_core::fields::{deposit_cic, Spectral, VectorField};
use kinetofluid_core::fluid::{energy_inequality_report, FluidDiagnostics};
use kinetofluid_core::transport::{stability_bound_check, w2_exact, DiscreteMeasure, ASSIGNMENT_CAP};
use kinetofluid_core::vlasov::{weighted_norm_x, Interp, ParticleCloud, SampledDrift};
use serde_json::{json, Map, Value};

use crate::config::{Mode, Parsed, RunConfig, KEYS};
use crate::error::{CliError, CliResult};
use crate::golden;
use crate::output::{
    create_dir, read_field, read_particles, snapshot_path, write_field, write_field_csv, write_json, write_particles,
    write_phase, write_text, Table,
};
use crate::scenario::{envelope, iteration_config, perturbation_mode, Scenario};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    /// Rewrite the golden files instead of comparing against them.
    pub golden_regen: bool,
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub report: Value,
    /// Largest golden difference when a comparison ran.
    pub golden_diff: Option<f64>,
}

fn prepare(parsed: &Parsed, opts: &RunOptions) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg = parsed.config.clone();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    parsed.validate()?;
    let out = opts.out.clone().unwrap_or_else(|| parsed.resolve(&cfg.out_dir));
    create_dir(&out)?;
    write_text(&out.join("config.cfg"), &cfg.serialize())?;
    Ok((cfg, out))
}

fn config_echo(cfg: &RunConfig) -> Value {
    Value::Object(KEYS.iter().map(|k| (k.to_string(), Value::String(cfg.value(k)))).collect::<Map<_, _>>())
}

/// JSON numbers cannot hold non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(x.to_string())
    }
}

pub fn history_table(run: &FixedPointRun) -> Table {
    let mut t = Table::new(&["iter", "residual_L2L2", "u_X_norm", "theta_wall_time"]);
    for h in &run.history {
        t.push(vec![Some(h.iter as f64), Some(h.residual), Some(h.x_norm_sq.sqrt()), Some(h.wall_time)]);
    }
    t
}

pub fn fluid_table(diag: &FluidDiagnostics) -> Table {
    let mut t = Table::new(&[
        "t",
        "L2",
        "H1",
        "H2",
        "H3",
        "Du_Linf",
        "G_Linf",
        "energy_lhs",
        "energy_rhs",
        "Gtilde_integral",
        "dudt_L2",
        "cfl",
    ]);
    for r in &diag.records {
        t.push(
            [r.t, r.h[0], r.h[1], r.h[2], r.h[3], r.du_linf, r.g_linf, r.energy_lhs, r.energy_rhs, r.gtilde_integral, r.dudt_l2, r.cfl]
                .into_iter()
                .map(Some)
                .collect(),
        );
    }
    t
}

/// Per-time kinetic diagnostics of the converged iterate.
pub fn vlasov_table(cfg: &RunConfig, scen: &Scenario, run: &FixedPointRun) -> CliResult<Table> {
    let st = &run.state;
    let mut t = Table::new(&[
        "t",
        "mass",
        "max_speed",
        "estV_margin",
        "estX_margin",
        "rho_max",
        "rho_bound",
        "m2_max",
        "X_weighted",
        "clipped_mass",
    ]);
    let drift_sup = st.u.iter().map(VectorField::linf_norm).fold(0.0, f64::max);
    let env = envelope(cfg, &scen.spec);
    let first = match st.f.first() {
        Some(Kinetic::Particles(c)) => Some(c),
        _ => None,
    };
    for (k, (f, &time)) in st.f.iter().zip(&st.times).enumerate() {
        let m = f.moments(&scen.grid, &st.u[k], cfg.kappa)?;
        let (speed, ev, ex) = match (f, first) {
            (Kinetic::Particles(c), Some(c0)) => {
                let (ev, ex) = flow_margins(c0, c, time - st.times[0], drift_sup);
                (Some(c.max_speed()), Some(ev), Some(ex))
            }
            _ => (None, None, None),
        };
        let xw = match f {
            Kinetic::Grid(g) => Some(weighted_norm_x(g, cfg.k)),
            Kinetic::Particles(_) => None,
        };
        t.push(vec![
            Some(time),
            Some(f.mass()),
            speed,
            ev,
            ex,
            Some(m.rho.max_abs()),
            Some(env.rho_bound(drift_sup, time)),
            Some(m.m2.max_abs()),
            xw,
            Some(st.clipped_mass.get(k).copied().unwrap_or(0.0)),
        ]);
    }
    Ok(t)
}

/// `min_i (cap_i - |V_i|)` and `min_i (t cap_i - |X_i - x_i|)` with
/// `cap_i = max(M, |v_i(0)|)`.
fn flow_margins(c0: &ParticleCloud, c: &ParticleCloud, elapsed: f64, m: f64) -> (f64, f64) {
    let d = c.dim();
    let (mut ev, mut ex) = (f64::INFINITY, f64::INFINITY);
    for i in 0..c.len() {
        let cap = m.max(c0.speed(i));
        let (a, b) = (c0.unwrapped(i), c.unwrapped(i));
        let disp = (0..d).map(|k| (b[k] - a[k]).powi(2)).sum::<f64>().sqrt();
        ev = ev.min(cap - c.speed(i));
        ex = ex.min(elapsed * cap - disp);
    }
    (ev, ex)
}

fn write_snapshots(cfg: &RunConfig, out: &Path, run: &FixedPointRun) -> CliResult<()> {
    let dir = out.join("snapshots");
    create_dir(&dir)?;
    let st = &run.state;
    let last = st.times.len() - 1;
    for k in (0..=last).filter(|&k| k % cfg.every == 0 || k == last) {
        write_field(&snapshot_path(&dir, "u", k), &st.u[k], st.times[k])?;
        if cfg.d <= 2 {
            write_field_csv(&dir.join(format!("u_{k:05}.csv")), &st.u[k])?;
        }
        match &st.f[k] {
            Kinetic::Particles(c) => write_particles(&snapshot_path(&dir, "particles", k), c, st.times[k])?,
            Kinetic::Grid(g) => write_phase(&snapshot_path(&dir, "phase", k), g, st.times[k])?,
        }
    }
    Ok(())
}

fn finish_golden(parsed: &Parsed, cfg: &RunConfig, opts: &RunOptions, tables: &[(&str, &Table)]) -> CliResult<Option<f64>> {
    let Some(g) = &cfg.golden else {
        if opts.golden_regen {
            return Err(CliError::Usage("--golden-regen needs `output.golden` in the configuration".into()));
        }
        return Ok(None);
    };
    let dir = parsed.resolve(g);
    if opts.golden_regen {
        golden::regenerate(&dir, tables)?;
        Ok(Some(0.0))
    } else {
        golden::compare(&dir, tables, golden::TOLERANCE).map(Some)
    }
}

pub fn simulate(parsed: &Parsed, opts: &RunOptions) -> CliResult<RunSummary> {
    let (cfg, out) = prepare(parsed, opts)?;
    let result = match cfg.mode {
        Mode::FixedPoint => simulate_fixed_point(parsed, &cfg, &out, opts),
        Mode::SmallData => simulate_small_data(parsed, &cfg, &out, opts),
    };
    if let Err(e) = &result {
        let report = json!({
            "status": "error",
            "exit_code": e.exit_code(),
            "error": e.to_string(),
            "config": config_echo(&cfg),
        });
        // keep a more specific report written by the mode itself
        if !out.join("report.json").exists() {
            write_json(&out.join("report.json"), &report)?;
        }
    }
    result
}

fn simulate_fixed_point(parsed: &Parsed, cfg: &RunConfig, out: &Path, opts: &RunOptions) -> CliResult<RunSummary> {
    let scen = Scenario::build(cfg)?;
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let run = fixed_point_solve_timed(&scen.f0, &scen.u0, &scen.iteration, &clock)?;
    let history = history_table(&run);
    let fluid = fluid_table(&run.state.fluid);
    let vlasov = vlasov_table(cfg, &scen, &run)?;
    history.write(&out.join("history.csv"))?;
    fluid.write(&out.join("fluid_diagnostics.csv"))?;
    vlasov.write(&out.join("vlasov_diagnostics.csv"))?;
    write_snapshots(cfg, out, &run)?;

    let energy = energy_inequality_report(&run.state.fluid);
    let last = run.history.last().expect("at least one iteration");
    let margin_col = |name: &str| {
        let c = vlasov.column(name).expect("known column");
        vlasov.rows.iter().filter_map(|r| r[c]).fold(f64::INFINITY, f64::min)
    };
    let (rho, bound) = (vlasov.column("rho_max").expect("known column"), vlasov.column("rho_bound").expect("known column"));
    let rho_margin = vlasov
        .rows
        .iter()
        .map(|r| r[bound].unwrap_or(f64::INFINITY) - r[rho].unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let mut report = json!({
        "status": if run.converged { "converged" } else { "not_converged" },
        "mode": "fixed_point",
        "converged": run.converged,
        "iterations": run.iterations(),
        "final_residual": num(last.residual),
        "u_X_norm_sq": num(last.x_norm_sq),
        "M_cap": cfg.m_cap,
        "ball_margin": num(cfg.m_cap - last.x_norm_sq),
        "final_ratios": run.final_ratios(3).into_iter().map(num).collect::<Vec<_>>(),
        "norms": {
            "max_H3": num(run.state.fluid.records.iter().map(|r| r.h[3]).fold(0.0, f64::max)),
            "max_rho": num(run.state.rho_max),
            "max_m2": num(run.state.m2_max),
            "final_mass": num(run.state.f.last().map_or(0.0, Kinetic::mass)),
        },
        "margins": {
            "energy_min": num(energy.min_margin),
            "energy_min_relative": num(energy.min_relative_margin),
            "time_regularity": num(energy.time_regularity_rhs - energy.time_regularity_lhs),
            "estV_min": num(margin_col("estV_margin")),
            "estX_min": num(margin_col("estX_margin")),
            "rho_bound_min": num(rho_margin),
        },
        "posteriori": run.posteriori.as_ref().map(|p| json!({
            "pass": p.pass,
            "fluid_residual": num(p.fluid_residual),
            "fluid_truncation": num(p.fluid_truncation),
            "kinetic_residual": num(p.kinetic_residual),
            "kinetic_truncation": num(p.kinetic_truncation),
        })),
        "config": config_echo(cfg),
    });
    if !run.converged {
        report["exit_code"] = json!(crate::error::exit::NON_CONVERGENCE);
        write_json(&out.join("report.json"), &report)?;
        return Err(CliError::NotConverged { iterations: run.iterations(), residual: last.residual });
    }
    let tables = [("history.csv", &history), ("fluid_diagnostics.csv", &fluid), ("vlasov_diagnostics.csv", &vlasov)];
    let golden_diff = match finish_golden(parsed, cfg, opts, &tables) {
        Ok(g) => g,
        Err(e) => {
            report["exit_code"] = json!(e.exit_code());
            report["golden"] = json!(e.to_string());
            write_json(&out.join("report.json"), &report)?;
            return Err(e);
        }
    };
    report["golden_max_diff"] = golden_diff.map_or(Value::Null, num);
    report["exit_code"] = json!(0);
    write_json(&out.join("report.json"), &report)?;
    Ok(RunSummary { out_dir: out.to_path_buf(), report, golden_diff })
}

fn simulate_small_data(parsed: &Parsed, cfg: &RunConfig, out: &Path, opts: &RunOptions) -> CliResult<RunSummary> {
    let scen = Scenario::build(cfg)?;
    let size = validate_small_data(&scen.f0, &scen.u0, cfg.k, cfg.eps, cfg.bound_m, cfg.horizon)?;
    let rep = small_data_run(&scen.f0, &scen.u0, &scen.iteration, cfg.horizon, cfg.k, cfg.bound_m)?;
    let mut t = Table::new(&["t", "u_H3_sq", "u_L2H4_sq", "f_weighted"]);
    for k in 0..rep.times.len() {
        t.push(vec![Some(rep.times[k]), Some(rep.u_h3_sq[k]), Some(rep.u_l2h4_sq[k]), Some(rep.f_norm[k])]);
    }
    t.write(&out.join("small_data.csv"))?;
    let golden_diff = finish_golden(parsed, cfg, opts, &[("small_data.csv", &t)])?;
    let report = json!({
        "status": "bounded",
        "mode": "small_data",
        "data_norm": num(size.norm),
        "eps": cfg.eps,
        "eps1": num(size.eps1),
        "M": cfg.bound_m,
        "horizon": cfg.horizon,
        "max_u_H3_sq": num(rep.max_u_h3_sq),
        "u_L2H4_total": num(rep.u_l2h4_total),
        "max_f_weighted": num(rep.max_f_norm),
        "margin": num(rep.margin),
        "window_iterations": rep.iterations,
        "golden_max_diff": golden_diff.map_or(Value::Null, num),
        "exit_code": 0,
        "config": config_echo(cfg),
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(RunSummary { out_dir: out.to_path_buf(), report, golden_diff })
}

/// Contraction sweep over `contraction.sweep` between the steady initial
/// drift and a perturbed one.
pub fn contraction(parsed: &Parsed, opts: &RunOptions) -> CliResult<RunSummary> {
    let (cfg, out) = prepare(parsed, opts)?;
    let scen = Scenario::build(&cfg)?;
    let mut t = Table::new(&["T", "ratio", "witnessed_bound", "C1", "C3"]);
    let mut rows = Vec::new();
    for &horizon in &cfg.sweep {
        let it = iteration_config(&cfg, horizon)?;
        let times = it.times();
        let base = scen.steady_drift(&times)?;
        let frames = times.iter().map(|&s| scen.u0.add(&perturbation_mode(scen.grid, cfg.perturbation, s))).collect();
        let other = SampledDrift::new(times.clone(), frames, Interp::Cubic)?;
        let rep = contraction_ratio(&base, &other, &scen.f0, &scen.u0, &it)?;
        t.push(vec![Some(horizon), Some(rep.ratio), Some(rep.bound), Some(rep.witness.c1), Some(rep.witness.c3)]);
        rows.push((horizon, rep.ratio, rep.bound));
    }
    t.write(&out.join("contraction.csv"))?;
    let best = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let escaped = rows.iter().find(|r| r.1 > r.2).copied();
    let status: CliResult<()> = if let Some((t, ratio, bound)) = escaped {
        Err(CliError::ContractionBound { t, ratio, bound })
    } else if !(best < 0.5) {
        Err(CliError::SweepExhausted { best })
    } else {
        Ok(())
    };
    let report = json!({
        "status": if status.is_ok() { "contracting" } else { "failed" },
        "sweep": rows.iter().map(|(t, r, b)| json!({"T": t, "ratio": num(*r), "witnessed_bound": num(*b)})).collect::<Vec<_>>(),
        "smallest_ratio": num(best),
        "exit_code": status.as_ref().err().map_or(0, CliError::exit_code),
        "config": config_echo(&cfg),
    });
    write_json(&out.join("report.json"), &report)?;
    status.map(|_| RunSummary { out_dir: out, report, golden_diff: None })
}

/// Snapshot files `<what>_NNNNN.bin` of a run directory, in step order.
fn list_snapshots(run: &Path, what: &str) -> CliResult<Vec<PathBuf>> {
    let dir = run.join("snapshots");
    let mut v: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(CliError::io(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(&format!("{what}_")) && n.ends_with(".bin"))
        })
        .collect();
    v.sort();
    Ok(v)
}

struct Recorded {
    times: Vec<f64>,
    clouds: Vec<ParticleCloud>,
    u: Vec<VectorField>,
}

fn load_run(run: &Path) -> CliResult<Recorded> {
    let parts = list_snapshots(run, "particles")?;
    let fields = list_snapshots(run, "u")?;
    if parts.is_empty() {
        return Err(CliError::Usage(format!("{}: no particle snapshots (the run must use kinetic.repr = particles)", run.display())));
    }
    if parts.len() != fields.len() {
        return Err(CliError::Usage(format!("{}: {} particle but {} field snapshots", run.display(), parts.len(), fields.len())));
    }
    let mut rec = Recorded { times: Vec::new(), clouds: Vec::new(), u: Vec::new() };
    for (p, f) in parts.iter().zip(&fields) {
        let (t, c) = read_particles(p)?;
        let (tu, u) = read_field(f)?;
        if t != tu {
            return Err(CliError::Usage(format!("{}: snapshot times {t} and {tu} differ", p.display())));
        }
        rec.times.push(t);
        rec.clouds.push(c);
        rec.u.push(u);
    }
    Ok(rec)
}

/// Stability report between two recorded particle runs that share their
/// initial sample.
pub fn wasserstein(run_a: &Path, run_b: &Path, out: &Path) -> CliResult<RunSummary> {
    let a = load_run(run_a)?;
    let b = load_run(run_b)?;
    if a.times != b.times {
        return Err(CliError::Usage("the two runs were recorded at different times".into()));
    }
    create_dir(out)?;
    let grid = a.u[0].grid;
    let mass = a.clouds[0].total_mass();
    if !(mass > 0.0) {
        return Err(CliError::Usage("the first run carries no mass".into()));
    }
    let rho1 = a
        .clouds
        .iter()
        .map(|c| {
            let w = c.weights();
            deposit_cic(&grid, c.positions(), |i| w[i]).into_iter().fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        / mass;
    let rep = stability_bound_check(&a.clouds, &b.clouds, &a.times, &a.u, &b.u, rho1, 0.0)?;
    let exact = a.clouds[0].len() <= ASSIGNMENT_CAP;
    let mut t = Table::new(&["t", "Q_upper", "Q_exact", "rhs_proof_form", "rhs_display_form", "margin"]);
    for k in 0..a.times.len() {
        // non-uniform weights rarely share a small denominator; leave the cell empty then
        let q_exact = if exact {
            match w2_exact(&DiscreteMeasure::from_cloud(&a.clouds[k])?, &DiscreteMeasure::from_cloud(&b.clouds[k])?) {
                Ok((w, _)) => Some(0.5 * w * w),
                Err(kinetofluid_core::Error::TooLarge(_)) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        t.push(vec![
            Some(a.times[k]),
            Some(rep.q_upper[k]),
            q_exact,
            Some(rep.rhs_proof[k]),
            Some(rep.rhs_display[k]),
            Some(rep.margins[k]),
        ]);
    }
    t.write(&out.join("transport_report.csv"))?;
    let min_margin = rep.margins.iter().copied().fold(f64::INFINITY, f64::min);
    let sp = Spectral::new(grid);
    let report = json!({
        "status": if rep.pass { "stable" } else { "violated" },
        "pass": rep.pass,
        "min_margin": num(min_margin),
        "rho1_max": num(rho1),
        "max_grad_u2": num(b.u.iter().map(|u| sp.grad_linf(u)).fold(0.0, f64::max)),
        "exit_code": if rep.pass { 0 } else { crate::error::exit::BOUND_ESCAPE },
        "runs": [run_a.display().to_string(), run_b.display().to_string()],
    });
    write_json(&out.join("report.json"), &report)?;
    if rep.pass {
        Ok(RunSummary { out_dir: out.to_path_buf(), report, golden_diff: None })
    } else {
        Err(CliError::Core(kinetofluid_core::Error::BoundEscape {
            which: "transport stability",
            value: -min_margin,
            bound: 0.0,
            t: a.times[rep.margins.iter().position(|&m| m < 0.0).unwrap_or(0)],
        }))
    }
}
