//! Initial data and solver settings derived from a [`RunConfig`].

use kinetofluid_core::coupling::{IterationConfig, Kinetic};
use kinetofluid_core::fields::{Grid, Spectral, VectorField};
use kinetofluid_core::fluid::FluidConfig;
use kinetofluid_core::vlasov::{choose_v_max, DecayEnvelope, Interp, MaxwellianSpec, SampledDrift};

use crate::config::{Repr, RunConfig, Scaling};
use crate::error::CliResult;

pub struct Scenario {
    pub grid: Grid,
    pub spec: MaxwellianSpec,
    pub f0: Kinetic,
    pub u0: VectorField,
    pub iteration: IterationConfig,
}

/// Divergence-free shear profile of amplitude `a`: a constant in one
/// dimension, each component independent of its own coordinate otherwise.
pub fn shear_profile(grid: Grid, a: f64) -> VectorField {
    let d = grid.dim();
    VectorField::from_fn(grid, |x, o| match d {
        1 => o[0] = a,
        2 => {
            o[0] = a * x[1].sin();
            o[1] = 0.6 * a * x[0].cos();
        }
        _ => {
            o[0] = a * x[2].sin();
            o[1] = a * x[0].sin();
            o[2] = a * x[1].sin();
        }
    })
}

/// Time-dependent perturbation used as the second drift of the contraction
/// sweep: `a (1 + t)` times a divergence-free mode.
pub fn perturbation_mode(grid: Grid, a: f64, t: f64) -> VectorField {
    let d = grid.dim();
    let s = a * (1.0 + t);
    VectorField::from_fn(grid, |x, o| match d {
        1 => o[0] = s,
        _ => {
            let c = s * (x[0] + x[1]).cos();
            o[0] = c;
            o[1] = -c;
        }
    })
}

pub fn maxwellian(cfg: &RunConfig) -> CliResult<MaxwellianSpec> {
    let mut spec = MaxwellianSpec::new(cfg.d, cfg.grid_l, cfg.mass, cfg.vth)?;
    spec.amplitude = cfg.amplitude;
    spec.mode = cfg.density_mode;
    spec.validate()?;
    Ok(spec)
}

/// Decay envelope of the initial Maxwellian with weight order `p`.
pub fn envelope(cfg: &RunConfig, spec: &MaxwellianSpec) -> DecayEnvelope {
    DecayEnvelope { d: cfg.d, f0_sup: spec.sup_norm(), c2: spec.decay_constant(cfg.p), p: cfg.p }
}

pub fn iteration_config(cfg: &RunConfig, t_end: f64) -> CliResult<IterationConfig> {
    let law = cfg.law().map_err(kinetofluid_core::Error::InvalidParameter)?;
    let mut fluid = FluidConfig::new(law, cfg.dt)?;
    fluid.dealias = cfg.dealias;
    fluid.cfl_cap = cfg.cfl_cap;
    let mut it = IterationConfig::new(t_end, fluid)?;
    it.kappa = cfg.kappa;
    it.tol = cfg.tol;
    it.max_iter = cfg.max_iter;
    it.m_cap = cfg.m_cap;
    it.validate()?;
    Ok(it)
}

impl Scenario {
    /// Assumes `cfg` has been validated.
    pub fn build(cfg: &RunConfig) -> CliResult<Self> {
        let grid = Grid::new(cfg.d, cfg.grid_n, cfg.grid_l)?;
        let spec = maxwellian(cfg)?;
        let mut u0 = Spectral::new(grid).leray_project(&shear_profile(grid, cfg.u0_amplitude));
        let mut f0 = match cfg.repr {
            Repr::Particles => Kinetic::Particles(spec.sample(cfg.particles_n, cfg.seed)),
            Repr::Grid => {
                let v_max = cfg.phase_v_max.unwrap_or_else(|| choose_v_max(&spec, cfg.u0_amplitude.abs()));
                Kinetic::Grid(spec.phase_grid(cfg.phase_nx, cfg.phase_nv, v_max)?)
            }
        };
        if cfg.scaling == Scaling::Fit {
            let size = data_size(&f0, &u0, cfg.k);
            if size > 0.0 {
                let c = (0.5 * cfg.eps / size).sqrt();
                f0 = scale_kinetic(f0, c)?;
                u0 = u0.scaled(c);
            }
        }
        let iteration = iteration_config(cfg, cfg.t_end)?;
        Ok(Self { grid, spec, f0, u0, iteration })
    }

    /// Drift frames on the step times of a horizon `t_end`.
    pub fn steady_drift(&self, times: &[f64]) -> CliResult<SampledDrift> {
        Ok(SampledDrift::new(times.to_vec(), vec![self.u0.clone(); times.len()], Interp::Cubic)?)
    }
}

/// Weighted kinetic norm plus `||u0||^2_{H^3}`, the quantity compared to eps.
pub fn data_size(f0: &Kinetic, u0: &VectorField, k: u32) -> f64 {
    f0.weighted_norm(k) + Spectral::new(u0.grid).sobolev_norm(u0, 3).powi(2)
}

/// Multiplies the density by `c`; quadratic norms scale by `c^2`.
pub fn scale_kinetic(f: Kinetic, c: f64) -> CliResult<Kinetic> {
    Ok(match f {
        Kinetic::Grid(mut g) => {
            g.values_mut().iter_mut().for_each(|x| *x *= c);
            Kinetic::Grid(g)
        }
        Kinetic::Particles(p) => {
            let w = p.weights().iter().map(|w| w * c).collect();
            let x: Vec<f64> = (0..p.len()).flat_map(|i| p.unwrapped(i)[..p.dim()].to_vec()).collect();
            Kinetic::Particles(kinetofluid_core::vlasov::ParticleCloud::new(
                p.dim(),
                p.length(),
                x,
                p.velocities().to_vec(),
                w,
            )?)
        }
    })
}
