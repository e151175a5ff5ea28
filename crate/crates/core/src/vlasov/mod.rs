//! Linear Vlasov transport `f_t + v . grad_x f + div_v((u_bar - v) f) = 0`
//! for a frozen drift `u_bar`.
//!
//! Two representations: weighted particles (any dimension) and a phase
//! grid with a semi-Lagrangian update (one dimension). Both share the
//! characteristic flow in [`particles`].

pub mod bounds;
pub mod drift;
pub mod initial;
pub mod particles;
pub mod phase;

pub use bounds::{gronwall_envelope, rho_bound_check, DecayEnvelope, GronwallReport, RhoBoundReport, C_CAL};
pub use drift::{AnalyticDrift, ConstantDrift, Drift, Interp, SampledDrift, ZeroDrift};
pub use initial::MaxwellianSpec;
pub use particles::{
    advance_characteristics, drag_particle_sum, flow_bounds_check, particle_moments, phase_jacobian,
    solve_vlasov_particles, FlowBoundsReport, FlowMapConfig, Integrator, Moments, ParticleCloud,
};
pub use phase::{solve_vlasov_grid, solve_vlasov_grid_with, weighted_data_norm, weighted_norm_x, PhaseInterp, zero_drift_solution, GridTrajectory, PhaseGrid};

/// Velocity window for a phase grid: `1.5 max(drift bound, 99.99 % speed)`.
pub fn choose_v_max(spec: &MaxwellianSpec, drift_bound: f64) -> f64 {
    1.5 * drift_bound.max(spec.speed_quantile(0.9999))
}
