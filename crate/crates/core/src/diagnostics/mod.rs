//! Observables of solutions: conserved quantities, virial identities, the
//! shell functional ρ, mass concentration, blow-up rates and bound checks.

pub mod bounds;
pub mod rate;
pub mod rho;
pub mod virial;

use crate::error::Result;
use crate::grid::RadialField;
use crate::model::ModelParams;

pub use bounds::{check_bounds, BoundReport};
pub use rate::{fit_blowup_rate, RateFit};
pub use rho::{m_infty, rho, RhoReport};
pub use virial::{check_virial_estimate, virial_series, virial_weights, VirialSeries, VirialWeights};

/// `(‖f‖₂², ½‖∇f‖²_{b,2} - ‖f‖^{p+2}_{c,p+2}/(p+2))`, with the flux-form
/// gradient so that the values match the conserved quantities of the scheme.
pub fn conserved_quantities(f: &RadialField, params: &ModelParams) -> Result<(f64, f64)> {
    let mass = f.mass();
    let grad = f.grad_norm_b(params.b);
    let pot = f.weighted_norm(params.c, params.p + 2.0)?.powf(params.p + 2.0);
    Ok((mass, 0.5 * grad * grad - pot / (params.p + 2.0)))
}

/// `∫_{|x| ≤ λ} |f|² dx`. Radii at or beyond the domain give the total mass.
pub fn concentration(f: &RadialField, lambda: f64) -> f64 {
    if lambda >= f.grid().r_max() {
        return f.mass();
    }
    f.grid().cumulative(&f.modulus_sq()).ball(lambda)
}
