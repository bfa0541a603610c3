//! The scale-invariant shell functional
//! `ρ(u, R) = sup_{R' ≥ R} R'^{-2 s_c} ∫_{R' ≤ |x| ≤ 2R'} |u|²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::RadialField;
use crate::model::DerivedIndices;

/// Shell radii grow by this factor.
pub const SHELL_RATIO: f64 = 1.090_507_732_665_257_7; // 2^{1/8}

#[derive(Debug, Clone, Serialize)]
pub struct RhoReport {
    pub radius: f64,
    pub rho: f64,
    pub argmax_rprime: f64,
    /// `(R', R'^{-2 s_c} · shell mass)` on the lattice `R · 2^{k/8}`.
    pub shells: Vec<(f64, f64)>,
    /// `ρ(u, R')` for each lattice radius (running maximum from the outside).
    pub profile: Vec<(f64, f64)>,
}

pub fn rho(f: &RadialField, radius: f64, idx: &DerivedIndices) -> Result<RhoReport> {
    let grid = f.grid();
    let r_max = grid.r_max();
    if !(radius > 0.0 && radius <= r_max / 2.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "rho radius {radius} must lie in (0, r_max/2 = {}]",
            r_max / 2.0
        )));
    }
    let cum = grid.cumulative(&f.modulus_sq());
    let mut shells = Vec::new();
    let mut k = 0;
    loop {
        let rp = radius * SHELL_RATIO.powi(k);
        if rp > r_max / 2.0 * (1.0 + 1e-12) {
            break;
        }
        let mass = cum.shell(rp, 2.0 * rp).max(0.0);
        shells.push((rp, rp.powf(-2.0 * idx.s_c) * mass));
        k += 1;
    }
    let mut profile = vec![(0.0, 0.0); shells.len()];
    let mut running = 0.0f64;
    let mut arg = shells[shells.len() - 1].0;
    let mut best_arg = arg;
    for (i, &(rp, v)) in shells.iter().enumerate().rev() {
        if v >= running {
            running = v;
            arg = rp;
        }
        profile[i] = (rp, running);
        if i == 0 {
            best_arg = arg;
        }
    }
    Ok(RhoReport {
        radius,
        rho: profile[0].1,
        argmax_rprime: best_arg,
        shells,
        profile,
    })
}

/// `M∞²(A, τ₀) = max_τ ρ(u(τ), A τ^{1/(2-b)})` over recorded frames; radii
/// are clamped to the innermost node.
pub fn m_infty(frames: &[(f64, &RadialField)], a: f64, b: f64, idx: &DerivedIndices) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::InsufficientSnapshots { got: 0, need: 1 });
    }
    let mut best = 0.0f64;
    for (tau, f) in frames {
        let r0 = f.grid().nodes()[0];
        let radius = (a * tau.max(0.0).powf(1.0 / (2.0 - b))).max(r0).min(f.grid().r_max() / 2.0);
        best = best.max(rho(f, radius, idx)?.rho);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grading, RadialGrid};
    use crate::model::ModelParams;
    use std::sync::Arc;

    fn setup() -> (Arc<RadialGrid>, DerivedIndices) {
        let g = Arc::new(RadialGrid::build(3, 40.0, 2048, Grading::LogGraded).unwrap());
        let idx = ModelParams::new(3, -0.5, 0.0, 2.0).unwrap().derive_indices().unwrap();
        (g, idx)
    }

    #[test]
    fn ratio_is_eighth_root_of_two() {
        assert!((SHELL_RATIO.powi(8) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_field() {
        let (g, idx) = setup();
        let f = RadialField::zeros(g);
        assert_eq!(rho(&f, 1.0, &idx).unwrap().rho, 0.0);
    }

    #[test]
    fn profile_is_non_increasing() {
        let (g, idx) = setup();
        let f = RadialField::from_real_fn(g, |r| (1.0 + r) * (-(r - 2.0).powi(2)).exp()).unwrap();
        let rep = rho(&f, 0.1, &idx).unwrap();
        assert!(rep.profile.windows(2).all(|w| w[1].1 <= w[0].1));
        let later = rho(&f, 0.1 * SHELL_RATIO.powi(5), &idx).unwrap();
        assert!(later.rho <= rep.rho);
    }

    #[test]
    fn rejects_large_radius() {
        let (g, idx) = setup();
        let f = RadialField::zeros(g);
        assert!(rho(&f, 30.0, &idx).is_err());
    }

    #[test]
    fn single_frame_m_infty_is_rho() {
        let (g, idx) = setup();
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        let tau: f64 = 0.3;
        let a = 2.0;
        let want = rho(&f, a * tau.powf(1.0 / 2.5), &idx).unwrap().rho;
        let got = m_infty(&[(tau, &f)], a, -0.5, &idx).unwrap();
        assert_eq!(got, want);
    }
}
