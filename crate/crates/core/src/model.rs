//! Problem parameters, critical exponents and the scaling symmetry
//! `u_λ(x) = λ^{(2-b+c)/p} u(λx)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialField;

/// Absolute tolerance used to recognise the mass-critical equality `s_c = 0`.
pub const MASS_CRITICAL_TOL: f64 = 1e-12;

/// The tuple `(n, b, c, p, γ)` of the equation
/// `i∂ₜu + ∇·(|x|^b ∇u) = -|x|^c |u|^p u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(n: usize, b: f64, c: f64, p: f64) -> Result<Self> {
        Self::with_gamma(n, b, c, p, 0.0)
    }

    pub fn with_gamma(n: usize, b: f64, c: f64, p: f64, gamma: f64) -> Result<Self> {
        let params = ModelParams { n, b, c, p, gamma };
        let violations = params.violations();
        if violations.is_empty() {
            Ok(params)
        } else {
            Err(Error::InvalidParams(violations))
        }
    }

    /// All violated invariants, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n as f64;
        if self.n < 1 {
            out.push(format!("n = {} must be a positive integer", self.n));
        }
        for (name, v) in [("b", self.b), ("c", self.c), ("p", self.p), ("gamma", self.gamma)] {
            if !v.is_finite() {
                out.push(format!("{name} = {v} must be finite"));
            }
        }
        // The classical Laplacian (b = 0) is admitted in every dimension.
        if !((self.b >= 2.0 - n || self.b == 0.0) && self.b < 2.0) {
            out.push(format!("b = {} must satisfy 2 - n <= b < 2 (n = {})", self.b, self.n));
        }
        if !(self.c > self.b - 2.0) {
            out.push(format!("c = {} must satisfy c > b - 2 = {}", self.c, self.b - 2.0));
        }
        if !(self.p > 0.0) {
            out.push(format!("p = {} must be positive", self.p));
        }
        if !(self.gamma > -n && self.gamma <= 0.0) {
            out.push(format!("gamma = {} must satisfy -n < gamma <= 0", self.gamma));
        }
        out
    }

    pub fn derive_indices(&self) -> Result<DerivedIndices> {
        derive_indices(self)
    }

    /// `2 - b`, the order of the operator `𝒜_b`.
    pub fn order(&self) -> f64 {
        2.0 - self.b
    }

    /// Amplitude exponent `(2 - b + c)/p` of the scaling symmetry.
    pub fn amplitude_exponent(&self) -> f64 {
        (2.0 - self.b + self.c) / self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedIndices {
    /// Critical Sobolev index `n/2 - (2-b+c)/p`.
    pub s_c: f64,
    /// Scaled power `np - 2c`.
    pub p_c: f64,
    /// Morrey integrability `(n+γ)p/(2-b+c)`.
    pub sigma0: f64,
    /// Mass-critical power `2(2-b+c)/n`.
    pub p_star_lower: f64,
    /// Energy-critical power, `+∞` when `n <= 2 - b`.
    pub p_star_upper: f64,
}

pub fn derive_indices(params: &ModelParams) -> Result<DerivedIndices> {
    let violations = params.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidParams(violations));
    }
    let ModelParams { n, b, c, p, gamma } = *params;
    let n = n as f64;
    let k = 2.0 - b + c;
    let p_star_upper = if n <= 2.0 - b {
        f64::INFINITY
    } else {
        2.0 * k / (n - 2.0 + b)
    };
    Ok(DerivedIndices {
        s_c: n / 2.0 - k / p,
        p_c: n * p - 2.0 * c,
        sigma0: (n + gamma) * p / k,
        p_star_lower: 2.0 * k / n,
        p_star_upper,
    })
}

/// Inverts `s_c = n/2 - (2-b+c)/p` for `p`.
pub fn power_from_sc(s_c: f64, n: usize, b: f64, c: f64) -> Result<f64> {
    let denom = n as f64 / 2.0 - s_c;
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "s_c = {s_c} >= n/2 has no positive power"
        )));
    }
    Ok((2.0 - b + c) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    MassCritical,
    Intercritical,
    OutOfRange,
}

/// Hypothesis bundles of the blow-up results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Space-time upper bound for radial intercritical blow-up.
    SpacetimeBound,
    /// L² concentration for radial mass-critical blow-up.
    MassConcentration,
    /// Blow-up for non-positive energy data in `Ḣ^{s_c} ∩ Ẇ_b^{1,2}`.
    NonPositiveEnergyBlowup,
    /// Logarithmic lower bound on the Morrey norm.
    MorreyLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityClass {
    pub regime: Regime,
    pub theorem_flags: BTreeSet<Hypothesis>,
}

impl CriticalityClass {
    pub fn has(&self, h: Hypothesis) -> bool {
        self.theorem_flags.contains(&h)
    }
}

pub fn is_mass_critical(idx: &DerivedIndices) -> bool {
    idx.s_c.abs() <= MASS_CRITICAL_TOL
}

/// Pure predicates on `(params, idx)`. Strict inequalities stay strict:
/// boundary tuples fall out of range.
pub fn classify(params: &ModelParams, idx: &DerivedIndices) -> CriticalityClass {
    let ModelParams { n, b, c, p, .. } = *params;
    let nf = n as f64;
    let k = 2.0 - b;
    let mass_critical = is_mass_critical(idx);
    let intercritical = !mass_critical && 2.0 * k < idx.p_c && idx.p_c < k * (p + 2.0);

    let regime = if mass_critical {
        Regime::MassCritical
    } else if intercritical {
        Regime::Intercritical
    } else {
        Regime::OutOfRange
    };

    let mut flags = BTreeSet::new();
    if (2.0 - 2.0 * nf) <= b && b < 0.0 && c >= b - 2.0 && intercritical && p < 4.0 {
        flags.insert(Hypothesis::SpacetimeBound);
    }
    if 2.0 - nf < b && b <= 0.0 && b - 2.0 < c && c < b - 2.0 + 2.0 * nf && mass_critical {
        flags.insert(Hypothesis::MassConcentration);
    }
    let nonradial = n >= 3
        && 2.0 - nf < b
        && b <= 0.0
        && b - 2.0 < c
        && c < nf * b * p / 4.0
        && intercritical
        && p < 4.0 / nf;
    if nonradial {
        flags.insert(Hypothesis::NonPositiveEnergyBlowup);
        flags.insert(Hypothesis::MorreyLowerBound);
    }
    CriticalityClass {
        regime,
        theorem_flags: flags,
    }
}

/// Default relative mass that may be pushed past the domain edge by
/// [`scale_field`].
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-10;

/// Samples `λ^{(2-b+c)/p} u(λ·)` on the field's own grid by cubic
/// interpolation, with zero extension beyond the source domain.
pub fn scale_field(
    field: &RadialField,
    lambda: f64,
    params: &ModelParams,
    support_tol: f64,
) -> Result<RadialField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let grid = field.grid();
    // Part of the source beyond λ·r_max is not seen by any target node.
    if lambda < 1.0 {
        let lost = field.mass_outside(lambda * grid.r_max());
        let total = field.mass();
        if total > 0.0 && lost / total > support_tol {
            return Err(Error::LossOfSupport {
                lambda,
                lost_fraction: lost / total,
            });
        }
    }
    let amp = lambda.powf(params.amplitude_exponent());
    let values = grid
        .nodes()
        .iter()
        .map(|&r| field.interpolate(lambda * r) * amp)
        .collect();
    RadialField::new(field.grid_arc(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(n: usize, b: f64, c: f64, p: f64) -> DerivedIndices {
        ModelParams::new(n, b, c, p).unwrap().derive_indices().unwrap()
    }

    #[test]
    fn mass_critical_cubic_free() {
        let d = idx(3, 0.0, 0.0, 4.0 / 3.0);
        assert!(d.s_c.abs() < 1e-15);
        assert!((d.p_c - 4.0).abs() < 1e-14);
        assert!((d.sigma0 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_3d() {
        let d = idx(3, 0.0, 0.0, 2.0);
        assert_eq!(d.s_c, 0.5);
        assert_eq!(d.p_c, 6.0);
        assert_eq!(d.sigma0, 3.0);
        assert_eq!(d.p_star_upper, 4.0);
    }

    #[test]
    fn weighted_mass_critical() {
        let d = idx(3, -1.0, 0.0, 2.0);
        assert_eq!(d.s_c, 0.0);
        assert_eq!(d.p_c, 6.0);
        assert_eq!(d.p_c, 2.0 * (2.0 - (-1.0)));
    }

    #[test]
    fn upper_power_infinite_in_low_dimension() {
        let d = idx(1, 0.0, 0.0, 2.0);
        assert!(d.p_star_upper.is_infinite());
        let d = idx(2, 0.0, 0.0, 2.0);
        assert!(d.p_star_upper.is_infinite());
    }

    #[test]
    fn rejects_every_violation() {
        let err = ModelParams::with_gamma(3, 2.5, -1.0, -1.0, 0.5).unwrap_err();
        match err {
            Error::InvalidParams(v) => {
                assert!(v.iter().any(|s| s.starts_with("b =")));
                assert!(v.iter().any(|s| s.starts_with("c =")));
                assert!(v.iter().any(|s| s.starts_with("p =")));
                assert!(v.iter().any(|s| s.starts_with("gamma =")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sigma0_identity() {
        for &(n, b, c, p, g) in &[
            (3usize, -0.5, 0.0, 2.0, 0.0),
            (4, 0.3, 0.1, 0.7, -1.5),
            (3, -0.5, -2.0, 1.0, -0.5),
        ] {
            let params = ModelParams::with_gamma(n, b, c, p, g).unwrap();
            let d = params.derive_indices().unwrap();
            let alt = 2.0 * (n as f64 + g) / (n as f64 - 2.0 * d.s_c);
            assert!((d.sigma0 - alt).abs() < 1e-12 * alt);
        }
    }

    #[test]
    fn classify_examples() {
        // b = 0 fails the strict b < 0 requirement of the space-time bound.
        let params = ModelParams::new(3, 0.0, 0.0, 2.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert_eq!(class.regime, Regime::Intercritical);
        assert!(!class.has(Hypothesis::SpacetimeBound));
        assert!(!class.has(Hypothesis::NonPositiveEnergyBlowup));

        let params = ModelParams::new(3, -0.5, 0.0, 2.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert!(class.has(Hypothesis::SpacetimeBound));

        let params = ModelParams::new(3, 0.0, 0.0, 4.0 / 3.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert_eq!(class.regime, Regime::MassCritical);
        assert!(class.has(Hypothesis::MassConcentration));

        let params = ModelParams::new(3, -0.5, -2.0, 1.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert_eq!(class.regime, Regime::Intercritical);
        assert!(class.has(Hypothesis::NonPositiveEnergyBlowup));
        assert!(class.has(Hypothesis::MorreyLowerBound));
    }

    #[test]
    fn boundary_power_is_excluded() {
        // p = 4/n exactly: the non-radial flags need p < 4/n.
        let params = ModelParams::new(3, -0.5, -1.5, 4.0 / 3.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert_eq!(class.regime, Regime::Intercritical);
        assert!(!class.has(Hypothesis::NonPositiveEnergyBlowup));
        let params = ModelParams::new(3, -0.5, -1.5, 4.0 / 3.0 - 1e-9).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert!(class.has(Hypothesis::NonPositiveEnergyBlowup));
    }

    #[test]
    fn mass_critical_not_intercritical() {
        let params = ModelParams::new(2, 0.0, 0.0, 2.0).unwrap();
        let class = classify(&params, &params.derive_indices().unwrap());
        assert_eq!(class.regime, Regime::MassCritical);
    }

    proptest::proptest! {
        #[test]
        fn power_round_trip(n in 1usize..6, bf in 0.01f64..0.99, cf in 0.01f64..3.0, p in 0.1f64..8.0) {
            let nf = n as f64;
            let b = (2.0 - nf) + bf * (nf.min(4.0));
            let b = b.min(1.99);
            let c = b - 2.0 + cf;
            let params = ModelParams::new(n, b, c, p).unwrap();
            let d = params.derive_indices().unwrap();
            let back = power_from_sc(d.s_c, n, b, c).unwrap();
            proptest::prop_assert!((back - p).abs() <= 1e-12 * p);
        }

        #[test]
        fn classify_is_total(n in 1usize..6, bf in 0.01f64..0.99, cf in 0.01f64..3.0, p in 0.1f64..8.0) {
            let nf = n as f64;
            let b = ((2.0 - nf) + bf * nf.min(4.0)).min(1.99);
            let c = b - 2.0 + cf;
            let params = ModelParams::new(n, b, c, p).unwrap();
            let d = params.derive_indices().unwrap();
            let a = classify(&params, &d);
            let b2 = classify(&params, &d);
            proptest::prop_assert_eq!(a, b2);
        }
    }
}
