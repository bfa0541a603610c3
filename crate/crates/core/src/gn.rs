//! Sharp Gagliardo–Nirenberg constants from ground states and empirical
//! checks of the weighted inequality family on seeded trial batteries.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::rho::rho;
use crate::error::{Error, Result};
use crate::grid::{grad_norm_b_smooth, RadialField, RadialGrid};
use crate::groundstate::{GroundStateProfile, ProblemKind};
use crate::model::{DerivedIndices, ModelParams};

/// Relative slack of the sharp checks.
pub const SHARP_TOL: f64 = 1e-3;
/// Largest relative change of a non-sharp quotient under grid doubling.
pub const REFINEMENT_TOL: f64 = 0.05;
pub const MIN_BATTERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GnKind {
    /// `∫|x|^c|f|^{p+2} ≤ C ‖∇f‖^{𝐩_c/(2-b)}_{b,2} ‖f‖₂^{p+2-𝐩_c/(2-b)}`, sharp
    /// constant from the single-term ground state.
    MassCriticalRadial,
    /// `∫|x|^c|f|^{p+2} ≤ C ‖∇f‖²_{b,2} ‖f‖^p_{γ,σ₀}`, sharp constant from the
    /// two-term ground state.
    TwoTermSharp,
}

#[derive(Debug, Clone, Serialize)]
pub struct GnReport {
    pub kind: GnKind,
    pub c_gn: f64,
    /// `‖Q‖₂` or `‖𝒬‖_{γ,σ₀}`.
    pub ground_norm: f64,
    /// `RHS/LHS` of the inequality at the ground state, which equals `1/C`.
    pub quotient_at_ground: f64,
}

/// Norms that enter every quotient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrialNorms {
    pub grad: f64,
    pub l2: f64,
    /// `∫|x|^c|f|^{p+2}`.
    pub potential: f64,
    /// `‖f‖_{γ,σ₀}`.
    pub morrey: f64,
}

impl TrialNorms {
    pub fn of(f: &RadialField, params: &ModelParams, idx: &DerivedIndices) -> Result<Self> {
        Ok(TrialNorms {
            grad: grad_norm_b_smooth(f, params.b)?,
            l2: f.weighted_norm(0.0, 2.0)?,
            potential: f.weighted_norm(params.c, params.p + 2.0)?.powf(params.p + 2.0),
            morrey: f.weighted_norm(params.gamma, idx.sigma0)?,
        })
    }
}

fn radial_gn_rhs(n: &TrialNorms, params: &ModelParams, idx: &DerivedIndices) -> f64 {
    let k = 2.0 - params.b;
    n.grad.powf(idx.p_c / k) * n.l2.powf(params.p + 2.0 - idx.p_c / k)
}

fn two_term_rhs(n: &TrialNorms, params: &ModelParams) -> f64 {
    n.grad * n.grad * n.morrey.powf(params.p)
}

/// `C_GN` of the requested inequality from a converged ground state.
pub fn sharp_constant(
    kind: GnKind,
    profile: &GroundStateProfile,
    params: &ModelParams,
    idx: &DerivedIndices,
) -> Result<GnReport> {
    let expected = match kind {
        GnKind::MassCriticalRadial => ProblemKind::SingleTerm,
        GnKind::TwoTermSharp => ProblemKind::TwoTerm,
    };
    if profile.kind != expected {
        return Err(Error::MismatchedKind {
            expected: expected.name(),
            found: profile.kind.name(),
        });
    }
    let norms = TrialNorms::of(&profile.field, params, idx)?;
    if norms.potential < 1e-300 {
        return Err(Error::DivisionByZero("ground state has vanishing potential norm".into()));
    }
    let p = params.p;
    let (c_gn, ground_norm, rhs) = match kind {
        GnKind::MassCriticalRadial => {
            let k = 2.0 - params.b;
            let pc = idx.p_c;
            let big = k * (p + 2.0) - pc;
            if !(pc > 0.0 && big > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "radial GN constant needs 0 < p_c < (2-b)(p+2), got p_c = {pc}"
                )));
            }
            let e = pc / (2.0 * k);
            let c = k * (p + 2.0) * pc.powf(-e) / (big.powf(1.0 - e) * norms.l2.powf(p));
            (c, norms.l2, radial_gn_rhs(&norms, params, idx))
        }
        GnKind::TwoTermSharp => (
            (p + 2.0) / (2.0 * norms.morrey.powf(p)),
            norms.morrey,
            two_term_rhs(&norms, params),
        ),
    };
    Ok(GnReport {
        kind,
        c_gn,
        ground_norm,
        quotient_at_ground: rhs / norms.potential,
    })
}

/// Weinstein quotient `‖∇f‖²_{b,2} ‖f‖^p_{γ,σ₀} / ‖f‖^{p+2}_{c,p+2}`.
pub fn weinstein_quotient(f: &RadialField, params: &ModelParams, idx: &DerivedIndices) -> Result<f64> {
    let pnorm = f.weighted_norm(params.c, params.p + 2.0)?;
    if pnorm < 1e-300 {
        return Err(Error::DivisionByZero("‖f‖_{c,p+2} vanishes".into()));
    }
    let n = TrialNorms::of(f, params, idx)?;
    Ok(two_term_rhs(&n, params) / n.potential)
}

/// Members of the weighted inequality family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InequalityKind {
    /// Radial GN with the sharp constant of [`GnKind::MassCriticalRadial`].
    RadialGn,
    /// Two-term GN with the sharp constant of [`GnKind::TwoTermSharp`].
    SharpGn,
    /// `∫|x|^d|f|^{p+2} ≤ C ‖∇f‖^{a(p+2)}_{b,2} ‖f‖^{(1-a)(p+2)}_{γ,σ₀}`
    /// with `d = c + (2-b)/2`.
    Ckn,
    /// `(∫|x|^{-2nd/(n-2+b+2d)}|f|^{2n/(n-2+b+2d)})^{(n-2+b+2d)/n} ≤ C ‖∇f‖²_{b,2}`
    /// with `d = (1-b)/2`.
    HardySobolev,
    /// `sup |x|^{(2n-2+b)/4}|f| ≤ C ‖∇f‖^{1/2}_{b,2} ‖f‖₂^{1/2}`.
    Strauss,
    /// Exterior potential against `η‖∇f‖² + C_η R^{-(2-b-2s_c)} ρ(f,R)^{(4-np+2p)/(4-np)}`.
    TailMorrey,
    /// Exterior potential against `η‖∇f‖² + C_η R^{((2-b)p-2𝐩_c)/(4-p)} ‖f‖₂^{2(p+4)/(4-p)}`.
    TailStrauss,
    /// Radial GN quotient without a sharp constant.
    StandardGn,
}

impl InequalityKind {
    pub const ALL: [InequalityKind; 8] = [
        InequalityKind::RadialGn,
        InequalityKind::SharpGn,
        InequalityKind::Ckn,
        InequalityKind::HardySobolev,
        InequalityKind::Strauss,
        InequalityKind::TailMorrey,
        InequalityKind::TailStrauss,
        InequalityKind::StandardGn,
    ];

    pub fn is_sharp(self) -> bool {
        matches!(self, InequalityKind::RadialGn | InequalityKind::SharpGn)
    }

    pub fn is_tail(self) -> bool {
        matches!(self, InequalityKind::TailMorrey | InequalityKind::TailStrauss)
    }

    fn sharp_kind(self) -> Option<GnKind> {
        match self {
            InequalityKind::RadialGn => Some(GnKind::MassCriticalRadial),
            InequalityKind::SharpGn => Some(GnKind::TwoTermSharp),
            _ => None,
        }
    }
}

/// Analytic trial functions, so that a battery can be resampled on a finer
/// grid.
#[derive(Debug, Clone, Serialize)]
pub enum TrialFn {
    /// The ground state itself.
    Ground,
    /// `e^{-s r²} Σ a_k r^{2k}`.
    GaussPoly { s: f64, coeffs: Vec<f64> },
    /// `exp(-1/(1 - ((r-center)/width)²))` on its support.
    Bump { center: f64, width: f64 },
    /// `Q(r) (1 + Σ a_k cos(k r/L) e^{-r²/L²})`.
    PerturbedGround { length: f64, coeffs: Vec<f64> },
}

impl TrialFn {
    fn eval(&self, r: f64, ground: Option<&RadialField>) -> f64 {
        match self {
            TrialFn::Ground => ground.map_or(0.0, |q| q.interpolate(r).re),
            TrialFn::GaussPoly { s, coeffs } => {
                let r2 = r * r;
                let poly = coeffs.iter().rev().fold(0.0, |acc, a| acc * r2 + a);
                (-s * r2).exp() * poly
            }
            TrialFn::Bump { center, width } => {
                let x = (r - center) / width;
                if x.abs() < 1.0 {
                    (-1.0 / (1.0 - x * x)).exp()
                } else {
                    0.0
                }
            }
            TrialFn::PerturbedGround { length, coeffs } => {
                let q = ground.map_or(0.0, |q| q.interpolate(r).re);
                let env = (-(r / length).powi(2)).exp();
                let pert: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * r / length).cos())
                    .sum();
                q * (1.0 + pert * env)
            }
        }
    }

    /// Samples on `grid` with the Dirichlet value at the last node.
    pub fn sample(&self, grid: Arc<RadialGrid>, ground: Option<&RadialField>) -> Result<RadialField> {
        let len = grid.len();
        let vals: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| if i + 1 == len { 0.0 } else { self.eval(r, ground) })
            .collect();
        RadialField::from_real(grid, &vals)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySpec {
    pub size: usize,
    pub seed: u64,
    /// Put the ground state (when given) first in the battery.
    pub include_ground: bool,
    /// Typical length scale of the generated fields.
    pub length: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            size: 500,
            seed: 0x5eed,
            include_ground: true,
            length: 1.0,
        }
    }
}

/// Deterministic list of trial functions. Perturbations of the ground state
/// are only generated when one is available.
pub fn generate_battery(spec: &BatterySpec, with_ground: bool) -> Vec<TrialFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.size);
    if spec.include_ground && with_ground && spec.size > 0 {
        out.push(TrialFn::Ground);
    }
    let l = spec.length;
    let families = if with_ground { 3 } else { 2 };
    while out.len() < spec.size {
        let trial = match out.len() % families {
            0 => {
                let s = (rng.gen_range(0.2f64.ln()..3.0f64.ln())).exp() / (l * l);
                let degree = rng.gen_range(0..4);
                let mut coeffs = vec![1.0];
                for k in 1..=degree {
                    coeffs.push(rng.gen_range(-1.0..1.0) * (s.powi(k as i32)));
                }
                TrialFn::GaussPoly { s, coeffs }
            }
            1 => TrialFn::Bump {
                center: rng.gen_range(0.0..4.0) * l,
                width: rng.gen_range(0.3..3.0) * l,
            },
            _ => {
                let eps = rng.gen_range(0.0..0.5);
                let coeffs = (0..3).map(|_| eps * rng.gen_range(-1.0..1.0)).collect();
                TrialFn::PerturbedGround {
                    length: rng.gen_range(0.5..4.0) * l,
                    coeffs,
                }
            }
        };
        out.push(trial);
    }
    out
}

/// Options of [`verify_inequality`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckOptions {
    /// `η` of the tail inequalities.
    pub eta: f64,
    /// Radius of the tail inequalities.
    pub radius: f64,
    /// Re-evaluate non-sharp maxima on a grid with twice the nodes.
    pub refine: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            eta: 0.1,
            radius: 1.0,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub kind: InequalityKind,
    pub trials: usize,
    /// `LHS/RHS` maximised over the battery; for the tail kinds the fitted
    /// `C_η = max (LHS - η‖∇f‖²)/tail`, clamped at 0.
    pub max_quotient: f64,
    pub argmax: usize,
    /// Sharp kinds: trials with `LHS > C (1 + tol) RHS`.
    pub violations: usize,
    /// Non-sharp kinds: the maximum on the refined grid.
    pub refined_max_quotient: Option<f64>,
    pub refinement_change: Option<f64>,
}

impl InequalityCheck {
    pub fn stable(&self, tol: f64) -> Option<bool> {
        self.refinement_change.map(|c| c < tol)
    }
}

/// `a` of the interpolation inequality with `d = c + (2-b)/2`, `q = p`.
pub fn ckn_exponent(params: &ModelParams, idx: &DerivedIndices) -> Result<(f64, f64)> {
    let n = params.n as f64;
    let d = params.c + (2.0 - params.b) / 2.0;
    let s = (n + params.gamma) / idx.sigma0;
    let a = ((n + d) / (params.p + 2.0) - s) / ((n - 2.0 + params.b) / 2.0 - s);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interpolation exponent a = {a} outside (0, 1) for these parameters"
        )));
    }
    Ok((d, a))
}

/// Exterior potential and the right-hand side ingredients of the two tail
/// inequalities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailParts {
    /// `‖∇f‖²_{b,2}`.
    pub grad_sq: f64,
    /// `R^{-(2-b-2s_c)} ρ(f,R)^{(4-np+2p)/(4-np)}`; `None` when `p > 4/n`.
    pub morrey_term: Option<f64>,
    /// `R^{((2-b)p-2𝐩_c)/(4-p)} ‖f‖₂^{2(p+4)/(4-p)}`; `None` when `p ≥ 4`.
    pub strauss_term: Option<f64>,
}

pub fn tail_quotient(
    f: &RadialField,
    radius: f64,
    params: &ModelParams,
    idx: &DerivedIndices,
) -> Result<(f64, TailParts)> {
    let grid = f.grid();
    if !(radius > 0.0 && radius <= grid.r_max()) {
        return Err(Error::InvalidArgument(format!(
            "tail radius {radius} outside (0, r_max = {}]",
            grid.r_max()
        )));
    }
    let (n, b, p) = (params.n as f64, params.b, params.p);
    let pot: Vec<f64> = f
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(v, &r)| if r >= radius { v.norm().powf(p + 2.0) } else { 0.0 })
        .collect();
    let lhs = grid.integrate_weighted(&pot, params.c)?;
    let grad = grad_norm_b_smooth(f, b)?;
    let np = n * p;
    let morrey_term = if np < 4.0 && radius <= grid.r_max() / 2.0 {
        let e = (4.0 - np + 2.0 * p) / (4.0 - np);
        let rho = rho(f, radius, idx)?.rho;
        Some(radius.powf(-(2.0 - b - 2.0 * idx.s_c)) * rho.powf(e))
    } else {
        None
    };
    let strauss_term = if p < 4.0 {
        let mass = f.mass();
        Some(radius.powf(((2.0 - b) * p - 2.0 * idx.p_c) / (4.0 - p)) * mass.powf((p + 4.0) / (4.0 - p)))
    } else {
        None
    };
    Ok((
        lhs,
        TailParts {
            grad_sq: grad * grad,
            morrey_term,
            strauss_term,
        },
    ))
}

/// `(lhs, rhs)` of a non-tail kind, or `(lhs - η‖∇f‖², tail)` of a tail kind.
fn sides(
    kind: InequalityKind,
    f: &RadialField,
    params: &ModelParams,
    idx: &DerivedIndices,
    opts: &CheckOptions,
) -> Result<(f64, f64)> {
    let n = params.n as f64;
    let (b, p) = (params.b, params.p);
    Ok(match kind {
        InequalityKind::RadialGn | InequalityKind::StandardGn => {
            let t = TrialNorms::of(f, params, idx)?;
            (t.potential, radial_gn_rhs(&t, params, idx))
        }
        InequalityKind::SharpGn => {
            let t = TrialNorms::of(f, params, idx)?;
            (t.potential, two_term_rhs(&t, params))
        }
        InequalityKind::Ckn => {
            let (d, a) = ckn_exponent(params, idx)?;
            let lhs = f.weighted_norm(d, p + 2.0)?.powf(p + 2.0);
            let grad = grad_norm_b_smooth(f, b)?;
            let morrey = f.weighted_norm(params.gamma, idx.sigma0)?;
            (lhs, grad.powf(a * (p + 2.0)) * morrey.powf((1.0 - a) * (p + 2.0)))
        }
        InequalityKind::HardySobolev => {
            let d = (1.0 - b) / 2.0;
            let m = n - 2.0 + b + 2.0 * d;
            let q = 2.0 * n / m;
            let lhs = f.weighted_norm(-2.0 * n * d / m, q)?.powf(2.0);
            let grad = grad_norm_b_smooth(f, b)?;
            (lhs, grad * grad)
        }
        InequalityKind::Strauss => {
            let e = (2.0 * n - 2.0 + b) / 4.0;
            let lhs = f
                .values()
                .iter()
                .zip(f.grid().nodes())
                .map(|(v, r)| r.powf(e) * v.norm())
                .fold(0.0, f64::max);
            let grad = grad_norm_b_smooth(f, b)?;
            (lhs, (grad * f.weighted_norm(0.0, 2.0)?).sqrt())
        }
        InequalityKind::TailMorrey | InequalityKind::TailStrauss => {
            let (lhs, parts) = tail_quotient(f, opts.radius, params, idx)?;
            let tail = if kind == InequalityKind::TailMorrey {
                parts.morrey_term
            } else {
                parts.strauss_term
            }
            .ok_or_else(|| Error::InvalidArgument(format!("{kind:?} does not apply to p = {p}")))?;
            (lhs - opts.eta * parts.grad_sq, tail)
        }
    })
}

fn check_applicable(kind: InequalityKind, params: &ModelParams, idx: &DerivedIndices) -> Result<()> {
    let n = params.n as f64;
    match kind {
        InequalityKind::HardySobolev if params.n < 3 => Err(Error::InvalidArgument(
            "the Hardy–Sobolev inequality needs n >= 3".into(),
        )),
        InequalityKind::Ckn => ckn_exponent(params, idx).map(|_| ()),
        InequalityKind::TailMorrey => {
            if (params.p - 4.0 / n).abs() < 1e-3 {
                Err(Error::InvalidArgument(format!(
                    "p = {} is within 1e-3 of 4/n; the tail exponent degenerates",
                    params.p
                )))
            } else if params.p > 4.0 / n {
                Err(Error::InvalidArgument(format!("tail estimate needs p < 4/n, got p = {}", params.p)))
            } else {
                Ok(())
            }
        }
        InequalityKind::TailStrauss if params.p >= 4.0 => {
            Err(Error::InvalidArgument("tail estimate needs p < 4".into()))
        }
        _ => Ok(()),
    }
}

/// Evaluates one kind over a battery of analytic trial functions sampled on
/// `grid`. Sharp kinds need `ground` (the matching report and profile).
pub fn verify_inequality(
    kind: InequalityKind,
    battery: &[TrialFn],
    grid: Arc<RadialGrid>,
    params: &ModelParams,
    idx: &DerivedIndices,
    ground: Option<(&GnReport, &GroundStateProfile)>,
    opts: &CheckOptions,
) -> Result<InequalityCheck> {
    if battery.len() < MIN_BATTERY {
        return Err(Error::BatteryTooSmall {
            got: battery.len(),
            need: MIN_BATTERY,
        });
    }
    check_applicable(kind, params, idx)?;
    let c_gn = match (kind.sharp_kind(), ground) {
        (Some(expected), Some((rep, _))) if rep.kind == expected => Some(rep.c_gn),
        (Some(expected), Some((rep, _))) => {
            return Err(Error::MismatchedKind {
                expected: if expected == GnKind::TwoTermSharp { "TwoTermSharp" } else { "MassCriticalRadial" },
                found: if rep.kind == GnKind::TwoTermSharp { "TwoTermSharp" } else { "MassCriticalRadial" },
            })
        }
        (Some(_), None) => {
            return Err(Error::InvalidArgument(format!("{kind:?} needs a ground-state report")));
        }
        (None, _) => None,
    };
    let ground_field = ground.map(|(_, g)| &g.field);
    let evaluate = |grid: Arc<RadialGrid>| -> Result<Vec<(f64, f64)>> {
        battery
            .par_iter()
            .map(|t| {
                let f = t.sample(grid.clone(), ground_field)?;
                sides(kind, &f, params, idx, opts)
            })
            .collect()
    };
    let pairs = evaluate(grid.clone())?;
    let mut trials = 0;
    let mut violations = 0;
    let mut max_quotient = if kind.is_tail() { 0.0 } else { f64::NEG_INFINITY };
    let mut argmax = 0;
    for (i, &(lhs, rhs)) in pairs.iter().enumerate() {
        if !(rhs > 0.0) {
            continue;
        }
        trials += 1;
        let q = lhs / rhs;
        if q > max_quotient {
            max_quotient = q;
            argmax = i;
        }
        if let Some(c) = c_gn {
            if lhs > c * rhs * (1.0 + SHARP_TOL) {
                violations += 1;
            }
        }
    }
    if trials < MIN_BATTERY {
        return Err(Error::BatteryTooSmall {
            got: trials,
            need: MIN_BATTERY,
        });
    }
    let (refined_max_quotient, refinement_change) = if opts.refine && !kind.is_sharp() {
        let fine = Arc::new(RadialGrid::build(grid.dim(), grid.r_max(), 2 * grid.len(), grid.grading())?);
        let fine_pairs = evaluate(fine)?;
        let fine_max = fine_pairs
            .iter()
            .filter(|(_, r)| *r > 0.0)
            .map(|(l, r)| l / r)
            .fold(if kind.is_tail() { 0.0 } else { f64::NEG_INFINITY }, f64::max);
        let change = if max_quotient != 0.0 {
            (fine_max - max_quotient).abs() / max_quotient.abs()
        } else {
            fine_max.abs()
        };
        (Some(fine_max), Some(change))
    } else {
        (None, None)
    };
    Ok(InequalityCheck {
        kind,
        trials,
        max_quotient,
        argmax,
        violations,
        refined_max_quotient,
        refinement_change,
    })
}
