//! Crank–Nicolson time stepping for the radial equation with an
//! energy-conserving discrete nonlinearity.
//!
//! One step solves `i (u¹ - u⁰)/dt + 𝒜_b ū + g ū = 0` with `ū = (u¹ + u⁰)/2`
//! and `g_i = c_i (F(ρ¹_i) - F(ρ⁰_i)) / (ρ¹_i - ρ⁰_i)`, `F(ρ) = 2ρ^{(p+2)/2}/(p+2)`,
//! `c_i = W_i(c)/w_i`. Because `g` is real the discrete mass is conserved for
//! any iterate; the difference quotient makes the discrete energy
//! `½(Σ κ |Δu|² - Σ W(c) F(|u|²))` conserved at the fixed point.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DivergenceOperator, RadialField, RadialGrid};
use crate::linalg::TridiagonalLu;
use crate::model::{DerivedIndices, ModelParams};

#[derive(Debug, Clone)]
pub struct SimState {
    pub field: RadialField,
    pub t: f64,
    pub dt: f64,
    pub step_count: usize,
}

impl SimState {
    pub fn new(field: RadialField, dt: f64) -> Self {
        SimState {
            field,
            t: 0.0,
            dt,
            step_count: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub t_end: f64,
    /// Record a frame every this many accepted steps.
    pub record_stride: usize,
    /// Keep the field in every this many recorded frames (0: never).
    pub snapshot_stride: usize,
    /// Growth of `‖∇u‖_{b,2}` over its initial value that counts as blow-up.
    pub blowup_factor: f64,
    pub mass_cap: f64,
    pub energy_cap: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Shrink the step with the intrinsic time scale of the solution.
    pub adaptive: bool,
    pub max_steps: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            dt0: 1e-3,
            dt_min: 1e-14,
            t_end: 1.0,
            record_stride: 10,
            snapshot_stride: 0,
            blowup_factor: 1e3,
            mass_cap: 1e-6,
            energy_cap: 1e-4,
            fp_tol: 1e-10,
            fp_max_iter: 50,
            adaptive: true,
            max_steps: 10_000_000,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |name: &str, x: f64, v: &mut Vec<String>| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} = {x} must be positive and finite"));
            }
        };
        pos("dt0", self.dt0, &mut v);
        pos("dt_min", self.dt_min, &mut v);
        pos("t_end", self.t_end, &mut v);
        pos("mass_cap", self.mass_cap, &mut v);
        pos("energy_cap", self.energy_cap, &mut v);
        pos("fp_tol", self.fp_tol, &mut v);
        if self.dt_min > self.dt0 {
            v.push(format!("dt_min = {} exceeds dt0 = {}", self.dt_min, self.dt0));
        }
        if !(self.blowup_factor > 1.0) {
            v.push(format!("blowup_factor = {} must exceed 1", self.blowup_factor));
        }
        if self.record_stride == 0 {
            v.push("record_stride must be at least 1".into());
        }
        if self.fp_max_iter == 0 {
            v.push("fp_max_iter must be at least 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Frame {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_b: f64,
    pub sup_amp: f64,
    #[serde(skip)]
    pub snapshot: Option<RadialField>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TimeSeries {
    pub frames: Vec<Frame>,
    pub snapshot_stride: usize,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.grad_b).collect()
    }

    /// Frames that carry a field.
    pub fn snapshots(&self) -> Vec<(f64, &RadialField)> {
        self.frames
            .iter()
            .filter_map(|f| f.snapshot.as_ref().map(|s| (f.t, s)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    GradThreshold,
    DtUnderflow,
    Completed,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub detected: bool,
    pub t_last: f64,
    pub dt_last: f64,
    pub reason: StopReason,
    pub grad_growth_factor: f64,
    pub steps: usize,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
}

/// Reusable stepping machinery for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Stepper {
    op: DivergenceOperator,
    /// `W_i(c) / w_i`.
    coupling: Vec<f64>,
    p: f64,
    fp_tol: f64,
    fp_max_iter: usize,
    lu: Option<(f64, TridiagonalLu<Complex64>)>,
    /// Fixed-point iterations used by the last step.
    pub last_iterations: usize,
}

impl Stepper {
    pub fn new(grid: &RadialGrid, params: &ModelParams, fp_tol: f64, fp_max_iter: usize) -> Result<Self> {
        let op = DivergenceOperator::new(grid, params.b);
        let wc = grid.power_weights(params.c)?;
        let coupling = wc.iter().zip(grid.weights()).map(|(a, w)| a / w).collect();
        Ok(Stepper {
            op,
            coupling,
            p: params.p,
            fp_tol,
            fp_max_iter,
            lu: None,
            last_iterations: 0,
        })
    }

    /// The free equation `i u_t + 𝒜_b u = 0`.
    pub fn linear(grid: &RadialGrid, params: &ModelParams) -> Result<Self> {
        let mut s = Stepper::new(grid, params, 1e-14, 2)?;
        s.coupling.iter_mut().for_each(|c| *c = 0.0);
        Ok(s)
    }

    fn factor<'a>(
        op: &DivergenceOperator,
        slot: &'a mut Option<(f64, TridiagonalLu<Complex64>)>,
        dt: f64,
    ) -> &'a TridiagonalLu<Complex64> {
        let stale = !matches!(slot, Some((d, _)) if *d == dt);
        if stale {
            let m = op.len() - 1;
            let h = Complex64::new(0.0, 0.5 * dt);
            let (mut lo, mut di, mut up) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
            for i in 0..m {
                let (l, d, u) = op.row(i);
                lo.push(-h * l);
                di.push(Complex64::new(1.0, 0.0) - h * d);
                up.push(-h * u);
            }
            *slot = Some((dt, TridiagonalLu::factor(&lo, &di, &up)));
        }
        &slot.as_ref().expect("factored above").1
    }

    /// Advances `u` in place by `dt`. On failure `u` is left untouched.
    pub fn advance(&mut self, u: &mut [Complex64], dt: f64) -> Result<()> {
        let m = u.len() - 1;
        let p = self.p;
        let tol = self.fp_tol;
        let max_iter = self.fp_max_iter;
        let coupling = &self.coupling;
        let lu = Self::factor(&self.op, &mut self.lu, dt);
        let h = Complex64::new(0.0, 0.5 * dt);
        let rho0: Vec<f64> = u[..m].iter().map(|v| v.norm_sqr()).collect();
        let nonlinear = coupling.iter().any(|&c| c != 0.0);

        let mut v = lu.solve(&u[..m]);
        let mut rhs = vec![Complex64::default(); m];
        let mut next = vec![Complex64::default(); m];
        let mut change = f64::INFINITY;
        let mut iterations = 0;
        if nonlinear {
            for it in 1..=max_iter {
                iterations = it;
                for i in 0..m {
                    let rho1 = (2.0 * v[i] - u[i]).norm_sqr();
                    let g = coupling[i] * difference_quotient(rho0[i], rho1, p);
                    rhs[i] = u[i] + h * (g * v[i]);
                }
                lu.solve_into(&rhs, &mut next);
                let (mut num, mut den) = (0.0f64, 0.0f64);
                for i in 0..m {
                    num = num.max((next[i] - v[i]).norm());
                    den = den.max(next[i].norm());
                }
                std::mem::swap(&mut v, &mut next);
                change = if den > 0.0 { num / den } else { 0.0 };
                if !change.is_finite() {
                    break;
                }
                if change <= tol {
                    break;
                }
            }
            if !(change <= tol) {
                return Err(Error::FixedPointDivergence { iterations, change });
            }
        }
        self.last_iterations = iterations;
        for i in 0..m {
            u[i] = 2.0 * v[i] - u[i];
        }
        u[m] = Complex64::default();
        Ok(())
    }

    /// `(mass, energy, ‖∇u‖_{b,2}, Σ W(c)|u|^{p+2})` in the scheme's own
    /// discretisation.
    pub fn invariants(&self, u: &[Complex64]) -> (f64, f64, f64, f64) {
        let w = self.op.weights();
        let mass: f64 = u.iter().zip(w).map(|(v, w)| w * v.norm_sqr()).sum();
        let kin = self.op.grad_energy(u);
        let pot: f64 = u
            .iter()
            .zip(w.iter().zip(&self.coupling))
            .map(|(v, (w, c))| w * c * v.norm_sqr().powf(0.5 * (self.p + 2.0)))
            .sum();
        (mass, 0.5 * kin - pot / (self.p + 2.0), kin.sqrt(), pot)
    }
}

/// `(F(ρ₁) - F(ρ₀))/(ρ₁ - ρ₀)` with `F' (ρ) = ρ^{p/2}`, evaluated by a
/// midpoint expansion when the two densities nearly coincide.
fn difference_quotient(rho0: f64, rho1: f64, p: f64) -> f64 {
    let e = 0.5 * (p + 2.0);
    let d = rho1 - rho0;
    let mid = 0.5 * (rho0 + rho1);
    if mid <= 0.0 {
        return 0.0;
    }
    if d.abs() <= 1e-4 * mid {
        // In relative form, so subnormal densities do not overflow.
        let q = 0.5 * p;
        let x = d / mid;
        return mid.powf(q) * (1.0 + q * (q - 1.0) * x * x / 24.0);
    }
    (rho1.powf(e) - rho0.powf(e)) / (e * d)
}

/// Single Crank–Nicolson step of `state` by `dt`.
pub fn step(state: &SimState, dt: f64, params: &ModelParams) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let cfg = EvolveConfig::default();
    let mut stepper = Stepper::new(state.field.grid(), params, cfg.fp_tol, cfg.fp_max_iter)?;
    let mut values = state.field.values().to_vec();
    stepper.advance(&mut values, dt)?;
    Ok(SimState {
        field: RadialField::new(state.field.grid_arc(), values)?,
        t: state.t + dt,
        dt,
        step_count: state.step_count + 1,
    })
}

/// `dt0 (G₀/G)^{2(2-b)/(2-b-2s_c)}`, clamped to `[dt_min, dt0]`;
/// `DtUnderflow` when the unclamped value falls below `dt_min`.
pub fn adapt_dt(grad0: f64, grad: f64, t: f64, params: &ModelParams, idx: &DerivedIndices, cfg: &EvolveConfig) -> Result<f64> {
    if !(grad > 0.0) {
        return Err(Error::DivisionByZero("gradient norm of the current state".into()));
    }
    let k = 2.0 - params.b;
    let e = 2.0 * k / (k - 2.0 * idx.s_c);
    let dt = cfg.dt0 * (grad0 / grad).powf(e);
    if dt < cfg.dt_min {
        return Err(Error::DtUnderflow { t, dt });
    }
    Ok(dt.min(cfg.dt0))
}

fn relative(a: f64, b: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        (a - b).abs() / scale
    } else {
        (a - b).abs()
    }
}

/// Time-steps `u0` until blow-up is detected, the step underflows or
/// `t_end` is reached.
pub fn run(u0: &RadialField, params: &ModelParams, cfg: &EvolveConfig) -> Result<(TimeSeries, BlowupReport)> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidArgument(violations.join("; ")));
    }
    let idx = params.derive_indices()?;
    if u0.sup_norm() == 0.0 {
        return Err(Error::InvalidArgument("initial datum is identically zero".into()));
    }
    let grid: Arc<RadialGrid> = u0.grid_arc();
    let mut stepper = Stepper::new(&grid, params, cfg.fp_tol, cfg.fp_max_iter)?;
    let mut u = u0.values().to_vec();
    *u.last_mut().expect("grid has nodes") = Complex64::default();

    let (mass0, energy0, grad0, pot0) = stepper.invariants(&u);
    if grad0 == 0.0 {
        return Err(Error::InvalidArgument("initial datum has zero gradient".into()));
    }
    let mut series = TimeSeries {
        frames: Vec::new(),
        snapshot_stride: cfg.snapshot_stride,
    };
    let mut recorded = 0usize;
    // The final frame always keeps its snapshot when snapshots are on.
    let mut record = |series: &mut TimeSeries, u: &[Complex64], t: f64, dt: f64, inv: (f64, f64, f64, f64), last: bool| -> Result<()> {
        let keep = cfg.snapshot_stride > 0 && (last || recorded % cfg.snapshot_stride == 0);
        recorded += 1;
        series.frames.push(Frame {
            t,
            dt,
            mass: inv.0,
            energy: inv.1,
            grad_b: inv.2,
            sup_amp: u.iter().map(|v| v.norm()).fold(0.0, f64::max),
            snapshot: if keep {
                Some(RadialField::new(grid.clone(), u.to_vec())?)
            } else {
                None
            },
        });
        Ok(())
    };
    record(&mut series, &u, 0.0, cfg.dt0, (mass0, energy0, grad0, pot0), false)?;

    let p2 = params.p + 2.0;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut dt = cfg.dt0;
    let mut grad = grad0;
    let mut max_mass = 0.0f64;
    let mut max_energy = 0.0f64;
    let mut trial = u.clone();
    let reason = loop {
        if t >= cfg.t_end * (1.0 - 1e-14) {
            break StopReason::Completed;
        }
        if grad >= cfg.blowup_factor * grad0 {
            break StopReason::GradThreshold;
        }
        if steps >= cfg.max_steps {
            break StopReason::Completed;
        }
        let mut h = if cfg.adaptive {
            match adapt_dt(grad0, grad, t, params, &idx, cfg) {
                Ok(h) => h,
                Err(Error::DtUnderflow { .. }) => break StopReason::DtUnderflow,
                Err(e) => return Err(e),
            }
        } else {
            cfg.dt0
        };
        h = h.min(cfg.t_end - t);
        // Halve on fixed-point failure.
        let accepted = loop {
            trial.copy_from_slice(&u);
            match stepper.advance(&mut trial, h) {
                Ok(()) => break Some(h),
                Err(Error::FixedPointDivergence { .. }) if h / 2.0 >= cfg.dt_min => h /= 2.0,
                Err(Error::FixedPointDivergence { .. }) => break None,
                Err(e) => return Err(e),
            }
        };
        let Some(h) = accepted else {
            break StopReason::DtUnderflow;
        };
        std::mem::swap(&mut u, &mut trial);
        t += h;
        dt = h;
        steps += 1;
        let inv = stepper.invariants(&u);
        grad = inv.2;
        let mass_drift = relative(inv.0, mass0, mass0);
        // Energy drift relative to the current size of its two terms.
        let energy_scale = 0.5 * inv.2 * inv.2 + inv.3 / p2;
        let energy_drift = relative(inv.1, energy0, energy_scale);
        max_mass = max_mass.max(mass_drift);
        max_energy = max_energy.max(energy_drift);
        if !(mass_drift <= cfg.mass_cap) {
            return Err(Error::ConservationBreach {
                t,
                quantity: "mass",
                drift: mass_drift,
                cap: cfg.mass_cap,
            });
        }
        if !(energy_drift <= cfg.energy_cap) {
            return Err(Error::ConservationBreach {
                t,
                quantity: "energy",
                drift: energy_drift,
                cap: cfg.energy_cap,
            });
        }
        let last = t >= cfg.t_end * (1.0 - 1e-14) || grad >= cfg.blowup_factor * grad0;
        if steps % cfg.record_stride == 0 || last {
            record(&mut series, &u, t, h, inv, last)?;
        }
    };
    if series.frames.last().map(|f| f.t) != Some(t) {
        let inv = stepper.invariants(&u);
        record(&mut series, &u, t, dt, inv, true)?;
    } else if cfg.snapshot_stride > 0 {
        if let Some(f) = series.frames.last_mut().filter(|f| f.snapshot.is_none()) {
            f.snapshot = Some(RadialField::new(grid.clone(), u.clone())?);
        }
    }
    let growth = grad / grad0;
    Ok((
        series,
        BlowupReport {
            detected: growth >= cfg.blowup_factor,
            t_last: t,
            dt_last: dt,
            reason,
            grad_growth_factor: growth,
            steps,
            max_mass_drift: max_mass,
            max_energy_drift: max_energy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grading;

    fn grid(n: usize, r_max: f64, len: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::build(n, r_max, len, Grading::LogGraded).unwrap())
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = grid(3, 10.0, 256);
        let params = ModelParams::new(3, 0.0, 0.0, 2.0).unwrap();
        let s = SimState::new(RadialField::zeros(g), 1e-2);
        let next = step(&s, 1e-2, &params).unwrap();
        assert!(next.field.values().iter().all(|v| *v == Complex64::default()));
        assert_eq!(next.step_count, 1);
    }

    #[test]
    fn single_step_conserves_mass_and_energy() {
        let g = grid(3, 15.0, 1024);
        let params = ModelParams::new(3, -0.5, 0.25, 2.0).unwrap();
        let f = RadialField::from_fn(g.clone(), |r| {
            Complex64::new(0.0, 0.3 * r).exp() * 1.5 * (-r * r).exp()
        })
        .unwrap();
        let mut stepper = Stepper::new(&g, &params, 1e-13, 50).unwrap();
        let mut u = f.values().to_vec();
        let before = stepper.invariants(&u);
        stepper.advance(&mut u, 1e-2).unwrap();
        let after = stepper.invariants(&u);
        assert!((after.0 - before.0).abs() < 1e-12 * before.0);
        assert!((after.1 - before.1).abs() < 1e-10 * (0.5 * before.2 * before.2));
    }

    #[test]
    fn difference_quotient_branches_agree() {
        for &p in &[1.0, 4.0 / 3.0, 2.0, 5.0 / 3.0] {
            let rho0: f64 = 0.7;
            let rho1: f64 = rho0 * (1.0 + 2e-4);
            let direct = {
                let e = 0.5 * (p + 2.0);
                (rho1.powf(e) - rho0.powf(e)) / (e * (rho1 - rho0))
            };
            let near = difference_quotient(rho0, rho0 * (1.0 + 0.999e-4), p);
            let exact_mid = (0.5 * (rho0 + rho1)).powf(0.5 * p);
            assert!((direct - exact_mid).abs() < 1e-7);
            assert!((near - 0.7f64.powf(0.5 * p)).abs() < 1e-4);
        }
        assert_eq!(difference_quotient(0.0, 0.0, 2.0), 0.0);
        // Subnormal densities.
        let tiny = 5e-324;
        for &p in &[1.0, 2.0] {
            let v = difference_quotient(tiny, tiny, p);
            assert!(v.is_finite() && v >= 0.0);
        }
    }

    #[test]
    fn free_gaussian_variance_growth() {
        // i u_t + u_xx = 0, u0 = e^{-x²}: ⟨x²⟩(t) = 1/4 + 4t².
        let g = Arc::new(RadialGrid::build(1, 20.0, 4096, Grading::Uniform).unwrap());
        let params = ModelParams::new(1, 0.0, 0.0, 2.0).unwrap();
        let mut u = RadialField::from_real_fn(g.clone(), |r| (-r * r).exp()).unwrap().into_values();
        let mut stepper = Stepper::linear(&g, &params).unwrap();
        let dt = 1e-3;
        let second_moment = |u: &[Complex64]| {
            let rho: Vec<f64> = u.iter().map(|v| v.norm_sqr()).collect();
            let x2: Vec<f64> = rho.iter().zip(g.nodes()).map(|(d, r)| d * r * r).collect();
            g.integrate(&x2) / g.integrate(&rho)
        };
        for k in 1..=500 {
            stepper.advance(&mut u, dt).unwrap();
            if k % 100 == 0 {
                let t = k as f64 * dt;
                let want = 0.25 + 4.0 * t * t;
                let got = second_moment(&u);
                assert!((got - want).abs() < 1e-3 * want, "t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn adapt_dt_policy() {
        let params = ModelParams::new(2, 0.0, 0.0, 2.0).unwrap();
        let idx = params.derive_indices().unwrap();
        let cfg = EvolveConfig {
            dt0: 1e-2,
            dt_min: 1e-12,
            ..Default::default()
        };
        assert_eq!(adapt_dt(3.0, 3.0, 0.0, &params, &idx, &cfg).unwrap(), 1e-2);
        let dt = adapt_dt(1.0, 10.0, 0.0, &params, &idx, &cfg).unwrap();
        assert!((dt - 1e-4).abs() < 1e-18);
        // Smaller gradients never enlarge the step beyond dt0.
        assert_eq!(adapt_dt(1.0, 0.5, 0.0, &params, &idx, &cfg).unwrap(), 1e-2);
        assert!(matches!(
            adapt_dt(1.0, 1e6, 0.0, &params, &idx, &cfg),
            Err(Error::DtUnderflow { .. })
        ));
    }

    #[test]
    fn adapt_dt_rollout_is_logarithmic() {
        // ‖∇u‖ = (T* - t)^{-1/2}, b = 0, s_c = 0: dt ∝ (T* - t), so the gap
        // shrinks geometrically and the step count grows like log(1/gap).
        let params = ModelParams::new(2, 0.0, 0.0, 2.0).unwrap();
        let idx = params.derive_indices().unwrap();
        let cfg = EvolveConfig {
            dt0: 1e-2,
            dt_min: 1e-300,
            ..Default::default()
        };
        let count = |gap_end: f64| {
            let mut t: f64 = 0.0;
            let mut n = 0;
            while 1.0 - t > gap_end {
                t += adapt_dt(1.0, (1.0 - t).powf(-0.5), t, &params, &idx, &cfg).unwrap();
                n += 1;
            }
            n
        };
        let (a, b) = (count(1e-3), count(1e-6));
        let per_decade = (b - a) as f64 / 3.0;
        assert!((per_decade - 10f64.ln() / 1e-2).abs() < 5.0, "{per_decade}");
    }

    #[test]
    fn run_rejects_zero_data() {
        let g = grid(3, 10.0, 256);
        let params = ModelParams::new(3, 0.0, 0.0, 2.0).unwrap();
        assert!(run(&RadialField::zeros(g), &params, &EvolveConfig::default()).is_err());
    }

    #[test]
    fn small_data_completes() {
        let g = grid(3, 20.0, 1024);
        let params = ModelParams::new(3, -0.5, 0.0, 2.0).unwrap();
        let u0 = RadialField::from_real_fn(g, |r| 0.2 * (-r * r).exp()).unwrap();
        let cfg = EvolveConfig {
            dt0: 5e-3,
            t_end: 0.5,
            ..Default::default()
        };
        let (series, rep) = run(&u0, &params, &cfg).unwrap();
        assert_eq!(rep.reason, StopReason::Completed);
        assert!(!rep.detected);
        assert!(series.frames.windows(2).all(|w| w[1].t > w[0].t));
        assert!(rep.max_mass_drift < 1e-12);
    }
}
