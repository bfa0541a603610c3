//! Localized virial quantities `V = ∫ψ_R|u|²`, `V'`, `V''` with the cutoff
//! `φ_R = R² θ(r/R)`, `∇ψ_R = ∇φ_R / |x|^b`.
//!
//! `θ(x) = x²` on `[0, 2]`, a degree-8 polynomial bridge on `[2, 4]` that
//! matches `x²` to fourth order at 2 and has vanishing derivatives up to
//! fourth order at 4, and the constant `62/7` beyond. A cutoff that returns to
//! zero at 4 cannot keep `θ'' ≤ 2` (the slope would have to fall from 4 to -4
//! and climb back with curvature exactly 2), so the plateau is used instead;
//! every derivative of `φ_R` still vanishes for `r ≥ 4R`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::TimeSeries;
use crate::grid::{gauss, RadialField, RadialGrid};
use crate::model::{DerivedIndices, ModelParams};

/// Ascending coefficients of θ on the bridge `[2, 4]`.
const BRIDGE: [f64; 9] = [
    2878.0 / 7.0,
    -1280.0,
    1712.0,
    -1280.0,
    585.0,
    -167.0,
    465.0 / 16.0,
    -79.0 / 28.0,
    15.0 / 128.0,
];

/// Slack allowed in the sign conditions; the bridge touches `θ'/x = 2`
/// tangentially at `x = 2`.
const SIGN_TOL: f64 = 1e-9;

fn poly_derivs(x: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in (k..BRIDGE.len()).rev() {
            let falling: f64 = (0..k).map(|i| (j - i) as f64).product();
            acc = acc * x + BRIDGE[j] * falling;
        }
        *o = acc;
    }
    out
}

/// `θ, θ', θ'', θ''', θ''''` at `x ≥ 0`.
pub fn theta_derivatives(x: f64) -> [f64; 5] {
    if x <= 2.0 {
        [x * x, 2.0 * x, 2.0, 0.0, 0.0]
    } else if x >= 4.0 {
        [62.0 / 7.0, 0.0, 0.0, 0.0, 0.0]
    } else {
        poly_derivs(x)
    }
}

/// `Ψ(x) = ∫₀^x θ'(y) y^{-b} dy`, so that `ψ_R(r) = R^{2-b} Ψ(r/R)`.
fn psi_unit(x: f64, b: f64) -> f64 {
    let inner = 2f64.powf(2.0 - b) * 2.0 / (2.0 - b);
    if x <= 2.0 {
        return 2.0 * x.powf(2.0 - b) / (2.0 - b);
    }
    let top = x.min(4.0);
    let panels = 64;
    let h = (top - 2.0) / panels as f64;
    let bridge: f64 = (0..panels)
        .map(|k| {
            let a = 2.0 + k as f64 * h;
            gauss(a, a + h, |y| theta_derivatives(y)[1] * y.powf(-b))
        })
        .sum();
    inner + bridge
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialWeights {
    pub radius: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `φ_R^{(k)}` for `k = 1..4`.
    pub dphi: [Vec<f64>; 4],
    pub psi: Vec<f64>,
    /// `∇ψ_R = φ_R' r^{-b}` (radial component).
    pub psi_grad: Vec<f64>,
    pub laplacian: Vec<f64>,
    /// `(Δφ_R)'`.
    pub laplacian_grad: Vec<f64>,
    pub bilaplacian: Vec<f64>,
    pub b: f64,
}

/// Cutoff weights at the nodes of `grid`; checks `2 - φ'' ≥ 0`,
/// `2 - φ'/r ≥ 0` and `2n - Δφ ≥ 0` at every node.
pub fn virial_weights(radius: f64, grid: &RadialGrid, params: &ModelParams) -> Result<VirialWeights> {
    if !(radius > 0.0) || 4.0 * radius > grid.r_max() * (1.0 + 1e-12) {
        return Err(Error::DomainTooSmall {
            radius,
            r_max: grid.r_max(),
        });
    }
    let n = grid.dim() as f64;
    let b = params.b;
    let len = grid.len();
    let mut w = VirialWeights {
        radius,
        theta: Vec::with_capacity(len),
        phi: Vec::with_capacity(len),
        dphi: Default::default(),
        psi: Vec::with_capacity(len),
        psi_grad: Vec::with_capacity(len),
        laplacian: Vec::with_capacity(len),
        laplacian_grad: Vec::with_capacity(len),
        bilaplacian: Vec::with_capacity(len),
        b,
    };
    for &r in grid.nodes() {
        let x = r / radius;
        let th = theta_derivatives(x);
        let d: [f64; 5] = std::array::from_fn(|k| radius.powi(2 - k as i32) * th[k]);
        w.theta.push(th[0]);
        w.phi.push(d[0]);
        for k in 0..4 {
            w.dphi[k].push(d[k + 1]);
        }
        w.psi.push(radius.powf(2.0 - b) * psi_unit(x, b));
        w.psi_grad.push(d[1] * r.powf(-b));
        if x <= 2.0 {
            w.laplacian.push(2.0 * n);
            w.laplacian_grad.push(0.0);
            w.bilaplacian.push(0.0);
        } else {
            let m = n - 1.0;
            let lap = d[2] + m * d[1] / r;
            let lap1 = d[3] + m * (d[2] / r - d[1] / (r * r));
            let lap2 = d[4] + m * (d[3] / r - 2.0 * d[2] / (r * r) + 2.0 * d[1] / (r * r * r));
            w.laplacian.push(lap);
            w.laplacian_grad.push(lap1);
            w.bilaplacian.push(lap2 + m * lap1 / r);
        }
        let checks = [
            ("2 - phi'' >= 0", 2.0 - d[2]),
            ("2 - phi'/r >= 0", 2.0 - d[1] / r),
            ("2n - lap(phi) >= 0", 2.0 * n - *w.laplacian.last().expect("pushed")),
        ];
        for (condition, value) in checks {
            if value < -SIGN_TOL {
                return Err(Error::CutoffCondition { condition, radius: r });
            }
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialRecord {
    pub t: f64,
    pub v: f64,
    /// `2 Im ∫ ∇φ_R · ∇u ū`.
    pub v1: f64,
    /// Assembled second derivative.
    pub v2: f64,
    /// Centred differences of the `v` samples (interior frames only).
    pub fd_v1: Option<f64>,
    pub fd_v2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialSeries {
    pub radius: f64,
    pub records: Vec<VirialRecord>,
}

/// `(V, V', V'')` of a single field.
pub fn virial_values(f: &RadialField, weights: &VirialWeights, params: &ModelParams) -> Result<(f64, f64, f64)> {
    let grid = f.grid();
    if weights.phi.len() != grid.len() {
        return Err(Error::InvalidArgument("virial weights built on a different grid".into()));
    }
    let (b, c, p) = (params.b, params.c, params.p);
    let rho = f.modulus_sq();
    let du = f.radial_derivative();
    let nodes = grid.nodes();

    let v = grid.integrate(&rho.iter().zip(&weights.psi).map(|(d, s)| d * s).collect::<Vec<_>>());
    let cross: Vec<f64> = (0..grid.len())
        .map(|i| weights.dphi[0][i] * (du[i] * f.values()[i].conj()).im)
        .collect();
    let v1 = 2.0 * grid.integrate(&cross);

    let nl: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = nodes[i];
            (p * weights.laplacian[i] - 2.0 * c * weights.dphi[0][i] / r) * rho[i].powf(0.5 * (p + 2.0))
        })
        .collect();
    let lin: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = nodes[i];
            (r.powf(b) * weights.bilaplacian[i] + b * r.powf(b - 1.0) * weights.laplacian_grad[i]) * rho[i]
        })
        .collect();
    let kin: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = nodes[i];
            (4.0 * weights.dphi[1][i] - 2.0 * b * weights.dphi[0][i] / r) * du[i].norm_sqr()
        })
        .collect();
    let v2 = -2.0 / (p + 2.0) * grid.integrate_weighted(&nl, c)? - grid.integrate(&lin)
        + grid.integrate_weighted(&kin, b)?;
    Ok((v, v1, v2))
}

/// Virial quantities on every snapshot of `series`, with centred
/// differences of `V` on non-uniform time steps.
pub fn virial_series(series: &TimeSeries, weights: &VirialWeights, params: &ModelParams) -> Result<VirialSeries> {
    let snaps = series.snapshots();
    if snaps.len() < 5 {
        return Err(Error::InsufficientSnapshots {
            got: snaps.len(),
            need: 5,
        });
    }
    let mut records = Vec::with_capacity(snaps.len());
    for (t, f) in &snaps {
        let (v, v1, v2) = virial_values(f, weights, params)?;
        records.push(VirialRecord {
            t: *t,
            v,
            v1,
            v2,
            fd_v1: None,
            fd_v2: None,
        });
    }
    for k in 1..records.len() - 1 {
        let (a, m, z) = (&records[k - 1], &records[k], &records[k + 1]);
        let h1 = m.t - a.t;
        let h2 = z.t - m.t;
        let d1 = (h1 * h1 * z.v - h2 * h2 * a.v + (h2 * h2 - h1 * h1) * m.v) / (h1 * h2 * (h1 + h2));
        let d2 = 2.0 * ((z.v - m.v) / h2 - (m.v - a.v) / h1) / (h1 + h2);
        records[k].fd_v1 = Some(d1);
        records[k].fd_v2 = Some(d2);
    }
    Ok(VirialSeries {
        radius: weights.radius,
        records,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialEstimateFrame {
    pub t: f64,
    pub v2: f64,
    /// `8(p s_c + 2 - b) E(u) - 4 p s_c ‖∇u‖²_{b,2}`, with E evaluated at the frame.
    pub main: f64,
    /// `R^{-(2-b)} ∫_{2R≤|x|≤4R} |u|² + ∫_{|x|≥R} |x|^c |u|^{p+2}`.
    pub tail: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialEstimate {
    /// Smallest `C ≥ 0` with `V'' ≤ main + C·tail` at every frame; infinite
    /// when a frame with vanishing tail exceeds the main term.
    pub c_fit: f64,
    pub frames: Vec<VirialEstimateFrame>,
}

/// Fits the constant of the localized virial estimate over the snapshots.
pub fn check_virial_estimate(
    vs: &VirialSeries,
    series: &TimeSeries,
    params: &ModelParams,
    idx: &DerivedIndices,
) -> Result<VirialEstimate> {
    let snaps = series.snapshots();
    if snaps.len() != vs.records.len() {
        return Err(Error::InvalidArgument("virial series does not match the time series".into()));
    }
    let (b, c, p) = (params.b, params.c, params.p);
    let radius = vs.radius;
    let mut c_fit = 0.0f64;
    let mut frames = Vec::with_capacity(snaps.len());
    for ((t, f), rec) in snaps.iter().zip(&vs.records) {
        // E(u₀) is taken as E(u(t)) with the same smooth gradient that enters
        // V''; the scheme conserves a flux-based energy whose mismatch with
        // the smooth one grows like ‖∇u‖² and would swamp the tail terms.
        let grad = crate::grid::grad_norm_b_smooth(f, b)?;
        let grid = f.grid();
        let potential = f.weighted_norm(c, p + 2.0)?.powf(p + 2.0);
        let energy = 0.5 * grad * grad - potential / (p + 2.0);
        let main = 8.0 * (p * idx.s_c + 2.0 - b) * energy - 4.0 * p * idx.s_c * grad * grad;
        let shell = grid.cumulative(&f.modulus_sq()).shell(2.0 * radius, 4.0 * radius);
        let pot: Vec<f64> = f
            .values()
            .iter()
            .zip(grid.nodes())
            .map(|(v, &r)| if r >= radius { v.norm().powf(p + 2.0) } else { 0.0 })
            .collect();
        let outer = grid.integrate_weighted(&pot, c)?;
        let tail = radius.powf(-(2.0 - b)) * shell.max(0.0) + outer;
        let deficit = rec.v2 - main;
        // Roundoff of the assembled terms.
        let slack = 1e-9 * (rec.v2.abs() + main.abs());
        if deficit > slack {
            c_fit = c_fit.max(if tail > 0.0 { deficit / tail } else { f64::INFINITY });
        }
        frames.push(VirialEstimateFrame {
            t: *t,
            v2: rec.v2,
            main,
            tail,
        });
    }
    Ok(VirialEstimate { c_fit, frames })
}
