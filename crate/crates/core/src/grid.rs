//! Radial grids, weighted norms and the divergence-form operator
//! `𝒜_b f = r^{1-n} (r^{n-1+b} f')'`.
//!
//! Integrals over ℝⁿ of radial functions are sums `Σ W_i(a) g_i` where
//! `W_i(a)` approximates `∫ |x|^a dx` over the control volume of node `i`.
//! On the log-graded grid this is the trapezoid rule in `s = ln r`, with the
//! part of the ball inside the first node folded into `W_0`; that makes node 0
//! a ball-shaped control volume and keeps the flux discretisation consistent
//! there. Partial (ball/shell) integrals use a local cubic interpolant and
//! integrate the measure exactly, so they are exact on constants.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Innermost node of a log-graded grid, relative to `r_max`.
pub const LOG_GRID_INNER_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Grading {
    Uniform,
    #[default]
    LogGraded,
}

/// Surface measure of the unit sphere `S^{n-1}`; 2 for `n = 1`.
pub fn sphere_area(n: usize) -> f64 {
    // Γ(n/2) by recursion from Γ(1/2) and Γ(1).
    let mut gamma = if n % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if n % 2 == 0 { 1.0 } else { 0.5 };
    let half = n as f64 / 2.0;
    while x < half - 1e-12 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(half) / gamma
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    n: usize,
    r_max: f64,
    grading: Grading,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Face radii `r_{i+1/2}`, `i = 0..N-2`.
    faces: Vec<f64>,
    /// `Δs` for log grids, `h` for uniform ones.
    step: f64,
    sphere: f64,
}

impl RadialGrid {
    pub fn build(n: usize, r_max: f64, len: usize, grading: Grading) -> Result<Self> {
        if len < 16 {
            return Err(Error::GridTooSmall(len));
        }
        if n < 1 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("r_max = {r_max} must be positive")));
        }
        let (nodes, faces, step) = match grading {
            Grading::LogGraded => {
                let r_min = r_max * LOG_GRID_INNER_RATIO;
                let ds = (r_max / r_min).ln() / (len - 1) as f64;
                let nodes: Vec<f64> = (0..len)
                    .map(|i| {
                        if i == len - 1 {
                            r_max
                        } else {
                            r_min * (i as f64 * ds).exp()
                        }
                    })
                    .collect();
                let faces = (0..len - 1).map(|i| (nodes[i] * nodes[i + 1]).sqrt()).collect();
                (nodes, faces, ds)
            }
            Grading::Uniform => {
                let h = r_max / len as f64;
                let nodes = (0..len).map(|i| (i as f64 + 0.5) * h).collect();
                let faces = (0..len - 1).map(|i| (i as f64 + 1.0) * h).collect();
                (nodes, faces, h)
            }
        };
        let mut grid = RadialGrid {
            n,
            r_max,
            grading,
            nodes,
            weights: Vec::new(),
            faces,
            step,
            sphere: sphere_area(n),
        };
        grid.weights = grid.power_weights(0.0)?;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn sphere(&self) -> f64 {
        self.sphere
    }

    /// Grid with every radius multiplied by `factor`. Discrete operators are
    /// exactly covariant under this map.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut g = RadialGrid::build(self.n, self.r_max * factor, self.len(), self.grading)?;
        // Keep the exact images of the nodes rather than recomputed ones.
        g.nodes = self.nodes.iter().map(|r| r * factor).collect();
        g.faces = self.faces.iter().map(|r| r * factor).collect();
        g.weights = g.power_weights(0.0)?;
        Ok(g)
    }

    /// Quadrature weights for `∫ |x|^a g dx`.
    pub fn power_weights(&self, a: f64) -> Result<Vec<f64>> {
        let n = self.n as f64;
        let e = n + a;
        if e <= 0.0 {
            return Err(Error::NonIntegrableWeight { a, n: self.n });
        }
        let len = self.len();
        let omega = self.sphere;
        let w = match self.grading {
            Grading::LogGraded => {
                let ds = self.step;
                (0..len)
                    .map(|i| {
                        let r = self.nodes[i];
                        let base = omega * r.powf(e) * ds;
                        if i == 0 {
                            // Trapezoid sum continued geometrically towards the origin.
                            base / (-(-e * ds).exp_m1())
                        } else if i == len - 1 {
                            0.5 * base
                        } else {
                            base
                        }
                    })
                    .collect()
            }
            Grading::Uniform => {
                let h = self.step;
                (0..len)
                    .map(|i| {
                        let lo = i as f64 * h;
                        let hi = lo + h;
                        omega * (hi.powf(e) - lo.powf(e)) / e
                    })
                    .collect()
            }
        };
        Ok(w)
    }

    /// `Σ W_i(a) g_i`.
    pub fn integrate_weighted(&self, g: &[f64], a: f64) -> Result<f64> {
        debug_assert_eq!(g.len(), self.len());
        if a == 0.0 {
            return Ok(self.integrate(g));
        }
        let w = self.power_weights(a)?;
        Ok(w.iter().zip(g).map(|(w, g)| w * g).sum())
    }

    pub fn integrate(&self, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.len());
        self.weights.iter().zip(g).map(|(w, g)| w * g).sum()
    }

    /// Flux coefficients `κ_{i+1/2} = ω r_{i+1/2}^{n-1+b} / (r_{i+1} - r_i)`.
    pub fn flux_coefficients(&self, b: f64) -> Vec<f64> {
        let e = self.n as f64 - 1.0 + b;
        self.faces
            .iter()
            .enumerate()
            .map(|(i, &rf)| self.sphere * rf.powf(e) / (self.nodes[i + 1] - self.nodes[i]))
            .collect()
    }

    /// Stable identifier of the node layout, for cross-run comparisons.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update(match self.grading {
            Grading::Uniform => [0u8],
            Grading::LogGraded => [1u8],
        });
        h.update(self.r_max.to_le_bytes());
        for r in &self.nodes {
            h.update(r.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn coord(&self, r: f64) -> f64 {
        match self.grading {
            Grading::LogGraded => r.ln(),
            Grading::Uniform => r,
        }
    }

    /// Index `k` of the node interval `[r_k, r_{k+1}]` containing `r`, for
    /// `r_0 <= r <= r_{N-1}`.
    fn cell_of(&self, r: f64) -> usize {
        let len = self.len();
        let k = match self.grading {
            Grading::LogGraded => ((r / self.nodes[0]).ln() / self.step).floor(),
            Grading::Uniform => (r / self.step - 0.5).floor(),
        };
        let mut k = if k.is_finite() && k > 0.0 { k as usize } else { 0 };
        k = k.min(len - 2);
        // Guard against rounding at cell edges.
        while k > 0 && r < self.nodes[k] {
            k -= 1;
        }
        while k < len - 2 && r >= self.nodes[k + 1] {
            k += 1;
        }
        k
    }

    /// Four-point stencil (coordinates, node indices) for cell `k`. The
    /// uniform grid reflects evenly through the origin.
    fn stencil(&self, k: usize) -> ([f64; 4], [usize; 4]) {
        let len = self.len();
        if self.grading == Grading::Uniform && k == 0 {
            let r = &self.nodes;
            return ([-r[0], r[0], r[1], r[2]], [0, 0, 1, 2]);
        }
        let start = k.saturating_sub(1).min(len - 4);
        let idx = [start, start + 1, start + 2, start + 3];
        let xs = idx.map(|i| self.coord(self.nodes[i]));
        (xs, idx)
    }

    /// Interpolation weights at radius `r`: the nodes used and their
    /// coefficients. Clamps to the innermost value below `r_0`, decays
    /// linearly to zero between the last node and `r_max` (uniform grid) and
    /// is zero beyond `r_max`.
    pub fn interpolation_weights(&self, r: f64) -> Option<([usize; 4], [f64; 4])> {
        let len = self.len();
        let last = self.nodes[len - 1];
        if !(r.is_finite()) || r > self.r_max * (1.0 + 1e-14) {
            return None;
        }
        if r >= last {
            let frac = if self.r_max > last {
                ((self.r_max - r) / (self.r_max - last)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            return Some(([len - 1, len - 1, len - 1, len - 1], [frac, 0.0, 0.0, 0.0]));
        }
        if r <= self.nodes[0] {
            if self.grading == Grading::Uniform {
                let r0 = &self.nodes;
                let xs = [-r0[1], -r0[0], r0[0], r0[1]];
                return Some(([1, 0, 0, 1], lagrange(&xs, r.max(0.0))));
            }
            return Some(([0, 0, 0, 0], [1.0, 0.0, 0.0, 0.0]));
        }
        let k = self.cell_of(r);
        let (xs, idx) = self.stencil(k);
        Some((idx, lagrange(&xs, self.coord(r))))
    }

    pub fn interpolate_real(&self, values: &[f64], r: f64) -> f64 {
        match self.interpolation_weights(r) {
            None => 0.0,
            Some((idx, w)) => (0..4).map(|j| w[j] * values[idx[j]]).sum(),
        }
    }

    pub fn interpolate_complex(&self, values: &[Complex64], r: f64) -> Complex64 {
        match self.interpolation_weights(r) {
            None => Complex64::new(0.0, 0.0),
            Some((idx, w)) => (0..4).map(|j| values[idx[j]] * w[j]).sum(),
        }
    }

    /// Exact measure density `dμ/dx` in the interpolation coordinate.
    fn density(&self, x: f64) -> f64 {
        match self.grading {
            Grading::LogGraded => self.sphere * (self.n as f64 * x).exp(),
            Grading::Uniform => self.sphere * x.powi(self.n as i32 - 1),
        }
    }

    /// `∫` of the cell-`k` interpolant of `g` times the measure over the
    /// coordinate interval `[x_lo, x_hi]` of that cell.
    fn cell_integral(&self, g: &[f64], k: usize, x_lo: f64, x_hi: f64) -> f64 {
        let (xs, idx) = self.stencil(k);
        let vals = idx.map(|i| g[i]);
        gauss(x_lo, x_hi, |x| {
            let w = lagrange(&xs, x);
            (0..4).map(|j| w[j] * vals[j]).sum::<f64>() * self.density(x)
        })
    }

    /// `∫_{|x| <= r0}` of the innermost piece.
    fn inner_integral(&self, g: &[f64], upto: f64) -> f64 {
        let n = self.n as f64;
        match self.grading {
            Grading::LogGraded => g[0] * self.sphere * upto.powf(n) / n,
            Grading::Uniform => {
                let r = &self.nodes;
                let xs = [-r[1], -r[0], r[0], r[1]];
                let vals = [g[1], g[0], g[0], g[1]];
                gauss(0.0, upto, |x| {
                    let w = lagrange(&xs, x);
                    (0..4).map(|j| w[j] * vals[j]).sum::<f64>() * self.density(x)
                })
            }
        }
    }

    /// Node derivative `dg/dr` from five-point Lagrange stencils in the
    /// interpolation coordinate. The uniform grid uses even ghost values
    /// across the origin.
    pub fn derivative(&self, g: &[f64]) -> Vec<f64> {
        let len = self.len();
        assert_eq!(g.len(), len);
        let r = &self.nodes;
        let mut out = vec![0.0; len];
        for i in 0..len {
            let (xs, vs): ([f64; 5], [f64; 5]) = if self.grading == Grading::Uniform && i < 2 {
                let ghost = |k: isize| -> (f64, f64) {
                    if k < 0 {
                        let m = (-k - 1) as usize;
                        (-r[m], g[m])
                    } else {
                        (r[k as usize], g[k as usize])
                    }
                };
                let base = i as isize - 2;
                let pts = [0, 1, 2, 3, 4].map(|j| ghost(base + j));
                (pts.map(|p| p.0), pts.map(|p| p.1))
            } else {
                let start = i.saturating_sub(2).min(len - 5);
                let idx = [start, start + 1, start + 2, start + 3, start + 4];
                (idx.map(|k| self.coord(r[k])), idx.map(|k| g[k]))
            };
            let w = lagrange_derivative(&xs, self.coord(r[i]));
            let d: f64 = (0..5).map(|j| w[j] * vs[j]).sum();
            out[i] = match self.grading {
                Grading::LogGraded => d / r[i],
                Grading::Uniform => d,
            };
        }
        out
    }

    /// Prefix integrals for repeated ball/shell queries of one integrand.
    pub fn cumulative(&self, g: &[f64]) -> CumulativeIntegral<'_> {
        assert_eq!(g.len(), self.len());
        let len = self.len();
        let mut prefix = Vec::with_capacity(len);
        let mut acc = self.inner_integral(g, self.nodes[0]);
        prefix.push(acc);
        for k in 0..len - 1 {
            let lo = self.coord(self.nodes[k]);
            let hi = self.coord(self.nodes[k + 1]);
            acc += self.cell_integral(g, k, lo, hi);
            prefix.push(acc);
        }
        CumulativeIntegral {
            grid: self,
            g: g.to_vec(),
            prefix,
        }
    }
}

/// `∫_{|x| <= R} g dx` for arbitrary `R`, from a fixed integrand.
pub struct CumulativeIntegral<'a> {
    grid: &'a RadialGrid,
    g: Vec<f64>,
    prefix: Vec<f64>,
}

impl CumulativeIntegral<'_> {
    pub fn ball(&self, radius: f64) -> f64 {
        let grid = self.grid;
        let len = grid.len();
        if radius <= 0.0 {
            return 0.0;
        }
        let r0 = grid.nodes[0];
        if radius <= r0 {
            return grid.inner_integral(&self.g, radius);
        }
        let last = grid.nodes[len - 1];
        if radius >= last {
            let mut total = self.prefix[len - 1];
            if grid.r_max > last {
                // Linear decay to zero at r_max (uniform grid only).
                let hi = radius.min(grid.r_max);
                let g_last = self.g[len - 1];
                let span = grid.r_max - last;
                total += gauss(last, hi, |r| {
                    g_last * (grid.r_max - r) / span * grid.density(r)
                });
            }
            return total;
        }
        let k = grid.cell_of(radius);
        let lo = grid.coord(grid.nodes[k]);
        self.prefix[k] + grid.cell_integral(&self.g, k, lo, grid.coord(radius))
    }

    pub fn shell(&self, inner: f64, outer: f64) -> f64 {
        self.ball(outer) - self.ball(inner)
    }

    pub fn total(&self) -> f64 {
        self.ball(f64::INFINITY)
    }
}

fn lagrange(xs: &[f64; 4], x: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for j in 0..4 {
        for m in 0..4 {
            if m != j {
                w[j] *= (x - xs[m]) / (xs[j] - xs[m]);
            }
        }
    }
    w
}

fn lagrange_derivative(xs: &[f64; 5], x: f64) -> [f64; 5] {
    let mut w = [0.0; 5];
    for j in 0..5 {
        let mut denom = 1.0;
        for m in 0..5 {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut sum = 0.0;
        for k in 0..5 {
            if k == j {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..5 {
                if m != j && m != k {
                    prod *= x - xs[m];
                }
            }
            sum += prod;
        }
        w[j] = sum / denom;
    }
    w
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

pub(crate) fn gauss(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_X
        .iter()
        .zip(GL5_W.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Complex samples of a radial function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {i}")));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        RadialField { grid, values }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn from_real_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    pub fn from_real(grid: Arc<RadialGrid>, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<RadialGrid> {
        Arc::clone(&self.grid)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        RadialField {
            grid: self.grid_arc(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        RadialField {
            grid: self.grid_arc(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn modulus_sq(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.modulus_sq())
    }

    pub fn mass_outside(&self, radius: f64) -> f64 {
        let cum = self.grid.cumulative(&self.modulus_sq());
        (cum.total() - cum.ball(radius)).max(0.0)
    }

    pub fn interpolate(&self, r: f64) -> Complex64 {
        self.grid.interpolate_complex(&self.values, r)
    }

    /// `‖f‖_{a,q} = (∫ |x|^a |f|^q dx)^{1/q}`.
    pub fn weighted_norm(&self, a: f64, q: f64) -> Result<f64> {
        weighted_norm(self, a, q)
    }

    pub fn grad_norm_b(&self, b: f64) -> f64 {
        grad_norm_b(self, b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Radial derivative at the nodes from five-point stencils in the
    /// interpolation coordinate (fourth order on smooth fields).
    pub fn radial_derivative(&self) -> Vec<Complex64> {
        let re = self.grid.derivative(&self.real_parts());
        let im: Vec<f64> = self.values.iter().map(|v| v.im).collect();
        let im = self.grid.derivative(&im);
        re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
    }
}

pub fn weighted_norm(f: &RadialField, a: f64, q: f64) -> Result<f64> {
    if q <= 0.0 {
        return Err(Error::InvalidArgument(format!("exponent q = {q} must be positive")));
    }
    let g: Vec<f64> = f.values.iter().map(|v| v.norm().powf(q)).collect();
    let integral = f.grid.integrate_weighted(&g, a)?;
    Ok(integral.max(0.0).powf(1.0 / q))
}

/// `(Σ κ_{i+1/2} |f_{i+1} - f_i|²)^{1/2}`, the discrete `‖∇f‖_{b,2}` that
/// pairs with [`DivergenceOperator`] by summation by parts.
pub fn grad_norm_b(f: &RadialField, b: f64) -> f64 {
    let kappa = f.grid.flux_coefficients(b);
    grad_energy(&kappa, &f.values).sqrt()
}

/// `‖∇f‖_{b,2}` from node derivatives and the weighted quadrature; more
/// accurate than [`grad_norm_b`] for smooth profiles, but not paired with the
/// discrete operator.
pub fn grad_norm_b_smooth(f: &RadialField, b: f64) -> Result<f64> {
    let d: Vec<f64> = f.radial_derivative().iter().map(|v| v.norm_sqr()).collect();
    Ok(f.grid.integrate_weighted(&d, b)?.max(0.0).sqrt())
}

pub(crate) fn grad_energy(kappa: &[f64], u: &[Complex64]) -> f64 {
    kappa
        .iter()
        .enumerate()
        .map(|(i, k)| k * (u[i + 1] - u[i]).norm_sqr())
        .sum()
}

/// Conservative discretisation of `𝒜_b` with zero flux at the origin and a
/// homogeneous Dirichlet value pinned at the last node.
#[derive(Debug, Clone)]
pub struct DivergenceOperator {
    kappa: Vec<f64>,
    weights: Vec<f64>,
}

impl DivergenceOperator {
    pub fn new(grid: &RadialGrid, b: f64) -> Self {
        DivergenceOperator {
            kappa: grid.flux_coefficients(b),
            weights: grid.weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row `i` as (lower, diag, upper) for the interior unknowns `0..N-1`.
    pub fn row(&self, i: usize) -> (f64, f64, f64) {
        let left = if i == 0 { 0.0 } else { self.kappa[i - 1] };
        let right = self.kappa[i];
        let w = self.weights[i];
        (left / w, -(left + right) / w, right / w)
    }

    pub fn apply<T>(&self, u: &[T]) -> Vec<T>
    where
        T: Copy
            + Default
            + std::ops::Sub<Output = T>
            + std::ops::Mul<f64, Output = T>
            + std::ops::Add<Output = T>,
    {
        let len = self.len();
        let mut out = vec![T::default(); len];
        for i in 0..len - 1 {
            let flux_out = (u[i + 1] - u[i]) * self.kappa[i];
            let flux_in = if i == 0 {
                T::default()
            } else {
                (u[i] - u[i - 1]) * self.kappa[i - 1]
            };
            out[i] = (flux_out - flux_in) * (1.0 / self.weights[i]);
        }
        out
    }

    pub fn grad_energy(&self, u: &[Complex64]) -> f64 {
        grad_energy(&self.kappa, u)
    }
}

#[allow(non_snake_case)]
pub fn apply_Ab(f: &RadialField, b: f64) -> RadialField {
    let op = DivergenceOperator::new(f.grid(), b);
    RadialField {
        grid: f.grid_arc(),
        values: op.apply(f.values()),
    }
}

/// `⟨f, g⟩ = Σ w_i f_i conj(g_i)`.
pub fn inner(f: &RadialField, g: &RadialField) -> Complex64 {
    f.grid
        .weights()
        .iter()
        .zip(f.values.iter().zip(g.values.iter()))
        .map(|(w, (a, b))| a * b.conj() * *w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_grid(n: usize, r_max: f64, len: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::build(n, r_max, len, Grading::LogGraded).unwrap())
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-15);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(matches!(
            RadialGrid::build(3, 1.0, 15, Grading::LogGraded),
            Err(Error::GridTooSmall(15))
        ));
    }

    #[test]
    fn nodes_are_positive_and_increasing() {
        for grading in [Grading::Uniform, Grading::LogGraded] {
            let g = RadialGrid::build(2, 5.0, 64, grading).unwrap();
            assert!(g.nodes()[0] > 0.0);
            assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
            assert!(g.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn gaussian_integral_3d() {
        let g = log_grid(3, 10.0, 2048);
        let vals: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let got = g.integrate(&vals);
        let want = PI.powf(1.5);
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn ball_volumes_exact() {
        for (n, grading, len, r_max) in [
            (3usize, Grading::LogGraded, 2048usize, 10.0),
            (2, Grading::LogGraded, 512, 7.0),
            (1, Grading::Uniform, 4096, 20.0),
            (3, Grading::Uniform, 300, 4.0),
        ] {
            let g = RadialGrid::build(n, r_max, len, grading).unwrap();
            let ones = vec![1.0; g.len()];
            let cum = g.cumulative(&ones);
            for radius in [r_max / 4.0, r_max / 2.0] {
                let want = sphere_area(n) * radius.powi(n as i32) / n as f64;
                let got = cum.ball(radius);
                assert!(((got - want) / want).abs() < 1e-10, "n={n} {grading:?}: {got} vs {want}");
            }
        }
        let g = RadialGrid::build(1, 20.0, 4096, Grading::Uniform).unwrap();
        let cum = g.cumulative(&vec![1.0; g.len()]);
        assert!((cum.ball(5.0) - 10.0).abs() < 1e-10);
    }

    #[test]
    fn zero_field_norms_vanish() {
        let g = log_grid(3, 10.0, 128);
        let f = RadialField::zeros(g);
        assert_eq!(f.weighted_norm(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(f.weighted_norm(-1.0, 3.0).unwrap(), 0.0);
        assert_eq!(f.grad_norm_b(-0.5), 0.0);
        assert_eq!(f.mass(), 0.0);
    }

    #[test]
    fn gaussian_l2_norm() {
        let g = log_grid(3, 10.0, 2048);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        let want = (PI / 2.0).powf(0.75);
        let got = f.weighted_norm(0.0, 2.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-9);
    }

    #[test]
    fn singular_weight_norm() {
        // ∫ℝ³ |x|^{-1} e^{-2|x|²} dx = 4π ∫ r e^{-2r²} dr = π.
        let g = log_grid(3, 10.0, 2048);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        let got = f.weighted_norm(-1.0, 2.0).unwrap();
        assert!((got - PI.sqrt()).abs() < 1e-9 * PI.sqrt());
    }

    #[test]
    fn non_integrable_weight_rejected() {
        let g = log_grid(3, 10.0, 64);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        assert!(matches!(
            f.weighted_norm(-3.0, 2.0),
            Err(Error::NonIntegrableWeight { .. })
        ));
    }

    #[test]
    fn constant_has_zero_gradient_and_flux() {
        let g = log_grid(3, 10.0, 256);
        let f = RadialField::from_real_fn(g, |_| 2.5).unwrap();
        assert_eq!(f.grad_norm_b(0.3), 0.0);
        let af = apply_Ab(&f, 0.3);
        assert!(af.values()[..f.grid().len() - 2].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn gaussian_gradient_norm() {
        let g = log_grid(3, 10.0, 2048);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        let want = (3.0 * PI.powf(1.5) / 2f64.powf(1.5)).sqrt();
        let got = f.grad_norm_b(0.0);
        assert!(((got - want) / want).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn gradient_norm_second_order() {
        let want = (3.0 * PI.powf(1.5) / 2f64.powf(1.5)).sqrt();
        let err = |len| {
            let f = RadialField::from_real_fn(log_grid(3, 10.0, len), |r| (-r * r).exp()).unwrap();
            (f.grad_norm_b(0.0) - want).abs()
        };
        let ratio = err(512) / err(1024);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn laplacian_of_gaussian() {
        let g = log_grid(3, 10.0, 2048);
        let f = RadialField::from_real_fn(g.clone(), |r| (-r * r).exp()).unwrap();
        let lap = apply_Ab(&f, 0.0);
        for (i, &r) in g.nodes().iter().enumerate() {
            // Differences of nearly equal values lose all digits very close to the origin.
            if r < 1e-2 {
                continue;
            }
            if r > 6.0 {
                break;
            }
            let want = (4.0 * r * r - 6.0) * (-r * r).exp();
            let got = lap.values()[i].re;
            assert!((got - want).abs() < 5e-4, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn summation_by_parts() {
        let g = log_grid(3, 12.0, 1024);
        let b = -0.5;
        let f = RadialField::from_real_fn(g, |r| (1.0 + r) * (-r * r).exp() * (12.0 - r)).unwrap();
        let af = apply_Ab(&f, b);
        let lhs = -inner(&af, &f).re;
        let rhs = f.grad_norm_b(b).powi(2);
        assert!(((lhs - rhs) / rhs).abs() < 1e-12);
    }

    #[test]
    fn interpolation_recovers_smooth_function() {
        let g = log_grid(2, 8.0, 1024);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        for r in [1e-7, 0.013, 0.5, 1.234, 3.3, 7.99] {
            let got = f.interpolate(r).re;
            assert!((got - (-r * r).exp()).abs() < 1e-6, "r={r}");
        }
        assert_eq!(f.interpolate(9.0).re, 0.0);
    }

    #[test]
    fn derivative_fourth_order() {
        for grading in [Grading::LogGraded, Grading::Uniform] {
            let g = Arc::new(RadialGrid::build(3, 8.0, 2000, grading).unwrap());
            let vals: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            let d = g.derivative(&vals);
            for (i, &r) in g.nodes().iter().enumerate() {
                let want = -2.0 * r * (-r * r).exp();
                assert!((d[i] - want).abs() < 1e-7, "{grading:?} r={r}: {} vs {want}", d[i]);
            }
        }
    }

    #[test]
    fn smooth_gradient_norm() {
        let g = log_grid(3, 10.0, 2048);
        let f = RadialField::from_real_fn(g, |r| (-r * r).exp()).unwrap();
        let want = (3.0 * PI.powf(1.5) / 2f64.powf(1.5)).sqrt();
        let got = grad_norm_b_smooth(&f, 0.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
    }

    proptest::proptest! {
        #[test]
        fn operator_is_self_adjoint(seed in 0u64..1000, b in -0.9f64..1.5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = log_grid(3, 10.0, 200);
            let len = g.len();
            let mut rand_field = || {
                let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
                v[len - 1] = 0.0;
                RadialField::from_real(g.clone(), &v).unwrap()
            };
            let f = rand_field();
            let h = rand_field();
            let a = inner(&apply_Ab(&f, b), &h).re;
            let c = inner(&f, &apply_Ab(&h, b)).re;
            proptest::prop_assert!((a - c).abs() <= 1e-10 * (a.abs() + c.abs() + 1.0));
        }
    }
}
