//! Blow-up bound checks on a fitted run: the space-time upper bound, the
//! lower rate bound and the Morrey-norm series.

use serde::Serialize;

use crate::diagnostics::rate::RateFit;
use crate::error::{Error, Result};
use crate::evolve::TimeSeries;
use crate::model::{DerivedIndices, ModelParams};

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// `(4-p)(2-b) / (2𝐩_c - (2-b)p)`.
    pub beta: f64,
    /// `2β/(β+1)`.
    pub window_exponent: f64,
    /// `(t, ∫_t^{T*} (T*-τ)‖∇u‖² dτ / (T*-t)^{2β/(β+1)})`.
    pub spacetime_ratio_series: Vec<(f64, f64)>,
    /// Largest ratio with `T* - t` within ten times its final value.
    pub ratio_last_decade_max: f64,
    pub ratio_median: f64,
    /// `(t, ‖∇u‖_{b,2} (T*-t)^{(2-b-2s_c)/(2(2-b))})`.
    pub margin_series: Vec<(f64, f64)>,
    pub margin_initial: f64,
    /// Minimum of the margin over the last decade in `T* - t`.
    pub lower_bound_margin: f64,
    /// `(t, ‖u(t)‖_{γ,σ₀})` on the snapshots.
    pub morrey_series: Vec<(f64, f64)>,
}

impl BoundReport {
    /// Last-decade maximum over the median of the ratio series.
    pub fn ratio_spread(&self) -> f64 {
        self.ratio_last_decade_max / self.ratio_median
    }
}

pub fn beta(params: &ModelParams, idx: &DerivedIndices) -> f64 {
    let k = 2.0 - params.b;
    (4.0 - params.p) * k / (2.0 * idx.p_c - k * params.p)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

pub fn check_bounds(series: &TimeSeries, fit: &RateFit, params: &ModelParams, idx: &DerivedIndices) -> Result<BoundReport> {
    let frames = &series.frames;
    if frames.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            got: frames.len(),
            need: 2,
        });
    }
    let t_star = fit.t_star;
    let t_last = frames.last().expect("non-empty").t;
    if !(t_star > t_last) {
        return Err(Error::InvalidArgument(format!("T* = {t_star} does not exceed t_last = {t_last}")));
    }
    let beta = beta(params, idx);
    let window_exponent = 2.0 * beta / (beta + 1.0);
    let k = 2.0 - params.b;

    // ∫_{t_last}^{T*} from the fitted law, then trapezoids backwards.
    let gap_last = t_star - t_last;
    let e = 2.0 - 2.0 * fit.alpha;
    let mut integral = if e > 0.0 {
        fit.c_fit * fit.c_fit * gap_last.powf(e) / e
    } else {
        f64::INFINITY
    };
    let integrand = |i: usize| (t_star - frames[i].t) * frames[i].grad_b * frames[i].grad_b;
    let mut ratio = vec![0.0; frames.len()];
    let last = frames.len() - 1;
    ratio[last] = integral / gap_last.powf(window_exponent);
    for i in (0..last).rev() {
        integral += 0.5 * (frames[i + 1].t - frames[i].t) * (integrand(i) + integrand(i + 1));
        ratio[i] = integral / (t_star - frames[i].t).powf(window_exponent);
    }
    let spacetime_ratio_series: Vec<(f64, f64)> = frames.iter().zip(&ratio).map(|(f, r)| (f.t, *r)).collect();

    let margin_exp = (k - 2.0 * idx.s_c) / (2.0 * k);
    let margin_series: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| (f.t, f.grad_b * (t_star - f.t).powf(margin_exp)))
        .collect();
    let in_decade = |t: f64| t_star - t <= 10.0 * gap_last;
    let lower_bound_margin = margin_series
        .iter()
        .filter(|(t, _)| in_decade(*t))
        .map(|(_, m)| *m)
        .fold(f64::INFINITY, f64::min);
    let ratio_last_decade_max = spacetime_ratio_series
        .iter()
        .filter(|(t, _)| in_decade(*t))
        .map(|(_, r)| *r)
        .fold(0.0, f64::max);

    let mut morrey_series = Vec::new();
    for (t, f) in series.snapshots() {
        morrey_series.push((t, f.weighted_norm(params.gamma, idx.sigma0)?));
    }
    Ok(BoundReport {
        beta,
        window_exponent,
        ratio_median: median(ratio.clone()),
        spacetime_ratio_series,
        ratio_last_decade_max,
        margin_initial: margin_series[0].1,
        margin_series,
        lower_bound_margin,
        morrey_series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::rate::fit_blowup_rate;
    use crate::evolve::Frame;

    fn series(samples: &[(f64, f64)]) -> TimeSeries {
        TimeSeries {
            frames: samples
                .iter()
                .enumerate()
                .map(|(k, &(t, g))| Frame {
                    t,
                    dt: if k == 0 { 0.0 } else { t - samples[k - 1].0 },
                    mass: 1.0,
                    energy: 0.0,
                    grad_b: g,
                    sup_amp: 1.0,
                    snapshot: None,
                })
                .collect(),
            snapshot_stride: 0,
        }
    }

    #[test]
    fn beta_arithmetic() {
        let params = ModelParams::new(3, 0.0, 0.0, 2.0).unwrap();
        let idx = params.derive_indices().unwrap();
        let b = beta(&params, &idx);
        assert!((b - 0.5).abs() < 1e-15);
        assert!((2.0 * b / (b + 1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_rate_gives_flat_series() {
        // Mass-critical, b = 0: β = 1, so the ratio is (T*-t)/(T*-t) = 1 and
        // the margin is identically 1.
        let params = ModelParams::new(2, 0.0, 0.0, 2.0).unwrap();
        let idx = params.derive_indices().unwrap();
        let samples: Vec<(f64, f64)> = (0..200)
            .map(|k| {
                let gap = 10f64.powf(-4.0 * k as f64 / 199.0);
                (1.0 - gap, gap.powf(-0.5))
            })
            .collect();
        let s = series(&samples);
        let fit = fit_blowup_rate(&s).unwrap();
        let rep = check_bounds(&s, &fit, &params, &idx).unwrap();
        assert!((rep.beta - 1.0).abs() < 1e-15);
        for (_, r) in &rep.spacetime_ratio_series {
            assert!((r - 1.0).abs() < 1e-3, "{r}");
        }
        for (_, m) in &rep.margin_series {
            assert!((m - 1.0).abs() < 1e-3, "{m}");
        }
        assert!(rep.ratio_spread() < 1.01);
    }
}
