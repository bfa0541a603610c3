//! Fits `‖∇u(t)‖_{b,2} ≈ C (T* - t)^{-α}` to the final growth decade of a run.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::TimeSeries;

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub t_star: f64,
    pub alpha: f64,
    pub c_fit: f64,
    /// Time interval of the frames used.
    pub window: (f64, f64),
    pub r_squared: f64,
    pub frames_used: usize,
    /// Number of times the `T*` bracket had to be widened past
    /// `t_last + 10 dt_last`.
    pub bracket_expansions: usize,
}

const MIN_FRAMES: usize = 10;
const MAX_EXPANSIONS: usize = 12;

struct LogFit {
    alpha: f64,
    log_c: f64,
    sse: f64,
    sst: f64,
}

fn fit_for(t_star: f64, t: &[f64], y: &[f64]) -> LogFit {
    let x: Vec<f64> = t.iter().map(|&t| (t_star - t).ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst = y.iter().map(|y| (y - my).powi(2)).sum();
    LogFit {
        alpha: -slope,
        log_c: intercept,
        sse,
        sst,
    }
}

/// Golden-section minimum of `f` over `[lo, hi]`, after a coarse scan so
/// that a multimodal residual does not trap the search.
fn minimize(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let scan = 64;
    let (mut best, mut best_v) = (lo, f64::INFINITY);
    for k in 0..=scan {
        let x = lo + (hi - lo) * k as f64 / scan as f64;
        let v = f(x);
        if v < best_v {
            best = x;
            best_v = v;
        }
    }
    let h = (hi - lo) / scan as f64;
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Nested least squares: for fixed `T*`, `α` and `ln C` solve a linear fit
/// of `ln ‖∇u‖` against `ln(T* - t)`; `T*` minimises the residual over
/// `(t_last, t_last + 10 dt_last]`, widened tenfold while the optimum sits on
/// the upper edge.
pub fn fit_blowup_rate(series: &TimeSeries) -> Result<RateFit> {
    let frames = &series.frames;
    if frames.len() < MIN_FRAMES {
        return Err(Error::NoBlowup(format!("{} frames, at least {MIN_FRAMES} required", frames.len())));
    }
    let last = frames.last().expect("non-empty");
    let g_last = last.grad_b;
    let g_min = frames.iter().map(|f| f.grad_b).fold(f64::INFINITY, f64::min);
    if !(g_last >= 10.0 * g_min) {
        return Err(Error::NoBlowup(format!(
            "gradient grows by {:.3} < 10 over the series",
            g_last / g_min
        )));
    }
    // The final decade: frames after the last time the gradient was below
    // a tenth of its final value.
    let start = frames
        .iter()
        .rposition(|f| f.grad_b < g_last / 10.0)
        .map_or(0, |k| k + 1);
    let window = &frames[start..];
    if window.len() < MIN_FRAMES {
        return Err(Error::NoBlowup(format!(
            "only {} frames in the final growth decade, at least {MIN_FRAMES} required",
            window.len()
        )));
    }
    let t: Vec<f64> = window.iter().map(|f| f.t).collect();
    let y: Vec<f64> = window.iter().map(|f| f.grad_b.ln()).collect();
    let t_last = last.t;
    let dt_last = if last.dt > 0.0 {
        last.dt
    } else {
        t_last - frames[frames.len() - 2].t
    };
    // Search in log(T* - t_last).
    let lo = (dt_last * 1e-6).ln();
    let mut hi = (10.0 * dt_last).ln();
    let mut expansions = 0;
    let objective = |s: f64| fit_for(t_last + s.exp(), &t, &y).sse;
    let mut s = minimize(lo, hi, objective);
    while hi - s < 1e-6 * (hi - lo) && expansions < MAX_EXPANSIONS {
        hi += 10f64.ln();
        expansions += 1;
        s = minimize(lo, hi, objective);
    }
    let t_star = t_last + s.exp();
    let fit = fit_for(t_star, &t, &y);
    Ok(RateFit {
        t_star,
        alpha: fit.alpha,
        c_fit: fit.log_c.exp(),
        window: (t[0], t_last),
        r_squared: if fit.sst > 0.0 { 1.0 - fit.sse / fit.sst } else { 1.0 },
        frames_used: t.len(),
        bracket_expansions: expansions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::Frame;

    fn synthetic(samples: &[(f64, f64)]) -> TimeSeries {
        let mut frames: Vec<Frame> = Vec::new();
        for (k, &(t, g)) in samples.iter().enumerate() {
            let dt = if k == 0 { 0.0 } else { t - samples[k - 1].0 };
            frames.push(Frame {
                t,
                dt,
                mass: 1.0,
                energy: 0.0,
                grad_b: g,
                sup_amp: 1.0,
                snapshot: None,
            });
        }
        TimeSeries {
            frames,
            snapshot_stride: 0,
        }
    }

    #[test]
    fn pure_power_law() {
        // Gaps geometric from 1 down to 1e-3, as an adaptive run records them.
        let samples: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let gap = 10f64.powf(-3.0 * k as f64 / 99.0);
                (1.0 - gap, gap.powf(-0.6))
            })
            .collect();
        let fit = fit_blowup_rate(&synthetic(&samples)).unwrap();
        assert!((fit.t_star - 1.0).abs() < 1e-4, "{}", fit.t_star);
        assert!((fit.alpha - 0.6).abs() < 1e-3, "{}", fit.alpha);
        assert!((fit.c_fit - 1.0).abs() < 1e-3);
        assert!(fit.frames_used >= 10);
    }

    #[test]
    fn constant_series_has_no_blowup() {
        let samples: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 0.01, 3.0)).collect();
        assert!(matches!(fit_blowup_rate(&synthetic(&samples)), Err(Error::NoBlowup(_))));
    }

    #[test]
    fn log_corrected_rate_is_biased_upward() {
        // (1-t)^{-1/2} (ln 1/(1-t))^{1/2}, gaps from 1e-1 down to 1e-6.
        let samples: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let gap = 10f64.powf(-1.0 - 5.0 * k as f64 / 99.0);
                (1.0 - gap, gap.powf(-0.5) * (1.0 / gap).ln().sqrt())
            })
            .collect();
        let fit = fit_blowup_rate(&synthetic(&samples)).unwrap();
        assert!(fit.alpha >= 0.5 && fit.alpha <= 0.56, "{}", fit.alpha);
    }
}
