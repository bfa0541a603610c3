//! Cartesian parameter sweeps of the evolve scenario.

use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::scenario::{evolve_run, initial_data};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub amplitude: f64,
    pub detected: Option<bool>,
    pub reason: Option<String>,
    pub t_star: Option<f64>,
    pub alpha: Option<f64>,
    pub ratio_spread: Option<f64>,
    pub spacetime_ok: Option<bool>,
    pub lower_bound_ok: Option<bool>,
    pub error: Option<String>,
}

/// `(b, c, p-or-None, amplitude)` for every run, in axis order.
pub fn points(cfg: &ScenarioConfig) -> Vec<(f64, f64, Option<f64>, f64)> {
    let s = &cfg.sweep;
    let axis = |v: &Option<Vec<f64>>, base: f64| v.clone().unwrap_or_else(|| vec![base]);
    let bs = axis(&s.b, cfg.model.b);
    let cs = axis(&s.c, cfg.model.c);
    let ps: Vec<Option<f64>> = match &s.p {
        Some(v) => v.iter().map(|p| Some(*p)).collect(),
        None => vec![None],
    };
    let amps = axis(&s.amplitude, cfg.initial.amplitude);
    let mut out = Vec::new();
    for &b in &bs {
        for &c in &cs {
            for &p in &ps {
                for &a in &amps {
                    out.push((b, c, p, a));
                }
            }
        }
    }
    out
}

fn run_one(cfg: &ScenarioConfig, (b, c, p, amplitude): (f64, f64, Option<f64>, f64)) -> SweepRow {
    let mut run_cfg = cfg.clone();
    run_cfg.model.b = b;
    run_cfg.model.c = c;
    if let Some(p) = p {
        run_cfg.model.p = Some(p);
        run_cfg.model.s_c = None;
    }
    run_cfg.initial.amplitude = amplitude;
    let mut row = SweepRow {
        b,
        c,
        p: run_cfg.model.power().unwrap_or(f64::NAN),
        amplitude,
        detected: None,
        reason: None,
        t_star: None,
        alpha: None,
        ratio_spread: None,
        spacetime_ok: None,
        lower_bound_ok: None,
        error: None,
    };
    let result = (|| -> Result<_> {
        let params = run_cfg.params().map_err(anyhow::Error::msg)?;
        let grid = std::sync::Arc::new(dinls_core::RadialGrid::build(
            params.n,
            run_cfg.grid.r_max,
            run_cfg.grid.points,
            run_cfg.grid.grading,
        )?);
        let u0 = initial_data(&run_cfg, params, grid)?;
        evolve_run(&u0, &params, &run_cfg.evolve)
    })();
    match result {
        Ok(res) => {
            row.detected = Some(res.report.detected);
            row.reason = Some(format!("{:?}", res.report.reason));
            if let Ok(fit) = &res.fit {
                row.t_star = Some(fit.t_star);
                row.alpha = Some(fit.alpha);
            }
            row.ratio_spread = res.bounds.as_ref().map(|b| b.ratio_spread());
            row.spacetime_ok = res.spacetime_ok();
            row.lower_bound_ok = res.lower_bound_ok();
        }
        Err(e) => row.error = Some(format!("{e:#}")),
    }
    row
}

/// Runs every point; failures are recorded in their row. Rows are sorted by
/// parameters so the summary does not depend on the schedule.
pub fn sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    let pts = points(cfg);
    let work = || pts.par_iter().map(|&pt| run_one(cfg, pt)).collect::<Vec<_>>();
    let mut rows = if cfg.sweep.parallelism > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.sweep.parallelism)
            .build()?
            .install(work)
    } else {
        work()
    };
    rows.sort_by(|x, y| {
        x.b.total_cmp(&y.b)
            .then(x.c.total_cmp(&y.c))
            .then(x.p.total_cmp(&y.p))
            .then(x.amplitude.total_cmp(&y.amplitude))
    });
    Ok(rows)
}

pub fn write_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "b",
        "c",
        "p",
        "amplitude",
        "detected",
        "reason",
        "t_star",
        "alpha",
        "ratio_spread",
        "spacetime_ok",
        "lower_bound_ok",
        "error",
    ])?;
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map_or(String::new(), |x| x.to_string())
    }
    for r in rows {
        w.write_record([
            r.b.to_string(),
            r.c.to_string(),
            r.p.to_string(),
            r.amplitude.to_string(),
            opt(&r.detected),
            opt(&r.reason),
            opt(&r.t_star),
            opt(&r.alpha),
            opt(&r.ratio_spread),
            opt(&r.spacetime_ok),
            opt(&r.lower_bound_ok),
            opt(&r.error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_str;

    #[test]
    fn points_follow_axes() {
        let cfg = parse_str(
            "[model]\nn = 3\nb = 0.0\nc = 0.0\np = 2.0\n[sweep]\nb = [0.0, -0.5]\namplitude = [0.9, 1.1]\n",
        )
        .unwrap();
        let pts = points(&cfg);
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.1 == 0.0 && p.2.is_none()));
    }

    #[test]
    fn empty_axis_gives_empty_sweep() {
        let cfg = parse_str("[model]\nn = 3\nb = 0.0\nc = 0.0\np = 2.0\n[sweep]\nb = []\n").unwrap();
        assert!(points(&cfg).is_empty());
        assert!(sweep(&cfg).unwrap().is_empty());
    }
}
