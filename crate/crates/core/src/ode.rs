//! Adaptive Dormand–Prince 5(4) integrator for small first-order systems.

#[derive(Debug, Clone, Copy)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for DormandPrince {
    fn default() -> Self {
        DormandPrince {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { t: f64 },
    TooManySteps { t: f64 },
    NonFinite { t: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl DormandPrince {
    /// Advances `y` from `t0` to `t1`. `h` carries the step size between
    /// calls and is updated to the last successful proposal.
    pub fn integrate<const D: usize>(
        &self,
        f: impl Fn(f64, &[f64; D]) -> [f64; D],
        t0: f64,
        y0: [f64; D],
        t1: f64,
        h: &mut f64,
    ) -> Result<[f64; D], OdeFailure> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(y0);
        }
        let mut t = t0;
        let mut y = y0;
        let mut step = if *h > 0.0 { h.min(span) } else { span };
        let mut k1 = f(t, &y);
        let mut last_proposal = step;
        for _ in 0..self.max_steps {
            let remaining = t1 - t;
            if remaining <= 1e-15 * t1.abs().max(1.0) {
                *h = last_proposal;
                return Ok(y);
            }
            let hs = step.min(remaining);
            let stage = |coef: &[(f64, &[f64; D])]| {
                let mut out = y;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += hs * coef.iter().map(|(c, k)| c * k[i]).sum::<f64>();
                }
                out
            };
            let k2 = f(t + C2 * hs, &stage(&[(A21, &k1)]));
            let k3 = f(t + C3 * hs, &stage(&[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * hs, &stage(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * hs,
                &stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + hs,
                &stage(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = stage(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + hs, &y_new);
            let mut err = 0.0f64;
            for i in 0..D {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / scale).abs());
            }
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if hs < 1e-14 * t.abs().max(1e-300) {
                    return Err(OdeFailure::NonFinite { t });
                }
                step = 0.25 * hs;
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t += hs;
                y = y_new;
                k1 = k7;
                // A step truncated to land on t1 should not shrink the carried size.
                last_proposal = if hs < step { step } else { hs * factor };
                step = hs * factor;
            } else {
                step = hs * factor.min(1.0);
                if step < 1e-15 * t.abs().max(1e-300) {
                    return Err(OdeFailure::StepUnderflow { t });
                }
            }
        }
        Err(OdeFailure::TooManySteps { t })
    }
}
