//! Thomas algorithm for the tridiagonal systems of the radial operator.

use std::ops::{Div, Mul, Sub};

/// LU factors of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu<T> {
    lower: Vec<T>,
    denom: Vec<T>,
    upper_scaled: Vec<T>,
}

impl<T> TridiagonalLu<T>
where
    T: Copy + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    /// `lower[0]` and `upper[len-1]` are ignored.
    pub fn factor(lower: &[T], diag: &[T], upper: &[T]) -> Self {
        let m = diag.len();
        assert!(lower.len() == m && upper.len() == m && m > 0);
        let mut denom = Vec::with_capacity(m);
        let mut upper_scaled = Vec::with_capacity(m);
        denom.push(diag[0]);
        upper_scaled.push(upper[0] / diag[0]);
        for i in 1..m {
            let d = diag[i] - lower[i] * upper_scaled[i - 1];
            denom.push(d);
            upper_scaled.push(upper[i] / d);
        }
        TridiagonalLu {
            lower: lower.to_vec(),
            denom,
            upper_scaled,
        }
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    pub fn solve_into(&self, rhs: &[T], out: &mut [T]) {
        let m = self.len();
        assert!(rhs.len() == m && out.len() == m);
        out[0] = rhs[0] / self.denom[0];
        for i in 1..m {
            out[i] = (rhs[i] - self.lower[i] * out[i - 1]) / self.denom[i];
        }
        for i in (0..m - 1).rev() {
            out[i] = out[i] - self.upper_scaled[i] * out[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut out = rhs.to_vec();
        self.solve_into(rhs, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn solves_real_system() {
        let lower = [0.0, 1.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [1.0, 1.0, 1.0, 0.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = diag[i] * x[i];
                if i > 0 {
                    v += lower[i] * x[i - 1];
                }
                if i < 3 {
                    v += upper[i] * x[i + 1];
                }
                v
            })
            .collect();
        let sol = TridiagonalLu::factor(&lower, &diag, &upper).solve(&rhs);
        for (a, b) in sol.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn solves_complex_system() {
        let i = Complex64::i();
        let m = 50;
        let lower: Vec<_> = (0..m).map(|k| -i * (0.3 + k as f64 * 0.01)).collect();
        let upper: Vec<_> = (0..m).map(|k| -i * (0.2 + k as f64 * 0.02)).collect();
        let diag: Vec<_> = (0..m).map(|_| Complex64::new(1.0, 0.9)).collect();
        let x: Vec<_> = (0..m)
            .map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos()))
            .collect();
        let rhs: Vec<_> = (0..m)
            .map(|k| {
                let mut v = diag[k] * x[k];
                if k > 0 {
                    v += lower[k] * x[k - 1];
                }
                if k + 1 < m {
                    v += upper[k] * x[k + 1];
                }
                v
            })
            .collect();
        let sol = TridiagonalLu::factor(&lower, &diag, &upper).solve(&rhs);
        for (a, b) in sol.iter().zip(x.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
