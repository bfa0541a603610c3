//! Shared fixtures for the kernel benchmarks.

use std::sync::Arc;

use dinls_core::{Grading, ModelParams, RadialField, RadialGrid, Result};

pub fn grid(n: usize, points: usize) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::build(n, 30.0, points, Grading::LogGraded)?))
}

/// Unit-width Gaussian `a e^{-r²}` on the given grid.
pub fn gaussian(grid: Arc<RadialGrid>, a: f64) -> Result<RadialField> {
    RadialField::from_real_fn(grid, |r| a * (-r * r).exp())
}

/// The (3, -0.5, 0, 2) model used across the benches.
pub fn params() -> Result<ModelParams> {
    ModelParams::new(3, -0.5, 0.0, 2.0)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        let g = super::grid(3, 256).unwrap();
        let f = super::gaussian(g, 1.0).unwrap();
        assert_eq!(f.values().len(), 256);
        super::params().unwrap();
    }
}
