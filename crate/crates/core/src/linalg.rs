//! Dense LU with partial pivoting and one step of iterative refinement.

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{HatError, Result};

/// Pivot ratios below this are treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-14;

pub struct DenseLu {
    m: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    pub pivot_ratio: f64,
}

impl DenseLu {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let lu = m.clone().lu();
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..u.nrows() {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let pivot_ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(pivot_ratio > SINGULAR_RATIO) {
            return Err(HatError::SingularSystem { pivot_ratio });
        }
        Ok(DenseLu { m, lu, pivot_ratio })
    }

    /// Solves `M X = B`; returns the solution and the max-norm residual after refinement.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let singular = || HatError::SingularSystem {
            pivot_ratio: self.pivot_ratio,
        };
        let mut x = self.lu.solve(b).ok_or_else(singular)?;
        let r = b - &self.m * &x;
        x += self.lu.solve(&r).ok_or_else(singular)?;
        let res = (b - &self.m * &x).amax();
        Ok((x, res))
    }
}
