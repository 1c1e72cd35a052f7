//! Dense LU factorization shared by the Steklov and saddle-point solvers.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{EmiError, Result};

/// Partial-pivoting LU with a cheap conditioning probe.
///
/// The probe is `‖A‖∞ · ‖A⁻¹ 1‖∞`: a vector of ones has a large component
/// along the near-null direction of the operators assembled here (constants
/// for single-layer matrices on curves of unit capacity, gauge modes for the
/// saddle systems), so the growth of that single solve tracks the condition
/// number closely enough to detect near-singularity.
#[derive(Clone, Debug)]
pub struct DenseLu {
    lu: LU<f64, Dyn, Dyn>,
    dim: usize,
    growth: f64,
}

impl DenseLu {
    pub fn factor(a: DMatrix<f64>, what: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(EmiError::Dimension(format!(
                "{what}: {}x{} matrix is not square",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(index) = a.iter().position(|v| !v.is_finite()) {
            return Err(EmiError::NonFinite {
                what: what.to_string(),
                index,
            });
        }
        let dim = a.nrows();
        let norm_inf = a
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = a.lu();
        let ones = DVector::from_element(dim, 1.0);
        let growth = match lu.solve(&ones) {
            Some(x) if x.iter().all(|v| v.is_finite()) => norm_inf * x.amax(),
            _ => f64::INFINITY,
        };
        if !growth.is_finite() {
            return Err(EmiError::Singular {
                what: what.to_string(),
                estimate: growth,
            });
        }
        Ok(Self { lu, dim, growth })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `‖A‖∞ · ‖A⁻¹ 1‖∞`, a lower bound on the ∞-norm condition number.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        assert_eq!(b.len(), self.dim, "right-hand side length mismatch");
        // A zero pivot was ruled out at factorization time.
        let ok = self.lu.solve_mut(b);
        debug_assert!(ok);
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim, "right-hand side row mismatch");
        let mut x = b.clone();
        let ok = self.lu.solve_mut(&mut x);
        debug_assert!(ok);
        x
    }
}

/// Infinity norm (maximum absolute row sum).
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
