//! Run configuration shared by the solver, clustering and pipeline stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All tunables of a clustering run. `lambda` and `rho` are optional: when
/// absent they are derived from the data (`lambda = 10 / mu` with `mu` the
/// weakest column coherence, `rho = 10 lambda`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; every random stage derives its own stream from it.
    pub seed: u64,
    /// Representation-noise weight; `None` means data-driven.
    pub lambda: Option<f64>,
    /// Spatial regularization weight; 0 disables the spatial term.
    pub alpha: f64,
    /// ADMM penalty; `None` means `10 * lambda`.
    pub rho: Option<f64>,
    /// ADMM iteration cap per outer pass.
    pub max_iter: usize,
    /// Feasibility tolerance.
    pub tol: f64,
    /// Mean-filter alternations.
    pub outer_iters: usize,
    /// Number of clusters.
    pub k: usize,
    /// k-means restarts.
    pub kmeans_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda: None,
            alpha: 0.0,
            rho: None,
            max_iter: crate::solver::DEFAULT_MAX_ITER,
            tol: crate::solver::DEFAULT_TOL,
            outer_iters: crate::solver::DEFAULT_OUTER_ITERS,
            k: 2,
            kmeans_restarts: 20,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(r) = self.rho {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::invalid(format!("rho must be positive, got {r}")));
            }
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.outer_iters == 0 {
            return Err(Error::invalid("iteration counts must be at least 1"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::invalid("kmeans restarts must be at least 1"));
        }
        Ok(())
    }
}
