//! Spatially regularized sparse subspace clustering.
//!
//! Solves, over the columns of a `D x P` data matrix `y` (P pixels),
//!
//! ```text
//! min ||c||_1 + lambda/2 ||g||_F^2 + alpha/2 ||c - cbar||_F^2
//! s.t. y = y c + g,  diag(c) = 0,  c^T 1 = 1,
//! ```
//!
//! where `cbar` is the 3x3x3 moving mean of `c` over the two spatial axes
//! and the coefficient-index axis. The program is solved by alternating
//! minimization: with `cbar` held fixed, `g` is eliminated (`g = y - y c`)
//! and ADMM runs on a split `a = c` with the affine constraint `1^T a = 1^T`
//! handled by its own multiplier; afterwards `cbar` is refreshed from the
//! filtered `c` and the ADMM state warm-starts the next pass.
//!
//! The `a`-update solves
//!
//! ```text
//! (lambda y^T y + (rho + alpha) I + rho 1 1^T) a = rhs
//! ```
//!
//! with one factorization reused across all iterations. When `D < P` the
//! system matrix is a rank-`D` update of `(rho + alpha) I + rho 1 1^T`,
//! whose inverse is closed-form, so the solve is applied through the
//! Woodbury identity at `O(D P^2)` per iteration instead of `O(P^3)`; this
//! is what makes clustering compressed measurements substantially cheaper
//! than clustering the full data. The `c`-update is entrywise soft
//! thresholding at `1/rho` followed by zeroing the diagonal, so
//! `diag(c) = 0` holds exactly at every iterate.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};

/// Dense representation cap on the pixel count.
pub const MAX_PIXELS: usize = 8192;

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_OUTER_ITERS: usize = 3;
/// Multiplier `a` in the data-driven default `lambda = a / mu`.
pub const LAMBDA_SCALE: f64 = 10.0;
/// Default `rho` as a multiple of `lambda`.
pub const RHO_OVER_LAMBDA: f64 = 10.0;

/// Problem instance; construct with [`SRSSCProblem::new`] and adjust the
/// public knobs before calling [`solve_srssc`].
#[derive(Debug, Clone)]
pub struct SRSSCProblem {
    /// `D x P` data matrix, one column per pixel.
    pub data: DMatrix<f64>,
    /// Spatial height `M` of the scene (`M * N == P`).
    pub rows: usize,
    /// Spatial width `N` of the scene.
    pub cols: usize,
    /// Weight of the representation-noise term.
    pub lambda: f64,
    /// Weight of the spatial regularization term.
    pub alpha: f64,
    /// ADMM penalty parameter.
    pub rho: f64,
    /// Feasibility tolerance on the split and affine residuals.
    pub tol: f64,
    /// Cap on ADMM iterations per outer pass.
    pub max_iter: usize,
    /// Number of mean-filter alternations.
    pub outer_iters: usize,
}

impl SRSSCProblem {
    /// Builds a problem with data-driven `lambda` (`LAMBDA_SCALE / mu` where
    /// `mu` is the smallest over columns of the largest off-diagonal Gram
    /// magnitude), `rho = RHO_OVER_LAMBDA * lambda`, `alpha = 0`, and the
    /// default tolerances.
    pub fn new(data: DMatrix<f64>, rows: usize, cols: usize) -> Result<Self> {
        let lambda = auto_lambda(&data)?;
        Self::with_lambda(data, rows, cols, lambda)
    }

    /// Like [`SRSSCProblem::new`] but with an explicit `lambda`.
    pub fn with_lambda(
        data: DMatrix<f64>,
        rows: usize,
        cols: usize,
        lambda: f64,
    ) -> Result<Self> {
        let p = data.ncols();
        if rows * cols != p {
            return Err(Error::invalid(format!(
                "data has {p} columns but the scene is {rows}x{cols}"
            )));
        }
        if p < 2 {
            return Err(Error::invalid(
                "self-expressiveness needs at least two pixels",
            ));
        }
        if p > MAX_PIXELS {
            return Err(Error::TooLarge {
                size: p,
                cap: MAX_PIXELS,
            });
        }
        if data.nrows() == 0 {
            return Err(Error::invalid("data matrix has no rows"));
        }
        for j in 0..p {
            if data.column(j).norm() == 0.0 {
                return Err(Error::ZeroColumn { index: j });
            }
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            data,
            rows,
            cols,
            lambda,
            alpha: 0.0,
            rho: RHO_OVER_LAMBDA * lambda,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            outer_iters: DEFAULT_OUTER_ITERS,
        })
    }

    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.outer_iters == 0 {
            return Err(Error::invalid("outer_iters must be at least 1"));
        }
        Ok(())
    }
}

/// The data-driven `lambda` heuristic. Errors if some column is orthogonal
/// to all others (then no self-expressive scale exists and `lambda` must be
/// set explicitly).
pub fn auto_lambda(data: &DMatrix<f64>) -> Result<f64> {
    let p = data.ncols();
    if p < 2 {
        return Err(Error::invalid("need at least two columns"));
    }
    let gram = data.transpose() * data;
    let mut mu = f64::INFINITY;
    for j in 0..p {
        let mut best = 0.0f64;
        for i in 0..p {
            if i != j {
                best = best.max(gram[(i, j)].abs());
            }
        }
        mu = mu.min(best);
    }
    if mu <= f64::MIN_POSITIVE {
        return Err(Error::invalid(
            "a data column is orthogonal to all others; set lambda explicitly",
        ));
    }
    Ok(LAMBDA_SCALE / mu)
}

/// Split/affine feasibility at one ADMM iterate.
#[derive(Debug, Clone, Copy)]
pub struct ResidualSample {
    /// `max |a - c|`.
    pub split: f64,
    /// `max |1^T c - 1|`.
    pub affine: f64,
}

#[derive(Debug, Clone)]
pub struct SRSSCSolution {
    /// Sparse coefficient matrix `c`, `P x P`, zero diagonal.
    pub coefficients: DMatrix<f64>,
    /// Representation noise `g = y - y c`, `D x P`.
    pub noise: DMatrix<f64>,
    /// Mean coefficient matrix: the 3x3x3 filter of `coefficients`.
    pub mean_coefficients: DMatrix<f64>,
    /// Total ADMM iterations across all outer passes.
    pub iterations: usize,
    /// Whether the final pass met the feasibility tolerance.
    pub converged: bool,
    /// `||y - y c - g||_F / ||y||_F` for the returned triple.
    pub equality_residual: f64,
    /// `max |1^T c - 1|` for the returned `c`.
    pub affine_residual: f64,
    /// `max |diag(c)|`; zero by construction.
    pub diag_residual: f64,
    /// `max |a - c|` at exit.
    pub split_residual: f64,
    /// Per-iteration residuals, all passes concatenated.
    pub residual_history: Vec<ResidualSample>,
}

enum SystemSolver {
    /// Explicit inverse of the full `P x P` system matrix.
    Direct { inverse: DMatrix<f64> },
    /// Woodbury application for `D < P`.
    Woodbury {
        /// `rho + alpha`.
        cw: f64,
        /// `rho / (cw + rho * P)`.
        shrink: f64,
        /// `W = Y A^{-1}`, `D x P`.
        w: DMatrix<f64>,
        /// `W^T`, `P x D`.
        wt: DMatrix<f64>,
        /// `(I/lambda + W Y^T)^{-1}`, `D x D`.
        kinv: DMatrix<f64>,
    },
}

fn col_sums(m: &DMatrix<f64>) -> RowDVector<f64> {
    RowDVector::from_fn(m.ncols(), |_, j| m.column(j).sum())
}

impl SystemSolver {
    fn build(problem: &SRSSCProblem, lam_gram: &DMatrix<f64>) -> Result<Self> {
        let d = problem.data.nrows();
        let p = problem.data.ncols();
        let cw = problem.rho + problem.alpha;
        if d < p {
            let shrink = problem.rho / (cw + problem.rho * p as f64);
            // W = Y A^{-1} with A^{-1} = (I - shrink * 1 1^T) / cw;
            // (Y 1 1^T)[i][j] is the sum of row i of Y.
            let y_row_sums: nalgebra::DVector<f64> =
                nalgebra::DVector::from_fn(d, |i, _| problem.data.row(i).sum());
            let mut w = problem.data.clone();
            for j in 0..p {
                for i in 0..d {
                    w[(i, j)] = (w[(i, j)] - shrink * y_row_sums[i]) / cw;
                }
            }
            let k = DMatrix::identity(d, d) / problem.lambda + &w * problem.data.transpose();
            let kinv = k
                .cholesky()
                .ok_or_else(|| Error::invalid("system matrix is not positive definite"))?
                .inverse();
            let wt = w.transpose();
            Ok(SystemSolver::Woodbury {
                cw,
                shrink,
                w,
                wt,
                kinv,
            })
        } else {
            let mut b = lam_gram.clone();
            for i in 0..p {
                b[(i, i)] += cw;
            }
            b.add_scalar_mut(problem.rho);
            let inverse = b
                .cholesky()
                .ok_or_else(|| Error::invalid("system matrix is not positive definite"))?
                .inverse();
            Ok(SystemSolver::Direct { inverse })
        }
    }

    /// `out = B^{-1} rhs`.
    fn apply(&self, rhs: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        match self {
            SystemSolver::Direct { inverse } => {
                out.gemm(1.0, inverse, rhs, 0.0);
            }
            SystemSolver::Woodbury {
                cw,
                shrink,
                w,
                wt,
                kinv,
            } => {
                // out = A^{-1} rhs with A^{-1} = (I - shrink 1 1^T) / cw.
                let sums = col_sums(rhs);
                let p = rhs.nrows();
                for j in 0..rhs.ncols() {
                    let corr = shrink * sums[j];
                    for i in 0..p {
                        out[(i, j)] = (rhs[(i, j)] - corr) / cw;
                    }
                }
                // out -= W^T K^{-1} (W rhs), since W rhs = Y A^{-1} rhs.
                let t1 = w * rhs;
                let t2 = kinv * t1;
                out.gemm(-1.0, wt, &t2, 1.0);
            }
        }
    }
}

/// 3x3x3 moving mean of a coefficient matrix over (spatial row, spatial
/// column, coefficient index), truncated at the boundaries. `c` is `P x P`
/// with column `j` the coefficient vector of pixel `j` in row-major order.
pub fn mean_filter_3d(c: &DMatrix<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let p = rows * cols;
    if c.nrows() != p || c.ncols() != p {
        return Err(Error::invalid(format!(
            "coefficient matrix is {}x{}, expected {p}x{p} for a {rows}x{cols} scene",
            c.nrows(),
            c.ncols()
        )));
    }
    // The truncated box window is a Cartesian product of per-axis ranges,
    // so the mean separates into a spatial average then a depth average.
    let mut spatial = DMatrix::zeros(p, p);
    for i in 0..rows {
        for j in 0..cols {
            let dst = i * cols + j;
            let i0 = i.saturating_sub(1);
            let i1 = (i + 1).min(rows - 1);
            let j0 = j.saturating_sub(1);
            let j1 = (j + 1).min(cols - 1);
            let count = ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
            {
                let mut out_col = spatial.column_mut(dst);
                for ii in i0..=i1 {
                    for jj in j0..=j1 {
                        let src = ii * cols + jj;
                        out_col.axpy(1.0, &c.column(src), 1.0);
                    }
                }
                out_col /= count;
            }
        }
    }
    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        let src = spatial.column(j);
        let mut dst = out.column_mut(j);
        for t in 0..p {
            let t0 = t.saturating_sub(1);
            let t1 = (t + 1).min(p - 1);
            let mut acc = 0.0;
            for tt in t0..=t1 {
                acc += src[tt];
            }
            dst[t] = acc / (t1 - t0 + 1) as f64;
        }
    }
    Ok(out)
}

/// Runs the alternating ADMM scheme described in the module docs.
pub fn solve_srssc(problem: &SRSSCProblem) -> Result<SRSSCSolution> {
    problem.validate()?;
    let p = problem.data.ncols();
    let rho = problem.rho;
    let alpha = problem.alpha;

    let gram = problem.data.transpose() * &problem.data;
    let lam_gram = &gram * problem.lambda;
    let solver = SystemSolver::build(problem, &lam_gram)?;

    let mut c: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut c_next: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut a: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut u: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut delta: RowDVector<f64> = RowDVector::zeros(p);
    let mut c_bar: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut rhs: DMatrix<f64> = DMatrix::zeros(p, p);

    let kappa = 1.0 / rho;
    let mut history = Vec::new();
    let mut total_iterations = 0usize;
    let mut converged = false;
    let mut split_residual = f64::INFINITY;

    for _outer in 0..problem.outer_iters {
        converged = false;
        for _it in 0..problem.max_iter {
            total_iterations += 1;

            // rhs = lambda y^T y + rho (c - u) + alpha cbar + 1 * (rho (1 - delta))
            {
                let lg = lam_gram.as_slice();
                let cs = c.as_slice();
                let us = u.as_slice();
                let cb = c_bar.as_slice();
                let r = rhs.as_mut_slice();
                for (j, chunk) in r.chunks_mut(p).enumerate() {
                    let row_term = rho * (1.0 - delta[j]);
                    let base = j * p;
                    for (i, v) in chunk.iter_mut().enumerate() {
                        let idx = base + i;
                        *v = lg[idx] + rho * (cs[idx] - us[idx]) + alpha * cb[idx] + row_term;
                    }
                }
            }

            solver.apply(&rhs, &mut a);

            // c-update: soft threshold a + u at 1/rho, zero the diagonal.
            {
                let asl = a.as_slice();
                let usl = u.as_slice();
                let cn = c_next.as_mut_slice();
                for (j, chunk) in cn.chunks_mut(p).enumerate() {
                    let base = j * p;
                    for (i, v) in chunk.iter_mut().enumerate() {
                        if i == j {
                            *v = 0.0;
                            continue;
                        }
                        let x = asl[base + i] + usl[base + i];
                        let mag = x.abs() - kappa;
                        *v = if mag > 0.0 { mag * x.signum() } else { 0.0 };
                    }
                }
            }

            // Dual updates and residuals.
            let mut split = 0.0f64;
            {
                let asl = a.as_slice();
                let cn = c_next.as_slice();
                let usl = u.as_mut_slice();
                for idx in 0..p * p {
                    let r = asl[idx] - cn[idx];
                    usl[idx] += r;
                    split = split.max(r.abs());
                }
            }
            let mut affine = 0.0f64;
            for j in 0..p {
                let colsum_a = a.column(j).sum();
                delta[j] += colsum_a - 1.0;
                affine = affine.max((c_next.column(j).sum() - 1.0).abs());
            }

            std::mem::swap(&mut c, &mut c_next);
            history.push(ResidualSample { split, affine });
            split_residual = split;

            if split <= problem.tol && affine <= problem.tol {
                converged = true;
                break;
            }
        }
        c_bar = mean_filter_3d(&c, problem.rows, problem.cols)?;
    }

    let noise = &problem.data - &problem.data * &c;
    let ynorm = problem.data.norm();
    let equality_residual = if ynorm > 0.0 {
        (&problem.data - &problem.data * &c - &noise).norm() / ynorm
    } else {
        0.0
    };
    let mut affine_residual = 0.0f64;
    for j in 0..p {
        affine_residual = affine_residual.max((c.column(j).sum() - 1.0).abs());
    }
    let diag_residual = (0..p).map(|i| c[(i, i)].abs()).fold(0.0, f64::max);

    Ok(SRSSCSolution {
        coefficients: c,
        noise,
        mean_coefficients: c_bar,
        iterations: total_iterations,
        converged,
        equality_residual,
        affine_residual,
        diag_residual,
        split_residual,
        residual_history: history,
    })
}

/// Objective value of the program at the given point.
pub fn objective(problem: &SRSSCProblem, c: &DMatrix<f64>, g: &DMatrix<f64>, c_bar: &DMatrix<f64>) -> f64 {
    let l1: f64 = c.iter().map(|v| v.abs()).sum();
    let spatial: f64 = c
        .iter()
        .zip(c_bar.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    l1 + 0.5 * problem.lambda * g.norm_squared() + 0.5 * problem.alpha * spatial
}

/// Symmetric nonnegative pixel-affinity graph with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    w: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::invalid("affinity matrix must be square"));
        }
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("nonzero affinity diagonal at {i}")));
            }
            for j in 0..i {
                let (x, y) = (w[(i, j)], w[(j, i)]);
                if x != y {
                    return Err(Error::invalid(format!(
                        "affinity asymmetry at ({i},{j}): {x} vs {y}"
                    )));
                }
                if x < 0.0 || !x.is_finite() {
                    return Err(Error::invalid(format!(
                        "affinity entries must be finite and nonnegative, found {x} at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

/// `w = |c~| + |c~|^T` where `c~` is `|c|` with each column scaled by its
/// maximum entry (columns of zeros stay zero).
pub fn build_affinity(solution: &SRSSCSolution) -> AffinityMatrix {
    let c = &solution.coefficients;
    let p = c.ncols();
    let mut scaled = DMatrix::zeros(p, p);
    for j in 0..p {
        let col = c.column(j);
        let maxabs = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if maxabs > 0.0 {
            for i in 0..p {
                scaled[(i, j)] = c[(i, j)].abs() / maxabs;
            }
        }
    }
    let mut w = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..p {
            w[(i, j)] = scaled[(i, j)] + scaled[(j, i)];
        }
    }
    for i in 0..p {
        w[(i, i)] = 0.0;
    }
    AffinityMatrix::new(w).expect("construction is symmetric and nonnegative")
}
