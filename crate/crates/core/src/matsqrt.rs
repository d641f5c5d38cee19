//! Principal square roots of symmetric PSD matrices and their derivatives.
//!
//! Two forward routes are provided: [`eig_sqrt`] builds `Q √Λ Qᵀ` from a
//! Jacobi eigendecomposition, and [`newton_schulz_sqrt`] runs the coupled
//! inverse-free iteration
//!
//! ```text
//! U = ½ (3I − Z_t Y_t),   Y_{t+1} = Y_t U,   Z_{t+1} = U Z_t
//! ```
//!
//! from `Y_0 = A / s`, `Z_0 = I`, which converges to `(A/s)^{1/2}` and
//! `(A/s)^{-1/2}`. The derivative of `B = √A` follows from differentiating
//! `A = B B`, i.e. the Sylvester equation `dB·B + B·dB = dA`, solved either in
//! the eigenbasis of `B` ([`sylvester_grad_eig`]) or as a dense Kronecker
//! system ([`kron_sylvester_solve`], small `d` only).
//!
//! The Sylvester operator `X ↦ XB + BX` is self-adjoint for symmetric `B`, so
//! the same solve maps an upstream gradient `∂L/∂B` to `∂L/∂A`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_norm, matmul, matmul_tn, rel_frobenius_error, solve_dense, sym_eig_default, Matrix,
    SymEig,
};

/// Relative tolerance below which a negative eigenvalue is treated as roundoff.
pub const PSD_TOL: f64 = 1e-10;
/// Default diagonal jitter (relative to `‖A‖_F`) for Newton-Schulz.
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Default Newton-Schulz iteration count.
pub const DEFAULT_ITERATIONS: usize = 15;
/// Relative tolerance on `λ_i + λ_j` in the eigenbasis Sylvester solve.
pub const SINGULAR_PAIR_TOL: f64 = 1e-12;
/// Largest dimension accepted by [`kron_sylvester_solve`].
pub const KRON_MAX_DIM: usize = 16;

const NORM_EPS: f64 = 1e-12;

/// Output of [`newton_schulz_sqrt`].
#[derive(Debug, Clone)]
pub struct SqrtResult {
    /// Approximation of `A^{1/2}`.
    pub y: Matrix,
    /// Approximation of `A^{-1/2}` (of the jittered matrix).
    pub z: Matrix,
    pub iterations_used: usize,
    /// `‖Y² − A‖_F / ‖A‖_F`.
    pub residual: f64,
}

/// How a PSD square root is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SqrtMethod {
    Eig,
    NewtonSchulz { iterations: usize, jitter: f64 },
}

impl Default for SqrtMethod {
    fn default() -> Self {
        SqrtMethod::NewtonSchulz {
            iterations: DEFAULT_ITERATIONS,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl SqrtMethod {
    pub fn newton_schulz(iterations: usize) -> Self {
        SqrtMethod::NewtonSchulz {
            iterations,
            jitter: DEFAULT_JITTER,
        }
    }

    /// Square root of a symmetric PSD matrix by the selected route.
    pub fn sqrt(&self, a: &Matrix) -> Result<Matrix> {
        match *self {
            SqrtMethod::Eig => eig_sqrt(a),
            SqrtMethod::NewtonSchulz { iterations, jitter } => {
                newton_schulz_sqrt(a, iterations, jitter).map(|r| r.y)
            }
        }
    }
}

fn check_psd(e: &SymEig, norm: f64) -> Result<()> {
    let min = e.eigenvalues.as_slice().first().copied().unwrap_or(0.0);
    let tolerance = PSD_TOL * norm;
    if min < -tolerance {
        return Err(Error::NotPsd {
            eigenvalue: min,
            tolerance,
        });
    }
    Ok(())
}

/// Principal square root `Q √Λ Qᵀ`, with roundoff-negative eigenvalues
/// clamped to zero.
pub fn eig_sqrt(a: &Matrix) -> Result<Matrix> {
    let e = sym_eig_default(a)?;
    check_psd(&e, frobenius_norm(a))?;
    Ok(e.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Coupled Newton-Schulz iteration for `A^{1/2}` and `A^{-1/2}`.
///
/// The input is shifted by `jitter·‖A‖_F·I` and scaled by
/// `s = min(‖A‖_F, ‖A‖_∞) + ε`, an upper bound on the spectral radius, so
/// every eigenvalue of the iterate lies in `(0, 1]`; the outputs are
/// rescaled by `√s`. Iteration stops early once `Z_t Y_t` equals `I` to
/// roundoff.
pub fn newton_schulz_sqrt(a: &Matrix, t: usize, jitter: f64) -> Result<SqrtResult> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "square root of non-square {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::Domain(
            "square root input has non-finite entries".into(),
        ));
    }
    if !(jitter >= 0.0) {
        return Err(Error::Config(format!("jitter must be >= 0, got {jitter}")));
    }
    let n = a.rows();
    let mut y = a.clone();
    y.add_diag(jitter * frobenius_norm(a));
    let s = spectral_bound(&y) + NORM_EPS;
    let mut y = y.scale(1.0 / s);
    let mut z = Matrix::identity(n);
    let mut used = 0;
    // The iterates commute only in exact arithmetic; forcing the products to
    // be symmetric destabilizes the iteration on rank-deficient inputs.
    for iteration in 1..=t {
        let zy = matmul(&z, &y)?;
        // U = (3I - ZY) / 2
        let mut u = zy.scale(-0.5);
        u.add_diag(1.5);
        let off = {
            let mut d = u.clone();
            d.add_diag(-1.0);
            frobenius_norm(&d)
        };
        y = matmul(&y, &u)?;
        z = matmul(&u, &z)?;
        used = iteration;
        if !y.all_finite() || !z.all_finite() {
            return Err(Error::Divergence { iteration });
        }
        if off <= 1e-15 * (n as f64).sqrt() {
            break;
        }
    }

    let root = s.sqrt();
    let y = y.scale(root);
    let z = z.scale(1.0 / root);
    let residual = {
        let y2 = matmul(&y, &y)?;
        rel_frobenius_error(&y2, a)
    };
    Ok(SqrtResult {
        y,
        z,
        iterations_used: used,
        residual,
    })
}

/// `min(‖a‖_F, ‖a‖_∞)`; both bound the spectral radius of a symmetric matrix.
fn spectral_bound(a: &Matrix) -> f64 {
    let inf = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    frobenius_norm(a).min(inf)
}

/// Reusable eigenbasis solver for `X·B + B·X = C` with fixed symmetric PSD `B`.
#[derive(Debug, Clone)]
pub struct SylvesterSolver {
    eig: SymEig,
}

impl SylvesterSolver {
    /// Decomposes `b` and checks that no eigenvalue pair sums to
    /// `<= SINGULAR_PAIR_TOL · max λ`.
    pub fn new(b: &Matrix) -> Result<Self> {
        let eig = sym_eig_default(b)?;
        check_psd(&eig, frobenius_norm(b))?;
        let ev = eig.eigenvalues.as_slice();
        let max = ev.last().copied().unwrap_or(0.0).max(0.0);
        let tolerance = SINGULAR_PAIR_TOL * max;
        let mut pairs = Vec::new();
        for i in 0..ev.len() {
            for j in i..ev.len() {
                if ev[i] + ev[j] <= tolerance {
                    pairs.push((i, j));
                }
            }
        }
        if !pairs.is_empty() {
            return Err(Error::SingularPair { pairs, tolerance });
        }
        Ok(Self { eig })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eig.eigenvalues.as_slice()
    }

    /// Solves `X·B + B·X = rhs`.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let q = &self.eig.q;
        if rhs.dims() != q.dims() {
            return Err(Error::Shape(format!(
                "Sylvester rhs {:?} vs operator {:?}",
                rhs.dims(),
                q.dims()
            )));
        }
        let ev = self.eig.eigenvalues.as_slice();
        // C = Qᵀ rhs Q, scaled entrywise by 1/(λ_i + λ_j), mapped back.
        let mut c = matmul(&matmul_tn(q, rhs)?, q)?;
        let n = ev.len();
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] /= ev[i] + ev[j];
            }
        }
        crate::linalg::matmul_nt(&matmul(q, &c)?, q)
    }
}

/// Solves `dB·b + b·dB = da` in the eigenbasis of `b`.
pub fn sylvester_grad_eig(b: &Matrix, da: &Matrix) -> Result<Matrix> {
    SylvesterSolver::new(b)?.solve(da)
}

/// Solves `(Bᵀ⊗I + I⊗B) vec(dB) = vec(dA)` densely (column-stacking `vec`).
///
/// This is the Kronecker form of `dB·B + B·dB = dA`, intended as an
/// independent check of [`sylvester_grad_eig`] for `d <= 16`.
pub fn kron_sylvester_solve(b: &Matrix, da: &Matrix) -> Result<Matrix> {
    if !b.is_square() || b.dims() != da.dims() {
        return Err(Error::Shape(format!(
            "Kronecker Sylvester solve with B {:?} and dA {:?}",
            b.dims(),
            da.dims()
        )));
    }
    let d = b.rows();
    if d > KRON_MAX_DIM {
        return Err(Error::Domain(format!(
            "dense Kronecker solve limited to d <= {KRON_MAX_DIM}, got {d}"
        )));
    }
    let n = d * d;
    let vec_idx = |i: usize, j: usize| i + j * d;
    let mut k = Matrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            let row = vec_idx(i, j);
            // (X B)_{ij} = Σ_l X_{il} B_{lj}
            for l in 0..d {
                k[(row, vec_idx(i, l))] += b[(l, j)];
            }
            // (B X)_{ij} = Σ_m B_{im} X_{mj}
            for m in 0..d {
                k[(row, vec_idx(m, j))] += b[(i, m)];
            }
        }
    }
    let mut rhs = vec![0.0; n];
    for i in 0..d {
        for j in 0..d {
            rhs[vec_idx(i, j)] = da[(i, j)];
        }
    }
    let x = solve_dense(&k, &rhs)?;
    Ok(Matrix::from_fn(d, d, |i, j| x[vec_idx(i, j)]))
}

/// Gradient of `tr √A` with respect to `A`, given `B ≈ √A`.
pub fn trace_sqrt_grad(b: &Matrix) -> Result<Matrix> {
    sylvester_grad_eig(b, &Matrix::identity(b.rows()))
}

/// One row of the square-root convergence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtCheckRow {
    pub t: usize,
    pub trial: usize,
    /// `‖Y_t² − A‖_F / ‖A‖_F` for the Newton-Schulz iterate.
    pub residual: f64,
    /// Relative error of the Sylvester directional derivative, solved around
    /// `Y_t`, against central differences of [`eig_sqrt`].
    pub grad_rel_err: f64,
}

/// Largest dimension accepted by [`sqrt_convergence`].
pub const CHECK_MAX_DIM: usize = 256;

/// Runs Newton-Schulz for each `t` on `trials` random PSD `d×d` matrices with
/// eigenvalues uniform in `[1e-3, 10]`. Each trial draws one matrix and one
/// unit-norm symmetric direction, shared across `t`.
pub fn sqrt_convergence<R: rand::Rng + ?Sized>(
    d: usize,
    t_values: &[usize],
    trials: usize,
    rng: &mut R,
) -> Result<Vec<SqrtCheckRow>> {
    if d == 0 || d > CHECK_MAX_DIM {
        return Err(Error::Config(format!(
            "dimension must lie in [1, {CHECK_MAX_DIM}], got {d}"
        )));
    }
    let h = 1e-5;
    let mut rows = Vec::with_capacity(t_values.len() * trials);
    for trial in 0..trials {
        let a = crate::random::random_psd(d, 1e-3, 10.0, rng);
        let e = crate::random::random_symmetric(d, rng);
        let e = e.scale(1.0 / frobenius_norm(&e));
        let mut plus = a.clone();
        plus.axpy(h, &e);
        let mut minus = a.clone();
        minus.axpy(-h, &e);
        let mut fd = eig_sqrt(&plus)?;
        fd.axpy(-1.0, &eig_sqrt(&minus)?);
        let fd = fd.scale(0.5 / h);
        for &t in t_values {
            let ns = newton_schulz_sqrt(&a, t, DEFAULT_JITTER)?;
            // Early iterates may be indefinite; their error is still reported.
            let grad_rel_err = match SylvesterSolver::new(&ns.y.symmetrize()) {
                Ok(solver) => rel_frobenius_error(&solver.solve(&e)?, &fd),
                Err(_) => f64::INFINITY,
            };
            rows.push(SqrtCheckRow {
                t,
                trial,
                residual: ns.residual,
                grad_rel_err,
            });
        }
    }
    Ok(rows)
}
