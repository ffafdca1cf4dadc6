//! Closed-form sub-solvers used by the ADMM loop.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, complete_basis, row_orthonormality_error};
use crate::tensor3::Tensor3;

/// Singular values of `XYᵀ` below this mark the Procrustes solution as
/// non-unique.
pub const PROCRUSTES_RANK_TOL: f64 = 1e-10;

/// Extra random starting points tried by [`orthogonal_procrustes`] when `k < d`.
pub const PROCRUSTES_RESTARTS: usize = 16;
const PROCRUSTES_RESTART_SEED: u64 = 0x5eed;
const REFINE_MAX_ITER: usize = 5000;
const REFINE_STEP_TOL: f64 = 1e-12;

/// Row-orthonormal `k × d` projection (`W Wᵀ = I_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix(DMatrix<f64>);

impl ProjectionMatrix {
    /// Wraps `w` after checking `W Wᵀ = I` to within `1e-8`.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() > w.ncols() {
            return Err(Error::Shape(format!(
                "projection must be k × d with k ≤ d, got {:?}",
                w.shape()
            )));
        }
        let err = row_orthonormality_error(&w);
        if err > 1e-8 {
            return Err(Error::Consistency(format!(
                "projection rows not orthonormal (error {err:e})"
            )));
        }
        Ok(Self(w))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    /// Leading `k` left singular vectors of `x` (d × n), as rows.
    pub fn leading_subspace(x: &DMatrix<f64>, k: usize) -> Result<Self> {
        let d = x.nrows();
        if k > d {
            return Err(Error::Shape(format!("k = {k} exceeds feature dimension {d}")));
        }
        let svd = x.clone().svd(true, false);
        let u = svd.u.expect("u requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let cols: Vec<_> = order.iter().map(|&i| u.column(i).into_owned()).collect();
        let basis = complete_basis(&DMatrix::from_columns(&cols));
        Self::new(basis.columns(0, k).transpose())
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Output of the Procrustes solvers.
#[derive(Debug, Clone)]
pub struct ProcrustesSolution {
    pub w: ProjectionMatrix,
    /// `XYᵀ` had a singular value below [`PROCRUSTES_RANK_TOL`]; the
    /// returned `W` is one of several optimal completions.
    pub rank_deficient: bool,
    /// Majorize–minimize steps taken after the closed form (0 when none ran).
    pub refine_iterations: usize,
}

/// `‖Y − W X‖_F²`.
pub fn procrustes_objective(w: &DMatrix<f64>, source: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (target - w * source).norm_squared()
}

/// Row-orthonormal `W` (k × d) maximizing `tr(W M)` for `M` of shape d × k.
///
/// With `M = U Σ Vᵀ` the maximizer is `V Uᵀ`. Directions belonging to
/// vanishing singular values are completed to an orthonormal basis.
fn polar_factor(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (d, k) = m.shape();
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max().max(1.0);
    let rank_deficient = s.iter().any(|&x| x < PROCRUSTES_RANK_TOL * smax) || s.len() < k;
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let mut w = &v * u.transpose();
    if row_orthonormality_error(&w) > 1e-10 {
        // keep the well-determined pairs, complete the rest consistently
        let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= PROCRUSTES_RANK_TOL * smax).collect();
        let uk = DMatrix::from_columns(&keep.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
        let vk = DMatrix::from_columns(&keep.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>());
        let uk = if keep.is_empty() { DMatrix::zeros(d, 0) } else { uk };
        let vk = if keep.is_empty() { DMatrix::zeros(k, 0) } else { vk };
        let uf = complete_basis(&uk).columns(0, k).into_owned();
        let vf = complete_basis(&vk);
        w = vf * uf.transpose();
    }
    (w, rank_deficient)
}

fn check_procrustes_shapes(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<()> {
    if source.ncols() != target.ncols() {
        return Err(Error::Shape(format!(
            "X is {:?} and Y is {:?}; column counts differ",
            source.shape(),
            target.shape()
        )));
    }
    if target.nrows() > source.nrows() {
        return Err(Error::Shape(format!(
            "latent dimension {} exceeds feature dimension {}",
            target.nrows(),
            source.nrows()
        )));
    }
    if !all_finite(source) || !all_finite(target) {
        return Err(Error::NonFinite("Procrustes input".into()));
    }
    Ok(())
}

/// Closed-form Procrustes step `W = V Uᵀ` with `XYᵀ = U Σ Vᵀ`.
///
/// This maximizes `tr(W XYᵀ)`. It minimizes `‖Y − W X‖_F` exactly only
/// when `‖W X‖_F` does not depend on `W` (e.g. `k = d`); see
/// [`orthogonal_procrustes`] for the exact minimizer.
pub fn procrustes_closed_form(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<ProcrustesSolution> {
    check_procrustes_shapes(source, target)?;
    let (w, rank_deficient) = polar_factor(&(source * target.transpose()));
    Ok(ProcrustesSolution {
        w: ProjectionMatrix::new(w)?,
        rank_deficient,
        refine_iterations: 0,
    })
}

/// Minimizes `‖Y − W X‖_F²` over row-orthonormal `W` (k × d).
///
/// Runs majorize–minimize steps: with `S = XXᵀ` and `L ≥ λ_max(S)`, the
/// objective is bounded above by a function linear in `W` whose maximizer is
/// again a polar factor, of `XYᵀ + (L I − S) W_tᵀ`. The objective never
/// increases along the way. The problem is non-convex when `k < d` and the
/// closed form can itself be a stationary point, so descent is started from
/// the closed form and from [`PROCRUSTES_RESTARTS`] fixed pseudo-random
/// points, and the best end point is returned. Deterministic.
pub fn orthogonal_procrustes(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<ProcrustesSolution> {
    let start = procrustes_closed_form(source, target)?;
    let rank_deficient = start.rank_deficient;
    let mut best = refine_procrustes(source, target, start.w.into_inner(), rank_deficient)?;
    let (k, d) = (target.nrows(), source.nrows());
    if k == d || source.ncols() == 0 {
        return Ok(best);
    }
    let mut best_obj = procrustes_objective(best.w.matrix(), source, target);
    let mut rng = ChaCha8Rng::seed_from_u64(PROCRUSTES_RESTART_SEED);
    for _ in 0..PROCRUSTES_RESTARTS {
        let g = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        let w0 = g.qr().q().columns(0, k).transpose();
        let cand = refine_procrustes(source, target, w0, rank_deficient)?;
        let obj = procrustes_objective(cand.w.matrix(), source, target);
        if obj < best_obj {
            best = cand;
            best_obj = obj;
        }
    }
    Ok(best)
}

/// Majorize–minimize refinement of a row-orthonormal starting point.
pub fn refine_procrustes(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    w0: DMatrix<f64>,
    rank_deficient: bool,
) -> Result<ProcrustesSolution> {
    refine_procrustes_capped(source, target, w0, rank_deficient, REFINE_MAX_ITER)
}

pub(crate) fn refine_procrustes_capped(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    w0: DMatrix<f64>,
    rank_deficient: bool,
    max_iter: usize,
) -> Result<ProcrustesSolution> {
    check_procrustes_shapes(source, target)?;
    let (k, d) = (target.nrows(), source.nrows());
    if k == d || source.ncols() == 0 {
        // ‖W X‖ is constant over orthogonal W; the polar factor is exact
        return Ok(ProcrustesSolution {
            w: ProjectionMatrix::new(w0)?,
            rank_deficient,
            refine_iterations: 0,
        });
    }
    let s = source * source.transpose();
    let lipschitz = s.symmetric_eigenvalues().max().max(0.0);
    let shift = DMatrix::<f64>::identity(d, d) * lipschitz - &s;
    let cross = source * target.transpose();
    let mut w = w0;
    let mut obj = procrustes_objective(&w, source, target);
    let mut iterations = 0;
    while iterations < max_iter {
        let m = &cross + &shift * w.transpose();
        let (next, _) = polar_factor(&m);
        let next_obj = procrustes_objective(&next, source, target);
        iterations += 1;
        if next_obj > obj {
            // rounding only; the surrogate guarantees descent
            break;
        }
        let step = (&next - &w).norm();
        w = next;
        obj = next_obj;
        if step < REFINE_STEP_TOL {
            break;
        }
    }
    Ok(ProcrustesSolution {
        w: ProjectionMatrix::new(w)?,
        rank_deficient,
        refine_iterations: iterations,
    })
}

/// `Σ_c ‖L(:, c)‖₂`.
pub fn l21_norm(l: &DMatrix<f64>) -> f64 {
    l.column_iter().map(|c| c.norm()).sum()
}

/// Proximal map of `eta·‖·‖_{2,1}`: each column shrinks toward zero by
/// `eta` in Euclidean norm and vanishes when its norm is at most `eta`.
pub fn l21_prox(d: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    assert!(eta.is_finite() && eta >= 0.0, "l21 weight must be finite and ≥ 0");
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > eta {
            col *= (norm - eta) / norm;
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// `sign(q)·max(|q| − eta, 0)`.
#[inline]
pub fn shrink_scalar(q: f64, eta: f64) -> f64 {
    q.signum() * (q.abs() - eta).max(0.0)
}

/// Containers the elementwise shrinkage operator applies to.
pub trait SoftThreshold: Sized {
    fn soft_threshold(&self, eta: f64) -> Self;
}

impl SoftThreshold for DMatrix<f64> {
    fn soft_threshold(&self, eta: f64) -> Self {
        self.map(|q| shrink_scalar(q, eta))
    }
}

impl SoftThreshold for Tensor3 {
    fn soft_threshold(&self, eta: f64) -> Self {
        self.map(|q| shrink_scalar(q, eta))
    }
}

/// Elementwise soft threshold of a matrix or tensor.
pub fn soft_threshold<T: SoftThreshold>(x: &T, eta: f64) -> T {
    assert!(eta.is_finite() && eta >= 0.0, "threshold must be finite and ≥ 0");
    x.soft_threshold(eta)
}

/// Solves `M G D + G = C` for `G`, where `D = diag(present)`.
///
/// Because `D` is a 0/1 diagonal the equation splits by column: a present
/// column solves `(M + I) g_j = c_j`, a missing column is `g_j = c_j`. `M`
/// must be symmetric positive semidefinite so that `M + I` admits a Cholesky
/// factorization, which is computed once and shared by all columns.
pub fn graph_update_solve(m: &DMatrix<f64>, present: &[bool], c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || c.shape() != (n, n) || present.len() != n {
        return Err(Error::Shape(format!(
            "graph solve with M {:?}, C {:?}, mask length {}",
            m.shape(),
            c.shape(),
            present.len()
        )));
    }
    if !all_finite(m) || !all_finite(c) {
        return Err(Error::NonFinite("graph solve input".into()));
    }
    let cols: Vec<usize> = (0..n).filter(|&j| present[j]).collect();
    let mut g = c.clone();
    if cols.is_empty() {
        return Ok(g);
    }
    let system = m + DMatrix::<f64>::identity(n, n);
    let chol = Cholesky::new(system).ok_or_else(|| Error::Consistency("M + I is not positive definite".into()))?;
    let rhs = c.select_columns(&cols);
    let sol = chol.solve(&rhs);
    for (idx, &j) in cols.iter().enumerate() {
        g.set_column(j, &sol.column(idx));
    }
    Ok(g)
}
