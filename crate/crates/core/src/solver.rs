//! ADMM solver for joint projection learning and low-rank + sparse tensor
//! graph recovery on incomplete multi-view data.
//!
//! Each iteration updates, in order: the per-view projections `W`, graphs
//! `G`, and ℓ2,1 residuals `E` (independent across views); then the stacked
//! graph tensor `𝒢`, the intrinsic low-rank tensor `ℬ`, the sparse noise
//! tensor `𝒫`, and finally the multipliers `J₁`, `𝒥₂` and the penalty `ρ`.
//!
//! Tensor layout: `𝒢`, `ℬ`, `𝒫` and `𝒥₂` are `n × m × n`, view `v`'s graph
//! occupying lateral slice `v`; the FFT runs along the third mode.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::IncompleteView;
use crate::error::{Error, Result};
use crate::proximal::{
    graph_update_solve, l21_norm, l21_prox, procrustes_closed_form, procrustes_objective, refine_procrustes_capped,
    soft_threshold, ProjectionMatrix, PROCRUSTES_RANK_TOL,
};
use crate::tensor3::{tnn, tubal_shrink, Tensor3};

/// Majorize–minimize steps per W update when [`WUpdate::Exact`] is selected.
const EXACT_W_STEPS: usize = 50;

/// Model variant: which of projection learning and tensor decomposition are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Projection and low-rank + sparse decomposition.
    Full,
    /// No projection: `W = I`, graphs learned on raw features.
    N,
    /// No sparse tensor: `𝒫 ≡ 0`, TNN applied to `𝒢` directly.
    B,
    /// Neither.
    O,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::N, Variant::B, Variant::O];

    pub fn learns_projection(self) -> bool {
        matches!(self, Variant::Full | Variant::B)
    }

    pub fn decomposes(self) -> bool {
        matches!(self, Variant::Full | Variant::N)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::N => "n",
            Variant::B => "b",
            Variant::O => "o",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "n" => Ok(Variant::N),
            "b" => Ok(Variant::B),
            "o" => Ok(Variant::O),
            other => Err(Error::Config(format!("unknown variant {other:?} (full|n|b|o)"))),
        }
    }
}

/// How the TNN weight `λ` maps onto the Fourier-domain threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TnnScale {
    /// TNN averaged over the `n` Fourier slices: threshold `λ/ρ`.
    Normalized,
    /// TNN summed over the Fourier slices: threshold `n·λ/ρ`.
    Unnormalized,
}

/// Rule used for the projection update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WUpdate {
    /// `W = V Uᵀ` from the SVD of `X Yᵀ`, where `X` is the self-expression
    /// residual of the raw features and `Y` the target `E − J₁/ρ`.
    ClosedForm,
    /// Majorize–minimize descent on `‖Y − W X‖²`, warm-started from the
    /// better of the previous `W` and the closed form. Never increases the
    /// subproblem objective.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WInit {
    /// Leading `k` left singular vectors of the observed data.
    LeadingSubspace,
    /// Random row-orthonormal matrix from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the tensor nuclear norm.
    pub lambda: f64,
    /// Weight of the sparse tensor ℓ1 norm.
    pub theta: f64,
    /// Latent dimension.
    pub k: usize,
    /// Penalty growth factor, > 1.
    pub alpha: f64,
    pub rho0: f64,
    pub rho_max: f64,
    /// Stopping tolerance on the primal residuals.
    pub eps: f64,
    pub max_iter: usize,
    pub tnn_scale: TnnScale,
    pub w_update: WUpdate,
    pub w_init: WInit,
}

impl HyperParams {
    pub fn new(lambda: f64, theta: f64, k: usize) -> Self {
        Self {
            lambda,
            theta,
            k,
            alpha: 1.3,
            rho0: 1e-3,
            rho_max: 1e6,
            eps: 1e-5,
            max_iter: 300,
            tnn_scale: TnnScale::Normalized,
            w_update: WUpdate::ClosedForm,
            w_init: WInit::LeadingSubspace,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.lambda) || !positive(self.theta) {
            return Err(Error::Config(format!(
                "λ = {} and θ = {} must be positive",
                self.lambda, self.theta
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("latent dimension k must be ≥ 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::Config(format!("α = {} must exceed 1", self.alpha)));
        }
        if !positive(self.rho0) || !positive(self.rho_max) || self.rho_max < self.rho0 {
            return Err(Error::Config(format!(
                "need 0 < ρ₀ ≤ ρ_max, got {} and {}",
                self.rho0, self.rho_max
            )));
        }
        if !positive(self.eps) {
            return Err(Error::Config(format!("ε = {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Primal residuals of one iteration plus the penalty it used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    /// max over views of `‖W X_o − W X_o A G Aᵀ − E‖_∞`
    pub r1: f64,
    /// `‖𝒢 − ℬ − 𝒫‖_∞`
    pub r2: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: Vec<ProjectionMatrix>,
    /// `n × n` complete graph per view.
    pub g: Vec<DMatrix<f64>>,
    /// `k × n_v` residual per view.
    pub e: Vec<DMatrix<f64>>,
    pub j1: Vec<DMatrix<f64>>,
    pub g_t: Tensor3,
    pub b_t: Tensor3,
    pub p_t: Tensor3,
    pub j2_t: Tensor3,
    pub rho: f64,
    pub iter: usize,
    pub residual_trace: Vec<TraceEntry>,
}

/// Symmetric nonnegative affinity averaged over the lateral slices of `ℬ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedGraph(DMatrix<f64>);

impl FusedGraph {
    /// `H = (1/m) Σ_v (|B^v| + |B^v|ᵀ)/2` over lateral slices `B^v`.
    pub fn from_intrinsic(b: &Tensor3) -> Self {
        let (n, m, n3) = b.shape();
        assert_eq!(n, n3, "intrinsic tensor must be n × m × n");
        let mut mean_abs = DMatrix::<f64>::zeros(n, n);
        for v in 0..m {
            mean_abs += b.lateral_slice(v).abs();
        }
        mean_abs /= m.max(1) as f64;
        // (a + aᵀ)/2 evaluated entrywise is bitwise symmetric
        Self(DMatrix::from_fn(n, n, |i, j| {
            (mean_abs[(i, j)] + mean_abs[(j, i)]) / 2.0
        }))
    }

    /// Wraps a matrix that must be exactly symmetric with nonnegative entries.
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Shape(format!("affinity must be square, got {:?}", h.shape())));
        }
        if h.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Data("affinity entries must be finite and nonnegative".into()));
        }
        if h != h.transpose() {
            return Err(Error::Data("affinity must be symmetric".into()));
        }
        Ok(Self(h))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub state: SolverState,
    pub h: FusedGraph,
    /// False when `max_iter` was reached first; the graph is still usable.
    pub converged: bool,
}

/// Binds views, hyper-parameters and variant; owns no iteration state.
pub struct Solver<'a> {
    views: &'a [IncompleteView],
    hp: HyperParams,
    variant: Variant,
    n: usize,
    present: Vec<Vec<bool>>,
}

impl<'a> Solver<'a> {
    pub fn new(views: &'a [IncompleteView], hp: HyperParams, variant: Variant) -> Result<Self> {
        hp.validate()?;
        let Some(first) = views.first() else {
            return Err(Error::Data("no views".into()));
        };
        let n = first.n;
        for (v, view) in views.iter().enumerate() {
            if view.n != n || view.x_o.ncols() != view.index.len() {
                return Err(Error::Shape(format!("view {v} is inconsistent with n = {n}")));
            }
            if view.index.windows(2).any(|w| w[0] >= w[1]) || view.index.last().is_some_and(|&j| j >= n) {
                return Err(Error::Data(format!(
                    "view {v} index is not strictly increasing within 0..{n}"
                )));
            }
            if variant.learns_projection() && hp.k > view.d() {
                return Err(Error::Config(format!(
                    "latent dimension k = {} exceeds view {v} dimension {}",
                    hp.k,
                    view.d()
                )));
            }
        }
        let present = views.iter().map(IncompleteView::present).collect();
        Ok(Self {
            views,
            hp,
            variant,
            n,
            present,
        })
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    fn m(&self) -> usize {
        self.views.len()
    }

    /// All variables zero, `ρ = ρ₀`, projections per [`WInit`].
    pub fn init_state(&self) -> Result<SolverState> {
        let (n, m) = (self.n, self.m());
        let w = self
            .views
            .iter()
            .enumerate()
            .map(|(v, view)| {
                if !self.variant.learns_projection() {
                    return Ok(ProjectionMatrix::identity(view.d()));
                }
                match self.hp.w_init {
                    WInit::LeadingSubspace => ProjectionMatrix::leading_subspace(&view.x_o, self.hp.k),
                    WInit::Random(seed) => random_projection(self.hp.k, view.d(), seed.wrapping_add(v as u64)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let e: Vec<DMatrix<f64>> = self
            .views
            .iter()
            .zip(&w)
            .map(|(view, w)| DMatrix::zeros(w.k(), view.n_observed()))
            .collect();
        Ok(SolverState {
            w,
            g: vec![DMatrix::zeros(n, n); m],
            j1: e.clone(),
            e,
            g_t: Tensor3::zeros(n, m, n),
            b_t: Tensor3::zeros(n, m, n),
            p_t: Tensor3::zeros(n, m, n),
            j2_t: Tensor3::zeros(n, m, n),
            rho: self.hp.rho0,
            iter: 0,
            residual_trace: Vec::new(),
        })
    }

    /// `G(index, index)`: the block of a complete graph acting on observed samples.
    fn observed_block(&self, v: usize, g: &DMatrix<f64>) -> DMatrix<f64> {
        let idx = &self.views[v].index;
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])])
    }

    /// `W X_o − W X_o A G Aᵀ` for view `v`.
    fn reconstruction_gap(&self, v: usize, w: &ProjectionMatrix, g: &DMatrix<f64>) -> DMatrix<f64> {
        let y = w.matrix() * &self.views[v].x_o;
        &y - &y * self.observed_block(v, g)
    }

    /// Projection subproblem objective `‖W X_o − W X_o A G Aᵀ − E + J₁/ρ‖²` at `w`.
    pub fn projection_objective(&self, state: &SolverState, v: usize, w: &ProjectionMatrix) -> f64 {
        let (features, target) = self.projection_terms(state, v);
        procrustes_objective(w.matrix(), &features, &target)
    }

    /// Features side `X_o − X_o A G Aᵀ` and target `E − J₁/ρ` of the projection fit.
    fn projection_terms(&self, state: &SolverState, v: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = &self.views[v].x_o;
        let features = x - x * self.observed_block(v, &state.g[v]);
        let target = &state.e[v] - &state.j1[v] / state.rho;
        (features, target)
    }

    pub fn solve_projection(&self, state: &SolverState, v: usize) -> Result<ProjectionMatrix> {
        if !self.variant.learns_projection() {
            return Ok(state.w[v].clone());
        }
        let (features, target) = self.projection_terms(state, v);
        let closed = procrustes_closed_form(&features, &target)?;
        let cross_scale = (&features * target.transpose()).norm();
        let previous = state.w[v].clone();
        match self.hp.w_update {
            WUpdate::ClosedForm => {
                // X Yᵀ = 0 (e.g. the first iteration): every W is optimal for
                // the trace criterion, so the current projection is kept
                if cross_scale < PROCRUSTES_RANK_TOL {
                    Ok(previous)
                } else {
                    Ok(closed.w)
                }
            }
            WUpdate::Exact => {
                let start = if procrustes_objective(closed.w.matrix(), &features, &target)
                    < procrustes_objective(previous.matrix(), &features, &target)
                {
                    closed.w
                } else {
                    previous
                };
                let refined = refine_procrustes_capped(
                    &features,
                    &target,
                    start.into_inner(),
                    closed.rank_deficient,
                    EXACT_W_STEPS,
                )?;
                Ok(refined.w)
            }
        }
    }

    /// Projected data `W X_o`, its fit target `W X_o − E + J₁/ρ` and the
    /// tensor-side target `B^v + P^v − J₂^v/ρ`.
    fn graph_terms(
        &self,
        state: &SolverState,
        v: usize,
        w: &ProjectionMatrix,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let y = w.matrix() * &self.views[v].x_o;
        let fit_target = &y - &state.e[v] + &state.j1[v] / state.rho;
        let tensor_target =
            state.b_t.lateral_slice(v) + state.p_t.lateral_slice(v) - state.j2_t.lateral_slice(v) / state.rho;
        (y, fit_target, tensor_target)
    }

    /// Graph subproblem objective: fit of the projected data through `G`
    /// plus distance of `G` to its tensor-side target.
    pub fn graph_objective(&self, state: &SolverState, v: usize, w: &ProjectionMatrix, g: &DMatrix<f64>) -> f64 {
        let (y, fit_target, tensor_target) = self.graph_terms(state, v, w);
        (fit_target - &y * self.observed_block(v, g)).norm_squared() + (g - tensor_target).norm_squared()
    }

    /// Minimizes the graph subproblem objective in closed form via `M G D + G = C`.
    pub fn solve_graph(&self, state: &SolverState, v: usize, w: &ProjectionMatrix) -> Result<DMatrix<f64>> {
        let (y, fit_target, tensor_target) = self.graph_terms(state, v, w);
        let idx = &self.views[v].index;
        let gram = y.transpose() * &y;
        let cross = y.transpose() * fit_target;
        let n = self.n;
        let mut m_mat = DMatrix::zeros(n, n);
        let mut c = tensor_target;
        for (a, &ja) in idx.iter().enumerate() {
            for (b, &jb) in idx.iter().enumerate() {
                m_mat[(ja, jb)] = gram[(a, b)];
                c[(ja, jb)] += cross[(a, b)];
            }
        }
        graph_update_solve(&m_mat, &self.present[v], &c)
    }

    /// Target of the residual update, `W X_o − W X_o A G Aᵀ + J₁/ρ`.
    fn residual_target(&self, state: &SolverState, v: usize, w: &ProjectionMatrix, g: &DMatrix<f64>) -> DMatrix<f64> {
        self.reconstruction_gap(v, w, g) + &state.j1[v] / state.rho
    }

    /// Residual subproblem objective `‖E‖_{2,1} + ρ/2 ‖E − target‖²` at `e`.
    pub fn residual_objective(
        &self,
        state: &SolverState,
        v: usize,
        w: &ProjectionMatrix,
        g: &DMatrix<f64>,
        e: &DMatrix<f64>,
    ) -> f64 {
        let target = self.residual_target(state, v, w, g);
        l21_norm(e) + 0.5 * state.rho * (e - target).norm_squared()
    }

    pub fn solve_residual(
        &self,
        state: &SolverState,
        v: usize,
        w: &ProjectionMatrix,
        g: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        l21_prox(&self.residual_target(state, v, w, g), 1.0 / state.rho)
    }

    /// Proximal weight applied to `tnn` in the ℬ step.
    fn tnn_weight(&self, rho: f64) -> f64 {
        match self.hp.tnn_scale {
            TnnScale::Normalized => self.hp.lambda / (rho * self.n as f64),
            TnnScale::Unnormalized => self.hp.lambda / rho,
        }
    }

    /// Target of the low-rank update, `𝒢 − 𝒫 + 𝒥₂/ρ` (𝒫 ≡ 0 for variants
    /// without decomposition).
    fn intrinsic_target(&self, state: &SolverState) -> Tensor3 {
        let base = &state.g_t + &state.j2_t.scale(1.0 / state.rho);
        if self.variant.decomposes() {
            &base - &state.p_t
        } else {
            base
        }
    }

    /// Low-rank subproblem objective `τ·tnn(ℬ) + ½‖ℬ − target‖²` at `b`.
    pub fn intrinsic_objective(&self, state: &SolverState, b: &Tensor3) -> f64 {
        let target = self.intrinsic_target(state);
        self.tnn_weight(state.rho) * tnn(b) + 0.5 * (b - &target).frobenius_norm().powi(2)
    }

    pub fn solve_intrinsic(&self, state: &SolverState) -> Result<Tensor3> {
        tubal_shrink(&self.intrinsic_target(state), self.tnn_weight(state.rho))
    }

    /// Target of the sparse update, `𝒢 − ℬ + 𝒥₂/ρ`.
    fn sparse_target(&self, state: &SolverState) -> Tensor3 {
        &(&state.g_t - &state.b_t) + &state.j2_t.scale(1.0 / state.rho)
    }

    /// Sparse subproblem objective `(θ/ρ)‖𝒫‖₁ + ½‖𝒫 − target‖²` at `p`.
    pub fn sparse_objective(&self, state: &SolverState, p: &Tensor3) -> f64 {
        let target = self.sparse_target(state);
        self.hp.theta / state.rho * p.l1_norm() + 0.5 * (p - &target).frobenius_norm().powi(2)
    }

    pub fn solve_sparse(&self, state: &SolverState) -> Tensor3 {
        if self.variant.decomposes() {
            soft_threshold(&self.sparse_target(state), self.hp.theta / state.rho)
        } else {
            Tensor3::zeros(self.n, self.m(), self.n)
        }
    }

    /// Primal residuals `(r1, r2)` of the current state.
    pub fn residuals(&self, state: &SolverState) -> (f64, f64) {
        let r1 = (0..self.m())
            .map(|v| (self.reconstruction_gap(v, &state.w[v], &state.g[v]) - &state.e[v]).amax())
            .fold(0.0, f64::max);
        let r2 = (&(&state.g_t - &state.b_t) - &state.p_t).max_abs();
        (r1, r2)
    }

    /// One full ADMM iteration; returns the residuals it recorded.
    pub fn iterate(&self, state: &mut SolverState) -> Result<TraceEntry> {
        let iter = state.iter + 1;
        let numeric = |e: Error| match e {
            Error::NonFinite(msg) | Error::Consistency(msg) => Error::Numeric { iter, msg },
            other => other,
        };

        let per_view: Vec<(ProjectionMatrix, DMatrix<f64>, DMatrix<f64>)> = (0..self.m())
            .into_par_iter()
            .map(|v| {
                let w = self.solve_projection(state, v)?;
                let g = self.solve_graph(state, v, &w)?;
                let e = self.solve_residual(state, v, &w, &g);
                Ok((w, g, e))
            })
            .collect::<Result<_>>()
            .map_err(numeric)?;
        for (v, (w, g, e)) in per_view.into_iter().enumerate() {
            state.w[v] = w;
            state.g[v] = g;
            state.e[v] = e;
        }

        state.g_t = Tensor3::from_lateral_slices(&state.g)?;
        state.b_t = self.solve_intrinsic(state).map_err(numeric)?;
        state.p_t = self.solve_sparse(state);

        let rho = state.rho;
        let mut r1 = 0.0f64;
        for v in 0..self.m() {
            let gap = self.reconstruction_gap(v, &state.w[v], &state.g[v]) - &state.e[v];
            r1 = r1.max(gap.amax());
            state.j1[v] += gap * rho;
        }
        let split = &(&state.g_t - &state.b_t) - &state.p_t;
        let r2 = split.max_abs();
        state.j2_t = &state.j2_t + &split.scale(rho);
        state.rho = (self.hp.alpha * rho).min(self.hp.rho_max);
        state.iter = iter;

        if !(r1.is_finite() && r2.is_finite() && state.j2_t.is_finite() && state.b_t.is_finite()) {
            return Err(Error::Numeric {
                iter,
                msg: "non-finite iterate".into(),
            });
        }
        let entry = TraceEntry { iter, r1, r2, rho };
        state.residual_trace.push(entry);
        Ok(entry)
    }

    /// Iterates until both residuals drop below `ε` or `max_iter` is reached.
    pub fn run(&self) -> Result<SolveOutput> {
        let mut state = self.init_state()?;
        let mut converged = false;
        while state.iter < self.hp.max_iter {
            let entry = self.iterate(&mut state)?;
            if entry.r1.max(entry.r2) < self.hp.eps {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!(
                "solver stopped at max_iter = {} without reaching ε = {}",
                self.hp.max_iter,
                self.hp.eps
            );
        }
        let h = FusedGraph::from_intrinsic(&state.b_t);
        Ok(SolveOutput { state, h, converged })
    }
}

fn random_projection(k: usize, d: usize, seed: u64) -> Result<ProjectionMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    ProjectionMatrix::new(q.columns(0, k).transpose())
}

pub fn init_state(views: &[IncompleteView], hp: &HyperParams, variant: Variant) -> Result<SolverState> {
    Solver::new(views, hp.clone(), variant)?.init_state()
}

pub fn iterate(
    state: &mut SolverState,
    views: &[IncompleteView],
    hp: &HyperParams,
    variant: Variant,
) -> Result<TraceEntry> {
    Solver::new(views, hp.clone(), variant)?.iterate(state)
}

/// Residuals of `state`; the variant does not affect them.
pub fn residuals(state: &SolverState, views: &[IncompleteView]) -> Result<(f64, f64)> {
    let k = state.w.first().map_or(1, ProjectionMatrix::k);
    let hp = HyperParams::new(1.0, 1.0, k);
    Ok(Solver::new(views, hp, Variant::N)?.residuals(state))
}

pub fn run(views: &[IncompleteView], hp: &HyperParams, variant: Variant) -> Result<SolveOutput> {
    Solver::new(views, hp.clone(), variant)?.run()
}

/// Writes `iter,r1,r2,rho,r1_scaled,r2_scaled`, the scaled columns divided by
/// their maximum over the run.
pub fn write_trace_csv(trace: &[TraceEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let max1 = trace.iter().map(|t| t.r1).fold(0.0, f64::max);
    let max2 = trace.iter().map(|t| t.r2).fold(0.0, f64::max);
    let scaled = |x: f64, max: f64| if max > 0.0 { x / max } else { 0.0 };
    let mut out = String::from("iter,r1,r2,rho,r1_scaled,r2_scaled\n");
    for t in trace {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e}\n",
            t.iter,
            t.r1,
            t.r2,
            t.rho,
            scaled(t.r1, max1),
            scaled(t.r2, max2)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
