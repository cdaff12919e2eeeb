//! Synthesis of Bellman-inequality constraint rows from data.
//!
//! Under the generalized quadratic parametrization, one Bellman inequality
//! at `(x, u, w)` is the linear constraint `ρᵀ θ ≤ ℓ(x, u)` in the decision
//! vector `θ = [hv Q; Q_ℓ; Q_c]`, where the feature vector stacks
//!
//! ```text
//! ρ(x, u, x⁺, w) = [ hv_weighted([x;u][x;u]ᵀ - γ [x⁺;w][x⁺;w]ᵀ) ;
//!                    2 ([x;u] - γ [x⁺;w]) ;
//!                    1 - γ ]
//! ```
//!
//! so that `ρᵀ θ(q) = q(x, u) - γ q(x⁺, w)` identically. The factor 2 on the
//! linear block mirrors the `2 zᵀ Q_ℓ` term of the parametrization; the
//! off-diagonal doubling lives inside `hv_weighted`, keeping the decision
//! side unscaled.
//!
//! Three ways to the expectation of `ρ` over the noise:
//!
//! * [`expected_rho`] — exact, from the known first two moments;
//! * [`reinit_estimator`] — Monte Carlo over repeated transitions at the same
//!   `(x, u)`, the classical route that needs reinitialization;
//! * [`synthesize_constraint`] — no reinitialization: a linear combination
//!   `α` of recorded data columns reproduces `(x, u, 1, w)` exactly, and the
//!   resulting estimator behaves like a single transition of the same system
//!   with noise covariance inflated by `|α|₂²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::model::{AffineSystem, Dataset, NoiseSampler, StageCost};
use crate::numerics::{hv_weighted, min_norm_least_squares, SymMatrix};
use crate::{Error, Result};

/// Residual bound for the data-combination solve in [`solve_alpha`].
const ALPHA_RESIDUAL_TOL: f64 = 1e-9;

/// Number of free parameters of a generalized quadratic over
/// `(x, u) ∈ ℝⁿ x ℝᵐ`: `(n+m+1)(n+m+2)/2`.
pub const fn feature_dim(n: usize, m: usize) -> usize {
    (n + m + 1) * (n + m + 2) / 2
}

/// Evaluation features of a quadratic: `[hv_weighted(z zᵀ); 2 z; 1]` with
/// `z = [x; u]`, so `features(x, u) · θ(q) = q(x, u)`.
pub fn features(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let z = stack_vec(x, u);
    let zz = SymMatrix::from_fn(z.len(), |i, j| z[i] * z[j]);
    let mut out = Vec::with_capacity(feature_dim(x.len(), u.len()));
    out.extend_from_slice(hv_weighted(&zz).as_slice());
    out.extend((2.0 * &z).as_slice().iter().copied());
    out.push(1.0);
    DVector::from_vec(out)
}

/// The Bellman-inequality feature vector for an observed (or hypothesized)
/// transition `x → x⁺` under probe action `w`.
pub fn build_rho(
    x: &DVector<f64>,
    u: &DVector<f64>,
    xplus: &DVector<f64>,
    w: &DVector<f64>,
    gamma: f64,
) -> DVector<f64> {
    let z = stack_vec(x, u);
    let zp = stack_vec(xplus, w);
    let diff = SymMatrix::from_fn(z.len(), |i, j| z[i] * z[j] - gamma * zp[i] * zp[j]);
    let mut out = Vec::with_capacity(feature_dim(x.len(), u.len()));
    out.extend_from_slice(hv_weighted(&diff).as_slice());
    out.extend((2.0 * (&z - gamma * &zp)).as_slice().iter().copied());
    out.push(1.0 - gamma);
    DVector::from_vec(out)
}

/// Closed-form `E[ρ]` under the system's noise moments.
pub fn expected_rho(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> DVector<f64> {
    expected_rho_scaled(sys, x, u, w, 1.0)
}

/// Closed-form `E[ρ]` with the noise covariance multiplied by `cov_scale`;
/// this is the mean of the synthesized estimator when the combination has
/// `|α|₂² = cov_scale`.
pub fn expected_rho_scaled(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    cov_scale: f64,
) -> DVector<f64> {
    let n = sys.n();
    let gamma = sys.gamma();
    let z = stack_vec(x, u);
    let mean = sys.mean_successor(x, u);
    let zp_mean = stack_vec(&mean, w);
    // E[[x⁺; w][x⁺; w]ᵀ] = zp_mean zp_meanᵀ + [[cov_scale·Σ, 0], [0, 0]]
    let diff = SymMatrix::from_fn(z.len(), |i, j| {
        let mut second = zp_mean[i] * zp_mean[j];
        if i < n && j < n {
            second += cov_scale * sys.sigma().get(i, j);
        }
        z[i] * z[j] - gamma * second
    });
    let mut out = Vec::with_capacity(feature_dim(x.len(), u.len()));
    out.extend_from_slice(hv_weighted(&diff).as_slice());
    out.extend((2.0 * (&z - gamma * &zp_mean)).as_slice().iter().copied());
    out.push(1.0 - gamma);
    DVector::from_vec(out)
}

/// Reinitialization estimator: the mean of `count` single-transition feature
/// vectors drawn at the same `(x, u)`. Unbiased for [`expected_rho`], with
/// variance shrinking as `1/count`.
pub fn reinit_estimator(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    count: usize,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if count == 0 {
        return Err(Error::Invalid(
            "reinit estimator needs at least one draw".into(),
        ));
    }
    let sampler = NoiseSampler::for_system(sys)?;
    let det_next = sys.a() * x + sys.b() * u + sys.c();
    let mut acc = DVector::zeros(feature_dim(x.len(), u.len()));
    for _ in 0..count {
        let xplus = &det_next + sampler.sample(rng);
        acc += build_rho(x, u, &xplus, w, sys.gamma());
    }
    Ok(acc / count as f64)
}

/// A data combination reproducing a target `(x, u, 1, w)`.
#[derive(Debug, Clone)]
pub struct AlphaSolution {
    /// Least-norm coefficients over the data columns.
    pub alpha: DVector<f64>,
    /// `|α|₂²`, the covariance inflation of the synthesized estimator.
    pub norm_sq: f64,
    /// Residual of the stacked solve.
    pub residual: f64,
}

fn stacked_data(ds: &Dataset, w_probes: &DMatrix<f64>) -> DMatrix<f64> {
    let d = ds.len();
    let rows = ds.n() + 2 * ds.m() + 1;
    let mut stacked = DMatrix::zeros(rows, d);
    stacked.view_mut((0, 0), (ds.n(), d)).copy_from(ds.x());
    stacked.view_mut((ds.n(), 0), (ds.m(), d)).copy_from(ds.u());
    stacked.view_mut((ds.n() + ds.m(), 0), (1, d)).fill(1.0);
    stacked
        .view_mut((ds.n() + ds.m() + 1, 0), (ds.m(), d))
        .copy_from(w_probes);
    stacked
}

fn stacked_target(x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let mut rhs = Vec::with_capacity(x.len() + 2 * u.len() + 1);
    rhs.extend_from_slice(x.as_slice());
    rhs.extend_from_slice(u.as_slice());
    rhs.push(1.0);
    rhs.extend_from_slice(w.as_slice());
    DVector::from_vec(rhs)
}

/// Least-norm `α` with `[X; U; 1ᵀ; W] α = [x; u; 1; w]`.
///
/// Requires the rank condition on the stacked data; among all solutions, the
/// least-norm one minimizes `|α|₂²` and hence the covariance inflation of
/// the synthesized estimator.
pub fn solve_alpha(
    ds: &Dataset,
    w_probes: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    rank_tol: f64,
) -> Result<AlphaSolution> {
    if x.len() != ds.n() || u.len() != ds.m() || w.len() != ds.m() {
        return Err(Error::Dimension(
            "target dimensions disagree with the dataset".into(),
        ));
    }
    let (rank, required) = crate::excitation::rank_condition_details(ds, w_probes, rank_tol)?;
    if rank != required {
        return Err(Error::RankCondition {
            found: rank,
            required,
        });
    }
    let stacked = stacked_data(ds, w_probes);
    let rhs = stacked_target(x, u, w);
    let (alpha, residual) = min_norm_least_squares(&stacked, &rhs)?;
    if residual > ALPHA_RESIDUAL_TOL * (1.0 + rhs.norm()) {
        return Err(Error::Inconsistent { residual });
    }
    Ok(AlphaSolution {
        norm_sq: alpha.norm_squared(),
        alpha,
        residual,
    })
}

/// One Bellman-inequality row `ρᵀ θ ≤ rhs` with its provenance.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub rho: DVector<f64>,
    pub rhs: f64,
    pub meta: RowMeta,
}

/// Target point and combination weight behind a row.
#[derive(Debug, Clone)]
pub struct RowMeta {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    /// `|α|₂²` when the row was synthesized from data; `None` for exact or
    /// externally supplied rows.
    pub alpha_norm_sq: Option<f64>,
}

/// Where the right-hand side `ℓ(x, u)` of a row comes from.
#[derive(Debug, Clone, Copy)]
pub enum RhsSource<'a> {
    /// Evaluate a known stage cost at the target.
    Cost(&'a StageCost),
    /// Model-free override: a directly observed or externally computed value.
    Given(f64),
}

impl RhsSource<'_> {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self {
            RhsSource::Cost(cost) => cost.eval(x, u),
            RhsSource::Given(v) => *v,
        }
    }
}

/// Synthesizes the estimator row `ρ̄` at `(x, u, w)` from recorded data:
/// `ρ̄ = ρ(x, u, X⁺α, w)` for the least-norm `α` of [`solve_alpha`].
///
/// `X⁺α = A x + B u + c + Ωα`, so with deterministic data the row is exact;
/// with noisy data it has the distribution of a single transition with noise
/// `(μ, |α|₂² Σ)`. `|α|₂²` is recorded in the row metadata.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_constraint(
    ds: &Dataset,
    w_probes: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    gamma: f64,
    rhs: RhsSource<'_>,
    rank_tol: f64,
) -> Result<ConstraintRow> {
    let alpha = solve_alpha(ds, w_probes, x, u, w, rank_tol)?;
    Ok(row_from_alpha(
        ds,
        x,
        u,
        w,
        gamma,
        rhs,
        &alpha.alpha,
        alpha.norm_sq,
    ))
}

#[allow(clippy::too_many_arguments)]
fn row_from_alpha(
    ds: &Dataset,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    gamma: f64,
    rhs: RhsSource<'_>,
    alpha: &DVector<f64>,
    norm_sq: f64,
) -> ConstraintRow {
    let xplus = ds.xplus() * alpha;
    ConstraintRow {
        rho: build_rho(x, u, &xplus, w, gamma),
        rhs: rhs.value(x, u),
        meta: RowMeta {
            x: x.clone(),
            u: u.clone(),
            w: w.clone(),
            alpha_norm_sq: Some(norm_sq),
        },
    }
}

/// A target point `(x, u, w)` for one Bellman inequality.
#[derive(Debug, Clone)]
pub struct Target {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
}

/// How [`synthesize_batch`] treats the spread of `|α|₂²` across rows.
#[derive(Debug, Clone, Copy)]
pub enum BatchMode {
    /// Keep every row with its individual `|α|₂²`; the batch is flagged
    /// mixed-covariance when the relative spread exceeds `spread_tol`.
    Free { spread_tol: f64 },
    /// Force a common `|α|₂²` across rows. Rows below the largest norm are
    /// lifted exactly by adding a null-space component of the stacked data
    /// matrix (which leaves the reproduced target untouched); when the null
    /// space is trivial, rows outside `spread_tol` are reported as failures.
    EqualizeNorm { spread_tol: f64 },
}

/// Default relative spread of `|α|₂²` tolerated before a batch counts as
/// mixed-covariance.
pub const DEFAULT_SPREAD_TOL: f64 = 0.05;

/// One unusable target inside a batch, with the reason.
#[derive(Debug, Clone)]
pub struct RowFailure {
    pub index: usize,
    pub reason: String,
}

/// Outcome of a batch synthesis.
#[derive(Debug)]
pub struct SynthesizedBatch {
    pub rows: Vec<ConstraintRow>,
    /// `|α|₂²` per returned row (same order).
    pub norm_sqs: Vec<f64>,
    /// Relative spread `(max - min) / max` of `|α|₂²` across returned rows.
    pub spread: f64,
    /// Whether all returned rows share `|α|₂²` within the configured
    /// tolerance.
    pub equalized: bool,
    /// Set when rows carry visibly different `|α|₂²`; an LP built from such
    /// a batch mixes fixed points with different constants.
    pub mixed_covariance: bool,
    pub failures: Vec<RowFailure>,
}

/// Synthesizes one row per target.
///
/// In [`BatchMode::EqualizeNorm`] the batch leaves with a common `|α|₂²`
/// whenever the dataset is wide enough (`d > n + 2m + 1`) for null-space
/// lifting; deterministic data makes the mode irrelevant since every row is
/// exact regardless of `α`.
pub fn synthesize_batch(
    ds: &Dataset,
    w_probes: &DMatrix<f64>,
    targets: &[Target],
    mode: BatchMode,
    gamma: f64,
    rhs: RhsSource<'_>,
    rank_tol: f64,
) -> Result<SynthesizedBatch> {
    if targets.is_empty() {
        return Err(Error::Invalid(
            "batch synthesis needs at least one target".into(),
        ));
    }
    let (rank, required) = crate::excitation::rank_condition_details(ds, w_probes, rank_tol)?;
    if rank != required {
        return Err(Error::RankCondition {
            found: rank,
            required,
        });
    }

    let mut alphas = Vec::with_capacity(targets.len());
    let mut failures = Vec::new();
    for (index, t) in targets.iter().enumerate() {
        match solve_alpha(ds, w_probes, &t.x, &t.u, &t.w, rank_tol) {
            Ok(sol) => alphas.push((index, sol)),
            Err(e) => failures.push(RowFailure {
                index,
                reason: e.to_string(),
            }),
        }
    }
    if alphas.is_empty() {
        return Err(Error::Invalid(
            "no batch target admits a data combination".into(),
        ));
    }

    let spread_tol = match mode {
        BatchMode::Free { spread_tol } | BatchMode::EqualizeNorm { spread_tol } => spread_tol,
    };

    if let BatchMode::EqualizeNorm { .. } = mode {
        let max_sq = alphas
            .iter()
            .map(|(_, s)| s.norm_sq)
            .fold(f64::MIN, f64::max);
        let null_dir = null_direction(ds, w_probes, rank_tol)?;
        for (index, sol) in alphas.iter_mut() {
            let deficit = max_sq - sol.norm_sq;
            if deficit <= 0.0 {
                continue;
            }
            match null_dir.as_ref() {
                // the least-norm solution is orthogonal to the null space,
                // so adding sqrt(deficit) of a unit null vector lands the
                // norm exactly on max_sq
                Some(dir) => {
                    sol.alpha += dir * deficit.sqrt();
                    sol.norm_sq = sol.alpha.norm_squared();
                }
                None => {
                    let rel = deficit / max_sq;
                    if rel > spread_tol {
                        failures.push(RowFailure {
                            index: *index,
                            reason: format!(
                                "cannot equalize |alpha|^2: deficit {rel:.3e} with trivial null space"
                            ),
                        });
                    }
                }
            }
        }
        let failed: std::collections::HashSet<usize> = failures.iter().map(|f| f.index).collect();
        alphas.retain(|(index, _)| !failed.contains(index));
        if alphas.is_empty() {
            let spread = 1.0;
            return Err(Error::Invalid(format!(
                "equalize-norm failed for every target (spread {spread:.3})"
            )));
        }
    }

    let mut rows = Vec::with_capacity(alphas.len());
    let mut norm_sqs = Vec::with_capacity(alphas.len());
    for (index, sol) in &alphas {
        let t = &targets[*index];
        rows.push(row_from_alpha(
            ds,
            &t.x,
            &t.u,
            &t.w,
            gamma,
            rhs,
            &sol.alpha,
            sol.norm_sq,
        ));
        norm_sqs.push(sol.norm_sq);
    }
    let max = norm_sqs.iter().cloned().fold(f64::MIN, f64::max);
    let min = norm_sqs.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    let equalized = spread <= spread_tol;
    Ok(SynthesizedBatch {
        rows,
        norm_sqs,
        spread,
        equalized,
        mixed_covariance: !equalized,
        failures,
    })
}

// ── Occupancy rows ───────────────────────────────────────────────────

/// Exact constraint rows averaged along the greedy closed loop.
///
/// A finite sampled LP pins the fixed point only when its objective lies in
/// the cone of active constraint rows. Rows are active at the fixed point
/// exactly when the probe `w` is the greedy action at the (conditional mean)
/// successor, and the LP-duality certificate needs those rows along the
/// closed-loop chain started at each objective sample: the feature moments
/// then telescope, `row_t = E[features(z_t)] - γ E[features(z_{t+1})]`, and
/// the discounted sum of rows reproduces the objective.
///
/// Each start `(x, u)` spawns one chain: `x_{t+1} = A x_t + B u_t + c + ξ`,
/// `u_{t+1} = K (A x_t + B u_t + c + μ) + k`. The chain moments stay
/// Gaussian-computable, so every row is exact. `cov_scale` inflates the
/// one-step noise covariance (matching estimators with `|α|₂² = cov_scale`);
/// with `cov_scale = 1` these are the expected rows of the plant itself.
pub fn occupancy_rows(
    sys: &AffineSystem,
    cost: &StageCost,
    policy: &crate::fixedpoint::AffinePolicy,
    starts: &[(DVector<f64>, DVector<f64>)],
    steps: usize,
    cov_scale: f64,
) -> Result<Vec<ConstraintRow>> {
    let n = sys.n();
    let m = sys.m();
    let nm = n + m;
    if policy.gain().nrows() != m || policy.gain().ncols() != n {
        return Err(Error::Dimension(
            "policy shape disagrees with the system".into(),
        ));
    }
    if steps == 0 || starts.is_empty() {
        return Err(Error::Invalid(
            "occupancy rows need at least one start and one step".into(),
        ));
    }
    let gamma = sys.gamma();
    let k_gain = policy.gain();
    let k_off = policy.offset();
    // z = (x, u) chain map: M z + d plus noise entering the x block
    let mut chain_map = DMatrix::zeros(nm, nm);
    chain_map.view_mut((0, 0), (n, n)).copy_from(sys.a());
    chain_map.view_mut((0, n), (n, m)).copy_from(sys.b());
    chain_map
        .view_mut((n, 0), (m, n))
        .copy_from(&(k_gain * sys.a()));
    chain_map
        .view_mut((n, n), (m, m))
        .copy_from(&(k_gain * sys.b()));
    let mut chain_off = DVector::zeros(nm);
    chain_off.rows_mut(0, n).copy_from(&sys.mean_drift());
    chain_off
        .rows_mut(n, m)
        .copy_from(&(k_gain * sys.mean_drift() + k_off));
    let sigma_scaled = sys.sigma().scale(cov_scale);

    let l_mat = SymMatrix::from_matrix(&cost.l_matrix())?;
    let l_vec = cost.l_vector();

    let mut rows = Vec::with_capacity(starts.len() * steps);
    for (x0, u0) in starts {
        if x0.len() != n || u0.len() != m {
            return Err(Error::Dimension(
                "start dimensions disagree with the system".into(),
            ));
        }
        let mut mean = stack_vec(x0, u0);
        let mut cov = SymMatrix::zeros(nm);
        for _ in 0..steps {
            let mean_next = &chain_map * &mean + &chain_off;
            let cov_next = {
                let propagated = chain_map.clone() * cov.to_matrix() * chain_map.transpose();
                SymMatrix::from_fn(nm, |i, j| {
                    let noise = if i < n && j < n {
                        sigma_scaled.get(i, j)
                    } else {
                        0.0
                    };
                    0.5 * (propagated[(i, j)] + propagated[(j, i)]) + noise
                })
            };
            let second = |zeta: &DVector<f64>, z_cov: &SymMatrix| {
                SymMatrix::from_fn(nm, |i, j| zeta[i] * zeta[j] + z_cov.get(i, j))
            };
            let theta_now = second(&mean, &cov);
            let theta_next = second(&mean_next, &cov_next);
            let diff = SymMatrix::from_fn(nm, |i, j| {
                theta_now.get(i, j) - gamma * theta_next.get(i, j)
            });
            let mut rho = Vec::with_capacity(feature_dim(n, m));
            rho.extend_from_slice(hv_weighted(&diff).as_slice());
            rho.extend(
                (2.0 * (&mean - gamma * &mean_next))
                    .as_slice()
                    .iter()
                    .copied(),
            );
            rho.push(1.0 - gamma);
            let rhs = l_mat.trace_product(&theta_now) + 2.0 * mean.dot(&l_vec) + cost.lc();
            rows.push(ConstraintRow {
                rho: DVector::from_vec(rho),
                rhs,
                meta: RowMeta {
                    x: mean.rows(0, n).into_owned(),
                    u: mean.rows(n, m).into_owned(),
                    w: mean_next.rows(n, m).into_owned(),
                    alpha_norm_sq: (cov_scale != 1.0).then_some(cov_scale),
                },
            });
            mean = mean_next;
            cov = cov_next;
        }
    }
    Ok(rows)
}

/// Point targets along the deterministic greedy chain
/// (`x_{t+1} = A x_t + B u_t + c + μ`, `u_{t+1} = w_t = policy(x_{t+1})`).
///
/// With zero noise covariance these targets make the synthesized rows active
/// at the fixed point, which is what lets a data-driven LP reproduce the
/// optimal policy exactly.
pub fn occupancy_targets(
    sys: &AffineSystem,
    policy: &crate::fixedpoint::AffinePolicy,
    starts: &[(DVector<f64>, DVector<f64>)],
    steps: usize,
) -> Vec<Target> {
    let mut targets = Vec::with_capacity(starts.len() * steps);
    for (x0, u0) in starts {
        let mut x = x0.clone();
        let mut u = u0.clone();
        for _ in 0..steps {
            let x_next = sys.mean_successor(&x, &u);
            let w = policy.eval(&x_next);
            targets.push(Target {
                x: x.clone(),
                u: u.clone(),
                w: w.clone(),
            });
            x = x_next;
            u = w;
        }
    }
    targets
}

/// A unit vector in the null space of the stacked data matrix, or `None`
/// when the null space is trivial (`d == n + 2m + 1`).
///
/// The thin SVD only exposes a row-space basis, so the null direction is
/// found by projecting coordinate vectors off the row space.
fn null_direction(
    ds: &Dataset,
    w_probes: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<Option<DVector<f64>>> {
    let stacked = stacked_data(ds, w_probes);
    let d = stacked.ncols();
    let svd = stacked
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or(Error::Svd)?;
    let sv = &svd.singular_values;
    let max_sv = sv.max();
    let rank = sv.iter().filter(|&&s| s > rank_tol * max_sv).count();
    if rank >= d {
        return Ok(None);
    }
    let v_t = svd.v_t.as_ref().ok_or(Error::Svd)?;
    for k in 0..d {
        let e = DVector::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 });
        // remove the row-space component spanned by the leading rows of v_t
        let mut residue = e.clone();
        for r in 0..rank {
            let basis_vec = v_t.row(r).transpose();
            residue -= &basis_vec * basis_vec.dot(&e);
        }
        let norm = residue.norm();
        if norm > 1e-6 {
            return Ok(Some(residue / norm));
        }
    }
    Ok(None)
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(a.len() + b.len());
    z.rows_mut(0, a.len()).copy_from(a);
    z.rows_mut(a.len(), b.len()).copy_from(b);
    z
}
