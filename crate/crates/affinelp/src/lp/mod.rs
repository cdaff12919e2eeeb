//! Finite linear programs over generalized quadratic parametrizations.
//!
//! Three program families share one dense solver:
//!
//! * the **relaxed Q-LP**: `max σᵀθ` over `θ = [hv Q; Q_ℓ; Q_c]` subject to
//!   Bellman-inequality rows `ρᵀθ ≤ ℓ(x, u)` from the [`crate::synthesis`]
//!   module — data-driven, one row per `(x, u, w)` target;
//! * the **value-function LP** over `[hv P; P_ℓ; P_c]` with linearized rows
//!   `v(x) ≤ ℓ(x, u) + γ E[v(x⁺)]` — model-based by nature;
//! * the **v/q LP** with both function families as joint decision variables,
//!   coupling `q(x, u) ≤ ℓ(x, u) + γ E[v(x⁺)]` and `v(x) ≤ q(x, u)`.
//!
//! Finite sampled programs can be unbounded where the infinite-constraint
//! ideal is not; an optional symmetric box `|θᵢ| ≤ M` keeps the solver in
//! business, and a solution that actually touches the box reports
//! [`LpStatus::BoundActive`] so it is never mistaken for the fixed point.

mod simplex;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::fixedpoint::{AffinePolicy, QuadFunction};
use crate::model::{AffineSystem, StageCost};
use crate::numerics::{hv_len, hv_weighted, SymMatrix};
use crate::synthesis::{features, ConstraintRow};
use crate::{Error, Result};
use simplex::{solve_standard_form, RawStatus};

/// Default pivot cap for the simplex.
pub const DEFAULT_MAX_PIVOTS: usize = 100_000;

/// Default symmetric variable box applied when nothing else is requested.
pub const DEFAULT_VAR_BOUND: f64 = 1e6;

/// Slack a solution may violate before the solver refuses to call it
/// feasible.
const FEASIBILITY_TOL: f64 = 1e-8;

/// Fraction of the box bound counted as "touching" it.
const BOUND_ACTIVE_TOL: f64 = 1e-9;

/// One linear inequality `coeffs · θ ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
}

impl From<&ConstraintRow> for LpRow {
    fn from(row: &ConstraintRow) -> Self {
        LpRow {
            coeffs: row.rho.clone(),
            rhs: row.rhs,
        }
    }
}

/// A finite LP `max objective·θ  s.t. rows, |θᵢ| ≤ var_bound`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub rows: Vec<LpRow>,
    pub var_bound: Option<f64>,
    pub decision_dim: usize,
}

impl LpProblem {
    pub fn new(objective: DVector<f64>, rows: Vec<LpRow>, var_bound: Option<f64>) -> Result<Self> {
        let decision_dim = objective.len();
        if decision_dim == 0 {
            return Err(Error::Invalid(
                "lp needs at least one decision variable".into(),
            ));
        }
        crate::numerics::check_finite(objective.as_slice(), "lp objective")?;
        for (i, row) in rows.iter().enumerate() {
            if row.coeffs.len() != decision_dim {
                return Err(Error::Dimension(format!(
                    "lp row {i} has {} coefficients, expected {decision_dim}",
                    row.coeffs.len()
                )));
            }
            crate::numerics::check_finite(row.coeffs.as_slice(), "lp row")?;
            if !row.rhs.is_finite() {
                return Err(Error::Invalid(format!("lp row {i} has a non-finite rhs")));
            }
        }
        if let Some(b) = var_bound {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::Invalid("variable bound must be positive".into()));
            }
        }
        Ok(Self {
            objective,
            rows,
            var_bound,
            decision_dim,
        })
    }
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
    /// Optimal for the boxed problem with at least one box bound tight; the
    /// unboxed program is effectively unbounded in that direction.
    BoundActive,
}

/// Solver output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub theta: Vec<f64>,
    pub status: LpStatus,
    pub objective_value: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }
}

// ── Builders ─────────────────────────────────────────────────────────

/// Empirical-measure objective: `σ = Σᵢ wᵢ features(xᵢ, uᵢ) / Σᵢ wᵢ`, so
/// `σᵀ θ(q)` is the weighted mean of `q` over the samples.
pub fn build_objective(
    samples: &[(DVector<f64>, DVector<f64>)],
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let Some((x0, u0)) = samples.first() else {
        return Err(Error::Invalid("objective needs at least one sample".into()));
    };
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(Error::Dimension(
                "one weight per objective sample required".into(),
            ));
        }
        if w.iter().any(|v| *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Invalid(
                "objective weights must be nonnegative with positive sum".into(),
            ));
        }
    }
    let p = crate::synthesis::feature_dim(x0.len(), u0.len());
    let mut acc = DVector::zeros(p);
    let mut total = 0.0;
    for (i, (x, u)) in samples.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        acc += w * features(x, u);
        total += w;
    }
    Ok(acc / total)
}

/// Assembles the relaxed Q-LP from synthesized or exact constraint rows.
/// Bitwise-duplicate rows are dropped.
pub fn build_relaxed_qlp(
    rows: &[ConstraintRow],
    objective: DVector<f64>,
    var_bound: Option<f64>,
) -> Result<LpProblem> {
    if rows.is_empty() {
        return Err(Error::Invalid(
            "relaxed lp needs at least one constraint row".into(),
        ));
    }
    let mut unique: Vec<LpRow> = Vec::with_capacity(rows.len());
    for row in rows {
        let lp_row = LpRow::from(row);
        if !unique.contains(&lp_row) {
            unique.push(lp_row);
        }
    }
    LpProblem::new(objective, unique, var_bound)
}

/// Decision dimension of the value-function LP: `(n+1)(n+2)/2`.
pub const fn value_feature_dim(n: usize) -> usize {
    hv_len(n) + n + 1
}

/// Features of `v` at a point: `[hv_weighted(x xᵀ); 2x; 1]`.
pub fn value_features(x: &DVector<f64>) -> DVector<f64> {
    let xx = SymMatrix::from_fn(x.len(), |i, j| x[i] * x[j]);
    let mut out = Vec::with_capacity(value_feature_dim(x.len()));
    out.extend_from_slice(hv_weighted(&xx).as_slice());
    out.extend((2.0 * x).as_slice().iter().copied());
    out.push(1.0);
    DVector::from_vec(out)
}

/// Features of `E[v(x⁺)]` for `x⁺ ~ (mean, Σ)`:
/// `[hv_weighted(mean meanᵀ + Σ); 2 mean; 1]`.
pub fn value_expected_features(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    let mean = sys.mean_successor(x, u);
    let second = SymMatrix::from_fn(mean.len(), |i, j| mean[i] * mean[j] + sys.sigma().get(i, j));
    let mut out = Vec::with_capacity(value_feature_dim(x.len()));
    out.extend_from_slice(hv_weighted(&second).as_slice());
    out.extend((2.0 * &mean).as_slice().iter().copied());
    out.push(1.0);
    DVector::from_vec(out)
}

/// The model-based value-function LP on a grid of `(x, u)` points: one row
/// `v(x) - γ E[v(x⁺)] ≤ ℓ(x, u)` per point, objective maximizing the mean of
/// `v` over the grid states.
pub fn build_value_lp(
    sys: &AffineSystem,
    cost: &StageCost,
    grid: &[(DVector<f64>, DVector<f64>)],
    var_bound: Option<f64>,
) -> Result<LpProblem> {
    if grid.is_empty() {
        return Err(Error::Invalid("value lp needs a nonempty grid".into()));
    }
    let pv = value_feature_dim(sys.n());
    let gamma = sys.gamma();
    let mut rows = Vec::with_capacity(grid.len());
    let mut objective = DVector::zeros(pv);
    for (x, u) in grid {
        let coeffs = value_features(x) - gamma * value_expected_features(sys, x, u);
        rows.push(LpRow {
            coeffs,
            rhs: cost.eval(x, u),
        });
        objective += value_features(x);
    }
    objective /= grid.len() as f64;
    LpProblem::new(objective, rows, var_bound)
}

/// The two-family LP with joint decision vector `[θ(q); θ(v)]`: rows
/// `q(x, u) - γ E[v(x⁺)] ≤ ℓ(x, u)` and `v(x) - q(x, u) ≤ 0` per grid point;
/// the objective maximizes the mean of `q` over the grid.
pub fn build_vq_lp(
    sys: &AffineSystem,
    cost: &StageCost,
    grid: &[(DVector<f64>, DVector<f64>)],
    var_bound: Option<f64>,
) -> Result<LpProblem> {
    if grid.is_empty() {
        return Err(Error::Invalid("vq lp needs a nonempty grid".into()));
    }
    let p = crate::synthesis::feature_dim(sys.n(), sys.m());
    let pv = value_feature_dim(sys.n());
    let gamma = sys.gamma();
    let dim = p + pv;
    let mut rows = Vec::with_capacity(2 * grid.len());
    let mut objective = DVector::zeros(dim);
    for (x, u) in grid {
        let f_q = features(x, u);
        let f_v = value_features(x);
        let f_ev = value_expected_features(sys, x, u);

        let mut bellman = DVector::zeros(dim);
        bellman.rows_mut(0, p).copy_from(&f_q);
        bellman.rows_mut(p, pv).copy_from(&(-gamma * &f_ev));
        rows.push(LpRow {
            coeffs: bellman,
            rhs: cost.eval(x, u),
        });

        let mut dominance = DVector::zeros(dim);
        dominance.rows_mut(0, p).copy_from(&(-&f_q));
        dominance.rows_mut(p, pv).copy_from(&f_v);
        rows.push(LpRow {
            coeffs: dominance,
            rhs: 0.0,
        });

        let mut q_part = objective.rows_mut(0, p);
        q_part += &f_q;
    }
    let scale = 1.0 / grid.len() as f64;
    objective *= scale;
    LpProblem::new(objective, rows, var_bound)
}

/// Grid points `(x_t, policy(x_t))` along the mean closed loop from each
/// start state.
///
/// A sampled value-function LP pins the fixed point only when the rows are
/// active there, which requires the grid action to be the greedy one and the
/// grid states to chain under it; with zero process noise this grid makes
/// the recovery exact.
pub fn occupancy_value_grid(
    sys: &AffineSystem,
    policy: &AffinePolicy,
    starts: &[DVector<f64>],
    steps: usize,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut grid = Vec::with_capacity(starts.len() * steps);
    for x0 in starts {
        let mut x = x0.clone();
        for _ in 0..steps {
            let u = policy.eval(&x);
            let next = sys.mean_successor(&x, &u);
            grid.push((x, u));
            x = next;
        }
    }
    grid
}

// ── Solve and extraction ─────────────────────────────────────────────

/// Solves the LP with the dense two-phase simplex.
///
/// Free variables are split into positive and negative parts; box bounds
/// become explicit rows. A reported `Optimal` is re-verified against every
/// row before it is returned.
pub fn solve(lp: &LpProblem) -> Result<LpSolution> {
    solve_with_pivot_cap(lp, DEFAULT_MAX_PIVOTS)
}

pub fn solve_with_pivot_cap(lp: &LpProblem, max_pivots: usize) -> Result<LpSolution> {
    let p = lp.decision_dim;
    let nv = 2 * p;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lp.rows.len() + 2 * p);
    let mut rhs: Vec<f64> = Vec::with_capacity(rows.capacity());
    for row in &lp.rows {
        let mut r = vec![0.0; nv];
        for j in 0..p {
            r[j] = row.coeffs[j];
            r[p + j] = -row.coeffs[j];
        }
        rows.push(r);
        rhs.push(row.rhs);
    }
    if let Some(bound) = lp.var_bound {
        for j in 0..p {
            let mut hi = vec![0.0; nv];
            hi[j] = 1.0;
            hi[p + j] = -1.0;
            rows.push(hi);
            rhs.push(bound);
            let mut lo = vec![0.0; nv];
            lo[j] = -1.0;
            lo[p + j] = 1.0;
            rows.push(lo);
            rhs.push(bound);
        }
    }
    let mut objective = vec![0.0; nv];
    for j in 0..p {
        objective[j] = lp.objective[j];
        objective[p + j] = -lp.objective[j];
    }

    let raw = solve_standard_form(&rows, &rhs, &objective, max_pivots)?;
    let theta: Vec<f64> =
        (0..p).map(|j| raw.values[j] - raw.values[p + j]).collect();
    let status = match raw.status {
        RawStatus::Infeasible => LpStatus::Infeasible,
        RawStatus::Unbounded => LpStatus::Unbounded,
        RawStatus::Optimal => {
            let bound_active = lp.var_bound.is_some_and(|b| {
                theta
                    .iter()
                    .any(|v| v.abs() >= b * (1.0 - BOUND_ACTIVE_TOL) - BOUND_ACTIVE_TOL)
            });
            if bound_active {
                LpStatus::BoundActive
            } else {
                LpStatus::Optimal
            }
        }
    };
    let theta_vec = DVector::from_column_slice(&theta);
    let objective_value = lp.objective.dot(&theta_vec);
    if matches!(status, LpStatus::Optimal | LpStatus::BoundActive) {
        for (i, row) in lp.rows.iter().enumerate() {
            let slack = row.rhs - row.coeffs.dot(&theta_vec);
            if slack < -FEASIBILITY_TOL * (1.0 + row.rhs.abs()) {
                return Err(Error::LpSolver(format!(
                    "solver returned an infeasible point: row {i} violated by {slack:.3e}"
                )));
            }
        }
    }
    Ok(LpSolution {
        theta,
        status,
        objective_value,
        iterations: raw.iterations,
    })
}

/// Reads the Q-function blocks out of a solved `θ` and extracts the greedy
/// affine policy `u = -Q_uu⁻¹ (Q_xuᵀ x + Q_u)`.
///
/// The u-u block must be positive definite; otherwise the LP solution does
/// not determine a policy and an extraction error is raised.
pub fn extract_policy(sol: &LpSolution, n: usize, m: usize) -> Result<AffinePolicy> {
    if !matches!(sol.status, LpStatus::Optimal | LpStatus::BoundActive) {
        return Err(Error::PolicyExtraction(format!(
            "lp status {:?} does not carry a usable solution",
            sol.status
        )));
    }
    let p = crate::synthesis::feature_dim(n, m);
    if sol.theta.len() < p {
        return Err(Error::Dimension(format!(
            "theta has {} entries, policy extraction needs {p}",
            sol.theta.len()
        )));
    }
    let q = QuadFunction::from_theta(&sol.theta[..p], n, m)?;
    q.argmin_policy().map_err(|e| match e {
        Error::NotPositiveDefinite { what } => Error::PolicyExtraction(format!(
            "{what}: the recovered Q-function has no unique minimizer"
        )),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{closed_forms, optimal_policy};
    use crate::numerics::SymMatrix;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn row(coeffs: &[f64], rhs: f64) -> LpRow {
        LpRow {
            coeffs: DVector::from_row_slice(coeffs),
            rhs,
        }
    }

    #[test]
    fn one_dimensional_max() {
        let lp = LpProblem::new(
            DVector::from_row_slice(&[1.0]),
            vec![row(&[1.0], 3.0)],
            None,
        )
        .unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.theta[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective_value, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn hand_lp() {
        // max x + y s.t. x <= 1, y <= 2, x + y <= 2.5
        let lp = LpProblem::new(
            DVector::from_row_slice(&[1.0, 1.0]),
            vec![
                row(&[1.0, 0.0], 1.0),
                row(&[0.0, 1.0], 2.0),
                row(&[1.0, 1.0], 2.5),
            ],
            None,
        )
        .unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LpProblem::new(
            DVector::from_row_slice(&[1.0]),
            vec![row(&[-1.0], 0.0)],
            None,
        )
        .unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_goes_through_phase_one() {
        // max -x s.t. -x <= -2  (x >= 2): optimum x = 2
        let lp = LpProblem::new(
            DVector::from_row_slice(&[-1.0]),
            vec![row(&[-1.0], -2.0)],
            None,
        )
        .unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.theta[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let lp = LpProblem::new(
            DVector::from_row_slice(&[1.0]),
            vec![row(&[1.0], 1.0), row(&[-1.0], -3.0)],
            None,
        )
        .unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn box_bound_reported_active() {
        let lp = LpProblem::new(
            DVector::from_row_slice(&[1.0]),
            vec![row(&[-1.0], 0.0)],
            Some(10.0),
        )
        .unwrap();
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::BoundActive);
        assert_abs_diff_eq!(sol.theta[0], 10.0, epsilon = 1e-8);
    }

    #[test]
    fn objective_single_origin_sample_is_constant_selector() {
        let sigma = build_objective(&[(DVector::zeros(1), DVector::zeros(1))], None).unwrap();
        assert_eq!(sigma.len(), 6);
        assert_abs_diff_eq!(sigma[5], 1.0);
        assert_abs_diff_eq!(sigma.rows(0, 5).norm(), 0.0);
    }

    #[test]
    fn objective_matches_sample_mean_of_q() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut randn = move || rng.sample::<f64, _>(StandardNormal);
        let samples: Vec<(DVector<f64>, DVector<f64>)> = (0..40)
            .map(|_| {
                (
                    DVector::from_fn(2, |_, _| randn()),
                    DVector::from_fn(1, |_, _| randn()),
                )
            })
            .collect();
        let sigma = build_objective(&samples, None).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let q = QuadFunction::new(
            2,
            1,
            SymMatrix::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)),
            DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)),
            1.3,
        )
        .unwrap();
        let mean: f64 =
            samples.iter().map(|(x, u)| q.eval(x, u)).sum::<f64>() / samples.len() as f64;
        assert_abs_diff_eq!(
            sigma.dot(&q.theta()),
            mean,
            epsilon = 1e-10 * (1.0 + mean.abs())
        );
    }

    #[test]
    fn objective_symmetric_samples_cancel_linear_block() {
        let x = DVector::from_row_slice(&[1.3, -0.4]);
        let u = DVector::from_row_slice(&[0.7]);
        let samples = vec![(x.clone(), u.clone()), (-x, -u)];
        let sigma = build_objective(&samples, None).unwrap();
        // linear block occupies positions hv_len(3)..hv_len(3)+3
        assert_abs_diff_eq!(sigma.rows(6, 3).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        let meta = crate::synthesis::RowMeta {
            x: DVector::zeros(1),
            u: DVector::zeros(1),
            w: DVector::zeros(1),
            alpha_norm_sq: None,
        };
        let r = ConstraintRow {
            rho: DVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.1]),
            rhs: 1.0,
            meta: meta.clone(),
        };
        let lp = build_relaxed_qlp(
            &[
                r.clone(),
                r.clone(),
                ConstraintRow {
                    rhs: 2.0,
                    ..r.clone()
                },
            ],
            DVector::zeros(6),
            None,
        )
        .unwrap();
        assert_eq!(lp.rows.len(), 2);
    }

    fn stochastic_test_system() -> (AffineSystem, StageCost) {
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.7, 0.1, -0.1, 0.6]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            DVector::from_row_slice(&[0.2, -0.1]),
            DVector::from_row_slice(&[0.05, 0.0]),
            SymMatrix::from_matrix(&DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2])).unwrap(),
            0.9,
        )
        .unwrap();
        (sys, StageCost::identity(2, 1))
    }

    #[test]
    fn value_lp_feasible_at_the_fixed_point() {
        let (sys, cost) = stochastic_test_system();
        let forms = closed_forms(&sys, &cost).unwrap();
        let theta = forms.value.theta();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut randn = move || rng.sample::<f64, _>(StandardNormal);
        let grid: Vec<(DVector<f64>, DVector<f64>)> = (0..60)
            .map(|_| {
                (
                    DVector::from_fn(2, |_, _| 2.0 * randn()),
                    DVector::from_fn(1, |_, _| 2.0 * randn()),
                )
            })
            .collect();
        let lp = build_value_lp(&sys, &cost, &grid, None).unwrap();
        for (i, row) in lp.rows.iter().enumerate() {
            let slack = row.rhs - row.coeffs.dot(&theta);
            assert!(slack >= -1e-8, "row {i} violated by {slack}");
        }
    }

    #[test]
    fn value_lp_single_point_grid_is_degenerate() {
        let (sys, cost) = stochastic_test_system();
        let grid = vec![(DVector::zeros(2), DVector::zeros(1))];
        let lp = build_value_lp(&sys, &cost, &grid, Some(1e3)).unwrap();
        let sol = solve(&lp).unwrap();
        assert_ne!(sol.status, LpStatus::Optimal);
    }

    #[test]
    fn vq_lp_feasible_at_both_fixed_points() {
        let (sys, cost) = stochastic_test_system();
        let forms = closed_forms(&sys, &cost).unwrap();
        let mut joint = Vec::new();
        joint.extend_from_slice(forms.q.theta().as_slice());
        joint.extend_from_slice(forms.value.theta().as_slice());
        let theta = DVector::from_vec(joint);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut randn = move || rng.sample::<f64, _>(StandardNormal);
        let grid: Vec<(DVector<f64>, DVector<f64>)> = (0..60)
            .map(|_| {
                (
                    DVector::from_fn(2, |_, _| 2.0 * randn()),
                    DVector::from_fn(1, |_, _| 2.0 * randn()),
                )
            })
            .collect();
        let lp = build_vq_lp(&sys, &cost, &grid, None).unwrap();
        for (i, row) in lp.rows.iter().enumerate() {
            let slack = row.rhs - row.coeffs.dot(&theta);
            assert!(slack >= -1e-8, "row {i} violated by {slack}");
        }
    }

    #[test]
    fn vq_lp_empty_grid_errors() {
        let (sys, cost) = stochastic_test_system();
        assert!(build_vq_lp(&sys, &cost, &[], None).is_err());
    }

    #[test]
    fn extract_policy_from_exact_theta() {
        let (sys, cost) = stochastic_test_system();
        let forms = closed_forms(&sys, &cost).unwrap();
        let sol = LpSolution {
            theta: forms.q.theta().as_slice().to_vec(),
            status: LpStatus::Optimal,
            objective_value: 0.0,
            iterations: 0,
        };
        let pi = extract_policy(&sol, 2, 1).unwrap();
        let reference = optimal_policy(&sys, &cost).unwrap();
        assert!(pi.distance(&reference) <= 1e-8);
    }

    #[test]
    fn extract_policy_rejects_degenerate_quu() {
        let p = crate::synthesis::feature_dim(1, 1);
        let sol = LpSolution {
            theta: vec![0.0; p],
            status: LpStatus::Optimal,
            objective_value: 0.0,
            iterations: 0,
        };
        assert!(matches!(
            extract_policy(&sol, 1, 1),
            Err(Error::PolicyExtraction(_))
        ));
    }

    #[test]
    fn extract_policy_needs_a_usable_status() {
        let sol = LpSolution {
            theta: vec![0.0; crate::synthesis::feature_dim(1, 1)],
            status: LpStatus::Unbounded,
            objective_value: 0.0,
            iterations: 0,
        };
        assert!(matches!(
            extract_policy(&sol, 1, 1),
            Err(Error::PolicyExtraction(_))
        ));
    }

    #[test]
    fn extract_policy_from_biased_theta_gives_the_same_policy() {
        let (sys, cost) = stochastic_test_system();
        let qbar = crate::fixedpoint::biased_q(&sys, &cost, 2.3).unwrap();
        let sol = LpSolution {
            theta: qbar.theta().as_slice().to_vec(),
            status: LpStatus::Optimal,
            objective_value: 0.0,
            iterations: 0,
        };
        let pi = extract_policy(&sol, 2, 1).unwrap();
        assert!(pi.distance(&optimal_policy(&sys, &cost).unwrap()) <= 1e-8);
    }

    #[test]
    fn objective_requires_samples_and_valid_weights() {
        assert!(build_objective(&[], None).is_err());
        let sample = (DVector::zeros(1), DVector::zeros(1));
        assert!(build_objective(std::slice::from_ref(&sample), Some(&[-1.0])).is_err());
        assert!(build_objective(std::slice::from_ref(&sample), Some(&[1.0, 2.0])).is_err());
    }
}
