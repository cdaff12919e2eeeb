//! Shared oracles for the integration suites. Everything here recomputes
//! quantities along routes independent of the library's implementation
//! paths: value iteration runs in original (non-augmented) coordinates,
//! rollout costs come from plain Monte Carlo, and small LPs are checked by
//! brute-force vertex enumeration.

#![allow(dead_code)]

use affinelp::fixedpoint::AffinePolicy;
use affinelp::model::{step_with, AffineSystem, NoiseSampler, StageCost};
use affinelp::numerics::SymMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub fn randn(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn randn_vec(rng: &mut ChaCha12Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| randn(rng))
}

pub fn randn_mat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| randn(rng))
}

/// Rescales a random square matrix to a target spectral radius.
pub fn random_a_with_radius(rng: &mut ChaCha12Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let a = randn_mat(rng, n, n);
    let rho = a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    if rho <= 1e-12 {
        DMatrix::identity(n, n) * radius
    } else {
        a * (radius / rho)
    }
}

/// Random controllable system with noise scale `noise` (covariance
/// `noise² · G Gᵀ / n`) and a drift and noise mean of moderate size.
pub fn random_system(
    rng: &mut ChaCha12Rng,
    n: usize,
    m: usize,
    gamma: f64,
    noise: f64,
) -> AffineSystem {
    loop {
        let radius = 0.3 + 0.75 * rng.random::<f64>();
        let a = random_a_with_radius(rng, n, radius);
        let b = randn_mat(rng, n, m);
        if !affinelp::model::is_controllable(&a, &b, affinelp::numerics::DEFAULT_RANK_TOL).unwrap()
        {
            continue;
        }
        let g = randn_mat(rng, n, n);
        let sigma = SymMatrix::from_matrix_symmetrized(
            &((&g * g.transpose()) * (noise * noise / n as f64)),
        )
        .unwrap();
        let c = randn_vec(rng, n) * 0.5;
        let mu = randn_vec(rng, n) * 0.2;
        if let Ok(sys) = AffineSystem::new(a, b, c, mu, sigma, gamma) {
            return sys;
        }
    }
}

/// Random controllable system with no noise at all (`μ = 0`, `Σ = 0`), as
/// the deterministic-data theorems require.
pub fn random_deterministic_system(
    rng: &mut ChaCha12Rng,
    n: usize,
    m: usize,
    gamma: f64,
) -> AffineSystem {
    loop {
        let radius = 0.3 + 0.75 * rng.random::<f64>();
        let a = random_a_with_radius(rng, n, radius);
        let b = randn_mat(rng, n, m);
        if !affinelp::model::is_controllable(&a, &b, affinelp::numerics::DEFAULT_RANK_TOL).unwrap()
        {
            continue;
        }
        let c = randn_vec(rng, n) * 0.5;
        if let Ok(sys) = AffineSystem::new(a, b, c, DVector::zeros(n), SymMatrix::zeros(n), gamma) {
            return sys;
        }
    }
}

/// Random stage cost with the full extended matrix `[[L, L_ℓ], [L_ℓᵀ, L_c]]`
/// PSD (so the stage cost is nonnegative) and `Luu` strictly positive
/// definite.
pub fn random_cost(rng: &mut ChaCha12Rng, n: usize, m: usize) -> StageCost {
    let dim = n + m + 1;
    let g = randn_mat(rng, dim, dim);
    let e = (&g * g.transpose()) / dim as f64;
    let mut luu = e.view((n, n), (m, m)).into_owned();
    luu += DMatrix::identity(m, m) * 0.4;
    StageCost::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        luu,
        e.view((0, n + m), (n, 1)).column(0).into_owned(),
        e.view((n, n + m), (m, 1)).column(0).into_owned(),
        e[(n + m, n + m)],
    )
    .unwrap()
}

/// Quadratic value-function coefficients `(P, r, s)` with
/// `v(x) = xᵀ P x + 2 xᵀ r + s`.
pub struct ValueIterate {
    pub p: DMatrix<f64>,
    pub r: DVector<f64>,
    pub s: f64,
    pub steps: usize,
}

/// Value iteration `v_{k+1}(x) = min_u { ℓ(x,u) + γ E[v_k(x⁺)] }` carried
/// out directly on original-coordinate quadratic coefficients, starting
/// from `v_0 = 0`.
///
/// This never forms augmented blocks, so it is an independent oracle for
/// the augmented-Riccati route. Iteration stops early when the coefficients
/// stop moving at machine precision (further steps are floating-point
/// no-ops).
pub fn value_iteration_affine(
    sys: &AffineSystem,
    cost: &StageCost,
    max_steps: usize,
) -> ValueIterate {
    let n = sys.n();
    let gamma = sys.gamma();
    let a = sys.a();
    let b = sys.b();
    let c = sys.c();
    let mu = sys.mu();
    let sigma = sys.sigma().to_matrix();

    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    let mut s = 0.0;
    let mut steps = 0;
    for k in 0..max_steps {
        steps = k + 1;
        // E[v(y + xi)] = y'Py + 2 y'(P mu + r) + mu'P mu + Tr(P Sigma) + 2 mu'r + s
        let g = &p * mu + &r;
        let h = (mu.transpose() * &p * mu)[(0, 0)] + (&p * &sigma).trace() + 2.0 * mu.dot(&r) + s;

        let m_xx = cost.lxx() + gamma * a.transpose() * &p * a;
        let m_xu = cost.lxu() + gamma * a.transpose() * &p * b;
        let m_uu = cost.luu() + gamma * b.transpose() * &p * b;
        let pc_g = &p * c + &g;
        let m_x = cost.lx() + gamma * a.transpose() * &pc_g;
        let m_u = cost.lu() + gamma * b.transpose() * &pc_g;
        let m_0 = cost.lc() + gamma * ((c.transpose() * &p * c)[(0, 0)] + 2.0 * c.dot(&g) + h);

        let chol = m_uu
            .clone()
            .cholesky()
            .expect("inner hessian must stay positive definite");
        let p_next = &m_xx - &m_xu * chol.solve(&m_xu.transpose());
        let p_next = 0.5 * (&p_next + p_next.transpose());
        let r_next = &m_x - &m_xu * chol.solve(&m_u);
        let s_next = m_0 - m_u.dot(&chol.solve(&m_u));

        let delta = (&p_next - &p).norm() + (&r_next - &r).norm() + (s_next - s).abs();
        let scale = 1.0 + p_next.norm() + r_next.norm() + s_next.abs();
        p = p_next;
        r = r_next;
        s = s_next;
        if delta <= 1e-15 * scale {
            break;
        }
    }
    ValueIterate { p, r, s, steps }
}

/// Monte-Carlo estimate of the discounted closed-loop cost from `x0` under
/// an affine policy. The horizon is chosen so the truncated tail is
/// negligible at the discount factor.
pub fn mc_discounted_cost(
    sys: &AffineSystem,
    cost: &StageCost,
    policy: &AffinePolicy,
    x0: &DVector<f64>,
    reps: usize,
    rng: &mut ChaCha12Rng,
) -> (f64, f64) {
    let gamma = sys.gamma();
    let horizon = ((-28.0) / gamma.ln()).ceil() as usize; // gamma^T ~ 7e-13
    let sampler = NoiseSampler::for_system(sys).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let mut x = x0.clone();
        let mut disc = 1.0;
        let mut total = 0.0;
        for _ in 0..horizon {
            let u = policy.eval(&x);
            total += disc * cost.eval(&x, &u);
            let (next, _) = step_with(sys, &x, &u, &sampler, rng);
            x = next;
            disc *= gamma;
        }
        sum += total;
        sum_sq += total * total;
    }
    let mean = sum / reps as f64;
    let var = (sum_sq / reps as f64 - mean * mean).max(0.0);
    (mean, (var / reps as f64).sqrt())
}

/// Brute-force LP oracle: enumerates every basis of `p` rows, keeps the
/// feasible vertices, returns the best objective value. `None` when no
/// feasible vertex exists.
pub fn vertex_enumeration_max(
    rows: &DMatrix<f64>,
    rhs: &DVector<f64>,
    objective: &DVector<f64>,
) -> Option<f64> {
    let k = rows.nrows();
    let p = rows.ncols();
    if p > k {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut combo: Vec<usize> = (0..p).collect();
    loop {
        let a = DMatrix::from_fn(p, p, |i, j| rows[(combo[i], j)]);
        let b = DVector::from_fn(p, |i, _| rhs[combo[i]]);
        if let Some(x) = a.clone().lu().solve(&b) {
            let exact = (&a * &x - &b).norm() <= 1e-8 * (1.0 + b.norm());
            if exact {
                let feasible = (0..k).all(|i| {
                    let lhs: f64 = (0..p).map(|j| rows[(i, j)] * x[j]).sum();
                    lhs <= rhs[i] + 1e-7
                });
                if feasible {
                    let val = objective.dot(&x);
                    best = Some(best.map_or(val, |b: f64| b.max(val)));
                }
            }
        }
        // next lexicographic combination
        let mut i = p;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if combo[i] < k - (p - i) {
                combo[i] += 1;
                for j in i + 1..p {
                    combo[j] = combo[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    best
}
