//! Closed-form fixed points for discounted optimal control of affine systems.
//!
//! Everything here flows from one object: the solution `P̃` of the algebraic
//! Riccati equation in augmented coordinates,
//!
//! ```text
//! P̃ = q̃ - q̃_ℓ q̃_c⁻¹ q̃_ℓᵀ,     q̃   = L̃xx + γ Ãᵀ P̃ Ã,
//!                               q̃_ℓ = L̃xu + γ Ãᵀ P̃ B̃,
//!                               q̃_c = Luu + γ B̃ᵀ P̃ B̃.
//! ```
//!
//! Its blocks yield the optimal value function `v*`, the optimal Q-function
//! `q*`, the relaxed fixed point `q̂` (expectation and infimum exchanged,
//! which shifts the constant upward but preserves the minimizer), the biased
//! fixed point `q̄` arising from data-synthesized constraints with inflated
//! noise covariance, and the optimal affine policy `u = K x + k`.
//!
//! The Riccati equation is solved by fixed-point iteration of the map above;
//! discounting makes the map contractive, so plain iteration from `L̃xx`
//! converges and no Schur or doubling machinery is needed at this scale.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{augment, AffineSystem, AugmentedSystem, StageCost};
use crate::numerics::{
    check_finite, hv, hv_len, matrix_from_rows, matrix_to_rows, sym_from_hv, SymMatrix,
};
use crate::{Error, Result};

/// Default Riccati iteration tolerance (Frobenius norm of the increment).
pub const ARE_TOL: f64 = 1e-10;

/// Default Riccati iteration cap.
pub const ARE_MAX_ITER: usize = 1_000_000;

/// Modulus threshold above which an eigenvalue counts as unstable in the
/// PBH stabilizability test.
const PBH_UNSTABLE_TOL: f64 = 1e-9;

// ── QuadFunction ─────────────────────────────────────────────────────

/// A member of the generalized quadratic family over `(x, u)`:
/// `q(x, u) = zᵀ Q z + 2 zᵀ Q_ℓ + Q_c` with `z = [x; u]`.
///
/// Stores the state/input split so block operations (inner minimization,
/// policy extraction) need no extra bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "QuadFunctionRepr", into = "QuadFunctionRepr")]
pub struct QuadFunction {
    nx: usize,
    nu: usize,
    q: SymMatrix,
    ql: DVector<f64>,
    qc: f64,
}

impl QuadFunction {
    pub fn new(nx: usize, nu: usize, q: SymMatrix, ql: DVector<f64>, qc: f64) -> Result<Self> {
        if q.dim() != nx + nu || ql.len() != nx + nu {
            return Err(Error::Dimension(format!(
                "quadratic blocks must have dimension {}, got {} and {}",
                nx + nu,
                q.dim(),
                ql.len()
            )));
        }
        check_finite(ql.as_slice(), "Q_l")?;
        if !qc.is_finite() {
            return Err(Error::Invalid("Q_c must be finite".into()));
        }
        Ok(Self { nx, nu, q, ql, qc })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }

    pub fn ql(&self) -> &DVector<f64> {
        &self.ql
    }

    pub fn qc(&self) -> f64 {
        self.qc
    }

    /// Quadratic x-x block.
    pub fn qxx(&self) -> SymMatrix {
        SymMatrix::from_fn(self.nx, |i, j| self.q.get(i, j))
    }

    /// Quadratic x-u block (`nx x nu`).
    pub fn qxu(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nx, self.nu, |i, j| self.q.get(i, self.nx + j))
    }

    /// Quadratic u-u block.
    pub fn quu(&self) -> SymMatrix {
        SymMatrix::from_fn(self.nu, |i, j| self.q.get(self.nx + i, self.nx + j))
    }

    /// Linear block over x.
    pub fn qx(&self) -> DVector<f64> {
        self.ql.rows(0, self.nx).into_owned()
    }

    /// Linear block over u.
    pub fn qu(&self) -> DVector<f64> {
        self.ql.rows(self.nx, self.nu).into_owned()
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut z = DVector::zeros(self.nx + self.nu);
        z.rows_mut(0, self.nx).copy_from(x);
        z.rows_mut(self.nx, self.nu).copy_from(u);
        self.eval_z(&z)
    }

    pub fn eval_z(&self, z: &DVector<f64>) -> f64 {
        let qm = self.q.to_matrix();
        (z.transpose() * qm * z)[(0, 0)] + 2.0 * z.dot(&self.ql) + self.qc
    }

    /// Decision-variable coordinates `[hv Q; Q_ℓ; Q_c]`.
    pub fn theta(&self) -> DVector<f64> {
        let dim = self.nx + self.nu;
        let mut out = Vec::with_capacity(hv_len(dim) + dim + 1);
        out.extend_from_slice(hv(&self.q).as_slice());
        out.extend_from_slice(self.ql.as_slice());
        out.push(self.qc);
        DVector::from_vec(out)
    }

    /// Rebuilds a quadratic from `[hv Q; Q_ℓ; Q_c]` coordinates.
    pub fn from_theta(theta: &[f64], nx: usize, nu: usize) -> Result<Self> {
        let dim = nx + nu;
        let expect = hv_len(dim) + dim + 1;
        if theta.len() != expect {
            return Err(Error::Dimension(format!(
                "theta must have length {expect} for (n, m) = ({nx}, {nu}), got {}",
                theta.len()
            )));
        }
        let q = sym_from_hv(&theta[..hv_len(dim)], dim)?;
        let ql = DVector::from_column_slice(&theta[hv_len(dim)..hv_len(dim) + dim]);
        Self::new(nx, nu, q, ql, theta[expect - 1])
    }

    /// Coefficients of `x ↦ min_u q(x, u)` as a quadratic `(P, r, s)`;
    /// requires a positive definite u-u block.
    pub fn partial_min_u(&self) -> Result<(SymMatrix, DVector<f64>, f64)> {
        let quu = self.quu().to_matrix();
        let chol = quu.cholesky().ok_or(Error::NotPositiveDefinite {
            what: "u-u block of Q".into(),
        })?;
        let qxu = self.qxu();
        let qu = self.qu();
        let quu_inv_qxu_t = chol.solve(&qxu.transpose());
        let quu_inv_qu = chol.solve(&qu);
        let p = self.qxx().to_matrix() - &qxu * &quu_inv_qxu_t;
        let r = self.qx() - &qxu * &quu_inv_qu;
        let s = self.qc - qu.dot(&quu_inv_qu);
        Ok((SymMatrix::from_matrix_symmetrized(&p)?, r, s))
    }

    /// `argmin_u q(x, u)` as an affine policy.
    pub fn argmin_policy(&self) -> Result<AffinePolicy> {
        let quu = self.quu().to_matrix();
        let chol = quu.cholesky().ok_or(Error::NotPositiveDefinite {
            what: "u-u block of Q".into(),
        })?;
        let gain = -chol.solve(&self.qxu().transpose());
        let offset = -chol.solve(&self.qu());
        AffinePolicy::new(gain, offset)
    }

    /// `min_u q(x, u)` at a given state.
    pub fn min_over_u(&self, x: &DVector<f64>) -> Result<f64> {
        let (p, r, s) = self.partial_min_u()?;
        Ok((x.transpose() * p.to_matrix() * x)[(0, 0)] + 2.0 * x.dot(&r) + s)
    }

    /// Same quadratic with the constant shifted by `delta`.
    pub fn shift_constant(&self, delta: f64) -> QuadFunction {
        QuadFunction {
            qc: self.qc + delta,
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct QuadFunctionRepr {
    n: usize,
    m: usize,
    q: Vec<Vec<f64>>,
    ql: Vec<f64>,
    qc: f64,
}

impl TryFrom<QuadFunctionRepr> for QuadFunction {
    type Error = Error;

    fn try_from(r: QuadFunctionRepr) -> Result<Self> {
        QuadFunction::new(
            r.n,
            r.m,
            SymMatrix::from_matrix(&matrix_from_rows(&r.q)?)?,
            DVector::from_vec(r.ql),
            r.qc,
        )
    }
}

impl From<QuadFunction> for QuadFunctionRepr {
    fn from(q: QuadFunction) -> Self {
        QuadFunctionRepr {
            n: q.nx,
            m: q.nu,
            q: matrix_to_rows(&q.q.to_matrix()),
            ql: q.ql.as_slice().to_vec(),
            qc: q.qc,
        }
    }
}

// ── ValueQuad ────────────────────────────────────────────────────────

/// Quadratic value function `v(x) = xᵀ P x + 2 xᵀ P_ℓ + P_c + offset`,
/// where `offset` carries the stationary noise term `γ Tr(P Σ) / (1-γ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ValueQuadRepr", into = "ValueQuadRepr")]
pub struct ValueQuad {
    p: SymMatrix,
    pl: DVector<f64>,
    pc: f64,
    noise_offset: f64,
}

impl ValueQuad {
    pub fn new(p: SymMatrix, pl: DVector<f64>, pc: f64, noise_offset: f64) -> Result<Self> {
        if p.dim() != pl.len() {
            return Err(Error::Dimension("P and P_l dimensions disagree".into()));
        }
        Ok(Self {
            p,
            pl,
            pc,
            noise_offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn p(&self) -> &SymMatrix {
        &self.p
    }

    pub fn pl(&self) -> &DVector<f64> {
        &self.pl
    }

    pub fn pc(&self) -> f64 {
        self.pc
    }

    pub fn noise_offset(&self) -> f64 {
        self.noise_offset
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * self.p.to_matrix() * x)[(0, 0)]
            + 2.0 * x.dot(&self.pl)
            + self.pc
            + self.noise_offset
    }

    /// Value-LP coordinates `[hv P; P_ℓ; P_c]` with the noise offset folded
    /// into the constant, matching what a Bellman-inequality LP recovers.
    pub fn theta(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(hv_len(self.dim()) + self.dim() + 1);
        out.extend_from_slice(hv(&self.p).as_slice());
        out.extend_from_slice(self.pl.as_slice());
        out.push(self.pc + self.noise_offset);
        DVector::from_vec(out)
    }

    /// Closed-form `E[v(x⁺)]` for `x⁺ ~ (mean, cov)`.
    pub fn expected_at(&self, mean: &DVector<f64>, cov: &SymMatrix) -> f64 {
        let pm = self.p.to_matrix();
        (mean.transpose() * &pm * mean)[(0, 0)]
            + self.p.trace_product(cov)
            + 2.0 * mean.dot(&self.pl)
            + self.pc
            + self.noise_offset
    }
}

#[derive(Serialize, Deserialize)]
struct ValueQuadRepr {
    p: Vec<Vec<f64>>,
    pl: Vec<f64>,
    pc: f64,
    noise_offset: f64,
}

impl TryFrom<ValueQuadRepr> for ValueQuad {
    type Error = Error;

    fn try_from(r: ValueQuadRepr) -> Result<Self> {
        ValueQuad::new(
            SymMatrix::from_matrix(&matrix_from_rows(&r.p)?)?,
            DVector::from_vec(r.pl),
            r.pc,
            r.noise_offset,
        )
    }
}

impl From<ValueQuad> for ValueQuadRepr {
    fn from(v: ValueQuad) -> Self {
        ValueQuadRepr {
            p: matrix_to_rows(&v.p.to_matrix()),
            pl: v.pl.as_slice().to_vec(),
            pc: v.pc,
            noise_offset: v.noise_offset,
        }
    }
}

// ── AffinePolicy ─────────────────────────────────────────────────────

/// Affine feedback `u = K x + k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AffinePolicyRepr", into = "AffinePolicyRepr")]
pub struct AffinePolicy {
    gain: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffinePolicy {
    pub fn new(gain: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if gain.nrows() != offset.len() {
            return Err(Error::Dimension("gain and offset heights disagree".into()));
        }
        check_finite(gain.as_slice(), "policy gain")?;
        check_finite(offset.as_slice(), "policy offset")?;
        Ok(Self { gain, offset })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }

    /// `|K - K'|_F + |k - k'|_2`, the policy distance used in recovery
    /// checks.
    pub fn distance(&self, other: &AffinePolicy) -> f64 {
        (&self.gain - &other.gain).norm() + (&self.offset - &other.offset).norm()
    }
}

#[derive(Serialize, Deserialize)]
struct AffinePolicyRepr {
    gain: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl TryFrom<AffinePolicyRepr> for AffinePolicy {
    type Error = Error;

    fn try_from(r: AffinePolicyRepr) -> Result<Self> {
        AffinePolicy::new(matrix_from_rows(&r.gain)?, DVector::from_vec(r.offset))
    }
}

impl From<AffinePolicy> for AffinePolicyRepr {
    fn from(p: AffinePolicy) -> Self {
        AffinePolicyRepr {
            gain: matrix_to_rows(&p.gain),
            offset: p.offset.as_slice().to_vec(),
        }
    }
}

// ── Stabilizability ──────────────────────────────────────────────────

/// PBH test: every eigenvalue of `√γ A` with modulus at least one must be
/// controllable through `√γ B`. Fails fast with the offending modulus.
pub fn check_stabilizable(sys: &AffineSystem, rank_tol: f64) -> Result<()> {
    let n = sys.n();
    let m = sys.m();
    let sg = sys.gamma().sqrt();
    let a = sys.a() * sg;
    let b = sys.b() * sg;
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 - PBH_UNSTABLE_TOL {
            continue;
        }
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(-a[(i, j)], 0.0);
            }
            pencil[(i, i)] += lambda;
            for j in 0..m {
                pencil[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = pencil
            .try_svd(false, false, f64::EPSILON, 10_000)
            .ok_or(Error::Svd)?
            .singular_values;
        let max = sv.max();
        let rank = sv.iter().filter(|&&s| s > rank_tol * max).count();
        if rank < n {
            return Err(Error::NotStabilizable {
                modulus: lambda.norm(),
            });
        }
    }
    Ok(())
}

// ── Augmented ARE ────────────────────────────────────────────────────

/// Riccati solution in augmented coordinates together with the blocks of the
/// associated augmented Q-matrix, the iteration count and the certified
/// fixed-point residual.
#[derive(Debug, Clone)]
pub struct AreSolution {
    pub ptil: SymMatrix,
    pub qtil: SymMatrix,
    pub qtil_l: DMatrix<f64>,
    pub qtil_c: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

struct RiccatiStep {
    next: DMatrix<f64>,
    qtil: DMatrix<f64>,
    qtil_l: DMatrix<f64>,
    qtil_c: DMatrix<f64>,
}

fn riccati_map(aug: &AugmentedSystem, p: &DMatrix<f64>) -> Result<RiccatiStep> {
    let gamma = aug.gamma;
    let qtil = aug.ltil_xx.to_matrix() + gamma * aug.atil.transpose() * p * &aug.atil;
    let qtil = 0.5 * (&qtil + qtil.transpose());
    let qtil_l = &aug.ltil_xu + gamma * aug.atil.transpose() * p * &aug.btil;
    let qtil_c = &aug.luu + gamma * aug.btil.transpose() * p * &aug.btil;
    let qtil_c = 0.5 * (&qtil_c + qtil_c.transpose());
    let chol = qtil_c
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            what: "q~_c during riccati iteration".into(),
        })?;
    let next = &qtil - &qtil_l * chol.solve(&qtil_l.transpose());
    let next = 0.5 * (&next + next.transpose());
    Ok(RiccatiStep {
        next,
        qtil,
        qtil_l,
        qtil_c,
    })
}

/// Solves the augmented ARE by fixed-point iteration from `P̃₀ = L̃xx`.
///
/// Returns when the Frobenius norm of one Riccati step falls below `tol`;
/// that increment is exactly the fixed-point residual of the returned `P̃`.
pub fn solve_augmented_are(
    aug: &AugmentedSystem,
    tol: f64,
    max_iter: usize,
) -> Result<AreSolution> {
    solve_augmented_are_from(aug, &aug.ltil_xx, tol, max_iter)
}

/// Same iteration from a caller-chosen PSD initialization.
pub fn solve_augmented_are_from(
    aug: &AugmentedSystem,
    init: &SymMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<AreSolution> {
    if init.dim() != aug.dim() {
        return Err(Error::Dimension(
            "riccati initialization has the wrong dimension".into(),
        ));
    }
    let mut p = init.to_matrix();
    let mut increment = f64::INFINITY;
    for iter in 0..max_iter {
        let step = riccati_map(aug, &p)?;
        increment = (&step.next - &p).norm();
        if increment <= tol {
            return Ok(AreSolution {
                ptil: SymMatrix::from_matrix_symmetrized(&p)?,
                qtil: SymMatrix::from_matrix_symmetrized(&step.qtil)?,
                qtil_l: step.qtil_l,
                qtil_c: step.qtil_c,
                iterations: iter + 1,
                residual: increment,
            });
        }
        p = step.next;
    }
    Err(Error::RiccatiNonConvergence {
        max_iter,
        increment,
    })
}

impl AreSolution {
    /// Splits `P̃` into `(P, P_ℓ, P_c)`.
    pub fn value_blocks(&self) -> (SymMatrix, DVector<f64>, f64) {
        let n = self.ptil.dim() - 1;
        let p = SymMatrix::from_fn(n, |i, j| self.ptil.get(i, j));
        let pl = DVector::from_fn(n, |i, _| self.ptil.get(i, n));
        (p, pl, self.ptil.get(n, n))
    }
}

// ── Fixed points ─────────────────────────────────────────────────────

fn value_from_are(sys: &AffineSystem, are: &AreSolution) -> Result<ValueQuad> {
    let (p, pl, pc) = are.value_blocks();
    let gamma = sys.gamma();
    let noise_offset = gamma * p.trace_product(sys.sigma()) / (1.0 - gamma);
    ValueQuad::new(p, pl, pc, noise_offset)
}

fn q_from_are(sys: &AffineSystem, are: &AreSolution) -> Result<QuadFunction> {
    let n = sys.n();
    let m = sys.m();
    // Block correspondence between the augmented Q-matrix over (x, y, u) and
    // the Q-function over (x, u): the y-row carries the linear terms, the
    // (y, y) entry the constant.
    let q = SymMatrix::from_fn(n + m, |i, j| {
        let map = |k: usize| if k < n { (true, k) } else { (false, k - n) };
        match (map(i), map(j)) {
            ((true, r), (true, c)) => are.qtil.get(r, c),
            ((true, r), (false, c)) => are.qtil_l[(r, c)],
            ((false, r), (true, c)) => are.qtil_l[(c, r)],
            ((false, r), (false, c)) => are.qtil_c[(r, c)],
        }
    });
    let mut ql = DVector::zeros(n + m);
    for i in 0..n {
        ql[i] = are.qtil.get(i, n);
    }
    for j in 0..m {
        ql[n + j] = are.qtil_l[(n, j)];
    }
    let (p, _, _) = are.value_blocks();
    let gamma = sys.gamma();
    let noise_offset = gamma * p.trace_product(sys.sigma()) / (1.0 - gamma);
    QuadFunction::new(n, m, q, ql, are.qtil.get(n, n) + noise_offset)
}

fn relaxed_from_q(sys: &AffineSystem, q: &QuadFunction) -> Result<QuadFunction> {
    Ok(q.shift_constant(relaxation_offset(sys, q)?))
}

/// The constant `γ Tr(Q_xu Q_uu⁻¹ Q_xuᵀ Σ) / (1-γ)` separating `q̂` from
/// `q*`; nonnegative whenever `Σ ⪰ 0`.
pub fn relaxation_offset(sys: &AffineSystem, q: &QuadFunction) -> Result<f64> {
    let quu = q.quu().to_matrix();
    let chol = quu.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "u-u block of q*".into(),
    })?;
    let qxu = q.qxu();
    let prod = &qxu * chol.solve(&qxu.transpose());
    let sym = SymMatrix::from_matrix_symmetrized(&prod)?;
    Ok(sys.gamma() * sym.trace_product(sys.sigma()) / (1.0 - sys.gamma()))
}

/// Optimal value function `v*` from the augmented ARE.
pub fn optimal_value(sys: &AffineSystem, cost: &StageCost) -> Result<ValueQuad> {
    check_stabilizable(sys, crate::numerics::DEFAULT_RANK_TOL)?;
    let are = solve_augmented_are(&augment(sys, cost), ARE_TOL, ARE_MAX_ITER)?;
    value_from_are(sys, &are)
}

/// Optimal Q-function `q*`; its constant includes the stationary noise term.
pub fn optimal_q(sys: &AffineSystem, cost: &StageCost) -> Result<QuadFunction> {
    check_stabilizable(sys, crate::numerics::DEFAULT_RANK_TOL)?;
    let are = solve_augmented_are(&augment(sys, cost), ARE_TOL, ARE_MAX_ITER)?;
    q_from_are(sys, &are)
}

/// Fixed point `q̂` of the relaxed operator: `q*` shifted upward by
/// [`relaxation_offset`]. Same quadratic and linear blocks, same minimizer.
pub fn relaxed_q(sys: &AffineSystem, cost: &StageCost) -> Result<QuadFunction> {
    let q = optimal_q(sys, cost)?;
    relaxed_from_q(sys, &q)
}

/// Fixed point `q̄` under synthesized constraints whose estimators carry
/// noise covariance `|α|² Σ`: a further constant shift
/// `γ (|α|² - 1) Tr(q*_xx Σ) / (1-γ)` on top of `q̂`.
pub fn biased_q(sys: &AffineSystem, cost: &StageCost, alpha_norm_sq: f64) -> Result<QuadFunction> {
    if !alpha_norm_sq.is_finite() || alpha_norm_sq <= 0.0 {
        return Err(Error::Invalid(format!(
            "alpha norm squared must be positive, got {alpha_norm_sq}"
        )));
    }
    let q = optimal_q(sys, cost)?;
    let qhat = relaxed_from_q(sys, &q)?;
    let gamma = sys.gamma();
    let shift = gamma * (alpha_norm_sq - 1.0) * q.qxx().trace_product(sys.sigma()) / (1.0 - gamma);
    Ok(qhat.shift_constant(shift))
}

/// Optimal affine policy `u = K x + k` with
/// `K = -q_c⁻¹ q_ℓᵀ` and `k = -q_c⁻¹ (L_u + γ Bᵀ (P_ℓ + P (c + μ)))`,
/// assembled directly from the value blocks.
pub fn optimal_policy(sys: &AffineSystem, cost: &StageCost) -> Result<AffinePolicy> {
    check_stabilizable(sys, crate::numerics::DEFAULT_RANK_TOL)?;
    let are = solve_augmented_are(&augment(sys, cost), ARE_TOL, ARE_MAX_ITER)?;
    let (p, pl, _) = are.value_blocks();
    let pm = p.to_matrix();
    let gamma = sys.gamma();
    let qxu = cost.lxu() + gamma * sys.a().transpose() * &pm * sys.b();
    let qc_mat = cost.luu() + gamma * sys.b().transpose() * &pm * sys.b();
    let chol = qc_mat.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "q*_c".into(),
    })?;
    let q_vec = cost.lu() + gamma * sys.b().transpose() * (&pl + &pm * sys.mean_drift());
    AffinePolicy::new(-chol.solve(&qxu.transpose()), -chol.solve(&q_vec))
}

/// All closed forms from a single Riccati solve.
#[derive(Debug, Clone)]
pub struct ClosedForms {
    pub value: ValueQuad,
    pub q: QuadFunction,
    pub relaxed: QuadFunction,
    pub policy: AffinePolicy,
    pub are: AreSolution,
}

pub fn closed_forms(sys: &AffineSystem, cost: &StageCost) -> Result<ClosedForms> {
    check_stabilizable(sys, crate::numerics::DEFAULT_RANK_TOL)?;
    let are = solve_augmented_are(&augment(sys, cost), ARE_TOL, ARE_MAX_ITER)?;
    let value = value_from_are(sys, &are)?;
    let q = q_from_are(sys, &are)?;
    let relaxed = relaxed_from_q(sys, &q)?;
    let policy = q.argmin_policy()?;
    Ok(ClosedForms {
        value,
        q,
        relaxed,
        policy,
        are,
    })
}

// ── Operator applications ────────────────────────────────────────────

/// Linearized Bellman operator `(T_ℓ v)(x, u) = ℓ(x, u) + γ E[v(x⁺)]`, with
/// the expectation in closed form from the noise moments.
pub fn apply_t_linear(
    v: &ValueQuad,
    sys: &AffineSystem,
    cost: &StageCost,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    let mean = sys.mean_successor(x, u);
    cost.eval(x, u) + sys.gamma() * v.expected_at(&mean, sys.sigma())
}

/// Q-function Bellman operator
/// `(F q)(x, u) = ℓ(x, u) + γ E[min_w q(x⁺, w)]`: the inner minimization is
/// resolved analytically before taking the expectation.
pub fn apply_f(
    q: &QuadFunction,
    sys: &AffineSystem,
    cost: &StageCost,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let (p, r, s) = q.partial_min_u()?;
    let mean = sys.mean_successor(x, u);
    let expected = (mean.transpose() * p.to_matrix() * &mean)[(0, 0)]
        + p.trace_product(sys.sigma())
        + 2.0 * mean.dot(&r)
        + s;
    Ok(cost.eval(x, u) + sys.gamma() * expected)
}

/// Relaxed operator
/// `(F̂ q)(x, u) = ℓ(x, u) + γ min_w E[q(x⁺, w)]`: expectation first, then
/// the analytic minimization over `w`.
pub fn apply_f_hat(
    q: &QuadFunction,
    sys: &AffineSystem,
    cost: &StageCost,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    let mean = sys.mean_successor(x, u);
    let qxx = q.qxx();
    let const_term = (mean.transpose() * qxx.to_matrix() * &mean)[(0, 0)]
        + qxx.trace_product(sys.sigma())
        + 2.0 * mean.dot(&q.qx())
        + q.qc();
    // linear coefficient of w in E[q(x⁺, w)]
    let lin = q.qxu().transpose() * &mean + q.qu();
    let quu = q.quu().to_matrix();
    let chol = quu.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "u-u block of Q".into(),
    })?;
    let minimized = const_term - lin.dot(&chol.solve(&lin));
    Ok(cost.eval(x, u) + sys.gamma() * minimized)
}

/// One-step greedy policy of a value function: the analytic minimizer of
/// `(T_ℓ v)(x, ·)`, well posed when `Luu + γ Bᵀ P B ≻ 0`.
pub fn greedy_policy(v: &ValueQuad, sys: &AffineSystem, cost: &StageCost) -> Result<AffinePolicy> {
    let gamma = sys.gamma();
    let pm = v.p().to_matrix();
    let hessian = cost.luu() + gamma * sys.b().transpose() * &pm * sys.b();
    let chol = hessian.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "greedy-policy hessian".into(),
    })?;
    let gain = -chol.solve(&(cost.lxu().transpose() + gamma * sys.b().transpose() * &pm * sys.a()));
    let offset =
        -chol.solve(&(cost.lu() + gamma * sys.b().transpose() * (&pm * sys.mean_drift() + v.pl())));
    AffinePolicy::new(gain, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn scalar_system(a: f64, b: f64, c: f64, mu: f64, sigma: f64, gamma: f64) -> AffineSystem {
        AffineSystem::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DVector::from_row_slice(&[c]),
            DVector::from_row_slice(&[mu]),
            SymMatrix::from_matrix(&DMatrix::from_row_slice(1, 1, &[sigma])).unwrap(),
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn are_zero_a_shortcut() {
        // A = 0, B = 1, identity cost: future is cost-free, so P* = Lxx = 1.
        let sys = scalar_system(0.0, 1.0, 0.0, 0.0, 0.0, 0.9);
        let v = optimal_value(&sys, &StageCost::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(v.p().get(0, 0), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.pl()[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.pc(), 0.0, epsilon = 1e-9);
        assert_eq!(v.noise_offset(), 0.0);
    }

    #[test]
    fn pure_lqr_has_no_affine_part() {
        let sys = scalar_system(0.9, 1.0, 0.0, 0.0, 0.0, 0.95);
        let v = optimal_value(&sys, &StageCost::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(v.pl()[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.pc(), 0.0, epsilon = 1e-9);
        let pi = optimal_policy(&sys, &StageCost::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(pi.offset()[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn q_at_origin_vanishes_in_linear_deterministic_case() {
        let sys = scalar_system(0.5, 1.0, 0.0, 0.0, 0.0, 0.9);
        let q = optimal_q(&sys, &StageCost::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(
            q.eval(&DVector::zeros(1), &DVector::zeros(1)),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn relaxed_equals_q_without_noise() {
        let sys = scalar_system(0.7, 1.0, 0.4, 0.1, 0.0, 0.9);
        let cost = StageCost::identity(1, 1);
        let q = optimal_q(&sys, &cost).unwrap();
        let qhat = relaxed_q(&sys, &cost).unwrap();
        assert_abs_diff_eq!(q.qc(), qhat.qc(), epsilon = 1e-12);
    }

    #[test]
    fn relaxation_offset_is_nonnegative() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..10 {
            let n = 2;
            let s = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let sigma = SymMatrix::from_matrix(&(s.transpose() * &s)).unwrap();
            let sys = AffineSystem::new(
                DMatrix::from_fn(n, n, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)),
                DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal)),
                DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
                DVector::zeros(n),
                sigma,
                0.9,
            )
            .unwrap();
            let cost = StageCost::identity(n, 1);
            let q = optimal_q(&sys, &cost).unwrap();
            assert!(relaxation_offset(&sys, &q).unwrap() >= 0.0);
        }
    }

    #[test]
    fn biased_q_degenerate_cases() {
        let cost = StageCost::identity(1, 1);
        // unit alpha norm: no extra shift
        let sys = scalar_system(0.6, 1.0, 0.2, 0.0, 0.8, 0.9);
        let qhat = relaxed_q(&sys, &cost).unwrap();
        let qbar = biased_q(&sys, &cost, 1.0).unwrap();
        assert_abs_diff_eq!(qhat.qc(), qbar.qc(), epsilon = 1e-12);
        // no noise: all three coincide
        let det = scalar_system(0.6, 1.0, 0.2, 0.0, 0.0, 0.9);
        let q = optimal_q(&det, &cost).unwrap();
        let qbar = biased_q(&det, &cost, 3.7).unwrap();
        assert_abs_diff_eq!(q.qc(), qbar.qc(), epsilon = 1e-12);
    }

    #[test]
    fn biased_q_preserves_minimizer() {
        let sys = scalar_system(0.6, 1.0, 0.2, 0.1, 0.8, 0.9);
        let cost = StageCost::identity(1, 1);
        let qbar = biased_q(&sys, &cost, 2.5).unwrap();
        let pi = optimal_policy(&sys, &cost).unwrap();
        assert!(qbar.argmin_policy().unwrap().distance(&pi) <= 1e-9);
    }

    #[test]
    fn zero_dynamics_policy_is_zero() {
        // A = 0, Lxu = 0, Lu = 0, c = 0, mu = 0 -> K = 0, k = 0
        let sys = scalar_system(0.0, 1.0, 0.0, 0.0, 0.0, 0.9);
        let pi = optimal_policy(&sys, &StageCost::identity(1, 1)).unwrap();
        assert_abs_diff_eq!(pi.gain()[(0, 0)], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pi.offset()[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn t_linear_deterministic_matches_direct_evaluation() {
        let sys = scalar_system(0.7, 1.2, 0.3, 0.0, 0.0, 0.9);
        let cost = StageCost::identity(1, 1);
        let v = optimal_value(&sys, &cost).unwrap();
        let x = DVector::from_row_slice(&[0.8]);
        let u = DVector::from_row_slice(&[-0.4]);
        let xplus = sys.a() * &x + sys.b() * &u + sys.c();
        let direct = cost.eval(&x, &u) + sys.gamma() * v.eval(&xplus);
        assert_abs_diff_eq!(
            apply_t_linear(&v, &sys, &cost, &x, &u),
            direct,
            epsilon = 1e-10
        );
    }

    #[test]
    fn greedy_of_vstar_is_the_optimal_policy() {
        let sys = scalar_system(0.85, 1.0, 0.5, 0.2, 0.6, 0.92);
        let cost = StageCost::identity(1, 1);
        let v = optimal_value(&sys, &cost).unwrap();
        let greedy = greedy_policy(&v, &sys, &cost).unwrap();
        let pi = optimal_policy(&sys, &cost).unwrap();
        assert!(
            greedy.distance(&pi) <= 1e-8,
            "distance {}",
            greedy.distance(&pi)
        );
    }

    #[test]
    fn greedy_without_dynamics_influence() {
        // B = 0: the minimizer is -Luu^{-1} (Lxu' x + Lu) regardless of v.
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::zeros(1),
            DVector::zeros(1),
            SymMatrix::zeros(1),
            0.9,
        )
        .unwrap();
        let cost = StageCost::new(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::zeros(1),
            DVector::from_row_slice(&[0.3]),
            0.0,
        )
        .unwrap();
        let v = optimal_value(&sys, &cost).unwrap();
        let greedy = greedy_policy(&v, &sys, &cost).unwrap();
        assert_abs_diff_eq!(greedy.gain()[(0, 0)], -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(greedy.offset()[0], -0.3, epsilon = 1e-9);
    }

    #[test]
    fn greedy_is_invariant_under_cost_scaling() {
        let sys = scalar_system(0.8, 1.0, 0.4, 0.0, 0.0, 0.9);
        let cost = StageCost::identity(1, 1);
        let lambda = 7.5;
        let scaled = cost.scale(lambda);
        let v = optimal_value(&sys, &cost).unwrap();
        let v_scaled = optimal_value(&sys, &scaled).unwrap();
        let g = greedy_policy(&v, &sys, &cost).unwrap();
        let g_scaled = greedy_policy(&v_scaled, &sys, &scaled).unwrap();
        assert!(g.distance(&g_scaled) <= 1e-8);
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::zeros(1),
            DVector::zeros(1),
            SymMatrix::zeros(1),
            0.9,
        )
        .unwrap();
        assert!(matches!(
            optimal_value(&sys, &StageCost::identity(1, 1)),
            Err(Error::NotStabilizable { .. })
        ));
    }

    #[test]
    fn riccati_iteration_cap_is_enforced() {
        let sys = scalar_system(0.9, 1.0, 0.5, 0.0, 0.0, 0.95);
        let aug = augment(&sys, &StageCost::identity(1, 1));
        assert!(matches!(
            solve_augmented_are(&aug, 1e-12, 3),
            Err(Error::RiccatiNonConvergence { max_iter: 3, .. })
        ));
    }

    #[test]
    fn theta_round_trip() {
        let q = QuadFunction::new(
            1,
            1,
            SymMatrix::from_matrix(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
            DVector::from_row_slice(&[0.3, -0.2]),
            4.0,
        )
        .unwrap();
        let theta = q.theta();
        let back = QuadFunction::from_theta(theta.as_slice(), 1, 1).unwrap();
        assert_abs_diff_eq!(
            back.eval_z(&DVector::from_row_slice(&[1.0, 2.0])),
            q.eval_z(&DVector::from_row_slice(&[1.0, 2.0]))
        );
    }
}
