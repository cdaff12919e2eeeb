//! Affine stochastic systems, generalized quadratic stage costs, coordinate
//! augmentation, simulation, and the dataset object.
//!
//! The plant is `x⁺ = A x + B u + c + ξ` with noise of mean `μ` and
//! covariance `Σ`, discounted by `γ ∈ (0, 1)`. The stage cost is
//! `ℓ(x, u) = [x; u]ᵀ L [x; u] + 2 [x; u]ᵀ L_ℓ + L_c`.
//!
//! Augmenting the state with a constant coordinate fixed at 1 turns the
//! affine dynamics into linear dynamics and the generalized quadratic cost
//! into a pure quadratic one, which is what makes a standard Riccati
//! treatment possible downstream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{check_finite, matrix_from_rows, matrix_to_rows, SymMatrix};
use crate::{Error, Result};

/// Tolerance on the smallest eigenvalue when checking positive
/// semidefiniteness at construction time.
const PSD_TOL: f64 = 1e-8;

// ── AffineSystem ─────────────────────────────────────────────────────

/// Discrete-time affine dynamics with the first two noise moments and the
/// discount factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AffineSystemRepr", into = "AffineSystemRepr")]
pub struct AffineSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
    mu: DVector<f64>,
    sigma: SymMatrix,
    gamma: f64,
}

impl AffineSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DVector<f64>,
        mu: DVector<f64>,
        sigma: SymMatrix,
        gamma: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if b.ncols() == 0 {
            return Err(Error::Invalid(
                "input dimension m must be at least 1".into(),
            ));
        }
        if c.len() != n || mu.len() != n {
            return Err(Error::Dimension(format!(
                "c and mu must have length {n}, got {} and {}",
                c.len(),
                mu.len()
            )));
        }
        if sigma.dim() != n {
            return Err(Error::Dimension(format!(
                "Sigma must be {n}x{n}, got dimension {}",
                sigma.dim()
            )));
        }
        check_finite(a.as_slice(), "A")?;
        check_finite(b.as_slice(), "B")?;
        check_finite(c.as_slice(), "c")?;
        check_finite(mu.as_slice(), "mu")?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Invalid(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        let scale = 1.0 + sigma.to_matrix().amax();
        if !sigma.is_psd(PSD_TOL * scale) {
            return Err(Error::NotPositiveDefinite {
                what: "Sigma (semidefinite required)".into(),
            });
        }
        Ok(Self {
            a,
            b,
            c,
            mu,
            sigma,
            gamma,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `c + μ`, the mean drift entering the augmented dynamics.
    pub fn mean_drift(&self) -> DVector<f64> {
        &self.c + &self.mu
    }

    /// Mean of the successor state: `A x + B u + c + μ`.
    pub fn mean_successor(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + self.mean_drift()
    }

    /// Same system with the noise covariance multiplied by `factor`.
    pub fn with_scaled_covariance(&self, factor: f64) -> Result<AffineSystem> {
        AffineSystem::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.mu.clone(),
            self.sigma.scale(factor),
            self.gamma,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct AffineSystemRepr {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    gamma: f64,
}

impl TryFrom<AffineSystemRepr> for AffineSystem {
    type Error = Error;

    fn try_from(r: AffineSystemRepr) -> Result<Self> {
        AffineSystem::new(
            matrix_from_rows(&r.a)?,
            matrix_from_rows(&r.b)?,
            DVector::from_vec(r.c),
            DVector::from_vec(r.mu),
            SymMatrix::from_matrix(&matrix_from_rows(&r.sigma)?)?,
            r.gamma,
        )
    }
}

impl From<AffineSystem> for AffineSystemRepr {
    fn from(s: AffineSystem) -> Self {
        AffineSystemRepr {
            a: matrix_to_rows(&s.a),
            b: matrix_to_rows(&s.b),
            c: s.c.as_slice().to_vec(),
            mu: s.mu.as_slice().to_vec(),
            sigma: matrix_to_rows(&s.sigma.to_matrix()),
            gamma: s.gamma,
        }
    }
}

// ── StageCost ────────────────────────────────────────────────────────

/// Generalized quadratic stage cost
/// `ℓ(x, u) = [x; u]ᵀ L [x; u] + 2 [x; u]ᵀ L_ℓ + L_c` with
/// `L = [[Lxx, Lxu], [Lxuᵀ, Luu]]` and `L_ℓ = [Lx; Lu]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "StageCostRepr", into = "StageCostRepr")]
pub struct StageCost {
    lxx: DMatrix<f64>,
    lxu: DMatrix<f64>,
    luu: DMatrix<f64>,
    lx: DVector<f64>,
    lu: DVector<f64>,
    lc: f64,
}

impl StageCost {
    /// Validates that `L` is symmetric PSD and `Luu` is positive definite
    /// (required for unique inner minimizers).
    pub fn new(
        lxx: DMatrix<f64>,
        lxu: DMatrix<f64>,
        luu: DMatrix<f64>,
        lx: DVector<f64>,
        lu: DVector<f64>,
        lc: f64,
    ) -> Result<Self> {
        let n = lxx.nrows();
        let m = luu.nrows();
        if lxx.ncols() != n || luu.ncols() != m {
            return Err(Error::Dimension("Lxx and Luu must be square".into()));
        }
        if lxu.nrows() != n || lxu.ncols() != m {
            return Err(Error::Dimension(format!(
                "Lxu must be {n}x{m}, got {}x{}",
                lxu.nrows(),
                lxu.ncols()
            )));
        }
        if lx.len() != n || lu.len() != m {
            return Err(Error::Dimension(
                "Lx and Lu lengths must match Lxx and Luu".into(),
            ));
        }
        if !lc.is_finite() {
            return Err(Error::Invalid("Lc must be finite".into()));
        }
        let cost = Self {
            lxx,
            lxu,
            luu,
            lx,
            lu,
            lc,
        };
        let l = SymMatrix::from_matrix(&cost.l_matrix())?;
        let scale = 1.0 + cost.l_matrix().amax();
        if !l.is_psd(PSD_TOL * scale) {
            return Err(Error::NotPositiveDefinite {
                what: "stage-cost matrix L".into(),
            });
        }
        if cost.luu.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { what: "Luu".into() });
        }
        Ok(cost)
    }

    /// `ℓ(x, u) = xᵀ x + uᵀ u`.
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            lxx: DMatrix::identity(n, n),
            lxu: DMatrix::zeros(n, m),
            luu: DMatrix::identity(m, m),
            lx: DVector::zeros(n),
            lu: DVector::zeros(m),
            lc: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.lxx.nrows()
    }

    pub fn m(&self) -> usize {
        self.luu.nrows()
    }

    pub fn lxx(&self) -> &DMatrix<f64> {
        &self.lxx
    }

    pub fn lxu(&self) -> &DMatrix<f64> {
        &self.lxu
    }

    pub fn luu(&self) -> &DMatrix<f64> {
        &self.luu
    }

    pub fn lx(&self) -> &DVector<f64> {
        &self.lx
    }

    pub fn lu(&self) -> &DVector<f64> {
        &self.lu
    }

    pub fn lc(&self) -> f64 {
        self.lc
    }

    /// The full `(n+m) x (n+m)` quadratic block `L`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut l = DMatrix::zeros(n + m, n + m);
        l.view_mut((0, 0), (n, n)).copy_from(&self.lxx);
        l.view_mut((0, n), (n, m)).copy_from(&self.lxu);
        l.view_mut((n, 0), (m, n)).copy_from(&self.lxu.transpose());
        l.view_mut((n, n), (m, m)).copy_from(&self.luu);
        l
    }

    /// The linear block `L_ℓ = [Lx; Lu]`.
    pub fn l_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n() + self.m());
        v.rows_mut(0, self.n()).copy_from(&self.lx);
        v.rows_mut(self.n(), self.m()).copy_from(&self.lu);
        v
    }

    /// Evaluates `ℓ(x, u)`.
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let qx = (x.transpose() * &self.lxx * x)[(0, 0)];
        let qxu = (x.transpose() * &self.lxu * u)[(0, 0)];
        let qu = (u.transpose() * &self.luu * u)[(0, 0)];
        qx + 2.0 * qxu + qu + 2.0 * (x.dot(&self.lx) + u.dot(&self.lu)) + self.lc
    }

    /// Every block multiplied by `factor`.
    pub fn scale(&self, factor: f64) -> StageCost {
        StageCost {
            lxx: &self.lxx * factor,
            lxu: &self.lxu * factor,
            luu: &self.luu * factor,
            lx: &self.lx * factor,
            lu: &self.lu * factor,
            lc: self.lc * factor,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StageCostRepr {
    lxx: Vec<Vec<f64>>,
    lxu: Vec<Vec<f64>>,
    luu: Vec<Vec<f64>>,
    lx: Vec<f64>,
    lu: Vec<f64>,
    lc: f64,
}

impl TryFrom<StageCostRepr> for StageCost {
    type Error = Error;

    fn try_from(r: StageCostRepr) -> Result<Self> {
        StageCost::new(
            matrix_from_rows(&r.lxx)?,
            matrix_from_rows(&r.lxu)?,
            matrix_from_rows(&r.luu)?,
            DVector::from_vec(r.lx),
            DVector::from_vec(r.lu),
            r.lc,
        )
    }
}

impl From<StageCost> for StageCostRepr {
    fn from(c: StageCost) -> Self {
        StageCostRepr {
            lxx: matrix_to_rows(&c.lxx),
            lxu: matrix_to_rows(&c.lxu),
            luu: matrix_to_rows(&c.luu),
            lx: c.lx.as_slice().to_vec(),
            lu: c.lu.as_slice().to_vec(),
            lc: c.lc,
        }
    }
}

// ── Augmentation ─────────────────────────────────────────────────────

/// System and cost blocks in augmented coordinates `x̃ = [x; 1]`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub atil: DMatrix<f64>,
    pub btil: DMatrix<f64>,
    pub sigma_til: SymMatrix,
    pub ltil_xx: SymMatrix,
    pub ltil_xu: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub gamma: f64,
}

/// Assembles the augmented blocks
/// `Ã = [[A, c+μ], [0, 1]]`, `B̃ = [[B], [0]]`, `Σ̃ = [[Σ, 0], [0, 0]]`,
/// `L̃xx = [[Lxx, Lx], [Lxᵀ, Lc]]`, `L̃xu = [[Lxu], [Luᵀ]]`.
pub fn augment(sys: &AffineSystem, cost: &StageCost) -> AugmentedSystem {
    let (n, m) = (sys.n(), sys.m());
    let drift = sys.mean_drift();

    let mut atil = DMatrix::zeros(n + 1, n + 1);
    atil.view_mut((0, 0), (n, n)).copy_from(sys.a());
    atil.view_mut((0, n), (n, 1)).copy_from(&drift);
    atil[(n, n)] = 1.0;

    let mut btil = DMatrix::zeros(n + 1, m);
    btil.view_mut((0, 0), (n, m)).copy_from(sys.b());

    let sigma_til = SymMatrix::from_fn(n + 1, |i, j| {
        if i < n && j < n {
            sys.sigma().get(i, j)
        } else {
            0.0
        }
    });

    let ltil_xx = SymMatrix::from_fn(n + 1, |i, j| match (i < n, j < n) {
        (true, true) => cost.lxx()[(i, j)],
        (true, false) => cost.lx()[i],
        (false, true) => cost.lx()[j],
        (false, false) => cost.lc(),
    });

    let mut ltil_xu = DMatrix::zeros(n + 1, m);
    ltil_xu.view_mut((0, 0), (n, m)).copy_from(cost.lxu());
    ltil_xu
        .view_mut((n, 0), (1, m))
        .copy_from(&cost.lu().transpose());

    AugmentedSystem {
        atil,
        btil,
        sigma_til,
        ltil_xx,
        ltil_xu,
        luu: cost.luu().clone(),
        gamma: sys.gamma(),
    }
}

impl AugmentedSystem {
    /// State dimension of the augmented coordinates (`n + 1`).
    pub fn dim(&self) -> usize {
        self.atil.nrows()
    }

    /// Evaluates the augmented stage cost at `x̃`; equals `ℓ(x, u)` when
    /// `x̃ = [x; 1]`.
    pub fn stage_cost(&self, xtil: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let lxx = self.ltil_xx.to_matrix();
        let qx = (xtil.transpose() * &lxx * xtil)[(0, 0)];
        let qxu = (xtil.transpose() * &self.ltil_xu * u)[(0, 0)];
        let qu = (u.transpose() * &self.luu * u)[(0, 0)];
        qx + 2.0 * qxu + qu
    }
}

// ── Noise sampling and simulation ────────────────────────────────────

/// Draws `ξ ~ (μ, Σ)` Gaussian. The factor of `Σ` is precomputed once via a
/// symmetric eigendecomposition, so semidefinite covariances are fine.
///
/// Only the first two moments enter any closed form in this crate; the
/// Gaussian family is the sampling choice, and any distribution matching
/// `(μ, Σ)` yields the same expected quantities.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl NoiseSampler {
    pub fn new(mean: &DVector<f64>, sigma: &SymMatrix) -> Result<Self> {
        if mean.len() != sigma.dim() {
            return Err(Error::Dimension(
                "noise mean and covariance disagree".into(),
            ));
        }
        let eig = sigma.to_matrix().symmetric_eigen();
        let scale = 1.0 + eig.eigenvalues.amax();
        let mut sqrt = DMatrix::zeros(sigma.dim(), sigma.dim());
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < -PSD_TOL * scale {
                return Err(Error::NotPositiveDefinite {
                    what: "noise covariance".into(),
                });
            }
            sqrt[(i, i)] = lambda.max(0.0).sqrt();
        }
        let factor = &eig.eigenvectors * sqrt;
        Ok(Self {
            mean: mean.clone(),
            factor,
        })
    }

    pub fn for_system(sys: &AffineSystem) -> Result<Self> {
        Self::new(sys.mu(), sys.sigma())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

/// One transition of the plant: draws `ξ`, returns `(x⁺, ξ)` so the noise
/// record can be kept.
pub fn step(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let sampler = NoiseSampler::for_system(sys)?;
    Ok(step_with(sys, x, u, &sampler, rng))
}

/// Like [`step`] with a caller-held sampler, avoiding refactorization in
/// loops.
pub fn step_with(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    sampler: &NoiseSampler,
    rng: &mut impl Rng,
) -> (DVector<f64>, DVector<f64>) {
    let xi = sampler.sample(rng);
    let xplus = sys.a() * x + sys.b() * u + sys.c() + &xi;
    (xplus, xi)
}

/// Rolls out a single trajectory under the given input sequence (one column
/// per step) and records the noise realizations.
pub fn simulate(
    sys: &AffineSystem,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let d = inputs.ncols();
    if d == 0 {
        return Err(Error::Invalid(
            "trajectory length must be at least 1".into(),
        ));
    }
    if inputs.nrows() != sys.m() {
        return Err(Error::Dimension(format!(
            "input sequence has {} rows, system has m = {}",
            inputs.nrows(),
            sys.m()
        )));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension("x0 length must equal n".into()));
    }
    let sampler = NoiseSampler::for_system(sys)?;
    let n = sys.n();
    let mut x = DMatrix::zeros(n, d);
    let mut xplus = DMatrix::zeros(n, d);
    let mut omega = DMatrix::zeros(n, d);
    let mut cur = x0.clone();
    for k in 0..d {
        let u = inputs.column(k).into_owned();
        let (next, xi) = step_with(sys, &cur, &u, &sampler, rng);
        x.set_column(k, &cur);
        xplus.set_column(k, &next);
        omega.set_column(k, &xi);
        cur = next;
    }
    Dataset::new(x, inputs.clone(), xplus, Some(omega), None, true)
}

// ── Dataset ──────────────────────────────────────────────────────────

/// Column-stacked observations `(X, U, X⁺)`, optionally with the noise record
/// `Ω` and outputs `Y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    xplus: DMatrix<f64>,
    omega: Option<DMatrix<f64>>,
    y: Option<DMatrix<f64>>,
    single_trajectory: bool,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        xplus: DMatrix<f64>,
        omega: Option<DMatrix<f64>>,
        y: Option<DMatrix<f64>>,
        single_trajectory: bool,
    ) -> Result<Self> {
        let d = x.ncols();
        let n = x.nrows();
        if u.ncols() != d || xplus.ncols() != d {
            return Err(Error::Dimension(
                "X, U and X+ must share their width".into(),
            ));
        }
        if xplus.nrows() != n {
            return Err(Error::Dimension("X and X+ must share their height".into()));
        }
        if let Some(om) = &omega {
            if om.ncols() != d || om.nrows() != n {
                return Err(Error::Dimension("Omega must have the shape of X".into()));
            }
        }
        if let Some(y) = &y {
            if y.ncols() != d {
                return Err(Error::Dimension("Y must share the dataset width".into()));
            }
        }
        check_finite(x.as_slice(), "X")?;
        check_finite(u.as_slice(), "U")?;
        check_finite(xplus.as_slice(), "X+")?;
        if single_trajectory {
            for k in 0..d.saturating_sub(1) {
                if x.column(k + 1) != xplus.column(k) {
                    return Err(Error::NotSingleTrajectory);
                }
            }
        }
        Ok(Self {
            x,
            u,
            xplus,
            omega,
            y,
            single_trajectory,
        })
    }

    /// Number of recorded transitions.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn xplus(&self) -> &DMatrix<f64> {
        &self.xplus
    }

    pub fn omega(&self) -> Option<&DMatrix<f64>> {
        self.omega.as_ref()
    }

    pub fn y(&self) -> Option<&DMatrix<f64>> {
        self.y.as_ref()
    }

    pub fn is_single_trajectory(&self) -> bool {
        self.single_trajectory
    }

    /// Largest absolute entry of the recorded noise; `None` when no record
    /// is present.
    pub fn max_recorded_noise(&self) -> Option<f64> {
        self.omega.as_ref().map(|om| om.amax())
    }

    /// Attaches outputs `y = C x + D u + r` computed from the stored data.
    pub fn with_output_map(
        &self,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
        r: &DVector<f64>,
    ) -> Result<Dataset> {
        if c.ncols() != self.n() || d.ncols() != self.m() || c.nrows() != d.nrows() {
            return Err(Error::Dimension("output map shapes disagree".into()));
        }
        if r.len() != c.nrows() {
            return Err(Error::Dimension("output offset length disagrees".into()));
        }
        let ones = DMatrix::from_element(1, self.len(), 1.0);
        let y = c * &self.x + d * &self.u + r * ones;
        let mut out = self.clone();
        out.y = Some(y);
        Ok(out)
    }

    /// The full state sequence of a single trajectory: the columns of `X`
    /// followed by the final successor state.
    pub fn state_sequence(&self) -> Result<DMatrix<f64>> {
        if !self.single_trajectory {
            return Err(Error::NotSingleTrajectory);
        }
        let d = self.len();
        let mut seq = DMatrix::zeros(self.n(), d + 1);
        seq.view_mut((0, 0), (self.n(), d)).copy_from(&self.x);
        seq.set_column(d, &self.xplus.column(d - 1).into_owned());
        Ok(seq)
    }
}

// ── Controllability ──────────────────────────────────────────────────

/// Kalman controllability matrix `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    ctrb
}

/// Full-rank test of the controllability matrix.
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>, rank_tol: f64) -> Result<bool> {
    let rank = crate::numerics::numerical_rank(&controllability_matrix(a, b), rank_tol)?;
    Ok(rank == a.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DEFAULT_RANK_TOL;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn scalar_system(a: f64, b: f64, c: f64, sigma: f64, gamma: f64) -> AffineSystem {
        AffineSystem::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DVector::from_row_slice(&[c]),
            DVector::zeros(1),
            SymMatrix::from_matrix(&DMatrix::from_row_slice(1, 1, &[sigma])).unwrap(),
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn gamma_bounds_enforced() {
        for gamma in [0.0, 1.0, -0.1, 1.5] {
            assert!(AffineSystem::new(
                DMatrix::identity(1, 1),
                DMatrix::identity(1, 1),
                DVector::zeros(1),
                DVector::zeros(1),
                SymMatrix::zeros(1),
                gamma,
            )
            .is_err());
        }
    }

    #[test]
    fn sigma_must_be_psd() {
        assert!(AffineSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            SymMatrix::from_matrix(&DMatrix::from_row_slice(1, 1, &[-0.5])).unwrap(),
            0.9,
        )
        .is_err());
    }

    #[test]
    fn luu_must_be_positive_definite() {
        assert!(StageCost::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            0.0,
        )
        .is_err());
    }

    #[test]
    fn augment_scalar_blocks() {
        let sys = scalar_system(0.5, 1.0, 1.0, 0.0, 0.9);
        let aug = augment(&sys, &StageCost::identity(1, 1));
        assert_eq!(
            aug.atil,
            DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 1.0])
        );
        assert_eq!(aug.btil, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn augment_sigma_padding() {
        let sys = scalar_system(0.5, 1.0, 0.0, 2.0, 0.9);
        let aug = augment(&sys, &StageCost::identity(1, 1));
        assert_eq!(
            aug.sigma_til.to_matrix(),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn augmented_cost_matches_original() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (n, m) = (2, 2);
        let g = DMatrix::from_fn(n + m + 1, n + m + 1, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let e = g.transpose() * &g;
        let mut luu = e.view((n, n), (m, m)).into_owned();
        luu += DMatrix::identity(m, m) * 0.3;
        let cost = StageCost::new(
            e.view((0, 0), (n, n)).into_owned(),
            e.view((0, n), (n, m)).into_owned(),
            luu,
            e.view((0, n + m), (n, 1)).column(0).into_owned(),
            e.view((n, n + m), (m, 1)).column(0).into_owned(),
            e[(n + m, n + m)],
        )
        .unwrap();
        let sys = AffineSystem::new(
            DMatrix::from_fn(n, n, |_, _| {
                0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }),
            DMatrix::from_fn(n, m, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            }),
            DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal)),
            DVector::zeros(n),
            SymMatrix::zeros(n),
            0.9,
        )
        .unwrap();
        let aug = augment(&sys, &cost);
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let u = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let mut xtil = DVector::zeros(n + 1);
            xtil.rows_mut(0, n).copy_from(&x);
            xtil[n] = 1.0;
            assert_abs_diff_eq!(cost.eval(&x, &u), aug.stage_cost(&xtil, &u), epsilon = 1e-9);
        }
    }

    #[test]
    fn augmented_spectrum_gains_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 3;
        let a = DMatrix::from_fn(n, n, |_, _| {
            0.4 * rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let sys = AffineSystem::new(
            a.clone(),
            DMatrix::from_fn(n, 1, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            }),
            DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal)),
            DVector::zeros(n),
            SymMatrix::zeros(n),
            0.9,
        )
        .unwrap();
        let aug = augment(&sys, &StageCost::identity(n, 1));
        let mut orig: Vec<(f64, f64)> = a
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        orig.push((1.0, 0.0));
        let mut augd: Vec<(f64, f64)> = aug
            .atil
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        orig.sort_by(|p, q| p.partial_cmp(q).unwrap());
        augd.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for (o, g) in orig.iter().zip(&augd) {
            assert_abs_diff_eq!(o.0, g.0, epsilon = 1e-8);
            assert_abs_diff_eq!(o.1.abs(), g.1.abs(), epsilon = 1e-8);
        }
    }

    #[test]
    fn step_identity_deterministic() {
        let sys = AffineSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DVector::zeros(2),
            DVector::zeros(2),
            SymMatrix::zeros(2),
            0.9,
        );
        // B = 0 columns are rejected only when m = 0; a zero column is fine
        let sys = sys.unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = DVector::from_row_slice(&[1.5, -2.0]);
        let (xp, xi) = step(&sys, &x, &DVector::zeros(1), &mut rng).unwrap();
        assert_abs_diff_eq!((xp - &x).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(xi, DVector::zeros(2));
    }

    #[test]
    fn step_deterministic_limit() {
        let sys = scalar_system(0.7, 2.0, 0.4, 0.0, 0.9);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (xp, _) = step(
            &sys,
            &DVector::from_row_slice(&[1.0]),
            &DVector::from_row_slice(&[0.5]),
            &mut rng,
        )
        .unwrap();
        assert_abs_diff_eq!(xp[0], 0.7 + 1.0 + 0.4, epsilon = 1e-14);
    }

    #[test]
    fn noise_sample_mean_matches_mu() {
        let n = 2;
        let mu = DVector::from_row_slice(&[0.3, -0.7]);
        let sigma =
            SymMatrix::from_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.5])).unwrap();
        let sampler = NoiseSampler::new(&mu, &sigma).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let reps = 100_000;
        let mut mean = DVector::zeros(n);
        for _ in 0..reps {
            mean += sampler.sample(&mut rng);
        }
        mean /= reps as f64;
        for i in 0..n {
            let sd = sigma.get(i, i).sqrt();
            assert!(
                (mean[i] - mu[i]).abs() <= 4.0 * sd / (reps as f64).sqrt(),
                "component {i}: {} vs {}",
                mean[i],
                mu[i]
            );
        }
    }

    #[test]
    fn simulate_single_transition() {
        let sys = scalar_system(0.5, 1.0, 0.0, 0.0, 0.9);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let ds = simulate(
            &sys,
            &DVector::zeros(1),
            &DMatrix::from_row_slice(1, 1, &[2.0]),
            &mut rng,
        )
        .unwrap();
        assert_eq!(ds.len(), 1);
        assert_abs_diff_eq!(ds.xplus()[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn simulate_deterministic_hand_iteration() {
        let sys = scalar_system(1.0, 1.0, 1.0, 0.0, 0.9);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let ds = simulate(&sys, &DVector::zeros(1), &DMatrix::zeros(1, 3), &mut rng).unwrap();
        assert_eq!(ds.x().as_slice(), &[0.0, 1.0, 2.0]);
        assert_eq!(ds.xplus().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(ds.is_single_trajectory());
    }

    #[test]
    fn simulate_noise_record_is_exact() {
        let sys = AffineSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.6]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.3]),
            DVector::from_row_slice(&[0.2, -0.1]),
            DVector::from_row_slice(&[0.05, 0.0]),
            SymMatrix::from_matrix(&DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2])).unwrap(),
            0.9,
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let inputs = DMatrix::from_fn(1, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ds = simulate(&sys, &DVector::zeros(2), &inputs, &mut rng).unwrap();
        let ones = DMatrix::from_element(1, 10, 1.0);
        let reconstructed = ds.xplus() - sys.a() * ds.x() - sys.b() * ds.u() - sys.c() * ones;
        let diff = (&reconstructed - ds.omega().unwrap()).amax();
        assert!(diff <= 1e-12, "noise record mismatch: {diff}");
    }

    #[test]
    fn simulate_is_seed_reproducible() {
        let sys = scalar_system(0.8, 1.0, 0.1, 0.5, 0.9);
        let inputs = DMatrix::from_row_slice(1, 5, &[1.0, -1.0, 0.5, 0.0, 2.0]);
        let run = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            simulate(&sys, &DVector::zeros(1), &inputs, &mut rng).unwrap()
        };
        let (a, b) = (run(42), run(42));
        assert_eq!(a.x(), b.x());
        assert_eq!(a.xplus(), b.xplus());
        assert_eq!(a.omega().unwrap(), b.omega().unwrap());
    }

    #[test]
    fn stage_cost_eval_cases() {
        let cost = StageCost::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
            0.75,
        )
        .unwrap();
        assert_abs_diff_eq!(cost.eval(&DVector::zeros(1), &DVector::zeros(1)), 0.75);

        let pure_state = StageCost::identity(1, 1);
        assert_abs_diff_eq!(
            pure_state.eval(&DVector::from_row_slice(&[3.0]), &DVector::zeros(1)),
            9.0
        );
    }

    #[test]
    fn dataset_rejects_broken_chain() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 5.0]);
        let u = DMatrix::zeros(1, 2);
        let xplus = DMatrix::from_row_slice(1, 2, &[1.0, 6.0]);
        assert!(matches!(
            Dataset::new(x, u, xplus, None, None, true),
            Err(Error::NotSingleTrajectory)
        ));
    }

    #[test]
    fn controllability_detects_uncontrollable_pair() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(!is_controllable(&a, &b, DEFAULT_RANK_TOL).unwrap());
        let b_full = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let a_mix = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.7]);
        assert!(is_controllable(&a_mix, &b_full, DEFAULT_RANK_TOL).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let sys = scalar_system(0.8, 1.0, 0.1, 0.5, 0.9);
        let s = serde_json::to_string(&sys).unwrap();
        let back: AffineSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back.a(), sys.a());
        assert_eq!(back.gamma(), sys.gamma());

        let cost = StageCost::identity(2, 1);
        let s = serde_json::to_string(&cost).unwrap();
        let back: StageCost = serde_json::from_str(&s).unwrap();
        assert_eq!(back.lxx(), cost.lxx());
    }
}
