//! Experiment configuration: JSON schema, validation, seed handling and the
//! config hash embedded in every report.

use affinelp::model::{is_controllable, AffineSystem, StageCost};
use affinelp::numerics::{matrix_from_rows, SymMatrix, DEFAULT_RANK_TOL};
use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Mandatory master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub system: SystemSpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    /// Excitation order to certify; defaults to `n + horizon + 1`.
    #[serde(default)]
    pub pe_order: Option<usize>,
    /// Trajectory-representation horizon `L`.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub targets: TargetSpec,
    #[serde(default)]
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub lp: LpSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SystemSpec {
    /// Fully specified matrices.
    Explicit {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        gamma: f64,
    },
    /// Random controllable ensemble member.
    Random {
        n: usize,
        m: usize,
        gamma: f64,
        #[serde(default = "default_radius")]
        spectral_radius: f64,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
        #[serde(default = "default_drift_scale")]
        drift_scale: f64,
    },
}

fn default_radius() -> f64 {
    0.85
}

fn default_noise_scale() -> f64 {
    0.0
}

fn default_drift_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CostSpec {
    /// `ℓ(x, u) = xᵀx + uᵀu`.
    #[default]
    Identity,
    Explicit {
        lxx: Vec<Vec<f64>>,
        lxu: Vec<Vec<f64>>,
        luu: Vec<Vec<f64>>,
        lx: Vec<f64>,
        lu: Vec<f64>,
        lc: f64,
    },
    /// Random PSD cost with positive definite `Luu`.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Number of recorded transitions; when absent, twice the minimal
    /// admissible excitation length is used.
    #[serde(default)]
    pub length: Option<usize>,
    #[serde(default = "one")]
    pub input_scale: f64,
    /// Initial state; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            length: None,
            input_scale: 1.0,
            x0: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WMode {
    /// Probe actions drawn independently; the model-free default. Finite
    /// sampled LPs built this way approximate the fixed point from above
    /// and generally need the variable box.
    #[default]
    Gaussian,
    /// Targets along greedy closed-loop chains of the configured system;
    /// requires the model and makes the LP recovery exact.
    OracleGreedy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Gaussian-cloud size; 0 picks `3p`.
    #[serde(default)]
    pub count: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub w_mode: WMode,
    /// Chain count and length for [`WMode::OracleGreedy`].
    #[serde(default = "default_chain_starts")]
    pub chain_starts: usize,
    #[serde(default = "default_chain_steps")]
    pub chain_steps: usize,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            count: 0,
            scale: 1.0,
            w_mode: WMode::Gaussian,
            chain_starts: default_chain_starts(),
            chain_steps: default_chain_steps(),
        }
    }
}

fn default_chain_starts() -> usize {
    6
}

fn default_chain_steps() -> usize {
    80
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    #[default]
    Gaussian,
    /// Negative control: reuse the recorded inputs as probes; the rank
    /// condition then fails by construction.
    CopyInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    #[default]
    Free,
    EqualizeNorm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSpec {
    #[serde(default)]
    pub mode: SynthMode,
    #[serde(default = "default_spread_tol")]
    pub alpha_spread_tol: f64,
    #[serde(default = "one")]
    pub probe_scale: f64,
    #[serde(default)]
    pub probe_mode: ProbeMode,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            mode: SynthMode::Free,
            alpha_spread_tol: default_spread_tol(),
            probe_scale: 1.0,
            probe_mode: ProbeMode::Gaussian,
        }
    }
}

fn default_spread_tol() -> f64 {
    affinelp::synthesis::DEFAULT_SPREAD_TOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSpec {
    /// Symmetric variable box `|θᵢ| ≤ bound`; `null` disables it.
    #[serde(default = "default_bound")]
    pub bound: Option<f64>,
    #[serde(default = "default_objective_samples")]
    pub objective_samples: usize,
    #[serde(default = "one")]
    pub objective_scale: f64,
}

impl Default for LpSpec {
    fn default() -> Self {
        Self {
            bound: default_bound(),
            objective_samples: default_objective_samples(),
            objective_scale: 1.0,
        }
    }
}

fn default_bound() -> Option<f64> {
    Some(affinelp::lp::DEFAULT_VAR_BOUND)
}

fn default_objective_samples() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tolerances {
    #[serde(default = "default_rank_tol")]
    pub rank: f64,
    /// Feasibility slack accepted when validating LP solutions and oracle
    /// comparisons in reports.
    #[serde(default = "default_lp_tol")]
    pub lp: f64,
    #[serde(default = "default_residual_tol")]
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: default_rank_tol(),
            lp: default_lp_tol(),
            residual: default_residual_tol(),
        }
    }
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

fn default_lp_tol() -> f64 {
    1e-9
}

fn default_residual_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySpec {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            grid_points: default_grid_points(),
            n_max: default_n_max(),
            m_max: default_m_max(),
        }
    }
}

fn default_instances() -> usize {
    20
}

fn default_grid_points() -> usize {
    100
}

fn default_n_max() -> usize {
    4
}

fn default_m_max() -> usize {
    2
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).context("config is not valid json for the schema")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        match &self.system {
            SystemSpec::Explicit { .. } => {
                // full validation happens on materialization
            }
            SystemSpec::Random { n, m, gamma, .. } => {
                if *n == 0 || *m == 0 {
                    bail!("random system needs n >= 1 and m >= 1");
                }
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    bail!("gamma must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical JSON encoding; embedded in reports so
    /// outputs can be traced to their configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Stage-specific deterministic rng stream.
    pub fn rng(&self, stage: &str) -> ChaCha12Rng {
        let mut salt: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in stage.as_bytes() {
            salt ^= u64::from(*byte);
            salt = salt.wrapping_mul(0x0000_0100_0000_01b3);
        }
        rand_chacha::ChaCha12Rng::seed_from_u64(self.seed ^ salt)
    }

    /// Materializes the system, drawing from the ensemble when random.
    pub fn system(&self) -> Result<AffineSystem> {
        match &self.system {
            SystemSpec::Explicit {
                a,
                b,
                c,
                mu,
                sigma,
                gamma,
            } => {
                let sys = AffineSystem::new(
                    matrix_from_rows(a)?,
                    matrix_from_rows(b)?,
                    DVector::from_vec(c.clone()),
                    DVector::from_vec(mu.clone()),
                    SymMatrix::from_matrix(&matrix_from_rows(sigma)?)?,
                    *gamma,
                )?;
                Ok(sys)
            }
            SystemSpec::Random {
                n,
                m,
                gamma,
                spectral_radius,
                noise_scale,
                drift_scale,
            } => {
                let mut rng = self.rng("system");
                Ok(random_system(
                    &mut rng,
                    *n,
                    *m,
                    *gamma,
                    *spectral_radius,
                    *noise_scale,
                    *drift_scale,
                    self.tolerances.rank,
                )?)
            }
        }
    }

    pub fn cost(&self, n: usize, m: usize) -> Result<StageCost> {
        match &self.cost {
            CostSpec::Identity => Ok(StageCost::identity(n, m)),
            CostSpec::Explicit {
                lxx,
                lxu,
                luu,
                lx,
                lu,
                lc,
            } => Ok(StageCost::new(
                matrix_from_rows(lxx)?,
                matrix_from_rows(lxu)?,
                matrix_from_rows(luu)?,
                DVector::from_vec(lx.clone()),
                DVector::from_vec(lu.clone()),
                *lc,
            )?),
            CostSpec::Random => {
                let mut rng = self.rng("cost");
                Ok(random_cost(&mut rng, n, m))
            }
        }
    }

    /// Trajectory length: configured, or minimal excitation length for the
    /// targeted order with a safety margin.
    pub fn trajectory_length(&self, n: usize, m: usize) -> usize {
        match self.trajectory.length {
            Some(d) => d,
            None => {
                let order = self.pe_order.unwrap_or(n + self.horizon + 1);
                2 * ((m + 1) * order - 1).max(n + 2 * m + 1)
            }
        }
    }
}

fn randn(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[allow(clippy::too_many_arguments)]
pub fn random_system(
    rng: &mut ChaCha12Rng,
    n: usize,
    m: usize,
    gamma: f64,
    spectral_radius: f64,
    noise_scale: f64,
    drift_scale: f64,
    rank_tol: f64,
) -> Result<AffineSystem> {
    for _ in 0..256 {
        let raw = DMatrix::from_fn(n, n, |_, _| randn(rng));
        let rho = raw
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max);
        let a = if rho > 1e-12 {
            raw * (spectral_radius / rho)
        } else {
            raw
        };
        let b = DMatrix::from_fn(n, m, |_, _| randn(rng));
        if !is_controllable(&a, &b, rank_tol)? {
            continue;
        }
        let g = DMatrix::from_fn(n, n, |_, _| randn(rng));
        let sigma = SymMatrix::from_matrix_symmetrized(
            &((&g * g.transpose()) * (noise_scale * noise_scale / n as f64)),
        )?;
        let c = DVector::from_fn(n, |_, _| drift_scale * randn(rng));
        let mu = DVector::zeros(n);
        let sys = AffineSystem::new(a, b, c, mu, sigma, gamma)?;
        if affinelp::fixedpoint::check_stabilizable(&sys, rank_tol).is_ok() {
            return Ok(sys);
        }
    }
    bail!("could not draw a controllable stabilizable system in 256 attempts")
}

pub fn random_cost(rng: &mut ChaCha12Rng, n: usize, m: usize) -> StageCost {
    let dim = n + m + 1;
    let g = DMatrix::from_fn(dim, dim, |_, _| randn(rng));
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
    .expect("constructed cost is valid")
}
