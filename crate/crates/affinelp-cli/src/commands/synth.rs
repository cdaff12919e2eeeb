//! `affinelp synth`: draw probe actions, check the rank condition, pick the
//! target set, and synthesize one constraint row per target.

use super::{read_cost, read_dataset, read_system, Context, Provenance};
use crate::config::{ProbeMode, SynthMode, WMode};
use crate::Outcome;
use affinelp::excitation::rank_condition_details;
use affinelp::synthesis::{feature_dim, synthesize_batch, BatchMode, RhsSource, Target};
use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Serialize)]
pub struct ObjectiveSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Serialize)]
pub struct ObjectiveHint {
    pub samples: Vec<ObjectiveSample>,
}

#[derive(Serialize)]
struct SynthSummary {
    #[serde(flatten)]
    provenance: Provenance,
    n: usize,
    m: usize,
    gamma: f64,
    feature_dim: usize,
    rows: usize,
    targets: usize,
    failures: usize,
    alpha_norm_sq_min: f64,
    alpha_norm_sq_max: f64,
    alpha_spread: f64,
    equalized: bool,
    mixed_covariance: bool,
    w_mode: WMode,
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    ctx.ensure_out()?;
    let sys = read_system(ctx)?;
    let cost = read_cost(ctx)?;
    let ds = read_dataset(ctx)?;
    let (n, m, d) = (ds.n(), ds.m(), ds.len());
    let rank_tol = ctx.config.tolerances.rank;

    let mut rng = ctx.config.rng("synthesis");
    let probe_scale = ctx.config.synthesis.probe_scale;
    let w_probes = match ctx.config.synthesis.probe_mode {
        ProbeMode::Gaussian => DMatrix::from_fn(m, d, |_, _| {
            probe_scale * rng.sample::<f64, _>(StandardNormal)
        }),
        ProbeMode::CopyInputs => ds.u().clone(),
    };

    let (rank, required) = rank_condition_details(&ds, &w_probes, rank_tol)?;
    if rank != required {
        return Ok(Outcome::Fail(format!(
            "rank condition failed: stacked data matrix has rank {rank}, needs {required} \
             (d = {d}, probe mode {:?})",
            ctx.config.synthesis.probe_mode
        )));
    }

    let spec = &ctx.config.targets;
    let mut objective_hint: Option<ObjectiveHint> = None;
    let targets: Vec<Target> = match spec.w_mode {
        WMode::Gaussian => {
            let count = if spec.count > 0 {
                spec.count
            } else {
                3 * feature_dim(n, m)
            };
            (0..count)
                .map(|_| Target {
                    x: DVector::from_fn(n, |_, _| {
                        spec.scale * rng.sample::<f64, _>(StandardNormal)
                    }),
                    u: DVector::from_fn(m, |_, _| {
                        spec.scale * rng.sample::<f64, _>(StandardNormal)
                    }),
                    w: DVector::from_fn(m, |_, _| {
                        spec.scale * rng.sample::<f64, _>(StandardNormal)
                    }),
                })
                .collect()
        }
        WMode::OracleGreedy => {
            let policy = affinelp::fixedpoint::optimal_policy(&sys, &cost)?;
            let starts: Vec<(DVector<f64>, DVector<f64>)> = (0..spec.chain_starts)
                .map(|_| {
                    (
                        DVector::from_fn(n, |_, _| {
                            spec.scale * rng.sample::<f64, _>(StandardNormal)
                        }),
                        DVector::from_fn(m, |_, _| {
                            spec.scale * rng.sample::<f64, _>(StandardNormal)
                        }),
                    )
                })
                .collect();
            // the LP recovers the fixed point only when the objective is the
            // empirical measure over the chain starts; record them for solve
            objective_hint = Some(ObjectiveHint {
                samples: starts
                    .iter()
                    .map(|(x, u)| ObjectiveSample {
                        x: x.as_slice().to_vec(),
                        u: u.as_slice().to_vec(),
                    })
                    .collect(),
            });
            affinelp::synthesis::occupancy_targets(&sys, &policy, &starts, spec.chain_steps)
        }
    };

    let mode = match ctx.config.synthesis.mode {
        SynthMode::Free => BatchMode::Free {
            spread_tol: ctx.config.synthesis.alpha_spread_tol,
        },
        SynthMode::EqualizeNorm => BatchMode::EqualizeNorm {
            spread_tol: ctx.config.synthesis.alpha_spread_tol,
        },
    };
    let batch = synthesize_batch(
        &ds,
        &w_probes,
        &targets,
        mode,
        sys.gamma(),
        RhsSource::Cost(&cost),
        rank_tol,
    )?;

    let csv = affinelp::io::constraints_to_csv(&batch.rows, n, m)?;
    std::fs::write(ctx.path("constraints.csv"), csv)?;
    if let Some(hint) = &objective_hint {
        ctx.write_json("objective_hint.json", hint)?;
    }
    // zero noise VARIANCE makes every synthesized row exact (a constant
    // noise mean is fine: the combination reproduces it)
    let deterministic = ds
        .omega()
        .is_some_and(|om| (1..om.ncols()).all(|k| om.column(k) == om.column(0)));
    let summary = SynthSummary {
        provenance: Provenance::new(&ctx.config),
        n,
        m,
        gamma: sys.gamma(),
        feature_dim: feature_dim(n, m),
        rows: batch.rows.len(),
        targets: targets.len(),
        failures: batch.failures.len(),
        alpha_norm_sq_min: batch.norm_sqs.iter().cloned().fold(f64::MAX, f64::min),
        alpha_norm_sq_max: batch.norm_sqs.iter().cloned().fold(f64::MIN, f64::max),
        alpha_spread: batch.spread,
        equalized: batch.equalized,
        // without noise every row is exact, so differing weights blend nothing
        mixed_covariance: batch.mixed_covariance && !deterministic,
        w_mode: spec.w_mode,
    };
    ctx.write_json("synth_summary.json", &summary)?;
    ctx.say(format!(
        "synthesized {} rows ({} targets, |alpha|^2 spread {:.3e}{})",
        summary.rows,
        summary.targets,
        summary.alpha_spread,
        if summary.mixed_covariance {
            ", mixed covariance"
        } else {
            ""
        }
    ));
    if deterministic {
        ctx.say("deterministic data: synthesized rows are exact, estimator variance is zero");
    }
    Ok(Outcome::Pass)
}
