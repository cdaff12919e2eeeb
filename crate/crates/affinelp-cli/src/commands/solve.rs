//! `affinelp solve`: assemble the relaxed Q-LP from the synthesized rows,
//! solve it, extract the policy, and score everything against the
//! closed-form oracles when the model is available.

use super::{maybe_json, read_cost, Context, Provenance};
use crate::Outcome;
use affinelp::lp::{build_objective, build_relaxed_qlp, extract_policy, solve, LpStatus};
use anyhow::{Context as _, Result};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Deserialize)]
struct SynthHeader {
    n: usize,
    m: usize,
    mixed_covariance: bool,
    alpha_norm_sq_max: f64,
}

#[derive(Deserialize)]
struct ObjectiveHint {
    samples: Vec<ObjectiveSample>,
}

#[derive(Deserialize)]
struct ObjectiveSample {
    x: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Serialize)]
struct OracleMetrics {
    policy_error: f64,
    theta_vs_relaxed: f64,
    theta_vs_biased: f64,
    biased_alpha_norm_sq: f64,
}

#[derive(Serialize)]
struct SolveOutput {
    #[serde(flatten)]
    provenance: Provenance,
    status: LpStatus,
    objective_value: f64,
    iterations: usize,
    rows: usize,
    mixed_covariance_warning: bool,
    oracle: Option<OracleMetrics>,
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    ctx.ensure_out()?;
    let header: SynthHeader = affinelp::io::load_json(ctx.path("synth_summary.json"))
        .context("cannot read synth_summary.json (run `affinelp synth` first?)")?;
    let csv = std::fs::read_to_string(ctx.path("constraints.csv"))
        .context("cannot read constraints.csv (run `affinelp synth` first?)")?;
    let rows = affinelp::io::constraints_from_csv(&csv, header.n, header.m)?;

    // synth records the chain starts when it used occupancy targets; the LP
    // pins the fixed point only when the objective is the empirical measure
    // over exactly those starts
    let samples: Vec<(DVector<f64>, DVector<f64>)> =
        match maybe_json::<ObjectiveHint>(&ctx.path("objective_hint.json"))? {
            Some(hint) => hint
                .samples
                .into_iter()
                .map(|s| (DVector::from_vec(s.x), DVector::from_vec(s.u)))
                .collect(),
            None => {
                let mut rng = ctx.config.rng("objective");
                let scale = ctx.config.lp.objective_scale;
                (0..ctx.config.lp.objective_samples.max(1))
                    .map(|_| {
                        (
                            DVector::from_fn(header.n, |_, _| {
                                scale * rng.sample::<f64, _>(StandardNormal)
                            }),
                            DVector::from_fn(header.m, |_, _| {
                                scale * rng.sample::<f64, _>(StandardNormal)
                            }),
                        )
                    })
                    .collect()
            }
        };
    let objective = build_objective(&samples, None)?;
    let lp = build_relaxed_qlp(&rows, objective, ctx.config.lp.bound)?;
    let sol = solve(&lp)?;

    if header.mixed_covariance {
        ctx.say(
            "warning: constraint rows carry mixed |alpha|^2; the recovered constant blends \
             different fixed points",
        );
    }

    let usable = matches!(sol.status, LpStatus::Optimal | LpStatus::BoundActive);
    let policy = if usable {
        extract_policy(&sol, header.n, header.m).ok()
    } else {
        None
    };
    if let Some(policy) = &policy {
        ctx.write_json("policy.json", policy)?;
    }

    // oracle comparison when the model files are present
    let oracle = match (
        maybe_json::<affinelp::model::AffineSystem>(&ctx.path("system.json"))?,
        policy.as_ref(),
    ) {
        (Some(sys), Some(policy)) if usable => {
            let cost = read_cost(ctx)?;
            let forms = affinelp::fixedpoint::closed_forms(&sys, &cost)?;
            let alpha_sq = if header.alpha_norm_sq_max > 0.0 {
                header.alpha_norm_sq_max
            } else {
                1.0
            };
            let qbar = affinelp::fixedpoint::biased_q(&sys, &cost, alpha_sq)?;
            let theta = sol.theta_vector();
            Some(OracleMetrics {
                policy_error: policy.distance(&forms.policy),
                theta_vs_relaxed: (&theta - forms.relaxed.theta()).amax(),
                theta_vs_biased: (&theta - qbar.theta()).amax(),
                biased_alpha_norm_sq: alpha_sq,
            })
        }
        _ => None,
    };

    let output = SolveOutput {
        provenance: Provenance::new(&ctx.config),
        status: sol.status,
        objective_value: sol.objective_value,
        iterations: sol.iterations,
        rows: lp.rows.len(),
        mixed_covariance_warning: header.mixed_covariance,
        oracle,
    };
    ctx.write_json("solution.json", &output)?;
    ctx.say(format!(
        "lp status {:?} after {} pivots, objective {:.6}",
        sol.status, sol.iterations, sol.objective_value
    ));
    if let Some(metrics) = &output.oracle {
        ctx.say(format!(
            "policy error vs closed form: {:.3e}; theta error vs relaxed fixed point: {:.3e}",
            metrics.policy_error, metrics.theta_vs_relaxed
        ));
    }
    match sol.status {
        LpStatus::Optimal => Ok(Outcome::Pass),
        other => Ok(Outcome::Fail(format!(
            "lp did not reach a clean optimum: status {other:?} \
             (bound_active means the variable box is binding; add rows or widen the box)"
        ))),
    }
}
