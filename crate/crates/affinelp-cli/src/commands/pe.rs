//! `affinelp pe`: excitation certificate, stacked-rank check of the
//! fundamental lemma, and the confined-trajectory probe.

use super::{read_dataset, Context, Provenance};
use crate::Outcome;
use affinelp::excitation::{
    affine_subspace_probe, fundamental_lemma_rank, is_persistently_exciting, PeReport,
};
use anyhow::Result;
use serde::Serialize;

#[derive(Serialize)]
struct PeOutput {
    #[serde(flatten)]
    provenance: Provenance,
    order: usize,
    report: PeReport,
    /// Stacked-rank certificate at the configured horizon; absent for
    /// stochastic data where the deterministic theorem does not apply.
    fundamental_lemma_rank: Option<bool>,
    horizon: usize,
    /// Coordinate directions along which the state trajectory is constant.
    confined_directions: Vec<usize>,
}

pub fn run(ctx: &Context, order_override: Option<usize>) -> Result<Outcome> {
    ctx.ensure_out()?;
    let ds = read_dataset(ctx)?;
    let order = order_override
        .or(ctx.config.pe_order)
        .unwrap_or(ds.n() + ctx.config.horizon + 1);
    let rank_tol = ctx.config.tolerances.rank;

    let report = is_persistently_exciting(ds.u(), order, rank_tol)?;
    let deterministic = ds.max_recorded_noise().is_none_or(|v| v <= 1e-12);
    let fl = if deterministic && ds.is_single_trajectory() {
        Some(fundamental_lemma_rank(&ds, ctx.config.horizon, rank_tol)?)
    } else {
        None
    };
    let confined = if ds.is_single_trajectory() {
        affine_subspace_probe(&ds)?
    } else {
        Vec::new()
    };

    let is_pe = report.is_pe;
    if !report.length_sufficient {
        ctx.say(format!(
            "warning: d = {} is below the necessary excitation length {} for order {order}",
            ds.len(),
            (ds.m() + 1) * order - 1
        ));
    }
    let output = PeOutput {
        provenance: Provenance::new(&ctx.config),
        order,
        report,
        fundamental_lemma_rank: fl,
        horizon: ctx.config.horizon,
        confined_directions: confined.clone(),
    };
    ctx.write_json("pe_report.json", &output)?;
    ctx.say(format!(
        "excitation of order {order}: {} (rank {}/{}); confined directions: {confined:?}",
        if is_pe { "yes" } else { "no" },
        output.report.hankel_rank,
        output.report.required_rank,
    ));
    if is_pe {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(format!(
            "input is not persistently exciting of order {order} (rank {}/{})",
            output.report.hankel_rank, output.report.required_rank
        )))
    }
}
