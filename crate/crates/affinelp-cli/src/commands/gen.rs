//! `affinelp gen`: materialize the system and cost, simulate one trajectory,
//! and write the four data files.

use super::{Context, Provenance};
use crate::Outcome;
use anyhow::{bail, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[derive(Serialize)]
struct GenSummary {
    #[serde(flatten)]
    provenance: Provenance,
    n: usize,
    m: usize,
    d: usize,
    gamma: f64,
    deterministic: bool,
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    ctx.ensure_out()?;
    let sys = ctx.config.system()?;
    affinelp::fixedpoint::check_stabilizable(&sys, ctx.config.tolerances.rank)?;
    let cost = ctx.config.cost(sys.n(), sys.m())?;
    if cost.n() != sys.n() || cost.m() != sys.m() {
        bail!(
            "cost dimensions ({}, {}) disagree with the system",
            cost.n(),
            cost.m()
        );
    }

    let d = ctx.config.trajectory_length(sys.n(), sys.m());
    if d == 0 {
        bail!("trajectory length must be at least 1");
    }
    let x0 = match &ctx.config.trajectory.x0 {
        Some(v) => {
            if v.len() != sys.n() {
                bail!("x0 has length {}, system has n = {}", v.len(), sys.n());
            }
            DVector::from_vec(v.clone())
        }
        None => DVector::zeros(sys.n()),
    };
    let mut rng = ctx.config.rng("trajectory");
    let scale = ctx.config.trajectory.input_scale;
    let inputs = DMatrix::from_fn(sys.m(), d, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    });
    let ds = affinelp::model::simulate(&sys, &x0, &inputs, &mut rng)?;

    affinelp::io::save_json(ctx.path("system.json"), &sys)?;
    affinelp::io::save_json(ctx.path("cost.json"), &cost)?;
    affinelp::io::write_dataset(&ds, ctx.path("dataset.csv"), ctx.path("dataset.json"))?;
    ctx.write_json(
        "gen_summary.json",
        &GenSummary {
            provenance: Provenance::new(&ctx.config),
            n: sys.n(),
            m: sys.m(),
            d,
            gamma: sys.gamma(),
            deterministic: ds.max_recorded_noise().is_some_and(|v| v == 0.0),
        },
    )?;
    ctx.say(format!(
        "generated n = {}, m = {} system and a {d}-step trajectory into {}",
        sys.n(),
        sys.m(),
        ctx.out.display()
    ));
    Ok(Outcome::Pass)
}
