//! `affinelp report`: aggregate whatever stage outputs exist in the output
//! directory into one summary JSON plus a flat, plot-ready CSV.
//!
//! The CSV has three columns — `section,metric,value` — with one row per
//! numeric or boolean leaf of each stage report (booleans encoded as 0/1),
//! so external plotting needs no JSON handling.

use super::{maybe_json, Context, Provenance};
use crate::Outcome;
use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;

#[derive(Serialize)]
struct ReportOutput {
    #[serde(flatten)]
    provenance: Provenance,
    sections: Vec<String>,
    #[serde(flatten)]
    content: serde_json::Map<String, Value>,
}

const SECTIONS: [(&str, &str); 5] = [
    ("gen", "gen_summary.json"),
    ("pe", "pe_report.json"),
    ("synthesis", "synth_summary.json"),
    ("solution", "solution.json"),
    ("verify", "verify_report.json"),
];

pub fn run(ctx: &Context) -> Result<Outcome> {
    ctx.ensure_out()?;
    let mut content = serde_json::Map::new();
    let mut sections = Vec::new();
    let mut csv = String::from("section,metric,value\n");
    for (name, file) in SECTIONS {
        if let Some(value) = maybe_json::<Value>(&ctx.path(file))? {
            flatten_numeric(&mut csv, name, "", &value);
            content.insert(name.to_string(), value);
            sections.push(name.to_string());
        }
    }
    if sections.is_empty() {
        return Ok(Outcome::Fail(format!(
            "nothing to report: no stage outputs found in {}",
            ctx.out.display()
        )));
    }
    let output = ReportOutput {
        provenance: Provenance::new(&ctx.config),
        sections: sections.clone(),
        content,
    };
    ctx.write_json("report.json", &output)?;
    std::fs::write(ctx.path("report.csv"), csv)?;
    ctx.say(format!("aggregated sections: {}", sections.join(", ")));
    Ok(Outcome::Pass)
}

fn flatten_numeric(csv: &mut String, section: &str, prefix: &str, value: &Value) {
    match value {
        Value::Number(n) => {
            let _ = writeln!(csv, "{section},{prefix},{n}");
        }
        Value::Bool(b) => {
            let _ = writeln!(csv, "{section},{prefix},{}", i32::from(*b));
        }
        Value::Object(map) => {
            for (key, inner) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_numeric(csv, section, &path, inner);
            }
        }
        Value::Array(items) => {
            for (index, inner) in items.iter().enumerate() {
                let path = if prefix.is_empty() {
                    index.to_string()
                } else {
                    format!("{prefix}.{index}")
                };
                flatten_numeric(csv, section, &path, inner);
            }
        }
        Value::String(_) | Value::Null => {}
    }
}
