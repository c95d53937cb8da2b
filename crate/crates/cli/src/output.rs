use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use orf_core::EffectEstimate;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn number(v: f64) -> String {
    format!("{v}")
}

pub fn optional(v: Option<f64>) -> String {
    v.map(number).unwrap_or_default()
}

/// Finite values as JSON numbers, infinities and NaN as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(number(v))
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn feature_names(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".to_string()]
    } else {
        (0..d).map(|j| format!("x{j}")).collect()
    }
}

/// Writes `<stem>.csv` and `<stem>.json` with one record per estimate.
pub fn write_effects(dir: &Path, stem: &str, estimates: &[EffectEstimate]) -> Result<Vec<String>> {
    let d = estimates.first().map_or(1, |e| e.x.len());
    let names = feature_names(d);
    let mut header = names.clone();
    header.extend(["theta", "ci_low", "ci_high"].map(String::from));
    let rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|e| {
            let mut row: Vec<String> = e.x.iter().map(|&v| number(v)).collect();
            row.extend([number(e.theta), optional(e.ci_low), optional(e.ci_high)]);
            row
        })
        .collect();
    let csv_name = format!("{stem}.csv");
    write_rows(&dir.join(&csv_name), &header, &rows)?;

    let records: Vec<Value> = estimates
        .iter()
        .map(|e| {
            let mut m = Map::new();
            for (name, &v) in names.iter().zip(&e.x) {
                m.insert(name.clone(), json_number(v));
            }
            m.insert("theta".into(), json_number(e.theta));
            m.insert("ci_low".into(), e.ci_low.map_or(Value::Null, json_number));
            m.insert("ci_high".into(), e.ci_high.map_or(Value::Null, json_number));
            Value::Object(m)
        })
        .collect();
    let json_name = format!("{stem}.json");
    write_json(&dir.join(&json_name), &records)?;
    Ok(vec![csv_name, json_name])
}

/// SHA-256 of the resolved configuration without the keys that cannot
/// change results (`output`, `threads`).
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut value = serde_json::to_value(cfg)?;
    if let Value::Object(m) = &mut value {
        m.remove("output");
        m.remove("threads");
    }
    let digest = Sha256::digest(serde_json::to_vec(&value)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: usize,
    config_hash: String,
    wall_time_seconds: f64,
    outputs: &'a [String],
    config: &'a RunConfig,
}

pub fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    threads: usize,
    elapsed: Duration,
    outputs: &[String],
) -> Result<String> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        threads,
        config_hash: config_hash(cfg)?,
        wall_time_seconds: elapsed.as_secs_f64(),
        outputs,
        config: cfg,
    };
    let name = format!("{command}.manifest.json");
    fs::create_dir_all(&cfg.output)?;
    write_json(&cfg.output.join(&name), &manifest)?;
    Ok(name)
}
