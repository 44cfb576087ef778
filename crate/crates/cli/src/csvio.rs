//! CSV interchange for benchmark reports.
//! Schema: run_id, tokens, rank, trial, wall_ms, per_token_ms, parallel_mode

use std::path::Path;

use anyhow::{Context, Result};

use crate::bench::{BenchReport, BenchRow};

pub fn write_csv(path: &Path, report: &BenchReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {path:?}"))?;
    w.write_record(["run_id", "tokens", "rank", "trial", "wall_ms", "per_token_ms", "parallel_mode"])?;
    for r in &report.rows {
        w.write_record([
            r.run_id.as_str(),
            &r.tokens.to_string(),
            &r.rank.to_string(),
            &r.trial.to_string(),
            &format!("{:.6}", r.wall_ms),
            &format!("{:.6}", r.per_token_ms),
            &r.parallel_mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {path:?}"))?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(BenchRow {
            run_id: record.get(0).unwrap_or("").to_string(),
            tokens: record.get(1).unwrap_or("0").parse().context("tokens column")?,
            rank: record.get(2).unwrap_or("0").parse().context("rank column")?,
            trial: record.get(3).unwrap_or("0").parse().context("trial column")?,
            wall_ms: record.get(4).unwrap_or("0").parse().context("wall_ms column")?,
            per_token_ms: record.get(5).unwrap_or("0").parse().context("per_token_ms column")?,
            parallel_mode: record.get(6).unwrap_or("false").parse().unwrap_or(false),
        });
    }
    Ok(rows)
}
