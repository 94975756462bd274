//! CSV and JSON output.

use std::fs;
use std::path::Path;
use std::time::Duration;

use bigjump::verdict::ConvergenceTable;
use serde::Serialize;
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use crate::config::RunConfig;
use crate::CliError;

/// `git hash-object` of `bytes`.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn render_csv(table: &ConvergenceTable) -> String {
    table.to_csv()
}

pub fn render_json(cfg: &RunConfig, results: &impl Serialize, wall: Duration) -> Result<String, CliError> {
    let config = serde_json::to_value(cfg)?;
    let hash = git_blob_hash(serde_json::to_string(&config)?.as_bytes());
    let doc: Value = json!({
        "config": config,
        "input_hash": hash,
        "wall_time_s": wall.as_secs_f64(),
        "results": serde_json::to_value(results)?,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body)?;
    Ok(())
}

/// Writes the table and the JSON report to the configured paths; prints the
/// CSV to stdout when no CSV path is set.
pub fn emit_report(
    cfg: &RunConfig,
    table: &ConvergenceTable,
    results: &impl Serialize,
    wall: Duration,
) -> Result<(), CliError> {
    let csv = render_csv(table);
    match &cfg.output.csv_path {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &cfg.output.json_path {
        write(p, &render_json(cfg, results, wall)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load;
    use bigjump::verdict::CSV_HEADER;

    #[test]
    fn blob_hash_matches_git() {
        // git hash-object of an empty file and of "hello\n"
        assert_eq!(git_blob_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert_eq!(git_blob_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    }

    #[test]
    fn empty_results_give_header_only_csv() {
        assert_eq!(render_csv(&ConvergenceTable::default()), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn json_echoes_config_and_hash() {
        let cfg = load(None, &["command=dist".into(), "law=pareto".into()]).unwrap();
        let text = render_json(&cfg, &json!({"k": 1}), Duration::from_millis(5)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config"]["law"], "pareto");
        assert_eq!(v["input_hash"].as_str().unwrap().len(), 40);
        assert_eq!(v["results"]["k"], 1);
        let again = render_json(&cfg, &json!({"k": 1}), Duration::from_millis(9)).unwrap();
        let w: Value = serde_json::from_str(&again).unwrap();
        assert_eq!(v["input_hash"], w["input_hash"]);
    }
}
