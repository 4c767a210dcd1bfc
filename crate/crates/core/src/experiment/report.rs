//! Run-directory artifacts: reports.json, table.txt, run.log, failure.json.
//!
//! Files contain no timestamps or host details so a repeated run writes the
//! same bytes. The log intentionally keeps cache hit/miss lines: diffing a
//! warm run against a cold one is how reuse is audited.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{render_table, EvalReport};

use super::pipeline::StageFailure;

fn write(path: &Path, contents: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    out.push(path.to_path_buf());
    Ok(())
}

/// Write the standard artifact set and return the paths written.
pub fn write_run_files(
    run_dir: &Path,
    reports: &[EvalReport],
    log_lines: &[String],
    failure: Option<&StageFailure>,
) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let json = serde_json::to_string_pretty(reports).map_err(|e| Error::Cache(e.to_string()))?;
    write(&run_dir.join("reports.json"), &(json + "\n"), &mut out)?;
    write(&run_dir.join("table.txt"), &render_table(reports), &mut out)?;
    let mut log = log_lines.join("\n");
    log.push('\n');
    write(&run_dir.join("run.log"), &log, &mut out)?;
    if let Some(failure) = failure {
        let json =
            serde_json::to_string_pretty(failure).map_err(|e| Error::Cache(e.to_string()))?;
        write(&run_dir.join("failure.json"), &(json + "\n"), &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ReportMeta;
    use std::collections::BTreeMap;

    fn sample_report() -> EvalReport {
        EvalReport {
            meta: ReportMeta {
                dataset_key: "d".into(),
                attack_key: "a".into(),
                model_key: "m".into(),
                seed: 1,
                k_values: vec![10],
                condition: "clean".into(),
            },
            metrics: BTreeMap::from([("hr@10".to_string(), 0.25)]),
        }
    }

    #[test]
    fn writes_the_standard_set_without_failure() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_run_files(
            dir.path(),
            &[sample_report()],
            &["line one".to_string()],
            None,
        )
        .unwrap();
        assert_eq!(files.len(), 3);
        assert!(dir.path().join("reports.json").is_file());
        assert!(!dir.path().join("failure.json").exists());
        let log = std::fs::read_to_string(dir.path().join("run.log")).unwrap();
        assert_eq!(log, "line one\n");
    }

    #[test]
    fn failure_file_carries_stage_and_message() {
        let dir = tempfile::tempdir().unwrap();
        let failure = StageFailure {
            stage: "attack".into(),
            error: "boom".into(),
        };
        write_run_files(dir.path(), &[], &[], Some(&failure)).unwrap();
        let text = std::fs::read_to_string(dir.path().join("failure.json")).unwrap();
        assert!(text.contains("\"stage\": \"attack\""));
        assert!(text.contains("boom"));
    }

    #[test]
    fn reports_json_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        write_run_files(dir.path(), &[sample_report()], &[], None).unwrap();
        let text = std::fs::read_to_string(dir.path().join("reports.json")).unwrap();
        let parsed: Vec<EvalReport> = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].get("hr@10"), Some(0.25));
    }
}
