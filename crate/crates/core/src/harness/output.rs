use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::runner::ExperimentRecord;
use crate::error::{Error, Result};

pub const RECORD_HEADER: &str =
    "step,estimate,ground_truth,abs_error,rel_error,scaled_error,matvecs_step,matvecs_cum,gamma";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text: `#`-prefixed comment lines, the header row, one row per record.
pub fn records_to_csv(records: &[ExperimentRecord], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    s.push_str(RECORD_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.estimate,
            opt(r.ground_truth),
            opt(r.abs_error),
            opt(r.rel_error),
            opt(r.scaled_error),
            r.matvecs_step,
            r.matvecs_cum,
            opt(r.gamma),
        );
    }
    s
}

pub fn write_records(path: &Path, records: &[ExperimentRecord], comments: &[String]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, records_to_csv(records, comments)).map_err(|e| Error::io(path, e))
}
