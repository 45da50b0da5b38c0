use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One line of a track file: `L B E P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackRecord {
    pub label: u32,
    pub begin: usize,
    pub end: usize,
    pub parent: u32,
}

pub(crate) fn format_records(records: &[TrackRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{} {} {} {}", r.label, r.begin, r.end, r.parent);
    }
    s
}

pub(crate) fn parse_records(text: &str, path: &Path) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |detail: String| Error::TrackFile {
            path: path.to_path_buf(),
            line: i + 1,
            detail,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<u64>()
                .map_err(|e| bad(format!("field {}: {e}", k + 1)))
        };
        let r = TrackRecord {
            label: num(0)? as u32,
            begin: num(1)? as usize,
            end: num(2)? as usize,
            parent: num(3)? as u32,
        };
        if r.label == 0 {
            return Err(bad("label must be positive".into()));
        }
        if r.begin > r.end {
            return Err(bad("begin after end".into()));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_res_track(path: &Path, records: &[TrackRecord]) -> Result<()> {
    std::fs::write(path, format_records(records)).map_err(|e| Error::io(path, e))
}

pub fn read_res_track(path: &Path) -> Result<Vec<TrackRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}
