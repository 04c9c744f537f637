//! Small-file I/O for the formats the commands exchange: labels (one `1` or
//! `-1` per line), scores (one real per line, 17 significant digits), and
//! feature/string sample files for Gram computation. All writes go through
//! [`atomic_write`] so a crash never leaves a half-written artifact.

use std::fmt::Write as _;
use std::path::Path;
use std::process;

use crate::Failure;

/// Runs `write` against a temporary sibling path, then renames into place.
pub fn atomically(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp.{}", process::id()));
    let tmp = path.with_file_name(name);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Failure::io(format!("{}: {e}", path.display()))
    })
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    atomically(path, |tmp| {
        std::fs::write(tmp, bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    })
}

pub fn read_to_string(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Labels file: one `1` or `-1` per line. `+1`, `1.0` and `-1.0` are
/// accepted spellings; anything else is a parse error naming the line.
pub fn read_labels(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = read_to_string(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            Failure::parse(format!(
                "{}:{}: label `{trimmed}` is not a number",
                path.display(),
                lineno + 1
            ))
        })?;
        if value != 1.0 && value != -1.0 {
            return Err(Failure::parse(format!(
                "{}:{}: label must be 1 or -1, got {trimmed}",
                path.display(),
                lineno + 1
            )));
        }
        labels.push(value);
    }
    if labels.is_empty() {
        return Err(Failure::parse(format!("{}: no labels", path.display())));
    }
    Ok(labels)
}

pub fn labels_text(labels: &[f64]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for &y in labels {
        out.push_str(if y > 0.0 { "1\n" } else { "-1\n" });
    }
    out
}

/// Scores file: one score per line, formatted for bit-exact round trips.
pub fn scores_text(scores: &[f64]) -> String {
    let mut out = String::new();
    for s in scores {
        writeln!(out, "{s:.16e}").unwrap();
    }
    out
}

pub fn read_scores(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = read_to_string(path)?;
    let mut scores = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            Failure::parse(format!(
                "{}:{}: score `{trimmed}` is not a number",
                path.display(),
                lineno + 1
            ))
        })?;
        scores.push(value);
    }
    if scores.is_empty() {
        return Err(Failure::parse(format!("{}: no scores", path.display())));
    }
    Ok(scores)
}

/// Feature samples: one vector per line, whitespace-separated reals, all of
/// equal length.
pub fn read_vectors(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split_whitespace() {
            let value: f64 = tok.parse().map_err(|_| {
                Failure::parse(format!(
                    "{}:{}: `{tok}` is not a number",
                    path.display(),
                    lineno + 1
                ))
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Failure::parse(format!(
                    "{}:{}: expected {} features, got {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::parse(format!("{}: no samples", path.display())));
    }
    Ok(rows)
}

/// String samples: one per line, blank lines skipped.
pub fn read_strings(path: &Path) -> Result<Vec<String>, Failure> {
    let text = read_to_string(path)?;
    let strings: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if strings.is_empty() {
        return Err(Failure::parse(format!("{}: no samples", path.display())));
    }
    Ok(strings)
}
