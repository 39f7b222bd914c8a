//! Reading count series from text.

use crate::error::{Error, Result};

/// Parse one nonnegative integer per line.
///
/// Blank lines and lines starting with `#` are skipped. The first content
/// line may be a header (anything containing a letter); every other line
/// must hold a single nonnegative integer.
pub fn parse_counts(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        match line.parse::<u64>() {
            Ok(v) => out.push(v),
            Err(_) if first && line.chars().any(|c| c.is_alphabetic()) => {}
            Err(_) => {
                let message = if line.starts_with('-') && line[1..].trim().parse::<f64>().is_ok() {
                    format!("negative value '{line}'")
                } else {
                    format!("expected a nonnegative integer, found '{line}'")
                };
                return Err(Error::Parse {
                    line: idx + 1,
                    message,
                });
            }
        }
    }
    Ok(out)
}
