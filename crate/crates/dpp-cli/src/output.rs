//! Result-file assembly: provenance comments, the effective-configuration
//! echo, and the fixed numeric formats.
//!
//! Probabilities are printed with 6 decimal places and effective sample
//! sizes with 2, always with a '.' separator. Files carry no timestamps,
//! so a rerun with the same configuration and seed is byte-identical.

use sha2::{Digest, Sha256};
use std::path::Path;

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Comment block stamped at the top of every results file: tool version,
/// effective seed, a hash of the effective configuration, then the
/// configuration itself with each line prefixed by "# ".
pub fn provenance(seed: u64, config_toml: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!("# tool_version={}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("# seed={seed}\n"));
    s.push_str(&format!("# config_sha256={}\n", sha256_hex(config_toml)));
    s.push_str("# config:\n");
    for line in config_toml.lines() {
        if line.is_empty() {
            s.push_str("#\n");
        } else {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    s
}

/// Recovers the echoed configuration document from a results file, exactly
/// inverting [`provenance`].
pub fn extract_config_echo(text: &str) -> Option<String> {
    let mut out = String::new();
    let mut in_block = false;
    for line in text.lines() {
        if line == "# config:" {
            in_block = true;
            continue;
        }
        if !in_block {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            out.push_str(rest);
            out.push('\n');
        } else if line == "#" {
            out.push('\n');
        } else {
            break;
        }
    }
    in_block.then_some(out)
}

/// Probability format: 6 decimal places.
pub fn p6(x: f64) -> String {
    format!("{x:.6}")
}

/// Effective-sample-size format: 2 decimal places.
pub fn e2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn write_table(
    path: &Path,
    comments: &str,
    header: &str,
    rows: &[String],
) -> Result<(), String> {
    let mut text = String::with_capacity(comments.len() + header.len() + 32 * rows.len());
    text.push_str(comments);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_extraction_inverts_provenance() {
        let config = "[design]\nn_c = 10\n\n[borrowing]\nmethod = \"eb\"\n";
        let block = provenance(7, config);
        assert_eq!(extract_config_echo(&block).unwrap(), config);
        let with_table = format!("{block}a,b\n1,2\n");
        assert_eq!(extract_config_echo(&with_table).unwrap(), config);
    }

    #[test]
    fn formats_are_locale_free() {
        assert_eq!(p6(0.25), "0.250000");
        assert_eq!(p6(f64::INFINITY), "inf");
        assert_eq!(e2(22.474), "22.47");
    }
}
