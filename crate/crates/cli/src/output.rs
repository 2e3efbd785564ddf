//! File headers, number formatting and atomic writes.

use std::fmt::Write as _;
use std::path::Path;

use crate::{io_err, CliError};

pub const TOOL_VERSION: &str = concat!("cdit ", env!("CARGO_PKG_VERSION"));

/// Whose run a file belongs to.
#[derive(Debug, Clone, Copy)]
pub enum Provenance<'a> {
    Seed(u64),
    Seeds(&'a [u64]),
}

/// `#`-comment header opening every output file.
pub fn header(config_hash: &str, who: Provenance<'_>) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# tool {TOOL_VERSION}");
    let _ = writeln!(h, "# config_sha256 {config_hash}");
    match who {
        Provenance::Seed(s) => {
            let _ = writeln!(h, "# seed {s}");
        }
        Provenance::Seeds(s) => {
            let s: Vec<String> = s.iter().map(u64::to_string).collect();
            let _ = writeln!(h, "# seeds {}", s.join(" "));
        }
    }
    h
}

/// Decimal rendering with nine significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // The exponent after rounding to nine digits decides the decimals.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    format!("{x:.*}", (8 - exp).max(0) as usize)
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(0.123456789123), "0.123456789");
        assert_eq!(sig9(-12.3456789123), "-12.3456789");
        assert_eq!(sig9(9.9999999999), "10.0000000");
        assert_eq!(sig9(0.000012345678912), "0.0000123456789");
    }

    #[test]
    fn header_lines() {
        let h = header("ab", Provenance::Seeds(&[1, 2]));
        assert!(h.starts_with("# tool cdit "));
        assert!(h.contains("# config_sha256 ab\n"));
        assert!(h.ends_with("# seeds 1 2\n"));
    }
}
