//! CSV rendering and configuration hashing shared by every artifact writer.
//!
//! All CSVs use `,` delimiters, `\n` line endings and a mandatory header row.
//! A single `# config_hash: <hex>` comment line precedes the header so that an
//! artifact can be matched against the configuration that produced it.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

/// Round-trip-exact float rendering (`0.1`, `1e-20`, `NaN`).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Hex SHA-256 of a canonical description string.
pub fn hash_hex(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Incremental CSV builder.
#[derive(Debug, Clone)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(config_hash: &str, header: &[String]) -> Self {
        let mut buf = String::new();
        writeln!(buf, "# config_hash: {config_hash}").unwrap();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn with_header(config_hash: &str, header: &[&str]) -> Self {
        let owned: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        Self::new(config_hash, &owned)
    }

    /// Append a row of pre-rendered cells.
    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns, "row width mismatch");
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Read the embedded hash from an artifact, if present.
pub fn embedded_hash(csv: &str) -> Option<&str> {
    csv.lines().next()?.strip_prefix("# config_hash: ")
}
