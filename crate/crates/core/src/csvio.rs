//! CSV helpers shared by every exporter: a leading `#` metadata line carrying
//! the schema version and seed, then a header row.

use std::io::{Read, Write};

use csv::{ReaderBuilder, Writer, WriterBuilder};

pub const SCHEMA_VERSION: u32 = 1;

pub fn metadata_line(seed: u64) -> String {
    format!("#schema-version={SCHEMA_VERSION} seed={seed}\n")
}

/// Write the metadata line and return a CSV writer positioned after it.
pub fn writer_with_meta<W: Write>(mut out: W, seed: u64) -> std::io::Result<Writer<W>> {
    out.write_all(metadata_line(seed).as_bytes())?;
    Ok(WriterBuilder::new().from_writer(out))
}

/// Reader that skips `#` metadata lines.
pub fn reader<R: Read>(input: R) -> csv::Reader<R> {
    ReaderBuilder::new().comment(Some(b'#')).from_reader(input)
}

/// Parse `schema-version` and `seed` out of a metadata line.
pub fn parse_metadata(line: &str) -> Option<(u32, u64)> {
    let body = line.strip_prefix('#')?;
    let mut version = None;
    let mut seed = None;
    for kv in body.split_whitespace() {
        match kv.split_once('=') {
            Some(("schema-version", v)) => version = v.parse().ok(),
            Some(("seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some((version?, seed?))
}

/// Format a float for CSV: shortest round-trip representation, `NaN` kept.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:?}")
    }
}

pub fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
