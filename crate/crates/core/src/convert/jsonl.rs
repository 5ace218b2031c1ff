//! The combined JSON Lines archive: a header line, one info line per entry type, then
//! one entry per line sorted by id. Objects are written compactly with sorted keys.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::Serialize;
use serde_json::{json, Value};

use super::entry::StructureEntry;
use super::info::InfoDocument;

pub const JSONLINES_VERSION: &str = "1.0";
pub const API_VERSION: &str = "1.2";

#[derive(Debug, Clone, PartialEq)]
pub struct JsonLinesArchive {
    pub description: String,
    pub info: Vec<InfoDocument>,
    pub entries: Vec<StructureEntry>,
}

impl JsonLinesArchive {
    /// Structures info document, if present.
    pub fn structures_info(&self) -> Option<&InfoDocument> {
        self.info.iter().find(|i| i.id == "structures")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing or invalid header line: {0}")]
    MissingHeader(String),
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Unexpected { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct CountingWriter<W> {
    inner: W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn header(description: &str) -> Value {
    json!({
        "x-optimade": {
            "meta": {
                "jsonlines_version": JSONLINES_VERSION,
                "api_version": API_VERSION,
                "description": description,
            }
        }
    })
}

fn write_line<W: Write, T: Serialize>(out: &mut W, item: &T) -> io::Result<()> {
    // Going through `Value` sorts object keys.
    let value = serde_json::to_value(item).map_err(io::Error::other)?;
    serde_json::to_writer(&mut *out, &value).map_err(io::Error::other)?;
    out.write_all(b"\n")
}

/// Writes the archive and returns the number of bytes written.
pub fn write_jsonl<W: Write>(archive: &JsonLinesArchive, out: W) -> io::Result<u64> {
    let mut out = CountingWriter {
        inner: io::BufWriter::new(out),
        count: 0,
    };
    write_line(&mut out, &header(&archive.description))?;
    for info in &archive.info {
        write_line(&mut out, info)?;
    }
    let mut entries: Vec<&StructureEntry> = archive.entries.iter().collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    for entry in entries {
        write_line(&mut out, entry)?;
    }
    out.flush()?;
    Ok(out.count)
}

pub fn to_bytes(archive: &JsonLinesArchive) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(archive, &mut buf).expect("writing to memory cannot fail");
    buf
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<JsonLinesArchive, JsonlError> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| JsonlError::MissingHeader("empty input".into()))??;
    let head: Value =
        serde_json::from_str(&first).map_err(|e| JsonlError::MissingHeader(e.to_string()))?;
    let meta = head
        .get("x-optimade")
        .and_then(|x| x.get("meta"))
        .ok_or_else(|| JsonlError::MissingHeader("first line lacks x-optimade.meta".into()))?;
    match meta.get("jsonlines_version").and_then(Value::as_str) {
        Some(JSONLINES_VERSION) => {}
        other => {
            return Err(JsonlError::MissingHeader(format!(
                "unsupported jsonlines_version {other:?}"
            )))
        }
    }
    let description = meta
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();

    let mut archive = JsonLinesArchive {
        description,
        info: Vec::new(),
        entries: Vec::new(),
    };
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| JsonlError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let unexpected = |message: String| JsonlError::Unexpected {
            line: line_no,
            message,
        };
        match value.get("type").and_then(Value::as_str) {
            Some("info") => {
                if !archive.entries.is_empty() {
                    return Err(unexpected("info line after entry lines".into()));
                }
                archive
                    .info
                    .push(serde_json::from_value(value).map_err(|e| unexpected(e.to_string()))?);
            }
            Some("structures") => {
                let entry: StructureEntry =
                    serde_json::from_value(value).map_err(|e| unexpected(e.to_string()))?;
                if !ids.insert(entry.id.clone()) {
                    return Err(JsonlError::DuplicateId {
                        line: line_no,
                        id: entry.id,
                    });
                }
                archive.entries.push(entry);
            }
            other => return Err(unexpected(format!("unsupported entry type {other:?}"))),
        }
    }
    archive.entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(archive)
}

pub fn read_jsonl_file(path: &std::path::Path) -> Result<JsonLinesArchive, JsonlError> {
    read_jsonl(io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::info::build_info_document;
    use crate::convert::tests::two_entry_archive;

    #[test]
    fn header_is_exact() {
        let archive = JsonLinesArchive {
            description: "demo".into(),
            info: vec![build_info_document(&[], "local", "")],
            entries: vec![],
        };
        let bytes = to_bytes(&archive);
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            r#"{"x-optimade":{"meta":{"api_version":"1.2","description":"demo","jsonlines_version":"1.0"}}}"#
        );
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn two_entries_four_lines_and_round_trip() {
        let archive = two_entry_archive();
        let bytes = to_bytes(&archive);
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 4);
        assert_eq!(
            write_jsonl(&archive, io::sink()).unwrap(),
            bytes.len() as u64
        );
        let back = read_jsonl(bytes.as_slice()).unwrap();
        assert_eq!(back, archive);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn keys_sorted_in_entry_lines() {
        let text = String::from_utf8(to_bytes(&two_entry_archive())).unwrap();
        let entry = text.lines().nth(2).unwrap();
        assert!(
            entry.starts_with(r#"{"attributes":{"_local_energy":"#),
            "{entry}"
        );
        assert!(
            entry.ends_with(r#""id":"set1/101","type":"structures"}"#),
            "{entry}"
        );
    }

    #[test]
    fn duplicate_id_cites_line() {
        let text = String::from_utf8(to_bytes(&two_entry_archive())).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let dup = format!("{}\n{}\n{}\n{}\n", lines[0], lines[1], lines[2], lines[2]);
        match read_jsonl(dup.as_bytes()) {
            Err(JsonlError::DuplicateId { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_line() {
        let bytes = to_bytes(&two_entry_archive());
        let cut = &bytes[..bytes.len() - 20];
        assert!(matches!(
            read_jsonl(cut),
            Err(JsonlError::Malformed { line: 4, .. })
        ));
    }

    #[test]
    fn missing_header() {
        assert!(matches!(
            read_jsonl(&b""[..]),
            Err(JsonlError::MissingHeader(_))
        ));
        assert!(matches!(
            read_jsonl(&b"{\"type\":\"info\"}\n"[..]),
            Err(JsonlError::MissingHeader(_))
        ));
    }
}
