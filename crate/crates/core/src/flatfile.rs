//! Tab-separated snapshot layout shared by model, virtual-count and
//! knowledge-base files:
//!
//! ```text
//! #<magic> v<version>
//! key<TAB>value        (header, keys may repeat)
//! --
//! field<TAB>field...   (rows)
//! ```

use std::io::{BufRead, Write};

use crate::error::{LscError, Result};

pub(crate) struct FlatFile {
    pub header: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl FlatFile {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| LscError::Parse(format!("missing header field {key:?}")))
    }

    pub fn all(&self, key: &str) -> impl Iterator<Item = &str> + '_ {
        let key = key.to_string();
        self.header
            .iter()
            .filter(move |(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        parse_field(self.get(key)?, key)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| LscError::Parse(format!("bad value {s:?} for {what}")))
}

pub(crate) fn check_field(s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(LscError::InvalidArgument(format!(
            "{s:?} cannot be stored in a tab-separated snapshot"
        )));
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> LscError {
    LscError::Io {
        path: "<stream>".into(),
        source: e,
    }
}

pub(crate) fn write<W: Write>(
    mut w: W,
    magic: &str,
    version: u32,
    header: &[(&str, String)],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    writeln!(w, "#{magic} v{version}").map_err(io_err)?;
    for (k, v) in header {
        check_field(v)?;
        writeln!(w, "{k}\t{v}").map_err(io_err)?;
    }
    writeln!(w, "--").map_err(io_err)?;
    for row in rows {
        for f in &row {
            check_field(f)?;
        }
        writeln!(w, "{}", row.join("\t")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub(crate) fn read<R: BufRead>(r: R, magic: &str, version: u32, columns: usize) -> Result<FlatFile> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| LscError::Parse("empty snapshot".into()))?
        .map_err(io_err)?;
    let expected = format!("#{magic} v{version}");
    if first != expected {
        return Err(LscError::Parse(format!("expected {expected:?}, found {first:?}")));
    }

    let mut header = Vec::new();
    let mut in_rows = false;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if !in_rows {
            if line == "--" {
                in_rows = true;
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| LscError::Parse(format!("line {}: bad header line {line:?}", i + 2)))?;
            header.push((k.to_string(), v.to_string()));
        } else {
            let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
            if fields.len() != columns {
                return Err(LscError::Parse(format!(
                    "line {}: expected {columns} fields, found {}",
                    i + 2,
                    fields.len()
                )));
            }
            rows.push(fields);
        }
    }
    if !in_rows {
        return Err(LscError::Parse("missing row separator".into()));
    }
    Ok(FlatFile { header, rows })
}
