//! Result files: long-format CSV curves and JSON documents, each opening with
//! a header that records the resolved config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::fmt_f64;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] = ["t", "tJ", "metric_name", "value", "n", "L", "S", "scheme", "optimizer"];

/// Provenance written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header {
    pub version: String,
    pub kind: String,
    pub seed: u64,
    pub config: String,
}

impl Header {
    /// `# `-prefixed lines.
    pub fn comment_block(&self) -> String {
        let mut s = format!("# hamsim {}\n# kind = {}\n# seed = {}\n# resolved config:\n", self.version, self.kind, self.seed);
        for l in self.config.lines() {
            s += &format!("#   {l}\n");
        }
        s
    }
}

/// One sample in the long CSV layout. Blank cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub t: Option<f64>,
    pub tj: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub layers: Option<usize>,
    pub slices: Option<usize>,
    pub scheme: String,
    pub optimizer: String,
}

fn cell<T: ToString>(x: Option<T>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl Row {
    pub fn to_csv(&self) -> String {
        let f = |x: Option<f64>| x.map_or(String::new(), fmt_float);
        format!(
            "{},{},{},{},{},{},{},{},{}",
            f(self.t),
            f(self.tj),
            self.metric,
            fmt_float(self.value),
            self.n,
            cell(self.layers),
            cell(self.slices),
            self.scheme,
            self.optimizer
        )
    }

    fn from_csv(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let err = |msg: String| Error::Parse { line: lineno, msg };
        if f.len() != CSV_COLUMNS.len() {
            return Err(err(format!("expected {} fields, got {}", CSV_COLUMNS.len(), f.len())));
        }
        let float = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| err(format!("bad number '{s}'")))
        };
        let int = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| err(format!("bad integer '{s}'")))
        };
        Ok(Row {
            t: float(f[0])?,
            tj: float(f[1])?,
            metric: f[2].to_string(),
            value: float(f[3])?.ok_or_else(|| err("missing value".into()))?,
            n: int(f[4])?.ok_or_else(|| err("missing n".into()))?,
            layers: int(f[5])?,
            slices: int(f[6])?,
            scheme: f[7].to_string(),
            optimizer: f[8].to_string(),
        })
    }
}

/// Round-trip exact float text; `NaN` and infinities spelled as Rust parses them.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        format!("{x}")
    }
}

/// CSV file that flushes after every batch of rows.
pub struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &Header) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(header.comment_block().as_bytes())?;
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        out.flush()?;
        Ok(Self { path: path.to_path_buf(), out })
    }

    pub fn write(&mut self, rows: &[Row]) -> Result<()> {
        for r in rows {
            writeln!(self.out, "{}", r.to_csv())?;
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Rows of a CSV in the long layout, skipping `#` lines.
pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if !seen_header {
            if l != CSV_COLUMNS.join(",") {
                return Err(Error::Parse { line: i + 1, msg: format!("expected header row '{}'", CSV_COLUMNS.join(",")) });
            }
            seen_header = true;
            continue;
        }
        rows.push(Row::from_csv(l, i + 1)?);
    }
    if !seen_header {
        return Err(Error::Parse { line: 0, msg: "missing CSV header row".into() });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: &'a Header,
    #[serde(flatten)]
    body: &'a T,
}

/// JSON document whose first key is `header`.
pub fn write_json<T: Serialize>(path: &Path, header: &Header, body: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Document { header, body }).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Header {
        Header { version: "0.0.0".into(), kind: "fit".into(), seed: 4, config: "[experiment]\nkind = fit\n".into() }
    }

    #[test]
    fn rows_round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let rows = vec![
            Row { t: Some(0.1), tj: Some(0.2), metric: "approx".into(), value: 1.234567890123e-7, n: 5, layers: Some(2), slices: None, scheme: "exact".into(), optimizer: "newton".into() },
            Row { t: None, tj: None, metric: "fit_m:approx".into(), value: f64::NAN, n: 5, layers: None, slices: Some(3), scheme: "wI".into(), optimizer: String::new() },
        ];
        let mut sink = CsvSink::create(&path, &header()).unwrap();
        sink.write(&rows).unwrap();
        drop(sink);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# hamsim 0.0.0\n"));
        let back = read_csv(&path).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].value.is_nan() && back[1].t.is_none() && back[1].slices == Some(3));
    }

    #[test]
    fn float_text_is_exact() {
        for x in [0.1, 1.0 / 3.0, 2.5e-9, 123456789.0, -7.0e-300, 0.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn json_header_comes_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        #[derive(Serialize)]
        struct Body {
            a: u32,
        }
        write_json(&path, &header(), &Body { a: 1 }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.trim_start().starts_with("{\n  \"header\""));
    }

    #[test]
    fn rejects_foreign_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Parse { line: 1, .. })));
    }
}
