//! Helpers for the plain-text artifact formats (manifests, matrices).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{fmt_exact, Real};

/// Whitespace-separated `key=value` pairs, order preserved on output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected key=value, got {tok:?}"),
            })?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Schema(format!("manifest is missing key {key:?}")))
    }

    pub fn parse_value<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Schema(format!("manifest key {key:?} has invalid value {raw:?}")))
    }

    pub fn parse_list<V: std::str::FromStr>(&self, key: &str) -> Result<Vec<V>> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.parse().map_err(|_| {
                    Error::Schema(format!("manifest key {key:?} has invalid element {s:?}"))
                })
            })
            .collect()
    }

    pub fn to_line(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }
}

pub fn join_list<V: ToString>(items: &[V]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn join_reals<T: Real>(items: &[T]) -> String {
    items
        .iter()
        .map(|&v| fmt_exact(v))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_real<T: Real>(s: &str, line: usize) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number {s:?}"),
    })
}

pub fn parse_reals<T: Real>(s: &str, line: usize) -> Result<Vec<T>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_real(t, line))
        .collect()
}

/// Appends `name rows cols` followed by one line per row.
pub fn write_matrix<T: Real>(out: &mut String, name: &str, m: &Matrix<T>) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let _ = writeln!(out, "{}", join_reals(m.row(i)));
    }
}

pub fn write_vector<T: Real>(out: &mut String, name: &str, v: &[T]) {
    let _ = writeln!(out, "vector {name} {}", v.len());
    let _ = writeln!(out, "{}", join_reals(v));
}

/// Cursor over the lines of a text artifact.
pub struct LineReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    pub fn line_no(&self) -> usize {
        self.pos
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        let line = self.lines.get(self.pos).copied().ok_or(Error::Parse {
            line: self.pos + 1,
            msg: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(line)
    }

    pub fn is_done(&self) -> bool {
        self.lines[self.pos..].iter().all(|l| l.trim().is_empty())
    }

    fn header(&mut self, kind: &str, name: &str) -> Result<Vec<usize>> {
        let line = self.next_line()?;
        let no = self.pos;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(kind) || toks.next() != Some(name) {
            return Err(Error::Parse {
                line: no,
                msg: format!("expected `{kind} {name}`, got {line:?}"),
            });
        }
        toks.map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: no,
                msg: format!("invalid dimension {t:?}"),
            })
        })
        .collect()
    }

    pub fn read_matrix<T: Real>(&mut self, name: &str) -> Result<Matrix<T>> {
        let dims = self.header("matrix", name)?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse {
                line: self.pos,
                msg: "matrix header needs rows and cols".into(),
            });
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = parse_reals::<T>(self.next_line()?, self.pos)?;
            if row.len() != cols {
                return Err(Error::Parse {
                    line: self.pos,
                    msg: format!("expected {cols} values, got {}", row.len()),
                });
            }
            data.extend(row);
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    pub fn read_vector<T: Real>(&mut self, name: &str) -> Result<Vec<T>> {
        let dims = self.header("vector", name)?;
        let [len] = dims[..] else {
            return Err(Error::Parse {
                line: self.pos,
                msg: "vector header needs a length".into(),
            });
        };
        let v = parse_reals::<T>(self.next_line()?, self.pos)?;
        if v.len() != len {
            return Err(Error::Parse {
                line: self.pos,
                msg: format!("expected {len} values, got {}", v.len()),
            });
        }
        Ok(v)
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
