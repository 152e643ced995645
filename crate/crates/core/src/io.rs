//! Text formats shared by the model, report and CSV writers.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Comma-separated table with a one-line header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: "missing header".into(),
        })?;
        let header: Vec<String> = head.split(',').map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse { path: origin.to_path_buf(), line: idx + 1, message: e.to_string() })?;
            if row.len() != header.len() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: idx + 1,
                    message: format!("{} fields, header has {}", row.len(), header.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Vector channel names: `name_1, …, name_n`.
pub fn channel_names(name: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{name}_{i}")).collect()
}

/// Line cursor for whitespace-separated record files; errors carry the line number.
pub(crate) struct LineReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    origin: PathBuf,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str, origin: &Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Self { lines, pos: 0, origin: origin.to_path_buf() }
    }

    fn line_no(&self) -> usize {
        self.lines
            .get(self.pos.saturating_sub(1))
            .map(|(n, _)| *n)
            .unwrap_or(0)
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.origin.clone(), line: self.line_no(), message: message.into() }
    }

    pub fn words(&mut self) -> Result<Vec<&'a str>> {
        self.pos += 1;
        let Some(&(_, line)) = self.lines.get(self.pos - 1) else {
            return Err(self.error("unexpected end of file"));
        };
        Ok(line.split_whitespace().collect())
    }

    pub fn expect_tag(&mut self, tag: &str) -> Result<()> {
        let w = self.words()?;
        if w.as_slice() != [tag] {
            return Err(self.error(format!("expected `{tag}`")));
        }
        Ok(())
    }

    fn parse_floats(&self, words: &[&str], count: usize) -> Result<Vec<f64>> {
        if words.len() != count {
            return Err(self.error(format!("expected {count} values, found {}", words.len())));
        }
        words
            .iter()
            .map(|w| w.parse::<f64>().map_err(|e| self.error(format!("`{w}`: {e}"))))
            .collect()
    }

    pub fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let w = self.words()?;
        self.parse_floats(&w, count)
    }

    pub fn keyed_floats(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let w = self.words()?;
        if w.first() != Some(&key) {
            return Err(self.error(format!("expected `{key}`")));
        }
        self.parse_floats(&w[1..], count)
    }

    pub fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let w = self.words()?;
        if w.len() != 2 || w[0] != key {
            return Err(self.error(format!("expected `{key} <count>`")));
        }
        w[1].parse().map_err(|e| self.error(format!("`{}`: {e}", w[1])))
    }
}

/// `key = value` report writer with a title line.
#[derive(Debug, Default, Clone)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { lines: vec![format!("# {title}")] }
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.lines.push(format!("{key} = {}", fmt_f64(v)));
        self
    }

    pub fn nums(&mut self, key: &str, v: &[f64]) -> &mut Self {
        let cells: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
        self.lines.push(format!("{key} = {}", cells.join(" ")));
        self
    }

    pub fn text(&mut self, key: &str, v: impl std::fmt::Display) -> &mut Self {
        self.lines.push(format!("{key} = {v}"));
        self
    }

    pub fn finish(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Reads back a [`Report`]: `key -> raw value`, comments skipped.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
