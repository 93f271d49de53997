//! Line-oriented sectioned text dialect shared by network and experiment files.
//!
//! ```text
//! # comment
//! [meta]
//! key,value
//! format,1
//!
//! [buses]
//! id,kind,nominal_kv,v_set
//! node0,slack,110,1.02
//! ```
//!
//! A section starts with `[name]`. The first non-blank line after it is the
//! column header; every following line is one comma-separated record with the
//! same number of fields. `#` starts a comment anywhere on a line.

use std::fmt;

use thiserror::Error;

/// Position-carrying syntax error.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// 1-based source line.
    pub line: usize,
    /// 1-based column of each field's first character.
    pub columns: Vec<usize>,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub header: Vec<String>,
    pub records: Vec<Record>,
}

impl Section {
    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Looks up `value` for `key` in a two-column `key,value` section.
    pub fn value_of(&self, key: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.fields.first().map(String::as_str) == Some(key))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Strips the comment and returns the content slice (not trimmed).
fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Splits a record into trimmed fields together with their 1-based columns.
fn split_fields(content: &str) -> (Vec<String>, Vec<usize>) {
    let mut fields = Vec::new();
    let mut columns = Vec::new();
    let mut start = 0usize;
    for part in content.split(',') {
        let lead = part.len() - part.trim_start().len();
        fields.push(part.trim().to_string());
        columns.push(content[..start].chars().count() + lead + 1);
        start += part.len() + 1;
    }
    (fields, columns)
}

pub fn parse(text: &str) -> Result<Document, SyntaxError> {
    let mut doc = Document::default();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = strip_comment(raw);
        if content.trim().is_empty() {
            continue;
        }
        let lead = content.len() - content.trim_start().len();
        let trimmed = content.trim();

        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') {
                return Err(SyntaxError::new(
                    lineno,
                    lead + trimmed.chars().count() + 1,
                    "unterminated section header, expected ']'",
                ));
            }
            let name = trimmed[1..trimmed.len() - 1].trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(SyntaxError::new(
                    lineno,
                    lead + 2,
                    format!("invalid section name {name:?}"),
                ));
            }
            if let Some(done) = current.take() {
                doc.sections.push(done);
            }
            if doc.section(name).is_some() {
                return Err(SyntaxError::new(
                    lineno,
                    lead + 2,
                    format!("duplicate section [{name}]"),
                ));
            }
            current = Some(Section {
                name: name.to_string(),
                line: lineno,
                header: Vec::new(),
                records: Vec::new(),
            });
            continue;
        }

        let Some(section) = current.as_mut() else {
            return Err(SyntaxError::new(
                lineno,
                lead + 1,
                "record outside of any section",
            ));
        };

        let (fields, columns) = split_fields(content);
        if section.header.is_empty() {
            if let Some(pos) = fields.iter().position(String::is_empty) {
                return Err(SyntaxError::new(lineno, columns[pos], "empty column name"));
            }
            section.header = fields;
            continue;
        }
        if fields.len() != section.header.len() {
            let column = if fields.len() > section.header.len() {
                columns[section.header.len()]
            } else {
                content.trim_end().chars().count() + 1
            };
            return Err(SyntaxError::new(
                lineno,
                column,
                format!(
                    "expected {} fields in [{}], found {}",
                    section.header.len(),
                    section.name,
                    fields.len()
                ),
            ));
        }
        section.records.push(Record {
            line: lineno,
            columns,
            fields,
        });
    }
    if let Some(done) = current.take() {
        doc.sections.push(done);
    }
    Ok(doc)
}

/// Builder for emitting documents in canonical form.
#[derive(Debug, Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            self.out.push_str("# ");
            self.out.push_str(line);
            self.out.push('\n');
        }
        self
    }

    pub fn section<I, S>(&mut self, name: &str, header: &[&str], rows: I) -> &mut Self
    where
        I: IntoIterator<Item = Vec<S>>,
        S: fmt::Display,
    {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push('[');
        self.out.push_str(name);
        self.out.push_str("]\n");
        self.out.push_str(&header.join(","));
        self.out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            self.out.push_str(&cells.join(","));
            self.out.push('\n');
        }
        self
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.out)
    }
}
