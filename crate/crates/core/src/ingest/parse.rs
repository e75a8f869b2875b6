use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::schema::TableSchema;
use super::{IngestError, Isr};

/// One accepted data line. `fields.len()` equals the schema field count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    /// 1-based line number in the source file.
    pub line: u64,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    FieldCount,
    EmptyIsr,
    NonNumericIsr,
    Encoding,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::FieldCount => "FIELD_COUNT",
            RejectReason::EmptyIsr => "EMPTY_ISR",
            RejectReason::NonNumericIsr => "NON_NUMERIC_ISR",
            RejectReason::Encoding => "ENCODING",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectEntry {
    pub file: String,
    pub line: u64,
    pub reason: RejectReason,
}

/// Discarded input lines, one entry per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectLog {
    pub entries: Vec<RejectEntry>,
}

impl RejectLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: RejectLog) {
        self.entries.extend(other.entries);
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.entries.iter().filter(|e| e.reason == reason).count()
    }

    /// CSV with header `file,line,reason`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["file", "line", "reason"])?;
        for e in &self.entries {
            w.write_record([e.file.as_str(), &e.line.to_string(), e.reason.code()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Row(RawRow),
    Reject(RejectEntry),
}

/// Streaming reader over one delimited table.
///
/// Yields one [`ParsedLine`] per data line. Only I/O failures end the
/// stream with an error.
pub struct TableReader<R> {
    input: R,
    schema: TableSchema,
    file: String,
    line: u64,
    header_lines: u64,
    expected: Option<usize>,
    header: Option<Vec<String>>,
    buf: Vec<u8>,
}

impl<R: BufRead> TableReader<R> {
    pub fn new(input: R, schema: &TableSchema, file: impl Into<String>) -> Self {
        TableReader {
            input,
            schema: schema.clone(),
            file: file.into(),
            line: 0,
            header_lines: 0,
            expected: schema.field_count,
            header: None,
            buf: Vec::with_capacity(256),
        }
    }

    /// Header field names, once the header line has been read.
    pub fn header(&self) -> Option<&[String]> {
        self.header.as_deref()
    }

    pub fn lines_read(&self) -> u64 {
        self.line
    }

    pub fn header_lines(&self) -> u64 {
        self.header_lines
    }

    /// Reads the next line into `buf` without its terminator. `false` at EOF.
    fn read_line(&mut self) -> io::Result<bool> {
        self.buf.clear();
        if self.input.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(false);
        }
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
            if self.buf.last() == Some(&b'\r') {
                self.buf.pop();
            }
        }
        self.line += 1;
        Ok(true)
    }

    fn reject(&self, reason: RejectReason) -> ParsedLine {
        ParsedLine::Reject(RejectEntry { file: self.file.clone(), line: self.line, reason })
    }

    fn classify(&self) -> ParsedLine {
        let mut raw: Vec<&[u8]> = self.buf.split(|b| *b == self.schema.delimiter).collect();
        let expected = self.expected.unwrap_or(0);
        // Legacy extracts terminate some lines with the delimiter.
        if raw.len() == expected + 1 && raw.last().is_some_and(|f| f.is_empty()) {
            raw.pop();
        }
        if raw.len() != expected || expected <= self.schema.max_column() {
            return self.reject(RejectReason::FieldCount);
        }
        let isr = match std::str::from_utf8(raw[self.schema.isr_column]) {
            Ok(s) => s,
            Err(_) => return self.reject(RejectReason::Encoding),
        };
        if isr.trim().is_empty() {
            return self.reject(RejectReason::EmptyIsr);
        }
        if Isr::parse(isr).is_none() {
            return self.reject(RejectReason::NonNumericIsr);
        }
        ParsedLine::Row(RawRow {
            line: self.line,
            fields: raw.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect(),
        })
    }

    fn read_header(&mut self) -> io::Result<()> {
        if self.read_line()? {
            self.header_lines = 1;
            let mut names: Vec<String> = self
                .buf
                .split(|b| *b == self.schema.delimiter)
                .map(|f| String::from_utf8_lossy(f).trim().to_string())
                .collect();
            if names.len() > 1 && names.last().is_some_and(|n| n.is_empty()) {
                names.pop();
            }
            if self.expected.is_none() {
                self.expected = Some(names.len());
            }
            self.header = Some(names);
        }
        Ok(())
    }
}

impl<R: BufRead> Iterator for TableReader<R> {
    type Item = io::Result<ParsedLine>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.schema.has_header && self.line == 0 {
            if let Err(e) = self.read_header() {
                return Some(Err(e));
            }
        }
        match self.read_line() {
            Ok(true) => Some(Ok(self.classify())),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

/// A fully read table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTable {
    pub file: String,
    pub header: Option<Vec<String>>,
    pub rows: Vec<RawRow>,
    pub rejects: RejectLog,
    pub header_lines: u64,
    pub total_lines: u64,
}

impl ParsedTable {
    pub fn data_lines(&self) -> u64 {
        self.total_lines - self.header_lines
    }
}

/// Reads a whole table. Every line after the header becomes a row or a reject.
pub fn parse_table<R: Read>(input: R, schema: &TableSchema, file: &str) -> Result<ParsedTable, IngestError> {
    let mut reader = TableReader::new(BufReader::with_capacity(1 << 16, input), schema, file);
    let mut table = ParsedTable { file: file.to_string(), ..Default::default() };
    for item in reader.by_ref() {
        match item.map_err(|source| IngestError::Io { path: file.to_string(), source })? {
            ParsedLine::Row(row) => table.rows.push(row),
            ParsedLine::Reject(entry) => table.rejects.entries.push(entry),
        }
    }
    table.header = reader.header.take();
    table.header_lines = reader.header_lines();
    table.total_lines = reader.lines_read();
    Ok(table)
}
