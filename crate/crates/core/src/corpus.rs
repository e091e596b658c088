//! Corpus ingest and access.
//!
//! A corpus is a JSON-lines file, one flat record per line with keys
//! `id, date, main_class, subclass, title, abstract, description`. Optional
//! fields use the empty string as the missing-value sentinel. Dates are
//! strict ISO `YYYY-MM-DD` so the month index needed by the DF timeline is
//! always derivable.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Result, SimvecError};

/// Calendar month, ordered chronologically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn of(date: NaiveDate) -> Self {
        Month { year: date.year(), month: date.month() }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Which text field feeds the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Title,
    Abstract,
    Description,
    All,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Abstract => "abstract",
            Field::Description => "description",
            Field::All => "all",
        }
    }
}

impl FromStr for Field {
    type Err = SimvecError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(Field::Title),
            "abstract" => Ok(Field::Abstract),
            "description" => Ok(Field::Description),
            "all" => Ok(Field::All),
            other => Err(SimvecError::Param(format!("unknown field selector: {other}"))),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One patent-style record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(with = "iso_date")]
    pub date: NaiveDate,
    #[serde(default)]
    pub main_class: String,
    #[serde(default)]
    pub subclass: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub description: String,
}

impl Document {
    pub fn month(&self) -> Month {
        Month::of(self.date)
    }

    /// Text of the selected field; `All` concatenates the non-empty fields.
    pub fn text(&self, field: Field) -> String {
        match field {
            Field::Title => self.title.clone(),
            Field::Abstract => self.abstract_text.clone(),
            Field::Description => self.description.clone(),
            Field::All => {
                let mut parts = Vec::new();
                for p in [&self.title, &self.abstract_text, &self.description] {
                    if !p.is_empty() {
                        parts.push(p.as_str());
                    }
                }
                parts.join(" ")
            }
        }
    }
}

/// Strict ISO date (de)serialization: exactly `YYYY-MM-DD`, zero-padded.
mod iso_date {
    use super::parse_iso_date;
    use chrono::NaiveDate;
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&d.format("%Y-%m-%d").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        parse_iso_date(&s).map_err(serde::de::Error::custom)
    }
}

/// Parse a strict `YYYY-MM-DD` date. Rejects unpadded fields and invalid
/// calendar dates (month 13, Feb 30, ...).
pub fn parse_iso_date(s: &str) -> Result<NaiveDate> {
    let bytes = s.as_bytes();
    let shape_ok = bytes.len() == 10
        && bytes[4] == b'-'
        && bytes[7] == b'-'
        && bytes
            .iter()
            .enumerate()
            .all(|(i, b)| i == 4 || i == 7 || b.is_ascii_digit());
    if !shape_ok {
        return Err(SimvecError::Param(format!("date not in YYYY-MM-DD form: {s:?}")));
    }
    let year: i32 = s[0..4].parse().unwrap();
    let month: u32 = s[5..7].parse().unwrap();
    let day: u32 = s[8..10].parse().unwrap();
    NaiveDate::from_ymd_opt(year, month, day)
        .ok_or_else(|| SimvecError::Param(format!("invalid calendar date: {s}")))
}

/// Ingest diagnostics: skipped lines and empty-field counts.
#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    /// (1-based line number, reason) for each skipped malformed line.
    pub skipped: Vec<(usize, String)>,
    /// Records that lack the selected field (retained with empty field).
    pub empty_field: usize,
}

/// Immutable document collection with id lookup and date ordering.
#[derive(Clone, Debug)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Build from documents, enforcing unique non-empty ids.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.id.is_empty() {
                return Err(SimvecError::Corpus {
                    line: i + 1,
                    msg: "empty document id".into(),
                });
            }
            if let Some(prev) = index.insert(d.id.clone(), i) {
                return Err(SimvecError::Corpus {
                    line: i + 1,
                    msg: format!(
                        "duplicate id {:?} (records {} and {})",
                        d.id,
                        prev + 1,
                        i + 1
                    ),
                });
            }
        }
        Ok(Corpus { docs, index })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, i: usize) -> Option<&Document> {
        self.docs.get(i)
    }

    pub fn lookup(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Documents sorted ascending by (date, id). Stable for equal keys.
    pub fn by_date(&self) -> Vec<&Document> {
        let mut v: Vec<&Document> = self.docs.iter().collect();
        v.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
        v
    }

    /// Write the canonical JSON-lines store.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.docs {
            let line = serde_json::to_string(d)
                .map_err(|e| SimvecError::Store(format!("serialize {}: {e}", d.id)))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Parse one JSON-lines corpus from a reader. Malformed lines (bad JSON,
/// missing/empty id, invalid date, subclass without main_class) are skipped
/// with a diagnostic; duplicate ids abort with both line numbers.
pub fn ingest_reader<R: BufRead>(reader: R, field: Field) -> Result<(Corpus, IngestReport)> {
    let mut docs: Vec<Document> = Vec::new();
    let mut lines_by_id: HashMap<String, usize> = HashMap::new();
    let mut report = IngestReport::default();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = match serde_json::from_str(&line) {
            Ok(d) => d,
            Err(e) => {
                report.skipped.push((lineno, e.to_string()));
                continue;
            }
        };
        if doc.id.is_empty() {
            report.skipped.push((lineno, "empty id".into()));
            continue;
        }
        if !doc.subclass.is_empty() && doc.main_class.is_empty() {
            report
                .skipped
                .push((lineno, "subclass present without main_class".into()));
            continue;
        }
        if let Some(&prev) = lines_by_id.get(&doc.id) {
            return Err(SimvecError::Corpus {
                line: lineno,
                msg: format!("duplicate id {:?} (lines {} and {})", doc.id, prev, lineno),
            });
        }
        if doc.text(field).is_empty() {
            report.empty_field += 1;
        }
        lines_by_id.insert(doc.id.clone(), lineno);
        docs.push(doc);
    }
    let corpus = Corpus::from_documents(docs)?;
    Ok((corpus, report))
}

/// Ingest a corpus file. See [`ingest_reader`].
pub fn ingest<P: AsRef<Path>>(path: P, field: Field) -> Result<(Corpus, IngestReport)> {
    let f = std::fs::File::open(path.as_ref())?;
    ingest_reader(BufReader::new(f), field)
}
