//! Plain-text stores for pipeline intermediates.
//!
//! Every store is line-oriented with a self-describing first line,
//! `#simvec <kind> key=value ...`, so a file names its own content kind,
//! source field, and method. Rows are `id TAB payload`. Sparse weights are
//! written with 9 significant digits; dense vectors use Rust's shortest
//! round-trip form, so reading a dense store back reproduces the exact bits
//! that were computed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::Field;
use crate::eval::RocResult;
use crate::preprocess::TokenStream;
use crate::vectors::{DenseVector, SparseVector};
use crate::{Result, SimvecError};

/// Method, field, and dimension identity carried by vector stores.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorMeta {
    pub method: String,
    pub field: Field,
    pub dim: u32,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(SimvecError::Store(format!(
            "document id {id:?} is empty or contains separators"
        )));
    }
    Ok(())
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() || token.contains(|c: char| c.is_whitespace() || c == ':') {
        return Err(SimvecError::Store(format!(
            "token {token:?} is empty or contains reserved characters"
        )));
    }
    Ok(())
}

fn header_line(kind: &str, attrs: &[(&str, String)]) -> String {
    let mut line = format!("#simvec {kind}");
    for (k, v) in attrs {
        let _ = write!(line, " {k}={v}");
    }
    line.push('\n');
    line
}

fn parse_header(path: &Path, text: &str, kind: &str) -> Result<BTreeMap<String, String>> {
    let first = text.lines().next().unwrap_or("");
    let mut parts = first.split_whitespace();
    if parts.next() != Some("#simvec") || parts.next() != Some(kind) {
        return Err(SimvecError::Store(format!(
            "{}: expected a `#simvec {kind}` header, found {first:?}",
            path.display()
        )));
    }
    let mut attrs = BTreeMap::new();
    for pair in parts {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            SimvecError::Store(format!("{}: malformed header attribute {pair:?}", path.display()))
        })?;
        attrs.insert(k.to_string(), v.to_string());
    }
    Ok(attrs)
}

fn attr<'a>(
    path: &Path,
    attrs: &'a BTreeMap<String, String>,
    key: &str,
) -> Result<&'a String> {
    attrs.get(key).ok_or_else(|| {
        SimvecError::Store(format!("{}: header is missing `{key}=`", path.display()))
    })
}

fn body_rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty())
}

fn row_error(path: &Path, lineno: usize, msg: impl std::fmt::Display) -> SimvecError {
    SimvecError::Store(format!("{}:{}: {msg}", path.display(), lineno + 1))
}

fn split_row<'a>(path: &Path, lineno: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    line.split_once('\t').ok_or_else(|| row_error(path, lineno, "expected `id TAB payload`"))
}

/// Write one field's token streams.
pub fn write_token_streams(path: &Path, field: Field, streams: &[TokenStream]) -> Result<()> {
    let mut out = header_line("tokens", &[("field", field.to_string())]);
    for s in streams {
        check_id(&s.doc_id)?;
        if s.field != field {
            return Err(SimvecError::Store(format!(
                "stream {} carries field {}, file is for {field}",
                s.doc_id, s.field
            )));
        }
        out.push_str(&s.doc_id);
        out.push('\t');
        for (i, t) in s.tokens.iter().enumerate() {
            check_token(t)?;
            if i > 0 {
                out.push(' ');
            }
            out.push_str(t);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_token_streams(path: &Path) -> Result<(Field, Vec<TokenStream>)> {
    let text = fs::read_to_string(path)?;
    let attrs = parse_header(path, &text, "tokens")?;
    let field: Field = attr(path, &attrs, "field")?.parse()?;
    let mut streams = Vec::new();
    for (lineno, line) in body_rows(&text) {
        let (id, payload) = split_row(path, lineno, line)?;
        streams.push(TokenStream {
            doc_id: id.to_string(),
            field,
            tokens: payload.split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok((field, streams))
}

/// Write per-document phrase counts.
pub fn write_phrase_counts(
    path: &Path,
    field: Field,
    rows: &[(String, BTreeMap<String, u32>)],
) -> Result<()> {
    let mut out = header_line("phrases", &[("field", field.to_string())]);
    for (id, counts) in rows {
        check_id(id)?;
        out.push_str(id);
        out.push('\t');
        for (i, (phrase, count)) in counts.iter().enumerate() {
            check_token(phrase)?;
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{phrase}:{count}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_phrase_counts(path: &Path) -> Result<(Field, Vec<(String, BTreeMap<String, u32>)>)> {
    let text = fs::read_to_string(path)?;
    let attrs = parse_header(path, &text, "phrases")?;
    let field: Field = attr(path, &attrs, "field")?.parse()?;
    let mut rows = Vec::new();
    for (lineno, line) in body_rows(&text) {
        let (id, payload) = split_row(path, lineno, line)?;
        let mut counts = BTreeMap::new();
        for entry in payload.split_whitespace() {
            let (phrase, count) = entry
                .rsplit_once(':')
                .ok_or_else(|| row_error(path, lineno, format!("bad phrase entry {entry:?}")))?;
            let count: u32 = count
                .parse()
                .map_err(|_| row_error(path, lineno, format!("bad count in {entry:?}")))?;
            counts.insert(phrase.to_string(), count);
        }
        rows.push((id.to_string(), counts));
    }
    Ok((field, rows))
}

/// Write sparse document vectors under a method/field/dim header.
pub fn write_sparse_vectors(
    path: &Path,
    meta: &VectorMeta,
    rows: &[(String, SparseVector)],
) -> Result<()> {
    let mut out = header_line(
        "sparse",
        &[
            ("method", meta.method.clone()),
            ("field", meta.field.to_string()),
            ("dim", meta.dim.to_string()),
        ],
    );
    for (id, vec) in rows {
        check_id(id)?;
        if vec.dim != meta.dim {
            return Err(SimvecError::Store(format!(
                "vector for {id} has dim {}, store is dim {}",
                vec.dim, meta.dim
            )));
        }
        out.push_str(id);
        out.push('\t');
        for (i, (idx, w)) in vec.entries.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{idx}:{w:.8e}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_sparse_vectors(path: &Path) -> Result<(VectorMeta, Vec<(String, SparseVector)>)> {
    let text = fs::read_to_string(path)?;
    let attrs = parse_header(path, &text, "sparse")?;
    let meta = VectorMeta {
        method: attr(path, &attrs, "method")?.clone(),
        field: attr(path, &attrs, "field")?.parse()?,
        dim: attr(path, &attrs, "dim")?
            .parse()
            .map_err(|_| SimvecError::Store(format!("{}: bad dim", path.display())))?,
    };
    let mut rows = Vec::new();
    for (lineno, line) in body_rows(&text) {
        let (id, payload) = split_row(path, lineno, line)?;
        let mut entries = Vec::new();
        for entry in payload.split_whitespace() {
            let (idx, w) = entry
                .split_once(':')
                .ok_or_else(|| row_error(path, lineno, format!("bad entry {entry:?}")))?;
            let idx: u32 = idx
                .parse()
                .map_err(|_| row_error(path, lineno, format!("bad index in {entry:?}")))?;
            let w: f64 = w
                .parse()
                .map_err(|_| row_error(path, lineno, format!("bad weight in {entry:?}")))?;
            entries.push((idx, w));
        }
        let vec = SparseVector::new(entries, meta.dim)
            .map_err(|e| row_error(path, lineno, e))?;
        rows.push((id.to_string(), vec));
    }
    Ok((meta, rows))
}

/// Write dense document vectors under a method/field/dim header.
pub fn write_dense_vectors(
    path: &Path,
    meta: &VectorMeta,
    rows: &[(String, DenseVector)],
) -> Result<()> {
    let mut out = header_line(
        "dense",
        &[
            ("method", meta.method.clone()),
            ("field", meta.field.to_string()),
            ("dim", meta.dim.to_string()),
        ],
    );
    for (id, vec) in rows {
        check_id(id)?;
        if vec.len() != meta.dim as usize {
            return Err(SimvecError::Store(format!(
                "vector for {id} has dim {}, store is dim {}",
                vec.len(),
                meta.dim
            )));
        }
        out.push_str(id);
        out.push('\t');
        for (i, v) in vec.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_dense_vectors(path: &Path) -> Result<(VectorMeta, Vec<(String, DenseVector)>)> {
    let text = fs::read_to_string(path)?;
    let attrs = parse_header(path, &text, "dense")?;
    let meta = VectorMeta {
        method: attr(path, &attrs, "method")?.clone(),
        field: attr(path, &attrs, "field")?.parse()?,
        dim: attr(path, &attrs, "dim")?
            .parse()
            .map_err(|_| SimvecError::Store(format!("{}: bad dim", path.display())))?,
    };
    let mut rows = Vec::new();
    for (lineno, line) in body_rows(&text) {
        let (id, payload) = split_row(path, lineno, line)?;
        let mut values = Vec::new();
        for v in payload.split_whitespace() {
            values.push(
                v.parse::<f64>()
                    .map_err(|_| row_error(path, lineno, format!("bad value {v:?}")))?,
            );
        }
        if values.len() != meta.dim as usize {
            return Err(row_error(
                path,
                lineno,
                format!("{} values in a dim-{} store", values.len(), meta.dim),
            ));
        }
        rows.push((id.to_string(), values));
    }
    Ok((meta, rows))
}

/// Read a labeled-pair file: one `id_a TAB id_b` per line, `#` comments and
/// blank lines skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| row_error(path, lineno, "expected `id_a TAB id_b`"))?;
        pairs.push((a.trim().to_string(), b.trim().to_string()));
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (a, b) in pairs {
        check_id(a)?;
        check_id(b)?;
        let _ = writeln!(out, "{a}\t{b}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write an ROC curve as `fpr,tpr` CSV.
pub fn write_roc_csv(path: &Path, roc: &RocResult) -> Result<()> {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &roc.points {
        let _ = writeln!(out, "{fpr},{tpr}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// One evaluation outcome in the summary format `method,field,strategy,auc`.
pub fn summary_line(method: &str, field: Field, strategy: &str, auc: f64) -> String {
    format!("{method},{field},{strategy},{auc}")
}

/// Append a summary line, creating the file on first use.
pub fn append_summary(path: &Path, line: &str) -> Result<()> {
    use std::io::Write as _;
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn stream(id: &str, tokens: &[&str]) -> TokenStream {
        TokenStream {
            doc_id: id.into(),
            field: Field::Title,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn token_streams_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("tokens.tsv");
        let streams = vec![stream("a", &["pump", "seal"]), stream("b", &[])];
        write_token_streams(&path, Field::Title, &streams).unwrap();
        let (field, back) = read_token_streams(&path).unwrap();
        assert_eq!(field, Field::Title);
        assert_eq!(back, streams);
    }

    #[test]
    fn token_stream_field_mismatch_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("tokens.tsv");
        let streams = vec![stream("a", &["pump"])];
        assert!(write_token_streams(&path, Field::Abstract, &streams).is_err());
    }

    #[test]
    fn phrase_counts_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phrases.tsv");
        let rows = vec![
            (
                "a".to_string(),
                BTreeMap::from([("fast_transform".to_string(), 3u32), ("net".to_string(), 1)]),
            ),
            ("b".to_string(), BTreeMap::new()),
        ];
        write_phrase_counts(&path, Field::Abstract, &rows).unwrap();
        let (field, back) = read_phrase_counts(&path).unwrap();
        assert_eq!(field, Field::Abstract);
        assert_eq!(back, rows);
    }

    #[test]
    fn sparse_vectors_roundtrip_at_nine_digits() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vectors.tsv");
        let meta = VectorMeta { method: "tfidf".into(), field: Field::Title, dim: 10 };
        let rows = vec![
            (
                "a".to_string(),
                SparseVector::new(vec![(0, 1.0 / 3.0), (7, 2.715e-300)], 10).unwrap(),
            ),
            ("b".to_string(), SparseVector::empty(10)),
        ];
        write_sparse_vectors(&path, &meta, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("0:3.33333333e-1"), "weights carry 9 significant digits");
        let (back_meta, back) = read_sparse_vectors(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.len(), 2);
        for ((ai, aw), (bi, bw)) in back[0].1.entries.iter().zip(&rows[0].1.entries) {
            assert_eq!(ai, bi);
            assert!((aw - bw).abs() <= bw.abs() * 1e-8, "{aw} vs {bw}");
        }
        assert!(back[1].1.is_zero());
    }

    #[test]
    fn sparse_store_written_twice_is_identical() {
        let dir = tempdir().unwrap();
        let meta = VectorMeta { method: "tfidf".into(), field: Field::Title, dim: 4 };
        let rows =
            vec![("a".to_string(), SparseVector::new(vec![(2, 0.1 + 0.2)], 4).unwrap())];
        let (p1, p2) = (dir.path().join("v1.tsv"), dir.path().join("v2.tsv"));
        write_sparse_vectors(&p1, &meta, &rows).unwrap();
        write_sparse_vectors(&p2, &meta, &rows).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p1).unwrap(),
            std::fs::read_to_string(&p2).unwrap()
        );
    }

    #[test]
    fn dense_vectors_roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dense.tsv");
        let meta = VectorMeta { method: "lsi".into(), field: Field::All, dim: 3 };
        let rows = vec![("a".to_string(), vec![0.1 + 0.2, -0.0, f64::MIN_POSITIVE])];
        write_dense_vectors(&path, &meta, &rows).unwrap();
        let (back_meta, back) = read_dense_vectors(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back[0].1.len(), 3);
        for (x, y) in back[0].1.iter().zip(&rows[0].1) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn dim_mismatch_rejected_on_write_and_read() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dense.tsv");
        let meta = VectorMeta { method: "lsi".into(), field: Field::Title, dim: 3 };
        let rows = vec![("a".to_string(), vec![1.0, 2.0])];
        assert!(write_dense_vectors(&path, &meta, &rows).is_err());
        fs::write(&path, "#simvec dense method=lsi field=title dim=3\na\t1 2\n").unwrap();
        assert!(read_dense_vectors(&path).is_err());
    }

    #[test]
    fn wrong_kind_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("store.tsv");
        write_token_streams(&path, Field::Title, &[stream("a", &["x"])]).unwrap();
        let err = read_sparse_vectors(&path).unwrap_err();
        assert!(err.to_string().contains("#simvec sparse"), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("broken.tsv");
        fs::write(&path, "#simvec tokens field=title\nno-tab-here\n").unwrap();
        let err = read_token_streams(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn reserved_characters_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        let bad_id = vec![TokenStream {
            doc_id: "a\tb".into(),
            field: Field::Title,
            tokens: vec![],
        }];
        assert!(write_token_streams(&path, Field::Title, &bad_id).is_err());
        let bad_token = vec![stream("ok", &["with space"])];
        assert!(write_token_streams(&path, Field::Title, &bad_token).is_err());
        let bad_phrase = vec![(
            "ok".to_string(),
            BTreeMap::from([("with:colon".to_string(), 1u32)]),
        )];
        assert!(write_phrase_counts(&path, Field::Title, &bad_phrase).is_err());
    }

    #[test]
    fn pairs_file_roundtrip_with_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        fs::write(&path, "# positives\nus1\tus2\n\nus3\tus4\n").unwrap();
        let pairs = read_pairs(&path).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("us1".to_string(), "us2".to_string()),
                ("us3".to_string(), "us4".to_string())
            ]
        );
        let out = dir.path().join("pairs-out.tsv");
        write_pairs(&out, &pairs).unwrap();
        assert_eq!(read_pairs(&out).unwrap(), pairs);
        fs::write(&path, "only-one-id\n").unwrap();
        assert!(read_pairs(&path).is_err());
    }

    #[test]
    fn roc_csv_and_summary_format() {
        let dir = tempdir().unwrap();
        let roc_path = dir.path().join("roc.csv");
        let roc = RocResult { points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)], auc: 0.75 };
        write_roc_csv(&roc_path, &roc).unwrap();
        let text = fs::read_to_string(&roc_path).unwrap();
        assert_eq!(text, "fpr,tpr\n0,0\n0.5,1\n1,1\n");

        let line = summary_line("tfidf", Field::Title, "random", 0.9125);
        assert_eq!(line, "tfidf,title,random,0.9125");
        let summary = dir.path().join("summary.csv");
        append_summary(&summary, &line).unwrap();
        append_summary(&summary, &line).unwrap();
        let text = fs::read_to_string(&summary).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
