use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize, BilingualDictionary, Document, NormalizationPipeline, Qrels, Topic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocFormat {
    TrecSgml,
    Jsonl,
}

impl std::str::FromStr for DocFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "trec_sgml" | "trec" => Ok(DocFormat::TrecSgml),
            "jsonl" => Ok(DocFormat::Jsonl),
            other => Err(format!("unknown document format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct JsonDoc {
    id: String,
    text: String,
}

/// Streaming reader over a TREC SGML or JSONL document file.
pub struct DocumentReader<R> {
    reader: R,
    format: DocFormat,
    pending: String,
    offset: u64,
    parsed: usize,
    seen: HashSet<String>,
    done: bool,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, format: DocFormat) -> Self {
        DocumentReader {
            reader,
            format,
            pending: String::new(),
            offset: 0,
            parsed: 0,
            seen: HashSet::new(),
            done: false,
        }
    }

    fn malformed(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::MalformedRecord {
            offset,
            parsed: self.parsed,
            message: message.into(),
        }
    }

    /// Appends one line to `pending`; false at EOF.
    fn fill(&mut self) -> Result<bool> {
        let n = self
            .reader
            .read_line(&mut self.pending)
            .map_err(|e| self.malformed(self.offset, e.to_string()))?;
        Ok(n > 0)
    }

    fn next_jsonl(&mut self) -> Result<Option<RawDocument>> {
        loop {
            self.pending.clear();
            let start = self.offset;
            if !self.fill()? {
                return Ok(None);
            }
            self.offset += self.pending.len() as u64;
            let line = self.pending.trim();
            if line.is_empty() {
                continue;
            }
            let doc: JsonDoc =
                serde_json::from_str(line).map_err(|e| self.malformed(start, e.to_string()))?;
            return Ok(Some(RawDocument {
                doc_id: doc.id,
                text: doc.text,
            }));
        }
    }

    fn next_trec(&mut self) -> Result<Option<RawDocument>> {
        loop {
            let trimmed = self.pending.trim_start();
            let skipped = self.pending.len() - trimmed.len();
            if skipped > 0 {
                self.pending.drain(..skipped);
                self.offset += skipped as u64;
            }
            if self.pending.is_empty() {
                if !self.fill()? {
                    return Ok(None);
                }
                continue;
            }
            if self.pending.len() < 5 && "<DOC>".starts_with(self.pending.as_str()) {
                if !self.fill()? {
                    return Err(self.malformed(self.offset, "truncated <DOC> tag"));
                }
                continue;
            }
            if !self.pending.starts_with("<DOC>") {
                return Err(self.malformed(self.offset, "expected <DOC>"));
            }
            let Some(end) = self.pending.find("</DOC>") else {
                if !self.fill()? {
                    return Err(self.malformed(self.offset, "unterminated <DOC>"));
                }
                continue;
            };
            let record_offset = self.offset;
            let body = self.pending[5..end].to_string();
            let consumed = end + "</DOC>".len();
            self.pending.drain(..consumed);
            self.offset += consumed as u64;
            return parse_trec_body(&body)
                .map(Some)
                .map_err(|m| self.malformed(record_offset, m));
        }
    }
}

fn parse_trec_body(body: &str) -> std::result::Result<RawDocument, String> {
    if body.contains("<DOC>") {
        return Err("nested <DOC>".into());
    }
    let doc_id = extract(body, "<DOCNO>", "</DOCNO>")?
        .next()
        .ok_or("missing <DOCNO>")?
        .trim()
        .to_string();
    if doc_id.is_empty() {
        return Err("empty <DOCNO>".into());
    }
    let texts: Vec<&str> = extract(body, "<TEXT>", "</TEXT>")?.collect();
    Ok(RawDocument {
        doc_id,
        text: texts.join(" "),
    })
}

/// Contents of every `open ... close` block, in order.
fn extract<'a>(
    body: &'a str,
    open: &'static str,
    close: &'static str,
) -> std::result::Result<std::vec::IntoIter<&'a str>, String> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find(open) {
        let after = &rest[start + open.len()..];
        let end = after
            .find(close)
            .ok_or_else(|| format!("unterminated {open}"))?;
        out.push(&after[..end]);
        rest = &after[end + close.len()..];
    }
    Ok(out.into_iter())
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<RawDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let next = match self.format {
            DocFormat::Jsonl => self.next_jsonl(),
            DocFormat::TrecSgml => self.next_trec(),
        };
        let item = match next {
            Ok(Some(doc)) => {
                if !self.seen.insert(doc.doc_id.clone()) {
                    Err(Error::DuplicateDocId(doc.doc_id))
                } else {
                    self.parsed += 1;
                    Ok(doc)
                }
            }
            Ok(None) => {
                self.done = true;
                return None;
            }
            Err(e) => Err(e),
        };
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}

/// Opens a document file as a stream of raw `(doc_id, text)` records.
pub fn parse_documents(path: &Path, format: DocFormat) -> Result<DocumentReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(DocumentReader::new(BufReader::new(file), format))
}

/// Reads and normalizes every document in a file.
pub fn read_documents(
    path: &Path,
    format: DocFormat,
    pipeline: &NormalizationPipeline,
) -> Result<Vec<Document>> {
    parse_documents(path, format)?
        .map(|r| r.map(|raw| Document::from_text(raw.doc_id, &raw.text, pipeline)))
        .collect()
}

/// Counters reported while reading a dictionary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DictionaryStats {
    pub lines: usize,
    /// Entries whose candidate list normalized to nothing.
    pub dropped_empty: usize,
    /// Entries whose source side normalized to nothing (e.g. a stopword).
    pub dropped_source: usize,
    /// Entries whose source side normalized to more than one term.
    pub dropped_multiword_source: usize,
    /// Candidate strings that split into several unigram candidates.
    pub split_candidates: usize,
}

pub fn parse_dictionary_str(
    text: &str,
    source: &NormalizationPipeline,
    target: &NormalizationPipeline,
) -> Result<(BilingualDictionary, DictionaryStats)> {
    let mut dict = BilingualDictionary::new();
    let mut stats = DictionaryStats::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let (src, cands) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected source<TAB>candidates"))?;
        let src_terms = normalize(src, source);
        let src_term = match src_terms.as_slice() {
            [] => {
                stats.dropped_source += 1;
                continue;
            }
            [t] => t.clone(),
            _ => {
                stats.dropped_multiword_source += 1;
                continue;
            }
        };
        let mut terms = Vec::new();
        for raw in cands.split_whitespace() {
            let normalized = normalize(raw, target);
            if normalized.len() > 1 {
                stats.split_candidates += 1;
            }
            terms.extend(normalized);
        }
        if terms.is_empty() {
            stats.dropped_empty += 1;
            continue;
        }
        dict.add(src_term, terms);
    }
    Ok((dict, stats))
}

pub fn parse_dictionary(
    path: &Path,
    source: &NormalizationPipeline,
    target: &NormalizationPipeline,
) -> Result<(BilingualDictionary, DictionaryStats)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary_str(&text, source, target)
}

pub fn parse_qrels_str(text: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let [topic, _, doc, rel] = cols[..] else {
            return Err(Error::parse(i + 1, format!("expected 4 columns, got {}", cols.len())));
        };
        let rel: i64 = rel
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("relevance {rel:?} is not an integer")))?;
        qrels.judge(topic, doc, rel);
    }
    Ok(qrels)
}

pub fn parse_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels_str(&text)
}

#[derive(Deserialize)]
struct JsonTopic {
    id: String,
    title: String,
    #[serde(default)]
    desc: String,
}

/// Reads topics from JSONL (`id`, `title`, `desc`); the only topic format.
pub fn parse_topics(path: &Path, pipeline: &NormalizationPipeline) -> Result<Vec<Topic>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_topics_str(&text, pipeline)
}

pub(crate) fn parse_topics_str(text: &str, pipeline: &NormalizationPipeline) -> Result<Vec<Topic>> {
    let mut topics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: JsonTopic =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let title_terms = normalize(&t.title, pipeline);
        if title_terms.is_empty() {
            return Err(Error::parse(
                i + 1,
                format!("topic {} has no title terms after normalization", t.id),
            ));
        }
        topics.push(Topic {
            topic_id: t.id,
            title_terms,
            desc_terms: normalize(&t.desc, pipeline),
        });
    }
    Ok(topics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, format: DocFormat) -> Vec<Result<RawDocument>> {
        DocumentReader::new(text.as_bytes(), format).collect()
    }

    #[test]
    fn single_trec_record() {
        let docs = read("<DOC><DOCNO>d1</DOCNO><TEXT>a b</TEXT></DOC>", DocFormat::TrecSgml);
        assert_eq!(docs.len(), 1);
        let d = docs[0].as_ref().unwrap();
        assert_eq!((d.doc_id.as_str(), d.text.as_str()), ("d1", "a b"));
    }

    #[test]
    fn trec_multiline_and_multiple_text_blocks() {
        let src = "<DOC>\n<DOCNO> d1 </DOCNO>\n<TEXT>\nfirst\n</TEXT>\n<TEXT>second</TEXT>\n</DOC>\n\n<DOC>\n<DOCNO>d2</DOCNO><TEXT>x</TEXT>\n</DOC>\n";
        let docs: Vec<RawDocument> = read(src, DocFormat::TrecSgml)
            .into_iter()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "d1");
        assert!(docs[0].text.contains("first") && docs[0].text.contains("second"));
        assert_eq!(docs[1].doc_id, "d2");
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert!(read("", DocFormat::TrecSgml).is_empty());
        assert!(read("", DocFormat::Jsonl).is_empty());
        assert!(read("\n  \n", DocFormat::TrecSgml).is_empty());
    }

    #[test]
    fn duplicate_doc_id_names_the_id() {
        let src = "<DOC><DOCNO>d1</DOCNO><TEXT>a</TEXT></DOC><DOC><DOCNO>d1</DOCNO><TEXT>b</TEXT></DOC>";
        let docs = read(src, DocFormat::TrecSgml);
        assert!(docs[0].is_ok());
        match &docs[1] {
            Err(Error::DuplicateDocId(id)) => assert_eq!(id, "d1"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_offset_and_count() {
        let src = "<DOC><DOCNO>d1</DOCNO><TEXT>a</TEXT></DOC>\n<DOC><TEXT>no id</TEXT></DOC>";
        let docs = read(src, DocFormat::TrecSgml);
        match &docs[1] {
            Err(Error::MalformedRecord { offset, parsed, .. }) => {
                assert_eq!(*offset, 43);
                assert_eq!(*parsed, 1);
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
        let docs = read("<DOC><DOCNO>d1</DOCNO><TEXT>a</TEXT>", DocFormat::TrecSgml);
        assert!(matches!(docs[0], Err(Error::MalformedRecord { offset: 0, parsed: 0, .. })));
        let docs = read("garbage", DocFormat::TrecSgml);
        assert!(matches!(docs[0], Err(Error::MalformedRecord { .. })));
    }

    #[test]
    fn jsonl_records() {
        let src = "{\"id\":\"a\",\"text\":\"x y\"}\n\n{\"id\":\"b\",\"text\":\"z\"}\n";
        let docs: Vec<RawDocument> = read(src, DocFormat::Jsonl)
            .into_iter()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].text, "z");
        let bad = read("{\"id\":\"a\",\"text\":\"x\"}\n{oops\n", DocFormat::Jsonl);
        assert!(matches!(bad[1], Err(Error::MalformedRecord { offset: 22, parsed: 1, .. })));
    }

    #[test]
    fn count_preserving() {
        let mut src = String::new();
        for i in 0..37 {
            src.push_str(&format!("<DOC>\n<DOCNO>d{i}</DOCNO>\n<TEXT>w{i} common</TEXT>\n</DOC>\n"));
        }
        let docs: Vec<_> = read(&src, DocFormat::TrecSgml);
        assert_eq!(docs.len(), 37);
        assert!(docs.iter().all(|d| d.is_ok()));
    }

    #[test]
    fn dictionary_parse() {
        let id = NormalizationPipeline::identity();
        let (d, stats) = parse_dictionary_str("chien\tdog hound\n", &id, &id).unwrap();
        assert_eq!(d.candidates("chien").unwrap(), ["dog", "hound"]);
        assert_eq!(stats.dropped_empty, 0);

        let (d, stats) = parse_dictionary_str("x\t\n", &id, &id).unwrap();
        assert!(d.is_empty());
        assert_eq!(stats.dropped_empty, 1);

        let err = parse_dictionary_str("ok\ta\nbroken line\n", &id, &id).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn dictionary_repeated_source_matches_naive_merge() {
        let text = "a\tx y\nb\tz\na\ty w x\nc\tq\nb\tz z r\n";
        let id = NormalizationPipeline::identity();
        let (d, _) = parse_dictionary_str(text, &id, &id).unwrap();
        // naive oracle: collect all candidates per source in line order, keep first occurrences
        let mut naive: std::collections::BTreeMap<String, Vec<String>> = Default::default();
        for line in text.lines() {
            let (s, c) = line.split_once('\t').unwrap();
            let list = naive.entry(s.to_string()).or_default();
            for w in c.split_whitespace() {
                if !list.iter().any(|x| x == w) {
                    list.push(w.to_string());
                }
            }
        }
        for (s, cands) in &naive {
            assert_eq!(d.candidates(s).unwrap(), cands.as_slice());
        }
        assert_eq!(d.len(), naive.len());
    }

    #[test]
    fn dictionary_entries_are_normalized_and_stopword_free() {
        let src = NormalizationPipeline::new(true, ["le"], super::super::StemmerKind::None);
        let tgt = NormalizationPipeline::new(true, ["the"], super::super::StemmerKind::None);
        let (d, stats) =
            parse_dictionary_str("Chien\tThe-Dog hound\nle\tthe\nbon chien\tgood dog\nchat\tcat-Pet\n", &src, &tgt)
                .unwrap();
        assert_eq!(d.candidates("chien").unwrap(), ["dog", "hound"]);
        assert_eq!(stats.dropped_source, 1);
        assert_eq!(stats.dropped_multiword_source, 1);
        assert_eq!(stats.split_candidates, 1);
        assert_eq!(d.candidates("chat").unwrap(), ["cat", "pet"]);
        for (s, cands) in d.iter() {
            assert!(!src.stopwords.contains(s));
            assert!(cands.iter().all(|c| !tgt.stopwords.contains(c)));
        }
    }

    #[test]
    fn qrels_parse() {
        let q = parse_qrels_str("91 0 d7 1\n").unwrap();
        assert_eq!(q.relevant("91").unwrap().len(), 1);
        let q = parse_qrels_str("91 0 d7 0\n").unwrap();
        assert!(q.relevant("91").unwrap().is_empty());
        let q = parse_qrels_str("91 0 d7 1\n91 0 d7 1\n").unwrap();
        assert_eq!(q.relevant("91").unwrap().len(), 1);
        let err = parse_qrels_str("91 0 d7 1\n91 0 d8 yes\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn topics_parse() {
        let id = NormalizationPipeline::identity();
        let t = parse_topics_str(
            "{\"id\":\"91\",\"title\":\"Wine Exports\",\"desc\":\"French wine\"}\n",
            &id,
        )
        .unwrap();
        assert_eq!(t[0].title_terms, vec!["wine", "exports"]);
        assert_eq!(t[0].verbose_query().len(), 4);
        assert!(parse_topics_str("{\"id\":\"1\",\"title\":\"\"}\n", &id).is_err());
    }
}
