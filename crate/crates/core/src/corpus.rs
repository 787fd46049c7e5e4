//! Tokenization, sentence splitting, segmentation and collection statistics.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Lowercased, whitespace-free surface form.
pub type Token = String;

/// Splits on Unicode whitespace, lowercases, and strips leading and trailing
/// non-alphanumeric characters from every token. Tokens that end up empty
/// are dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Lowercase single letters that are treated as abbreviations when followed
/// by a period ("v." for versus, "p." for page, ...). Uppercase single
/// letters are always treated as initials.
const SINGLE_LETTER_ABBREVIATIONS: &[char] = &['c', 'f', 'n', 'p', 'v'];

/// Byte ranges of the sentences in `text`.
///
/// A boundary follows `.`, `!` or `?` when the terminator is followed by
/// whitespace and then an uppercase letter or a digit. A period directly
/// after a single-letter word that is an initial or a known abbreviation is
/// not a boundary. The ranges partition the whole input: whitespace between
/// two sentences belongs to the earlier one.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    if text.is_empty() {
        return Vec::new();
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            let has_gap = j > i + 1;
            let opens_sentence = j < chars.len()
                && (chars[j].1.is_uppercase() || chars[j].1.is_ascii_digit());
            if has_gap && opens_sentence && !(c == '.' && is_abbreviation(&chars, i)) {
                let next = chars[j].0;
                spans.push(start..next);
                start = next;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    spans.push(start..text.len());
    spans
}

/// True when the word ending right before `chars[dot]` is a single-letter
/// abbreviation.
fn is_abbreviation(chars: &[(usize, char)], dot: usize) -> bool {
    if dot == 0 {
        return false;
    }
    let letter = chars[dot - 1].1;
    let word_start = dot == 1 || chars[dot - 2].1.is_whitespace();
    word_start
        && letter.is_alphabetic()
        && (letter.is_uppercase() || SINGLE_LETTER_ABBREVIATIONS.contains(&letter))
}

/// Sentences of `text`, trimmed; whitespace-only sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|r| text[r].trim())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<Token>,
    /// Half-open token ranges, one per non-empty sentence, covering
    /// `0..tokens.len()`.
    pub sentence_spans: Vec<Range<usize>>,
}

impl Document {
    /// Sentence-splits and tokenizes raw text.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        let mut tokens = Vec::new();
        let mut sentence_spans = Vec::new();
        for sentence in split_sentences(text) {
            let start = tokens.len();
            tokens.extend(tokenize(sentence));
            if tokens.len() > start {
                sentence_spans.push(start..tokens.len());
            }
        }
        Document {
            id: id.into(),
            tokens,
            sentence_spans,
        }
    }

    /// A document with a single sentence covering all tokens.
    pub fn from_tokens(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        let sentence_spans = std::iter::once(0..tokens.len())
            .filter(|r| !r.is_empty())
            .collect();
        Document {
            id: id.into(),
            tokens,
            sentence_spans,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A contiguous slice of a document: a sliding-window segment or a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub doc_id: String,
    /// 1-based ordinal within the document.
    pub position: usize,
    pub span: Range<usize>,
}

/// Sliding-window spans over `len` tokens.
///
/// Windows start at `0, stride, 2*stride, ...` and generation stops with the
/// first window that reaches the end, so every token is covered and the last
/// window always contributes uncovered tokens.
pub fn window_spans(len: usize, window: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window and stride must be positive".into(),
        ));
    }
    if stride > window {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} exceeds window {window}"
        )));
    }
    let mut spans = Vec::new();
    if len == 0 {
        return Ok(spans);
    }
    let mut start = 0;
    loop {
        let end = (start + window).min(len);
        spans.push(start..end);
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

pub fn segment(doc: &Document, window: usize, stride: usize) -> Result<Vec<Segment>> {
    Ok(window_spans(doc.len(), window, stride)?
        .into_iter()
        .enumerate()
        .map(|(i, span)| Segment {
            doc_id: doc.id.clone(),
            position: i + 1,
            span,
        })
        .collect())
}

pub fn sentences(doc: &Document) -> Vec<Segment> {
    doc.sentence_spans
        .iter()
        .enumerate()
        .map(|(i, span)| Segment {
            doc_id: doc.id.clone(),
            position: i + 1,
            span: span.clone(),
        })
        .collect()
}

/// Unit of relevance matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Document,
    Segment,
    Sentence,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "document" | "doc" => Ok(Granularity::Document),
            "segment" => Ok(Granularity::Segment),
            "sentence" => Ok(Granularity::Sentence),
            other => Err(Error::InvalidArgument(format!(
                "unknown granularity {other:?} (expected document, segment or sentence)"
            ))),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Document => "document",
            Granularity::Segment => "segment",
            Granularity::Sentence => "sentence",
        })
    }
}

/// Parts of `doc` at the requested granularity. Empty documents have none.
pub fn parts(
    doc: &Document,
    granularity: Granularity,
    window: usize,
    stride: usize,
) -> Result<Vec<Segment>> {
    match granularity {
        Granularity::Document if doc.is_empty() => Ok(Vec::new()),
        Granularity::Document => Ok(vec![Segment {
            doc_id: doc.id.clone(),
            position: 1,
            span: 0..doc.len(),
        }]),
        Granularity::Segment => segment(doc, window, stride),
        Granularity::Sentence => Ok(sentences(doc)),
    }
}

/// Document frequencies over a collection.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionStats {
    pub num_docs: usize,
    pub df: HashMap<Token, usize>,
}

impl CollectionStats {
    pub fn from_documents(docs: &[Document]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let mut df: HashMap<Token, usize> = HashMap::new();
        for doc in docs {
            let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t.to_owned()).or_default() += 1;
            }
        }
        Ok(CollectionStats {
            num_docs: docs.len(),
            df,
        })
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    /// `ln(N / df)`, or `ln(N)` for tokens never seen in the collection.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.num_docs as f64;
        match self.df(token) {
            0 => n.ln(),
            df => (n / df as f64).ln(),
        }
    }

    /// Mean IDF of `tokens` (0 for an empty list).
    pub fn mean_idf<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        tokens.iter().map(|t| self.idf(t.as_ref())).sum::<f64>() / tokens.len() as f64
    }
}

/// Collection term counts for unigram language models.
#[derive(Debug, Clone, PartialEq)]
pub struct TermCounts {
    pub cf: HashMap<Token, u64>,
    pub total_tokens: u64,
}

impl TermCounts {
    pub fn from_documents(docs: &[Document]) -> Self {
        let mut cf: HashMap<Token, u64> = HashMap::new();
        let mut total_tokens = 0;
        for doc in docs {
            for t in &doc.tokens {
                *cf.entry(t.clone()).or_default() += 1;
                total_tokens += 1;
            }
        }
        TermCounts { cf, total_tokens }
    }

    /// Maximum-likelihood collection probability `cf(t) / |C|`.
    pub fn probability(&self, token: &str) -> f64 {
        if self.total_tokens == 0 {
            return 0.0;
        }
        self.cf.get(token).copied().unwrap_or(0) as f64 / self.total_tokens as f64
    }
}

/// Documents with unique ids, in file order.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Collection {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate document id {:?}",
                    d.id
                )));
            }
        }
        Ok(Collection { documents, by_id })
    }

    /// Reads `<id>\t<text>` lines.
    pub fn read(path: &Path) -> Result<Self> {
        let docs = read_tsv_records(path)?
            .into_iter()
            .map(|(id, text)| Document::from_text(id, &text))
            .collect();
        Collection::new(docs)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn stats(&self) -> Result<CollectionStats> {
        CollectionStats::from_documents(&self.documents)
    }
}

/// Parses `<id>\t<text>` records; blank lines are skipped.
pub fn parse_tsv_records<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected <id>\\t<text>"))?;
        if id.is_empty() {
            return Err(Error::parse(n + 1, "empty id"));
        }
        out.push((id.to_owned(), text.to_owned()));
    }
    Ok(out)
}

pub fn read_tsv_records(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tsv_records(std::io::BufReader::new(file))
}

/// Part counts for estimating the cost of localized matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartCounts {
    pub documents: usize,
    pub parts: usize,
}

impl PartCounts {
    pub fn count(
        docs: &[Document],
        granularity: Granularity,
        window: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut parts_total = 0;
        for d in docs {
            parts_total += parts(d, granularity, window, stride)?.len();
        }
        Ok(PartCounts {
            documents: docs.len(),
            parts: parts_total,
        })
    }

    /// Parts per document: how many more encoder passes localized matching
    /// costs compared to whole-document encoding.
    pub fn slowdown_factor(&self) -> f64 {
        if self.documents == 0 {
            return 0.0;
        }
        self.parts as f64 / self.documents as f64
    }
}
