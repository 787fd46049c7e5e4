//! Embedding stores, subword pooling and the ISO / AOC / SEMB assembly rules.
//!
//! Two on-disk containers are supported:
//!
//! * text: a `<count> <dim>` header followed by `<token> v1 .. v<dim>` lines,
//!   written with 6 decimals;
//! * binary: magic `EMB1`, little-endian `u32` count and dim, then per entry a
//!   `u16` token byte length, the UTF-8 token and `dim` little-endian `f32`s.
//!
//! The binary container also carries projection and adapter matrices (rows
//! keyed by their index) and per-part vectors keyed by [`part_key`].

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::vector;

pub const BINARY_MAGIC: &[u8; 4] = b"EMB1";

/// Immutable token -> vector map that remembers insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    vocab: Vec<String>,
    data: Vec<T>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn empty(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            vocab: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a store from `(token, vector)` pairs. Duplicate tokens,
    /// wrong lengths and non-finite components are rejected.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
    {
        let mut store = Self::empty(dim);
        for (token, v) in entries {
            store.push(token, &v)?;
        }
        Ok(store)
    }

    fn push(&mut self, token: String, v: &[T]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if !vector::all_finite(v) {
            return Err(Error::InvalidArgument(format!(
                "non-finite component in vector for {token:?}"
            )));
        }
        if self.index.contains_key(&token) {
            return Err(Error::InvalidArgument(format!("duplicate token {token:?}")));
        }
        self.index.insert(token.clone(), self.vocab.len());
        self.vocab.push(token);
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.vocab
            .iter()
            .enumerate()
            .map(move |(i, t)| (t.as_str(), self.row(i)))
    }

    /// Applies `f` to every vector, keeping the vocabulary.
    pub fn try_map<F>(&self, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Result<Vec<T>>,
    {
        let mut out = Self::empty(dim);
        out.vocab.reserve(self.len());
        for (t, v) in self.iter() {
            let mapped = f(v)?;
            out.push(t.to_owned(), &mapped)?;
        }
        Ok(out)
    }

    /// Adds the entries of `fallback` whose tokens are missing here, in the
    /// fallback's order.
    pub fn with_fallback(&self, fallback: &Self) -> Result<Self> {
        if fallback.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: fallback.dim,
            });
        }
        let mut out = self.clone();
        for (t, v) in fallback.iter() {
            if !out.contains(t) {
                out.push(t.to_owned(), v)?;
            }
        }
        Ok(out)
    }

    /// Keeps the first `limit` entries.
    pub fn truncated(&self, limit: usize) -> Self {
        let n = limit.min(self.len());
        let mut out = Self::empty(self.dim);
        for (t, v) in self.iter().take(n) {
            out.push(t.to_owned(), v).expect("entries already validated");
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingStore<U> {
        EmbeddingStore {
            dim: self.dim,
            vocab: self.vocab.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
            index: self.index.clone(),
        }
    }

    /// Stores a matrix with one entry per row, keyed `"0"`, `"1"`, ...
    pub fn from_matrix(m: &Matrix<T>) -> Self {
        let mut out = Self::empty(m.cols());
        for i in 0..m.rows() {
            out.push(i.to_string(), m.row(i)).expect("matrix rows are uniform");
        }
        out
    }

    /// Inverse of [`EmbeddingStore::from_matrix`]; rows must be keyed by
    /// their index in order.
    pub fn to_matrix(&self) -> Result<Matrix<T>> {
        for (i, t) in self.vocab.iter().enumerate() {
            if t.parse::<usize>().ok() != Some(i) {
                return Err(Error::InvalidArgument(format!(
                    "matrix container row {i} is keyed {t:?}"
                )));
            }
        }
        Matrix::from_vec(self.len(), self.dim, self.data.clone())
    }

    // ---- text container -------------------------------------------------

    pub fn read_text(path: &Path, limit: Option<usize>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(BufReader::new(file), limit)
    }

    pub fn parse_text<R: BufRead>(reader: R, limit: Option<usize>) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (count, dim) = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::parse(1, "missing header"));
            };
            let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let count = fields.next().and_then(|f| f.parse::<usize>().ok());
            let dim = fields.next().and_then(|f| f.parse::<usize>().ok());
            match (count, dim, fields.next()) {
                (Some(c), Some(d), None) if d > 0 => break (c, d),
                _ => return Err(Error::parse(n + 1, "expected header `<count> <dim>`")),
            }
        };
        let wanted = limit.map_or(count, |l| l.min(count));
        let mut store = Self::empty(dim);
        let mut last_line = 1;
        for (n, line) in lines {
            if store.len() == wanted {
                break;
            }
            let lineno = n + 1;
            last_line = lineno;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-blank line has a field");
            let mut v = Vec::with_capacity(dim);
            for f in fields {
                let x: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid number {f:?}")))?;
                v.push(T::of(x));
            }
            if v.len() != dim {
                return Err(Error::parse(
                    lineno,
                    format!("expected {dim} values, found {}", v.len()),
                ));
            }
            store
                .push(token.to_owned(), &v)
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        if store.len() < wanted {
            return Err(Error::parse(
                last_line,
                format!("header announces {count} entries, found {}", store.len()),
            ));
        }
        Ok(store)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<text container>", e);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(io)?;
        for (t, v) in self.iter() {
            w.write_all(t.as_bytes()).map_err(io)?;
            for x in v {
                write!(w, " {:.6}", x.as_f64()).map_err(io)?;
            }
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(BufWriter::new(file))
    }

    // ---- binary container -----------------------------------------------

    /// Writes the binary container. Components are stored as `f32`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<binary container>", e);
        let count = u32::try_from(self.len())
            .map_err(|_| Error::InvalidArgument("too many entries".into()))?;
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::InvalidArgument("dimension too large".into()))?;
        w.write_all(BINARY_MAGIC).map_err(io)?;
        w.write_all(&count.to_le_bytes()).map_err(io)?;
        w.write_all(&dim.to_le_bytes()).map_err(io)?;
        for (t, v) in self.iter() {
            let len = u16::try_from(t.len()).map_err(|_| {
                Error::InvalidArgument(format!("token longer than 65535 bytes: {t:?}"))
            })?;
            w.write_all(&len.to_le_bytes()).map_err(io)?;
            w.write_all(t.as_bytes()).map_err(io)?;
            for x in v {
                let f = x.to_f32().unwrap_or(f32::NAN);
                w.write_all(&f.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(BufWriter::new(file))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::parse_binary(&bytes)
    }

    pub fn parse_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4, "magic")? != BINARY_MAGIC {
            return Err(Error::Binary {
                offset: 0,
                msg: "bad magic".into(),
            });
        }
        let count = r.u32("entry count")? as usize;
        let dim = r.u32("dimension")? as usize;
        let mut store = Self::empty(dim);
        for _ in 0..count {
            let at = r.pos as u64;
            let len = r.u16("token length")? as usize;
            let token = std::str::from_utf8(r.take(len, "token")?).map_err(|_| Error::Binary {
                offset: at,
                msg: "token is not UTF-8".into(),
            })?;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(T::of(r.f32("vector component")? as f64));
            }
            store.push(token.to_owned(), &v).map_err(|e| Error::Binary {
                offset: at,
                msg: e.to_string(),
            })?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Binary {
                offset: r.pos as u64,
                msg: "trailing bytes after last entry".into(),
            });
        }
        Ok(store)
    }

    /// Reads either container, telling them apart by the binary magic.
    pub fn load(path: &Path, limit: Option<usize>) -> Result<Self> {
        let mut head = [0u8; 4];
        let is_binary = File::open(path)
            .and_then(|mut f| f.read(&mut head))
            .map_err(|e| Error::io(path, e))?
            == 4
            && &head == BINARY_MAGIC;
        if is_binary {
            let store = Self::read_binary(path)?;
            Ok(match limit {
                Some(l) => store.truncated(l),
                None => store,
            })
        } else {
            Self::read_text(path, limit)
        }
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Binary {
                offset: self.pos as u64,
                msg: format!("truncated file while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Contextualized vectors of the subwords of one term.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordGroup<T> {
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> SubwordGroup<T> {
    pub fn new(vectors: Vec<Vec<T>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::Empty("subword group"));
        };
        let dim = first.len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(SubwordGroup { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }
}

/// Mean of the subword vectors.
pub fn pool_subwords<T: Scalar>(group: &SubwordGroup<T>) -> Vec<T> {
    vector::mean(group.vectors.iter().map(Vec::as_slice), group.dim())
        .expect("subword groups are non-empty and uniform")
}

pub fn first_subword<T: Scalar>(group: &SubwordGroup<T>) -> &[T] {
    &group.vectors[0]
}

/// Context vectors of one term, capped at `cap` in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet<T> {
    pub term: String,
    context_vectors: Vec<Vec<T>>,
    cap: usize,
}

impl<T: Scalar> ContextSet<T> {
    /// Keeps the first `cap` of the available context vectors.
    pub fn new(term: impl Into<String>, mut available: Vec<Vec<T>>, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::InvalidArgument("context cap must be positive".into()));
        }
        available.truncate(cap);
        if let Some(first) = available.first() {
            let dim = first.len();
            if let Some(bad) = available.iter().find(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.len(),
                });
            }
        }
        Ok(ContextSet {
            term: term.into(),
            context_vectors: available,
            cap,
        })
    }

    pub fn len(&self) -> usize {
        self.context_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context_vectors.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.context_vectors
    }
}

/// Average-over-contexts embedding; `fallback` (the isolated-term
/// embedding) when no context was found.
pub fn aoc_embed<T: Scalar>(ctx: &ContextSet<T>, fallback: &[T]) -> Vec<T> {
    if ctx.is_empty() {
        return fallback.to_vec();
    }
    let dim = ctx.context_vectors[0].len();
    vector::mean(ctx.context_vectors.iter().map(Vec::as_slice), dim)
        .expect("context set is non-empty and uniform")
}

/// IDF-weighted sum of first-subword vectors plus the special-token
/// vectors scaled by the mean IDF of the input terms.
pub fn semb_embed<T: Scalar>(
    groups: &[SubwordGroup<T>],
    idf_weights: &[T],
    start: &[T],
    end: &[T],
) -> Result<Vec<T>> {
    if groups.len() != idf_weights.len() {
        return Err(Error::LengthMismatch {
            left: groups.len(),
            right: idf_weights.len(),
        });
    }
    let Some(first) = groups.first() else {
        return Err(Error::Empty("no terms to encode"));
    };
    let dim = first.dim();
    for v in groups.iter().map(SubwordGroup::dim).chain([start.len(), end.len()]) {
        if v != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v,
            });
        }
    }
    let mut out = vec![T::zero(); dim];
    for (g, &w) in groups.iter().zip(idf_weights) {
        vector::add_scaled(&mut out, w, first_subword(g));
    }
    let mean_idf = idf_weights.iter().copied().sum::<T>() / T::of_usize(idf_weights.len());
    vector::add_scaled(&mut out, mean_idf, start);
    vector::add_scaled(&mut out, mean_idf, end);
    Ok(out)
}

// ---- part-keyed containers -------------------------------------------------

const PART_SEP: char = '\u{1}';
const TERM_SEP: char = '\u{2}';

/// Key of a pooled part vector: `<doc_id>\u{1}<position>`.
pub fn part_key(doc_id: &str, position: usize) -> String {
    format!("{doc_id}{PART_SEP}{position}")
}

/// Key of the state of the `index`-th term of a part.
pub fn term_state_key(doc_id: &str, position: usize, index: usize, token: &str) -> String {
    format!("{}{TERM_SEP}{index}{TERM_SEP}{token}", part_key(doc_id, position))
}

/// Key of the sequence start (`end == false`) or end special-token state.
pub fn special_state_key(doc_id: &str, position: usize, end: bool) -> String {
    let which = if end { "end" } else { "start" };
    format!("{}{TERM_SEP}{which}", part_key(doc_id, position))
}

/// Vector material for one part as found in a part-keyed container.
#[derive(Debug, Clone, PartialEq)]
pub enum PartEntry<T> {
    /// A ready-made text vector (sentence encoders).
    Pooled(Vec<T>),
    /// Per-term first-subword states and special-token states, to be
    /// combined with [`semb_embed`] once IDF weights are known.
    Terms {
        terms: Vec<(String, Vec<T>)>,
        start: Option<Vec<T>>,
        end: Option<Vec<T>>,
    },
}

impl<T: Scalar> PartEntry<T> {
    /// Text vector of the part; `idf` weights SEMB term states.
    pub fn vector<F: Fn(&str) -> f64>(&self, dim: usize, idf: F) -> Result<Vec<T>> {
        match self {
            PartEntry::Pooled(v) => Ok(v.clone()),
            PartEntry::Terms { terms, start, end } => {
                let groups = terms
                    .iter()
                    .map(|(_, v)| SubwordGroup::new(vec![v.clone()]))
                    .collect::<Result<Vec<_>>>()?;
                let weights: Vec<T> = terms.iter().map(|(t, _)| T::of(idf(t))).collect();
                let zero = vec![T::zero(); dim];
                semb_embed(
                    &groups,
                    &weights,
                    start.as_deref().unwrap_or(&zero),
                    end.as_deref().unwrap_or(&zero),
                )
            }
        }
    }
}

/// Groups a part-keyed store by `(doc_id, position)`.
pub fn parse_parts<T: Scalar>(
    store: &EmbeddingStore<T>,
) -> Result<BTreeMap<String, BTreeMap<usize, PartEntry<T>>>> {
    type Slot<T> = (Option<Vec<T>>, BTreeMap<usize, (String, Vec<T>)>, Option<Vec<T>>, Option<Vec<T>>);
    let mut raw: BTreeMap<String, BTreeMap<usize, Slot<T>>> = BTreeMap::new();
    for (key, v) in store.iter() {
        let bad = || Error::InvalidArgument(format!("malformed part key {key:?}"));
        let (doc, rest) = key.split_once(PART_SEP).ok_or_else(bad)?;
        let mut fields = rest.split(TERM_SEP);
        let position: usize = fields.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let slot = raw
            .entry(doc.to_owned())
            .or_default()
            .entry(position)
            .or_insert_with(|| (None, BTreeMap::new(), None, None));
        match (fields.next(), fields.next(), fields.next()) {
            (None, _, _) => slot.0 = Some(v.to_vec()),
            (Some("start"), None, _) => slot.2 = Some(v.to_vec()),
            (Some("end"), None, _) => slot.3 = Some(v.to_vec()),
            (Some(idx), Some(token), None) => {
                let idx: usize = idx.parse().map_err(|_| bad())?;
                slot.1.insert(idx, (token.to_owned(), v.to_vec()));
            }
            _ => return Err(bad()),
        }
    }
    let mut out = BTreeMap::new();
    for (doc, positions) in raw {
        let mut parts = BTreeMap::new();
        for (pos, (pooled, terms, start, end)) in positions {
            let entry = match pooled {
                Some(v) if terms.is_empty() => PartEntry::Pooled(v),
                Some(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "part {doc:?}/{pos} has both a pooled vector and term states"
                    )))
                }
                None if terms.is_empty() => {
                    return Err(Error::InvalidArgument(format!(
                        "part {doc:?}/{pos} has special-token states but no terms"
                    )))
                }
                None => PartEntry::Terms {
                    terms: terms.into_values().collect(),
                    start,
                    end,
                },
            };
            parts.insert(pos, entry);
        }
        out.insert(doc, parts);
    }
    Ok(out)
}
