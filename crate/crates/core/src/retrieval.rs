//! Text representations, cosine ranking, localized relevance matching,
//! re-ranking and the query-likelihood baseline.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::corpus::{self, CollectionStats, Document, Granularity, TermCounts};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::vector;

/// Score assigned to documents without an in-vocabulary term; below any
/// attainable cosine.
pub const ZERO_VECTOR_SCORE: f64 = -1.0;

/// A query, document or document part embedded in the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRepresentation<T> {
    pub id: String,
    pub vector: Vec<T>,
}

impl<T: Scalar> TextRepresentation<T> {
    pub fn new(id: impl Into<String>, vector: Vec<T>) -> Self {
        TextRepresentation {
            id: id.into(),
            vector,
        }
    }

    /// True when no term of the text was in the vocabulary.
    pub fn is_zero(&self) -> bool {
        vector::is_zero(&self.vector)
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// `A · v`, for fine-tuned adapters.
    pub fn adapted(&self, adapter: &Matrix<T>) -> Result<Self> {
        Ok(TextRepresentation {
            id: self.id.clone(),
            vector: adapter.mul_vec(&self.vector)?,
        })
    }
}

/// Unweighted sum of the in-vocabulary query term vectors.
pub fn embed_query<T: Scalar, S: AsRef<str>>(
    id: &str,
    terms: &[S],
    store: &EmbeddingStore<T>,
) -> TextRepresentation<T> {
    let mut v = vec![T::zero(); store.dim()];
    for t in terms {
        if let Some(e) = store.get(t.as_ref()) {
            vector::add_scaled(&mut v, T::one(), e);
        }
    }
    TextRepresentation::new(id, v)
}

/// IDF-weighted sum of the in-vocabulary term vectors; every occurrence
/// contributes.
pub fn embed_document<T: Scalar, S: AsRef<str>>(
    id: &str,
    terms: &[S],
    store: &EmbeddingStore<T>,
    stats: &CollectionStats,
) -> TextRepresentation<T> {
    let mut v = vec![T::zero(); store.dim()];
    for t in terms {
        let t = t.as_ref();
        if let Some(e) = store.get(t) {
            vector::add_scaled(&mut v, T::of(stats.idf(t)), e);
        }
    }
    TextRepresentation::new(id, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Documents for one query in decreasing score order, ties broken by
/// ascending document id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<RankedDoc>,
}

fn by_score_then_id(a: &RankedDoc, b: &RankedDoc) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl Ranking {
    /// Sorts `(doc_id, score)` pairs. Duplicate ids and NaN scores are
    /// rejected.
    pub fn from_scores(
        query_id: impl Into<String>,
        scores: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (doc_id, score) in scores {
            if score.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "NaN score for {doc_id:?} in query {query_id:?}"
                )));
            }
            if !seen.insert(doc_id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "document {doc_id:?} ranked twice for query {query_id:?}"
                )));
            }
            entries.push(RankedDoc { doc_id, score });
        }
        entries.sort_by(by_score_then_id);
        Ok(Ranking { query_id, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, depth: usize) {
        self.entries.truncate(depth);
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

/// Cosine between `query` and `doc` with the zero-vector conventions:
/// a zero document scores [`ZERO_VECTOR_SCORE`], a zero query scores 0.
pub fn similarity<T: Scalar>(query: &[T], doc: &[T]) -> f64 {
    cosine_with_norms(query, vector::norm(query), doc, vector::norm(doc))
}

#[inline]
fn cosine_with_norms<T: Scalar>(q: &[T], q_norm: T, d: &[T], d_norm: T) -> f64 {
    if d_norm.is_zero() {
        return ZERO_VECTOR_SCORE;
    }
    if q_norm.is_zero() {
        return 0.0;
    }
    (vector::dot(q, d) / (q_norm * d_norm)).as_f64()
}

/// Exact cosine index over document vectors with precomputed norms.
#[derive(Debug, Clone)]
pub struct DocumentIndex<T> {
    ids: Vec<String>,
    vectors: Vec<Vec<T>>,
    norms: Vec<T>,
    dim: usize,
}

impl<T: Scalar> DocumentIndex<T> {
    pub fn new(docs: Vec<TextRepresentation<T>>) -> Result<Self> {
        let dim = docs.first().map_or(0, |d| d.dim());
        let mut ids = Vec::with_capacity(docs.len());
        let mut vectors = Vec::with_capacity(docs.len());
        let mut norms = Vec::with_capacity(docs.len());
        for d in docs {
            if d.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.dim(),
                });
            }
            norms.push(vector::norm(&d.vector));
            ids.push(d.id);
            vectors.push(d.vector);
        }
        Ok(DocumentIndex {
            ids,
            vectors,
            norms,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids of documents whose vector is zero.
    pub fn zero_documents(&self) -> Vec<&str> {
        self.ids
            .iter()
            .zip(&self.norms)
            .filter(|(_, n)| n.is_zero())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn rank(&self, query: &TextRepresentation<T>) -> Result<Ranking> {
        if !self.is_empty() && query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let qn = vector::norm(&query.vector);
        let scores = self
            .ids
            .iter()
            .zip(&self.vectors)
            .zip(&self.norms)
            .map(|((id, v), &n)| (id.clone(), cosine_with_norms(&query.vector, qn, v, n)));
        Ranking::from_scores(query.id.clone(), scores)
    }
}

/// Ranks `docs` by cosine similarity to `query`.
pub fn rank<T: Scalar>(
    query: &TextRepresentation<T>,
    docs: &[TextRepresentation<T>],
) -> Result<Ranking> {
    DocumentIndex::new(docs.to_vec())?.rank(query)
}

/// Mean of the `k` largest values (all of them when `k` exceeds the count).
fn top_k_mean(mut scores: Vec<f64>, k: usize) -> f64 {
    let k = k.min(scores.len());
    let desc = |a: &f64, b: &f64| b.partial_cmp(a).unwrap_or(Ordering::Equal);
    if k < scores.len() {
        scores.select_nth_unstable_by(k - 1, desc);
        scores.truncate(k);
    }
    scores.sort_by(desc);
    scores.iter().sum::<f64>() / k as f64
}

/// Mean of the `k` highest part cosines; `k = 1` is max-pooling.
pub fn localized_score<T: Scalar>(
    query: &TextRepresentation<T>,
    parts: &[TextRepresentation<T>],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if parts.is_empty() {
        return Err(Error::Empty("document has no parts"));
    }
    let mut scores = Vec::with_capacity(parts.len());
    for p in parts {
        if p.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                expected: query.dim(),
                got: p.dim(),
            });
        }
        scores.push(similarity(&query.vector, &p.vector));
    }
    Ok(top_k_mean(scores, k))
}

/// One encoded document part.
#[derive(Debug, Clone, PartialEq)]
pub struct Part<T> {
    /// 1-based position within the document.
    pub position: usize,
    pub vector: Vec<T>,
}

/// Part vectors grouped by document, in collection order.
#[derive(Debug, Clone)]
pub struct PartsIndex<T> {
    pub granularity: Granularity,
    docs: Vec<(String, Vec<Part<T>>)>,
}

impl<T: Scalar> PartsIndex<T> {
    pub fn new(granularity: Granularity, docs: Vec<(String, Vec<Part<T>>)>) -> Self {
        PartsIndex { granularity, docs }
    }

    /// Encodes the parts of every document as IDF-weighted sums of static
    /// term vectors.
    pub fn from_static(
        documents: &[Document],
        store: &EmbeddingStore<T>,
        stats: &CollectionStats,
        granularity: Granularity,
        window: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut docs = Vec::with_capacity(documents.len());
        for d in documents {
            let parts = corpus::parts(d, granularity, window, stride)?
                .into_iter()
                .map(|seg| Part {
                    position: seg.position,
                    vector: embed_document(&d.id, &d.tokens[seg.span], store, stats).vector,
                })
                .collect();
            docs.push((d.id.clone(), parts));
        }
        Ok(PartsIndex { granularity, docs })
    }

    pub fn documents(&self) -> &[(String, Vec<Part<T>>)] {
        &self.docs
    }

    pub fn total_parts(&self) -> usize {
        self.docs.iter().map(|(_, p)| p.len()).sum()
    }

    /// Applies `f` to every part vector.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Result<Vec<T>>,
    {
        let mut docs = Vec::with_capacity(self.docs.len());
        for (id, parts) in &self.docs {
            let mapped = parts
                .iter()
                .map(|p| {
                    Ok(Part {
                        position: p.position,
                        vector: f(&p.vector)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            docs.push((id.clone(), mapped));
        }
        Ok(PartsIndex {
            granularity: self.granularity,
            docs,
        })
    }
}

/// Ranking produced by localized matching, plus the documents that had no
/// parts at all (scored [`ZERO_VECTOR_SCORE`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedRanking {
    pub ranking: Ranking,
    pub partless: Vec<String>,
}

/// Scores each document by the mean of its `k` best part cosines.
pub fn rank_localized<T: Scalar>(
    query: &TextRepresentation<T>,
    index: &PartsIndex<T>,
    k: usize,
) -> Result<LocalizedRanking> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let qn = vector::norm(&query.vector);
    let mut partless = Vec::new();
    let mut scores = Vec::with_capacity(index.docs.len());
    for (id, parts) in &index.docs {
        if parts.is_empty() {
            partless.push(id.clone());
            scores.push((id.clone(), ZERO_VECTOR_SCORE));
            continue;
        }
        let mut part_scores = Vec::with_capacity(parts.len());
        for p in parts {
            if p.vector.len() != query.dim() {
                return Err(Error::DimensionMismatch {
                    expected: query.dim(),
                    got: p.vector.len(),
                });
            }
            part_scores.push(cosine_with_norms(
                &query.vector,
                qn,
                &p.vector,
                vector::norm(&p.vector),
            ));
        }
        scores.push((id.clone(), top_k_mean(part_scores, k)));
    }
    Ok(LocalizedRanking {
        ranking: Ranking::from_scores(query.id.clone(), scores)?,
        partless,
    })
}

/// A part hit for position analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct PartHit {
    pub doc_id: String,
    pub position: usize,
    pub score: f64,
}

/// The `n` best-scoring parts over the whole collection, ties broken by
/// document id then position.
pub fn top_parts<T: Scalar>(
    query: &TextRepresentation<T>,
    index: &PartsIndex<T>,
    n: usize,
) -> Vec<PartHit> {
    let mut hits: Vec<PartHit> = index
        .docs
        .iter()
        .flat_map(|(id, parts)| {
            parts.iter().map(move |p| PartHit {
                doc_id: id.clone(),
                position: p.position,
                score: similarity(&query.vector, &p.vector),
            })
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then_with(|| a.position.cmp(&b.position))
    });
    hits.truncate(n);
    hits
}

/// Re-orders the first `top_n` entries of `base` by external scores.
///
/// Inside the window, externally scored documents come first (by external
/// score), then unscored ones in base order. Entries past the window keep
/// their base order and scores. Each tier is shifted up by a constant when
/// needed so that scores stay non-increasing down the list.
pub fn rerank_merge(base: &Ranking, external: &HashMap<String, f64>, top_n: usize) -> Ranking {
    let window = top_n.min(base.len());
    let (head, tail) = base.entries.split_at(window);
    let mut scored: Vec<RankedDoc> = Vec::new();
    let mut unscored: Vec<RankedDoc> = Vec::new();
    for e in head {
        match external.get(&e.doc_id) {
            Some(&s) => scored.push(RankedDoc {
                doc_id: e.doc_id.clone(),
                score: s,
            }),
            None => unscored.push(e.clone()),
        }
    }
    scored.sort_by(by_score_then_id);

    let lift = |tier: &mut [RankedDoc], floor: Option<f64>| {
        let (Some(floor), Some(last)) = (floor, tier.last()) else {
            return;
        };
        if last.score <= floor {
            let shift = floor - last.score + 1.0;
            for e in tier.iter_mut() {
                e.score += shift;
            }
        }
    };
    let tail_top = tail.first().map(|e| e.score);
    lift(&mut unscored, tail_top);
    let unscored_top = unscored.first().map(|e| e.score).or(tail_top);
    lift(&mut scored, unscored_top);

    let mut entries = scored;
    entries.extend(unscored);
    entries.extend(tail.iter().cloned());
    Ranking {
        query_id: base.query_id.clone(),
        entries,
    }
}

/// Dirichlet-smoothed query log-likelihood of `doc`. Query terms that never
/// occur in the collection are skipped.
pub fn qlm_dirichlet<S: AsRef<str>>(
    query_terms: &[S],
    doc: &Document,
    counts: &TermCounts,
    mu: f64,
) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 || mu.is_infinite() {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in &doc.tokens {
        *tf.entry(t.as_str()).or_default() += 1;
    }
    let len = doc.len() as f64;
    let mut score = 0.0;
    for t in query_terms {
        let t = t.as_ref();
        let p = counts.probability(t);
        if p == 0.0 {
            continue;
        }
        let f = tf.get(t).copied().unwrap_or(0) as f64;
        score += ((f + mu * p) / (len + mu)).ln();
    }
    Ok(score)
}

pub fn rank_qlm<S: AsRef<str>>(
    query_id: &str,
    query_terms: &[S],
    docs: &[Document],
    counts: &TermCounts,
    mu: f64,
) -> Result<Ranking> {
    let mut scores = Vec::with_capacity(docs.len());
    for d in docs {
        scores.push((d.id.clone(), qlm_dirichlet(query_terms, d, counts, mu)?));
    }
    Ranking::from_scores(query_id, scores)
}

// ---- run files --------------------------------------------------------------

/// Writes `<query_id> Q0 <doc_id> <rank> <score> <tag>` lines.
pub fn write_run<W: Write>(mut w: W, rankings: &[Ranking], tag: &str) -> Result<()> {
    let io = |e| Error::io("<run file>", e);
    for r in rankings {
        for (i, e) in r.entries.iter().enumerate() {
            writeln!(w, "{} Q0 {} {} {:.6} {}", r.query_id, e.doc_id, i + 1, e.score, tag)
                .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Parses a six-column run file. Queries keep their first-appearance order;
/// entries are re-sorted by score.
pub fn parse_run<R: BufRead>(reader: R) -> Result<Vec<Ranking>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_query: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                n + 1,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        fields[3]
            .parse::<usize>()
            .map_err(|_| Error::parse(n + 1, format!("invalid rank {:?}", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("invalid score {:?}", fields[4])))?;
        let q = fields[0].to_owned();
        if !by_query.contains_key(&q) {
            order.push(q.clone());
        }
        by_query
            .entry(q)
            .or_default()
            .push((fields[2].to_owned(), score));
    }
    order
        .into_iter()
        .map(|q| {
            let scores = by_query.remove(&q).unwrap_or_default();
            Ranking::from_scores(q, scores)
        })
        .collect()
}

pub fn read_run(path: &std::path::Path) -> Result<Vec<Ranking>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_run(std::io::BufReader::new(file))
}
