//! Turning an experiment description into query and document vectors.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use clir_core::corpus::{self, Collection, CollectionStats, Granularity};
use clir_core::embeddings::{self, EmbeddingStore, PartEntry};
use clir_core::linalg::Matrix;
use clir_core::projection::{self, ProjectionMatrix};
use clir_core::retrieval::{self, DocumentIndex, Part, PartsIndex, Ranking, TextRepresentation};

use crate::cli::ExperimentArgs;

pub type Rep = TextRepresentation<f64>;

pub struct Query {
    pub id: String,
    pub tokens: Vec<String>,
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let records = corpus::read_tsv_records(path)
        .with_context(|| format!("cannot read queries from {}", path.display()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (id, text) in records {
        if !seen.insert(id.clone()) {
            bail!("duplicate query id {id:?} in {}", path.display());
        }
        out.push(Query {
            tokens: corpus::tokenize(&text),
            id,
        });
    }
    Ok(out)
}

pub fn read_collection(path: &Path) -> Result<Collection> {
    let c = Collection::read(path)
        .with_context(|| format!("cannot read documents from {}", path.display()))?;
    if c.is_empty() {
        bail!("no documents in {}", path.display());
    }
    Ok(c)
}

pub fn load_store(path: &Path, limit: Option<usize>) -> Result<EmbeddingStore<f64>> {
    EmbeddingStore::load(path, limit)
        .with_context(|| format!("cannot load embeddings from {}", path.display()))
}

fn load_term_store(
    path: &Path,
    fallback: Option<&Path>,
    limit: Option<usize>,
) -> Result<EmbeddingStore<f64>> {
    let store = load_store(path, limit)?;
    match fallback {
        Some(f) => Ok(store.with_fallback(&load_store(f, limit)?)?),
        None => Ok(store),
    }
}

pub fn load_matrix(path: &Path) -> Result<Matrix<f64>> {
    let m = load_store(path, None)?
        .to_matrix()
        .with_context(|| format!("{} is not a matrix container", path.display()))?;
    if m.rows() != m.cols() {
        bail!("{} holds a {}x{} matrix; expected a square one", path.display(), m.rows(), m.cols());
    }
    Ok(m)
}

pub fn load_projection(path: &Path) -> Result<ProjectionMatrix<f64>> {
    let w = ProjectionMatrix::from_matrix(load_matrix(path)?)?;
    let err = w.orthogonality_error();
    if err > 1e-3 {
        log::warn!("projection {} is not orthogonal (‖WᵀW−I‖ = {err:.2e})", path.display());
    }
    Ok(w)
}

type PartsMap = BTreeMap<String, BTreeMap<usize, PartEntry<f64>>>;

fn load_parts(path: &Path) -> Result<(usize, PartsMap)> {
    let store = load_store(path, None)?;
    let parts = embeddings::parse_parts(&store)
        .with_context(|| format!("cannot read parts from {}", path.display()))?;
    Ok((store.dim(), parts))
}

/// Document vectors, whole or split into parts.
#[derive(Clone)]
pub enum DocVectors {
    Whole(Vec<Rep>),
    Parts(PartsIndex<f64>),
}

impl DocVectors {
    pub fn adapted(&self, a: &Matrix<f64>) -> Result<Self> {
        Ok(match self {
            DocVectors::Whole(reps) => DocVectors::Whole(
                reps.iter().map(|r| r.adapted(a)).collect::<clir_core::Result<_>>()?,
            ),
            DocVectors::Parts(index) => DocVectors::Parts(index.try_map(|v| a.mul_vec(v))?),
        })
    }
}

pub struct Encoded {
    pub queries: Vec<Rep>,
    pub docs: DocVectors,
}

/// Encodes queries and documents as the experiment describes, including
/// projection and adapter.
pub fn encode(
    exp: &ExperimentArgs,
    queries: &[Query],
    collection: &Collection,
    stats: &CollectionStats,
) -> Result<Encoded> {
    let granularity: Granularity = exp.granularity.into();
    let projection = exp.projection.as_deref().map(load_projection).transpose()?;

    let mut query_reps: Vec<Rep> = if let Some(path) = &exp.query_parts {
        let (dim, parts) = load_parts(path)?;
        let mut reps = Vec::with_capacity(queries.len());
        for q in queries {
            let entry = parts.get(&q.id).and_then(|p| p.values().next());
            let v = match entry {
                // query terms are not IDF-weighted
                Some(e) => e.vector(dim, |_| 1.0)?,
                None => {
                    log::warn!("query {} has no vector in {}", q.id, path.display());
                    vec![0.0; dim]
                }
            };
            reps.push(Rep::new(q.id.clone(), v));
        }
        if let Some(w) = &projection {
            for r in &mut reps {
                r.vector = w.apply(&r.vector)?;
            }
        }
        reps
    } else {
        let path = exp.src_emb.as_deref().expect("validated");
        let mut store = load_term_store(path, exp.src_fallback.as_deref(), exp.limit)?;
        if let Some(w) = &projection {
            store = projection::project(&store, w)?;
        }
        queries
            .iter()
            .map(|q| retrieval::embed_query(&q.id, &q.tokens, &store))
            .collect()
    };

    let docs = collection.documents();
    let mut doc_vectors = if let Some(path) = &exp.doc_parts {
        let (dim, parts) = load_parts(path)?;
        let known: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        let stray = parts.keys().filter(|k| !known.contains(k.as_str())).count();
        if stray > 0 {
            log::warn!("{stray} documents in {} are not in the collection", path.display());
        }
        let mut indexed = Vec::with_capacity(docs.len());
        for d in docs {
            let mut vs = Vec::new();
            if let Some(ps) = parts.get(&d.id) {
                for (&position, e) in ps {
                    vs.push(Part {
                        position,
                        vector: e.vector(dim, |t| stats.idf(t))?,
                    });
                }
            }
            indexed.push((d.id.clone(), vs));
        }
        if granularity == Granularity::Document {
            let mut reps = Vec::with_capacity(indexed.len());
            for (id, mut parts) in indexed {
                let v = match parts.len() {
                    0 => vec![0.0; dim],
                    1 => parts.remove(0).vector,
                    n => bail!("document {id} has {n} parts but the granularity is document"),
                };
                reps.push(Rep::new(id, v));
            }
            DocVectors::Whole(reps)
        } else {
            DocVectors::Parts(PartsIndex::new(granularity, indexed))
        }
    } else {
        let path = exp.tgt_emb.as_deref().expect("validated");
        let store = load_term_store(path, exp.tgt_fallback.as_deref(), exp.limit)?;
        if granularity == Granularity::Document {
            DocVectors::Whole(
                docs.iter()
                    .map(|d| retrieval::embed_document(&d.id, &d.tokens, &store, stats))
                    .collect(),
            )
        } else {
            DocVectors::Parts(PartsIndex::from_static(
                docs,
                &store,
                stats,
                granularity,
                exp.window,
                exp.stride,
            )?)
        }
    };

    let qdim = query_reps.first().map_or(0, |q| q.dim());
    let ddim = match &doc_vectors {
        DocVectors::Whole(r) => r.first().map(|r| r.dim()),
        DocVectors::Parts(p) => p
            .documents()
            .iter()
            .flat_map(|(_, ps)| ps.first())
            .map(|p| p.vector.len())
            .next(),
    };
    if let Some(ddim) = ddim {
        if !query_reps.is_empty() && ddim != qdim {
            bail!("query vectors have dimension {qdim} but document vectors {ddim}");
        }
    }
    let zero_queries = query_reps.iter().filter(|q| q.is_zero()).count();
    if zero_queries > 0 {
        log::warn!("{zero_queries} queries have no in-vocabulary terms");
    }

    if let Some(path) = &exp.adapter {
        let a = load_matrix(path)?;
        query_reps = query_reps.iter().map(|q| q.adapted(&a)).collect::<clir_core::Result<_>>()?;
        doc_vectors = doc_vectors.adapted(&a)?;
    }
    Ok(Encoded {
        queries: query_reps,
        docs: doc_vectors,
    })
}

/// Ranks every document for a query, by cosine or by localized matching.
pub enum Ranker<'a> {
    Whole(DocumentIndex<f64>),
    Parts(&'a PartsIndex<f64>, usize),
}

impl<'a> Ranker<'a> {
    pub fn new(docs: &'a DocVectors, k: usize) -> Result<Self> {
        Ok(match docs {
            DocVectors::Whole(reps) => {
                let index = DocumentIndex::new(reps.clone())?;
                let zero = index.zero_documents().len();
                if zero > 0 {
                    log::warn!("{zero} documents have zero vectors and rank last");
                }
                Ranker::Whole(index)
            }
            DocVectors::Parts(p) => Ranker::Parts(p, k),
        })
    }

    pub fn rank(&self, query: &Rep, depth: usize) -> Result<Ranking> {
        let mut r = match self {
            Ranker::Whole(index) => index.rank(query)?,
            Ranker::Parts(index, k) => retrieval::rank_localized(query, index, *k)?.ranking,
        };
        r.truncate(depth);
        Ok(r)
    }
}
