#![allow(dead_code)]

use clir_core::embeddings::EmbeddingStore;
use clir_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, sigma: f64) -> Matrix<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect::<Vec<f64>>();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Haar-ish random orthogonal matrix by modified Gram-Schmidt on a Gaussian
/// matrix; independent of the library's SVD.
pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Matrix<f64> {
    let g = gaussian(rng, d, d, 1.0);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = g.row(i).to_vec();
        for b in &q {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        q.push(v);
    }
    Matrix::from_vec(d, d, q.concat()).unwrap()
}

pub fn rotation2(theta: f64) -> Matrix<f64> {
    let (s, c) = theta.sin_cos();
    Matrix::from_vec(2, 2, vec![c, -s, s, c]).unwrap()
}

pub fn reflection2(theta: f64) -> Matrix<f64> {
    let (s, c) = theta.sin_cos();
    Matrix::from_vec(2, 2, vec![c, s, s, -c]).unwrap()
}

pub fn store_from_matrix(prefix: &str, m: &Matrix<f64>) -> EmbeddingStore<f64> {
    EmbeddingStore::from_entries(
        m.cols(),
        (0..m.rows()).map(|i| (format!("{prefix}{i}"), m.row(i).to_vec())),
    )
    .unwrap()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Average precision straight from the definition: for every relevant
/// document found at rank r, precision of the top r.
pub fn brute_force_ap(ranked: &[String], relevant: &[String]) -> f64 {
    let mut sum = 0.0;
    for (r, doc) in ranked.iter().enumerate() {
        if relevant.contains(doc) {
            let top = &ranked[..=r];
            let rel_in_top = top.iter().filter(|d| relevant.contains(d)).count();
            sum += rel_in_top as f64 / (r + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// Localized score by scoring every part and sorting all of them.
pub fn brute_force_localized(query: &[f64], parts: &[Vec<f64>], k: usize) -> f64 {
    if parts.is_empty() {
        return -1.0;
    }
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scores: Vec<f64> = parts
        .iter()
        .map(|p| {
            let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if pn == 0.0 {
                -1.0
            } else if qn == 0.0 {
                0.0
            } else {
                query.iter().zip(p).fold(0.0, |acc, (x, y)| acc + x * y) / (qn * pn)
            }
        })
        .collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = k.min(scores.len());
    scores[..k].iter().sum::<f64>() / k as f64
}

/// Sliding windows by marking coverage token by token.
pub fn brute_force_windows(len: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut covered = vec![false; len];
    let mut start = 0;
    while covered.iter().any(|c| !c) {
        let end = (start + window).min(len);
        for c in &mut covered[start..end] {
            *c = true;
        }
        out.push((start, end));
        start += stride;
    }
    out
}

/// Synthetic bilingual setting used by the end-to-end checks.
pub struct SyntheticClir {
    pub src: EmbeddingStore<f64>,
    pub tgt: EmbeddingStore<f64>,
    pub rotation: Matrix<f64>,
    /// Document tokens (target language).
    pub docs: Vec<(String, Vec<String>)>,
    /// Query tokens (source language) with their relevant document.
    pub queries: Vec<(String, Vec<String>, String)>,
}

pub fn synthetic_clir(seed: u64, vocab: usize, dim: usize, noise: f64) -> SyntheticClir {
    let mut r = rng(seed);
    let xs = gaussian(&mut r, vocab, dim, 1.0 / (dim as f64).sqrt());
    let rotation = random_orthogonal(&mut r, dim);
    let mut xt = xs.matmul(&rotation).unwrap();
    let n = gaussian(&mut r, vocab, dim, noise);
    for (a, b) in xt.as_mut_slice().iter_mut().zip(n.as_slice()) {
        *a += b;
    }
    let src = store_from_matrix("s", &xs);
    let tgt = store_from_matrix("t", &xt);

    let mut docs = Vec::new();
    for d in 0..30 {
        let len = r.random_range(20..40);
        let toks: Vec<String> = (0..len).map(|_| format!("t{}", r.random_range(0..vocab))).collect();
        docs.push((format!("doc{d:02}"), toks));
    }
    let mut queries = Vec::new();
    for q in 0..10 {
        let target = 3 * q;
        let terms: Vec<usize> = (0..3).map(|_| r.random_range(0..vocab)).collect();
        // Plant the translations of the query terms, several times each.
        for &t in &terms {
            for _ in 0..4 {
                docs[target].1.push(format!("t{t}"));
            }
        }
        queries.push((
            format!("q{q:02}"),
            terms.iter().map(|t| format!("s{t}")).collect(),
            docs[target].0.clone(),
        ));
    }
    SyntheticClir {
        src,
        tgt,
        rotation,
        docs,
        queries,
    }
}
