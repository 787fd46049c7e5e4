//! Contrastive fine-tuning of a linear adapter with the multiple negatives
//! ranking loss, cross-validation folds and the distillation objective.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::vector;

/// Default softmax temperature for cosine logits.
pub const DEFAULT_LAMBDA: f64 = 20.0;
pub const DEFAULT_BATCH_SIZE: usize = 16;

/// Square matrix `A` applied to both queries and documents: `v ↦ A·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterMatrix<T> {
    a: Matrix<T>,
}

impl<T: Scalar> AdapterMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        AdapterMatrix {
            a: Matrix::identity(dim),
        }
    }

    pub fn from_matrix(a: Matrix<T>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        if !a.is_finite() {
            return Err(Error::InvalidArgument("adapter has non-finite entries".into()));
        }
        Ok(AdapterMatrix { a })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        self.a.mul_vec(v)
    }
}

/// Aligned query / positive-document vectors with the softmax temperature.
///
/// When `groups` is set, instances sharing a group (the same query) are not
/// used as negatives for each other.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch<T> {
    pub queries: Vec<Vec<T>>,
    pub positives: Vec<Vec<T>>,
    pub lambda: T,
    pub groups: Option<Vec<String>>,
}

impl<T: Scalar> TrainingBatch<T> {
    pub fn new(queries: Vec<Vec<T>>, positives: Vec<Vec<T>>, lambda: T) -> Result<Self> {
        let batch = TrainingBatch {
            queries,
            positives,
            lambda,
            groups: None,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        self.groups = Some(groups);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.queries.len() != self.positives.len() {
            return Err(Error::LengthMismatch {
                left: self.queries.len(),
                right: self.positives.len(),
            });
        }
        if self.queries.len() < 2 {
            return Err(Error::NoNegatives);
        }
        if let Some(g) = &self.groups {
            if g.len() != self.queries.len() {
                return Err(Error::LengthMismatch {
                    left: self.queries.len(),
                    right: g.len(),
                });
            }
        }
        if self.lambda.is_nan() || self.lambda <= T::zero() {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let dim = self.queries[0].len();
        for v in self.queries.iter().chain(&self.positives) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    fn is_negative(&self, i: usize, j: usize) -> bool {
        i != j
            && self
                .groups
                .as_ref()
                .is_none_or(|g| g[i] != g[j])
    }
}

fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln()
}

/// `-log softmax` of the positive among the positive and the negatives,
/// with cosine similarities scaled by `lambda`.
pub fn mnrl_loss<T: Scalar>(q: &[T], positive: &[T], negatives: &[&[T]], lambda: T) -> Result<T> {
    if negatives.is_empty() {
        return Err(Error::NoNegatives);
    }
    let sim = |d: &[T]| -> Result<T> {
        if d.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: d.len(),
            });
        }
        vector::cosine(q, d).ok_or(Error::ZeroVector("MNRL input"))
    };
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(lambda * sim(positive)?);
    for n in negatives {
        logits.push(lambda * sim(n)?);
    }
    Ok(log_sum_exp(&logits) - logits[0])
}

/// Mean MNRL over the batch, every other positive in the batch serving as
/// a negative.
pub fn mnrl_batch_loss<T: Scalar>(batch: &TrainingBatch<T>, adapter: &AdapterMatrix<T>) -> Result<T> {
    Ok(mnrl_loss_and_gradient(batch, adapter, false)?.0)
}

/// Exact gradient of [`mnrl_batch_loss`] with respect to the adapter.
pub fn mnrl_gradient<T: Scalar>(
    batch: &TrainingBatch<T>,
    adapter: &AdapterMatrix<T>,
) -> Result<Matrix<T>> {
    Ok(mnrl_loss_and_gradient(batch, adapter, true)?.1)
}

/// Loss and gradient in one pass.
///
/// With `u_i = A·q_i`, `v_j = A·d_j` and `s_ij = cos(u_i, v_j)`, the loss of
/// instance `i` is `logsumexp_j(λ·s_ij) − λ·s_ii`, so
/// `∂L/∂s_ij = λ·(softmax_ij − [i = j]) / B`, and the cosine derivatives
/// are chained back through `A` as outer products with `q_i` and `d_j`.
pub fn mnrl_loss_and_gradient<T: Scalar>(
    batch: &TrainingBatch<T>,
    adapter: &AdapterMatrix<T>,
    want_gradient: bool,
) -> Result<(T, Matrix<T>)> {
    batch.validate()?;
    let dim = adapter.dim();
    let u: Vec<Vec<T>> = batch
        .queries
        .iter()
        .map(|q| adapter.apply(q))
        .collect::<Result<_>>()?;
    let v: Vec<Vec<T>> = batch
        .positives
        .iter()
        .map(|d| adapter.apply(d))
        .collect::<Result<_>>()?;
    let nu: Vec<T> = u.iter().map(|x| vector::norm(x)).collect();
    let nv: Vec<T> = v.iter().map(|x| vector::norm(x)).collect();
    if nu.iter().chain(&nv).any(|n| n.is_zero()) {
        return Err(Error::ZeroVector("adapted batch vector"));
    }

    let b = batch.len();
    let inv_b = T::one() / T::of_usize(b);
    let lambda = batch.lambda;
    let mut loss = T::zero();
    let mut grad_u = vec![vec![T::zero(); dim]; b];
    let mut grad_v = vec![vec![T::zero(); dim]; b];

    for i in 0..b {
        let candidates: Vec<usize> = (0..b)
            .filter(|&j| j == i || batch.is_negative(i, j))
            .collect();
        if candidates.len() == 1 {
            continue;
        }
        let sims: Vec<T> = candidates
            .iter()
            .map(|&j| vector::dot(&u[i], &v[j]) / (nu[i] * nv[j]))
            .collect();
        let logits: Vec<T> = sims.iter().map(|&s| lambda * s).collect();
        let lse = log_sum_exp(&logits);
        let own = candidates.iter().position(|&j| j == i).expect("own positive");
        loss = loss + (lse - logits[own]) * inv_b;
        if !want_gradient {
            continue;
        }
        for (c, &j) in candidates.iter().enumerate() {
            let p = (logits[c] - lse).exp();
            let target = if j == i { T::one() } else { T::zero() };
            let g = lambda * (p - target) * inv_b;
            if g.is_zero() {
                continue;
            }
            let s = sims[c];
            let inv = T::one() / (nu[i] * nv[j]);
            // ∂cos/∂u = v/(|u||v|) − s·u/|u|²
            vector::add_scaled(&mut grad_u[i], g * inv, &v[j]);
            vector::add_scaled(&mut grad_u[i], -g * s / (nu[i] * nu[i]), &u[i]);
            // ∂cos/∂v = u/(|u||v|) − s·v/|v|²
            vector::add_scaled(&mut grad_v[j], g * inv, &u[i]);
            vector::add_scaled(&mut grad_v[j], -g * s / (nv[j] * nv[j]), &v[j]);
        }
    }

    let mut grad = Matrix::zeros(dim, dim);
    if want_gradient {
        for k in 0..b {
            for r in 0..dim {
                let row = grad.row_mut(r);
                vector::add_scaled(row, grad_u[k][r], &batch.queries[k]);
                vector::add_scaled(row, grad_v[k][r], &batch.positives[k]);
            }
        }
    }
    Ok((loss, grad))
}

/// One relevant (query, document) training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub query_id: String,
    pub query: Vec<T>,
    pub positive: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: DEFAULT_BATCH_SIZE,
            lambda: DEFAULT_LAMBDA,
            learning_rate: 0.05,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAdapter<T> {
    pub adapter: AdapterMatrix<T>,
    /// Mean batch loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Plain mini-batch SGD from the identity adapter.
///
/// Each epoch shuffles the pairs with a generator seeded from `seed` and
/// the epoch index. A trailing batch of a single pair is folded into the
/// previous batch since it would have no negatives.
pub fn train_adapter<T: Scalar>(
    pairs: &[TrainingPair<T>],
    config: &TrainConfig,
) -> Result<TrainedAdapter<T>> {
    if pairs.len() < 2 {
        return Err(Error::NoNegatives);
    }
    if config.batch_size < 2 {
        return Err(Error::InvalidArgument("batch size must be at least 2".into()));
    }
    let dim = pairs[0].query.len();
    let mut adapter = AdapterMatrix::identity(dim);
    let lr = T::of(config.learning_rate);
    let lambda = T::of(config.lambda);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut bounds: Vec<(usize, usize)> = (0..order.len())
            .step_by(config.batch_size)
            .map(|s| (s, (s + config.batch_size).min(order.len())))
            .collect();
        if bounds.len() > 1 && bounds.last().is_some_and(|&(s, e)| e - s == 1) {
            let (_, end) = bounds.pop().unwrap();
            bounds.last_mut().unwrap().1 = end;
        }
        let chunks: Vec<&[usize]> = bounds.iter().map(|&(s, e)| &order[s..e]).collect();
        let mut total = 0.0;
        for chunk in &chunks {
            let batch = TrainingBatch {
                queries: chunk.iter().map(|&i| pairs[i].query.clone()).collect(),
                positives: chunk.iter().map(|&i| pairs[i].positive.clone()).collect(),
                lambda,
                groups: Some(chunk.iter().map(|&i| pairs[i].query_id.clone()).collect()),
            };
            let (loss, grad) = mnrl_loss_and_gradient(&batch, &adapter, true)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss.as_f64();
            for (a, g) in adapter.a.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                *a = *a - lr * *g;
            }
            if !adapter.a.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        epoch_losses.push(total / chunks.len() as f64);
    }
    Ok(TrainedAdapter {
        adapter,
        epoch_losses,
    })
}

/// Assignment of query ids to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Held-out queries of fold `f`, sorted.
    pub fn test_queries(&self, f: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &g)| g == f)
            .map(|(q, _)| q.as_str())
            .collect()
    }

    /// Training queries of fold `f`, sorted.
    pub fn train_queries(&self, f: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &g)| g != f)
            .map(|(q, _)| q.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles the ids with `seed` and deals them round-robin into `k` folds.
pub fn kfold_split<S: AsRef<str>>(query_ids: &[S], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if query_ids.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} queries cannot fill {k} folds",
            query_ids.len()
        )));
    }
    let mut ids: Vec<String> = query_ids.iter().map(|q| q.as_ref().to_owned()).collect();
    let unique: HashSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidArgument("duplicate query ids".into()));
    }
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = ids
        .into_iter()
        .enumerate()
        .map(|(i, q)| (q, i % k))
        .collect();
    Ok(FoldAssignment { k, fold_of })
}

/// Teacher-student objective: mean over the batch of
/// `‖M(s) − M̂(s)‖² + ‖M(s) − M̂(t)‖²`.
pub fn distillation_loss<T: Scalar>(
    teacher_source: &[Vec<T>],
    student_source: &[Vec<T>],
    student_target: &[Vec<T>],
) -> Result<T> {
    let n = teacher_source.len();
    for other in [student_source.len(), student_target.len()] {
        if other != n {
            return Err(Error::LengthMismatch { left: n, right: other });
        }
    }
    if n == 0 {
        return Err(Error::Empty("distillation batch"));
    }
    let mut total = T::zero();
    for ((m, s), t) in teacher_source.iter().zip(student_source).zip(student_target) {
        for other in [s, t] {
            if other.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.len(),
                    got: other.len(),
                });
            }
        }
        total = total + vector::squared_distance(m, s) + vector::squared_distance(m, t);
    }
    Ok(total / T::of_usize(n))
}
