//! Orthogonal alignment of two embedding spaces from a seed dictionary,
//! with optional iterative bootstrapping through mutual nearest neighbours.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use log::warn;

use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;
use crate::vector;

/// Ordered word-translation pairs `(source, target)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    pub pairs: Vec<(String, String)>,
}

impl BilingualDictionary {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        BilingualDictionary { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses `<source>\t<target>` lines; `#` comments and blank lines are
    /// ignored.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (s, t) = trimmed
                .split_once('\t')
                .ok_or_else(|| Error::parse(n + 1, "expected <source>\\t<target>"))?;
            let (s, t) = (s.trim(), t.trim());
            if s.is_empty() || t.is_empty() {
                return Err(Error::parse(n + 1, "empty dictionary entry"));
            }
            pairs.push((s.to_owned(), t.to_owned()));
        }
        Ok(BilingualDictionary { pairs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(file))
    }

    /// Splits the dictionary into pairs covered by both stores and the pairs
    /// with at least one token missing.
    pub fn partition<T: Scalar>(
        &self,
        src: &EmbeddingStore<T>,
        tgt: &EmbeddingStore<T>,
    ) -> (BilingualDictionary, Vec<(String, String)>) {
        let (kept, missing) = self
            .pairs
            .iter()
            .cloned()
            .partition(|(s, t)| src.contains(s) && tgt.contains(t));
        (BilingualDictionary { pairs: kept }, missing)
    }

    /// Row-aligned `(X_S, X_T)` for the in-vocabulary pairs.
    pub fn matrices<T: Scalar>(
        &self,
        src: &EmbeddingStore<T>,
        tgt: &EmbeddingStore<T>,
    ) -> Result<(Matrix<T>, Matrix<T>)> {
        if src.dim() != tgt.dim() {
            return Err(Error::DimensionMismatch {
                expected: src.dim(),
                got: tgt.dim(),
            });
        }
        let (kept, missing) = self.partition(src, tgt);
        if !missing.is_empty() {
            warn!(
                "{} of {} dictionary pairs are out of vocabulary and were skipped",
                missing.len(),
                self.len()
            );
        }
        let xs = Matrix::from_rows(src.dim(), kept.pairs.iter().map(|(s, _)| src.get(s).unwrap()))?;
        let xt = Matrix::from_rows(tgt.dim(), kept.pairs.iter().map(|(_, t)| tgt.get(t).unwrap()))?;
        Ok((xs, xt))
    }
}

/// Orthogonal `d x d` map applied to row vectors: `v ↦ v · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    w: Matrix<T>,
}

impl<T: Scalar> ProjectionMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        ProjectionMatrix {
            w: Matrix::identity(dim),
        }
    }

    /// Wraps a square matrix without checking orthogonality.
    pub fn from_matrix(w: Matrix<T>) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::DimensionMismatch {
                expected: w.rows(),
                got: w.cols(),
            });
        }
        Ok(ProjectionMatrix { w })
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        self.w.left_mul(v)
    }

    pub fn orthogonality_error(&self) -> T {
        self.w.orthogonality_error()
    }
}

/// Orthogonal `W` minimising `‖X_S·W − X_T‖_F`: with `X_Sᵀ·X_T = U·Σ·Vᵀ`,
/// `W = U·Vᵀ`.
///
/// When the cross-covariance is rank deficient the minimiser is not unique;
/// a warning is logged and the null-space columns of `U` are completed
/// deterministically (see [`linalg::svd`]).
pub fn procrustes<T: Scalar>(xs: &Matrix<T>, xt: &Matrix<T>) -> Result<ProjectionMatrix<T>> {
    if xs.rows() != xt.rows() {
        return Err(Error::LengthMismatch {
            left: xs.rows(),
            right: xt.rows(),
        });
    }
    if xs.cols() != xt.cols() {
        return Err(Error::DimensionMismatch {
            expected: xs.cols(),
            got: xt.cols(),
        });
    }
    if xs.rows() == 0 {
        return Err(Error::NoTrainablePairs);
    }
    let cross = xs.t_matmul(xt)?;
    let svd = linalg::svd(&cross)?;
    if svd.rank < cross.cols() {
        warn!(
            "cross-covariance has rank {} < {}; orthogonal solution is not unique",
            svd.rank,
            cross.cols()
        );
    }
    let w = svd.u.matmul(&svd.v.transpose())?;
    Ok(ProjectionMatrix { w })
}

/// `‖X_S·W − X_T‖_F`.
pub fn residual<T: Scalar>(xs: &Matrix<T>, xt: &Matrix<T>, w: &ProjectionMatrix<T>) -> Result<T> {
    Ok(xs.matmul(&w.w)?.sub(xt)?.frobenius_norm())
}

/// Maps every vector of `store` through `W`.
pub fn project<T: Scalar>(
    store: &EmbeddingStore<T>,
    w: &ProjectionMatrix<T>,
) -> Result<EmbeddingStore<T>> {
    if store.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: store.dim(),
        });
    }
    store.try_map(w.dim(), |v| w.apply(v))
}

fn unit_rows<T: Scalar>(rows: impl Iterator<Item = Vec<T>>) -> Vec<Option<Vec<T>>> {
    rows.map(|mut v| {
        let n = vector::norm(&v);
        if n.is_zero() {
            None
        } else {
            vector::scale(&mut v, T::one() / n);
            Some(v)
        }
    })
    .collect()
}

/// Extends `seed` with every `(s, t)` where `t` is the cosine nearest
/// neighbour of `s·W` among the target vectors and `s·W` is the nearest
/// neighbour of `t` among the mapped source vectors.
///
/// Seed pairs come first in their original order, followed by new pairs in
/// source-vocabulary order. Ties resolve to the lower index.
pub fn mutual_nn_augment<T: Scalar>(
    src: &EmbeddingStore<T>,
    tgt: &EmbeddingStore<T>,
    w: &ProjectionMatrix<T>,
    seed: &BilingualDictionary,
) -> Result<BilingualDictionary> {
    let mapped = project(src, w)?;
    if tgt.dim() != mapped.dim() {
        return Err(Error::DimensionMismatch {
            expected: mapped.dim(),
            got: tgt.dim(),
        });
    }
    let src_unit = unit_rows((0..mapped.len()).map(|i| mapped.row(i).to_vec()));
    let tgt_unit = unit_rows((0..tgt.len()).map(|j| tgt.row(j).to_vec()));

    let mut best_t: Vec<Option<(usize, T)>> = vec![None; src_unit.len()];
    let mut best_s: Vec<Option<(usize, T)>> = vec![None; tgt_unit.len()];
    for (i, s) in src_unit.iter().enumerate() {
        let Some(s) = s else { continue };
        for (j, t) in tgt_unit.iter().enumerate() {
            let Some(t) = t else { continue };
            let sim = vector::dot(s, t);
            if best_t[i].is_none_or(|(_, b)| sim > b) {
                best_t[i] = Some((j, sim));
            }
            if best_s[j].is_none_or(|(_, b)| sim > b) {
                best_s[j] = Some((i, sim));
            }
        }
    }

    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut pairs = Vec::with_capacity(seed.len());
    for p in &seed.pairs {
        if seen.insert(p.clone()) {
            pairs.push(p.clone());
        }
    }
    for (i, bt) in best_t.iter().enumerate() {
        let Some((j, _)) = *bt else { continue };
        if best_s[j].map(|(si, _)| si) == Some(i) {
            let p = (src.vocab()[i].clone(), tgt.vocab()[j].clone());
            if seen.insert(p.clone()) {
                pairs.push(p);
            }
        }
    }
    Ok(BilingualDictionary { pairs })
}

/// Outcome of the bootstrap procedure.
#[derive(Debug, Clone)]
pub struct ProcBResult<T> {
    pub projection: ProjectionMatrix<T>,
    pub dictionary: BilingualDictionary,
    /// Augmentation rounds that changed the dictionary.
    pub rounds: usize,
}

/// Iterative Procrustes: solve on the current dictionary, extend it with
/// mutual nearest neighbours, re-solve; at most `iterations` augmentation
/// rounds, stopping early once the dictionary no longer grows.
pub fn proc_b<T: Scalar>(
    src: &EmbeddingStore<T>,
    tgt: &EmbeddingStore<T>,
    seed: &BilingualDictionary,
    iterations: usize,
) -> Result<ProcBResult<T>> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    let (mut dict, missing) = seed.partition(src, tgt);
    if !missing.is_empty() {
        warn!("{} seed pairs are out of vocabulary", missing.len());
    }
    if dict.is_empty() {
        return Err(Error::NoTrainablePairs);
    }
    let (xs, xt) = dict.matrices(src, tgt)?;
    let mut w = procrustes(&xs, &xt)?;
    let mut rounds = 0;
    for _ in 0..iterations {
        let augmented = mutual_nn_augment(src, tgt, &w, &dict)?;
        if augmented.len() == dict.len() {
            break;
        }
        dict = augmented;
        rounds += 1;
        let (xs, xt) = dict.matrices(src, tgt)?;
        w = procrustes(&xs, &xt)?;
    }
    Ok(ProcBResult {
        projection: w,
        dictionary: dict,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(prefix: &str, rows: &[&[f64]]) -> EmbeddingStore<f64> {
        EmbeddingStore::from_entries(
            rows[0].len(),
            rows.iter()
                .enumerate()
                .map(|(i, r)| (format!("{prefix}{i}"), r.to_vec())),
        )
        .unwrap()
    }

    fn rot90() -> Matrix<f64> {
        Matrix::from_vec(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn identity_case() {
        let x = Matrix::<f64>::identity(3);
        let w = procrustes(&x, &x).unwrap();
        assert!(w.matrix().sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn planted_rotation_recovered() {
        let xs = Matrix::from_vec(3, 2, vec![1.0, 0.2, -0.5, 2.0, 0.7, -1.3]).unwrap();
        let r = rot90();
        let xt = xs.matmul(&r).unwrap();
        let w = procrustes(&xs, &xt).unwrap();
        assert!(w.matrix().sub(&r).unwrap().max_abs() < 1e-6);
        assert!(residual(&xs, &xt, &w).unwrap() < 1e-9);
        assert!(w.orthogonality_error() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let a = Matrix::<f64>::zeros(3, 2);
        let b = Matrix::<f64>::zeros(3, 3);
        assert!(procrustes(&a, &b).is_err());
        assert!(procrustes(&a, &Matrix::zeros(2, 2)).is_err());
        assert!(matches!(
            procrustes(&Matrix::<f64>::zeros(0, 2), &Matrix::zeros(0, 2)),
            Err(Error::NoTrainablePairs)
        ));
    }

    #[test]
    fn rank_deficient_solution_is_orthogonal() {
        let xs = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let xt = Matrix::from_vec(1, 3, vec![3.0, 2.0, 1.0]).unwrap();
        let w = procrustes(&xs, &xt).unwrap();
        assert!(w.orthogonality_error() < 1e-10);
        assert!(residual(&xs, &xt, &w).unwrap() < 1e-10);
        // deterministic
        assert_eq!(w, procrustes(&xs, &xt).unwrap());
    }

    #[test]
    fn project_examples() {
        let s = store("a", &[&[1.0, 0.0], &[0.3, 0.4]]);
        assert_eq!(project(&s, &ProjectionMatrix::identity(2)).unwrap(), s);

        let w = ProjectionMatrix::from_matrix(rot90()).unwrap();
        let p = project(&store("a", &[&[1.0, 0.0]]), &w).unwrap();
        assert_eq!(p.get("a0"), Some(&[0.0, -1.0][..]));

        let one = store("a", &[&[1.0, 0.0, 0.0]]);
        assert!(project(&one, &w).is_err());
    }

    #[test]
    fn rotation_preserves_cosine() {
        let s = store("a", &[&[1.0, 2.0], &[-0.5, 0.3]]);
        let w = ProjectionMatrix::from_matrix(rot90()).unwrap();
        let p = project(&s, &w).unwrap();
        let before = vector::cosine(s.row(0), s.row(1)).unwrap();
        let after = vector::cosine(p.row(0), p.row(1)).unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn mutual_nn_identity_pairs() {
        let rows: &[&[f64]] = &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        let src = store("s", rows);
        let tgt = store("t", rows);
        let d = mutual_nn_augment(&src, &tgt, &ProjectionMatrix::identity(3), &Default::default())
            .unwrap();
        assert_eq!(
            d.pairs,
            vec![("s0".into(), "t0".into()), ("s1".into(), "t1".into()), ("s2".into(), "t2".into())]
        );

        let seed = BilingualDictionary::new(vec![("s1".into(), "t1".into())]);
        let d = mutual_nn_augment(&src, &tgt, &ProjectionMatrix::identity(3), &seed).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.pairs[0], ("s1".into(), "t1".into()));
    }

    #[test]
    fn asymmetric_neighbours_excluded() {
        // s0 -> t0, but t0's nearest source is s1; s1 -> t0 as well.
        // Brute-force table of cosines (rows s, columns t):
        //   s0: t0 0.8, t1 -0.6
        //   s1: t0 1.0, t1  0.0
        let src = store("s", &[&[0.8, -0.6], &[1.0, 0.0]]);
        let tgt = store("t", &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = mutual_nn_augment(&src, &tgt, &ProjectionMatrix::identity(2), &Default::default())
            .unwrap();
        assert_eq!(d.pairs, vec![("s1".into(), "t0".into())]);
    }

    #[test]
    fn proc_b_errors_and_degenerate_loop() {
        let src = store("s", &[&[1.0, 0.0], &[0.0, 1.0]]);
        let tgt = store("t", &[&[0.0, 1.0], &[-1.0, 0.0]]);
        let oov = BilingualDictionary::new(vec![("zz".into(), "t0".into())]);
        assert!(matches!(proc_b(&src, &tgt, &oov, 2), Err(Error::NoTrainablePairs)));

        let full = BilingualDictionary::new(vec![
            ("s0".into(), "t0".into()),
            ("s1".into(), "t1".into()),
        ]);
        let (xs, xt) = full.matrices(&src, &tgt).unwrap();
        let plain = procrustes(&xs, &xt).unwrap();
        let boot = proc_b(&src, &tgt, &full, 1).unwrap();
        assert_eq!(boot.rounds, 0);
        assert_eq!(boot.projection, plain);
    }

    #[test]
    fn dictionary_parsing() {
        let d = BilingualDictionary::parse("# header\nhaus\thouse\n\nkatze\tcat\n".as_bytes())
            .unwrap();
        assert_eq!(d.len(), 2);
        let err = BilingualDictionary::parse("a b\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }
}
