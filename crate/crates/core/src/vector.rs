//! Slice-level vector arithmetic shared by every module.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn is_zero<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_zero())
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Cosine similarity. Returns `None` when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let na = norm(a);
    let nb = norm(b);
    if na.is_zero() || nb.is_zero() {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

/// `acc += alpha * x`
#[inline]
pub fn add_scaled<T: Scalar>(acc: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a = *a + alpha * v;
    }
}

pub fn scale<T: Scalar>(a: &mut [T], alpha: T) {
    for v in a {
        *v = *v * alpha;
    }
}

/// Component-wise mean of equally sized vectors.
pub fn mean<'a, T, I>(vectors: I, dim: usize) -> Result<Vec<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [T]>,
{
    let mut acc = vec![T::zero(); dim];
    let mut n = 0usize;
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        add_scaled(&mut acc, T::one(), v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no vectors to average"));
    }
    scale(&mut acc, T::one() / T::of_usize(n));
    Ok(acc)
}

pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_of_zero_is_none() {
        assert_eq!(cosine(&[0.0f64, 0.0], &[1.0, 0.0]), None);
        assert!((cosine(&[1.0f64, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_checks_dimension() {
        let a = [1.0f64, 2.0];
        let b = [1.0f64];
        assert!(mean([&a[..], &b[..]], 2).is_err());
        assert_eq!(mean([&a[..], &a[..]], 2).unwrap(), vec![1.0, 2.0]);
    }
}
