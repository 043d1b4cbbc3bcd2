use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::Matrix;
use crate::rng::uniform;
use crate::Scalar;

/// Latin hypercube of `n` points in `[0, 1)^d`: each column visits every
/// stratum `[i/n, (i+1)/n)` once, with a uniform offset inside the stratum.
pub fn lhs<T: Scalar, R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Matrix<T> {
    assert!(n >= 1 && d >= 1, "lhs needs n >= 1 and d >= 1");
    let mut out = Matrix::zeros(n, d);
    let nt = T::of_usize(n);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, &k) in perm.iter().enumerate() {
            let u: T = uniform(rng);
            out[(i, j)] = in_stratum((T::of_usize(k) + u) / nt, k, nt);
        }
    }
    out
}

/// Nudges `v` by ulps until `floor(v·n) = k` in working precision.
fn in_stratum<T: Scalar>(mut v: T, k: usize, nt: T) -> T {
    let kt = T::of_usize(k);
    let ulp = |x: T| (x.abs() * T::epsilon()).max(T::min_positive_value());
    while (v * nt).floor() > kt || v >= T::one() {
        v = v - ulp(v);
    }
    while (v * nt).floor() < kt {
        v = v + ulp(v);
    }
    v
}
