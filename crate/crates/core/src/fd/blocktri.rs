//! Thomas elimination for tridiagonal systems whose entries are 2×2 blocks.

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<T> {
    pub a: [[T; 2]; 2],
}

impl<T: Scalar> Mat2<T> {
    pub fn new(a00: T, a01: T, a10: T, a11: T) -> Self {
        Self {
            a: [[a00, a01], [a10, a11]],
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    #[inline]
    fn mul(&self, o: &Self) -> Self {
        let a = &self.a;
        let b = &o.a;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    #[inline]
    fn mul_vec(&self, v: [T; 2]) -> [T; 2] {
        [
            self.a[0][0] * v[0] + self.a[0][1] * v[1],
            self.a[1][0] * v[0] + self.a[1][1] * v[1],
        ]
    }

    #[inline]
    fn sub(&self, o: &Self) -> Self {
        Self::new(
            self.a[0][0] - o.a[0][0],
            self.a[0][1] - o.a[0][1],
            self.a[1][0] - o.a[1][0],
            self.a[1][1] - o.a[1][1],
        )
    }

    #[inline]
    fn inverse(&self) -> Self {
        let a = &self.a;
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = T::one() / det;
        Self::new(a[1][1] * inv, -a[0][1] * inv, -a[1][0] * inv, a[0][0] * inv)
    }
}

/// Scratch space reused across the many column solves of one sweep.
#[derive(Debug, Default)]
pub struct BlockThomas<T> {
    c: Vec<Mat2<T>>,
    d: Vec<[T; 2]>,
}

impl<T: Scalar> BlockThomas<T> {
    pub fn with_len(n: usize) -> Self {
        Self {
            c: vec![Mat2::zero(); n],
            d: vec![[T::zero(); 2]; n],
        }
    }

    /// Solves `lower[k]·x[k-1] + diag[k]·x[k] + upper[k]·x[k+1] = rhs[k]`, overwriting `rhs`
    /// with `x`. `lower[0]` and `upper[n-1]` are ignored.
    ///
    /// No pivoting: the caller guarantees block diagonal dominance (M-matrix structure).
    pub fn solve(&mut self, lower: &[Mat2<T>], diag: &[Mat2<T>], upper: &[Mat2<T>], rhs: &mut [[T; 2]]) {
        let n = rhs.len();
        assert!(n >= 1 && lower.len() == n && diag.len() == n && upper.len() == n);
        if self.c.len() < n {
            self.c.resize(n, Mat2::zero());
            self.d.resize(n, [T::zero(); 2]);
        }
        let m = diag[0].inverse();
        self.c[0] = m.mul(&upper[0]);
        self.d[0] = m.mul_vec(rhs[0]);
        for k in 1..n {
            let m = diag[k].sub(&lower[k].mul(&self.c[k - 1])).inverse();
            self.c[k] = m.mul(&upper[k]);
            let ld = lower[k].mul_vec(self.d[k - 1]);
            self.d[k] = m.mul_vec([rhs[k][0] - ld[0], rhs[k][1] - ld[1]]);
        }
        rhs[n - 1] = self.d[n - 1];
        for k in (0..n - 1).rev() {
            let cx = self.c[k].mul_vec(rhs[k + 1]);
            rhs[k] = [self.d[k][0] - cx[0], self.d[k][1] - cx[1]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, scale: f64) -> Mat2<f64> {
        Mat2::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn matches_dense_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let lower: Vec<_> = (0..n).map(|_| random_mat(&mut rng, 1.0)).collect();
        let upper: Vec<_> = (0..n).map(|_| random_mat(&mut rng, 1.0)).collect();
        let diag: Vec<_> = (0..n)
            .map(|_| {
                let mut m = random_mat(&mut rng, 1.0);
                m.a[0][0] += 6.0;
                m.a[1][1] += 6.0;
                m
            })
            .collect();
        let b: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let mut x = b.clone();
        BlockThomas::with_len(n).solve(&lower, &diag, &upper, &mut x);
        for k in 0..n {
            let mut r = diag[k].mul_vec(x[k]);
            if k > 0 {
                let l = lower[k].mul_vec(x[k - 1]);
                r = [r[0] + l[0], r[1] + l[1]];
            }
            if k + 1 < n {
                let u = upper[k].mul_vec(x[k + 1]);
                r = [r[0] + u[0], r[1] + u[1]];
            }
            assert!((r[0] - b[k][0]).abs() < 1e-12 && (r[1] - b[k][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_block() {
        let d = [Mat2::new(2.0, 0.0, 0.0, 4.0)];
        let z = [Mat2::zero()];
        let mut x = [[2.0, 2.0]];
        BlockThomas::with_len(1).solve(&z, &d, &z, &mut x);
        assert_eq!(x[0], [1.0, 0.5]);
    }
}
