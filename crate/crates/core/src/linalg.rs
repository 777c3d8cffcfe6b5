//! Dense linear algebra kernels: a symmetric-indefinite LDL^T
//! factorization with Bunch–Kaufman pivoting, a full-Q Householder QR,
//! and symmetric equilibration. Saddle-point matrices are indefinite, so
//! Cholesky is not applicable; the 1x1/2x2 pivoting handles the zero
//! diagonal block.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

/// Pivot record: `OneByOne(r)` swaps row/col r to the current position,
/// `TwoByTwo(r)` swaps r to position k+1 and consumes two columns.
#[derive(Debug, Clone, Copy)]
enum Pivot {
    OneByOne(usize),
    TwoByTwo(usize),
}

/// P^T A P = L D L^T with unit lower triangular L and block diagonal D
/// of 1x1 and 2x2 blocks.
pub struct LdltFactor {
    n: usize,
    /// packed L (strictly lower) and D (diagonal and first subdiagonal)
    lower: DMatrix<f64>,
    pivots: Vec<Pivot>,
    /// true at k when (k, k+1) form a 2x2 block
    block_start: Vec<bool>,
}

const BK_ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

impl LdltFactor {
    /// Factorizes a symmetric matrix. `pivot_tol` (relative to the largest
    /// entry) decides when a pivot counts as zero; the factorization then
    /// fails with the index reported.
    pub fn new(a: &DMatrix<f64>, pivot_tol: f64) -> Result<LdltFactor, CoreError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut m = a.clone();
        let scale = m.amax();
        let tiny = pivot_tol * scale.max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(n);
        let mut block_start = vec![false; n];
        let mut k = 0usize;
        while k < n {
            let absakk = m[(k, k)].abs();
            // largest off-diagonal magnitude in column k below the diagonal
            let (mut r, mut lambda) = (k, 0.0);
            for i in k + 1..n {
                let v = m[(i, k)].abs();
                if v > lambda {
                    lambda = v;
                    r = i;
                }
            }
            if absakk.max(lambda) <= tiny {
                return Err(CoreError::SingularSystem { kernel_dim: n - k });
            }
            let use_two;
            let mut pivot_row = k;
            if absakk >= BK_ALPHA * lambda {
                use_two = false;
            } else {
                // sigma: largest off-diagonal magnitude in column/row r
                let mut sigma = 0.0f64;
                for i in k..n {
                    if i == r {
                        continue;
                    }
                    let v = if i > r { m[(i, r)] } else { m[(r, i)] };
                    sigma = sigma.max(v.abs());
                }
                if absakk * sigma >= BK_ALPHA * lambda * lambda {
                    use_two = false;
                } else if m[(r, r)].abs() >= BK_ALPHA * sigma {
                    use_two = false;
                    pivot_row = r;
                } else {
                    use_two = true;
                    pivot_row = r;
                }
            }
            if !use_two {
                if pivot_row != k {
                    swap_symmetric(&mut m, k, k, pivot_row);
                }
                let d = m[(k, k)];
                if d.abs() <= tiny {
                    return Err(CoreError::SingularSystem { kernel_dim: n - k });
                }
                let col: Vec<f64> = (k + 1..n).map(|i| m[(i, k)]).collect();
                for i in k + 1..n {
                    let lik = col[i - k - 1] / d;
                    for j in k + 1..=i {
                        m[(i, j)] -= lik * col[j - k - 1];
                    }
                    m[(i, k)] = lik;
                }
                pivots.push(Pivot::OneByOne(pivot_row));
                k += 1;
            } else {
                if pivot_row != k + 1 {
                    swap_symmetric(&mut m, k, k + 1, pivot_row);
                }
                // 2x2 pivot D = [[a, b], [b, c]] at (k, k+1)
                let a11 = m[(k, k)];
                let b = m[(k + 1, k)];
                let c = m[(k + 1, k + 1)];
                let det = a11 * c - b * b;
                if det.abs() <= tiny * tiny {
                    return Err(CoreError::SingularSystem { kernel_dim: n - k });
                }
                let y1: Vec<f64> = (k + 2..n).map(|i| m[(i, k)]).collect();
                let y2: Vec<f64> = (k + 2..n).map(|i| m[(i, k + 1)]).collect();
                for i in k + 2..n {
                    // solve [l1 l2] D = [y1 y2]
                    let l1 = (c * y1[i - k - 2] - b * y2[i - k - 2]) / det;
                    let l2 = (a11 * y2[i - k - 2] - b * y1[i - k - 2]) / det;
                    for j in k + 2..=i {
                        m[(i, j)] -= l1 * y1[j - k - 2] + l2 * y2[j - k - 2];
                    }
                    m[(i, k)] = l1;
                    m[(i, k + 1)] = l2;
                }
                block_start[k] = true;
                pivots.push(Pivot::TwoByTwo(pivot_row));
                pivots.push(Pivot::TwoByTwo(pivot_row));
                k += 2;
            }
        }
        Ok(LdltFactor {
            n,
            lower: m,
            pivots,
            block_start,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        assert_eq!(b.len(), self.n);
        let m = &self.lower;
        // apply permutations and forward substitution interleaved, mirroring
        // the factorization order
        let mut k = 0usize;
        while k < self.n {
            if self.block_start[k] {
                if let Pivot::TwoByTwo(r) = self.pivots[k] {
                    if r != k + 1 {
                        b.swap_rows(k + 1, r);
                    }
                }
                for i in k + 2..self.n {
                    let t = m[(i, k)] * b[k] + m[(i, k + 1)] * b[k + 1];
                    b[i] -= t;
                }
                k += 2;
            } else {
                if let Pivot::OneByOne(r) = self.pivots[k] {
                    if r != k {
                        b.swap_rows(k, r);
                    }
                }
                for i in k + 1..self.n {
                    b[i] -= m[(i, k)] * b[k];
                }
                k += 1;
            }
        }
        // block diagonal solve
        let mut k = 0usize;
        while k < self.n {
            if self.block_start[k] {
                let a11 = m[(k, k)];
                let bb = m[(k + 1, k)];
                let c = m[(k + 1, k + 1)];
                let det = a11 * c - bb * bb;
                let (x1, x2) = (b[k], b[k + 1]);
                b[k] = (c * x1 - bb * x2) / det;
                b[k + 1] = (a11 * x2 - bb * x1) / det;
                k += 2;
            } else {
                b[k] /= m[(k, k)];
                k += 1;
            }
        }
        // backward substitution with L^T and inverse permutations
        let mut k = self.n;
        while k > 0 {
            let kk = k - 1;
            let start = if kk > 0 && self.block_start[kk - 1] {
                kk - 1
            } else {
                kk
            };
            if self.block_start[start] {
                for col in [start, start + 1] {
                    let mut acc = 0.0;
                    for i in start + 2..self.n {
                        acc += m[(i, col)] * b[i];
                    }
                    b[col] -= acc;
                }
                if let Pivot::TwoByTwo(r) = self.pivots[start] {
                    if r != start + 1 {
                        b.swap_rows(start + 1, r);
                    }
                }
                k = start;
            } else {
                let mut acc = 0.0;
                for i in start + 1..self.n {
                    acc += m[(i, start)] * b[i];
                }
                b[start] -= acc;
                if let Pivot::OneByOne(r) = self.pivots[start] {
                    if r != start {
                        b.swap_rows(start, r);
                    }
                }
                k = start;
            }
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }
}

/// Swaps rows/columns `a` and `b` of the lower-triangular representation
/// within the trailing submatrix starting at `k_start`. Columns left of
/// `k_start` hold finished elimination factors and stay put; the stored
/// factorization is then the nested product of permutations and
/// eliminations that the solve unwinds step by step.
fn swap_symmetric(m: &mut DMatrix<f64>, k_start: usize, a: usize, b: usize) {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let n = m.nrows();
    for j in k_start..lo {
        let t = m[(lo, j)];
        m[(lo, j)] = m[(hi, j)];
        m[(hi, j)] = t;
    }
    for i in lo + 1..hi {
        let t = m[(i, lo)];
        m[(i, lo)] = m[(hi, i)];
        m[(hi, i)] = t;
    }
    for i in hi + 1..n {
        let t = m[(i, lo)];
        m[(i, lo)] = m[(i, hi)];
        m[(i, hi)] = t;
    }
    let t = m[(lo, lo)];
    m[(lo, lo)] = m[(hi, hi)];
    m[(hi, hi)] = t;
}

/// Symmetric diagonal equilibration: returns d with d_i = 1/sqrt(max |row i|)
/// so that diag(d) A diag(d) has rows of comparable magnitude.
pub fn symmetric_scaling(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut d = DVector::from_element(n, 1.0);
    for i in 0..n {
        let mut rowmax = 0.0f64;
        for j in 0..n {
            rowmax = rowmax.max(a[(i, j)].abs());
        }
        if rowmax > 0.0 {
            d[i] = 1.0 / rowmax.sqrt();
        }
    }
    d
}

/// Householder QR with a fully accumulated square Q: A = Q R for A of size
/// m x n with m >= n; Q is m x m orthogonal and R is m x n upper trapezoidal.
pub fn full_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = a.nrows();
    let n = a.ncols();
    let mut r = a.clone();
    let mut q = DMatrix::identity(m, m);
    for k in 0..n.min(m.saturating_sub(1)) {
        // Householder vector for column k
        let mut norm = 0.0f64;
        for i in k..m {
            norm += r[(i, k)] * r[(i, k)];
        }
        norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm } else { norm };
        let mut v = DVector::zeros(m);
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v.dot(&v);
        if vnorm2 == 0.0 {
            continue;
        }
        // apply H = I - 2 v v^T / (v^T v) to R from the left
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i] * r[(i, j)];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        // accumulate into Q from the right: Q <- Q H
        for row in 0..m {
            let mut dot = 0.0;
            for i in k..m {
                dot += q[(row, i)] * v[i];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                q[(row, i)] -= f * v[i];
            }
        }
    }
    (q, r)
}

/// Orthonormal basis of the right null space of `b` (m x n, m <= n), plus
/// the smallest nonzero |R| diagonal used in the rank decision.
pub fn null_space_basis(b: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let m = b.nrows();
    let n = b.ncols();
    assert!(m <= n);
    let (q, r) = full_qr(&b.transpose());
    let mut min_diag = f64::INFINITY;
    for i in 0..m {
        min_diag = min_diag.min(r[(i, i)].abs());
    }
    let z = q.columns(m, n - m).into_owned();
    (z, min_diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    fn saddle_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        // [[S, C^T], [C, 0]] with S spd, C full row rank: indefinite with a
        // zero diagonal block, the structure the pivoting has to handle.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = &g * g.transpose() + DMatrix::identity(n, n);
        let c = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let total = n + m;
        let mut k = DMatrix::zeros(total, total);
        k.view_mut((0, 0), (n, n)).copy_from(&s);
        k.view_mut((n, 0), (m, n)).copy_from(&c);
        k.view_mut((0, n), (n, m)).copy_from(&c.transpose());
        k
    }

    #[test]
    fn factorizes_and_solves_random_symmetric() {
        for seed in 0..5 {
            let a = random_symmetric(40, seed);
            let f = LdltFactor::new(&a, 1e-14).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let b = DVector::from_fn(40, |_, _| rng.gen_range(-1.0..1.0));
            let x = f.solve(&b);
            let res = (&a * &x - &b).norm() / b.norm();
            assert!(res < 1e-11, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn factorizes_saddle_matrices_with_zero_block() {
        for seed in 0..5 {
            let k = saddle_matrix(30, 12, seed);
            let f = LdltFactor::new(&k, 1e-14).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 7);
            let b = DVector::from_fn(42, |_, _| rng.gen_range(-1.0..1.0));
            let x = f.solve(&b);
            let res = (&k * &x - &b).norm() / b.norm();
            assert!(res < 1e-10, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn reports_singularity() {
        let mut a = random_symmetric(10, 3);
        // make row/col 4 a duplicate of row/col 2
        for j in 0..10 {
            let v = a[(2, j)];
            a[(4, j)] = v;
            a[(j, 4)] = v;
        }
        a[(4, 4)] = a[(2, 2)];
        a[(4, 2)] = a[(2, 2)];
        a[(2, 4)] = a[(2, 2)];
        assert!(matches!(
            LdltFactor::new(&a, 1e-12),
            Err(CoreError::SingularSystem { .. })
        ));
    }

    #[test]
    fn full_qr_reconstructs_and_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(12, 5, |_, _| rng.gen_range(-1.0..1.0));
        let (q, r) = full_qr(&a);
        assert!((q.transpose() * &q - DMatrix::identity(12, 12)).norm() < 1e-12);
        assert!((&q * &r - &a).norm() < 1e-12);
        for i in 0..5 {
            for j in 0..i.min(5) {
                assert!(r[(i, j)].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let b = DMatrix::from_fn(4, 9, |_, _| rng.gen_range(-1.0..1.0));
        let (z, min_diag) = null_space_basis(&b);
        assert_eq!(z.ncols(), 5);
        assert!(min_diag > 1e-8);
        assert!((&b * &z).norm() < 1e-12);
        assert!((z.transpose() * &z - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn equilibration_tames_scale_spread() {
        let mut a = random_symmetric(20, 5);
        for j in 0..20 {
            a[(0, j)] *= 1e8;
            a[(j, 0)] = a[(0, j)];
        }
        let d = symmetric_scaling(&a);
        let scaled = DMatrix::from_fn(20, 20, |i, j| d[i] * a[(i, j)] * d[j]);
        let mut max_row: f64 = 0.0;
        let mut min_row = f64::INFINITY;
        for i in 0..20 {
            let m = scaled.row(i).amax();
            max_row = max_row.max(m);
            min_row = min_row.min(m);
        }
        assert!(max_row / min_row < 1e3);
    }
}
