//! Small dense matmul tuned for the im2col convolution path.
//!
//! The accumulation order over `k` is fixed per output element (k-blocks
//! ascending, indices ascending within a block). Structured pruning removes a
//! contiguous `k` range whose products are exact zeros, so with this order the
//! surviving partial sums are reproduced exactly; that is what makes
//! zero-filter removal leave eval outputs unchanged.

use crate::scalar::Scalar;

const KB: usize = 256;

/// `c (m x n) += a (m x k) . b (k x n)`, all row-major.
pub(crate) fn matmul_acc<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let mut i = 0;
    // Four output rows at a time: each B row is loaded once per quad.
    while i + 4 <= m {
        let quad = &mut c[i * n..(i + 4) * n];
        let (r0, rest) = quad.split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, r3) = rest.split_at_mut(n);
        for k0 in (0..k).step_by(KB) {
            let kw = KB.min(k - k0);
            let a0 = &a[i * k + k0..][..kw];
            let a1 = &a[(i + 1) * k + k0..][..kw];
            let a2 = &a[(i + 2) * k + k0..][..kw];
            let a3 = &a[(i + 3) * k + k0..][..kw];
            for dk in 0..kw {
                let brow = &b[(k0 + dk) * n..][..n];
                let (x0, x1, x2, x3) = (a0[dk], a1[dk], a2[dk], a3[dk]);
                for j in 0..n {
                    let bv = brow[j];
                    r0[j] += x0 * bv;
                    r1[j] += x1 * bv;
                    r2[j] += x2 * bv;
                    r3[j] += x3 * bv;
                }
            }
        }
        i += 4;
    }
    while i < m {
        let row = &mut c[i * n..][..n];
        for k0 in (0..k).step_by(KB) {
            let kw = KB.min(k - k0);
            let arow = &a[i * k + k0..][..kw];
            for dk in 0..kw {
                let x = arow[dk];
                let brow = &b[(k0 + dk) * n..][..n];
                for j in 0..n {
                    row[j] += x * brow[j];
                }
            }
        }
        i += 1;
    }
}

/// `dst (cols x rows) = transpose(src (rows x cols))`.
pub(crate) fn transpose<S: Scalar>(rows: usize, cols: usize, src: &[S], dst: &mut [S]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_matmul() {
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (4, 300, 9), (13, 17, 33), (8, 512, 2)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 + 11) % 19) as f64 - 9.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 53 + 3) % 23) as f64 - 11.0).collect();
            let mut c = vec![0.0; m * n];
            matmul_acc(m, k, n, &a, &b, &mut c);
            let want = naive(m, k, n, &a, &b);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn accumulates_into_existing_values() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [10.0f32];
        matmul_acc(1, 2, 1, &a, &b, &mut c);
        assert_eq!(c[0], 21.0);
    }

    #[test]
    fn dropping_zero_k_terms_is_exact() {
        // Removing k rows whose products are exactly zero must reproduce the
        // remaining partial sums bit for bit; this is the property structured
        // pruning relies on.
        let m = 5;
        let n = 13;
        let k = 600; // spans multiple k-blocks
        let zeroed: Vec<usize> = (0..k).filter(|i| i % 3 == 1).collect();
        let mut a: Vec<f32> = (0..m * k).map(|i| ((i * 31 + 7) % 17) as f32 * 0.37 - 4.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| ((i * 29 + 5) % 13) as f32 * 0.23 - 1.5).collect();
        for i in 0..m {
            for &z in &zeroed {
                a[i * k + z] = 0.0;
            }
        }
        let mut full = vec![0.0f32; m * n];
        matmul_acc(m, k, n, &a, &b, &mut full);

        let keep: Vec<usize> = (0..k).filter(|i| i % 3 != 1).collect();
        let ks = keep.len();
        let mut a2 = vec![0.0f32; m * ks];
        let mut b2 = vec![0.0f32; ks * n];
        for i in 0..m {
            for (dk, &kk) in keep.iter().enumerate() {
                a2[i * ks + dk] = a[i * k + kk];
            }
        }
        for (dk, &kk) in keep.iter().enumerate() {
            b2[dk * n..(dk + 1) * n].copy_from_slice(&b[kk * n..(kk + 1) * n]);
        }
        let mut reduced = vec![0.0f32; m * n];
        matmul_acc(m, ks, n, &a2, &b2, &mut reduced);
        assert_eq!(full, reduced);
    }

    #[test]
    fn transpose_round_trip() {
        let src: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let mut t = vec![0.0f32; 12];
        transpose(3, 4, &src, &mut t);
        let mut back = vec![0.0f32; 12];
        transpose(4, 3, &t, &mut back);
        assert_eq!(src, back);
    }
}
