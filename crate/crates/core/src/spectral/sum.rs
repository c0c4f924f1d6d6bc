//! Fixed-order pairwise reductions. Results depend only on the data, never
//! on scheduling, so every quadrature in the crate is bitwise reproducible.

const BASE: usize = 128;

/// Pairwise sum of `term(i)` for `i in 0..n`.
pub fn pairwise_sum<F: Fn(usize) -> f64>(n: usize, term: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo <= BASE {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    if n == 0 {
        0.0
    } else {
        rec(0, n, &term)
    }
}
